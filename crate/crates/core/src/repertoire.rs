//! MAP-Elites archive: one elite agent per tessellation cell.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::blob;
use crate::env::EnvName;
use crate::error::{Error, Result};
use crate::rl::{Agent, AgentLayout, HyperparamSchema};
use crate::tessellation::{Bounds, CentroidSet};

#[derive(Debug, Clone, PartialEq)]
pub struct EliteRecord {
    pub agent: Agent,
    pub fitness: f64,
    pub descriptor: Vec<f64>,
    /// Budget consumed when the record entered the archive.
    pub steps_at_insertion: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertionOutcome {
    InsertedEmpty,
    ReplacedIncumbent,
    Rejected,
}

impl InsertionOutcome {
    pub fn accepted(self) -> bool {
        self != InsertionOutcome::Rejected
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QdMetrics {
    /// `None` while the archive is empty.
    pub max_fitness: Option<f64>,
    pub coverage: f64,
    pub qd_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Repertoire {
    centroids: Arc<CentroidSet>,
    cells: Vec<Option<EliteRecord>>,
    /// Occupied cell indices, ascending.
    occupied: Vec<usize>,
    fitness_offset: f64,
}

impl Repertoire {
    pub fn new(centroids: Arc<CentroidSet>, fitness_offset: f64) -> Result<Self> {
        if !(fitness_offset.is_finite() && fitness_offset >= 0.0) {
            return Err(Error::config(
                "fitness_offset",
                "must be finite and non-negative",
            ));
        }
        Ok(Repertoire {
            cells: vec![None; centroids.len()],
            centroids,
            occupied: Vec::new(),
            fitness_offset,
        })
    }

    pub fn centroids(&self) -> &CentroidSet {
        &self.centroids
    }

    pub fn fitness_offset(&self) -> f64 {
        self.fitness_offset
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn get(&self, cell: usize) -> Option<&EliteRecord> {
        self.cells.get(cell).and_then(Option::as_ref)
    }

    /// Occupied cells in ascending index order.
    pub fn records(&self) -> impl Iterator<Item = (usize, &EliteRecord)> {
        self.occupied
            .iter()
            .map(|&i| (i, self.cells[i].as_ref().expect("occupied cell")))
    }

    /// Stores `candidate` if its cell is empty or it strictly beats the incumbent.
    /// Non-finite fitness is rejected.
    pub fn try_insert(&mut self, candidate: EliteRecord) -> Result<InsertionOutcome> {
        let cell = self.centroids.cell_index(&candidate.descriptor)?;
        if !candidate.fitness.is_finite() {
            log::warn!(
                "dropping candidate with non-finite fitness {}",
                candidate.fitness
            );
            return Ok(InsertionOutcome::Rejected);
        }
        let outcome = match &self.cells[cell] {
            None => {
                let pos = self.occupied.partition_point(|&i| i < cell);
                self.occupied.insert(pos, cell);
                InsertionOutcome::InsertedEmpty
            }
            Some(incumbent) if candidate.fitness > incumbent.fitness => {
                InsertionOutcome::ReplacedIncumbent
            }
            Some(_) => return Ok(InsertionOutcome::Rejected),
        };
        self.cells[cell] = Some(candidate);
        Ok(outcome)
    }

    /// `count` deep copies drawn uniformly with replacement over occupied cells.
    pub fn sample<R: rand::Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<EliteRecord>> {
        if self.is_empty() {
            return Err(Error::EmptyRepertoire);
        }
        Ok((0..count)
            .map(|_| {
                let cell = self.occupied[rng.random_range(0..self.occupied.len())];
                self.cells[cell].clone().expect("occupied cell")
            })
            .collect())
    }

    pub fn metrics(&self) -> QdMetrics {
        let mut max_fitness: Option<f64> = None;
        let mut qd_score = 0.0;
        for (_, r) in self.records() {
            max_fitness = Some(max_fitness.map_or(r.fitness, |m| m.max(r.fitness)));
            qd_score += r.fitness + self.fitness_offset;
        }
        QdMetrics {
            max_fitness,
            coverage: self.len() as f64 / self.num_cells() as f64,
            qd_score,
        }
    }

    pub fn snapshot(&self, meta: &SnapshotMeta) -> Snapshot {
        Snapshot {
            env: meta.env,
            layout: meta.layout.clone(),
            schema: meta.schema.clone(),
            bounds: self
                .centroids
                .bounds()
                .0
                .iter()
                .map(|&(lo, hi)| [lo, hi])
                .collect(),
            centroids: self.centroids.iter().map(<[f64]>::to_vec).collect(),
            fitness_offset: self.fitness_offset,
            budget_consumed: meta.budget_consumed,
            cells: self
                .records()
                .map(|(index, r)| CellRecord {
                    index,
                    fitness: r.fitness,
                    descriptor: r.descriptor.clone(),
                    hyperparams: r.agent.h.clone(),
                    theta_blob: blob::encode(&r.agent.theta),
                    phi_blob: blob::encode(&r.agent.phi),
                    steps_at_insertion: r.steps_at_insertion,
                })
                .collect(),
        }
    }

    /// Rebuilds an archive from a snapshot, validating every cell.
    pub fn restore(snapshot: &Snapshot) -> Result<(Repertoire, SnapshotMeta)> {
        let bad = |reason: String| Error::snapshot(None, reason);
        snapshot.schema.validate().map_err(|e| bad(e.to_string()))?;
        let layout = &snapshot.layout;
        if snapshot.schema.algo != layout.algo {
            return Err(bad("schema and layout name different algorithms".into()));
        }
        let spec = snapshot.env.build();
        let spec = spec.spec();
        if layout.state_dim != spec.state_dim || layout.action_dim != spec.action_dim {
            return Err(bad(format!(
                "layout does not fit environment {}",
                snapshot.env
            )));
        }
        AgentLayout::new(
            layout.algo,
            layout.state_dim,
            layout.action_dim,
            layout.hidden.clone(),
        )
        .map_err(|e| bad(e.to_string()))?;
        let bounds = Bounds(snapshot.bounds.iter().map(|b| (b[0], b[1])).collect());
        let dim = bounds.dim();
        if snapshot.centroids.iter().any(|c| c.len() != dim) {
            return Err(bad("centroid dimension differs from the bounds".into()));
        }
        let points: Vec<f64> = snapshot.centroids.iter().flatten().copied().collect();
        let centroids = CentroidSet::new(points, bounds).map_err(|e| bad(e.to_string()))?;
        let mut rep = Repertoire::new(Arc::new(centroids), snapshot.fitness_offset)
            .map_err(|e| bad(e.to_string()))?;

        for cell in &snapshot.cells {
            let at = |reason: String| Error::snapshot(Some(cell.index), reason);
            if cell.index >= rep.num_cells() {
                return Err(at(format!("index outside the {} cells", rep.num_cells())));
            }
            if rep.cells[cell.index].is_some() {
                return Err(at("cell listed twice".into()));
            }
            if !cell.fitness.is_finite() {
                return Err(at("fitness is not finite".into()));
            }
            if rep
                .centroids
                .cell_index(&cell.descriptor)
                .map_err(|e| at(e.to_string()))?
                != cell.index
            {
                return Err(at("descriptor does not map to this cell".into()));
            }
            let theta = blob::decode(&cell.theta_blob).map_err(|e| at(e.to_string()))?;
            let phi = blob::decode(&cell.phi_blob).map_err(|e| at(e.to_string()))?;
            let agent = Agent {
                layout: layout.clone(),
                theta,
                phi,
                h: cell.hyperparams.clone(),
            };
            agent
                .check(&snapshot.schema)
                .map_err(|e| at(e.to_string()))?;
            rep.try_insert(EliteRecord {
                agent,
                fitness: cell.fitness,
                descriptor: cell.descriptor.clone(),
                steps_at_insertion: cell.steps_at_insertion,
            })?;
        }
        let meta = SnapshotMeta {
            env: snapshot.env,
            layout: layout.clone(),
            schema: snapshot.schema.clone(),
            budget_consumed: snapshot.budget_consumed,
        };
        Ok((rep, meta))
    }
}

/// Run context stored next to the archive in a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMeta {
    pub env: EnvName,
    pub layout: AgentLayout,
    pub schema: HyperparamSchema,
    pub budget_consumed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellRecord {
    pub index: usize,
    pub fitness: f64,
    pub descriptor: Vec<f64>,
    pub hyperparams: BTreeMap<String, f64>,
    pub theta_blob: String,
    pub phi_blob: String,
    pub steps_at_insertion: u64,
}

/// Serialized archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub env: EnvName,
    pub layout: AgentLayout,
    pub schema: HyperparamSchema,
    pub bounds: Vec<[f64; 2]>,
    pub centroids: Vec<Vec<f64>>,
    pub fitness_offset: f64,
    pub budget_consumed: u64,
    pub cells: Vec<CellRecord>,
}

impl Snapshot {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::snapshot(None, e.to_string()))
    }
}
