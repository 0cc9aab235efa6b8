//! The three search loops: PBT-MAP-Elites, MAP-Elites and PBT with a passive
//! repertoire, sharing budget accounting, metric logging and checkpoints.
//!
//! Budget charges per runner:
//!
//! | runner       | init           | iteration                |
//! |--------------|----------------|--------------------------|
//! | `pbt-me`     | `(P + M) * T`  | `P * S + (P + M) * T`    |
//! | `map-elites` | `M * T`        | `M * T`                  |
//! | `pbt`        | `0`            | `P * S`                  |
//!
//! The initialization always runs. An iteration runs only if its whole cost
//! fits in the remaining budget.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{RunConfig, Runner};
use crate::env::{Environment, SharedEnv};
use crate::error::{Error, Result};
use crate::repertoire::{EliteRecord, QdMetrics, Repertoire, Snapshot, SnapshotMeta};
use crate::rl::{self, Agent, AgentLayout, Evaluation, HyperparamSchema};
use crate::rng::{self, Rng, Stream};
use crate::tessellation::build_cvt;
use crate::variation::vary_agents;

mod population;

pub use population::{population_update, train_population, Bands, Population, Slot, UpdateReport};

/// Environment handles used for buffered exploration and for evaluation.
/// They may be the same object; keeping them apart lets callers count the
/// two kinds of steps independently.
#[derive(Clone)]
pub struct RunEnvs {
    pub explore: SharedEnv,
    pub exploit: SharedEnv,
}

impl RunEnvs {
    pub fn single(env: SharedEnv) -> Self {
        RunEnvs {
            explore: env.clone(),
            exploit: env,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub budget_steps: u64,
    pub metrics: QdMetrics,
    pub wall_seconds: f64,
}

/// Hooks called while a run progresses.
pub trait RunObserver {
    fn on_metrics(&mut self, _row: &MetricsRow) -> Result<()> {
        Ok(())
    }

    /// Checkpoint `index` (1-based) of the configured count.
    fn on_checkpoint(
        &mut self,
        _index: usize,
        _repertoire: &Repertoire,
        _meta: &SnapshotMeta,
    ) -> Result<()> {
        Ok(())
    }
}

pub struct NoObserver;

impl RunObserver for NoObserver {}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub metrics: Vec<MetricsRow>,
    pub repertoire: Repertoire,
    pub meta: SnapshotMeta,
    pub iterations: usize,
    pub wall_seconds: f64,
}

impl RunResult {
    pub fn final_snapshot(&self) -> Snapshot {
        self.repertoire.snapshot(&self.meta)
    }

    pub fn final_metrics(&self) -> QdMetrics {
        self.repertoire.metrics()
    }
}

/// Runs the configured loop with the configured environment.
pub fn run(config: &RunConfig, observer: &mut dyn RunObserver) -> Result<RunResult> {
    run_with_envs(config, &RunEnvs::single(config.env.build()), observer)
}

pub fn run_with_envs(
    config: &RunConfig,
    envs: &RunEnvs,
    observer: &mut dyn RunObserver,
) -> Result<RunResult> {
    config.validate()?;
    let mut state = RunState::new(config, envs, observer)?;
    state.initialize()?;
    state.log()?;
    loop {
        let cost = state.iteration_cost();
        if state.budget + cost > config.budget.total {
            break;
        }
        state.iteration += 1;
        state.step()?;
        state.log()?;
    }
    state.finish()
}

struct RunState<'a> {
    cfg: &'a RunConfig,
    envs: &'a RunEnvs,
    observer: &'a mut dyn RunObserver,
    schema: HyperparamSchema,
    layout: AgentLayout,
    episode_length: u64,
    repertoire: Repertoire,
    population: Population,
    bands: Bands,
    population_rng: Rng,
    repertoire_rng: Rng,
    budget: u64,
    iteration: usize,
    metrics: Vec<MetricsRow>,
    checkpoints_written: usize,
    started: Instant,
}

impl<'a> RunState<'a> {
    fn new(
        cfg: &'a RunConfig,
        envs: &'a RunEnvs,
        observer: &'a mut dyn RunObserver,
    ) -> Result<Self> {
        let spec = envs.exploit.spec().clone();
        if envs.explore.spec() != &spec {
            return Err(Error::contract(
                "exploration and evaluation environments differ",
            ));
        }
        if spec.name != cfg.env {
            return Err(Error::contract(format!(
                "configured for {}, given {}",
                cfg.env, spec.name
            )));
        }
        let centroids = build_cvt(
            cfg.tessellation.num_cells,
            cfg.tessellation.init_points,
            &spec.bd_bounds,
            cfg.seed,
        )?;
        let p = &cfg.population;
        Ok(RunState {
            schema: cfg.schema(),
            layout: cfg.layout(&spec),
            episode_length: spec.episode_length as u64,
            repertoire: Repertoire::new(Arc::new(centroids), spec.fitness_offset)?,
            population: Population::default(),
            bands: Bands::new(
                p.size,
                p.worst_fraction,
                p.best_fraction,
                p.repertoire_fraction,
            ),
            population_rng: rng::stream(cfg.seed, Stream::Population, 0),
            repertoire_rng: rng::stream(cfg.seed, Stream::Repertoire, 0),
            budget: 0,
            iteration: 0,
            metrics: Vec::new(),
            checkpoints_written: 0,
            started: Instant::now(),
            cfg,
            envs,
            observer,
        })
    }

    fn pop_size(&self) -> u64 {
        self.cfg.population.size as u64
    }

    fn offspring(&self) -> u64 {
        self.cfg.variation.offspring as u64
    }

    fn iteration_cost(&self) -> u64 {
        let (p, m, s, t) = (
            self.pop_size(),
            self.offspring(),
            self.cfg.population.train_steps,
            self.episode_length,
        );
        match self.cfg.runner {
            Runner::PbtMe => p * s + (p + m) * t,
            Runner::MapElites => m * t,
            Runner::Pbt => p * s,
        }
    }

    fn meta(&self) -> SnapshotMeta {
        SnapshotMeta {
            env: self.cfg.env,
            layout: self.layout.clone(),
            schema: self.schema.clone(),
            budget_consumed: self.budget,
        }
    }

    /// Identically initialized networks, hyperparameters drawn per slot.
    fn init_population(&mut self) {
        let seed = self.cfg.seed;
        self.population.slots = (0..self.cfg.population.size)
            .map(|i| {
                let h = self
                    .schema
                    .sample(&mut rng::stream(seed, Stream::Hyperparams, i as u64));
                let agent = Agent::initialize(
                    self.layout.clone(),
                    h,
                    &mut rng::stream(seed, Stream::ParamInit, 0),
                );
                Slot::new(
                    agent,
                    self.cfg.population.buffer_size,
                    rng::stream(seed, Stream::Slot, i as u64),
                )
            })
            .collect();
    }

    /// `M` independently initialized agents.
    fn random_agents(&self) -> Vec<Agent> {
        (0..self.cfg.variation.offspring)
            .map(|i| {
                let mut r = rng::stream(self.cfg.seed, Stream::MapElitesInit, i as u64);
                let h = self.schema.sample(&mut r);
                Agent::initialize(self.layout.clone(), h, &mut r)
            })
            .collect()
    }

    fn evaluate_all(&self, agents: &[&Agent]) -> Result<Vec<Evaluation>> {
        let env: &dyn Environment = self.envs.exploit.as_ref();
        if self.cfg.population.parallel {
            agents.par_iter().map(|a| rl::evaluate(a, env)).collect()
        } else {
            agents.iter().map(|a| rl::evaluate(a, env)).collect()
        }
    }

    fn insert_all(&mut self, agents: Vec<Agent>, evals: Vec<Evaluation>) -> Result<()> {
        for (agent, e) in agents.into_iter().zip(evals) {
            self.repertoire.try_insert(EliteRecord {
                agent,
                fitness: e.fitness,
                descriptor: e.descriptor,
                steps_at_insertion: self.budget,
            })?;
        }
        Ok(())
    }

    /// Evaluates the population, records fitness on each slot and inserts copies.
    fn evaluate_population(&mut self, charged: bool) -> Result<()> {
        let evals = {
            let agents: Vec<&Agent> = self.population.slots.iter().map(|s| &s.agent).collect();
            self.evaluate_all(&agents)?
        };
        if charged {
            self.budget += self.pop_size() * self.episode_length;
        }
        for (slot, e) in self.population.slots.iter_mut().zip(&evals) {
            slot.last_fitness = Some(e.fitness);
            slot.last_descriptor = Some(e.descriptor.clone());
        }
        let agents = self
            .population
            .slots
            .iter()
            .map(|s| s.agent.clone())
            .collect();
        self.insert_all(agents, evals)
    }

    fn evaluate_and_insert(&mut self, agents: Vec<Agent>) -> Result<()> {
        let evals = {
            let refs: Vec<&Agent> = agents.iter().collect();
            self.evaluate_all(&refs)?
        };
        self.budget += agents.len() as u64 * self.episode_length;
        self.insert_all(agents, evals)
    }

    /// Samples `2M` parents, pairs them consecutively and inserts the offspring.
    fn offspring_batch(&mut self) -> Result<()> {
        let m = self.cfg.variation.offspring;
        if m == 0 {
            return Ok(());
        }
        let parents = self.repertoire.sample(2 * m, &mut self.repertoire_rng)?;
        let pairs: Vec<(&Agent, &Agent)> = parents
            .chunks_exact(2)
            .map(|p| (&p[0].agent, &p[1].agent))
            .collect();
        let children = vary_agents(&pairs, self.cfg.isoline(), &mut self.repertoire_rng)?;
        self.evaluate_and_insert(children)
    }

    fn initialize(&mut self) -> Result<()> {
        match self.cfg.runner {
            Runner::PbtMe if self.cfg.population.size > 0 => {
                self.init_population();
                self.evaluate_population(true)?;
                self.offspring_batch()
            }
            Runner::PbtMe | Runner::MapElites => {
                let agents = self.random_agents();
                self.evaluate_and_insert(agents)
            }
            Runner::Pbt => {
                self.init_population();
                self.evaluate_population(false)
            }
        }
    }

    fn update_population(&mut self) -> Result<()> {
        if self.population.is_empty() {
            return Ok(());
        }
        let repertoire = (self.bands.injected > 0).then_some(&self.repertoire);
        population_update(
            &mut self.population,
            repertoire,
            self.bands,
            &self.schema,
            self.cfg.population.inject_resample_h,
            &mut self.population_rng,
        )?;
        Ok(())
    }

    fn train(&mut self) -> Result<()> {
        let steps = train_population(
            &mut self.population,
            self.envs.explore.as_ref(),
            self.cfg.population.train_steps,
            self.cfg.population.parallel,
        )?;
        self.budget += steps;
        Ok(())
    }

    fn step(&mut self) -> Result<()> {
        let before = self.repertoire.metrics();
        match self.cfg.runner {
            Runner::PbtMe => {
                self.update_population()?;
                self.train()?;
                self.evaluate_population(true)?;
                self.offspring_batch()?;
            }
            Runner::MapElites => self.offspring_batch()?,
            Runner::Pbt => {
                self.update_population()?;
                self.train()?;
                self.evaluate_population(false)?;
            }
        }
        self.check_invariants(before)
    }

    fn check_invariants(&self, before: QdMetrics) -> Result<()> {
        let after = self.repertoire.metrics();
        let abort = |reason: String| Error::RunAborted {
            iteration: self.iteration,
            reason,
        };
        if after.coverage < before.coverage {
            return Err(abort("repertoire coverage decreased".into()));
        }
        if after.qd_score < before.qd_score {
            return Err(abort("repertoire QD-score decreased".into()));
        }
        if let Some(i) = self
            .population
            .slots
            .iter()
            .position(|s| !s.agent.is_finite())
        {
            return Err(abort(format!("slot {i} holds non-finite parameters")));
        }
        Ok(())
    }

    fn log(&mut self) -> Result<()> {
        if let Some(last) = self.metrics.last() {
            if last.budget_steps >= self.budget {
                return Err(Error::RunAborted {
                    iteration: self.iteration,
                    reason: "budget did not advance".into(),
                });
            }
        }
        let row = MetricsRow {
            budget_steps: self.budget,
            metrics: self.repertoire.metrics(),
            wall_seconds: self.started.elapsed().as_secs_f64(),
        };
        self.observer.on_metrics(&row)?;
        self.metrics.push(row);
        log::info!(
            "{} iteration {} budget {} coverage {:.4} qd {:.2}",
            self.cfg.runner,
            self.iteration,
            self.budget,
            row.metrics.coverage,
            row.metrics.qd_score
        );

        let (c, total) = (
            self.cfg.budget.checkpoints as u128,
            self.cfg.budget.total as u128,
        );
        while self.checkpoints_written < self.cfg.budget.checkpoints
            && self.budget as u128 * c >= (self.checkpoints_written as u128 + 1) * total
        {
            self.emit_checkpoint()?;
        }
        Ok(())
    }

    fn emit_checkpoint(&mut self) -> Result<()> {
        self.checkpoints_written += 1;
        let meta = self.meta();
        self.observer
            .on_checkpoint(self.checkpoints_written, &self.repertoire, &meta)
    }

    fn finish(mut self) -> Result<RunResult> {
        while self.checkpoints_written < self.cfg.budget.checkpoints {
            self.emit_checkpoint()?;
        }
        Ok(RunResult {
            config: self.cfg.clone(),
            metrics: self.metrics,
            meta: SnapshotMeta {
                env: self.cfg.env,
                layout: self.layout,
                schema: self.schema,
                budget_consumed: self.budget,
            },
            repertoire: self.repertoire,
            iterations: self.iteration,
            wall_seconds: self.started.elapsed().as_secs_f64(),
        })
    }
}
