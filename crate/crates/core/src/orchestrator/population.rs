//! Population slots, truncation/injection updates and training.

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rayon::prelude::*;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::repertoire::Repertoire;
use crate::rl::{
    self, Agent, EpisodeCursor, HyperparamSchema, ReplayBuffer, SkipReason, TrainState,
};
use crate::rng::Rng;

/// Band sizes of a population update for population size `P`:
/// `best = ceil(nP)`, `worst = floor(pP)`, `injected = floor(kP)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bands {
    pub best: usize,
    pub worst: usize,
    pub injected: usize,
}

impl Bands {
    pub fn new(
        size: usize,
        worst_fraction: f64,
        best_fraction: f64,
        repertoire_fraction: f64,
    ) -> Self {
        // Products like 0.1 * 30 land a hair above the integer; round those away.
        let p = size as f64;
        Bands {
            best: (best_fraction * p - 1e-9).ceil().max(0.0) as usize,
            worst: (worst_fraction * p + 1e-9).floor() as usize,
            injected: (repertoire_fraction * p + 1e-9).floor() as usize,
        }
    }
}

/// One member of the population: an agent with its own optimizer state,
/// replay buffer and random stream.
#[derive(Debug, Clone)]
pub struct Slot {
    pub agent: Agent,
    pub train_state: TrainState,
    pub buffer: ReplayBuffer,
    pub rng: Rng,
    pub cursor: EpisodeCursor,
    pub last_fitness: Option<f64>,
    pub last_descriptor: Option<Vec<f64>>,
}

impl Slot {
    pub fn new(agent: Agent, buffer_size: usize, rng: Rng) -> Self {
        let layout = &agent.layout;
        Slot {
            train_state: TrainState::new(layout),
            buffer: ReplayBuffer::new(buffer_size, layout.state_dim, layout.action_dim),
            agent,
            rng,
            cursor: EpisodeCursor::new(),
            last_fitness: None,
            last_descriptor: None,
        }
    }

    /// Swaps in a new agent; the buffer and random stream stay with the slot.
    fn replace_agent(&mut self, agent: Agent) {
        self.train_state = TrainState::new(&agent.layout);
        self.agent = agent;
    }
}

#[derive(Debug, Clone, Default)]
pub struct Population {
    pub slots: Vec<Slot>,
}

/// What a population update changed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    /// Slot indices from best to worst.
    pub ranking: Vec<usize>,
    /// `(slot, donor)` for every truncation replacement.
    pub truncated: Vec<(usize, usize)>,
    /// Slots that received a repertoire sample.
    pub injected: Vec<usize>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Slot indices ordered by last fitness, best first, ties by index.
    pub fn ranking(&self) -> Result<Vec<usize>> {
        let mut fitness = Vec::with_capacity(self.len());
        for (i, s) in self.slots.iter().enumerate() {
            fitness.push(
                s.last_fitness
                    .ok_or_else(|| Error::contract(format!("slot {i} has not been evaluated")))?,
            );
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
        Ok(order)
    }
}

/// Truncation selection plus repertoire injection.
///
/// The worst band takes `(theta, phi)` from uniformly chosen members of the
/// best band and fresh hyperparameters. `bands.injected` slots drawn from the
/// middle band take whole agents sampled from `repertoire`, keeping the
/// record's hyperparameters unless `resample_injected_h`. Replaced slots
/// restart their optimizers; every other slot is left alone.
pub fn population_update(
    pop: &mut Population,
    repertoire: Option<&Repertoire>,
    bands: Bands,
    schema: &HyperparamSchema,
    resample_injected_h: bool,
    rng: &mut Rng,
) -> Result<UpdateReport> {
    let n = pop.len();
    if bands.best + bands.worst + bands.injected > n {
        return Err(Error::contract(format!(
            "bands {bands:?} do not fit a population of {n}"
        )));
    }
    if bands.worst > 0 && bands.best == 0 {
        return Err(Error::contract("truncation needs a non-empty donor band"));
    }
    let ranking = pop.ranking()?;
    let top = &ranking[..bands.best];
    let middle = &ranking[bands.best..n - bands.worst];
    let bottom = &ranking[n - bands.worst..];

    let mut report = UpdateReport {
        ranking: ranking.clone(),
        ..Default::default()
    };
    for &slot in bottom {
        let donor = top[rng.random_range(0..top.len())];
        let source = &pop.slots[donor].agent;
        let agent = Agent {
            layout: source.layout.clone(),
            theta: source.theta.clone(),
            phi: source.phi.clone(),
            h: schema.sample(rng),
        };
        pop.slots[slot].replace_agent(agent);
        report.truncated.push((slot, donor));
    }

    if bands.injected > 0 {
        let repertoire = repertoire.ok_or(Error::EmptyRepertoire)?;
        let mut chosen: Vec<usize> = sample_indices(rng, middle.len(), bands.injected)
            .into_iter()
            .map(|i| middle[i])
            .collect();
        chosen.sort_unstable();
        let records = repertoire.sample(chosen.len(), rng)?;
        for (&slot, record) in chosen.iter().zip(records) {
            let mut agent = record.agent;
            if resample_injected_h {
                agent.h = schema.sample(rng);
            }
            pop.slots[slot].replace_agent(agent);
        }
        report.injected = chosen;
    }
    Ok(report)
}

/// Trains every slot for `steps` environment steps, one gradient update per
/// step. Returns the environment steps consumed, `P * steps`.
pub fn train_population(
    pop: &mut Population,
    env: &dyn Environment,
    steps: u64,
    parallel: bool,
) -> Result<u64> {
    let train = |slot: &mut Slot| -> Result<u64> {
        let mut non_finite = 0u64;
        for _ in 0..steps {
            rl::collect_experience(
                &slot.agent,
                env,
                1,
                &mut slot.buffer,
                &mut slot.cursor,
                &mut slot.rng,
            )?;
            let diag = rl::train_step_in_place(
                &mut slot.agent,
                &mut slot.train_state,
                &slot.buffer,
                &mut slot.rng,
            )?;
            if diag.skipped == Some(SkipReason::NonFiniteGradient) {
                non_finite += 1;
            }
        }
        Ok(non_finite)
    };
    let skipped: Vec<u64> = if parallel {
        pop.slots.par_iter_mut().map(train).collect::<Result<_>>()?
    } else {
        pop.slots.iter_mut().map(train).collect::<Result<_>>()?
    };
    for (i, &k) in skipped.iter().enumerate() {
        if k > 0 {
            log::warn!("slot {i}: {k} updates discarded for non-finite values");
        }
    }
    Ok(pop.len() as u64 * steps)
}
