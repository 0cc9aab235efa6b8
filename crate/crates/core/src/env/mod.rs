//! Deterministic episodic environments with behavior descriptors.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tessellation::Bounds;

mod planar_arm;
mod point_maze;
pub mod trajectory;

pub use planar_arm::PlanarArm;
pub use point_maze::{PointMazeTrap, Wall};
pub use trajectory::{Trajectory, TrajectoryStep};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: EnvName,
    /// Length of the observation handed to the networks.
    pub state_dim: usize,
    /// Actions live in `[-1, 1]^action_dim`.
    pub action_dim: usize,
    pub episode_length: usize,
    pub bd_dim: usize,
    pub bd_bounds: Bounds,
    /// Added to every fitness in the QD-score; large enough that any
    /// achievable return plus the offset is non-negative.
    pub fitness_offset: f64,
}

/// Deterministic dynamics: fixed start state, no early termination.
pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    fn reset(&self) -> Vec<f64>;

    /// Applies `action` (clipped into the box) and returns the next state and reward.
    fn step(&self, state: &[f64], action: &[f32]) -> (Vec<f64>, f64);

    fn observe(&self, state: &[f64]) -> Vec<f32>;

    /// Descriptor of an episode, a function of its final state.
    fn descriptor(&self, final_state: &[f64]) -> Vec<f64>;
}

pub type SharedEnv = Arc<dyn Environment>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvName {
    #[serde(rename = "point-maze-trap")]
    PointMazeTrap,
    #[serde(rename = "planar-arm")]
    PlanarArm,
}

impl EnvName {
    pub fn build(self) -> SharedEnv {
        match self {
            EnvName::PointMazeTrap => Arc::new(PointMazeTrap::new()),
            EnvName::PlanarArm => Arc::new(PlanarArm::new()),
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvName::PointMazeTrap => "point-maze-trap",
            EnvName::PlanarArm => "planar-arm",
        })
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point-maze-trap" => Ok(EnvName::PointMazeTrap),
            "planar-arm" => Ok(EnvName::PlanarArm),
            other => Err(Error::config(
                "env",
                format!("unknown environment `{other}`"),
            )),
        }
    }
}

pub(crate) fn clip_action(action: &[f32]) -> impl Iterator<Item = f64> + '_ {
    action.iter().map(|&a| f64::from(a).clamp(-1.0, 1.0))
}

/// Wraps an environment and counts every `step` call.
pub struct StepCounter {
    inner: SharedEnv,
    steps: AtomicU64,
}

impl StepCounter {
    pub fn new(inner: SharedEnv) -> Arc<Self> {
        Arc::new(StepCounter {
            inner,
            steps: AtomicU64::new(0),
        })
    }

    pub fn count(&self) -> u64 {
        self.steps.load(Ordering::Relaxed)
    }
}

impl Environment for StepCounter {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }

    fn reset(&self) -> Vec<f64> {
        self.inner.reset()
    }

    fn step(&self, state: &[f64], action: &[f32]) -> (Vec<f64>, f64) {
        self.steps.fetch_add(1, Ordering::Relaxed);
        self.inner.step(state, action)
    }

    fn observe(&self, state: &[f64]) -> Vec<f32> {
        self.inner.observe(state)
    }

    fn descriptor(&self, final_state: &[f64]) -> Vec<f64> {
        self.inner.descriptor(final_state)
    }
}

/// Runs a fixed action sequence from the start state and returns the total
/// reward and the descriptor of the final state.
pub fn simulate(env: &dyn Environment, actions: &[Vec<f32>]) -> (f64, Vec<f64>) {
    let mut state = env.reset();
    let mut total = 0.0;
    for a in actions {
        let (next, r) = env.step(&state, a);
        total += r;
        state = next;
    }
    (total, env.descriptor(&state))
}
