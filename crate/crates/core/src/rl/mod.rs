//! RL agents: the `(theta, phi, h)` tuple, its TD3 and SAC learners, replay
//! storage and rollouts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, AdamState, FlatParams, MlpSpec};

pub mod buffer;
pub mod hyperparams;
pub mod rollout;
pub mod sac;
pub mod td3;

pub use buffer::{Batch, ReplayBuffer, Transition};
pub use hyperparams::{HyperparamRange, HyperparamSchema, Hyperparams, Scale};
pub use rollout::{collect_experience, evaluate, evaluate_logged, EpisodeCursor, Evaluation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Td3,
    Sac,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Td3 => "td3",
            Algo::Sac => "sac",
        })
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "td3" => Ok(Algo::Td3),
            "sac" => Ok(Algo::Sac),
            other => Err(Error::config(
                "algo",
                format!("unknown algorithm `{other}`"),
            )),
        }
    }
}

/// Named blocks of the `phi` vector, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiBlock {
    Critic1,
    Critic2,
    TargetActor,
    TargetCritic1,
    TargetCritic2,
    LogAlpha,
}

/// Network shapes shared by every agent of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentLayout {
    pub algo: Algo,
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    #[serde(default = "default_hidden_activation")]
    pub hidden_activation: Activation,
}

fn default_hidden_activation() -> Activation {
    Activation::Relu
}

impl AgentLayout {
    pub fn new(
        algo: Algo,
        state_dim: usize,
        action_dim: usize,
        hidden: Vec<usize>,
    ) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 || hidden.contains(&0) {
            return Err(Error::config(
                "network.hidden",
                "layer sizes must be positive",
            ));
        }
        Ok(AgentLayout {
            algo,
            state_dim,
            action_dim,
            hidden,
            hidden_activation: Activation::Relu,
        })
    }

    pub fn with_hidden_activation(mut self, activation: Activation) -> Self {
        self.hidden_activation = activation;
        self
    }

    /// TD3: tanh-squashed deterministic action. SAC: mean and pre-scaled log-std.
    pub fn actor_spec(&self) -> MlpSpec {
        let (out, act) = match self.algo {
            Algo::Td3 => (self.action_dim, Activation::Tanh),
            Algo::Sac => (2 * self.action_dim, Activation::Identity),
        };
        let mut sizes = vec![self.state_dim];
        sizes.extend(&self.hidden);
        sizes.push(out);
        MlpSpec::new(sizes, self.hidden_activation, act).expect("layout sizes are validated")
    }

    /// Q(s, a) on the concatenated `[state, action]` input.
    pub fn critic_spec(&self) -> MlpSpec {
        let mut sizes = vec![self.state_dim + self.action_dim];
        sizes.extend(&self.hidden);
        sizes.push(1);
        MlpSpec::new(sizes, self.hidden_activation, Activation::Identity)
            .expect("layout sizes are validated")
    }

    pub fn phi_blocks(&self) -> &'static [PhiBlock] {
        use PhiBlock::*;
        match self.algo {
            Algo::Td3 => &[Critic1, Critic2, TargetActor, TargetCritic1, TargetCritic2],
            Algo::Sac => &[Critic1, Critic2, TargetCritic1, TargetCritic2, LogAlpha],
        }
    }

    fn block_len(&self, block: PhiBlock) -> usize {
        match block {
            PhiBlock::Critic1
            | PhiBlock::Critic2
            | PhiBlock::TargetCritic1
            | PhiBlock::TargetCritic2 => self.critic_spec().param_count(),
            PhiBlock::TargetActor => self.actor_spec().param_count(),
            PhiBlock::LogAlpha => 1,
        }
    }

    /// Offset range of `block` inside `phi`.
    pub fn block_range(&self, block: PhiBlock) -> std::ops::Range<usize> {
        let mut start = 0;
        for &b in self.phi_blocks() {
            let len = self.block_len(b);
            if b == block {
                return start..start + len;
            }
            start += len;
        }
        panic!("{block:?} is not part of a {} agent", self.algo)
    }

    pub fn theta_len(&self) -> usize {
        self.actor_spec().param_count()
    }

    pub fn phi_len(&self) -> usize {
        self.phi_blocks().iter().map(|&b| self.block_len(b)).sum()
    }
}

/// A complete agent: policy parameters `theta`, every other learnable
/// parameter in `phi` (layout given by [`AgentLayout::phi_blocks`]), and
/// hyperparameters `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub layout: AgentLayout,
    pub theta: FlatParams,
    pub phi: FlatParams,
    pub h: Hyperparams,
}

impl Agent {
    /// Fresh agent: networks drawn from `init_rng`, targets copied from their
    /// sources, temperature set from `alpha_init` (SAC).
    pub fn initialize<R: rand::Rng + ?Sized>(
        layout: AgentLayout,
        h: Hyperparams,
        init_rng: &mut R,
    ) -> Self {
        let actor = layout.actor_spec();
        let critic = layout.critic_spec();
        let theta = actor.init(init_rng);
        let c1 = critic.init(init_rng);
        let c2 = critic.init(init_rng);
        let mut phi = Vec::with_capacity(layout.phi_len());
        for &block in layout.phi_blocks() {
            match block {
                PhiBlock::Critic1 | PhiBlock::TargetCritic1 => phi.extend_from_slice(&c1),
                PhiBlock::Critic2 | PhiBlock::TargetCritic2 => phi.extend_from_slice(&c2),
                PhiBlock::TargetActor => phi.extend_from_slice(&theta),
                PhiBlock::LogAlpha => {
                    let alpha = h
                        .get(hyperparams::names::ALPHA_INIT)
                        .copied()
                        .unwrap_or(1.0);
                    phi.push(alpha.ln() as f32);
                }
            }
        }
        Agent {
            layout,
            theta,
            phi,
            h,
        }
    }

    pub fn block(&self, block: PhiBlock) -> &[f32] {
        &self.phi[self.layout.block_range(block)]
    }

    pub fn block_mut(&mut self, block: PhiBlock) -> &mut [f32] {
        let r = self.layout.block_range(block);
        &mut self.phi[r]
    }

    pub fn hyper(&self, name: &str) -> f64 {
        hyperparams::get(&self.h, name)
    }

    /// Temperature `exp(log_alpha)`; SAC only.
    pub fn alpha(&self) -> f32 {
        self.block(PhiBlock::LogAlpha)[0].exp()
    }

    /// Checks parameter lengths and hyperparameters against `schema`.
    pub fn check(&self, schema: &HyperparamSchema) -> Result<()> {
        if schema.algo != self.layout.algo {
            return Err(Error::contract("agent algorithm differs from its schema"));
        }
        if self.theta.len() != self.layout.theta_len() || self.phi.len() != self.layout.phi_len() {
            return Err(Error::contract(
                "agent parameter vectors do not match the layout",
            ));
        }
        schema.check(&self.h)
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.phi).all(|x| x.is_finite())
    }

    /// `theta` followed by `phi`, the vector varied by isoline crossover.
    pub fn concat_params(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.theta.len() + self.phi.len());
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.phi);
        v
    }

    /// Action used in exploitation mode.
    pub fn deterministic_action(&self, observation: &[f32]) -> Result<Vec<f32>> {
        match self.layout.algo {
            Algo::Td3 => td3::policy_action(self, observation),
            Algo::Sac => sac::mean_action(self, observation),
        }
    }
}

/// Optimizer state attached to an agent while it trains inside a population
/// slot. Not part of the agent tuple; reset whenever the slot's agent is replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub alpha_opt: AdamState,
    pub updates: u64,
}

impl TrainState {
    pub fn new(layout: &AgentLayout) -> Self {
        TrainState {
            actor_opt: AdamState::new(layout.theta_len()),
            critic_opt: AdamState::new(2 * layout.critic_spec().param_count()),
            alpha_opt: AdamState::new(1),
            updates: 0,
        }
    }
}

/// Losses reported by a train step. `skipped` is set when the update was a no-op.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainDiagnostics {
    pub critic_loss: Option<f32>,
    pub actor_loss: Option<f32>,
    pub alpha_loss: Option<f32>,
    pub alpha: Option<f32>,
    pub skipped: Option<SkipReason>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    BufferUnderfilled,
    NonFiniteGradient,
}

/// One gradient update of the agent's own algorithm, in place.
pub fn train_step_in_place<R: rand::Rng + ?Sized>(
    agent: &mut Agent,
    state: &mut TrainState,
    buffer: &ReplayBuffer,
    rng: &mut R,
) -> Result<TrainDiagnostics> {
    match agent.layout.algo {
        Algo::Td3 => td3::update(agent, state, buffer, rng),
        Algo::Sac => sac::update(agent, state, buffer, rng),
    }
}

/// Concatenates state and action rows into critic inputs.
pub(crate) fn critic_inputs(
    states: &[f32],
    actions: &[f32],
    state_dim: usize,
    action_dim: usize,
) -> Vec<f32> {
    let rows = states.len() / state_dim;
    let mut out = Vec::with_capacity(rows * (state_dim + action_dim));
    for (s, a) in states
        .chunks_exact(state_dim)
        .zip(actions.chunks_exact(action_dim))
    {
        out.extend_from_slice(s);
        out.extend_from_slice(a);
    }
    out
}
