//! Rollouts in exploration mode (buffered) and exploitation mode (evaluated).

use super::{sac, td3, Agent, Algo, ReplayBuffer};
use crate::env::{Environment, Trajectory, TrajectoryStep};
use crate::error::{Error, Result};

/// Position inside the current exploration episode, carried across calls so
/// episodes may straddle training iterations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeCursor {
    state: Option<Vec<f64>>,
    t: usize,
}

impl EpisodeCursor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_in_episode(&self) -> usize {
        self.t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub descriptor: Vec<f64>,
    pub steps: u64,
}

fn exploration_action<R: rand::Rng + ?Sized>(
    agent: &Agent,
    obs: &[f32],
    rng: &mut R,
) -> Result<Vec<f32>> {
    match agent.layout.algo {
        Algo::Td3 => td3::exploration_action(agent, obs, rng),
        Algo::Sac => sac::exploration_action(agent, obs, rng),
    }
}

fn check_shapes(agent: &Agent, env: &dyn Environment) -> Result<()> {
    let spec = env.spec();
    if agent.layout.state_dim != spec.state_dim || agent.layout.action_dim != spec.action_dim {
        return Err(Error::contract(format!(
            "agent shape ({}, {}) does not fit environment {}",
            agent.layout.state_dim, agent.layout.action_dim, spec.name
        )));
    }
    Ok(())
}

/// Runs the exploration policy for exactly `num_steps` environment steps,
/// appending every transition to `buffer`. The terminal flag is set on the
/// last step of each episode. Returns the number of steps taken.
pub fn collect_experience<R: rand::Rng + ?Sized>(
    agent: &Agent,
    env: &dyn Environment,
    num_steps: u64,
    buffer: &mut ReplayBuffer,
    cursor: &mut EpisodeCursor,
    rng: &mut R,
) -> Result<u64> {
    check_shapes(agent, env)?;
    let horizon = env.spec().episode_length;
    for _ in 0..num_steps {
        let state = cursor.state.take().unwrap_or_else(|| env.reset());
        let obs = env.observe(&state);
        let action = exploration_action(agent, &obs, rng)?;
        let (next, reward) = env.step(&state, &action);
        cursor.t += 1;
        let done = cursor.t == horizon;
        buffer.push_parts(&obs, &action, reward as f32, &env.observe(&next), done)?;
        if done {
            cursor.t = 0;
        } else {
            cursor.state = Some(next);
        }
    }
    Ok(num_steps)
}

/// One deterministic episode with the exploitation policy. Nothing is buffered.
pub fn evaluate(agent: &Agent, env: &dyn Environment) -> Result<Evaluation> {
    evaluate_inner(agent, env, None)
}

/// As [`evaluate`], also returning the per-step log.
pub fn evaluate_logged(agent: &Agent, env: &dyn Environment) -> Result<(Evaluation, Trajectory)> {
    let mut traj = Trajectory::default();
    let eval = evaluate_inner(agent, env, Some(&mut traj))?;
    Ok((eval, traj))
}

fn evaluate_inner(
    agent: &Agent,
    env: &dyn Environment,
    mut log: Option<&mut Trajectory>,
) -> Result<Evaluation> {
    check_shapes(agent, env)?;
    let horizon = env.spec().episode_length;
    let mut state = env.reset();
    let mut fitness = 0.0;
    for t in 0..horizon {
        let action = agent.deterministic_action(&env.observe(&state))?;
        let (next, reward) = env.step(&state, &action);
        fitness += reward;
        if let Some(log) = log.as_deref_mut() {
            log.steps.push(TrajectoryStep {
                t,
                next_state: next.clone(),
                action,
                reward,
            });
        }
        state = next;
    }
    Ok(Evaluation {
        fitness,
        descriptor: env.descriptor(&state),
        steps: horizon as u64,
    })
}
