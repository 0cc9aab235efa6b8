//! Twin delayed deterministic actor-critic.
//!
//! Critic targets use the clipped double-Q minimum over target critics
//! evaluated at smoothed target-policy actions. The actor and all target
//! networks are updated every [`POLICY_DELAY`] critic updates.

use rand_distr::{Distribution, StandardNormal};

use super::hyperparams::names;
use super::{
    critic_inputs, Agent, Batch, PhiBlock, ReplayBuffer, SkipReason, TrainDiagnostics, TrainState,
};
use crate::error::Result;
use crate::nn::polyak_update;

pub const POLICY_DELAY: u64 = 2;

pub fn policy_action(agent: &Agent, observation: &[f32]) -> Result<Vec<f32>> {
    agent.layout.actor_spec().forward(&agent.theta, observation)
}

/// Deterministic action plus Gaussian exploration noise, clipped to the box.
pub fn exploration_action<R: rand::Rng + ?Sized>(
    agent: &Agent,
    observation: &[f32],
    rng: &mut R,
) -> Result<Vec<f32>> {
    let sigma = agent.hyper(names::EXPLORATION_NOISE) as f32;
    let mut a = policy_action(agent, observation)?;
    for x in &mut a {
        let eps: f32 = StandardNormal.sample(rng);
        *x = (*x + sigma * eps).clamp(-1.0, 1.0);
    }
    Ok(a)
}

/// Clipped Gaussian smoothing noise for the target policy, one entry per
/// action coordinate of each batch row.
pub fn target_noise<R: rand::Rng + ?Sized>(agent: &Agent, rows: usize, rng: &mut R) -> Vec<f32> {
    let sigma = agent.hyper(names::POLICY_NOISE) as f32;
    let clip = agent.hyper(names::NOISE_CLIP) as f32;
    (0..rows * agent.layout.action_dim)
        .map(|_| {
            let eps: f32 = StandardNormal.sample(rng);
            (sigma * eps).clamp(-clip, clip)
        })
        .collect()
}

/// Bellman targets `r + gamma (1 - done) min(Q1', Q2')(s', clip(pi'(s') + noise))`.
pub fn bellman_targets(agent: &Agent, batch: &Batch, noise: &[f32]) -> Result<Vec<f32>> {
    let layout = &agent.layout;
    let (sd, ad) = (layout.state_dim, layout.action_dim);
    let actor = layout.actor_spec();
    let critic = layout.critic_spec();
    let gamma = agent.hyper(names::DISCOUNT) as f32;

    let target_actor = actor.forward_batch(
        agent.block(PhiBlock::TargetActor),
        &batch.next_states,
        batch.size,
    )?;
    let next_actions: Vec<f32> = target_actor
        .output()
        .iter()
        .zip(noise)
        .map(|(a, n)| (a + n).clamp(-1.0, 1.0))
        .collect();
    let inputs = critic_inputs(&batch.next_states, &next_actions, sd, ad);
    let q1 = critic.forward_batch(agent.block(PhiBlock::TargetCritic1), &inputs, batch.size)?;
    let q2 = critic.forward_batch(agent.block(PhiBlock::TargetCritic2), &inputs, batch.size)?;
    Ok((0..batch.size)
        .map(|b| {
            let q = q1.output()[b].min(q2.output()[b]);
            batch.rewards[b] + gamma * (1.0 - batch.dones[b]) * q
        })
        .collect())
}

/// Twin-critic regression loss and its gradient over `[critic1, critic2]`.
pub fn critic_loss(agent: &Agent, batch: &Batch, noise: &[f32]) -> Result<(f32, Vec<f32>)> {
    let targets = bellman_targets(agent, batch, noise)?;
    critic_regression(agent, batch, &targets)
}

pub(crate) fn critic_regression(
    agent: &Agent,
    batch: &Batch,
    targets: &[f32],
) -> Result<(f32, Vec<f32>)> {
    let layout = &agent.layout;
    let critic = layout.critic_spec();
    let c_len = critic.param_count();
    let inputs = critic_inputs(
        &batch.states,
        &batch.actions,
        layout.state_dim,
        layout.action_dim,
    );
    let n = batch.size as f32;
    let mut grad = vec![0.0f32; 2 * c_len];
    let mut loss = 0.0f32;
    for (k, block) in [PhiBlock::Critic1, PhiBlock::Critic2]
        .into_iter()
        .enumerate()
    {
        let params = agent.block(block);
        let tape = critic.forward_batch(params, &inputs, batch.size)?;
        let upstream: Vec<f32> = tape
            .output()
            .iter()
            .zip(targets)
            .map(|(q, y)| {
                loss += (q - y) * (q - y) / n;
                2.0 * (q - y) / n
            })
            .collect();
        critic.backward_batch(
            params,
            &tape,
            &upstream,
            &mut grad[k * c_len..(k + 1) * c_len],
            false,
        )?;
    }
    Ok((loss, grad))
}

/// Deterministic policy-gradient loss `-mean Q1(s, pi(s))` and its gradient over theta.
pub fn actor_loss(agent: &Agent, batch: &Batch) -> Result<(f32, Vec<f32>)> {
    let layout = &agent.layout;
    let (sd, ad) = (layout.state_dim, layout.action_dim);
    let actor = layout.actor_spec();
    let critic = layout.critic_spec();
    let n = batch.size as f32;

    let actor_tape = actor.forward_batch(&agent.theta, &batch.states, batch.size)?;
    let inputs = critic_inputs(&batch.states, actor_tape.output(), sd, ad);
    let q1 = agent.block(PhiBlock::Critic1);
    let critic_tape = critic.forward_batch(q1, &inputs, batch.size)?;
    let loss = -critic_tape.output().iter().sum::<f32>() / n;

    let upstream = vec![-1.0 / n; batch.size];
    let mut unused = vec![0.0f32; q1.len()];
    let input_grad = critic
        .backward_batch(q1, &critic_tape, &upstream, &mut unused, true)?
        .expect("input gradient requested");
    let action_grad: Vec<f32> = input_grad
        .chunks_exact(sd + ad)
        .flat_map(|row| row[sd..].iter().copied())
        .collect();
    let mut grad = vec![0.0f32; agent.theta.len()];
    actor.backward_batch(&agent.theta, &actor_tape, &action_grad, &mut grad, false)?;
    Ok((loss, grad))
}

/// One TD3 update in place.
pub fn update<R: rand::Rng + ?Sized>(
    agent: &mut Agent,
    state: &mut TrainState,
    buffer: &ReplayBuffer,
    rng: &mut R,
) -> Result<TrainDiagnostics> {
    let batch_size = agent.hyper(names::BATCH_SIZE) as usize;
    if buffer.len() < batch_size {
        return Ok(TrainDiagnostics {
            skipped: Some(SkipReason::BufferUnderfilled),
            ..Default::default()
        });
    }
    let batch = buffer.sample(batch_size, rng)?;
    let noise = target_noise(agent, batch.size, rng);
    let backup = (agent.clone(), state.clone());
    let mut diag = TrainDiagnostics::default();

    let (closs, cgrad) = critic_loss(agent, &batch, &noise)?;
    let c_len = cgrad.len();
    let critic_lr = agent.hyper(names::CRITIC_LR) as f32;
    let mut ok = state
        .critic_opt
        .step(&mut agent.phi[..c_len], &cgrad, critic_lr)?;
    diag.critic_loss = Some(closs);
    state.updates += 1;

    if ok && state.updates % POLICY_DELAY == 0 {
        let (aloss, agrad) = actor_loss(agent, &batch)?;
        let policy_lr = agent.hyper(names::POLICY_LR) as f32;
        ok = state.actor_opt.step(&mut agent.theta, &agrad, policy_lr)?;
        diag.actor_loss = Some(aloss);
        let tau = agent.hyper(names::TAU) as f32;
        let theta = agent.theta.clone();
        polyak_update(agent.block_mut(PhiBlock::TargetActor), &theta, tau);
        for (target, source) in [
            (PhiBlock::TargetCritic1, PhiBlock::Critic1),
            (PhiBlock::TargetCritic2, PhiBlock::Critic2),
        ] {
            let src = agent.block(source).to_vec();
            polyak_update(agent.block_mut(target), &src, tau);
        }
    }

    if !ok || !agent.is_finite() {
        (*agent, *state) = backup;
        diag.skipped = Some(SkipReason::NonFiniteGradient);
        log::warn!("td3 update produced non-finite values; update discarded");
    }
    Ok(diag)
}

/// Pure TD3 step: returns the updated agent and optimizer state.
pub fn td3_train_step<R: rand::Rng + ?Sized>(
    agent: &Agent,
    state: &TrainState,
    buffer: &ReplayBuffer,
    rng: &mut R,
) -> Result<(Agent, TrainState, TrainDiagnostics)> {
    let mut next = agent.clone();
    let mut next_state = state.clone();
    let diag = update(&mut next, &mut next_state, buffer, rng)?;
    Ok((next, next_state, diag))
}
