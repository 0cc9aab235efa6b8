//! Maximum-entropy actor-critic with a tanh-squashed Gaussian policy, twin
//! critics and a learned temperature.
//!
//! The actor emits `[mean, raw_log_std]` per action coordinate. The raw value
//! is mapped smoothly into `[LOG_STD_MIN, LOG_STD_MAX]` with a scaled tanh so
//! every loss stays differentiable.

use rand_distr::{Distribution, StandardNormal};

use super::hyperparams::names;
use super::{
    critic_inputs, Agent, Batch, PhiBlock, ReplayBuffer, SkipReason, TrainDiagnostics, TrainState,
};
use crate::error::Result;
use crate::nn::polyak_update;

pub const LOG_STD_MIN: f32 = -5.0;
pub const LOG_STD_MAX: f32 = 2.0;
const HALF_LOG_TWO_PI: f32 = 0.918_938_5;

pub fn target_entropy(action_dim: usize) -> f32 {
    -(action_dim as f32)
}

#[inline]
fn squash_log_std(raw: f32) -> f32 {
    LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (raw.tanh() + 1.0)
}

#[inline]
fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 - tanh(u)^2)` without cancellation.
#[inline]
fn log_one_minus_tanh_sq(u: f32) -> f32 {
    2.0 * (std::f32::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Log-density of `a = tanh(u)`, `u ~ N(mean, exp(log_std)^2)`, evaluated at a
/// given action in `(-1, 1)`. Computed in `f64`.
pub fn squashed_gaussian_log_prob(mean: f64, log_std: f64, action: f64) -> f64 {
    let u = action.atanh();
    let z = (u - mean) / log_std.exp();
    -0.5 * z * z - log_std - 0.5 * (2.0 * std::f64::consts::PI).ln() - (1.0 - action * action).ln()
}

/// Reparameterized sample for one batch. `eps` holds standard normals.
struct PolicySample {
    actions: Vec<f32>,
    log_probs: Vec<f32>,
    /// Per coordinate: `exp(log_std)`.
    sigma: Vec<f32>,
    /// Per coordinate: d log_std / d raw.
    dlogstd_draw: Vec<f32>,
}

fn sample_policy(head: &[f32], eps: &[f32], action_dim: usize) -> PolicySample {
    let rows = eps.len() / action_dim;
    let mut s = PolicySample {
        actions: Vec::with_capacity(eps.len()),
        log_probs: Vec::with_capacity(rows),
        sigma: Vec::with_capacity(eps.len()),
        dlogstd_draw: Vec::with_capacity(eps.len()),
    };
    for (row, e) in head
        .chunks_exact(2 * action_dim)
        .zip(eps.chunks_exact(action_dim))
    {
        let mut lp = 0.0;
        for i in 0..action_dim {
            let t = row[action_dim + i].tanh();
            let log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (t + 1.0);
            let sigma = log_std.exp();
            let u = row[i] + sigma * e[i];
            lp += -0.5 * e[i] * e[i] - log_std - HALF_LOG_TWO_PI - log_one_minus_tanh_sq(u);
            s.actions.push(u.tanh());
            s.sigma.push(sigma);
            s.dlogstd_draw
                .push(0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t));
        }
        s.log_probs.push(lp);
    }
    s
}

pub fn mean_action(agent: &Agent, observation: &[f32]) -> Result<Vec<f32>> {
    let head = agent
        .layout
        .actor_spec()
        .forward(&agent.theta, observation)?;
    Ok(head[..agent.layout.action_dim]
        .iter()
        .map(|m| m.tanh())
        .collect())
}

/// Action sampled from the squashed Gaussian.
pub fn exploration_action<R: rand::Rng + ?Sized>(
    agent: &Agent,
    observation: &[f32],
    rng: &mut R,
) -> Result<Vec<f32>> {
    let ad = agent.layout.action_dim;
    let head = agent
        .layout
        .actor_spec()
        .forward(&agent.theta, observation)?;
    Ok((0..ad)
        .map(|i| {
            let eps: f32 = StandardNormal.sample(rng);
            (head[i] + squash_log_std(head[ad + i]).exp() * eps).tanh()
        })
        .collect())
}

pub fn standard_normals<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f32> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Soft Bellman targets
/// `scale * r + gamma (1 - done) (min(Q1', Q2')(s', a') - alpha log pi(a'|s'))`
/// with `a'` drawn from the current policy using `next_eps`.
pub fn soft_targets(agent: &Agent, batch: &Batch, next_eps: &[f32]) -> Result<Vec<f32>> {
    let layout = &agent.layout;
    let (sd, ad) = (layout.state_dim, layout.action_dim);
    let gamma = agent.hyper(names::DISCOUNT) as f32;
    let scale = agent.hyper(names::REWARD_SCALE) as f32;
    let alpha = agent.alpha();
    let head = layout
        .actor_spec()
        .forward_batch(&agent.theta, &batch.next_states, batch.size)?;
    let next = sample_policy(head.output(), next_eps, ad);
    let inputs = critic_inputs(&batch.next_states, &next.actions, sd, ad);
    let critic = layout.critic_spec();
    let q1 = critic.forward_batch(agent.block(PhiBlock::TargetCritic1), &inputs, batch.size)?;
    let q2 = critic.forward_batch(agent.block(PhiBlock::TargetCritic2), &inputs, batch.size)?;
    Ok((0..batch.size)
        .map(|b| {
            let v = q1.output()[b].min(q2.output()[b]) - alpha * next.log_probs[b];
            scale * batch.rewards[b] + gamma * (1.0 - batch.dones[b]) * v
        })
        .collect())
}

/// Twin-critic regression loss and its gradient over `[critic1, critic2]`.
pub fn critic_loss(agent: &Agent, batch: &Batch, next_eps: &[f32]) -> Result<(f32, Vec<f32>)> {
    let targets = soft_targets(agent, batch, next_eps)?;
    super::td3::critic_regression(agent, batch, &targets)
}

/// Actor loss `mean(alpha log pi(a|s) - min(Q1, Q2)(s, a))`, `a` reparameterized
/// with `eps`. Returns the loss, its gradient over theta, and the per-row log
/// probabilities (used by the temperature loss).
pub fn actor_loss(agent: &Agent, batch: &Batch, eps: &[f32]) -> Result<(f32, Vec<f32>, Vec<f32>)> {
    let layout = &agent.layout;
    let (sd, ad) = (layout.state_dim, layout.action_dim);
    let actor = layout.actor_spec();
    let critic = layout.critic_spec();
    let n = batch.size as f32;
    let alpha = agent.alpha();

    let tape = actor.forward_batch(&agent.theta, &batch.states, batch.size)?;
    let sample = sample_policy(tape.output(), eps, ad);
    let inputs = critic_inputs(&batch.states, &sample.actions, sd, ad);

    let c1 = agent.block(PhiBlock::Critic1);
    let c2 = agent.block(PhiBlock::Critic2);
    let t1 = critic.forward_batch(c1, &inputs, batch.size)?;
    let t2 = critic.forward_batch(c2, &inputs, batch.size)?;
    let mut loss = 0.0;
    let mut pick1 = vec![0.0f32; batch.size];
    let mut pick2 = vec![0.0f32; batch.size];
    for b in 0..batch.size {
        let (q1, q2) = (t1.output()[b], t2.output()[b]);
        if q1 <= q2 {
            pick1[b] = 1.0;
        } else {
            pick2[b] = 1.0;
        }
        loss += (alpha * sample.log_probs[b] - q1.min(q2)) / n;
    }
    let mut unused = vec![0.0f32; c1.len()];
    let g1 = critic
        .backward_batch(c1, &t1, &pick1, &mut unused, true)?
        .unwrap();
    let g2 = critic
        .backward_batch(c2, &t2, &pick2, &mut unused, true)?
        .unwrap();

    let mut head_grad = vec![0.0f32; batch.size * 2 * ad];
    for b in 0..batch.size {
        for i in 0..ad {
            let k = b * ad + i;
            let a = sample.actions[k];
            let dq_da = g1[b * (sd + ad) + sd + i] + g2[b * (sd + ad) + sd + i];
            let one_minus_a2 = 1.0 - a * a;
            let se = sample.sigma[k] * eps[k];
            let g_mean = (alpha * 2.0 * a - dq_da * one_minus_a2) / n;
            let g_log_std = (alpha * (-1.0 + 2.0 * a * se) - dq_da * one_minus_a2 * se) / n;
            head_grad[b * 2 * ad + i] = g_mean;
            head_grad[b * 2 * ad + ad + i] = g_log_std * sample.dlogstd_draw[k];
        }
    }
    let mut grad = vec![0.0f32; agent.theta.len()];
    actor.backward_batch(&agent.theta, &tape, &head_grad, &mut grad, false)?;
    Ok((loss, grad, sample.log_probs))
}

/// Temperature loss `-mean(alpha (log pi + target_entropy))` and its derivative
/// with respect to `log_alpha`; `log_probs` are treated as constants.
pub fn alpha_loss(log_alpha: f32, log_probs: &[f32], target_entropy: f32) -> (f32, f32) {
    let alpha = log_alpha.exp();
    let mean = log_probs.iter().map(|lp| lp + target_entropy).sum::<f32>() / log_probs.len() as f32;
    (-alpha * mean, -alpha * mean)
}

/// One SAC update in place: critics, then actor, then temperature, then targets.
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
    let ad = agent.layout.action_dim;
    let batch = buffer.sample(batch_size, rng)?;
    let next_eps = standard_normals(batch.size * ad, rng);
    let eps = standard_normals(batch.size * ad, rng);
    let backup = (agent.clone(), state.clone());
    let mut diag = TrainDiagnostics::default();

    let (closs, cgrad) = critic_loss(agent, &batch, &next_eps)?;
    let c_len = cgrad.len();
    let critic_lr = agent.hyper(names::CRITIC_LR) as f32;
    let mut ok = state
        .critic_opt
        .step(&mut agent.phi[..c_len], &cgrad, critic_lr)?;
    diag.critic_loss = Some(closs);

    if ok {
        let (aloss, agrad, log_probs) = actor_loss(agent, &batch, &eps)?;
        let policy_lr = agent.hyper(names::POLICY_LR) as f32;
        ok = state.actor_opt.step(&mut agent.theta, &agrad, policy_lr)?;
        diag.actor_loss = Some(aloss);

        let alpha_lr = agent.hyper(names::ALPHA_LR) as f32;
        let log_alpha = agent.block(PhiBlock::LogAlpha)[0];
        let (lloss, lgrad) = alpha_loss(log_alpha, &log_probs, target_entropy(ad));
        ok &= state
            .alpha_opt
            .step(agent.block_mut(PhiBlock::LogAlpha), &[lgrad], alpha_lr)?;
        diag.alpha_loss = Some(lloss);
    }

    let tau = agent.hyper(names::TAU) as f32;
    for (target, source) in [
        (PhiBlock::TargetCritic1, PhiBlock::Critic1),
        (PhiBlock::TargetCritic2, PhiBlock::Critic2),
    ] {
        let src = agent.block(source).to_vec();
        polyak_update(agent.block_mut(target), &src, tau);
    }
    state.updates += 1;

    if !ok || !agent.is_finite() {
        (*agent, *state) = backup;
        diag.skipped = Some(SkipReason::NonFiniteGradient);
        log::warn!("sac update produced non-finite values; update discarded");
    }
    diag.alpha = Some(agent.alpha());
    Ok(diag)
}

/// Pure SAC step: returns the updated agent and optimizer state.
pub fn sac_train_step<R: rand::Rng + ?Sized>(
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::{AgentLayout, Algo, HyperparamSchema};
    use crate::rng::{self, Stream};

    fn agent() -> Agent {
        let h = HyperparamSchema::sac().sample(&mut rng::stream(0, Stream::Hyperparams, 0));
        let layout = AgentLayout::new(Algo::Sac, 2, 1, vec![8, 8]).unwrap();
        Agent::initialize(layout, h, &mut rng::stream(0, Stream::ParamInit, 0))
    }

    #[test]
    fn zero_learning_rates_freeze_everything() {
        let mut a = agent();
        for n in [names::POLICY_LR, names::CRITIC_LR, names::ALPHA_LR] {
            a.h.insert(n.into(), 0.0);
        }
        a.h.insert(names::BATCH_SIZE.into(), 4.0);
        let mut buf = ReplayBuffer::new(16, 2, 1);
        for k in 0..8 {
            let x = k as f32 * 0.1;
            buf.push_parts(&[x, -x], &[0.2], 1.0, &[x + 0.1, -x], k == 7)
                .unwrap();
        }
        let before = a.clone();
        let mut state = TrainState::new(&a.layout);
        let mut rng = rng::stream(1, Stream::Slot, 0);
        for _ in 0..5 {
            let d = update(&mut a, &mut state, &buf, &mut rng).unwrap();
            assert!(d.critic_loss.unwrap().is_finite());
            assert!(d.skipped.is_none());
            assert_eq!(d.alpha, Some(1.0));
        }
        assert_eq!(a, before);
    }

    #[test]
    fn sampled_log_prob_matches_closed_form() {
        let head = [0.3f32, -0.4];
        let eps = [0.7f32];
        let s = sample_policy(&head, &eps, 1);
        let log_std = squash_log_std(-0.4) as f64;
        let want = squashed_gaussian_log_prob(0.3, log_std, s.actions[0] as f64);
        assert!((s.log_probs[0] as f64 - want).abs() < 1e-4);
    }

    #[test]
    fn squashed_density_integrates_to_one() {
        // Midpoint rule in u-space maps onto the whole open action interval.
        let (mean, log_std) = (0.4, -0.3f64);
        let n = 200_000;
        let (lo, hi) = (-12.0f64, 12.0f64);
        let du = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let u = lo + (i as f64 + 0.5) * du;
            let a = u.tanh();
            if a.abs() >= 1.0 {
                continue;
            }
            total += squashed_gaussian_log_prob(mean, log_std, a).exp() * (1.0 - a * a) * du;
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }
}
