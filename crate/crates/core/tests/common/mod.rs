//! Independent `f64` oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::ops::Range;

use pbt_map_elites::config::RunConfig;
use pbt_map_elites::nn::Activation;
use pbt_map_elites::repertoire::EliteRecord;
use pbt_map_elites::rl::hyperparams::names;
use pbt_map_elites::rl::{Agent, AgentLayout, Algo, Batch, HyperparamSchema, PhiBlock};
use pbt_map_elites::rng::{self, Rng, Stream};
use pbt_map_elites::tessellation::CentroidSet;
use rand::Rng as _;

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Identity => x,
        Activation::Relu => x.max(0.0),
        Activation::Tanh => x.tanh(),
    }
}

/// Straight-line MLP: per layer an `out x in` row-major weight block, then biases.
pub fn mlp(
    sizes: &[usize],
    hidden: Activation,
    output: Activation,
    params: &[f64],
    input: &[f64],
) -> Vec<f64> {
    assert_eq!(input.len(), sizes[0]);
    let mut x = input.to_vec();
    let mut off = 0;
    for l in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let a = if l + 2 == sizes.len() { output } else { hidden };
        x = (0..n_out)
            .map(|o| {
                act(
                    a,
                    b[o] + (0..n_in).map(|i| w[o * n_in + i] * x[i]).sum::<f64>(),
                )
            })
            .collect();
    }
    assert_eq!(off, params.len());
    x
}

/// An agent's parameters widened to `f64`, evaluated by hand.
#[derive(Clone)]
pub struct Wide<'a> {
    pub agent: &'a Agent,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl<'a> Wide<'a> {
    pub fn new(agent: &'a Agent) -> Self {
        Wide {
            agent,
            theta: agent.theta.iter().map(|&x| x as f64).collect(),
            phi: agent.phi.iter().map(|&x| x as f64).collect(),
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.agent.layout.state_dim, self.agent.layout.action_dim)
    }

    pub fn block(&self, b: PhiBlock) -> &[f64] {
        &self.phi[self.agent.layout.block_range(b)]
    }

    pub fn actor(&self, params: &[f64], s: &[f64]) -> Vec<f64> {
        let l = &self.agent.layout;
        let (out, activation) = match l.algo {
            Algo::Td3 => (l.action_dim, Activation::Tanh),
            Algo::Sac => (2 * l.action_dim, Activation::Identity),
        };
        let mut sizes = vec![l.state_dim];
        sizes.extend(&l.hidden);
        sizes.push(out);
        mlp(&sizes, l.hidden_activation, activation, params, s)
    }

    pub fn critic(&self, block: PhiBlock, s: &[f64], a: &[f64]) -> f64 {
        let l = &self.agent.layout;
        let mut sizes = vec![l.state_dim + l.action_dim];
        sizes.extend(&l.hidden);
        sizes.push(1);
        let input: Vec<f64> = s.iter().chain(a).copied().collect();
        mlp(
            &sizes,
            l.hidden_activation,
            Activation::Identity,
            self.block(block),
            &input,
        )[0]
    }

    pub fn alpha(&self) -> f64 {
        self.block(PhiBlock::LogAlpha)[0].exp()
    }

    /// Squashed-Gaussian action and its log-density for one state and one noise draw.
    pub fn sac_sample(&self, s: &[f64], eps: &[f32]) -> (Vec<f64>, f64) {
        let ad = self.agent.layout.action_dim;
        let head = self.actor(&self.theta, s);
        let mut action = Vec::with_capacity(ad);
        let mut log_prob = 0.0;
        for i in 0..ad {
            let log_std = -5.0 + 3.5 * (head[ad + i].tanh() + 1.0);
            let sigma = log_std.exp();
            let u = head[i] + sigma * eps[i] as f64;
            let a = u.tanh();
            let z = (u - head[i]) / sigma;
            // log(1 - tanh(u)^2) = -2 log cosh(u)
            let log_cosh = u.abs() + (-2.0 * u.abs()).exp().ln_1p() - std::f64::consts::LN_2;
            log_prob += -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
                + 2.0 * log_cosh;
            action.push(a);
        }
        (action, log_prob)
    }
}

fn row(data: &[f32], b: usize, width: usize) -> Vec<f64> {
    data[b * width..(b + 1) * width]
        .iter()
        .map(|&x| x as f64)
        .collect()
}

pub fn td3_critic_loss(w: &Wide, batch: &Batch, noise: &[f32]) -> f64 {
    let (sd, ad) = w.dims();
    let gamma = w.agent.hyper(names::DISCOUNT);
    let n = batch.size as f64;
    let mut loss = 0.0;
    for b in 0..batch.size {
        let (s, a, s2) = (
            row(&batch.states, b, sd),
            row(&batch.actions, b, ad),
            row(&batch.next_states, b, sd),
        );
        let a2: Vec<f64> = w
            .actor(w.block(PhiBlock::TargetActor), &s2)
            .iter()
            .zip(&noise[b * ad..(b + 1) * ad])
            .map(|(m, &e)| (m + e as f64).clamp(-1.0, 1.0))
            .collect();
        let q_next = w.critic(PhiBlock::TargetCritic1, &s2, &a2).min(w.critic(
            PhiBlock::TargetCritic2,
            &s2,
            &a2,
        ));
        let y = batch.rewards[b] as f64 + gamma * (1.0 - batch.dones[b] as f64) * q_next;
        for c in [PhiBlock::Critic1, PhiBlock::Critic2] {
            let q = w.critic(c, &s, &a);
            loss += (q - y) * (q - y) / n;
        }
    }
    loss
}

pub fn td3_actor_loss(w: &Wide, batch: &Batch) -> f64 {
    let (sd, _) = w.dims();
    let mut total = 0.0;
    for b in 0..batch.size {
        let s = row(&batch.states, b, sd);
        let a = w.actor(&w.theta, &s);
        total += w.critic(PhiBlock::Critic1, &s, &a);
    }
    -total / batch.size as f64
}

pub fn sac_critic_loss(w: &Wide, batch: &Batch, next_eps: &[f32]) -> f64 {
    let (sd, ad) = w.dims();
    let gamma = w.agent.hyper(names::DISCOUNT);
    let scale = w.agent.hyper(names::REWARD_SCALE);
    let n = batch.size as f64;
    let mut loss = 0.0;
    for b in 0..batch.size {
        let (s, a, s2) = (
            row(&batch.states, b, sd),
            row(&batch.actions, b, ad),
            row(&batch.next_states, b, sd),
        );
        let (a2, lp2) = w.sac_sample(&s2, &next_eps[b * ad..(b + 1) * ad]);
        let v = w.critic(PhiBlock::TargetCritic1, &s2, &a2).min(w.critic(
            PhiBlock::TargetCritic2,
            &s2,
            &a2,
        )) - w.alpha() * lp2;
        let y = scale * batch.rewards[b] as f64 + gamma * (1.0 - batch.dones[b] as f64) * v;
        for c in [PhiBlock::Critic1, PhiBlock::Critic2] {
            let q = w.critic(c, &s, &a);
            loss += (q - y) * (q - y) / n;
        }
    }
    loss
}

pub fn sac_actor_loss(w: &Wide, batch: &Batch, eps: &[f32]) -> f64 {
    let (sd, ad) = w.dims();
    let mut total = 0.0;
    for b in 0..batch.size {
        let s = row(&batch.states, b, sd);
        let (a, lp) = w.sac_sample(&s, &eps[b * ad..(b + 1) * ad]);
        let q = w
            .critic(PhiBlock::Critic1, &s, &a)
            .min(w.critic(PhiBlock::Critic2, &s, &a));
        total += w.alpha() * lp - q;
    }
    total / batch.size as f64
}

pub fn sac_alpha_loss(log_alpha: f64, log_probs: &[f64], target_entropy: f64) -> f64 {
    let mean = log_probs.iter().map(|lp| lp + target_entropy).sum::<f64>() / log_probs.len() as f64;
    -log_alpha.exp() * mean
}

/// Central differences of `f` over the coordinates in `range`.
pub fn central_differences(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    range: Range<usize>,
    h: f64,
) -> Vec<f64> {
    let mut x = x.to_vec();
    range
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Agent on 2-4-1 critics (one state and one action coordinate) with smooth
/// hidden units and every parameter drawn uniformly from [-1, 1].
pub fn probe_agent(algo: Algo, rng: &mut Rng) -> Agent {
    let layout = AgentLayout::new(algo, 1, 1, vec![4])
        .unwrap()
        .with_hidden_activation(Activation::Tanh);
    let h = HyperparamSchema::for_algo(algo).sample(rng);
    let mut agent = Agent::initialize(layout, h, rng);
    for p in agent.theta.iter_mut().chain(agent.phi.iter_mut()) {
        *p = rng.random_range(-1.0..1.0);
    }
    agent
}

pub fn probe_batch(size: usize, sd: usize, ad: usize, rng: &mut Rng) -> Batch {
    let mut uniform = |n: usize| {
        (0..n)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect::<Vec<_>>()
    };
    let states = uniform(size * sd);
    let actions = uniform(size * ad);
    let rewards = uniform(size);
    let next_states = uniform(size * sd);
    let dones = (0..size).map(|b| (b % 3 == 0) as u8 as f32).collect();
    Batch {
        size,
        states,
        actions,
        rewards,
        next_states,
        dones,
    }
}

/// Best record per cell, ties kept by the first arrival, found by linear scans.
pub fn brute_force_archive(
    centroids: &CentroidSet,
    stream: &[(f64, Vec<f64>)],
) -> BTreeMap<usize, usize> {
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (k, (fitness, descriptor)) in stream.iter().enumerate() {
        let clipped = centroids.bounds().clip(descriptor);
        let cell = nearest_by_scan(centroids, &clipped);
        match best.get(&cell) {
            Some(&j) if stream[j].0 >= *fitness => {}
            _ => {
                best.insert(cell, k);
            }
        }
    }
    best
}

/// Lowest index among the closest centroids.
pub fn nearest_by_scan(centroids: &CentroidSet, point: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, c) in centroids.iter().enumerate() {
        let d: f64 = c.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

pub fn record(agent: &Agent, fitness: f64, descriptor: Vec<f64>) -> EliteRecord {
    EliteRecord {
        agent: agent.clone(),
        fitness,
        descriptor,
        steps_at_insertion: 0,
    }
}

/// End effector of an equal-link arm of total length one, by composing
/// unit rotations as complex numbers.
pub fn arm_tip(angles: &[f64]) -> (f64, f64) {
    let n = angles.len() as f64;
    let (mut re, mut im) = (1.0, 0.0);
    let (mut x, mut y) = (0.0, 0.0);
    for a in angles {
        let (c, s) = (a.cos(), a.sin());
        (re, im) = (re * c - im * s, re * s + im * c);
        x += re / n;
        y += im / n;
    }
    (x, y)
}

/// Constant full throttle along +x from the origin, integrated by hand on
/// the line `y = 0` where only the back of the pocket at `x = 1.5` matters.
pub fn maze_greedy_path() -> Vec<f64> {
    let (mut x, mut v) = (0.0f64, 0.0f64);
    let mut xs = Vec::with_capacity(100);
    for _ in 0..100 {
        v = (v + 0.1).min(0.5);
        if x + v > 1.5 {
            x = 1.5;
            v = 0.0;
        } else {
            x += v;
        }
        xs.push(x);
    }
    xs
}

pub fn seeded(seed: u64) -> Rng {
    rng::stream(seed, Stream::Slot, 999)
}

pub fn config(text: &str, overrides: &[&str]) -> RunConfig {
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    RunConfig::parse(text, &overrides).unwrap()
}

/// Worst relative error per loss between the library's gradient and central
/// differences of the `f64` oracle, for one random agent and batch.
pub fn gradient_probe(algo: Algo, seed: u64, step: f64, floor: f64) -> Vec<(&'static str, f64)> {
    use pbt_map_elites::rl::{sac, td3};
    let mut rng = seeded(seed);
    let agent = probe_agent(algo, &mut rng);
    let batch = probe_batch(8, 1, 1, &mut rng);
    let wide = Wide::new(&agent);
    let critics = 0..agent.layout.block_range(PhiBlock::Critic2).end;
    let worst = |analytic: &[f32], numeric: &[f64]| {
        assert_eq!(analytic.len(), numeric.len());
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| relative_error(a as f64, n, floor))
            .fold(0.0, f64::max)
    };
    let with_phi = |phi: &[f64]| Wide {
        phi: phi.to_vec(),
        ..wide.clone()
    };
    let with_theta = |theta: &[f64]| Wide {
        theta: theta.to_vec(),
        ..wide.clone()
    };
    match algo {
        Algo::Td3 => {
            let noise = td3::target_noise(&agent, batch.size, &mut rng);
            let (_, g) = td3::critic_loss(&agent, &batch, &noise).unwrap();
            let fd = central_differences(
                |p| td3_critic_loss(&with_phi(p), &batch, &noise),
                &wide.phi,
                critics,
                step,
            );
            let critic = worst(&g, &fd);
            let (_, g) = td3::actor_loss(&agent, &batch).unwrap();
            let fd = central_differences(
                |t| td3_actor_loss(&with_theta(t), &batch),
                &wide.theta,
                0..wide.theta.len(),
                step,
            );
            vec![("td3 critic", critic), ("td3 actor", worst(&g, &fd))]
        }
        Algo::Sac => {
            let next_eps = sac::standard_normals(batch.size, &mut rng);
            let eps = sac::standard_normals(batch.size, &mut rng);
            let (_, g) = sac::critic_loss(&agent, &batch, &next_eps).unwrap();
            let fd = central_differences(
                |p| sac_critic_loss(&with_phi(p), &batch, &next_eps),
                &wide.phi,
                critics,
                step,
            );
            let critic = worst(&g, &fd);
            let (_, g, _) = sac::actor_loss(&agent, &batch, &eps).unwrap();
            let fd = central_differences(
                |t| sac_actor_loss(&with_theta(t), &batch, &eps),
                &wide.theta,
                0..wide.theta.len(),
                step,
            );
            let actor = worst(&g, &fd);
            let log_probs: Vec<f64> = (0..batch.size)
                .map(|b| wide.sac_sample(&[batch.states[b] as f64], &eps[b..b + 1]).1)
                .collect();
            let log_probs32: Vec<f32> = log_probs.iter().map(|&x| x as f32).collect();
            let te = sac::target_entropy(1);
            let log_alpha = agent.block(PhiBlock::LogAlpha)[0];
            let (_, d) = sac::alpha_loss(log_alpha, &log_probs32, te);
            let fd = central_differences(
                |la| sac_alpha_loss(la[0], &log_probs, te as f64),
                &[log_alpha as f64],
                0..1,
                step,
            );
            vec![
                ("sac critic", critic),
                ("sac actor", actor),
                ("sac temperature", worst(&[d], &fd)),
            ]
        }
    }
}

pub fn maze_agent(seed: u64) -> Agent {
    let layout = AgentLayout::new(Algo::Td3, 4, 2, vec![4]).unwrap();
    let h = HyperparamSchema::td3().sample(&mut rng::stream(seed, Stream::Hyperparams, 0));
    Agent::initialize(layout, h, &mut rng::stream(seed, Stream::ParamInit, 0))
}

/// Streams `candidates` through a fresh archive, checking after every insert
/// that no cell's fitness dropped, coverage never shrank and the reported
/// outcome follows the strict-improvement rule; then compares the final
/// archive with the brute-force oracle. Returns the first violation.
pub fn check_archive_laws(
    centroids: std::sync::Arc<CentroidSet>,
    offset: f64,
    candidates: &[(f64, Vec<f64>)],
) -> Result<(), String> {
    use pbt_map_elites::repertoire::{InsertionOutcome, Repertoire};
    let agent = maze_agent(0);
    let mut rep = Repertoire::new(centroids.clone(), offset).map_err(|e| e.to_string())?;
    let mut fitness: Vec<Option<f64>> = vec![None; centroids.len()];
    let mut stored_from: BTreeMap<usize, usize> = BTreeMap::new();
    for (k, (f, d)) in candidates.iter().enumerate() {
        let cell = nearest_by_scan(&centroids, &centroids.bounds().clip(d));
        let before = rep.len();
        let outcome = rep
            .try_insert(record(&agent, *f, d.clone()))
            .map_err(|e| e.to_string())?;
        let expected = match fitness[cell] {
            None => InsertionOutcome::InsertedEmpty,
            Some(inc) if *f > inc => InsertionOutcome::ReplacedIncumbent,
            Some(_) => InsertionOutcome::Rejected,
        };
        if outcome != expected {
            return Err(format!(
                "candidate {k}: outcome {outcome:?}, expected {expected:?}"
            ));
        }
        if outcome.accepted() {
            fitness[cell] = Some(*f);
            stored_from.insert(cell, k);
        }
        if rep.len() < before {
            return Err(format!("candidate {k}: coverage shrank"));
        }
        for (c, r) in rep.records() {
            if fitness[c] != Some(r.fitness) {
                return Err(format!(
                    "candidate {k}: cell {c} holds {} instead of {:?}",
                    r.fitness, fitness[c]
                ));
            }
        }
    }
    let oracle = brute_force_archive(&centroids, candidates);
    let got: BTreeMap<usize, (f64, Vec<f64>)> = rep
        .records()
        .map(|(c, r)| (c, (r.fitness, r.descriptor.clone())))
        .collect();
    let want: BTreeMap<usize, (f64, Vec<f64>)> = oracle
        .iter()
        .map(|(&c, &k)| (c, candidates[k].clone()))
        .collect();
    if got != want {
        return Err("final archive differs from the best-per-cell oracle".into());
    }
    if stored_from != oracle {
        return Err("winning candidates differ from the oracle".into());
    }
    Ok(())
}

/// Candidates with descriptors from rollouts of random constant-per-segment
/// action sequences, fitness rounded to a coarse grid so ties occur.
pub fn rollout_candidates(
    env: &dyn pbt_map_elites::env::Environment,
    count: usize,
    seed: u64,
) -> Vec<(f64, Vec<f64>)> {
    let spec = env.spec();
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let mut actions = Vec::with_capacity(spec.episode_length);
            let mut a: Vec<f32> = vec![0.0; spec.action_dim];
            for t in 0..spec.episode_length {
                if t % 10 == 0 {
                    a = (0..spec.action_dim)
                        .map(|_| rng.random_range(-1.0f32..1.0))
                        .collect();
                }
                actions.push(a.clone());
            }
            let (ret, bd) = pbt_map_elites::env::simulate(env, &actions);
            ((ret * 4.0).round() / 4.0, bd)
        })
        .collect()
}

/// Small point-maze run: 32 cells, narrow networks.
pub const TINY_RUN: &str = r#"
preset = "desk"
seed = 3

[budget]
total = 30000

[population]
train_steps = 200
buffer_size = 2000

[tessellation]
num_cells = 32
init_points = 1000

[network]
hidden = [8, 8]

[hyperparams.batch_size]
value = 16
"#;

/// [`TINY_RUN`] for `runner` with 5 agents and 10 offspring where they apply.
pub fn tiny(runner: &str, extra: &[&str]) -> RunConfig {
    let mut overrides = vec![format!("runner=\"{runner}\"")];
    if runner != "map-elites" {
        overrides.push("population.size=5".into());
    }
    if runner != "pbt" {
        overrides.push("variation.offspring=10".into());
    }
    overrides.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::parse(TINY_RUN, &overrides).unwrap()
}

/// Metric rows without the wall-clock column.
pub fn series(
    rows: &[pbt_map_elites::orchestrator::MetricsRow],
) -> Vec<(u64, pbt_map_elites::repertoire::QdMetrics)> {
    rows.iter().map(|r| (r.budget_steps, r.metrics)).collect()
}
