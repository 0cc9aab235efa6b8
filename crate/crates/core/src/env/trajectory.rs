//! Plain-text trajectory log.
//!
//! One line per step: `t s'_1 .. s'_n a_1 .. a_m r`, whitespace separated,
//! where `s'` is the raw environment state after the step. Floats are printed
//! in shortest round-trip form, so a parsed log reproduces the run bit for bit.

use std::fmt::Write as _;

use super::Environment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub t: usize,
    pub next_state: Vec<f64>,
    pub action: Vec<f32>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Descriptor of a complete episode, recomputed from its last logged state.
    pub fn descriptor(&self, env: &dyn Environment) -> Result<Vec<f64>> {
        let t = env.spec().episode_length;
        match self.steps.last() {
            Some(last) if self.steps.len() == t => Ok(env.descriptor(&last.next_state)),
            _ => Err(Error::contract(format!(
                "trajectory has {} steps, episode length is {t}",
                self.steps.len()
            ))),
        }
    }

    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            write!(out, "{}", s.t).unwrap();
            for v in &s.next_state {
                write!(out, " {v}").unwrap();
            }
            for v in &s.action {
                write!(out, " {v}").unwrap();
            }
            writeln!(out, " {}", s.reward).unwrap();
        }
        out
    }

    pub fn from_log(text: &str, state_dim: usize, action_dim: usize) -> Result<Self> {
        let mut steps = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line_no = k + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let want = 2 + state_dim + action_dim;
            if fields.len() != want {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("expected {want} fields, found {}", fields.len()),
                });
            }
            let bad = |what: &str, f: &str| Error::Parse {
                line: line_no,
                reason: format!("invalid {what} `{f}`"),
            };
            let t = fields[0]
                .parse::<usize>()
                .map_err(|_| bad("step index", fields[0]))?;
            if t != steps.len() {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("step index {t} out of sequence"),
                });
            }
            let next_state = fields[1..1 + state_dim]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad("state value", f)))
                .collect::<Result<Vec<_>>>()?;
            let action = fields[1 + state_dim..1 + state_dim + action_dim]
                .iter()
                .map(|f| f.parse::<f32>().map_err(|_| bad("action value", f)))
                .collect::<Result<Vec<_>>>()?;
            let last = fields[want - 1];
            let reward = last.parse::<f64>().map_err(|_| bad("reward", last))?;
            steps.push(TrajectoryStep {
                t,
                next_state,
                action,
                reward,
            });
        }
        Ok(Trajectory { steps })
    }
}
