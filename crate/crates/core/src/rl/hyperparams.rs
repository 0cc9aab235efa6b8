//! Hyperparameter schemas and sampling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Algo;
use crate::error::{Error, Result};

pub type Hyperparams = BTreeMap<String, f64>;

pub mod names {
    pub const DISCOUNT: &str = "discount";
    pub const POLICY_LR: &str = "policy_lr";
    pub const CRITIC_LR: &str = "critic_lr";
    pub const ALPHA_LR: &str = "alpha_lr";
    pub const REWARD_SCALE: &str = "reward_scale";
    pub const NOISE_CLIP: &str = "noise_clip";
    pub const POLICY_NOISE: &str = "policy_noise";
    pub const EXPLORATION_NOISE: &str = "exploration_noise";
    pub const TAU: &str = "tau";
    pub const ALPHA_INIT: &str = "alpha_init";
    pub const BATCH_SIZE: &str = "batch_size";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperparamRange {
    Range { low: f64, high: f64, scale: Scale },
    Fixed { value: f64 },
}

impl HyperparamRange {
    pub fn linear(low: f64, high: f64) -> Self {
        HyperparamRange::Range {
            low,
            high,
            scale: Scale::Linear,
        }
    }

    pub fn log(low: f64, high: f64) -> Self {
        HyperparamRange::Range {
            low,
            high,
            scale: Scale::Log,
        }
    }

    pub fn fixed(value: f64) -> Self {
        HyperparamRange::Fixed { value }
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            HyperparamRange::Range { low, high, .. } => x >= low && x <= high,
            HyperparamRange::Fixed { value } => x == value,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            HyperparamRange::Range { low, high, scale } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::config(
                        format!("hyperparams.{name}"),
                        format!("range [{low}, {high}] is empty or non-finite"),
                    ));
                }
                if scale == Scale::Log && low <= 0.0 {
                    return Err(Error::config(
                        format!("hyperparams.{name}"),
                        "log-scale ranges need a positive lower bound",
                    ));
                }
            }
            HyperparamRange::Fixed { value } => {
                if !value.is_finite() {
                    return Err(Error::config(
                        format!("hyperparams.{name}"),
                        "value is not finite",
                    ));
                }
            }
        }
        Ok(())
    }

    fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            HyperparamRange::Fixed { value } => value,
            HyperparamRange::Range { low, high, scale } => {
                let x = match scale {
                    Scale::Linear => rng.random_range(low..high),
                    Scale::Log => rng.random_range(low.ln()..high.ln()).exp(),
                };
                x.clamp(low, high)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSpec {
    pub name: String,
    pub range: HyperparamRange,
}

/// Ordered list of hyperparameters for one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSchema {
    pub algo: Algo,
    pub entries: Vec<HyperparamSpec>,
}

impl HyperparamSchema {
    /// TD3 ranges; learning rates sampled log-uniformly.
    pub fn td3() -> Self {
        use names::*;
        Self::from_pairs(
            Algo::Td3,
            &[
                (DISCOUNT, HyperparamRange::linear(0.9, 1.0)),
                (POLICY_LR, HyperparamRange::log(3e-5, 3e-3)),
                (CRITIC_LR, HyperparamRange::log(3e-5, 3e-3)),
                (NOISE_CLIP, HyperparamRange::linear(0.0, 1.0)),
                (POLICY_NOISE, HyperparamRange::linear(0.0, 1.0)),
                (EXPLORATION_NOISE, HyperparamRange::linear(0.0, 0.2)),
                (TAU, HyperparamRange::fixed(0.005)),
                (BATCH_SIZE, HyperparamRange::fixed(256.0)),
            ],
        )
    }

    /// SAC ranges; learning rates sampled log-uniformly.
    pub fn sac() -> Self {
        use names::*;
        Self::from_pairs(
            Algo::Sac,
            &[
                (DISCOUNT, HyperparamRange::linear(0.9, 1.0)),
                (POLICY_LR, HyperparamRange::log(3e-5, 3e-3)),
                (CRITIC_LR, HyperparamRange::log(3e-5, 3e-3)),
                (ALPHA_LR, HyperparamRange::log(3e-5, 3e-3)),
                (REWARD_SCALE, HyperparamRange::linear(0.1, 10.0)),
                (TAU, HyperparamRange::fixed(0.005)),
                (ALPHA_INIT, HyperparamRange::fixed(1.0)),
                (BATCH_SIZE, HyperparamRange::fixed(256.0)),
            ],
        )
    }

    pub fn for_algo(algo: Algo) -> Self {
        match algo {
            Algo::Td3 => Self::td3(),
            Algo::Sac => Self::sac(),
        }
    }

    fn from_pairs(algo: Algo, pairs: &[(&str, HyperparamRange)]) -> Self {
        HyperparamSchema {
            algo,
            entries: pairs
                .iter()
                .map(|(n, r)| HyperparamSpec {
                    name: (*n).to_string(),
                    range: *r,
                })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&HyperparamRange> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.range)
    }

    /// Replaces the range of an existing hyperparameter.
    pub fn set(&mut self, name: &str, range: HyperparamRange) -> Result<()> {
        range.validate(name)?;
        match self.entries.iter_mut().find(|e| e.name == name) {
            Some(e) => {
                e.range = range;
                Ok(())
            }
            None => Err(Error::config(
                format!("hyperparams.{name}"),
                format!("not a {} hyperparameter", self.algo),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let required = Self::for_algo(self.algo);
        for req in &required.entries {
            let count = self.entries.iter().filter(|e| e.name == req.name).count();
            if count != 1 {
                return Err(Error::config(
                    format!("hyperparams.{}", req.name),
                    format!("must appear exactly once, found {count}"),
                ));
            }
        }
        if self.entries.len() != required.entries.len() {
            return Err(Error::config("hyperparams", "schema holds unknown entries"));
        }
        for e in &self.entries {
            e.range.validate(&e.name)?;
        }
        if let Some(HyperparamRange::Fixed { value }) = self.get(names::BATCH_SIZE) {
            if *value < 1.0 || value.fract() != 0.0 {
                return Err(Error::config(
                    "hyperparams.batch_size",
                    "must be a positive integer",
                ));
            }
        } else {
            return Err(Error::config(
                "hyperparams.batch_size",
                "must be a fixed value",
            ));
        }
        Ok(())
    }

    /// Names of the hyperparameters that are sampled from a range.
    pub fn ranged_names(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| matches!(e.range, HyperparamRange::Range { .. }))
            .map(|e| e.name.as_str())
    }

    /// Draws every ranged hyperparameter independently; fixed values are copied.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Hyperparams {
        self.entries
            .iter()
            .map(|e| (e.name.clone(), e.range.sample(rng)))
            .collect()
    }

    /// Checks that `h` names exactly the schema's hyperparameters, each in range.
    pub fn check(&self, h: &Hyperparams) -> Result<()> {
        if h.len() != self.entries.len() {
            return Err(Error::contract(format!(
                "hyperparameter set has {} entries, schema has {}",
                h.len(),
                self.entries.len()
            )));
        }
        for e in &self.entries {
            match h.get(&e.name) {
                None => {
                    return Err(Error::contract(format!(
                        "missing hyperparameter {}",
                        e.name
                    )))
                }
                Some(&x) if !e.range.contains(x) => {
                    return Err(Error::contract(format!(
                        "hyperparameter {} = {x} outside {:?}",
                        e.name, e.range
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Typed view over a hyperparameter map.
pub(crate) fn get(h: &Hyperparams, name: &str) -> f64 {
    *h.get(name)
        .unwrap_or_else(|| panic!("hyperparameter `{name}` missing from a validated agent"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Stream};

    #[test]
    fn td3_samples_stay_in_range() {
        let schema = HyperparamSchema::td3();
        let mut rng = rng::stream(0, Stream::Hyperparams, 0);
        for _ in 0..2000 {
            let h = schema.sample(&mut rng);
            schema.check(&h).unwrap();
            let g = h[names::DISCOUNT];
            assert!((0.9..=1.0).contains(&g));
            assert!((0.0..=0.2).contains(&h[names::EXPLORATION_NOISE]));
            assert_eq!(h[names::TAU], 0.005);
            assert_eq!(h[names::BATCH_SIZE], 256.0);
        }
    }

    #[test]
    fn all_fixed_schema_is_deterministic() {
        let mut schema = HyperparamSchema::td3();
        for e in schema.entries.iter_mut() {
            e.range = HyperparamRange::fixed(0.5);
        }
        let a = schema.sample(&mut rng::stream(1, Stream::Hyperparams, 0));
        let b = schema.sample(&mut rng::stream(2, Stream::Hyperparams, 9));
        assert_eq!(a, b);
    }

    #[test]
    fn discount_mean_is_uniform() {
        let schema = HyperparamSchema::sac();
        let mut rng = rng::stream(3, Stream::Hyperparams, 0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| schema.sample(&mut rng)[names::DISCOUNT])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.95).abs() < 0.001, "{mean}");
    }

    #[test]
    fn log_scale_is_uniform_in_log_space() {
        let schema = HyperparamSchema::td3();
        let mut rng = rng::stream(4, Stream::Hyperparams, 0);
        let n = 50_000;
        let mean_log: f64 = (0..n)
            .map(|_| schema.sample(&mut rng)[names::POLICY_LR].ln())
            .sum::<f64>()
            / n as f64;
        let expected = 0.5 * (3e-5f64.ln() + 3e-3f64.ln());
        assert!((mean_log - expected).abs() < 0.02);
    }

    #[test]
    fn override_validation() {
        let mut schema = HyperparamSchema::td3();
        assert!(schema.set("alpha_lr", HyperparamRange::fixed(1.0)).is_err());
        assert!(schema
            .set(names::DISCOUNT, HyperparamRange::linear(1.0, 0.9))
            .is_err());
        assert!(schema
            .set(names::POLICY_LR, HyperparamRange::log(0.0, 1.0))
            .is_err());
        schema
            .set(names::BATCH_SIZE, HyperparamRange::fixed(64.0))
            .unwrap();
        schema.validate().unwrap();
        schema
            .set(names::BATCH_SIZE, HyperparamRange::fixed(6.5))
            .unwrap();
        assert!(schema.validate().is_err());
    }
}
