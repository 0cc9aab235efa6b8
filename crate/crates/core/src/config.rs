//! Run configuration: TOML with one section per subsystem.
//!
//! Resolution order is runner defaults, then the optional preset, then the
//! file, then inline `section.key=value` overrides. Unknown keys are errors.
//! [`RunConfig::to_toml`] writes every field, so the echo parses back to the
//! same configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::env::{EnvName, EnvSpec};
use crate::error::{Error, Result};
use crate::rl::hyperparams::names;
use crate::rl::{AgentLayout, Algo, HyperparamRange, HyperparamSchema};
use crate::variation::IsolineParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Runner {
    #[serde(rename = "pbt-me")]
    PbtMe,
    #[serde(rename = "map-elites")]
    MapElites,
    #[serde(rename = "pbt")]
    Pbt,
}

impl fmt::Display for Runner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Runner::PbtMe => "pbt-me",
            Runner::MapElites => "map-elites",
            Runner::Pbt => "pbt",
        })
    }
}

impl FromStr for Runner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pbt-me" => Ok(Runner::PbtMe),
            "map-elites" => Ok(Runner::MapElites),
            "pbt" => Ok(Runner::Pbt),
            other => Err(Error::config("runner", format!("unknown runner `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    /// Total environment steps charged to the run.
    pub total: u64,
    /// Number of uniformly spaced repertoire snapshots.
    pub checkpoints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub size: usize,
    /// Bottom band replaced by truncation.
    pub worst_fraction: f64,
    /// Top band acting as donors.
    pub best_fraction: f64,
    /// Share of the population replaced by repertoire samples.
    pub repertoire_fraction: f64,
    /// Environment steps (and gradient steps) per agent per iteration.
    pub train_steps: u64,
    pub buffer_size: usize,
    /// Resample hyperparameters of agents injected from the repertoire.
    pub inject_resample_h: bool,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationConfig {
    pub offspring: usize,
    pub iso_sigma: f64,
    pub line_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TessellationConfig {
    pub num_cells: usize,
    pub init_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggingConfig {
    /// Record elapsed seconds in the metrics log. Off by default so that
    /// repeated runs produce identical files.
    pub log_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    pub runner: Runner,
    pub algo: Algo,
    pub env: EnvName,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub budget: BudgetConfig,
    pub population: PopulationConfig,
    pub variation: VariationConfig,
    pub tessellation: TessellationConfig,
    pub network: NetworkConfig,
    pub hyperparams: BTreeMap<String, HyperparamRange>,
    pub logging: LoggingConfig,
}

impl RunConfig {
    /// Resolved defaults before any file or override is applied.
    pub fn defaults(runner: Runner, algo: Algo, preset: Option<Preset>) -> Self {
        let (size, worst, repertoire_fraction, offspring) = match runner {
            Runner::PbtMe => (80, 0.2, 0.4, 240),
            Runner::Pbt => (80, 0.4, 0.0, 0),
            Runner::MapElites => (0, 0.0, 0.0, 1000),
        };
        let mut cfg = RunConfig {
            preset,
            runner,
            algo,
            env: EnvName::PointMazeTrap,
            seed: 0,
            output_dir: PathBuf::from("runs/latest"),
            budget: BudgetConfig {
                total: 2_000_000,
                checkpoints: 4,
            },
            population: PopulationConfig {
                size,
                worst_fraction: worst,
                best_fraction: if runner == Runner::MapElites {
                    0.0
                } else {
                    0.1
                },
                repertoire_fraction,
                train_steps: if runner == Runner::MapElites { 0 } else { 5000 },
                buffer_size: 100_000,
                inject_resample_h: false,
                parallel: false,
            },
            variation: VariationConfig {
                offspring,
                iso_sigma: 0.005,
                line_sigma: 0.05,
            },
            tessellation: TessellationConfig {
                num_cells: 1024,
                init_points: 50_000,
            },
            network: NetworkConfig {
                hidden: vec![64, 64],
            },
            hyperparams: HyperparamSchema::for_algo(algo)
                .entries
                .into_iter()
                .map(|e| (e.name, e.range))
                .collect(),
            logging: LoggingConfig {
                log_wall_time: false,
            },
        };
        match preset {
            None => {}
            Some(Preset::Paper) => {
                cfg.budget.total = 150_000_000;
                cfg.network.hidden = vec![256, 256];
            }
            Some(Preset::Desk) => {
                cfg.tessellation = TessellationConfig {
                    num_cells: 256,
                    init_points: 10_000,
                };
                if runner != Runner::MapElites {
                    cfg.population.size = 20;
                    cfg.population.train_steps = 500;
                }
                if runner != Runner::Pbt {
                    cfg.variation.offspring = 60;
                }
                cfg.hyperparams
                    .insert(names::BATCH_SIZE.to_string(), HyperparamRange::fixed(64.0));
            }
        }
        cfg
    }

    /// Parses a TOML document and applies `section.key=value` overrides.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut user: Table =
            toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        let runner = match user.get("runner") {
            Some(v) => enum_value::<Runner>(v, "runner")?,
            None => Runner::PbtMe,
        };
        let algo = match user.get("algo") {
            Some(v) => enum_value::<Algo>(v, "algo")?,
            None => Algo::Td3,
        };
        let preset = match user.get("preset") {
            Some(v) => Some(enum_value::<Preset>(v, "preset")?),
            None => None,
        };
        let defaults = RunConfig::defaults(runner, algo, preset);
        let mut base = Table::try_from(&defaults).expect("defaults serialize");
        base.insert("preset".into(), Value::String(String::new()));
        merge(&mut base, &user, "")?;
        if preset.is_none() {
            base.remove("preset");
        }
        let cfg: RunConfig = Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schema(&self) -> HyperparamSchema {
        let mut schema = HyperparamSchema::for_algo(self.algo);
        for e in schema.entries.iter_mut() {
            if let Some(r) = self.hyperparams.get(&e.name) {
                e.range = *r;
            }
        }
        schema
    }

    pub fn layout(&self, spec: &EnvSpec) -> AgentLayout {
        AgentLayout::new(
            self.algo,
            spec.state_dim,
            spec.action_dim,
            self.network.hidden.clone(),
        )
        .expect("validated network sizes")
    }

    pub fn isoline(&self) -> IsolineParams {
        IsolineParams::new(self.variation.iso_sigma, self.variation.line_sigma)
            .expect("validated sigmas")
    }

    pub fn batch_size(&self) -> usize {
        match self.hyperparams.get(names::BATCH_SIZE) {
            Some(HyperparamRange::Fixed { value }) => *value as usize,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed", "must fit in a signed 64-bit integer"));
        }
        if self.budget.total > i64::MAX as u64 {
            return Err(Error::config(
                "budget.total",
                "must fit in a signed 64-bit integer",
            ));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir", "must not be empty"));
        }

        let t = &self.tessellation;
        if t.num_cells == 0 {
            return Err(Error::config("tessellation.num_cells", "must be positive"));
        }
        if t.init_points < t.num_cells {
            return Err(Error::config(
                "tessellation.init_points",
                format!("{} points cannot seed {} cells", t.init_points, t.num_cells),
            ));
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(Error::config(
                "network.hidden",
                "needs at least one positive layer size",
            ));
        }

        for (name, range) in &self.hyperparams {
            if HyperparamSchema::for_algo(self.algo).get(name).is_none() {
                return Err(Error::config(
                    format!("hyperparams.{name}"),
                    format!("not a {} hyperparameter", self.algo),
                ));
            }
            let mut probe = HyperparamSchema::for_algo(self.algo);
            probe.set(name, *range)?;
        }
        self.schema().validate()?;

        IsolineParams::new(self.variation.iso_sigma, self.variation.line_sigma)?;
        let p = &self.population;
        for (key, v) in [
            ("population.worst_fraction", p.worst_fraction),
            ("population.best_fraction", p.best_fraction),
            ("population.repertoire_fraction", p.repertoire_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(
                    key,
                    format!("{v} is not a fraction in [0, 1]"),
                ));
            }
        }
        if p.worst_fraction + p.best_fraction + p.repertoire_fraction > 1.0 + 1e-12 {
            return Err(Error::config(
                "population.repertoire_fraction",
                "worst + best + repertoire fractions exceed 1",
            ));
        }

        match self.runner {
            Runner::MapElites => {
                if p.size != 0 {
                    return Err(Error::config(
                        "population.size",
                        "map-elites keeps no population; use 0",
                    ));
                }
                if self.variation.offspring == 0 {
                    return Err(Error::config(
                        "variation.offspring",
                        "map-elites needs at least one offspring",
                    ));
                }
            }
            Runner::Pbt => {
                if p.size == 0 {
                    return Err(Error::config(
                        "population.size",
                        "pbt needs at least one agent",
                    ));
                }
                if p.repertoire_fraction != 0.0 {
                    return Err(Error::config(
                        "population.repertoire_fraction",
                        "pbt never samples its repertoire",
                    ));
                }
                if self.variation.offspring != 0 {
                    return Err(Error::config(
                        "variation.offspring",
                        "pbt produces no offspring; use 0",
                    ));
                }
            }
            Runner::PbtMe => {
                if p.size == 0 && self.variation.offspring == 0 {
                    return Err(Error::config(
                        "variation.offspring",
                        "an empty population needs offspring",
                    ));
                }
            }
        }
        if p.size > 0 {
            if p.train_steps == 0 {
                return Err(Error::config("population.train_steps", "must be positive"));
            }
            let bands = crate::orchestrator::Bands::new(
                p.size,
                p.worst_fraction,
                p.best_fraction,
                p.repertoire_fraction,
            );
            if bands.worst > 0 && bands.best == 0 {
                return Err(Error::config(
                    "population.best_fraction",
                    "truncation needs a non-empty donor band",
                ));
            }
            if bands.best + bands.worst + bands.injected > p.size {
                return Err(Error::config(
                    "population.repertoire_fraction",
                    "bands overlap for this population size",
                ));
            }
            if p.buffer_size < self.batch_size() {
                return Err(Error::config(
                    "population.buffer_size",
                    "smaller than the batch size",
                ));
            }
        }
        Ok(())
    }
}

fn enum_value<T: FromStr<Err = Error>>(v: &Value, key: &str) -> Result<T> {
    match v {
        Value::String(s) => T::from_str(s),
        _ => Err(Error::config(key, "expected a string")),
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::config("preset", format!("unknown preset `{other}`"))),
        }
    }
}

fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like section.key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(path, "malformed key"));
    }
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::config(path, format!("`{k}` is not a section"))),
        };
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn merge(base: &mut Table, user: &Table, path: &str) -> Result<()> {
    for (k, v) in user {
        let key = if path.is_empty() {
            k.clone()
        } else {
            format!("{path}.{k}")
        };
        if path == "hyperparams" {
            if !base.contains_key(k) {
                return Err(Error::config(key, "unknown hyperparameter"));
            }
            let range: HyperparamRange = v
                .clone()
                .try_into()
                .map_err(|_| Error::config(&key, "expected {low, high, scale} or {value}"))?;
            base.insert(k.clone(), Value::try_from(range).expect("range serializes"));
            continue;
        }
        match base.get_mut(k) {
            None => return Err(Error::config(key, "unknown key")),
            Some(Value::Table(inner)) => match v {
                Value::Table(u) => merge(inner, u, &key)?,
                _ => return Err(Error::config(key, "expected a section")),
            },
            Some(slot) => *slot = coerce(slot, v, &key)?,
        }
    }
    Ok(())
}

/// Lets `2e6` stand for an integer setting and `0` for a float one.
fn coerce(current: &Value, new: &Value, key: &str) -> Result<Value> {
    Ok(match (current, new) {
        (Value::Integer(_), Value::Float(f)) => {
            if f.fract() == 0.0 && *f >= i64::MIN as f64 && *f < i64::MAX as f64 {
                Value::Integer(*f as i64)
            } else {
                return Err(Error::config(key, format!("{f} is not an integer")));
            }
        }
        (Value::Float(_), Value::Integer(i)) => Value::Float(*i as f64),
        (Value::Integer(_), Value::Integer(i)) if *i < 0 => {
            return Err(Error::config(key, format!("{i} must not be negative")));
        }
        (cur, new) if std::mem::discriminant(cur) != std::mem::discriminant(new) => {
            return Err(Error::config(key, format!("expected a {}", cur.type_str())));
        }
        (_, new) => new.clone(),
    })
}
