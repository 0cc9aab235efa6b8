//! Isoline variation over flat parameter vectors and whole agents.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rl::Agent;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsolineParams {
    pub sigma1: f64,
    pub sigma2: f64,
}

impl IsolineParams {
    pub fn new(sigma1: f64, sigma2: f64) -> Result<Self> {
        for (key, v) in [
            ("variation.iso_sigma", sigma1),
            ("variation.line_sigma", sigma2),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    key,
                    format!("{v} is not a finite non-negative number"),
                ));
            }
        }
        Ok(IsolineParams { sigma1, sigma2 })
    }
}

/// `p1 + sigma1 * eps + u * (p2 - p1)` with independent standard normals
/// `eps` and one scalar `u ~ N(0, sigma2^2)` shared by every coordinate.
/// Terms that are exactly zero are skipped, so degenerate settings return
/// `p1` bit for bit.
pub fn isoline<R: rand::Rng + ?Sized>(
    p1: &[f32],
    p2: &[f32],
    params: IsolineParams,
    rng: &mut R,
) -> Result<Vec<f32>> {
    if p1.len() != p2.len() {
        return Err(Error::contract(format!(
            "isoline parents have lengths {} and {}",
            p1.len(),
            p2.len()
        )));
    }
    let z: f64 = StandardNormal.sample(rng);
    let u = params.sigma2 * z;
    Ok(p1
        .iter()
        .zip(p2)
        .map(|(&a, &b)| {
            let mut x = f64::from(a);
            if params.sigma1 > 0.0 {
                let eps: f64 = StandardNormal.sample(rng);
                x += params.sigma1 * eps;
            }
            let d = f64::from(b) - f64::from(a);
            if u != 0.0 && d != 0.0 {
                x += u * d;
            }
            x as f32
        })
        .collect())
}

/// One offspring per pair: `theta` and `phi` are varied as a single vector,
/// hyperparameters are copied from the first parent.
pub fn vary_agents<R: rand::Rng + ?Sized>(
    pairs: &[(&Agent, &Agent)],
    params: IsolineParams,
    rng: &mut R,
) -> Result<Vec<Agent>> {
    pairs
        .iter()
        .map(|&(a, b)| {
            if a.layout != b.layout
                || a.theta.len() != b.theta.len()
                || a.phi.len() != b.phi.len()
                || !a.h.keys().eq(b.h.keys())
            {
                return Err(Error::contract("variation parents differ in structure"));
            }
            let child = isoline(&a.concat_params(), &b.concat_params(), params, rng)?;
            let (theta, phi) = child.split_at(a.theta.len());
            Ok(Agent {
                layout: a.layout.clone(),
                theta: theta.to_vec(),
                phi: phi.to_vec(),
                h: a.h.clone(),
            })
        })
        .collect()
}
