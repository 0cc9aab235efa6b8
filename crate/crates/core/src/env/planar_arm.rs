//! Planar arm of equal links. The state is the vector of relative joint
//! angles; actions nudge every joint. The reward penalizes uneven joint
//! angles and the descriptor is the end-effector position.

use super::{clip_action, EnvName, EnvSpec, Environment};
use crate::tessellation::Bounds;

pub const LINKS: usize = 8;
pub const ANGLE_STEP: f64 = 0.1;
pub const EPISODE_LENGTH: usize = 10;

#[derive(Debug, Clone)]
pub struct PlanarArm {
    spec: EnvSpec,
}

impl Default for PlanarArm {
    fn default() -> Self {
        Self::new()
    }
}

impl PlanarArm {
    pub fn new() -> Self {
        PlanarArm {
            spec: EnvSpec {
                name: EnvName::PlanarArm,
                state_dim: LINKS,
                action_dim: LINKS,
                episode_length: EPISODE_LENGTH,
                bd_dim: 2,
                bd_bounds: Bounds::unit(2),
                // |angle| <= T * ANGLE_STEP = 1, so each step costs at most 1.
                fitness_offset: 10.0,
            },
        }
    }

    /// End-effector position of an arm of total length one.
    pub fn end_effector(angles: &[f64]) -> (f64, f64) {
        let link = 1.0 / angles.len() as f64;
        let mut phi = 0.0;
        let (mut x, mut y) = (0.0, 0.0);
        for a in angles {
            phi += a;
            x += link * phi.cos();
            y += link * phi.sin();
        }
        (x, y)
    }
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

impl Environment for PlanarArm {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self) -> Vec<f64> {
        vec![0.0; LINKS]
    }

    fn step(&self, state: &[f64], action: &[f32]) -> (Vec<f64>, f64) {
        let next: Vec<f64> = state
            .iter()
            .zip(clip_action(action))
            .map(|(s, a)| s + ANGLE_STEP * a)
            .collect();
        let reward = -population_std(&next);
        (next, reward)
    }

    fn observe(&self, state: &[f64]) -> Vec<f32> {
        state.iter().map(|&s| s as f32).collect()
    }

    fn descriptor(&self, final_state: &[f64]) -> Vec<f64> {
        let (x, y) = Self::end_effector(final_state);
        vec![
            ((x + 1.0) / 2.0).clamp(0.0, 1.0),
            ((y + 1.0) / 2.0).clamp(0.0, 1.0),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::simulate;

    #[test]
    fn straight_arm_points_along_x() {
        let env = PlanarArm::new();
        let (ret, bd) = simulate(&env, &vec![vec![0.0; LINKS]; EPISODE_LENGTH]);
        assert_eq!(ret, 0.0);
        assert!((bd[0] - 1.0).abs() < 1e-12 && (bd[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn equal_deltas_cost_nothing() {
        let env = PlanarArm::new();
        let (ret, _) = simulate(&env, &vec![vec![0.7; LINKS]; EPISODE_LENGTH]);
        assert!(ret.abs() < 1e-12);
    }
}
