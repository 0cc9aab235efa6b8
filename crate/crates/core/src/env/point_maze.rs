//! Point mass in a walled arena with a U-shaped trap in front of the start.
//!
//! State is `(x, y, vx, vy)`. The action is an acceleration; velocity is
//! capped at [`MAX_SPEED`] and positions advance by one velocity per step.
//! Motion is resolved one axis at a time: x first, then y. A move that would
//! cross a wall face stops on the face and zeroes that velocity component.
//!
//! The per-step reward is the realized x displacement minus a small action
//! cost, so the return telescopes to the final x coordinate minus the total
//! action cost. Pushing straight along +x runs into the back of the trap.

use super::{clip_action, EnvName, EnvSpec, Environment};
use crate::tessellation::Bounds;

pub const ARENA: f64 = 5.0;
pub const MAX_SPEED: f64 = 0.5;
pub const ACCEL: f64 = 0.1;
pub const ACTION_COST: f64 = 0.01;
pub const EPISODE_LENGTH: usize = 100;

/// Axis-aligned solid block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct PointMazeTrap {
    spec: EnvSpec,
    walls: Vec<Wall>,
}

impl Default for PointMazeTrap {
    fn default() -> Self {
        Self::new()
    }
}

impl PointMazeTrap {
    pub fn new() -> Self {
        PointMazeTrap {
            spec: EnvSpec {
                name: EnvName::PointMazeTrap,
                state_dim: 4,
                action_dim: 2,
                episode_length: EPISODE_LENGTH,
                bd_dim: 2,
                bd_bounds: Bounds::unit(2),
                // Return = final x - action cost >= -ARENA - 2 * ACTION_COST * T = -7.
                fitness_offset: 51.0,
            },
            walls: vec![
                // back of the pocket
                Wall {
                    x: (1.5, 2.5),
                    y: (-1.0, 1.0),
                },
                // side arms, the pocket opens towards -x
                Wall {
                    x: (0.5, 1.5),
                    y: (1.0, 1.1),
                },
                Wall {
                    x: (0.5, 1.5),
                    y: (-1.1, -1.0),
                },
            ],
        }
    }

    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    /// Moves `pos` by `delta` along one axis, stopping at the first face crossed.
    /// `across` is the coordinate on the other axis. Returns the new position and
    /// whether the move was blocked.
    fn sweep(&self, pos: f64, delta: f64, across: f64, along_x: bool) -> (f64, bool) {
        let target = pos + delta;
        let mut stop = target;
        let mut blocked = false;
        for w in &self.walls {
            let (span, cross) = if along_x { (w.x, w.y) } else { (w.y, w.x) };
            if !(across > cross.0 && across < cross.1) {
                continue;
            }
            if delta > 0.0 && pos <= span.0 && target > span.0 && span.0 < stop {
                stop = span.0;
                blocked = true;
            } else if delta < 0.0 && pos >= span.1 && target < span.1 && span.1 > stop {
                stop = span.1;
                blocked = true;
            }
        }
        if stop > ARENA {
            (ARENA, true)
        } else if stop < -ARENA {
            (-ARENA, true)
        } else {
            (stop, blocked)
        }
    }
}

impl Environment for PointMazeTrap {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self) -> Vec<f64> {
        vec![0.0; 4]
    }

    fn step(&self, state: &[f64], action: &[f32]) -> (Vec<f64>, f64) {
        let a: Vec<f64> = clip_action(action).collect();
        let (x, y) = (state[0], state[1]);
        let mut vx = state[2] + ACCEL * a[0];
        let mut vy = state[3] + ACCEL * a[1];
        let speed = vx.hypot(vy);
        if speed > MAX_SPEED {
            vx *= MAX_SPEED / speed;
            vy *= MAX_SPEED / speed;
        }
        let (nx, hit_x) = self.sweep(x, vx, y, true);
        if hit_x {
            vx = 0.0;
        }
        let (ny, hit_y) = self.sweep(y, vy, nx, false);
        if hit_y {
            vy = 0.0;
        }
        let cost = ACTION_COST * (a[0] * a[0] + a[1] * a[1]);
        (vec![nx, ny, vx, vy], (nx - x) - cost)
    }

    fn observe(&self, state: &[f64]) -> Vec<f32> {
        vec![
            (state[0] / ARENA) as f32,
            (state[1] / ARENA) as f32,
            (state[2] / MAX_SPEED) as f32,
            (state[3] / MAX_SPEED) as f32,
        ]
    }

    fn descriptor(&self, final_state: &[f64]) -> Vec<f64> {
        final_state[..2]
            .iter()
            .map(|p| ((p + ARENA) / (2.0 * ARENA)).clamp(0.0, 1.0))
            .collect()
    }
}
