//! Sampling-based collision avoidance for car-like robots: candidate
//! (speed, turn-rate) controls are rolled out over the planning horizon and
//! checked against predicted pedestrians, other robots and obstacles.

use crate::agent::{AgentState, WorldGeometry};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec2};
use crate::sim::Prediction;

/// Unicycle limits plus the current heading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotDynamics {
    pub v_max: f64,
    pub v_min: f64,
    pub omega_max: f64,
    pub heading: f64,
}

impl Default for RobotDynamics {
    fn default() -> Self {
        Self {
            v_max: 2.2,
            v_min: 0.1,
            omega_max: 1.5,
            heading: 0.0,
        }
    }
}

impl RobotDynamics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.v_min >= 0.0
            && self.v_max > self.v_min
            && self.omega_max > 0.0
            && self.v_max.is_finite()
            && self.omega_max.is_finite()
            && self.heading.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!(
                "robot dynamics need 0 <= v_min < v_max and omega_max > 0 (got {self:?})"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GvoConfig {
    pub speed_samples: usize,
    pub turn_samples: usize,
    pub horizon: f64,
}

impl Default for GvoConfig {
    fn default() -> Self {
        Self {
            speed_samples: 11,
            turn_samples: 21,
            horizon: 3.0,
        }
    }
}

/// Speed and turn rate held for one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Control {
    pub speed: f64,
    pub turn_rate: f64,
}

impl Control {
    pub const STOP: Control = Control {
        speed: 0.0,
        turn_rate: 0.0,
    };
}

/// Disc moving at constant velocity (another robot).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MovingDisc {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GvoResult {
    pub control: Control,
    pub velocity: Vec2,
    pub heading: f64,
    /// Smallest predicted gap over the horizon at the robot's body radius.
    pub clearance: f64,
    /// False when only a colliding control remained.
    pub safe: bool,
}

/// Velocity after holding `c` for one step from `heading`.
pub fn control_velocity(heading: f64, c: Control, dt: f64) -> (Vec2, f64) {
    let h = wrap_angle(heading + c.turn_rate * dt);
    (Vec2::new(h.cos(), h.sin()) * c.speed, h)
}

/// Clearance every tracked control must keep; it absorbs the gap between
/// predicted and actual pedestrian motion.
pub const CLEARANCE_BUFFER: f64 = 0.1;

/// Candidate controls in a fixed order. Stop is the only candidate with
/// speed below `v_min`.
pub fn candidate_controls(dyn_: &RobotDynamics, preferred: Vec2, dt: f64, config: &GvoConfig) -> Vec<Control> {
    let mut out = Vec::with_capacity(config.speed_samples * config.turn_samples + 2);
    let ns = config.speed_samples.max(2);
    let nt = config.turn_samples.max(1) | 1;
    for i in 0..ns {
        let speed = dyn_.v_min + (dyn_.v_max - dyn_.v_min) * i as f64 / (ns - 1) as f64;
        for j in 0..nt {
            let turn_rate = if nt == 1 {
                0.0
            } else {
                -dyn_.omega_max + 2.0 * dyn_.omega_max * j as f64 / (nt - 1) as f64
            };
            out.push(Control { speed, turn_rate });
        }
    }
    let pref_speed = preferred.length();
    if pref_speed > 0.0 {
        let want = wrap_angle(preferred.y.atan2(preferred.x) - dyn_.heading);
        out.push(Control {
            speed: pref_speed.clamp(dyn_.v_min, dyn_.v_max),
            turn_rate: (want / dt).clamp(-dyn_.omega_max, dyn_.omega_max),
        });
    }
    out.push(Control::STOP);
    out
}

/// Smallest gap `distance − radii` along the straight rollout of velocity
/// `v` from `p`, at body radius `r`.
fn rollout_gap(
    p: Vec2,
    v: Vec2,
    r: f64,
    steps: usize,
    dt: f64,
    peds: &[(&[Vec2], f64)],
    others: &[MovingDisc],
    world: &WorldGeometry,
) -> f64 {
    let mut gap = f64::INFINITY;
    for k in 1..=steps {
        let t = k as f64 * dt;
        let q = p + v * t;
        if !world.bounds.contains(q) {
            return f64::NEG_INFINITY;
        }
        for (path, rj) in peds {
            let pj = path[(k - 1).min(path.len() - 1)];
            gap = gap.min(q.distance(pj) - r - rj);
        }
        for o in others {
            gap = gap.min(q.distance(o.position + o.velocity * t) - r - o.radius);
        }
        if !world.obstacles.is_empty() {
            gap = gap.min(world.obstacle_distance(q) - r);
        }
    }
    gap
}

/// Feasible control minimizing `‖v − preferred‖²`, preferring controls that
/// keep `personal_radius` clear, then ones keeping `CLEARANCE_BUFFER`. Ties
/// go to the larger clearance, then to candidate order. Stopping is chosen
/// only when `preferred` is zero or no moving control is feasible. With no
/// feasible control the one with the largest clearance is returned.
#[allow(clippy::too_many_arguments)]
pub fn gvo_select(
    robot: &AgentState,
    dynamics: &RobotDynamics,
    preferred: Vec2,
    personal_radius: f64,
    prediction: &Prediction,
    others: &[MovingDisc],
    world: &WorldGeometry,
    dt: f64,
    config: &GvoConfig,
) -> Result<GvoResult> {
    dynamics.validate()?;
    if !(dt > 0.0) || !preferred.is_finite() {
        return Err(Error::input("gvo needs dt > 0 and a finite preferred velocity"));
    }
    let steps = ((config.horizon / dt).round() as usize).max(1);
    let body = robot.radius;
    let personal_extra = (personal_radius - body).max(0.0);
    let p = robot.position;
    let reach = dynamics.v_max * config.horizon + body + personal_extra;
    let peds: Vec<(&[Vec2], f64)> = prediction
        .positions
        .iter()
        .filter(|(_, path)| !path.is_empty())
        .filter_map(|(id, path)| {
            let rj = prediction.radii.get(id).copied().unwrap_or(0.0);
            let near = path.iter().any(|q| q.distance(p) <= reach + rj);
            near.then_some((path.as_slice(), rj))
        })
        .collect();

    let candidates = candidate_controls(dynamics, preferred, dt, config);
    let scored: Vec<(Control, Vec2, f64, f64)> = candidates
        .iter()
        .map(|&c| {
            let (v, h) = control_velocity(dynamics.heading, c, dt);
            let gap = rollout_gap(p, v, body, steps, dt, &peds, others, world);
            (c, v, h, gap)
        })
        .collect();

    let stop_allowed_first = preferred == Vec2::ZERO;
    let cost = |v: Vec2| (v - preferred).length_squared();
    let pick = |min_gap: f64, moving_only: bool| -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, (c, v, _, gap)) in scored.iter().enumerate() {
            if *gap < min_gap || (moving_only && c.speed == 0.0) {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let (cb, gb) = (cost(scored[b].1), scored[b].3);
                    let ci = cost(*v);
                    if ci < cb - 1e-12 || ((ci - cb).abs() <= 1e-12 && *gap > gb) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best
    };
    let mut chosen = None;
    for tier in [personal_extra.max(CLEARANCE_BUFFER), CLEARANCE_BUFFER] {
        chosen = pick(tier, !stop_allowed_first).or_else(|| pick(tier, false));
        if chosen.is_some() {
            break;
        }
    }
    let (idx, safe) = match chosen {
        Some(i) => (i, true),
        None => {
            let i = (0..scored.len())
                .max_by(|&a, &b| scored[a].3.total_cmp(&scored[b].3).then(b.cmp(&a)))
                .expect("candidates are never empty");
            (i, scored[i].3 >= 0.0)
        }
    };
    let (control, velocity, heading, clearance) = scored[idx];
    let heading = if control.speed == 0.0 && control.turn_rate == 0.0 {
        dynamics.heading
    } else {
        heading
    };
    Ok(GvoResult {
        control,
        velocity,
        heading,
        clearance,
        safe,
    })
}
