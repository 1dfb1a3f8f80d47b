//! Maximum-a-posteriori fitting of one pedestrian's motion parameters from
//! an observed trajectory window.
//!
//! The agent is re-simulated open-loop over the window with the other
//! agents replayed from their observed tracks; the objective is the summed
//! squared position error plus `λ·‖θ − θ_prior‖²` in normalized parameter
//! units. Minimization is cyclic coordinate descent over the bounded box.

use super::{agent_velocity, RvoOptions, Trajectory, DEFAULT_SAFETY_MARGIN};
use crate::agent::{AgentKind, AgentState, CrowdState, GpField, GroupParams, MotionParams, WorldGeometry};
use crate::edm::ParamBounds;
use crate::error::{Error, Result};
use crate::geometry::{unit_or_zero, Vec2};

pub const MIN_WINDOW: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitConfig {
    pub lambda: f64,
    pub sweeps: usize,
    /// Grid points per coordinate before golden-section refinement.
    pub grid: usize,
    /// Frames used by callers that slice a longer track.
    pub window: usize,
    pub safety_margin: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            sweeps: 3,
            grid: 21,
            window: 20,
            safety_margin: DEFAULT_SAFETY_MARGIN,
        }
    }
}

/// Observation window plus the context needed to replay it.
#[derive(Clone, Copy, Debug)]
pub struct FitWindow<'a> {
    pub observed: &'a Trajectory,
    /// Position one frame before the window, for the initial velocity.
    pub previous: Option<Vec2>,
    /// Other agents' tracks over (at least) the same frames.
    pub context: &'a [Trajectory],
    /// Known goal; otherwise the observed heading is extended.
    pub goal: Option<Vec2>,
    pub world: &'a WorldGeometry,
    /// Seconds per frame step.
    pub dt: f64,
}

pub fn fit_agent_params(window: &FitWindow<'_>, prior: &MotionParams, config: &FitConfig) -> Result<MotionParams> {
    let n = window.observed.samples.len();
    if n < MIN_WINDOW {
        return Err(Error::InsufficientData {
            needed: MIN_WINDOW,
            got: n,
        });
    }
    window.observed.validate()?;
    if !(window.dt > 0.0) {
        return Err(Error::input("fit window dt must be positive"));
    }
    let prior_gp = GroupParams::from_motion_params(prior);
    prior_gp.validate()?;
    let bounds = ParamBounds::STANDARD;

    let objective = |gp: &GroupParams| -> f64 {
        let penalty: f64 = GpField::ALL
            .iter()
            .map(|f| ((gp.get(*f) - prior_gp.get(*f)) / bounds.scale[f.index()]).powi(2))
            .sum();
        replay_error(window, &prior.with_group_params(gp), config.safety_margin) + config.lambda * penalty
    };

    let mut current = prior_gp;
    let mut best = objective(&current);
    for _ in 0..config.sweeps {
        for field in GpField::ALL {
            let (lo, hi) = (field.min(), field.max());
            let eval = |x: f64| {
                let mut gp = current;
                gp.set(field, x);
                objective(&gp)
            };
            let mut arg = current.get(field);
            let mut val = best;
            let g = config.grid.max(2);
            for i in 0..g {
                let x = lo + (hi - lo) * i as f64 / (g - 1) as f64;
                let v = eval(x);
                if v < val {
                    val = v;
                    arg = x;
                }
            }
            let h = (hi - lo) / (g - 1) as f64;
            let (x, v) = golden_section(&eval, (arg - h).max(lo), (arg + h).min(hi), 1e-7 * (hi - lo));
            if v < val {
                val = v;
                arg = x;
            }
            current.set(field, arg);
            best = val;
        }
    }
    Ok(prior.with_group_params(&current))
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn context_velocity(t: &Trajectory, frame: u32, step: u32, dt: f64) -> Vec2 {
    let p = t.position_at(frame);
    let back = frame.checked_sub(step).and_then(|f| t.position_at(f));
    let fwd = t.position_at(frame + step);
    match (back, p, fwd) {
        (Some(b), Some(p), _) => (p - b) / dt,
        (None, Some(p), Some(f)) => (f - p) / dt,
        _ => Vec2::ZERO,
    }
}

/// Squared position error of an open-loop replay of the observed agent.
fn replay_error(window: &FitWindow<'_>, params: &MotionParams, margin: f64) -> f64 {
    let obs = &window.observed.samples;
    let step = window.observed.frame_step();
    let dt = window.dt;
    let first = obs[0].position;
    let last = obs[obs.len() - 1].position;
    let goal = window
        .goal
        .unwrap_or_else(|| last + unit_or_zero(last - first) * 1000.0);
    let mut pos = first;
    let mut vel = match window.previous {
        Some(prev) => (first - prev) / dt,
        None => (obs[1].position - first) / dt,
    };
    let opts = RvoOptions {
        safety_margin: margin,
        ..Default::default()
    };
    let me_id = window.observed.agent_id;
    let mut err = 0.0;
    for k in 0..obs.len() - 1 {
        let frame = obs[k].frame;
        let mut agents = Vec::with_capacity(window.context.len() + 1);
        let to_goal = goal - pos;
        let pref = if to_goal.length() <= params.pref_speed * dt {
            to_goal / dt
        } else {
            unit_or_zero(to_goal) * params.pref_speed
        };
        let me = AgentState {
            id: me_id,
            kind: AgentKind::Pedestrian,
            position: pos,
            current_velocity: vel,
            preferred_velocity: pref,
            radius: params.radius,
            goal,
        };
        agents.push(me);
        for t in window.context.iter().filter(|t| t.agent_id != me_id) {
            if let Some(p) = t.position_at(frame) {
                agents.push(AgentState {
                    id: t.agent_id,
                    kind: AgentKind::Pedestrian,
                    position: p,
                    current_velocity: context_velocity(t, frame, step, dt),
                    preferred_velocity: Vec2::ZERO,
                    radius: params.radius,
                    goal: p,
                });
            }
        }
        let crowd = CrowdState { agents, time: 0.0 };
        let (v, _) = agent_velocity(&crowd, &me, params, window.world, dt, &opts);
        pos += v * dt;
        vel = v;
        err += pos.distance_squared(obs[k + 1].position);
    }
    err
}
