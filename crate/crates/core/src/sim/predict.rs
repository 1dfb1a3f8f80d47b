use std::collections::BTreeMap;

use super::{CrowdModel, ParamTable, ReactionModel};
use crate::agent::{AgentId, AgentKind, CrowdState, WorldGeometry};
use crate::error::{Error, Result};
use crate::geometry::{unit_or_zero, Vec2};

/// How goals are chosen for the rollout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GoalPolicy {
    /// Use each agent's recorded goal.
    Known,
    /// Extend the current velocity direction by `distance` metres; agents at
    /// rest keep their position as goal.
    Extrapolate { distance: f64 },
}

impl GoalPolicy {
    pub const EXTRAPOLATE: GoalPolicy = GoalPolicy::Extrapolate { distance: 1000.0 };
}

/// Predicted pedestrian positions after each future step.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub horizon: f64,
    pub dt: f64,
    pub positions: BTreeMap<AgentId, Vec<Vec2>>,
    pub radii: BTreeMap<AgentId, f64>,
}

impl Prediction {
    pub fn steps(&self) -> usize {
        self.positions.values().next().map_or(0, Vec::len)
    }

    /// Position of `id` after `step + 1` steps.
    pub fn at(&self, id: AgentId, step: usize) -> Option<Vec2> {
        self.positions.get(&id).and_then(|p| p.get(step)).copied()
    }

    pub fn empty(horizon: f64, dt: f64) -> Self {
        Self {
            horizon,
            dt,
            positions: BTreeMap::new(),
            radii: BTreeMap::new(),
        }
    }
}

/// Rolls the motion model forward `horizon` seconds with `fitted` parameters
/// and the agents' known goals.
pub fn predict(
    crowd: &CrowdState,
    fitted: &ParamTable,
    world: &WorldGeometry,
    horizon: f64,
    dt: f64,
) -> Result<Prediction> {
    let model = CrowdModel::new(fitted.clone(), world.clone(), dt);
    predict_with(&model, crowd, horizon, GoalPolicy::Known)
}

/// Prediction with full model control (groups, safety margin, goal policy).
pub fn predict_with(model: &CrowdModel, crowd: &CrowdState, horizon: f64, policy: GoalPolicy) -> Result<Prediction> {
    if crowd.robots().next().is_some() {
        return Err(Error::input("crowd contains robots; use predict_around_robots"));
    }
    rollout(model, crowd, horizon, policy, None)
}

/// Pedestrian prediction in the presence of robots that keep their current
/// velocity, optionally with the group reaction at a fixed invisibility.
pub fn predict_around_robots(
    model: &CrowdModel,
    crowd: &CrowdState,
    horizon: f64,
    policy: GoalPolicy,
    reaction: Option<(ReactionModel, f64)>,
) -> Result<Prediction> {
    rollout(model, crowd, horizon, policy, reaction)
}

fn rollout(
    model: &CrowdModel,
    crowd: &CrowdState,
    horizon: f64,
    policy: GoalPolicy,
    reaction: Option<(ReactionModel, f64)>,
) -> Result<Prediction> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::input(format!("horizon must be positive, got {horizon}")));
    }
    let steps = (horizon / model.dt).round() as usize;
    let mut state = crowd.clone();
    if let GoalPolicy::Extrapolate { distance } = policy {
        for a in state.agents.iter_mut().filter(|a| a.kind == AgentKind::Pedestrian) {
            a.goal = a.position + unit_or_zero(a.current_velocity) * distance;
        }
    }
    let robot_v: BTreeMap<AgentId, Vec2> = state.robots().map(|r| (r.id, r.current_velocity)).collect();
    let mut positions: BTreeMap<AgentId, Vec<Vec2>> = state
        .pedestrians()
        .map(|a| (a.id, Vec::with_capacity(steps)))
        .collect();
    let radii = state.pedestrians().map(|a| (a.id, a.radius)).collect();
    for _ in 0..steps {
        let disc = reaction.and_then(|(m, s)| m.disc(&state, s));
        let (next, _) = model.step(&state, &robot_v, disc)?;
        for a in next.pedestrians() {
            positions.get_mut(&a.id).expect("agent present").push(a.position);
        }
        state = next;
    }
    Ok(Prediction {
        horizon,
        dt: model.dt,
        positions,
        radii,
    })
}
