//! Deterministic crowd simulation with a reciprocal-velocity motion model,
//! group cohesion, and the pedestrian reaction to robot groups.

mod fit;
mod orca;
mod predict;
mod trajectory;

pub use fit::{fit_agent_params, FitConfig, FitWindow};
pub use predict::{predict, predict_around_robots, predict_with, GoalPolicy, Prediction};
pub use trajectory::{Recording, Sample, Trajectory};

use std::collections::BTreeMap;
use std::time::Duration;

use rayon::prelude::*;

use crate::agent::{
    integrate, neighbors_of, AgentId, AgentKind, AgentState, CrowdState, MotionParams, WorldGeometry,
};
use crate::error::{Error, Result};
use crate::geometry::{closest_point_on_segment, unit_or_zero, Vec2};
use orca::{agent_line, boundary_line, Line, Party};

pub type ParamTable = BTreeMap<AgentId, MotionParams>;

/// Extra clearance added to every pairwise radius inside the velocity
/// solver; collision checks still use the true radii.
pub const DEFAULT_SAFETY_MARGIN: f64 = 0.02;

/// Preferred velocity blending the goal direction with attraction toward
/// the group centroid.
pub fn group_preferred_velocity(agent: &AgentState, group_centroid: Vec2, cohesion: f64, pref_speed: f64) -> Vec2 {
    let to_goal = unit_or_zero(agent.goal - agent.position);
    let to_centroid = unit_or_zero(group_centroid - agent.position);
    if to_centroid == Vec2::ZERO {
        return to_goal * pref_speed;
    }
    let blend = to_goal * (1.0 - cohesion) + to_centroid * cohesion;
    let dir = unit_or_zero(blend);
    if dir == Vec2::ZERO {
        return to_goal * pref_speed;
    }
    dir * pref_speed
}

/// Obstacle disc standing in for a robot group as pedestrians perceive it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReactionDisc {
    pub center: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

/// How strongly pedestrians keep away from a robot group: the group's
/// bounding radius is scaled from 1× at invisibility 1 to `max_scale`× at
/// invisibility 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReactionModel {
    pub max_scale: f64,
}

impl Default for ReactionModel {
    fn default() -> Self {
        Self { max_scale: 3.0 }
    }
}

impl ReactionModel {
    pub fn scale(&self, invisibility: f64) -> f64 {
        1.0 + (self.max_scale - 1.0) * (1.0 - invisibility.clamp(0.0, 1.0))
    }

    /// Disc around the robots of `crowd`, or `None` when there are none.
    pub fn disc(&self, crowd: &CrowdState, invisibility: f64) -> Option<ReactionDisc> {
        let robots: Vec<&AgentState> = crowd.robots().collect();
        if robots.is_empty() {
            return None;
        }
        let n = robots.len() as f64;
        let center = robots.iter().map(|r| r.position).sum::<Vec2>() / n;
        let velocity = robots.iter().map(|r| r.current_velocity).sum::<Vec2>() / n;
        let bounding = robots
            .iter()
            .map(|r| r.position.distance(center) + r.radius)
            .fold(0.0, f64::max);
        Some(ReactionDisc {
            center,
            velocity,
            radius: bounding * self.scale(invisibility),
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct RvoOptions {
    /// Only agents of this kind get new velocities (all when `None`).
    pub active_kind: Option<AgentKind>,
    /// Neighbors of this kind do not reciprocate; the agent takes full
    /// responsibility for avoiding them.
    pub non_reciprocal_kind: Option<AgentKind>,
    pub reaction: Option<ReactionDisc>,
    pub safety_margin: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RvoStep {
    pub velocities: BTreeMap<AgentId, Vec2>,
    /// Agents for which no velocity satisfied every constraint; they got the
    /// least-penetrating velocity instead.
    pub infeasible: Vec<AgentId>,
}

/// New velocities for every agent from one snapshot.
pub fn rvo_step(crowd: &CrowdState, params: &ParamTable, world: &WorldGeometry, dt: f64) -> Result<RvoStep> {
    let opts = RvoOptions {
        safety_margin: DEFAULT_SAFETY_MARGIN,
        ..Default::default()
    };
    rvo_step_with(crowd, params, world, dt, &opts)
}

pub fn rvo_step_with(
    crowd: &CrowdState,
    params: &ParamTable,
    world: &WorldGeometry,
    dt: f64,
    opts: &RvoOptions,
) -> Result<RvoStep> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::input(format!("dt must be positive, got {dt}")));
    }
    let active: Vec<usize> = crowd
        .agents
        .iter()
        .enumerate()
        .filter(|(_, a)| opts.active_kind.is_none_or(|k| a.kind == k))
        .map(|(i, _)| i)
        .collect();
    for &i in &active {
        let id = crowd.agents[i].id;
        if !params.contains_key(&id) {
            return Err(Error::input(format!("agent {id} has no motion parameters")));
        }
    }
    let solved: Vec<(AgentId, Vec2, bool)> = active
        .par_iter()
        .map(|&i| {
            let agent = &crowd.agents[i];
            let (v, ok) = agent_velocity(crowd, agent, &params[&agent.id], world, dt, opts);
            (agent.id, v, ok)
        })
        .collect();
    let mut out = RvoStep::default();
    for (id, v, ok) in solved {
        out.velocities.insert(id, v);
        if !ok {
            out.infeasible.push(id);
        }
    }
    out.infeasible.sort_unstable();
    Ok(out)
}

fn agent_velocity(
    crowd: &CrowdState,
    agent: &AgentState,
    params: &MotionParams,
    world: &WorldGeometry,
    dt: f64,
    opts: &RvoOptions,
) -> (Vec2, bool) {
    let max_speed = params.speed_cap();
    let horizon = params.planning_horizon;
    let radius = agent.radius + opts.safety_margin;
    let mut lines: Vec<Line> = Vec::new();

    // Static obstacles first; these are never relaxed.
    let range = horizon * max_speed + radius;
    for poly in &world.obstacles {
        for (a, b) in poly.edges() {
            let q = closest_point_on_segment(agent.position, a, b);
            if q.distance(agent.position) <= range {
                if let Some(l) = boundary_line(agent.position, radius, q, horizon, dt) {
                    lines.push(l);
                }
            }
        }
    }
    let num_hard = lines.len();

    let non_reciprocal = |a: &AgentState| opts.non_reciprocal_kind == Some(a.kind);
    let mut near = neighbors_of(crowd, agent, params.neighbor_dist, params.max_neighbors, |a| {
        !non_reciprocal(a)
    });
    if opts.non_reciprocal_kind.is_some() {
        near.extend(neighbors_of(crowd, agent, params.neighbor_dist, usize::MAX, non_reciprocal));
    }
    for (_, j) in near {
        let other = &crowd.agents[j];
        let party = Party {
            position: other.position,
            velocity: other.current_velocity,
            radius: other.radius,
            responsibility: if non_reciprocal(other) { 1.0 } else { 0.5 },
        };
        lines.push(agent_line(agent.position, agent.current_velocity, radius, &party, horizon, dt));
    }

    if let Some(disc) = opts.reaction.filter(|_| agent.kind == AgentKind::Pedestrian) {
        let gap = agent.position.distance(disc.center) - disc.radius - radius;
        let social = if gap > 0.0 && gap <= params.neighbor_dist {
            let party = Party {
                position: disc.center,
                velocity: disc.velocity,
                radius: disc.radius,
                responsibility: 1.0,
            };
            Some(agent_line(agent.position, agent.current_velocity, radius, &party, horizon, dt))
        } else if gap <= 0.0 {
            // Caught inside a growing disc: no further approach.
            orca::no_approach_line(agent.position, disc.center, disc.velocity)
        } else {
            None
        };
        if let Some(social) = social {
            let mut with_disc = lines.clone();
            with_disc.push(social);
            let (v, ok) = orca::solve(&with_disc, num_hard, max_speed, agent.preferred_velocity);
            if ok {
                return (v, ok);
            }
            // Keeping clear of the robots' disc never outranks physical safety.
        }
    }

    orca::solve(&lines, num_hard, max_speed, agent.preferred_velocity)
}

/// Static configuration of the pedestrian motion model.
#[derive(Clone, Debug)]
pub struct CrowdModel {
    pub params: ParamTable,
    /// Pedestrian groups walking together (member ids).
    pub groups: Vec<Vec<AgentId>>,
    pub world: WorldGeometry,
    pub dt: f64,
    pub safety_margin: f64,
}

/// Everything the simulation hands to the robot controller each step.
pub struct StepContext<'a> {
    pub crowd: &'a CrowdState,
    pub model: &'a CrowdModel,
    pub frame: usize,
}

/// Per-step robot decisions.
#[derive(Clone, Debug, Default)]
pub struct RobotControl {
    pub velocities: BTreeMap<AgentId, Vec2>,
    /// Invisibility the robot group presents to pedestrians this step.
    pub invisibility: f64,
    pub unsafe_robots: usize,
    pub uncovered_entries: usize,
    pub planning_time: Duration,
}

/// Supplies robot velocities each step; the simulation integrates them.
pub trait RobotController {
    fn control(&mut self, ctx: &StepContext<'_>) -> Result<RobotControl>;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutcome {
    pub infeasible: Vec<AgentId>,
}

impl CrowdModel {
    pub fn new(params: ParamTable, world: WorldGeometry, dt: f64) -> Self {
        Self {
            params,
            groups: Vec::new(),
            world,
            dt,
            safety_margin: DEFAULT_SAFETY_MARGIN,
        }
    }

    fn group_of(&self, id: AgentId) -> Option<&[AgentId]> {
        self.groups
            .iter()
            .find(|g| g.contains(&id))
            .map(|g| g.as_slice())
    }

    /// Preferred velocity of a modelled agent, slowing to land exactly on
    /// its goal.
    pub fn preferred_velocity(&self, crowd: &CrowdState, agent: &AgentState) -> Vec2 {
        let Some(p) = self.params.get(&agent.id) else {
            return Vec2::ZERO;
        };
        let to_goal = agent.goal - agent.position;
        let dist = to_goal.length();
        if dist <= p.pref_speed * self.dt {
            return to_goal / self.dt;
        }
        let centroid = match self.group_of(agent.id) {
            Some(members) if members.len() > 1 => {
                let pts: Vec<Vec2> = members
                    .iter()
                    .filter_map(|m| crowd.get(*m))
                    .map(|a| a.position)
                    .collect();
                pts.iter().sum::<Vec2>() / pts.len() as f64
            }
            _ => agent.position,
        };
        group_preferred_velocity(agent, centroid, p.group_cohesion, p.pref_speed)
    }

    /// Advances `crowd` by one step. Modelled agents move by the motion
    /// model; robots (if any) move with `robot_velocities`.
    pub fn step(
        &self,
        crowd: &CrowdState,
        robot_velocities: &BTreeMap<AgentId, Vec2>,
        reaction: Option<ReactionDisc>,
    ) -> Result<(CrowdState, StepOutcome)> {
        let has_robots = crowd.robots().next().is_some();
        let mut snapshot = crowd.clone();
        for i in 0..snapshot.agents.len() {
            let a = crowd.agents[i];
            if !has_robots || a.kind == AgentKind::Pedestrian {
                snapshot.agents[i].preferred_velocity = self.preferred_velocity(crowd, &a);
            }
        }
        let opts = RvoOptions {
            active_kind: has_robots.then_some(AgentKind::Pedestrian),
            non_reciprocal_kind: has_robots.then_some(AgentKind::Robot),
            reaction,
            safety_margin: self.safety_margin,
        };
        let rvo = rvo_step_with(&snapshot, &self.params, &self.world, self.dt, &opts)?;
        let mut next = Vec::with_capacity(snapshot.agents.len());
        for a in &snapshot.agents {
            let v = match rvo.velocities.get(&a.id) {
                Some(v) => *v,
                None => *robot_velocities.get(&a.id).ok_or_else(|| {
                    Error::Planning(format!("no velocity supplied for robot {}", a.id))
                })?,
            };
            next.push(integrate(a, v, self.dt)?);
        }
        let time = crowd.time + self.dt;
        Ok((
            CrowdState { agents: next, time },
            StepOutcome {
                infeasible: rvo.infeasible,
            },
        ))
    }
}

/// Aggregate counters over a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub steps: usize,
    /// Agent-steps that needed the least-penetration fallback.
    pub infeasible_events: usize,
    pub unsafe_controls: usize,
    /// Largest number of threatened entries left unserved in any step.
    pub uncovered_entries: usize,
    pub planning_time: Duration,
    pub planning_calls: usize,
    /// Invisibility presented by the robot group at each step.
    pub invisibility: Vec<f64>,
}

impl StepReport {
    pub fn mean_planning_time_us(&self) -> f64 {
        if self.planning_calls == 0 {
            0.0
        } else {
            self.planning_time.as_secs_f64() * 1e6 / self.planning_calls as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub recording: Recording,
    pub report: StepReport,
    pub final_state: CrowdState,
}

/// Runs `steps` steps of the closed loop: robot control, pedestrian motion
/// model, integration.
pub fn simulate(
    model: &CrowdModel,
    initial: CrowdState,
    steps: usize,
    mut controller: Option<&mut dyn RobotController>,
    reaction: ReactionModel,
) -> Result<SimOutput> {
    initial.validate()?;
    if initial.robots().next().is_some() && controller.is_none() {
        return Err(Error::Config("crowd has robots but no controller".into()));
    }
    let mut crowd = initial;
    let mut recording = Recording::new(model.dt, &crowd);
    let mut report = StepReport::default();
    for frame in 0..steps {
        let (robot_v, disc) = match controller.as_deref_mut() {
            Some(ctrl) => {
                let ctx = StepContext {
                    crowd: &crowd,
                    model,
                    frame,
                };
                let control = ctrl.control(&ctx)?;
                report.unsafe_controls += control.unsafe_robots;
                report.uncovered_entries = report.uncovered_entries.max(control.uncovered_entries);
                report.planning_time += control.planning_time;
                report.planning_calls += 1;
                report.invisibility.push(control.invisibility);
                let disc = reaction.disc(&crowd, control.invisibility);
                (control.velocities, disc)
            }
            None => (BTreeMap::new(), None),
        };
        let (next, outcome) = model.step(&crowd, &robot_v, disc)?;
        report.infeasible_events += outcome.infeasible.len();
        crowd = next;
        recording.push(&crowd);
        report.steps += 1;
    }
    Ok(SimOutput {
        recording,
        report,
        final_state: crowd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    fn open_world() -> WorldGeometry {
        WorldGeometry::open(Rect::new(Vec2::splat(-50.0), Vec2::splat(50.0)).unwrap())
    }

    fn walker(id: AgentId, pos: Vec2, goal: Vec2) -> AgentState {
        AgentState::new(id, AgentKind::Pedestrian, pos, 0.7, goal).unwrap()
    }

    #[test]
    fn preferred_velocity_examples() {
        let a = walker(0, Vec2::ZERO, Vec2::new(10.0, 0.0));
        // at the centroid: pure goal direction
        assert_eq!(group_preferred_velocity(&a, Vec2::ZERO, 0.8, 1.5), Vec2::new(1.5, 0.0));
        // cohesion 0: pure goal direction
        assert_eq!(group_preferred_velocity(&a, Vec2::new(0.0, 4.0), 0.0, 1.5), Vec2::new(1.5, 0.0));
        // cohesion 1: due north toward the centroid
        let v = group_preferred_velocity(&a, Vec2::new(0.0, 4.0), 1.0, 1.5);
        assert!((v - Vec2::new(0.0, 1.5)).length() < 1e-12);
        // arrived at goal and centroid
        let b = walker(1, Vec2::ZERO, Vec2::ZERO);
        assert_eq!(group_preferred_velocity(&b, Vec2::ZERO, 0.5, 1.5), Vec2::ZERO);
    }

    #[test]
    fn opposing_blend_falls_back_to_goal() {
        let a = walker(0, Vec2::ZERO, Vec2::new(10.0, 0.0));
        let v = group_preferred_velocity(&a, Vec2::new(-3.0, 0.0), 0.5, 1.2);
        assert_eq!(v, Vec2::new(1.2, 0.0));
    }

    #[test]
    fn single_agent_takes_preferred_velocity() {
        let mut a = walker(0, Vec2::ZERO, Vec2::new(10.0, 0.0));
        a.preferred_velocity = Vec2::new(1.5, 0.0);
        let crowd = CrowdState::new(vec![a], 0.0).unwrap();
        let params: ParamTable = [(0, MotionParams::default())].into();
        let out = rvo_step(&crowd, &params, &open_world(), 0.1).unwrap();
        assert_eq!(out.velocities[&0], Vec2::new(1.5, 0.0));
        assert!(out.infeasible.is_empty());
    }

    #[test]
    fn head_on_pair_mirrors() {
        let mut a = walker(0, Vec2::new(-2.0, 0.0), Vec2::new(3.0, 0.0));
        let mut b = walker(1, Vec2::new(2.0, 0.0), Vec2::new(-3.0, 0.0));
        a.current_velocity = Vec2::new(1.5, 0.0);
        a.preferred_velocity = Vec2::new(1.5, 0.0);
        b.current_velocity = Vec2::new(-1.5, 0.0);
        b.preferred_velocity = Vec2::new(-1.5, 0.0);
        let crowd = CrowdState::new(vec![a, b], 0.0).unwrap();
        let params: ParamTable = [(0, MotionParams::default()), (1, MotionParams::default())].into();
        let out = rvo_step(&crowd, &params, &open_world(), 0.1).unwrap();
        let (va, vb) = (out.velocities[&0], out.velocities[&1]);
        assert!((va.length() - vb.length()).abs() < 1e-12);
        assert!((va + vb).length() < 1e-12, "{va} {vb}");
        assert!(va.y.abs() > 1e-3, "expected lateral deflection, got {va}");
        assert!(va.y.signum() != vb.y.signum());
    }

    #[test]
    fn missing_params_rejected() {
        let crowd = CrowdState::new(vec![walker(0, Vec2::ZERO, Vec2::X)], 0.0).unwrap();
        assert!(rvo_step(&crowd, &ParamTable::new(), &open_world(), 0.1).is_err());
    }

    #[test]
    fn reaction_disc_scales_with_invisibility() {
        let r = |id, x| AgentState::new(id, AgentKind::Robot, Vec2::new(x, 0.0), 0.3, Vec2::ZERO).unwrap();
        let crowd = CrowdState::new(vec![r(0, -1.0), r(1, 1.0)], 0.0).unwrap();
        let m = ReactionModel::default();
        let visible = m.disc(&crowd, 0.0).unwrap();
        let hidden = m.disc(&crowd, 1.0).unwrap();
        assert!((hidden.radius - 1.3).abs() < 1e-12);
        assert!((visible.radius - 3.9).abs() < 1e-12);
        assert_eq!(hidden.center, Vec2::ZERO);
    }
}
