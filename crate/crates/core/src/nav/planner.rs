//! Robot group behaviors: navigation at a fixed invisibility and
//! zone-protecting intervention, plus the closed-loop controller.

use std::collections::BTreeMap;
use std::time::Instant;

use super::gvo::{gvo_select, GvoConfig, GvoResult, MovingDisc, RobotDynamics};
use super::roadmap::{global_preferred_velocity, Roadmap};
use crate::agent::{AgentId, AgentKind, AgentState, CrowdState, GroupParams, WorldGeometry};
use crate::edm::EntitativityMapping;
use crate::error::{Error, Result};
use crate::geometry::{unit_or_zero, Polygon, Vec2};
use crate::sim::{
    predict_around_robots, predict_with, GoalPolicy, Prediction, ReactionModel, RobotControl, RobotController,
    StepContext,
};

/// Distance at which a robot counts as having reached a goal.
pub const ARRIVAL_TOLERANCE: f64 = 0.3;
/// Extra standoff beyond the body radius between a blocking robot and the
/// zone boundary.
pub const BLOCK_STANDOFF: f64 = 0.5;
/// Entries closer than this to an already served entry share its robot.
pub const SHARED_ENTRY_DISTANCE: f64 = 0.5;

/// The robots and their per-robot dynamics (including heading).
#[derive(Clone, Debug, PartialEq)]
pub struct RobotTeam {
    pub ids: Vec<AgentId>,
    pub dynamics: BTreeMap<AgentId, RobotDynamics>,
}

impl RobotTeam {
    /// Every robot of `crowd` with `base` limits, initially facing its goal.
    pub fn facing_goals(crowd: &CrowdState, base: RobotDynamics) -> Result<Self> {
        base.validate()?;
        let mut ids: Vec<AgentId> = crowd.robots().map(|r| r.id).collect();
        ids.sort_unstable();
        let dynamics = crowd
            .robots()
            .map(|r| {
                let d = r.goal - r.position;
                let heading = if d.length() > 0.0 { d.y.atan2(d.x) } else { 0.0 };
                (r.id, RobotDynamics { heading, ..base })
            })
            .collect();
        Ok(Self { ids, dynamics })
    }

    fn state<'c>(&self, crowd: &'c CrowdState, id: AgentId) -> Result<&'c AgentState> {
        crowd
            .get(id)
            .filter(|a| a.kind == AgentKind::Robot)
            .ok_or(Error::NotFound(id))
    }

    fn centroid(&self, crowd: &CrowdState) -> Result<Vec2> {
        let mut sum = Vec2::ZERO;
        for id in &self.ids {
            sum += self.state(crowd, *id)?.position;
        }
        Ok(sum / self.ids.len().max(1) as f64)
    }
}

/// Shared inputs of one planning step.
#[derive(Clone, Copy, Debug)]
pub struct NavContext<'a> {
    pub crowd: &'a CrowdState,
    pub world: &'a WorldGeometry,
    pub roadmap: &'a Roadmap,
    pub mapping: &'a EntitativityMapping,
    /// Pedestrians predicted over the collision-checking horizon.
    pub prediction: &'a Prediction,
    pub dt: f64,
    pub gvo: GvoConfig,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterventionCommand {
    pub robot_id: AgentId,
    pub goal: Vec2,
    pub preferred: Vec2,
    pub result: GvoResult,
    pub applied_params: GroupParams,
    pub invisibility_used: f64,
}

/// A pedestrian predicted to enter a protected zone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Threat {
    pub pedestrian: AgentId,
    pub zone: usize,
    pub entry_time: f64,
    pub entry_point: Vec2,
    /// Unit direction of travel at the entry.
    pub approach: Vec2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterventionOutcome {
    pub commands: Vec<InterventionCommand>,
    pub threats: Vec<Threat>,
    /// Threats left without a robot.
    pub uncovered: usize,
    /// Invisibility the group presents (minimum over robots).
    pub invisibility: f64,
    pub urgency: f64,
}

/// Robot goal that blocks an entry: the nearest zone-boundary point,
/// pushed back along the approach direction.
pub fn blocking_goal(zone: &Polygon, entry_point: Vec2, approach: Vec2, body_radius: f64) -> Vec2 {
    zone.closest_boundary_point(entry_point) - unit_or_zero(approach) * (body_radius + BLOCK_STANDOFF)
}

/// Earliest predicted entry of each pedestrian that is currently outside
/// every zone.
pub fn detect_threats(crowd: &CrowdState, threat_prediction: &Prediction, zones: &[Polygon]) -> Vec<Threat> {
    let mut threats = Vec::new();
    for ped in crowd.pedestrians() {
        if zones.iter().any(|z| z.contains_strict(ped.position)) {
            continue;
        }
        let Some(path) = threat_prediction.positions.get(&ped.id) else {
            continue;
        };
        let mut prev = ped.position;
        'walk: for (k, &q) in path.iter().enumerate() {
            for (zi, zone) in zones.iter().enumerate() {
                if zone.contains_strict(q) {
                    let dir = unit_or_zero(q - prev);
                    let entry_point = match zone.ray_entry(prev, dir) {
                        Some(t) if t <= prev.distance(q) => prev + dir * t,
                        _ => zone.closest_boundary_point(q),
                    };
                    let approach = if dir == Vec2::ZERO {
                        unit_or_zero(zone.centroid() - prev)
                    } else {
                        dir
                    };
                    threats.push(Threat {
                        pedestrian: ped.id,
                        zone: zi,
                        entry_time: (k + 1) as f64 * threat_prediction.dt,
                        entry_point,
                        approach,
                    });
                    break 'walk;
                }
            }
            prev = q;
        }
    }
    threats.sort_by(|a, b| a.entry_time.total_cmp(&b.entry_time).then(a.pedestrian.cmp(&b.pedestrian)));
    threats
}

/// Urgency `clamp(1 − t_e / H, 0, 1)` of the most imminent threat.
pub fn urgency(threats: &[Threat], horizon: f64) -> f64 {
    threats
        .iter()
        .map(|t| (1.0 - t.entry_time / horizon).clamp(0.0, 1.0))
        .fold(0.0, f64::max)
}

struct Drive {
    goal: Vec2,
    params: GroupParams,
    invisibility: f64,
    cohesion_centroid: Option<Vec2>,
}

fn drive(
    team: &RobotTeam,
    ctx: &NavContext<'_>,
    robot: &AgentState,
    spec: &Drive,
    planned: &BTreeMap<AgentId, Vec2>,
) -> Result<InterventionCommand> {
    let gp = spec.params;
    let p = robot.position;
    let d = p.distance(spec.goal);
    let preferred = if d <= ARRIVAL_TOLERANCE {
        Vec2::ZERO
    } else {
        let mut dir = unit_or_zero(global_preferred_velocity(robot, ctx.roadmap, ctx.world, spec.goal, 1.0)?);
        if let Some(c) = spec.cohesion_centroid {
            // Attraction only beyond a comfortable spacing, so a cohesive
            // group does not collapse onto its centroid.
            let slack = gp.radius + 2.0 * robot.radius;
            if p.distance(c) > slack {
                let blend = dir * (1.0 - gp.group_cohesion) + unit_or_zero(c - p) * gp.group_cohesion;
                if unit_or_zero(blend) != Vec2::ZERO {
                    dir = unit_or_zero(blend);
                }
            }
        }
        dir * gp.pref_speed.min(d / ctx.dt)
    };
    let base = team.dynamics.get(&robot.id).ok_or(Error::NotFound(robot.id))?;
    let dynamics = RobotDynamics {
        v_max: base.v_max.min(crate::agent::SPEED_CAP_FACTOR * gp.pref_speed),
        ..*base
    };
    let others: Vec<MovingDisc> = ctx
        .crowd
        .robots()
        .filter(|o| o.id != robot.id)
        .map(|o| MovingDisc {
            position: o.position,
            velocity: planned.get(&o.id).copied().unwrap_or(o.current_velocity),
            radius: o.radius,
        })
        .collect();
    let result = gvo_select(
        robot,
        &dynamics,
        preferred,
        gp.radius.max(robot.radius),
        ctx.prediction,
        &others,
        ctx.world,
        ctx.dt,
        &ctx.gvo,
    )?;
    Ok(InterventionCommand {
        robot_id: robot.id,
        goal: spec.goal,
        preferred,
        result,
        applied_params: gp,
        invisibility_used: spec.invisibility,
    })
}

/// Every robot heads for its own goal with the parameters that realize
/// invisibility `s`.
pub fn invisible_nav_step(team: &RobotTeam, ctx: &NavContext<'_>, s: f64) -> Result<Vec<InterventionCommand>> {
    let gp = ctx.mapping.params_for_invisibility(s)?;
    navigate_with_params(team, ctx, &gp, s)
}

/// Task navigation with explicitly given group parameters; `s` is only
/// recorded in the commands.
pub fn navigate_with_params(
    team: &RobotTeam,
    ctx: &NavContext<'_>,
    gp: &GroupParams,
    s: f64,
) -> Result<Vec<InterventionCommand>> {
    gp.validate()?;
    let gp = *gp;
    let centroid = team.centroid(ctx.crowd)?;
    let mut planned = BTreeMap::new();
    let mut out = Vec::with_capacity(team.ids.len());
    for &id in &team.ids {
        let robot = team.state(ctx.crowd, id)?;
        let spec = Drive {
            goal: robot.goal,
            params: gp,
            invisibility: s,
            cohesion_centroid: (team.ids.len() > 1).then_some(centroid),
        };
        let cmd = drive(team, ctx, robot, &spec, &planned)?;
        planned.insert(id, cmd.result.velocity);
        out.push(cmd);
    }
    Ok(out)
}

/// Zone protection: threatened entries get the nearest free robot, which
/// moves to block at the invisibility the urgency allows (never below
/// `s_min`); the remaining robots continue their task invisibly.
pub fn intervention_step(
    team: &RobotTeam,
    ctx: &NavContext<'_>,
    zones: &[Polygon],
    s_min: f64,
    threat_prediction: &Prediction,
) -> Result<InterventionOutcome> {
    if !(0.0..=1.0).contains(&s_min) {
        return Err(Error::input(format!("s_min must lie in [0, 1], got {s_min}")));
    }
    let threats = detect_threats(ctx.crowd, threat_prediction, zones);
    let u = urgency(&threats, threat_prediction.horizon);
    let s_used = s_min.max(1.0 - u);
    let block_params = ctx.mapping.params_for_invisibility(s_used)?;
    let task_params = ctx.mapping.params_for_invisibility(1.0)?;

    let mut assignment: BTreeMap<AgentId, Vec2> = BTreeMap::new();
    let mut served: Vec<Vec2> = Vec::new();
    let mut uncovered = 0;
    for t in &threats {
        if served.iter().any(|e| e.distance(t.entry_point) <= SHARED_ENTRY_DISTANCE) {
            continue;
        }
        let free = team
            .ids
            .iter()
            .filter(|id| !assignment.contains_key(id))
            .map(|id| team.state(ctx.crowd, *id).map(|r| (r.position.distance(t.entry_point), r)))
            .collect::<Result<Vec<_>>>()?;
        let nearest = free
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
        match nearest {
            Some((_, robot)) => {
                let goal = blocking_goal(&zones[t.zone], t.entry_point, t.approach, robot.radius);
                assignment.insert(robot.id, goal);
                served.push(t.entry_point);
            }
            None => uncovered += 1,
        }
    }

    let unassigned: Vec<AgentId> = team.ids.iter().copied().filter(|id| !assignment.contains_key(id)).collect();
    let task_centroid = if unassigned.len() > 1 {
        let mut sum = Vec2::ZERO;
        for id in &unassigned {
            sum += team.state(ctx.crowd, *id)?.position;
        }
        Some(sum / unassigned.len() as f64)
    } else {
        None
    };

    let mut planned = BTreeMap::new();
    let mut commands = Vec::with_capacity(team.ids.len());
    for &id in &team.ids {
        let robot = team.state(ctx.crowd, id)?;
        let spec = match assignment.get(&id) {
            Some(goal) => Drive {
                goal: *goal,
                params: block_params,
                invisibility: s_used,
                cohesion_centroid: None,
            },
            None => Drive {
                goal: robot.goal,
                params: task_params,
                invisibility: 1.0,
                cohesion_centroid: task_centroid,
            },
        };
        let cmd = drive(team, ctx, robot, &spec, &planned)?;
        planned.insert(id, cmd.result.velocity);
        commands.push(cmd);
    }
    let invisibility = commands.iter().map(|c| c.invisibility_used).fold(1.0, f64::min);
    Ok(InterventionOutcome {
        commands,
        threats,
        uncovered,
        invisibility,
        urgency: u,
    })
}

/// What the robots are doing over a run.
#[derive(Clone, Debug, PartialEq)]
pub enum NavMode {
    /// Task navigation at a fixed invisibility; zones are ignored.
    Fixed { s: f64 },
    /// Task navigation with fixed group parameters; zones are ignored.
    Manual { params: GroupParams },
    /// Task navigation that switches to zone protection when needed.
    Intervention {
        zones: Vec<Polygon>,
        s_min: f64,
        /// Look-ahead for threat detection, seconds.
        horizon: f64,
    },
}

/// Closed-loop robot controller for [`crate::sim::simulate`].
pub struct NavController {
    pub mode: NavMode,
    pub team: RobotTeam,
    pub mapping: EntitativityMapping,
    pub roadmap: Roadmap,
    pub gvo: GvoConfig,
    pub reaction: ReactionModel,
    pub goal_policy: GoalPolicy,
    /// Per-robot waypoint loops; robots without one keep their own goal.
    pub patrols: BTreeMap<AgentId, Patrol>,
    /// Measure planning time (disable for byte-reproducible output).
    pub timing: bool,
    last_invisibility: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Patrol {
    pub waypoints: Vec<Vec2>,
    pub next: usize,
    pub loops: usize,
}

impl Patrol {
    pub fn new(waypoints: Vec<Vec2>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::input("patrol needs at least one waypoint"));
        }
        Ok(Self {
            waypoints,
            next: 0,
            loops: 0,
        })
    }

    pub fn goal(&self) -> Vec2 {
        self.waypoints[self.next]
    }

    fn update(&mut self, position: Vec2) {
        if position.distance(self.goal()) <= ARRIVAL_TOLERANCE {
            self.next += 1;
            if self.next == self.waypoints.len() {
                self.next = 0;
                self.loops += 1;
            }
        }
    }
}

impl NavController {
    pub fn new(
        mode: NavMode,
        team: RobotTeam,
        mapping: EntitativityMapping,
        roadmap: Roadmap,
        reaction: ReactionModel,
    ) -> Result<Self> {
        match &mode {
            NavMode::Fixed { s } if !(0.0..=1.0).contains(s) => {
                return Err(Error::input(format!("invisibility must lie in [0, 1], got {s}")))
            }
            NavMode::Intervention { s_min, horizon, .. } => {
                if !(0.0..=1.0).contains(s_min) {
                    return Err(Error::input(format!("s_min must lie in [0, 1], got {s_min}")));
                }
                if !(*horizon > 0.0) {
                    return Err(Error::input("intervention horizon must be positive"));
                }
            }
            _ => {}
        }
        Ok(Self {
            mode,
            team,
            mapping,
            roadmap,
            gvo: GvoConfig::default(),
            reaction,
            goal_policy: GoalPolicy::EXTRAPOLATE,
            patrols: BTreeMap::new(),
            timing: true,
            last_invisibility: 1.0,
        })
    }

    pub fn loops_completed(&self) -> usize {
        self.patrols.values().map(|p| p.loops).min().unwrap_or(0)
    }

    fn plan(&mut self, ctx: &StepContext<'_>) -> Result<(Vec<InterventionCommand>, f64, usize)> {
        let mut crowd = ctx.crowd.clone();
        for a in crowd.agents.iter_mut().filter(|a| a.kind == AgentKind::Robot) {
            if let Some(p) = self.patrols.get_mut(&a.id) {
                p.update(a.position);
                a.goal = p.goal();
            }
        }
        let model = ctx.model;
        let safety = predict_around_robots(
            model,
            &crowd,
            self.gvo.horizon,
            self.goal_policy,
            Some((self.reaction, self.last_invisibility)),
        )?;
        let nav = NavContext {
            crowd: &crowd,
            world: &model.world,
            roadmap: &self.roadmap,
            mapping: &self.mapping,
            prediction: &safety,
            dt: model.dt,
            gvo: self.gvo,
        };
        match &self.mode {
            NavMode::Fixed { s } => Ok((invisible_nav_step(&self.team, &nav, *s)?, *s, 0)),
            NavMode::Manual { params } => {
                let s = self.mapping.invisibility(&self.mapping.entitativity(params)?);
                Ok((navigate_with_params(&self.team, &nav, params, s)?, s, 0))
            }
            NavMode::Intervention { zones, s_min, horizon } => {
                let peds = CrowdState {
                    agents: crowd.pedestrians().copied().collect(),
                    time: crowd.time,
                };
                let threat = predict_with(model, &peds, *horizon, self.goal_policy)?;
                let out = intervention_step(&self.team, &nav, zones, *s_min, &threat)?;
                Ok((out.commands, out.invisibility, out.uncovered))
            }
        }
    }
}

impl RobotController for NavController {
    fn control(&mut self, ctx: &StepContext<'_>) -> Result<RobotControl> {
        let start = Instant::now();
        let (commands, invisibility, uncovered) = self.plan(ctx)?;
        let mut control = RobotControl {
            invisibility,
            uncovered_entries: uncovered,
            ..Default::default()
        };
        for c in &commands {
            control.velocities.insert(c.robot_id, c.result.velocity);
            if !c.result.safe {
                control.unsafe_robots += 1;
            }
            if let Some(d) = self.team.dynamics.get_mut(&c.robot_id) {
                d.heading = c.result.heading;
            }
        }
        self.last_invisibility = invisibility;
        if self.timing {
            control.planning_time = start.elapsed();
        }
        Ok(control)
    }
}
