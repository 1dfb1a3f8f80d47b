//! Scenario files, end-to-end runs of the application modes, and the
//! intrusion / overhead / timing metrics.

mod parse;
mod report;

pub use parse::parse_scenario;
pub use report::{parse_report, RunReport};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{AgentId, AgentKind, AgentState, CrowdState, GroupParams, MotionParams, WorldGeometry};
use crate::edm::{EntitativityMapping, InvisibilityMode, InvisibilitySetting};
use crate::error::{Error, Result};
use crate::geometry::{Polygon, Vec2};
use crate::nav::{build_roadmap, NavController, NavMode, Patrol, RobotDynamics, RobotTeam, ARRIVAL_TOLERANCE};
use crate::sim::{simulate, CrowdModel, ParamTable, ReactionModel, Recording, SimOutput, Trajectory};

pub const DEFAULT_ROBOT_COUNT: usize = 3;
pub const DEFAULT_ROBOT_RADIUS: f64 = 0.3;
pub const DEFAULT_THREAT_HORIZON: f64 = 5.0;
/// Robot ids start here; pedestrians are numbered from 0.
pub const ROBOT_ID_BASE: AgentId = 1000;
/// Pairwise overlap tolerated before a contact counts as a collision.
pub const COLLISION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Surveillance,
    Intervention,
    Baseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Surveillance => "surveillance",
            Mode::Intervention => "intervention",
            Mode::Baseline => "baseline",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PedestrianSpec {
    pub start: Vec2,
    pub goal: Vec2,
    pub params: MotionParams,
    pub group: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotSpec {
    pub starts: Vec<Vec2>,
    pub goals: Vec<Vec2>,
    /// Physical body radius used for collision accounting.
    pub radius: f64,
    /// Threat look-ahead for intervention, seconds.
    pub horizon: f64,
    pub reaction: ReactionModel,
    /// Limits shared by all robots; headings start toward the goals.
    pub dynamics: RobotDynamics,
    /// Fixed group parameters instead of the invisibility-derived ones.
    pub params: Option<GroupParams>,
    /// Per-robot waypoint loops for surveillance.
    pub patrol: Option<Vec<Vec<Vec2>>>,
}

impl RobotSpec {
    pub fn none() -> Self {
        Self {
            starts: Vec::new(),
            goals: Vec::new(),
            radius: DEFAULT_ROBOT_RADIUS,
            horizon: DEFAULT_THREAT_HORIZON,
            reaction: ReactionModel::default(),
            dynamics: RobotDynamics::default(),
            params: None,
            patrol: None,
        }
    }

    pub fn count(&self) -> usize {
        self.starts.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub mode: Mode,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub world: WorldGeometry,
    /// Uniform start-position perturbation radius for pedestrians, metres.
    pub start_jitter: f64,
    pub pedestrians: Vec<PedestrianSpec>,
    pub robots: RobotSpec,
    pub zones: Vec<Polygon>,
    pub invisibility: InvisibilitySetting,
}

impl Scenario {
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Initial crowd (pedestrians first, then robots) and the pedestrian
    /// motion model. Start jitter is drawn from a generator seeded with
    /// `seed`.
    pub fn build(&self) -> Result<(CrowdState, CrowdModel)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut agents = Vec::with_capacity(self.pedestrians.len() + self.robots.count());
        let mut params = ParamTable::new();
        let mut groups: BTreeMap<u32, Vec<AgentId>> = BTreeMap::new();
        for (i, p) in self.pedestrians.iter().enumerate() {
            let id = i as AgentId;
            let mut start = p.start;
            if self.start_jitter > 0.0 {
                for _ in 0..16 {
                    let r = self.start_jitter * rng.random::<f64>().sqrt();
                    let a = rng.random::<f64>() * std::f64::consts::TAU;
                    let q = p.start + Vec2::new(a.cos(), a.sin()) * r;
                    if self.world.is_free(q, 0.0) {
                        start = q;
                        break;
                    }
                }
            }
            agents.push(AgentState::new(id, AgentKind::Pedestrian, start, p.params.radius, p.goal)?);
            params.insert(id, p.params);
            if let Some(g) = p.group {
                groups.entry(g).or_default().push(id);
            }
        }
        for (i, (s, g)) in self.robots.starts.iter().zip(&self.robots.goals).enumerate() {
            let id = ROBOT_ID_BASE + i as AgentId;
            agents.push(AgentState::new(id, AgentKind::Robot, *s, self.robots.radius, *g)?);
        }
        let crowd = CrowdState::new(agents, 0.0)?;
        let mut model = CrowdModel::new(params, self.world.clone(), self.dt);
        model.groups = groups.into_values().collect();
        Ok((crowd, model))
    }
}

/// Knobs that are not part of the scenario itself.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub mapping: EntitativityMapping,
    /// Record wall-clock planning time; off gives reproducible reports.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mapping: EntitativityMapping::published(),
            timing: true,
        }
    }
}

/// One simulated arm.
#[derive(Clone, Debug)]
pub struct ArmResult {
    pub output: SimOutput,
    pub intrusions: usize,
    pub collisions: usize,
    /// Time at which the last robot first reached its goal.
    pub arrival_time: Option<f64>,
    pub loops_completed: usize,
}

/// Report plus the recordings it was computed from.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub ours: ArmResult,
    pub baseline: Option<ArmResult>,
}

/// Distinct pedestrians strictly inside `zone` at any frame.
pub fn count_intrusions(trajectories: &[Trajectory], zone: &[Vec2]) -> Result<usize> {
    let zone = Polygon::new(zone.to_vec())?;
    Ok(trajectories
        .iter()
        .filter(|t| t.kind == AgentKind::Pedestrian)
        .filter(|t| t.samples.iter().any(|s| zone.contains_strict(s.position)))
        .count())
}

/// Distinct pedestrians strictly inside any of `zones` at any frame.
pub fn count_recording_intrusions(rec: &Recording, zones: &[Polygon]) -> usize {
    (0..rec.agents.len())
        .filter(|&i| rec.agents[i].1 == AgentKind::Pedestrian)
        .filter(|&i| {
            rec.frames
                .iter()
                .any(|ps| zones.iter().any(|z| z.contains_strict(ps[i])))
        })
        .count()
}

/// Percentage extra time relative to the baseline.
pub fn compute_overhead(time_ours: f64, time_baseline: f64) -> Result<f64> {
    if !(time_baseline > 0.0) || !time_ours.is_finite() {
        return Err(Error::input(format!(
            "overhead needs a positive baseline time, got {time_baseline}"
        )));
    }
    Ok(100.0 * (time_ours - time_baseline) / time_baseline)
}

/// First time every robot has been within the arrival tolerance of its
/// goal (each robot's first arrival, maximized over robots).
pub fn robot_arrival_time(rec: &Recording, goals: &BTreeMap<AgentId, Vec2>) -> Option<f64> {
    let mut last: f64 = 0.0;
    for (id, goal) in goals {
        let idx = rec.agent_index(*id)?;
        let f = rec
            .frames
            .iter()
            .position(|ps| ps[idx].distance(*goal) <= ARRIVAL_TOLERANCE)?;
        last = last.max(f as f64 * rec.dt);
    }
    Some(last)
}

fn run_arm(
    scenario: &Scenario,
    options: &RunOptions,
    mode: NavMode,
    patrol: bool,
) -> Result<ArmResult> {
    let (crowd, model) = scenario.build()?;
    let steps = scenario.steps();
    let reaction = scenario.robots.reaction;
    let robot_goals: BTreeMap<AgentId, Vec2> = crowd.robots().map(|r| (r.id, r.goal)).collect();
    let (output, loops) = if scenario.robots.count() == 0 {
        (simulate(&model, crowd, steps, None, reaction)?, 0)
    } else {
        let team = RobotTeam::facing_goals(&crowd, scenario.robots.dynamics)?;
        let roadmap = build_roadmap(&scenario.world, scenario.robots.radius)?;
        let mut ctrl = NavController::new(mode, team, options.mapping.clone(), roadmap, reaction)?;
        ctrl.timing = options.timing;
        if patrol {
            for (i, r) in crowd.robots().enumerate() {
                let waypoints = match &scenario.robots.patrol {
                    Some(loops) => loops[i].clone(),
                    None => vec![r.goal, r.position],
                };
                ctrl.patrols.insert(r.id, Patrol::new(waypoints)?);
            }
        }
        let out = simulate(&model, crowd, steps, Some(&mut ctrl), reaction)?;
        (out, ctrl.loops_completed())
    };
    let intrusions = count_recording_intrusions(&output.recording, &scenario.zones);
    let collisions = output.recording.collision_pairs(COLLISION_TOLERANCE).len();
    let arrival_time = if robot_goals.is_empty() || patrol {
        None
    } else {
        robot_arrival_time(&output.recording, &robot_goals)
    };
    Ok(ArmResult {
        output,
        intrusions,
        collisions,
        arrival_time,
        loops_completed: loops,
    })
}

fn fixed_mode(scenario: &Scenario, s: f64) -> NavMode {
    match scenario.robots.params {
        Some(params) => NavMode::Manual { params },
        None => NavMode::Fixed { s },
    }
}

/// Paired run: the intervention controller against plain task navigation
/// at full invisibility, both from the same seed.
pub fn run_intervention(scenario: &Scenario, options: &RunOptions) -> Result<RunOutput> {
    if scenario.zones.is_empty() {
        return Err(Error::validation("zones", "intervention needs at least one zone"));
    }
    if scenario.robots.count() == 0 {
        return Err(Error::validation("robots", "intervention needs robots"));
    }
    let s_min = match scenario.invisibility.mode {
        InvisibilityMode::LowerBound => scenario.invisibility.s_min,
        InvisibilityMode::FixedS => scenario.invisibility.s,
    };
    let ours_mode = NavMode::Intervention {
        zones: scenario.zones.clone(),
        s_min,
        horizon: scenario.robots.horizon,
    };
    let (ours, baseline) = rayon::join(
        || run_arm(scenario, options, ours_mode, false),
        || run_arm(scenario, options, NavMode::Fixed { s: 1.0 }, false),
    );
    let (ours, baseline) = (ours?, baseline?);
    let additional_time_pct = match (ours.arrival_time, baseline.arrival_time) {
        (Some(o), Some(b)) if b > 0.0 => Some(compute_overhead(o, b)?),
        _ => None,
    };
    let report = RunReport {
        mode: Mode::Intervention,
        seed: scenario.seed,
        frames: ours.output.recording.frame_count(),
        intrusions_baseline: Some(baseline.intrusions),
        intrusions_ours: ours.intrusions,
        intrusions_avoided: Some(baseline.intrusions as i64 - ours.intrusions as i64),
        additional_time_pct,
        mean_step_time_us: ours.output.report.mean_planning_time_us(),
        collisions: ours.collisions,
        uncovered_entries: ours.output.report.uncovered_entries,
        unsafe_controls: ours.output.report.unsafe_controls,
        infeasible_events: ours.output.report.infeasible_events,
        arrival_time_ours: ours.arrival_time,
        arrival_time_baseline: baseline.arrival_time,
        loops_completed: None,
    };
    Ok(RunOutput {
        report,
        ours,
        baseline: Some(baseline),
    })
}

/// Robots patrol their waypoint loops at full invisibility.
pub fn run_surveillance(scenario: &Scenario, options: &RunOptions) -> Result<RunOutput> {
    let arm = run_arm(scenario, options, fixed_mode(scenario, 1.0), true)?;
    Ok(single_report(scenario, arm, true))
}

/// Robots (if any) navigate to their goals at the scenario's fixed
/// invisibility; zones are only observed.
pub fn run_baseline(scenario: &Scenario, options: &RunOptions) -> Result<RunOutput> {
    let arm = run_arm(scenario, options, fixed_mode(scenario, scenario.invisibility.s), false)?;
    Ok(single_report(scenario, arm, false))
}

fn single_report(scenario: &Scenario, arm: ArmResult, patrol: bool) -> RunOutput {
    let r = &arm.output.report;
    let report = RunReport {
        mode: scenario.mode,
        seed: scenario.seed,
        frames: arm.output.recording.frame_count(),
        intrusions_baseline: None,
        intrusions_ours: arm.intrusions,
        intrusions_avoided: None,
        additional_time_pct: None,
        mean_step_time_us: r.mean_planning_time_us(),
        collisions: arm.collisions,
        uncovered_entries: r.uncovered_entries,
        unsafe_controls: r.unsafe_controls,
        infeasible_events: r.infeasible_events,
        arrival_time_ours: arm.arrival_time,
        arrival_time_baseline: None,
        loops_completed: patrol.then_some(arm.loops_completed),
    };
    RunOutput {
        report,
        ours: arm,
        baseline: None,
    }
}

/// Dispatches on the scenario's mode.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<RunOutput> {
    match scenario.mode {
        Mode::Intervention => run_intervention(scenario, options),
        Mode::Surveillance => run_surveillance(scenario, options),
        Mode::Baseline => run_baseline(scenario, options),
    }
}

/// Scenario files shipped with the crate.
pub mod builtin {
    use super::{parse_scenario, Scenario};
    use crate::error::Result;

    pub const CANONICAL_INTERVENTION: &str = include_str!("../../scenarios/canonical_intervention.toml");
    pub const CIRCLE_8: &str = include_str!("../../scenarios/circle8.toml");
    pub const DENSE_SURVEILLANCE: &str = include_str!("../../scenarios/dense_surveillance.toml");
    pub const IITF1_ANALOGUE: &str = include_str!("../../scenarios/iitf1_analogue.toml");

    /// `(name, text)` of every shipped scenario.
    pub const ALL: [(&str, &str); 4] = [
        ("canonical_intervention", CANONICAL_INTERVENTION),
        ("circle8", CIRCLE_8),
        ("dense_surveillance", DENSE_SURVEILLANCE),
        ("iitf1_analogue", IITF1_ANALOGUE),
    ];

    pub fn load(text: &str) -> Result<Scenario> {
        parse_scenario(text)
    }
}
