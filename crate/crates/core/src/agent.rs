//! Agents, crowds, groups and motion-model parameters.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Polygon, Rect, Vec2};

pub type AgentId = u32;

/// Agents never move faster than this multiple of their preferred speed.
pub const SPEED_CAP_FACTOR: f64 = 1.5;

/// Default explicit-Euler time step (s).
pub const DEFAULT_DT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Pedestrian,
    Robot,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Pedestrian => "pedestrian",
            AgentKind::Robot => "robot",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pedestrian" => Ok(AgentKind::Pedestrian),
            "robot" => Ok(AgentKind::Robot),
            other => Err(Error::input(format!("unknown agent kind `{other}`"))),
        }
    }
}

/// Position, current velocity and preferred velocity of one agent, plus the
/// goal that the preferred velocity points at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub kind: AgentKind,
    pub position: Vec2,
    pub current_velocity: Vec2,
    pub preferred_velocity: Vec2,
    pub radius: f64,
    pub goal: Vec2,
}

impl AgentState {
    /// An agent at rest at `position`.
    pub fn new(id: AgentId, kind: AgentKind, position: Vec2, radius: f64, goal: Vec2) -> Result<Self> {
        let state = Self {
            id,
            kind,
            position,
            current_velocity: Vec2::ZERO,
            preferred_velocity: Vec2::ZERO,
            radius,
            goal,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::input(format!(
                "agent {} radius must be positive, got {}",
                self.id, self.radius
            )));
        }
        let finite = self.position.is_finite()
            && self.current_velocity.is_finite()
            && self.preferred_velocity.is_finite()
            && self.goal.is_finite();
        if !finite {
            return Err(Error::input(format!("agent {} has non-finite coordinates", self.id)));
        }
        Ok(())
    }

    pub fn with_velocity(mut self, v: Vec2) -> Self {
        self.current_velocity = v;
        self
    }
}

/// Explicit Euler step: moves the agent by `new_velocity · dt`.
pub fn integrate(state: &AgentState, new_velocity: Vec2, dt: f64) -> Result<AgentState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::input(format!("dt must be positive and finite, got {dt}")));
    }
    if !new_velocity.is_finite() || !state.position.is_finite() {
        return Err(Error::input("integrate: non-finite velocity or position"));
    }
    Ok(AgentState {
        position: state.position + new_velocity * dt,
        current_velocity: new_velocity,
        ..*state
    })
}

/// All agents at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct CrowdState {
    pub agents: Vec<AgentState>,
    pub time: f64,
}

impl CrowdState {
    pub fn new(agents: Vec<AgentState>, time: f64) -> Result<Self> {
        let crowd = Self { agents, time };
        crowd.validate()?;
        Ok(crowd)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<AgentId> = self.agents.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::input(format!("duplicate agent id {}", w[0])));
        }
        if !self.time.is_finite() {
            return Err(Error::input("crowd time must be finite"));
        }
        self.agents.iter().try_for_each(AgentState::validate)
    }

    pub fn get(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn index_of(&self, id: AgentId) -> Option<usize> {
        self.agents.iter().position(|a| a.id == id)
    }

    pub fn pedestrians(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.iter().filter(|a| a.kind == AgentKind::Pedestrian)
    }

    pub fn robots(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.iter().filter(|a| a.kind == AgentKind::Robot)
    }
}

/// Ids of agents within `neighbor_dist` (center distance, inclusive) of
/// `agent_id`, nearest first with ties broken by ascending id, truncated to
/// `max_neighbors`.
pub fn neighbors(
    crowd: &CrowdState,
    agent_id: AgentId,
    neighbor_dist: f64,
    max_neighbors: usize,
) -> Result<Vec<AgentId>> {
    let me = crowd.get(agent_id).ok_or(Error::NotFound(agent_id))?;
    Ok(neighbors_of(crowd, me, neighbor_dist, max_neighbors, |_| true)
        .into_iter()
        .map(|(_, i)| crowd.agents[i].id)
        .collect())
}

/// Index-returning variant used internally; `keep` filters candidates.
pub(crate) fn neighbors_of(
    crowd: &CrowdState,
    me: &AgentState,
    neighbor_dist: f64,
    max_neighbors: usize,
    keep: impl Fn(&AgentState) -> bool,
) -> Vec<(f64, usize)> {
    let range_sq = neighbor_dist * neighbor_dist;
    let mut found: Vec<(f64, usize)> = crowd
        .agents
        .iter()
        .enumerate()
        .filter(|(_, a)| a.id != me.id && keep(a))
        .filter_map(|(i, a)| {
            let d = a.position.distance_squared(me.position);
            (d <= range_sq).then_some((d, i))
        })
        .collect();
    found.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| crowd.agents[a.1].id.cmp(&crowd.agents[b.1].id))
    });
    found.truncate(max_neighbors);
    found
}

/// Per-agent parameters of the velocity-based motion model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    pub neighbor_dist: f64,
    pub max_neighbors: usize,
    pub planning_horizon: f64,
    pub radius: f64,
    pub pref_speed: f64,
    pub group_cohesion: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        GroupParams::DEFAULT.to_motion_params()
    }
}

impl MotionParams {
    pub const DEFAULT_MAX_NEIGHBORS: usize = 10;
    pub const DEFAULT_PLANNING_HORIZON: f64 = 3.0;

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("neighbor_dist", self.neighbor_dist),
            ("planning_horizon", self.planning_horizon),
            ("radius", self.radius),
            ("pref_speed", self.pref_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(name, format!("must be positive, got {v}")));
            }
        }
        if self.max_neighbors < 1 {
            return Err(Error::validation("max_neighbors", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.group_cohesion) {
            return Err(Error::BoundViolation {
                field: "group_cohesion".into(),
                value: self.group_cohesion,
                min: 0.0,
                max: 1.0,
            });
        }
        Ok(())
    }

    pub fn speed_cap(&self) -> f64 {
        self.pref_speed * SPEED_CAP_FACTOR
    }

    /// Replaces the four group-level parameters, keeping the rest.
    pub fn with_group_params(&self, gp: &GroupParams) -> Self {
        Self {
            neighbor_dist: gp.neighbor_dist,
            radius: gp.radius,
            pref_speed: gp.pref_speed,
            group_cohesion: gp.group_cohesion,
            ..*self
        }
    }
}

/// The four group motion parameters that drive perceived entitativity, in
/// the mapping's column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpField {
    NeighborDist,
    Radius,
    PrefSpeed,
    GroupCohesion,
}

impl GpField {
    pub const ALL: [GpField; 4] = [
        GpField::NeighborDist,
        GpField::Radius,
        GpField::PrefSpeed,
        GpField::GroupCohesion,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            GpField::NeighborDist => "neighbor_dist",
            GpField::Radius => "radius",
            GpField::PrefSpeed => "pref_speed",
            GpField::GroupCohesion => "group_cohesion",
        }
    }

    pub fn min(self) -> f64 {
        GroupParams::MIN.get(self)
    }

    pub fn max(self) -> f64 {
        GroupParams::MAX.get(self)
    }

    pub fn default_value(self) -> f64 {
        GroupParams::DEFAULT.get(self)
    }
}

impl fmt::Display for GpField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GpField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GpField::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::input(format!("unknown group parameter `{s}`")))
    }
}

/// Group motion parameters (neighbor distance, radius, preferred speed,
/// group cohesion).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupParams {
    pub neighbor_dist: f64,
    pub radius: f64,
    pub pref_speed: f64,
    pub group_cohesion: f64,
}

impl Default for GroupParams {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl GroupParams {
    pub const MIN: GroupParams = GroupParams {
        neighbor_dist: 3.0,
        radius: 0.3,
        pref_speed: 1.2,
        group_cohesion: 0.1,
    };
    pub const MAX: GroupParams = GroupParams {
        neighbor_dist: 10.0,
        radius: 2.0,
        pref_speed: 2.2,
        group_cohesion: 1.0,
    };
    pub const DEFAULT: GroupParams = GroupParams {
        neighbor_dist: 5.0,
        radius: 0.7,
        pref_speed: 1.5,
        group_cohesion: 0.5,
    };

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            neighbor_dist: v[0],
            radius: v[1],
            pref_speed: v[2],
            group_cohesion: v[3],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.neighbor_dist, self.radius, self.pref_speed, self.group_cohesion]
    }

    pub fn get(&self, field: GpField) -> f64 {
        self.to_array()[field.index()]
    }

    pub fn set(&mut self, field: GpField, value: f64) {
        let mut a = self.to_array();
        a[field.index()] = value;
        *self = Self::from_array(a);
    }

    /// Checks each field against its inclusive bound, naming the first
    /// offending field.
    pub fn validate(&self) -> Result<()> {
        self.validate_with_prefix("")
    }

    pub fn validate_with_prefix(&self, prefix: &str) -> Result<()> {
        for f in GpField::ALL {
            let v = self.get(f);
            if !(v.is_finite() && v >= f.min() && v <= f.max()) {
                return Err(Error::BoundViolation {
                    field: format!("{prefix}{}", f.name()),
                    value: v,
                    min: f.min(),
                    max: f.max(),
                });
            }
        }
        Ok(())
    }

    /// Clamps each field into its bound.
    pub fn clamped(&self) -> Self {
        let mut out = *self;
        for f in GpField::ALL {
            out.set(f, self.get(f).clamp(f.min(), f.max()));
        }
        out
    }

    pub fn to_motion_params(&self) -> MotionParams {
        MotionParams {
            neighbor_dist: self.neighbor_dist,
            max_neighbors: MotionParams::DEFAULT_MAX_NEIGHBORS,
            planning_horizon: MotionParams::DEFAULT_PLANNING_HORIZON,
            radius: self.radius,
            pref_speed: self.pref_speed,
            group_cohesion: self.group_cohesion,
        }
    }

    pub fn from_motion_params(p: &MotionParams) -> Self {
        Self {
            neighbor_dist: p.neighbor_dist,
            radius: p.radius,
            pref_speed: p.pref_speed,
            group_cohesion: p.group_cohesion,
        }
    }
}

/// A set of agents moving together under shared parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub member_ids: Vec<AgentId>,
    pub params: MotionParams,
}

impl Group {
    pub fn new(member_ids: Vec<AgentId>, params: MotionParams, crowd: &CrowdState) -> Result<Self> {
        if member_ids.is_empty() {
            return Err(Error::input("group must have at least one member"));
        }
        if let Some(missing) = member_ids.iter().find(|id| crowd.get(**id).is_none()) {
            return Err(Error::NotFound(*missing));
        }
        params.validate()?;
        Ok(Self { member_ids, params })
    }

    pub fn centroid(&self, crowd: &CrowdState) -> Vec2 {
        let (sum, n) = self
            .member_ids
            .iter()
            .filter_map(|id| crowd.get(*id))
            .fold((Vec2::ZERO, 0usize), |(s, n), a| (s + a.position, n + 1));
        if n == 0 {
            Vec2::ZERO
        } else {
            sum / n as f64
        }
    }
}

/// World bounds and static obstacles.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldGeometry {
    pub bounds: Rect,
    pub obstacles: Vec<Polygon>,
}

impl WorldGeometry {
    pub fn new(bounds: Rect, obstacles: Vec<Polygon>) -> Result<Self> {
        for (i, poly) in obstacles.iter().enumerate() {
            if !poly.vertices().iter().all(|v| bounds.contains(*v)) {
                return Err(Error::validation(
                    format!("obstacles[{i}]"),
                    "obstacle extends outside world bounds",
                ));
            }
        }
        Ok(Self { bounds, obstacles })
    }

    pub fn open(bounds: Rect) -> Self {
        Self {
            bounds,
            obstacles: Vec::new(),
        }
    }

    /// Distance from `p` to the nearest obstacle (infinite when there are none).
    pub fn obstacle_distance(&self, p: Vec2) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Inside bounds and at least `clearance` away from every obstacle.
    pub fn is_free(&self, p: Vec2, clearance: f64) -> bool {
        self.bounds.contains(p) && self.obstacle_distance(p) >= clearance
    }

    pub fn segment_is_free(&self, a: Vec2, b: Vec2, clearance: f64) -> bool {
        self.obstacles
            .iter()
            .all(|o| o.segment_distance(a, b) >= clearance)
    }
}
