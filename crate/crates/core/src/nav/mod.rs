//! Robot navigation: global roadmap guidance, sampled velocity-obstacle
//! control for car-like robots, and the group behaviors built on top.

mod gvo;
mod planner;
mod roadmap;

pub use gvo::{
    candidate_controls, control_velocity, gvo_select, Control, CLEARANCE_BUFFER, GvoConfig, GvoResult, MovingDisc, RobotDynamics,
};
pub use planner::{
    blocking_goal, detect_threats, intervention_step, invisible_nav_step, navigate_with_params, urgency, InterventionCommand,
    InterventionOutcome, NavContext, NavController, NavMode, Patrol, RobotTeam, Threat, ARRIVAL_TOLERANCE,
    BLOCK_STANDOFF, SHARED_ENTRY_DISTANCE,
};
pub use roadmap::{
    build_roadmap, build_roadmap_with_spacing, global_preferred_velocity, next_waypoint, Roadmap, DEFAULT_SPACING,
};
