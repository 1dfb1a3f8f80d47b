//! Entitativity-aware navigation for groups of robots moving through
//! pedestrian crowds.
//!
//! The crate is organized bottom-up:
//!
//! * [`agent`] and [`geometry`]: agent state, motion parameters, world geometry.
//! * [`edm`]: the linear entitativity mapping, social invisibility, and the
//!   study statistics that produce the mapping.
//! * [`sim`]: reciprocal-velocity crowd simulation, parameter fitting and
//!   path prediction.
//! * [`nav`]: roadmap planning, velocity-obstacle control for non-holonomic
//!   robots, invisible navigation and intervention.
//! * [`scenarios`]: scenario files, paired runs and metrics.
//! * [`io`]: text formats for trajectories, study data and matrices.

pub mod agent;
pub mod edm;
pub mod error;
pub mod geometry;
pub mod io;
pub mod nav;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
