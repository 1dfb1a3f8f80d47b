//! TOML scenario schema.
//!
//! ```toml
//! mode = "intervention"        # surveillance | intervention | baseline
//! dt = 0.1
//! duration = 40.0
//! seed = 7
//!
//! [world]
//! bounds = [-15.0, -10.0, 15.0, 10.0]   # min_x, min_y, max_x, max_y
//! start_jitter = 0.0
//!
//! obstacles = [[[x, y], ...], ...]      # top level, before any table
//! zones = [[[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]]]
//!
//! [[pedestrians]]
//! start = [-11.0, 0.5]
//! goal = [12.0, 0.5]
//! group = 1                            # optional
//! params = { radius = 0.3 }            # optional overrides
//!
//! [robots]
//! count = 3
//! starts = [[...], ...]
//! goals = [[...], ...]
//! radius = 0.3
//! horizon = 5.0                        # threat look-ahead, s
//! reaction_scale = 3.0
//! params = { pref_speed = 1.2, ... }   # optional fixed group parameters
//! patrol = [[[x, y], ...], ...]        # optional per-robot waypoint loops
//!
//! [invisibility]
//! mode = "lower_bound"                 # fixed | lower_bound
//! s = 1.0
//! s_min = 0.3
//! ```

use serde::Deserialize;

use super::{Mode, PedestrianSpec, RobotSpec, Scenario};
use crate::agent::{GpField, GroupParams, MotionParams, WorldGeometry};
use crate::edm::{InvisibilityMode, InvisibilitySetting};
use crate::error::{Error, Result};
use crate::geometry::{Polygon, Rect, Vec2};
use crate::nav::RobotDynamics;
use crate::sim::ReactionModel;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    mode: Option<String>,
    dt: Option<f64>,
    duration: Option<f64>,
    seed: Option<u64>,
    world: RawWorld,
    #[serde(default)]
    obstacles: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pedestrians: Vec<RawPedestrian>,
    robots: Option<RawRobots>,
    #[serde(default)]
    zones: Vec<Vec<[f64; 2]>>,
    invisibility: Option<RawInvisibility>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorld {
    bounds: [f64; 4],
    #[serde(default)]
    start_jitter: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPedestrian {
    start: [f64; 2],
    goal: [f64; 2],
    group: Option<u32>,
    params: Option<RawMotion>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMotion {
    neighbor_dist: Option<f64>,
    max_neighbors: Option<usize>,
    planning_horizon: Option<f64>,
    radius: Option<f64>,
    pref_speed: Option<f64>,
    group_cohesion: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroupParams {
    neighbor_dist: f64,
    radius: f64,
    pref_speed: f64,
    group_cohesion: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobots {
    count: Option<usize>,
    #[serde(default)]
    starts: Vec<[f64; 2]>,
    #[serde(default)]
    goals: Vec<[f64; 2]>,
    radius: Option<f64>,
    horizon: Option<f64>,
    reaction_scale: Option<f64>,
    v_max: Option<f64>,
    v_min: Option<f64>,
    omega_max: Option<f64>,
    params: Option<RawGroupParams>,
    patrol: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInvisibility {
    mode: Option<String>,
    s: Option<f64>,
    s_min: Option<f64>,
}

fn v(p: [f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

/// 1-based line of byte offset `pos`.
fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Best-effort line for a dotted field path such as
/// `pedestrians[3].params.radius`.
fn locate(text: &str, path: &str) -> Option<usize> {
    let mut pos = 0usize;
    let mut found_any = false;
    for seg in path.split('.') {
        let (name, idx) = match seg.split_once('[') {
            Some((n, rest)) => (n, rest.trim_end_matches(']').parse::<usize>().ok()),
            None => (seg, None),
        };
        let hit = match idx {
            Some(i) => {
                let header = format!("[[{name}]]");
                text[pos..].match_indices(&header).nth(i).map(|(o, _)| pos + o).or_else(|| {
                    find_key(&text[pos..], name).map(|o| pos + o)
                })
            }
            None => {
                let header = format!("[{name}]");
                text[pos..]
                    .find(&header)
                    .map(|o| pos + o)
                    .or_else(|| find_key(&text[pos..], name).map(|o| pos + o))
            }
        };
        match hit {
            Some(h) => {
                pos = h;
                found_any = true;
            }
            None => break,
        }
    }
    found_any.then(|| line_of(text, pos))
}

fn find_key(hay: &str, key: &str) -> Option<usize> {
    let bytes = hay.as_bytes();
    hay.match_indices(key).map(|(o, _)| o).find(|&o| {
        let before_ok = o == 0 || !(bytes[o - 1].is_ascii_alphanumeric() || bytes[o - 1] == b'_');
        let rest = hay[o + key.len()..].trim_start();
        before_ok && rest.starts_with('=')
    })
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, path: impl Into<String>, message: impl Into<String>) -> Error {
        let path = path.into();
        Error::Validation {
            line: locate(self.text, &path),
            path,
            message: message.into(),
        }
    }

    /// Re-labels bound violations and other validation failures with the
    /// field path prefix and a line.
    fn wrap(&self, prefix: &str, e: Error) -> Error {
        match e {
            Error::BoundViolation { field, value, min, max } => {
                let path = if field.starts_with(prefix) {
                    field
                } else {
                    format!("{prefix}{field}")
                };
                let line = locate(self.text, &path);
                Error::Validation {
                    path,
                    line,
                    message: format!("bound violation: {value} is outside [{min}, {max}]"),
                }
            }
            Error::Validation { .. } => e,
            other => self.err(prefix.trim_end_matches('.'), other.to_string()),
        }
    }
}

fn polygon(ctx: &Ctx<'_>, path: String, pts: &[[f64; 2]]) -> Result<Polygon> {
    Polygon::new(pts.iter().copied().map(v).collect()).map_err(|e| ctx.err(path, e.to_string()))
}

fn finite_point(ctx: &Ctx<'_>, path: String, p: [f64; 2]) -> Result<Vec2> {
    if p.iter().all(|x| x.is_finite()) {
        Ok(v(p))
    } else {
        Err(ctx.err(path, "coordinates must be finite"))
    }
}

fn check_free(ctx: &Ctx<'_>, world: &WorldGeometry, path: String, p: Vec2) -> Result<()> {
    if !world.bounds.contains(p) {
        return Err(ctx.err(path, format!("point ({}, {}) lies outside the world bounds", p.x, p.y)));
    }
    if world.obstacles.iter().any(|o| o.contains_inclusive(p)) {
        return Err(ctx.err(path, format!("point ({}, {}) lies inside an obstacle", p.x, p.y)));
    }
    Ok(())
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let ctx = Ctx { text };

    let mode = match raw.mode.as_deref().unwrap_or("baseline") {
        "surveillance" => Mode::Surveillance,
        "intervention" => Mode::Intervention,
        "baseline" => Mode::Baseline,
        other => {
            return Err(ctx.err(
                "mode",
                format!("unknown mode `{other}` (expected surveillance, intervention or baseline)"),
            ))
        }
    };
    let dt = raw.dt.unwrap_or(crate::agent::DEFAULT_DT);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ctx.err("dt", "must be positive"));
    }
    let duration = raw.duration.unwrap_or(30.0);
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(ctx.err("duration", "must be positive"));
    }

    let [x0, y0, x1, y1] = raw.world.bounds;
    let bounds = Rect::new(Vec2::new(x0, y0), Vec2::new(x1, y1)).map_err(|e| ctx.err("world.bounds", e.to_string()))?;
    if !(raw.world.start_jitter >= 0.0 && raw.world.start_jitter.is_finite()) {
        return Err(ctx.err("world.start_jitter", "must be non-negative"));
    }
    let mut obstacles = Vec::with_capacity(raw.obstacles.len());
    for (i, o) in raw.obstacles.iter().enumerate() {
        obstacles.push(polygon(&ctx, format!("obstacles[{i}]"), o)?);
    }
    let world = WorldGeometry::new(bounds, obstacles).map_err(|e| ctx.err("obstacles", e.to_string()))?;

    let mut pedestrians = Vec::with_capacity(raw.pedestrians.len());
    for (i, p) in raw.pedestrians.iter().enumerate() {
        let path = format!("pedestrians[{i}]");
        let start = finite_point(&ctx, format!("{path}.start"), p.start)?;
        let goal = finite_point(&ctx, format!("{path}.goal"), p.goal)?;
        check_free(&ctx, &world, format!("{path}.start"), start)?;
        check_free(&ctx, &world, format!("{path}.goal"), goal)?;
        let m = p.params.as_ref();
        let d = MotionParams::default();
        let params = MotionParams {
            neighbor_dist: m.and_then(|m| m.neighbor_dist).unwrap_or(d.neighbor_dist),
            max_neighbors: m.and_then(|m| m.max_neighbors).unwrap_or(d.max_neighbors),
            planning_horizon: m.and_then(|m| m.planning_horizon).unwrap_or(d.planning_horizon),
            radius: m.and_then(|m| m.radius).unwrap_or(d.radius),
            pref_speed: m.and_then(|m| m.pref_speed).unwrap_or(d.pref_speed),
            group_cohesion: m.and_then(|m| m.group_cohesion).unwrap_or(d.group_cohesion),
        };
        let prefix = format!("{path}.params.");
        GroupParams::from_motion_params(&params)
            .validate_with_prefix(&prefix)
            .map_err(|e| ctx.wrap(&prefix, e))?;
        params.validate().map_err(|e| ctx.wrap(&prefix, e))?;
        pedestrians.push(PedestrianSpec {
            start,
            goal,
            params,
            group: p.group,
        });
    }

    let robots = match &raw.robots {
        None => RobotSpec::none(),
        Some(r) => parse_robots(&ctx, &world, r)?,
    };

    let mut zones = Vec::with_capacity(raw.zones.len());
    for (i, z) in raw.zones.iter().enumerate() {
        zones.push(polygon(&ctx, format!("zones[{i}]"), z)?);
    }
    if mode == Mode::Intervention && zones.is_empty() {
        return Err(ctx.err("zones", "intervention mode needs at least one zone"));
    }
    if mode == Mode::Intervention && robots.count() == 0 {
        return Err(ctx.err("robots", "intervention mode needs robots"));
    }

    let invisibility = match &raw.invisibility {
        None => InvisibilitySetting::fixed(1.0),
        Some(inv) => {
            let m = match inv.mode.as_deref().unwrap_or("fixed") {
                "fixed" => InvisibilityMode::FixedS,
                "lower_bound" => InvisibilityMode::LowerBound,
                other => {
                    return Err(ctx.err(
                        "invisibility.mode",
                        format!("unknown mode `{other}` (expected fixed or lower_bound)"),
                    ))
                }
            };
            let setting = InvisibilitySetting {
                mode: m,
                s: inv.s.unwrap_or(1.0),
                s_min: inv.s_min.unwrap_or(0.0),
            };
            for (name, val) in [("s", setting.s), ("s_min", setting.s_min)] {
                if !(0.0..=1.0).contains(&val) {
                    return Err(ctx.err(format!("invisibility.{name}"), format!("{val} is outside [0, 1]")));
                }
            }
            setting
        }
    };

    Ok(Scenario {
        mode,
        dt,
        duration,
        seed: raw.seed.unwrap_or(0),
        world,
        start_jitter: raw.world.start_jitter,
        pedestrians,
        robots,
        zones,
        invisibility,
    })
}

fn parse_robots(ctx: &Ctx<'_>, world: &WorldGeometry, r: &RawRobots) -> Result<RobotSpec> {
    let count = r.count.unwrap_or(super::DEFAULT_ROBOT_COUNT);
    if r.starts.len() != count {
        return Err(ctx.err(
            "robots.starts",
            format!("expected {count} start positions, found {}", r.starts.len()),
        ));
    }
    if r.goals.len() != count {
        return Err(ctx.err(
            "robots.goals",
            format!("expected {count} goal positions, found {}", r.goals.len()),
        ));
    }
    let mut starts = Vec::with_capacity(count);
    let mut goals = Vec::with_capacity(count);
    for i in 0..count {
        let s = finite_point(ctx, format!("robots.starts[{i}]"), r.starts[i])?;
        let g = finite_point(ctx, format!("robots.goals[{i}]"), r.goals[i])?;
        check_free(ctx, world, "robots.starts".into(), s)?;
        check_free(ctx, world, "robots.goals".into(), g)?;
        starts.push(s);
        goals.push(g);
    }
    let radius = r.radius.unwrap_or(super::DEFAULT_ROBOT_RADIUS);
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(ctx.err("robots.radius", "must be positive"));
    }
    let horizon = r.horizon.unwrap_or(super::DEFAULT_THREAT_HORIZON);
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(ctx.err("robots.horizon", "must be positive"));
    }
    let scale = r.reaction_scale.unwrap_or(ReactionModel::default().max_scale);
    if !(scale >= 1.0 && scale.is_finite()) {
        return Err(ctx.err("robots.reaction_scale", "must be at least 1"));
    }
    let base = RobotDynamics::default();
    let dynamics = RobotDynamics {
        v_max: r.v_max.unwrap_or(base.v_max),
        v_min: r.v_min.unwrap_or(base.v_min),
        omega_max: r.omega_max.unwrap_or(base.omega_max),
        heading: 0.0,
    };
    dynamics.validate().map_err(|e| ctx.err("robots", e.to_string()))?;
    let params = match &r.params {
        None => None,
        Some(p) => {
            let mut gp = GroupParams::DEFAULT;
            gp.set(GpField::NeighborDist, p.neighbor_dist);
            gp.set(GpField::Radius, p.radius);
            gp.set(GpField::PrefSpeed, p.pref_speed);
            gp.set(GpField::GroupCohesion, p.group_cohesion);
            gp.validate_with_prefix("robots.params.")
                .map_err(|e| ctx.wrap("robots.params.", e))?;
            Some(gp)
        }
    };
    let patrol = match &r.patrol {
        None => None,
        Some(loops) => {
            if loops.len() != count {
                return Err(ctx.err(
                    "robots.patrol",
                    format!("expected {count} waypoint loops, found {}", loops.len()),
                ));
            }
            let mut out = Vec::with_capacity(count);
            for (i, l) in loops.iter().enumerate() {
                if l.is_empty() {
                    return Err(ctx.err(format!("robots.patrol[{i}]"), "needs at least one waypoint"));
                }
                let mut pts = Vec::with_capacity(l.len());
                for p in l {
                    let q = finite_point(ctx, "robots.patrol".into(), *p)?;
                    check_free(ctx, world, "robots.patrol".into(), q)?;
                    pts.push(q);
                }
                out.push(pts);
            }
            Some(out)
        }
    };
    Ok(RobotSpec {
        starts,
        goals,
        radius,
        horizon,
        reaction: ReactionModel { max_scale: scale },
        dynamics,
        params,
        patrol,
    })
}
