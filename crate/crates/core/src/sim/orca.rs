//! Half-plane construction and the incremental 2-D linear programs used to
//! pick a collision-free velocity closest to the preferred one.
//!
//! Follows the RVO2 formulation: a velocity `v` satisfies a line when
//! `det(direction, point − v) ≤ 0`, i.e. it lies on the left of the
//! directed line.

use crate::geometry::Vec2;

const EPSILON: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Line {
    pub point: Vec2,
    pub direction: Vec2,
}

#[inline]
fn det(a: Vec2, b: Vec2) -> f64 {
    a.perp_dot(b)
}

impl Line {
    #[inline]
    pub fn violation(&self, v: Vec2) -> f64 {
        det(self.direction, self.point - v)
    }
}

/// Other party in a reciprocal interaction, as seen from one agent.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Party {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    /// Share of the avoidance this agent takes on (0.5 reciprocal, 1.0 when
    /// the other party does not adapt).
    pub responsibility: f64,
}

/// ORCA half-plane for one neighbor.
pub(crate) fn agent_line(
    position: Vec2,
    velocity: Vec2,
    radius: f64,
    other: &Party,
    time_horizon: f64,
    dt: f64,
) -> Line {
    let inv_time_horizon = 1.0 / time_horizon;
    let relative_position = other.position - position;
    let relative_velocity = velocity - other.velocity;
    let dist_sq = relative_position.length_squared();
    let combined_radius = radius + other.radius;
    let combined_radius_sq = combined_radius * combined_radius;

    let direction;
    let u;
    if dist_sq > combined_radius_sq {
        // No collision yet.
        let w = relative_velocity - relative_position * inv_time_horizon;
        let w_length_sq = w.length_squared();
        let dot1 = w.dot(relative_position);
        if dot1 < 0.0 && dot1 * dot1 > combined_radius_sq * w_length_sq {
            // Project on the cut-off circle.
            let w_length = w_length_sq.sqrt();
            let unit_w = w / w_length;
            direction = Vec2::new(unit_w.y, -unit_w.x);
            u = unit_w * (combined_radius * inv_time_horizon - w_length);
        } else {
            // Project on the nearer leg.
            let leg = (dist_sq - combined_radius_sq).sqrt();
            direction = if det(relative_position, w) > 0.0 {
                Vec2::new(
                    relative_position.x * leg - relative_position.y * combined_radius,
                    relative_position.x * combined_radius + relative_position.y * leg,
                ) / dist_sq
            } else {
                -Vec2::new(
                    relative_position.x * leg + relative_position.y * combined_radius,
                    -relative_position.x * combined_radius + relative_position.y * leg,
                ) / dist_sq
            };
            let dot2 = relative_velocity.dot(direction);
            u = direction * dot2 - relative_velocity;
        }
    } else {
        // Already overlapping: resolve within one time step.
        let inv_dt = 1.0 / dt;
        let w = relative_velocity - relative_position * inv_dt;
        let w_length = w.length();
        let unit_w = if w_length > EPSILON { w / w_length } else { Vec2::X };
        direction = Vec2::new(unit_w.y, -unit_w.x);
        u = unit_w * (combined_radius * inv_dt - w_length);
    }
    Line {
        point: velocity + u * other.responsibility,
        direction,
    }
}

/// Half-plane forbidding any approach toward `center` (moving with
/// `center_velocity`); `None` when the two points coincide.
pub(crate) fn no_approach_line(position: Vec2, center: Vec2, center_velocity: Vec2) -> Option<Line> {
    let offset = position - center;
    let dist = offset.length();
    if dist < EPSILON {
        return None;
    }
    let n = offset / dist;
    Some(Line {
        point: center_velocity,
        direction: Vec2::new(n.y, -n.x),
    })
}

/// Half-plane keeping the agent on its side of a static boundary point
/// `closest` (nearest point of an obstacle edge) for `time_horizon`.
pub(crate) fn boundary_line(position: Vec2, radius: f64, closest: Vec2, time_horizon: f64, dt: f64) -> Option<Line> {
    let offset = closest - position;
    let dist = offset.length();
    if dist < EPSILON {
        return None;
    }
    let n = offset / dist;
    let limit = if dist > radius {
        (dist - radius) / time_horizon
    } else {
        (dist - radius) / dt
    };
    Some(Line {
        point: n * limit,
        direction: Vec2::new(-n.y, n.x),
    })
}

fn linear_program1(
    lines: &[Line],
    line_no: usize,
    radius: f64,
    opt_velocity: Vec2,
    direction_opt: bool,
    result: &mut Vec2,
) -> bool {
    let line = lines[line_no];
    let dot = line.point.dot(line.direction);
    let discriminant = dot * dot + radius * radius - line.point.length_squared();
    if discriminant < 0.0 {
        // Max speed circle fully invalidates this line.
        return false;
    }
    let sqrt_disc = discriminant.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for prev in &lines[..line_no] {
        let denominator = det(line.direction, prev.direction);
        let numerator = det(prev.direction, line.point - prev.point);
        if denominator.abs() <= EPSILON {
            // Parallel lines.
            if numerator < 0.0 {
                return false;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return false;
        }
    }

    *result = if direction_opt {
        if opt_velocity.dot(line.direction) > 0.0 {
            line.point + line.direction * t_right
        } else {
            line.point + line.direction * t_left
        }
    } else {
        let t = line.direction.dot(opt_velocity - line.point);
        line.point + line.direction * t.clamp(t_left, t_right)
    };
    true
}

/// Returns the number of lines satisfied; equals `lines.len()` on success.
fn linear_program2(
    lines: &[Line],
    radius: f64,
    opt_velocity: Vec2,
    direction_opt: bool,
    result: &mut Vec2,
) -> usize {
    *result = if direction_opt {
        opt_velocity * radius
    } else if opt_velocity.length_squared() > radius * radius {
        opt_velocity.normalize() * radius
    } else {
        opt_velocity
    };
    for i in 0..lines.len() {
        if lines[i].violation(*result) > 0.0 {
            let temp = *result;
            if !linear_program1(lines, i, radius, opt_velocity, direction_opt, result) {
                *result = temp;
                return i;
            }
        }
    }
    lines.len()
}

/// Minimizes the maximum violation of the soft (agent) lines while keeping
/// the first `num_hard` lines satisfied.
fn linear_program3(lines: &[Line], num_hard: usize, begin: usize, radius: f64, result: &mut Vec2) {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        if lines[i].violation(*result) > distance {
            let mut proj: Vec<Line> = lines[..num_hard].to_vec();
            for j in num_hard..i {
                let determinant = det(lines[i].direction, lines[j].direction);
                let point = if determinant.abs() <= EPSILON {
                    if lines[i].direction.dot(lines[j].direction) > 0.0 {
                        continue;
                    }
                    (lines[i].point + lines[j].point) * 0.5
                } else {
                    lines[i].point
                        + lines[i].direction
                            * (det(lines[j].direction, lines[i].point - lines[j].point) / determinant)
                };
                let direction = (lines[j].direction - lines[i].direction).normalize_or_zero();
                proj.push(Line { point, direction });
            }
            let temp = *result;
            let opt = Vec2::new(-lines[i].direction.y, lines[i].direction.x);
            if linear_program2(&proj, radius, opt, true, result) < proj.len() {
                // Numerical failure; keep the previous best.
                *result = temp;
            }
            distance = lines[i].violation(*result);
        }
    }
}

/// Solves for the velocity within `max_speed` nearest `preferred` subject to
/// `lines`; the first `num_hard` lines are never relaxed. Returns the
/// velocity and whether every line could be satisfied.
pub(crate) fn solve(lines: &[Line], num_hard: usize, max_speed: f64, preferred: Vec2) -> (Vec2, bool) {
    let mut result = Vec2::ZERO;
    let fail = linear_program2(lines, max_speed, preferred, false, &mut result);
    if fail < lines.len() {
        linear_program3(lines, num_hard, fail, max_speed, &mut result);
        (result, false)
    } else {
        (result, true)
    }
}
