//! Uniform-grid roadmap over free space and shortest-path queries.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::agent::{AgentState, WorldGeometry};
use crate::error::{Error, Result};
use crate::geometry::{unit_or_zero, Vec2};

pub const DEFAULT_SPACING: f64 = 0.5;

/// How many path nodes ahead are tested for line of sight when picking the
/// next waypoint.
const LOOKAHEAD: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct Roadmap {
    pub nodes: Vec<Vec2>,
    /// `(a, b, length)` with `a < b`.
    pub edges: Vec<(usize, usize, f64)>,
    pub clearance: f64,
    adjacency: Vec<Vec<(usize, f64)>>,
}

/// 8-connected grid roadmap with the default 0.5 m spacing.
pub fn build_roadmap(world: &WorldGeometry, clearance: f64) -> Result<Roadmap> {
    build_roadmap_with_spacing(world, clearance, DEFAULT_SPACING)
}

pub fn build_roadmap_with_spacing(world: &WorldGeometry, clearance: f64, spacing: f64) -> Result<Roadmap> {
    if !(spacing > 0.0) || !(clearance >= 0.0) {
        return Err(Error::input("roadmap spacing must be positive and clearance non-negative"));
    }
    let b = world.bounds;
    let nx = (b.width() / spacing + 1e-9).floor() as usize + 1;
    let ny = (b.height() / spacing + 1e-9).floor() as usize + 1;
    let mut cell = vec![None; nx * ny];
    let mut nodes = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let p = b.min + Vec2::new(i as f64 * spacing, j as f64 * spacing);
            if world.is_free(p, clearance) {
                cell[j * nx + i] = Some(nodes.len());
                nodes.push(p);
            }
        }
    }
    if nodes.is_empty() {
        return Err(Error::World("no free roadmap nodes at the requested clearance".into()));
    }
    let mut edges = Vec::new();
    // Forward half of the 8-neighborhood so each edge is visited once.
    const OFFSETS: [(isize, isize); 4] = [(1, 0), (-1, 1), (0, 1), (1, 1)];
    for j in 0..ny {
        for i in 0..nx {
            let Some(a) = cell[j * nx + i] else { continue };
            for (di, dj) in OFFSETS {
                let (ii, jj) = (i as isize + di, j as isize + dj);
                if ii < 0 || jj < 0 || ii >= nx as isize || jj >= ny as isize {
                    continue;
                }
                let Some(c) = cell[jj as usize * nx + ii as usize] else { continue };
                if world.segment_is_free(nodes[a], nodes[c], clearance) {
                    edges.push((a.min(c), a.max(c), nodes[a].distance(nodes[c])));
                }
            }
        }
    }
    edges.sort_by_key(|e| (e.0, e.1));
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for &(a, c, len) in &edges {
        adjacency[a].push((c, len));
        adjacency[c].push((a, len));
    }
    for adj in &mut adjacency {
        adj.sort_by_key(|e| e.0);
    }
    Ok(Roadmap {
        nodes,
        edges,
        clearance,
        adjacency,
    })
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (dist, node).
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Roadmap {
    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    /// Number of connected components.
    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.nodes.len()];
        let mut count = 0;
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(n) = stack.pop() {
                for &(m, _) in &self.adjacency[n] {
                    if !seen[m] {
                        seen[m] = true;
                        stack.push(m);
                    }
                }
            }
        }
        count
    }

    /// Nearest node with a collision-free straight connection to `p`; ties
    /// go to the lower index.
    pub fn nearest_visible_node(&self, p: Vec2, world: &WorldGeometry) -> Option<usize> {
        let mut order: Vec<(f64, usize)> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.distance_squared(p), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order
            .into_iter()
            .take(64)
            .find(|(_, i)| world.segment_is_free(p, self.nodes[*i], self.clearance))
            .map(|(_, i)| i)
    }

    /// Dijkstra by edge length; among equal-length paths the one settled
    /// through lower node indices wins.
    pub fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[from] = 0.0;
        heap.push(HeapEntry { dist: 0.0, node: from });
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            if node == to {
                break;
            }
            for &(m, len) in &self.adjacency[node] {
                let nd = d + len;
                if nd < dist[m] {
                    dist[m] = nd;
                    prev[m] = node;
                    heap.push(HeapEntry { dist: nd, node: m });
                }
            }
        }
        if !dist[to].is_finite() {
            return None;
        }
        let mut path = vec![to];
        while let Some(&last) = path.last() {
            if last == from {
                break;
            }
            path.push(prev[last]);
        }
        path.reverse();
        Some(path)
    }

    pub fn path_length(&self, path: &[usize]) -> f64 {
        path.windows(2)
            .map(|w| self.nodes[w[0]].distance(self.nodes[w[1]]))
            .sum()
    }
}

/// Direction toward the goal along the roadmap, scaled to `pref_speed`;
/// zero once at the goal.
pub fn global_preferred_velocity(
    robot: &AgentState,
    roadmap: &Roadmap,
    world: &WorldGeometry,
    goal: Vec2,
    pref_speed: f64,
) -> Result<Vec2> {
    Ok(unit_or_zero(next_waypoint(robot.position, roadmap, world, goal)? - robot.position) * pref_speed)
}

/// Point the robot should head for next: the goal itself when it is in
/// line of sight, otherwise the farthest visible node of the shortest
/// roadmap path.
pub fn next_waypoint(position: Vec2, roadmap: &Roadmap, world: &WorldGeometry, goal: Vec2) -> Result<Vec2> {
    if position.distance(goal) <= 1e-9 || world.segment_is_free(position, goal, roadmap.clearance) {
        return Ok(goal);
    }
    let start = roadmap
        .nearest_visible_node(position, world)
        .ok_or_else(|| Error::Planning("robot cannot reach the roadmap".into()))?;
    let end = roadmap
        .nearest_visible_node(goal, world)
        .ok_or_else(|| Error::Planning("goal is not connected to the roadmap".into()))?;
    let path = roadmap
        .shortest_path(start, end)
        .ok_or_else(|| Error::Planning("goal unreachable on the roadmap".into()))?;
    let mut waypoint = roadmap.nodes[path[0]];
    for &node in path.iter().skip(1).take(LOOKAHEAD) {
        let p = roadmap.nodes[node];
        if world.segment_is_free(position, p, roadmap.clearance) {
            waypoint = p;
        } else {
            break;
        }
    }
    if waypoint.distance(position) <= 1e-9 {
        waypoint = path.get(1).map_or(goal, |n| roadmap.nodes[*n]);
    }
    Ok(waypoint)
}
