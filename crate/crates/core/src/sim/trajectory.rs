use crate::agent::{AgentId, AgentKind, CrowdState};
use crate::error::{Error, Result};
use crate::geometry::Vec2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub frame: u32,
    pub position: Vec2,
}

/// Time-ordered positions of one agent at a uniform frame interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub agent_id: AgentId,
    pub kind: AgentKind,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn new(agent_id: AgentId, kind: AgentKind, samples: Vec<Sample>) -> Result<Self> {
        let t = Self {
            agent_id,
            kind,
            samples,
        };
        t.validate()?;
        Ok(t)
    }

    /// Frames strictly increasing with a constant step.
    pub fn validate(&self) -> Result<()> {
        if self.samples.iter().any(|s| !s.position.is_finite()) {
            return Err(Error::input(format!("agent {} has non-finite positions", self.agent_id)));
        }
        let steps: Vec<i64> = self
            .samples
            .windows(2)
            .map(|w| i64::from(w[1].frame) - i64::from(w[0].frame))
            .collect();
        if steps.iter().any(|d| *d <= 0) {
            return Err(Error::input(format!(
                "agent {}: frames must be strictly increasing",
                self.agent_id
            )));
        }
        if steps.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::input(format!(
                "agent {}: frame interval is not uniform",
                self.agent_id
            )));
        }
        Ok(())
    }

    pub fn frame_step(&self) -> u32 {
        match self.samples.as_slice() {
            [a, b, ..] => b.frame - a.frame,
            _ => 1,
        }
    }

    pub fn position_at(&self, frame: u32) -> Option<Vec2> {
        self.samples
            .binary_search_by_key(&frame, |s| s.frame)
            .ok()
            .map(|i| self.samples[i].position)
    }

    /// Sub-trajectory of `len` samples starting at index `start`.
    pub fn window(&self, start: usize, len: usize) -> Self {
        let end = (start + len).min(self.samples.len());
        Self {
            agent_id: self.agent_id,
            kind: self.kind,
            samples: self.samples[start.min(end)..end].to_vec(),
        }
    }
}

/// Positions of every agent at every frame of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub dt: f64,
    /// (id, kind, radius) in crowd order.
    pub agents: Vec<(AgentId, AgentKind, f64)>,
    pub frames: Vec<Vec<Vec2>>,
}

impl Recording {
    pub fn new(dt: f64, initial: &CrowdState) -> Self {
        let mut rec = Self {
            dt,
            agents: initial.agents.iter().map(|a| (a.id, a.kind, a.radius)).collect(),
            frames: Vec::new(),
        };
        rec.push(initial);
        rec
    }

    pub fn push(&mut self, crowd: &CrowdState) {
        debug_assert_eq!(crowd.agents.len(), self.agents.len());
        self.frames.push(crowd.agents.iter().map(|a| a.position).collect());
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn agent_index(&self, id: AgentId) -> Option<usize> {
        self.agents.iter().position(|a| a.0 == id)
    }

    pub fn trajectory(&self, id: AgentId) -> Option<Trajectory> {
        let idx = self.agent_index(id)?;
        let (agent_id, kind, _) = self.agents[idx];
        Some(Trajectory {
            agent_id,
            kind,
            samples: self
                .frames
                .iter()
                .enumerate()
                .map(|(f, ps)| Sample {
                    frame: f as u32,
                    position: ps[idx],
                })
                .collect(),
        })
    }

    /// Per-agent trajectories ordered by id.
    pub fn trajectories(&self) -> Vec<Trajectory> {
        let mut ids: Vec<AgentId> = self.agents.iter().map(|a| a.0).collect();
        ids.sort_unstable();
        ids.into_iter().filter_map(|id| self.trajectory(id)).collect()
    }

    /// Smallest gap `|p_i − p_j| − (r_i + r_j)` over all pairs and frames,
    /// with the frame and pair where it occurs.
    pub fn min_clearance(&self) -> Option<(f64, usize, AgentId, AgentId)> {
        let mut best: Option<(f64, usize, AgentId, AgentId)> = None;
        for (f, ps) in self.frames.iter().enumerate() {
            for i in 0..ps.len() {
                for j in (i + 1)..ps.len() {
                    let gap = ps[i].distance(ps[j]) - self.agents[i].2 - self.agents[j].2;
                    if best.is_none_or(|b| gap < b.0) {
                        best = Some((gap, f, self.agents[i].0, self.agents[j].0));
                    }
                }
            }
        }
        best
    }

    /// Distinct agent pairs that ever overlap by more than `tolerance`.
    pub fn collision_pairs(&self, tolerance: f64) -> Vec<(AgentId, AgentId)> {
        let n = self.agents.len();
        let mut hit = vec![false; n * n];
        for ps in &self.frames {
            for i in 0..n {
                for j in (i + 1)..n {
                    if ps[i].distance(ps[j]) < self.agents[i].2 + self.agents[j].2 - tolerance {
                        hit[i * n + j] = true;
                    }
                }
            }
        }
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if hit[i * n + j] {
                    let (a, b) = (self.agents[i].0, self.agents[j].0);
                    pairs.push((a.min(b), a.max(b)));
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }
}
