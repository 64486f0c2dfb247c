use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{check_action, EnvError, EnvSpec, Environment, Step};
use crate::rng::Rng;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Treasure {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Deep Sea Treasure layout.
///
/// Cells below a treasure in the same column are seabed and cannot be
/// entered. The default values make every treasure the unique optimum for
/// some linear scalarization, at both γ = 1 and γ = 0.99.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DstMap {
    pub rows: usize,
    pub cols: usize,
    pub start: (usize, usize),
    pub treasures: Vec<Treasure>,
    pub fuel_cost: f64,
    pub max_episode_steps: usize,
}

impl Default for DstMap {
    fn default() -> Self {
        let cells = [
            (1, 0, 1.0),
            (2, 1, 19.1),
            (3, 2, 27.5),
            (4, 3, 32.8),
            (4, 4, 34.6),
            (4, 5, 36.0),
            (7, 6, 40.2),
            (7, 7, 41.0),
            (9, 8, 43.0),
            (10, 9, 44.1),
        ];
        Self {
            rows: 11,
            cols: 10,
            start: (0, 0),
            treasures: cells
                .iter()
                .map(|&(row, col, value)| Treasure { row, col, value })
                .collect(),
            fuel_cost: -1.0,
            max_episode_steps: 200,
        }
    }
}

impl DstMap {
    fn treasure_at(&self, r: usize, c: usize) -> Option<&Treasure> {
        self.treasures.iter().find(|t| t.row == r && t.col == c)
    }

    /// Open water or a treasure cell.
    pub fn passable(&self, r: usize, c: usize) -> bool {
        r < self.rows
            && c < self.cols
            && !self.treasures.iter().any(|t| t.col == c && r > t.row)
    }

    /// Shortest step count from the start to each treasure (same order as
    /// `treasures`), by breadth-first search. Episodes end on a treasure, so
    /// the search never expands through one.
    pub fn treasure_distances(&self) -> Vec<Option<usize>> {
        let idx = |r: usize, c: usize| r * self.cols + c;
        let mut dist = vec![usize::MAX; self.rows * self.cols];
        let mut queue = VecDeque::new();
        dist[idx(self.start.0, self.start.1)] = 0;
        queue.push_back(self.start);
        while let Some((r, c)) = queue.pop_front() {
            if self.treasure_at(r, c).is_some() {
                continue;
            }
            for a in 0..4 {
                let (nr, nc) = self.step_from(r, c, a);
                if dist[idx(nr, nc)] == usize::MAX {
                    dist[idx(nr, nc)] = dist[idx(r, c)] + 1;
                    queue.push_back((nr, nc));
                }
            }
        }
        self.treasures
            .iter()
            .map(|t| Some(dist[idx(t.row, t.col)]).filter(|&d| d != usize::MAX))
            .collect()
    }

    /// The exact discounted return of the shortest path to each reachable
    /// treasure: `(t·γ^(d−1), fuel·Σ_{j<d} γ^j)`.
    pub fn oracle_points(&self, gamma: f64) -> Vec<Vec<f64>> {
        self.treasures
            .iter()
            .zip(self.treasure_distances())
            .filter_map(|(t, d)| d.map(|d| (t, d)))
            .map(|(t, d)| {
                let fuel: f64 = (0..d).map(|j| gamma.powi(j as i32)).sum();
                vec![t.value * gamma.powi(d as i32 - 1), self.fuel_cost * fuel]
            })
            .collect()
    }

    /// Hypervolume reference: zero treasure, and the fuel of one step more
    /// than the longest monotone path through the grid.
    pub fn hv_reference(&self, gamma: f64) -> Vec<f64> {
        let n = self.rows + self.cols;
        let fuel: f64 = (0..n).map(|j| gamma.powi(j as i32)).sum();
        vec![0.0, self.fuel_cost * fuel]
    }

    /// The cell reached from `(r, c)` by `action`; blocked moves stay put.
    pub fn step_from(&self, r: usize, c: usize, action: usize) -> (usize, usize) {
        let (nr, nc) = match action {
            UP => (r.wrapping_sub(1), c),
            DOWN => (r + 1, c),
            LEFT => (r, c.wrapping_sub(1)),
            _ => (r, c + 1),
        };
        if self.passable(nr, nc) {
            (nr, nc)
        } else {
            (r, c)
        }
    }

    /// Structural checks plus the convexity requirement: every treasure's
    /// oracle point must be the unique maximizer of αᵀp for an interval of
    /// α₁ of positive length, at γ = 1.
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Config(m));
        if self.rows == 0 || self.cols == 0 || self.max_episode_steps == 0 {
            return bad("dst grid and max_episode_steps must be positive".into());
        }
        if !(self.fuel_cost < 0.0) {
            return bad("dst fuel_cost must be negative".into());
        }
        if self.treasures.is_empty() {
            return bad("dst map has no treasures".into());
        }
        for (i, t) in self.treasures.iter().enumerate() {
            if t.row >= self.rows || t.col >= self.cols {
                return bad(format!("treasure {i} at ({}, {}) is off the grid", t.row, t.col));
            }
            if !(t.value.is_finite() && t.value > 0.0) {
                return bad(format!("treasure {i} must have a positive value"));
            }
            if self.treasures[..i].iter().any(|u| u.col == t.col) {
                return bad(format!("two treasures in column {}", t.col));
            }
        }
        if !self.passable(self.start.0, self.start.1) || self.treasure_at(self.start.0, self.start.1).is_some() {
            return bad("dst start cell must be open water".into());
        }
        let dist = self.treasure_distances();
        if let Some(i) = dist.iter().position(|d| d.is_none()) {
            return bad(format!("treasure {i} is unreachable"));
        }
        let mut order: Vec<(usize, f64)> = dist
            .iter()
            .zip(&self.treasures)
            .map(|(d, t)| (d.unwrap(), t.value))
            .collect();
        order.sort_by(|a, b| a.0.cmp(&b.0));
        if order.windows(2).any(|w| w[0].0 == w[1].0 || w[1].1 <= w[0].1) {
            return bad("farther treasures must have strictly larger values".into());
        }
        let pts = self.oracle_points(1.0);
        let supported = supported_points_2d(&pts);
        if supported.iter().any(|s| !s) {
            return bad(format!(
                "front is not convex: {} of {} treasures are never optimal for any weight",
                supported.iter().filter(|s| !**s).count(),
                pts.len()
            ));
        }
        Ok(())
    }
}

/// For each 2-objective point, whether it is the unique maximizer of
/// `a·p₀ + (1−a)·p₁` on an interval of `a ∈ [0,1]` with positive length.
/// Exact: each competitor cuts the feasible interval with one linear
/// inequality.
pub fn supported_points_2d(points: &[Vec<f64>]) -> Vec<bool> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for (j, q) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                // u_p(a) − u_q(a) = d1 + a·(d0 − d1) ≥ 0
                let d0 = p[0] - q[0];
                let d1 = p[1] - q[1];
                let slope = d0 - d1;
                if slope.abs() < 1e-15 {
                    if d1 <= 0.0 {
                        return false;
                    }
                    continue;
                }
                let root = -d1 / slope;
                if slope > 0.0 {
                    lo = lo.max(root);
                } else {
                    hi = hi.min(root);
                }
            }
            hi - lo > 1e-9
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Dst {
    map: DstMap,
    pos: (usize, usize),
    steps: usize,
    running: bool,
}

impl Dst {
    pub fn new(map: DstMap) -> Result<Self, EnvError> {
        map.validate()?;
        Ok(Self {
            pos: map.start,
            map,
            steps: 0,
            running: false,
        })
    }

    pub fn map(&self) -> &DstMap {
        &self.map
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    fn observe(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.map.rows * self.map.cols];
        s[self.pos.0 * self.map.cols + self.pos.1] = 1.0;
        s
    }
}

impl Environment for Dst {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: self.map.rows * self.map.cols,
            num_actions: 4,
            num_objectives: 2,
            max_episode_steps: self.map.max_episode_steps,
        }
    }

    fn reset(&mut self, _rng: &mut Rng) -> Vec<f64> {
        self.pos = self.map.start;
        self.steps = 0;
        self.running = true;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<Step, EnvError> {
        check_action(action, 4)?;
        if !self.running {
            return Err(EnvError::NotRunning);
        }
        self.pos = self.map.step_from(self.pos.0, self.pos.1, action);
        self.steps += 1;
        let treasure = self.map.treasure_at(self.pos.0, self.pos.1).map(|t| t.value);
        let terminal = treasure.is_some();
        let truncated = !terminal && self.steps >= self.map.max_episode_steps;
        self.running = !(terminal || truncated);
        Ok(Step {
            state: self.observe(),
            reward: vec![treasure.unwrap_or(0.0), self.map.fuel_cost],
            terminal,
            truncated,
        })
    }

    fn dst_map(&self) -> Option<&DstMap> {
        Some(&self.map)
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(Self {
            running: false,
            ..self.clone()
        })
    }
}
