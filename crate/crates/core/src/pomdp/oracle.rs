//! Independent cross-checks for the exact solver.
//!
//! Neither routine touches the piecewise-linear machinery: the grid DP works
//! on sampled values with linear interpolation, and the enumerator tracks
//! joint state probabilities along the observation tree directly.

use thiserror::Error;

use super::ChannelParams;

/// Value functions sampled on a uniform belief grid.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub grid: Vec<f64>,
    /// `J_l` at each grid point, `l = 0 .. N-1`.
    pub values: Vec<Vec<f64>>,
    /// `A_l` at each grid point, `l = 0 .. N-2`.
    pub continue_values: Vec<Vec<f64>>,
    /// First grid belief with `A_l <= C`; 1 when there is none.
    pub thresholds: Vec<f64>,
}

impl GridSolution {
    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }
}

fn interpolate(values: &[f64], b: f64) -> f64 {
    let n = values.len() - 1;
    let x = b.clamp(0.0, 1.0) * n as f64;
    let i = (x.floor() as usize).min(n - 1);
    let t = x - i as f64;
    values[i] * (1.0 - t) + values[i + 1] * t
}

/// Backward DP on `grid_n + 1` equally spaced beliefs.
pub fn grid_dp_oracle(p: &ChannelParams, grid_n: usize) -> GridSolution {
    assert!(grid_n >= 1, "grid needs at least two points");
    let (q, s, k, c) = (p.q(), p.s(), p.k(), p.cost());
    let grid: Vec<f64> = (0..=grid_n).map(|i| i as f64 / grid_n as f64).collect();

    // Per grid point: P(ACK | b), and the post-failure belief by Bayes on
    // the joint (next state, missing ACK) probabilities.
    let mut p_ack = Vec::with_capacity(grid.len());
    let mut after_miss = Vec::with_capacity(grid.len());
    for &b in &grid {
        let good_next = b * q + (1.0 - b) * s;
        let miss_and_good = good_next * (1.0 - k);
        let miss_and_bad = 1.0 - good_next;
        let miss = miss_and_good + miss_and_bad;
        p_ack.push(good_next * k);
        after_miss.push(if miss > 0.0 { miss_and_good / miss } else { 0.0 });
    }

    let terminal: Vec<f64> = grid.iter().map(|&b| (1.0 - k * b) * c).collect();
    let mut values = vec![terminal];
    let mut continue_values = Vec::new();
    for _ in 0..p.horizon() - 1 {
        let next = values.last().expect("nonempty");
        let next_at_one = next[grid_n];
        let cont: Vec<f64> = grid
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                (1.0 - k * b) * c + p_ack[i] * next_at_one + (1.0 - p_ack[i]) * interpolate(next, after_miss[i])
            })
            .collect();
        let value = cont.iter().map(|&a| a.min(c)).collect();
        continue_values.push(cont);
        values.push(value);
    }
    values.reverse();
    continue_values.reverse();

    let thresholds = continue_values
        .iter()
        .map(|cont| {
            cont.iter()
                .position(|&a| a <= c)
                .map(|i| grid[i])
                .unwrap_or(1.0)
        })
        .collect();

    GridSolution {
        grid,
        values,
        continue_values,
        thresholds,
    }
}

pub const MAX_ENUMERATION_HORIZON: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("horizon too large for enumeration (N = {0}, max {MAX_ENUMERATION_HORIZON})")]
    HorizonTooLarge(usize),
}

/// Expected cost of every deterministic history-dependent policy.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub costs: Vec<f64>,
}

impl Enumeration {
    pub fn best(&self) -> f64 {
        self.costs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Unnormalised knowledge at a node of the observation tree: probability
/// mass of (history, current state good) and (history, current state bad).
#[derive(Debug, Clone, Copy)]
struct Joint {
    good: f64,
    bad: f64,
}

impl Joint {
    fn belief(self) -> f64 {
        let total = self.good + self.bad;
        if total > 0.0 {
            self.good / total
        } else {
            0.0
        }
    }
}

fn policy_costs(p: &ChannelParams, node: Joint, slot: usize) -> Vec<f64> {
    let (q, s, k, c) = (p.q(), p.s(), p.k(), p.cost());
    let b = node.belief();
    let loss = (1.0 - k * b) * c;
    if slot + 1 == p.horizon() {
        return vec![loss];
    }
    // Propagate one step, then split on the observation.
    let good_next = node.good * q + node.bad * s;
    let bad_next = node.good * (1.0 - q) + node.bad * (1.0 - s);
    let total = node.good + node.bad;
    let ack = Joint {
        good: good_next * k,
        bad: 0.0,
    };
    let miss = Joint {
        good: good_next * (1.0 - k),
        bad: bad_next,
    };
    let p_ack = (ack.good + ack.bad) / total;
    let p_miss = (miss.good + miss.bad) / total;

    let after_ack = if p_ack > 0.0 { policy_costs(p, ack, slot + 1) } else { vec![0.0] };
    let after_miss = if p_miss > 0.0 { policy_costs(p, miss, slot + 1) } else { vec![0.0] };

    let mut out = Vec::with_capacity(1 + after_ack.len() * after_miss.len());
    out.push(c);
    for &ca in &after_ack {
        for &cm in &after_miss {
            out.push(loss + p_ack * ca + p_miss * cm);
        }
    }
    out
}

/// Enumerates all policies over the observation tree for `N <= 4`.
pub fn brute_force_policy_oracle(p: &ChannelParams, b0: f64) -> Result<Enumeration, OracleError> {
    if p.horizon() > MAX_ENUMERATION_HORIZON {
        return Err(OracleError::HorizonTooLarge(p.horizon()));
    }
    let root = Joint {
        good: b0,
        bad: 1.0 - b0,
    };
    Ok(Enumeration {
        costs: policy_costs(p, root, 0),
    })
}
