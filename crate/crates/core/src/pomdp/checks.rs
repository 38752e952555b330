//! Structural properties of the exact solution, each reduced to a single
//! "worst deviation" number so that suites can report how close they came.

use super::oracle::{brute_force_policy_oracle, grid_dp_oracle, OracleError};
use super::{failure_fixed_point, failure_map, failure_run_policy, ChannelParams, DpSolution, RunLength};

/// Result of one property over one or more parameter sets.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    /// Parameters at which the worst deviation occurred.
    pub worst_at: Option<String>,
}

impl CheckOutcome {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_deviation: 0.0,
            tolerance,
            worst_at: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance
    }

    /// Folds in one observation; NaN counts as an infinite deviation.
    pub fn record(&mut self, deviation: f64, at: impl FnOnce() -> String) {
        let dev = if deviation.is_nan() { f64::INFINITY } else { deviation };
        if dev > self.max_deviation || (self.worst_at.is_none() && dev > self.tolerance) {
            self.max_deviation = dev;
            self.worst_at = Some(at());
        }
    }
}

pub fn describe(p: &ChannelParams) -> String {
    format!("q={} s={} k={} C={} N={}", p.q(), p.s(), p.k(), p.cost(), p.horizon())
}

pub fn unit_grid(points: usize) -> Vec<f64> {
    (0..points).map(|i| i as f64 / (points - 1) as f64).collect()
}

/// Largest amount by which `J_l` falls below the chord on sampled pairs.
pub fn concavity_gap(sol: &DpSolution, grid: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let n = grid.len();
    for value in sol.values() {
        let sampled: Vec<f64> = grid.iter().map(|&b| value.eval(b)).collect();
        for stride in [1usize, 3, 17, 101, 250, 500] {
            for i in 0..n.saturating_sub(2 * stride) {
                let (b1, b2) = (grid[i], grid[i + 2 * stride]);
                let mid = value.eval(0.5 * (b1 + b2));
                let chord = 0.5 * (sampled[i] + sampled[i + 2 * stride]);
                worst = worst.max(chord - mid);
            }
        }
    }
    worst
}

/// Largest violation of `J_l >= J_{l+1}` and `A_l >= A_{l+1}`.
pub fn slot_monotonicity_gap(sol: &DpSolution, grid: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for pair in sol.values().windows(2) {
        for &b in grid {
            worst = worst.max(pair[1].eval(b) - pair[0].eval(b));
        }
    }
    for pair in sol.continue_values().windows(2) {
        for &b in grid {
            worst = worst.max(pair[1].eval(b) - pair[0].eval(b));
        }
    }
    worst
}

/// Largest increase of `A_l` between consecutive grid beliefs.
pub fn belief_monotonicity_gap(sol: &DpSolution, grid: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for cont in sol.continue_values() {
        let mut prev = cont.eval(grid[0]);
        for &b in &grid[1..] {
            let v = cont.eval(b);
            worst = worst.max(v - prev);
            prev = v;
        }
    }
    worst
}

/// Largest increase `α_{l+1} - α_l`.
pub fn threshold_monotonicity_gap(sol: &DpSolution) -> f64 {
    sol.thresholds()
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max)
}

/// Grid beliefs where the threshold rule disagrees with `A_l(b) <= C`.
/// Points within `slack` of the crossing are ignored.
pub fn threshold_structure_mismatches(sol: &DpSolution, grid: &[f64], slack: f64) -> usize {
    let c = sol.params().cost();
    let mut mismatches = 0;
    for (l, cont) in sol.continue_values().iter().enumerate() {
        for &b in grid {
            let a = cont.eval(b);
            if (a - c).abs() <= slack {
                continue;
            }
            if sol.should_continue(l, b) != (a <= c) {
                mismatches += 1;
            }
        }
    }
    mismatches
}

/// Distance of the value functions from `[0, C]`.
pub fn bounds_gap(sol: &DpSolution, grid: &[f64]) -> f64 {
    let c = sol.params().cost();
    let mut worst: f64 = 0.0;
    for value in sol.values() {
        for &b in grid {
            let v = value.eval(b);
            worst = worst.max(-v).max(v - c);
        }
    }
    worst
}

/// `|α_{N-2} - (1 - ks) / (k(1 + q - s))|`, clipped form.
pub fn closed_form_gap(sol: &DpSolution) -> f64 {
    let t = sol.thresholds();
    (t[t.len() - 2] - sol.params().last_decision_threshold()).abs()
}

/// Worst value gap against the grid oracle at its own grid points, and the
/// worst threshold gap in units of the grid step (continue regions that are
/// nonempty only).
pub fn grid_oracle_gap(sol: &DpSolution, grid_n: usize) -> (f64, f64) {
    let oracle = grid_dp_oracle(sol.params(), grid_n);
    let mut value_gap: f64 = 0.0;
    for (exact, sampled) in sol.values().iter().zip(&oracle.values) {
        for (&b, &v) in oracle.grid.iter().zip(sampled) {
            value_gap = value_gap.max((exact.eval(b) - v).abs());
        }
    }
    let mut step_gap: f64 = 0.0;
    let step = oracle.step();
    let n = sol.thresholds().len() - 1;
    for l in 0..n {
        if sol.explore_dominant()[l] {
            continue;
        }
        step_gap = step_gap.max((sol.thresholds()[l] - oracle.thresholds[l]).abs() / step);
    }
    (value_gap, step_gap)
}

/// `(|best enumerated - J_0(b0)|, amount by which any policy beats J_0)`.
pub fn enumeration_gap(sol: &DpSolution, b0: f64) -> Result<(f64, f64), OracleError> {
    let e = brute_force_policy_oracle(sol.params(), b0)?;
    let j0 = sol.optimal_cost(b0);
    let beats = e.costs.iter().map(|&c| j0 - c).fold(0.0, f64::max);
    Ok(((e.best() - j0).abs(), beats))
}

/// Deviations of the failure-run sequence from its defining properties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureRunGaps {
    /// `|π_1 - (q - qk)/(1 - qk)|`.
    pub first: f64,
    /// Largest `π_{m+1} - π_m` before reaching the fixed point.
    pub non_decreasing_steps: f64,
    /// Residual of the fixed-point quadratic and of `Φ(b*, Ā) = b*`.
    pub fixed_point_residual: f64,
    /// 1 if `r` disagrees with "UNBOUNDED iff b* > ᾱ", else 0.
    pub run_length_mismatch: f64,
}

pub fn failure_run_gaps(p: &ChannelParams, alpha_bar: f64) -> FailureRunGaps {
    let (q, s, k) = (p.q(), p.s(), p.k());
    let pol = failure_run_policy(p, alpha_bar);
    let first = if q * k < 1.0 {
        (pol.pi[0] - (q - q * k) / (1.0 - q * k)).abs()
    } else {
        pol.pi[0].abs()
    };

    let star = failure_fixed_point(p);
    let mut non_decreasing_steps: f64 = 0.0;
    let mut b = 1.0;
    for _ in 0..10_000 {
        if (b - star).abs() <= 1e-12 {
            break;
        }
        let next = failure_map(b, p);
        if next >= b {
            // Record even a zero-size stall so it cannot pass silently.
            non_decreasing_steps = non_decreasing_steps.max((next - b).max(f64::MIN_POSITIVE));
        }
        b = next;
    }

    let d = q - s;
    let quad = k * d * star * star - (1.0 - k * s - (1.0 - k) * d) * star + (1.0 - k) * s;
    let fixed_point_residual = quad.abs().max((failure_map(star, p) - star).abs());

    // At b* = ᾱ (to within rounding) either answer is consistent.
    let unbounded = pol.r == RunLength::Unbounded;
    let run_length_mismatch = if star > alpha_bar + 1e-12 && !unbounded || star < alpha_bar - 1e-12 && unbounded {
        1.0
    } else {
        0.0
    };

    FailureRunGaps {
        first,
        non_decreasing_steps,
        fixed_point_residual,
        run_length_mismatch,
    }
}
