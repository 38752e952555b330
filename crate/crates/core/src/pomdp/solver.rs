//! Exact backward recursion on piecewise-linear value functions.
//!
//! `J_{N-1}(b) = (1 - kb) C` and, for earlier slots,
//! `J_l(b) = min{C, A_l(b)}` with
//! `A_l(b) = (1 - kb) C + P(A | b) J_{l+1}(1) + P(Ā | b) J_{l+1}(Φ(b, Ā))`.
//! Writing `J_{l+1}` as a minimum of pieces `η + β b`, the last term is again
//! a minimum of linear functions of `b`: the normalisation `P(Ā | b)` cancels
//! the denominator of `Φ(b, Ā)`. That is what keeps every `A_l` and `J_l`
//! exact.

use std::fmt;

use thiserror::Error;

use super::pwl::{lower_envelope, LinearPiece, PwlValue};
use super::{failure_fixed_point, failure_map, ChannelParams};

/// `J_{N-1}`: the final slot has no explore option.
pub fn terminal_value(p: &ChannelParams) -> PwlValue {
    PwlValue::single(LinearPiece::new(p.cost(), -p.k() * p.cost()))
}

/// One backward step: returns `(A_l, J_l)` from `J_{l+1}`.
pub fn dp_backup(next: &PwlValue, p: &ChannelParams) -> (PwlValue, PwlValue) {
    let (q, s, k, c) = (p.q(), p.s(), p.k(), p.cost());
    let d = q - s;
    let value_at_one = next.eval(1.0);

    // (1 - kb) C + (s + d b) k J(1)
    let head = LinearPiece::new(c + s * k * value_at_one, -k * c + d * k * value_at_one);

    // η (1 - (s + d b) k) + β (s + d b)(1 - k)
    let mapped = next.pieces().iter().map(|piece| {
        let (eta, beta) = (piece.eta, piece.beta);
        LinearPiece::new(
            eta * (1.0 - k * s) + beta * (1.0 - k) * s + head.eta,
            -eta * k * d + beta * (1.0 - k) * d + head.beta,
        )
    });
    let cont = lower_envelope(mapped).expect("successor value has at least one piece");
    let value = cont.min_with(&PwlValue::single(LinearPiece::constant(c)));
    (cont, value)
}

/// Smallest belief at which continuing is at least as cheap as exploring.
///
/// Returns 1 when `A(1) >= C` and 0 when `A(0) <= C`; otherwise the unique
/// root of `A(α) = C`, read off the active piece.
pub fn threshold_of(cont: &PwlValue, cost: f64) -> f64 {
    if cont.eval(1.0) >= cost {
        return 1.0;
    }
    if cont.eval(0.0) <= cost {
        return 0.0;
    }
    let pieces = cont.pieces();
    let bps = cont.breakpoints();
    // Left end of each piece's interval, then the crossing inside it.
    let mut lo = 0.0;
    for (i, piece) in pieces.iter().enumerate() {
        let hi = bps.get(i).copied().unwrap_or(1.0).clamp(lo, 1.0);
        if piece.eval(hi) <= cost {
            if piece.beta == 0.0 {
                return lo;
            }
            return ((cost - piece.eta) / piece.beta).clamp(lo, hi);
        }
        lo = hi;
    }
    1.0
}

/// Full finite-horizon solution for one frame.
#[derive(Debug, Clone)]
pub struct DpSolution {
    params: ChannelParams,
    /// `J_0 .. J_{N-1}`.
    values: Vec<PwlValue>,
    /// `A_0 .. A_{N-2}`.
    continue_values: Vec<PwlValue>,
    /// `α_0 .. α_{N-1}`; the last entry is 0 (no explore option).
    thresholds: Vec<f64>,
    /// Slots where `A_l(1) > C`: exploring strictly wins at every belief,
    /// including `b = 1`, so the continue region is empty.
    explore_dominant: Vec<bool>,
}

impl DpSolution {
    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[PwlValue] {
        &self.values
    }

    pub fn continue_values(&self) -> &[PwlValue] {
        &self.continue_values
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn explore_dominant(&self) -> &[bool] {
        &self.explore_dominant
    }

    /// Optimal action at slot `l`: continue iff `A_l(b) <= C`.
    pub fn should_continue(&self, slot: usize, b: f64) -> bool {
        let l = slot.min(self.thresholds.len() - 1);
        !self.explore_dominant[l] && b >= self.thresholds[l]
    }

    /// Optimal expected cost from slot 0.
    pub fn optimal_cost(&self, b0: f64) -> f64 {
        self.values[0].eval(b0)
    }
}

/// Signature of a single backward step; lets verification swap in a
/// deliberately broken backup.
pub type BackupFn = fn(&PwlValue, &ChannelParams) -> (PwlValue, PwlValue);

pub fn solve_finite(p: &ChannelParams) -> DpSolution {
    solve_finite_with(p, dp_backup)
}

pub fn solve_finite_with(p: &ChannelParams, backup: BackupFn) -> DpSolution {
    let n = p.horizon();
    let c = p.cost();
    let mut values = vec![terminal_value(p)];
    let mut continue_values = Vec::with_capacity(n - 1);
    for _ in 0..n - 1 {
        let (cont, value) = backup(values.last().expect("nonempty"), p);
        continue_values.push(cont);
        values.push(value);
    }
    values.reverse();
    continue_values.reverse();

    let mut thresholds: Vec<f64> = continue_values.iter().map(|a| threshold_of(a, c)).collect();
    let mut explore_dominant: Vec<bool> = continue_values.iter().map(|a| a.eval(1.0) > c).collect();
    thresholds.push(0.0);
    explore_dominant.push(false);

    DpSolution {
        params: *p,
        values,
        continue_values,
        thresholds,
        explore_dominant,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StationaryError {
    #[error("threshold did not settle within {iterations} backups (last two: {previous}, {last})")]
    NotConverged {
        iterations: usize,
        previous: f64,
        last: f64,
    },
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
}

/// Limiting threshold together with how it was reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryThreshold {
    pub alpha_bar: f64,
    pub iterations: usize,
    pub tol: f64,
}

/// Backs up from the terminal slot until consecutive thresholds agree to
/// within `tol`. Thresholds grow with the remaining horizon, so the result
/// is an upper bound on every threshold seen along the way.
pub fn stationary_threshold(
    p: &ChannelParams,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryThreshold, StationaryError> {
    if !(tol > 0.0) {
        return Err(StationaryError::Tolerance(tol));
    }
    let c = p.cost();
    let mut value = terminal_value(p);
    let (mut previous, mut last) = (f64::NAN, f64::NAN);
    for iter in 1..=max_iter {
        let (cont, next) = dp_backup(&value, p);
        let alpha = threshold_of(&cont, c);
        if (alpha - last).abs() < tol {
            return Ok(StationaryThreshold {
                alpha_bar: alpha,
                iterations: iter,
                tol,
            });
        }
        previous = last;
        last = alpha;
        value = next;
    }
    Err(StationaryError::NotConverged {
        iterations: max_iter,
        previous,
        last,
    })
}

/// Number of successive missing ACKs after which the stationary rule explores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunLength {
    Finite(u32),
    /// The failure run never drives the belief to the threshold.
    Unbounded,
}

impl fmt::Display for RunLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunLength::Finite(r) => write!(f, "{r}"),
            RunLength::Unbounded => f.write_str("UNBOUNDED"),
        }
    }
}

/// Simplified stationary policy: explore after `r` successive failures.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    pub alpha_bar: f64,
    pub r: RunLength,
    /// `π_1, π_2, …`: belief after m successive failures from `b = 1`.
    pub pi: Vec<f64>,
    /// Limit of the failure run.
    pub fixed_point: f64,
}

impl StationaryPolicy {
    pub fn should_explore(&self, consecutive_failures: u32) -> bool {
        match self.r {
            RunLength::Finite(r) => consecutive_failures >= r,
            RunLength::Unbounded => false,
        }
    }
}

const FIXED_POINT_SLACK: f64 = 1e-12;
const MAX_FAILURE_RUN: usize = 1_000_000;

pub fn failure_run_policy(p: &ChannelParams, alpha_bar: f64) -> StationaryPolicy {
    let star = failure_fixed_point(p);
    let mut pi = Vec::new();
    let mut b = 1.0;
    let mut r = RunLength::Unbounded;
    for m in 1..=MAX_FAILURE_RUN {
        b = failure_map(b, p);
        pi.push(b);
        if b <= alpha_bar {
            r = RunLength::Finite(m as u32);
            break;
        }
        // Once parked on the fixed point the run can only approach it from
        // above, so it never reaches a threshold at or below it.
        if (b - star).abs() <= FIXED_POINT_SLACK && star >= alpha_bar {
            break;
        }
    }
    StationaryPolicy {
        alpha_bar,
        r,
        pi,
        fixed_point: star,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(q: f64, s: f64, k: f64, n: usize) -> ChannelParams {
        ChannelParams::new(q, s, k, 1.0, n).unwrap()
    }

    #[test]
    fn terminal_slot_shape() {
        let p = params(0.9, 0.1, 0.8, 5);
        let j = terminal_value(&p);
        assert_eq!(j.len(), 1);
        assert_eq!(j.eval(0.0), 1.0);
        assert!((j.eval(1.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn first_backup_matches_collapsed_form() {
        for &(q, s, k) in &[(0.9, 0.1, 0.8), (0.6, 0.3, 0.95), (0.99, 0.0, 0.5), (0.5, 0.2, 0.2)] {
            let p = params(q, s, k, 2);
            let (a, j) = dp_backup(&terminal_value(&p), &p);
            for i in 0..=100 {
                let b = i as f64 / 100.0;
                let closed = (1.0 - k * b) + (1.0 - (b * q + (1.0 - b) * s) * k);
                assert!((a.eval(b) - closed).abs() < 1e-14, "q={q} s={s} k={k} b={b}");
                assert!(j.eval(b) <= 1.0 + 1e-15);
            }
        }
        let p = params(0.9, 0.1, 0.8, 2);
        let (a, _) = dp_backup(&terminal_value(&p), &p);
        assert!((a.eval(0.0) - 1.92).abs() < 1e-14);
    }

    #[test]
    fn closed_form_last_threshold() {
        let p = params(0.9, 0.1, 0.8, 2);
        let (a, _) = dp_backup(&terminal_value(&p), &p);
        let alpha = threshold_of(&a, 1.0);
        assert!((alpha - 0.92 / 1.44).abs() < 1e-14);
        assert!((alpha - 0.638_888_888_888).abs() < 1e-11);
    }

    #[test]
    fn threshold_pinned_when_condition_fails() {
        let p = params(0.5, 0.1, 0.2, 2);
        assert!(!p.continue_condition());
        let (a, _) = dp_backup(&terminal_value(&p), &p);
        assert_eq!(threshold_of(&a, 1.0), 1.0);
    }

    #[test]
    fn threshold_zero_when_always_cheaper() {
        assert_eq!(threshold_of(&PwlValue::single(LinearPiece::constant(0.0)), 1.0), 0.0);
    }

    #[test]
    fn horizon_two_solution() {
        let sol = solve_finite(&params(0.9, 0.1, 0.8, 2));
        assert_eq!(sol.thresholds().len(), 2);
        assert!((sol.thresholds()[0] - 0.92 / 1.44).abs() < 1e-14);
        assert_eq!(sol.thresholds()[1], 0.0);
    }

    #[test]
    fn thresholds_do_not_increase_along_the_frame() {
        let sol = solve_finite(&params(0.9, 0.1, 0.8, 3));
        let t = sol.thresholds();
        assert!(t[0] >= t[1] && t[1] >= t[2]);
        // α_1 is the closed form; α_0 comes from a two-step backup.
        assert!((t[1] - 0.92 / 1.44).abs() < 1e-14);
        assert!(t[0] > t[1]);
    }

    #[test]
    fn values_bounded_by_cost() {
        let sol = solve_finite(&params(0.8, 0.2, 0.9, 12));
        for j in sol.values() {
            for i in 0..=200 {
                let v = j.eval(i as f64 / 200.0);
                assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
    }

    #[test]
    fn stationary_threshold_dominates_last_decision() {
        let p = params(0.9, 0.1, 0.8, 2);
        let st = stationary_threshold(&p, 1e-9, 10_000).unwrap();
        assert!(st.alpha_bar >= p.last_decision_threshold());
        // k < 1: the per-slot loss floor (1-k)C eventually makes exploring
        // strictly better everywhere.
        assert_eq!(st.alpha_bar, 1.0);
    }

    #[test]
    fn stationary_threshold_trivial_case() {
        let p = params(0.5, 0.1, 0.2, 2);
        let st = stationary_threshold(&p, 1e-9, 100).unwrap();
        assert_eq!(st.alpha_bar, 1.0);
        assert_eq!(st.iterations, 2);
    }

    #[test]
    fn stationary_threshold_reports_non_convergence() {
        // k = 1: thresholds creep toward 1 geometrically in q.
        let p = params(0.999, 0.1, 1.0, 2);
        match stationary_threshold(&p, 1e-12, 5) {
            Err(StationaryError::NotConverged { iterations: 5, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(stationary_threshold(&p, 0.0, 5).is_err());
    }

    #[test]
    fn failure_run_sequence() {
        let p = params(0.9, 0.1, 0.8, 10);
        let pol = failure_run_policy(&p, 0.5);
        assert!((pol.pi[0] - 0.18 / 0.28).abs() < 1e-15);
        // π_2 = Φ(π_1, Ā) evaluated directly
        let pred = 0.9 * pol.pi[0] + 0.1 * (1.0 - pol.pi[0]);
        let pi2 = pred * 0.2 / (1.0 - pred * 0.8);
        assert!((pol.pi[1] - pi2).abs() < 1e-15);
        assert!((pol.pi[1] - 0.241_573).abs() < 1e-6);
        assert_eq!(pol.r, RunLength::Finite(2));
        assert!(pol.should_explore(2) && !pol.should_explore(1));
    }

    #[test]
    fn zero_threshold_never_reached() {
        let p = params(0.9, 0.1, 0.8, 10);
        let pol = failure_run_policy(&p, 0.0);
        assert_eq!(pol.r, RunLength::Unbounded);
        assert!(!pol.should_explore(1_000));
        // s = 0: the run decays toward 0 but never reaches it.
        let absorbing = params(0.9, 0.0, 0.8, 10);
        assert_eq!(failure_run_policy(&absorbing, 0.0).r, RunLength::Unbounded);
    }
}
