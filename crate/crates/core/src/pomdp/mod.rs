//! Two-state link model: belief filtering and finite-horizon dynamic
//! programming over the belief simplex.
//!
//! A relay link is either good or bad. Its state evolves as a two-state
//! Markov chain (`q` = P(good -> good), `s` = P(bad -> good)); a transmission
//! on a good link is acknowledged with probability `k`, and a bad link never
//! acknowledges. The sender only sees ACKs, so it tracks the posterior
//! probability that the link is good and decides each slot whether to keep
//! transmitting or to pay `C` and explore for a different relay.

pub mod checks;
pub mod oracle;
pub mod pwl;
pub mod solver;
pub mod suite;

use std::fmt;

use thiserror::Error;

pub use pwl::{LinearPiece, PwlError, PwlValue};
pub use solver::{
    dp_backup, failure_run_policy, solve_finite, solve_finite_with, stationary_threshold,
    terminal_value, threshold_of, BackupFn, DpSolution, RunLength, StationaryError,
    StationaryPolicy, StationaryThreshold,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("q must be a probability, got {0}")]
    QRange(f64),
    #[error("s must be a probability, got {0}")]
    SRange(f64),
    #[error("s < q is required (got s = {s}, q = {q})")]
    NotOrdered { q: f64, s: f64 },
    #[error("k must lie in [0, 1], got {0}")]
    KRange(f64),
    #[error("C must be positive and finite, got {0}")]
    CostRange(f64),
    #[error("horizon N must be at least 2, got {0}")]
    Horizon(usize),
}

/// Parameters of one relay link's good/bad dynamics and the delay penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    q: f64,
    s: f64,
    k: f64,
    cost: f64,
    horizon: usize,
}

impl ChannelParams {
    pub fn new(q: f64, s: f64, k: f64, cost: f64, horizon: usize) -> Result<Self, ParamError> {
        if !(0.0..=1.0).contains(&q) {
            return Err(ParamError::QRange(q));
        }
        if !(0.0..=1.0).contains(&s) {
            return Err(ParamError::SRange(s));
        }
        if s >= q {
            return Err(ParamError::NotOrdered { q, s });
        }
        // k = 0 is admitted: ACKs carry no information and the filter
        // degenerates to the prior predictive.
        if !(0.0..=1.0).contains(&k) {
            return Err(ParamError::KRange(k));
        }
        if !(cost.is_finite() && cost > 0.0) {
            return Err(ParamError::CostRange(cost));
        }
        if horizon < 2 {
            return Err(ParamError::Horizon(horizon));
        }
        Ok(Self {
            q,
            s,
            k,
            cost,
            horizon,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Penalty of one lost packet, equal to the cost of one exploration.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Slots per BS frame.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self, ParamError> {
        Self::new(self.q, self.s, self.k, self.cost, horizon)
    }

    /// One-step predicted probability that the link is good next slot.
    pub fn predict_good(&self, b: f64) -> f64 {
        self.q * b + self.s * (1.0 - b)
    }

    /// `k(1 + q) > 1`: continuing from a known-good link beats exploring in
    /// the second-to-last slot. When it fails the last decision threshold is
    /// pinned at 1.
    pub fn continue_condition(&self) -> bool {
        self.k * (1.0 + self.q) > 1.0
    }

    /// Closed-form threshold of the second-to-last slot, clipped to `[0, 1]`.
    pub fn last_decision_threshold(&self) -> f64 {
        let denom = self.k * (1.0 + self.q - self.s);
        if denom <= 0.0 {
            return 1.0;
        }
        ((1.0 - self.k * self.s) / denom).clamp(0.0, 1.0)
    }
}

/// Posterior probability that the current relay link is good.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Belief(f64);

impl Belief {
    pub const CERTAIN: Belief = Belief(1.0);

    /// Clamps into `[0, 1]`; NaN maps to 0.
    pub fn new(b: f64) -> Self {
        if b.is_nan() {
            Belief(0.0)
        } else {
            Belief(b.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Belief {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Per-slot acknowledgement outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ack {
    Received,
    Missing,
}

impl Ack {
    pub fn from_bit(z: u8) -> Self {
        if z == 0 {
            Ack::Missing
        } else {
            Ack::Received
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Ack::Received => 1,
            Ack::Missing => 0,
        }
    }
}

/// Bayes update of the belief after one slot's ACK outcome.
pub fn belief_update(b: Belief, z: Ack, p: &ChannelParams) -> Belief {
    match z {
        Ack::Received => Belief::CERTAIN,
        Ack::Missing => Belief::new(failure_map(b.value(), p)),
    }
}

/// The missing-ACK branch of the filter as a plain map on `[0, 1]`.
pub fn failure_map(b: f64, p: &ChannelParams) -> f64 {
    let pred = p.predict_good(b);
    let num = pred * (1.0 - p.k);
    let den = 1.0 - pred * p.k;
    if den <= 0.0 {
        // pred = k = 1: a missing ACK is impossible; the limit is 0.
        0.0
    } else {
        num / den
    }
}

/// Expected loss penalty of transmitting one slot at belief `b`.
pub fn slot_penalty(b: Belief, p: &ChannelParams) -> f64 {
    (1.0 - p.k * b.value()) * p.cost
}

/// Limit of repeated missing-ACK updates started from `b = 1`.
///
/// Solves `k(q-s) b^2 - (1 - ks - (1-k)(q-s)) b + (1-k)s = 0` for its root in
/// `[0, 1)`, falling back to bisection when the quadratic degenerates.
pub fn failure_fixed_point(p: &ChannelParams) -> f64 {
    if failure_map(1.0, p) >= 1.0 {
        return 1.0;
    }
    let d = p.q - p.s;
    let a = p.k * d;
    let b = 1.0 - p.k * p.s - (1.0 - p.k) * d;
    let c = (1.0 - p.k) * p.s;
    let disc = b * b - 4.0 * a * c;
    if b > 0.0 && disc >= 0.0 {
        // Citardauq form of the smaller root; stable for a -> 0.
        let root = 2.0 * c / (b + disc.sqrt());
        if (0.0..1.0).contains(&root) {
            return root;
        }
    }
    bisect_fixed_point(p)
}

fn bisect_fixed_point(p: &ChannelParams) -> f64 {
    // g(b) = Phi(b, 0) - b is >= 0 at 0 and < 0 at 1.
    let g = |b: f64| failure_map(b, p) - b;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    if g(lo) <= 0.0 {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(q: f64, s: f64, k: f64) -> ChannelParams {
        ChannelParams::new(q, s, k, 1.0, 10).unwrap()
    }

    #[test]
    fn ack_forces_certainty() {
        assert_eq!(belief_update(Belief::new(0.3), Ack::Received, &p(0.9, 0.1, 0.8)).value(), 1.0);
    }

    #[test]
    fn first_failure_from_certainty() {
        let b = belief_update(Belief::CERTAIN, Ack::Missing, &p(0.9, 0.1, 0.8));
        // (q - qk) / (1 - qk) = 0.18 / 0.28
        assert!((b.value() - 0.18 / 0.28).abs() < 1e-15);
        assert!((b.value() - 0.642_857_142_857).abs() < 1e-12);
    }

    #[test]
    fn bad_state_absorbing_without_recovery() {
        let b = belief_update(Belief::new(0.0), Ack::Missing, &p(0.7, 0.0, 0.5));
        assert_eq!(b.value(), 0.0);
    }

    #[test]
    fn penalties() {
        let perfect = ChannelParams::new(0.9, 0.1, 1.0, 5.0, 4).unwrap();
        assert_eq!(slot_penalty(Belief::CERTAIN, &perfect), 0.0);
        let any = ChannelParams::new(0.9, 0.1, 0.3, 5.0, 4).unwrap();
        assert_eq!(slot_penalty(Belief::new(0.0), &any), 5.0);
        assert!((slot_penalty(Belief::new(0.5), &p(0.9, 0.1, 0.8)) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_matches_quadratic() {
        let params = p(0.9, 0.1, 0.8);
        let b = failure_fixed_point(&params);
        // 0.64 b^2 - 0.76 b + 0.02 = 0, smaller root
        let expected = (0.76 - (0.76f64 * 0.76 - 4.0 * 0.64 * 0.02).sqrt()) / 1.28;
        assert!((b - expected).abs() < 1e-14);
        assert!((0.64 * b * b - 0.76 * b + 0.02).abs() < 1e-15);
        assert!((failure_map(b, &params) - b).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_edge_cases() {
        // k = 1: a missing ACK proves the link bad.
        assert_eq!(failure_fixed_point(&p(0.9, 0.1, 1.0)), 0.0);
        // q = 1 and k < 1: a good link stays good, so failures never move b = 1.
        assert_eq!(failure_fixed_point(&p(1.0, 0.2, 0.5)), 1.0);
        // k = 0: the filter is the prior predictive; fixed point s / (1 - q + s).
        let b = failure_fixed_point(&p(0.8, 0.1, 0.0));
        assert!((b - 0.1 / 0.3).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(matches!(ChannelParams::new(0.5, 0.5, 0.8, 1.0, 3), Err(ParamError::NotOrdered { .. })));
        assert!(matches!(ChannelParams::new(0.9, 0.1, 1.2, 1.0, 3), Err(ParamError::KRange(_))));
        assert!(matches!(ChannelParams::new(0.9, 0.1, 0.8, 0.0, 3), Err(ParamError::CostRange(_))));
        assert!(matches!(ChannelParams::new(0.9, 0.1, 0.8, 1.0, 1), Err(ParamError::Horizon(1))));
        assert!(matches!(ChannelParams::new(1.1, 0.1, 0.8, 1.0, 3), Err(ParamError::QRange(_))));
    }

    fn params_strategy() -> impl Strategy<Value = ChannelParams> {
        (0.0f64..0.95, 0.01f64..1.0, 0.05f64..=1.0).prop_map(|(s, gap, k)| {
            let q = (s + gap * (1.0 - s)).max(s + 1e-3).min(1.0);
            ChannelParams::new(q, s, k, 1.0, 5).unwrap()
        })
    }

    proptest! {
        #[test]
        fn filter_stays_in_unit_interval(params in params_strategy(), b in 0.0f64..=1.0) {
            let next = belief_update(Belief::new(b), Ack::Missing, &params).value();
            prop_assert!((0.0..=1.0).contains(&next));
        }

        #[test]
        fn failure_branch_is_increasing(params in params_strategy(), b1 in 0.0f64..=1.0, b2 in 0.0f64..=1.0) {
            prop_assume!(params.k() < 1.0);
            let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(failure_map(lo, &params) < failure_map(hi, &params));
        }

        #[test]
        fn successive_failures_decrease(params in params_strategy()) {
            let star = failure_fixed_point(&params);
            let mut b = 1.0;
            for _ in 0..500 {
                let next = failure_map(b, &params);
                if (b - star).abs() <= 1e-12 {
                    break;
                }
                prop_assert!(next < b, "b={} next={}", b, next);
                prop_assert!(next >= star - 1e-12);
                b = next;
            }
        }
    }
}
