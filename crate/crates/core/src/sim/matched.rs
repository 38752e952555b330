//! Frames on a synthetic link that follows the two-state model exactly.
//!
//! The frame starts on a known-good link. Continuing in slot `l` loses the
//! packet (cost `C`) with probability `1 - k` if the link is good and always
//! if it is bad; the link then moves one Markov step and the ACK seen for
//! the next slot is drawn from the new state. Exploring costs `C` and ends
//! the frame. The last slot always continues.

use rand::Rng;
use rayon::prelude::*;

use crate::pomdp::{belief_update, failure_map, Ack, Belief, ChannelParams, DpSolution};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy)]
pub enum MatchedPolicy<'a> {
    Optimal(&'a DpSolution),
    AlwaysContinue,
    /// Explore once this many ACKs in a row were missing.
    SwitchAfter(u32),
}

impl MatchedPolicy<'_> {
    fn explore(&self, slot: usize, b: f64, failures: u32) -> bool {
        match self {
            MatchedPolicy::Optimal(sol) => !sol.should_continue(slot, b),
            MatchedPolicy::AlwaysContinue => false,
            MatchedPolicy::SwitchAfter(r) => failures >= *r,
        }
    }
}

pub fn matched_frame<R: Rng + ?Sized>(p: &ChannelParams, policy: MatchedPolicy<'_>, rng: &mut R) -> f64 {
    let (q, s, k, c, n) = (p.q(), p.s(), p.k(), p.cost(), p.horizon());
    let mut good = true;
    let mut b = Belief::CERTAIN;
    let mut failures = 0u32;
    let mut cost = 0.0;
    for l in 0..n {
        if l + 1 < n && policy.explore(l, b.value(), failures) {
            return cost + c;
        }
        if !good || rng.random::<f64>() >= k {
            cost += c;
        }
        if l + 1 == n {
            break;
        }
        good = rng.random::<f64>() < if good { q } else { s };
        let z = if good && rng.random::<f64>() < k {
            Ack::Received
        } else {
            Ack::Missing
        };
        b = belief_update(b, z, p);
        failures = if z == Ack::Received { 0 } else { failures + 1 };
    }
    cost
}

const CHUNK: usize = 10_000;

/// Costs of `frames` independent frames; chunked in parallel, each chunk on
/// its own stream, concatenated in chunk order.
pub fn matched_costs(p: &ChannelParams, policy: MatchedPolicy<'_>, frames: usize, seed: u64) -> Vec<f64> {
    let chunks = frames.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::substream(rng::key(&[seed, c as u64]), Purpose::Matched);
            let len = CHUNK.min(frames - c * CHUNK);
            (0..len).map(move |_| matched_frame(p, policy, &mut r)).collect::<Vec<_>>()
        })
        .collect()
}

/// Exact expected frame cost of a policy from `b = 1`, by recursion over
/// the observation tree.
pub fn expected_cost(p: &ChannelParams, policy: MatchedPolicy<'_>) -> f64 {
    fn go(p: &ChannelParams, policy: &MatchedPolicy<'_>, l: usize, b: f64, failures: u32) -> f64 {
        let (k, c, n) = (p.k(), p.cost(), p.horizon());
        if l + 1 < n && policy.explore(l, b, failures) {
            return c;
        }
        let loss = (1.0 - k * b) * c;
        if l + 1 == n {
            return loss;
        }
        let p_ack = p.predict_good(b) * k;
        let mut total = loss;
        if p_ack > 0.0 {
            total += p_ack * go(p, policy, l + 1, 1.0, 0);
        }
        if p_ack < 1.0 {
            total += (1.0 - p_ack) * go(p, policy, l + 1, failure_map(b, p), failures + 1);
        }
        total
    }
    go(p, &policy, 0, 1.0, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::solve_finite;
    use crate::sim::summarize;

    fn p() -> ChannelParams {
        ChannelParams::new(0.9, 0.1, 0.8, 1.0, 10).unwrap()
    }

    #[test]
    fn exact_evaluation_of_optimal_policy_is_the_dp_value() {
        for params in [p(), ChannelParams::new(0.95, 0.05, 1.0, 2.0, 8).unwrap()] {
            let sol = solve_finite(&params);
            let v = expected_cost(&params, MatchedPolicy::Optimal(&sol));
            assert!((v - sol.optimal_cost(1.0)).abs() < 1e-12);
            assert!(expected_cost(&params, MatchedPolicy::AlwaysContinue) >= v - 1e-12);
            assert!(expected_cost(&params, MatchedPolicy::SwitchAfter(1)) >= v - 1e-12);
        }
    }

    #[test]
    fn monte_carlo_matches_exact_evaluation() {
        let params = ChannelParams::new(0.95, 0.05, 1.0, 1.0, 10).unwrap();
        let sol = solve_finite(&params);
        for policy in [
            MatchedPolicy::Optimal(&sol),
            MatchedPolicy::AlwaysContinue,
            MatchedPolicy::SwitchAfter(1),
            MatchedPolicy::SwitchAfter(2),
        ] {
            let m = summarize(&matched_costs(&params, policy, 40_000, 3));
            let exact = expected_cost(&params, policy);
            assert!((m.mean - exact).abs() < 4.0 * m.sd / 200.0 + 1e-12, "{policy:?}: {} vs {exact}", m.mean);
        }
    }

    #[test]
    fn chunked_costs_are_reproducible() {
        let a = matched_costs(&p(), MatchedPolicy::AlwaysContinue, 25_000, 7);
        let b = matched_costs(&p(), MatchedPolicy::AlwaysContinue, 25_000, 7);
        assert_eq!(a.len(), 25_000);
        assert_eq!(a, b);
    }
}
