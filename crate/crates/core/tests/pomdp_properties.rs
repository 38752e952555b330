use mmwave_relay::pomdp::oracle::brute_force_policy_oracle;
use mmwave_relay::pomdp::{
    belief_update, failure_fixed_point, failure_map, failure_run_policy, solve_finite, stationary_threshold, Ack,
    Belief, ChannelParams, RunLength,
};
use proptest::prelude::*;

fn params(horizon: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = ChannelParams> {
    (0.05f64..0.999, 0.0f64..1.0, 0.05f64..=1.0, 0.1f64..10.0, horizon)
        .prop_map(|(q, frac, k, c, n)| ChannelParams::new(q, q * frac * 0.999, k, c, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn thresholds_non_increasing_and_last_is_zero(p in params(2..=25)) {
        let sol = solve_finite(&p);
        let t = sol.thresholds();
        prop_assert_eq!(t[t.len() - 1], 0.0);
        for w in t.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", t);
        }
        for &a in t {
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn value_concave_and_bounded(p in params(2..=15), b1 in 0.0f64..=1.0, b2 in 0.0f64..=1.0, w in 0.0f64..=1.0) {
        let sol = solve_finite(&p);
        let mid = w * b1 + (1.0 - w) * b2;
        for j in sol.values() {
            let chord = w * j.eval(b1) + (1.0 - w) * j.eval(b2);
            prop_assert!(j.eval(mid) >= chord - 1e-9);
            prop_assert!(j.eval(mid) >= -1e-12 && j.eval(mid) <= p.cost() + 1e-12);
        }
    }

    #[test]
    fn decision_matches_continue_value(p in params(2..=15), b in 0.0f64..=1.0) {
        let sol = solve_finite(&p);
        for (l, a) in sol.continue_values().iter().enumerate() {
            let gap = a.eval(b) - p.cost();
            if gap.abs() > 1e-9 {
                prop_assert_eq!(sol.should_continue(l, b), gap < 0.0);
            }
        }
    }

    #[test]
    fn closed_form_last_decision(p in params(2..=20)) {
        prop_assume!(p.k() * (1.0 + p.q()) > 1.0);
        let sol = solve_finite(&p);
        let t = sol.thresholds();
        let expected = (1.0 - p.k() * p.s()) / (p.k() * (1.0 + p.q() - p.s()));
        prop_assert!((t[t.len() - 2] - expected).abs() < 1e-9);
    }

    #[test]
    fn enumeration_agrees_at_horizon_three(p in params(3..=3), b0 in 0.0f64..=1.0) {
        let sol = solve_finite(&p);
        let e = brute_force_policy_oracle(&p, b0).unwrap();
        prop_assert!((e.best() - sol.optimal_cost(b0)).abs() < 1e-12);
    }

    #[test]
    fn belief_update_stays_in_unit_interval(p in params(2..=2), b in 0.0f64..=1.0) {
        let miss = belief_update(Belief::new(b), Ack::Missing, &p).value();
        prop_assert!((0.0..=1.0).contains(&miss));
        prop_assert_eq!(belief_update(Belief::new(b), Ack::Received, &p).value(), 1.0);
        prop_assert!((failure_map(b, &p) - miss).abs() < 1e-15);
    }

    #[test]
    fn failure_run_decreases_to_fixed_point(p in params(2..=2)) {
        let star = failure_fixed_point(&p);
        let mut b = 1.0;
        for _ in 0..200 {
            let next = failure_map(b, &p);
            prop_assert!(next >= star - 1e-12);
            if (b - star).abs() > 1e-12 {
                prop_assert!(next < b);
            }
            b = next;
        }
    }

    #[test]
    fn stationary_threshold_dominates_finite_ones(p in params(2..=30)) {
        let st = stationary_threshold(&p, 1e-12, 100_000).unwrap();
        let sol = solve_finite(&p);
        for &a in sol.thresholds() {
            prop_assert!(a <= st.alpha_bar + 1e-9);
        }
        let pol = failure_run_policy(&p, st.alpha_bar);
        if pol.fixed_point > st.alpha_bar + 1e-12 {
            prop_assert_eq!(pol.r, RunLength::Unbounded);
        }
        if let RunLength::Finite(r) = pol.r {
            prop_assert!(pol.pi[r as usize - 1] <= st.alpha_bar);
            for &v in &pol.pi[..r as usize - 1] {
                prop_assert!(v > st.alpha_bar);
            }
        }
    }
}

#[test]
fn two_slot_example() {
    let p = ChannelParams::new(0.9, 0.1, 0.8, 1.0, 2).unwrap();
    let sol = solve_finite(&p);
    assert!((sol.thresholds()[0] - 23.0 / 36.0).abs() < 1e-12);
    assert_eq!(sol.thresholds()[1], 0.0);
}

#[test]
fn trivial_condition_gives_threshold_one() {
    let p = ChannelParams::new(0.5, 0.1, 0.2, 1.0, 6).unwrap();
    let sol = solve_finite(&p);
    let t = sol.thresholds();
    assert!(t[..t.len() - 1].iter().all(|&a| a == 1.0));
}
