//! Seeded randomized verification runs built from the checks in
//! [`super::checks`]. Every suite takes the backup step as a parameter so a
//! broken backup can be shown to be caught.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::checks::{
    belief_monotonicity_gap, bounds_gap, closed_form_gap, concavity_gap, describe, enumeration_gap,
    failure_run_gaps, grid_oracle_gap, slot_monotonicity_gap, threshold_monotonicity_gap,
    threshold_structure_mismatches, unit_grid, CheckOutcome,
};
use super::pwl::{lower_envelope, LinearPiece, PwlValue};
use super::{
    dp_backup, failure_fixed_point, failure_run_policy, solve_finite_with, stationary_threshold, BackupFn,
    ChannelParams, RunLength,
};
use crate::rng::{self, Purpose};

/// Sizes and tolerances of one verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub closed_form_sets: usize,
    pub structure_sets: usize,
    pub structure_horizon: usize,
    pub belief_grid: usize,
    pub grid_oracle_sets: usize,
    pub grid_oracle_max_horizon: usize,
    pub grid_oracle_points: usize,
    pub enumeration_sets: usize,
    pub enumeration_horizon: usize,
    pub enumeration_beliefs: Vec<f64>,
    pub failure_run_sets: usize,
    pub stationary_tol: f64,
    pub stationary_max_iter: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            closed_form_sets: 200,
            structure_sets: 20,
            structure_horizon: 20,
            belief_grid: 1001,
            grid_oracle_sets: 40,
            grid_oracle_max_horizon: 50,
            grid_oracle_points: 10_000,
            enumeration_sets: 10,
            enumeration_horizon: 3,
            enumeration_beliefs: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            failure_run_sets: 200,
            stationary_tol: 1e-12,
            stationary_max_iter: 100_000,
        }
    }
}

pub const CLOSED_FORM_TOL: f64 = 1e-9;
pub const CONCAVITY_TOL: f64 = 1e-9;
pub const MONOTONICITY_TOL: f64 = 1e-12;
pub const GRID_ORACLE_TOL: f64 = 1e-6;
pub const ENUMERATION_TOL: f64 = 1e-12;
pub const FIRST_FAILURE_TOL: f64 = 1e-15;
pub const FIXED_POINT_TOL: f64 = 1e-10;

fn params_rng(seed: u64, suite: u64) -> ChaCha8Rng {
    rng::substream(rng::key(&[seed, suite]), Purpose::OracleParams)
}

/// Random valid parameters: `s < q`, one draw in ten has `k = 1`. With
/// `nontrivial` the draw is repeated until `k(1 + q) > 1`.
pub fn random_params(rng: &mut ChaCha8Rng, horizon: usize, nontrivial: bool) -> ChannelParams {
    loop {
        let q: f64 = rng.random_range(0.05..1.0);
        let s: f64 = rng.random_range(0.0..q);
        let k: f64 = if rng.random_bool(0.1) { 1.0 } else { rng.random_range(0.05..1.0) };
        let cost: f64 = rng.random_range(0.5..5.0);
        let p = ChannelParams::new(q, s, k, cost, horizon).expect("drawn inside the valid region");
        if !nontrivial || p.continue_condition() {
            return p;
        }
    }
}

/// `α_{N-2}` against its closed form on random nontrivial parameters.
pub fn closed_form_suite(cfg: &SuiteConfig, backup: BackupFn) -> CheckOutcome {
    let mut rng = params_rng(cfg.seed, 1);
    let mut out = CheckOutcome::new("closed-form last-decision threshold", CLOSED_FORM_TOL);
    for _ in 0..cfg.closed_form_sets {
        let n = rng.random_range(2..=30);
        let p = random_params(&mut rng, n, true);
        let sol = solve_finite_with(&p, backup);
        out.record(closed_form_gap(&sol), || describe(&p));
    }
    out
}

/// Concavity, monotonicity in slot and belief, threshold ordering, the
/// threshold form of the continue region and the `[0, C]` bounds.
pub fn structure_suite(cfg: &SuiteConfig, backup: BackupFn) -> Vec<CheckOutcome> {
    let mut rng = params_rng(cfg.seed, 2);
    let grid = unit_grid(cfg.belief_grid);
    let mut concave = CheckOutcome::new("concavity of J_l", CONCAVITY_TOL);
    let mut slot = CheckOutcome::new("J_l >= J_{l+1} and A_l >= A_{l+1}", MONOTONICITY_TOL);
    let mut belief = CheckOutcome::new("A_l non-increasing in belief", MONOTONICITY_TOL);
    let mut thresholds = CheckOutcome::new("thresholds non-increasing in slot", MONOTONICITY_TOL);
    let mut structure = CheckOutcome::new("continue region is [α_l, 1]", 0.0);
    let mut bounds = CheckOutcome::new("0 <= J_l <= C", MONOTONICITY_TOL);
    for _ in 0..cfg.structure_sets {
        let p = random_params(&mut rng, cfg.structure_horizon, false);
        let sol = solve_finite_with(&p, backup);
        let at = || describe(&p);
        concave.record(concavity_gap(&sol, &grid), at);
        slot.record(slot_monotonicity_gap(&sol, &grid), at);
        belief.record(belief_monotonicity_gap(&sol, &grid), at);
        thresholds.record(threshold_monotonicity_gap(&sol), at);
        structure.record(threshold_structure_mismatches(&sol, &grid, 1e-9) as f64, at);
        bounds.record(bounds_gap(&sol, &grid), at);
    }
    vec![concave, slot, belief, thresholds, structure, bounds]
}

/// Value gap against the belief-grid DP at its grid points.
pub fn grid_oracle_suite(cfg: &SuiteConfig, backup: BackupFn) -> CheckOutcome {
    let mut rng = params_rng(cfg.seed, 3);
    let mut out = CheckOutcome::new("belief-grid DP value gap", GRID_ORACLE_TOL);
    for _ in 0..cfg.grid_oracle_sets {
        let n = rng.random_range(2..=cfg.grid_oracle_max_horizon.max(2));
        let p = random_params(&mut rng, n, false);
        let sol = solve_finite_with(&p, backup);
        let (value_gap, _) = grid_oracle_gap(&sol, cfg.grid_oracle_points);
        out.record(value_gap, || describe(&p));
    }
    out
}

/// Exhaustive policy enumeration: the optimum matches `J_0(b0)` and nothing
/// beats it.
pub fn enumeration_suite(cfg: &SuiteConfig, backup: BackupFn) -> Vec<CheckOutcome> {
    let mut rng = params_rng(cfg.seed, 4);
    let mut gap = CheckOutcome::new("enumeration optimum equals J_0", ENUMERATION_TOL);
    let mut beats = CheckOutcome::new("no enumerated policy beats J_0", ENUMERATION_TOL);
    for _ in 0..cfg.enumeration_sets {
        let p = random_params(&mut rng, cfg.enumeration_horizon, false);
        let sol = solve_finite_with(&p, backup);
        for &b0 in &cfg.enumeration_beliefs {
            let at = || format!("{} b0={b0}", describe(&p));
            match enumeration_gap(&sol, b0) {
                Ok((g, b)) => {
                    gap.record(g, at);
                    beats.record(b, at);
                }
                Err(e) => gap.record(f64::INFINITY, || format!("{}: {e}", at())),
            }
        }
    }
    vec![gap, beats]
}

/// Failure-run sequence: first term, strict decrease, fixed point and the
/// UNBOUNDED rule against the stationary threshold.
pub fn failure_run_suite(cfg: &SuiteConfig) -> Vec<CheckOutcome> {
    let mut rng = params_rng(cfg.seed, 5);
    let mut first = CheckOutcome::new("π_1 = (q - qk)/(1 - qk)", FIRST_FAILURE_TOL);
    let mut decreasing = CheckOutcome::new("π_m strictly decreasing", 0.0);
    let mut fixed = CheckOutcome::new("fixed point b* residual", FIXED_POINT_TOL);
    let mut unbounded = CheckOutcome::new("r UNBOUNDED iff b* > ᾱ", 0.0);
    let mut synthetic = CheckOutcome::new("r UNBOUNDED iff b* > threshold, thresholds either side of b*", 0.0);
    for _ in 0..cfg.failure_run_sets {
        let p = random_params(&mut rng, 2, false);
        let at = || describe(&p);
        let alpha_bar = match stationary_threshold(&p, cfg.stationary_tol, cfg.stationary_max_iter) {
            Ok(st) => st.alpha_bar,
            Err(e) => {
                unbounded.record(f64::INFINITY, || format!("{}: {e}", at()));
                continue;
            }
        };
        // The limiting threshold rarely lies below b*, so both sides are
        // also exercised with thresholds placed around b*.
        let star = failure_fixed_point(&p);
        if star > 0.0 {
            let below = failure_run_policy(&p, 0.5 * star);
            synthetic.record(f64::from(below.r != RunLength::Unbounded), || format!("{} below b*", at()));
        }
        if star < 1.0 {
            let above = failure_run_policy(&p, star + 0.5 * (1.0 - star));
            synthetic.record(f64::from(above.r == RunLength::Unbounded), || format!("{} above b*", at()));
        }
        let g = failure_run_gaps(&p, alpha_bar);
        first.record(g.first, at);
        decreasing.record(g.non_decreasing_steps, at);
        fixed.record(g.fixed_point_residual, at);
        unbounded.record(g.run_length_mismatch, at);
    }
    vec![first, decreasing, fixed, unbounded, synthetic]
}

/// Every suite, in a fixed order.
pub fn run_all(cfg: &SuiteConfig, backup: BackupFn) -> Vec<CheckOutcome> {
    let mut out = vec![closed_form_suite(cfg, backup)];
    out.extend(structure_suite(cfg, backup));
    out.push(grid_oracle_suite(cfg, backup));
    out.extend(enumeration_suite(cfg, backup));
    out.extend(failure_run_suite(cfg));
    out
}

/// Deliberately wrong backup used to demonstrate that the suites fail: the
/// continue value gains a spurious belief-proportional term.
pub fn faulty_backup(next: &PwlValue, p: &ChannelParams) -> (PwlValue, PwlValue) {
    let (cont, _) = dp_backup(next, p);
    let skew = 0.05 * p.cost();
    let shifted = cont
        .pieces()
        .iter()
        .map(|piece| LinearPiece::new(piece.eta, piece.beta + skew));
    let cont = lower_envelope(shifted).expect("nonempty");
    let value = cont.min_with(&PwlValue::single(LinearPiece::constant(p.cost())));
    (cont, value)
}
