//! The three experiment commands as library functions: a threshold report,
//! a parallel parameter sweep with CSV output, and the randomized oracle run.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::policy::{LocalRule, PolicyKind};
use crate::pomdp::checks::CheckOutcome;
use crate::pomdp::suite::run_all;
use crate::pomdp::{
    failure_run_policy, solve_finite, stationary_threshold, BackupFn, ChannelParams, RunLength, StationaryError,
};
use crate::rng;
use crate::sim::{aggregate, run_episode, EpisodeStats, SimError, Trace, METRICS};
use crate::world::Geometry;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stationary(#[from] StationaryError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Local decision rule of `kind` for `channel`.
pub fn local_rule(kind: PolicyKind, channel: &ChannelParams, tol: f64, max_iter: usize) -> Result<LocalRule, StationaryError> {
    Ok(match kind {
        PolicyKind::PomdpFinite => LocalRule::Finite(Arc::new(solve_finite(channel))),
        PolicyKind::PomdpStationary => {
            let st = stationary_threshold(channel, tol, max_iter)?;
            LocalRule::Stationary(Arc::new(failure_run_policy(channel, st.alpha_bar)))
        }
        PolicyKind::RssBaseline | PolicyKind::ThroughputBaseline => LocalRule::AlwaysContinue,
    })
}

const MAX_LISTED_PI: usize = 20;

/// Thresholds, stationary threshold, failure-run beliefs and run length.
pub fn solve_report(cfg: &ExperimentConfig) -> Result<String, ExperimentError> {
    let p = cfg.channel()?;
    let sol = solve_finite(&p);
    let st = stationary_threshold(&p, cfg.stationary_tol, cfg.stationary_max_iter)?;
    let pol = failure_run_policy(&p, st.alpha_bar);
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "channel: q={} s={} k={} C={} N={}", p.q(), p.s(), p.k(), p.cost(), p.horizon());
    let lhs = p.k() * (1.0 + p.q());
    if p.continue_condition() {
        let _ = writeln!(w, "nontriviality: k(1+q) = {lhs} > 1 holds");
    } else {
        let _ = writeln!(w, "nontriviality: k(1+q) = {lhs} <= 1");
        let _ = writeln!(w, "threshold trivial: always explore-dominant condition fails");
    }
    let _ = writeln!(w, "thresholds:");
    for (l, (&a, &dom)) in sol.thresholds().iter().zip(sol.explore_dominant()).enumerate() {
        let tag = if dom { "  (exploring beats continuing at every belief)" } else { "" };
        let _ = writeln!(w, "  alpha_{l} = {a}{tag}");
    }
    let _ = writeln!(
        w,
        "stationary threshold: alpha_bar = {} (tol {:e}, {} iterations)",
        st.alpha_bar, st.tol, st.iterations
    );
    let listed: Vec<String> = pol.pi.iter().take(MAX_LISTED_PI).map(|v| v.to_string()).collect();
    let more = if pol.pi.len() > MAX_LISTED_PI {
        format!(" ... ({} terms)", pol.pi.len())
    } else {
        String::new()
    };
    let _ = writeln!(w, "failure-run beliefs: pi = [{}]{more}", listed.join(", "));
    let _ = writeln!(w, "fixed point: b* = {}", pol.fixed_point);
    match pol.r {
        RunLength::Finite(r) => {
            let _ = writeln!(w, "r = {r}");
        }
        RunLength::Unbounded => {
            let _ = writeln!(w, "r = UNBOUNDED (b* = {} >= alpha_bar = {})", pol.fixed_point, st.alpha_bar);
        }
    }
    Ok(out)
}

/// One (static count, dynamic count, policy) cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    pub statics: usize,
    pub dynamic: usize,
    pub policy: PolicyKind,
}

impl SweepPoint {
    fn label(&self) -> String {
        format!("S{}_D{}_{}", self.statics, self.dynamic, self.policy)
    }
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: SweepPoint,
    /// Indexed by run.
    pub seeds: Vec<u64>,
    pub stats: Vec<EpisodeStats>,
    /// `(run, trace)` for traced runs.
    pub traces: Vec<(usize, Trace)>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub runs: usize,
    pub points: Vec<PointResult>,
}

/// Sweep points in output order: static count, then dynamic count, then policy.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let mut points = Vec::new();
    for &statics in &cfg.static_counts {
        for &dynamic in &cfg.dynamic_counts {
            for &policy in &cfg.policies {
                points.push(SweepPoint { statics, dynamic, policy });
            }
        }
    }
    points
}

fn worker_pool(jobs: usize) -> Result<rayon::ThreadPool, ExperimentError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))
}

/// Runs every episode of the sweep. Run `i` of every point uses the same
/// run seed, so policies and obstacle counts share random numbers.
pub fn run_sweep(cfg: &ExperimentConfig, trace: bool) -> Result<SweepOutput, ExperimentError> {
    cfg.validate()?;
    let channel = cfg.channel()?;
    let geom = Geometry::new(cfg.grid, cfg.link_radius);
    let mut rules = Vec::new();
    for &kind in &cfg.policies {
        rules.push(local_rule(kind, &channel, cfg.stationary_tol, cfg.stationary_max_iter)?);
    }
    let points = sweep_points(cfg);
    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.runs).map(move |r| (p, r)))
        .collect();
    let pool = worker_pool(cfg.jobs)?;
    let results: Vec<(EpisodeStats, Option<Trace>)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(pi, run)| {
                let point = points[pi];
                let rule = &rules[cfg.policies.iter().position(|&k| k == point.policy).expect("listed")];
                let sim = cfg.sim(point.policy, point.dynamic, point.statics, rng::run_seed(cfg.seed, run as u64))?;
                if trace && run < cfg.trace_runs {
                    let mut t = Trace::default();
                    let stats = run_episode(&sim, &geom, rule, Some(&mut t))?;
                    Ok((stats, Some(t)))
                } else {
                    Ok((run_episode(&sim, &geom, rule, None)?, None))
                }
            })
            .collect::<Result<Vec<_>, ExperimentError>>()
    })?;

    let mut it = results.into_iter();
    let points = points
        .into_iter()
        .map(|point| {
            let mut stats = Vec::with_capacity(cfg.runs);
            let mut traces = Vec::new();
            for run in 0..cfg.runs {
                let (s, t) = it.next().expect("one result per task");
                stats.push(s);
                if let Some(t) = t {
                    traces.push((run, t));
                }
            }
            PointResult {
                point,
                seeds: (0..cfg.runs as u64).map(|r| rng::run_seed(cfg.seed, r)).collect(),
                stats,
                traces,
            }
        })
        .collect();
    Ok(SweepOutput { runs: cfg.runs, points })
}

pub const CSV_HEADER: &str = "policy,D,static,seed,packets_delivered,packets_lost,exploration_slots,stalled_slots,total_delay_s,hops,loss_per_delivered,e2e_delay_per_packet_s,loss_per_delivered_per_hop,e2e_delay_per_packet_per_hop_s";

/// One row per episode.
pub fn runs_csv(out: &SweepOutput) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for pr in &out.points {
        let p = pr.point;
        for (seed, st) in pr.seeds.iter().zip(&pr.stats) {
            let _ = write!(s, "{},{},{},{}", p.policy, p.dynamic, p.statics, seed);
            for v in st.metric_values() {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
    }
    s
}

/// One row per sweep point and metric.
pub fn summary_csv(out: &SweepOutput) -> Result<String, ExperimentError> {
    let mut s = String::from("policy,D,static,runs,metric,n,mean,sd,ci_half,ci_defined\n");
    for pr in &out.points {
        let p = pr.point;
        let sum = aggregate(&pr.stats).map_err(|e| ExperimentError::Pool(e.to_string()))?;
        for (name, m) in METRICS.iter().zip(&sum.metrics) {
            let _ = writeln!(
                s,
                "{},{},{},{},{name},{},{},{},{},{}",
                p.policy, p.dynamic, p.statics, sum.runs, m.n, m.mean, m.sd, m.ci_half, m.ci_defined
            );
        }
    }
    Ok(s)
}

/// Per hop position: mean packets lost and mean delay spent there.
pub fn per_hop_csv(out: &SweepOutput) -> Result<String, ExperimentError> {
    let mut s = String::from("policy,D,static,runs,hop,lost_mean,lost_ci_half,delay_s_mean,delay_s_ci_half\n");
    for pr in &out.points {
        let p = pr.point;
        let sum = aggregate(&pr.stats).map_err(|e| ExperimentError::Pool(e.to_string()))?;
        for (h, (l, d)) in sum.per_hop_loss.iter().zip(&sum.per_hop_delay_s).enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{h},{},{},{},{}",
                p.policy, p.dynamic, p.statics, sum.runs, l.mean, l.ci_half, d.mean, d.ci_half
            );
        }
    }
    Ok(s)
}

pub fn obstacles_csv(trace: &Trace, geom: &Geometry) -> String {
    let mut s = String::from("slot,obstacle_id,cell_x,cell_y\n");
    for (slot, zones) in &trace.obstacles {
        for (o, &z) in zones.iter().enumerate() {
            let (x, y) = geom.grid().coords(z);
            let _ = writeln!(s, "{slot},{o},{x},{y}");
        }
    }
    s
}

pub fn slots_csv(trace: &Trace) -> String {
    fn opt_f(v: f64) -> String {
        if v.is_nan() {
            String::new()
        } else {
            v.to_string()
        }
    }
    let mut s = String::from("frame,slot,hop,action,x,z,belief_before,belief_after\n");
    for e in &trace.slots {
        let x = e.x.map(|g| (g as u8).to_string()).unwrap_or_default();
        let z = e.z.map(|z| z.bit().to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{x},{z},{},{}",
            e.frame,
            e.slot,
            e.hop,
            e.action,
            opt_f(e.belief_before),
            opt_f(e.belief_after)
        );
    }
    s
}

/// Paths written next to the per-run CSV `out`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

/// Writes the per-run CSV, the summary, the per-hop table, the effective
/// configuration and any traces; returns the paths written, in order.
pub fn write_sweep(cfg: &ExperimentConfig, sweep: &SweepOutput, out: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut written = Vec::new();
    let mut put = |path: PathBuf, body: String| -> Result<(), ExperimentError> {
        fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };
    put(out.to_path_buf(), runs_csv(sweep))?;
    put(sibling(out, "_summary.csv"), summary_csv(sweep)?)?;
    put(sibling(out, "_per_hop.csv"), per_hop_csv(sweep)?)?;
    put(sibling(out, "_config.txt"), cfg.to_text())?;
    let geom = Geometry::new(cfg.grid, cfg.link_radius);
    let dir = sibling(out, "_traces");
    if sweep.points.iter().any(|p| !p.traces.is_empty()) {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    for pr in &sweep.points {
        for (run, t) in &pr.traces {
            let base = format!("{}_run{run}", pr.point.label());
            put(dir.join(format!("{base}_obstacles.csv")), obstacles_csv(t, &geom))?;
            put(dir.join(format!("{base}_slots.csv")), slots_csv(t))?;
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(CheckOutcome::passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.outcomes {
            let verdict = if c.passed() { "PASS" } else { "FAIL" };
            let _ = write!(s, "{verdict} {}: max deviation {:e} (tolerance {:e})", c.name, c.max_deviation, c.tolerance);
            if let (false, Some(at)) = (c.passed(), &c.worst_at) {
                let _ = write!(s, " at {at}");
            }
            s.push('\n');
        }
        let failed = self.outcomes.iter().filter(|c| !c.passed()).count();
        if failed == 0 {
            let _ = writeln!(s, "all {} checks passed", self.outcomes.len());
        } else {
            let _ = writeln!(s, "{failed} of {} checks failed", self.outcomes.len());
        }
        s
    }
}

pub fn oracle_report(cfg: &ExperimentConfig, backup: BackupFn) -> OracleReport {
    OracleReport {
        outcomes: run_all(&cfg.suite(), backup),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::dp_backup;
    use crate::pomdp::suite::faulty_backup;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.runs = 2;
        cfg.frames = 3;
        cfg.jobs = 2;
        cfg
    }

    #[test]
    fn row_count_and_header() {
        let cfg = tiny();
        let out = run_sweep(&cfg, false).unwrap();
        let csv = runs_csv(&out);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.count(), 5 * 4 * 2);
    }

    #[test]
    fn d_column_uses_default_counts() {
        let out = run_sweep(&tiny(), false).unwrap();
        for line in runs_csv(&out).lines().skip(1) {
            let d: usize = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!([0, 16, 32, 48, 64].contains(&d));
        }
    }

    #[test]
    fn job_count_does_not_change_results() {
        let mut a = tiny();
        a.jobs = 1;
        let mut b = tiny();
        b.jobs = 3;
        assert_eq!(runs_csv(&run_sweep(&a, false).unwrap()), runs_csv(&run_sweep(&b, false).unwrap()));
    }

    #[test]
    fn traces_only_for_requested_runs() {
        let mut cfg = tiny();
        cfg.dynamic_counts = vec![4];
        cfg.trace_runs = 1;
        let out = run_sweep(&cfg, true).unwrap();
        for pr in &out.points {
            assert_eq!(pr.traces.len(), 1);
            assert_eq!(pr.traces[0].0, 0);
        }
        let slots = slots_csv(&out.points[0].traces[0].1);
        assert_eq!(slots.lines().count(), 1 + cfg.frames * cfg.slots_per_frame);
    }

    #[test]
    fn solve_report_examples() {
        let mut cfg = ExperimentConfig::default();
        cfg.k = 0.8;
        cfg.slots_per_frame = 2;
        let r = solve_report(&cfg).unwrap();
        assert!(r.contains("alpha_0 = 0.6388888888888"), "{r}");
        assert!(r.contains("alpha_1 = 0"));

        cfg.q = 0.5;
        cfg.k = 0.2;
        let r = solve_report(&cfg).unwrap();
        assert!(r.contains("threshold trivial: always explore-dominant condition fails"));
        assert!(r.contains("alpha_0 = 1"));

        cfg.s = 0.6;
        assert!(matches!(solve_report(&cfg), Err(ExperimentError::Config(ConfigError::Channel(_)))));
    }

    #[test]
    fn solve_report_unbounded_run() {
        let mut cfg = ExperimentConfig::default();
        cfg.k = 1.0;
        let r = solve_report(&cfg).unwrap();
        assert!(r.contains("r = 1"), "{r}");
    }

    #[test]
    fn oracle_report_small() {
        let mut cfg = ExperimentConfig::default();
        cfg.oracle.grid_oracle_sets = 2;
        cfg.oracle.grid_oracle_max_horizon = 8;
        cfg.oracle.structure_sets = 2;
        let good = oracle_report(&cfg, dp_backup);
        assert!(good.passed(), "{}", good.render());
        assert!(good.render().contains("max deviation"));
        let bad = oracle_report(&cfg, faulty_backup);
        assert!(!bad.passed());
        assert!(bad.render().contains("FAIL closed-form last-decision threshold"));
    }
}
