//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Every key has a default,
//! unknown keys are errors, and [`ExperimentConfig::to_text`] writes the
//! complete effective configuration back in the same format.

use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

use crate::policy::PolicyKind;
use crate::pomdp::suite::SuiteConfig;
use crate::pomdp::{ChannelParams, ParamError};
use crate::radio::{RadioError, RadioParams};
use crate::sim::SimConfig;
use crate::world::{BlockageGating, GridSpec, WorldConfig, WorldError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("`{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error(transparent)]
    Channel(#[from] ParamError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Root seed; run `i` uses `rng::run_seed(seed, i)`.
    pub seed: u64,
    pub runs: usize,
    pub frames: usize,
    pub slots_per_frame: usize,
    pub slot_s: f64,
    pub packet_bytes: u32,
    pub q: f64,
    pub s: f64,
    pub k: f64,
    pub cost: f64,
    pub radio: RadioParams,
    pub grid: GridSpec,
    pub link_radius: usize,
    pub source: (usize, usize),
    pub dest: (usize, usize),
    pub gating: BlockageGating,
    pub move_prob: f64,
    pub switch_prior: f64,
    pub dynamic_counts: Vec<usize>,
    pub static_counts: Vec<usize>,
    pub policies: Vec<PolicyKind>,
    pub stationary_tol: f64,
    pub stationary_max_iter: usize,
    /// Runs per sweep point that get trace files when tracing is on.
    pub trace_runs: usize,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub oracle: SuiteConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let world = WorldConfig::default();
        Self {
            seed: 1,
            runs: 1000,
            frames: sim.frames,
            slots_per_frame: sim.channel.horizon(),
            slot_s: sim.slot_s,
            packet_bytes: sim.packet_bytes,
            q: sim.channel.q(),
            s: sim.channel.s(),
            k: sim.channel.k(),
            cost: sim.channel.cost(),
            radio: sim.radio,
            grid: world.grid,
            link_radius: world.link_radius,
            source: world.source,
            dest: world.dest,
            gating: world.gating,
            move_prob: world.move_prob,
            switch_prior: sim.switch_prior,
            dynamic_counts: vec![0, 16, 32, 48, 64],
            static_counts: vec![world.static_count],
            policies: PolicyKind::ALL.to_vec(),
            stationary_tol: 1e-12,
            stationary_max_iter: 100_000,
            trace_runs: 1,
            jobs: 0,
            oracle: SuiteConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: Display,
{
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if items.is_empty() {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "list must not be empty".into(),
        });
    }
    items.into_iter().map(|v| parse(key, v)).collect()
}

fn parse_cell(key: &str, value: &str) -> Result<(usize, usize), ConfigError> {
    let parts: Vec<usize> = parse_list(key, value)?;
    match parts[..] {
        [x, y] => Ok((x, y)),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected `x,y`".into(),
        }),
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Applies `text` on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: assignment.to_string(),
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = parse(key, v)?,
            "runs" => self.runs = parse(key, v)?,
            "frames" => self.frames = parse(key, v)?,
            "slots_per_frame" => self.slots_per_frame = parse(key, v)?,
            "slot_s" => self.slot_s = parse(key, v)?,
            "packet_bytes" => self.packet_bytes = parse(key, v)?,
            "channel.q" => self.q = parse(key, v)?,
            "channel.s" => self.s = parse(key, v)?,
            "channel.k" => self.k = parse(key, v)?,
            "channel.cost" => self.cost = parse(key, v)?,
            "radio.carrier_freq" => self.radio.carrier_freq = parse(key, v)?,
            "radio.tx_power" => self.radio.tx_power = parse(key, v)?,
            "radio.gain_tx" => self.radio.gain_tx = parse(key, v)?,
            "radio.gain_rx" => self.radio.gain_rx = parse(key, v)?,
            "radio.ple" => self.radio.ple = parse(key, v)?,
            "radio.shadow_sigma" => self.radio.shadow_sigma = parse(key, v)?,
            "radio.noise_density" => self.radio.noise_density = parse(key, v)?,
            "radio.bandwidth" => self.radio.bandwidth = parse(key, v)?,
            "radio.ref_dist" => self.radio.ref_dist = parse(key, v)?,
            "world.cols" => self.grid.cols = parse(key, v)?,
            "world.rows" => self.grid.rows = parse(key, v)?,
            "world.cell_m" => self.grid.cell_m = parse(key, v)?,
            "world.link_radius" => self.link_radius = parse(key, v)?,
            "world.source" => self.source = parse_cell(key, v)?,
            "world.dest" => self.dest = parse_cell(key, v)?,
            "world.gating" => self.gating = parse(key, v)?,
            "world.move_prob" => self.move_prob = parse(key, v)?,
            "switch_prior" => self.switch_prior = parse(key, v)?,
            "sweep.dynamic_counts" => self.dynamic_counts = parse_list(key, v)?,
            "sweep.static_counts" => self.static_counts = parse_list(key, v)?,
            "sweep.policies" => self.policies = parse_list(key, v)?,
            "stationary.tol" => self.stationary_tol = parse(key, v)?,
            "stationary.max_iter" => self.stationary_max_iter = parse(key, v)?,
            "trace.runs" => self.trace_runs = parse(key, v)?,
            "jobs" => self.jobs = parse(key, v)?,
            "oracle.closed_form_sets" => self.oracle.closed_form_sets = parse(key, v)?,
            "oracle.structure_sets" => self.oracle.structure_sets = parse(key, v)?,
            "oracle.structure_horizon" => self.oracle.structure_horizon = parse(key, v)?,
            "oracle.belief_grid" => self.oracle.belief_grid = parse(key, v)?,
            "oracle.grid_sets" => self.oracle.grid_oracle_sets = parse(key, v)?,
            "oracle.grid_max_horizon" => self.oracle.grid_oracle_max_horizon = parse(key, v)?,
            "oracle.grid_points" => self.oracle.grid_oracle_points = parse(key, v)?,
            "oracle.enumeration_sets" => self.oracle.enumeration_sets = parse(key, v)?,
            "oracle.enumeration_horizon" => self.oracle.enumeration_horizon = parse(key, v)?,
            "oracle.enumeration_beliefs" => self.oracle.enumeration_beliefs = parse_list(key, v)?,
            "oracle.failure_run_sets" => self.oracle.failure_run_sets = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Every key with its effective value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let r = &self.radio;
        let o = &self.oracle;
        vec![
            ("seed", self.seed.to_string()),
            ("runs", self.runs.to_string()),
            ("frames", self.frames.to_string()),
            ("slots_per_frame", self.slots_per_frame.to_string()),
            ("slot_s", self.slot_s.to_string()),
            ("packet_bytes", self.packet_bytes.to_string()),
            ("channel.q", self.q.to_string()),
            ("channel.s", self.s.to_string()),
            ("channel.k", self.k.to_string()),
            ("channel.cost", self.cost.to_string()),
            ("radio.carrier_freq", r.carrier_freq.to_string()),
            ("radio.tx_power", r.tx_power.to_string()),
            ("radio.gain_tx", r.gain_tx.to_string()),
            ("radio.gain_rx", r.gain_rx.to_string()),
            ("radio.ple", r.ple.to_string()),
            ("radio.shadow_sigma", r.shadow_sigma.to_string()),
            ("radio.noise_density", r.noise_density.to_string()),
            ("radio.bandwidth", r.bandwidth.to_string()),
            ("radio.ref_dist", r.ref_dist.to_string()),
            ("world.cols", self.grid.cols.to_string()),
            ("world.rows", self.grid.rows.to_string()),
            ("world.cell_m", self.grid.cell_m.to_string()),
            ("world.link_radius", self.link_radius.to_string()),
            ("world.source", format!("{},{}", self.source.0, self.source.1)),
            ("world.dest", format!("{},{}", self.dest.0, self.dest.1)),
            ("world.gating", self.gating.to_string()),
            ("world.move_prob", self.move_prob.to_string()),
            ("switch_prior", self.switch_prior.to_string()),
            ("sweep.dynamic_counts", join(&self.dynamic_counts)),
            ("sweep.static_counts", join(&self.static_counts)),
            ("sweep.policies", join(&self.policies)),
            ("stationary.tol", self.stationary_tol.to_string()),
            ("stationary.max_iter", self.stationary_max_iter.to_string()),
            ("trace.runs", self.trace_runs.to_string()),
            ("jobs", self.jobs.to_string()),
            ("oracle.closed_form_sets", o.closed_form_sets.to_string()),
            ("oracle.structure_sets", o.structure_sets.to_string()),
            ("oracle.structure_horizon", o.structure_horizon.to_string()),
            ("oracle.belief_grid", o.belief_grid.to_string()),
            ("oracle.grid_sets", o.grid_oracle_sets.to_string()),
            ("oracle.grid_max_horizon", o.grid_oracle_max_horizon.to_string()),
            ("oracle.grid_points", o.grid_oracle_points.to_string()),
            ("oracle.enumeration_sets", o.enumeration_sets.to_string()),
            ("oracle.enumeration_horizon", o.enumeration_horizon.to_string()),
            ("oracle.enumeration_beliefs", join(&o.enumeration_beliefs)),
            ("oracle.failure_run_sets", o.failure_run_sets.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn channel(&self) -> Result<ChannelParams, ConfigError> {
        Ok(ChannelParams::new(self.q, self.s, self.k, self.cost, self.slots_per_frame)?)
    }

    /// Oracle suite settings; the root seed and stationary settings are shared.
    pub fn suite(&self) -> SuiteConfig {
        SuiteConfig {
            seed: self.seed,
            stationary_tol: self.stationary_tol,
            stationary_max_iter: self.stationary_max_iter,
            ..self.oracle.clone()
        }
    }

    pub fn world(&self, dynamic: usize, statics: usize) -> WorldConfig {
        WorldConfig {
            grid: self.grid,
            static_count: statics,
            dynamic_count: dynamic,
            source: self.source,
            dest: self.dest,
            link_radius: self.link_radius,
            gating: self.gating,
            move_prob: self.move_prob,
        }
    }

    /// Simulation settings of one sweep point; `seed` is the run seed.
    pub fn sim(&self, policy: PolicyKind, dynamic: usize, statics: usize, seed: u64) -> Result<SimConfig, ConfigError> {
        Ok(SimConfig {
            slot_s: self.slot_s,
            frames: self.frames,
            packet_bytes: self.packet_bytes,
            world: self.world(dynamic, statics),
            policy,
            channel: self.channel()?,
            radio: self.radio,
            seed,
            switch_prior: self.switch_prior,
        })
    }

    /// Checks everything a sweep needs before any episode runs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
            ConfigError::Invalid { key, reason: reason.into() }
        }
        self.channel()?;
        self.radio.validate()?;
        if self.runs == 0 {
            return Err(invalid("runs", "must be at least 1"));
        }
        if self.frames == 0 {
            return Err(invalid("frames", "must be at least 1"));
        }
        if !(self.slot_s > 0.0 && self.slot_s.is_finite()) {
            return Err(invalid("slot_s", "must be positive"));
        }
        if self.packet_bytes == 0 {
            return Err(invalid("packet_bytes", "must be positive"));
        }
        if !(self.grid.cell_m > 0.0 && self.grid.cell_m.is_finite()) {
            return Err(invalid("world.cell_m", "must be positive"));
        }
        if self.link_radius == 0 {
            return Err(invalid("world.link_radius", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.move_prob) {
            return Err(invalid("world.move_prob", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.switch_prior) {
            return Err(invalid("switch_prior", "must lie in [0, 1]"));
        }
        if !(self.stationary_tol > 0.0) {
            return Err(invalid("stationary.tol", "must be positive"));
        }
        if self.dynamic_counts.is_empty() || self.static_counts.is_empty() || self.policies.is_empty() {
            return Err(invalid("sweep", "lists must not be empty"));
        }
        for &st in &self.static_counts {
            self.world(0, st).validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("channel.k", "0.8").unwrap();
        cfg.set("sweep.policies", "rss_baseline, POMDP_FINITE").unwrap();
        cfg.set("world.dest", "5,7").unwrap();
        cfg.set("oracle.enumeration_beliefs", "0.1,0.9").unwrap();
        assert_eq!(ExperimentConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = ExperimentConfig::from_text("# header\n\nruns = 7  # inline\nseed=42\n").unwrap();
        assert_eq!((cfg.runs, cfg.seed), (7, 42));
    }

    #[test]
    fn unknown_key_rejected() {
        assert_eq!(
            ExperimentConfig::from_text("channel.x = 1"),
            Err(ConfigError::UnknownKey("channel.x".into()))
        );
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(matches!(ExperimentConfig::from_text("runs"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(ExperimentConfig::from_text("runs = many"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(
            ExperimentConfig::from_text("sweep.dynamic_counts = "),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(ExperimentConfig::from_text("world.source = 1"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn invalid_channel_names_invariant() {
        let cfg = ExperimentConfig::from_text("channel.s = 0.95").unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::Channel(ParamError::NotOrdered { .. }))));
    }

    #[test]
    fn invalid_sweep_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.runs = 0;
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::from_text("sweep.static_counts = 99").unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::World(WorldError::TooManyObstacles { .. }))));
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = ExperimentConfig::default();
        let mut fresh = ExperimentConfig::default();
        for (k, v) in cfg.entries() {
            fresh.set(k, &v).unwrap();
        }
        assert_eq!(fresh, cfg);
    }
}
