//! 60 GHz zone-to-zone link budget.

use thiserror::Error;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadioError {
    #[error("distance must be positive, got {0} m")]
    Distance(f64),
    #[error("radio parameter {name} = {value} is out of range ({rule})")]
    Param {
        name: &'static str,
        value: f64,
        rule: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    /// Hz
    pub carrier_freq: f64,
    /// dBm
    pub tx_power: f64,
    /// dB
    pub gain_tx: f64,
    /// dB
    pub gain_rx: f64,
    pub ple: f64,
    /// dB
    pub shadow_sigma: f64,
    /// dBm/Hz
    pub noise_density: f64,
    /// Hz
    pub bandwidth: f64,
    /// m
    pub ref_dist: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            carrier_freq: 60e9,
            tx_power: 24.0,
            gain_tx: 6.0,
            gain_rx: 6.0,
            ple: 2.5,
            shadow_sigma: 3.5,
            noise_density: -174.0,
            bandwidth: 20e6,
            ref_dist: 1.0,
        }
    }
}

impl RadioParams {
    /// All parameters positive except the noise density; path-loss exponent at least 2.
    pub fn validate(&self) -> Result<(), RadioError> {
        let positive = [
            ("carrier_freq", self.carrier_freq),
            ("tx_power", self.tx_power),
            ("gain_tx", self.gain_tx),
            ("gain_rx", self.gain_rx),
            ("shadow_sigma", self.shadow_sigma),
            ("bandwidth", self.bandwidth),
            ("ref_dist", self.ref_dist),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(RadioError::Param { name, value, rule: "must be positive" });
            }
        }
        if !(self.ple >= 2.0 && self.ple.is_finite()) {
            return Err(RadioError::Param {
                name: "ple",
                value: self.ple,
                rule: "must be at least 2",
            });
        }
        if !self.noise_density.is_finite() {
            return Err(RadioError::Param {
                name: "noise_density",
                value: self.noise_density,
                rule: "must be finite",
            });
        }
        Ok(())
    }

    pub fn noise_dbm(&self) -> f64 {
        self.noise_density + 10.0 * self.bandwidth.log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub distance: f64,
    pub shadow_draw: f64,
    pub rx_power: f64,
    /// Linear.
    pub snr: f64,
    /// bit/s
    pub capacity: f64,
}

/// Log-distance path loss with a free-space intercept at `ref_dist`.
pub fn path_loss_db(d: f64, p: &RadioParams) -> Result<f64, RadioError> {
    if !(d > 0.0) {
        return Err(RadioError::Distance(d));
    }
    let intercept = 20.0 * (4.0 * std::f64::consts::PI * p.ref_dist * p.carrier_freq / SPEED_OF_LIGHT).log10();
    Ok(intercept + 10.0 * p.ple * (d / p.ref_dist).log10())
}

pub fn shannon_capacity(snr: f64, bandwidth: f64) -> f64 {
    bandwidth * (1.0 + snr.max(0.0)).log2()
}

pub fn link_budget(d: f64, shadow_draw: f64, p: &RadioParams) -> Result<LinkBudget, RadioError> {
    let rx_power = p.tx_power + p.gain_tx + p.gain_rx - path_loss_db(d, p)? + shadow_draw;
    let snr = 10f64.powf((rx_power - p.noise_dbm()) / 10.0);
    Ok(LinkBudget {
        distance: d,
        shadow_draw,
        rx_power,
        snr,
        capacity: shannon_capacity(snr, p.bandwidth),
    })
}

/// Whether one slot at this capacity carries a full packet.
pub fn slot_supports_packet(lb: &LinkBudget, packet_bytes: u32, slot: f64) -> bool {
    lb.capacity * slot >= 8.0 * packet_bytes as f64
}
