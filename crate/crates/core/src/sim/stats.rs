//! Per-episode counters and their aggregation.

use thiserror::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HopStats {
    pub transmit_slots: u64,
    pub lost: u64,
    pub exploration_slots: u64,
    pub stalled_slots: u64,
    /// Successful hop transmissions out of this hop position.
    pub successes: u64,
    /// Time delivered packets spent at this hop position, s.
    pub delay_s: f64,
}

/// Counters of one episode. Hop index `h` is the number of hops the packet
/// had already made when the slot was spent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeStats {
    pub slots: u64,
    pub transmit_slots: u64,
    pub packets_delivered: u64,
    pub packets_lost: u64,
    pub exploration_slots: u64,
    pub stalled_slots: u64,
    /// Sum of end-to-end delays of delivered packets, s.
    pub total_delay_s: f64,
    /// Every successful hop transmission, including the packet still in flight.
    pub hops_traversed: u64,
    /// Hops made by packets that reached the destination.
    pub delivered_hops: u64,
    pub per_hop: Vec<HopStats>,
}

impl EpisodeStats {
    pub fn hop_mut(&mut self, h: usize) -> &mut HopStats {
        if self.per_hop.len() <= h {
            self.per_hop.resize(h + 1, HopStats::default());
        }
        &mut self.per_hop[h]
    }

    pub fn loss_per_delivered(&self) -> f64 {
        self.packets_lost as f64 / self.packets_delivered.max(1) as f64
    }

    /// NaN when nothing was delivered.
    pub fn e2e_delay_per_packet_s(&self) -> f64 {
        if self.packets_delivered == 0 {
            f64::NAN
        } else {
            self.total_delay_s / self.packets_delivered as f64
        }
    }

    /// Mean hop count of delivered packets; NaN when nothing was delivered.
    pub fn mean_hops(&self) -> f64 {
        if self.packets_delivered == 0 {
            f64::NAN
        } else {
            self.delivered_hops as f64 / self.packets_delivered as f64
        }
    }

    pub fn loss_per_delivered_per_hop(&self) -> f64 {
        self.loss_per_delivered() / self.mean_hops()
    }

    pub fn e2e_delay_per_packet_per_hop_s(&self) -> f64 {
        self.e2e_delay_per_packet_s() / self.mean_hops()
    }

    /// Metric values in [`METRICS`] order.
    pub fn metric_values(&self) -> [f64; METRICS.len()] {
        [
            self.packets_delivered as f64,
            self.packets_lost as f64,
            self.exploration_slots as f64,
            self.stalled_slots as f64,
            self.total_delay_s,
            self.delivered_hops as f64,
            self.loss_per_delivered(),
            self.e2e_delay_per_packet_s(),
            self.loss_per_delivered_per_hop(),
            self.e2e_delay_per_packet_per_hop_s(),
        ]
    }
}

pub const METRICS: [&str; 10] = [
    "packets_delivered",
    "packets_lost",
    "exploration_slots",
    "stalled_slots",
    "total_delay_s",
    "hops",
    "loss_per_delivered",
    "e2e_delay_per_packet_s",
    "loss_per_delivered_per_hop",
    "e2e_delay_per_packet_per_hop_s",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    /// Episodes with a defined (non-NaN) value.
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci_half: f64,
    /// False when fewer than two values were available; `ci_half` is then 0.
    pub ci_defined: bool,
}

impl MetricSummary {
    pub fn lower(&self) -> f64 {
        self.mean - self.ci_half
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci_half
    }

    pub fn overlaps(&self, other: &MetricSummary) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

const Z_95: f64 = 1.959_963_984_540_054;

/// Mean, sample sd and CI of the non-NaN values. Values are summed in
/// sorted order so the result does not depend on input order.
pub fn summarize(values: &[f64]) -> MetricSummary {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return MetricSummary {
            n,
            mean: f64::NAN,
            sd: f64::NAN,
            ci_half: 0.0,
            ci_defined: false,
        };
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MetricSummary {
            n,
            mean,
            sd: 0.0,
            ci_half: 0.0,
            ci_defined: false,
        };
    }
    let mut sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    sq.sort_by(f64::total_cmp);
    let sd = (sq.iter().sum::<f64>() / (n - 1) as f64).sqrt();
    MetricSummary {
        n,
        mean,
        sd,
        ci_half: Z_95 * sd / (n as f64).sqrt(),
        ci_defined: true,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("cannot aggregate an empty set of episodes")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub runs: usize,
    /// In [`METRICS`] order.
    pub metrics: Vec<MetricSummary>,
    /// Per hop position: mean lost packets and mean delay spent there.
    pub per_hop_loss: Vec<MetricSummary>,
    pub per_hop_delay_s: Vec<MetricSummary>,
}

impl Summary {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        METRICS.iter().position(|m| *m == name).map(|i| &self.metrics[i])
    }
}

pub fn aggregate(stats: &[EpisodeStats]) -> Result<Summary, AggregateError> {
    if stats.is_empty() {
        return Err(AggregateError::Empty);
    }
    let metrics = (0..METRICS.len())
        .map(|m| summarize(&stats.iter().map(|s| s.metric_values()[m]).collect::<Vec<_>>()))
        .collect();
    let hops = stats.iter().map(|s| s.per_hop.len()).max().unwrap_or(0);
    let per_hop = |f: &dyn Fn(&HopStats) -> f64| -> Vec<MetricSummary> {
        (0..hops)
            .map(|h| {
                let vals: Vec<f64> = stats
                    .iter()
                    .map(|s| s.per_hop.get(h).map(f).unwrap_or(0.0))
                    .collect();
                summarize(&vals)
            })
            .collect()
    };
    Ok(Summary {
        runs: stats.len(),
        metrics,
        per_hop_loss: per_hop(&|h| h.lost as f64),
        per_hop_delay_s: per_hop(&|h| h.delay_s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_loss(lost: u64) -> EpisodeStats {
        EpisodeStats {
            packets_delivered: 2,
            packets_lost: lost,
            total_delay_s: 1.0,
            delivered_hops: 4,
            ..EpisodeStats::default()
        }
    }

    #[test]
    fn single_episode() {
        let s = aggregate(&[with_loss(3)]).unwrap();
        let m = s.metric("packets_lost").unwrap();
        assert_eq!(m.mean, 3.0);
        assert_eq!(m.ci_half, 0.0);
        assert!(!m.ci_defined);
    }

    #[test]
    fn identical_episodes_have_zero_variance() {
        let s = aggregate(&[with_loss(3), with_loss(3), with_loss(3)]).unwrap();
        let m = s.metric("loss_per_delivered").unwrap();
        assert_eq!(m.sd, 0.0);
        assert!(m.ci_defined);
    }

    #[test]
    fn mean_of_two() {
        let s = aggregate(&[with_loss(2), with_loss(4)]).unwrap();
        assert_eq!(s.metric("packets_lost").unwrap().mean, 3.0);
        assert_eq!(s.metric("loss_per_delivered").unwrap().mean, 1.5);
        assert_eq!(s.metric("loss_per_delivered_per_hop").unwrap().mean, 0.75);
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(aggregate(&[]), Err(AggregateError::Empty));
    }

    #[test]
    fn undelivered_episodes_excluded_from_delay() {
        let none = EpisodeStats {
            packets_lost: 5,
            ..EpisodeStats::default()
        };
        assert!(none.e2e_delay_per_packet_s().is_nan());
        assert_eq!(none.loss_per_delivered(), 5.0);
        let s = aggregate(&[none, with_loss(0)]).unwrap();
        let d = s.metric("e2e_delay_per_packet_s").unwrap();
        assert_eq!((d.n, d.mean), (1, 0.5));
    }

    #[test]
    fn order_independent() {
        let eps: Vec<EpisodeStats> = (0..20).map(|i| with_loss(i * 7 % 11)).collect();
        let mut rev = eps.clone();
        rev.reverse();
        rev.swap(3, 9);
        assert_eq!(aggregate(&eps).unwrap(), aggregate(&rev).unwrap());
    }
}
