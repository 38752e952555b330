//! Relay decisions: BS chain assignment at frame boundaries and per-slot
//! local continue/explore rules.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::pomdp::{belief_update, Ack, Belief, ChannelParams, DpSolution, StationaryPolicy};
use crate::world::{GridWorld, LinkObservation, Zone};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    PomdpFinite,
    PomdpStationary,
    RssBaseline,
    ThroughputBaseline,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::PomdpFinite,
        PolicyKind::PomdpStationary,
        PolicyKind::RssBaseline,
        PolicyKind::ThroughputBaseline,
    ];

    pub fn is_pomdp(self) -> bool {
        matches!(self, PolicyKind::PomdpFinite | PolicyKind::PomdpStationary)
    }

    /// Metric the BS uses when assigning this kind's relays. POMDP agents
    /// start each frame on the throughput chain.
    pub fn bs_metric(self) -> PolicyKind {
        match self {
            PolicyKind::RssBaseline => PolicyKind::RssBaseline,
            _ => PolicyKind::ThroughputBaseline,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::PomdpFinite => "POMDP_FINITE",
            PolicyKind::PomdpStationary => "POMDP_STATIONARY",
            PolicyKind::RssBaseline => "RSS_BASELINE",
            PolicyKind::ThroughputBaseline => "THROUGHPUT_BASELINE",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown policy '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Continue,
    Explore,
}

/// Local decision rule; solutions are shared read-only between episodes.
#[derive(Debug, Clone)]
pub enum LocalRule {
    Finite(Arc<DpSolution>),
    Stationary(Arc<StationaryPolicy>),
    AlwaysContinue,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub current_relay: Zone,
    pub belief: Belief,
    pub consecutive_failures: u32,
    pub slot_index: usize,
}

impl AgentState {
    pub fn new(relay: Zone, prior: Belief) -> Self {
        Self {
            current_relay: relay,
            belief: prior,
            consecutive_failures: 0,
            slot_index: 0,
        }
    }

    pub fn switch_to(&mut self, relay: Zone, prior: Belief) {
        self.current_relay = relay;
        self.belief = prior;
        self.consecutive_failures = 0;
    }
}

pub fn local_decide(agent: &AgentState, rule: &LocalRule) -> Action {
    let keep = match rule {
        LocalRule::Finite(sol) => sol.should_continue(agent.slot_index, agent.belief.value()),
        LocalRule::Stationary(pol) => !pol.should_explore(agent.consecutive_failures),
        LocalRule::AlwaysContinue => true,
    };
    if keep {
        Action::Continue
    } else {
        Action::Explore
    }
}

pub fn on_ack(agent: &mut AgentState, z: Ack, p: &ChannelParams) {
    agent.belief = belief_update(agent.belief, z, p);
    agent.consecutive_failures = match z {
        Ack::Received => 0,
        Ack::Missing => agent.consecutive_failures + 1,
    };
    agent.slot_index += 1;
}

/// Score of extending the chain by a link with stale observation `link`;
/// `bottleneck` is the smallest capacity on the chain so far.
pub fn baseline_metric(kind: PolicyKind, link: &LinkObservation, bottleneck: f64) -> f64 {
    if link.blocked {
        return f64::NEG_INFINITY;
    }
    match kind.bs_metric() {
        PolicyKind::RssBaseline => link.budget.rx_power,
        _ => bottleneck.min(link.budget.capacity),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoPath {
    pub at: Zone,
}

/// Higher score first; among equal scores the candidate closer to the
/// destination, then the lower zone index.
fn better(world: &GridWorld, a: (Zone, f64), b: (Zone, f64)) -> bool {
    let grid = world.grid();
    match a.1.total_cmp(&b.1) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match grid
            .distance(a.0, world.dest())
            .total_cmp(&grid.distance(b.0, world.dest()))
        {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a.0 < b.0,
        },
    }
}

/// Greedy hop-by-hop chain from `from` to the destination using stale link
/// observations. Candidates are the routable relays of each zone; a
/// destination in range whose stale link is clear is taken directly.
pub fn bs_global_assign<F>(world: &GridWorld, stale: F, kind: PolicyKind, from: Zone) -> Result<Vec<Zone>, NoPath>
where
    F: Fn(Zone, Zone) -> LinkObservation,
{
    let mut chain = vec![from];
    let mut bottleneck = f64::INFINITY;
    let mut cur = from;
    while cur != world.dest() {
        let mut best: Option<(Zone, f64, LinkObservation)> = None;
        let candidates = world.routable_relays(cur);
        if candidates.contains(&world.dest()) {
            let obs = stale(cur, world.dest());
            if !obs.blocked {
                chain.push(world.dest());
                break;
            }
        }
        for j in candidates {
            let obs = stale(cur, j);
            let score = baseline_metric(kind, &obs, bottleneck);
            if best.as_ref().is_none_or(|&(bj, bs, _)| better(world, (j, score), (bj, bs))) {
                best = Some((j, score, obs));
            }
        }
        let Some((next, _, obs)) = best else {
            return Err(NoPath { at: cur });
        };
        bottleneck = bottleneck.min(if obs.blocked { 0.0 } else { obs.budget.capacity });
        chain.push(next);
        cur = next;
    }
    Ok(chain)
}

/// One-slot probe of the routable relays of `at`: the unblocked candidate
/// with the highest instantaneous received power, lowest index on ties.
pub fn explore_select<F>(world: &GridWorld, at: Zone, probe: F) -> Option<Zone>
where
    F: Fn(Zone, Zone) -> LinkObservation,
{
    let mut best: Option<(Zone, f64)> = None;
    for j in world.routable_relays(at) {
        let obs = probe(at, j);
        if obs.blocked {
            continue;
        }
        let rx = obs.budget.rx_power;
        if best.is_none_or(|(bj, brx)| rx > brx || (rx == brx && j < bj)) {
            best = Some((j, rx));
        }
    }
    best.map(|(j, _)| j)
}
