//! Frame-structured slot loop over one world.
//!
//! At the first slot of each frame the BS assigns relays from a snapshot
//! taken at the end of the previous frame. Within the frame each sending
//! zone's agent keeps its own relay, belief and failure count, and every
//! slot is spent transmitting, exploring or stalled.

pub mod matched;
pub mod stats;

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::policy::{bs_global_assign, explore_select, local_decide, on_ack, Action, AgentState, LocalRule, PolicyKind};
use crate::pomdp::{Ack, Belief, ChannelParams};
use crate::radio::RadioParams;
use crate::rng::{self, Purpose};
use crate::world::{build_world, Geometry, GridWorld, LinkEnv, WorldConfig, WorldError, Zone};

pub use stats::{aggregate, summarize, AggregateError, EpisodeStats, HopStats, MetricSummary, Summary, METRICS};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Slot duration δ, s.
    pub slot_s: f64,
    pub frames: usize,
    pub packet_bytes: u32,
    pub world: WorldConfig,
    pub policy: PolicyKind,
    /// Link model; its horizon is the number of slots per frame.
    pub channel: ChannelParams,
    pub radio: RadioParams,
    pub seed: u64,
    /// Belief assigned to a freshly explored relay.
    pub switch_prior: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            slot_s: 0.1,
            frames: 50,
            packet_bytes: 65535,
            world: WorldConfig::default(),
            policy: PolicyKind::PomdpFinite,
            channel: ChannelParams::new(0.9, 0.1, 1.0, 1.0, 10).expect("valid defaults"),
            radio: RadioParams::default(),
            seed: 1,
            switch_prior: 1.0,
        }
    }
}

impl SimConfig {
    pub fn slots_per_frame(&self) -> usize {
        self.channel.horizon()
    }

    pub fn link_env(&self) -> LinkEnv {
        LinkEnv {
            radio: self.radio,
            packet_bytes: self.packet_bytes,
            slot_s: self.slot_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    World(#[from] WorldError),
}

/// z = 1 with probability `k` on a good link, never on a bad one.
pub fn ack_draw<R: Rng + ?Sized>(good: bool, k: f64, rng: &mut R) -> Ack {
    ack_from_uniform(good, k, rng.random::<f64>())
}

pub fn ack_from_uniform(good: bool, k: f64, u: f64) -> Ack {
    if good && u < k {
        Ack::Received
    } else {
        Ack::Missing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotAction {
    Transmit,
    Explore,
    Stall,
}

impl fmt::Display for SlotAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlotAction::Transmit => "transmit",
            SlotAction::Explore => "explore",
            SlotAction::Stall => "stall",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotEvent {
    pub frame: usize,
    pub slot: usize,
    pub hop: usize,
    pub action: SlotAction,
    /// True link state; only for transmissions.
    pub x: Option<bool>,
    pub z: Option<Ack>,
    pub belief_before: f64,
    pub belief_after: f64,
}

/// Raw per-slot records of one episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub slots: Vec<SlotEvent>,
    /// `(global slot, obstacle zones)`; slot 0 is the initial placement.
    pub obstacles: Vec<(u64, Vec<Zone>)>,
}

struct Packet {
    at: Zone,
    hop: usize,
    started: Option<u64>,
    slots_at_hop: Vec<u64>,
}

impl Packet {
    fn fresh(source: Zone) -> Self {
        Self {
            at: source,
            hop: 0,
            started: None,
            slots_at_hop: Vec::new(),
        }
    }

    fn spend(&mut self) {
        if self.started.is_some() {
            if self.slots_at_hop.len() <= self.hop {
                self.slots_at_hop.resize(self.hop + 1, 0);
            }
            self.slots_at_hop[self.hop] += 1;
        }
    }
}

/// Next-hop table for one frame, filled lazily from the stale snapshot.
struct Routes<'a> {
    world: &'a GridWorld,
    kind: PolicyKind,
    env: LinkEnv,
    snap_slot: u64,
    snap_zones: Vec<Zone>,
    next: HashMap<Zone, Option<Zone>>,
}

impl Routes<'_> {
    fn next_hop(&mut self, from: Zone) -> Option<Zone> {
        if let Some(&hop) = self.next.get(&from) {
            return hop;
        }
        let (world, env, slot, zones) = (self.world, &self.env, self.snap_slot, &self.snap_zones);
        match bs_global_assign(world, |i, j| world.observe_with(i, j, slot, zones, env), self.kind, from) {
            Ok(chain) => {
                for pair in chain.windows(2) {
                    self.next.entry(pair[0]).or_insert(Some(pair[1]));
                }
            }
            Err(_) => {
                self.next.insert(from, None);
            }
        }
        self.next[&from]
    }
}

/// Runs one episode with its own world; `cfg.seed` is the run seed.
pub fn run_episode(
    cfg: &SimConfig,
    geom: &std::sync::Arc<Geometry>,
    rule: &LocalRule,
    mut trace: Option<&mut Trace>,
) -> Result<EpisodeStats, SimError> {
    let mut world = build_world(&cfg.world, geom.clone(), cfg.seed)?;
    let env = cfg.link_env();
    let n = cfg.slots_per_frame();
    let k = cfg.channel.k();
    let prior = Belief::new(cfg.switch_prior);
    let (source, dest) = (world.source(), world.dest());

    let mut stats = EpisodeStats::default();
    let mut packet = Packet::fresh(source);
    if let Some(t) = trace.as_deref_mut() {
        t.obstacles.push((0, world.obstacle_zones()));
    }

    for frame in 0..cfg.frames {
        let snap_slot = (frame * n) as u64;
        let snapshot = world.obstacle_zones();
        let frozen = world.clone();
        let mut routes = Routes {
            world: &frozen,
            kind: cfg.policy.bs_metric(),
            env,
            snap_slot,
            snap_zones: snapshot,
            next: HashMap::new(),
        };
        let mut agents: HashMap<Zone, AgentState> = HashMap::new();

        for l in 0..n {
            let t = snap_slot + l as u64 + 1;
            world.step_dynamic_obstacles(t);
            let zones = world.obstacle_zones();
            if let Some(tr) = trace.as_deref_mut() {
                tr.obstacles.push((t, zones.clone()));
            }
            stats.slots += 1;
            let at = packet.at;
            let hop = packet.hop;

            if let Entry::Vacant(slot) = agents.entry(at) {
                if let Some(relay) = routes.next_hop(at) {
                    slot.insert(AgentState::new(relay, prior));
                }
            }
            let Some(agent) = agents.get_mut(&at) else {
                stats.stalled_slots += 1;
                stats.hop_mut(hop).stalled_slots += 1;
                packet.spend();
                if let Some(tr) = trace.as_deref_mut() {
                    tr.slots.push(SlotEvent {
                        frame,
                        slot: l,
                        hop,
                        action: SlotAction::Stall,
                        x: None,
                        z: None,
                        belief_before: f64::NAN,
                        belief_after: f64::NAN,
                    });
                }
                continue;
            };

            packet.started.get_or_insert(t);
            agent.slot_index = l;
            let before = agent.belief.value();
            let mut event = SlotEvent {
                frame,
                slot: l,
                hop,
                action: SlotAction::Transmit,
                x: None,
                z: None,
                belief_before: before,
                belief_after: before,
            };
            match local_decide(agent, rule) {
                Action::Explore => {
                    stats.exploration_slots += 1;
                    stats.hop_mut(hop).exploration_slots += 1;
                    packet.spend();
                    if let Some(j) = explore_select(&world, at, |i, j| world.observe_with(i, j, t, &zones, &env)) {
                        agent.switch_to(j, prior);
                    }
                    event.action = SlotAction::Explore;
                    event.belief_after = agent.belief.value();
                }
                Action::Continue => {
                    stats.transmit_slots += 1;
                    stats.hop_mut(hop).transmit_slots += 1;
                    packet.spend();
                    let relay = agent.current_relay;
                    let obs = world.observe_with(at, relay, t, &zones, &env);
                    let u = rng::unit(rng::key(&[cfg.seed, Purpose::Ack as u64, t, at as u64, relay as u64]));
                    let z = ack_from_uniform(obs.good, k, u);
                    on_ack(agent, z, &cfg.channel);
                    event.x = Some(obs.good);
                    event.z = Some(z);
                    event.belief_after = agent.belief.value();
                    match z {
                        Ack::Missing => {
                            stats.packets_lost += 1;
                            stats.hop_mut(hop).lost += 1;
                        }
                        Ack::Received => {
                            stats.hops_traversed += 1;
                            stats.hop_mut(hop).successes += 1;
                            packet.at = relay;
                            packet.hop += 1;
                            if relay == dest {
                                let started = packet.started.expect("transmitted");
                                stats.packets_delivered += 1;
                                stats.delivered_hops += packet.hop as u64;
                                stats.total_delay_s += (t - started + 1) as f64 * cfg.slot_s;
                                for (h, &s) in packet.slots_at_hop.iter().enumerate() {
                                    stats.hop_mut(h).delay_s += s as f64 * cfg.slot_s;
                                }
                                packet = Packet::fresh(source);
                            }
                        }
                    }
                }
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.slots.push(event);
            }
        }
    }
    Ok(stats)
}
