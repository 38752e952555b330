use std::sync::Arc;

use mmwave_relay::experiment::local_rule;
use mmwave_relay::policy::{LocalRule, PolicyKind};
use mmwave_relay::pomdp::{belief_update, Ack, Belief, ChannelParams};
use mmwave_relay::rng;
use mmwave_relay::sim::{run_episode, SimConfig, SlotAction, Trace};
use mmwave_relay::world::{Geometry, GridSpec};

fn rule(cfg: &SimConfig) -> LocalRule {
    local_rule(cfg.policy, &cfg.channel, 1e-12, 100_000).unwrap()
}

/// A 1-row grid with the destination at `dest_x`.
fn line_world(cols: usize, dest_x: usize, statics: usize) -> (SimConfig, Arc<Geometry>) {
    let mut cfg = SimConfig::default();
    cfg.world.grid = GridSpec {
        cols,
        rows: 1,
        cell_m: 10.0,
    };
    cfg.world.source = (0, 0);
    cfg.world.dest = (dest_x, 0);
    cfg.world.link_radius = 1;
    cfg.world.static_count = statics;
    cfg.world.dynamic_count = 0;
    cfg.frames = 4;
    let geom = Geometry::new(cfg.world.grid, cfg.world.link_radius);
    (cfg, geom)
}

#[test]
fn clear_adjacent_pair_has_no_loss_and_one_slot_delay() {
    let (mut cfg, geom) = line_world(3, 1, 0);
    cfg.radio.shadow_sigma = 0.0;
    for kind in PolicyKind::ALL {
        cfg.policy = kind;
        let s = run_episode(&cfg, &geom, &rule(&cfg), None).unwrap();
        assert_eq!(s.packets_lost, 0);
        assert_eq!(s.packets_delivered, 40);
        assert!((s.e2e_delay_per_packet_s() - cfg.slot_s).abs() < 1e-12);
        assert_eq!(s.mean_hops(), 1.0);
    }
}

#[test]
fn fully_blocked_path_delivers_nothing() {
    let (cfg, geom) = line_world(4, 3, 1);
    let s = run_episode(&cfg, &geom, &rule(&cfg), None).unwrap();
    assert_eq!(s.packets_delivered, 0);
    assert_eq!(s.stalled_slots, s.slots);
    assert!(s.e2e_delay_per_packet_s().is_nan());
}

fn busy(policy: PolicyKind, run: u64) -> SimConfig {
    let mut cfg = SimConfig {
        policy,
        frames: 20,
        seed: rng::run_seed(99, run),
        ..SimConfig::default()
    };
    cfg.world.dynamic_count = 32;
    cfg
}

#[test]
fn accounting_identity_per_hop_and_total() {
    let geom = Geometry::new(GridSpec::default(), 2);
    for kind in PolicyKind::ALL {
        for run in 0..4 {
            let cfg = busy(kind, run);
            let s = run_episode(&cfg, &geom, &rule(&cfg), None).unwrap();
            assert_eq!(s.slots, (cfg.frames * cfg.slots_per_frame()) as u64);
            assert_eq!(s.slots, s.transmit_slots + s.exploration_slots + s.stalled_slots);
            let sum = |f: fn(&mmwave_relay::sim::HopStats) -> u64| s.per_hop.iter().map(f).sum::<u64>();
            assert_eq!(sum(|h| h.transmit_slots), s.transmit_slots);
            assert_eq!(sum(|h| h.exploration_slots), s.exploration_slots);
            assert_eq!(sum(|h| h.stalled_slots), s.stalled_slots);
            assert_eq!(sum(|h| h.lost), s.packets_lost);
            assert_eq!(sum(|h| h.successes), s.hops_traversed);
            assert_eq!(s.transmit_slots, s.packets_lost + s.hops_traversed);
            if !kind.is_pomdp() {
                assert_eq!(s.exploration_slots, 0);
            }
        }
    }
}

#[test]
fn traces_obey_ack_soundness_filter_and_slot_costs() {
    let geom = Geometry::new(GridSpec::default(), 2);
    for kind in [PolicyKind::PomdpFinite, PolicyKind::PomdpStationary] {
        let cfg = busy(kind, 1);
        let mut trace = Trace::default();
        let s = run_episode(&cfg, &geom, &rule(&cfg), Some(&mut trace)).unwrap();
        assert_eq!(trace.slots.len() as u64, s.slots);
        assert_eq!(trace.obstacles.len() as u64, s.slots + 1);
        let explores = trace.slots.iter().filter(|e| e.action == SlotAction::Explore).count();
        assert_eq!(explores as u64, s.exploration_slots);
        for e in &trace.slots {
            match e.action {
                SlotAction::Transmit => {
                    let (x, z) = (e.x.unwrap(), e.z.unwrap());
                    if z == Ack::Received {
                        assert!(x, "ACK on a bad link");
                    }
                    let expected = belief_update(Belief::new(e.belief_before), z, &cfg.channel).value();
                    assert!((e.belief_after - expected).abs() < 1e-15);
                }
                SlotAction::Explore => {
                    assert!(e.x.is_none() && e.z.is_none());
                    // Either switched to a fresh relay or found no unblocked candidate.
                    assert!(e.belief_after == cfg.switch_prior || e.belief_after == e.belief_before);
                }
                SlotAction::Stall => assert!(e.x.is_none()),
            }
        }
    }
}

#[test]
fn same_seed_same_stats() {
    let geom = Geometry::new(GridSpec::default(), 2);
    let cfg = busy(PolicyKind::PomdpFinite, 3);
    let a = run_episode(&cfg, &geom, &rule(&cfg), None).unwrap();
    let b = run_episode(&cfg, &geom, &rule(&cfg), None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn obstacle_paths_shared_across_policies() {
    let geom = Geometry::new(GridSpec::default(), 2);
    let mut reference = None;
    for kind in PolicyKind::ALL {
        let cfg = busy(kind, 5);
        let mut trace = Trace::default();
        run_episode(&cfg, &geom, &rule(&cfg), Some(&mut trace)).unwrap();
        match &reference {
            None => reference = Some(trace.obstacles),
            Some(r) => assert_eq!(r, &trace.obstacles),
        }
    }
}

#[test]
fn baselines_never_explore_and_pomdp_does_under_blockage() {
    let geom = Geometry::new(GridSpec::default(), 2);
    let mut pomdp_explores = 0;
    for run in 0..5 {
        let cfg = busy(PolicyKind::PomdpFinite, run);
        pomdp_explores += run_episode(&cfg, &geom, &rule(&cfg), None).unwrap().exploration_slots;
        for kind in [PolicyKind::RssBaseline, PolicyKind::ThroughputBaseline] {
            let cfg = busy(kind, run);
            assert_eq!(run_episode(&cfg, &geom, &rule(&cfg), None).unwrap().exploration_slots, 0);
        }
    }
    assert!(pomdp_explores > 0);
}

#[test]
fn channel_k_below_one_still_runs() {
    let geom = Geometry::new(GridSpec::default(), 2);
    let mut cfg = busy(PolicyKind::PomdpStationary, 0);
    cfg.channel = ChannelParams::new(0.9, 0.1, 0.9, 1.0, 10).unwrap();
    let s = run_episode(&cfg, &geom, &rule(&cfg), None).unwrap();
    assert_eq!(s.slots, s.transmit_slots + s.exploration_slots + s.stalled_slots);
}

#[test]
fn frozen_obstacles_never_move() {
    let geom = Geometry::new(GridSpec::default(), 2);
    let mut cfg = busy(PolicyKind::RssBaseline, 2);
    cfg.world.move_prob = 0.0;
    let mut trace = Trace::default();
    run_episode(&cfg, &geom, &rule(&cfg), Some(&mut trace)).unwrap();
    let first = &trace.obstacles[0].1;
    assert!(trace.obstacles.iter().all(|(_, z)| z == first));
}
