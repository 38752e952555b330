//! Zone grid, static and moving obstacles, and link blockage.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::radio::{link_budget, slot_supports_packet, LinkBudget, RadioParams};
use crate::rng::{self, Purpose};

pub type Zone = usize;

/// Tolerance for segment/cell contact; touching a cell corner counts.
const CONTACT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("cannot place {requested} static obstacles in {free} free cells")]
    TooManyObstacles { requested: usize, free: usize },
    #[error("cell ({x}, {y}) is outside the {cols}x{rows} grid")]
    OutOfGrid { x: usize, y: usize, cols: usize, rows: usize },
    #[error("source and destination must differ")]
    SourceIsDest,
    #[error("cell ({x}, {y}) cannot hold a static obstacle")]
    BadStaticCell { x: usize, y: usize },
    #[error("grid must have positive dimensions")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub cols: usize,
    pub rows: usize,
    /// Side of one square zone, m.
    pub cell_m: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            cols: 10,
            rows: 10,
            cell_m: 10.0,
        }
    }
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zone(&self, x: usize, y: usize) -> Zone {
        y * self.cols + x
    }

    pub fn coords(&self, z: Zone) -> (usize, usize) {
        (z % self.cols, z / self.cols)
    }

    pub fn center(&self, z: Zone) -> (f64, f64) {
        let (x, y) = self.coords(z);
        ((x as f64 + 0.5) * self.cell_m, (y as f64 + 0.5) * self.cell_m)
    }

    pub fn distance(&self, a: Zone, b: Zone) -> f64 {
        let (ax, ay) = self.center(a);
        let (bx, by) = self.center(b);
        (ax - bx).hypot(ay - by)
    }

    /// Chebyshev distance in cells.
    pub fn rings(&self, a: Zone, b: Zone) -> usize {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        ax.abs_diff(bx).max(ay.abs_diff(by))
    }

    fn check(&self, (x, y): (usize, usize)) -> Result<Zone, WorldError> {
        if x >= self.cols || y >= self.rows {
            return Err(WorldError::OutOfGrid {
                x,
                y,
                cols: self.cols,
                rows: self.rows,
            });
        }
        Ok(self.zone(x, y))
    }
}

/// Whether the segment `a -> b` touches the closed box, by parametric clipping.
fn segment_touches_box(a: (f64, f64), b: (f64, f64), lo: (f64, f64), hi: (f64, f64)) -> bool {
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    let d = (b.0 - a.0, b.1 - a.1);
    for (p, q) in [
        (-d.0, a.0 - (lo.0 - CONTACT_EPS)),
        (d.0, (hi.0 + CONTACT_EPS) - a.0),
        (-d.1, a.1 - (lo.1 - CONTACT_EPS)),
        (d.1, (hi.1 + CONTACT_EPS) - a.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    t0 <= t1
}

/// Precomputed geometry of one in-range zone pair.
#[derive(Debug, Clone)]
pub struct LinkGeom {
    pub distance: f64,
    /// Every cell the center-to-center segment touches, endpoints included.
    pub cells: Vec<Zone>,
    mask: Vec<u64>,
}

impl LinkGeom {
    #[inline]
    pub fn touches(&self, z: Zone) -> bool {
        self.mask[z / 64] >> (z % 64) & 1 == 1
    }
}

/// Immutable link geometry for a grid and communication radius; shared
/// across all episodes on the same grid.
#[derive(Debug)]
pub struct Geometry {
    grid: GridSpec,
    radius: usize,
    links: Vec<Option<LinkGeom>>,
}

impl Geometry {
    pub fn new(grid: GridSpec, radius: usize) -> Arc<Self> {
        let n = grid.len();
        let words = n.div_ceil(64);
        let mut links = vec![None; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j || grid.rings(i, j) > radius {
                    continue;
                }
                let (a, b) = (grid.center(i), grid.center(j));
                let mut cells = Vec::new();
                let mut mask = vec![0u64; words];
                for z in 0..n {
                    let (x, y) = grid.coords(z);
                    let lo = (x as f64 * grid.cell_m, y as f64 * grid.cell_m);
                    let hi = (lo.0 + grid.cell_m, lo.1 + grid.cell_m);
                    if segment_touches_box(a, b, lo, hi) {
                        cells.push(z);
                        mask[z / 64] |= 1 << (z % 64);
                    }
                }
                links[i * n + j] = Some(LinkGeom {
                    distance: grid.distance(i, j),
                    cells,
                    mask,
                });
            }
        }
        Arc::new(Self { grid, radius, links })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// `None` when `i == j` or `j` is out of range of `i`.
    pub fn link(&self, i: Zone, j: Zone) -> Option<&LinkGeom> {
        self.links[i * self.grid.len() + j].as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockageGating {
    /// An obstacle can only block links whose segment crosses its cell.
    #[default]
    Geometric,
    /// Every obstacle blocks every link with probability 1/2, wherever it is.
    Global,
}

impl FromStr for BlockageGating {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "geometric" => Ok(Self::Geometric),
            "global" => Ok(Self::Global),
            other => Err(format!("unknown blockage gating '{other}' (expected geometric or global)")),
        }
    }
}

impl fmt::Display for BlockageGating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Geometric => "geometric",
            Self::Global => "global",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub grid: GridSpec,
    pub static_count: usize,
    pub dynamic_count: usize,
    pub source: (usize, usize),
    pub dest: (usize, usize),
    /// Communication range in cells (Chebyshev).
    pub link_radius: usize,
    pub gating: BlockageGating,
    /// Probability that an obstacle takes its random-walk step in a slot.
    pub move_prob: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            static_count: 16,
            dynamic_count: 0,
            source: (0, 0),
            dest: (9, 9),
            link_radius: 2,
            gating: BlockageGating::Geometric,
            move_prob: 1.0,
        }
    }
}

impl WorldConfig {
    /// The checks [`build_world`] performs, without building anything.
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.grid.is_empty() {
            return Err(WorldError::EmptyGrid);
        }
        let source = self.grid.check(self.source)?;
        let dest = self.grid.check(self.dest)?;
        if source == dest {
            return Err(WorldError::SourceIsDest);
        }
        let free = self.grid.len() - 2;
        if self.static_count >= free {
            return Err(WorldError::TooManyObstacles {
                requested: self.static_count,
                free,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DynamicObstacle {
    pub zone: Zone,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViableRelaySet {
    pub owner: Zone,
    pub candidates: Vec<Zone>,
}

/// Per-slot constants needed to decide whether an unblocked link carries a packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEnv {
    pub radio: RadioParams,
    pub packet_bytes: u32,
    pub slot_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkObservation {
    pub blocked: bool,
    pub budget: LinkBudget,
    pub good: bool,
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    geom: Arc<Geometry>,
    seed: u64,
    statics: Vec<bool>,
    static_cells: Vec<Zone>,
    obstacles: Vec<DynamicObstacle>,
    source: Zone,
    dest: Zone,
    gating: BlockageGating,
    move_prob: f64,
    reaches: Vec<bool>,
}

/// Places obstacles for one run. Static cells are a prefix of a seeded
/// permutation of the free cells, so layouts for increasing counts nest.
pub fn build_world(cfg: &WorldConfig, geom: Arc<Geometry>, seed: u64) -> Result<GridWorld, WorldError> {
    let grid = *geom.grid();
    if grid.is_empty() {
        return Err(WorldError::EmptyGrid);
    }
    let source = grid.check(cfg.source)?;
    let dest = grid.check(cfg.dest)?;
    if source == dest {
        return Err(WorldError::SourceIsDest);
    }
    let n = grid.len();
    let mut free: Vec<Zone> = (0..n).filter(|&z| z != source && z != dest).collect();
    if cfg.static_count >= free.len() {
        return Err(WorldError::TooManyObstacles {
            requested: cfg.static_count,
            free: free.len(),
        });
    }
    let mut rng = rng::substream(seed, Purpose::StaticPlacement);
    free.shuffle(&mut rng);
    let static_cells = free[..cfg.static_count].to_vec();
    build_world_with_statics(cfg, geom, seed, static_cells)
}

/// Like [`build_world`] but with an explicit static layout.
pub fn build_world_with_statics(
    cfg: &WorldConfig,
    geom: Arc<Geometry>,
    seed: u64,
    static_cells: Vec<Zone>,
) -> Result<GridWorld, WorldError> {
    let grid = *geom.grid();
    let source = grid.check(cfg.source)?;
    let dest = grid.check(cfg.dest)?;
    let n = grid.len();
    for &z in &static_cells {
        if z >= n || z == source || z == dest {
            let (x, y) = (z % grid.cols, z / grid.cols);
            return Err(WorldError::BadStaticCell { x, y });
        }
    }
    let mut statics = vec![false; n];
    for &z in &static_cells {
        statics[z] = true;
    }
    let obstacles = (0..cfg.dynamic_count as u64)
        .map(|o| DynamicObstacle {
            zone: (rng::key(&[seed, Purpose::ObstaclePlacement as u64, o]) % n as u64) as Zone,
        })
        .collect();

    let mut world = GridWorld {
        geom,
        seed,
        statics,
        static_cells,
        obstacles,
        source,
        dest,
        gating: cfg.gating,
        move_prob: cfg.move_prob,
        reaches: Vec::new(),
    };
    world.reaches = world.static_reachability();
    Ok(world)
}

impl GridWorld {
    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geom
    }

    pub fn grid(&self) -> &GridSpec {
        self.geom.grid()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn source(&self) -> Zone {
        self.source
    }

    pub fn dest(&self) -> Zone {
        self.dest
    }

    pub fn is_static(&self, z: Zone) -> bool {
        self.statics[z]
    }

    pub fn static_cells(&self) -> &[Zone] {
        &self.static_cells
    }

    pub fn obstacles(&self) -> &[DynamicObstacle] {
        &self.obstacles
    }

    pub fn obstacle_zones(&self) -> Vec<Zone> {
        self.obstacles.iter().map(|o| o.zone).collect()
    }

    /// In-range zones strictly closer to the destination that are not
    /// static obstacle cells.
    pub fn viable_relays(&self, i: Zone) -> ViableRelaySet {
        let grid = self.grid();
        let own = grid.distance(i, self.dest);
        let candidates = (0..grid.len())
            .filter(|&j| {
                self.geom.link(i, j).is_some() && !self.statics[j] && grid.distance(j, self.dest) < own
            })
            .collect();
        ViableRelaySet { owner: i, candidates }
    }

    /// The segment `i -> j` crosses a static obstacle cell.
    pub fn statically_blocked(&self, i: Zone, j: Zone) -> bool {
        match self.geom.link(i, j) {
            Some(g) => g.cells.iter().any(|&z| self.statics[z]),
            None => true,
        }
    }

    /// Viable relays whose link is not statically blocked and from which
    /// the destination is still reachable through such links.
    pub fn routable_relays(&self, i: Zone) -> Vec<Zone> {
        self.viable_relays(i)
            .candidates
            .into_iter()
            .filter(|&j| self.reaches[j] && !self.statically_blocked(i, j))
            .collect()
    }

    pub fn reaches_dest(&self, z: Zone) -> bool {
        self.reaches[z]
    }

    fn static_reachability(&self) -> Vec<bool> {
        let grid = *self.grid();
        let mut order: Vec<Zone> = (0..grid.len()).collect();
        order.sort_by(|&a, &b| grid.distance(a, self.dest).total_cmp(&grid.distance(b, self.dest)));
        let mut reaches = vec![false; grid.len()];
        for z in order {
            if z == self.dest {
                reaches[z] = true;
                continue;
            }
            if self.statics[z] {
                continue;
            }
            // Candidates are strictly closer, so they were settled already.
            reaches[z] = self
                .viable_relays(z)
                .candidates
                .iter()
                .any(|&j| reaches[j] && !self.statically_blocked(z, j));
        }
        reaches
    }

    /// Random-walk step of every moving obstacle for `slot`: uniform over the
    /// in-grid cells among the 8 neighbours and the current cell. With
    /// `move_prob < 1` an obstacle skips the step with probability
    /// `1 - move_prob`.
    pub fn step_dynamic_obstacles(&mut self, slot: u64) {
        let grid = *self.geom.grid();
        for (o, obs) in self.obstacles.iter_mut().enumerate() {
            let draw = rng::key(&[self.seed, Purpose::ObstacleStep as u64, o as u64, slot]);
            if self.move_prob < 1.0 && rng::unit(rng::mix64(draw)) >= self.move_prob {
                continue;
            }
            let (x, y) = grid.coords(obs.zone);
            let mut options = [0usize; 9];
            let mut count = 0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < grid.cols && (ny as usize) < grid.rows {
                        options[count] = grid.zone(nx as usize, ny as usize);
                        count += 1;
                    }
                }
            }
            let pick = draw % count as u64;
            obs.zone = options[pick as usize];
        }
    }

    /// Blockage of `i <-> j` in `slot` with obstacles at `zones`.
    pub fn blocked_with(&self, i: Zone, j: Zone, slot: u64, zones: &[Zone]) -> bool {
        let Some(g) = self.geom.link(i, j) else {
            return true;
        };
        if g.cells.iter().any(|&z| self.statics[z]) {
            return true;
        }
        let (lo, hi) = (i.min(j) as u64, i.max(j) as u64);
        zones.iter().enumerate().any(|(o, &z)| match self.gating {
            BlockageGating::Geometric => {
                g.touches(z) && rng::coin(rng::key(&[self.seed, Purpose::Blockage as u64, slot, o as u64, lo, hi]))
            }
            BlockageGating::Global => {
                rng::coin(rng::key(&[self.seed, Purpose::GlobalBlockage as u64, slot, o as u64, lo, hi]))
            }
        })
    }

    /// Blockage of `i <-> j` in `slot` at the current obstacle positions.
    pub fn link_blocked(&self, i: Zone, j: Zone, slot: u64) -> bool {
        let zones = self.obstacle_zones();
        self.blocked_with(i, j, slot, &zones)
    }

    /// Shadowing draw of `i <-> j` in `slot`, dB.
    pub fn shadow_draw(&self, i: Zone, j: Zone, slot: u64, sigma: f64) -> f64 {
        let (lo, hi) = (i.min(j) as u64, i.max(j) as u64);
        sigma * rng::normal(rng::key(&[self.seed, Purpose::Shadowing as u64, slot, lo, hi]))
    }

    /// Link state in `slot` given obstacle positions: good iff unblocked and
    /// the shadowed budget carries one packet in one slot.
    pub fn observe_with(&self, i: Zone, j: Zone, slot: u64, zones: &[Zone], env: &LinkEnv) -> LinkObservation {
        let blocked = self.blocked_with(i, j, slot, zones);
        let d = self.grid().distance(i, j);
        let shadow = self.shadow_draw(i, j, slot, env.radio.shadow_sigma);
        let budget = link_budget(d, shadow, &env.radio).expect("distinct zone centers");
        let good = !blocked && slot_supports_packet(&budget, env.packet_bytes, env.slot_s);
        LinkObservation { blocked, budget, good }
    }

    pub fn true_link_state(&self, i: Zone, j: Zone, slot: u64, env: &LinkEnv) -> LinkObservation {
        let zones = self.obstacle_zones();
        self.observe_with(i, j, slot, &zones, env)
    }
}
