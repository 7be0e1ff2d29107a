//! Metropolis sampling of the plaquette-interacting dimer measure with local
//! face flips.

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DimerError, Result};
use crate::free::Weights;
use crate::lattice::{is_black, DimerConfig, EdgeRef, EdgeType, Point, TorusGeometry};

/// Which pair of faces a black site `x = (i, j)` is responsible for in the
/// local interaction. Both cover every face exactly once, so the total is
/// the number of faces carrying two parallel dimers either way.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PlaquetteConvention {
    /// The faces above and below the horizontal edge leaving `x` eastward.
    #[default]
    AboveBelow,
    /// The faces right and left of the vertical edge leaving `x` northward.
    LeftRight,
}

impl PlaquetteConvention {
    pub fn name(self) -> &'static str {
        match self {
            PlaquetteConvention::AboveBelow => "above-below",
            PlaquetteConvention::LeftRight => "left-right",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "above-below" => Ok(PlaquetteConvention::AboveBelow),
            "left-right" => Ok(PlaquetteConvention::LeftRight),
            _ => Err(DimerError::Parse(format!("unknown plaquette convention {s:?}"))),
        }
    }

    /// The seven edges `e1..e7` around `x` as site pairs.
    pub fn edges(self, x: Point) -> [(Point, Point); 7] {
        let [i, j] = x;
        match self {
            PlaquetteConvention::AboveBelow => [
                ([i, j], [i + 1, j]),
                ([i, j + 1], [i + 1, j + 1]),
                ([i, j], [i, j + 1]),
                ([i + 1, j], [i + 1, j + 1]),
                ([i, j - 1], [i + 1, j - 1]),
                ([i, j - 1], [i, j]),
                ([i + 1, j - 1], [i + 1, j]),
            ],
            PlaquetteConvention::LeftRight => [
                ([i, j], [i, j + 1]),
                ([i + 1, j], [i + 1, j + 1]),
                ([i, j], [i + 1, j]),
                ([i, j + 1], [i + 1, j + 1]),
                ([i - 1, j], [i - 1, j + 1]),
                ([i - 1, j], [i, j]),
                ([i - 1, j + 1], [i, j + 1]),
            ],
        }
    }
}

fn occupied(cfg: &DimerConfig, a: Point, b: Point) -> bool {
    let g = cfg.geometry();
    let e = EdgeRef::between(a, b).expect("adjacent sites");
    cfg.type_at(g.wrap(e.black)) == e.r
}

/// `f(tau_x M) = 1_{e1} 1_{e2} + 1_{e3} 1_{e4} + 1_{e1} 1_{e5} + 1_{e6} 1_{e7}`
/// for the black site `x`.
pub fn plaquette_f(cfg: &DimerConfig, x: Point, convention: PlaquetteConvention) -> u8 {
    debug_assert!(is_black(x));
    let e = convention.edges(x).map(|(a, b)| occupied(cfg, a, b));
    (e[0] && e[1]) as u8 + (e[2] && e[3]) as u8 + (e[0] && e[4]) as u8 + (e[5] && e[6]) as u8
}

/// `sum_x f(tau_x M)` over all black sites.
pub fn interaction_count(cfg: &DimerConfig, convention: PlaquetteConvention) -> usize {
    let g = cfg.geometry();
    (0..g.n_black()).map(|idx| plaquette_f(cfg, g.black_site(idx), convention) as usize).sum()
}

/// Kind of parallel pair on a face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceKind {
    Horizontal,
    Vertical,
}

/// Parallel pair, if any, on face `f` (lower-left corner `f`).
pub fn face_kind(cfg: &DimerConfig, f: Point) -> Option<FaceKind> {
    let [i, j] = f;
    if occupied(cfg, [i, j], [i + 1, j]) && occupied(cfg, [i, j + 1], [i + 1, j + 1]) {
        Some(FaceKind::Horizontal)
    } else if occupied(cfg, [i, j], [i, j + 1]) && occupied(cfg, [i + 1, j], [i + 1, j + 1]) {
        Some(FaceKind::Vertical)
    } else {
        None
    }
}

pub fn flippable_faces(cfg: &DimerConfig) -> Vec<Point> {
    let g = cfg.geometry();
    (0..g.n_faces()).map(|idx| g.face(idx)).filter(|&f| face_kind(cfg, f).is_some()).collect()
}

fn set_edge(types: &mut [EdgeType], g: &TorusGeometry, a: Point, b: Point) {
    let e = EdgeRef::between(a, b).expect("adjacent sites");
    types[g.black_index(g.wrap(e.black))] = e.r;
}

/// Rotates the two parallel dimers of face `f` by 90 degrees.
pub fn flip(cfg: &DimerConfig, f: Point) -> Result<DimerConfig> {
    let g = *cfg.geometry();
    let [i, j] = f;
    let mut types = cfg.types().to_vec();
    match face_kind(cfg, f) {
        Some(FaceKind::Horizontal) => {
            set_edge(&mut types, &g, [i, j], [i, j + 1]);
            set_edge(&mut types, &g, [i + 1, j], [i + 1, j + 1]);
        }
        Some(FaceKind::Vertical) => {
            set_edge(&mut types, &g, [i, j], [i + 1, j]);
            set_edge(&mut types, &g, [i, j + 1], [i + 1, j + 1]);
        }
        None => return Err(DimerError::NotFlippable(i, j)),
    }
    DimerConfig::new(g, types)
}

/// Parameters of one Metropolis run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MCParams {
    pub side: usize,
    pub weights: Weights,
    pub lambda: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub measurement_stride: usize,
}

impl MCParams {
    /// Defaults: burn-in 10% of the sweeps, measurement every sweep.
    pub fn new(side: usize, weights: Weights, lambda: f64, sweeps: usize, seed: u64) -> Self {
        MCParams { side, weights, lambda, sweeps, burn_in: sweeps / 10, seed, measurement_stride: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        TorusGeometry::new(self.side)?;
        if self.sweeps <= self.burn_in {
            return Err(DimerError::InvalidParameter(format!(
                "sweeps ({}) must exceed burn-in ({})",
                self.sweeps, self.burn_in
            )));
        }
        if self.measurement_stride == 0 {
            return Err(DimerError::InvalidParameter("measurement stride must be at least 1".into()));
        }
        if !self.lambda.is_finite() {
            return Err(DimerError::InvalidParameter("lambda must be finite".into()));
        }
        Ok(())
    }

    pub fn geometry(&self) -> TorusGeometry {
        TorusGeometry::new(self.side).expect("validated side")
    }

    pub fn measurements(&self) -> usize {
        (self.sweeps - self.burn_in) / self.measurement_stride
    }
}

// partner directions of a site
const EAST: u8 = 0;
const NORTH: u8 = 1;
const WEST: u8 = 2;
const SOUTH: u8 = 3;

fn dir_of(r: EdgeType) -> u8 {
    match r {
        EdgeType::One => EAST,
        EdgeType::Two => NORTH,
        EdgeType::Three => WEST,
        EdgeType::Four => SOUTH,
    }
}

fn type_of(dir: u8) -> EdgeType {
    match dir {
        EAST => EdgeType::One,
        NORTH => EdgeType::Two,
        WEST => EdgeType::Three,
        _ => EdgeType::Four,
    }
}

/// Configuration held as a partner direction per site, plus the cached
/// interaction count and type counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    side: usize,
    partner: Vec<u8>,
    pairs: i64,
    counts: [i64; 4],
}

#[inline]
fn parallel(site: u8, north: u8, east: u8) -> i64 {
    ((site == EAST && north == EAST) || (site == NORTH && east == NORTH)) as i64
}

/// A proposed flip: the four corners `f, f+e1, f+e2, f+e1+e2`, the kind of
/// pair on the face and the change of the interaction count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LocalMove {
    corners: [usize; 4],
    kind: u8,
    delta: i64,
}

impl ChainState {
    pub fn from_config(cfg: &DimerConfig) -> Self {
        let g = cfg.geometry();
        let l = g.side();
        let site = |p: Point| p[1] as usize * l + p[0] as usize;
        let mut partner = vec![0u8; l * l];
        let mut counts = [0i64; 4];
        for (idx, &r) in cfg.types().iter().enumerate() {
            let b = g.black_site(idx);
            let o = r.physical_offset();
            partner[site(b)] = dir_of(r);
            partner[site(g.wrap([b[0] + o[0], b[1] + o[1]]))] = (dir_of(r) + 2) % 4;
            counts[r.index()] += 1;
        }
        let mut state = ChainState { side: l, partner, pairs: 0, counts };
        state.pairs = state.recount_pairs();
        state
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn geometry(&self) -> TorusGeometry {
        TorusGeometry::new(self.side).expect("even side")
    }

    pub fn config(&self) -> DimerConfig {
        let g = self.geometry();
        let l = self.side;
        let types = (0..g.n_black())
            .map(|idx| {
                let b = g.black_site(idx);
                type_of(self.partner[b[1] as usize * l + b[0] as usize])
            })
            .collect();
        DimerConfig::new(g, types).expect("chain state is a matching")
    }

    /// Number of faces carrying a parallel pair (the cached `sum_x f`).
    pub fn pair_count(&self) -> i64 {
        self.pairs
    }

    /// Cached `lambda sum_x f`.
    pub fn cached_energy(&self, lambda: f64) -> f64 {
        lambda * self.pairs as f64
    }

    /// Cached `sum_b log t_{r(b)}`.
    pub fn cached_weight_log(&self, w: &Weights) -> f64 {
        self.counts.iter().zip(w.all()).map(|(&n, t)| n as f64 * t.ln()).sum()
    }

    pub fn type_counts(&self) -> [i64; 4] {
        self.counts
    }

    pub fn recount_pairs(&self) -> i64 {
        let l = self.side;
        let p = &self.partner;
        let mut n = 0;
        for j in 0..l {
            let jp = if j + 1 == l { 0 } else { j + 1 };
            for i in 0..l {
                let ip = if i + 1 == l { 0 } else { i + 1 };
                n += parallel(p[j * l + i], p[jp * l + i], p[j * l + ip]);
            }
        }
        n
    }

    fn recount_types(&self) -> [i64; 4] {
        self.config().type_counts().map(|c| c as i64)
    }

    /// True if the caches agree with a full recomputation.
    pub fn caches_consistent(&self) -> bool {
        self.pairs == self.recount_pairs() && self.counts == self.recount_types()
    }

    /// Reads the neighbourhood of face `f` and evaluates its flip.
    #[inline]
    fn local_move(&self, f: usize) -> Option<LocalMove> {
        let l = self.side;
        let p = &self.partner;
        let (i, j) = (f % l, f / l);
        let ip = if i + 1 == l { 0 } else { i + 1 };
        let jp = if j + 1 == l { 0 } else { j + 1 };
        let (r0, r1) = (j * l, jp * l);
        let (c11, c12, c21) = (p[r0 + i], p[r1 + i], p[r0 + ip]);
        let kind = if c11 == EAST && c12 == EAST {
            1
        } else if c11 == NORTH && c21 == NORTH {
            2
        } else {
            return None;
        };
        let im = if i == 0 { l - 1 } else { i - 1 };
        let ip2 = if ip + 1 == l { 0 } else { ip + 1 };
        let rm = if j == 0 { l - 1 } else { j - 1 } * l;
        let r2 = if jp + 1 == l { 0 } else { jp + 1 } * l;
        let c22 = p[r1 + ip];
        let (c10, c20, c13) = (p[rm + i], p[rm + ip], p[r2 + i]);
        let (c01, c02, c31) = (p[r0 + im], p[r1 + im], p[r0 + ip2]);
        let count = |c11: u8, c12: u8, c21: u8, c22: u8| {
            parallel(c10, c11, c20) + parallel(c12, c13, c22) + parallel(c01, c02, c11) + parallel(c21, c22, c31)
        };
        let before = count(c11, c12, c21, c22);
        let after = if kind == 1 { count(NORTH, SOUTH, NORTH, SOUTH) } else { count(EAST, EAST, WEST, WEST) };
        Some(LocalMove { corners: [r0 + i, r0 + ip, r1 + i, r1 + ip], kind, delta: after - before })
    }

    #[inline]
    fn commit(&mut self, m: &LocalMove) {
        let [f, e, n, ne] = m.corners;
        if m.kind == 1 {
            self.partner[f] = NORTH;
            self.partner[n] = SOUTH;
            self.partner[e] = NORTH;
            self.partner[ne] = SOUTH;
        } else {
            self.partner[f] = EAST;
            self.partner[e] = WEST;
            self.partner[n] = EAST;
            self.partner[ne] = WEST;
        }
        self.pairs += m.delta;
        // a horizontal pair is one type-1 and one type-3 dimer, a vertical
        // pair one type-2 and one type-4
        let d = if m.kind == 1 { 1 } else { -1 };
        self.counts[0] -= d;
        self.counts[2] -= d;
        self.counts[1] += d;
        self.counts[3] += d;
    }

    /// Whether the face whose lower-left corner is site `f` (scan index) is
    /// flippable.
    pub fn is_flippable(&self, f: usize) -> bool {
        self.local_move(f).is_some()
    }

    /// `Δ(sum_x f)` that flipping face `f` would cause, or `None` if the face
    /// is not flippable.
    pub fn flip_delta(&self, f: usize) -> Option<i64> {
        self.local_move(f).map(|m| m.delta)
    }

    /// Flips face `f` unconditionally, updating the caches.
    pub fn flip_face(&mut self, f: usize) -> Result<()> {
        let l = self.side;
        let m = self.local_move(f).ok_or(DimerError::NotFlippable((f % l) as i64, (f / l) as i64))?;
        self.commit(&m);
        Ok(())
    }

    /// Edge type used by the black site `(i, j)`.
    #[inline]
    pub fn type_at(&self, i: usize, j: usize) -> EdgeType {
        type_of(self.partner[j * self.side + i])
    }

    pub(crate) fn raw_partner(&self) -> &[u8] {
        &self.partner
    }

    /// Rebuilds a state from a row-major partner array (directions 0..4 =
    /// east, north, west, south).
    pub(crate) fn from_partner(side: usize, partner: Vec<u8>) -> Result<Self> {
        let g = TorusGeometry::new(side)?;
        if partner.len() != side * side || partner.iter().any(|&p| p > 3) {
            return Err(DimerError::Parse("bad partner array".into()));
        }
        let types = (0..g.n_black())
            .map(|idx| {
                let b = g.black_site(idx);
                type_of(partner[b[1] as usize * side + b[0] as usize])
            })
            .collect();
        let cfg = DimerConfig::new(g, types)?;
        let state = ChainState::from_config(&cfg);
        if state.partner != partner {
            return Err(DimerError::Parse("partner array is not a matching".into()));
        }
        Ok(state)
    }
}

/// Acceptance probabilities indexed by `[kind - 1][Δ + 4]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcceptanceTable {
    prob: [[f64; 9]; 2],
}

impl AcceptanceTable {
    pub fn new(w: &Weights, lambda: f64) -> Self {
        let h_to_v = (w.t2 / (w.t1 * w.t3)).ln();
        let mut prob = [[0.0; 9]; 2];
        for d in -4i64..=4 {
            let x = lambda * d as f64;
            prob[0][(d + 4) as usize] = (h_to_v + x).exp().min(1.0);
            prob[1][(d + 4) as usize] = (-h_to_v + x).exp().min(1.0);
        }
        AcceptanceTable { prob }
    }

    /// Metropolis ratio for flipping a face of the given kind with
    /// interaction change `delta`, in log space.
    pub fn log_ratio(w: &Weights, lambda: f64, kind: FaceKind, delta: i64) -> f64 {
        let h_to_v = (w.t2 / (w.t1 * w.t3)).ln();
        let s = match kind {
            FaceKind::Horizontal => h_to_v,
            FaceKind::Vertical => -h_to_v,
        };
        s + lambda * delta as f64
    }

    #[inline]
    fn get(&self, kind: u8, delta: i64) -> f64 {
        self.prob[(kind - 1) as usize][(delta + 4) as usize]
    }
}

/// Per-sweep counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub proposed: u64,
    pub flippable: u64,
    pub accepted: u64,
}

impl SweepStats {
    pub fn add(&mut self, o: SweepStats) {
        self.proposed += o.proposed;
        self.flippable += o.flippable;
        self.accepted += o.accepted;
    }
}

/// One sweep: `L^2` uniformly chosen faces, each flipped with probability
/// `min(1, t-ratio * exp(lambda Δ))`.
pub fn metropolis_sweep(state: &mut ChainState, table: &AcceptanceTable, rng: &mut ChaCha8Rng) -> SweepStats {
    let n = state.partner.len() as u32;
    let mut stats = SweepStats { proposed: n as u64, ..Default::default() };
    let faces = Uniform::new(0, n);
    for _ in 0..n {
        let f = faces.sample(rng) as usize;
        let Some(m) = state.local_move(f) else { continue };
        stats.flippable += 1;
        let p = table.get(m.kind, m.delta);
        if p >= 1.0 || rng.gen::<f64>() < p {
            state.commit(&m);
            stats.accepted += 1;
        }
    }
    stats
}

/// The random stream of chain `chain` under master seed `seed`.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Heights in quarters of all faces (scan order by lower-left corner),
/// `h(0,0) = 0`, together with the horizontal and vertical windings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeightSnapshot {
    pub side: usize,
    pub h: Vec<i32>,
    pub winding: [i32; 2],
}

impl ChainState {
    #[inline]
    fn occ(&self, s: usize, dir: u8) -> bool {
        self.partner[s] == dir
    }

    #[inline]
    fn step_east(&self, i: usize, j: usize) -> i32 {
        // crosses (i+1, j)-(i+1, j+1), right site (i+1, j)
        let l = self.side;
        let a = j * l + (i + 1) % l;
        let sign = if (i + 1 + j) % 2 == 0 { -1 } else { 1 };
        sign * if self.occ(a, NORTH) { 3 } else { -1 }
    }

    #[inline]
    fn step_north(&self, i: usize, j: usize) -> i32 {
        // crosses (i, j+1)-(i+1, j+1), right site (i+1, j+1)
        let l = self.side;
        let a = ((j + 1) % l) * l + i;
        let sign = if (i + j + 2) % 2 == 0 { -1 } else { 1 };
        sign * if self.occ(a, EAST) { 3 } else { -1 }
    }

    pub fn heights(&self) -> HeightSnapshot {
        let l = self.side;
        let mut h = vec![0i32; l * l];
        for i in 1..l {
            h[i] = h[i - 1] + self.step_east(i - 1, 0);
        }
        for j in 1..l {
            for i in 0..l {
                h[j * l + i] = h[(j - 1) * l + i] + self.step_north(i, j - 1);
            }
        }
        let wx = h[l - 1] + self.step_east(l - 1, 0);
        let wy = h[(l - 1) * l] + self.step_north(0, l - 1);
        HeightSnapshot { side: l, h, winding: [wx, wy] }
    }

    /// Horizontal and vertical windings in quarters.
    pub fn winding(&self) -> [i32; 2] {
        let l = self.side;
        let wx = (0..l).map(|i| self.step_east(i, 0)).sum();
        let wy = (0..l).map(|j| self.step_north(0, j)).sum();
        [wx, wy]
    }
}

impl HeightSnapshot {
    /// Spatial mean of `(h(f + R e) - h(f))^2 - (mean shift)^2` in natural
    /// height units, for the horizontal (`axis = 0`) or vertical direction.
    pub fn mean_sq_increment(&self, r: usize, axis: usize) -> f64 {
        let l = self.side;
        let w = self.winding[axis] as i64;
        let mut sum2: i64 = 0;
        for j in 0..l {
            for i in 0..l {
                let (i2, j2, wrapped) = if axis == 0 {
                    let t = i + r;
                    (t % l, j, t >= l)
                } else {
                    let t = j + r;
                    (i, t % l, t >= l)
                };
                let mut d = (self.h[j2 * l + i2] - self.h[j * l + i]) as i64;
                if wrapped {
                    d += w;
                }
                sum2 += d * d;
            }
        }
        let n = (l * l) as f64;
        let shift = r as f64 * w as f64 / l as f64;
        (sum2 as f64 / n - shift * shift) / 16.0
    }
}

/// A chain with its own random stream.
#[derive(Clone, Debug)]
pub struct Chain {
    pub params: MCParams,
    pub state: ChainState,
    pub rng: ChaCha8Rng,
    pub sweeps_done: usize,
    pub stats: SweepStats,
    table: AcceptanceTable,
}

impl Chain {
    /// Chain `index` started from the columnar configuration (zero winding).
    pub fn new(params: MCParams, index: u64) -> Result<Self> {
        params.validate()?;
        let cfg = DimerConfig::columnar(params.geometry());
        Self::from_config(params, index, &cfg)
    }

    pub fn from_config(params: MCParams, index: u64, cfg: &DimerConfig) -> Result<Self> {
        params.validate()?;
        if cfg.geometry().side() != params.side {
            return Err(DimerError::InvalidParameter("configuration size does not match parameters".into()));
        }
        Ok(Chain {
            params,
            state: ChainState::from_config(cfg),
            rng: chain_rng(params.seed, index),
            sweeps_done: 0,
            stats: SweepStats::default(),
            table: AcceptanceTable::new(&params.weights, params.lambda),
        })
    }

    pub fn sweep(&mut self) {
        let s = metropolis_sweep(&mut self.state, &self.table, &mut self.rng);
        self.stats.add(s);
        self.sweeps_done += 1;
    }

    pub fn run(&mut self, sweeps: usize) {
        for _ in 0..sweeps {
            self.sweep();
        }
    }

    /// Restores a chain from saved pieces (see the checkpoint module).
    pub(crate) fn restore(params: MCParams, state: ChainState, rng: ChaCha8Rng, sweeps_done: usize, stats: SweepStats) -> Self {
        Chain { params, state, rng, sweeps_done, stats, table: AcceptanceTable::new(&params.weights, params.lambda) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{enumerate_matchings, height_field, winding};

    #[test]
    fn both_conventions_count_parallel_faces() {
        let g = TorusGeometry::new(4).unwrap();
        for cfg in enumerate_matchings(&g).unwrap() {
            let n = flippable_faces(&cfg).len();
            assert_eq!(interaction_count(&cfg, PlaquetteConvention::AboveBelow), n);
            assert_eq!(interaction_count(&cfg, PlaquetteConvention::LeftRight), n);
            assert_eq!(ChainState::from_config(&cfg).pair_count(), n as i64);
        }
    }

    #[test]
    fn stacked_horizontal_dimers_give_two() {
        let g = TorusGeometry::new(4).unwrap();
        let cfg = DimerConfig::columnar(g);
        assert_eq!(plaquette_f(&cfg, [0, 0], PlaquetteConvention::AboveBelow), 2);
        assert_eq!(plaquette_f(&cfg, [0, 0], PlaquetteConvention::LeftRight), 1);
    }

    #[test]
    fn frozen_brick_wall() {
        let g = TorusGeometry::new(6).unwrap();
        let cfg = DimerConfig::brick_wall(g);
        assert!(flippable_faces(&cfg).is_empty());
        assert_eq!(interaction_count(&cfg, PlaquetteConvention::AboveBelow), 0);
        assert!(matches!(flip(&cfg, [0, 0]), Err(DimerError::NotFlippable(0, 0))));
    }

    #[test]
    fn flip_is_an_involution() {
        let g = TorusGeometry::new(4).unwrap();
        for cfg in enumerate_matchings(&g).unwrap() {
            for f in flippable_faces(&cfg) {
                let once = flip(&cfg, f).unwrap();
                assert_ne!(once, cfg);
                assert_eq!(flip(&once, f).unwrap(), cfg);
            }
        }
    }

    #[test]
    fn state_flip_matches_config_flip() {
        let g = TorusGeometry::new(6).unwrap();
        let cfg = DimerConfig::columnar(g);
        for f in flippable_faces(&cfg) {
            let mut st = ChainState::from_config(&cfg);
            st.flip_face(g.face_index(f)).unwrap();
            assert_eq!(st.config(), flip(&cfg, f).unwrap());
            assert!(st.caches_consistent());
        }
    }

    #[test]
    fn fast_heights_match_paths() {
        let g = TorusGeometry::new(4).unwrap();
        for cfg in enumerate_matchings(&g).unwrap() {
            let st = ChainState::from_config(&cfg);
            let snap = st.heights();
            let slow = height_field(&cfg);
            assert_eq!(snap.h.iter().map(|&x| x as i64).collect::<Vec<_>>(), slow);
            let (wx, wy) = winding(&cfg);
            assert_eq!(snap.winding, [wx.0 as i32, wy.0 as i32]);
            assert_eq!(st.winding(), snap.winding);
        }
    }

    #[test]
    fn uniform_weights_accept_every_neutral_flip() {
        let t = AcceptanceTable::new(&Weights::uniform(), 0.0);
        for kind in [1, 2] {
            for d in -4..=4 {
                assert_eq!(t.get(kind, d), 1.0);
            }
        }
        let w = Weights::new(0.8, 1.1, 1.2).unwrap();
        let r = AcceptanceTable::log_ratio(&w, 0.0, FaceKind::Horizontal, 3);
        assert!((r - (1.1f64 / 0.96).ln()).abs() < 1e-15);
    }

    #[test]
    fn sweeps_keep_caches_and_sector() {
        let w = Weights::new(0.8, 1.1, 1.2).unwrap();
        let mut chain = Chain::new(MCParams::new(8, w, 0.3, 200, 5), 0).unwrap();
        let wind = chain.state.winding();
        for _ in 0..200 {
            chain.sweep();
            assert!(chain.state.caches_consistent());
            assert_eq!(chain.state.winding(), wind);
        }
        assert!(chain.stats.accepted > 0);
    }

    #[test]
    fn same_seed_same_stream() {
        let p = MCParams::new(8, Weights::uniform(), 0.1, 50, 9);
        let mut a = Chain::new(p, 3).unwrap();
        let mut b = Chain::new(p, 3).unwrap();
        a.run(50);
        b.run(50);
        assert_eq!(a.state, b.state);
        let mut c = Chain::new(p, 4).unwrap();
        c.run(50);
        assert_ne!(a.state, c.state);
    }

    #[test]
    fn params_are_validated() {
        let mut p = MCParams::new(8, Weights::uniform(), 0.0, 100, 1);
        assert!(p.validate().is_ok());
        p.burn_in = 100;
        assert!(p.validate().is_err());
        p = MCParams::new(7, Weights::uniform(), 0.0, 100, 1);
        assert!(p.validate().is_err());
        p = MCParams::new(8, Weights::uniform(), 0.0, 100, 1);
        p.measurement_stride = 0;
        assert!(p.validate().is_err());
    }
}
