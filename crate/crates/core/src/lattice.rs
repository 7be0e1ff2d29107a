//! Torus geometry, edge types, perfect matchings and the height function.
//!
//! Two coordinate systems coexist. *Physical* coordinates `(i, j)` label the
//! sites of the `L x L` square torus; a site is black when `i + j` is even.
//! *Lattice* coordinates label black sites by `x = (x1, x2)` with
//! `physical = (x1 + x2, x2 - x1)`. In lattice coordinates the white endpoint
//! of the type-`r` edge at black `x` is the white site `x + v_r`, where the
//! white site `y` sits at physical `(y1 + y2 + 1, y2 - y1)`. This makes the
//! Fourier phases `exp(-i k v_r)` of the Kasteleyn symbol literal.
//!
//! Heights live on faces, indexed by their lower-left vertex, and are stored
//! exactly in units of 1/4.

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub};

use crate::error::{DimerError, Result};

/// Integer pair used for sites, faces and lattice vectors.
pub type Point = [i64; 2];

/// Largest torus side accepted by [`enumerate_matchings`].
pub const ENUMERATION_LIMIT: usize = 6;

/// Edge type: 1 = horizontal with white on the right, 2 = vertical with white
/// on top, 3 = horizontal with white on the left, 4 = vertical with white on
/// the bottom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeType {
    One,
    Two,
    Three,
    Four,
}

impl EdgeType {
    pub const ALL: [EdgeType; 4] = [EdgeType::One, EdgeType::Two, EdgeType::Three, EdgeType::Four];

    /// Zero-based index (type 1 -> 0).
    pub fn index(self) -> usize {
        match self {
            EdgeType::One => 0,
            EdgeType::Two => 1,
            EdgeType::Three => 2,
            EdgeType::Four => 3,
        }
    }

    /// The label `r` in `{1, 2, 3, 4}`.
    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(r: u8) -> Option<EdgeType> {
        match r {
            1 => Some(EdgeType::One),
            2 => Some(EdgeType::Two),
            3 => Some(EdgeType::Three),
            4 => Some(EdgeType::Four),
            _ => None,
        }
    }

    pub fn from_index(i: usize) -> EdgeType {
        EdgeType::ALL[i % 4]
    }

    /// The type `r + 2 (mod 4)`: the parallel edge type on the other side.
    pub fn opposite(self) -> EdgeType {
        EdgeType::from_index(self.index() + 2)
    }

    /// Offset `v_r` from the black site to its white endpoint, in lattice
    /// coordinates.
    pub fn lattice_offset(self) -> Point {
        match self {
            EdgeType::One => [0, 0],
            EdgeType::Two => [-1, 0],
            EdgeType::Three => [-1, -1],
            EdgeType::Four => [0, -1],
        }
    }

    /// Offset from the black site to its white endpoint, in physical
    /// coordinates.
    pub fn physical_offset(self) -> Point {
        match self {
            EdgeType::One => [1, 0],
            EdgeType::Two => [0, 1],
            EdgeType::Three => [-1, 0],
            EdgeType::Four => [0, -1],
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, EdgeType::One | EdgeType::Three)
    }

    fn from_physical_offset(d: Point) -> Option<EdgeType> {
        EdgeType::ALL.into_iter().find(|r| r.physical_offset() == d)
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// The four offsets `v_1 = (0,0)`, `v_2 = (-1,0)`, `v_3 = (-1,-1)`,
/// `v_4 = (0,-1)`, keyed by edge type.
pub fn make_edge_offsets() -> [(EdgeType, Point); 4] {
    EdgeType::ALL.map(|r| (r, r.lattice_offset()))
}

/// Physical position of the black site with lattice coordinate `x`.
pub fn black_to_physical(x: Point) -> Point {
    [x[0] + x[1], x[1] - x[0]]
}

/// Physical position of the white site with lattice coordinate `y`.
pub fn white_to_physical(y: Point) -> Point {
    [y[0] + y[1] + 1, y[1] - y[0]]
}

/// Lattice coordinate of a black physical site, or `None` for a white one.
pub fn physical_to_black(p: Point) -> Option<Point> {
    if (p[0] + p[1]).rem_euclid(2) != 0 {
        return None;
    }
    Some([(p[0] - p[1]) / 2, (p[0] + p[1]) / 2])
}

pub fn is_black(p: Point) -> bool {
    (p[0] + p[1]).rem_euclid(2) == 0
}

/// A concrete edge: black endpoint (physical, possibly unwrapped) and type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EdgeRef {
    pub black: Point,
    pub r: EdgeType,
}

impl EdgeRef {
    pub fn new(black: Point, r: EdgeType) -> Self {
        debug_assert!(is_black(black), "edge anchored at white site {black:?}");
        EdgeRef { black, r }
    }

    /// Physical position of the white endpoint.
    pub fn white(&self) -> Point {
        let d = self.r.physical_offset();
        [self.black[0] + d[0], self.black[1] + d[1]]
    }

    /// The edge joining two nearest-neighbour sites, in either order.
    pub fn between(a: Point, b: Point) -> Option<EdgeRef> {
        let (black, white) = if is_black(a) { (a, b) } else { (b, a) };
        if !is_black(black) || is_black(white) {
            return None;
        }
        EdgeType::from_physical_offset([white[0] - black[0], white[1] - black[1]])
            .map(|r| EdgeRef { black, r })
    }

    /// Lattice coordinate of the black endpoint.
    pub fn lattice_black(&self) -> Point {
        physical_to_black(self.black).expect("edge anchored at a black site")
    }
}

/// The discrete `L x L` torus with checkerboard colouring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TorusGeometry {
    side: usize,
}

impl TorusGeometry {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 || side % 2 != 0 {
            return Err(DimerError::InvalidParameter(format!(
                "torus side must be even and positive, got {side}"
            )));
        }
        Ok(TorusGeometry { side })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of black sites (equal to the number of white sites).
    pub fn n_black(&self) -> usize {
        self.side * self.side / 2
    }

    pub fn n_faces(&self) -> usize {
        self.side * self.side
    }

    pub fn wrap(&self, p: Point) -> Point {
        let l = self.side as i64;
        [p[0].rem_euclid(l), p[1].rem_euclid(l)]
    }

    /// Scan-order index (row by row) of a black site.
    pub fn black_index(&self, p: Point) -> usize {
        let [i, j] = self.wrap(p);
        debug_assert!(is_black([i, j]));
        (j as usize * self.side + i as usize) / 2
    }

    pub fn white_index(&self, p: Point) -> usize {
        let [i, j] = self.wrap(p);
        debug_assert!(!is_black([i, j]));
        (j as usize * self.side + i as usize) / 2
    }

    /// Physical position of the black site with scan index `idx`.
    pub fn black_site(&self, idx: usize) -> Point {
        let half = self.side / 2;
        let j = idx / half;
        let i = 2 * (idx % half) + j % 2;
        [i as i64, j as i64]
    }

    pub fn face_index(&self, f: Point) -> usize {
        let [i, j] = self.wrap(f);
        j as usize * self.side + i as usize
    }

    pub fn face(&self, idx: usize) -> Point {
        [(idx % self.side) as i64, (idx / self.side) as i64]
    }

    /// Minimal signed displacement `b - a` along one axis, in `(-L/2, L/2]`.
    pub fn minimal_delta(&self, a: i64, b: i64) -> i64 {
        let l = self.side as i64;
        let d = (b - a).rem_euclid(l);
        if d > l / 2 {
            d - l
        } else {
            d
        }
    }
}

/// A close-packed dimer configuration: each black site names its edge type.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DimerConfig {
    geom: TorusGeometry,
    types: Vec<EdgeType>,
}

/// True iff the assignment covers every white site exactly once.
pub fn is_perfect_matching(geom: &TorusGeometry, assignment: &[EdgeType]) -> bool {
    if assignment.len() != geom.n_black() {
        return false;
    }
    let mut covered = vec![false; geom.n_black()];
    for (idx, &r) in assignment.iter().enumerate() {
        let e = EdgeRef::new(geom.black_site(idx), r);
        let w = geom.white_index(e.white());
        if covered[w] {
            return false;
        }
        covered[w] = true;
    }
    true
}

impl DimerConfig {
    pub fn new(geom: TorusGeometry, types: Vec<EdgeType>) -> Result<Self> {
        if !is_perfect_matching(&geom, &types) {
            return Err(DimerError::InvalidParameter(
                "assignment is not a perfect matching".into(),
            ));
        }
        Ok(DimerConfig { geom, types })
    }

    pub(crate) fn new_unchecked(geom: TorusGeometry, types: Vec<EdgeType>) -> Self {
        DimerConfig { geom, types }
    }

    /// Columnar configuration: horizontal dimers stacked in aligned columns.
    /// Zero winding in both directions and every face with an even `i` is
    /// flippable.
    pub fn columnar(geom: TorusGeometry) -> Self {
        let types = (0..geom.n_black())
            .map(|idx| {
                if geom.black_site(idx)[0] % 2 == 0 {
                    EdgeType::One
                } else {
                    EdgeType::Three
                }
            })
            .collect();
        DimerConfig { geom, types }
    }

    /// Every black site uses a type-1 edge. On the torus this is a frozen
    /// configuration of maximal tilt: no face is flippable.
    pub fn brick_wall(geom: TorusGeometry) -> Self {
        DimerConfig { geom, types: vec![EdgeType::One; geom.n_black()] }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geom
    }

    pub fn types(&self) -> &[EdgeType] {
        &self.types
    }

    pub fn type_at(&self, black: Point) -> EdgeType {
        self.types[self.geom.black_index(black)]
    }

    pub fn is_occupied(&self, e: &EdgeRef) -> bool {
        self.type_at(e.black) == e.r
    }

    /// Number of dimers of each type.
    pub fn type_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for r in &self.types {
            counts[r.index()] += 1;
        }
        counts
    }

    /// `sum_b log t_{r(b)}` for weights `(t1, t2, t3, t4 = 1)`.
    pub fn log_weight(&self, t: &[f64; 4]) -> f64 {
        self.type_counts()
            .iter()
            .zip(t)
            .map(|(&n, &tr)| n as f64 * tr.ln())
            .sum()
    }

    /// Plain-text form: `L^2/2` pairs `site:type` in scan order.
    pub fn to_line(&self) -> String {
        self.types
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{i}:{r}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn from_line(geom: TorusGeometry, line: &str) -> Result<Self> {
        let mut types = vec![None; geom.n_black()];
        for token in line.split_whitespace() {
            let (site, r) = token
                .split_once(':')
                .ok_or_else(|| DimerError::Parse(format!("expected site:type, got {token:?}")))?;
            let site: usize = site
                .parse()
                .map_err(|_| DimerError::Parse(format!("bad site index {site:?}")))?;
            let r = r
                .parse::<u8>()
                .ok()
                .and_then(EdgeType::from_number)
                .ok_or_else(|| DimerError::Parse(format!("bad edge type {r:?}")))?;
            let slot = types
                .get_mut(site)
                .ok_or_else(|| DimerError::Parse(format!("site {site} out of range")))?;
            *slot = Some(r);
        }
        let types: Option<Vec<_>> = types.into_iter().collect();
        let types = types.ok_or_else(|| DimerError::Parse("missing sites".into()))?;
        DimerConfig::new(geom, types)
    }
}

/// Exhaustive, duplicate-free list of all perfect matchings of the torus,
/// by backtracking over black sites in scan order.
pub fn enumerate_matchings(geom: &TorusGeometry) -> Result<Vec<DimerConfig>> {
    if geom.side() > ENUMERATION_LIMIT {
        return Err(DimerError::SizeLimitExceeded {
            side: geom.side(),
            limit: ENUMERATION_LIMIT,
        });
    }
    let n = geom.n_black();
    let whites: Vec<[usize; 4]> = (0..n)
        .map(|idx| {
            let b = geom.black_site(idx);
            EdgeType::ALL.map(|r| geom.white_index(EdgeRef::new(b, r).white()))
        })
        .collect();

    let mut out = Vec::new();
    let mut covered = vec![false; n];
    let mut current = Vec::with_capacity(n);
    backtrack(geom, &whites, &mut covered, &mut current, &mut out);
    Ok(out)
}

fn backtrack(
    geom: &TorusGeometry,
    whites: &[[usize; 4]],
    covered: &mut [bool],
    current: &mut Vec<EdgeType>,
    out: &mut Vec<DimerConfig>,
) {
    let idx = current.len();
    if idx == whites.len() {
        out.push(DimerConfig::new_unchecked(*geom, current.clone()));
        return;
    }
    for r in EdgeType::ALL {
        let w = whites[idx][r.index()];
        if covered[w] {
            continue;
        }
        covered[w] = true;
        current.push(r);
        backtrack(geom, whites, covered, current, out);
        current.pop();
        covered[w] = false;
    }
}

/// A height value, stored exactly in quarters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Height(pub i64);

impl Height {
    pub const ZERO: Height = Height(0);

    pub fn from_quarters(q: i64) -> Self {
        Height(q)
    }

    pub fn quarters(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 4.0
    }
}

impl Add for Height {
    type Output = Height;
    fn add(self, rhs: Height) -> Height {
        Height(self.0 + rhs.0)
    }
}

impl AddAssign for Height {
    fn add_assign(&mut self, rhs: Height) {
        self.0 += rhs.0;
    }
}

impl Sub for Height {
    type Output = Height;
    fn sub(self, rhs: Height) -> Height {
        Height(self.0 - rhs.0)
    }
}

impl Neg for Height {
    type Output = Height;
    fn neg(self) -> Height {
        Height(-self.0)
    }
}

impl fmt::Display for Height {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 4 == 0 {
            write!(f, "{}", self.0 / 4)
        } else {
            write!(f, "{}/4", self.0)
        }
    }
}

/// Elementary move between adjacent faces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    East,
    North,
    West,
    South,
}

impl Direction {
    pub fn delta(self) -> Point {
        match self {
            Direction::East => [1, 0],
            Direction::North => [0, 1],
            Direction::West => [-1, 0],
            Direction::South => [0, -1],
        }
    }

    pub fn reverse(self) -> Direction {
        match self {
            Direction::East => Direction::West,
            Direction::North => Direction::South,
            Direction::West => Direction::East,
            Direction::South => Direction::North,
        }
    }

    /// The edge crossed when leaving face `f` in this direction, and the
    /// site lying on the right of the traversal.
    fn crossing(self, f: Point) -> (EdgeRef, Point) {
        let [i, j] = f;
        let (a, b, right) = match self {
            Direction::East => ([i + 1, j], [i + 1, j + 1], [i + 1, j]),
            Direction::North => ([i, j + 1], [i + 1, j + 1], [i + 1, j + 1]),
            Direction::West => ([i, j], [i, j + 1], [i, j + 1]),
            Direction::South => ([i, j], [i + 1, j], [i, j]),
        };
        (EdgeRef::between(a, b).expect("adjacent sites"), right)
    }
}

/// One crossing of a face path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathStep {
    pub edge: EdgeRef,
    /// `+1` when the white endpoint lies on the right of the traversal.
    pub sign: i8,
    pub direction: Direction,
}

/// A path on the dual lattice. Faces are unwrapped; lookups wrap on the torus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FacePath {
    pub start: Point,
    pub steps: Vec<PathStep>,
}

impl FacePath {
    pub fn empty(start: Point) -> Self {
        FacePath { start, steps: Vec::new() }
    }

    pub fn from_moves(start: Point, moves: &[Direction]) -> Self {
        let mut path = FacePath::empty(start);
        for &d in moves {
            path.push(d);
        }
        path
    }

    pub fn push(&mut self, d: Direction) {
        let f = self.end();
        let (edge, right) = d.crossing(f);
        let sign = if is_black(right) { -1 } else { 1 };
        self.steps.push(PathStep { edge, sign, direction: d });
    }

    pub fn end(&self) -> Point {
        self.steps.iter().fold(self.start, |f, s| {
            let d = s.direction.delta();
            [f[0] + d[0], f[1] + d[1]]
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The same faces visited in the opposite order.
    pub fn reversed(&self) -> FacePath {
        let moves: Vec<Direction> = self.steps.iter().rev().map(|s| s.direction.reverse()).collect();
        FacePath::from_moves(self.end(), &moves)
    }

    /// This path followed by `other`, which must start where this one ends.
    pub fn concat(&self, other: &FacePath) -> FacePath {
        assert_eq!(self.end(), other.start, "paths do not connect");
        let mut path = self.clone();
        for s in &other.steps {
            path.push(s.direction);
        }
        path
    }
}

/// `h(f') - h(f) = sum_b sigma_b (1_b - 1/4)` along the path. Only
/// contractible paths give a path-independent answer; a winding path picks up
/// the winding number of its homotopy class.
pub fn height_difference(cfg: &DimerConfig, path: &FacePath) -> Height {
    Height(
        path.steps
            .iter()
            .map(|s| {
                let occ = if cfg.is_occupied(&s.edge) { 4 } else { 0 };
                s.sign as i64 * (occ - 1)
            })
            .sum(),
    )
}

/// L-shaped path: horizontal leg first, then vertical, using the minimal
/// displacement on the torus.
pub fn canonical_path(geom: &TorusGeometry, from: Point, to: Point) -> FacePath {
    let dx = geom.minimal_delta(from[0], to[0]);
    let dy = geom.minimal_delta(from[1], to[1]);
    let h = if dx >= 0 { Direction::East } else { Direction::West };
    let v = if dy >= 0 { Direction::North } else { Direction::South };
    let mut moves = vec![h; dx.unsigned_abs() as usize];
    moves.extend(std::iter::repeat(v).take(dy.unsigned_abs() as usize));
    FacePath::from_moves(from, &moves)
}

/// Height change along the horizontal and vertical non-contractible loops
/// through face `(0, 0)`. Conserved by local flips.
pub fn winding(cfg: &DimerConfig) -> (Height, Height) {
    let l = cfg.geometry().side();
    let hx = FacePath::from_moves([0, 0], &vec![Direction::East; l]);
    let hy = FacePath::from_moves([0, 0], &vec![Direction::North; l]);
    (height_difference(cfg, &hx), height_difference(cfg, &hy))
}

/// Heights (in quarters) of all faces, indexed by `face_index`, with
/// `h(0,0) = 0`. Built along row 0 then up each column, so on a winding
/// sector the field jumps across the seams.
pub fn height_field(cfg: &DimerConfig) -> Vec<i64> {
    let geom = cfg.geometry();
    let l = geom.side() as i64;
    let mut h = vec![0i64; geom.n_faces()];
    let step = |f: Point, d: Direction| -> i64 {
        let mut p = FacePath::empty(f);
        p.push(d);
        height_difference(cfg, &p).0
    };
    for i in 1..l {
        h[geom.face_index([i, 0])] = h[geom.face_index([i - 1, 0])] + step([i - 1, 0], Direction::East);
    }
    for i in 0..l {
        for j in 1..l {
            h[geom.face_index([i, j])] =
                h[geom.face_index([i, j - 1])] + step([i, j - 1], Direction::North);
        }
    }
    h
}
