//! Analytic layer: derived quantities of a parameter quadruplet, the
//! boundary-state Markov chain, the `γ` table and the ergodicity condition.
//!
//! Index conventions used throughout the crate:
//!
//! * a quadruplet entry `p_ab` is the probability that a cell becomes `1`
//!   when its left parent (itself) is `a` and its right parent (cell `i+1`)
//!   is `b`;
//! * `known[0]` holds the quantities where the *left* parent is known and
//!   the right one is not (they drive the right boundary of an island);
//!   `known[1]` holds those where the *right* parent is known (they drive the
//!   left boundary). [`Side::index`] maps a boundary onto this index.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::InvalidProbability(value))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// The PCA parameter `(p00, p01, p10, p11)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamQuad {
    entries: [Probability; 4],
}

impl ParamQuad {
    pub fn new(p00: f64, p01: f64, p10: f64, p11: f64) -> Result<Self> {
        Ok(ParamQuad {
            entries: [
                Probability::new(p00)?,
                Probability::new(p01)?,
                Probability::new(p10)?,
                Probability::new(p11)?,
            ],
        })
    }

    pub fn from_array(p: [f64; 4]) -> Result<Self> {
        ParamQuad::new(p[0], p[1], p[2], p[3])
    }

    /// `p_ab`: probability of a `1` given left parent `a` and right parent `b`.
    #[inline]
    pub fn get(&self, a: u8, b: u8) -> f64 {
        self.entries[(2 * a + b) as usize].get()
    }

    pub fn to_array(&self) -> [f64; 4] {
        self.entries.map(Probability::get)
    }

    /// All four entries strictly inside `(0, 1)`.
    pub fn has_positive_rates(&self) -> bool {
        self.entries.iter().all(|p| p.get() > 0.0 && p.get() < 1.0)
    }

    /// Parameter of the PCA conjugated by the global bit flip `0 ↔ 1`.
    pub fn flip_conjugate(&self) -> ParamQuad {
        let [p00, p01, p10, p11] = self.to_array();
        ParamQuad::new(1.0 - p11, 1.0 - p10, 1.0 - p01, 1.0 - p00)
            .expect("complements of probabilities are probabilities")
    }

    /// Parameter with `p01` and `p10` exchanged. Reflecting space maps this
    /// PCA onto the original one with left and right boundaries exchanged.
    pub fn mirror(&self) -> ParamQuad {
        let [p00, p01, p10, p11] = self.to_array();
        ParamQuad::new(p00, p10, p01, p11).expect("permutation of probabilities")
    }
}

impl fmt::Display for ParamQuad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.to_array();
        write!(f, "({a}, {b}, {c}, {d})")
    }
}

impl std::str::FromStr for ParamQuad {
    type Err = Error;

    /// Parses `p00,p01,p10,p11`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                what: "parameter quadruplet",
                detail: format!("expected 4 comma-separated values, got {:?}", s),
            });
        }
        let mut p = [0.0; 4];
        for (slot, part) in p.iter_mut().zip(&parts) {
            *slot = part.parse().map_err(|e| Error::Parse {
                what: "parameter quadruplet",
                detail: format!("{part:?}: {e}"),
            })?;
        }
        ParamQuad::from_array(p)
    }
}

/// A deterministic CA rule `p00 p01 p10 p11 ∈ {0,1}⁴`, written as the
/// concatenated word (e.g. `1000`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CaCode(u8);

impl CaCode {
    /// From the four output bits in the order `p00, p01, p10, p11`.
    pub fn from_bits(bits: [u8; 4]) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidCode(format!("{bits:?}")));
        }
        Ok(CaCode(bits[0] << 3 | bits[1] << 2 | bits[2] << 1 | bits[3]))
    }

    pub fn bits(self) -> [u8; 4] {
        [self.0 >> 3 & 1, self.0 >> 2 & 1, self.0 >> 1 & 1, self.0 & 1]
    }

    /// All sixteen rules in numeric order `0000 … 1111`.
    pub fn all() -> impl Iterator<Item = CaCode> {
        (0u8..16).map(CaCode)
    }

    /// The rule conjugated by the bit flip.
    pub fn flip(self) -> CaCode {
        let [a, b, c, d] = self.bits();
        CaCode::from_bits([1 - d, 1 - c, 1 - b, 1 - a]).unwrap()
    }
}

impl fmt::Display for CaCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.bits();
        write!(f, "{a}{b}{c}{d}")
    }
}

impl std::str::FromStr for CaCode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bytes = s.as_bytes();
        if bytes.len() != 4 || !bytes.iter().all(|c| *c == b'0' || *c == b'1') {
            return Err(Error::InvalidCode(s.to_string()));
        }
        let mut bits = [0u8; 4];
        for (b, c) in bits.iter_mut().zip(bytes) {
            *b = c - b'0';
        }
        CaCode::from_bits(bits)
    }
}

/// CA `code` in which every update is flipped independently with
/// probability `eps ∈ [0, 1/2]`.
pub fn ca_with_error(code: CaCode, eps: f64) -> Result<ParamQuad> {
    if !(0.0..=0.5).contains(&eps) {
        return Err(Error::EpsOutOfRange(eps, "[0, 1/2]"));
    }
    let p = code
        .bits()
        .map(|bit| if bit == 1 { 1.0 - eps } else { eps });
    ParamQuad::from_array(p)
}

/// Which boundary of an island a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Right boundary: driven by the quantities with the left parent known.
    RightBoundary,
    /// Left boundary: driven by the quantities with the right parent known.
    LeftBoundary,
}

impl Side {
    /// Index into [`DerivedParams::known`] and the per-side aggregates.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Side::RightBoundary => 0,
            Side::LeftBoundary => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::RightBoundary => Side::LeftBoundary,
            Side::LeftBoundary => Side::RightBoundary,
        }
    }

    pub const BOTH: [Side; 2] = [Side::RightBoundary, Side::LeftBoundary];
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::RightBoundary => "right",
            Side::LeftBoundary => "left",
        })
    }
}

/// Outcome probabilities when exactly one parent is known, indexed by the
/// value `x` of the known parent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnownParent {
    /// Minimum probability of a `1`.
    pub p: [f64; 2],
    /// Minimum probability of a `0`.
    pub q: [f64; 2],
    /// Remaining mass: the outcome depends on the unknown parent.
    pub r: [f64; 2],
}

/// Every quantity derived from a [`ParamQuad`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    pub quad: ParamQuad,
    /// `known[i]`: superscript-`i` quantities (`0`: left parent known).
    pub known: [KnownParent; 2],
    pub p: f64,
    pub q: f64,
    pub r: f64,
    /// `agg_p[i][x] = r·p⁽ⁱ⁾ₓ + (1 − r⁽ⁱ⁾ₓ)·p + r⁽ⁱ⁾ₓ·p⁽¹⁻ⁱ⁾ₓ`.
    pub agg_p: [[f64; 2]; 2],
    /// `agg_q[i][x]`, same shape with `q`.
    pub agg_q: [[f64; 2]; 2],
    /// `agg_r[x] = r⁽⁰⁾ₓ·r⁽¹⁾ₓ`.
    pub agg_r: [f64; 2],
    /// Star row of the boundary chain per side: `min(agg_p[i][0], agg_p[i][1])`.
    pub star_p: [f64; 2],
    pub star_q: [f64; 2],
    pub star_r: [f64; 2],
    /// Envelope thresholds indexed by (left, right) parent, `2` = unknown.
    thresholds: [[(f64, f64); 3]; 3],
}

/// Derives every quantity of `quad`.
pub fn derive(quad: &ParamQuad) -> DerivedParams {
    let pr = |a, b| quad.get(a, b);
    let known_from = |get: &dyn Fn(u8, u8) -> f64| {
        let mut k = KnownParent {
            p: [0.0; 2],
            q: [0.0; 2],
            r: [0.0; 2],
        };
        for x in 0..2u8 {
            let (lo, hi) = min_max(get(x, 0), get(x, 1));
            k.p[x as usize] = lo;
            k.q[x as usize] = 1.0 - hi;
            k.r[x as usize] = hi - lo;
        }
        k
    };
    // left parent x known: vary the right parent
    let left_known = known_from(&|x, y| pr(x, y));
    // right parent x known: vary the left parent
    let right_known = known_from(&|x, y| pr(y, x));

    let all = quad.to_array();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (p, q, r) = (lo, 1.0 - hi, hi - lo);

    let known = [left_known, right_known];
    let mut agg_p = [[0.0; 2]; 2];
    let mut agg_q = [[0.0; 2]; 2];
    let mut agg_r = [0.0; 2];
    for x in 0..2 {
        agg_r[x] = known[0].r[x] * known[1].r[x];
        for i in 0..2 {
            let (own, other) = (&known[i], &known[1 - i]);
            agg_p[i][x] = r * own.p[x] + (1.0 - own.r[x]) * p + own.r[x] * other.p[x];
            agg_q[i][x] = r * own.q[x] + (1.0 - own.r[x]) * q + own.r[x] * other.q[x];
        }
    }
    let mut star_p = [0.0; 2];
    let mut star_q = [0.0; 2];
    let mut star_r = [0.0; 2];
    for i in 0..2 {
        star_p[i] = agg_p[i][0].min(agg_p[i][1]);
        star_q[i] = agg_q[i][0].min(agg_q[i][1]);
        star_r[i] = 1.0 - star_p[i] - star_q[i];
    }
    let mut thresholds = [[(0.0, 0.0); 3]; 3];
    for (a, row) in thresholds.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            let compatible = |v: u8, want: usize| want == 2 || v as usize == want;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for x in 0..2u8 {
                for y in 0..2u8 {
                    if compatible(x, a) && compatible(y, b) {
                        lo = lo.min(quad.get(x, y));
                        hi = hi.max(quad.get(x, y));
                    }
                }
            }
            *cell = (lo, hi);
        }
    }
    DerivedParams {
        quad: *quad,
        known,
        p,
        q,
        r,
        agg_p,
        agg_q,
        agg_r,
        star_p,
        star_q,
        star_r,
        thresholds,
    }
}

#[inline]
fn min_max(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl DerivedParams {
    pub fn from_quad(quad: &ParamQuad) -> Self {
        derive(quad)
    }

    /// Envelope thresholds `(lo, hi)` for a parent context: the child is `1`
    /// iff `u < lo`, `0` iff `u ≥ hi`, unknown otherwise. `None` marks an
    /// unknown parent. Taken from the raw quadruplet (not from `1 − q`) so
    /// that thresholds nest exactly around every compatible `p_ab`.
    #[inline]
    pub fn thresholds(&self, left: Option<u8>, right: Option<u8>) -> (f64, f64) {
        let idx = |v: Option<u8>| v.map_or(2, usize::from);
        self.thresholds[idx(left)][idx(right)]
    }

    /// The favourable boundary state `w` of a side: the one with the smaller
    /// `r⁽ⁱ⁾`, `Zero` on ties.
    pub fn favourable_state(&self, side: Side) -> BoundaryState3 {
        let r = self.known[side.index()].r;
        if r[0] <= r[1] {
            BoundaryState3::Zero
        } else {
            BoundaryState3::One
        }
    }
}

/// State of an island boundary cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryState3 {
    Zero,
    One,
    /// Decorrelated from the initial condition, but the value is forgotten.
    Star,
}

impl BoundaryState3 {
    pub const ALL: [BoundaryState3; 3] = [
        BoundaryState3::Zero,
        BoundaryState3::One,
        BoundaryState3::Star,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_bit(b: u8) -> Self {
        if b == 0 {
            BoundaryState3::Zero
        } else {
            BoundaryState3::One
        }
    }

    /// `Some(0)`/`Some(1)` for concrete states.
    pub fn bit(self) -> Option<u8> {
        match self {
            BoundaryState3::Zero => Some(0),
            BoundaryState3::One => Some(1),
            BoundaryState3::Star => None,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BoundaryState3::Zero => '0',
            BoundaryState3::One => '1',
            BoundaryState3::Star => '*',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '0' => Some(BoundaryState3::Zero),
            '1' => Some(BoundaryState3::One),
            '*' => Some(BoundaryState3::Star),
            _ => None,
        }
    }
}

impl fmt::Display for BoundaryState3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Transition matrix of a boundary state, rows and columns ordered
/// `Zero, One, Star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryChain {
    pub side: Side,
    pub rows: [[f64; 3]; 3],
}

impl BoundaryChain {
    pub fn row(&self, from: BoundaryState3) -> [f64; 3] {
        self.rows[from.index()]
    }

    pub fn max_row_defect(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `ν ↦ νM`.
    pub fn apply(&self, nu: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (from, &m) in nu.iter().enumerate() {
            for (to, o) in out.iter_mut().enumerate() {
                *o += m * self.rows[from][to];
            }
        }
        out
    }
}

/// Boundary-state chain of a side: concrete rows `(Q⁽ⁱ⁾ₓ, P⁽ⁱ⁾ₓ, Rₓ)`, star row
/// `(Q⁽ⁱ⁾, P⁽ⁱ⁾, R⁽ⁱ⁾)`.
pub fn boundary_chain(d: &DerivedParams, side: Side) -> BoundaryChain {
    let i = side.index();
    BoundaryChain {
        side,
        rows: [
            [d.agg_q[i][0], d.agg_p[i][0], d.agg_r[0]],
            [d.agg_q[i][1], d.agg_p[i][1], d.agg_r[1]],
            [d.star_q[i], d.star_p[i], d.star_r[i]],
        ],
    }
}

/// A stationary distribution of a [`BoundaryChain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryDist {
    pub mass: [f64; 3],
}

impl StationaryDist {
    pub fn get(&self, s: BoundaryState3) -> f64 {
        self.mass[s.index()]
    }
}

/// Stationary distribution by direct linear solve, falling back to power
/// iteration from the point mass on `Star` when the solve is singular
/// (chain not irreducible).
pub fn stationary_solve(chain: &BoundaryChain) -> Result<StationaryDist> {
    if let Some(nu) = direct_solve(chain) {
        let image = chain.apply(&nu);
        let defect = image
            .iter()
            .zip(&nu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if defect <= tol::LINEAR_SOLVE * 0.1 {
            return Ok(StationaryDist { mass: clamp(nu) });
        }
    }
    stationary_power(chain)
}

/// Limit of `δ_Star · Mᵗ` by power iteration.
pub fn stationary_power(chain: &BoundaryChain) -> Result<StationaryDist> {
    let mut nu = [0.0, 0.0, 1.0];
    for _ in 0..tol::POWER_ITERATION_CAP {
        let next = chain.apply(&nu);
        let diff: f64 = next.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum();
        nu = next;
        if diff < tol::POWER_ITERATION {
            let s: f64 = nu.iter().sum();
            return Ok(StationaryDist {
                mass: clamp(nu.map(|m| m / s)),
            });
        }
    }
    Err(Error::NonConvergence(tol::POWER_ITERATION_CAP))
}

fn clamp(nu: [f64; 3]) -> [f64; 3] {
    nu.map(|m| m.clamp(0.0, 1.0))
}

/// Solves `ν(M − I) = 0`, `Σν = 1` by Gaussian elimination with partial
/// pivoting. `None` if the system is (numerically) singular.
fn direct_solve(chain: &BoundaryChain) -> Option<[f64; 3]> {
    // Unknowns ν0, ν1, ν2. Equations: columns 0 and 1 of (Mᵀ − I), then Σ = 1.
    let m = &chain.rows;
    let mut a = [[0.0f64; 4]; 3];
    for (eq, row) in a.iter_mut().take(2).enumerate() {
        for (k, cell) in row.iter_mut().take(3).enumerate() {
            *cell = m[k][eq] - if k == eq { 1.0 } else { 0.0 };
        }
    }
    a[2] = [1.0, 1.0, 1.0, 1.0];
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for r in 0..3 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..4 {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some([a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]])
}

/// One cell of the `γ` table: which half (`w`) and which orderings of the
/// aggregates selected it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GammaCell {
    pub w: BoundaryState3,
    /// `Q⁽ⁱ⁾₁ ≤ Q⁽ⁱ⁾₀` column (otherwise `≥`).
    pub q1_le_q0: bool,
    /// `P⁽ⁱ⁾₀ ≤ P⁽ⁱ⁾₁` row (otherwise `≥`).
    pub p0_le_p1: bool,
}

impl fmt::Display for GammaCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rr = match self.w {
            BoundaryState3::Zero => "r0 <= r1",
            _ => "r0 >= r1",
        };
        let qq = if self.q1_le_q0 { "Q1 <= Q0" } else { "Q1 >= Q0" };
        let pp = if self.p0_le_p1 { "P0 <= P1" } else { "P0 >= P1" };
        write!(f, "{rr}, {qq}, {pp}")
    }
}

fn gamma_cell_value(cell: GammaCell, q: [f64; 2], p: [f64; 2]) -> (f64, f64) {
    let [q0, q1] = q;
    let [p0, p1] = p;
    use BoundaryState3::*;
    match (cell.w, cell.q1_le_q0, cell.p0_le_p1) {
        (Zero, true, _) => (q1, 1.0 - (q0 - q1)),
        (Zero, false, true) => (q1 * p0 + q0 * (1.0 - p1), 1.0 - (p1 - p0)),
        (Zero, false, false) => (q0 + p1 * (q1 - q0), 1.0 - (q1 - q0) * (p0 - p1)),
        (_, _, true) => (p0, 1.0 - (p1 - p0)),
        (_, true, false) => (p0 * q1 + p1 * (1.0 - q0), 1.0 - (q0 - q1)),
        (_, false, false) => (p1 + q0 * (p0 - p1), 1.0 - (q1 - q0) * (p0 - p1)),
    }
}

/// The applicable cells of the `γ` table for a side, in table order. More
/// than one cell is returned exactly when an ordering is an equality.
pub fn gamma_cells(d: &DerivedParams, side: Side) -> Vec<GammaCell> {
    let i = side.index();
    let [q0, q1] = d.agg_q[i];
    let [p0, p1] = d.agg_p[i];
    let w = d.favourable_state(side);
    let mut cells = Vec::with_capacity(4);
    for p0_le_p1 in [true, false] {
        if (p0_le_p1 && p0 <= p1) || (!p0_le_p1 && p0 >= p1) {
            for q1_le_q0 in [true, false] {
                if (q1_le_q0 && q1 <= q0) || (!q1_le_q0 && q1 >= q0) {
                    cells.push(GammaCell {
                        w,
                        q1_le_q0,
                        p0_le_p1,
                    });
                }
            }
        }
    }
    cells
}

/// `γ⁽ⁱ⁾`: the stationary mass of the favourable state `w` in the boundary
/// chain, in closed form.
///
/// On an `r⁽ⁱ⁾₀ = r⁽ⁱ⁾₁` tie the `w = Zero` half is used. Within a half,
/// all applicable cells with a usable denominator must agree to
/// [`tol::IDENTITY`]; the first one is returned.
pub fn gamma_table(d: &DerivedParams, side: Side) -> Result<f64> {
    let i = side.index();
    let cells = gamma_cells(d, side);
    let mut first: Option<f64> = None;
    for cell in &cells {
        let (num, den) = gamma_cell_value(*cell, d.agg_q[i], d.agg_p[i]);
        if den.abs() < tol::DEGENERATE_DENOMINATOR {
            continue;
        }
        let g = num / den;
        match first {
            None => first = Some(g),
            Some(f) => debug_assert!(
                (f - g).abs() <= tol::IDENTITY,
                "tied gamma cells disagree: {f} vs {g} ({side}, {cell})"
            ),
        }
    }
    first.ok_or_else(|| Error::DegenerateDenominator {
        side,
        cell: cells[0].to_string(),
    })
}

/// Mean one-step displacement of a boundary from state `y`.
///
/// Right boundary: `−1 + (1 − r⁽⁰⁾_y)/r`; left boundary: `−(1 − r⁽¹⁾_y)/r`.
/// For `Star` the least favourable of the two concrete values is returned
/// (minimum on the right, maximum on the left).
pub fn mean_increment(d: &DerivedParams, side: Side, y: BoundaryState3) -> Result<f64> {
    if d.r == 0.0 {
        return Err(Error::ZeroR("mean increment"));
    }
    let r_side = d.known[side.index()].r;
    let ry = match y.bit() {
        Some(b) => r_side[b as usize],
        None => r_side[0].max(r_side[1]),
    };
    Ok(match side {
        Side::RightBoundary => -1.0 + (1.0 - ry) / d.r,
        Side::LeftBoundary => -(1.0 - ry) / d.r,
    })
}

/// `min(r⁽ⁱ⁾₀, r⁽ⁱ⁾₁) + (1 − γ⁽ⁱ⁾)·|r⁽ⁱ⁾₀ − r⁽ⁱ⁾₁|`: the long-run average of
/// `r⁽ⁱ⁾` along the boundary state, bounded using `γ`.
fn weighted_r(d: &DerivedParams, side: Side, gamma: f64) -> f64 {
    let [r0, r1] = d.known[side.index()].r;
    r0.min(r1) + (1.0 - gamma) * (r0 - r1).abs()
}

/// Bound on the asymptotic mean increment of a boundary: a lower bound on
/// the right, an upper bound on the left.
pub fn asymptotic_increment_bound(d: &DerivedParams, side: Side) -> Result<f64> {
    if d.r == 0.0 {
        return Err(Error::ZeroR("asymptotic increment bound"));
    }
    let g = gamma_table(d, side)?;
    let w = weighted_r(d, side, g);
    Ok(match side {
        Side::RightBoundary => -1.0 + 1.0 / d.r - w / d.r,
        Side::LeftBoundary => -1.0 / d.r + w / d.r,
    })
}

/// A real number or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PositiveInfinite,
}

impl ExtendedReal {
    pub fn is_infinite(&self) -> bool {
        matches!(self, ExtendedReal::PositiveInfinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(*v),
            ExtendedReal::PositiveInfinite => None,
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::PositiveInfinite => f.write_str("inf"),
        }
    }
}

impl Serialize for ExtendedReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtendedReal::Finite(v) => s.serialize_f64(*v),
            ExtendedReal::PositiveInfinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedReal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ExtendedReal::Finite(v)),
            Raw::Str(s) if s == "inf" => Ok(ExtendedReal::PositiveInfinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// Evaluation of the ergodicity condition `2 − r > rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub gamma0: f64,
    pub gamma1: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Favourable right/left boundary states; not part of the serialized form.
    #[serde(skip, default = "zero_state")]
    pub w0: BoundaryState3,
    #[serde(skip, default = "zero_state")]
    pub w1: BoundaryState3,
    /// Lower bound on the asymptotic drift of the island size:
    /// `(lhs − rhs)/r`, infinite when `r = 0`.
    pub drift_bound: ExtendedReal,
}

fn zero_state() -> BoundaryState3 {
    BoundaryState3::Zero
}

/// Evaluates the ergodicity condition.
///
/// With `r = 0` every `r⁽ⁱ⁾ₓ` vanishes, the `γ` values are reported as `1`
/// and the condition reads `2 > 0`.
pub fn condition_check(d: &DerivedParams) -> Result<ConditionReport> {
    let (gamma0, gamma1) = if d.r == 0.0 {
        (1.0, 1.0)
    } else {
        (
            gamma_table(d, Side::RightBoundary)?,
            gamma_table(d, Side::LeftBoundary)?,
        )
    };
    let lhs = 2.0 - d.r;
    let rhs = weighted_r(d, Side::RightBoundary, gamma0) + weighted_r(d, Side::LeftBoundary, gamma1);
    let drift_bound = if d.r == 0.0 {
        ExtendedReal::PositiveInfinite
    } else {
        ExtendedReal::Finite((lhs - rhs) / d.r)
    };
    Ok(ConditionReport {
        gamma0,
        gamma1,
        lhs,
        rhs,
        holds: lhs > rhs,
        w0: d.favourable_state(Side::RightBoundary),
        w1: d.favourable_state(Side::LeftBoundary),
        drift_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_quad() -> DerivedParams {
        derive(&ParamQuad::new(0.8, 0.3, 0.5, 0.6).unwrap())
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn probability_bounds() {
        assert!(Probability::new(0.0).is_ok());
        assert!(Probability::new(1.0).is_ok());
        assert!(Probability::new(-1e-9).is_err());
        assert!(Probability::new(1.0 + 1e-9).is_err());
        assert!(Probability::new(f64::NAN).is_err());
    }

    #[test]
    fn derive_sample_quad() {
        let d = sample_quad();
        assert!(close(d.p, 0.3, 1e-15));
        assert!(close(d.q, 0.2, 1e-15));
        assert!(close(d.r, 0.5, 1e-15));
        assert!(close(d.known[0].r[0], 0.5, 1e-15));
        assert!(close(d.known[0].r[1], 0.1, 1e-15));
        assert!(close(d.known[1].r[0], 0.3, 1e-15));
        assert!(close(d.known[1].r[1], 0.3, 1e-15));
    }

    #[test]
    fn derive_constant_quad() {
        for c in [0.0, 0.17, 0.5, 1.0] {
            let d = derive(&ParamQuad::new(c, c, c, c).unwrap());
            assert_eq!(d.p, c);
            assert_eq!(d.q, 1.0 - c);
            assert_eq!(d.r, 0.0);
            assert!(d.known.iter().all(|k| k.r == [0.0, 0.0]));
        }
    }

    #[test]
    fn derive_ca0011() {
        let eps = 0.1;
        let d = derive(&ca_with_error("0011".parse().unwrap(), eps).unwrap());
        assert_eq!(d.known[0].r, [0.0, 0.0]);
        assert!(close(d.r, 1.0 - 2.0 * eps, 1e-15));
        assert!(close(d.known[1].r[0], 1.0 - 2.0 * eps, 1e-15));
        assert!(close(d.known[1].r[1], 1.0 - 2.0 * eps, 1e-15));
    }

    #[test]
    fn ca_with_error_substitution() {
        let q = ca_with_error("0001".parse().unwrap(), 0.1).unwrap();
        assert_eq!(q.to_array(), [0.1, 0.1, 0.1, 0.9]);
        let q = ca_with_error("1000".parse().unwrap(), 0.0).unwrap();
        assert_eq!(q.to_array(), [1.0, 0.0, 0.0, 0.0]);
        let q = ca_with_error("1110".parse().unwrap(), 0.2).unwrap();
        assert_eq!(q.to_array(), [0.8, 0.8, 0.8, 0.2]);
        assert!(matches!(
            ca_with_error("1110".parse().unwrap(), 0.51),
            Err(Error::EpsOutOfRange(..))
        ));
        assert!(ca_with_error("1110".parse().unwrap(), -0.1).is_err());
    }

    #[test]
    fn ca_code_parsing() {
        let c: CaCode = "1000".parse().unwrap();
        assert_eq!(c.bits(), [1, 0, 0, 0]);
        assert_eq!(c.to_string(), "1000");
        assert_eq!(c.flip().to_string(), "1110");
        assert!("100".parse::<CaCode>().is_err());
        assert!("1020".parse::<CaCode>().is_err());
        assert_eq!(CaCode::all().count(), 16);
    }

    #[test]
    fn flip_conjugate_ca1000() {
        let q = ParamQuad::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(q.flip_conjugate().to_array(), [1.0, 1.0, 1.0, 0.0]);
        let q = ParamQuad::new(0.8, 0.3, 0.5, 0.6).unwrap();
        let back = q.flip_conjugate().flip_conjugate().to_array();
        for (a, b) in back.iter().zip(q.to_array()) {
            assert!((a - b).abs() <= 1e-15);
        }
        // fixed point: p_xy = 1 − p_x̄ȳ
        let fixed = ParamQuad::new(0.25, 0.5, 0.5, 0.75).unwrap();
        assert_eq!(fixed.flip_conjugate(), fixed);
    }

    #[test]
    fn flip_conjugate_dynamics_agree_on_all_words() {
        // Brute force: the flipped rule applied to flipped parents gives the
        // flipped child, for every length-3 parent word and both outputs.
        let q = ParamQuad::new(0.9, 0.2, 0.35, 0.05).unwrap();
        let f = q.flip_conjugate();
        for word in 0..8u8 {
            let cells = [word >> 2 & 1, word >> 1 & 1, word & 1];
            for i in 0..2 {
                let (a, b) = (cells[i], cells[i + 1]);
                let p_one = q.get(a, b);
                let p_one_flipped = f.get(1 - a, 1 - b);
                assert!(close(1.0 - p_one, p_one_flipped, 1e-15));
            }
        }
    }

    #[test]
    fn chain_sample_quad_row_zero() {
        let c = boundary_chain(&sample_quad(), Side::RightBoundary);
        let row = c.row(BoundaryState3::Zero);
        assert!(close(row[0], 0.30, 1e-12));
        assert!(close(row[1], 0.55, 1e-12));
        assert!(close(row[2], 0.15, 1e-12));
        assert!(c.max_row_defect() < tol::IDENTITY);
    }

    #[test]
    fn chain_without_r_has_no_star_column() {
        // r⁽ⁱ⁾ₓ = 0 for every x and both sides: constant rows 0011-style
        let d = derive(&ParamQuad::new(0.3, 0.3, 0.3, 0.3).unwrap());
        for side in Side::BOTH {
            let c = boundary_chain(&d, side);
            assert_eq!(c.rows[0][2], 0.0);
            assert_eq!(c.rows[1][2], 0.0);
        }
    }

    #[test]
    fn stationary_absorbing_star() {
        let c = BoundaryChain {
            side: Side::RightBoundary,
            rows: [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
        };
        let nu = stationary_solve(&c).unwrap();
        assert!(close(nu.get(BoundaryState3::Star), 1.0, 1e-12));
    }

    #[test]
    fn stationary_rank_one() {
        let row = [0.2, 0.5, 0.3];
        let c = BoundaryChain {
            side: Side::RightBoundary,
            rows: [row; 3],
        };
        let nu = stationary_solve(&c).unwrap();
        for k in 0..3 {
            assert!(close(nu.mass[k], row[k], 1e-12));
        }
    }

    #[test]
    fn stationary_reducible_chain_starts_from_star() {
        // Zero and One absorbing, Star splits 0.25 / 0.75.
        let c = BoundaryChain {
            side: Side::RightBoundary,
            rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.25, 0.75, 0.0]],
        };
        let nu = stationary_solve(&c).unwrap();
        assert!(close(nu.mass[0], 0.25, 1e-12));
        assert!(close(nu.mass[1], 0.75, 1e-12));
    }

    #[test]
    fn stationary_periodic_chain_does_not_converge() {
        let c = BoundaryChain {
            side: Side::RightBoundary,
            rows: [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
        };
        // direct solve succeeds: the chain is irreducible on {0, 1}
        let nu = stationary_solve(&c).unwrap();
        assert!(close(nu.mass[0], 0.5, 1e-12));
        assert!(matches!(
            stationary_power(&c),
            Err(Error::NonConvergence(_))
        ));
    }

    #[test]
    fn stationary_sample_quad_direct_vs_power() {
        for side in Side::BOTH {
            let c = boundary_chain(&sample_quad(), side);
            let a = stationary_solve(&c).unwrap();
            let b = stationary_power(&c).unwrap();
            for k in 0..3 {
                assert!(close(a.mass[k], b.mass[k], tol::LINEAR_SOLVE));
            }
            let image = c.apply(&a.mass);
            for k in 0..3 {
                assert!(close(image[k], a.mass[k], tol::LINEAR_SOLVE));
            }
        }
    }

    #[test]
    fn gamma_ca0001_is_half() {
        for eps in [0.01, 0.1, 0.3, 0.5] {
            let d = derive(&ca_with_error("0001".parse().unwrap(), eps).unwrap());
            for side in Side::BOTH {
                assert!(close(gamma_table(&d, side).unwrap(), 0.5, 1e-12));
            }
        }
    }

    #[test]
    fn gamma_ca0010() {
        for eps in [0.01, 0.1, 0.3, 0.5] {
            let d = derive(&ca_with_error("0010".parse().unwrap(), eps).unwrap());
            let g0 = gamma_table(&d, Side::RightBoundary).unwrap();
            let g1 = gamma_table(&d, Side::LeftBoundary).unwrap();
            assert!(close(g0, 1.0 - 2.0 * eps * (1.0 - eps), 1e-12), "{eps}: {g0}");
            assert!(close(g1, 2.0 * eps * (1.0 - eps), 1e-12), "{eps}: {g1}");
        }
    }

    #[test]
    fn gamma_matches_stationary_sample_quad() {
        let d = sample_quad();
        for side in Side::BOTH {
            let g = gamma_table(&d, side).unwrap();
            let nu = stationary_solve(&boundary_chain(&d, side)).unwrap();
            assert!(close(g, nu.get(d.favourable_state(side)), tol::LINEAR_SOLVE));
        }
    }

    #[test]
    fn gamma_degenerate_denominator_reported() {
        // Q₀ = 1, Q₁ = 0 on the right with r⁽⁰⁾₀ ≤ r⁽⁰⁾₁: CA 0011 without errors.
        let d = derive(&ParamQuad::new(0.0, 0.0, 1.0, 1.0).unwrap());
        let err = gamma_table(&d, Side::RightBoundary).unwrap_err();
        assert!(matches!(err, Error::DegenerateDenominator { .. }), "{err}");
        assert!(condition_check(&d).is_err());
    }

    #[test]
    fn mean_increment_sample_quad() {
        let d = sample_quad();
        let m0 = mean_increment(&d, Side::RightBoundary, BoundaryState3::Zero).unwrap();
        let m1 = mean_increment(&d, Side::RightBoundary, BoundaryState3::One).unwrap();
        let ms = mean_increment(&d, Side::RightBoundary, BoundaryState3::Star).unwrap();
        assert!(close(m0, 0.0, 1e-12));
        assert!(close(m1, 0.8, 1e-12));
        assert_eq!(ms, m0.min(m1));
        let l0 = mean_increment(&d, Side::LeftBoundary, BoundaryState3::Zero).unwrap();
        assert!(close(l0, -(1.0 - 0.3) / 0.5, 1e-12));
        let zero = derive(&ParamQuad::new(0.4, 0.4, 0.4, 0.4).unwrap());
        assert!(mean_increment(&zero, Side::RightBoundary, BoundaryState3::Zero).is_err());
    }

    #[test]
    fn bound_ca0001() {
        let d = derive(&ca_with_error("0001".parse().unwrap(), 0.1).unwrap());
        let b = asymptotic_increment_bound(&d, Side::RightBoundary).unwrap();
        assert!(close(b, -0.25, 1e-12), "{b}");
    }

    #[test]
    fn bound_independent_of_gamma_when_r_equal() {
        // r⁽⁰⁾₀ = r⁽⁰⁾₁ = 0.2: p00−p01 = ±0.2, p10−p11 = ±0.2
        let d = derive(&ParamQuad::new(0.7, 0.5, 0.3, 0.1).unwrap());
        let rho = d.known[0].r[0];
        assert!(close(rho, d.known[0].r[1], 1e-15));
        let b = asymptotic_increment_bound(&d, Side::RightBoundary).unwrap();
        assert!(close(b, -1.0 + (1.0 - rho) / d.r, 1e-12));
    }

    #[test]
    fn condition_examples() {
        let d = derive(&ca_with_error("0011".parse().unwrap(), 0.1).unwrap());
        let rep = condition_check(&d).unwrap();
        assert!(rep.holds);
        assert!(close(rep.lhs, 1.2, 1e-12) && close(rep.rhs, 0.8, 1e-12));

        let d = derive(&ParamQuad::new(0.6, 0.6, 0.6, 0.6).unwrap());
        let rep = condition_check(&d).unwrap();
        assert!(rep.holds);
        assert_eq!((rep.lhs, rep.rhs), (2.0, 0.0));
        assert_eq!((rep.gamma0, rep.gamma1), (1.0, 1.0));
        assert!(rep.drift_bound.is_infinite());

        let d = derive(&ca_with_error("1000".parse().unwrap(), 0.01).unwrap());
        assert!(!condition_check(&d).unwrap().holds);
    }

    #[test]
    fn drift_bound_is_difference_of_side_bounds() {
        let d = sample_quad();
        let rep = condition_check(&d).unwrap();
        let right = asymptotic_increment_bound(&d, Side::RightBoundary).unwrap();
        let left = asymptotic_increment_bound(&d, Side::LeftBoundary).unwrap();
        assert!(close(rep.drift_bound.finite().unwrap(), right - left, 1e-12));
    }

    #[test]
    fn report_json_field_names() {
        let rep = condition_check(&derive(&ParamQuad::new(0.5, 0.5, 0.5, 0.5).unwrap())).unwrap();
        let v: serde_json::Value = serde_json::to_value(rep).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["drift_bound", "gamma0", "gamma1", "holds", "lhs", "rhs"]);
        assert_eq!(v["drift_bound"], "inf");
        let back: ConditionReport = serde_json::from_value(v).unwrap();
        assert!(back.drift_bound.is_infinite());
    }
}
