//! Size-2 boundary refinement for CA 1000 with error `ε ∈ (0, 1/2)`.
//!
//! Without errors the boundary of a CA 1000 island alternates between two
//! consecutive zeros and a single one, so the one-cell boundary walk of
//! [`crate::boundary`] oscillates with period two. Tracking the two
//! outermost cells and a half-integer *effective* position removes the
//! oscillation:
//!
//! * right boundary state `y = (inner, outer) = (X_{j−1}, X_j)`;
//! * effective position `j̃ = j + offset(y)` with offset `0`, `−1/2` or `−1`
//!   (see [`tilde_offset`]).
//!
//! From `y ∈ S1 = {01, 11, *1, 10}` the step law has 12 scenarios, from
//! `y = 00` it has 14; both end in four geometric families with ratio `2ε`.
//! The state `*0` is given the `00` law (the smaller mean on `(0, 1/2)`).
//! The left boundary is the mirror image, with the half-cell shift of the
//! two-cell neighbourhood: a right increment `δ` maps to `−δ − 1`.
//!
//! CA 1110 is the bit-flip conjugate of CA 1000 and has the same drift.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::DriftEstimate;
use crate::error::{Error, Result};
use crate::params::{BoundaryState3, Side};
use crate::rng;
use crate::stats::{BatchAccumulator, BATCHES};

/// Exact half-integer, stored doubled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct HalfInt {
    pub doubled: i64,
}

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt { doubled: 0 };

    pub const fn from_doubled(doubled: i64) -> Self {
        HalfInt { doubled }
    }

    pub const fn from_int(v: i64) -> Self {
        HalfInt { doubled: 2 * v }
    }

    pub fn to_f64(self) -> f64 {
        self.doubled as f64 / 2.0
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, o: HalfInt) -> HalfInt {
        HalfInt::from_doubled(self.doubled + o.doubled)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, o: HalfInt) -> HalfInt {
        HalfInt::from_doubled(self.doubled - o.doubled)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt::from_doubled(-self.doubled)
    }
}

impl std::ops::AddAssign for HalfInt {
    fn add_assign(&mut self, o: HalfInt) {
        self.doubled += o.doubled;
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.doubled % 2 == 0 {
            write!(f, "{}", self.doubled / 2)
        } else {
            write!(f, "{}/2", self.doubled)
        }
    }
}

/// The two outermost island cells, ordered outward: `(inner, outer)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairState(pub BoundaryState3, pub BoundaryState3);

/// Classification of pair states by the law they follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairClass {
    /// `{01, 11, *1, 10}`.
    S1,
    /// `00`.
    D00,
    /// `*0`.
    DStar,
    /// Anything else; unreachable from concrete starts.
    Other,
}

impl PairState {
    pub fn all() -> impl Iterator<Item = PairState> {
        BoundaryState3::ALL
            .into_iter()
            .flat_map(|a| BoundaryState3::ALL.into_iter().map(move |b| PairState(a, b)))
    }

    pub fn class(self) -> PairClass {
        use BoundaryState3::*;
        match (self.0, self.1) {
            (Zero, One) | (One, One) | (Star, One) | (One, Zero) => PairClass::S1,
            (Zero, Zero) => PairClass::D00,
            (Star, Zero) => PairClass::DStar,
            _ => PairClass::Other,
        }
    }

    pub fn parse(s: &str) -> Option<PairState> {
        let mut c = s.chars();
        let a = BoundaryState3::from_symbol(c.next()?)?;
        let b = BoundaryState3::from_symbol(c.next()?)?;
        c.next().is_none().then_some(PairState(a, b))
    }
}

impl fmt::Display for PairState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0.symbol(), self.1.symbol())
    }
}

/// Offset of the effective position from the outermost cell.
///
/// Right side: `0` for `{01, 11, *1}`, `−1/2` for `00`, `−1` otherwise. The
/// left side is the mirror image with the opposite sign.
pub fn tilde_offset(p: PairState, side: Side) -> HalfInt {
    use BoundaryState3::*;
    let right = match (p.0, p.1) {
        (Zero, One) | (One, One) | (Star, One) => 0,
        (Zero, Zero) => -1,
        _ => -2,
    };
    match side {
        Side::RightBoundary => HalfInt::from_doubled(right),
        Side::LeftBoundary => HalfInt::from_doubled(-right),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedAtom {
    pub delta: HalfInt,
    pub to: PairState,
    pub prob: f64,
}

/// Geometric family `P(delta = start + k·step, to) = ratioᵏ · weight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedFamily {
    pub start: HalfInt,
    pub to: PairState,
    pub weight: f64,
}

/// Step law of the effective position and pair state.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedLaw {
    pub side: Side,
    pub head: Vec<RefinedAtom>,
    pub families: Vec<RefinedFamily>,
    pub ratio: f64,
    /// `+1` on the right, `−1` on the left.
    pub step: HalfInt,
}

impl RefinedLaw {
    pub fn total_mass(&self) -> f64 {
        self.head.iter().map(|a| a.prob).sum::<f64>()
            + self.families.iter().map(|f| f.weight).sum::<f64>() / (1.0 - self.ratio)
    }

    /// Closed-form expectation of the increment.
    pub fn expectation(&self) -> f64 {
        let one = 1.0 - self.ratio;
        self.head.iter().map(|a| a.delta.to_f64() * a.prob).sum::<f64>()
            + self
                .families
                .iter()
                .map(|f| {
                    f.weight * (f.start.to_f64() / one + self.step.to_f64() * self.ratio / (one * one))
                })
                .sum::<f64>()
    }

    /// Mirror image for the other boundary: `δ ↦ −δ − 1`.
    pub fn mirrored(&self) -> RefinedLaw {
        let map = |d: HalfInt| HalfInt::from_doubled(-d.doubled - 2);
        RefinedLaw {
            side: self.side.other(),
            head: self
                .head
                .iter()
                .map(|a| RefinedAtom { delta: map(a.delta), ..*a })
                .collect(),
            families: self
                .families
                .iter()
                .map(|f| RefinedFamily { start: map(f.start), ..*f })
                .collect(),
            ratio: self.ratio,
            step: -self.step,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (HalfInt, PairState) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for a in &self.head {
            acc += a.prob;
            if u < acc {
                return (a.delta, a.to);
            }
        }
        // All families share the ratio: pick one by weight, then k.
        let total: f64 = self.families.iter().map(|f| f.weight).sum();
        let mut v = rng.random::<f64>() * total;
        let mut family = self.families.last().expect("law has geometric families");
        for f in &self.families {
            if v < f.weight {
                family = f;
                break;
            }
            v -= f.weight;
        }
        let w = 1.0 - rng.random::<f64>();
        let k = if self.ratio > 0.0 {
            (w.ln() / self.ratio.ln()).floor() as i64
        } else {
            0
        };
        (
            family.start + HalfInt::from_doubled(self.step.doubled * k),
            family.to,
        )
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(Error::EpsOutOfRange(eps, "(0, 1/2)"))
    }
}

fn pair(a: char, b: char) -> PairState {
    PairState(
        BoundaryState3::from_symbol(a).unwrap(),
        BoundaryState3::from_symbol(b).unwrap(),
    )
}

fn build(head: &[(i64, (char, char), f64)], families: &[(i64, (char, char))], eps: f64) -> RefinedLaw {
    let g = eps * eps * (1.0 - 2.0 * eps);
    RefinedLaw {
        side: Side::RightBoundary,
        head: head
            .iter()
            .map(|&(d, (a, b), prob)| RefinedAtom {
                delta: HalfInt::from_doubled(d),
                to: pair(a, b),
                prob,
            })
            .collect(),
        families: families
            .iter()
            .map(|&(d, (a, b))| RefinedFamily {
                start: HalfInt::from_doubled(d),
                to: pair(a, b),
                weight: g,
            })
            .collect(),
        ratio: 2.0 * eps,
        step: HalfInt::from_int(1),
    }
}

/// Right-boundary law from a state in `S1`. Deltas below are doubled.
pub fn refined_law_s1(eps: f64) -> Result<RefinedLaw> {
    check_eps(eps)?;
    let e = eps;
    let f = 1.0 - eps;
    let g = 1.0 - 2.0 * eps;
    Ok(build(
        &[
            (-2, ('1', '0'), e * f * g),
            (-1, ('0', '0'), f * f * g),
            (0, ('0', '1'), f * e * g),
            (0, ('1', '1'), e * e * g),
            (0, ('1', '0'), e * e * g),
            (1, ('0', '0'), f * e * g),
            (2, ('0', '1'), f * e * g),
            (2, ('1', '1'), e * e * g),
        ],
        &[(2, ('1', '0')), (3, ('0', '0')), (4, ('0', '1')), (4, ('1', '1'))],
        eps,
    ))
}

/// Right-boundary law from `00`. Deltas below are doubled.
pub fn refined_law_00(eps: f64) -> Result<RefinedLaw> {
    check_eps(eps)?;
    let e = eps;
    let f = 1.0 - eps;
    let g = 1.0 - 2.0 * eps;
    Ok(build(
        &[
            (-3, ('*', '0'), g * e * g),
            (-3, ('1', '0'), e * e * g),
            (-2, ('0', '0'), e * e * g),
            (-1, ('*', '1'), g * f * g),
            (-1, ('0', '1'), e * f * g),
            (-1, ('1', '1'), e * f * g),
            (-1, ('1', '0'), f * e * g),
            (0, ('0', '0'), e * e * g),
            (1, ('0', '1'), e * e * g),
            (1, ('1', '1'), f * e * g),
        ],
        &[(1, ('1', '0')), (2, ('0', '0')), (3, ('0', '1')), (3, ('1', '1'))],
        eps,
    ))
}

/// `−1/2 + 5ε/2 + 7ε²/2 + 8ε³/(1 − 2ε)`.
pub fn mean_s1(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let e = eps;
    Ok(-0.5 + 2.5 * e + 3.5 * e * e + 8.0 * e.powi(3) / (1.0 - 2.0 * e))
}

/// `−1/2 + 15ε²/2 + 6ε³ + 16ε⁴/(1 − 2ε)`.
pub fn mean_00(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let e = eps;
    Ok(-0.5 + 7.5 * e * e + 6.0 * e.powi(3) + 16.0 * e.powi(4) / (1.0 - 2.0 * e))
}

/// Lower bound `15ε² + 12ε³ + 32ε⁴/(1 − 2ε)` on the drift of `j̃ − ĩ`.
pub fn refined_drift_bound(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let e = eps;
    let bound = 15.0 * e * e + 12.0 * e.powi(3) + 32.0 * e.powi(4) / (1.0 - 2.0 * e);
    debug_assert!((bound - 2.0 * (mean_00(eps)? + 0.5)).abs() <= 1e-12);
    Ok(bound)
}

/// Drift bound for CA 1110: the flip conjugate of CA 1000 has the same
/// island sizes, hence the same bound.
pub fn drift_for_1110(eps: f64) -> Result<f64> {
    refined_drift_bound(eps)
}

/// Laws of one side, dispatched by pair class.
#[derive(Debug, Clone)]
pub struct RefinedWalker {
    s1: RefinedLaw,
    d00: RefinedLaw,
}

impl RefinedWalker {
    pub fn new(eps: f64, side: Side) -> Result<Self> {
        let (s1, d00) = (refined_law_s1(eps)?, refined_law_00(eps)?);
        Ok(match side {
            Side::RightBoundary => RefinedWalker { s1, d00 },
            Side::LeftBoundary => RefinedWalker {
                s1: s1.mirrored(),
                d00: d00.mirrored(),
            },
        })
    }

    pub fn law(&self, y: PairState) -> Result<&RefinedLaw> {
        match y.class() {
            PairClass::S1 => Ok(&self.s1),
            PairClass::D00 | PairClass::DStar => Ok(&self.d00),
            PairClass::Other => Err(Error::UnreachablePairState(y.to_string())),
        }
    }

    pub fn step<R: Rng + ?Sized>(&self, y: PairState, rng: &mut R) -> Result<(HalfInt, PairState)> {
        Ok(self.law(y)?.sample(rng))
    }
}

/// Initial pair state of a refined simulation (the class with the worst mean).
pub const REFINED_START: PairState = PairState(BoundaryState3::Zero, BoundaryState3::Zero);

/// Simulates the right effective position for `burn_in + steps` steps from
/// `00` and estimates the stationary mean increment.
pub fn simulate_refined(eps: f64, steps: u64, burn_in: u64, seed: u64) -> Result<DriftEstimate> {
    if steps < BATCHES as u64 {
        return Err(Error::Invalid(format!(
            "need at least {BATCHES} post-burn-in steps, got {steps}"
        )));
    }
    let walker = RefinedWalker::new(eps, Side::RightBoundary)?;
    let mut rng = rng::stream(seed, 0);
    let mut y = REFINED_START;
    for _ in 0..burn_in {
        y = walker.step(y, &mut rng)?.1;
    }
    let mut acc = BatchAccumulator::new(steps, BATCHES);
    for _ in 0..steps {
        let (delta, next) = walker.step(y, &mut rng)?;
        acc.push(delta.to_f64());
        y = next;
    }
    let (mean, stderr) = acc.finish();
    Ok(DriftEstimate {
        mean,
        stderr,
        steps,
        seed,
    })
}

/// One row of the refined sweep export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedRow {
    pub eps: f64,
    pub mean_s1: f64,
    pub mean_00: f64,
    pub drift_bound: f64,
    pub empirical_drift: f64,
    pub stderr: f64,
}

pub fn refined_row(eps: f64, steps: u64, burn_in: u64, seed: u64) -> Result<RefinedRow> {
    let est = simulate_refined(eps, steps, burn_in, seed)?;
    Ok(RefinedRow {
        eps,
        mean_s1: mean_s1(eps)?,
        mean_00: mean_00(eps)?,
        drift_bound: refined_drift_bound(eps)?,
        empirical_drift: est.mean,
        stderr: est.stderr,
    })
}
