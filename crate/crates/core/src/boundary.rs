//! Island boundaries as random walks.
//!
//! A decorrelated island occupies cells `i..=j` of the envelope PCA. While
//! `j − i ≥ 3` its two boundaries move independently; each step of a
//! boundary is drawn from an [`IncrementLaw`] that depends on the state of
//! the outermost island cell.
//!
//! Right boundary from state `y ∈ {0, 1}` (all quantities with the left
//! parent known, `r⁽⁰⁾`):
//!
//! | delta   | new state | probability                     |
//! |---------|-----------|---------------------------------|
//! | −1      | `*`       | `r⁽¹⁾_y r⁽⁰⁾_y`                  |
//! | −1      | 0 / 1     | `q⁽¹⁾_y r⁽⁰⁾_y` / `p⁽¹⁾_y r⁽⁰⁾_y` |
//! | 0       | 0 / 1     | `q⁽⁰⁾_y r` / `p⁽⁰⁾_y r`           |
//! | k+1     | 0 / 1     | `(1 − r⁽⁰⁾_y)(1 − r)ᵏ q r` / `… p r` |
//!
//! The left boundary is the mirror image with the roles of the parents
//! exchanged. Because a cell reads itself and its *right* neighbour, the
//! mirror is taken about a half-cell shift: a right displacement `δ`
//! corresponds to a left displacement `−δ − 1`. The left boundary therefore
//! never moves right, and its mean from `x` is `−(1 − r⁽¹⁾ₓ)/r`.
//!
//! The boundary state `*` (value forgotten) only has a bounded mean. It is
//! given the law of the concrete state with the larger `r⁽ⁱ⁾`, i.e. the
//! one with the least favourable mean.
//!
//! Island creation: cells are decorrelated with probability `p + q` each;
//! conditioned on that, a cell is `0` with probability `q/(p+q)`. This is
//! an assumption about the creation-time boundary states.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{boundary_chain, BoundaryChain, BoundaryState3, DerivedParams, Side};
use crate::rng;
use crate::stats::{BatchAccumulator, BATCHES};

/// A single atom of an increment law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub delta: i64,
    pub to: BoundaryState3,
    pub prob: f64,
}

/// Geometric tail: `P(delta = start + k·step, state s) = ratioᵏ · weight[s]`
/// for `k ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricTail {
    pub start_delta: i64,
    /// `+1` on the right boundary, `−1` on the left one.
    pub step: i64,
    pub ratio: f64,
    pub weight: [f64; 3],
}

impl GeometricTail {
    pub fn mass(&self) -> f64 {
        self.weight.iter().sum::<f64>() / (1.0 - self.ratio)
    }

    pub fn expectation(&self) -> f64 {
        let w: f64 = self.weight.iter().sum();
        let one = 1.0 - self.ratio;
        w * (self.start_delta as f64 / one + self.step as f64 * self.ratio / (one * one))
    }
}

/// Distribution of one boundary step: `(position increment, new state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementLaw {
    pub side: Side,
    pub from: BoundaryState3,
    pub head: Vec<Atom>,
    pub tail: GeometricTail,
}

impl IncrementLaw {
    pub fn total_mass(&self) -> f64 {
        self.head.iter().map(|a| a.prob).sum::<f64>() + self.tail.mass()
    }

    /// Closed-form expectation of the position increment.
    pub fn expectation(&self) -> f64 {
        self.head.iter().map(|a| a.delta as f64 * a.prob).sum::<f64>() + self.tail.expectation()
    }

    /// Probability of each new state, summed over increments.
    pub fn state_marginal(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for a in &self.head {
            m[a.to.index()] += a.prob;
        }
        for (k, w) in self.tail.weight.iter().enumerate() {
            m[k] += w / (1.0 - self.tail.ratio);
        }
        m
    }

    /// Exact draw: head atoms by cumulative lookup, tail index by geometric
    /// inverse transform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (i64, BoundaryState3) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for a in &self.head {
            acc += a.prob;
            if u < acc {
                return (a.delta, a.to);
            }
        }
        // Tail: state with probability ∝ weight, k ~ Geometric(1 − ratio).
        let w = &self.tail.weight;
        let wsum: f64 = w.iter().sum();
        if wsum <= 0.0 {
            // Only reachable through rounding at the top of the head.
            let last = self.head.last().expect("law with empty head and tail");
            return (last.delta, last.to);
        }
        let v = rng.random::<f64>() * wsum;
        let to = if v < w[0] {
            BoundaryState3::Zero
        } else if v < w[0] + w[1] || w[2] == 0.0 {
            BoundaryState3::One
        } else {
            BoundaryState3::Star
        };
        let k = geometric_index(self.tail.ratio, rng);
        (self.tail.start_delta + self.tail.step * k, to)
    }
}

/// `k ≥ 0` with `P(k) = (1 − ratio)·ratioᵏ`.
fn geometric_index<R: Rng + ?Sized>(ratio: f64, rng: &mut R) -> i64 {
    if ratio <= 0.0 {
        return 0;
    }
    // 1 − U ∈ (0, 1]
    let u = 1.0 - rng.random::<f64>();
    (u.ln() / ratio.ln()).floor() as i64
}

/// The concrete state whose law stands in for `Star`: larger `r⁽ⁱ⁾`, `One`
/// on ties.
pub fn star_substitute(d: &DerivedParams, side: Side) -> BoundaryState3 {
    let r = d.known[side.index()].r;
    if r[0] > r[1] {
        BoundaryState3::Zero
    } else {
        BoundaryState3::One
    }
}

/// Exact one-step law of a boundary in state `y`.
pub fn increment_law(d: &DerivedParams, side: Side, y: BoundaryState3) -> Result<IncrementLaw> {
    if d.r == 0.0 {
        return Err(Error::ZeroR("increment law"));
    }
    let x = match y.bit() {
        Some(b) => b as usize,
        None => {
            let mut law = increment_law(d, side, star_substitute(d, side))?;
            law.from = BoundaryState3::Star;
            return Ok(law);
        }
    };
    let own = &d.known[side.index()];
    let other = &d.known[side.other().index()];
    let r = d.r;
    let stay = own.r[x];
    // Right-boundary displacements; the left boundary maps δ to −δ − 1.
    let map = |delta: i64| match side {
        Side::RightBoundary => delta,
        Side::LeftBoundary => -delta - 1,
    };
    let head = vec![
        Atom { delta: map(-1), to: BoundaryState3::Star, prob: other.r[x] * stay },
        Atom { delta: map(-1), to: BoundaryState3::Zero, prob: other.q[x] * stay },
        Atom { delta: map(-1), to: BoundaryState3::One, prob: other.p[x] * stay },
        Atom { delta: map(0), to: BoundaryState3::Zero, prob: own.q[x] * r },
        Atom { delta: map(0), to: BoundaryState3::One, prob: own.p[x] * r },
    ];
    let tail = GeometricTail {
        start_delta: map(1),
        step: match side {
            Side::RightBoundary => 1,
            Side::LeftBoundary => -1,
        },
        ratio: 1.0 - r,
        weight: [(1.0 - stay) * d.q * r, (1.0 - stay) * d.p * r, 0.0],
    };
    Ok(IncrementLaw {
        side,
        from: y,
        head,
        tail,
    })
}

/// Laws of one side for the three boundary states.
#[derive(Debug, Clone)]
pub struct SideLaws {
    pub side: Side,
    laws: [IncrementLaw; 3],
}

impl SideLaws {
    pub fn new(d: &DerivedParams, side: Side) -> Result<Self> {
        Ok(SideLaws {
            side,
            laws: [
                increment_law(d, side, BoundaryState3::Zero)?,
                increment_law(d, side, BoundaryState3::One)?,
                increment_law(d, side, BoundaryState3::Star)?,
            ],
        })
    }

    pub fn get(&self, y: BoundaryState3) -> &IncrementLaw {
        &self.laws[y.index()]
    }

    /// State chain actually followed by the simulated boundary (the star row
    /// is the substitute's row, not the chain's coupling row).
    pub fn simulated_chain(&self) -> BoundaryChain {
        BoundaryChain {
            side: self.side,
            rows: [
                self.laws[0].state_marginal(),
                self.laws[1].state_marginal(),
                self.laws[2].state_marginal(),
            ],
        }
    }
}

/// Snapshot of an island.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IslandState {
    pub i: i64,
    pub j: i64,
    pub x: BoundaryState3,
    pub y: BoundaryState3,
    pub alive: bool,
}

/// Smallest gap `j − i` at which the two boundaries evolve independently.
pub const INDEPENDENCE_GAP: i64 = 3;

impl IslandState {
    pub fn new(i: i64, j: i64, x: BoundaryState3, y: BoundaryState3) -> Self {
        IslandState {
            i,
            j,
            x,
            y,
            alive: j - i >= INDEPENDENCE_GAP,
        }
    }

    pub fn gap(&self) -> i64 {
        self.j - self.i
    }

    /// Applies one step to both boundaries.
    pub fn advance(&mut self, left: (i64, BoundaryState3), right: (i64, BoundaryState3)) {
        self.i += left.0;
        self.x = left.1;
        self.j += right.0;
        self.y = right.1;
        self.alive = self.gap() >= INDEPENDENCE_GAP;
    }
}

/// Pre-built laws of both sides plus the creation law.
#[derive(Debug, Clone)]
pub struct IslandWalker {
    left: SideLaws,
    right: SideLaws,
    zero_given_known: f64,
}

impl IslandWalker {
    pub fn new(d: &DerivedParams) -> Result<Self> {
        if d.p + d.q <= 0.0 {
            return Err(Error::DegenerateCreation);
        }
        Ok(IslandWalker {
            left: SideLaws::new(d, Side::LeftBoundary)?,
            right: SideLaws::new(d, Side::RightBoundary)?,
            zero_given_known: d.q / (d.p + d.q),
        })
    }

    /// A fresh island on `0..=n0` with creation-law boundary states.
    pub fn spawn<R: Rng + ?Sized>(&self, n0: i64, rng: &mut R) -> IslandState {
        let mut draw = || {
            if rng.random::<f64>() < self.zero_given_known {
                BoundaryState3::Zero
            } else {
                BoundaryState3::One
            }
        };
        let x = draw();
        let y = draw();
        IslandState::new(0, n0, x, y)
    }

    pub fn step<R: Rng + ?Sized>(&self, s: &mut IslandState, rng: &mut R) {
        let left = self.left.get(s.x).sample(rng);
        let right = self.right.get(s.y).sample(rng);
        s.advance(left, right);
    }
}

/// Simulates one island from gap `n0` until death (`j − i < 3`) or
/// `horizon` steps. The trajectory includes the initial state.
pub fn simulate_island(
    d: &DerivedParams,
    n0: u64,
    horizon: u64,
    seed: u64,
) -> Result<Vec<IslandState>> {
    if n0 < INDEPENDENCE_GAP as u64 {
        return Err(Error::Invalid(format!("initial gap {n0} < 3")));
    }
    let walker = IslandWalker::new(d)?;
    let mut rng = rng::stream(seed, 0);
    let mut s = walker.spawn(n0 as i64, &mut rng);
    let mut traj = vec![s];
    for _ in 0..horizon {
        if !s.alive {
            break;
        }
        walker.step(&mut s, &mut rng);
        traj.push(s);
    }
    Ok(traj)
}

/// Fraction of `runs` seeded islands still alive after `horizon` steps.
pub fn survival_fraction(d: &DerivedParams, n0: u64, horizon: u64, runs: u64, seed: u64) -> Result<f64> {
    let walker = IslandWalker::new(d)?;
    let alive = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = rng::stream(seed, run);
            let mut s = walker.spawn(n0 as i64, &mut rng);
            for _ in 0..horizon {
                if !s.alive {
                    break;
                }
                walker.step(&mut s, &mut rng);
            }
            s.alive as u64
        })
        .sum::<u64>();
    Ok(alive as f64 / runs as f64)
}

/// Writes a trajectory as CSV with columns `t,i,j,x,y,alive`.
pub fn write_trajectory_csv<W: Write>(traj: &[IslandState], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::Parse {
        what: "trajectory csv",
        detail: e.to_string(),
    };
    w.write_record(["t", "i", "j", "x", "y", "alive"]).map_err(wrap)?;
    for (t, s) in traj.iter().enumerate() {
        w.write_record([
            t.to_string(),
            s.i.to_string(),
            s.j.to_string(),
            s.x.symbol().to_string(),
            s.y.symbol().to_string(),
            (s.alive as u8).to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io("<trajectory>", e))
}

pub fn save_trajectory_csv(traj: &[IslandState], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trajectory_csv(traj, f).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Mean and batch-means standard error of the stationary increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub steps: u64,
    pub seed: u64,
}

/// Runs the `(state, increment)` chain of one boundary, started from
/// `Star`, for `burn_in + steps` steps and estimates the mean increment
/// after burn-in.
pub fn empirical_drift(
    d: &DerivedParams,
    side: Side,
    steps: u64,
    burn_in: u64,
    seed: u64,
) -> Result<DriftEstimate> {
    if steps < BATCHES as u64 {
        return Err(Error::Invalid(format!(
            "need at least {BATCHES} post-burn-in steps, got {steps}"
        )));
    }
    let laws = SideLaws::new(d, side)?;
    let mut rng = rng::stream(seed, side.index() as u64);
    let mut y = BoundaryState3::Star;
    for _ in 0..burn_in {
        y = laws.get(y).sample(&mut rng).1;
    }
    let mut acc = BatchAccumulator::new(steps, BATCHES);
    for _ in 0..steps {
        let (delta, next) = laws.get(y).sample(&mut rng);
        acc.push(delta as f64);
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

/// Marginal-consistency defect: largest gap between the state marginals of
/// the concrete-state laws and the rows of the boundary chain.
pub fn chain_consistency_defect(d: &DerivedParams, side: Side) -> Result<f64> {
    let chain = boundary_chain(d, side);
    let mut worst = 0.0f64;
    for y in [BoundaryState3::Zero, BoundaryState3::One] {
        let m = increment_law(d, side, y)?.state_marginal();
        for (a, b) in m.iter().zip(chain.row(y)) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}
