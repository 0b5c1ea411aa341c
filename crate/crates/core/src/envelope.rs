//! Envelope PCA on a finite ring, coupled with two copies of the real PCA.
//!
//! Every cell of every step consumes one uniform `u` from the counter-based
//! stream [`rng::cell_uniform`]`(seed, step, cell)`. All processes driven by
//! the same stream are coupled by thresholds: for a parent context with
//! envelope thresholds `(lo, hi)` the child is `1` iff `u < lo`, `0` iff
//! `u ≥ hi` and `?` otherwise; a real cell with parents `(a, b)` is `1` iff
//! `u < p_ab`. Since `lo ≤ p_ab ≤ hi` for every pair compatible with the
//! known parents, any cell the envelope knows is known correctly.
//!
//! The ring stands in for `ℤ`. Islands that meet on the ring simply merge;
//! no island bookkeeping happens here.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::{DerivedParams, ParamQuad};
use crate::rng;

/// A cell of the envelope alphabet `{0, 1, ?}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Zero,
    One,
    Q,
}

impl CellState {
    #[inline]
    pub fn bit(self) -> Option<u8> {
        match self {
            CellState::Zero => Some(0),
            CellState::One => Some(1),
            CellState::Q => None,
        }
    }

    #[inline]
    pub fn from_bit(b: u8) -> Self {
        if b == 0 {
            CellState::Zero
        } else {
            CellState::One
        }
    }

    pub fn symbol(self) -> char {
        match self {
            CellState::Zero => '0',
            CellState::One => '1',
            CellState::Q => '?',
        }
    }

    /// Raster grey level: `0 → 255`, `1 → 0`, `? → 128`.
    pub fn grey(self) -> u8 {
        match self {
            CellState::Zero => 255,
            CellState::One => 0,
            CellState::Q => 128,
        }
    }
}

/// A periodic configuration and the time it was reached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingState {
    pub cells: Vec<CellState>,
    pub time: u64,
}

impl RingState {
    pub fn new(cells: Vec<CellState>) -> Result<Self> {
        if cells.len() < 3 {
            return Err(Error::RingTooSmall(cells.len()));
        }
        Ok(RingState { cells, time: 0 })
    }

    pub fn all_q(n: usize) -> Result<Self> {
        RingState::new(vec![CellState::Q; n])
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        RingState::new(bits.iter().map(|&b| CellState::from_bit(b)).collect())
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn q_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == CellState::Q).count()
    }

    pub fn is_binary(&self) -> bool {
        self.cells.iter().all(|c| *c != CellState::Q)
    }
}

impl fmt::Display for RingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.cells.iter().try_for_each(|c| write!(f, "{}", c.symbol()))
    }
}

/// New value of a real cell with parents `(a, b)`.
#[inline]
pub fn pca_cell(quad: &ParamQuad, a: u8, b: u8, u: f64) -> CellState {
    CellState::from_bit((u < quad.get(a, b)) as u8)
}

/// New value of an envelope cell with parents `(a, b)`.
#[inline]
pub fn envelope_cell(d: &DerivedParams, a: CellState, b: CellState, u: f64) -> CellState {
    let (lo, hi) = d.thresholds(a.bit(), b.bit());
    if u < lo {
        CellState::One
    } else if u >= hi {
        CellState::Zero
    } else {
        CellState::Q
    }
}

fn check_uniforms(n: usize, uniforms: &[f64]) -> Result<()> {
    if uniforms.len() != n {
        return Err(Error::UniformCount {
            expected: n,
            got: uniforms.len(),
        });
    }
    Ok(())
}

/// One step of the real PCA. Cell `i` reads cells `i` and `i + 1 mod N`.
pub fn pca_step(ring: &RingState, quad: &ParamQuad, uniforms: &[f64]) -> Result<RingState> {
    let n = ring.len();
    check_uniforms(n, uniforms)?;
    let mut cells = Vec::with_capacity(n);
    for i in 0..n {
        let a = ring.cells[i].bit().ok_or(Error::NotBinary)?;
        let b = ring.cells[(i + 1) % n].bit().ok_or(Error::NotBinary)?;
        cells.push(pca_cell(quad, a, b, uniforms[i]));
    }
    Ok(RingState {
        cells,
        time: ring.time + 1,
    })
}

/// One step of the envelope PCA.
pub fn envelope_step(ring: &RingState, d: &DerivedParams, uniforms: &[f64]) -> Result<RingState> {
    let n = ring.len();
    check_uniforms(n, uniforms)?;
    let mut out = vec![CellState::Q; n];
    envelope_step_into(&ring.cells, d, uniforms, &mut out);
    Ok(RingState {
        cells: out,
        time: ring.time + 1,
    })
}

fn envelope_step_into(cells: &[CellState], d: &DerivedParams, uniforms: &[f64], out: &mut [CellState]) {
    let n = cells.len();
    for i in 0..n - 1 {
        out[i] = envelope_cell(d, cells[i], cells[i + 1], uniforms[i]);
    }
    out[n - 1] = envelope_cell(d, cells[n - 1], cells[0], uniforms[n - 1]);
}

/// Envelope ring plus two real copies driven by the same uniforms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoupledTriple {
    pub envelope: RingState,
    pub copy_a: RingState,
    pub copy_b: RingState,
}

impl CoupledTriple {
    pub fn new(envelope: RingState, copy_a: RingState, copy_b: RingState) -> Result<Self> {
        let n = envelope.len();
        if copy_a.len() != n || copy_b.len() != n {
            return Err(Error::Invalid("coupled rings differ in length".into()));
        }
        if !copy_a.is_binary() || !copy_b.is_binary() {
            return Err(Error::NotBinary);
        }
        let t = CoupledTriple {
            envelope,
            copy_a,
            copy_b,
        };
        t.check_dominance()?;
        Ok(t)
    }

    /// First cell where a known envelope value disagrees with a copy.
    pub fn dominance_violation(&self) -> Option<usize> {
        (0..self.envelope.len()).find(|&i| {
            let e = self.envelope.cells[i];
            e != CellState::Q && (self.copy_a.cells[i] != e || self.copy_b.cells[i] != e)
        })
    }

    pub fn check_dominance(&self) -> Result<()> {
        match self.dominance_violation() {
            None => Ok(()),
            Some(cell) => Err(Error::DominanceViolation {
                time: self.envelope.time,
                cell,
            }),
        }
    }
}

/// Advances all three rings with the same uniforms and re-checks dominance.
pub fn coupled_step(
    t: &CoupledTriple,
    d: &DerivedParams,
    quad: &ParamQuad,
    uniforms: &[f64],
) -> Result<CoupledTriple> {
    let next = CoupledTriple {
        envelope: envelope_step(&t.envelope, d, uniforms)?,
        copy_a: pca_step(&t.copy_a, quad, uniforms)?,
        copy_b: pca_step(&t.copy_b, quad, uniforms)?,
    };
    next.check_dominance()?;
    Ok(next)
}

/// Runs a coupled triple for `steps` steps on the counter stream of `seed`.
pub fn run_coupled(
    start: CoupledTriple,
    d: &DerivedParams,
    steps: u64,
    seed: u64,
) -> Result<CoupledTriple> {
    let mut u = vec![0.0; start.envelope.len()];
    let mut t = start;
    for _ in 0..steps {
        rng::step_uniforms(seed, t.envelope.time, &mut u);
        t = coupled_step(&t, d, &d.quad, &u)?;
    }
    Ok(t)
}

/// Outcome of [`run_to_decorrelation`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecorrelationRun {
    pub n: usize,
    /// First step at which no `?` remains.
    pub hit_time: Option<u64>,
    /// Number of `?` cells after each step, starting with step 0 (`= n`).
    /// The density at step `t` is `q_counts[t] / n`.
    pub q_counts: Vec<usize>,
}

impl DecorrelationRun {
    /// Writes the density series as `step,q_density_num,q_density_den`.
    pub fn write_density_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Parse {
            what: "density csv",
            detail: e.to_string(),
        };
        w.write_record(["step", "q_density_num", "q_density_den"])
            .map_err(wrap)?;
        for (t, k) in self.q_counts.iter().enumerate() {
            w.write_record([t.to_string(), k.to_string(), self.n.to_string()])
                .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io("<density>", e))
    }
}

/// Starts the envelope from all-`?` and steps until no `?` is left or
/// `max_steps` is reached.
pub fn run_to_decorrelation(
    d: &DerivedParams,
    n: usize,
    max_steps: u64,
    seed: u64,
) -> Result<DecorrelationRun> {
    let mut cur = RingState::all_q(n)?.cells;
    let mut next = cur.clone();
    let mut u = vec![0.0; n];
    let mut q_counts = vec![n];
    let mut hit_time = None;
    for step in 0..max_steps {
        rng::step_uniforms(seed, step, &mut u);
        envelope_step_into(&cur, d, &u, &mut next);
        std::mem::swap(&mut cur, &mut next);
        let q = cur.iter().filter(|c| **c == CellState::Q).count();
        q_counts.push(q);
        if q == 0 {
            hit_time = Some(step + 1);
            break;
        }
    }
    Ok(DecorrelationRun {
        n,
        hit_time,
        q_counts,
    })
}

/// Hit times of `runs` independent decorrelation runs (seeds `seed + k`).
pub fn hit_times(d: &DerivedParams, n: usize, max_steps: u64, runs: u64, seed: u64) -> Result<Vec<Option<u64>>> {
    RingState::all_q(n)?;
    Ok((0..runs)
        .into_par_iter()
        .map(|k| {
            run_to_decorrelation(d, n, max_steps, seed.wrapping_add(k))
                .expect("ring size checked")
                .hit_time
        })
        .collect())
}

/// Envelope configurations at times `0..=steps`, started from all-`?`.
pub fn envelope_trace(d: &DerivedParams, n: usize, steps: u64, seed: u64) -> Result<Vec<RingState>> {
    let mut ring = RingState::all_q(n)?;
    let mut u = vec![0.0; n];
    let mut rows = vec![ring.clone()];
    for _ in 0..steps {
        rng::step_uniforms(seed, ring.time, &mut u);
        ring = envelope_step(&ring, d, &u)?;
        rows.push(ring.clone());
    }
    Ok(rows)
}

/// Space-time diagram, row 0 earliest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceTimeRaster {
    pub width: usize,
    pub height: usize,
    /// Row-major grey levels.
    pub pixels: Vec<u8>,
}

pub fn raster(rows: &[RingState]) -> Result<SpaceTimeRaster> {
    let width = rows.first().map_or(0, RingState::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::RaggedRaster);
    }
    Ok(raster_from_cells(rows.iter().map(|r| r.cells.as_slice()), width))
}

/// Raster of arbitrary rows (no minimum width), used for tiny diagrams.
pub fn raster_from_cells<'a>(rows: impl IntoIterator<Item = &'a [CellState]>, width: usize) -> SpaceTimeRaster {
    let mut pixels = Vec::new();
    let mut height = 0;
    for row in rows {
        assert_eq!(row.len(), width, "ragged raster");
        pixels.extend(row.iter().map(|c| c.grey()));
        height += 1;
    }
    SpaceTimeRaster {
        width,
        height,
        pixels,
    }
}

impl SpaceTimeRaster {
    /// Binary PGM (`P5`, maxval 255).
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)?;
        out.flush()
    }

    pub fn read_pgm<R: Read>(mut input: R) -> Result<Self> {
        let mut buf = Vec::new();
        input
            .read_to_end(&mut buf)
            .map_err(|e| Error::io("<pgm>", e))?;
        parse_pgm(&buf)
    }
}

pub fn write_pgm(r: &SpaceTimeRaster, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    r.write_pgm(std::io::BufWriter::new(f))
        .map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<SpaceTimeRaster> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&buf)
}

fn parse_pgm(buf: &[u8]) -> Result<SpaceTimeRaster> {
    let bad = |detail: &str| Error::Parse {
        what: "pgm",
        detail: detail.to_string(),
    };
    // Header: four whitespace-separated tokens, then a single whitespace byte.
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < buf.len() && buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < buf.len() && buf[pos] == b'#' {
            while pos < buf.len() && buf[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&buf[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    if tokens[0] != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (num(tokens[1])?, num(tokens[2])?, num(tokens[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    pos += 1;
    let pixels = buf.get(pos..).unwrap_or_default().to_vec();
    if pixels.len() != width * height {
        return Err(bad("pixel count does not match header"));
    }
    Ok(SpaceTimeRaster {
        width,
        height,
        pixels,
    })
}
