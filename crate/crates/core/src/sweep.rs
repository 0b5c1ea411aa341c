//! Batch runs over many parameters and their CSV/JSON serialization.
//!
//! CSV floats are written with 17 significant digits so that reading a file
//! back reproduces the rows bit for bit; infinite drift bounds are written as
//! `inf`.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::IslandWalker;
use crate::error::{Error, Result};
use crate::params::{
    ca_with_error, condition_check, derive, CaCode, ConditionReport, DerivedParams, ExtendedReal,
    ParamQuad,
};
use crate::refined::RefinedRow;
use crate::rng;
use crate::stats::{wilson_interval, Z95};

/// Header of the sweep CSV.
pub const SWEEP_HEADER: [&str; 8] = [
    "code", "eps", "gamma0", "gamma1", "lhs", "rhs", "holds", "drift_bound",
];

/// Header of the volume CSV.
pub const VOLUME_HEADER: [&str; 6] = ["samples", "hits", "fraction", "ci_low", "ci_high", "seed"];

/// Marker written in the `gamma0` column of rows whose gamma table is
/// degenerate.
pub const DEGENERATE_MARKER: &str = "degenerate";

/// One evaluated parameter. `code` is a CA code such as `1000` or a
/// comma-separated quadruplet; the condition fields are `None` when the
/// gamma table was degenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub code: String,
    pub eps: Option<f64>,
    pub gamma0: Option<f64>,
    pub gamma1: Option<f64>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub holds: Option<bool>,
    pub drift_bound: Option<ExtendedReal>,
}

impl SweepRow {
    pub fn from_report(code: String, eps: Option<f64>, r: &ConditionReport) -> Self {
        SweepRow {
            code,
            eps,
            gamma0: Some(r.gamma0),
            gamma1: Some(r.gamma1),
            lhs: Some(r.lhs),
            rhs: Some(r.rhs),
            holds: Some(r.holds),
            drift_bound: Some(r.drift_bound),
        }
    }

    pub fn degenerate(code: String, eps: Option<f64>) -> Self {
        SweepRow {
            code,
            eps,
            gamma0: None,
            gamma1: None,
            lhs: None,
            rhs: None,
            holds: None,
            drift_bound: None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.gamma0.is_none()
    }

    /// `lhs − rhs`, if defined.
    pub fn margin(&self) -> Option<f64> {
        Some(self.lhs? - self.rhs?)
    }
}

fn evaluate(code: String, eps: Option<f64>, d: &DerivedParams) -> Result<SweepRow> {
    match condition_check(d) {
        Ok(r) => Ok(SweepRow::from_report(code, eps, &r)),
        Err(Error::DegenerateDenominator { .. }) => Ok(SweepRow::degenerate(code, eps)),
        Err(e) => Err(e),
    }
}

/// Row for an explicit quadruplet.
pub fn quad_row(q: &ParamQuad) -> Result<SweepRow> {
    let label = q.to_array().map(|v| v.to_string()).join(",");
    evaluate(label, None, &derive(q))
}

/// One row per `(code, ε)`, codes outermost.
pub fn epsilon_sweep(codes: &[CaCode], grid: &[f64]) -> Result<Vec<SweepRow>> {
    if let Some(&bad) = grid.iter().find(|&&e| !(e > 0.0 && e <= 0.5)) {
        return Err(Error::EpsOutOfRange(bad, "(0, 1/2]"));
    }
    let mut rows = Vec::with_capacity(codes.len() * grid.len());
    for &code in codes {
        for &eps in grid {
            let d = derive(&ca_with_error(code, eps)?);
            rows.push(evaluate(code.to_string(), Some(eps), &d)?);
        }
    }
    Ok(rows)
}

/// Default sweep grid.
pub fn default_grid() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
}

/// Bracket of the error rate where the condition switches for one code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub code: String,
    /// Condition value at the lower end of the search interval.
    pub holds_below: bool,
    pub eps_low: f64,
    pub eps_high: f64,
}

impl Crossover {
    pub fn eps(&self) -> f64 {
        0.5 * (self.eps_low + self.eps_high)
    }
}

/// Bisects `holds` on `[lo, hi]` down to width `tol`. Returns `None` when the
/// condition has the same value at both ends.
pub fn crossover_eps(code: CaCode, lo: f64, hi: f64, tol: f64) -> Result<Option<Crossover>> {
    let holds = |eps: f64| -> Result<bool> {
        let d = derive(&ca_with_error(code, eps)?);
        Ok(condition_check(&d)?.holds)
    };
    let (mut a, mut b) = (lo, hi);
    let below = holds(a)?;
    if holds(b)? == below {
        return Ok(None);
    }
    while b - a > tol {
        let m = 0.5 * (a + b);
        if holds(m)? == below {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(Some(Crossover {
        code: code.to_string(),
        holds_below: below,
        eps_low: a,
        eps_high: b,
    }))
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(what: &'static str, s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| Error::Parse {
            what,
            detail: format!("{s:?} is not a number"),
        }),
    }
}

fn csv_err(what: &'static str) -> impl Fn(csv::Error) -> Error {
    move |e| Error::Parse {
        what,
        detail: e.to_string(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = csv_err("sweep csv");
    w.write_record(SWEEP_HEADER).map_err(&err)?;
    for r in rows {
        let gamma0 = if r.is_degenerate() {
            DEGENERATE_MARKER.to_string()
        } else {
            opt(r.gamma0)
        };
        let drift = match r.drift_bound {
            Some(ExtendedReal::Finite(v)) => fmt_f64(v),
            Some(ExtendedReal::PositiveInfinite) => "inf".to_string(),
            None => String::new(),
        };
        w.write_record([
            r.code.clone(),
            opt(r.eps),
            gamma0,
            opt(r.gamma1),
            opt(r.lhs),
            opt(r.rhs),
            r.holds.map(|h| h.to_string()).unwrap_or_default(),
            drift,
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io("<sweep csv>", e))
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let err = csv_err("sweep csv");
    let header = rd.headers().map_err(&err)?.clone();
    if header.iter().ne(SWEEP_HEADER) {
        return Err(Error::Parse {
            what: "sweep csv",
            detail: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse_f64("sweep csv", s).map(Some)
        }
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(&err)?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let eps = num(f(1))?;
        if f(2) == DEGENERATE_MARKER {
            rows.push(SweepRow::degenerate(f(0).to_string(), eps));
            continue;
        }
        let holds = match f(6) {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Parse {
                    what: "sweep csv",
                    detail: format!("holds must be true or false, got {other:?}"),
                })
            }
        };
        let drift = match f(7) {
            "inf" => ExtendedReal::PositiveInfinite,
            s => ExtendedReal::Finite(parse_f64("sweep csv", s)?),
        };
        rows.push(SweepRow {
            code: f(0).to_string(),
            eps,
            gamma0: num(f(2))?,
            gamma1: num(f(3))?,
            lhs: num(f(4))?,
            rhs: num(f(5))?,
            holds: Some(holds),
            drift_bound: Some(drift),
        });
    }
    Ok(rows)
}

pub fn write_json<T: Serialize + ?Sized, W: Write>(value: &T, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, value).map_err(|e| Error::Parse {
        what: "json",
        detail: e.to_string(),
    })
}

pub fn read_sweep_json<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    serde_json::from_reader(input).map_err(|e| Error::Parse {
        what: "sweep json",
        detail: e.to_string(),
    })
}

/// Monte Carlo estimate of the fraction of `(0,1)⁴` where the condition holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub samples: u64,
    pub hits: u64,
    /// Draws with a degenerate gamma table, counted as misses.
    pub degenerate: u64,
    pub fraction: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub seed: u64,
}

impl VolumeEstimate {
    pub fn ci_width(&self) -> f64 {
        self.ci95_high - self.ci95_low
    }
}

/// Samples per independent stream in [`volume_estimate`].
pub const VOLUME_CHUNK: u64 = 1 << 14;

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Hits and degenerate draws among `count` quadruplets of stream `chunk`.
pub fn volume_chunk(seed: u64, chunk: u64, count: u64) -> Result<(u64, u64)> {
    let mut rng = rng::stream(seed, chunk);
    let (mut hits, mut degenerate) = (0, 0);
    for _ in 0..count {
        let p = [(); 4].map(|_| open_unit(&mut rng));
        let d = derive(&ParamQuad::from_array(p)?);
        match condition_check(&d) {
            Ok(r) => hits += r.holds as u64,
            Err(Error::DegenerateDenominator { .. }) => degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((hits, degenerate))
}

/// Uniform quadruplets in fixed-size chunks, one random stream per chunk.
/// The result does not depend on the number of worker threads.
pub fn volume_estimate(samples: u64, seed: u64) -> Result<VolumeEstimate> {
    if samples == 0 {
        return Err(Error::Invalid("volume estimate needs at least one sample".into()));
    }
    let chunks = samples.div_ceil(VOLUME_CHUNK);
    let parts: Vec<(u64, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = VOLUME_CHUNK.min(samples - c * VOLUME_CHUNK);
            volume_chunk(seed, c, count)
        })
        .collect::<Result<_>>()?;
    let (hits, degenerate) = parts
        .iter()
        .fold((0, 0), |(h, g), &(a, b)| (h + a, g + b));
    let (lo, hi) = wilson_interval(hits, samples, Z95);
    Ok(VolumeEstimate {
        samples,
        hits,
        degenerate,
        fraction: hits as f64 / samples as f64,
        ci95_low: lo,
        ci95_high: hi,
        seed,
    })
}

pub fn write_volume_csv<W: Write>(v: &VolumeEstimate, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = csv_err("volume csv");
    w.write_record(VOLUME_HEADER).map_err(&err)?;
    w.write_record([
        v.samples.to_string(),
        v.hits.to_string(),
        fmt_f64(v.fraction),
        fmt_f64(v.ci95_low),
        fmt_f64(v.ci95_high),
        v.seed.to_string(),
    ])
    .map_err(&err)?;
    w.flush().map_err(|e| Error::io("<volume csv>", e))
}

pub fn write_refined_csv<W: Write>(rows: &[RefinedRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = csv_err("refined csv");
    w.write_record(["eps", "mean_s1", "mean_00", "drift_bound", "empirical_drift", "stderr"])
        .map_err(&err)?;
    for r in rows {
        w.write_record(
            [r.eps, r.mean_s1, r.mean_00, r.drift_bound, r.empirical_drift, r.stderr].map(fmt_f64),
        )
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io("<refined csv>", e))
}

/// Limits of one renewal run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalConfig {
    /// Initial gap of every recreated island.
    pub n0: u64,
    /// Attempts after which a run is censored.
    pub max_attempts: u64,
    /// Steps after which a surviving but small island counts as a failure.
    pub horizon: u64,
}

impl Default for RenewalConfig {
    fn default() -> Self {
        RenewalConfig {
            n0: 3,
            max_attempts: 1000,
            horizon: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenewalRun {
    pub attempts: u64,
    pub total_time: u64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalSummary {
    pub threshold: u64,
    pub runs: Vec<RenewalRun>,
    pub censored: u64,
    /// Median attempts with censored runs ranked last; `None` if the median
    /// run is censored.
    pub median_attempts: Option<u64>,
    pub mean_total_time: f64,
    pub seed: u64,
}

/// Recreates islands until one reaches gap `threshold`, `runs` times.
pub fn renewal_experiment(
    d: &DerivedParams,
    threshold: u64,
    runs: u64,
    seed: u64,
    cfg: RenewalConfig,
) -> Result<RenewalSummary> {
    if runs == 0 {
        return Err(Error::Invalid("renewal experiment needs at least one run".into()));
    }
    if cfg.n0 < 3 || threshold <= cfg.n0 {
        return Err(Error::Invalid(format!(
            "need 3 <= n0 < threshold, got n0 = {} and threshold = {threshold}",
            cfg.n0
        )));
    }
    let walker = IslandWalker::new(d)?;
    let results: Vec<RenewalRun> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = rng::stream(seed, run);
            let mut time = 0;
            for attempt in 1..=cfg.max_attempts {
                let mut s = walker.spawn(cfg.n0 as i64, &mut rng);
                for _ in 0..cfg.horizon {
                    walker.step(&mut s, &mut rng);
                    time += 1;
                    if !s.alive {
                        break;
                    }
                    if s.gap() >= threshold as i64 {
                        return RenewalRun {
                            attempts: attempt,
                            total_time: time,
                            censored: false,
                        };
                    }
                }
            }
            RenewalRun {
                attempts: cfg.max_attempts,
                total_time: time,
                censored: true,
            }
        })
        .collect();
    let censored = results.iter().filter(|r| r.censored).count() as u64;
    let mut ranked: Vec<Option<u64>> = results
        .iter()
        .map(|r| (!r.censored).then_some(r.attempts))
        .collect();
    ranked.sort_by_key(|a| a.unwrap_or(u64::MAX));
    let median_attempts = ranked[(ranked.len() - 1) / 2];
    let mean_total_time =
        results.iter().map(|r| r.total_time as f64).sum::<f64>() / results.len() as f64;
    Ok(RenewalSummary {
        threshold,
        runs: results,
        censored,
        median_attempts,
        mean_total_time,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(list: &[&str]) -> Vec<CaCode> {
        list.iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn rule_families_margin() {
        let rows = epsilon_sweep(&codes(&["0011", "0101", "1010", "1100"]), &default_grid()).unwrap();
        for r in &rows {
            let eps = r.eps.unwrap();
            assert!((r.margin().unwrap() - 4.0 * eps).abs() <= 1e-12, "{r:?}");
        }
    }

    #[test]
    fn holding_families() {
        let list = ["0001", "0111", "0010", "0100", "1011", "1101"];
        for r in epsilon_sweep(&codes(&list), &default_grid()).unwrap() {
            assert_eq!(r.holds, Some(true), "{r:?}");
        }
    }

    #[test]
    fn excluded_rules_fail_at_small_error() {
        for r in epsilon_sweep(&codes(&["1000", "1110", "0110", "1001"]), &[0.01]).unwrap() {
            assert_eq!(r.holds, Some(false), "{r:?}");
        }
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        assert!(epsilon_sweep(&codes(&["0001"]), &[0.0]).is_err());
        assert!(epsilon_sweep(&codes(&["0001"]), &[0.6]).is_err());
    }

    #[test]
    fn margin_increases_along_grid() {
        let grid: Vec<f64> = (1..=49).map(|k| k as f64 / 100.0).collect();
        for code in ["0011", "0101", "0001", "0111", "0010", "1101"] {
            let rows = epsilon_sweep(&codes(&[code]), &grid).unwrap();
            for w in rows.windows(2) {
                assert!(w[1].margin().unwrap() > w[0].margin().unwrap(), "{code}: {w:?}");
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rows = epsilon_sweep(&CaCode::all().collect::<Vec<_>>(), &default_grid()).unwrap();
        rows.push(quad_row(&ParamQuad::new(0.8, 0.3, 0.5, 0.6).unwrap()).unwrap());
        rows.push(SweepRow::degenerate("0,0,1,1".into(), None));
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("code,eps,gamma0,gamma1,lhs,rhs,holds,drift_bound\n"));
        assert!(text.contains(",inf\n"));
        assert_eq!(read_sweep_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let rows = epsilon_sweep(&codes(&["0000", "0001", "1000"]), &default_grid()).unwrap();
        let mut buf = Vec::new();
        write_json(&rows, &mut buf).unwrap();
        assert_eq!(read_sweep_json(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(parse_f64("x", &fmt_f64(1.0 / 3.0)).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn crossover_of_excluded_rule() {
        let c = crossover_eps("1000".parse().unwrap(), 0.01, 0.5, 1e-10)
            .unwrap()
            .unwrap();
        assert!(!c.holds_below);
        assert!(c.eps_high - c.eps_low <= 1e-10);
        assert!(c.eps() > 0.01 && c.eps() < 0.5);
        assert!(crossover_eps("0001".parse().unwrap(), 0.01, 0.5, 1e-10).unwrap().is_none());
    }

    #[test]
    fn volume_is_reproducible() {
        let a = volume_estimate(40_000, 3).unwrap();
        let b = volume_estimate(40_000, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.hits <= a.samples);
        assert!(a.ci95_low <= a.fraction && a.fraction <= a.ci95_high);
        let mut buf = Vec::new();
        write_volume_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("samples,hits,fraction,ci_low,ci_high,seed\n40000,"));
    }

    #[test]
    fn volume_ci_scaling() {
        let a = volume_estimate(1 << 16, 11).unwrap();
        let b = volume_estimate(1 << 17, 11).unwrap();
        let ratio = b.ci_width() / a.ci_width();
        assert!((ratio - 0.5f64.sqrt()).abs() <= 0.2 * 0.5f64.sqrt(), "{ratio}");
    }

    #[test]
    fn volume_rejects_zero_samples() {
        assert!(volume_estimate(0, 1).is_err());
    }

    #[test]
    fn renewal_is_deterministic_and_censors() {
        let bad = derive(&ca_with_error("1000".parse().unwrap(), 0.01).unwrap());
        let cfg = RenewalConfig {
            n0: 3,
            max_attempts: 20,
            horizon: 1000,
        };
        let s = renewal_experiment(&bad, 100, 8, 5, cfg).unwrap();
        assert_eq!(s.censored, 8);
        assert_eq!(s.median_attempts, None);
        assert_eq!(s, renewal_experiment(&bad, 100, 8, 5, cfg).unwrap());
    }

    #[test]
    fn renewal_with_strong_drift() {
        let good = derive(&ParamQuad::new(0.8, 0.3, 0.5, 0.6).unwrap());
        let s = renewal_experiment(&good, 100, 101, 9, RenewalConfig::default()).unwrap();
        assert!(s.median_attempts.unwrap() <= 5, "{s:?}");
    }
}
