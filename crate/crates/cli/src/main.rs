//! `islandwalk`: ergodicity checks and simulations for two-neighbour
//! probabilistic cellular automata.
//!
//! Exit codes: 0 success, 2 invalid input, 3 degenerate gamma table,
//! 4 I/O failure.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use islandwalk::boundary::{empirical_drift, simulate_island, write_trajectory_csv};
use islandwalk::envelope::{envelope_trace, raster, run_to_decorrelation};
use islandwalk::params::{
    asymptotic_increment_bound, boundary_chain, condition_check, derive, gamma_cells, gamma_table,
    mean_increment, stationary_solve, BoundaryState3, CaCode, DerivedParams, Side,
};
use islandwalk::refined::{drift_for_1110, mean_00, mean_s1, refined_drift_bound, refined_row};
use islandwalk::sweep::{
    crossover_eps, default_grid, epsilon_sweep, fmt_f64, quad_row, renewal_experiment,
    volume_estimate, write_json, write_refined_csv, write_sweep_csv, write_volume_csv,
    RenewalConfig,
};
use serde_json::{json, Map, Value};

use config::{Common, Format, Resolved};

#[derive(Debug)]
pub enum Failure {
    Input(String),
    Degenerate(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Degenerate(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(m) | Failure::Degenerate(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<islandwalk::Error> for Failure {
    fn from(e: islandwalk::Error) -> Self {
        match e {
            islandwalk::Error::DegenerateDenominator { .. } => Failure::Degenerate(e.to_string()),
            islandwalk::Error::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "islandwalk", version, about = "Ergodicity checks and simulations for two-neighbour probabilistic cellular automata")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the derived quantities p, q, r, P, Q, R
    Derive(Common),
    /// Evaluate the ergodicity condition
    Check(Common),
    /// Closed-form gamma values and the stationary masses they match
    Gamma(Common),
    /// Boundary-state transition matrices and their stationary laws
    Chain(Common),
    /// Mean boundary increments, their bounds and optional Monte Carlo estimates
    Drift(Common),
    /// Simulate one island, or with --runs a restart experiment
    Island(IslandArgs),
    /// Run the envelope PCA from all-? until no ? is left
    Envelope(Common),
    /// Refined boundary analysis of rule 1000 (and 1110) with error --eps
    Ca1000(Common),
    /// Evaluate the condition over rules and error rates
    Sweep(SweepArgs),
    /// Monte Carlo volume of the parameter region where the condition holds
    Volume(VolumeArgs),
}

#[derive(Debug, Args)]
struct IslandArgs {
    #[command(flatten)]
    common: Common,
    /// Island gap counted as a success in the restart experiment
    #[arg(long)]
    threshold: Option<u64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated rules [default: all 16]
    #[arg(long, value_delimiter = ',')]
    codes: Option<Vec<String>>,
    /// Comma-separated error rates [default: 0.01,0.05,0.1,0.2,0.3,0.4,0.5]
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Report the error rate where the condition switches, per rule
    #[arg(long)]
    crossover: bool,
}

#[derive(Debug, Args)]
struct VolumeArgs {
    #[command(flatten)]
    common: Common,
    /// Number of sampled quadruplets [default: 1000000]
    #[arg(long)]
    samples: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Derive(c) => cmd_derive(&Resolved::new(c)?),
        Command::Check(c) => cmd_check(&Resolved::new(c)?),
        Command::Gamma(c) => cmd_gamma(&Resolved::new(c)?),
        Command::Chain(c) => cmd_chain(&Resolved::new(c)?),
        Command::Drift(c) => cmd_drift(&Resolved::new(c)?),
        Command::Island(a) => {
            let r = Resolved::new(a.common)?;
            let threshold = a.threshold.or(r.file.threshold);
            cmd_island(&r, threshold)
        }
        Command::Envelope(c) => cmd_envelope(&Resolved::new(c)?),
        Command::Ca1000(c) => cmd_ca1000(&Resolved::new(c)?),
        Command::Sweep(a) => {
            let r = Resolved::new(a.common)?;
            let codes = a.codes.or(r.file.codes.clone());
            let grid = a.grid.or(r.file.grid.clone());
            cmd_sweep(&r, codes, grid, a.crossover)
        }
        Command::Volume(a) => {
            let r = Resolved::new(a.common)?;
            let samples = a.samples.or(r.file.samples).unwrap_or(1_000_000);
            cmd_volume(&r, samples)
        }
    }
}

/// Runs `f` on the output file or standard output.
fn emit(r: &Resolved, f: impl FnOnce(&mut dyn Write) -> Result<(), Failure>) -> Result<(), Failure> {
    match &r.output {
        Some(path) => {
            let file = File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn emit_json(r: &Resolved, value: &Value) -> Result<(), Failure> {
    emit(r, |w| {
        write_json(value, &mut *w)?;
        writeln!(w)?;
        Ok(())
    })
}

/// Two-column `name,value` CSV.
fn emit_pairs(r: &Resolved, pairs: &[(String, Value)]) -> Result<(), Failure> {
    emit(r, |w| {
        writeln!(w, "name,value")?;
        for (k, v) in pairs {
            let v = match v {
                Value::Number(n) if n.is_f64() => fmt_f64(n.as_f64().unwrap_or(f64::NAN)),
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    })
}

fn emit_flat(r: &Resolved, pairs: Vec<(String, Value)>) -> Result<(), Failure> {
    match r.format_or(Format::Json, &[Format::Json, Format::Csv])? {
        Format::Json => emit_json(r, &Value::Object(pairs.into_iter().collect::<Map<_, _>>())),
        _ => emit_pairs(r, &pairs),
    }
}

fn setup_jobs(r: &Resolved) -> Result<(), Failure> {
    if let Some(j) = r.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Failure::Input(format!("--jobs: {e}")))?;
    }
    Ok(())
}

fn derived(r: &Resolved) -> Result<DerivedParams, Failure> {
    Ok(derive(&r.source()?.quad()?))
}

fn num(v: f64) -> Value {
    json!(v)
}

fn cmd_derive(r: &Resolved) -> Result<(), Failure> {
    let d = derived(r)?;
    let mut pairs = vec![
        ("p".to_string(), num(d.p)),
        ("q".to_string(), num(d.q)),
        ("r".to_string(), num(d.r)),
    ];
    for i in 0..2 {
        for x in 0..2 {
            let k = &d.known[i];
            pairs.push((format!("p_{i}_{x}"), num(k.p[x])));
            pairs.push((format!("q_{i}_{x}"), num(k.q[x])));
            pairs.push((format!("r_{i}_{x}"), num(k.r[x])));
            pairs.push((format!("P_{i}_{x}"), num(d.agg_p[i][x])));
            pairs.push((format!("Q_{i}_{x}"), num(d.agg_q[i][x])));
        }
    }
    for x in 0..2 {
        pairs.push((format!("R_{x}"), num(d.agg_r[x])));
    }
    for i in 0..2 {
        pairs.push((format!("Pstar_{i}"), num(d.star_p[i])));
        pairs.push((format!("Qstar_{i}"), num(d.star_q[i])));
        pairs.push((format!("Rstar_{i}"), num(d.star_r[i])));
    }
    emit_flat(r, pairs)
}

fn cmd_check(r: &Resolved) -> Result<(), Failure> {
    let src = r.source()?;
    let d = derive(&src.quad()?);
    let rep = condition_check(&d)?;
    match r.format_or(Format::Json, &[Format::Json, Format::Csv])? {
        Format::Json => emit(r, |w| {
            write_json(&rep, &mut *w)?;
            writeln!(w)?;
            Ok(())
        }),
        _ => {
            let row = islandwalk::sweep::SweepRow::from_report(src.label(), src.eps(), &rep);
            emit(r, |w| Ok(write_sweep_csv(&[row], w)?))
        }
    }
}

fn cmd_gamma(r: &Resolved) -> Result<(), Failure> {
    let d = derived(r)?;
    let mut pairs = Vec::new();
    for side in Side::BOTH {
        let i = side.index();
        let g = gamma_table(&d, side)?;
        let nu = stationary_solve(&boundary_chain(&d, side))?;
        let w = d.favourable_state(side);
        pairs.push((format!("gamma{i}"), num(g)));
        pairs.push((format!("w{i}"), json!(w.symbol().to_string())));
        pairs.push((format!("nu{i}_w"), num(nu.get(w))));
        let cells: Vec<String> = gamma_cells(&d, side).iter().map(ToString::to_string).collect();
        pairs.push((format!("cell{i}"), json!(cells.join("; "))));
    }
    emit_flat(r, pairs)
}

fn cmd_chain(r: &Resolved) -> Result<(), Failure> {
    let d = derived(r)?;
    let mut rows = Vec::new();
    for side in Side::BOTH {
        let chain = boundary_chain(&d, side);
        let nu = stationary_solve(&chain)?;
        for from in BoundaryState3::ALL {
            rows.push((side, from.symbol(), chain.row(from), nu.get(from)));
        }
    }
    match r.format_or(Format::Json, &[Format::Json, Format::Csv])? {
        Format::Json => {
            let mut out = Map::new();
            for side in Side::BOTH {
                let sel: Vec<_> = rows.iter().filter(|x| x.0 == side).collect();
                out.insert(
                    side.to_string(),
                    json!({
                        "states": ["0", "1", "*"],
                        "rows": sel.iter().map(|x| x.2.to_vec()).collect::<Vec<_>>(),
                        "stationary": sel.iter().map(|x| x.3).collect::<Vec<_>>(),
                    }),
                );
            }
            emit_json(r, &Value::Object(out))
        }
        _ => emit(r, |w| {
            writeln!(w, "side,from,to_0,to_1,to_star,stationary")?;
            for (side, from, row, nu) in &rows {
                writeln!(
                    w,
                    "{side},{from},{},{},{},{}",
                    fmt_f64(row[0]),
                    fmt_f64(row[1]),
                    fmt_f64(row[2]),
                    fmt_f64(*nu)
                )?;
            }
            Ok(())
        }),
    }
}

fn cmd_drift(r: &Resolved) -> Result<(), Failure> {
    let d = derived(r)?;
    let mut pairs = Vec::new();
    for side in Side::BOTH {
        for y in BoundaryState3::ALL {
            let name = match y {
                BoundaryState3::Star => "star".to_string(),
                _ => y.symbol().to_string(),
            };
            pairs.push((format!("mean_{side}_{name}"), num(mean_increment(&d, side, y)?)));
        }
        pairs.push((format!("bound_{side}"), num(asymptotic_increment_bound(&d, side)?)));
    }
    let rep = condition_check(&d)?;
    pairs.push(("drift_bound".into(), serde_json::to_value(rep.drift_bound).unwrap()));
    if let Some(steps) = r.steps {
        let burn_in = r.burn_in.unwrap_or(1000);
        for side in Side::BOTH {
            let est = empirical_drift(&d, side, steps, burn_in, r.seed)?;
            pairs.push((format!("empirical_{side}"), num(est.mean)));
            pairs.push((format!("stderr_{side}"), num(est.stderr)));
        }
        pairs.push(("seed".into(), json!(r.seed)));
    }
    emit_flat(r, pairs)
}

fn cmd_island(r: &Resolved, threshold: Option<u64>) -> Result<(), Failure> {
    let d = derived(r)?;
    let n0 = r.n.unwrap_or(10);
    if let Some(runs) = r.runs {
        let cfg = RenewalConfig {
            n0,
            horizon: r.horizon.unwrap_or(RenewalConfig::default().horizon),
            ..RenewalConfig::default()
        };
        let summary = renewal_experiment(&d, threshold.unwrap_or(100), runs, r.seed, cfg)?;
        r.format_or(Format::Json, &[Format::Json])?;
        return emit(r, |w| {
            write_json(&summary, &mut *w)?;
            writeln!(w)?;
            Ok(())
        });
    }
    let traj = simulate_island(&d, n0, r.horizon.unwrap_or(10_000), r.seed)?;
    match r.format_or(Format::Csv, &[Format::Csv, Format::Json])? {
        Format::Csv => emit(r, |w| Ok(write_trajectory_csv(&traj, w)?)),
        _ => emit(r, |w| {
            write_json(&traj, &mut *w)?;
            writeln!(w)?;
            Ok(())
        }),
    }
}

fn cmd_envelope(r: &Resolved) -> Result<(), Failure> {
    let d = derived(r)?;
    let n = r.n.unwrap_or(200) as usize;
    let max_steps = r.steps.unwrap_or(100_000);
    let run = run_to_decorrelation(&d, n, max_steps, r.seed)?;
    match r.format_or(Format::Csv, &[Format::Csv, Format::Json, Format::Pgm])? {
        Format::Csv => emit(r, |w| Ok(run.write_density_csv(w)?)),
        Format::Json => emit_json(
            r,
            &json!({
                "n": n,
                "hit_time": run.hit_time,
                "max_steps": max_steps,
                "seed": r.seed,
            }),
        ),
        Format::Pgm => {
            let rows = run.hit_time.unwrap_or(max_steps).min(4096);
            let img = raster(&envelope_trace(&d, n, rows, r.seed)?)?;
            emit(r, |w| Ok(img.write_pgm(w)?))
        }
    }
}

fn cmd_ca1000(r: &Resolved) -> Result<(), Failure> {
    let eps = r
        .eps
        .ok_or_else(|| Failure::Input("ca1000 needs --eps".into()))?;
    if r.has_source() {
        return Err(Failure::Input("ca1000 takes --eps only, not --params or --ca".into()));
    }
    let format = r.format_or(Format::Json, &[Format::Json, Format::Csv])?;
    if let Some(steps) = r.steps {
        let row = refined_row(eps, steps, r.burn_in.unwrap_or(1000), r.seed)?;
        return match format {
            Format::Csv => emit(r, |w| Ok(write_refined_csv(&[row], w)?)),
            _ => {
                let mut v = serde_json::to_value(row).unwrap();
                v["drift_1110"] = num(drift_for_1110(eps)?);
                v["seed"] = json!(r.seed);
                emit_json(r, &v)
            }
        };
    }
    emit_flat(
        r,
        vec![
            ("eps".into(), num(eps)),
            ("mean_s1".into(), num(mean_s1(eps)?)),
            ("mean_00".into(), num(mean_00(eps)?)),
            ("drift_bound".into(), num(refined_drift_bound(eps)?)),
            ("drift_1110".into(), num(drift_for_1110(eps)?)),
        ],
    )
}

fn cmd_sweep(
    r: &Resolved,
    codes: Option<Vec<String>>,
    grid: Option<Vec<f64>>,
    crossover: bool,
) -> Result<(), Failure> {
    setup_jobs(r)?;
    let format = r.format_or(Format::Csv, &[Format::Csv, Format::Json])?;
    let codes: Vec<CaCode> = match (codes, &r.ca) {
        (Some(list), _) => list.iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
        (None, Some(c)) => vec![c.parse()?],
        (None, None) => CaCode::all().collect(),
    };
    if crossover {
        let mut found = Vec::new();
        for &c in &codes {
            if let Some(x) = crossover_eps(c, 0.01, 0.5, 1e-12)? {
                found.push(x);
            }
        }
        return match format {
            Format::Json => emit(r, |w| {
                write_json(&found, &mut *w)?;
                writeln!(w)?;
                Ok(())
            }),
            _ => emit(r, |w| {
                writeln!(w, "code,holds_below,eps_low,eps_high")?;
                for x in &found {
                    writeln!(w, "{},{},{},{}", x.code, x.holds_below, fmt_f64(x.eps_low), fmt_f64(x.eps_high))?;
                }
                Ok(())
            }),
        };
    }
    let rows = if let Some(p) = r.source().ok().filter(|_| r.ca.is_none()) {
        vec![quad_row(&p.quad()?)?]
    } else {
        let grid = grid.or(r.eps.map(|e| vec![e])).unwrap_or_else(default_grid);
        epsilon_sweep(&codes, &grid)?
    };
    match format {
        Format::Json => emit(r, |w| {
            write_json(&rows, &mut *w)?;
            writeln!(w)?;
            Ok(())
        }),
        _ => emit(r, |w| Ok(write_sweep_csv(&rows, w)?)),
    }
}

fn cmd_volume(r: &Resolved, samples: u64) -> Result<(), Failure> {
    setup_jobs(r)?;
    let v = volume_estimate(samples, r.seed)?;
    match r.format_or(Format::Csv, &[Format::Csv, Format::Json])? {
        Format::Json => emit(r, |w| {
            write_json(&v, &mut *w)?;
            writeln!(w)?;
            Ok(())
        }),
        _ => emit(r, |w| Ok(write_volume_csv(&v, w)?)),
    }
}
