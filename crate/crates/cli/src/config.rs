//! Run configuration: command-line flags merged over an optional JSON file.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use islandwalk::params::{ca_with_error, CaCode, ParamQuad};
use serde::Deserialize;

use crate::Failure;

/// Seed used when neither the flags nor the config file give one.
pub const DEFAULT_SEED: u64 = 2_718_281_828;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Pgm,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Parameter quadruplet p00,p01,p10,p11
    #[arg(long, value_name = "P00,P01,P10,P11", conflicts_with = "ca")]
    pub params: Option<String>,
    /// Deterministic rule as four bits p00 p01 p10 p11, used with --eps
    #[arg(long, value_name = "CODE")]
    pub ca: Option<String>,
    /// Error rate of the rule given by --ca
    #[arg(long)]
    pub eps: Option<f64>,
    /// Ring size, or initial island gap for `island`
    #[arg(long)]
    pub n: Option<u64>,
    /// Simulation steps (step cap for `envelope`)
    #[arg(long)]
    pub steps: Option<u64>,
    /// Steps discarded before estimating a drift
    #[arg(long)]
    pub burn_in: Option<u64>,
    /// Step limit of one island
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Number of independent runs
    #[arg(long)]
    pub runs: Option<u64>,
    /// Random seed [default: 2718281828]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (standard output if absent)
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for parallel subcommands
    #[arg(long)]
    pub jobs: Option<usize>,
    /// JSON file with the same field names as the flags; flags take precedence
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ParamsField {
    Text(String),
    Array([f64; 4]),
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    params: Option<ParamsField>,
    ca: Option<String>,
    eps: Option<f64>,
    n: Option<u64>,
    steps: Option<u64>,
    burn_in: Option<u64>,
    horizon: Option<u64>,
    runs: Option<u64>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    format: Option<Format>,
    jobs: Option<usize>,
    pub samples: Option<u64>,
    pub threshold: Option<u64>,
    pub grid: Option<Vec<f64>>,
    pub codes: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
    }
}

/// Where the parameter quadruplet comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSource {
    Quad(ParamQuad),
    Rule { code: CaCode, eps: f64 },
}

impl ParamSource {
    pub fn quad(&self) -> Result<ParamQuad, Failure> {
        match self {
            ParamSource::Quad(q) => Ok(*q),
            ParamSource::Rule { code, eps } => Ok(ca_with_error(*code, *eps)?),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ParamSource::Quad(q) => q.to_array().map(|v| v.to_string()).join(","),
            ParamSource::Rule { code, .. } => code.to_string(),
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match self {
            ParamSource::Quad(_) => None,
            ParamSource::Rule { eps, .. } => Some(*eps),
        }
    }
}

/// Flags after merging with the config file.
#[derive(Debug, Clone)]
pub struct Resolved {
    params: Option<String>,
    pub ca: Option<String>,
    pub eps: Option<f64>,
    pub n: Option<u64>,
    pub steps: Option<u64>,
    pub burn_in: Option<u64>,
    pub horizon: Option<u64>,
    pub runs: Option<u64>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub jobs: Option<usize>,
    pub file: FileConfig,
}

impl Resolved {
    pub fn new(c: Common) -> Result<Self, Failure> {
        let file = match &c.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        // A quadruplet on the command line replaces a rule from the file and
        // vice versa.
        let flag_source = c.params.is_some() || c.ca.is_some();
        let file_params = file.params.clone().map(|p| match p {
            ParamsField::Text(s) => s,
            ParamsField::Array(a) => a.map(|v| v.to_string()).join(","),
        });
        // An error rate from the file belongs to the file's rule.
        let eps = if c.params.is_some() { c.eps } else { c.eps.or(file.eps) };
        let (params, ca) = if flag_source {
            (c.params, c.ca)
        } else {
            (file_params, file.ca.clone())
        };
        Ok(Resolved {
            params,
            ca,
            eps,
            n: c.n.or(file.n),
            steps: c.steps.or(file.steps),
            burn_in: c.burn_in.or(file.burn_in),
            horizon: c.horizon.or(file.horizon),
            runs: c.runs.or(file.runs),
            seed: c.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            output: c.output.or(file.output.clone()),
            format: c.format.or(file.format),
            jobs: c.jobs.or(file.jobs),
            file,
        })
    }

    /// Exactly one of a quadruplet or a rule with its error rate.
    pub fn source(&self) -> Result<ParamSource, Failure> {
        match (&self.params, &self.ca) {
            (Some(p), None) => {
                if self.eps.is_some() {
                    return Err(Failure::Input("--eps only applies together with --ca".into()));
                }
                Ok(ParamSource::Quad(p.parse()?))
            }
            (None, Some(c)) => {
                let eps = self
                    .eps
                    .ok_or_else(|| Failure::Input("--ca needs --eps".into()))?;
                Ok(ParamSource::Rule {
                    code: c.parse()?,
                    eps,
                })
            }
            (Some(_), Some(_)) => Err(Failure::Input("give either --params or --ca, not both".into())),
            (None, None) => Err(Failure::Input("missing parameters: give --params or --ca with --eps".into())),
        }
    }

    pub fn has_source(&self) -> bool {
        self.params.is_some() || self.ca.is_some()
    }

    pub fn format_or(&self, default: Format, allowed: &[Format]) -> Result<Format, Failure> {
        let f = self.format.unwrap_or(default);
        if allowed.contains(&f) {
            Ok(f)
        } else {
            Err(Failure::Input(format!("format {f:?} is not available here")))
        }
    }
}
