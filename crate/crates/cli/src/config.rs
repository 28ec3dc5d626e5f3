//! Run configuration: per-experiment defaults, a JSON file on top, command
//! line flags on top of that.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Figure1,
    Equivalence,
    WeightsAudit,
    DirichletClassify,
    Closability,
    Absorption,
    BoundaryClass,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Figure1,
        Experiment::Equivalence,
        Experiment::WeightsAudit,
        Experiment::DirichletClassify,
        Experiment::Closability,
        Experiment::Absorption,
        Experiment::BoundaryClass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Figure1 => "figure1",
            Experiment::Equivalence => "equivalence",
            Experiment::WeightsAudit => "weights_audit",
            Experiment::DirichletClassify => "dirichlet_classify",
            Experiment::Closability => "closability",
            Experiment::Absorption => "absorption",
            Experiment::BoundaryClass => "boundary_class",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format '{s}', expected csv or json")),
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub beta: f64,
    pub rho: f64,
    pub nu: f64,
    pub x0: f64,
    pub y0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    /// Master seed for single-seed experiments and the bump placement.
    pub seed: u64,
    /// Master seeds of multi-seed experiments.
    pub seeds: Vec<u64>,
    pub drifted: bool,
    /// Sweep values for the table experiments.
    pub betas: Vec<f64>,
    pub rhos: Vec<f64>,
    /// Number of full paths written by `figure1`.
    pub record_paths: usize,
    pub format: OutputFormat,
    /// Evaluate the experiment's acceptance check and fail with exit code 3.
    pub check: bool,
    #[serde(skip)]
    pub out: PathBuf,
}

/// Every field optional, as read from a file or from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub experiment: Option<Experiment>,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub nu: Option<f64>,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub drifted: Option<bool>,
    pub betas: Option<Vec<f64>>,
    pub rhos: Option<Vec<f64>>,
    pub record_paths: Option<usize>,
    pub format: Option<OutputFormat>,
    pub check: Option<bool>,
    pub out: Option<PathBuf>,
}

impl ConfigOverrides {
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))
    }

    /// `other` wins wherever it is set.
    pub fn merge(mut self, other: ConfigOverrides) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(experiment, beta, rho, nu, x0, y0, horizon, dt, n_paths, seed, seeds, drifted, betas, rhos, record_paths, format, check, out);
        self
    }
}

impl RunConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = RunConfig {
            experiment,
            beta: 0.5,
            rho: 0.0,
            nu: 1.0,
            x0: 1.0,
            y0: 1.0,
            horizon: 1.0,
            dt: 0.01,
            n_paths: 10_000,
            seed: 1,
            seeds: vec![1],
            drifted: false,
            betas: Vec::new(),
            rhos: Vec::new(),
            record_paths: 10,
            format: OutputFormat::Csv,
            check: false,
            out: PathBuf::from("out"),
        };
        match experiment {
            Experiment::Figure1 => {
                c.rho = 0.9;
                c.horizon = 100.0;
                c.n_paths = 10;
            }
            Experiment::Equivalence => {
                c.beta = 0.0;
                c.dt = 1e-4;
                c.n_paths = 20_000;
                c.seeds = vec![1, 2, 3, 4, 5];
            }
            Experiment::WeightsAudit => {
                c.betas = vec![0.0, 0.5, 0.9];
                c.rhos = vec![-0.9, 0.0, 0.9];
            }
            Experiment::DirichletClassify => {
                c.betas = vec![0.0, 0.25, 0.5, 0.75, 1.0];
                c.rhos = vec![-0.5, 0.0, 0.5];
                c.seed = 2024;
            }
            Experiment::Closability => c.betas = vec![0.0, 0.25, 0.49, 0.5, 0.75, 1.0],
            Experiment::Absorption => {}
            Experiment::BoundaryClass => c.betas = vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
        }
        c
    }

    /// Defaults of the chosen experiment, then `layers` in order.
    pub fn resolve(layers: &[ConfigOverrides]) -> Result<Self, CliError> {
        let merged = layers
            .iter()
            .cloned()
            .fold(ConfigOverrides::default(), ConfigOverrides::merge);
        let experiment = merged
            .experiment
            .ok_or_else(|| CliError::Config("no experiment given".into()))?;
        let mut c = Self::defaults(experiment);
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = merged.$f.clone() { c.$f = v; } )* };
        }
        set!(beta, rho, nu, x0, y0, horizon, dt, n_paths, seed, seeds, drifted, betas, rhos, record_paths, format, check, out);
        if merged.seed.is_some() && merged.seeds.is_none() && matches!(experiment, Experiment::Figure1) {
            c.seeds = vec![c.seed];
        }
        c.validate()?;
        Ok(c)
    }

    /// Checks every numeric field against the preconditions of the modules
    /// the experiment calls, before anything runs.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let finite = [self.beta, self.rho, self.nu, self.x0, self.y0, self.horizon, self.dt];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("numeric parameters must be finite".into());
        }
        let uses_model = matches!(
            self.experiment,
            Experiment::Figure1 | Experiment::Equivalence | Experiment::Absorption
        );
        if uses_model {
            if !(0.0..=1.0).contains(&self.beta) {
                return bad(format!("beta must lie in [0,1], got {}", self.beta));
            }
            if !(self.rho.abs() < 1.0) {
                return bad(format!("rho must lie in (-1,1), got {}", self.rho));
            }
            if !(self.nu >= 0.0) {
                return bad(format!("nu must be >= 0, got {}", self.nu));
            }
            if !(self.x0 >= 0.0) || !(self.y0 > 0.0) {
                return bad("need x0 >= 0 and y0 > 0".into());
            }
            if !(self.dt > 0.0) || !(self.horizon > 0.0) || self.dt > self.horizon {
                return bad("need 0 < dt <= horizon".into());
            }
            if self.n_paths == 0 {
                return bad("n_paths must be positive".into());
            }
        }
        match self.experiment {
            Experiment::Figure1 | Experiment::Equivalence if self.seeds.is_empty() => {
                bad("at least one seed is required".into())
            }
            Experiment::Equivalence if self.n_paths < 10 => bad("equivalence needs at least 10 paths".into()),
            Experiment::Absorption if self.beta >= 1.0 => bad("absorption needs beta < 1".into()),
            Experiment::Absorption if !self.drifted && self.rho != 0.0 => {
                bad("the undrifted absorption race needs rho = 0".into())
            }
            Experiment::Absorption if !(self.nu > 0.0) => bad("absorption needs nu > 0".into()),
            Experiment::WeightsAudit | Experiment::DirichletClassify => {
                if self.betas.is_empty() || self.rhos.is_empty() {
                    return bad("sweeps need non-empty betas and rhos".into());
                }
                let hi = if self.experiment == Experiment::WeightsAudit { 1.0 } else { 1.0 + f64::EPSILON };
                if self.betas.iter().any(|b| !(*b >= 0.0 && *b < hi)) || self.rhos.iter().any(|r| !(r.abs() < 1.0)) {
                    return bad("sweep values out of range".into());
                }
                if !(self.nu >= 0.0) {
                    return bad("nu must be >= 0".into());
                }
                Ok(())
            }
            Experiment::Closability if self.betas.iter().any(|b| !(0.0..=1.0).contains(b)) => {
                bad("closability betas must lie in [0,1]".into())
            }
            Experiment::BoundaryClass if self.betas.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) => {
                bad("boundary betas must be >= 0".into())
            }
            _ => Ok(()),
        }
    }

    /// SHA-256 of the canonical JSON of the configuration (output
    /// directory excluded).
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        format!("{:x}", Sha256::digest(&json))
    }
}
