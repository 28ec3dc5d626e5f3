use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sabrlab_cli::{run, CliError, ConfigOverrides, Experiment, OutputFormat, RunConfig};

/// Numerical experiments on SABR-type diffusions.
#[derive(Debug, Parser)]
#[command(name = "sabrlab", version)]
struct Args {
    /// figure1, equivalence, weights_audit, dirichlet_classify,
    /// closability, absorption or boundary_class.
    experiment: Option<Experiment>,
    /// JSON configuration file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    nu: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated master seeds for multi-seed experiments.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    y0: Option<f64>,
    #[arg(long)]
    drifted: bool,
    #[arg(long)]
    format: Option<OutputFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate the experiment's acceptance check; exit 3 on failure.
    #[arg(long)]
    check: bool,
}

impl Args {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            experiment: self.experiment,
            beta: self.beta,
            rho: self.rho,
            nu: self.nu,
            x0: self.x0,
            y0: self.y0,
            horizon: self.horizon,
            dt: self.dt,
            n_paths: self.n_paths,
            seed: self.seed,
            seeds: self.seeds.clone(),
            drifted: self.drifted.then_some(true),
            format: self.format,
            check: self.check.then_some(true),
            out: self.out.clone(),
            ..ConfigOverrides::default()
        }
    }
}

fn resolve(args: &Args) -> Result<RunConfig, CliError> {
    let mut layers = Vec::new();
    if let Some(path) = &args.config {
        layers.push(ConfigOverrides::from_json_file(path)?);
    }
    layers.push(args.overrides());
    RunConfig::resolve(&layers)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match resolve(&args).and_then(|cfg| run(&cfg)) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if outcome.manifest.check.is_some() {
                println!("check passed: {}", outcome.check.detail);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sabrlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
