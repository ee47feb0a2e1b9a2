//! Command-line driver for the Born machine experiment pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use born_mps::cli::{commands, CliError, CliResult, ExperimentConfig};
use born_mps::mps::MeasurementBasis;

#[derive(Parser)]
#[command(
    name = "born-mps",
    version,
    about = "Train and evaluate open/periodic MPS Born machines on transverse-field XY chain data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; unset values fall back to the
/// config file, then to built-in defaults.
#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat `key = value` config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Phase preset: critical | ordered | disordered | oscillatory.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Anisotropy γ.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Transverse field h.
    #[arg(long = "h", global = true)]
    h: Option<f64>,
    /// Spin-spin coupling J.
    #[arg(long, global = true)]
    coupling: Option<f64>,
    /// Chain length N.
    #[arg(long, global = true)]
    sites: Option<usize>,
    /// Boundary of the data Hamiltonian: open | periodic.
    #[arg(long, global = true)]
    data_boundary: Option<String>,
    /// Boundary of the Born machine architecture: open | periodic.
    #[arg(long, global = true)]
    model_boundary: Option<String>,
    /// Bond dimension D.
    #[arg(long, global = true)]
    bond_dim: Option<usize>,
    /// Number of samples |T|.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Measurement bases, comma separated (z always included).
    #[arg(long, global = true)]
    basis: Option<String>,
    #[arg(long, global = true)]
    seed_state: Option<u64>,
    #[arg(long, global = true)]
    seed_sample: Option<u64>,
    #[arg(long, global = true)]
    seed_init: Option<u64>,
    #[arg(long, global = true)]
    seed_shuffle: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the exact ground state and write the state file.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Draw measurement samples from a state file.
    Sample {
        /// Path to a state file written by `generate`.
        state: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train a Born machine on a dataset file.
    Train {
        /// Path to a dataset file written by `sample`.
        dataset: PathBuf,
        /// Optional state file; enables a per-epoch fidelity trace.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a trained model against the exact state and dataset.
    Evaluate {
        model: PathBuf,
        state: PathBuf,
        dataset: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the full fidelity-table grid (4 pairings × bond dimensions).
    Table1 {
        /// Independent repeats per cell (mean and max are reported).
        #[arg(long, default_value_t = 4)]
        repeats: usize,
        /// Bond dimensions, comma separated.
        #[arg(long, default_value = "2,3,4,6,8,10")]
        bond_dims: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Pretty-print a metrics.json file.
    Report { metrics: PathBuf },
}

/// Merge defaults < config file < flags.
fn resolve(common: &CommonArgs) -> CliResult<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = &common.config {
        config.apply_file(path)?;
    }
    if let Some(v) = &common.preset {
        config.assign("preset", v)?;
    }
    macro_rules! flag {
        ($field:ident, $key:literal) => {
            if let Some(v) = &common.$field {
                config.assign($key, &v.to_string())?;
            }
        };
    }
    flag!(gamma, "gamma");
    flag!(h, "h");
    flag!(coupling, "coupling");
    flag!(sites, "sites");
    flag!(data_boundary, "data_boundary");
    flag!(model_boundary, "model_boundary");
    flag!(bond_dim, "bond_dim");
    flag!(samples, "samples");
    flag!(epochs, "epochs");
    flag!(batch_size, "batch_size");
    flag!(seed_state, "seed_state");
    flag!(seed_sample, "seed_sample");
    flag!(seed_init, "seed_init");
    flag!(seed_shuffle, "seed_shuffle");
    if let Some(v) = &common.learning_rate {
        config.assign("learning_rate", &v.to_string())?;
    }
    if let Some(v) = &common.basis {
        config.assign("basis", v)?;
    }
    if let Some(v) = &common.out {
        config.out_dir = v.clone();
    }
    if let Some(v) = common.threads {
        config.threads = Some(v);
    }
    Ok(config)
}

fn setup_threads(config: &ExperimentConfig) {
    if let Some(n) = config.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn run() -> CliResult<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { common } => {
            let config = resolve(&common)?;
            setup_threads(&config);
            commands::cmd_generate(&config)?;
            Ok(())
        }
        Command::Sample { state, common } => {
            let config = resolve(&common)?;
            setup_threads(&config);
            let basis: MeasurementBasis = match &common.basis {
                Some(b) => b
                    .split(',')
                    .next()
                    .unwrap_or("z")
                    .trim()
                    .parse()
                    .map_err(CliError::Usage)?,
                None => MeasurementBasis::Z,
            };
            commands::cmd_sample(&config, &state, basis)?;
            Ok(())
        }
        Command::Train {
            dataset,
            reference,
            common,
        } => {
            let config = resolve(&common)?;
            setup_threads(&config);
            commands::cmd_train(&config, &dataset, reference.as_deref())?;
            Ok(())
        }
        Command::Evaluate {
            model,
            state,
            dataset,
            common,
        } => {
            let config = resolve(&common)?;
            setup_threads(&config);
            commands::cmd_evaluate(&config, &model, &state, &dataset)?;
            Ok(())
        }
        Command::Table1 {
            repeats,
            bond_dims,
            common,
        } => {
            let mut config = resolve(&common)?;
            setup_threads(&config);
            // the short-budget |T|=10000 grid needs a hotter rate than
            // the library default; explicit settings always win
            if !config.lr_explicit {
                config.learning_rate = 0.01;
            }
            if common.samples.is_none() {
                config.samples = 10_000;
            }
            if common.seed_init.is_none() {
                config.seed_init = 7;
            }
            let dims: Result<Vec<usize>, _> = bond_dims
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect();
            let dims = dims.map_err(|_| CliError::Usage(format!("bad bond dims `{bond_dims}`")))?;
            if repeats == 0 {
                return Err(CliError::Usage("repeats must be at least 1".into()));
            }
            commands::cmd_table1(&config, repeats, &dims)?;
            Ok(())
        }
        Command::Report { metrics } => commands::cmd_report(&metrics),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
