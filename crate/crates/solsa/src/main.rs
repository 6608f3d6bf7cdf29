//! Command-line front end for the SOLSA online trainer.

use clap::{Args, Parser, Subcommand};
use solsa::config::RunConfig;
use solsa::data::{generate_synthetic, SyntheticSpec};
use solsa::dynamics::NetworkParams;
use solsa::error::{Error, Result};
use solsa::profile::{profile_memory, profile_workload};
use solsa::trainer::{evaluate, load_data, train};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "solsa", about = "Online learning for spiking networks with scheduled updates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override config values, e.g. `--set lr_w=0.01` or
    /// `--set dataset.synthetic.steps=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        for assignment in &self.overrides {
            config = config.with_override(assignment)?;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write params, metrics and schedule.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (overrides `out_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate saved parameters on the configured test split.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Parameter file produced by `train`.
        #[arg(long)]
        params: PathBuf,
    },
    /// Build and print an update schedule without keeping the weights.
    Schedule {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the schedule (JSON index array) here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic memory footprint of online learning vs. full unrolling.
    ProfileMem {
        /// Layer sizes, input first, e.g. `8,200,200,10`.
        #[arg(long, value_delimiter = ',')]
        shape: Vec<usize>,
        /// Sequence length.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Value width in bits (32 or 64).
        #[arg(long, default_value_t = 64)]
        precision_bits: usize,
    },
    /// Analytic per-step workload profile of both algorithms.
    ProfileWork {
        #[arg(long, value_delimiter = ',')]
        shape: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Number of scheduled update points.
        #[arg(long)]
        points: Option<usize>,
        /// Include filter-kernel adaptation in the online cost.
        #[arg(long, default_value_t = true)]
        adapt_kernels: bool,
    },
    /// Generate a synthetic dataset directory.
    GenData {
        /// JSON file holding a synthetic task spec.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory to write meta.json / train.csv / test.csv into.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let config = config.resolve()?;
            let outcome = train(&config)?;
            let dir = out
                .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("run"));
            std::fs::create_dir_all(&dir)?;
            outcome.params.save(&dir.join("params.json"))?;
            outcome.metrics.write(&dir)?;
            if let Some(schedule) = &outcome.schedule {
                schedule.save(&dir.join("schedule.json"))?;
            }
            println!(
                "train accuracy {:.4}  test accuracy {:.4}  ({} epochs, {:.1}s)",
                outcome.metrics.final_train_accuracy,
                outcome.metrics.final_test_accuracy,
                outcome.metrics.rows.len(),
                outcome.metrics.total_wall_seconds,
            );
            println!("outputs written to {}", dir.display());
        }
        Command::Eval { config, params } => {
            let config = config.resolve()?;
            let params = NetworkParams::load(&params)?;
            let data = load_data(&config)?;
            let scale = data.normalization_scale();
            let encode = |seqs: &[solsa::data::LabeledSequence]| -> Result<Vec<_>> {
                seqs.iter()
                    .map(|s| {
                        let mut values = Vec::with_capacity(s.values().len());
                        for frame in s.frames() {
                            values.extend(solsa::data::encode_input_frame(frame, data.format, scale)?);
                        }
                        solsa::data::LabeledSequence::new(values, s.dim(), s.label, s.id.clone())
                    })
                    .collect()
            };
            let test = encode(&data.test)?;
            println!("test accuracy {:.4}", evaluate(&params, &test)?);
        }
        Command::Schedule { config, out } => {
            let config = config.resolve()?;
            let outcome = train(&config)?;
            let schedule = outcome.schedule.ok_or_else(|| {
                Error::Config("schedule construction needs a solsa-family algorithm".into())
            })?;
            println!("{:?}", schedule.points());
            if let Some(path) = out {
                schedule.save(&path)?;
            }
        }
        Command::ProfileMem {
            shape,
            steps,
            precision_bits,
        } => {
            if precision_bits != 32 && precision_bits != 64 {
                return Err(Error::Config("precision_bits must be 32 or 64".into()));
            }
            let report = profile_memory(&shape, steps, precision_bits / 8);
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::ProfileWork {
            shape,
            steps,
            points,
            adapt_kernels,
        } => {
            let points = points.unwrap_or_else(|| (steps / 50).max(1));
            let report = profile_workload(&shape, steps, points, adapt_kernels);
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::GenData { spec, seed, out } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", spec.display())))?;
            let spec: SyntheticSpec = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("bad synthetic spec: {e}")))?;
            let data = generate_synthetic(&spec, seed)?;
            data.save(&out)?;
            println!(
                "wrote {} train / {} test sequences to {}",
                data.train.len(),
                data.test.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
