//! `evifuse` binary: argument parsing and dispatch. All real work happens in
//! the library so tests can drive it in-process.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use evifuse_cli::{
    cmd_eval, cmd_fuse, cmd_run, cmd_synth, cmd_tables, cmd_train, parse_triple, CliError,
    ExperimentConfig, RunOutput, DEFAULT_TRIPLES, SEED_ENV_VAR,
};
use evifuse_core::FusionMode;

/// Evidential fusion of short-term load forecasts.
#[derive(Parser)]
#[command(name = "evifuse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic hourly load dataset as CSV.
    Synth {
        /// RNG seed for the generator.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Number of hourly records (at least 48).
        #[arg(long, default_value_t = 504)]
        hours: usize,
        /// Where to write the CSV.
        #[arg(long, default_value = "data.csv")]
        out: PathBuf,
    },
    /// Train the three predictors and persist models + scaling.
    Train(ExperimentFlags),
    /// Fuse with previously trained models (no retraining).
    Fuse(ExperimentFlags),
    /// Full pipeline: data, training, fusion, evaluation, report.
    Run(ExperimentFlags),
    /// Print the two-stage decision-matrix audit for three mass triples.
    Tables {
        /// Combination rule: disjunctive or conjunctive.
        #[arg(long, default_value = "disjunctive")]
        mode: String,
        /// Three `a,b,c` singleton mass triples (default: the worked example).
        triples: Vec<String>,
    },
    /// Recompute MAE / MAPE for every series in a series.csv.
    Eval {
        /// Path to a series.csv produced by `run` or `fuse`.
        series: PathBuf,
    },
}

/// Experiment settings as flags. Layering: defaults, then `--config` file,
/// then these flags, then the `EVIFUSE_SEED` environment variable.
#[derive(Args)]
struct ExperimentFlags {
    /// Flat `key = value` config file applied before the other flags.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Hourly CSV dataset; omit to synthesize one from the seed.
    #[arg(long, value_name = "PATH")]
    data: Option<String>,
    /// Base RNG seed (predictor i trains with seed + i).
    #[arg(long, value_name = "N")]
    seed: Option<String>,
    /// Hours to synthesize when no dataset is given.
    #[arg(long, value_name = "N")]
    hours: Option<String>,
    /// Chronological training fraction in (0, 1).
    #[arg(long, value_name = "F")]
    train_fraction: Option<String>,
    /// Trailing window length for the third predictor (>= 2).
    #[arg(long, value_name = "N")]
    window: Option<String>,
    /// Forecast horizon in hours.
    #[arg(long, value_name = "N")]
    horizon: Option<String>,
    /// Fusion origin timestamp (RFC 3339); default: latest full horizon.
    #[arg(long, value_name = "TS")]
    origin: Option<String>,
    /// LSTM hidden units per layer.
    #[arg(long, value_name = "N")]
    hidden_size: Option<String>,
    /// Stacked LSTM layers.
    #[arg(long, value_name = "N")]
    num_layers: Option<String>,
    /// Training epochs.
    #[arg(long, value_name = "N")]
    epochs: Option<String>,
    /// Gradient-descent learning rate.
    #[arg(long, value_name = "F")]
    learning_rate: Option<String>,
    /// Backpropagation truncation length, or `none`.
    #[arg(long, value_name = "N|none")]
    truncation_length: Option<String>,
    /// Global gradient-norm clip, or `none`.
    #[arg(long, value_name = "F|none")]
    clip_norm: Option<String>,
    /// Combination rule: disjunctive or conjunctive.
    #[arg(long, value_name = "RULE")]
    mode: Option<String>,
    /// Directory for models, report.json and series.csv.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<String>,
}

impl ExperimentFlags {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = ExperimentConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        let overrides = [
            ("data", &self.data),
            ("seed", &self.seed),
            ("synth_hours", &self.hours),
            ("train_fraction", &self.train_fraction),
            ("window", &self.window),
            ("horizon", &self.horizon),
            ("origin", &self.origin),
            ("hidden_size", &self.hidden_size),
            ("num_layers", &self.num_layers),
            ("epochs", &self.epochs),
            ("learning_rate", &self.learning_rate),
            ("truncation_length", &self.truncation_length),
            ("clip_norm", &self.clip_norm),
            ("mode", &self.mode),
            ("output_dir", &self.output_dir),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                config.apply_key(key, value)?;
            }
        }
        config.apply_env()?;
        Ok(config)
    }
}

fn run_summary(output: &RunOutput) -> String {
    let fusion = &output.report.fusion;
    format!(
        "selected {{{}}} with mass {:.4} (belief {:.4}, plausibility {:.4})\n\
         fused horizon MAE {:.3} kW, MAPE {:.3}%\n\
         wrote {}\n\
         wrote {}\n",
        fusion.selected,
        fusion.combined_mass[&fusion.selected],
        fusion.selected_belief,
        fusion.selected_plausibility,
        fusion.fused_mae_kw,
        fusion.fused_mape_pct,
        output.report_path.display(),
        output.series_path.display(),
    )
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Synth { seed, hours, out } => {
            let seed = match std::env::var(SEED_ENV_VAR) {
                Ok(value) => value.parse().map_err(|_| {
                    CliError::Config(format!("bad value for `{SEED_ENV_VAR}`: `{value}`"))
                })?,
                Err(_) => seed,
            };
            Ok(cmd_synth(seed, hours, &out)? + "\n")
        }
        Command::Train(flags) => {
            let output = cmd_train(&flags.resolve()?)?;
            Ok(output.lines.join("\n") + "\n")
        }
        Command::Fuse(flags) => Ok(run_summary(&cmd_fuse(&flags.resolve()?)?)),
        Command::Run(flags) => Ok(run_summary(&cmd_run(&flags.resolve()?)?)),
        Command::Tables { mode, triples } => {
            let mode: FusionMode = mode.parse()?;
            let triples = match triples.len() {
                0 => DEFAULT_TRIPLES,
                3 => {
                    let mut parsed = [[0.0; 3]; 3];
                    for (slot, text) in parsed.iter_mut().zip(&triples) {
                        *slot = parse_triple(text)?;
                    }
                    parsed
                }
                n => {
                    return Err(CliError::Config(format!(
                        "expected zero or three mass triples, found {n}"
                    )))
                }
            };
            cmd_tables(&triples, mode)
        }
        Command::Eval { series } => Ok(cmd_eval(&series)? + "\n"),
    }
}

fn main() {
    match dispatch(Cli::parse()) {
        Ok(output) => print!("{output}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
