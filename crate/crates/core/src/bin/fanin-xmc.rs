use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fanin_xmc::cli::{self, ClusterMode, SweepAxis, SynthArgs};
use fanin_xmc::Error;

#[derive(Parser)]
#[command(name = "fanin-xmc", version, about = "Sparse-head extreme multi-label training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print `name,N,L,Ntest,Lbar,Lhat` rows for datasets.
    Stats {
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        /// Test split whose size fills the Ntest column of the first row.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Partition labels into clusters for the auxiliary head.
    Cluster {
        dataset: PathBuf,
        /// Number of clusters (power of two); defaults to about L/100.
        #[arg(short)]
        k: Option<usize>,
        #[arg(long, default_value = "balanced", value_parser = ["balanced", "random"])]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train from a `key = value` config file.
    Train { config: PathBuf },
    /// Score a checkpoint on a dataset.
    Evaluate {
        checkpoint: PathBuf,
        dataset: PathBuf,
        /// Training set used to estimate label propensities.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Label clustering; adds meta-head precision when the model has an aux head.
        #[arg(long)]
        clustering: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
        k: Vec<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Train once per value of one hyperparameter.
    Sweep {
        config: PathBuf,
        #[arg(long, value_parser = ["rewire_interval", "fan_in", "aux_cutoff", "intermediate_size"])]
        axis: String,
        /// Comma-separated values; `never` is accepted for aux_cutoff.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Run configurations concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Training-memory accounting for dense vs fixed fan-in heads.
    Memory {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        labels: usize,
        /// Fan-in; defaults to the dense layer (F = dim).
        #[arg(long)]
        fan_in: Option<usize>,
        #[arg(long, default_value_t = 32)]
        weight_bits: u32,
        #[arg(long, default_value_t = 16)]
        index_bits: u32,
    },
    /// Generate a synthetic long-tailed train/test pair.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5000)]
        train: usize,
        #[arg(long, default_value_t = 2000)]
        test: usize,
        #[arg(long, default_value_t = 1000)]
        labels: usize,
        #[arg(long, default_value_t = 2000)]
        features: usize,
        #[arg(long, default_value_t = 1.2)]
        zipf: f64,
        #[arg(long, default_value_t = 3)]
        labels_per_instance: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cmd: Command) -> Result<(), Error> {
    let stdout = &mut std::io::stdout().lock();
    match cmd {
        Command::Stats { datasets, test } => {
            cli::cmd_stats(&datasets, test.as_deref(), stdout)?;
        }
        Command::Cluster { dataset, k, mode, seed, out } => {
            let mode: ClusterMode = mode.parse()?;
            cli::cmd_cluster(&dataset, k, mode, seed, &out, stdout)?;
        }
        Command::Train { config } => {
            let summary = cli::cmd_train(&config, &mut std::io::stderr())?;
            print!("{}", summary.metrics.to_csv());
        }
        Command::Evaluate { checkpoint, dataset, train, clustering, k, out } => {
            cli::cmd_evaluate(
                &checkpoint,
                &dataset,
                train.as_deref(),
                clustering.as_deref(),
                &k,
                out.as_deref(),
                stdout,
            )?;
        }
        Command::Sweep { config, axis, values, parallel } => {
            let axis: SweepAxis = axis.parse()?;
            cli::cmd_sweep(&config, axis, &values, parallel, stdout)?;
        }
        Command::Memory { dim, labels, fan_in, weight_bits, index_bits } => {
            cli::cmd_memory(dim, labels, fan_in, weight_bits, index_bits, stdout)?;
        }
        Command::Synth { out, train, test, labels, features, zipf, labels_per_instance, seed } => {
            let args = SynthArgs {
                num_train: train,
                num_test: test,
                num_labels: labels,
                num_features: features,
                zipf_exponent: zipf,
                labels_per_instance,
                seed,
                ..SynthArgs::default()
            };
            cli::cmd_synth(&args, &out, stdout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
