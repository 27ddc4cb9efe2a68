//! `sgl`: structured graph learning from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgl_core::{
    run_cluster, run_ssl, synthesize, write_csv, BankSpec, DataFormat, InputSource, Mode,
    RunConfig, RunReport, SglError, SynthKind, SynthSpec,
};

#[derive(Parser)]
#[command(
    name = "sgl",
    version,
    about = "Structured graph learning for clustering and semi-supervised classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a graph and read clusters from its connected components.
    Cluster(CommonArgs),
    /// Propagate a stratified sample of known labels over a learned graph.
    Ssl {
        #[command(flatten)]
        common: CommonArgs,
        /// Share of each class that receives a known label.
        #[arg(long)]
        label_fraction: f64,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        label_seed: u64,
    },
    /// Write a labeled synthetic dataset as CSV.
    Synth {
        #[arg(long)]
        kind: SynthKind,
        #[arg(long, default_value_t = 150)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        separation: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Data file; a trailing `label` column is used as ground truth.
    #[arg(long, required_unless_present = "synth", conflicts_with = "synth")]
    input: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: DataFormat,
    /// Label sidecar for dense input, one integer per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Use a built-in generator instead of an input file.
    #[arg(long)]
    synth: Option<SynthKind>,
    #[arg(long, default_value_t = 150)]
    synth_n: usize,
    #[arg(long, default_value_t = 0)]
    synth_seed: u64,
    #[arg(long)]
    c: usize,
    #[arg(long)]
    k: usize,
    /// Comma-separated kernels, e.g. `gaussian:1,linear,poly:1:2`.
    #[arg(long)]
    kernels: Option<BankSpec>,
    #[arg(long)]
    multi_kernel: bool,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    no_gamma_adapt: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Standardize each feature before building kernels.
    #[arg(long)]
    zscore: bool,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration history as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

impl CommonArgs {
    fn into_config(self, mode: Mode) -> RunConfig {
        let input = match self.synth {
            Some(kind) => {
                InputSource::Synthetic(SynthSpec::new(kind, self.synth_n, self.synth_seed))
            }
            None => InputSource::File {
                path: self.input.expect("clap requires --input without --synth"),
                format: self.format,
                labels: self.labels,
            },
        };
        let mut cfg = RunConfig::new(mode, input, self.c, self.k);
        cfg.kernels = self.kernels;
        cfg.multi_kernel = mode == Mode::Ssl || self.multi_kernel;
        cfg.gamma0 = self.gamma0;
        cfg.gamma_adapt = !self.no_gamma_adapt;
        cfg.seed = self.seed;
        if let Some(m) = self.max_outer {
            cfg.max_outer = m;
        }
        cfg.zscore = self.zscore;
        cfg.emit_history = self.history.is_some();
        cfg.history_path = self.history;
        cfg.output = self.out;
        cfg
    }
}

fn summarize(report: &RunReport) {
    if let Some(m) = &report.metrics {
        eprintln!("acc {:.4}  nmi {:.4}  purity {:.4}", m.acc, m.nmi, m.purity);
    }
    if let Some(ssl) = &report.ssl {
        match (ssl.accuracy_mean, ssl.accuracy_std) {
            (Some(mean), Some(std)) => eprintln!(
                "unlabeled accuracy {mean:.4} ± {std:.4} over {} repeats",
                ssl.repeats.len()
            ),
            _ => eprintln!("every sample is labeled; no unlabeled accuracy"),
        }
    }
    eprintln!(
        "components {}  converged {}  iterations {}  time {:.3}s",
        report.components, report.converged, report.iterations, report.wall_time_secs
    );
}

fn run(cli: Cli) -> Result<(), SglError> {
    let report = match cli.command {
        Command::Cluster(common) => run_cluster(&common.into_config(Mode::Cluster))?,
        Command::Ssl {
            common,
            label_fraction,
            repeats,
            label_seed,
        } => {
            let mut cfg = common.into_config(Mode::Ssl);
            cfg.label_fraction = Some(label_fraction);
            cfg.repeats = repeats;
            cfg.label_seed = label_seed;
            run_ssl(&cfg)?
        }
        Command::Synth {
            kind,
            n,
            seed,
            classes,
            noise,
            separation,
            out,
        } => {
            let defaults = SynthSpec::new(kind, n, seed);
            let spec = SynthSpec {
                classes: classes.unwrap_or(defaults.classes),
                noise: noise.unwrap_or(defaults.noise),
                separation: separation.unwrap_or(defaults.separation),
                ..defaults
            };
            let ds = synthesize(&spec)?;
            return write_csv(&out, &ds.x, ds.truth.as_deref());
        }
    };
    if report.config.output.is_none() {
        println!("{}", report.to_json()?);
    }
    summarize(&report);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
