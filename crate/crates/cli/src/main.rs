use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use debughd_cli::{
    cmd_classify, cmd_compare, cmd_gen_data, cmd_monitor_sim, cmd_ssim, cmd_sweep_hyperd,
    cmd_train, CliError, RunConfig, OUT_ENV,
};

#[derive(Parser)]
#[command(name = "debughd", version, about = "Corruption identification with binary HDC classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the clean corpus and the corrupted held-out images.
    GenData(Common),
    /// Train one method and write its model and metrics.
    Train(Common),
    /// Vanilla HDC accuracy across hypervector dimensions.
    SweepHyperd {
        #[command(flatten)]
        common: Common,
        /// Comma-separated dimensions.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
    },
    /// SSIM matrix between corruption kinds and a pruning suggestion.
    Ssim(Common),
    /// Sliding-window trigger simulation on an ID-then-corrupted stream.
    MonitorSim(Common),
    /// Top-1/2/3 of every method on the same scenario.
    Compare(Common),
    /// Classify an image set with a saved model.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long, env = OUT_ENV, default_value = "out")]
        out: PathBuf,
    },
}

/// Flags shared by the experiment commands; they override the config file.
#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = OUT_ENV, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hyper_d: Option<usize>,
    /// vanilla, debughd, retrain or mlp-ref.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated corruption kinds.
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<String>>,
    #[arg(long)]
    severity: Option<u8>,
    #[arg(long)]
    corpus_images: Option<usize>,
    #[arg(long)]
    surrogate_images: Option<usize>,
    /// hidden or logits; searched when omitted.
    #[arg(long)]
    tap: Option<String>,
    #[arg(long)]
    include_id: bool,
    #[arg(long)]
    monitor_window: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                })*
            };
        }
        set!(seed, hyper_d, method, kinds, severity, corpus_images, surrogate_images, monitor_window);
        if self.tap.is_some() {
            cfg.tap = self.tap.clone();
        }
        if self.include_id {
            cfg.include_id = true;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::GenData(c) => cmd_gen_data(&c.resolve()?, &c.out),
        Command::Train(c) => cmd_train(&c.resolve()?, &c.out),
        Command::SweepHyperd { common, dims } => {
            let mut cfg = common.resolve()?;
            if let Some(d) = dims {
                cfg.sweep_dims = d;
            }
            cmd_sweep_hyperd(&cfg, &common.out)
        }
        Command::Ssim(c) => cmd_ssim(&c.resolve()?, &c.out),
        Command::MonitorSim(c) => cmd_monitor_sim(&c.resolve()?, &c.out),
        Command::Compare(c) => cmd_compare(&c.resolve()?, &c.out),
        Command::Classify { model, images, out } => cmd_classify(&model, &images, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
