//! `streamkpca`: run, sweep and certify streaming kernel PCA experiments.
//!
//! Exit codes: 0 success, 1 a check failed, 2 config or parse error, 3 every trial aborted.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use streamkpca::checks::CheckStatus;
use streamkpca::harness::{
    cmd_check, cmd_run, cmd_sweep, EtaPolicy, FeatureMapConfig, GeneratorConfig, InitKind,
    RunConfig, RunReport,
};
use streamkpca::{Error, FeatureKind};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ALL_ABORTED: u8 = 3;

#[derive(Parser)]
#[command(name = "streamkpca", version, about = "Streaming kernel PCA experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trials of one configuration and write a report.
    Run(RunArgs),
    /// Repeat a run across spectral ratios and emit a CSV table.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated ratios, at least two.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
    /// Certify a trajectory file (needs its .meta.json sidecar).
    Check { trajectory: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_name = "identity|poly2|rff")]
    phi: Option<FeatureKind>,
    /// Input dimension d.
    #[arg(long)]
    dim: Option<usize>,
    /// Feature dimension m (rff only).
    #[arg(long)]
    feature_dim: Option<usize>,
    /// RBF bandwidth σ (rff only).
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Stream length.
    #[arg(long)]
    n: Option<usize>,
    /// Population ratio λ₁/λ₂.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `auto` or a fixed learning rate.
    #[arg(long)]
    eta: Option<EtaPolicy>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_name = "random|vstar")]
    init: Option<InitKind>,
    /// Record snapshots and run the invariant suite on every trial.
    #[arg(long)]
    check: bool,
    /// Output directory.
    #[arg(long, env = "STREAMKPCA_OUT_DIR")]
    out: Option<PathBuf>,
}

fn default_config() -> RunConfig {
    RunConfig {
        feature_map: FeatureMapConfig::Identity,
        generator: GeneratorConfig {
            input_dim: 8,
            n: 1000,
            ratio: 10.0,
            lambda1: 1.0,
            tail_decay: 1.0,
        },
        eta: EtaPolicy::Auto,
        init: InitKind::Random,
        seed: 0,
        trials: 1,
        checks: false,
        out: None,
        ratios: None,
    }
}

impl RunArgs {
    fn merge(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => default_config(),
        };
        if let Some(kind) = self.phi {
            cfg.feature_map = match (kind, &cfg.feature_map) {
                (FeatureKind::Identity, _) => FeatureMapConfig::Identity,
                (FeatureKind::Poly2, _) => FeatureMapConfig::Poly2,
                (FeatureKind::Rff, rff @ FeatureMapConfig::Rff { .. }) => rff.clone(),
                (FeatureKind::Rff, _) => FeatureMapConfig::Rff {
                    feature_dim: 256,
                    bandwidth: 1.0,
                    seed: None,
                },
            };
        }
        if self.feature_dim.is_some() || self.bandwidth.is_some() {
            match &mut cfg.feature_map {
                FeatureMapConfig::Rff {
                    feature_dim,
                    bandwidth,
                    ..
                } => {
                    *feature_dim = self.feature_dim.unwrap_or(*feature_dim);
                    *bandwidth = self.bandwidth.unwrap_or(*bandwidth);
                }
                _ => {
                    return Err(Error::Config(
                        "--feature-dim and --bandwidth apply to --phi rff only".into(),
                    ))
                }
            }
        }
        let g = &mut cfg.generator;
        g.input_dim = self.dim.unwrap_or(g.input_dim);
        g.n = self.n.unwrap_or(g.n);
        g.ratio = self.ratio.unwrap_or(g.ratio);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.eta = self.eta.unwrap_or(cfg.eta);
        cfg.trials = self.trials.unwrap_or(cfg.trials);
        cfg.init = self.init.unwrap_or(cfg.init);
        cfg.checks |= self.check;
        if self.out.is_some() {
            cfg.out.clone_from(&self.out);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric { .. } => EXIT_ALL_ABORTED,
        _ => EXIT_CONFIG,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn print_run_summary(report: &RunReport) {
    let a = &report.aggregate;
    println!(
        "trials: {} completed, {} aborted; d = {}, m = {}",
        a.completed, a.aborted, report.input_dim, report.feature_dim
    );
    if let Some(q) = &a.alignment_error {
        println!(
            "alignment error: median {:.3e} (q10 {:.3e}, q90 {:.3e})",
            q.median, q.q10, q.q90
        );
    }
    if let (Some(f), Some(allow)) = (a.failure_fraction, a.failure_allowance) {
        println!("final-bound failure fraction: {f} (allowance {allow:.4})");
    }
    if a.checked_trials > 0 {
        println!(
            "checks: {} of {} trials failed",
            a.failed_check_trials, a.checked_trials
        );
    }
    for t in &report.trials {
        if let Some(err) = &t.error {
            eprintln!("trial {} aborted: {err}", t.trial);
        }
        if let Some(c) = &t.checks {
            for f in c.failures() {
                eprintln!("trial {} failed check {} at {:?}", t.trial, f.name, f.location);
            }
        }
    }
}

fn run(args: &RunArgs) -> ExitCode {
    let cfg = match args.merge() {
        Ok(cfg) => cfg,
        Err(e) => return fail(e),
    };
    let report = match cmd_run(&cfg, cfg.out.as_deref()) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    match &cfg.out {
        Some(dir) => {
            print_run_summary(&report);
            println!("report written to {}", dir.join("report.json").display());
        }
        None => println!("{}", report.to_json()),
    }
    if report.all_aborted() {
        ExitCode::from(EXIT_ALL_ABORTED)
    } else if report.any_check_failed() {
        ExitCode::from(EXIT_CHECK_FAILED)
    } else {
        ExitCode::SUCCESS
    }
}

fn sweep(args: &RunArgs, ratios: &Option<Vec<f64>>) -> ExitCode {
    let mut cfg = match args.merge() {
        Ok(cfg) => cfg,
        Err(e) => return fail(e),
    };
    if ratios.is_some() {
        cfg.ratios.clone_from(ratios);
    }
    match cmd_sweep(&cfg, cfg.out.as_deref()) {
        Ok(table) => {
            print!("{}", table.to_csv());
            if table.rows.iter().all(|r| r.completed == 0) {
                ExitCode::from(EXIT_ALL_ABORTED)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => fail(e),
    }
}

fn check(path: &Path) -> anyhow::Result<ExitCode> {
    let report = match cmd_check(path) {
        Ok(r) => r,
        Err(e) => return Ok(fail(e)),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&report).context("serializing check report")?
    );
    let mut failed = false;
    for c in &report.checks {
        if c.status == CheckStatus::Fail {
            failed = true;
            eprintln!("FAIL {} at {:?}", c.name, c.location);
        }
    }
    Ok(if failed {
        ExitCode::from(EXIT_CHECK_FAILED)
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep { run, ratios } => sweep(run, ratios),
        Command::Check { trajectory } => check(trajectory).unwrap_or_else(|e| {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }),
    }
}
