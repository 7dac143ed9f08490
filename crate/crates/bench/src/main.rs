use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cda_bench::{run_experiment, write_outputs, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "cda-bench", version, about = "Run calibrated data-augmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Intercept-only probit with a handful of successes.
    ProbitIntercept(Common),
    /// Probit regression on synthetic rare-event data.
    ProbitReg(Common),
    /// Logistic regression; mh_mvn is available as a baseline.
    LogisticReg(Common),
    /// Collapsed intercept-only logistic across sample sizes.
    LogisticScaling(Common),
    /// Full-data versus subsampled calibrated logistic.
    LogisticSubsample(Common),
    /// Hierarchical binomial with unit-specific logits.
    HierBinomial(Common),
    /// Poisson log-normal regression with per-unit random effects.
    PoissonLognormal(Common),
    /// Describe every configuration key.
    Keys,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file, applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated sample sizes, e.g. 1e4 or 100,1e4.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    burn: Option<String>,
    #[arg(long)]
    adapt: Option<String>,
    /// current | running-mean
    #[arg(long)]
    adapt_at: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Comma-separated: da, cda, cda_nomh, mh_mvn.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// A number or auto.
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    subsample_frac: Option<String>,
    /// CSV with header y,N,x1..xp.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    write_traces: bool,
    #[arg(long)]
    threads: Option<String>,
    /// Any other key, e.g. --set theta=-9,1. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn build(&self, kind: ExperimentKind) -> cda_bench::Result<(ExperimentConfig, Option<String>)> {
        let mut cfg = ExperimentConfig::defaults(kind);
        let text = match &self.config {
            Some(p) => Some(std::fs::read_to_string(p)?),
            None => None,
        };
        if let Some(t) = &text {
            cfg.apply_file(t)?;
        }
        let flags = [
            ("n", &self.n),
            ("iters", &self.iters),
            ("burn", &self.burn),
            ("adapt", &self.adapt),
            ("adapt_at", &self.adapt_at),
            ("seed", &self.seed),
            ("sampler", &self.sampler),
            ("replicates", &self.replicates),
            ("out", &self.out),
            ("epsilon", &self.epsilon),
            ("lambda", &self.lambda),
            ("subsample_frac", &self.subsample_frac),
            ("data", &self.data),
            ("threads", &self.threads),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        if self.write_traces {
            cfg.write_traces = true;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| cda_bench::Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok((cfg, text))
    }
}

fn run(kind: ExperimentKind, args: &Common) -> cda_bench::Result<bool> {
    let (cfg, text) = args.build(kind)?;
    let output = run_experiment(&cfg)?;
    write_outputs(&cfg, &output, text.as_deref())?;
    for r in &output.records {
        eprintln!(
            "{:<48} acceptance {:.3}  ESS median {:>9.1}  ({:.1}s)",
            r.id,
            r.summary.acceptance,
            r.summary.ess_median,
            r.timings.total().as_secs_f64()
        );
    }
    for f in &output.failures {
        eprintln!("FAILED {}: {}", f.id, f.message);
    }
    eprintln!("wrote {}", cfg.out.display());
    Ok(output.failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::ProbitIntercept(a) => (ExperimentKind::ProbitIntercept, a),
        Command::ProbitReg(a) => (ExperimentKind::ProbitReg, a),
        Command::LogisticReg(a) => (ExperimentKind::LogisticReg, a),
        Command::LogisticScaling(a) => (ExperimentKind::LogisticScaling, a),
        Command::LogisticSubsample(a) => (ExperimentKind::LogisticSubsample, a),
        Command::HierBinomial(a) => (ExperimentKind::HierBinomial, a),
        Command::PoissonLognormal(a) => (ExperimentKind::PoissonLognormal, a),
        Command::Keys => {
            for (k, doc) in cda_bench::config::KEYS {
                println!("{k:<16} {doc}");
            }
            return ExitCode::SUCCESS;
        }
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
