use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use semsheaf::io::{read_json, read_network, write_atomic};
use semsheaf::pipeline::{
    run_analyze, run_budget_sweep, run_dict_learn, run_gen, run_pipeline, run_sheaf_learn, sweep_csv,
};
use semsheaf::synthetic::SyntheticSpec;
use semsheaf::{Budgets, DictionaryInit, EdgeRule, Error, LearnConfig};

#[derive(Parser)]
#[command(name = "semsheaf", version, about = "Shared dictionaries and orthogonal sheaves for agent embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic network bundle from a spec file.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Learn the shared dictionary and per-agent sparse codes.
    DictLearn {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        learn: LearnArgs,
    },
    /// Learn edges and restriction maps.
    SheafLearn {
        #[arg(long)]
        bundle: PathBuf,
        /// Output directory of `dict-learn`.
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Align the raw embeddings instead of the denoised ones.
        #[arg(long)]
        baseline: bool,
        /// Sheaf JSON file to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        learn: LearnArgs,
    },
    /// Score learned artifacts, or run a budget sweep with `--sweep`.
    Analyze {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long)]
        sheaf: Option<PathBuf>,
        #[arg(long)]
        baseline_sheaf: Option<PathBuf>,
        /// `budget=30,70,100` re-learns everything per budget and writes a CSV.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        bin_width: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        learn: LearnArgs,
    },
    /// Every stage in order.
    Pipeline {
        #[arg(long, conflicts_with = "bundle")]
        spec: Option<PathBuf>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        bin_width: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        learn: LearnArgs,
    },
}

/// Hyperparameter flags. Each one overrides the value read from `--config`.
#[derive(Args, Default)]
struct LearnArgs {
    /// JSON file with a `LearnConfig`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// One budget for every agent, or a comma-separated list per agent.
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    eps_abs: Option<f64>,
    #[arg(long)]
    eps_rel: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `topk:N` or `threshold:T`.
    #[arg(long)]
    edge_rule: Option<EdgeRule>,
    /// `gaussian` or `data_columns`.
    #[arg(long)]
    init: Option<DictionaryInit>,
}

fn parse_budgets(s: &str) -> Result<Budgets, Error> {
    let parsed: Result<Vec<usize>, _> = s.split(',').map(|t| t.trim().parse::<usize>()).collect();
    match parsed {
        Ok(v) if v.len() == 1 => Ok(Budgets::Uniform(v[0])),
        Ok(v) => Ok(Budgets::PerAgent(v)),
        Err(_) => Err(Error::Config(format!("bad budget list `{s}`"))),
    }
}

impl LearnArgs {
    fn resolve(&self) -> Result<LearnConfig, Error> {
        let mut cfg: LearnConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => LearnConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        over!(gamma, rho, alpha0, mu, max_iters, eps_abs, eps_rel, seed, edge_rule, init);
        if let Some(b) = &self.budget {
            cfg.budgets = parse_budgets(b)?;
        }
        Ok(cfg)
    }
}

fn parse_sweep(s: &str) -> Result<Vec<usize>, Error> {
    let (key, values) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("sweep `{s}` must look like budget=30,70")))?;
    if key.trim() != "budget" {
        return Err(Error::Config(format!("unsupported sweep variable `{key}`")));
    }
    match parse_budgets(values)? {
        Budgets::Uniform(b) => Ok(vec![b]),
        Budgets::PerAgent(bs) => Ok(bs),
    }
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Error> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("analyze needs --{flag} unless --sweep is given")))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen { spec, out, seed } => {
            let mut spec: SyntheticSpec = read_json(&spec)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let net = run_gen(&spec, &out)?;
            info!("wrote {} agents to {}", net.names.len(), out.display());
        }
        Command::DictLearn { bundle, out, learn } => {
            let fit = run_dict_learn(&bundle, &learn.resolve()?, &out)?;
            info!(
                "dictionary learned in {} iterations (converged: {})",
                fit.report.iterations, fit.report.converged
            );
        }
        Command::SheafLearn { bundle, dict, baseline, out, learn } => {
            let artifact = run_sheaf_learn(&bundle, dict.as_deref(), &learn.resolve()?, baseline, &out)?;
            info!("kept {} edges", artifact.sheaf.edges.len());
        }
        Command::Analyze { bundle, dict, sheaf, baseline_sheaf, sweep, bin_width, out, learn } => {
            if let Some(sweep) = sweep {
                let budgets = parse_sweep(&sweep)?;
                let net = read_network(&bundle)?;
                let rows = run_budget_sweep(&net, &learn.resolve()?, &budgets)?;
                write_atomic(&out.join("sweep.csv"), sweep_csv(&rows).as_bytes())?;
            } else {
                run_analyze(
                    &bundle,
                    need(&dict, "dict")?,
                    need(&sheaf, "sheaf")?,
                    baseline_sheaf.as_deref(),
                    bin_width,
                    &out,
                )?;
            }
        }
        Command::Pipeline { spec, bundle, bin_width, out, learn } => {
            let spec: Option<SyntheticSpec> = spec.as_deref().map(read_json).transpose()?;
            let spec = spec.map(|mut s| {
                if let Some(seed) = learn.seed {
                    s.seed = seed;
                }
                s
            });
            run_pipeline(spec.as_ref(), bundle.as_deref(), &learn.resolve()?, bin_width, &out)?;
        }
    }
    Ok(())
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    let report = serde_json::json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{report}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("UsageError", e.to_string(), 1),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), e.exit_code() as u8),
    }
}
