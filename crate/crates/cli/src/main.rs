mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cascade_frontier::diagnostics::DEFAULT_BINS;
use cascade_frontier::harness::config_hash;
use cascade_frontier::scorers::ScorerKind;
use cascade_frontier::search::Optimizer;
use cascade_frontier::ModelId;
use clap::{Args, Parser, Subcommand};

use commands::{Artifact, Output};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "cascade", version, about = "Cost-quality frontiers for LLM threshold cascades")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    table: Option<PathBuf>,
    #[arg(long, global = true)]
    token_logs: Option<PathBuf>,
    #[arg(long, global = true)]
    features: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Model to leave out of the pool (repeatable).
    #[arg(long, global = true)]
    exclude: Vec<String>,
    /// lnsp, mtp, prob_margin, atn or mtn.
    #[arg(long, global = true)]
    scorer: Option<ScorerKind>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true)]
    n_tau: Option<usize>,
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    #[arg(long, global = true)]
    splits: Option<usize>,
    #[arg(long, global = true)]
    calib_fraction: Option<f64>,
    /// Seeds both the split plan and the search.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    population: Option<usize>,
    #[arg(long, global = true)]
    max_chain: Option<usize>,
    /// nsga2 or random.
    #[arg(long, global = true, value_parser = parse_optimizer)]
    optimizer: Option<Optimizer>,
    /// Router L2 strength.
    #[arg(long, global = true)]
    reg: Option<f64>,
    #[arg(long, global = true)]
    w_points: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Load and validate the inputs, write the merged table.
    Ingest,
    /// Score token logs with the configured scorer.
    Score {
        /// Also write every base scorer.
        #[arg(long)]
        all: bool,
    },
    /// Non-dominated model pool.
    Pool,
    /// Threshold sweep for one pair.
    Frontier {
        #[arg(long)]
        low: Option<String>,
        #[arg(long)]
        high: Option<String>,
    },
    /// Pairwise envelope, per-pair frontiers and switching points.
    Envelope,
    /// Threshold search over the full pool chain.
    Chain,
    /// Search over cost-ordered subsequences.
    Subseq,
    /// Router and embedding-cascade baselines on one split.
    Router,
    /// Benefit curves, cost-score correlations and AUROC per pair.
    Diagnose {
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
    /// Synthetic instance with analytic checks.
    Synth {
        /// concave, nonconcave, threestage, costlinked, jittered or useless_middle.
        preset: String,
        #[arg(long, default_value_t = 20_000)]
        n: usize,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Repeated-split experiment with the full report bundle.
    Experiment {
        #[arg(long)]
        calibration_sensitivity: bool,
        #[arg(long)]
        grid_sensitivity: bool,
    },
}

fn parse_optimizer(s: &str) -> Result<Optimizer, String> {
    match s {
        "nsga2" => Ok(Optimizer::Nsga2),
        "random" => Ok(Optimizer::Random),
        _ => Err(format!("unknown optimizer `{s}` (nsga2 or random)")),
    }
}

fn build_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($src:expr => $dst:expr) => {
            if let Some(v) = $src.clone() {
                $dst = v;
            }
        };
    }
    if g.table.is_some() {
        cfg.table = g.table.clone();
    }
    if g.token_logs.is_some() {
        cfg.token_logs = g.token_logs.clone();
    }
    if g.features.is_some() {
        cfg.features = g.features.clone();
    }
    set!(g.out => cfg.out_dir);
    if !g.exclude.is_empty() {
        cfg.exclude = g.exclude.iter().map(ModelId::new).collect::<cascade_frontier::Result<_>>()?;
    }
    set!(g.scorer => cfg.scorer);
    set!(g.top_k => cfg.top_k);
    set!(g.n_tau => cfg.n_tau);
    set!(g.grid_points => cfg.grid_points);
    set!(g.splits => cfg.plan.n_splits);
    set!(g.calib_fraction => cfg.plan.calib_fraction);
    if let Some(s) = g.seed {
        cfg.plan.seed = s;
        cfg.search.seed = s;
    }
    set!(g.trials => cfg.search.trials);
    set!(g.population => cfg.search.population);
    set!(g.max_chain => cfg.search.max_chain_length);
    set!(g.optimizer => cfg.search.optimizer);
    set!(g.reg => cfg.router.reg_strength);
    set!(g.w_points => cfg.router.w_points);
    Ok(cfg)
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<Output> {
    match command {
        Command::Ingest => commands::ingest(cfg),
        Command::Score { all } => commands::score(cfg, *all),
        Command::Pool => commands::pool(cfg),
        Command::Frontier { low, high } => commands::frontier(cfg, low.clone(), high.clone()),
        Command::Envelope => commands::envelope(cfg),
        Command::Chain => commands::chain(cfg, false),
        Command::Subseq => commands::chain(cfg, true),
        Command::Router => commands::router(cfg),
        Command::Diagnose { bins } => commands::diagnose(cfg, *bins),
        Command::Synth { preset, n, budget } => commands::synth(cfg, preset, *n, *budget),
        Command::Experiment {
            calibration_sensitivity,
            grid_sensitivity,
        } => commands::experiment(cfg, *calibration_sensitivity, *grid_sensitivity),
    }
}

fn provenance(command: &Command, cfg: &RunConfig, hash: &str) -> Result<String> {
    Ok(format!(
        "# config_hash: {hash}\ncrate_version: {}\ncommand: {command:?}\nconfig:\n{}",
        env!("CARGO_PKG_VERSION"),
        toml::to_string(cfg).context("config: cannot serialize")?
    ))
}

fn write_files(dir: &Path, hash: &str, files: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("out: cannot create {}", dir.display()))?;
    for a in files {
        let path = dir.join(&a.name);
        let body = format!("# config_hash: {hash}\n{}", a.body);
        std::fs::write(&path, body).with_context(|| format!("out: cannot write {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli.global)?;
    cfg.validate()?;
    if let Some(w) = cli.global.workers {
        if w == 0 {
            bail!("workers: must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("workers: cannot build thread pool")?;
    }
    // The output location does not change results, so it stays out of the hash.
    let mut hashed = cfg.clone();
    hashed.out_dir = PathBuf::new();
    let hash = config_hash(&(format!("{:?}", cli.command), &hashed))?;
    let prov = provenance(&cli.command, &cfg, &hash)?;
    match dispatch(&cli.command, &cfg)? {
        Output::Files(files) => {
            write_files(&cfg.out_dir, &hash, &files)?;
            std::fs::write(cfg.out_dir.join("provenance.txt"), prov)
                .with_context(|| format!("out: cannot write {}", cfg.out_dir.display()))?;
        }
        Output::Experiment(mut report, extra) => {
            report.config_hash = hash.clone();
            std::fs::create_dir_all(&cfg.out_dir)
                .with_context(|| format!("out: cannot create {}", cfg.out_dir.display()))?;
            let command = format!("{:?}", cli.command);
            report.write_bundle(&cfg.out_dir, &[("command".to_string(), command)])?;
            write_files(&cfg.out_dir, &hash, &extra)?;
        }
    }
    log::info!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
