//! `lobsim`: runs scenarios, impact studies, training and evaluation, and
//! renders reports from the files they write.

mod report;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use lobsim_core::rl::checkpoint;
use lobsim_core::runner::experiments::architecture_for;
use lobsim_core::runner::output::{write_evaluation, write_impact, write_scenario};
use lobsim_core::runner::{evaluate_policy, impact_study, run_scenario, train_policy, RunError, ScenarioConfig};
use tracing::info;

#[derive(Debug, Parser)]
#[command(name = "lobsim", version, about = "Hawkes limit order book simulator")]
struct Cli {
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario over its seeds and write stats tables and event logs.
    Simulate(RunArgs),
    /// Run a TWAP scenario and fit the impact curve and its decay.
    Impact {
        #[command(flatten)]
        run: RunArgs,
        /// Quantity bins of the impact curve.
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Train the RL market maker with PPO and self-imitation.
    Train(TrainArgs),
    /// Evaluate a checkpoint before and during buy and sell TWAP execution.
    Evaluate(EvalArgs),
    /// Render tables and plots from an output directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Registered scenario name or TOML config path.
    #[arg(long)]
    config: Option<String>,
    /// Seed count N (seeds 0..N), a comma-separated list, or a range A..B.
    #[arg(long)]
    seeds: Option<Seeds>,
    /// Output directory [default: runs/<scenario>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Policy checkpoint for the RL agent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Skip writing per-seed event logs.
    #[arg(long)]
    no_events: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Registered scenario name or TOML config path.
    #[arg(long, default_value = "url_solo")]
    config: String,
    /// Training episodes [default: from the config].
    #[arg(long)]
    episodes: Option<usize>,
    /// Output directory [default: runs/<scenario>_train].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Registered scenario name or TOML config path.
    #[arg(long, default_value = "frl_eval_buy")]
    config: String,
    /// Policy checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Episodes per side.
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    /// Overrides the first evaluation seed (evaluation uses consecutive seeds).
    #[arg(long)]
    seeds: Option<Seeds>,
    /// Output directory [default: runs/<scenario>_eval].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory written by another subcommand.
    #[arg(long)]
    from: PathBuf,
    /// Report directory [default: <from>/report].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Seeds(Vec<u64>);

impl FromStr for Seeds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |e: std::num::ParseIntError| format!("invalid seeds '{s}': {e}");
        let v: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
            (a.trim().parse().map_err(bad)?..b.trim().parse().map_err(bad)?).collect()
        } else if s.contains(',') {
            s.split(',').map(|x| x.trim().parse().map_err(bad)).collect::<Result<_, _>>()?
        } else {
            (0..s.trim().parse().map_err(bad)?).collect()
        };
        if v.is_empty() {
            return Err(format!("seeds '{s}' select no seed"));
        }
        Ok(Seeds(v))
    }
}

/// Failure classes, each with its own exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Runtime = 1,
    Usage = 2,
    Config = 3,
    Io = 4,
    Schema = 5,
}

impl Category {
    fn name(self) -> &'static str {
        match self {
            Category::Runtime => "runtime",
            Category::Usage => "usage",
            Category::Config => "config",
            Category::Io => "io",
            Category::Schema => "schema",
        }
    }
}

#[derive(Debug)]
struct Failure {
    category: Category,
    error: anyhow::Error,
}

impl Failure {
    fn new(category: Category, error: impl Into<anyhow::Error>) -> Self {
        Self { category, error: error.into() }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let category = match &e {
            RunError::Config(_) | RunError::Hawkes(_) => Category::Config,
            RunError::Io(_) | RunError::Csv(_) => Category::Io,
            _ => Category::Runtime,
        };
        Failure::new(category, e)
    }
}

impl From<report::ReportError> for Failure {
    fn from(e: report::ReportError) -> Self {
        let category = match e {
            report::ReportError::Schema(_) => Category::Schema,
            report::ReportError::Io(_) => Category::Io,
        };
        Failure::new(category, e)
    }
}

fn load_config(name: &str) -> Result<ScenarioConfig, Failure> {
    Ok(ScenarioConfig::resolve(name)?)
}

/// Creates `dir` and checks it accepts files.
fn prepare_out(dir: &Path) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::new(Category::Io, anyhow::Error::new(e).context(format!("output directory {} is not writable", dir.display())));
    std::fs::create_dir_all(dir).map_err(io)?;
    let probe = dir.join(".lobsim-write-test");
    std::fs::write(&probe, b"").map_err(io)?;
    std::fs::remove_file(&probe).map_err(io)?;
    Ok(())
}

fn out_dir(out: Option<PathBuf>, cfg: &ScenarioConfig, suffix: &str) -> PathBuf {
    out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("runs").join(format!("{}{suffix}", cfg.name)))
}

fn set_checkpoint(cfg: &mut ScenarioConfig, path: PathBuf) -> Result<(), Failure> {
    if !path.is_file() {
        return Err(Failure::new(Category::Config, anyhow::anyhow!("checkpoint {} does not exist", path.display())));
    }
    let rl = cfg.rl.as_mut().ok_or_else(|| Failure::new(Category::Config, anyhow::anyhow!("scenario {} has no rl agent", cfg.name)))?;
    rl.checkpoint = Some(path);
    Ok(())
}

fn scenario_config(args: RunArgs, default: &str) -> Result<(ScenarioConfig, PathBuf), Failure> {
    let mut cfg = load_config(args.config.as_deref().unwrap_or(default))?;
    if let Some(Seeds(s)) = args.seeds {
        cfg.seeds = s;
    }
    if let Some(p) = args.checkpoint {
        set_checkpoint(&mut cfg, p)?;
    }
    cfg.event_log = !args.no_events;
    let out = out_dir(args.out, &cfg, "");
    prepare_out(&out)?;
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(args) => {
            let Some(_) = args.config else {
                return Err(Failure::new(Category::Usage, anyhow::anyhow!("simulate needs --config")));
            };
            let (cfg, out) = scenario_config(args, "")?;
            let result = run_scenario(&cfg, None)?;
            let manifest = write_scenario(&out, &result)?;
            println!("{}: {} episodes, {} failed -> {}", cfg.name, result.outputs.len(), manifest.failures.len(), out.display());
            for row in lobsim_core::runner::output::summary_rows(&result) {
                info!(metric = %row.metric, n = row.n, mean = row.mean, std = row.std, "summary");
            }
        }
        Command::Impact { run, bins } => {
            let (cfg, out) = scenario_config(run, "twap_impact")?;
            let result = run_scenario(&cfg, None)?;
            write_scenario(&out, &result)?;
            let study = impact_study(&result, bins)?;
            write_impact(&out, &study)?;
            match study.fit {
                Some(f) => println!("impact exponent delta = {:.3} (R² = {:.3})", f.delta, f.r2),
                None => println!("impact exponent fit failed: {}", study.fit_error.as_deref().unwrap_or("?")),
            }
            match study.decay_fit {
                Some(f) => println!("decay beta = {:.3} (rmse = {:.3})", f.beta, f.rmse),
                None => println!("decay fit failed: {}", study.decay_error.as_deref().unwrap_or("?")),
            }
            println!("-> {}", out.display());
        }
        Command::Train(args) => {
            let cfg = load_config(&args.config)?;
            let episodes = args.episodes.unwrap_or(cfg.training.episodes);
            let out = out_dir(args.out, &cfg, "_train");
            prepare_out(&out)?;
            let t = train_policy(&cfg, episodes, Some(&out))?;
            if let Some(d) = &t.diverged {
                println!("training stopped early: {d}");
            }
            let last = t.checkpoints.last().map(|p| p.display().to_string()).unwrap_or_default();
            println!("{}: {} episodes, {} updates -> {last}", cfg.name, t.episode_returns.len(), t.logs.len());
        }
        Command::Evaluate(args) => {
            let mut cfg = load_config(&args.config)?;
            if let Some(Seeds(s)) = args.seeds {
                cfg.seeds = s;
            }
            set_checkpoint(&mut cfg, args.checkpoint.clone())?;
            let rl = cfg.rl.as_ref().expect("checked by set_checkpoint");
            let policy = checkpoint::load_expecting(&args.checkpoint, &architecture_for(&cfg), rl.agent.mode.rho_aware())
                .map_err(|e| Failure::new(Category::Config, anyhow::Error::new(e).context(format!("loading {}", args.checkpoint.display()))))?;
            let out = out_dir(args.out, &cfg, "_eval");
            prepare_out(&out)?;
            let report = evaluate_policy(Arc::new(policy), &cfg, args.episodes)?;
            write_evaluation(&out, &report)?;
            let s = &report.sharpe;
            println!(
                "Sharpe before/during: buy {:.3}/{:.3}, sell {:.3}/{:.3}; slippage buy {:.2} bps (alone {:.2}), sell {:.2} bps (alone {:.2}) -> {}",
                s.before_buy.mean,
                s.during_buy.mean,
                s.before_sell.mean,
                s.during_sell.mean,
                report.slippage.buy.mean,
                report.baseline_slippage.buy.mean,
                report.slippage.sell.mean,
                report.baseline_slippage.sell.mean,
                out.display()
            );
        }
        Command::Report(args) => {
            let out = args.out.unwrap_or_else(|| args.from.join("report"));
            match report::render_report(&args.from, &out)? {
                report::Status::NothingToReport => println!("nothing to report in {}", args.from.display()),
                report::Status::Rendered(files) => println!("wrote {} to {}", files.join(", "), out.display()),
            }
        }
    }
    Ok(())
}

/// The error chain, skipping causes their parent message already shows.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let c = cause.to_string();
        if !out.contains(&c) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&c);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                eprintln!("error[{}]", Category::Usage.name());
                Category::Usage as u8
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).with_target(false).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.category.name(), message(&f.error));
            ExitCode::from(f.category as u8)
        }
    }
}
