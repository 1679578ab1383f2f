//! `laneboost` command line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use laneboost::analytics::{surplus_decompose, RoundRecord, TradeRecord};
use laneboost::config::{ConfigError, ReplayConfig, ScenarioConfig};
use laneboost::price::RollingVol;
use laneboost::replay::{read_historical_rounds, read_prices, replay, ReplayInputs};
use laneboost::report::{
    add_analytics, calibration_bundle, load_bundle, sha256_hex, Bundle, Dataset, Format, Manifest,
    WallTime, DATASET_FILE,
};
use laneboost::reserve::calibrate;
use laneboost::sim;

#[derive(Parser)]
#[command(
    name = "laneboost",
    version,
    about = "Express-lane auction simulator and replay toolkit"
)]
struct Cli {
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Format of analytics tables. Record files are always CSV.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario configs.
    Simulate(SimulateArgs),
    /// Rebuild rounds and analytics from recorded auctions, trades and prices.
    Replay(ReplayArgs),
    /// Grid-search the volatility-indexed reserve over historical rounds.
    Calibrate(CalibrateArgs),
    /// Recompute the analytics tables of an existing bundle.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file(s); with several, each bundle goes to `<out>/<name>`.
    #[arg(long, required = true, num_args = 1..)]
    config: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed of every config.
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall-clock start and end in the manifest.
    #[arg(long)]
    record_wall_time: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Auction bids: round_start_utc_ms, bidder, amount_eth, submitted_utc_ms.
    #[arg(long)]
    auctions: PathBuf,
    #[arg(long)]
    trades: Option<PathBuf>,
    #[arg(long)]
    prices: PathBuf,
    /// Reseller payments or receipts.
    #[arg(long)]
    payments: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Replay config with a `[calibration]` grid.
    #[arg(long)]
    config: PathBuf,
    /// `rounds.csv` of a replay or simulation bundle.
    #[arg(long)]
    rounds: PathBuf,
    #[arg(long)]
    prices: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Bundle directory written by `simulate` or `replay`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(String),
    Invariant(Vec<String>),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LANEBOOST_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let format = cli.format.into();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a, format),
        Command::Replay(a) => replay_cmd(a, format),
        Command::Calibrate(a) => calibrate_cmd(a, format),
        Command::Report(a) => report(a, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Runtime(m) => eprintln!("error: {m}"),
                Failure::Invariant(v) => {
                    for m in v {
                        eprintln!("invariant failed: {m}");
                    }
                }
            }
            ExitCode::from(f.code())
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn add_input(manifest: &mut Manifest, path: &Path) -> Result<(), Failure> {
    let bytes = read_input(path)?;
    manifest
        .inputs
        .insert(path.display().to_string(), sha256_hex(&bytes));
    Ok(())
}

/// Surplus rows that do not balance, as messages.
fn surplus_violations(name: &str, trades: &[TradeRecord], rounds: &[RoundRecord]) -> Vec<String> {
    surplus_decompose(trades, rounds)
        .iter()
        .filter(|r| !r.balances())
        .map(|r| {
            format!(
                "{name}: surplus does not balance for {} / {}",
                r.period, r.scope
            )
        })
        .collect()
}

fn simulate(args: SimulateArgs, format: Format) -> Result<(), Failure> {
    let mut jobs = Vec::with_capacity(args.config.len());
    for path in &args.config {
        let src = read_input(path)?;
        let mut cfg = ScenarioConfig::load(path)?;
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        jobs.push((path.clone(), sha256_hex(&src), cfg));
    }
    let nested = jobs.len() > 1;
    if nested {
        let mut seen = BTreeSet::new();
        for (path, _, cfg) in &jobs {
            if cfg.name.is_empty() || !seen.insert(cfg.name.clone()) {
                return Err(Failure::Usage(format!(
                    "{}: scenario name `{}` is empty or repeated",
                    path.display(),
                    cfg.name
                )));
            }
        }
    }

    let results: Vec<Result<Vec<String>, Failure>> = jobs
        .par_iter()
        .map(|(path, digest, cfg)| {
            let started = now_ms();
            log::info!("simulating {} ({} rounds)", cfg.name, cfg.duration_rounds);
            let out = sim::run(cfg).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            let summary = out.summary(cfg);
            let mut violations = surplus_violations(&cfg.name, &out.trades, &out.rounds);
            if summary.rejected_express > 0 {
                violations.push(format!(
                    "{}: {} express submissions rejected",
                    cfg.name, summary.rejected_express
                ));
            }
            let bundle = out.bundle(cfg, format);
            let mut manifest = Manifest::new("simulate", &cfg.name);
            manifest.seed = Some(cfg.seed);
            manifest.config_sha256 = Some(digest.clone());
            manifest
                .inputs
                .insert(path.display().to_string(), digest.clone());
            if args.record_wall_time {
                manifest.wall_time = Some(WallTime {
                    start_utc_ms: started,
                    end_utc_ms: now_ms(),
                });
            }
            let dir = if nested {
                args.out.join(&cfg.name)
            } else {
                args.out.clone()
            };
            bundle.write(&dir, manifest).map_err(runtime)?;
            Ok(violations)
        })
        .collect();

    let mut violations = Vec::new();
    for r in results {
        violations.extend(r?);
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(violations))
    }
}

fn replay_cmd(args: ReplayArgs, format: Format) -> Result<(), Failure> {
    let mut manifest = Manifest::new("replay", "");
    let cfg = match &args.config {
        Some(path) => {
            let src = read_input(path)?;
            manifest.config_sha256 = Some(sha256_hex(&src));
            manifest
                .inputs
                .insert(path.display().to_string(), sha256_hex(&src));
            ReplayConfig::load(path)?
        }
        None => ReplayConfig::default(),
    };
    manifest.name = cfg.name.clone();
    for path in [
        Some(&args.auctions),
        args.trades.as_ref(),
        Some(&args.prices),
        args.payments.as_ref(),
    ]
    .into_iter()
    .flatten()
    {
        add_input(&mut manifest, path)?;
    }
    let inputs = ReplayInputs::load(
        &args.auctions,
        args.trades.as_deref(),
        &args.prices,
        args.payments.as_deref(),
    )
    .map_err(|e| Failure::Usage(e.to_string()))?;
    let out = replay(&cfg, &inputs).map_err(|e| Failure::Usage(e.to_string()))?;
    let violations = surplus_violations(&cfg.name, &out.trades, &out.rounds);
    out.bundle(&cfg, &inputs, format)
        .write(&args.out, manifest)
        .map_err(runtime)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(violations))
    }
}

fn calibrate_cmd(args: CalibrateArgs, format: Format) -> Result<(), Failure> {
    let mut manifest = Manifest::new("calibrate", "");
    let src = read_input(&args.config)?;
    manifest.config_sha256 = Some(sha256_hex(&src));
    let cfg = ReplayConfig::load(&args.config)?;
    manifest.name = cfg.name.clone();
    let grid = cfg.calibration.as_ref().ok_or_else(|| {
        Failure::Usage(format!("{}: no [calibration] grid", args.config.display()))
    })?;
    for path in [&args.config, &args.rounds, &args.prices] {
        add_input(&mut manifest, path)?;
    }
    let rounds = read_historical_rounds(&args.rounds).map_err(|e| Failure::Usage(e.to_string()))?;
    let book = read_prices(&args.prices).map_err(|e| Failure::Usage(e.to_string()))?;
    let series = book.get(&cfg.reference_asset).cloned().ok_or_else(|| {
        Failure::Usage(format!(
            "{}: no `{}` series",
            args.prices.display(),
            cfg.reference_asset
        ))
    })?;
    let vol = RollingVol::new(series);
    let report = calibrate(&rounds, &vol, grid).map_err(runtime)?;
    log::info!(
        "best cell window_s={} c={} recovery={:.4}",
        report.best.window_s,
        report.best.c,
        report.best.recovery_ratio
    );
    calibration_bundle(&report, format)
        .write(&args.out, manifest)
        .map_err(runtime)
}

const RECORD_FILES: [&str; 6] = [
    DATASET_FILE,
    "rounds.csv",
    "bids.csv",
    "trades.csv",
    "markouts.csv",
    "reseller_payments.csv",
];

fn report(args: ReportArgs, format: Format) -> Result<(), Failure> {
    let loaded = load_bundle(&args.input).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut inputs = BTreeMap::new();
    for name in RECORD_FILES.iter().copied().chain(["prices.csv"]) {
        let path = args.input.join(name);
        if path.exists() {
            inputs.insert(name.to_string(), sha256_hex(&read_input(&path)?));
        }
    }
    let mut manifest = Manifest::new("report", "");
    manifest.inputs = inputs;

    let ds = Dataset {
        rounds: &loaded.rounds,
        trades: &loaded.trades,
        payments: &loaded.payments,
        eth: loaded.eth.as_ref(),
        tracked: loaded.meta.tracked.clone(),
        reseller: loaded.meta.reseller.clone(),
        session: loaded.meta.session,
    };
    let mut bundle = Bundle::new();
    add_analytics(&mut bundle, &ds, format);
    let violations = surplus_violations("report", &loaded.trades, &loaded.rounds);
    bundle.write(&args.out, manifest).map_err(runtime)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(violations))
    }
}
