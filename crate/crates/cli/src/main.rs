//! `ritrade`: backtests, solver comparisons, spread-penalty tuning and
//! synthetic order flow from the command line.
//!
//! Exit codes: 0 success, 1 output failure, 2 configuration error, 3 data error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use ritrade::api::{self, Error};
use ritrade::compare::{compare, CompareReport};
use ritrade::config::{ConfigError, FlatConfig};
use ritrade::data::{planted_pair, summary, write_results, write_stream, DataError, ParseMode};
use ritrade::engine::EngineError;
use ritrade::parallel::{map_batch, with_workers};
use ritrade::throughput::measure;
use ritrade::tuner::TuneReport;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

#[derive(Parser, Debug)]
#[command(name = "ritrade", version, about = "Rolling-intrinsic battery trading backtester")]
struct Cli {
    /// Worker threads for sweeps and tuning (0 = all cores).
    #[arg(long, global = true, env = "RITRADE_WORKERS", default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Replay a message file with the rolling intrinsic policy.
    Run(RunArgs),
    /// Run the DP and the exact oracle on identical snapshots.
    Compare(RunArgs),
    /// Train the spread penalty over sliding windows.
    Tune(RunArgs),
    /// Backtest the same data once per value of one config key, in parallel.
    Sweep(SweepArgs),
    /// Write a synthetic order-message file.
    Gen(GenArgs),
    /// Measure intrinsic solves per second on a representative snapshot.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Flat TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// `updates` or `interval:<minutes>`.
    #[arg(long)]
    solve_mode: Option<String>,
    #[arg(long)]
    delay_ms: Option<i64>,
    /// Grid points per stage.
    #[arg(long)]
    m: Option<usize>,
    /// Spread penalty.
    #[arg(long)]
    phi: Option<f64>,
    /// `dp` or `oracle`.
    #[arg(long)]
    solver: Option<String>,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Order-message CSV.
    #[arg(long, required_unless_present = "manifest")]
    data: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-run from a manifest written by an earlier run. Flags still override.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Config key to vary.
    #[arg(long)]
    key: String,
    /// Comma-separated values for the key.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Destination CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of hourly products.
    #[arg(long)]
    products: Option<usize>,
    /// Write the two-order planted pair instead of random flow.
    #[arg(long)]
    planted_pair: bool,
    /// Override any generator setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 32)]
    products: usize,
    #[arg(long, default_value_t = 50)]
    orders: usize,
    #[arg(long, default_value_t = 11)]
    m: usize,
    #[arg(long, default_value_t = 2.0)]
    seconds: f64,
}

#[derive(Debug)]
enum Failure {
    Api(Error),
    Output(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Api(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Api(Error::Config(e))
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Api(Error::Data(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Api(Error::Config(_)) | Failure::Api(Error::Engine(EngineError::InvalidConfig { .. })) => 2,
            Failure::Api(Error::Data(_)) | Failure::Api(Error::Engine(EngineError::Disorder { .. })) => 3,
            Failure::Output(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Api(e) => e.to_string(),
            Failure::Output(m) => m.clone(),
        }
    }
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Output(format!("{}: {e}", path.display()))
}

fn split_pair(raw: &str) -> Result<(&str, &str), ConfigError> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| ConfigError::Syntax(format!("expected KEY=VALUE, got {raw:?}")))
}

impl ConfigArgs {
    /// Defaults, then the file (or manifest), then `--set`, then dedicated flags.
    fn resolve(&self, base: Option<FlatConfig>) -> Result<FlatConfig, ConfigError> {
        let mut cfg = match (&self.config, base) {
            (Some(path), _) => FlatConfig::from_file(path)?,
            (None, Some(base)) => base,
            (None, None) => FlatConfig::default(),
        };
        for raw in &self.set {
            let (k, v) = split_pair(raw)?;
            cfg.set_str(k, v)?;
        }
        if let Some(v) = &self.solve_mode {
            cfg.set("solve_mode", v.clone().into())?;
        }
        if let Some(v) = self.delay_ms {
            cfg.set("technical_delay_ms", v.into())?;
        }
        if let Some(v) = self.m {
            cfg.set("m", (v as i64).into())?;
        }
        if let Some(v) = self.phi {
            cfg.set("phi", v.into())?;
        }
        if let Some(v) = &self.solver {
            cfg.set("solver", v.clone().into())?;
        }
        if self.lenient {
            cfg.parse_mode = ParseMode::Lenient;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Api(Error::Data(DataError::io(path, e))))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn print_lines(pairs: &BTreeMap<String, Value>) {
    for (k, v) in pairs {
        match v {
            Value::String(s) => println!("{k}={s}"),
            other => println!("{k}={other}"),
        }
    }
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    version: String,
    config: Map<String, Value>,
    inputs: BTreeMap<String, InputRef>,
    outputs: BTreeMap<String, String>,
    started_unix_ms: u128,
    wall_ms: f64,
}

#[derive(Serialize, serde::Deserialize)]
struct InputRef {
    path: String,
    sha256: String,
}

fn config_json(cfg: &FlatConfig) -> Map<String, Value> {
    match serde_json::to_value(cfg).expect("config serialises") {
        Value::Object(map) => map,
        _ => unreachable!("config is a struct"),
    }
}

/// Loads config and data path from a manifest, checking the input hash.
fn from_manifest(path: &Path) -> Result<(FlatConfig, PathBuf, String), Failure> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Syntax(format!("{}: {e}", path.display())))?;
    let cfg: FlatConfig = serde_json::from_value(doc["config"].clone())
        .map_err(|e| ConfigError::Syntax(format!("{}: config: {e}", path.display())))?;
    let input: InputRef = serde_json::from_value(doc["inputs"]["data"].clone())
        .map_err(|e| ConfigError::Syntax(format!("{}: inputs.data: {e}", path.display())))?;
    Ok((cfg, PathBuf::from(input.path), input.sha256))
}

struct Prepared {
    cfg: FlatConfig,
    data: PathBuf,
    data_sha: String,
}

fn prepare(args: &RunArgs) -> Result<Prepared, Failure> {
    let (base, manifest_data, expected_sha) = match &args.manifest {
        Some(path) => {
            let (cfg, data, sha) = from_manifest(path)?;
            (Some(cfg), Some(data), Some(sha))
        }
        None => (None, None, None),
    };
    let cfg = args.cfg.resolve(base)?;
    let data = args.data.clone().or(manifest_data).expect("clap requires --data or --manifest");
    let data_sha = sha256_file(&data)?;
    if let Some(expected) = expected_sha {
        if args.data.is_none() && expected != data_sha {
            return Err(Failure::Api(Error::Data(DataError::Malformed {
                line: 0,
                reason: format!("{} no longer matches the manifest hash", data.display()),
            })));
        }
    }
    Ok(Prepared { cfg, data, data_sha })
}

fn write_manifest(
    dir: &Path,
    command: &str,
    prepared: &Prepared,
    started: SystemTime,
    wall: Duration,
    outputs: &[&str],
) -> Result<(), Failure> {
    let mut hashes = BTreeMap::new();
    for name in outputs {
        hashes.insert(name.to_string(), sha256_file(&dir.join(name)).map_err(|e| Failure::Output(e.message()))?);
    }
    let data = fs::canonicalize(&prepared.data).unwrap_or_else(|_| prepared.data.clone());
    let manifest = Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config_json(&prepared.cfg),
        inputs: BTreeMap::from([("data".into(), InputRef { path: data.display().to_string(), sha256: prepared.data_sha.clone() })]),
        outputs: hashes,
        started_unix_ms: started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis()),
        wall_ms: wall.as_secs_f64() * 1e3,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, text).map_err(|e| output_err(&path, e))
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let started = SystemTime::now();
    let wall = Instant::now();
    let prepared = prepare(args)?;
    let (stream, report) = api::load_stream(&prepared.cfg, &prepared.data)?;
    if report.skipped > 0 {
        log::warn!("skipped {} malformed rows: {:?}", report.skipped, report.skip_reasons);
    }
    let result = api::run_stream(&prepared.cfg, &stream)?;
    let mut lines = summary(&result);
    lines.insert("skipped_rows".into(), json!(report.skipped));
    print_lines(&lines);
    if let Some(dir) = &args.out {
        write_results(&result, &prepared.cfg.backtest()?.market, dir).map_err(|e| output_err(dir, e))?;
        let outputs = ["trades.csv", "schedule.csv", "reward_series.csv"];
        write_manifest(dir, "run", &prepared, started, wall.elapsed(), &outputs)?;
    }
    Ok(())
}

fn compare_lines(r: &CompareReport) -> BTreeMap<String, Value> {
    let mut s = BTreeMap::new();
    s.insert("dp_reward".into(), json!(r.dp_reward));
    s.insert("oracle_reward".into(), json!(r.oracle_reward));
    s.insert("run_gap".into(), json!(r.run_gap()));
    s.insert("solves".into(), json!(r.rows.len()));
    s.insert("skipped".into(), json!(r.skipped()));
    s.insert("max_solve_gap".into(), json!(r.max_gap()));
    s.insert("speed_ratio".into(), json!(r.speed_ratio()));
    s.insert("dp_runtime_ms".into(), json!(r.dp_runtime_ms));
    s.insert("oracle_runtime_ms".into(), json!(r.oracle_runtime_ms));
    s.insert("oracle_failed_solves".into(), json!(r.oracle_failed_solves));
    s
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let text = rows_to_csv(rows).map_err(|e| output_err(path, e))?;
    fs::write(path, text).map_err(|e| output_err(path, e))
}

/// Flattens serialisable rows into CSV, `Option`s becoming empty cells.
fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String, serde_json::Error> {
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let Value::Object(map) = serde_json::to_value(row)? else { continue };
        if i == 0 {
            out.push_str(&map.keys().cloned().collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        let cells: Vec<String> = map
            .values()
            .map(|v| match v {
                Value::Null => String::new(),
                Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

fn cmd_compare(args: &RunArgs) -> Result<(), Failure> {
    let started = SystemTime::now();
    let wall = Instant::now();
    let prepared = prepare(args)?;
    let (stream, _) = api::load_stream(&prepared.cfg, &prepared.data)?;
    let backtest = prepared.cfg.backtest()?;
    let report = compare(&backtest, &stream, prepared.cfg.oracle_budget).map_err(Error::from)?;
    print_lines(&compare_lines(&report));
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
        write_csv(&dir.join("compare.csv"), &report.rows)?;
        write_manifest(dir, "compare", &prepared, started, wall.elapsed(), &["compare.csv"])?;
    }
    Ok(())
}

fn tune_lines(r: &TuneReport) -> BTreeMap<String, Value> {
    let mut s = BTreeMap::new();
    s.insert("windows".into(), json!(r.rows.len()));
    s.insert("stitched_reward".into(), json!(r.stitched_reward));
    s.insert("baseline_reward".into(), json!(r.baseline_reward));
    s.insert("mean_phi".into(), json!(r.mean_phi));
    s.insert("std_phi".into(), json!(r.std_phi));
    s
}

fn cmd_tune(args: &RunArgs) -> Result<(), Failure> {
    let started = SystemTime::now();
    let wall = Instant::now();
    let prepared = prepare(args)?;
    let (stream, _) = api::load_stream(&prepared.cfg, &prepared.data)?;
    let report = api::tune_stream(&prepared.cfg, &stream)?;
    for row in &report.rows {
        println!(
            "window={} label={} phi={} evals={} in_sample_reward={} out_of_sample_reward={} baseline_reward={}",
            row.window, row.label, row.phi, row.evals, row.in_sample_reward, row.out_of_sample_reward, row.baseline_reward
        );
    }
    print_lines(&tune_lines(&report));
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
        write_csv(&dir.join("tune_report.csv"), &report.rows)?;
        write_manifest(dir, "tune", &prepared, started, wall.elapsed(), &["tune_report.csv"])?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    key: String,
    value: String,
    reward: f64,
    solves: usize,
    orders: usize,
    traded_volume_mwh: f64,
    cycles_per_day: f64,
    runtime_ms: f64,
}

fn cmd_sweep(args: &SweepArgs, workers: usize) -> Result<(), Failure> {
    let base = args.cfg.resolve(None)?;
    let configs: Vec<FlatConfig> = args
        .values
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.set_str(&args.key, v)?;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<_, ConfigError>>()?;
    let (stream, _) = api::load_stream(&base, &args.data)?;
    let results = with_workers(workers, || map_batch(&configs, |cfg| api::run_stream(cfg, &stream)));
    let mut rows = Vec::new();
    for (value, result) in args.values.iter().zip(results) {
        let r = result?;
        println!("{}={} reward={} solves={} orders={}", args.key, value, r.reward, r.solve_count(), r.orders_submitted());
        rows.push(SweepRow {
            key: args.key.clone(),
            value: value.clone(),
            reward: r.reward,
            solves: r.solve_count(),
            orders: r.orders_submitted(),
            traded_volume_mwh: r.traded_volume_mwh,
            cycles_per_day: r.cycles_per_day,
            runtime_ms: r.runtime_ms,
        });
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
        write_csv(&dir.join("sweep.csv"), &rows)?;
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<(), Failure> {
    let mut lot = 0.1;
    let messages = if args.planted_pair {
        planted_pair(0)
    } else {
        let mut pairs: Vec<(String, String)> = Vec::new();
        if let Some(seed) = args.seed {
            pairs.push(("seed".into(), seed.to_string()));
        }
        if let Some(n) = args.products {
            pairs.push(("products".into(), n.to_string()));
        }
        for raw in &args.set {
            let (k, v) = split_pair(raw)?;
            pairs.push((k.into(), v.into()));
        }
        let messages = api::generate(pairs.iter().map(|(k, v)| (k, v)))?;
        if let Some((_, v)) = pairs.iter().rev().find(|(k, _)| k == "lot_mwh") {
            lot = v.parse().expect("validated by the generator");
        }
        messages
    };
    let file = fs::File::create(&args.out).map_err(|e| output_err(&args.out, e))?;
    write_stream(std::io::BufWriter::new(file), &messages, lot).map_err(|e| output_err(&args.out, e))?;
    println!("messages={}", messages.len());
    println!("path={}", args.out.display());
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let r = measure(args.products, args.orders, args.m, Duration::from_secs_f64(args.seconds.max(0.0)));
    let Value::Object(map) = serde_json::to_value(&r).expect("report serialises") else { unreachable!() };
    print_lines(&map.into_iter().collect());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Tune(a) => with_workers(cli.workers, || cmd_tune(a)),
        Command::Sweep(a) => cmd_sweep(a, cli.workers),
        Command::Gen(a) => cmd_gen(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
