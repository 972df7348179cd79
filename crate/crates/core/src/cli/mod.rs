//! Command-line front end: configuration loading, command dispatch and
//! artifact export.
//!
//! Exit status is 0 on success, 2 for configuration or usage errors and 3
//! for runtime failures. Files written by a failing command are removed.

pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channel::{linear_to_db, predicted_channel, worst_case_snr, ErrorBall};
use crate::error::{Error, Result};
use crate::sim::{calibrate_psi, run_batch, summarize, EpisodeLog, Policy, ScenarioConfig, ScenarioFile};
use output::{config_hash, episode_svgs, slots_csv, summary_csv, trace_csv, Artifacts, RunManifest};

/// The shipped default scenario.
pub const DEFAULT_CONFIG: &str = include_str!("../../configs/default_s4.json");

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "isac", version, about = "Two-UAV bistatic sensing and communication simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run episodes with the proposed planner (or any policy).
    Run(RunArgs),
    /// Run one batch per value of a config key.
    Sweep(SweepArgs),
    /// Estimate the error-ball scale ψ by Monte Carlo.
    CalibratePsi(CalibrateArgs),
    /// Run a baseline policy.
    Baseline(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario JSON; the built-in default scenario when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Single seed.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Seed range `N..M` (end exclusive), `N..=M`, or a comma list.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// proposed | semi-dynamic | static | no-comm
    #[arg(long)]
    pub policy: Option<String>,
    /// Parking position `X,Y` of UAV-2 for the semi-dynamic policy.
    #[arg(long, allow_hyphen_values = true)]
    pub fixed_q2: Option<String>,
    /// Also write SVG plots.
    #[arg(long)]
    pub svg: bool,
    /// Fail (exit 3) when any slot cannot meet the SNR target.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub param: String,
    /// Comma-separated values in file units.
    #[arg(long, allow_hyphen_values = true)]
    pub values: String,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.95)]
    pub coverage: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidConfig(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

/// Read and validate a scenario file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| config_err("<file>", format!("{}: {e}", path.display())))?;
    ScenarioFile::from_json(&text)?.resolve()
}

fn load(path: Option<&Path>) -> Result<ScenarioFile> {
    let file = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err("<file>", format!("{}: {e}", p.display())))?;
            ScenarioFile::from_json(&text)?
        }
        None => ScenarioFile::from_json(DEFAULT_CONFIG)?,
    };
    file.resolve()?;
    Ok(file)
}

pub fn parse_seeds(seed: Option<u64>, seeds: Option<&str>) -> Result<Vec<u64>> {
    let bad = |m: &str| config_err("seeds", m.to_string());
    let Some(spec) = seeds else {
        return Ok(vec![seed.unwrap_or(0)]);
    };
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad(&format!("not a seed: `{s}`")));
    let list = if let Some((a, b)) = spec.split_once("..=") {
        (num(a)?..=num(b)?).collect::<Vec<_>>()
    } else if let Some((a, b)) = spec.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if list.is_empty() {
        return Err(bad("seed range is empty"));
    }
    Ok(list)
}

fn parse_pair(text: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = text.split(',').collect();
    let bad = || config_err("fixed-q2", format!("expected X,Y, got `{text}`"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let x = parts[0].trim().parse::<f64>().map_err(|_| bad())?;
    let y = parts[1].trim().parse::<f64>().map_err(|_| bad())?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(bad());
    }
    Ok([x, y])
}

pub fn parse_policy(name: Option<&str>, fixed_q2: Option<&str>) -> Result<Policy> {
    let policy = match name.unwrap_or("proposed") {
        "proposed" => Policy::Proposed,
        "semi-dynamic" => {
            let q2 = fixed_q2.ok_or_else(|| config_err("fixed-q2", "semi-dynamic policy needs --fixed-q2 X,Y"))?;
            Policy::SemiDynamic { q2: parse_pair(q2)? }
        }
        "static" => Policy::Static,
        "no-comm" => Policy::NoComm,
        other => return Err(config_err("policy", format!("unknown policy `{other}`"))),
    };
    if fixed_q2.is_some() && !matches!(policy, Policy::SemiDynamic { .. }) {
        return Err(config_err("fixed-q2", "only valid with --policy semi-dynamic"));
    }
    Ok(policy)
}

pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| config_err("values", format!("not a number: `{v}`")))
        })
        .collect()
}

/// Where the CSVs of each episode go: directly in `dir` for a single seed,
/// otherwise in `dir/seed_<n>`.
fn write_episodes(art: &mut Artifacts, dir: &Path, logs: &[EpisodeLog], svg: bool) -> Result<()> {
    art.dir(dir)?;
    for log in logs {
        let d = if logs.len() == 1 { dir.to_path_buf() } else { dir.join(format!("seed_{}", log.seed)) };
        art.dir(&d)?;
        art.file(&d.join("slots.csv"), &slots_csv(log)?)?;
        art.file(&d.join("trace.csv"), &trace_csv(log)?)?;
        if svg {
            for (name, bytes) in episode_svgs(log) {
                art.file(&d.join(name), &bytes)?;
            }
        }
    }
    if !logs.is_empty() {
        art.file(&dir.join("summary.csv"), &summary_csv(logs, &summarize(logs)?)?)?;
    }
    Ok(())
}

fn check_strict(strict: bool, logs: &[EpisodeLog]) -> Result<()> {
    if !strict {
        return Ok(());
    }
    for l in logs {
        if let Some(s) = l.slots.iter().find(|s| s.snr_status == crate::trajopt::SnrStatus::Infeasible) {
            let channel = l.config.resolve()?.channel;
            let target = s.predicted.x_hat;
            let overhead = s.q1.moved_to(target.position());
            let h = predicted_channel(&overhead, &target, &channel);
            let wc = worst_case_snr(&h, &ErrorBall { epsilon: s.epsilon }, &channel);
            return Err(Error::SnrInfeasible { overhead_db: linear_to_db(wc) });
        }
    }
    Ok(())
}

fn manifest(
    command: &str,
    config_path: Option<&Path>,
    file: &ScenarioFile,
    seeds: Vec<u64>,
    out: &Path,
    policy: Option<Policy>,
    arguments: serde_json::Value,
) -> RunManifest {
    RunManifest {
        command: command.into(),
        config_path: config_path.map(|p| p.display().to_string()),
        config_hash: config_hash(file),
        seeds,
        out_dir: out.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        policy: policy.map(|p| p.label()),
        arguments,
        config: file.clone(),
    }
}

/// Run a command body, removing its partial outputs if it fails.
fn guarded(body: impl FnOnce(&mut Artifacts) -> Result<()>) -> Result<Vec<PathBuf>> {
    let mut art = Artifacts::default();
    match body(&mut art) {
        Ok(()) => Ok(art.created().to_vec()),
        Err(e) => {
            art.remove();
            Err(e)
        }
    }
}

fn run_like(name: &str, args: &RunArgs, require_baseline: bool) -> Result<Vec<PathBuf>> {
    let file = load(args.common.config.as_deref())?;
    let seeds = parse_seeds(args.common.seed, args.common.seeds.as_deref())?;
    let policy = parse_policy(args.policy.as_deref(), args.fixed_q2.as_deref())?;
    if require_baseline && policy == Policy::Proposed {
        return Err(config_err("policy", "baseline needs semi-dynamic, static or no-comm"));
    }
    let config = file.resolve()?;
    let logs = run_batch(&config, policy, &seeds)?;
    check_strict(args.strict, &logs)?;
    guarded(|art| {
        let out = &args.common.out;
        write_episodes(art, out, &logs, args.svg)?;
        let m = manifest(name, args.common.config.as_deref(), &file, seeds.clone(), out, Some(policy), serde_json::json!({}));
        art.file(&out.join("manifest.json"), &m.to_json())
    })
}

pub fn cmd_run(args: &RunArgs) -> Result<Vec<PathBuf>> {
    run_like("run", args, false)
}

pub fn cmd_baseline(args: &RunArgs) -> Result<Vec<PathBuf>> {
    run_like("baseline", args, true)
}

/// Sweep outputs go to `out/<param>_<value>/`.
pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<PathBuf>> {
    let run = &args.run;
    let file = load(run.common.config.as_deref())?;
    let seeds = parse_seeds(run.common.seed, run.common.seeds.as_deref())?;
    let policy = parse_policy(run.policy.as_deref(), run.fixed_q2.as_deref())?;
    let values = parse_values(&args.values)?;
    let batches = crate::sim::run_sweep(&file, policy, &args.param, &values, &seeds)?;
    for (_, logs) in &batches {
        check_strict(run.strict, logs)?;
    }
    guarded(|art| {
        let out = &run.common.out;
        art.dir(out)?;
        for (v, logs) in &batches {
            write_episodes(art, &out.join(format!("{}_{}", args.param, v)), logs, run.svg)?;
        }
        let m = manifest(
            "sweep",
            run.common.config.as_deref(),
            &file,
            seeds.clone(),
            out,
            Some(policy),
            serde_json::json!({ "param": args.param, "values": values }),
        );
        art.file(&out.join("manifest.json"), &m.to_json())
    })
}

/// Writes `psi.json` and `config_calibrated.json` (the input scenario with
/// the new ψ) next to the manifest.
pub fn cmd_calibrate_psi(args: &CalibrateArgs) -> Result<Vec<PathBuf>> {
    let file = load(args.config.as_deref())?;
    if !(args.coverage > 0.0 && args.coverage < 1.0) {
        return Err(config_err("coverage", "must lie in (0, 1)"));
    }
    if args.trials < 1000 {
        return Err(config_err("trials", "must be at least 1000"));
    }
    let psi = calibrate_psi(&file.resolve()?, args.trials, args.coverage, args.seed)?;
    let mut calibrated = file.clone();
    calibrated.psi = psi;
    guarded(|art| {
        art.dir(&args.out)?;
        let result = serde_json::json!({ "psi": psi, "trials": args.trials, "coverage": args.coverage, "seed": args.seed });
        art.file(&args.out.join("psi.json"), format!("{}\n", serde_json::to_string_pretty(&result).unwrap()).as_bytes())?;
        let cfg = serde_json::to_string_pretty(&calibrated).expect("scenario serializes");
        art.file(&args.out.join("config_calibrated.json"), format!("{cfg}\n").as_bytes())?;
        let m = manifest(
            "calibrate-psi",
            args.config.as_deref(),
            &file,
            vec![args.seed],
            &args.out,
            None,
            serde_json::json!({ "trials": args.trials, "coverage": args.coverage }),
        );
        art.file(&args.out.join("manifest.json"), &m.to_json())
    })
}

pub fn dispatch(cli: &Cli) -> Result<Vec<PathBuf>> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::CalibratePsi(a) => cmd_calibrate_psi(a),
        Command::Baseline(a) => cmd_baseline(a),
    }
}

/// Parse `argv`, run, and return the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
