//! Command-line front end: calibration, single runs, policy comparison,
//! tilt sweeps, and codebook export. All outputs are plain text or CSV and
//! byte-identical across repeated invocations with the same inputs.
//!
//! Exit codes: 0 success, 2 usage (bad flags or unreadable config),
//! 3 calibration failure, 4 runtime fault.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::Config;
use groundwave::baselines::Policy;
use groundwave::blockage::{export_events, generate_events, import_events};
use groundwave::channel::{CalibrationReport, RESIDUAL_GATE_DB};
use groundwave::simcore::{compare, run_with_events, sweep, RunMetrics, Scenario, SweepGrid};

const EXIT_USAGE: u8 = 2;
const EXIT_CALIBRATION: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(
    name = "groundwave",
    version,
    about = "60 GHz blockage-recovery simulator: ride out pedestrian blockage on the ground-reflected beam"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario config (TOML); missing keys use the bundled defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the simulation horizon, seconds.
    #[arg(long = "horizon-s")]
    horizon_s: Option<f64>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the system loss and per-surface reflection losses against the
    /// config's measured targets; write a residual report.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// One simulation run; writes metrics, trace, transitions, and event
    /// CSVs and prints a one-line summary.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Recovery policy: gr|exhaustive|scan-model|handover.
        #[arg(long)]
        policy: Option<Policy>,
        /// Replay a previously exported blockage trace instead of
        /// generating one.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Run every policy against one identical blockage trace and write a
    /// comparison table.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cartesian grid of runs over transmitter tilts and seed replicas.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated downward tilts, degrees.
        #[arg(long, default_value = "0,10,20")]
        tilts: String,
        /// Seed replicas per grid point.
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        /// Restrict the sweep to one policy (default: config's policy).
        #[arg(long)]
        policy: Option<Policy>,
    },
    /// Write the configured transmit and receive codebooks as text.
    Codebook {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate { common } => cmd_calibrate(&common),
        Command::Run {
            common,
            policy,
            events,
        } => cmd_run(&common, policy, events.as_deref()),
        Command::Compare { common } => cmd_compare(&common),
        Command::Sweep {
            common,
            tilts,
            replicas,
            policy,
        } => cmd_sweep(&common, &tilts, replicas, policy),
        Command::Codebook { common } => cmd_codebook(&common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("groundwave: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}

struct CmdError {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> CmdError {
    CmdError {
        code: EXIT_USAGE,
        error,
    }
}

fn calibration_failure(error: anyhow::Error) -> CmdError {
    CmdError {
        code: EXIT_CALIBRATION,
        error,
    }
}

fn runtime(error: anyhow::Error) -> CmdError {
    CmdError {
        code: EXIT_RUNTIME,
        error,
    }
}

/// Stderr logging gated on GROUNDWAVE_LOG (any non-empty value).
fn log(msg: &str) {
    if std::env::var("GROUNDWAVE_LOG").is_ok_and(|v| !v.is_empty()) {
        eprintln!("groundwave: {msg}");
    }
}

fn load_config(common: &CommonArgs) -> Result<Config, CmdError> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path).map_err(usage)?,
        None => Config::default(),
    };
    if let Some(h) = common.horizon_s {
        cfg.sim.horizon_s = Some(h);
    }
    if let Some(seed) = common.seed {
        cfg.sim.seed = Some(seed);
    }
    Ok(cfg)
}

/// Both infeasible fits and absent targets end up here: the remedy for
/// either is a calibration pass against usable targets.
fn calibrate_from(cfg: &Config) -> Result<CalibrationReport, CmdError> {
    cfg.run_calibration().map_err(calibration_failure)
}

fn ensure_out(dir: &Path) -> Result<(), CmdError> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output dir {}", dir.display()))
        .map_err(runtime)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CmdError> {
    std::fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(runtime)?;
    log(&format!("wrote {}", path.display()));
    Ok(())
}

fn fmt_db(x: f64) -> String {
    format!("{x:.4}")
}

fn calibration_report_text(report: &CalibrationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("system_loss_db={}\n", fmt_db(report.system_loss_db)));
    for s in &report.surfaces {
        out.push_str(&format!(
            "surface={} reflection_loss_db={}\n",
            s.kind,
            fmt_db(s.reflection_loss_db)
        ));
    }
    for r in &report.rows {
        out.push_str(&format!(
            "row surface={} tilt_deg={} target_dbm={} predicted_dbm={} residual_db={}\n",
            r.surface,
            r.tilt_deg,
            fmt_db(r.target_dbm),
            fmt_db(r.predicted_dbm),
            fmt_db(r.residual_db)
        ));
    }
    out.push_str(&format!(
        "max_abs_residual_db={}\ngate_db={}\nverdict=PASS\n",
        fmt_db(report.max_abs_residual_db()),
        fmt_db(RESIDUAL_GATE_DB)
    ));
    out
}

fn cmd_calibrate(common: &CommonArgs) -> Result<(), CmdError> {
    let cfg = load_config(common)?.resolved();
    let report = calibrate_from(&cfg)?;
    ensure_out(&common.out)?;
    let path = common.out.join("calibration.txt");
    write_file(&path, &calibration_report_text(&report))?;
    println!(
        "calibration ok: system_loss_db={} max_abs_residual_db={} report={}",
        fmt_db(report.system_loss_db),
        fmt_db(report.max_abs_residual_db()),
        path.display()
    );
    Ok(())
}

fn metrics_csv(metrics: &RunMetrics) -> String {
    let mean_recovery = if metrics.recovery_latency_ms.is_empty() {
        String::new()
    } else {
        fmt_db(
            metrics.recovery_latency_ms.iter().sum::<u64>() as f64
                / metrics.recovery_latency_ms.len() as f64,
        )
    };
    let max_recovery = metrics
        .recovery_latency_ms
        .iter()
        .max()
        .map(|v| v.to_string())
        .unwrap_or_default();
    let max_reentry = metrics
        .reentry_latency_ms
        .iter()
        .max()
        .map(|v| v.to_string())
        .unwrap_or_default();
    let mut out = String::from(
        "policy,seed,horizon_ms,n_blockage_events,n_events_survived,total_outage_ms,\
         measurements_total,discovery_measurements_per_episode,mean_rss_during_blockage_dbm,\
         mean_recovery_latency_ms,max_recovery_latency_ms,max_reentry_latency_ms,note\n",
    );
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        metrics.policy,
        metrics.seed,
        metrics.horizon_ms,
        metrics.n_blockage_events,
        metrics.n_events_survived,
        metrics.total_outage_ms,
        metrics.measurements_total,
        metrics.discovery_measurements_per_episode,
        metrics
            .mean_rss_during_blockage_dbm
            .map(fmt_db)
            .unwrap_or_default(),
        mean_recovery,
        max_recovery,
        max_reentry,
        metrics.note.clone().unwrap_or_default()
    ));
    out
}

fn trace_csv(metrics: &RunMetrics) -> String {
    let mut out = String::from("time_ms,rss_dbm,mode\n");
    for p in &metrics.rss_trace {
        out.push_str(&format!("{},{},{}\n", p.time_ms, fmt_db(p.rss_dbm), p.mode));
    }
    out
}

fn transitions_csv(metrics: &RunMetrics) -> String {
    let mut out = String::from("time_ms,mode_before,event,mode_after,actions\n");
    for t in &metrics.transitions {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            t.time_ms, t.mode_before, t.event, t.mode_after, t.actions
        ));
    }
    out
}

fn cmd_run(
    common: &CommonArgs,
    policy: Option<Policy>,
    events_path: Option<&Path>,
) -> Result<(), CmdError> {
    let cfg = load_config(common)?.resolved();
    let report = calibrate_from(&cfg)?;
    let mut scenario: Scenario = cfg.scenario(&report).map_err(usage)?;
    if let Some(p) = policy {
        scenario.policy = p;
    }

    let events = match events_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read events {}", path.display()))
                .map_err(usage)?;
            import_events(&text).map_err(|e| usage(e.into()))?
        }
        None => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(scenario.seed);
            generate_events(
                scenario.horizon_ms as f64,
                scenario.blockage_rate_per_s,
                scenario.blockage_duration_range_ms,
                &scenario.geom,
                &mut rng,
            )
            .map_err(|e| runtime(e.into()))?
        }
    };

    log(&format!(
        "run: policy={} seed={} horizon_ms={} events={}",
        scenario.policy,
        scenario.seed,
        scenario.horizon_ms,
        events.len()
    ));
    let metrics = run_with_events(&scenario, &events).map_err(|e| runtime(e.into()))?;

    ensure_out(&common.out)?;
    write_file(&common.out.join("metrics.csv"), &metrics_csv(&metrics))?;
    write_file(&common.out.join("trace.csv"), &trace_csv(&metrics))?;
    write_file(
        &common.out.join("transitions.csv"),
        &transitions_csv(&metrics),
    )?;
    write_file(&common.out.join("events.csv"), &export_events(&events))?;
    // The fully resolved config, for replaying this run elsewhere.
    write_file(&common.out.join("config.toml"), &cfg.to_toml())?;

    println!(
        "policy={} seed={} outage_ms={} measurements={} survived={}/{}",
        metrics.policy,
        metrics.seed,
        metrics.total_outage_ms,
        metrics.measurements_total,
        metrics.n_events_survived,
        metrics.n_blockage_events
    );
    Ok(())
}

fn cmd_compare(common: &CommonArgs) -> Result<(), CmdError> {
    let cfg = load_config(common)?.resolved();
    let report = calibrate_from(&cfg)?;
    let scenario = cfg.scenario(&report).map_err(usage)?;
    let reports = compare(&scenario).map_err(|e| runtime(e.into()))?;

    ensure_out(&common.out)?;
    let mut csv = String::from(
        "policy,measurements,outage_ms,mean_rss_during_blockage_dbm,n_events,n_survived,note\n",
    );
    for r in &reports {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.policy,
            r.measurements_used,
            r.outage_ms,
            fmt_db(r.recovered_rss_dbm),
            r.n_blockage_events,
            r.n_events_survived,
            r.note.clone().unwrap_or_default()
        ));
    }
    write_file(&common.out.join("compare.csv"), &csv)?;

    for r in &reports {
        println!(
            "policy={} measurements={} outage_ms={} recovered_rss_dbm={} survived={}/{}{}",
            r.policy,
            r.measurements_used,
            r.outage_ms,
            fmt_db(r.recovered_rss_dbm),
            r.n_events_survived,
            r.n_blockage_events,
            r.note
                .as_deref()
                .map(|n| format!(" note={n}"))
                .unwrap_or_default()
        );
    }
    Ok(())
}

fn cmd_sweep(
    common: &CommonArgs,
    tilts: &str,
    replicas: usize,
    policy: Option<Policy>,
) -> Result<(), CmdError> {
    let cfg = load_config(common)?.resolved();
    let report = calibrate_from(&cfg)?;
    let mut scenario = cfg.scenario(&report).map_err(usage)?;
    if let Some(p) = policy {
        scenario.policy = p;
    }
    let tilts: Vec<f64> = tilts
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("bad tilt '{t}'"))
        })
        .collect::<Result<_>>()
        .map_err(usage)?;

    let grid = SweepGrid {
        tilts_deg: tilts,
        policies: vec![scenario.policy],
        n_seed_replicas: replicas,
    };
    let results = sweep(&scenario, &grid).map_err(|e| runtime(e.into()))?;

    ensure_out(&common.out)?;
    let mut csv = String::from(
        "tilt_deg,policy,seed,n_blockage_events,n_events_survived,total_outage_ms,\
         measurements_total,mean_rss_during_blockage_dbm\n",
    );
    for (s, m) in &results {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.geom.tx_tilt_deg(),
            m.policy,
            m.seed,
            m.n_blockage_events,
            m.n_events_survived,
            m.total_outage_ms,
            m.measurements_total,
            m.mean_rss_during_blockage_dbm
                .map(fmt_db)
                .unwrap_or_default()
        ));
    }
    write_file(&common.out.join("sweep.csv"), &csv)?;
    println!(
        "sweep: {} runs -> {}",
        results.len(),
        common.out.join("sweep.csv").display()
    );
    Ok(())
}

fn cmd_codebook(common: &CommonArgs) -> Result<(), CmdError> {
    let cfg = load_config(common)?.resolved();
    let report = calibrate_from(&cfg)?;
    let scenario = cfg.scenario(&report).map_err(usage)?;
    ensure_out(&common.out)?;
    write_file(&common.out.join("tx_codebook.toml"), &scenario.tx_codebook.dump())?;
    write_file(&common.out.join("rx_codebook.toml"), &scenario.rx_codebook.dump())?;
    println!(
        "codebooks: tx {} beams, rx {} beams -> {}",
        scenario.tx_codebook.len(),
        scenario.rx_codebook.len(),
        common.out.display()
    );
    Ok(())
}
