//! Command-line front end: `modes`, `optimize`, `simulate`, `scan` and
//! `benchmark` over a JSON experiment configuration.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    amplitude_error_scan, filter_function, lamb_dicke_diagnostic, operational_infidelity, quasi_static_detuning_scan,
    timing_error_scan, ScanResult, LAMB_DICKE_THRESHOLD,
};
use crate::chain::ModeData;
use crate::config::{canonical_json, Emit, ExperimentConfig, ScanKind, ScanSpec};
use crate::control::{validate, DriveWaveform, GateTarget};
use crate::error::{Error, Result};
use crate::kernels::{phase_series, trajectory_series, KernelSet};
use crate::optimize::{histories_csv, optimize, OptimizationResult};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "MSGATE_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "msgate", version, about = "Pulse synthesis for Molmer-Sorensen-type gates in ion chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured optimizer seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (defaults to the configured one).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to MSGATE_THREADS, then all logical cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print and export the motional modes.
    Modes(CommonArgs),
    /// Optimize a drive and write drive.json and report.json.
    Optimize(CommonArgs),
    /// Sample trajectories and phases of a drive.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        drive: PathBuf,
    },
    /// Noise-susceptibility, domain and power scans.
    Scan {
        #[command(flatten)]
        common: CommonArgs,
        /// Drive to analyse; optimized from the config when omitted.
        #[arg(long)]
        drive: Option<PathBuf>,
    },
    /// Wall time and infidelity against chain length.
    Benchmark {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated chain lengths (overrides the config).
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<usize>,
        #[arg(long)]
        repeats: Option<usize>,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Modes(c) | Command::Optimize(c) => c,
            Command::Simulate { common, .. } | Command::Scan { common, .. } | Command::Benchmark { common, .. } => common,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are printed to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        return Err(Error::InvalidConfig("thread count must be positive".into()));
    }
    Ok(n)
}

/// Runs a parsed command inside a worker pool of the requested size.
pub fn run(cli: &Cli) -> Result<i32> {
    let common = cli.command.common();
    let threads = resolve_threads(common.threads)?;
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", common.config.display())))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let ctx = Context {
        echo: serde_json::from_str(&canonical_json(&text)?)?,
        seed: common.seed.unwrap_or(cfg.optimizer.seed),
        out: common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.outputs.directory)),
        threads,
        cfg,
    };
    fs::create_dir_all(&ctx.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Modes(_) => cmd_modes(&ctx),
        Command::Optimize(_) => cmd_optimize(&ctx),
        Command::Simulate { drive, .. } => cmd_simulate(&ctx, drive),
        Command::Scan { drive, .. } => cmd_scan(&ctx, drive.as_deref()),
        Command::Benchmark { lengths, repeats, .. } => cmd_benchmark(&ctx, lengths, *repeats),
    })
}

struct Context {
    cfg: ExperimentConfig,
    /// The input document, canonicalized.
    echo: Value,
    seed: u64,
    out: PathBuf,
    threads: usize,
}

impl Context {
    fn report(&self, command: &str, body: Value) -> Value {
        let mut v = json!({
            "command": command,
            "seed": self.seed,
            "threads": self.threads,
            "config": self.echo,
        });
        if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
            dst.extend(src);
        }
        v
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_error)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidConfig(format!("csv: {other:?}")),
    }
}

fn cmd_modes(ctx: &Context) -> Result<i32> {
    let modes = ctx.cfg.modes()?;
    let mhz = 2.0 * std::f64::consts::PI * 1e6;
    let khz = mhz * 1e-3;
    let mut w = csv_writer(&ctx.path("modes.csv"))?;
    w.write_record(["mode", "axis", "frequency_mhz", "relative_detuning_khz", "ion", "eigenvector", "lamb_dicke"])
        .map_err(csv_error)?;
    println!("{:>4} {:>4} {:>14} {:>16}  lamb-dicke", "mode", "axis", "freq (MHz)", "delta_p (kHz)");
    let mut table = Vec::new();
    for p in 0..modes.n_modes() {
        let eta: Vec<f64> = (0..modes.n_ions).map(|j| modes.lamb_dicke[(j, p)]).collect();
        let b: Vec<f64> = (0..modes.n_ions).map(|j| modes.eigenvectors[(j, p)]).collect();
        let axis = modes.axis_labels[p].label().to_string();
        println!(
            "{p:>4} {axis:>4} {:>14.6} {:>16.4}  {}",
            modes.frequencies[p] / mhz,
            modes.relative_detunings[p] / khz,
            eta.iter().map(|e| format!("{e:+.4}")).collect::<Vec<_>>().join(" ")
        );
        for j in 0..modes.n_ions {
            w.write_record([
                p.to_string(),
                axis.clone(),
                format!("{:.9}", modes.frequencies[p] / mhz),
                format!("{:.6}", modes.relative_detunings[p] / khz),
                j.to_string(),
                format!("{:e}", b[j]),
                format!("{:e}", eta[j]),
            ])
            .map_err(csv_error)?;
        }
        table.push(json!({
            "mode": p,
            "axis": axis,
            "frequency_mhz": modes.frequencies[p] / mhz,
            "relative_detuning_khz": modes.relative_detunings[p] / khz,
            "eigenvector": b,
            "lamb_dicke": eta,
        }));
    }
    w.flush()?;
    write_json(
        &ctx.path("report.json"),
        &ctx.report("modes", json!({ "laser_detuning_mhz": modes.laser_detuning / mhz, "modes": table })),
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct RunSummary {
    run: usize,
    seed: u64,
    infidelity: f64,
    wall_time_s: f64,
}

/// `runs` independent multi-starts with seeds `seed, seed + 1, ...`; the best
/// run (lowest infidelity, then lowest index) is returned with a summary.
fn optimize_runs(cfg: &ExperimentConfig, modes: &ModeData, seed: u64) -> Result<(OptimizationResult, Vec<RunSummary>)> {
    let mut best: Option<OptimizationResult> = None;
    let mut summary = Vec::new();
    for run in 0..cfg.optimizer.runs {
        let s = seed.wrapping_add(run as u64);
        let res = optimize(&cfg.problem(modes, Some(s))?)?;
        summary.push(RunSummary {
            run,
            seed: s,
            infidelity: res.infidelity,
            wall_time_s: res.wall_time_s,
        });
        if best.as_ref().map_or(true, |b| res.infidelity < b.infidelity) {
            best = Some(res);
        }
    }
    Ok((best.expect("at least one run"), summary))
}

fn sample_times(duration: f64, samples: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..samples).map(|i| duration * i as f64 / (samples - 1) as f64).collect();
    t[samples - 1] = duration;
    t
}

fn write_trajectories(path: &Path, drive: &DriveWaveform, modes: &ModeData, times: &[f64]) -> Result<f64> {
    let series = trajectory_series(drive, modes, times)?;
    let mut w = csv_writer(path)?;
    w.write_record(["time_us", "mode", "axis", "quantity", "ion", "re", "im"]).map_err(csv_error)?;
    let ions = drive.addressed_ions();
    for (t, a) in times.iter().zip(&series) {
        for p in 0..modes.n_modes() {
            let axis = modes.axis_labels[p].label().to_string();
            let mut sum = num_complex::Complex64::new(0.0, 0.0);
            for &j in &ions {
                let v = a[(j, p)];
                sum += modes.lamb_dicke[(j, p)] * v;
                w.write_record([
                    format!("{:.9}", t * 1e6),
                    p.to_string(),
                    axis.clone(),
                    "alpha".into(),
                    j.to_string(),
                    format!("{:e}", v.re),
                    format!("{:e}", v.im),
                ])
                .map_err(csv_error)?;
            }
            w.write_record([
                format!("{:.9}", t * 1e6),
                p.to_string(),
                axis,
                "eta_alpha_sum".into(),
                String::new(),
                format!("{:e}", sum.re),
                format!("{:e}", sum.im),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    let last = series.last().expect("at least two samples");
    Ok(ions
        .iter()
        .flat_map(|&j| (0..modes.n_modes()).map(move |p| (j, p)))
        .map(|(j, p)| last[(j, p)].norm())
        .fold(0.0, f64::max))
}

/// Writes every pair's summed phase series; returns the largest end-of-gate
/// deviation from the target.
fn write_phases(path: &Path, drive: &DriveWaveform, modes: &ModeData, target: &GateTarget, times: &[f64]) -> Result<f64> {
    let series = phase_series(drive, modes, times)?;
    let n = modes.n_ions;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| (j + 1..n).map(move |k| (j, k))).collect();
    let mut w = csv_writer(path)?;
    let mut header = vec!["time_us".to_string()];
    header.extend(pairs.iter().map(|(j, k)| format!("phi_{j}_{k}_rad")));
    w.write_record(&header).map_err(csv_error)?;
    for (t, m) in times.iter().zip(&series) {
        let mut row = vec![format!("{:.9}", t * 1e6)];
        row.extend(pairs.iter().map(|&(j, k)| format!("{:e}", m[(j, k)])));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    let last = series.last().expect("at least two samples");
    Ok(pairs.iter().map(|&(j, k)| (last[(j, k)] - target.phase(j, k)).abs()).fold(0.0, f64::max))
}

fn cmd_optimize(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.cfg;
    let modes = cfg.modes()?;
    let target = cfg.target()?;
    let (res, runs) = optimize_runs(cfg, &modes, ctx.seed)?;
    let drive = &res.best_drive;
    if cfg.emits(Emit::Drives) {
        write_json(&ctx.path("drive.json"), drive)?;
        fs::write(ctx.path("histories.csv"), histories_csv(&res))?;
    }
    let times = sample_times(drive.duration, cfg.outputs.samples);
    let max_alpha = if cfg.emits(Emit::Trajectories) {
        Some(write_trajectories(&ctx.path("trajectories.csv"), drive, &modes, &times)?)
    } else {
        None
    };
    let max_phase = if cfg.emits(Emit::Phases) {
        Some(write_phases(&ctx.path("phases.csv"), drive, &modes, &target, &times)?)
    } else {
        None
    };
    let ld = lamb_dicke_diagnostic(drive, &modes, &modes.mean_phonons, &times, LAMB_DICKE_THRESHOLD)?;
    if ld.warning {
        eprintln!("warning: Lamb-Dicke metric {:.3} exceeds {:.2}", ld.max_metric, ld.threshold);
    }
    let threshold_met = cfg.optimizer.threshold.map(|th| res.infidelity <= th);
    println!(
        "infidelity {:.3e} (cost {:.3e}) in {:.2} s, best instance {}",
        res.infidelity, res.breakdown.total, res.wall_time_s, res.best_instance
    );
    if cfg.emits(Emit::Report) {
        let body = json!({
            "infidelity": res.infidelity,
            "internal_infidelity": res.internal_infidelity,
            "fidelity": res.fidelity,
            "cost": res.breakdown,
            "wall_time_s": runs.iter().map(|r| r.wall_time_s).sum::<f64>(),
            "best_instance": res.best_instance,
            "best_seed": res.seed,
            "runs": runs,
            "instances": res.instances,
            "constraints": res.constraints,
            "constraints_pass": res.constraints.passes(),
            "lamb_dicke_max": ld.max_metric,
            "lamb_dicke_warning": ld.warning,
            "max_final_alpha": max_alpha,
            "max_phase_error_rad": max_phase,
            "threshold": cfg.optimizer.threshold,
            "threshold_met": threshold_met,
        });
        write_json(&ctx.path("report.json"), &ctx.report("optimize", body))?;
    }
    Ok(if threshold_met == Some(false) { EXIT_THRESHOLD } else { EXIT_OK })
}

fn load_drive(path: &Path, cfg: &ExperimentConfig) -> Result<DriveWaveform> {
    let text = fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    let drive: DriveWaveform = serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("drive file: {e}")))?;
    drive.check()?;
    if let Some(d) = drive.ions.iter().find(|d| d.ion >= cfg.trap.n_ions) {
        return Err(Error::GridMismatch(format!("drive addresses ion {} of a {}-ion chain", d.ion, cfg.trap.n_ions)));
    }
    let duration = cfg.drive.duration_us * 1e-6;
    if drive.segments() != cfg.drive.segments || (drive.duration - duration).abs() > 1e-9 * duration {
        return Err(Error::GridMismatch(format!(
            "drive has {} segments over {:e} s, config {} over {:e} s",
            drive.segments(),
            drive.duration,
            cfg.drive.segments,
            duration
        )));
    }
    Ok(drive)
}

fn kernels_for(drive: &DriveWaveform, modes: &ModeData, target: &GateTarget) -> Result<KernelSet> {
    let mut ions = drive.addressed_ions();
    ions.extend(target.addressed_ions());
    ions.sort_unstable();
    ions.dedup();
    KernelSet::new(modes, &drive.boundaries, &crate::control::pairs_of(&ions))
}

fn cmd_simulate(ctx: &Context, drive_path: &Path) -> Result<i32> {
    let cfg = &ctx.cfg;
    let modes = cfg.modes()?;
    let target = cfg.target()?;
    let drive = load_drive(drive_path, cfg)?;
    let times = sample_times(drive.duration, cfg.outputs.samples);
    let max_alpha = write_trajectories(&ctx.path("trajectories.csv"), &drive, &modes, &times)?;
    let max_phase = write_phases(&ctx.path("phases.csv"), &drive, &modes, &target, &times)?;
    let kernels = kernels_for(&drive, &modes, &target)?;
    let fid = operational_infidelity(&drive, &kernels, &target, &modes.mean_phonons)?;
    let ld = lamb_dicke_diagnostic(&drive, &modes, &modes.mean_phonons, &times, LAMB_DICKE_THRESHOLD)?;
    println!("infidelity {:.3e}, largest final |alpha| {max_alpha:.3e}, worst phase error {max_phase:.3e} rad", fid.infidelity);
    let scheme = cfg.scheme_for(&target)?;
    let body = json!({
        "infidelity": fid.infidelity,
        "fidelity": fid,
        "max_final_alpha": max_alpha,
        "max_phase_error_rad": max_phase,
        "lamb_dicke_max": ld.max_metric,
        "lamb_dicke_warning": ld.warning,
        "constraints": validate(&drive, &scheme),
    });
    write_json(&ctx.path("report.json"), &ctx.report("simulate", body))?;
    Ok(EXIT_OK)
}

/// Scan with the axis replaced by a relabelled copy in display units.
fn relabel(scan: ScanResult, name: &str, axis: Vec<f64>) -> Result<ScanResult> {
    let mut out = ScanResult::new(name, axis)?;
    for s in scan.series {
        out.push_series(&s.name, s.values);
    }
    out.metadata = scan.metadata;
    Ok(out)
}

fn cmd_scan(ctx: &Context, drive_path: Option<&Path>) -> Result<i32> {
    let cfg = &ctx.cfg;
    let spec = cfg
        .scan
        .clone()
        .ok_or_else(|| Error::InvalidConfig("scan command needs a \"scan\" section".into()))?;
    match spec.kind {
        ScanKind::Domain => return scan_domain(ctx, &spec),
        ScanKind::Power => return scan_power(ctx, &spec),
        _ => {}
    }
    let axis = spec.axis.values()?;
    let modes = cfg.modes()?;
    let target = cfg.target()?;
    let drive = match drive_path {
        Some(p) => load_drive(p, cfg)?,
        None => {
            let (res, _) = optimize_runs(cfg, &modes, ctx.seed)?;
            write_json(&ctx.path("drive.json"), &res.best_drive)?;
            res.best_drive
        }
    };
    let kernels = kernels_for(&drive, &modes, &target)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let scan = match spec.kind {
        ScanKind::Detuning => {
            let offsets: Vec<f64> = axis.iter().map(|f| two_pi * f).collect();
            relabel(quasi_static_detuning_scan(&drive, &kernels, &target, &offsets)?, "detuning_offset_hz", axis)?
        }
        ScanKind::Timing => timing_error_scan(&drive, &kernels, &target, &axis)?,
        ScanKind::Amplitude => relabel(amplitude_error_scan(&drive, &kernels, &target, &axis)?, "amplitude_scale", axis)?,
        ScanKind::Filter => {
            let omegas: Vec<f64> = axis.iter().map(|f| two_pi * f).collect();
            relabel(filter_function(&drive, &kernels, &modes.mean_phonons, &omegas)?, "frequency_hz", axis)?
        }
        ScanKind::Domain | ScanKind::Power => unreachable!(),
    };
    scan.save_csv(&ctx.path("scan.csv"))?;
    let body = json!({ "scan": serde_json::from_str::<Value>(&scan.to_json()?)? });
    write_json(&ctx.path("report.json"), &ctx.report("scan", body))?;
    println!("wrote {} points to {}", scan.axis.len(), ctx.path("scan.csv").display());
    Ok(EXIT_OK)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CellResult {
    x: f64,
    y: f64,
    seed: u64,
    infidelity: f64,
    cost: f64,
    wall_time_s: f64,
}

/// Optimizes one scan cell unless a matching result file already exists.
fn run_cell(path: &Path, x: f64, y: f64, seed: u64, cfg: &ExperimentConfig) -> Result<CellResult> {
    if let Ok(text) = fs::read_to_string(path) {
        if let Ok(done) = serde_json::from_str::<CellResult>(&text) {
            if done.x == x && done.y == y && done.seed == seed {
                return Ok(done);
            }
        }
    }
    let modes = cfg.modes()?;
    let (res, runs) = optimize_runs(cfg, &modes, seed)?;
    let cell = CellResult {
        x,
        y,
        seed,
        infidelity: res.infidelity,
        cost: res.breakdown.total,
        wall_time_s: runs.iter().map(|r| r.wall_time_s).sum(),
    };
    write_json(path, &cell)?;
    Ok(cell)
}

fn scan_domain(ctx: &Context, spec: &ScanSpec) -> Result<i32> {
    let detunings = spec.axis.values()?;
    let durations = spec
        .durations_us
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("domain scan needs durations_us".into()))?
        .values()?;
    let cells_dir = ctx.path("cells");
    fs::create_dir_all(&cells_dir)?;
    let grid: Vec<(usize, usize)> = (0..detunings.len())
        .flat_map(|i| (0..durations.len()).map(move |j| (i, j)))
        .collect();
    let results = grid
        .par_iter()
        .map(|&(i, j)| {
            let mut cfg = ctx.cfg.clone();
            cfg.laser.value = detunings[i];
            cfg.drive.duration_us = durations[j];
            cfg.validate()?;
            run_cell(&cells_dir.join(format!("domain_{i}_{j}.json")), detunings[i], durations[j], ctx.seed, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let unit = match ctx.cfg.laser.detuning_mode {
        crate::config::DetuningMode::AbsoluteMhz => "detuning_mhz",
        crate::config::DetuningMode::OffsetFromXComKhz => "detuning_offset_khz",
    };
    let mut w = csv_writer(&ctx.path("scan.csv"))?;
    w.write_record([unit, "duration_us", "infidelity", "cost", "wall_time_s"]).map_err(csv_error)?;
    for c in &results {
        w.write_record([c.x, c.y, c.infidelity, c.cost, c.wall_time_s].map(|v| format!("{v:e}")))
            .map_err(csv_error)?;
    }
    w.flush()?;
    write_json(&ctx.path("report.json"), &ctx.report("scan", json!({ "kind": "domain", "cells": results })))?;
    println!("wrote {} cells to {}", results.len(), ctx.path("scan.csv").display());
    Ok(EXIT_OK)
}

fn scan_power(ctx: &Context, spec: &ScanSpec) -> Result<i32> {
    let rates = spec.axis.values()?;
    let cells_dir = ctx.path("cells");
    fs::create_dir_all(&cells_dir)?;
    let results = rates
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut cfg = ctx.cfg.clone();
            cfg.drive.max_rabi_khz = r;
            cfg.validate()?;
            run_cell(&cells_dir.join(format!("power_{i}.json")), r, 0.0, ctx.seed, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let threshold = ctx.cfg.optimizer.threshold.unwrap_or(1e-5);
    let minimum = results
        .iter()
        .filter(|c| c.infidelity <= threshold)
        .map(|c| c.x)
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
    let mut w = csv_writer(&ctx.path("scan.csv"))?;
    w.write_record(["max_rabi_khz", "infidelity", "cost", "wall_time_s"]).map_err(csv_error)?;
    for c in &results {
        w.write_record([c.x, c.infidelity, c.cost, c.wall_time_s].map(|v| format!("{v:e}")))
            .map_err(csv_error)?;
    }
    w.flush()?;
    let body = json!({
        "kind": "power",
        "threshold": threshold,
        "minimum_max_rabi_khz": minimum,
        "cells": results,
    });
    write_json(&ctx.path("report.json"), &ctx.report("scan", body))?;
    match minimum {
        Some(m) => println!("smallest max Rabi rate reaching {threshold:e}: {m} kHz"),
        None => println!("no scanned max Rabi rate reaches {threshold:e}"),
    }
    Ok(EXIT_OK)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[derive(Serialize)]
struct BenchmarkRow {
    n_ions: usize,
    repeats: usize,
    mean_time_s: f64,
    std_time_s: f64,
    mean_infidelity: f64,
    std_infidelity: f64,
    times_s: Vec<f64>,
    infidelities: Vec<f64>,
}

fn cmd_benchmark(ctx: &Context, lengths: &[usize], repeats: Option<usize>) -> Result<i32> {
    let spec = ctx.cfg.benchmark.clone();
    let lengths: Vec<usize> = if lengths.is_empty() {
        spec.as_ref().map(|b| b.lengths.clone()).unwrap_or_default()
    } else {
        lengths.to_vec()
    };
    let repeats = repeats.or(spec.map(|b| b.repeats)).unwrap_or(10);
    if lengths.is_empty() || repeats == 0 {
        return Err(Error::InvalidConfig("benchmark needs chain lengths and at least one repeat".into()));
    }
    if let Some(n) = lengths.iter().find(|n| **n < 4) {
        return Err(Error::InvalidConfig(format!("benchmark chain lengths must be at least 4, got {n}")));
    }
    let mut rows = Vec::new();
    for &n in &lengths {
        let mut cfg = ctx.cfg.clone();
        cfg.trap.n_ions = n;
        cfg.optimizer.runs = 1;
        cfg.validate()?;
        let modes = cfg.modes()?;
        let mut times = Vec::new();
        let mut infid = Vec::new();
        for r in 0..repeats {
            let problem = cfg.problem(&modes, Some(ctx.seed.wrapping_add(r as u64)))?;
            let t0 = Instant::now();
            let res = optimize(&problem)?;
            times.push(t0.elapsed().as_secs_f64());
            infid.push(res.infidelity);
        }
        let (mt, st) = mean_std(&times);
        let (mi, si) = mean_std(&infid);
        println!("N = {n:2}: time {mt:.2} +- {st:.2} s, infidelity {mi:.2e} +- {si:.2e}");
        rows.push(BenchmarkRow {
            n_ions: n,
            repeats,
            mean_time_s: mt,
            std_time_s: st,
            mean_infidelity: mi,
            std_infidelity: si,
            times_s: times,
            infidelities: infid,
        });
    }
    let mut w = csv_writer(&ctx.path("benchmark.csv"))?;
    w.write_record(["n_ions", "repeats", "mean_time_s", "std_time_s", "mean_infidelity", "std_infidelity", "threads"])
        .map_err(csv_error)?;
    for r in &rows {
        w.write_record([
            r.n_ions.to_string(),
            r.repeats.to_string(),
            format!("{:e}", r.mean_time_s),
            format!("{:e}", r.std_time_s),
            format!("{:e}", r.mean_infidelity),
            format!("{:e}", r.std_infidelity),
            ctx.threads.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    write_json(&ctx.path("report.json"), &ctx.report("benchmark", json!({ "rows": rows })))?;
    Ok(EXIT_OK)
}
