use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chanfit::channel::{kmh_to_ms, max_doppler, TdlProfile, DEFAULT_RMS_DELAY_SPREAD};
use chanfit::grid::SlotConfig;
use chanfit::harness::{
    fingerprint, format_sig, mean_tridiagonal_ratio, run_sweep, selftest, write_manifest, write_slot_dump,
    EstimatorKind, ResultsWriter, RunFile,
};
use chanfit::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

#[derive(Parser)]
#[command(name = "chanfit", version, about = "OFDM channel-estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep SNR and speed, writing results.csv and manifest.txt
    Simulate(SimulateArgs),
    /// Share of channel-matrix energy on the main and first off diagonals
    Energy(EnergyArgs),
    /// Gradient and reception self-checks
    Selftest,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    snr_min: Option<f64>,
    #[arg(long)]
    snr_max: Option<f64>,
    #[arg(long)]
    snr_step: Option<f64>,
    /// Comma-separated speeds in km/h
    #[arg(long, value_delimiter = ',')]
    speeds: Option<Vec<f64>>,
    /// Slots per (SNR, speed) point
    #[arg(long)]
    slots: Option<usize>,
    /// Comma-separated subset of ls, ideal_lmmse, robust_lmmse, sirius, perfect_csi
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<EstimatorKind>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// TOML file with the same keys as these flags; flags win
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Also write per-slot metrics to slots.csv
    #[arg(long)]
    dump_slots: bool,
}

#[derive(Args)]
struct EnergyArgs {
    /// km/h
    #[arg(long, default_value_t = 200.0)]
    speed: f64,
    #[arg(long, default_value_t = 20)]
    realizations: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Energy(args) => energy(args),
        Command::Selftest => run_selftest(),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => ExitCode::from(EXIT_NUMERICAL),
                _ => ExitCode::from(EXIT_USAGE),
            }
        }
    }
}

fn simulate(args: SimulateArgs) -> chanfit::Result<ExitCode> {
    let base = match &args.config {
        Some(path) => RunFile::load(path)?,
        None => RunFile::default(),
    };
    let flags = RunFile {
        snr_min: args.snr_min,
        snr_max: args.snr_max,
        snr_step: args.snr_step,
        speeds: args.speeds,
        slots: args.slots,
        estimators: args.estimators,
        seed: args.seed,
        out_dir: args.out_dir,
        workers: args.workers,
        dump_slots: args.dump_slots.then_some(true),
        ..RunFile::default()
    };
    let run = base.overlay(flags).resolved();
    let cfg = run.sweep_config()?;
    let fp = fingerprint(&cfg);
    let out_dir = run.out_dir.clone().expect("resolved");
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
        path: out_dir.clone(),
        source: e,
    })?;
    write_manifest(&out_dir.join("manifest.txt"), &run, &fp)?;

    let mut writer = ResultsWriter::create(&out_dir.join("results.csv"))?;
    eprintln!(
        "{} SNR points x {} speeds x {} slots, {} workers",
        cfg.snr_grid.len(),
        cfg.velocities.len(),
        cfg.slots_per_point,
        cfg.workers
    );
    let outcome = run_sweep(&cfg, &fp, |r| {
        eprintln!(
            "{:>13} {:>6} dB {:>6} km/h  NMSE {:>9} dB  BER {}",
            r.estimator.id(),
            format_sig(r.snr_db, 6),
            format_sig(r.speed_kmh, 6),
            format_sig(r.nmse_db, 4),
            format_sig(r.ber, 4)
        );
        writer.append(r)
    })?;
    if run.dump_slots == Some(true) {
        write_slot_dump(&out_dir.join("slots.csv"), &outcome.slot_records)?;
    }
    report_paths(&out_dir);
    if outcome.diagnostics.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for d in &outcome.diagnostics {
            eprintln!("numerical failure: {d}");
        }
        Ok(ExitCode::from(EXIT_NUMERICAL))
    }
}

fn report_paths(out_dir: &Path) {
    println!("{}", out_dir.join("results.csv").display());
    println!("{}", out_dir.join("manifest.txt").display());
}

fn energy(args: EnergyArgs) -> chanfit::Result<ExitCode> {
    let cfg = SlotConfig::default();
    let fd = max_doppler(kmh_to_ms(args.speed), cfg.carrier_frequency);
    let profile = TdlProfile::tdl_c(DEFAULT_RMS_DELAY_SPREAD);
    let ratio = mean_tridiagonal_ratio(&profile, fd, &cfg, args.realizations, args.seed)?;
    println!(
        "speed {} km/h, max Doppler {:.1} Hz, {} realizations: tri-diagonal energy ratio {:.5}",
        args.speed, fd, args.realizations, ratio
    );
    Ok(ExitCode::SUCCESS)
}

fn run_selftest() -> chanfit::Result<ExitCode> {
    let checks = selftest::run_all();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NUMERICAL)
    })
}
