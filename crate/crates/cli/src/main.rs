//! `sumcons`: simulate storage-coordination scenarios, emit stability
//! certificates, and sweep the time-scale parameter.
//!
//! Exit codes
//! - `simulate`: 0 converged and fair, 1 bad config, 2 simulation fault,
//!   3 unfair/unconverged (outputs still written).
//! - `certify`: 0 valid certificate, 1 bad arguments, 2 internal
//!   inconsistency between the scalar and matrix routes.
//! - `sweep`: 0 report written, 1 bad config.

mod manifest;

use clap::{Parser, Subcommand};
use manifest::{sha256_hex, RunManifest};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use sumcons::stability::{
    build_q1_tilde, constructive_pq, is_negative_definite, schur_complement_report,
};
use sumcons::windfarm::{run_scenario, WindProfile};
use sumcons::{Error, SweepConfig64, WindFarmScenario64};

#[derive(Parser)]
#[command(name = "sumcons", version, about = "Sum-constrained consensus toolkit")]
struct Cli {
    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Overrides the seed of a seeded-noise wind profile.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a wind-farm scenario config; writes trajectory CSV, fairness
    /// report, and run manifest.
    Simulate { config: PathBuf },
    /// Build the delay-independent stability certificate for n agents.
    Certify {
        #[arg(long)]
        n: usize,
    },
    /// Classify convergence over an epsilon grid and bracket the
    /// empirical stability boundary.
    Sweep { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = std::fs::create_dir_all(&cli.out_dir) {
        eprintln!("cannot create out dir {}: {e}", cli.out_dir.display());
        return ExitCode::from(1);
    }
    let code = match &cli.command {
        Command::Simulate { config } => cmd_simulate(&cli, config),
        Command::Certify { n } => cmd_certify(&cli, *n),
        Command::Sweep { config } => cmd_sweep(&cli, config),
    };
    ExitCode::from(code)
}

fn say(cli: &Cli, msg: &str) {
    if !cli.quiet {
        println!("{msg}");
    }
}

fn write_output(cli: &Cli, name: &str, content: &str, outputs: &mut Vec<String>) -> Result<(), u8> {
    let path = cli.out_dir.join(name);
    std::fs::write(&path, content).map_err(|e| {
        eprintln!("cannot write {}: {e}", path.display());
        2u8
    })?;
    say(cli, &format!("wrote {}", path.display()));
    outputs.push(name.to_string());
    Ok(())
}

fn read_config_bytes(path: &Path) -> Result<Vec<u8>, u8> {
    std::fs::read(path).map_err(|e| {
        eprintln!("cannot read config {}: {e}", path.display());
        1u8
    })
}

fn cmd_simulate(cli: &Cli, config_path: &Path) -> u8 {
    let started = Instant::now();
    let bytes = match read_config_bytes(config_path) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let mut scenario: WindFarmScenario64 = match serde_json::from_slice(&bytes) {
        Ok(s) => s,
        Err(e) => {
            // serde_json reports line/column of the offending field
            eprintln!("bad config {}: {e}", config_path.display());
            return 1;
        }
    };
    if let Some(seed) = cli.seed {
        match &mut scenario.wind {
            WindProfile::SeededNoise { seed: s, .. } => *s = seed,
            _ => eprintln!("--seed ignored: wind profile is not seeded noise"),
        }
    }
    if let Err(e) = scenario.validate() {
        eprintln!("bad config {}: {e}", config_path.display());
        return 1;
    }

    let config_sha256 = sha256_hex(&bytes);
    let mut manifest = RunManifest {
        command: "simulate".into(),
        config_path: config_path.display().to_string(),
        config_sha256,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        duration_s: 0.0,
        outputs: Vec::new(),
        seed: scenario.wind.seed(),
        status: "fault".into(),
    };

    let result = match run_scenario(&scenario) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("simulation fault: {e}");
            manifest.duration_s = started.elapsed().as_secs_f64();
            let _ = manifest.save(&cli.out_dir.join("manifest.json"));
            return match e {
                Error::Config(_) => 1,
                _ => 2,
            };
        }
    };

    let mut outputs = Vec::new();
    let names = &scenario.output;
    if let Err(code) = write_output(
        cli,
        names.trajectory_csv(),
        &result.trajectory.to_csv(),
        &mut outputs,
    ) {
        return code;
    }
    if let Err(code) = write_output(
        cli,
        names.fairness_json(),
        &result.fairness.to_json(),
        &mut outputs,
    ) {
        return code;
    }
    if let Err(code) = write_output(
        cli,
        names.fairness_txt(),
        &result.fairness.to_text(),
        &mut outputs,
    ) {
        return code;
    }
    say(cli, &result.fairness.to_text());
    if let Some(settle) = result.settling_time {
        say(
            cli,
            &format!("settled within the tracking band {settle:.4} s after the last P_d step"),
        );
    } else {
        say(
            cli,
            "did not settle within the tracking band after the last P_d step",
        );
    }

    let fair = result.fairness.fair;
    manifest.status = if fair { "ok" } else { "unfair" }.into();
    manifest.outputs = outputs;
    manifest.duration_s = started.elapsed().as_secs_f64();
    let manifest_path = cli.out_dir.join("manifest.json");
    if let Err(e) = manifest.save(&manifest_path) {
        eprintln!("cannot write manifest: {e}");
        return 2;
    }
    say(cli, &format!("wrote {}", manifest_path.display()));
    // tamper check: the stored digest must match a fresh hash of the config
    match RunManifest::load(&manifest_path).and_then(|m| m.verify_config()) {
        Ok(true) => {}
        Ok(false) => eprintln!("warning: config file changed while the run was in progress"),
        Err(e) => eprintln!("warning: manifest self-check failed: {e}"),
    }
    if fair {
        0
    } else {
        3
    }
}

fn cmd_certify(cli: &Cli, n: usize) -> u8 {
    let started = Instant::now();
    if n < 2 {
        eprintln!("certificate needs at least 2 agents, got {n}");
        return 1;
    }
    let cert = match constructive_pq::<f64>(n) {
        Ok(c) => c,
        Err(Error::Config(msg)) => {
            eprintln!("bad arguments: {msg}");
            return 1;
        }
        Err(e) => {
            eprintln!("internal inconsistency: {e}");
            return 2;
        }
    };
    // cross-verify the scalar route against the direct matrix route
    let scalar_route = match schur_complement_report(&cert.p, &cert.q) {
        Ok(r) => r.feasible,
        Err(_) => false,
    };
    let direct_route =
        match build_q1_tilde(&cert.p, &cert.q, n).and_then(|m| is_negative_definite(&m)) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("internal inconsistency: {e}");
                return 2;
            }
        };
    if !cert.valid || !scalar_route || !direct_route {
        eprintln!(
            "internal inconsistency: valid={} scalar_route={scalar_route} direct_route={direct_route}",
            cert.valid
        );
        return 2;
    }

    say(cli, &cert.to_text());
    let mut outputs = Vec::new();
    let json_name = format!("certificate_n{n}.json");
    let text_name = format!("certificate_n{n}.txt");
    if let Err(code) = write_output(cli, &json_name, &cert.to_json(), &mut outputs) {
        return code;
    }
    if let Err(code) = write_output(cli, &text_name, &cert.to_text(), &mut outputs) {
        return code;
    }
    let manifest = RunManifest {
        command: "certify".into(),
        config_path: format!("n={n}"),
        config_sha256: sha256_hex(format!("n={n}").as_bytes()),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        duration_s: started.elapsed().as_secs_f64(),
        outputs,
        seed: None,
        status: "ok".into(),
    };
    if let Err(e) = manifest.save(&cli.out_dir.join("manifest.json")) {
        eprintln!("cannot write manifest: {e}");
        return 2;
    }
    0
}

fn cmd_sweep(cli: &Cli, config_path: &Path) -> u8 {
    let started = Instant::now();
    let bytes = match read_config_bytes(config_path) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let config: SweepConfig64 = match serde_json::from_slice(&bytes) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("bad config {}: {e}", config_path.display());
            return 1;
        }
    };
    if let Err(e) = config.validate() {
        eprintln!("bad config {}: {e}", config_path.display());
        return 1;
    }
    let report = match sumcons::sim::epsilon_sweep(&config) {
        Ok(r) => r,
        Err(Error::Config(msg)) => {
            eprintln!("bad config: {msg}");
            return 1;
        }
        Err(e) => {
            eprintln!("sweep failed: {e}");
            return 2;
        }
    };

    for b in &report.brackets {
        let lo = b
            .largest_converged
            .map(|v| v.to_string())
            .unwrap_or_else(|| "-".into());
        let hi = b
            .first_non_converged
            .map(|v| v.to_string())
            .unwrap_or_else(|| "-".into());
        let flag = if b.bracketed() {
            "bracketed"
        } else {
            "unbracketed"
        };
        say(
            cli,
            &format!(
                "n = {:>3}: empirical eps* bracket ({lo}, {hi}) [{flag}]",
                b.n
            ),
        );
    }
    say(cli, &format!("note: {}", report.note));

    let mut outputs = Vec::new();
    if let Err(code) = write_output(cli, "sweep.csv", &report.to_csv(), &mut outputs) {
        return code;
    }
    let report_json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Err(code) = write_output(cli, "sweep_report.json", &report_json, &mut outputs) {
        return code;
    }
    let manifest = RunManifest {
        command: "sweep".into(),
        config_path: config_path.display().to_string(),
        config_sha256: sha256_hex(&bytes),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        duration_s: started.elapsed().as_secs_f64(),
        outputs,
        seed: None,
        status: "ok".into(),
    };
    if let Err(e) = manifest.save(&cli.out_dir.join("manifest.json")) {
        eprintln!("cannot write manifest: {e}");
        return 2;
    }
    0
}
