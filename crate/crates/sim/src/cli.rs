//! The `shef` command line.
//!
//! Exit status: 0 when every expectation holds, 1 when a run completes but
//! some check fails, 2 when an input file or configuration is invalid.

use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shef_core::sim_env::CostModelParams;

use crate::calibrate::{calibrate, default_start, load_targets, CalibrateError};
use crate::params::{calibrated_params, parse_params, render_params};
use crate::presets;
use crate::report::{write_report, Report};
use crate::runner::{run_scenario, RunError, RunOptions};
use crate::scenario::{default_expect, load_scenario, parse_action, parse_attack_expect, AttackSpec, Scenario, TraceItem};
use crate::sweep::{parse_vary, render_table, sweep};
use crate::trace::TraceOp;

#[derive(Debug, Parser)]
#[command(name = "shef", version, about = "FPGA trusted-execution simulator")]
pub struct Cli {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Cost-model parameter file, overriding the scenario's and the built-in one.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run only the attestation and key-release exchange of a scenario.
    Attest { scenario: PathBuf },
    /// Run a scenario end to end and check its expectations.
    Run { scenario: PathBuf },
    /// Run a scenario with one extra attack appended to its trace.
    Attack {
        scenario: PathBuf,
        /// Attack spec, e.g. `flipbit region=a target=tag`.
        #[arg(long)]
        action: String,
        #[arg(long, default_value_t = 1)]
        repeat: u32,
        /// auth_failure | undetected | no_leak | leak
        #[arg(long)]
        expect: Option<String>,
    },
    /// Re-run a scenario once per value of one parameter.
    Sweep {
        scenario: PathBuf,
        /// `<key>=<v1,v2,...>`
        #[arg(long)]
        vary: String,
    },
    /// Fit cost-model parameters to a targets file.
    Calibrate {
        targets: PathBuf,
        /// Also write the fitted parameters here.
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Write the built-in scenario files into a directory.
    Presets { dir: PathBuf },
}

enum Failure {
    Config(String),
    Mismatch,
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    load_scenario(path).map_err(|d| Failure::Config(format!("{}: {d}", path.display())))
}

fn run_error(e: RunError) -> Failure {
    Failure::Config(e.to_string())
}

fn params(cli: &Cli) -> Result<Option<CostModelParams>, Failure> {
    let Some(p) = &cli.params else { return Ok(None) };
    let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
    parse_params(&text).map(Some).map_err(|d| Failure::Config(format!("{}: {d}", p.display())))
}

fn options(cli: &Cli) -> Result<RunOptions, Failure> {
    Ok(RunOptions { params: params(cli)?, seed: cli.seed })
}

fn summary(r: &Report) {
    println!("scenario {} (seed {})", r.scenario, r.seed);
    println!("protocol {}", r.protocol.outcome);
    if let Some(o) = r.overhead {
        println!(
            "overhead {:.2}% (baseline {} cycles, secured {} cycles)",
            o.overhead_pct, o.baseline_cycles, o.secured_cycles
        );
    }
    for a in &r.attacks {
        println!("attack {} `{}`: {}/{} detected, expect {}", a.id, a.action, a.detected, a.placements, a.expect);
    }
    for c in &r.checks {
        println!("{} {}: expected {}, got {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.expected, c.actual);
    }
    println!("{}", if r.passed { "PASS" } else { "FAIL" });
}

fn finish(cli: &Cli, r: &Report, transcript: &[Vec<u8>]) -> Result<(), Failure> {
    write_report(&cli.out.join(&r.scenario), r, transcript)?;
    summary(r);
    if r.passed {
        Ok(())
    } else {
        Err(Failure::Mismatch)
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.cmd {
        Command::Attest { scenario } => {
            let mut s = load(scenario)?;
            s.trace.clear();
            s.attacks.clear();
            let out = run_scenario(&s, &options(cli)?).map_err(run_error)?;
            for (i, m) in out.transcript.iter().enumerate() {
                println!("message {i}: {} bytes", m.len());
            }
            println!("transcript sha256 {}", out.report.protocol.transcript_sha256);
            println!("session keys match: {}", out.report.protocol.session_keys_match);
            finish(cli, &out.report, &out.transcript)
        }
        Command::Run { scenario } => {
            let s = load(scenario)?;
            let out = run_scenario(&s, &options(cli)?).map_err(run_error)?;
            finish(cli, &out.report, &out.transcript)
        }
        Command::Attack { scenario, action, repeat, expect } => {
            let mut s = load(scenario)?;
            let a = parse_action(action).map_err(|e| Failure::Config(format!("--action: {e}")))?;
            let expect = match expect {
                Some(e) => parse_attack_expect(e).map_err(|e| Failure::Config(format!("--expect: {e}")))?,
                None => default_expect(&a),
            };
            let id = s.attacks.keys().max().map_or(1, |m| m + 1);
            s.attacks.insert(id, AttackSpec { action: a, spec: action.clone(), repeat: *repeat, expect });
            s.trace.push(TraceItem::Op(TraceOp::Attack(id)));
            let out = run_scenario(&s, &options(cli)?).map_err(run_error)?;
            finish(cli, &out.report, &out.transcript)
        }
        Command::Sweep { scenario, vary } => {
            let s = load(scenario)?;
            let vary = parse_vary(vary).map_err(|e| Failure::Config(e.to_string()))?;
            let p = params(cli)?.or(s.params).unwrap_or_else(calibrated_params);
            let rows = sweep(&s, &p, &vary, cli.seed).map_err(|e| Failure::Config(e.to_string()))?;
            let table = render_table(&vary.key, &rows);
            let dir = cli.out.join(&s.name);
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("sweep.tsv"), &table)?;
            print!("{table}");
            if rows.iter().all(|r| r.report.passed) {
                Ok(())
            } else {
                Err(Failure::Mismatch)
            }
        }
        Command::Calibrate { targets, write } => {
            let t = load_targets(targets).map_err(|e| Failure::Config(e.to_string()))?;
            let start = params(cli)?.unwrap_or_else(default_start);
            match calibrate(&t, &start) {
                Ok(r) => {
                    println!("{r}");
                    let text = render_params(&r.params);
                    print!("{text}");
                    let dir = cli.out.join("calibrate");
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("calibrated.params"), &text)?;
                    if let Some(w) = write {
                        std::fs::write(w, &text)?;
                    }
                    Ok(())
                }
                Err(e @ CalibrateError::Ordering(_)) => {
                    eprintln!("{e}");
                    Err(Failure::Mismatch)
                }
                Err(e) => Err(Failure::Config(e.to_string())),
            }
        }
        Command::Presets { dir } => {
            std::fs::create_dir_all(dir)?;
            for (name, text) in presets::all() {
                std::fs::write(dir.join(&name), text)?;
            }
            Ok(())
        }
    }
}

pub fn main_with(cli: Cli) -> ExitCode {
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
