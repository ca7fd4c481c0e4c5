//! One-parameter sweeps over a scenario.
//!
//! `--vary <key>=<v1,v2,...>` where `<key>` is
//! - an engine-set field (`aes_engines`, `sbox`, `key_bits`, `mac`,
//!   `mac_engines`), applied to every set, or `set.<id>.<field>`;
//! - a region field (`c_mem`, `buffer_bytes`, `counters`, `counter_bits`,
//!   `mode`), applied to every region, or `region.<name>.<field>`;
//! - a cost-model parameter such as `dram_bpc`.
//!
//! Variants are independent runs and execute concurrently.

use std::fmt::Write;

use shef_core::crypto::KeyBits;
use shef_core::shield::{MacKind, RegionMode, SboxParallelism, ShieldConfig};
use shef_core::sim_env::CostModelParams;

use crate::params::{is_param_key, set_param};
use crate::report::Report;
use crate::runner::{run_scenario, RunError, RunOptions};
use crate::scenario::Scenario;

const SET_KEYS: &[&str] = &["aes_engines", "sbox", "key_bits", "mac", "mac_engines"];
const REGION_KEYS: &[&str] = &["c_mem", "buffer_bytes", "counters", "counter_bits", "mode"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vary {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("expected `<key>=<v1,v2,...>`, got `{0}`")]
    Syntax(String),
    #[error("unknown sweep key `{0}`")]
    Key(String),
    #[error("`{key}`: bad value `{value}`")]
    Value { key: String, value: String },
    #[error("`{0}` matches nothing in this configuration")]
    NoMatch(String),
    #[error("variant {key}={value}: {source}")]
    Config { key: String, value: String, source: shef_core::shield::ConfigError },
    #[error("variant {key}={value}: {source}")]
    Run { key: String, value: String, source: RunError },
}

pub fn parse_vary(spec: &str) -> Result<Vary, SweepError> {
    let (key, values) = spec.split_once('=').ok_or_else(|| SweepError::Syntax(spec.into()))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if key.trim().is_empty() || values.is_empty() {
        return Err(SweepError::Syntax(spec.into()));
    }
    Ok(Vary { key: key.trim().into(), values })
}

fn bad(key: &str, value: &str) -> SweepError {
    SweepError::Value { key: key.into(), value: value.into() }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, SweepError> {
    value.parse().map_err(|_| bad(key, value))
}

/// Applies one value of a configuration key.
pub fn apply_config(cfg: &mut ShieldConfig, key: &str, value: &str) -> Result<(), SweepError> {
    let parts: Vec<&str> = key.split('.').collect();
    let (scope, field) = match parts.as_slice() {
        [f] => (None, *f),
        ["set", id, f] => (Some(("set", *id)), *f),
        ["region", name, f] => (Some(("region", *name)), *f),
        _ => return Err(SweepError::Key(key.into())),
    };
    let mut hits = 0;
    if SET_KEYS.contains(&field) && scope.is_none_or(|(k, _)| k == "set") {
        for e in &mut cfg.engine_sets {
            if scope.is_some_and(|(_, id)| id != e.id.to_string()) {
                continue;
            }
            hits += 1;
            match field {
                "aes_engines" => e.aes_engines = num(key, value)?,
                "mac_engines" => e.mac_engines = num(key, value)?,
                "sbox" => e.sbox = SboxParallelism::from_factor(num(key, value)?).ok_or_else(|| bad(key, value))?,
                "key_bits" => e.key_bits = KeyBits::from_bits(num(key, value)?).ok_or_else(|| bad(key, value))?,
                _ => {
                    e.mac = match value {
                        "hmac" => MacKind::Hmac,
                        "pmac" => MacKind::Pmac,
                        _ => return Err(bad(key, value)),
                    }
                }
            }
        }
    } else if REGION_KEYS.contains(&field) && scope.is_none_or(|(k, _)| k == "region") {
        for r in &mut cfg.regions {
            if scope.is_some_and(|(_, name)| name != r.name) {
                continue;
            }
            hits += 1;
            match field {
                "c_mem" => r.c_mem = num(key, value)?,
                "buffer_bytes" => r.buffer_bytes = num(key, value)?,
                "counter_bits" => r.counter_bits = num(key, value)?,
                "counters" => {
                    r.counters = match value {
                        "on" => true,
                        "off" => false,
                        _ => return Err(bad(key, value)),
                    }
                }
                _ => {
                    r.mode = match value {
                        "rw" => RegionMode::ReadWrite,
                        "stream_write" => RegionMode::StreamWrite,
                        "ro" => RegionMode::ReadOnly,
                        _ => return Err(bad(key, value)),
                    }
                }
            }
        }
    } else {
        return Err(SweepError::Key(key.into()));
    }
    if hits == 0 {
        return Err(SweepError::NoMatch(key.into()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub report: Report,
}

impl SweepRow {
    pub fn overhead_pct(&self) -> Option<f64> {
        self.report.overhead.map(|o| o.overhead_pct)
    }
}

/// One scenario and option set per value, validated before anything runs.
pub fn variants(scn: &Scenario, params: &CostModelParams, vary: &Vary) -> Result<Vec<(Scenario, RunOptions)>, SweepError> {
    let mut out = Vec::new();
    for v in &vary.values {
        let mut s = scn.clone();
        let mut p = *params;
        if is_param_key(&vary.key) {
            set_param(&mut p, &vary.key, num(&vary.key, v)?).map_err(|_| SweepError::Key(vary.key.clone()))?;
        } else {
            apply_config(&mut s.config, &vary.key, v)?;
            s.config
                .validate()
                .map_err(|e| SweepError::Config { key: vary.key.clone(), value: v.clone(), source: e })?;
        }
        s.name = format!("{}[{}={}]", scn.name, vary.key, v);
        out.push((s, RunOptions { params: Some(p), seed: None }));
    }
    Ok(out)
}

pub fn sweep(scn: &Scenario, params: &CostModelParams, vary: &Vary, seed: Option<u64>) -> Result<Vec<SweepRow>, SweepError> {
    let jobs = variants(scn, params, vary)?;
    let results: Vec<_> = std::thread::scope(|sc| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(s, o)| sc.spawn(move || run_scenario(s, &RunOptions { seed, ..*o })))
            .collect();
        handles.into_iter().map(|h| h.join().expect("variant thread panicked")).collect()
    });
    vary.values
        .iter()
        .zip(results)
        .map(|(v, r)| match r {
            Ok(out) => Ok(SweepRow { value: v.clone(), report: out.report }),
            Err(e) => Err(SweepError::Run { key: vary.key.clone(), value: v.clone(), source: e }),
        })
        .collect()
}

/// Tab-separated table, one row per variant.
pub fn render_table(key: &str, rows: &[SweepRow]) -> String {
    let mut s = format!("{key}\tbaseline_cycles\tsecured_cycles\toverhead_pct\tpassed\n");
    for r in rows {
        let (b, c, p) = match r.report.overhead {
            Some(o) => (o.baseline_cycles.to_string(), o.secured_cycles.to_string(), format!("{:.2}", o.overhead_pct)),
            None => ("-".into(), "-".into(), "-".into()),
        };
        let _ = writeln!(s, "{}\t{b}\t{c}\t{p}\t{}", r.value, r.report.passed);
    }
    s
}
