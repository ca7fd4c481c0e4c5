//! Fits cost-model parameters to measured overhead targets.
//!
//! Each target is a scenario whose run statistics are collected once; the
//! statistics do not depend on the parameters, so the search only re-evaluates
//! the model. Parameters are searched coordinate-wise in log space,
//! minimizing the squared log-ratio of modeled to target slowdown.
//!
//! Targets file: one `scenario_path<TAB>overhead_pct` per line, `#` comments
//! allowed, paths relative to the file.

use std::fmt;
use std::path::{Path, PathBuf};

use shef_core::shield::ShieldConfig;
use shef_core::sim_env::{model_cycles, BaselineTraffic, CostError, CostModelParams, RunStats};

use crate::scenario::load_scenario;
use crate::text::Diagnostic;
use crate::runner::{run_scenario, RunError, RunOptions};

/// Targets closer than this (relative) count as a tie.
pub const TIE_TOLERANCE: f64 = 0.10;

/// Fixed per-chunk HMAC cost, in units of one byte's hashing time: the
/// finalization pass hashes about three 64-byte blocks.
pub const HMAC_FIXED_BYTES: f64 = 192.0;

const MIN_TARGETS: usize = 3;

/// Fixed starting point, so a fit is reproducible from the targets alone.
pub fn default_start() -> CostModelParams {
    let hmac_bpc = 7.6;
    CostModelParams {
        aes_bpc_x4: 2.0,
        aes_bpc_x16: 8.0,
        hmac_bpc,
        hmac_fixed_per_chunk: HMAC_FIXED_BYTES / hmac_bpc,
        pmac_bpc: 5.4,
        dram_bpc: 64.0,
        burst_fixed: 16.0,
        init_fixed: 2000.0,
    }
}
const START_STEP: f64 = 1.0;
const MIN_STEP: f64 = 1e-7;
const MAX_ROUNDS: usize = 20_000;

#[derive(Debug, Clone)]
pub struct Target {
    pub name: String,
    pub config: ShieldConfig,
    pub stats: RunStats,
    pub baseline: BaselineTraffic,
    pub target_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub name: String,
    pub target_pct: f64,
    pub model_pct: f64,
}

impl Residual {
    /// Log-ratio of modeled to target slowdown.
    pub fn log_error(&self) -> f64 {
        ((100.0 + self.model_pct) / (100.0 + self.target_pct)).ln()
    }

    pub fn relative_error(&self) -> f64 {
        (self.model_pct - self.target_pct).abs() / self.target_pct.abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub params: CostModelParams,
    pub residuals: Vec<Residual>,
    pub loss: f64,
}

impl fmt::Display for CalibrationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "target\ttarget_pct\tmodel_pct\trel_error")?;
        for r in &self.residuals {
            writeln!(f, "{}\t{:.1}\t{:.1}\t{:.3}", r.name, r.target_pct, r.model_pct, r.relative_error())?;
        }
        write!(f, "loss\t{:.6}", self.loss)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CalibrateError {
    #[error("calibration needs at least {MIN_TARGETS} targets, got {0}")]
    TooFewTargets(usize),
    #[error("target `{0}`: {1}")]
    Cost(String, CostError),
    #[error("no parameter set reproduces the target ordering:\n{}", .0.join("\n"))]
    Ordering(Vec<String>),
    #[error("{0}: {1}")]
    File(PathBuf, Diagnostic),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("target `{0}`: {1}")]
    Run(String, RunError),
    #[error("target `{0}`: protocol did not accept, no statistics")]
    NoStats(String),
}

/// The searched coordinates. Everything else is held at its start value.
const COORDS: usize = 5;

fn get(p: &CostModelParams, i: usize) -> f64 {
    [p.aes_bpc_x4, p.aes_bpc_x16, p.hmac_bpc, p.pmac_bpc, p.burst_fixed][i]
}

fn with(p: &CostModelParams, i: usize, v: f64) -> CostModelParams {
    let mut q = *p;
    match i {
        0 => q.aes_bpc_x4 = v,
        1 => q.aes_bpc_x16 = v,
        2 => {
            q.hmac_bpc = v;
            q.hmac_fixed_per_chunk = HMAC_FIXED_BYTES / v;
        }
        3 => q.pmac_bpc = v,
        _ => q.burst_fixed = v,
    }
    q
}

pub fn model_pcts(targets: &[Target], p: &CostModelParams) -> Result<Vec<f64>, CalibrateError> {
    targets
        .iter()
        .map(|t| {
            model_cycles(&t.config, p, &t.stats, &t.baseline)
                .map(|o| o.overhead_pct)
                .map_err(|e| CalibrateError::Cost(t.name.clone(), e))
        })
        .collect()
}

fn loss(targets: &[Target], p: &CostModelParams) -> Option<f64> {
    p.validate().ok()?;
    let pcts = model_pcts(targets, p).ok()?;
    Some(targets.iter().zip(pcts).map(|(t, m)| ((100.0 + m) / (100.0 + t.target_pct)).ln().powi(2)).sum())
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs())
}

/// Every pair must keep its relation: tied targets stay tied, otherwise the
/// modeled order matches the target order. Returns the violations.
pub fn ordering_violations(residuals: &[Residual]) -> Vec<String> {
    let mut out = Vec::new();
    for (i, a) in residuals.iter().enumerate() {
        for b in &residuals[i + 1..] {
            let ok = if tied(a.target_pct, b.target_pct) {
                tied(a.model_pct, b.model_pct)
            } else {
                (a.target_pct > b.target_pct) == (a.model_pct > b.model_pct) && !tied(a.model_pct, b.model_pct)
            };
            if !ok {
                out.push(format!(
                    "  {} vs {}: targets {:.1}% / {:.1}%, model {:.1}% / {:.1}%",
                    a.name, b.name, a.target_pct, b.target_pct, a.model_pct, b.model_pct
                ));
            }
        }
    }
    out
}

pub fn calibrate(targets: &[Target], start: &CostModelParams) -> Result<CalibrationResult, CalibrateError> {
    if targets.len() < MIN_TARGETS {
        return Err(CalibrateError::TooFewTargets(targets.len()));
    }
    let mut p = with(start, 2, start.hmac_bpc);
    model_pcts(targets, &p)?;
    let mut best = loss(targets, &p).unwrap_or(f64::INFINITY);
    let mut step = START_STEP;
    let mut rounds = 0;
    while step > MIN_STEP && rounds < MAX_ROUNDS {
        rounds += 1;
        let mut improved = false;
        for i in 0..COORDS {
            for dir in [1.0, -1.0] {
                let q = with(&p, i, get(&p, i) * (dir * step).exp());
                if let Some(l) = loss(targets, &q) {
                    if l < best {
                        (p, best) = (q, l);
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    let residuals: Vec<Residual> = targets
        .iter()
        .zip(model_pcts(targets, &p)?)
        .map(|(t, m)| Residual { name: t.name.clone(), target_pct: t.target_pct, model_pct: m })
        .collect();
    let bad = ordering_violations(&residuals);
    if !bad.is_empty() {
        return Err(CalibrateError::Ordering(bad));
    }
    Ok(CalibrationResult { params: p, residuals, loss: best })
}

/// Parses a targets file into `(scenario path, overhead_pct)` pairs.
pub fn parse_targets(text: &str, base: &Path) -> Result<Vec<(PathBuf, f64)>, Diagnostic> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let n = n + 1;
        let (path, pct) = line
            .split_once('\t')
            .ok_or_else(|| Diagnostic::new(n, "expected `path<TAB>overhead_pct`"))?;
        let pct: f64 = pct
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v > -100.0)
            .ok_or_else(|| Diagnostic::new(n, format!("bad overhead `{}`", pct.trim())))?;
        out.push((base.join(path.trim()), pct));
    }
    Ok(out)
}

/// Runs every scenario named in a targets file once.
pub fn load_targets(path: &Path) -> Result<Vec<Target>, CalibrateError> {
    let text = std::fs::read_to_string(path).map_err(|e| CalibrateError::Io(path.into(), e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let entries = parse_targets(&text, base).map_err(|d| CalibrateError::File(path.into(), d))?;
    entries
        .into_iter()
        .map(|(p, pct)| {
            let scn = load_scenario(&p).map_err(|d| CalibrateError::File(p.clone(), d))?;
            measure(&scn, pct)
        })
        .collect()
}

pub fn measure(scn: &crate::scenario::Scenario, target_pct: f64) -> Result<Target, CalibrateError> {
    let out = run_scenario(scn, &RunOptions::default()).map_err(|e| CalibrateError::Run(scn.name.clone(), e))?;
    let stats = out.stats.ok_or_else(|| CalibrateError::NoStats(scn.name.clone()))?;
    Ok(Target { name: scn.name.clone(), config: out.config, stats, baseline: out.baseline, target_pct })
}

#[cfg(test)]
mod tests {
    use super::*;
    use shef_core::crypto::KeyBits;
    use shef_core::shield::{EngineSetConfig, MacKind, MemoryRegion, RegionMode, RegisterMode, SboxParallelism};
    use shef_core::sim_env::ShieldStats;

    fn target(name: &str, mac: MacKind, engines: u8, pct: f64) -> Target {
        let config = ShieldConfig {
            regions: vec![MemoryRegion {
                name: "r".into(),
                id: 1,
                base: 0,
                size: 1 << 20,
                c_mem: 4096,
                tag_base: 1 << 21,
                mode: RegionMode::ReadWrite,
                counters: false,
                counter_bits: 32,
                buffer_bytes: 16384,
                engine_set: 0,
            }],
            engine_sets: vec![EngineSetConfig {
                id: 0,
                aes_engines: engines,
                sbox: SboxParallelism::X16,
                key_bits: KeyBits::B128,
                mac,
                mac_engines: engines,
            }],
            register_count: 1,
            register_mode: RegisterMode::PlainAddress,
        };
        let chunks = 256u64;
        let s = ShieldStats {
            chunks_opened: chunks,
            dram_bytes_read: chunks * (4096 + 28),
            aes_bytes: chunks * 4096,
            mac_bytes: chunks * 4134,
            mac_ops: chunks,
            bursts: chunks * 2,
            ..Default::default()
        };
        let stats = RunStats { regions: vec![s], registers: Default::default() };
        Target { name: name.into(), config, stats, baseline: BaselineTraffic { bursts: chunks, bytes: chunks * 4096 }, target_pct: pct }
    }

    fn start() -> CostModelParams {
        crate::params::calibrated_params()
    }

    #[test]
    fn needs_three_targets() {
        let t = [target("a", MacKind::Hmac, 4, 300.0)];
        assert!(matches!(calibrate(&t, &start()), Err(CalibrateError::TooFewTargets(1))));
    }

    #[test]
    fn fit_is_deterministic_and_ordered() {
        let t = [
            target("h4", MacKind::Hmac, 4, 300.0),
            target("p4", MacKind::Pmac, 4, 60.0),
            target("p8", MacKind::Pmac, 8, 25.0),
        ];
        let a = calibrate(&t, &start()).unwrap();
        assert_eq!(a, calibrate(&t, &start()).unwrap());
        assert!(ordering_violations(&a.residuals).is_empty());
        assert!(a.residuals.iter().all(|r| r.relative_error() < 0.3), "{a}");
        assert_eq!(a.params.hmac_fixed_per_chunk, HMAC_FIXED_BYTES / a.params.hmac_bpc);
    }

    #[test]
    fn unreachable_order_is_reported() {
        // identical workloads cannot be made to differ
        let t = [
            target("x", MacKind::Pmac, 4, 300.0),
            target("y", MacKind::Pmac, 4, 20.0),
            target("z", MacKind::Hmac, 4, 100.0),
        ];
        match calibrate(&t, &start()) {
            Err(CalibrateError::Ordering(v)) => assert!(v.iter().any(|l| l.contains("x vs y"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn targets_file() {
        let t = parse_targets("# c\na.scn\t298\n\nb.scn\t 20 # tie\n", Path::new("/d")).unwrap();
        assert_eq!(t, vec![(PathBuf::from("/d/a.scn"), 298.0), (PathBuf::from("/d/b.scn"), 20.0)]);
        assert_eq!(parse_targets("a.scn 298\n", Path::new(".")).unwrap_err().line, 1);
        assert!(parse_targets("a\tx\n", Path::new(".")).is_err());
    }
}
