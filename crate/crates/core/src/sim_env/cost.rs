//! Analytic throughput model: fixed costs plus the slower of memory transfer
//! and the busiest crypto lane.

use super::RunStats;
use crate::crypto::KeyBits;
use crate::shield::{MacKind, SboxParallelism, ShieldConfig};

/// AES-256 runs 14 rounds against AES-128's 10.
pub const AES256_COST_FACTOR: f64 = 1.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModelParams {
    pub aes_bpc_x4: f64,
    pub aes_bpc_x16: f64,
    pub hmac_bpc: f64,
    pub hmac_fixed_per_chunk: f64,
    pub pmac_bpc: f64,
    pub dram_bpc: f64,
    pub burst_fixed: f64,
    pub init_fixed: f64,
}

impl CostModelParams {
    pub fn aes_bpc(&self, sbox: SboxParallelism) -> f64 {
        match sbox {
            SboxParallelism::X4 => self.aes_bpc_x4,
            SboxParallelism::X16 => self.aes_bpc_x16,
        }
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let all = [
            self.aes_bpc_x4,
            self.aes_bpc_x16,
            self.hmac_bpc,
            self.hmac_fixed_per_chunk,
            self.pmac_bpc,
            self.dram_bpc,
            self.burst_fixed,
            self.init_fixed,
        ];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(CostError::NonPositive);
        }
        if self.aes_bpc_x16 <= self.aes_bpc_x4 {
            return Err(CostError::SboxOrder);
        }
        Ok(())
    }
}

/// Traffic of the same trace against unprotected memory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct BaselineTraffic {
    pub bursts: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadReport {
    pub baseline_cycles: u64,
    pub secured_cycles: u64,
    pub overhead_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error("cost parameters must be finite and strictly positive")]
    NonPositive,
    #[error("16x S-box throughput must exceed 4x")]
    SboxOrder,
    #[error("baseline cycle count is zero")]
    ZeroBaseline,
    #[error("run statistics do not match the configuration's regions")]
    Shape,
}

/// Cycles spent in one engine set's crypto pipeline. AES and MAC engines
/// overlap, so the slower of the two bounds the set.
fn engine_set_cycles(cfg: &ShieldConfig, params: &CostModelParams, set: u8, run: &RunStats) -> f64 {
    let Some(es) = cfg.engine_set(set) else { return 0.0 };
    let (mut aes, mut mac, mut ops) = (0u64, 0u64, 0u64);
    for (r, s) in cfg.regions.iter().zip(&run.regions) {
        if r.engine_set == set {
            aes += s.aes_bytes;
            mac += s.mac_bytes;
            ops += s.mac_ops;
        }
    }
    let key_factor = match es.key_bits {
        KeyBits::B128 => 1.0,
        KeyBits::B256 => AES256_COST_FACTOR,
    };
    let aes_cycles = aes as f64 * key_factor / (f64::from(es.aes_engines) * params.aes_bpc(es.sbox));
    let mac_cycles = match es.mac {
        // each chunk's HMAC is one serial pass
        MacKind::Hmac => mac as f64 / params.hmac_bpc + ops as f64 * params.hmac_fixed_per_chunk,
        MacKind::Pmac => mac as f64 / (f64::from(es.mac_engines) * params.pmac_bpc),
    };
    aes_cycles.max(mac_cycles)
}

/// Register envelopes go through a single AES/4x and HMAC engine, one
/// message at a time.
fn register_cycles(params: &CostModelParams, run: &RunStats) -> f64 {
    let r = &run.registers;
    r.aes_bytes as f64 / params.aes_bpc_x4
        + r.mac_bytes as f64 / params.hmac_bpc
        + r.ops as f64 * params.hmac_fixed_per_chunk
}

/// Rounds a non-negative cycle estimate up.
fn ceil_u64(x: f64) -> u64 {
    let t = x as u64;
    if (t as f64) < x {
        t + 1
    } else {
        t
    }
}

pub fn model_cycles(
    cfg: &ShieldConfig,
    params: &CostModelParams,
    run: &RunStats,
    baseline: &BaselineTraffic,
) -> Result<OverheadReport, CostError> {
    params.validate()?;
    if run.regions.len() != cfg.regions.len() {
        return Err(CostError::Shape);
    }
    let total = run.total();
    let transfer = (total.dram_bytes_read + total.dram_bytes_written + run.registers.wire_bytes) as f64;
    let crypto = cfg
        .engine_sets
        .iter()
        .map(|e| engine_set_cycles(cfg, params, e.id, run))
        .fold(register_cycles(params, run), f64::max);
    let secured = params.init_fixed
        + (total.bursts + run.registers.ops) as f64 * params.burst_fixed
        + (transfer / params.dram_bpc).max(crypto);
    let base = params.init_fixed + baseline.bursts as f64 * params.burst_fixed + baseline.bytes as f64 / params.dram_bpc;

    let baseline_cycles = ceil_u64(base);
    let secured_cycles = ceil_u64(secured);
    if baseline_cycles == 0 {
        return Err(CostError::ZeroBaseline);
    }
    let overhead_pct = 100.0 * (secured_cycles as f64 / baseline_cycles as f64 - 1.0);
    Ok(OverheadReport { baseline_cycles, secured_cycles, overhead_pct })
}
