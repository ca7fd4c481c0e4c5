//! Cost-model parameter files.
//!
//! ```text
//! [cost_model]
//! aes_bpc_x4 = 2
//! aes_bpc_x16 = 8
//! hmac_bpc = 7.6
//! hmac_fixed_per_chunk = 25.2
//! pmac_bpc = 5.4
//! dram_bpc = 64
//! burst_fixed = 16
//! init_fixed = 2000
//! ```

use std::fmt::Write;

use shef_core::sim_env::CostModelParams;

use crate::text::{sections, Diagnostic, Fields};

const KEYS: &[&str] = &[
    "aes_bpc_x4",
    "aes_bpc_x16",
    "hmac_bpc",
    "hmac_fixed_per_chunk",
    "pmac_bpc",
    "dram_bpc",
    "burst_fixed",
    "init_fixed",
];

/// Parameters fitted by `shef calibrate` against the SDP targets shipped in
/// `scenarios/sdp-targets.tsv`.
const CALIBRATED: &str = include_str!("../data/calibrated.params");

pub fn calibrated_params() -> CostModelParams {
    parse_params(CALIBRATED).expect("embedded parameters are valid")
}

pub fn parse_params(text: &str) -> Result<CostModelParams, Diagnostic> {
    let secs = sections(text)?;
    let [s] = secs.as_slice() else {
        return Err(Diagnostic::new(0, "expected exactly one [cost_model] section"));
    };
    if s.kind != "cost_model" || s.arg.is_some() {
        return Err(Diagnostic::new(s.line, "expected [cost_model]"));
    }
    let f = Fields::parse(s, KEYS)?;
    let v = |k: &str| f.require(k)?.f64();
    let p = CostModelParams {
        aes_bpc_x4: v("aes_bpc_x4")?,
        aes_bpc_x16: v("aes_bpc_x16")?,
        hmac_bpc: v("hmac_bpc")?,
        hmac_fixed_per_chunk: v("hmac_fixed_per_chunk")?,
        pmac_bpc: v("pmac_bpc")?,
        dram_bpc: v("dram_bpc")?,
        burst_fixed: v("burst_fixed")?,
        init_fixed: v("init_fixed")?,
    };
    p.validate().map_err(|e| Diagnostic::new(s.line, e.to_string()))?;
    Ok(p)
}

/// Shortest round-trip float formatting, so parse(render(p)) == p.
pub fn render_params(p: &CostModelParams) -> String {
    let mut s = String::from("[cost_model]\n");
    for (k, v) in [
        ("aes_bpc_x4", p.aes_bpc_x4),
        ("aes_bpc_x16", p.aes_bpc_x16),
        ("hmac_bpc", p.hmac_bpc),
        ("hmac_fixed_per_chunk", p.hmac_fixed_per_chunk),
        ("pmac_bpc", p.pmac_bpc),
        ("dram_bpc", p.dram_bpc),
        ("burst_fixed", p.burst_fixed),
        ("init_fixed", p.init_fixed),
    ] {
        let _ = writeln!(s, "{k} = {v:?}");
    }
    s
}

/// Sets one parameter by name, for sweeps.
pub fn set_param(p: &mut CostModelParams, key: &str, value: f64) -> Result<(), String> {
    let slot = match key {
        "aes_bpc_x4" => &mut p.aes_bpc_x4,
        "aes_bpc_x16" => &mut p.aes_bpc_x16,
        "hmac_bpc" => &mut p.hmac_bpc,
        "hmac_fixed_per_chunk" => &mut p.hmac_fixed_per_chunk,
        "pmac_bpc" => &mut p.pmac_bpc,
        "dram_bpc" => &mut p.dram_bpc,
        "burst_fixed" => &mut p.burst_fixed,
        "init_fixed" => &mut p.init_fixed,
        _ => return Err(format!("unknown cost parameter `{key}`")),
    };
    *slot = value;
    Ok(())
}

pub fn is_param_key(key: &str) -> bool {
    KEYS.contains(&key)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_params_round_trip() {
        let p = calibrated_params();
        assert_eq!(parse_params(&render_params(&p)).unwrap(), p);
    }

    #[test]
    fn rejects_bad_files() {
        let good = render_params(&calibrated_params());
        assert!(parse_params(&good.replace("dram_bpc", "dram_bw")).is_err());
        let e = parse_params(&good.replace("burst_fixed = ", "burst_fixed = -")).unwrap_err();
        assert!(e.message.contains("positive"), "{e}");
        assert!(parse_params("[cost]\n").is_err());
    }
}
