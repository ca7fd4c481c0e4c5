//! Run reports: a structured record, a flat `key=value` rendering and the
//! files written under `out/<scenario>/`.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub protocol: ProtocolReport,
    pub trace: TraceReport,
    pub attacks: Vec<AttackReport>,
    pub regions: Vec<RegionReport>,
    pub registers: RegisterReport,
    pub dram: DramReport,
    pub baseline: BaselineReport,
    pub overhead: Option<OverheadSummary>,
    pub iv: IvReport,
    pub leak_hits: u64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ProtocolReport {
    /// `accept`, or `reject:<error>`.
    pub outcome: String,
    pub session_keys_match: bool,
    pub messages: u64,
    pub transcript_sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TraceReport {
    pub ops: u64,
    pub reads_checked: u64,
    pub read_mismatches: u64,
    pub register_reads: u64,
    pub register_mismatches: u64,
    pub faults: u64,
    pub first_fault: Option<String>,
    pub final_chunks_checked: u64,
    pub final_mismatches: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AttackReport {
    pub id: u32,
    pub action: String,
    pub expect: String,
    pub placements: u32,
    pub detected: u32,
    pub undetected: u32,
    pub leak_hits: u64,
    pub errors: u32,
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RegionReport {
    pub name: String,
    pub id: u16,
    pub buffer_hits: u64,
    pub buffer_misses: u64,
    pub hit_rate: f64,
    pub chunk_fills: u64,
    pub writebacks: u64,
    pub chunks_sealed: u64,
    pub chunks_opened: u64,
    pub dram_bytes_read: u64,
    pub dram_bytes_written: u64,
    pub bursts: u64,
    pub aes_bytes: u64,
    pub mac_bytes: u64,
    pub mac_ops: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RegisterReport {
    pub ops: u64,
    pub rejected: u64,
    pub wire_bytes: u64,
}

/// Raw DRAM counters over the measured part of the trace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DramReport {
    pub reads: u64,
    pub writes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BaselineReport {
    pub bursts: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverheadSummary {
    pub baseline_cycles: u64,
    pub secured_cycles: u64,
    pub overhead_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IvReport {
    pub records: u64,
    pub duplicates: u64,
}

/// One expected/actual pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat `key=value` lines; nested fields are joined with `.`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        flatten(&serde_json::to_value(self).expect("report serializes"), "", &mut out);
        out
    }

    /// SHA-256 of the compact JSON form, for bit-for-bit comparisons.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("report serializes");
        shef_core::crypto::hash(&bytes).to_string()
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn flatten(v: &Value, prefix: &str, out: &mut String) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                flatten(v, &key(k), out);
            }
        }
        Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                flatten(v, &key(&i.to_string()), out);
            }
        }
        Value::Null => {
            let _ = writeln!(out, "{prefix}=");
        }
        Value::String(s) => {
            let _ = writeln!(out, "{prefix}={s}");
        }
        other => {
            let _ = writeln!(out, "{prefix}={other}");
        }
    }
}

/// Writes `report.txt`, `report.json` and `transcript.hex` into `dir`.
pub fn write_report(dir: &Path, report: &Report, transcript: &[Vec<u8>]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.txt"), report.to_text())?;
    std::fs::write(dir.join("report.json"), report.to_json() + "\n")?;
    let hex: String = transcript.iter().map(|m| hex::encode(m) + "\n").collect();
    std::fs::write(dir.join("transcript.hex"), hex)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_text_uses_dotted_keys() {
        let r = Report {
            scenario: "s".into(),
            seed: 1,
            protocol: ProtocolReport { outcome: "accept".into(), ..Default::default() },
            trace: Default::default(),
            attacks: vec![AttackReport { id: 3, ..Default::default() }],
            regions: Vec::new(),
            registers: Default::default(),
            dram: Default::default(),
            baseline: Default::default(),
            overhead: None,
            iv: Default::default(),
            leak_hits: 0,
            checks: Vec::new(),
            passed: true,
        };
        let t = r.to_text();
        assert!(t.contains("protocol.outcome=accept\n"));
        assert!(t.contains("attacks.0.id=3\n"));
        assert!(t.contains("overhead=\n"));
        assert_eq!(r.digest(), r.clone().digest());
    }
}
