//! Scenario files.
//!
//! ```text
//! [scenario]
//! name = honest-rw
//! seed = 7
//! config = configs/mixed.cfg       # or inline [shield]/[engine_set]/[region] sections
//! device serial=3 seed=<64 hex digits>
//! proxy = modify 1 40 0x01         # per-message proxy script, `;`-separated
//!
//! [trace]
//! GEN RA region=a unit=64 count=1000 write=30
//! R 0x10000 64
//! ATTACK 1
//!
//! [attack 1]
//! action = replay region=a
//! repeat = 100
//! expect = auth_failure
//!
//! [expect]
//! protocol = accept
//! min_hit_rate = 0.9
//! ```
//!
//! Recognized `[scenario]` keys: `name`, `seed`, `config`, `trace` (an
//! explicit trace file prepended to the `[trace]` section), `params`,
//! `kernel`, `trusted_kernel`, `proxy`, `dram_bytes`, `verify_final`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use shef_core::attestation::ProxyAction;
use shef_core::shield::ShieldConfig;
use shef_core::sim_env::{CostModelParams, DEFAULT_DRAM_BYTES};

use crate::config::{config_from_sections, is_config_section, parse_config};
use crate::params::parse_params;
use crate::text::{arg_str, arg_u64, parse_u64, sections, word_args, Diagnostic, Fields, Section};
use crate::trace::{parse_op, parse_trace, GenParams, Pattern, TraceOp};

const SCENARIO_KEYS: &[&str] = &[
    "name",
    "seed",
    "config",
    "trace",
    "params",
    "kernel",
    "trusted_kernel",
    "proxy",
    "dram_bytes",
    "verify_final",
];
const ATTACK_KEYS: &[&str] = &["action", "repeat", "expect"];
const EXPECT_KEYS: &[&str] =
    &["protocol", "transparency", "leaks", "iv_duplicates", "faults", "min_hit_rate", "max_overhead_pct", "min_overhead_pct"];

pub const DEFAULT_KERNEL: &str = "shef security kernel v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceFixture {
    pub serial: u64,
    pub seed: [u8; 32],
}

/// A generator directive, expanded when the scenario runs so that a seed
/// override also changes generated traffic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenDirective {
    pub pattern: Pattern,
    /// Region the range refers to; `None` for register traffic.
    pub region: Option<String>,
    pub params: GenParams,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceItem {
    Op(TraceOp),
    Gen(GenDirective),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipTarget {
    Data,
    Tag,
    Iv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttackAction {
    FlipBit { region: Option<String>, chunk: Option<u64>, target: Option<FlipTarget>, offset: Option<u64>, bit: Option<u8> },
    Splice { region: Option<String>, i: Option<u64>, j: Option<u64> },
    Replay { region: Option<String>, chunk: Option<u64> },
    Scan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackExpect {
    AuthFailure,
    Undetected,
    NoLeak,
    Leak,
}

impl AttackExpect {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AuthFailure => "auth_failure",
            Self::Undetected => "undetected",
            Self::NoLeak => "no_leak",
            Self::Leak => "leak",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackSpec {
    pub action: AttackAction,
    pub spec: String,
    pub repeat: u32,
    pub expect: AttackExpect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolExpect {
    Accept,
    /// Rejection, optionally with the error's debug rendering, e.g.
    /// `Verify(BadReportSig)`.
    Reject(Option<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expectations {
    pub protocol: ProtocolExpect,
    pub transparency: bool,
    pub leaks: u64,
    pub iv_duplicates: u64,
    pub faults: u64,
    pub min_hit_rate: Option<f64>,
    pub max_overhead_pct: Option<f64>,
    pub min_overhead_pct: Option<f64>,
}

impl Default for Expectations {
    fn default() -> Self {
        Self {
            protocol: ProtocolExpect::Accept,
            transparency: true,
            leaks: 0,
            iv_duplicates: 0,
            faults: 0,
            min_hit_rate: None,
            max_overhead_pct: None,
            min_overhead_pct: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub config: ShieldConfig,
    pub device: Option<DeviceFixture>,
    pub kernel_image: Vec<u8>,
    pub trusted_kernel: bool,
    pub proxy: Vec<(usize, ProxyAction)>,
    pub dram_bytes: u64,
    pub params: Option<CostModelParams>,
    pub verify_final: bool,
    pub trace: Vec<TraceItem>,
    pub attacks: BTreeMap<u32, AttackSpec>,
    pub expect: Expectations,
}

fn read_relative(base: Option<&Path>, rel: &str, line: usize) -> Result<(PathBuf, String), Diagnostic> {
    let path = match base {
        Some(b) => b.join(rel),
        None => PathBuf::from(rel),
    };
    std::fs::read_to_string(&path)
        .map(|t| (path.clone(), t))
        .map_err(|e| Diagnostic::new(line, format!("cannot read {}: {e}", path.display())))
}

fn nested(path: &Path, d: Diagnostic) -> Diagnostic {
    Diagnostic::new(0, format!("{}: {d}", path.display()))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, Diagnostic> {
    let text = std::fs::read_to_string(path).map_err(|e| Diagnostic::new(0, format!("cannot read {}: {e}", path.display())))?;
    let mut s = parse_scenario(&text, path.parent()).map_err(|d| nested(path, d))?;
    if s.name.is_empty() {
        s.name = path.file_stem().map_or_else(|| "scenario".into(), |n| n.to_string_lossy().into_owned());
    }
    Ok(s)
}

/// Parses scenario text; relative paths resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<Scenario, Diagnostic> {
    let secs = sections(text)?;
    let mut scn: Option<&Section> = None;
    for s in &secs {
        match s.kind.as_str() {
            "scenario" | "trace" | "expect" if s.arg.is_some() => {
                return Err(Diagnostic::new(s.line, format!("[{}] takes no argument", s.kind)))
            }
            "scenario" => {
                if scn.replace(s).is_some() {
                    return Err(Diagnostic::new(s.line, "duplicate [scenario] section"));
                }
            }
            "trace" | "attack" | "expect" => {}
            k if is_config_section(k) => {}
            k => return Err(Diagnostic::new(s.line, format!("unknown section [{k}]"))),
        }
    }
    let scn = scn.ok_or_else(|| Diagnostic::new(0, "missing [scenario] section"))?;

    // `device serial=.. seed=..` is a bare line, not a key/value entry
    let mut device = None;
    let mut plain = scn.clone();
    plain.body.retain(|l| !l.text.starts_with("device "));
    for l in scn.body.iter().filter(|l| l.text.starts_with("device ")) {
        if device.is_some() {
            return Err(Diagnostic::new(l.no, "duplicate device fixture"));
        }
        device = Some(parse_device(&l.text).map_err(|m| Diagnostic::new(l.no, m))?);
    }
    let f = Fields::parse(&plain, SCENARIO_KEYS)?;

    let inline = secs.iter().any(|s| is_config_section(&s.kind));
    let config = match (f.get("config"), inline) {
        (Some(e), true) => return Err(e.err("both a config file and inline config sections")),
        (Some(e), false) => {
            let (path, text) = read_relative(base_dir, &e.value, e.line)?;
            parse_config(&text).map_err(|d| nested(&path, d))?
        }
        (None, _) => config_from_sections(&secs)?,
    };
    let params = match f.get("params") {
        None => None,
        Some(e) => {
            let (path, text) = read_relative(base_dir, &e.value, e.line)?;
            Some(parse_params(&text).map_err(|d| nested(&path, d))?)
        }
    };

    let mut trace = Vec::new();
    if let Some(e) = f.get("trace") {
        let (path, text) = read_relative(base_dir, &e.value, e.line)?;
        trace.extend(parse_trace(&text).map_err(|d| nested(&path, d))?.into_iter().map(TraceItem::Op));
    }
    for s in secs.iter().filter(|s| s.kind == "trace") {
        for l in &s.body {
            let item = if let Some(rest) = l.text.strip_prefix("GEN ") {
                TraceItem::Gen(parse_gen(rest, &config).map_err(|m| Diagnostic::new(l.no, m))?)
            } else {
                TraceItem::Op(parse_op(&l.text).map_err(|m| Diagnostic::new(l.no, m))?)
            };
            trace.push(item);
        }
    }

    let mut attacks = BTreeMap::new();
    for s in secs.iter().filter(|s| s.kind == "attack") {
        let id = s
            .arg
            .as_deref()
            .and_then(|a| a.parse::<u32>().ok())
            .ok_or_else(|| Diagnostic::new(s.line, "[attack <n>] needs a numeric id"))?;
        let af = Fields::parse(s, ATTACK_KEYS)?;
        let a = af.require("action")?;
        let action = parse_action(&a.value).map_err(|m| a.err(m))?;
        let expect = match af.get("expect") {
            None => default_expect(&action),
            Some(e) => parse_attack_expect(&e.value).map_err(|m| e.err(m))?,
        };
        let repeat = af.get("repeat").map_or(Ok(1), |e| e.narrow::<u32>())?;
        if repeat == 0 {
            return Err(af.require("repeat")?.err("must be at least 1"));
        }
        if attacks.insert(id, AttackSpec { action, spec: a.value.clone(), repeat, expect }).is_some() {
            return Err(Diagnostic::new(s.line, format!("duplicate attack {id}")));
        }
    }
    for item in &trace {
        if let TraceItem::Op(TraceOp::Attack(n)) = item {
            if !attacks.contains_key(n) {
                return Err(Diagnostic::new(0, format!("trace references undefined attack {n}")));
            }
        }
    }

    let mut expect = Expectations::default();
    for s in secs.iter().filter(|s| s.kind == "expect") {
        let ef = Fields::parse(s, EXPECT_KEYS)?;
        for e in ef.entries() {
            match e.key.as_str() {
                "protocol" => {
                    expect.protocol = match e.value.as_str() {
                        "accept" => ProtocolExpect::Accept,
                        "reject" => ProtocolExpect::Reject(None),
                        v => match v.strip_prefix("reject:") {
                            Some(variant) if !variant.is_empty() => ProtocolExpect::Reject(Some(variant.to_string())),
                            _ => return Err(e.err("expected accept | reject | reject:<Error>")),
                        },
                    }
                }
                "transparency" => {
                    expect.transparency = match e.value.as_str() {
                        "pass" => true,
                        "any" => false,
                        _ => return Err(e.err("expected pass | any")),
                    }
                }
                "leaks" => expect.leaks = e.u64()?,
                "iv_duplicates" => expect.iv_duplicates = e.u64()?,
                "faults" => expect.faults = e.u64()?,
                "min_hit_rate" => expect.min_hit_rate = Some(e.f64()?),
                "max_overhead_pct" => expect.max_overhead_pct = Some(e.f64()?),
                _ => expect.min_overhead_pct = Some(e.f64()?),
            }
        }
    }

    let on_off = |k: &str, d: bool| f.get(k).map_or(Ok(d), |e| e.on_off());
    Ok(Scenario {
        name: f.get("name").map(|e| e.value.clone()).unwrap_or_default(),
        seed: f.get("seed").map_or(Ok(0), |e| e.u64())?,
        config,
        device,
        kernel_image: f.get("kernel").map_or(DEFAULT_KERNEL, |e| e.value.as_str()).as_bytes().to_vec(),
        trusted_kernel: on_off("trusted_kernel", true)?,
        proxy: match f.get("proxy") {
            None => Vec::new(),
            Some(e) => parse_proxy(&e.value).map_err(|m| e.err(m))?,
        },
        dram_bytes: f.get("dram_bytes").map_or(Ok(DEFAULT_DRAM_BYTES), |e| e.u64())?,
        params,
        verify_final: on_off("verify_final", true)?,
        trace,
        attacks,
        expect,
    })
}

fn parse_device(line: &str) -> Result<DeviceFixture, String> {
    let words: Vec<&str> = line.split_whitespace().skip(1).collect();
    let args = word_args(&words, &["serial", "seed"])?;
    let serial = arg_u64(&args, "serial")?.ok_or("device fixture needs serial=")?;
    let seed_hex = arg_str(&args, "seed").ok_or("device fixture needs seed=")?;
    let seed = hex::decode(seed_hex)
        .ok()
        .and_then(|v| <[u8; 32]>::try_from(v).ok())
        .ok_or("device seed must be 32 bytes of hex")?;
    Ok(DeviceFixture { serial, seed })
}

/// `GEN <STR|RA|RMW> region=<name> unit=<n> count=<n> [offset=] [span=] [write=] [seed=]`
/// or `GEN REG count=<n> [registers=] [seed=]`.
fn parse_gen(rest: &str, cfg: &ShieldConfig) -> Result<GenDirective, String> {
    let words: Vec<&str> = rest.split_whitespace().collect();
    let (p, words) = words.split_first().ok_or("GEN needs a pattern")?;
    let pattern: Pattern = p.parse()?;
    let seed_of = |args: &[(String, String)]| arg_u64(args, "seed");
    if pattern == Pattern::Reg {
        let args = word_args(words, &["count", "registers", "seed"])?;
        let registers = arg_u64(&args, "registers")?.unwrap_or(u64::from(cfg.register_count));
        let params = GenParams {
            base: 0,
            span: 0,
            unit: 0,
            count: arg_u64(&args, "count")?.ok_or("GEN REG needs count=")?,
            write_pct: 0,
            registers: u16::try_from(registers).map_err(|_| "registers out of range")?,
        };
        return Ok(GenDirective { pattern, region: None, params, seed: seed_of(&args)? });
    }
    let args = word_args(words, &["region", "offset", "span", "unit", "count", "write", "seed"])?;
    let name = arg_str(&args, "region").ok_or("GEN needs region=")?;
    let r = cfg.region_by_name(name).ok_or_else(|| format!("unknown region `{name}`"))?;
    let offset = arg_u64(&args, "offset")?.unwrap_or(0);
    let span = arg_u64(&args, "span")?.unwrap_or(r.size.saturating_sub(offset));
    let write = arg_u64(&args, "write")?.unwrap_or(0);
    let params = GenParams {
        base: r.base + offset,
        span,
        unit: arg_u64(&args, "unit")?.unwrap_or(u64::from(r.c_mem)),
        count: arg_u64(&args, "count")?.ok_or("GEN needs count=")?,
        write_pct: u8::try_from(write).map_err(|_| "write= out of range")?,
        registers: 0,
    };
    Ok(GenDirective { pattern, region: Some(name.to_string()), params, seed: seed_of(&args)? })
}

/// `flipbit [region=] [chunk=] [target=data|tag|iv] [offset=] [bit=]`,
/// `splice [region=] [i=] [j=]`, `replay [region=] [chunk=]`, `scan`.
/// Omitted placements are drawn at random each time the attack runs.
pub fn parse_action(spec: &str) -> Result<AttackAction, String> {
    let words: Vec<&str> = spec.split_whitespace().collect();
    let (verb, rest) = words.split_first().ok_or("empty attack action")?;
    let region = |args: &[(String, String)]| arg_str(args, "region").map(str::to_string);
    match *verb {
        "flipbit" => {
            let args = word_args(rest, &["region", "chunk", "target", "offset", "bit"])?;
            let target = match arg_str(&args, "target") {
                None => None,
                Some("data") => Some(FlipTarget::Data),
                Some("tag") => Some(FlipTarget::Tag),
                Some("iv") => Some(FlipTarget::Iv),
                Some(t) => return Err(format!("unknown flip target `{t}` (data | tag | iv)")),
            };
            let bit = match arg_u64(&args, "bit")? {
                Some(b) if b < 8 => Some(b as u8),
                Some(b) => return Err(format!("bit {b} is not in 0..8")),
                None => None,
            };
            Ok(AttackAction::FlipBit {
                region: region(&args),
                chunk: arg_u64(&args, "chunk")?,
                target,
                offset: arg_u64(&args, "offset")?,
                bit,
            })
        }
        "splice" => {
            let args = word_args(rest, &["region", "i", "j"])?;
            let (i, j) = (arg_u64(&args, "i")?, arg_u64(&args, "j")?);
            if i.is_some() && i == j {
                return Err("splice needs two different chunks".into());
            }
            Ok(AttackAction::Splice { region: region(&args), i, j })
        }
        "replay" => {
            let args = word_args(rest, &["region", "chunk"])?;
            Ok(AttackAction::Replay { region: region(&args), chunk: arg_u64(&args, "chunk")? })
        }
        "scan" if rest.is_empty() => Ok(AttackAction::Scan),
        "scan" => Err("scan takes no arguments".into()),
        v => Err(format!("unknown attack `{v}` (flipbit | splice | replay | scan)")),
    }
}

pub fn default_expect(a: &AttackAction) -> AttackExpect {
    match a {
        AttackAction::Scan => AttackExpect::NoLeak,
        _ => AttackExpect::AuthFailure,
    }
}

pub fn parse_attack_expect(s: &str) -> Result<AttackExpect, String> {
    match s {
        "auth_failure" => Ok(AttackExpect::AuthFailure),
        "undetected" => Ok(AttackExpect::Undetected),
        "no_leak" => Ok(AttackExpect::NoLeak),
        "leak" => Ok(AttackExpect::Leak),
        _ => Err(format!("unknown expectation `{s}` (auth_failure | undetected | no_leak | leak)")),
    }
}

/// `drop N`, `deliver N`, `modify N OFFSET MASK`, `replay N FROM`,
/// `reorder N`, separated by `;`. `N` is the 0-based message index.
pub fn parse_proxy(spec: &str) -> Result<Vec<(usize, ProxyAction)>, String> {
    let mut out = Vec::new();
    for item in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let w: Vec<&str> = item.split_whitespace().collect();
        let n = |i: usize| -> Result<usize, String> {
            let s = w.get(i).ok_or_else(|| format!("`{item}`: missing operand"))?;
            parse_u64(s).and_then(|v| usize::try_from(v).ok()).ok_or_else(|| format!("`{s}` is not a number"))
        };
        let arity = |k: usize| if w.len() == k { Ok(()) } else { Err(format!("`{item}`: expected {} operand(s)", k - 1)) };
        let action = match w[0] {
            "deliver" => {
                arity(2)?;
                ProxyAction::Deliver
            }
            "drop" => {
                arity(2)?;
                ProxyAction::Drop
            }
            "reorder" => {
                arity(2)?;
                ProxyAction::HoldForReorder
            }
            "replay" => {
                arity(3)?;
                ProxyAction::ReplayFrom(n(2)?)
            }
            "modify" => {
                arity(4)?;
                let mask = u8::try_from(n(3)?).map_err(|_| "mask must fit in a byte".to_string())?;
                ProxyAction::Modify { offset: n(2)?, mask }
            }
            v => return Err(format!("unknown proxy action `{v}`")),
        };
        out.push((n(1)?, action));
    }
    Ok(out)
}
