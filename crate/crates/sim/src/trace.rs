//! Memory/register traces: the op grammar and the four access-pattern
//! generators.
//!
//! One op per line:
//!
//! ```text
//! PRELOAD 0x100000 4096 rand     # owner initialization, excluded from stats
//! R 0x100000 4096
//! W 0x100040 64 fill:ab          # payload: rand | fill:<hex byte> | hex:<bytes>
//! REG_W 3 0xdeadbeef
//! REG_R 3
//! FLUSH
//! ATTACK 1                       # runs [attack 1] of the scenario
//! ```

use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use shef_core::shield::ShieldConfig;

use crate::text::{lines, parse_u64, Diagnostic};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Payload {
    /// Fresh bytes from the scenario's data stream.
    Random,
    Fill(u8),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TraceOp {
    Preload { addr: u64, len: u64, payload: Payload },
    Read { addr: u64, len: u64 },
    Write { addr: u64, len: u64, payload: Payload },
    RegWrite { index: u16, value: u32 },
    RegRead { index: u16 },
    Flush,
    Attack(u32),
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Random => f.write_str("rand"),
            Self::Fill(b) => write!(f, "fill:{b:02x}"),
            Self::Bytes(v) => write!(f, "hex:{}", hex::encode(v)),
        }
    }
}

impl fmt::Display for TraceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Preload { addr, len, payload } => write!(f, "PRELOAD {addr:#x} {len} {payload}"),
            Self::Read { addr, len } => write!(f, "R {addr:#x} {len}"),
            Self::Write { addr, len, payload } => write!(f, "W {addr:#x} {len} {payload}"),
            Self::RegWrite { index, value } => write!(f, "REG_W {index} {value:#x}"),
            Self::RegRead { index } => write!(f, "REG_R {index}"),
            Self::Flush => f.write_str("FLUSH"),
            Self::Attack(n) => write!(f, "ATTACK {n}"),
        }
    }
}

fn num(s: &str) -> Result<u64, String> {
    parse_u64(s).ok_or_else(|| format!("`{s}` is not a number"))
}

fn payload(s: &str, len: u64) -> Result<Payload, String> {
    if s == "rand" {
        return Ok(Payload::Random);
    }
    if let Some(b) = s.strip_prefix("fill:") {
        return u8::from_str_radix(b, 16).map(Payload::Fill).map_err(|_| format!("bad fill byte `{b}`"));
    }
    if let Some(h) = s.strip_prefix("hex:") {
        let v = hex::decode(h).map_err(|e| format!("bad hex payload: {e}"))?;
        if v.len() as u64 != len {
            return Err(format!("hex payload has {} bytes, op length is {len}", v.len()));
        }
        return Ok(Payload::Bytes(v));
    }
    Err(format!("unknown payload `{s}` (rand | fill:XX | hex:...)"))
}

/// Parses one op line.
pub fn parse_op(line: &str) -> Result<TraceOp, String> {
    let w: Vec<&str> = line.split_whitespace().collect();
    let arity = |n: usize| {
        if w.len() == n {
            Ok(())
        } else {
            Err(format!("`{}` takes {} operand(s)", w[0], n - 1))
        }
    };
    let Some(verb) = w.first() else { return Err("empty op".into()) };
    let len = |s: &str| match num(s)? {
        0 => Err("length must be non-zero".to_string()),
        n => Ok(n),
    };
    let index = |s: &str| u16::try_from(num(s)?).map_err(|_| format!("register index `{s}` out of range"));
    match *verb {
        "R" => {
            arity(3)?;
            Ok(TraceOp::Read { addr: num(w[1])?, len: len(w[2])? })
        }
        "W" | "PRELOAD" => {
            arity(4)?;
            let (addr, n) = (num(w[1])?, len(w[2])?);
            let payload = payload(w[3], n)?;
            Ok(if *verb == "W" {
                TraceOp::Write { addr, len: n, payload }
            } else {
                TraceOp::Preload { addr, len: n, payload }
            })
        }
        "REG_W" => {
            arity(3)?;
            let value = u32::try_from(num(w[2])?).map_err(|_| format!("register value `{}` exceeds 32 bits", w[2]))?;
            Ok(TraceOp::RegWrite { index: index(w[1])?, value })
        }
        "REG_R" => {
            arity(2)?;
            Ok(TraceOp::RegRead { index: index(w[1])? })
        }
        "FLUSH" => {
            arity(1)?;
            Ok(TraceOp::Flush)
        }
        "ATTACK" => {
            arity(2)?;
            Ok(TraceOp::Attack(u32::try_from(num(w[1])?).map_err(|_| "attack id out of range".to_string())?))
        }
        v => Err(format!("unknown op `{v}`")),
    }
}

/// Parses an explicit trace file.
pub fn parse_trace(text: &str) -> Result<Vec<TraceOp>, Diagnostic> {
    lines(text).into_iter().map(|l| parse_op(&l.text).map_err(|m| Diagnostic::new(l.no, m))).collect()
}

pub fn render_trace(ops: &[TraceOp]) -> String {
    ops.iter().map(|o| format!("{o}\n")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pattern {
    /// Sequential accesses of `unit` bytes walking the range.
    Str,
    /// Uniformly random `unit`-aligned accesses.
    Ra,
    /// Read-then-write pairs to random `unit`-aligned slots.
    Rmw,
    /// Register write/read ping-pong.
    Reg,
}

impl std::str::FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "STR" => Ok(Self::Str),
            "RA" => Ok(Self::Ra),
            "RMW" => Ok(Self::Rmw),
            "REG" => Ok(Self::Reg),
            _ => Err(format!("unknown pattern `{s}` (STR | RA | RMW | REG)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub base: u64,
    pub span: u64,
    pub unit: u64,
    pub count: u64,
    /// Percentage of STR/RA accesses that are writes.
    pub write_pct: u8,
    /// Registers used by REG, starting at index 0.
    pub registers: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("range [{base:#x}, +{span:#x}) is not inside one region")]
    OutOfRegion { base: u64, span: u64 },
    #[error("unit must be non-zero and no larger than the span")]
    Unit,
    #[error("write percentage {0} exceeds 100")]
    WritePct(u8),
    #[error("{0} registers requested, the shield has {1}")]
    Registers(u16, u16),
}

pub fn gen_trace(cfg: &ShieldConfig, pattern: Pattern, p: &GenParams, seed: u64) -> Result<Vec<TraceOp>, TraceError> {
    if p.write_pct > 100 {
        return Err(TraceError::WritePct(p.write_pct));
    }
    if pattern == Pattern::Reg {
        if p.registers == 0 || p.registers > cfg.register_count {
            return Err(TraceError::Registers(p.registers, cfg.register_count));
        }
    } else {
        if p.unit == 0 || p.unit > p.span {
            return Err(TraceError::Unit);
        }
        let inside = p.base.checked_add(p.span).is_some_and(|end| {
            cfg.regions.iter().any(|r| r.base <= p.base && end <= r.end())
        });
        if !inside {
            return Err(TraceError::OutOfRegion { base: p.base, span: p.span });
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let slots = p.span / p.unit.max(1);
    let is_write = |rng: &mut ChaCha20Rng| rng.next_u64() % 100 < u64::from(p.write_pct);
    let access = |addr: u64, write: bool| {
        if write {
            TraceOp::Write { addr, len: p.unit, payload: Payload::Random }
        } else {
            TraceOp::Read { addr, len: p.unit }
        }
    };
    let mut ops = Vec::with_capacity(p.count as usize);
    for k in 0..p.count {
        match pattern {
            Pattern::Str => {
                let addr = p.base + (k % slots) * p.unit;
                let w = is_write(&mut rng);
                ops.push(access(addr, w));
            }
            Pattern::Ra => {
                let addr = p.base + (rng.next_u64() % slots) * p.unit;
                let w = is_write(&mut rng);
                ops.push(access(addr, w));
            }
            Pattern::Rmw => {
                let addr = p.base + (rng.next_u64() % slots) * p.unit;
                ops.push(TraceOp::Read { addr, len: p.unit });
                ops.push(TraceOp::Write { addr, len: p.unit, payload: Payload::Random });
            }
            Pattern::Reg => {
                let index = (rng.next_u64() % u64::from(p.registers)) as u16;
                ops.push(TraceOp::RegWrite { index, value: rng.next_u32() });
                ops.push(TraceOp::RegRead { index });
            }
        }
    }
    Ok(ops)
}
