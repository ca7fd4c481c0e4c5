//! Text form of a Shield configuration.
//!
//! ```text
//! [shield]
//! registers = 16
//! register_mode = encaddr      # plain | encaddr
//!
//! [engine_set 0]
//! aes_engines = 4
//! sbox = 16                    # 4 | 16
//! key_bits = 128               # 128 | 256
//! mac = pmac                   # hmac | pmac
//! mac_engines = 4
//!
//! [region storage]
//! id = 1
//! base = 0x100000              # base, size and tag_base are hex
//! size = 0x400000
//! tag_base = 0x3000000
//! c_mem = 4096
//! mode = rw                    # rw | stream_write | ro
//! counters = off
//! counter_bits = 32
//! buffer_bytes = 16384
//! engine_set = 0
//! ```

use std::fmt::Write;

use shef_core::crypto::KeyBits;
use shef_core::shield::{
    ConfigError, EngineSetConfig, MacKind, MemoryRegion, RegionMode, RegisterMode, SboxParallelism, ShieldConfig,
};

use crate::text::{sections, Diagnostic, Fields, Section};

const SHIELD_KEYS: &[&str] = &["registers", "register_mode"];
const ENGINE_KEYS: &[&str] = &["aes_engines", "sbox", "key_bits", "mac", "mac_engines"];
const REGION_KEYS: &[&str] = &[
    "id",
    "base",
    "size",
    "c_mem",
    "tag_base",
    "mode",
    "counters",
    "counter_bits",
    "buffer_bytes",
    "engine_set",
];

/// Section kinds owned by the configuration grammar.
pub fn is_config_section(kind: &str) -> bool {
    matches!(kind, "shield" | "engine_set" | "region")
}

pub fn parse_config(text: &str) -> Result<ShieldConfig, Diagnostic> {
    config_from_sections(&sections(text)?)
}

/// Builds and validates a configuration from the config sections in
/// `secs`; other sections are ignored.
pub fn config_from_sections(secs: &[Section]) -> Result<ShieldConfig, Diagnostic> {
    let mut cfg = ShieldConfig {
        regions: Vec::new(),
        engine_sets: Vec::new(),
        register_count: 0,
        register_mode: RegisterMode::PlainAddress,
    };
    let mut shield_line = None;
    let mut set_lines = Vec::new();
    let mut region_lines = Vec::new();
    for s in secs.iter().filter(|s| is_config_section(&s.kind)) {
        match s.kind.as_str() {
            "shield" => {
                if s.arg.is_some() {
                    return Err(Diagnostic::new(s.line, "[shield] takes no argument"));
                }
                if shield_line.replace(s.line).is_some() {
                    return Err(Diagnostic::new(s.line, "duplicate [shield] section"));
                }
                let f = Fields::parse(s, SHIELD_KEYS)?;
                cfg.register_count = f.require("registers")?.narrow()?;
                if let Some(e) = f.get("register_mode") {
                    cfg.register_mode = match e.value.as_str() {
                        "plain" => RegisterMode::PlainAddress,
                        "encaddr" => RegisterMode::EncryptedAddress,
                        v => return Err(e.err(format!("expected plain|encaddr, got `{v}`"))),
                    };
                }
            }
            "engine_set" => {
                let id = s
                    .arg
                    .as_deref()
                    .and_then(|a| a.parse::<u8>().ok())
                    .ok_or_else(|| Diagnostic::new(s.line, "[engine_set <id>] needs a numeric id"))?;
                cfg.engine_sets.push(engine_set(id, &Fields::parse(s, ENGINE_KEYS)?)?);
                set_lines.push((id, s.line));
            }
            _ => {
                let name = s.arg.clone().ok_or_else(|| Diagnostic::new(s.line, "[region <name>] needs a name"))?;
                if cfg.regions.iter().any(|r| r.name == name) {
                    return Err(Diagnostic::new(s.line, format!("duplicate region name `{name}`")));
                }
                let r = region(name, &Fields::parse(s, REGION_KEYS)?)?;
                region_lines.push((r.id, r.name.clone(), s.line));
                cfg.regions.push(r);
            }
        }
    }
    if shield_line.is_none() {
        return Err(Diagnostic::new(0, "missing [shield] section"));
    }
    cfg.validate().map_err(|e| {
        let line = match &e {
            ConfigError::NoRegisters => shield_line.unwrap_or(0),
            ConfigError::DuplicateEngineSet(id) | ConfigError::NoEngines(id) => {
                set_lines.iter().rev().find(|(i, _)| i == id).map_or(0, |(_, l)| *l)
            }
            ConfigError::DuplicateRegion(id) => region_lines.iter().rev().find(|(i, _, _)| i == id).map_or(0, |r| r.2),
            ConfigError::UnknownEngineSet(n, _)
            | ConfigError::Empty(n)
            | ConfigError::ChunkAlignment(n)
            | ConfigError::TooManyChunks(n)
            | ConfigError::CounterBits(n)
            | ConfigError::BufferTooSmall(n)
            | ConfigError::AddressOverflow(n)
            | ConfigError::Overlap(_, n) => region_lines.iter().find(|r| &r.1 == n).map_or(0, |r| r.2),
            ConfigError::Encoding => 0,
        };
        Diagnostic::new(line, e.to_string())
    })?;
    Ok(cfg)
}

fn engine_set(id: u8, f: &Fields) -> Result<EngineSetConfig, Diagnostic> {
    let sbox = match f.get("sbox") {
        None => SboxParallelism::X4,
        Some(e) => e
            .narrow::<u32>()
            .ok()
            .and_then(SboxParallelism::from_factor)
            .ok_or_else(|| e.err("expected 4 or 16"))?,
    };
    let key_bits = match f.get("key_bits") {
        None => KeyBits::B128,
        Some(e) => e
            .narrow::<u32>()
            .ok()
            .and_then(KeyBits::from_bits)
            .ok_or_else(|| e.err("expected 128 or 256"))?,
    };
    let mac = match f.get("mac") {
        None => MacKind::Hmac,
        Some(e) => match e.value.as_str() {
            "hmac" => MacKind::Hmac,
            "pmac" => MacKind::Pmac,
            v => return Err(e.err(format!("expected hmac|pmac, got `{v}`"))),
        },
    };
    let count = |k: &str| f.get(k).map_or(Ok(1), |e| e.narrow::<u8>());
    Ok(EngineSetConfig { id, aes_engines: count("aes_engines")?, sbox, key_bits, mac, mac_engines: count("mac_engines")? })
}

fn region(name: String, f: &Fields) -> Result<MemoryRegion, Diagnostic> {
    let mode = match f.get("mode") {
        None => RegionMode::ReadWrite,
        Some(e) => match e.value.as_str() {
            "rw" => RegionMode::ReadWrite,
            "stream_write" => RegionMode::StreamWrite,
            "ro" => RegionMode::ReadOnly,
            v => return Err(e.err(format!("expected rw|stream_write|ro, got `{v}`"))),
        },
    };
    Ok(MemoryRegion {
        name,
        id: f.require("id")?.narrow()?,
        base: f.require("base")?.hex_u64()?,
        size: f.require("size")?.hex_u64()?,
        c_mem: f.require("c_mem")?.narrow()?,
        tag_base: f.require("tag_base")?.hex_u64()?,
        mode,
        counters: f.get("counters").map_or(Ok(false), |e| e.on_off())?,
        counter_bits: f.get("counter_bits").map_or(Ok(32), |e| e.narrow())?,
        buffer_bytes: f.require("buffer_bytes")?.narrow()?,
        engine_set: f.require("engine_set")?.narrow()?,
    })
}

/// Canonical text form; `parse_config(&render_config(c)) == c` for any
/// valid `c`.
pub fn render_config(cfg: &ShieldConfig) -> String {
    let mut s = String::new();
    let mode = match cfg.register_mode {
        RegisterMode::PlainAddress => "plain",
        RegisterMode::EncryptedAddress => "encaddr",
    };
    let _ = writeln!(s, "[shield]\nregisters = {}\nregister_mode = {mode}", cfg.register_count);
    for e in &cfg.engine_sets {
        let mac = match e.mac {
            MacKind::Hmac => "hmac",
            MacKind::Pmac => "pmac",
        };
        let _ = writeln!(
            s,
            "\n[engine_set {}]\naes_engines = {}\nsbox = {}\nkey_bits = {}\nmac = {mac}\nmac_engines = {}",
            e.id,
            e.aes_engines,
            e.sbox.factor(),
            e.key_bits.bits(),
            e.mac_engines
        );
    }
    for r in &cfg.regions {
        let mode = match r.mode {
            RegionMode::ReadWrite => "rw",
            RegionMode::StreamWrite => "stream_write",
            RegionMode::ReadOnly => "ro",
        };
        let _ = writeln!(
            s,
            "\n[region {}]\nid = {}\nbase = {:#x}\nsize = {:#x}\ntag_base = {:#x}\nc_mem = {}\nmode = {mode}\ncounters = {}\ncounter_bits = {}\nbuffer_bytes = {}\nengine_set = {}",
            r.name,
            r.id,
            r.base,
            r.size,
            r.tag_base,
            r.c_mem,
            if r.counters { "on" } else { "off" },
            r.counter_bits,
            r.buffer_bytes,
            r.engine_set
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SDP: &str = "
[shield]
registers = 8

[engine_set 0]
aes_engines = 4
sbox = 4
mac = hmac
mac_engines = 4

[engine_set 1]
aes_engines = 4
sbox = 4
mac = hmac
mac_engines = 4

[region storage]
id = 1
base = 0x100000
size = 0x800000
tag_base = 0x3000000
c_mem = 4096
buffer_bytes = 16384
engine_set = 0

[region tls]
id = 2
base = 0x900000
size = 0x800000
tag_base = 0x3100000
c_mem = 4096
buffer_bytes = 16384
engine_set = 1
";

    #[test]
    fn sdp_reference_config_has_two_regions() {
        let c = parse_config(SDP).unwrap();
        assert_eq!(c.regions.len(), 2);
        assert_eq!(c.engine_sets.len(), 2);
        assert!(c.regions.iter().all(|r| r.buffer_bytes == 16 << 10 && r.c_mem == 4096));
        assert_eq!(parse_config(&render_config(&c)).unwrap(), c);
    }

    #[test]
    fn misaligned_size_names_the_region() {
        let bad = SDP.replace("size = 0x800000\ntag_base = 0x3100000", "size = 0x800100\ntag_base = 0x3100000");
        let e = parse_config(&bad).unwrap_err();
        assert!(e.message.contains("tls"), "{e}");
        assert_eq!(e.line, 26);
    }

    #[test]
    fn duplicate_region_id() {
        let bad = SDP.replace("id = 2", "id = 1");
        let e = parse_config(&bad).unwrap_err();
        assert!(e.message.contains("duplicate region id 1"), "{e}");
        assert_eq!(e.line, 26);
    }

    #[test]
    fn unknown_and_malformed_keys() {
        let e = parse_config(&SDP.replace("sbox = 4\nmac = hmac\nmac_engines = 4\n\n[engine_set 1]", "sboxes = 4\n\n[engine_set 1]")).unwrap_err();
        assert!(e.message.contains("unknown key `sboxes`"), "{e}");
        assert_eq!(e.line, 7);
        let e = parse_config(&SDP.replacen("sbox = 4", "sbox = 8", 1)).unwrap_err();
        assert_eq!(e.line, 7);
        let e = parse_config(&SDP.replacen("c_mem = 4096", "c_mem = 4096\nmode = wo", 1)).unwrap_err();
        assert!(e.message.contains("rw|stream_write|ro"));
        assert!(parse_config("[engine_set 0]").unwrap_err().message.contains("[shield]"));
    }
}
