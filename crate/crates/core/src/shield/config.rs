use alloc::string::String;
use alloc::vec::Vec;

use crate::crypto::KeyBits;
use crate::util::{put_lv, Reader};

/// Bytes of off-chip metadata per chunk: tag (16) followed by the IV (12).
pub const META_RECORD: u64 = 16 + 12;

/// Chunk indices are packed into 5 bytes of the IV.
pub const MAX_CHUNKS: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SboxParallelism {
    X4,
    X16,
}

impl SboxParallelism {
    pub fn factor(self) -> u32 {
        match self {
            Self::X4 => 4,
            Self::X16 => 16,
        }
    }

    pub fn from_factor(f: u32) -> Option<Self> {
        match f {
            4 => Some(Self::X4),
            16 => Some(Self::X16),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MacKind {
    Hmac,
    Pmac,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineSetConfig {
    pub id: u8,
    pub aes_engines: u8,
    pub sbox: SboxParallelism,
    pub key_bits: KeyBits,
    pub mac: MacKind,
    pub mac_engines: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionMode {
    ReadWrite,
    /// Write misses allocate a zero-filled line instead of reading DRAM.
    StreamWrite,
    ReadOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryRegion {
    pub name: String,
    pub id: u16,
    pub base: u64,
    pub size: u64,
    pub c_mem: u32,
    pub tag_base: u64,
    pub mode: RegionMode,
    pub counters: bool,
    pub counter_bits: u8,
    pub buffer_bytes: u32,
    pub engine_set: u8,
}

impl MemoryRegion {
    pub fn chunks(&self) -> u64 {
        self.size / u64::from(self.c_mem)
    }

    pub fn end(&self) -> u64 {
        self.base + self.size
    }

    pub fn tag_bytes(&self) -> u64 {
        self.chunks() * META_RECORD
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.end()
    }

    pub fn data_addr(&self, chunk: u64) -> u64 {
        self.base + chunk * u64::from(self.c_mem)
    }

    pub fn meta_addr(&self, chunk: u64) -> u64 {
        self.tag_base + chunk * META_RECORD
    }

    /// Buffer capacity in lines.
    pub fn buffer_lines(&self) -> usize {
        (self.buffer_bytes / self.c_mem) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegisterMode {
    PlainAddress,
    /// All host register traffic targets one mailbox address; the register
    /// index travels inside the ciphertext.
    EncryptedAddress,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShieldConfig {
    pub regions: Vec<MemoryRegion>,
    pub engine_sets: Vec<EngineSetConfig>,
    pub register_count: u16,
    pub register_mode: RegisterMode,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("register_count must be at least 1")]
    NoRegisters,
    #[error("duplicate engine set id {0}")]
    DuplicateEngineSet(u8),
    #[error("engine set {0}: aes_engines and mac_engines must be at least 1")]
    NoEngines(u8),
    #[error("duplicate region id {0}")]
    DuplicateRegion(u16),
    #[error("region {0}: unknown engine set {1}")]
    UnknownEngineSet(String, u8),
    #[error("region {0}: c_mem and size must be non-zero")]
    Empty(String),
    #[error("region {0}: size is not a multiple of c_mem")]
    ChunkAlignment(String),
    #[error("region {0}: more than 2^40 chunks")]
    TooManyChunks(String),
    #[error("region {0}: counter_bits must be in 1..=64 when counters are on")]
    CounterBits(String),
    #[error("region {0}: buffer must hold at least one chunk")]
    BufferTooSmall(String),
    #[error("region {0}: address range overflows")]
    AddressOverflow(String),
    #[error("regions {0} and {1} overlap")]
    Overlap(String, String),
    #[error("malformed configuration encoding")]
    Encoding,
}

impl ShieldConfig {
    pub fn engine_set(&self, id: u8) -> Option<&EngineSetConfig> {
        self.engine_sets.iter().find(|e| e.id == id)
    }

    pub fn region_by_name(&self, name: &str) -> Option<&MemoryRegion> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.register_count == 0 {
            return Err(ConfigError::NoRegisters);
        }
        for (i, e) in self.engine_sets.iter().enumerate() {
            if self.engine_sets[..i].iter().any(|o| o.id == e.id) {
                return Err(ConfigError::DuplicateEngineSet(e.id));
            }
            if e.aes_engines == 0 || e.mac_engines == 0 {
                return Err(ConfigError::NoEngines(e.id));
            }
        }
        // (start, end, owner) for every data and tag range
        let mut ranges: Vec<(u64, u64, &str)> = Vec::new();
        for (i, r) in self.regions.iter().enumerate() {
            let name = || r.name.clone();
            if self.regions[..i].iter().any(|o| o.id == r.id) {
                return Err(ConfigError::DuplicateRegion(r.id));
            }
            if self.engine_set(r.engine_set).is_none() {
                return Err(ConfigError::UnknownEngineSet(name(), r.engine_set));
            }
            if r.c_mem == 0 || r.size == 0 {
                return Err(ConfigError::Empty(name()));
            }
            if r.size % u64::from(r.c_mem) != 0 {
                return Err(ConfigError::ChunkAlignment(name()));
            }
            if r.chunks() > MAX_CHUNKS {
                return Err(ConfigError::TooManyChunks(name()));
            }
            if r.counters && !(1..=64).contains(&r.counter_bits) {
                return Err(ConfigError::CounterBits(name()));
            }
            if r.buffer_bytes < r.c_mem {
                return Err(ConfigError::BufferTooSmall(name()));
            }
            let data_end = r.base.checked_add(r.size).ok_or_else(|| ConfigError::AddressOverflow(name()))?;
            let tag_end = r.tag_base.checked_add(r.tag_bytes()).ok_or_else(|| ConfigError::AddressOverflow(name()))?;
            ranges.push((r.base, data_end, &r.name));
            ranges.push((r.tag_base, tag_end, &r.name));
        }
        ranges.sort();
        for w in ranges.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(ConfigError::Overlap(w[0].2.into(), w[1].2.into()));
            }
        }
        Ok(())
    }

    /// Compact binary form carried inside the encrypted bitstream.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.register_count.to_be_bytes());
        out.push(match self.register_mode {
            RegisterMode::PlainAddress => 0,
            RegisterMode::EncryptedAddress => 1,
        });
        out.extend_from_slice(&(self.engine_sets.len() as u16).to_be_bytes());
        for e in &self.engine_sets {
            out.extend_from_slice(&[
                e.id,
                e.aes_engines,
                e.sbox.factor() as u8,
                (e.key_bits.bits() / 8) as u8,
                matches!(e.mac, MacKind::Pmac) as u8,
                e.mac_engines,
            ]);
        }
        out.extend_from_slice(&(self.regions.len() as u16).to_be_bytes());
        for r in &self.regions {
            put_lv(&mut out, r.name.as_bytes());
            out.extend_from_slice(&r.id.to_be_bytes());
            out.extend_from_slice(&r.base.to_be_bytes());
            out.extend_from_slice(&r.size.to_be_bytes());
            out.extend_from_slice(&r.c_mem.to_be_bytes());
            out.extend_from_slice(&r.tag_base.to_be_bytes());
            out.push(match r.mode {
                RegionMode::ReadWrite => 0,
                RegionMode::StreamWrite => 1,
                RegionMode::ReadOnly => 2,
            });
            out.push(r.counters as u8);
            out.push(r.counter_bits);
            out.extend_from_slice(&r.buffer_bytes.to_be_bytes());
            out.push(r.engine_set);
        }
        out
    }

    /// Inverse of [`ShieldConfig::to_bytes`]; the result is validated.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ConfigError> {
        Self::decode(&mut Reader::new(bytes)).ok_or(ConfigError::Encoding).and_then(|cfg| {
            cfg.validate()?;
            Ok(cfg)
        })
    }

    fn decode(r: &mut Reader<'_>) -> Option<Self> {
        let register_count = r.u16()?;
        let register_mode = match r.u8()? {
            0 => RegisterMode::PlainAddress,
            1 => RegisterMode::EncryptedAddress,
            _ => return None,
        };
        let n = r.u16()?;
        let mut engine_sets = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let [id, aes_engines, sbox, key, mac, mac_engines] = r.array::<6>()?;
            engine_sets.push(EngineSetConfig {
                id,
                aes_engines,
                sbox: SboxParallelism::from_factor(sbox.into())?,
                key_bits: KeyBits::from_bits(u32::from(key) * 8)?,
                mac: match mac {
                    0 => MacKind::Hmac,
                    1 => MacKind::Pmac,
                    _ => return None,
                },
                mac_engines,
            });
        }
        let n = r.u16()?;
        let mut regions = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let name = String::from(core::str::from_utf8(r.lv()?).ok()?);
            regions.push(MemoryRegion {
                name,
                id: r.u16()?,
                base: r.u64()?,
                size: r.u64()?,
                c_mem: r.u32()?,
                tag_base: r.u64()?,
                mode: match r.u8()? {
                    0 => RegionMode::ReadWrite,
                    1 => RegionMode::StreamWrite,
                    2 => RegionMode::ReadOnly,
                    _ => return None,
                },
                counters: match r.u8()? {
                    0 => false,
                    1 => true,
                    _ => return None,
                },
                counter_bits: r.u8()?,
                buffer_bytes: r.u32()?,
                engine_set: r.u8()?,
            });
        }
        r.is_empty().then_some(Self { regions, engine_sets, register_count, register_mode })
    }
}
