//! The Shield: burst decoding, chunk-granular authenticated encryption,
//! on-chip buffers, replay counters and the sealed register interface.
//!
//! Off-chip layout of chunk `i` in a region: ciphertext at
//! `base + i * c_mem`, metadata record `tag (16) || iv (12)` at
//! `tag_base + i * 28`.

pub(crate) mod config;
mod registers;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

pub use config::{
    ConfigError, EngineSetConfig, MacKind, MemoryRegion, RegionMode, RegisterMode, SboxParallelism,
    ShieldConfig, MAX_CHUNKS, META_RECORD,
};
pub use registers::{
    RegMessage, RegOp, RegisterClient, RegisterError, REG_ENVELOPE_LEN, REG_MAILBOX_ADDR,
};

use crate::crypto::{kdf_into, mac_hmac, AesCtr, Iv96, KeyBits, Pmac, SymKey, Tag16};
use crate::sim_env::{subkey_id, DramFault, IvTracker, RunStats, ShieldStats, SimDram};
use crate::util::put_lv;
use registers::RegisterFile;

/// Largest write version that still fits the 5-byte IV field.
pub const MAX_WRITE_VERSION: u64 = (1 << 40) - 1;

/// Longest single DRAM burst, in bytes.
pub const MAX_BURST_BYTES: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShieldError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("address {0:#x} is not in any protected region")]
    RegionFault(u64),
    #[error("request at {addr:#x} of {len} bytes crosses a region boundary")]
    CrossRegionFault { addr: u64, len: u64 },
    #[error("zero-length request")]
    EmptyRequest,
    #[error("region {0} is read-only")]
    PermissionFault(u16),
    #[error("chunk {chunk} of region {region} failed authentication")]
    AuthFailure { region: u16, chunk: u64 },
    #[error("chunk {chunk} of region {region} exhausted its write versions")]
    VersionExhausted { region: u16, chunk: u64 },
    #[error("chunk {chunk} of region {region} overflowed its integrity counter")]
    CounterOverflow { region: u16, chunk: u64 },
    #[error("no region with id {0}")]
    UnknownRegion(u16),
    #[error("no chunk {chunk} in region {region}")]
    NoSuchChunk { region: u16, chunk: u64 },
    #[error("chunk data must be exactly c_mem bytes")]
    ChunkLength,
    #[error(transparent)]
    Dram(#[from] DramFault),
    #[error(transparent)]
    Register(#[from] RegisterError),
}

/// On-chip per-chunk state. Absent entries mean "never written".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ChunkState {
    pub write_version: u64,
    /// Number of DRAM write-backs; only meaningful with counters enabled.
    pub ctr: u64,
}

/// One chunk-granular piece of a decoded burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkAccess {
    pub region_id: u16,
    pub chunk: u64,
    pub offset: u32,
    pub len: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedChunk {
    pub ciphertext: Vec<u8>,
    pub tag: Tag16,
    pub iv: Iv96,
}

/// `region_id (2) || chunk_index (5) || write_version (5)`.
pub fn iv_compose(region_id: u16, chunk: u64, write_version: u64) -> Iv96 {
    let mut iv = [0u8; 12];
    iv[..2].copy_from_slice(&region_id.to_be_bytes());
    iv[2..7].copy_from_slice(&chunk.to_be_bytes()[3..]);
    iv[7..].copy_from_slice(&write_version.to_be_bytes()[3..]);
    Iv96(iv)
}

/// Per-region encryption and MAC subkeys derived from the Data Encryption
/// Key. The MAC key is always 32 bytes; a PMAC engine keys AES with its
/// leading `key_bits` bytes.
pub fn region_subkeys(dek: &SymKey, region_id: u16, key_bits: KeyBits) -> (SymKey, SymKey) {
    let mut label = [0u8; 5];
    label[3..].copy_from_slice(&region_id.to_be_bytes());
    let mut enc = [0u8; 32];
    label[..3].copy_from_slice(b"enc");
    kdf_into(dek.as_bytes(), &label, &mut enc[..key_bits.bytes()]).expect("fits");
    let mut mac = [0u8; 32];
    label[..3].copy_from_slice(b"mac");
    kdf_into(dek.as_bytes(), &label, &mut mac).expect("fits");
    (
        SymKey::from_slice(&enc[..key_bits.bytes()]).expect("valid width"),
        SymKey::K256(mac),
    )
}

fn mac_input(region_id: u16, chunk: u64, iv: &Iv96, ct: &[u8], ctr: Option<u64>) -> Vec<u8> {
    let mut m = Vec::with_capacity(ct.len() + 60);
    put_lv(&mut m, &region_id.to_be_bytes());
    put_lv(&mut m, &chunk.to_be_bytes());
    put_lv(&mut m, &iv.0);
    put_lv(&mut m, ct);
    if let Some(c) = ctr {
        put_lv(&mut m, &c.to_be_bytes());
    }
    m
}

#[derive(Clone)]
enum MacEngine {
    Hmac(SymKey),
    Pmac(Pmac),
}

impl MacEngine {
    fn tag(&self, msg: &[u8]) -> Tag16 {
        match self {
            Self::Hmac(k) => mac_hmac(k, msg),
            Self::Pmac(p) => p.mac(msg),
        }
    }
}

#[derive(Clone, Debug)]
struct Line {
    data: Vec<u8>,
    dirty: bool,
    stamp: u64,
}

/// Fully associative, LRU, write-back.
#[derive(Clone, Debug, Default)]
struct Buffer {
    capacity: usize,
    lines: BTreeMap<u64, Line>,
    by_stamp: BTreeMap<u64, u64>,
    clock: u64,
}

impl Buffer {
    fn touch(&mut self, chunk: u64) -> Option<&mut Line> {
        let line = self.lines.get_mut(&chunk)?;
        self.by_stamp.remove(&line.stamp);
        self.clock += 1;
        line.stamp = self.clock;
        self.by_stamp.insert(self.clock, chunk);
        Some(line)
    }

    fn pop_lru(&mut self) -> Option<(u64, Line)> {
        let (_, chunk) = self.by_stamp.pop_first()?;
        let line = self.lines.remove(&chunk).expect("stamp index in sync");
        Some((chunk, line))
    }

    /// Inserts a line, returning the victim if the buffer was full.
    fn insert(&mut self, chunk: u64, data: Vec<u8>, dirty: bool) -> Option<(u64, Line)> {
        let victim = if self.lines.len() >= self.capacity { self.pop_lru() } else { None };
        self.clock += 1;
        self.by_stamp.insert(self.clock, chunk);
        self.lines.insert(chunk, Line { data, dirty, stamp: self.clock });
        victim
    }

    fn remove(&mut self, chunk: u64) -> Option<Line> {
        let line = self.lines.remove(&chunk)?;
        self.by_stamp.remove(&line.stamp);
        Some(line)
    }
}

#[derive(Clone)]
struct RegionEngine {
    region: MemoryRegion,
    enc: AesCtr,
    enc_id: u64,
    mac: MacEngine,
    chunks: BTreeMap<u64, ChunkState>,
    buffer: Buffer,
    stats: ShieldStats,
}

/// Splits a sorted list of chunk indices into runs and counts the DRAM
/// bursts needed to move their data and metadata.
fn bursts_for(chunks: &mut Vec<u64>, c_mem: u32) -> u64 {
    chunks.sort_unstable();
    chunks.dedup();
    let mut bursts = 0;
    let mut i = 0;
    while i < chunks.len() {
        let mut j = i + 1;
        while j < chunks.len() && chunks[j] == chunks[j - 1] + 1 {
            j += 1;
        }
        let n = (j - i) as u64;
        bursts += (n * u64::from(c_mem)).div_ceil(MAX_BURST_BYTES) + (n * META_RECORD).div_ceil(MAX_BURST_BYTES);
        i = j;
    }
    chunks.clear();
    bursts
}

impl RegionEngine {
    fn id(&self) -> u16 {
        self.region.id
    }

    fn check_chunk(&self, chunk: u64) -> Result<(), ShieldError> {
        if chunk >= self.region.chunks() {
            return Err(ShieldError::NoSuchChunk { region: self.id(), chunk });
        }
        Ok(())
    }

    fn seal(&mut self, chunk: u64, plaintext: &[u8], tracker: &mut IvTracker) -> Result<SealedChunk, ShieldError> {
        self.check_chunk(chunk)?;
        if plaintext.len() != self.region.c_mem as usize {
            return Err(ShieldError::ChunkLength);
        }
        let (region, id) = (&self.region, self.region.id);
        let st = self.chunks.get(&chunk).copied().unwrap_or_default();
        let version = st.write_version + 1;
        if version > MAX_WRITE_VERSION {
            return Err(ShieldError::VersionExhausted { region: id, chunk });
        }
        let ctr = if region.counters {
            let next = st.ctr + 1;
            if region.counter_bits < 64 && next >> region.counter_bits != 0 {
                return Err(ShieldError::CounterOverflow { region: id, chunk });
            }
            Some(next)
        } else {
            None
        };
        let iv = iv_compose(id, chunk, version);
        let mut ct = plaintext.to_vec();
        self.enc.apply(&iv, 0, &mut ct).expect("chunk fits the 32-bit block counter");
        tracker.record(self.enc_id, iv);
        let input = mac_input(id, chunk, &iv, &ct, ctr);
        let tag = self.mac.tag(&input);
        self.chunks.insert(chunk, ChunkState { write_version: version, ctr: ctr.unwrap_or(st.ctr) });
        self.stats.chunks_sealed += 1;
        self.stats.aes_bytes += ct.len() as u64;
        self.stats.mac_bytes += input.len() as u64;
        self.stats.mac_ops += 1;
        Ok(SealedChunk { ciphertext: ct, tag, iv })
    }

    fn open(&mut self, chunk: u64, ct: &[u8], tag: &Tag16, iv: &Iv96) -> Result<Vec<u8>, ShieldError> {
        self.check_chunk(chunk)?;
        if ct.len() != self.region.c_mem as usize {
            return Err(ShieldError::ChunkLength);
        }
        let id = self.id();
        let st = self.chunks.get(&chunk).copied().unwrap_or_default();
        let ctr = self.region.counters.then_some(st.ctr);
        let input = mac_input(id, chunk, iv, ct, ctr);
        self.stats.chunks_opened += 1;
        self.stats.aes_bytes += ct.len() as u64;
        self.stats.mac_bytes += input.len() as u64;
        self.stats.mac_ops += 1;
        if !self.mac.tag(&input).ct_eq(tag) {
            return Err(ShieldError::AuthFailure { region: id, chunk });
        }
        let mut pt = ct.to_vec();
        self.enc.apply(iv, 0, &mut pt).expect("chunk fits the 32-bit block counter");
        Ok(pt)
    }

    /// Fetches and authenticates a chunk. Never-written chunks fill with
    /// zeros without touching DRAM.
    fn fill(&mut self, dram: &mut SimDram, chunk: u64, fills: &mut Vec<u64>) -> Result<Vec<u8>, ShieldError> {
        if !self.chunks.contains_key(&chunk) {
            return Ok(vec![0u8; self.region.c_mem as usize]);
        }
        let ct = dram.read(self.region.data_addr(chunk), self.region.c_mem as usize)?;
        let meta = dram.read(self.region.meta_addr(chunk), META_RECORD as usize)?;
        self.stats.chunk_fills += 1;
        self.stats.dram_bytes_read += ct.len() as u64 + META_RECORD;
        fills.push(chunk);
        let tag = Tag16(meta[..16].try_into().expect("16 bytes"));
        let iv = Iv96(meta[16..].try_into().expect("12 bytes"));
        self.open(chunk, &ct, &tag, &iv)
    }

    fn write_back(
        &mut self,
        dram: &mut SimDram,
        chunk: u64,
        data: &[u8],
        tracker: &mut IvTracker,
        wbs: &mut Vec<u64>,
    ) -> Result<(), ShieldError> {
        let sealed = self.seal(chunk, data, tracker)?;
        dram.write(self.region.data_addr(chunk), &sealed.ciphertext)?;
        let mut meta = [0u8; META_RECORD as usize];
        meta[..16].copy_from_slice(&sealed.tag.0);
        meta[16..].copy_from_slice(&sealed.iv.0);
        dram.write(self.region.meta_addr(chunk), &meta)?;
        self.stats.writebacks += 1;
        self.stats.dram_bytes_written += data.len() as u64 + META_RECORD;
        wbs.push(chunk);
        Ok(())
    }

    /// Inserts a line, writing back the victim if it is dirty.
    fn install(
        &mut self,
        dram: &mut SimDram,
        chunk: u64,
        data: Vec<u8>,
        dirty: bool,
        tracker: &mut IvTracker,
        wbs: &mut Vec<u64>,
    ) -> Result<(), ShieldError> {
        if let Some((victim, line)) = self.buffer.insert(chunk, data, dirty) {
            if line.dirty {
                self.write_back(dram, victim, &line.data, tracker, wbs)?;
            }
        }
        Ok(())
    }

    fn flush(&mut self, dram: &mut SimDram, tracker: &mut IvTracker) -> Result<(), ShieldError> {
        let mut wbs = Vec::new();
        let result = (|| {
            while let Some((chunk, line)) = self.buffer.pop_lru() {
                if line.dirty {
                    self.write_back(dram, chunk, &line.data, tracker, &mut wbs)?;
                }
            }
            Ok(())
        })();
        self.stats.bursts += bursts_for(&mut wbs, self.region.c_mem);
        result
    }
}

/// A Shield instance bound to one configuration and Data Encryption Key.
#[derive(Clone)]
pub struct Shield {
    cfg: ShieldConfig,
    engines: Vec<RegionEngine>,
    registers: RegisterFile,
    ivs: IvTracker,
}

impl Shield {
    pub fn new(cfg: ShieldConfig, dek: &SymKey) -> Result<Self, ShieldError> {
        cfg.validate()?;
        let engines = cfg
            .regions
            .iter()
            .map(|r| {
                let es = cfg.engine_set(r.engine_set).expect("validated");
                let (enc, mac) = region_subkeys(dek, r.id, es.key_bits);
                let mac = match es.mac {
                    MacKind::Hmac => MacEngine::Hmac(mac),
                    MacKind::Pmac => MacEngine::Pmac(Pmac::new(
                        &SymKey::from_slice(&mac.as_bytes()[..es.key_bits.bytes()]).expect("valid width"),
                    )),
                };
                RegionEngine {
                    region: r.clone(),
                    enc_id: subkey_id(&enc),
                    enc: AesCtr::new(&enc),
                    mac,
                    chunks: BTreeMap::new(),
                    buffer: Buffer { capacity: r.buffer_lines(), ..Default::default() },
                    stats: ShieldStats::default(),
                }
            })
            .collect();
        let registers = RegisterFile::new(cfg.register_count, cfg.register_mode, dek);
        Ok(Self { cfg, engines, registers, ivs: IvTracker::new() })
    }

    pub fn config(&self) -> &ShieldConfig {
        &self.cfg
    }

    fn engine_index(&self, region_id: u16) -> Result<usize, ShieldError> {
        self.engines
            .iter()
            .position(|e| e.id() == region_id)
            .ok_or(ShieldError::UnknownRegion(region_id))
    }

    /// Splits `[addr, addr + len)` at chunk boundaries.
    pub fn decode_burst(&self, addr: u64, len: u64) -> Result<Vec<ChunkAccess>, ShieldError> {
        self.decode(addr, len).map(|(_, v)| v)
    }

    fn decode(&self, addr: u64, len: u64) -> Result<(usize, Vec<ChunkAccess>), ShieldError> {
        if len == 0 {
            return Err(ShieldError::EmptyRequest);
        }
        let idx = self.engines.iter().position(|e| e.region.contains(addr)).ok_or(ShieldError::RegionFault(addr))?;
        let r = &self.engines[idx].region;
        match addr.checked_add(len) {
            Some(end) if end <= r.end() => {}
            _ => return Err(ShieldError::CrossRegionFault { addr, len }),
        }
        let c = u64::from(r.c_mem);
        let mut out = Vec::new();
        let mut pos = addr - r.base;
        let end = pos + len;
        while pos < end {
            let chunk = pos / c;
            let offset = pos % c;
            let n = (c - offset).min(end - pos);
            out.push(ChunkAccess { region_id: r.id, chunk, offset: offset as u32, len: n as u32 });
            pos += n;
        }
        Ok((idx, out))
    }

    /// Seals one chunk directly, advancing its version and counter. Used by
    /// the write-back path and exposed for oracle tests.
    pub fn chunk_seal(&mut self, region_id: u16, chunk: u64, plaintext: &[u8]) -> Result<SealedChunk, ShieldError> {
        let i = self.engine_index(region_id)?;
        self.engines[i].seal(chunk, plaintext, &mut self.ivs)
    }

    pub fn chunk_open(
        &mut self,
        region_id: u16,
        chunk: u64,
        ciphertext: &[u8],
        tag: &Tag16,
        iv: &Iv96,
    ) -> Result<Vec<u8>, ShieldError> {
        let i = self.engine_index(region_id)?;
        self.engines[i].open(chunk, ciphertext, tag, iv)
    }

    pub fn read(&mut self, dram: &mut SimDram, addr: u64, len: u64) -> Result<Vec<u8>, ShieldError> {
        let (idx, accesses) = self.decode(addr, len)?;
        let e = &mut self.engines[idx];
        let (mut fills, mut wbs) = (Vec::new(), Vec::new());
        let mut out = Vec::with_capacity(len as usize);
        let result = (|| {
            for a in &accesses {
                let range = a.offset as usize..(a.offset + a.len) as usize;
                if let Some(line) = e.buffer.touch(a.chunk) {
                    e.stats.buffer_hits += 1;
                    out.extend_from_slice(&line.data[range]);
                    continue;
                }
                e.stats.buffer_misses += 1;
                let data = e.fill(dram, a.chunk, &mut fills)?;
                out.extend_from_slice(&data[range]);
                e.install(dram, a.chunk, data, false, &mut self.ivs, &mut wbs)?;
            }
            Ok(())
        })();
        let c_mem = e.region.c_mem;
        e.stats.bursts += bursts_for(&mut fills, c_mem) + bursts_for(&mut wbs, c_mem);
        result.map(|_| out)
    }

    pub fn write(&mut self, dram: &mut SimDram, addr: u64, data: &[u8]) -> Result<(), ShieldError> {
        self.write_inner(dram, addr, data, false)
    }

    /// Owner-side initialization of a region's contents, permitted even for
    /// read-only regions. The data is sealed out to DRAM immediately.
    pub fn preload(&mut self, dram: &mut SimDram, addr: u64, data: &[u8]) -> Result<(), ShieldError> {
        self.write_inner(dram, addr, data, true)?;
        self.flush(dram)
    }

    fn write_inner(&mut self, dram: &mut SimDram, addr: u64, data: &[u8], owner: bool) -> Result<(), ShieldError> {
        let (idx, accesses) = self.decode(addr, data.len() as u64)?;
        let e = &mut self.engines[idx];
        if e.region.mode == RegionMode::ReadOnly && !owner {
            return Err(ShieldError::PermissionFault(e.id()));
        }
        let c_mem = e.region.c_mem;
        let (mut fills, mut wbs) = (Vec::new(), Vec::new());
        let mut src = 0usize;
        let result = (|| {
            for a in &accesses {
                let range = a.offset as usize..(a.offset + a.len) as usize;
                let piece = &data[src..src + a.len as usize];
                src += a.len as usize;
                if let Some(line) = e.buffer.touch(a.chunk) {
                    e.stats.buffer_hits += 1;
                    line.data[range].copy_from_slice(piece);
                    line.dirty = true;
                    continue;
                }
                e.stats.buffer_misses += 1;
                let mut line = if a.len == c_mem || e.region.mode == RegionMode::StreamWrite {
                    vec![0u8; c_mem as usize]
                } else {
                    e.fill(dram, a.chunk, &mut fills)?
                };
                line[range].copy_from_slice(piece);
                e.install(dram, a.chunk, line, true, &mut self.ivs, &mut wbs)?;
            }
            Ok(())
        })();
        e.stats.bursts += bursts_for(&mut fills, c_mem) + bursts_for(&mut wbs, c_mem);
        result
    }

    /// Seals and writes back every dirty line and empties all buffers.
    pub fn flush(&mut self, dram: &mut SimDram) -> Result<(), ShieldError> {
        for e in &mut self.engines {
            e.flush(dram, &mut self.ivs)?;
        }
        Ok(())
    }

    /// Drops a buffered line without writing it back. Returns whether a
    /// line was present.
    pub fn discard_line(&mut self, region_id: u16, chunk: u64) -> Result<bool, ShieldError> {
        let i = self.engine_index(region_id)?;
        Ok(self.engines[i].buffer.remove(chunk).is_some())
    }

    pub fn buffered_lines(&self, region_id: u16) -> usize {
        self.engines.iter().find(|e| e.id() == region_id).map_or(0, |e| e.buffer.lines.len())
    }

    pub fn chunk_state(&self, region_id: u16, chunk: u64) -> Option<ChunkState> {
        self.engines.iter().find(|e| e.id() == region_id)?.chunks.get(&chunk).copied()
    }

    /// All on-chip chunk state as `(region_id, chunk, state)`.
    pub fn export_state(&self) -> Vec<(u16, u64, ChunkState)> {
        self.engines
            .iter()
            .flat_map(|e| e.chunks.iter().map(move |(c, s)| (e.id(), *c, *s)))
            .collect()
    }

    pub fn restore_state(&mut self, state: &[(u16, u64, ChunkState)]) -> Result<(), ShieldError> {
        for (region, chunk, s) in state {
            let i = self.engine_index(*region)?;
            self.engines[i].check_chunk(*chunk)?;
            self.engines[i].chunks.insert(*chunk, *s);
        }
        Ok(())
    }

    pub fn run_stats(&self) -> RunStats {
        RunStats {
            regions: self.engines.iter().map(|e| e.stats).collect(),
            registers: self.registers.stats,
        }
    }

    pub fn reset_stats(&mut self) {
        for e in &mut self.engines {
            e.stats = ShieldStats::default();
        }
        self.registers.stats = Default::default();
    }

    pub fn iv_tracker(&self) -> &IvTracker {
        &self.ivs
    }

    pub fn reg_host_write(&mut self, envelope: &[u8]) -> Result<(), ShieldError> {
        Ok(self.registers.host_write(envelope)?)
    }

    /// Answers a sealed read request with a sealed response.
    pub fn reg_host_read(&mut self, request: &[u8]) -> Result<Vec<u8>, ShieldError> {
        Ok(self.registers.host_read(request, &mut self.ivs)?)
    }

    pub fn reg_accel_read(&self, index: u16) -> Result<u32, ShieldError> {
        Ok(self.registers.accel_read(index)?)
    }

    pub fn reg_accel_write(&mut self, index: u16, value: u32) -> Result<(), ShieldError> {
        Ok(self.registers.accel_write(index, value)?)
    }
}
