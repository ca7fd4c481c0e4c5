use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{LeakScanner, SimDram};
use crate::shield::{MemoryRegion, ShieldConfig, META_RECORD};

/// An attack on untrusted state. Chunk records are addressed by region id
/// and chunk index; a record is the chunk's ciphertext plus its tag/IV
/// metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdversaryAction {
    FlipBit { addr: u64, bit: u8 },
    SpliceChunks { region: u16, i: u64, j: u64 },
    Snapshot { region: u16, chunk: u64, slot: String },
    Restore { region: u16, chunk: u64, slot: String },
    ScanPlaintext(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdversaryError {
    #[error("no region with id {0}")]
    UnknownRegion(u16),
    #[error("region {region} has no chunk {chunk}")]
    NoSuchChunk { region: u16, chunk: u64 },
    #[error("no snapshot in slot {0:?}")]
    UnknownSlot(String),
    #[error("snapshot in slot {0:?} has a different record size")]
    SlotMismatch(String),
    #[error("bit index {0} is not in 0..8")]
    BitIndex(u8),
    #[error(transparent)]
    Dram(#[from] super::DramFault),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanResult {
    pub dram_hits: usize,
    pub transcript_hits: usize,
}

impl ScanResult {
    pub fn found(&self) -> bool {
        self.dram_hits + self.transcript_hits > 0
    }
}

/// Adversary-side memory: named snapshots of chunk records.
#[derive(Debug, Clone, Default)]
pub struct AdversaryState {
    slots: BTreeMap<String, Vec<u8>>,
}

fn region(cfg: &ShieldConfig, id: u16, chunk: u64) -> Result<&MemoryRegion, AdversaryError> {
    let r = cfg.regions.iter().find(|r| r.id == id).ok_or(AdversaryError::UnknownRegion(id))?;
    if chunk >= r.chunks() {
        return Err(AdversaryError::NoSuchChunk { region: id, chunk });
    }
    Ok(r)
}

fn read_record(dram: &mut SimDram, r: &MemoryRegion, i: u64) -> Result<Vec<u8>, AdversaryError> {
    let mut rec = dram.read(r.data_addr(i), r.c_mem as usize)?;
    rec.extend(dram.read(r.meta_addr(i), META_RECORD as usize)?);
    Ok(rec)
}

fn write_record(dram: &mut SimDram, r: &MemoryRegion, i: u64, rec: &[u8]) -> Result<(), AdversaryError> {
    let (data, meta) = rec.split_at(r.c_mem as usize);
    dram.write(r.data_addr(i), data)?;
    dram.write(r.meta_addr(i), meta)?;
    Ok(())
}

/// Applies one attack. Only [`AdversaryAction::ScanPlaintext`] returns a
/// result; it searches all DRAM and every transcript for the needle.
pub fn apply_adversary(
    dram: &mut SimDram,
    cfg: &ShieldConfig,
    state: &mut AdversaryState,
    action: &AdversaryAction,
    transcripts: &[&[u8]],
) -> Result<Option<ScanResult>, AdversaryError> {
    match action {
        AdversaryAction::FlipBit { addr, bit } => {
            if *bit >= 8 {
                return Err(AdversaryError::BitIndex(*bit));
            }
            let mut b = dram.read(*addr, 1)?;
            b[0] ^= 1 << bit;
            dram.write(*addr, &b)?;
        }
        AdversaryAction::SpliceChunks { region: id, i, j } => {
            let r = region(cfg, *id, *i)?;
            region(cfg, *id, *j)?;
            let a = read_record(dram, r, *i)?;
            let b = read_record(dram, r, *j)?;
            write_record(dram, r, *i, &b)?;
            write_record(dram, r, *j, &a)?;
        }
        AdversaryAction::Snapshot { region: id, chunk, slot } => {
            let r = region(cfg, *id, *chunk)?;
            let rec = read_record(dram, r, *chunk)?;
            state.slots.insert(slot.clone(), rec);
        }
        AdversaryAction::Restore { region: id, chunk, slot } => {
            let r = region(cfg, *id, *chunk)?;
            let rec = state.slots.get(slot).ok_or_else(|| AdversaryError::UnknownSlot(slot.clone()))?;
            if rec.len() != r.c_mem as usize + META_RECORD as usize {
                return Err(AdversaryError::SlotMismatch(slot.clone()));
            }
            let rec = rec.clone();
            write_record(dram, r, *chunk, &rec)?;
        }
        AdversaryAction::ScanPlaintext(needle) => {
            let dram_hits = dram
                .touched_runs()
                .iter()
                .filter(|(_, run)| LeakScanner::contains(run, needle))
                .count();
            let transcript_hits = transcripts.iter().filter(|t| LeakScanner::contains(t, needle)).count();
            return Ok(Some(ScanResult { dram_hits, transcript_hits }));
        }
    }
    Ok(None)
}
