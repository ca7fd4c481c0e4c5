use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::crypto::{hash, Iv96, SymKey};

/// Short, stable identifier for a subkey so trackers never hold key bytes.
pub fn subkey_id(key: &SymKey) -> u64 {
    let d = hash(key.as_bytes());
    u64::from_be_bytes(d.0[..8].try_into().expect("8 bytes"))
}

/// Records every `(subkey, IV)` pair handed to counter-mode encryption and
/// counts repeats.
#[derive(Clone, Debug, Default)]
pub struct IvTracker {
    seen: BTreeSet<(u64, Iv96)>,
    records: u64,
    duplicates: u64,
}

impl IvTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, subkey: u64, iv: Iv96) {
        self.records += 1;
        if !self.seen.insert((subkey, iv)) {
            self.duplicates += 1;
        }
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    /// Folds another tracker's pairs into this one, counting pairs seen by
    /// both as duplicates.
    pub fn merge(&mut self, other: &IvTracker) {
        self.records += other.records;
        self.duplicates += other.duplicates;
        for p in &other.seen {
            if !self.seen.insert(*p) {
                self.duplicates += 1;
            }
        }
    }

    /// Distinct pairs seen so far.
    pub fn distinct(&self) -> usize {
        self.seen.len()
    }

    /// True iff no pair was recorded twice.
    pub fn check(&self) -> bool {
        self.duplicates == 0
    }
}

/// Substring scanner for secrets in untrusted memory and channel traffic.
///
/// Secrets are indexed by 16-byte windows; a hit means some 16-byte piece
/// of a secret appears verbatim in the haystack.
#[derive(Clone, Debug, Default)]
pub struct LeakScanner {
    needles: BTreeSet<[u8; 16]>,
    /// One bit per value of a window's leading 22 bits; empty until the
    /// first needle is added.
    filter: Vec<u64>,
}

const FILTER_BITS: u32 = 22;

fn filter_slot(w: &[u8]) -> usize {
    (u32::from_le_bytes([w[0], w[1], w[2], w[3]]) >> (32 - FILTER_BITS)) as usize
}

/// Shortest secret the scanner considers.
pub const MIN_NEEDLE: usize = 16;

impl LeakScanner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.needles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.needles.is_empty()
    }

    fn add_window(&mut self, w: &[u8]) {
        // a run of one repeated byte (zeros, padding) is not evidence of a leak
        if w.iter().all(|b| *b == w[0]) {
            return;
        }
        if self.filter.is_empty() {
            self.filter = vec![0; 1 << (FILTER_BITS - 6)];
        }
        let slot = filter_slot(w);
        self.filter[slot / 64] |= 1 << (slot % 64);
        self.needles.insert(w.try_into().expect("16-byte window"));
    }

    /// Every 16-byte window of a key.
    pub fn add_key(&mut self, key: &[u8]) {
        for w in key.windows(MIN_NEEDLE) {
            self.add_window(w);
        }
    }

    /// The 16-byte-aligned blocks of a plaintext value; values shorter than
    /// [`MIN_NEEDLE`] are ignored.
    pub fn add_plaintext(&mut self, data: &[u8]) {
        for w in data.chunks_exact(MIN_NEEDLE) {
            self.add_window(w);
        }
    }

    /// Offsets in `haystack` where a needle starts.
    pub fn scan(&self, haystack: &[u8]) -> Vec<usize> {
        if self.needles.is_empty() {
            return Vec::new();
        }
        haystack
            .windows(MIN_NEEDLE)
            .enumerate()
            .filter(|(_, w)| {
                let slot = filter_slot(w);
                self.filter[slot / 64] & (1 << (slot % 64)) != 0
                    && self.needles.contains(<&[u8; 16]>::try_from(*w).expect("16 bytes"))
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Whether `needle` occurs anywhere in `haystack`, for one-off probes.
    pub fn contains(haystack: &[u8], needle: &[u8]) -> bool {
        !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
    }
}
