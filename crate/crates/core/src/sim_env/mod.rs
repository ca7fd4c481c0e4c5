//! The untrusted world around the Shield and the throughput cost model.

mod adversary;
mod cost;
mod dram;
mod tracker;

use core::ops::AddAssign;

use alloc::vec::Vec;

pub use adversary::{apply_adversary, AdversaryAction, AdversaryError, AdversaryState, ScanResult};
pub use cost::{model_cycles, BaselineTraffic, CostError, CostModelParams, OverheadReport, AES256_COST_FACTOR};
pub use dram::{DramCounters, DramFault, SimDram, DEFAULT_DRAM_BYTES};
pub use tracker::{subkey_id, IvTracker, LeakScanner, MIN_NEEDLE};

/// Per-region activity counters. All fields only grow during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ShieldStats {
    pub buffer_hits: u64,
    pub buffer_misses: u64,
    /// Misses that had to fetch the chunk from DRAM.
    pub chunk_fills: u64,
    pub writebacks: u64,
    pub chunks_sealed: u64,
    pub chunks_opened: u64,
    pub dram_bytes_read: u64,
    pub dram_bytes_written: u64,
    pub mac_bytes: u64,
    pub aes_bytes: u64,
    pub mac_ops: u64,
    pub bursts: u64,
}

impl AddAssign for ShieldStats {
    fn add_assign(&mut self, o: Self) {
        self.buffer_hits += o.buffer_hits;
        self.buffer_misses += o.buffer_misses;
        self.chunk_fills += o.chunk_fills;
        self.writebacks += o.writebacks;
        self.chunks_sealed += o.chunks_sealed;
        self.chunks_opened += o.chunks_opened;
        self.dram_bytes_read += o.dram_bytes_read;
        self.dram_bytes_written += o.dram_bytes_written;
        self.mac_bytes += o.mac_bytes;
        self.aes_bytes += o.aes_bytes;
        self.mac_ops += o.mac_ops;
        self.bursts += o.bursts;
    }
}

/// Register-interface activity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct RegisterStats {
    /// Host-visible register transactions (sealed envelopes in or out).
    pub ops: u64,
    pub rejected: u64,
    pub wire_bytes: u64,
    pub aes_bytes: u64,
    pub mac_bytes: u64,
}

/// Everything the cost model needs from one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct RunStats {
    /// Indexed like `ShieldConfig::regions`.
    pub regions: Vec<ShieldStats>,
    pub registers: RegisterStats,
}

impl RunStats {
    pub fn total(&self) -> ShieldStats {
        let mut t = ShieldStats::default();
        for s in &self.regions {
            t += *s;
        }
        t
    }
}
