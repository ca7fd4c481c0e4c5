#![allow(dead_code)]

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use shef_core::crypto::KeyBits;
use shef_core::shield::{
    EngineSetConfig, MacKind, MemoryRegion, RegionMode, RegisterMode, SboxParallelism, ShieldConfig,
};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[allow(clippy::too_many_arguments)]
pub fn region(
    name: &str,
    id: u16,
    base: u64,
    size: u64,
    c_mem: u32,
    tag_base: u64,
    mode: RegionMode,
    counters: bool,
    buffer_bytes: u32,
    engine_set: u8,
) -> MemoryRegion {
    MemoryRegion {
        name: name.into(),
        id,
        base,
        size,
        c_mem,
        tag_base,
        mode,
        counters,
        counter_bits: 32,
        buffer_bytes,
        engine_set,
    }
}

pub fn engine_set(id: u8, aes: u8, sbox: SboxParallelism, bits: KeyBits, mac: MacKind, mac_engines: u8) -> EngineSetConfig {
    EngineSetConfig { id, aes_engines: aes, sbox, key_bits: bits, mac, mac_engines }
}

/// Three read-write regions with different chunk sizes, MACs and counter
/// settings.
pub fn mixed_config() -> ShieldConfig {
    ShieldConfig {
        regions: vec![
            region("a", 1, 0x10000, 0x8000, 512, 0x100000, RegionMode::ReadWrite, true, 2048, 0),
            region("b", 2, 0x20000, 0x4000, 64, 0x110000, RegionMode::ReadWrite, false, 512, 1),
            region("c", 3, 0x30000, 0x10000, 4096, 0x120000, RegionMode::ReadWrite, true, 8192, 1),
        ],
        engine_sets: vec![
            engine_set(0, 1, SboxParallelism::X4, KeyBits::B128, MacKind::Hmac, 1),
            engine_set(1, 4, SboxParallelism::X16, KeyBits::B256, MacKind::Pmac, 4),
        ],
        register_count: 16,
        register_mode: RegisterMode::EncryptedAddress,
    }
}

pub const DRAM_BYTES: u64 = 2 << 20;
