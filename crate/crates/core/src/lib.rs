//! Core of a trusted-execution stack for cloud FPGAs.
//!
//! The crate is `no_std` (with `alloc`) and contains everything that runs
//! "on the device" or inside one of the protocol actors:
//!
//! - [`crypto`]: hashing, AES-CTR, HMAC/PMAC, Ed25519 signatures, X25519
//!   exchange over the same keys, HKDF and a hybrid public-key envelope.
//! - [`trust_chain`]: manufacturer provisioning, the BootROM → firmware →
//!   Security Kernel boot chain and the port monitor.
//! - [`attestation`]: the three-party attestation and key-release protocol
//!   spoken over an untrusted proxy channel.
//! - [`shield`]: the memory/register protection engine that sits between an
//!   accelerator and untrusted device memory.
//! - [`sim_env`]: the untrusted world (tamperable DRAM, adversary actions,
//!   IV and leak trackers) and the throughput cost model.
//!
//! File formats, trace generation, scenario orchestration and the CLI live in
//! the `shef-sim` companion crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod attestation;
pub mod crypto;
pub mod shield;
pub mod sim_env;
pub mod trust_chain;

mod util;

pub use util::Hex;
