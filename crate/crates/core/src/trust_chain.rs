//! Manufacturer provisioning, the BootROM → firmware → Security Kernel boot
//! chain, and the port monitor the kernel runs after boot.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};

use crate::crypto::{
    self, hash, kdf_into, keypair_from_seed, sign, verify, Digest32, Iv96, KeyBits, KeyPair,
    PrivateKey, PublicKey, Signature, SymKey,
};
use crate::util::Reader;

/// Version stamped into freshly provisioned firmware.
pub const FIRMWARE_VERSION: u32 = 1;

const FIRMWARE_AAD: &[u8] = b"shef-firmware";
const ATTEST_SEED_LABEL: &[u8] = b"attest-seed";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BootError {
    #[error("device serial {0} is already registered")]
    DuplicateSerial(u64),
    #[error("firmware failed to authenticate; boot halted")]
    FirmwareAuth,
    #[error("firmware payload is malformed")]
    FirmwareFormat,
    #[error("kernel image is empty")]
    EmptyKernel,
}

/// What the manufacturer burns into one device.
#[derive(Clone, Debug)]
pub struct DeviceIdentity {
    pub serial: u64,
    pub aes_device_key: SymKey,
    pub device_public: PublicKey,
    /// Firmware image sealed under `aes_device_key`; carries the device
    /// private key.
    pub encrypted_firmware: Vec<u8>,
}

/// Decrypted SPB firmware.
#[derive(Clone, Debug)]
pub struct Firmware {
    pub(crate) device_key: PrivateKey,
    pub version: u32,
}

impl Firmware {
    pub fn device_public(&self) -> PublicKey {
        self.device_key.public()
    }
}

/// Public certificate registry: device keys by serial, plus the list of
/// Security Kernel hashes vendors are willing to trust. Entries are never
/// removed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CaRegistry {
    devices: BTreeMap<u64, PublicKey>,
    trusted_kernels: BTreeSet<Digest32>,
}

impl CaRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_device(&mut self, serial: u64, public: PublicKey) -> Result<(), BootError> {
        if self.devices.contains_key(&serial) {
            return Err(BootError::DuplicateSerial(serial));
        }
        self.devices.insert(serial, public);
        Ok(())
    }

    pub fn lookup(&self, serial: u64) -> Option<&PublicKey> {
        self.devices.get(&serial)
    }

    pub fn devices(&self) -> impl Iterator<Item = (u64, &PublicKey)> {
        self.devices.iter().map(|(s, k)| (*s, k))
    }

    pub fn trust_kernel(&mut self, kernel_hash: Digest32) {
        self.trusted_kernels.insert(kernel_hash);
    }

    pub fn is_trusted_kernel(&self, kernel_hash: &Digest32) -> bool {
        self.trusted_kernels.contains(kernel_hash)
    }
}

fn firmware_aad(serial: u64) -> [u8; FIRMWARE_AAD.len() + 8] {
    let mut aad = [0u8; FIRMWARE_AAD.len() + 8];
    aad[..FIRMWARE_AAD.len()].copy_from_slice(FIRMWARE_AAD);
    aad[FIRMWARE_AAD.len()..].copy_from_slice(&serial.to_be_bytes());
    aad
}

/// Provisions a fresh device and registers its public key.
pub fn provision_device<R: RngCore + CryptoRng>(
    registry: &mut CaRegistry,
    serial: u64,
    rng: &mut R,
) -> Result<DeviceIdentity, BootError> {
    if registry.lookup(serial).is_some() {
        return Err(BootError::DuplicateSerial(serial));
    }
    let aes_device_key = SymKey::random(rng, KeyBits::B256);
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let mut iv = [0u8; 12];
    rng.fill_bytes(&mut iv);
    let identity = provision_from_parts(serial, aes_device_key, &seed, Iv96(iv));
    registry.register_device(serial, identity.device_public)?;
    Ok(identity)
}

/// Deterministic provisioning from explicit key material; the device key
/// pair is expanded from `device_seed`.
pub fn provision_from_parts(
    serial: u64,
    aes_device_key: SymKey,
    device_seed: &[u8; 32],
    iv: Iv96,
) -> DeviceIdentity {
    let device = keypair_from_seed(device_seed);
    let mut payload = Vec::with_capacity(36);
    payload.extend_from_slice(&FIRMWARE_VERSION.to_be_bytes());
    payload.extend_from_slice(device_seed);
    let encrypted_firmware = crypto::seal(&aes_device_key, &iv, &firmware_aad(serial), &payload);
    DeviceIdentity { serial, aes_device_key, device_public: device.public, encrypted_firmware }
}

/// BootROM step: decrypt and authenticate the firmware with `candidate_key`.
pub fn boot_rom_load(identity: &DeviceIdentity, candidate_key: &SymKey) -> Result<Firmware, BootError> {
    let payload = crypto::open(candidate_key, &firmware_aad(identity.serial), &identity.encrypted_firmware)
        .map_err(|_| BootError::FirmwareAuth)?;
    let mut r = Reader::new(&payload);
    let version = r.u32().ok_or(BootError::FirmwareFormat)?;
    let seed: [u8; 32] = r.array().ok_or(BootError::FirmwareFormat)?;
    if !r.is_empty() {
        return Err(BootError::FirmwareFormat);
    }
    Ok(Firmware { device_key: keypair_from_seed(&seed).private, version })
}

/// Message signed by the device key to certify a kernel's attestation key.
pub fn kernel_cert_message(kernel_hash: &Digest32, attest_public: &PublicKey) -> [u8; 64] {
    let mut m = [0u8; 64];
    m[..32].copy_from_slice(&kernel_hash.0);
    m[32..].copy_from_slice(&attest_public.0);
    m
}

/// Security Kernel state after a successful boot.
#[derive(Clone, Debug)]
pub struct SecurityKernelContext {
    pub kernel_hash: Digest32,
    pub attest_keypair: KeyPair,
    pub sigma_seckrnl: Signature,
    pub device_public: PublicKey,
    pub port: PortMonitorState,
}

/// Firmware step: measure the kernel and derive its attestation key.
///
/// For a soft-processor kernel, pass the kernel binary followed by the
/// processor's partial bitstream as one image.
pub fn firmware_boot_kernel(fw: &Firmware, kernel_image: &[u8]) -> Result<SecurityKernelContext, BootError> {
    if kernel_image.is_empty() {
        return Err(BootError::EmptyKernel);
    }
    let kernel_hash = hash(kernel_image);
    let attest_keypair = derive_attest_keypair(&fw.device_key, &kernel_hash);
    let sigma_seckrnl = sign(&fw.device_key, &kernel_cert_message(&kernel_hash, &attest_keypair.public));
    Ok(SecurityKernelContext {
        kernel_hash,
        attest_keypair,
        sigma_seckrnl,
        device_public: fw.device_public(),
        port: PortMonitorState::default(),
    })
}

/// The signed kernel hash goes through the KDF before seeding the key pair.
pub fn derive_attest_keypair(device_key: &PrivateKey, kernel_hash: &Digest32) -> KeyPair {
    let signed = sign(device_key, &kernel_hash.0);
    let mut seed = [0u8; 32];
    kdf_into(&signed.0, ATTEST_SEED_LABEL, &mut seed).expect("32 bytes fit");
    keypair_from_seed(&seed)
}

/// Checks a kernel certificate against a device public key.
pub fn verify_kernel_cert(
    device_public: &PublicKey,
    kernel_hash: &Digest32,
    attest_public: &PublicKey,
    sigma: &Signature,
) -> bool {
    verify(device_public, &kernel_cert_message(kernel_hash, attest_public), sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortEvent {
    JtagAccess,
    IcapWrite,
    PartialReconfig,
}

/// Who initiated a programming-port event. Only the kernel's own bitstream
/// loader counts as authorized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventOrigin {
    Kernel,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PortState {
    #[default]
    Clean,
    Tampered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortLogEntry {
    pub event: PortEvent,
    pub origin: EventOrigin,
    /// Logical time: position in the boot session's event sequence.
    pub at: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PortMonitorState {
    state: PortState,
    log: Vec<PortLogEntry>,
}

impl PortMonitorState {
    pub fn state(&self) -> PortState {
        self.state
    }

    pub fn is_clean(&self) -> bool {
        self.state == PortState::Clean
    }

    pub fn log(&self) -> &[PortLogEntry] {
        &self.log
    }

    /// Records an event; the state only ever moves Clean → Tampered.
    pub fn observe(&mut self, event: PortEvent, origin: EventOrigin) -> PortState {
        let at = self.log.len() as u64;
        self.log.push(PortLogEntry { event, origin, at });
        let tampering = match event {
            PortEvent::JtagAccess => true,
            PortEvent::IcapWrite | PortEvent::PartialReconfig => origin == EventOrigin::External,
        };
        if tampering {
            self.state = PortState::Tampered;
        }
        self.state
    }
}

pub fn monitor_event(ctx: &mut SecurityKernelContext, event: PortEvent, origin: EventOrigin) -> PortState {
    ctx.port.observe(event, origin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn device(serial: u64) -> (CaRegistry, DeviceIdentity) {
        let mut reg = CaRegistry::new();
        let mut rng = ChaCha20Rng::seed_from_u64(serial);
        let id = provision_device(&mut reg, serial, &mut rng).unwrap();
        (reg, id)
    }

    #[test]
    fn provision_and_boot() {
        let (mut reg, id) = device(7);
        let fw = boot_rom_load(&id, &id.aes_device_key).unwrap();
        assert_eq!(fw.version, FIRMWARE_VERSION);
        assert_eq!(reg.lookup(7), Some(&fw.device_public()));
        let sig = sign(&fw.device_key, b"hello");
        assert!(verify(reg.lookup(7).unwrap(), b"hello", &sig));
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert_eq!(provision_device(&mut reg, 7, &mut rng).unwrap_err(), BootError::DuplicateSerial(7));
    }

    #[test]
    fn boot_fails_closed() {
        let (_, id) = device(1);
        let wrong = SymKey::K256([0xee; 32]);
        assert_eq!(boot_rom_load(&id, &wrong).unwrap_err(), BootError::FirmwareAuth);
        for bit in 0..id.encrypted_firmware.len() * 8 {
            let mut bad = id.clone();
            bad.encrypted_firmware[bit / 8] ^= 1 << (bit % 8);
            assert_eq!(boot_rom_load(&bad, &id.aes_device_key).unwrap_err(), BootError::FirmwareAuth);
        }
        // firmware is bound to its serial
        let mut moved = id.clone();
        moved.serial = 2;
        assert!(boot_rom_load(&moved, &id.aes_device_key).is_err());
    }

    #[test]
    fn kernel_boot_is_deterministic_and_certified() {
        let (_, id) = device(3);
        let fw = boot_rom_load(&id, &id.aes_device_key).unwrap();
        let a = firmware_boot_kernel(&fw, b"kernel v1").unwrap();
        let b = firmware_boot_kernel(&fw, b"kernel v1").unwrap();
        assert_eq!(a.attest_keypair, b.attest_keypair);
        assert_eq!(a.sigma_seckrnl, b.sigma_seckrnl);
        assert!(verify_kernel_cert(&id.device_public, &a.kernel_hash, &a.attest_keypair.public, &a.sigma_seckrnl));
        let c = firmware_boot_kernel(&fw, b"kernel v2").unwrap();
        assert_ne!(a.attest_keypair.public, c.attest_keypair.public);
        assert_eq!(firmware_boot_kernel(&fw, b"").unwrap_err(), BootError::EmptyKernel);
        assert!(a.port.is_clean());
    }

    #[test]
    fn port_monitor_latches() {
        let mut p = PortMonitorState::default();
        assert_eq!(p.observe(PortEvent::PartialReconfig, EventOrigin::Kernel), PortState::Clean);
        assert_eq!(p.observe(PortEvent::IcapWrite, EventOrigin::Kernel), PortState::Clean);
        assert_eq!(p.observe(PortEvent::IcapWrite, EventOrigin::External), PortState::Tampered);
        assert_eq!(p.observe(PortEvent::PartialReconfig, EventOrigin::Kernel), PortState::Tampered);
        assert_eq!(p.log().len(), 4);
        assert_eq!(p.log()[2].at, 2);

        let mut q = PortMonitorState::default();
        assert_eq!(q.observe(PortEvent::JtagAccess, EventOrigin::Kernel), PortState::Tampered);
    }
}
