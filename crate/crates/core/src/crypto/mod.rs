//! Cryptographic primitives shared by every actor and by the Shield.
//!
//! All functions are pure: given the same inputs they return the same bytes.
//! Randomness only enters through an explicit [`rand_core::RngCore`] argument.

mod asym;
mod ctr;
mod envelope;
mod mac;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use hkdf::Hkdf;
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256};

use crate::util::Hex;

pub use asym::{
    asym_decrypt, asym_encrypt, key_exchange, keypair_from_seed, sign, verify, KeyPair,
    PrivateKey, PublicKey, Signature, HYBRID_MAX_MESSAGE, HYBRID_OVERHEAD,
};
pub use ctr::{ctr_encrypt, AesCtr};
pub use envelope::{open, seal, ENVELOPE_OVERHEAD};
pub use mac::{mac_hmac, mac_hmac_parts, mac_pmac, Pmac};

/// Largest output HKDF-SHA-256 can produce (255 hash blocks).
pub const KDF_MAX_OUTPUT: usize = 255 * 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("symmetric key must be 16 or 32 bytes, got {0}")]
    KeyLength(usize),
    #[error("CTR block counter would overflow")]
    CounterOverflow,
    #[error("kdf output of {0} bytes exceeds {KDF_MAX_OUTPUT}")]
    KdfLength(usize),
    #[error("invalid or low-order public key")]
    InvalidPublicKey,
    #[error("authentication failed")]
    Integrity,
    #[error("message of {0} bytes exceeds the hybrid encryption limit")]
    MessageTooLong(usize),
}

/// SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({})", Hex(&self.0))
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&Hex(&self.0), f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KeyBits {
    B128,
    B256,
}

impl KeyBits {
    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            128 => Some(Self::B128),
            256 => Some(Self::B256),
            _ => None,
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            Self::B128 => 128,
            Self::B256 => 256,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() as usize / 8
    }
}

/// A 128- or 256-bit symmetric key. Used for AES and as HMAC/PMAC key.
#[derive(Clone, PartialEq, Eq)]
pub enum SymKey {
    K128([u8; 16]),
    K256([u8; 32]),
}

impl SymKey {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        match bytes.len() {
            16 => Ok(Self::K128(bytes.try_into().expect("length checked"))),
            32 => Ok(Self::K256(bytes.try_into().expect("length checked"))),
            n => Err(CryptoError::KeyLength(n)),
        }
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R, bits: KeyBits) -> Self {
        let mut buf = [0u8; 32];
        rng.fill_bytes(&mut buf[..bits.bytes()]);
        Self::from_slice(&buf[..bits.bytes()]).expect("valid length")
    }

    /// Derives a key of the requested width from `ikm` under `label`.
    pub fn derive(ikm: &[u8], label: &[u8], bits: KeyBits) -> Self {
        let mut buf = [0u8; 32];
        kdf_into(ikm, label, &mut buf[..bits.bytes()]).expect("fits HKDF output");
        Self::from_slice(&buf[..bits.bytes()]).expect("valid length")
    }

    pub fn as_bytes(&self) -> &[u8] {
        match self {
            Self::K128(k) => k,
            Self::K256(k) => k,
        }
    }

    pub fn bits(&self) -> KeyBits {
        match self {
            Self::K128(_) => KeyBits::B128,
            Self::K256(_) => KeyBits::B256,
        }
    }
}

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymKey<{}>(..)", self.bits().bits())
    }
}

/// 96-bit CTR initialization vector; the 32-bit block counter follows it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Iv96(pub [u8; 12]);

impl fmt::Debug for Iv96 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Iv96({})", Hex(&self.0))
    }
}

/// Truncated 128-bit MAC tag.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Tag16(pub [u8; 16]);

impl Tag16 {
    /// Comparison whose timing does not depend on where the tags differ.
    pub fn ct_eq(&self, other: &Tag16) -> bool {
        crate::util::ct_eq(&self.0, &other.0)
    }
}

impl fmt::Debug for Tag16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tag16({})", Hex(&self.0))
    }
}

pub fn hash(msg: &[u8]) -> Digest32 {
    Digest32(Sha256::digest(msg).into())
}

/// Hash over several parts without concatenating them first.
pub fn hash_parts(parts: &[&[u8]]) -> Digest32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest32(h.finalize().into())
}

/// HKDF-SHA-256 with an empty salt.
pub fn kdf(ikm: &[u8], info: &[u8], out_len: usize) -> Result<Vec<u8>, CryptoError> {
    let mut out = vec![0u8; out_len];
    kdf_into(ikm, info, &mut out)?;
    Ok(out)
}

pub fn kdf_into(ikm: &[u8], info: &[u8], out: &mut [u8]) -> Result<(), CryptoError> {
    Hkdf::<Sha256>::new(None, ikm)
        .expand(info, out)
        .map_err(|_| CryptoError::KdfLength(out.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn hash_is_deterministic_and_suffix_sensitive() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let mut m = [0u8; 65];
            rng.fill_bytes(&mut m[..64]);
            assert_eq!(hash(&m[..64]), hash(&m[..64]));
            assert_ne!(hash(&m[..64]), hash(&m));
        }
    }

    #[test]
    fn hash_parts_matches_concatenation() {
        assert_eq!(hash_parts(&[b"ab", b"", b"cd"]), hash(b"abcd"));
    }

    #[test]
    fn kdf_labels_separate() {
        let s = [9u8; 32];
        assert_eq!(kdf(&s, b"attest", 32), kdf(&s, b"attest", 32));
        assert_ne!(kdf(&s, b"attest", 32).unwrap(), kdf(&s, b"session", 32).unwrap());
    }

    #[test]
    fn kdf_rejects_oversized_output() {
        assert!(kdf(b"k", b"i", KDF_MAX_OUTPUT).is_ok());
        assert_eq!(
            kdf(b"k", b"i", KDF_MAX_OUTPUT + 1),
            Err(CryptoError::KdfLength(KDF_MAX_OUTPUT + 1))
        );
    }

    #[test]
    fn symkey_length_checks() {
        assert!(SymKey::from_slice(&[0; 16]).is_ok());
        assert!(SymKey::from_slice(&[0; 32]).is_ok());
        assert_eq!(SymKey::from_slice(&[0; 24]), Err(CryptoError::KeyLength(24)));
        assert_eq!(SymKey::derive(b"x", b"y", KeyBits::B128).as_bytes().len(), 16);
    }
}
