use alloc::vec::Vec;
use core::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand_core::{CryptoRng, RngCore};

use super::{kdf_into, mac_hmac_parts, AesCtr, CryptoError, Iv96, SymKey};
use crate::util::{ct_eq, Hex};

/// Largest payload accepted by [`asym_encrypt`].
pub const HYBRID_MAX_MESSAGE: usize = 4096;
/// Ephemeral public key plus tag.
pub const HYBRID_OVERHEAD: usize = 32 + 16;

const HYBRID_LABEL: &[u8] = b"shef/hybrid/v1";

/// Compressed Edwards25519 point. The same point, mapped to its Montgomery
/// form, serves as the X25519 exchange key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Whether the encoding decompresses to a point outside the small-order
    /// subgroup.
    pub fn is_valid(&self) -> bool {
        VerifyingKey::from_bytes(&self.0).is_ok_and(|vk| !vk.is_weak())
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", Hex(&self.0))
    }
}

/// Ed25519 secret seed with its expanded signing key.
#[derive(Clone)]
pub struct PrivateKey(SigningKey);

impl PrivateKey {
    /// The 32-byte seed this key was expanded from.
    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.0.verifying_key().to_bytes())
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

impl PartialEq for PrivateKey {
    fn eq(&self, other: &Self) -> bool {
        ct_eq(&self.0.to_bytes(), &other.0.to_bytes())
    }
}

impl Eq for PrivateKey {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub private: PrivateKey,
    pub public: PublicKey,
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        keypair_from_seed(&seed)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; 64]);

impl Signature {
    pub fn as_bytes(&self) -> &[u8; 64] {
        &self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", Hex(&self.0[..8]))
    }
}

/// Every 32-byte seed is a valid Ed25519 secret, so this never fails.
pub fn keypair_from_seed(seed: &[u8; 32]) -> KeyPair {
    let sk = SigningKey::from_bytes(seed);
    let public = PublicKey(sk.verifying_key().to_bytes());
    KeyPair { private: PrivateKey(sk), public }
}

/// Deterministic Ed25519 signature.
pub fn sign(private: &PrivateKey, msg: &[u8]) -> Signature {
    Signature(private.0.sign(msg).to_bytes())
}

/// Strict Ed25519 verification; any malformed input yields `false`.
pub fn verify(public: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify_strict(msg, &sig).is_ok()
}

/// X25519 over the Montgomery images of the Ed25519 keys.
///
/// Rejects public keys that fail to decode, lie in the small-order subgroup,
/// or produce the all-zero secret.
pub fn key_exchange(private: &PrivateKey, public: &PublicKey) -> Result<[u8; 32], CryptoError> {
    let vk = VerifyingKey::from_bytes(&public.0).map_err(|_| CryptoError::InvalidPublicKey)?;
    if vk.is_weak() {
        return Err(CryptoError::InvalidPublicKey);
    }
    let shared = vk.to_montgomery().mul_clamped(private.0.to_scalar_bytes()).to_bytes();
    if shared == [0u8; 32] {
        return Err(CryptoError::InvalidPublicKey);
    }
    Ok(shared)
}

fn hybrid_keys(shared: &[u8; 32], eph: &PublicKey, recipient: &PublicKey) -> (AesCtr, SymKey) {
    let mut info = [0u8; HYBRID_LABEL.len() + 64];
    info[..HYBRID_LABEL.len()].copy_from_slice(HYBRID_LABEL);
    info[HYBRID_LABEL.len()..][..32].copy_from_slice(&eph.0);
    info[HYBRID_LABEL.len() + 32..].copy_from_slice(&recipient.0);
    let mut okm = [0u8; 64];
    kdf_into(shared, &info, &mut okm).expect("64 bytes fit");
    let enc = SymKey::K256(okm[..32].try_into().expect("32 bytes"));
    let mac = SymKey::K256(okm[32..].try_into().expect("32 bytes"));
    (AesCtr::new(&enc), mac)
}

/// Hybrid public-key encryption: ephemeral exchange, HKDF, AES-256-CTR and a
/// truncated HMAC over `eph_pub || ciphertext`.
///
/// Output layout: `eph_pub (32) || ciphertext || tag (16)`.
pub fn asym_encrypt<R: RngCore + CryptoRng>(
    recipient: &PublicKey,
    msg: &[u8],
    rng: &mut R,
) -> Result<Vec<u8>, CryptoError> {
    if msg.len() > HYBRID_MAX_MESSAGE {
        return Err(CryptoError::MessageTooLong(msg.len()));
    }
    let eph = KeyPair::generate(rng);
    let shared = key_exchange(&eph.private, recipient)?;
    let (enc, mac) = hybrid_keys(&shared, &eph.public, recipient);
    let mut out = Vec::with_capacity(msg.len() + HYBRID_OVERHEAD);
    out.extend_from_slice(&eph.public.0);
    out.extend_from_slice(msg);
    // a fresh key per message, so a fixed IV is safe
    enc.apply(&Iv96::default(), 0, &mut out[32..])?;
    let tag = mac_hmac_parts(&mac, &[&out]);
    out.extend_from_slice(&tag.0);
    Ok(out)
}

pub fn asym_decrypt(private: &PrivateKey, ct: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ct.len() < HYBRID_OVERHEAD {
        return Err(CryptoError::Integrity);
    }
    let (body, tag) = ct.split_at(ct.len() - 16);
    let eph = PublicKey(body[..32].try_into().expect("32 bytes"));
    let shared = key_exchange(private, &eph).map_err(|_| CryptoError::Integrity)?;
    let (enc, mac) = hybrid_keys(&shared, &eph, &private.public());
    if !mac_hmac_parts(&mac, &[body]).ct_eq(&super::Tag16(tag.try_into().expect("16 bytes"))) {
        return Err(CryptoError::Integrity);
    }
    let mut pt = body[32..].to_vec();
    enc.apply(&Iv96::default(), 0, &mut pt)?;
    Ok(pt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sign_verify_and_tamper() {
        let kp = keypair_from_seed(&[1; 32]);
        let sig = sign(&kp.private, b"m");
        assert!(verify(&kp.public, b"m", &sig));
        assert!(!verify(&kp.public, b"m\x01", &sig));
        assert_eq!(sig, sign(&kp.private, b"m"));
    }

    #[test]
    fn exchange_is_symmetric() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..64 {
            let a = KeyPair::generate(&mut rng);
            let b = KeyPair::generate(&mut rng);
            let c = KeyPair::generate(&mut rng);
            let ab = key_exchange(&a.private, &b.public).unwrap();
            assert_eq!(ab, key_exchange(&b.private, &a.public).unwrap());
            assert_ne!(ab, key_exchange(&a.private, &c.public).unwrap());
        }
    }

    #[test]
    fn exchange_rejects_identity_and_garbage() {
        let a = keypair_from_seed(&[5; 32]);
        let mut identity = [0u8; 32];
        identity[0] = 1;
        assert_eq!(
            key_exchange(&a.private, &PublicKey(identity)),
            Err(CryptoError::InvalidPublicKey)
        );
        assert!(!PublicKey(identity).is_valid());
        // y = 2 is not on the curve
        let mut bogus = [0u8; 32];
        bogus[0] = 2;
        assert_eq!(key_exchange(&a.private, &PublicKey(bogus)), Err(CryptoError::InvalidPublicKey));
    }

    #[test]
    fn hybrid_round_trip_and_failures() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let r = KeyPair::generate(&mut rng);
        let other = KeyPair::generate(&mut rng);
        let msg = b"data encryption key material....";
        let ct = asym_encrypt(&r.public, msg, &mut rng).unwrap();
        assert_eq!(ct.len(), msg.len() + HYBRID_OVERHEAD);
        assert_eq!(asym_decrypt(&r.private, &ct).unwrap(), msg);
        assert_eq!(asym_decrypt(&other.private, &ct), Err(CryptoError::Integrity));
        for bit in 0..ct.len() * 8 {
            let mut bad = ct.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            assert_eq!(asym_decrypt(&r.private, &bad), Err(CryptoError::Integrity), "bit {bit}");
        }
        assert_eq!(
            asym_encrypt(&r.public, &[0; HYBRID_MAX_MESSAGE + 1], &mut rng),
            Err(CryptoError::MessageTooLong(HYBRID_MAX_MESSAGE + 1))
        );
    }
}
