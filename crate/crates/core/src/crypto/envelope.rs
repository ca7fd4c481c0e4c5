//! Symmetric encrypt-then-MAC envelope used for firmware, bitstreams and the
//! sealed attestation channel.

use alloc::vec::Vec;

use super::{kdf_into, mac_hmac_parts, AesCtr, CryptoError, Iv96, SymKey, Tag16};

/// IV prefix plus tag suffix.
pub const ENVELOPE_OVERHEAD: usize = 12 + 16;

fn subkeys(key: &SymKey) -> (AesCtr, SymKey) {
    let mut enc = [0u8; 32];
    let width = key.as_bytes().len();
    kdf_into(key.as_bytes(), b"shef/envelope/enc", &mut enc[..width]).expect("fits");
    let mut mac = [0u8; 32];
    kdf_into(key.as_bytes(), b"shef/envelope/mac", &mut mac).expect("fits");
    let enc = SymKey::from_slice(&enc[..width]).expect("same width as input key");
    (AesCtr::new(&enc), SymKey::K256(mac))
}

fn tag(mac: &SymKey, aad: &[u8], iv: &[u8], ct: &[u8]) -> Tag16 {
    mac_hmac_parts(mac, &[&(aad.len() as u64).to_be_bytes(), aad, iv, ct])
}

/// Encrypts `plaintext` and authenticates it together with `aad`.
///
/// Layout: `iv (12) || ciphertext || tag (16)`. The caller owns IV
/// uniqueness per key.
pub fn seal(key: &SymKey, iv: &Iv96, aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    let (enc, mac) = subkeys(key);
    let mut out = Vec::with_capacity(plaintext.len() + ENVELOPE_OVERHEAD);
    out.extend_from_slice(&iv.0);
    out.extend_from_slice(plaintext);
    enc.apply(iv, 0, &mut out[12..]).expect("envelopes are far below 64 GiB");
    let t = tag(&mac, aad, &out[..12], &out[12..]);
    out.extend_from_slice(&t.0);
    out
}

pub fn open(key: &SymKey, aad: &[u8], sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if sealed.len() < ENVELOPE_OVERHEAD {
        return Err(CryptoError::Integrity);
    }
    let (body, t) = sealed.split_at(sealed.len() - 16);
    let (iv, ct) = body.split_at(12);
    let (enc, mac) = subkeys(key);
    if !tag(&mac, aad, iv, ct).ct_eq(&Tag16(t.try_into().expect("16 bytes"))) {
        return Err(CryptoError::Integrity);
    }
    let mut pt = ct.to_vec();
    enc.apply(&Iv96(iv.try_into().expect("12 bytes")), 0, &mut pt)?;
    Ok(pt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_rejections() {
        let k = SymKey::K256([8; 32]);
        let iv = Iv96([1; 12]);
        let s = seal(&k, &iv, b"hdr", b"payload");
        assert_eq!(open(&k, b"hdr", &s).unwrap(), b"payload");
        assert_eq!(open(&k, b"hdx", &s), Err(CryptoError::Integrity));
        assert_eq!(open(&SymKey::K256([9; 32]), b"hdr", &s), Err(CryptoError::Integrity));
        assert_eq!(open(&k, b"hdr", &s[..10]), Err(CryptoError::Integrity));
        for i in 0..s.len() {
            let mut bad = s.clone();
            bad[i] ^= 0x10;
            assert!(open(&k, b"hdr", &bad).is_err());
        }
    }

    #[test]
    fn ciphertext_hides_plaintext() {
        let k = SymKey::K128([8; 16]);
        let pt = [0x5au8; 64];
        let s = seal(&k, &Iv96([0; 12]), b"", &pt);
        assert!(!s.windows(16).any(|w| w == &pt[..16]));
    }
}
