use alloc::vec::Vec;

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::{Aes128, Aes256};

use super::{CryptoError, Iv96, SymKey};

const BATCH: usize = 8;

/// AES block cipher keyed once and reused for counter-mode streams.
///
/// The counter block is `iv (12 B) || counter (4 B, big-endian)`.
#[derive(Clone)]
pub struct AesCtr {
    cipher: Cipher,
}

#[derive(Clone)]
enum Cipher {
    A128(Aes128),
    A256(Aes256),
}

impl AesCtr {
    pub fn new(key: &SymKey) -> Self {
        let cipher = match key {
            SymKey::K128(k) => Cipher::A128(Aes128::new(GenericArray::from_slice(k))),
            SymKey::K256(k) => Cipher::A256(Aes256::new(GenericArray::from_slice(k))),
        };
        Self { cipher }
    }

    pub(crate) fn encrypt_block(&self, block: &mut [u8; 16]) {
        let b = GenericArray::from_mut_slice(block);
        match &self.cipher {
            Cipher::A128(c) => c.encrypt_block(b),
            Cipher::A256(c) => c.encrypt_block(b),
        }
    }

    pub(crate) fn encrypt_blocks(&self, blocks: &mut [aes::Block]) {
        match &self.cipher {
            Cipher::A128(c) => c.encrypt_blocks(blocks),
            Cipher::A256(c) => c.encrypt_blocks(blocks),
        }
    }

    /// XORs the keystream starting at `block_offset` into `data`.
    pub fn apply(&self, iv: &Iv96, block_offset: u32, data: &mut [u8]) -> Result<(), CryptoError> {
        let blocks = data.len().div_ceil(16) as u64;
        if u64::from(block_offset) + blocks > 1 << 32 {
            return Err(CryptoError::CounterOverflow);
        }
        let mut counter = block_offset;
        let mut ks = [aes::Block::default(); BATCH];
        for piece in data.chunks_mut(16 * BATCH) {
            let n = piece.len().div_ceil(16);
            for b in ks.iter_mut().take(n) {
                b[..12].copy_from_slice(&iv.0);
                b[12..].copy_from_slice(&counter.to_be_bytes());
                // wraps only after the last block, which the check above allows
                counter = counter.wrapping_add(1);
            }
            self.encrypt_blocks(&mut ks[..n]);
            for (chunk, k) in piece.chunks_mut(16).zip(&ks) {
                for (d, s) in chunk.iter_mut().zip(k.iter()) {
                    *d ^= s;
                }
            }
        }
        Ok(())
    }
}

/// AES-CTR encryption (and decryption: the operation is an involution).
pub fn ctr_encrypt(
    key: &SymKey,
    iv: &Iv96,
    block_offset: u32,
    data: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    let mut out = data.to_vec();
    AesCtr::new(key).apply(iv, block_offset, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn involution() {
        let k = SymKey::K128([3; 16]);
        let iv = Iv96([5; 12]);
        let m: Vec<u8> = (0..=255).collect();
        let c = ctr_encrypt(&k, &iv, 0, &m).unwrap();
        assert_ne!(c, m);
        assert_eq!(ctr_encrypt(&k, &iv, 0, &c).unwrap(), m);
    }

    #[test]
    fn block_offset_consistency() {
        let k = SymKey::K256([1; 32]);
        let iv = Iv96([2; 12]);
        let m: Vec<u8> = (0..77).collect();
        let mut padded = vec![0u8; 32];
        padded.extend_from_slice(&m);
        let whole = ctr_encrypt(&k, &iv, 0, &padded).unwrap();
        assert_eq!(ctr_encrypt(&k, &iv, 2, &m).unwrap(), whole[32..]);
    }

    #[test]
    fn counter_overflow_is_reported() {
        let k = SymKey::K128([0; 16]);
        let iv = Iv96::default();
        assert!(ctr_encrypt(&k, &iv, u32::MAX, &[0; 16]).is_ok());
        assert_eq!(
            ctr_encrypt(&k, &iv, u32::MAX, &[0; 17]),
            Err(CryptoError::CounterOverflow)
        );
        assert!(ctr_encrypt(&k, &iv, u32::MAX, &[]).is_ok());
    }
}
