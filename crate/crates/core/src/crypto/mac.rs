use hmac::{Hmac, Mac};
use sha2::Sha256;

use super::{AesCtr, SymKey, Tag16};

type HmacSha256 = Hmac<Sha256>;

/// HMAC-SHA-256 truncated to its leading 16 bytes.
pub fn mac_hmac(key: &SymKey, msg: &[u8]) -> Tag16 {
    mac_hmac_parts(key, &[msg])
}

/// [`mac_hmac`] over the concatenation of `parts`.
pub fn mac_hmac_parts(key: &SymKey, parts: &[&[u8]]) -> Tag16 {
    let mut mac = HmacSha256::new_from_slice(key.as_bytes()).expect("HMAC accepts any key length");
    for p in parts {
        mac.update(p);
    }
    let full = mac.finalize().into_bytes();
    let mut tag = [0u8; 16];
    tag.copy_from_slice(&full[..16]);
    Tag16(tag)
}

/// PMAC over AES, keyed once.
///
/// Full blocks contribute `E_K(M_i ^ offset_i)` to an XOR accumulator, where
/// `offset_i` is the Gray-code combination of the doubled `L = E_K(0)` values.
/// Because offsets can be computed for any index directly, disjoint block
/// ranges can be processed independently ([`Pmac::partial_sum`]) and merged
/// by XOR before [`Pmac::finalize`].
#[derive(Clone)]
pub struct Pmac {
    cipher: AesCtr,
    /// `L * x^j` for j in 0..64.
    l: [[u8; 16]; 64],
    l_inv: [u8; 16],
}

impl Pmac {
    pub fn new(key: &SymKey) -> Self {
        let cipher = AesCtr::new(key);
        let mut l0 = [0u8; 16];
        cipher.encrypt_block(&mut l0);
        let mut l = [[0u8; 16]; 64];
        l[0] = l0;
        for j in 1..64 {
            l[j] = dbl(&l[j - 1]);
        }
        Self { cipher, l, l_inv: inv_dbl(&l0) }
    }

    fn offset_at(&self, index: u64) -> [u8; 16] {
        let gray = index ^ (index >> 1);
        let mut off = [0u8; 16];
        for j in 0..64 {
            if gray >> j & 1 == 1 {
                xor(&mut off, &self.l[j]);
            }
        }
        off
    }

    /// XOR-sum of the enciphered, offset-masked full blocks in `blocks`, the
    /// first of which sits at 1-based position `first_index` in the message.
    pub fn partial_sum(&self, first_index: u64, blocks: &[u8]) -> [u8; 16] {
        assert!(first_index >= 1, "block positions are 1-based");
        assert!(blocks.len() % 16 == 0, "partial sums take whole blocks");
        let mut sum = [0u8; 16];
        if blocks.is_empty() {
            return sum;
        }
        let mut offset = self.offset_at(first_index);
        let mut index = first_index;
        let mut batch = [aes::Block::default(); 8];
        for group in blocks.chunks(16 * 8) {
            let n = group.len() / 16;
            for (slot, block) in batch.iter_mut().zip(group.chunks_exact(16)) {
                if index != first_index {
                    xor(&mut offset, &self.l[index.trailing_zeros() as usize]);
                }
                for (s, (m, o)) in slot.iter_mut().zip(block.iter().zip(&offset)) {
                    *s = m ^ o;
                }
                index += 1;
            }
            self.cipher.encrypt_blocks(&mut batch[..n]);
            for b in &batch[..n] {
                xor(&mut sum, b.as_slice().try_into().expect("16-byte block"));
            }
        }
        sum
    }

    /// Folds in the final (possibly partial, possibly empty) block and
    /// produces the tag.
    pub fn finalize(&self, mut sum: [u8; 16], last: &[u8]) -> Tag16 {
        assert!(last.len() <= 16);
        if last.len() == 16 {
            xor(&mut sum, last.try_into().expect("16 bytes"));
            xor(&mut sum, &self.l_inv);
        } else {
            for (s, m) in sum.iter_mut().zip(last) {
                *s ^= m;
            }
            sum[last.len()] ^= 0x80;
        }
        self.cipher.encrypt_block(&mut sum);
        Tag16(sum)
    }

    /// Splits `msg` into the full-block prefix handled by
    /// [`Pmac::partial_sum`] and the final block handled by
    /// [`Pmac::finalize`].
    pub fn split(msg: &[u8]) -> (&[u8], &[u8]) {
        if msg.is_empty() {
            return (msg, msg);
        }
        let last_len = match msg.len() % 16 {
            0 => 16,
            r => r,
        };
        msg.split_at(msg.len() - last_len)
    }

    pub fn mac(&self, msg: &[u8]) -> Tag16 {
        let (body, last) = Self::split(msg);
        self.finalize(self.partial_sum(1, body), last)
    }
}

pub fn mac_pmac(key: &SymKey, msg: &[u8]) -> Tag16 {
    Pmac::new(key).mac(msg)
}

fn xor(a: &mut [u8; 16], b: &[u8; 16]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x ^= y;
    }
}

/// Multiplication by x in GF(2^128) with the x^128 + x^7 + x^2 + x + 1 modulus.
fn dbl(v: &[u8; 16]) -> [u8; 16] {
    let n = u128::from_be_bytes(*v);
    let r = (n << 1) ^ if n >> 127 == 1 { 0x87 } else { 0 };
    r.to_be_bytes()
}

fn inv_dbl(v: &[u8; 16]) -> [u8; 16] {
    let n = u128::from_be_bytes(*v);
    let r = if n & 1 == 1 { ((n ^ 0x87) >> 1) | 1 << 127 } else { n >> 1 };
    r.to_be_bytes()
}
