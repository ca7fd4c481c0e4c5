//! Known-answer tests against the files in `vectors/` plus cross-checks with
//! independent implementations (`ctr`, `pmac` crates).

use ctr::cipher::{KeyIvInit, StreamCipher};
use proptest::prelude::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use shef_core::crypto::*;

fn rows(file: &str) -> Vec<Vec<Vec<u8>>> {
    let path = format!("{}/vectors/{file}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            l.split_whitespace()
                .skip(1)
                .map(|f| if f == "-" { vec![] } else { hex::decode(f).unwrap() })
                .collect()
        })
        .collect()
}

fn be_u32(b: &[u8]) -> u32 {
    b.iter().fold(0, |acc, x| acc << 8 | u32::from(*x))
}

#[test]
fn sha256_known_answers() {
    let r = rows("sha256.txt");
    assert!(r.len() >= 10);
    for row in r {
        assert_eq!(hash(&row[0]).0.to_vec(), row[1]);
    }
}

#[test]
fn aes_ctr_known_answers() {
    for row in rows("aes_ctr.txt") {
        let key = SymKey::from_slice(&row[0]).unwrap();
        let iv = Iv96(row[1].clone().try_into().unwrap());
        let out = ctr_encrypt(&key, &iv, be_u32(&row[2]), &row[3]).unwrap();
        assert_eq!(out, row[4]);
    }
}

fn reference_ctr(key: &SymKey, iv: &Iv96, pt: &[u8]) -> Vec<u8> {
    let mut nonce = [0u8; 16];
    nonce[..12].copy_from_slice(&iv.0);
    let mut buf = pt.to_vec();
    match key {
        SymKey::K128(k) => ctr::Ctr32BE::<aes::Aes128>::new(k.into(), &nonce.into()).apply_keystream(&mut buf),
        SymKey::K256(k) => ctr::Ctr32BE::<aes::Aes256>::new(k.into(), &nonce.into()).apply_keystream(&mut buf),
    }
    buf
}

#[test]
fn ctr_keystream_matches_reference_crate() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for i in 0..500 {
        let key = SymKey::random(&mut rng, if i % 2 == 0 { KeyBits::B128 } else { KeyBits::B256 });
        let mut iv = [0u8; 12];
        rng.fill_bytes(&mut iv);
        let iv = Iv96(iv);
        let keystream = ctr_encrypt(&key, &iv, 0, &[0u8; 32]).unwrap();
        assert_eq!(keystream, reference_ctr(&key, &iv, &[0u8; 32]));
        let mut m = vec![0u8; (rng.next_u32() % 700) as usize];
        rng.fill_bytes(&mut m);
        assert_eq!(ctr_encrypt(&key, &iv, 0, &m).unwrap(), reference_ctr(&key, &iv, &m));
    }
}

#[test]
fn hmac_known_answers() {
    for row in rows("hmac_sha256_128.txt") {
        let key = SymKey::from_slice(&row[0]).unwrap();
        assert_eq!(mac_hmac(&key, &row[1]).0.to_vec(), row[2]);
    }
}

#[test]
fn hmac_key_sensitivity_randomized() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut m = [0u8; 48];
    for _ in 0..10_000 {
        rng.fill_bytes(&mut m);
        let k1 = SymKey::random(&mut rng, KeyBits::B256);
        let k2 = SymKey::random(&mut rng, KeyBits::B256);
        assert_ne!(mac_hmac(&k1, &m), mac_hmac(&k2, &m));
    }
}

#[test]
fn pmac_known_answers() {
    let r = rows("pmac_aes.txt");
    assert_eq!(
        hex::encode(r[0][2].clone()),
        "4399572cd6ea5341b8d35876a7098af7",
        "published PMAC-AES-128 empty-message tag"
    );
    for row in r {
        let key = SymKey::from_slice(&row[0]).unwrap();
        assert_eq!(mac_pmac(&key, &row[1]).0.to_vec(), row[2]);
    }
}

#[test]
fn pmac_matches_reference_crate() {
    use pmac::Mac;
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for len in 0..300usize {
        let key = SymKey::random(&mut rng, if len % 3 == 0 { KeyBits::B256 } else { KeyBits::B128 });
        let mut m = vec![0u8; len];
        rng.fill_bytes(&mut m);
        let reference: Vec<u8> = match &key {
            SymKey::K128(k) => {
                let mut p = <pmac::Pmac<aes::Aes128> as Mac>::new_from_slice(k).unwrap();
                p.update(&m);
                p.finalize().into_bytes().to_vec()
            }
            SymKey::K256(k) => {
                let mut p = <pmac::Pmac<aes::Aes256> as Mac>::new_from_slice(k).unwrap();
                p.update(&m);
                p.finalize().into_bytes().to_vec()
            }
        };
        assert_eq!(mac_pmac(&key, &m).0.to_vec(), reference, "len {len}");
    }
}

#[test]
fn pmac_is_position_dependent() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let key = SymKey::random(&mut rng, KeyBits::B128);
        let mut m = [0u8; 16 * 6];
        rng.fill_bytes(&mut m);
        let i = (rng.next_u32() % 5) as usize;
        let j = (i + 1 + (rng.next_u32() % (4 - i as u32 + 1)) as usize).min(5);
        if i == j {
            continue;
        }
        let mut swapped = m;
        let (a, b) = (m[16 * i..16 * i + 16].to_vec(), m[16 * j..16 * j + 16].to_vec());
        swapped[16 * i..16 * i + 16].copy_from_slice(&b);
        swapped[16 * j..16 * j + 16].copy_from_slice(&a);
        assert_ne!(mac_pmac(&key, &m), mac_pmac(&key, &swapped));
    }
}

#[test]
fn hkdf_known_answers() {
    for row in rows("hkdf_sha256.txt") {
        let len = row[2].iter().fold(0usize, |acc, x| acc << 8 | usize::from(*x));
        assert_eq!(kdf(&row[0], &row[1], len).unwrap(), row[3]);
    }
}

#[test]
fn ed25519_known_answers() {
    for row in rows("ed25519.txt") {
        let kp = keypair_from_seed(&row[0].clone().try_into().unwrap());
        assert_eq!(kp.public.0.to_vec(), row[2][..32]);
        let sig = sign(&kp.private, &row[1]);
        assert_eq!(sig.0.to_vec(), row[2][32..]);
        assert!(verify(&kp.public, &row[1], &sig));
    }
}

#[test]
fn keypairs_from_distinct_seeds_differ() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..2_000 {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let kp = keypair_from_seed(&seed);
        assert_eq!(kp, keypair_from_seed(&seed));
        assert!(seen.insert(kp.public));
        assert!(verify(&kp.public, b"usable", &sign(&kp.private, b"usable")));
    }
}

/// MACs and signatures must reject every single-bit perturbation of the
/// message, key or tag.
#[test]
fn single_bit_perturbations_are_rejected() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let signer = keypair_from_seed(&[0x33; 32]);
    for trial in 0..10_000u32 {
        let mut m = vec![0u8; 1 + (rng.next_u32() % 96) as usize];
        rng.fill_bytes(&mut m);
        let key = SymKey::random(&mut rng, KeyBits::B256);
        let bit = (rng.next_u32() as usize) % (m.len() * 8);
        let mut m2 = m.clone();
        m2[bit / 8] ^= 1 << (bit % 8);
        let mut kb = key.as_bytes().to_vec();
        kb[(bit / 8) % 32] ^= 1 << (bit % 8);
        let key2 = SymKey::from_slice(&kb).unwrap();
        let tbit = (rng.next_u32() % 128) as usize;

        for mac in [mac_hmac as fn(&SymKey, &[u8]) -> Tag16, mac_pmac] {
            let t = mac(&key, &m);
            assert_ne!(mac(&key, &m2), t);
            assert_ne!(mac(&key2, &m), t);
            let mut t2 = t;
            t2.0[tbit / 8] ^= 1 << (tbit % 8);
            assert!(!t2.ct_eq(&mac(&key, &m)));
        }
        if trial % 10 == 0 {
            let sig = sign(&signer.private, &m);
            assert!(!verify(&signer.public, &m2, &sig));
            let mut sig2 = sig;
            sig2.0[(bit / 8) % 64] ^= 1 << (bit % 8);
            assert!(!verify(&signer.public, &m, &sig2));
        }
    }
}

proptest! {
    #[test]
    fn ctr_is_an_involution(key in prop::array::uniform32(any::<u8>()), iv in prop::array::uniform12(any::<u8>()),
                            off in 0u32..1000, data in prop::collection::vec(any::<u8>(), 0..600)) {
        let key = SymKey::K256(key);
        let iv = Iv96(iv);
        let once = ctr_encrypt(&key, &iv, off, &data).unwrap();
        prop_assert_eq!(ctr_encrypt(&key, &iv, off, &once).unwrap(), data);
    }

    #[test]
    fn pmac_split_combine(key in prop::array::uniform16(any::<u8>()), data in prop::collection::vec(any::<u8>(), 0..400), split in 0usize..30) {
        let p = Pmac::new(&SymKey::K128(key));
        let (body, last) = Pmac::split(&data);
        let k = split.min(body.len() / 16);
        let l = p.partial_sum(1, &body[..16 * k]);
        let r = p.partial_sum(k as u64 + 1, &body[16 * k..]);
        let mut sum = [0u8; 16];
        for i in 0..16 { sum[i] = l[i] ^ r[i]; }
        prop_assert_eq!(p.finalize(sum, last), p.mac(&data));
    }
}
