//! Sealed register interface between the untrusted host and the
//! accelerator's plaintext register file.
//!
//! Envelope: `addr (4) || seq (8) || ct (7) || tag (16)`. The plaintext is
//! `op (1) || index (2) || value (4)`. In plain-address mode `addr` is the
//! register index; in encrypted-address mode it is always
//! [`REG_MAILBOX_ADDR`]. Each direction carries its own strictly increasing
//! sequence number.

use alloc::vec::Vec;

use super::RegisterMode;
use crate::crypto::{kdf_into, mac_hmac_parts, AesCtr, Iv96, SymKey, Tag16};
use crate::sim_env::{subkey_id, IvTracker, RegisterStats};
use crate::util::Reader;

/// Common destination address used in encrypted-address mode.
pub const REG_MAILBOX_ADDR: u32 = 0xFFFF_FFFF;
pub const REG_PLAINTEXT_LEN: usize = 7;
pub const REG_ENVELOPE_LEN: usize = 4 + 8 + REG_PLAINTEXT_LEN + 16;

const DIR_TO_SHIELD: u8 = 1;
const DIR_TO_HOST: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegOp {
    Write = 1,
    ReadRequest = 2,
    ReadResponse = 3,
}

impl RegOp {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Self::Write),
            2 => Some(Self::ReadRequest),
            3 => Some(Self::ReadResponse),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum RegisterError {
    #[error("malformed register envelope")]
    Malformed,
    #[error("envelope address does not match the register mode")]
    WrongAddress,
    #[error("stale sequence number {0}")]
    Stale(u64),
    #[error("register envelope failed authentication")]
    Auth,
    #[error("register index {0} out of range")]
    Index(u16),
    #[error("unexpected register operation")]
    BadOp,
}

/// A decoded, authenticated envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegMessage {
    pub seq: u64,
    pub op: RegOp,
    pub index: u16,
    pub value: u32,
}

#[derive(Clone)]
pub(crate) struct RegisterKeys {
    enc: AesCtr,
    enc_id: u64,
    mac: SymKey,
}

impl RegisterKeys {
    pub(crate) fn derive(dek: &SymKey) -> Self {
        let mut e = [0u8; 32];
        kdf_into(dek.as_bytes(), b"reg-enc", &mut e).expect("fits");
        let mut m = [0u8; 32];
        kdf_into(dek.as_bytes(), b"reg-mac", &mut m).expect("fits");
        let enc = SymKey::K256(e);
        Self { enc_id: subkey_id(&enc), enc: AesCtr::new(&enc), mac: SymKey::K256(m) }
    }

    fn iv(dir: u8, seq: u64) -> Iv96 {
        let mut iv = [0u8; 12];
        iv[0] = dir;
        iv[4..].copy_from_slice(&seq.to_be_bytes());
        Iv96(iv)
    }

    fn seal(&self, dir: u8, mode: RegisterMode, msg: &RegMessage, tracker: Option<&mut IvTracker>) -> Vec<u8> {
        let addr = match mode {
            RegisterMode::PlainAddress => u32::from(msg.index),
            RegisterMode::EncryptedAddress => REG_MAILBOX_ADDR,
        };
        let mut out = Vec::with_capacity(REG_ENVELOPE_LEN);
        out.extend_from_slice(&addr.to_be_bytes());
        out.extend_from_slice(&msg.seq.to_be_bytes());
        out.push(msg.op as u8);
        out.extend_from_slice(&msg.index.to_be_bytes());
        out.extend_from_slice(&msg.value.to_be_bytes());
        let iv = Self::iv(dir, msg.seq);
        if let Some(t) = tracker {
            t.record(self.enc_id, iv);
        }
        self.enc.apply(&iv, 0, &mut out[12..]).expect("one block");
        let tag = mac_hmac_parts(&self.mac, &[&[dir], &out]);
        out.extend_from_slice(&tag.0);
        out
    }

    fn open(&self, dir: u8, mode: RegisterMode, env: &[u8]) -> Result<RegMessage, RegisterError> {
        if env.len() != REG_ENVELOPE_LEN {
            return Err(RegisterError::Malformed);
        }
        let (body, tag) = env.split_at(REG_ENVELOPE_LEN - 16);
        let expected = mac_hmac_parts(&self.mac, &[&[dir], body]);
        if !expected.ct_eq(&Tag16(tag.try_into().expect("16 bytes"))) {
            return Err(RegisterError::Auth);
        }
        let mut r = Reader::new(body);
        let addr = r.u32().ok_or(RegisterError::Malformed)?;
        let seq = r.u64().ok_or(RegisterError::Malformed)?;
        let mut pt: [u8; REG_PLAINTEXT_LEN] = r.array().ok_or(RegisterError::Malformed)?;
        self.enc.apply(&Self::iv(dir, seq), 0, &mut pt).expect("one block");
        let mut p = Reader::new(&pt);
        let op = RegOp::from_byte(p.u8().expect("7 bytes")).ok_or(RegisterError::BadOp)?;
        let index = p.u16().expect("7 bytes");
        let value = p.u32().expect("7 bytes");
        let addr_ok = match mode {
            RegisterMode::PlainAddress => addr == u32::from(index),
            RegisterMode::EncryptedAddress => addr == REG_MAILBOX_ADDR,
        };
        if !addr_ok {
            return Err(RegisterError::WrongAddress);
        }
        Ok(RegMessage { seq, op, index, value })
    }
}

/// Accelerator-side register file with the Shield's anti-replay state.
#[derive(Clone)]
pub struct RegisterFile {
    regs: Vec<u32>,
    mode: RegisterMode,
    keys: RegisterKeys,
    last_in: u64,
    out_seq: u64,
    pub(crate) stats: RegisterStats,
}

impl RegisterFile {
    pub(crate) fn new(count: u16, mode: RegisterMode, dek: &SymKey) -> Self {
        Self {
            regs: alloc::vec![0; count as usize],
            mode,
            keys: RegisterKeys::derive(dek),
            last_in: 0,
            out_seq: 0,
            stats: RegisterStats::default(),
        }
    }

    fn note(&mut self, ok: bool) {
        self.stats.ops += 1;
        self.stats.wire_bytes += REG_ENVELOPE_LEN as u64;
        self.stats.aes_bytes += REG_PLAINTEXT_LEN as u64;
        self.stats.mac_bytes += 1 + (REG_ENVELOPE_LEN - 16) as u64;
        if !ok {
            self.stats.rejected += 1;
        }
    }

    fn accept(&mut self, env: &[u8], want: RegOp) -> Result<RegMessage, RegisterError> {
        let msg = self.keys.open(DIR_TO_SHIELD, self.mode, env)?;
        if msg.seq <= self.last_in {
            return Err(RegisterError::Stale(msg.seq));
        }
        if msg.op != want {
            return Err(RegisterError::BadOp);
        }
        if usize::from(msg.index) >= self.regs.len() {
            return Err(RegisterError::Index(msg.index));
        }
        self.last_in = msg.seq;
        Ok(msg)
    }

    pub(crate) fn host_write(&mut self, env: &[u8]) -> Result<(), RegisterError> {
        let r = self.accept(env, RegOp::Write);
        self.note(r.is_ok());
        let msg = r?;
        self.regs[usize::from(msg.index)] = msg.value;
        Ok(())
    }

    pub(crate) fn host_read(&mut self, request: &[u8], tracker: &mut IvTracker) -> Result<Vec<u8>, RegisterError> {
        let r = self.accept(request, RegOp::ReadRequest);
        self.note(r.is_ok());
        let msg = r?;
        self.out_seq += 1;
        let resp = RegMessage {
            seq: self.out_seq,
            op: RegOp::ReadResponse,
            index: msg.index,
            value: self.regs[usize::from(msg.index)],
        };
        self.note(true);
        Ok(self.keys.seal(DIR_TO_HOST, self.mode, &resp, Some(tracker)))
    }

    pub(crate) fn accel_read(&self, index: u16) -> Result<u32, RegisterError> {
        self.regs.get(usize::from(index)).copied().ok_or(RegisterError::Index(index))
    }

    pub(crate) fn accel_write(&mut self, index: u16, value: u32) -> Result<(), RegisterError> {
        let slot = self.regs.get_mut(usize::from(index)).ok_or(RegisterError::Index(index))?;
        *slot = value;
        Ok(())
    }
}

/// Host-side endpoint holding the register keys (derived from the same Data
/// Encryption Key the data owner provisioned).
#[derive(Clone)]
pub struct RegisterClient {
    keys: RegisterKeys,
    mode: RegisterMode,
    out_seq: u64,
    last_in: u64,
}

impl RegisterClient {
    pub fn new(dek: &SymKey, mode: RegisterMode) -> Self {
        Self { keys: RegisterKeys::derive(dek), mode, out_seq: 0, last_in: 0 }
    }

    fn envelope(&mut self, op: RegOp, index: u16, value: u32) -> Vec<u8> {
        self.out_seq += 1;
        let msg = RegMessage { seq: self.out_seq, op, index, value };
        self.keys.seal(DIR_TO_SHIELD, self.mode, &msg, None)
    }

    pub fn write(&mut self, index: u16, value: u32) -> Vec<u8> {
        self.envelope(RegOp::Write, index, value)
    }

    pub fn read_request(&mut self, index: u16) -> Vec<u8> {
        self.envelope(RegOp::ReadRequest, index, 0)
    }

    /// Opens a read response, returning `(index, value)`.
    pub fn open_response(&mut self, env: &[u8]) -> Result<(u16, u32), RegisterError> {
        let msg = self.keys.open(DIR_TO_HOST, self.mode, env)?;
        if msg.seq <= self.last_in {
            return Err(RegisterError::Stale(msg.seq));
        }
        if msg.op != RegOp::ReadResponse {
            return Err(RegisterError::BadOp);
        }
        self.last_in = msg.seq;
        Ok((msg.index, msg.value))
    }
}
