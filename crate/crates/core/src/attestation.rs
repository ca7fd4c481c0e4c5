//! Three-party attestation and key release between the Security Kernel,
//! the IP Vendor and the Data Owner, spoken over an untrusted proxy.
//!
//! Every wire message is `tag (1) || session_id (8) || counter (8) || body`.
//! The challenge and the report travel in the clear with counter 0; later
//! messages are sealed under the session key with the header as associated
//! data.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};

use crate::crypto::{
    asym_decrypt, asym_encrypt, hash, hash_parts, kdf_into, key_exchange, keypair_from_seed,
    mac_hmac_parts, seal, sign, verify, AesCtr, CryptoError, Digest32, Iv96, KeyBits, KeyPair,
    PrivateKey, PublicKey, Signature, SymKey, Tag16,
};
use crate::shield::{ConfigError, ShieldConfig};
use crate::trust_chain::{verify_kernel_cert, CaRegistry, EventOrigin, PortEvent, SecurityKernelContext};
use crate::util::{put_lv, Reader};

pub const MSG_CHALLENGE: u8 = 1;
pub const MSG_REPORT: u8 = 2;
pub const MSG_KEY_RELEASE: u8 = 3;

pub const HEADER_LEN: usize = 1 + 8 + 8;

const BITSTREAM_AAD: &[u8] = b"shef-bitstream";

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum VerifyError {
    #[error("no challenge is outstanding")]
    NoOpenChallenge,
    #[error("report message is malformed")]
    Malformed,
    #[error("kernel certificate does not verify under any registered device key")]
    BadDeviceCert,
    #[error("kernel hash is not on the trusted list")]
    UnknownKernel,
    #[error("report signature does not verify under the attestation key")]
    BadReportSig,
    #[error("report nonce does not match the challenge")]
    NonceMismatch,
    #[error("attested bitstream hash differs from the expected one")]
    BitstreamMismatch,
    #[error("session key certificate does not verify")]
    BadSessionCert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ChannelError {
    #[error("malformed wire message")]
    Malformed,
    #[error("unexpected message type {0}")]
    UnexpectedType(u8),
    #[error("message belongs to another session")]
    WrongSession,
    #[error("stale counter {0}")]
    Stale(u64),
    #[error("sealed message failed authentication")]
    Integrity,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttestError {
    #[error("port monitor reports tampering; refusing to attest")]
    PortTampered,
    #[error("kernel has no established session")]
    NoSession,
    #[error("challenge carries an unusable verification key")]
    BadChallengeKey,
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("bitstream hash differs from the attested value")]
    BitstreamHashMismatch,
    #[error("bitstream failed authentication")]
    BitstreamAuth,
    #[error("bitstream payload is malformed")]
    BitstreamFormat,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("message was dropped in transit")]
    Dropped,
}

fn session_id(nonce: &[u8; 32]) -> [u8; 8] {
    hash_parts(&[b"sid", nonce]).0[..8].try_into().expect("8 bytes")
}

fn header(tag: u8, sid: &[u8; 8], counter: u64) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0] = tag;
    h[1..9].copy_from_slice(sid);
    h[9..].copy_from_slice(&counter.to_be_bytes());
    h
}

fn split_header(wire: &[u8]) -> Result<(u8, [u8; 8], u64, &[u8]), ChannelError> {
    let mut r = Reader::new(wire);
    let tag = r.u8().ok_or(ChannelError::Malformed)?;
    let sid = r.array::<8>().ok_or(ChannelError::Malformed)?;
    let counter = r.u64().ok_or(ChannelError::Malformed)?;
    Ok((tag, sid, counter, r.rest()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Challenge {
    pub nonce: [u8; 32],
    pub verif_public: PublicKey,
}

impl Challenge {
    pub fn to_wire(&self) -> Vec<u8> {
        let mut w = header(MSG_CHALLENGE, &session_id(&self.nonce), 0).to_vec();
        w.extend_from_slice(&self.nonce);
        w.extend_from_slice(&self.verif_public.0);
        w
    }

    pub fn from_wire(wire: &[u8]) -> Result<Self, ChannelError> {
        let (tag, sid, counter, body) = split_header(wire)?;
        if tag != MSG_CHALLENGE {
            return Err(ChannelError::UnexpectedType(tag));
        }
        if body.len() != 64 || counter != 0 {
            return Err(ChannelError::Malformed);
        }
        let nonce: [u8; 32] = body[..32].try_into().expect("32 bytes");
        if sid != session_id(&nonce) {
            return Err(ChannelError::WrongSession);
        }
        Ok(Self { nonce, verif_public: PublicKey(body[32..].try_into().expect("32 bytes")) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttestationReport {
    pub nonce: [u8; 32],
    pub enc_bitstream_hash: Digest32,
    pub attest_public: PublicKey,
    pub kernel_hash: Digest32,
    pub sigma_seckrnl: Signature,
}

impl AttestationReport {
    /// Length-prefixed fields in declaration order; this is what σ_α signs.
    pub fn canonical(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 * 4 + 64 + 20);
        put_lv(&mut out, &self.nonce);
        put_lv(&mut out, &self.enc_bitstream_hash.0);
        put_lv(&mut out, &self.attest_public.0);
        put_lv(&mut out, &self.kernel_hash.0);
        put_lv(&mut out, &self.sigma_seckrnl.0);
        out
    }

    fn decode(r: &mut Reader<'_>) -> Option<Self> {
        let mut field = |n: usize| r.lv().filter(|f| f.len() == n);
        Some(Self {
            nonce: field(32)?.try_into().ok()?,
            enc_bitstream_hash: Digest32(field(32)?.try_into().ok()?),
            attest_public: PublicKey(field(32)?.try_into().ok()?),
            kernel_hash: Digest32(field(32)?.try_into().ok()?),
            sigma_seckrnl: Signature(field(64)?.try_into().ok()?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportMessage {
    pub report: AttestationReport,
    pub sigma_alpha: Signature,
    pub sigma_session: Signature,
}

impl ReportMessage {
    pub fn to_wire(&self) -> Vec<u8> {
        let mut w = header(MSG_REPORT, &session_id(&self.report.nonce), 0).to_vec();
        put_lv(&mut w, &self.report.canonical());
        w.extend_from_slice(&self.sigma_alpha.0);
        w.extend_from_slice(&self.sigma_session.0);
        w
    }

    /// Decodes a report; the header must name the session of `nonce`.
    pub fn from_wire(wire: &[u8], nonce: &[u8; 32]) -> Result<Self, ChannelError> {
        let (tag, sid, counter, body) = split_header(wire)?;
        if tag != MSG_REPORT {
            return Err(ChannelError::UnexpectedType(tag));
        }
        if counter != 0 {
            return Err(ChannelError::Malformed);
        }
        if sid != session_id(nonce) {
            return Err(ChannelError::WrongSession);
        }
        let mut r = Reader::new(body);
        let mut inner = Reader::new(r.lv().ok_or(ChannelError::Malformed)?);
        let report = AttestationReport::decode(&mut inner).ok_or(ChannelError::Malformed)?;
        let sigma_alpha = Signature(r.array().ok_or(ChannelError::Malformed)?);
        let sigma_session = Signature(r.array().ok_or(ChannelError::Malformed)?);
        if !inner.is_empty() || !r.is_empty() {
            return Err(ChannelError::Malformed);
        }
        Ok(Self { report, sigma_alpha, sigma_session })
    }
}

/// Which side of the session this endpoint is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Peer {
    Vendor,
    Kernel,
}

impl Peer {
    fn direction_byte(self) -> u8 {
        match self {
            Self::Vendor => 1,
            Self::Kernel => 2,
        }
    }

    fn other(self) -> Self {
        match self {
            Self::Vendor => Self::Kernel,
            Self::Kernel => Self::Vendor,
        }
    }
}

/// One end of the sealed channel.
#[derive(Clone)]
pub struct Session {
    session_key: SymKey,
    enc: AesCtr,
    mac: SymKey,
    pub peer: Peer,
    pub session_id: [u8; 8],
    send_counter: u64,
    recv_counter: u64,
}

impl core::fmt::Debug for Session {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Session")
            .field("peer", &self.peer)
            .field("session_id", &crate::Hex(&self.session_id))
            .field("send_counter", &self.send_counter)
            .field("recv_counter", &self.recv_counter)
            .finish_non_exhaustive()
    }
}

impl Session {
    fn new(session_key: SymKey, peer: Peer, session_id: [u8; 8]) -> Self {
        let mut e = [0u8; 32];
        kdf_into(session_key.as_bytes(), b"channel-enc", &mut e).expect("fits");
        let mut m = [0u8; 32];
        kdf_into(session_key.as_bytes(), b"channel-mac", &mut m).expect("fits");
        Self {
            session_key,
            enc: AesCtr::new(&SymKey::K256(e)),
            mac: SymKey::K256(m),
            peer,
            session_id,
            send_counter: 0,
            recv_counter: 0,
        }
    }

    pub fn session_key(&self) -> &SymKey {
        &self.session_key
    }

    pub fn send_counter(&self) -> u64 {
        self.send_counter
    }

    pub fn recv_counter(&self) -> u64 {
        self.recv_counter
    }

    fn iv(sender: Peer, counter: u64) -> Iv96 {
        let mut iv = [0u8; 12];
        iv[0] = sender.direction_byte();
        iv[4..].copy_from_slice(&counter.to_be_bytes());
        Iv96(iv)
    }

    /// Seals `body` under the next send counter.
    pub fn seal_message(&mut self, tag: u8, body: &[u8]) -> Vec<u8> {
        self.send_counter += 1;
        let hdr = header(tag, &self.session_id, self.send_counter);
        let mut w = hdr.to_vec();
        w.extend_from_slice(body);
        self.enc.apply(&Self::iv(self.peer, self.send_counter), 0, &mut w[HEADER_LEN..]).expect("short message");
        let t = mac_hmac_parts(&self.mac, &[&w]);
        w.extend_from_slice(&t.0);
        w
    }

    /// Opens a sealed message from the peer. Counters at or below the last
    /// consumed one are rejected.
    pub fn open_message(&mut self, wire: &[u8], expected_tag: u8) -> Result<Vec<u8>, ChannelError> {
        if wire.len() < HEADER_LEN + 16 {
            return Err(ChannelError::Malformed);
        }
        let (body, t) = wire.split_at(wire.len() - 16);
        if !mac_hmac_parts(&self.mac, &[body]).ct_eq(&Tag16(t.try_into().expect("16 bytes"))) {
            return Err(ChannelError::Integrity);
        }
        let (tag, sid, counter, ct) = split_header(body)?;
        if sid != self.session_id {
            return Err(ChannelError::WrongSession);
        }
        if tag != expected_tag {
            return Err(ChannelError::UnexpectedType(tag));
        }
        if counter <= self.recv_counter {
            return Err(ChannelError::Stale(counter));
        }
        self.recv_counter = counter;
        let mut pt = ct.to_vec();
        self.enc.apply(&Self::iv(self.peer.other(), counter), 0, &mut pt).expect("short message");
        Ok(pt)
    }
}

fn derive_session_key(shared: &[u8; 32]) -> SymKey {
    let mut k = [0u8; 32];
    kdf_into(shared, b"session", &mut k).expect("fits");
    SymKey::K256(k)
}

/// Transcript hash certified by σ_SessionKey: the full challenge plus both
/// exchange public keys.
pub fn session_binding(ch: &Challenge, attest_public: &PublicKey) -> Digest32 {
    hash_parts(&[&ch.nonce, &ch.verif_public.0, &attest_public.0, &ch.verif_public.0])
}

/// The vendor-authored bitstream as shipped to the cloud.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedBitstream {
    pub ciphertext: Vec<u8>,
}

impl EncryptedBitstream {
    pub fn hash(&self) -> Digest32 {
        hash(&self.ciphertext)
    }
}

/// What a bitstream carries once decrypted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitstreamPayload {
    pub descriptor: Vec<u8>,
    pub shield_key_seed: [u8; 32],
    pub config: ShieldConfig,
}

impl BitstreamPayload {
    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_lv(&mut out, &self.descriptor);
        out.extend_from_slice(&self.shield_key_seed);
        put_lv(&mut out, &self.config.to_bytes());
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self, AttestError> {
        let mut r = Reader::new(bytes);
        let descriptor = r.lv().ok_or(AttestError::BitstreamFormat)?.to_vec();
        let shield_key_seed = r.array().ok_or(AttestError::BitstreamFormat)?;
        let config = ShieldConfig::from_bytes(r.lv().ok_or(AttestError::BitstreamFormat)?)?;
        if !r.is_empty() {
            return Err(AttestError::BitstreamFormat);
        }
        Ok(Self { descriptor, shield_key_seed, config })
    }
}

/// Vendor-side bitstream build: encrypts the payload under `bitstr_key`.
pub fn build_bitstream<R: RngCore + CryptoRng>(
    bitstr_key: &SymKey,
    payload: &BitstreamPayload,
    rng: &mut R,
) -> EncryptedBitstream {
    let mut iv = [0u8; 12];
    rng.fill_bytes(&mut iv);
    EncryptedBitstream { ciphertext: seal(bitstr_key, &Iv96(iv), BITSTREAM_AAD, &payload.encode()) }
}

/// IP Vendor state: at most one outstanding challenge.
#[derive(Debug, Default)]
pub struct IpVendor {
    open: Option<(Challenge, KeyPair)>,
}

impl IpVendor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open_challenge(&self) -> Option<&Challenge> {
        self.open.as_ref().map(|(c, _)| c)
    }

    /// Starts a session: fresh nonce and verification key pair.
    pub fn begin<R: RngCore + CryptoRng>(&mut self, rng: &mut R) -> Challenge {
        let mut nonce = [0u8; 32];
        rng.fill_bytes(&mut nonce);
        let verif = KeyPair::generate(rng);
        let ch = Challenge { nonce, verif_public: verif.public };
        self.open = Some((ch, verif));
        ch
    }

    /// Runs the six checks in order and reports the first failure. On
    /// success the challenge is consumed, so the same report cannot be
    /// accepted twice.
    pub fn verify(
        &mut self,
        msg: &ReportMessage,
        registry: &CaRegistry,
        expected_bitstream_hash: &Digest32,
    ) -> Result<Session, VerifyError> {
        let (ch, verif) = self.open.as_ref().ok_or(VerifyError::NoOpenChallenge)?;
        let rep = &msg.report;
        if !registry
            .devices()
            .any(|(_, dk)| verify_kernel_cert(dk, &rep.kernel_hash, &rep.attest_public, &rep.sigma_seckrnl))
        {
            return Err(VerifyError::BadDeviceCert);
        }
        if !registry.is_trusted_kernel(&rep.kernel_hash) {
            return Err(VerifyError::UnknownKernel);
        }
        if !verify(&rep.attest_public, &rep.canonical(), &msg.sigma_alpha) {
            return Err(VerifyError::BadReportSig);
        }
        if rep.nonce != ch.nonce {
            return Err(VerifyError::NonceMismatch);
        }
        if rep.enc_bitstream_hash != *expected_bitstream_hash {
            return Err(VerifyError::BitstreamMismatch);
        }
        let shared = key_exchange(&verif.private, &rep.attest_public).map_err(|_| VerifyError::BadSessionCert)?;
        if !verify(&rep.attest_public, &session_binding(ch, &rep.attest_public).0, &msg.sigma_session) {
            return Err(VerifyError::BadSessionCert);
        }
        let session = Session::new(derive_session_key(&shared), Peer::Vendor, session_id(&ch.nonce));
        self.open = None;
        Ok(session)
    }
}

pub fn vendor_begin<R: RngCore + CryptoRng>(vendor: &mut IpVendor, rng: &mut R) -> Challenge {
    vendor.begin(rng)
}

pub fn vendor_verify(
    vendor: &mut IpVendor,
    msg: &ReportMessage,
    registry: &CaRegistry,
    expected_bitstream_hash: &Digest32,
) -> Result<Session, VerifyError> {
    vendor.verify(msg, registry, expected_bitstream_hash)
}

/// Sends the bitstream key over the established session.
pub fn vendor_release_key(session: &mut Session, bitstr_key: &SymKey) -> Vec<u8> {
    let mut body = Vec::with_capacity(33);
    body.push(bitstr_key.as_bytes().len() as u8);
    body.extend_from_slice(bitstr_key.as_bytes());
    session.seal_message(MSG_KEY_RELEASE, &body)
}

/// Kernel-side session state: the channel plus the bitstream hash it
/// attested to.
#[derive(Debug, Clone)]
pub struct KernelSession {
    pub session: Session,
    pub attested_bitstream: Digest32,
}

pub fn kernel_attest(
    ctx: &SecurityKernelContext,
    ch: &Challenge,
    enc_bs: &EncryptedBitstream,
) -> Result<(ReportMessage, KernelSession), AttestError> {
    if !ctx.port.is_clean() {
        return Err(AttestError::PortTampered);
    }
    let attest = &ctx.attest_keypair;
    let shared = key_exchange(&attest.private, &ch.verif_public).map_err(|_| AttestError::BadChallengeKey)?;
    let report = AttestationReport {
        nonce: ch.nonce,
        enc_bitstream_hash: enc_bs.hash(),
        attest_public: attest.public,
        kernel_hash: ctx.kernel_hash,
        sigma_seckrnl: ctx.sigma_seckrnl,
    };
    let sigma_alpha = sign(&attest.private, &report.canonical());
    let sigma_session = sign(&attest.private, &session_binding(ch, &attest.public).0);
    let session = Session::new(derive_session_key(&shared), Peer::Kernel, session_id(&ch.nonce));
    Ok((
        ReportMessage { report, sigma_alpha, sigma_session },
        KernelSession { session, attested_bitstream: report.enc_bitstream_hash },
    ))
}

/// A bitstream loaded into the fabric, with its Shield parameters.
#[derive(Debug, Clone)]
pub struct LoadedAccelerator {
    pub descriptor: Vec<u8>,
    pub shield_key: KeyPair,
    pub config: ShieldConfig,
}

pub fn kernel_load_bitstream(
    ctx: &mut SecurityKernelContext,
    ks: &mut KernelSession,
    sealed_key_msg: &[u8],
    enc_bs: &EncryptedBitstream,
) -> Result<LoadedAccelerator, AttestError> {
    let body = ks.session.open_message(sealed_key_msg, MSG_KEY_RELEASE)?;
    let bitstr_key = match body.split_first() {
        Some((&n, k)) if usize::from(n) == k.len() => SymKey::from_slice(k).map_err(|_| ChannelError::Malformed)?,
        _ => return Err(ChannelError::Malformed.into()),
    };
    if enc_bs.hash() != ks.attested_bitstream {
        return Err(AttestError::BitstreamHashMismatch);
    }
    let plain = crate::crypto::open(&bitstr_key, BITSTREAM_AAD, &enc_bs.ciphertext).map_err(|_| AttestError::BitstreamAuth)?;
    let payload = BitstreamPayload::decode(&plain)?;
    ctx.port.observe(PortEvent::PartialReconfig, EventOrigin::Kernel);
    Ok(LoadedAccelerator {
        descriptor: payload.descriptor,
        shield_key: keypair_from_seed(&payload.shield_key_seed),
        config: payload.config,
    })
}

/// The Data Encryption Key sealed to the Shield's public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadKeyEnvelope {
    pub ciphertext: Vec<u8>,
}

/// Data Owner: draws a fresh 256-bit Data Encryption Key and wraps it.
pub fn owner_provision<R: RngCore + CryptoRng>(
    shield_public: &PublicKey,
    rng: &mut R,
) -> Result<(SymKey, LoadKeyEnvelope), CryptoError> {
    let dek = SymKey::random(rng, KeyBits::B256);
    let ciphertext = asym_encrypt(shield_public, dek.as_bytes(), rng)?;
    Ok((dek, LoadKeyEnvelope { ciphertext }))
}

/// Shield side: recovers the Data Encryption Key from a Load Key.
pub fn shield_unwrap(shield_private: &PrivateKey, env: &LoadKeyEnvelope) -> Result<SymKey, CryptoError> {
    let k = asym_decrypt(shield_private, &env.ciphertext)?;
    SymKey::from_slice(&k).map_err(|_| CryptoError::Integrity)
}

/// Adversarial behaviour applied by the proxy to one message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProxyAction {
    Deliver,
    Drop,
    /// XOR `mask` into the byte at `offset` (modulo the message length).
    Modify { offset: usize, mask: u8 },
    /// Deliver an earlier message (by send index) instead.
    ReplayFrom(usize),
    /// Swap delivery order with the next message.
    HoldForReorder,
}

/// The untrusted host program relaying every protocol message. Keeps a
/// transcript of everything it saw and can be scripted per message.
#[derive(Debug, Clone, Default)]
pub struct ProxyChannel {
    transcript: Vec<Vec<u8>>,
    queue: VecDeque<Vec<u8>>,
    held: Option<Vec<u8>>,
    script: Vec<(usize, ProxyAction)>,
}

impl ProxyChannel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schedules `action` for the `index`-th message sent (0-based).
    pub fn on_message(&mut self, index: usize, action: ProxyAction) {
        self.script.push((index, action));
    }

    pub fn transcript(&self) -> &[Vec<u8>] {
        &self.transcript
    }

    pub fn send(&mut self, msg: Vec<u8>) {
        let index = self.transcript.len();
        self.transcript.push(msg.clone());
        let action = self.script.iter().find(|(i, _)| *i == index).map(|(_, a)| a.clone()).unwrap_or(ProxyAction::Deliver);
        let out = match action {
            ProxyAction::Deliver => Some(msg),
            ProxyAction::Drop => None,
            ProxyAction::Modify { offset, mask } => {
                let mut m = msg;
                if !m.is_empty() {
                    let at = offset % m.len();
                    m[at] ^= mask;
                }
                Some(m)
            }
            ProxyAction::ReplayFrom(i) => Some(self.transcript.get(i).cloned().unwrap_or(msg)),
            ProxyAction::HoldForReorder => {
                self.held = Some(msg);
                None
            }
        };
        if let Some(m) = out {
            self.queue.push_back(m);
        }
        if action_released(&self.held, index, &self.script) {
            if let Some(h) = self.held.take() {
                self.queue.push_back(h);
            }
        }
    }

    /// Next delivered message; `None` models a timeout.
    pub fn recv(&mut self) -> Option<Vec<u8>> {
        if self.queue.is_empty() {
            // a held message is released once nothing else is pending
            return self.held.take();
        }
        self.queue.pop_front()
    }
}

fn action_released(held: &Option<Vec<u8>>, index: usize, script: &[(usize, ProxyAction)]) -> bool {
    held.is_some() && !script.iter().any(|(i, a)| *i == index && *a == ProxyAction::HoldForReorder)
}

/// Result of a full attestation and key-release exchange.
#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub vendor_session: Session,
    pub kernel_session: KernelSession,
    pub accelerator: LoadedAccelerator,
}

/// Drives challenge → report → key release through `channel`, stopping at
/// the first failure.
pub fn run_attestation<R: RngCore + CryptoRng>(
    ctx: &mut SecurityKernelContext,
    vendor: &mut IpVendor,
    registry: &CaRegistry,
    bitstream: &EncryptedBitstream,
    expected_hash: &Digest32,
    bitstr_key: &SymKey,
    channel: &mut ProxyChannel,
    rng: &mut R,
) -> Result<ProtocolOutcome, AttestError> {
    let ch = vendor.begin(rng);
    channel.send(ch.to_wire());
    let ch_seen = Challenge::from_wire(&channel.recv().ok_or(AttestError::Dropped)?)?;
    let (report, mut ks) = kernel_attest(ctx, &ch_seen, bitstream)?;
    channel.send(report.to_wire());
    let report_seen = ReportMessage::from_wire(&channel.recv().ok_or(AttestError::Dropped)?, &ch.nonce)?;
    let mut vs = vendor.verify(&report_seen, registry, expected_hash)?;
    channel.send(vendor_release_key(&mut vs, bitstr_key));
    let release = channel.recv().ok_or(AttestError::Dropped)?;
    let accelerator = kernel_load_bitstream(ctx, &mut ks, &release, bitstream)?;
    Ok(ProtocolOutcome { vendor_session: vs, kernel_session: ks, accelerator })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proxy_reorder_and_replay() {
        let mut p = ProxyChannel::new();
        p.on_message(0, ProxyAction::HoldForReorder);
        p.on_message(2, ProxyAction::ReplayFrom(0));
        p.send(alloc::vec![0]);
        p.send(alloc::vec![1]);
        p.send(alloc::vec![2]);
        assert_eq!(p.recv(), Some(alloc::vec![1]));
        assert_eq!(p.recv(), Some(alloc::vec![0]));
        assert_eq!(p.recv(), Some(alloc::vec![0]));
        assert_eq!(p.recv(), None);
        assert_eq!(p.transcript().len(), 3);
    }
}
