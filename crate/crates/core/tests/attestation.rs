mod common;

use common::{mixed_config, rng};
use rand_chacha::ChaCha20Rng;
use shef_core::attestation::*;
use shef_core::crypto::{keypair_from_seed, Digest32, Iv96, KeyBits, Signature, SymKey};
use shef_core::sim_env::LeakScanner;
use shef_core::trust_chain::*;

const DEVICE_SEED: [u8; 32] = [0x11; 32];
const KERNEL: &[u8] = b"security kernel image v1";

struct World {
    registry: CaRegistry,
    ctx: SecurityKernelContext,
    vendor: IpVendor,
    bitstream: EncryptedBitstream,
    other_bitstream: EncryptedBitstream,
    bitstr_key: SymKey,
    payload: BitstreamPayload,
    rng: ChaCha20Rng,
}

fn world(seed: u64) -> World {
    let mut rng = rng(seed);
    let id = provision_from_parts(5, SymKey::K256([0x22; 32]), &DEVICE_SEED, Iv96([0; 12]));
    let mut registry = CaRegistry::new();
    registry.register_device(5, id.device_public).unwrap();
    for s in 6..10 {
        provision_device(&mut registry, s, &mut rng).unwrap();
    }
    registry.trust_kernel(shef_core::crypto::hash(KERNEL));
    let fw = boot_rom_load(&id, &id.aes_device_key).unwrap();
    let ctx = firmware_boot_kernel(&fw, KERNEL).unwrap();
    let bitstr_key = SymKey::random(&mut rng, KeyBits::B256);
    let payload = BitstreamPayload { descriptor: b"vector-add accelerator".to_vec(), shield_key_seed: [0x33; 32], config: mixed_config() };
    let bitstream = build_bitstream(&bitstr_key, &payload, &mut rng);
    let mut other = payload.clone();
    other.descriptor = b"something else".to_vec();
    let other_bitstream = build_bitstream(&bitstr_key, &other, &mut rng);
    World { registry, ctx, vendor: IpVendor::new(), bitstream, other_bitstream, bitstr_key, payload, rng }
}

fn run(w: &mut World, channel: &mut ProxyChannel) -> Result<ProtocolOutcome, AttestError> {
    let hash = w.bitstream.hash();
    run_attestation(&mut w.ctx, &mut w.vendor, &w.registry, &w.bitstream, &hash, &w.bitstr_key, channel, &mut w.rng)
}

fn secrets(w: &World, out: Option<&ProtocolOutcome>) -> LeakScanner {
    let mut s = LeakScanner::new();
    s.add_key(w.bitstr_key.as_bytes());
    s.add_key(&keypair_from_seed(&DEVICE_SEED).private.to_bytes());
    s.add_key(&w.ctx.attest_keypair.private.to_bytes());
    s.add_key(&keypair_from_seed(&w.payload.shield_key_seed).private.to_bytes());
    s.add_key(&w.payload.shield_key_seed);
    s.add_plaintext(&w.payload.descriptor);
    if let Some(o) = out {
        s.add_key(o.vendor_session.session_key().as_bytes());
    }
    s
}

#[test]
fn honest_run_agrees_on_keys_and_loads_the_accelerator() {
    let mut w = world(1);
    let mut ch = ProxyChannel::new();
    let out = run(&mut w, &mut ch).unwrap();
    assert_eq!(out.vendor_session.session_key(), out.kernel_session.session.session_key());
    assert_eq!(out.accelerator.config, w.payload.config);
    assert_eq!(out.accelerator.descriptor, w.payload.descriptor);
    assert_eq!(out.accelerator.shield_key, keypair_from_seed(&w.payload.shield_key_seed));
    assert!(w.ctx.port.is_clean());
    assert_eq!(w.ctx.port.log().last().map(|e| (e.event, e.origin)), Some((PortEvent::PartialReconfig, EventOrigin::Kernel)));

    let (dek, load_key) = owner_provision(&out.accelerator.shield_key.public, &mut w.rng).unwrap();
    assert_eq!(shield_unwrap(&out.accelerator.shield_key.private, &load_key).unwrap(), dek);
    let stranger = keypair_from_seed(&[0x44; 32]);
    assert!(shield_unwrap(&stranger.private, &load_key).is_err());
    let (dek2, _) = owner_provision(&out.accelerator.shield_key.public, &mut w.rng).unwrap();
    assert_ne!(dek, dek2);

    let mut scan = secrets(&w, Some(&out));
    scan.add_key(dek.as_bytes());
    for m in ch.transcript().iter().chain([&load_key.ciphertext]) {
        assert!(scan.scan(m).is_empty());
    }
}

/// Every single-field mutation of the report, both signatures, a replayed
/// report and a swapped bitstream, each against a fresh challenge.
#[test]
fn report_mutations_are_rejected_with_the_matching_error() {
    type Mutation = (&'static str, fn(&mut ReportMessage), VerifyError);
    fn flip32(b: &mut [u8; 32]) {
        b[7] ^= 0x20;
    }
    fn flip64(s: &mut Signature) {
        s.0[40] ^= 0x01;
    }
    let mutations: [Mutation; 7] = [
        ("nonce", |m| flip32(&mut m.report.nonce), VerifyError::BadReportSig),
        ("enc_bitstream_hash", |m| flip32(&mut m.report.enc_bitstream_hash.0), VerifyError::BadReportSig),
        ("attest_public", |m| m.report.attest_public = keypair_from_seed(&[9; 32]).public, VerifyError::BadDeviceCert),
        ("kernel_hash", |m| flip32(&mut m.report.kernel_hash.0), VerifyError::BadDeviceCert),
        ("sigma_seckrnl", |m| flip64(&mut m.report.sigma_seckrnl), VerifyError::BadDeviceCert),
        ("sigma_alpha", |m| flip64(&mut m.sigma_alpha), VerifyError::BadReportSig),
        ("sigma_session", |m| flip64(&mut m.sigma_session), VerifyError::BadSessionCert),
    ];
    let mut rejected = 0;
    for (name, mutate, expected) in mutations {
        let mut w = world(2);
        let ch = w.vendor.begin(&mut w.rng);
        let (mut msg, _) = kernel_attest(&w.ctx, &ch, &w.bitstream).unwrap();
        mutate(&mut msg);
        let got = w.vendor.verify(&msg, &w.registry, &w.bitstream.hash());
        assert_eq!(got.unwrap_err(), expected, "{name}");
        rejected += 1;
    }

    let mut w = world(3);
    let old = w.vendor.begin(&mut w.rng);
    let (old_msg, _) = kernel_attest(&w.ctx, &old, &w.bitstream).unwrap();
    w.vendor.verify(&old_msg, &w.registry, &w.bitstream.hash()).unwrap();
    w.vendor.begin(&mut w.rng);
    assert_eq!(w.vendor.verify(&old_msg, &w.registry, &w.bitstream.hash()).unwrap_err(), VerifyError::NonceMismatch);
    rejected += 1;

    let mut w = world(4);
    let ch = w.vendor.begin(&mut w.rng);
    let (msg, _) = kernel_attest(&w.ctx, &ch, &w.other_bitstream).unwrap();
    assert_eq!(w.vendor.verify(&msg, &w.registry, &w.bitstream.hash()).unwrap_err(), VerifyError::BitstreamMismatch);
    rejected += 1;
    assert_eq!(rejected, 9);
}

#[test]
fn untrusted_kernel_is_rejected() {
    let mut w = world(5);
    let mut registry = CaRegistry::new();
    for (s, pk) in w.registry.devices() {
        registry.register_device(s, *pk).unwrap();
    }
    let ch = w.vendor.begin(&mut w.rng);
    let (msg, _) = kernel_attest(&w.ctx, &ch, &w.bitstream).unwrap();
    assert_eq!(w.vendor.verify(&msg, &registry, &w.bitstream.hash()).unwrap_err(), VerifyError::UnknownKernel);
    let unregistered = CaRegistry::new();
    assert_eq!(w.vendor.verify(&msg, &unregistered, &w.bitstream.hash()).unwrap_err(), VerifyError::BadDeviceCert);
}

#[test]
fn accepted_report_is_never_accepted_again() {
    let mut w = world(6);
    let ch = w.vendor.begin(&mut w.rng);
    let (msg, _) = kernel_attest(&w.ctx, &ch, &w.bitstream).unwrap();
    w.vendor.verify(&msg, &w.registry, &w.bitstream.hash()).unwrap();
    assert_eq!(w.vendor.verify(&msg, &w.registry, &w.bitstream.hash()).unwrap_err(), VerifyError::NoOpenChallenge);
    let a = w.vendor.begin(&mut w.rng);
    let b = w.vendor.begin(&mut w.rng);
    assert_ne!(a.nonce, b.nonce);
    assert!(b.verif_public.is_valid());
}

#[test]
fn tampered_port_refuses_to_attest() {
    let mut w = world(7);
    let ch = w.vendor.begin(&mut w.rng);
    monitor_event(&mut w.ctx, PortEvent::IcapWrite, EventOrigin::External);
    assert_eq!(kernel_attest(&w.ctx, &ch, &w.bitstream).unwrap_err(), AttestError::PortTampered);
    monitor_event(&mut w.ctx, PortEvent::PartialReconfig, EventOrigin::Kernel);
    assert_eq!(kernel_attest(&w.ctx, &ch, &w.bitstream).unwrap_err(), AttestError::PortTampered);
}

#[test]
fn load_rechecks_the_bitstream_and_its_key() {
    let mut w = world(8);
    let ch = w.vendor.begin(&mut w.rng);
    let (msg, mut ks) = kernel_attest(&w.ctx, &ch, &w.bitstream).unwrap();
    let mut vs = w.vendor.verify(&msg, &w.registry, &w.bitstream.hash()).unwrap();
    let release = vendor_release_key(&mut vs, &w.bitstr_key);
    let mut swapped = ks.clone();
    assert_eq!(
        kernel_load_bitstream(&mut w.ctx, &mut swapped, &release, &w.other_bitstream).unwrap_err(),
        AttestError::BitstreamHashMismatch
    );
    let wrong = vendor_release_key(&mut vs, &SymKey::K256([0x55; 32]));
    let mut k2 = ks.clone();
    assert_eq!(kernel_load_bitstream(&mut w.ctx, &mut k2, &wrong, &w.bitstream).unwrap_err(), AttestError::BitstreamAuth);
    kernel_load_bitstream(&mut w.ctx, &mut ks, &release, &w.bitstream).unwrap();
    assert_eq!(
        kernel_load_bitstream(&mut w.ctx, &mut ks, &release, &w.bitstream).unwrap_err(),
        AttestError::Channel(ChannelError::Stale(1))
    );
    let mut flipped = release.clone();
    flipped[30] ^= 4;
    assert_eq!(
        kernel_load_bitstream(&mut w.ctx, &mut k2, &flipped, &w.bitstream).unwrap_err(),
        AttestError::Channel(ChannelError::Integrity)
    );
}

#[test]
fn sealed_channel_rejects_out_of_order_counters() {
    let mut w = world(9);
    let ch = w.vendor.begin(&mut w.rng);
    let (msg, ks) = kernel_attest(&w.ctx, &ch, &w.bitstream).unwrap();
    let mut vs = w.vendor.verify(&msg, &w.registry, &w.bitstream.hash()).unwrap();
    let mut kernel = ks.session;
    let msgs: Vec<_> = (0..10u8).map(|i| vs.seal_message(9, &[i; 20])).collect();
    assert_eq!(kernel.open_message(&msgs[4], 9).unwrap(), vec![4u8; 20]);
    for (c, m) in msgs.iter().enumerate().take(5) {
        assert_eq!(kernel.open_message(m, 9).unwrap_err(), ChannelError::Stale(c as u64 + 1));
    }
    for (i, m) in msgs.iter().enumerate().skip(5) {
        assert_eq!(kernel.open_message(m, 9).unwrap(), vec![i as u8; 20]);
    }
    // a message sealed by one side never opens as coming from the other
    let back = kernel.seal_message(9, b"reply");
    assert!(kernel.open_message(&back, 9).is_err());
    assert_eq!(vs.open_message(&back, 9).unwrap(), b"reply");
}

#[test]
fn any_modified_message_aborts_the_protocol() {
    let honest_len = {
        let mut w = world(10);
        let mut ch = ProxyChannel::new();
        run(&mut w, &mut ch).unwrap();
        ch.transcript().iter().map(Vec::len).collect::<Vec<_>>()
    };
    let mut w = world(10);
    let mut aborted = 0;
    for (index, len) in honest_len.iter().enumerate() {
        for offset in 0..*len {
            for mask in [0x01u8, 0x80] {
                let mut ch = ProxyChannel::new();
                ch.on_message(index, ProxyAction::Modify { offset, mask });
                w.vendor = IpVendor::new();
                let result = run(&mut w, &mut ch);
                assert!(result.is_err(), "message {index} byte {offset} mask {mask:#x} went through");
                aborted += 1;
                let scan = secrets(&w, None);
                for m in ch.transcript() {
                    assert!(scan.scan(m).is_empty());
                }
            }
        }
    }
    assert_eq!(aborted, 2 * honest_len.iter().sum::<usize>());
}

#[test]
fn dropped_replayed_and_reordered_messages_abort() {
    for (index, action) in [
        (0, ProxyAction::Drop),
        (1, ProxyAction::Drop),
        (2, ProxyAction::Drop),
        (1, ProxyAction::ReplayFrom(0)),
        (2, ProxyAction::ReplayFrom(1)),
        (0, ProxyAction::HoldForReorder),
    ] {
        let mut w = world(11);
        let mut ch = ProxyChannel::new();
        ch.on_message(index, action.clone());
        let r = run(&mut w, &mut ch);
        if action == ProxyAction::HoldForReorder {
            // nothing else is in flight, so the held challenge arrives late but intact
            assert!(r.is_ok());
        } else {
            assert!(r.is_err(), "{index} {action:?}");
        }
        let scan = secrets(&w, None);
        for m in ch.transcript() {
            assert!(scan.scan(m).is_empty());
        }
    }
}

#[test]
fn wire_codecs_round_trip() {
    let mut w = world(12);
    let ch = w.vendor.begin(&mut w.rng);
    assert_eq!(Challenge::from_wire(&ch.to_wire()).unwrap(), ch);
    let (msg, _) = kernel_attest(&w.ctx, &ch, &w.bitstream).unwrap();
    assert_eq!(ReportMessage::from_wire(&msg.to_wire(), &ch.nonce).unwrap(), msg);
    assert_eq!(ReportMessage::from_wire(&msg.to_wire(), &[0; 32]).unwrap_err(), ChannelError::WrongSession);
    let mut long = msg.to_wire();
    long.push(0);
    assert_eq!(ReportMessage::from_wire(&long, &ch.nonce).unwrap_err(), ChannelError::Malformed);
    assert_eq!(Challenge::from_wire(&msg.to_wire()).unwrap_err(), ChannelError::UnexpectedType(MSG_REPORT));
    assert_ne!(msg.report.enc_bitstream_hash, Digest32([0; 32]));
}
