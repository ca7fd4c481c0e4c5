//! End-to-end scenario execution: provision and boot a device, attest and
//! load the accelerator through the proxy, provision a Data Encryption Key,
//! replay the trace against the Shield and an unprotected reference memory,
//! run the scripted attacks, then check every expectation.

use std::collections::{BTreeMap, HashMap};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use shef_core::attestation::{
    build_bitstream, owner_provision, run_attestation, shield_unwrap, BitstreamPayload, IpVendor, ProxyChannel,
};
use shef_core::crypto::{hash, kdf, Iv96, KeyBits, SymKey};
use shef_core::shield::{
    MemoryRegion, RegisterClient, Shield, ShieldConfig, ShieldError, MAX_BURST_BYTES, META_RECORD,
};
use shef_core::sim_env::{
    apply_adversary, model_cycles, AdversaryAction, AdversaryState, BaselineTraffic, CostModelParams, DramCounters,
    IvTracker, LeakScanner, RunStats, SimDram, MIN_NEEDLE,
};
use shef_core::trust_chain::{
    boot_rom_load, firmware_boot_kernel, provision_device, provision_from_parts, BootError, CaRegistry,
};

use crate::params::calibrated_params;
use crate::report::*;
use crate::scenario::{AttackAction, AttackExpect, AttackSpec, FlipTarget, ProtocolExpect, Scenario, TraceItem};
use crate::trace::{gen_trace, Payload, TraceError, TraceOp};

/// Extra devices registered next to the one under test, so the vendor's
/// certificate lookup is not trivially a single key.
const BYSTANDER_DEVICES: u64 = 2;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Overrides the scenario's own parameter file.
    pub params: Option<CostModelParams>,
    /// Overrides the scenario's seed.
    pub seed: Option<u64>,
}

/// Problems that stop a scenario before it produces a report.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("trace generation: {0}")]
    Trace(#[from] TraceError),
    #[error("device setup: {0}")]
    Boot(#[from] BootError),
    #[error("region {0} does not fit in {1:#x} bytes of DRAM")]
    DramTooSmall(String, u64),
    #[error("shield setup: {0}")]
    Shield(#[from] ShieldError),
    #[error("key provisioning: {0}")]
    Provision(String),
}

pub struct RunOutput {
    pub report: Report,
    /// Shield statistics for the measured part of the trace.
    pub stats: Option<RunStats>,
    pub baseline: BaselineTraffic,
    pub config: ShieldConfig,
    pub ivs: IvTracker,
    /// Every message that crossed the untrusted host, in order.
    pub transcript: Vec<Vec<u8>>,
}

/// Independent random streams drawn from one scenario seed.
struct Streams {
    protocol: ChaCha20Rng,
    data: ChaCha20Rng,
    attack: ChaCha20Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |n: u64| {
            let mut r = ChaCha20Rng::seed_from_u64(seed);
            r.set_stream(n);
            r
        };
        Self { protocol: stream(0), data: stream(1), attack: stream(2) }
    }
}

fn gen_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// The scenario's trace with generator directives expanded.
pub fn expand_trace(scn: &Scenario, seed: u64) -> Result<Vec<TraceOp>, TraceError> {
    let mut out = Vec::new();
    for (i, item) in scn.trace.iter().enumerate() {
        match item {
            TraceItem::Op(op) => out.push(op.clone()),
            TraceItem::Gen(g) => out.extend(gen_trace(&scn.config, g.pattern, &g.params, g.seed.unwrap_or_else(|| gen_seed(seed, i)))?),
        }
    }
    Ok(out)
}

/// Sparse unprotected memory; untouched bytes read as zero.
#[derive(Default)]
struct RefMem {
    pages: HashMap<u64, Box<[u8; 4096]>>,
}

impl RefMem {
    fn write(&mut self, addr: u64, data: &[u8]) {
        for (i, b) in data.iter().enumerate() {
            let a = addr + i as u64;
            self.pages.entry(a / 4096).or_insert_with(|| Box::new([0; 4096]))[(a % 4096) as usize] = *b;
        }
    }

    fn read(&self, addr: u64, len: u64) -> Vec<u8> {
        (addr..addr + len).map(|a| self.pages.get(&(a / 4096)).map_or(0, |p| p[(a % 4096) as usize])).collect()
    }
}

fn fits(cfg: &ShieldConfig, dram: u64) -> Result<(), RunError> {
    for r in &cfg.regions {
        if r.end() > dram || r.tag_base + r.tag_bytes() > dram {
            return Err(RunError::DramTooSmall(r.name.clone(), dram));
        }
    }
    Ok(())
}

fn fixture_identity(serial: u64, seed: &[u8; 32]) -> shef_core::trust_chain::DeviceIdentity {
    let aes = SymKey::derive(seed, b"fixture device key", KeyBits::B256);
    let iv: [u8; 12] = kdf(seed, b"fixture firmware iv", 12).expect("short output").try_into().expect("12 bytes");
    provision_from_parts(serial, aes, seed, Iv96(iv))
}

/// State of a run once the accelerator is up.
struct Live<'a> {
    cfg: ShieldConfig,
    shield: Shield,
    dram: SimDram,
    reference: RefMem,
    client: RegisterClient,
    regs: Vec<u32>,
    adversary: AdversaryState,
    scanner: &'a mut LeakScanner,
    transcript: &'a mut Vec<Vec<u8>>,
    streams: &'a mut Streams,
}

impl Live<'_> {
    fn payload(&mut self, p: &Payload, len: u64) -> Vec<u8> {
        match p {
            Payload::Random => {
                let mut v = vec![0u8; len as usize];
                self.streams.data.fill_bytes(&mut v);
                v
            }
            Payload::Fill(b) => vec![*b; len as usize],
            Payload::Bytes(v) => v.clone(),
        }
    }

    /// Every value written through the Shield is fingerprinted by its
    /// leading block: any verbatim copy of the value contains it.
    fn remember_plaintext(&mut self, data: &[u8]) {
        if data.len() >= MIN_NEEDLE {
            self.scanner.add_plaintext(&data[..MIN_NEEDLE]);
        }
    }

    fn leak_scan(&self) -> u64 {
        let dram: usize = self.dram.touched_runs().iter().map(|(_, d)| self.scanner.scan(d).len()).sum();
        let wire: usize = self.transcript.iter().map(|m| self.scanner.scan(m).len()).sum();
        (dram + wire) as u64
    }

    fn record(&mut self, r: &MemoryRegion, chunk: u64) -> Result<(Vec<u8>, Vec<u8>), ShieldError> {
        Ok((self.dram.read(r.data_addr(chunk), r.c_mem as usize)?, self.dram.read(r.meta_addr(chunk), META_RECORD as usize)?))
    }

    fn put_record(&mut self, r: &MemoryRegion, chunk: u64, rec: &(Vec<u8>, Vec<u8>)) -> Result<(), ShieldError> {
        self.dram.write(r.data_addr(chunk), &rec.0)?;
        self.dram.write(r.meta_addr(chunk), &rec.1)?;
        Ok(())
    }

    /// Gives `chunk` a sealed DRAM record, writing fresh data if it has none.
    fn ensure_written(&mut self, r: &MemoryRegion, chunk: u64) -> Result<(), ShieldError> {
        if self.shield.chunk_state(r.id, chunk).is_none() {
            self.rewrite(r, chunk)?;
        }
        Ok(())
    }

    fn rewrite(&mut self, r: &MemoryRegion, chunk: u64) -> Result<Vec<u8>, ShieldError> {
        let data = self.payload(&Payload::Random, u64::from(r.c_mem));
        self.shield.preload(&mut self.dram, r.data_addr(chunk), &data)?;
        self.reference.write(r.data_addr(chunk), &data);
        self.remember_plaintext(&data);
        Ok(data)
    }

    /// Reads the chunk back and drops it from the buffer again, so a
    /// tampered value never lingers on chip.
    fn probe(&mut self, r: &MemoryRegion, chunk: u64) -> Result<bool, ShieldError> {
        let res = self.shield.read(&mut self.dram, r.data_addr(chunk), u64::from(r.c_mem));
        self.shield.discard_line(r.id, chunk)?;
        match res {
            Ok(_) => Ok(false),
            Err(ShieldError::AuthFailure { .. }) => Ok(true),
            Err(e) => Err(e),
        }
    }

    fn adversary(&mut self, a: &AdversaryAction) -> Result<(), String> {
        apply_adversary(&mut self.dram, &self.cfg, &mut self.adversary, a, &[]).map(|_| ()).map_err(|e| e.to_string())
    }

    fn pick_region(&mut self, name: &Option<String>, min_chunks: u64) -> Result<MemoryRegion, String> {
        let r = match name {
            Some(n) => self.cfg.region_by_name(n).cloned().ok_or_else(|| format!("unknown region `{n}`"))?,
            None => {
                let eligible: Vec<&MemoryRegion> = self.cfg.regions.iter().filter(|r| r.chunks() >= min_chunks).collect();
                if eligible.is_empty() {
                    return Err("no region is large enough".into());
                }
                eligible[(self.streams.attack.next_u64() % eligible.len() as u64) as usize].clone()
            }
        };
        if r.chunks() < min_chunks {
            return Err(format!("region `{}` has fewer than {min_chunks} chunks", r.name));
        }
        Ok(r)
    }

    fn pick_chunk(&mut self, r: &MemoryRegion, given: Option<u64>) -> Result<u64, String> {
        match given {
            Some(c) if c < r.chunks() => Ok(c),
            Some(c) => Err(format!("region `{}` has no chunk {c}", r.name)),
            None => Ok(self.streams.attack.next_u64() % r.chunks()),
        }
    }

    /// One placement of a tampering attack; `Ok(true)` when the next read
    /// failed authentication.
    fn tamper_once(&mut self, action: &AttackAction) -> Result<bool, String> {
        let err = |e: ShieldError| e.to_string();
        self.shield.flush(&mut self.dram).map_err(err)?;
        match action {
            AttackAction::FlipBit { region, chunk, target, offset, bit } => {
                let r = self.pick_region(region, 1)?;
                let c = self.pick_chunk(&r, *chunk)?;
                self.ensure_written(&r, c).map_err(err)?;
                let a = &mut self.streams.attack;
                let target = target.unwrap_or(match a.next_u32() % 3 {
                    0 => FlipTarget::Data,
                    1 => FlipTarget::Tag,
                    _ => FlipTarget::Iv,
                });
                let off = offset.unwrap_or_else(|| a.next_u64());
                let bit = bit.unwrap_or((a.next_u32() % 8) as u8);
                let addr = match target {
                    FlipTarget::Data => r.data_addr(c) + off % u64::from(r.c_mem),
                    FlipTarget::Tag => r.meta_addr(c) + off % 16,
                    FlipTarget::Iv => r.meta_addr(c) + 16 + off % 12,
                };
                let saved = self.record(&r, c).map_err(err)?;
                self.adversary(&AdversaryAction::FlipBit { addr, bit })?;
                let detected = self.probe(&r, c).map_err(err);
                self.put_record(&r, c, &saved).map_err(err)?;
                detected
            }
            AttackAction::Splice { region, i, j } => {
                let r = self.pick_region(region, 2)?;
                let i = self.pick_chunk(&r, *i)?;
                let j = match j {
                    Some(_) => self.pick_chunk(&r, *j)?,
                    None => (i + 1 + self.streams.attack.next_u64() % (r.chunks() - 1)) % r.chunks(),
                };
                if i == j {
                    return Err("splice needs two different chunks".into());
                }
                self.ensure_written(&r, i).map_err(err)?;
                self.ensure_written(&r, j).map_err(err)?;
                let (si, sj) = (self.record(&r, i).map_err(err)?, self.record(&r, j).map_err(err)?);
                self.adversary(&AdversaryAction::SpliceChunks { region: r.id, i, j })?;
                let detected = self.probe(&r, i).map_err(err);
                self.put_record(&r, i, &si).map_err(err)?;
                self.put_record(&r, j, &sj).map_err(err)?;
                detected
            }
            AttackAction::Replay { region, chunk } => {
                let r = self.pick_region(region, 1)?;
                let c = self.pick_chunk(&r, *chunk)?;
                self.ensure_written(&r, c).map_err(err)?;
                let slot = String::from("replay");
                self.adversary(&AdversaryAction::Snapshot { region: r.id, chunk: c, slot: slot.clone() })?;
                self.rewrite(&r, c).map_err(err)?;
                let current = self.record(&r, c).map_err(err)?;
                self.adversary(&AdversaryAction::Restore { region: r.id, chunk: c, slot })?;
                let detected = self.probe(&r, c).map_err(err);
                self.put_record(&r, c, &current).map_err(err)?;
                detected
            }
            AttackAction::Scan => unreachable!("scans are not tampering"),
        }
    }

    fn attack(&mut self, id: u32, spec: &AttackSpec, rep: &mut AttackReport) {
        rep.id = id;
        rep.action = spec.spec.clone();
        rep.expect = spec.expect.as_str().into();
        for _ in 0..spec.repeat {
            rep.placements += 1;
            if spec.action == AttackAction::Scan {
                let hits = self.leak_scan();
                rep.leak_hits += hits;
                if hits > 0 {
                    rep.detected += 1;
                } else {
                    rep.undetected += 1;
                }
                continue;
            }
            match self.tamper_once(&spec.action) {
                Ok(true) => rep.detected += 1,
                Ok(false) => rep.undetected += 1,
                Err(e) => {
                    rep.errors += 1;
                    rep.first_error.get_or_insert(e);
                }
            }
        }
    }
}

fn check(checks: &mut Vec<Check>, name: &str, expected: impl ToString, actual: impl ToString, pass: bool) {
    checks.push(Check { name: name.into(), expected: expected.to_string(), actual: actual.to_string(), pass });
}

fn counters_delta(a: DramCounters, b: DramCounters) -> DramReport {
    DramReport {
        reads: b.reads - a.reads,
        writes: b.writes - a.writes,
        bytes_read: b.bytes_read - a.bytes_read,
        bytes_written: b.bytes_written - a.bytes_written,
    }
}

pub fn run_scenario(scn: &Scenario, opts: &RunOptions) -> Result<RunOutput, RunError> {
    let seed = opts.seed.unwrap_or(scn.seed);
    let params = opts.params.or(scn.params).unwrap_or_else(calibrated_params);
    let ops = expand_trace(scn, seed)?;
    fits(&scn.config, scn.dram_bytes)?;
    let mut streams = Streams::new(seed);

    // manufacturer, boot chain, vendor
    let mut registry = CaRegistry::new();
    let (identity, device_seed) = match scn.device {
        Some(fx) => {
            let id = fixture_identity(fx.serial, &fx.seed);
            registry.register_device(fx.serial, id.device_public)?;
            (id, Some(fx.seed))
        }
        None => (provision_device(&mut registry, 1, &mut streams.protocol)?, None),
    };
    for k in 1..=BYSTANDER_DEVICES {
        provision_device(&mut registry, identity.serial.wrapping_add(k), &mut streams.protocol)?;
    }
    let fw = boot_rom_load(&identity, &identity.aes_device_key)?;
    let mut ctx = firmware_boot_kernel(&fw, &scn.kernel_image)?;
    if scn.trusted_kernel {
        registry.trust_kernel(ctx.kernel_hash);
    }
    let bitstr_key = SymKey::random(&mut streams.protocol, KeyBits::B256);
    let mut shield_key_seed = [0u8; 32];
    streams.protocol.fill_bytes(&mut shield_key_seed);
    let payload = BitstreamPayload { descriptor: scn.name.as_bytes().to_vec(), shield_key_seed, config: scn.config.clone() };
    let bitstream = build_bitstream(&bitstr_key, &payload, &mut streams.protocol);

    let mut scanner = LeakScanner::new();
    scanner.add_key(bitstr_key.as_bytes());
    scanner.add_key(&shield_key_seed);
    scanner.add_key(&ctx.attest_keypair.private.to_bytes());
    if let Some(s) = device_seed {
        scanner.add_key(&s);
    }

    let mut channel = ProxyChannel::new();
    for (i, a) in &scn.proxy {
        channel.on_message(*i, a.clone());
    }
    let mut vendor = IpVendor::new();
    let outcome = run_attestation(
        &mut ctx,
        &mut vendor,
        &registry,
        &bitstream,
        &bitstream.hash(),
        &bitstr_key,
        &mut channel,
        &mut streams.protocol,
    );
    let mut transcript: Vec<Vec<u8>> = channel.transcript().to_vec();

    let mut report = Report {
        scenario: scn.name.clone(),
        seed,
        protocol: ProtocolReport::default(),
        trace: TraceReport::default(),
        attacks: Vec::new(),
        regions: Vec::new(),
        registers: RegisterReport::default(),
        dram: DramReport::default(),
        baseline: BaselineReport::default(),
        overhead: None,
        iv: IvReport::default(),
        leak_hits: 0,
        checks: Vec::new(),
        passed: false,
    };
    let mut checks = Vec::new();
    let protocol_expect = match &scn.expect.protocol {
        ProtocolExpect::Accept => "accept".to_string(),
        ProtocolExpect::Reject(None) => "reject".to_string(),
        ProtocolExpect::Reject(Some(v)) => format!("reject:{v}"),
    };

    let out = match outcome {
        Err(e) => {
            report.protocol.outcome = format!("reject:{e:?}");
            None
        }
        Ok(o) => {
            report.protocol.outcome = "accept".into();
            report.protocol.session_keys_match =
                o.vendor_session.session_key() == o.kernel_session.session.session_key();
            scanner.add_key(o.vendor_session.session_key().as_bytes());
            scanner.add_key(&o.accelerator.shield_key.private.to_bytes());
            Some(o)
        }
    };
    let accepted = out.is_some();
    let protocol_ok = match &scn.expect.protocol {
        ProtocolExpect::Accept => accepted,
        ProtocolExpect::Reject(None) => !accepted,
        ProtocolExpect::Reject(Some(_)) => report.protocol.outcome == protocol_expect,
    };
    check(&mut checks, "protocol", &protocol_expect, &report.protocol.outcome, protocol_ok);

    let mut ivs = IvTracker::new();
    let mut stats = None;
    let mut baseline = BaselineTraffic::default();
    let config = out.as_ref().map_or_else(|| scn.config.clone(), |o| o.accelerator.config.clone());

    if let Some(o) = out {
        check(&mut checks, "session_keys_match", true, report.protocol.session_keys_match, report.protocol.session_keys_match);

        // data owner
        let (dek, load_key) = owner_provision(&o.accelerator.shield_key.public, &mut streams.protocol)
            .map_err(|e| RunError::Provision(e.to_string()))?;
        transcript.push(load_key.ciphertext.clone());
        let unwrapped =
            shield_unwrap(&o.accelerator.shield_key.private, &load_key).map_err(|e| RunError::Provision(e.to_string()))?;
        if unwrapped != dek {
            return Err(RunError::Provision("unwrapped key differs from the provisioned one".into()));
        }
        scanner.add_key(dek.as_bytes());

        let mut live = Live {
            shield: Shield::new(config.clone(), &unwrapped)?,
            cfg: config.clone(),
            dram: SimDram::new(scn.dram_bytes),
            reference: RefMem::default(),
            client: RegisterClient::new(&dek, config.register_mode),
            regs: vec![0; usize::from(config.register_count)],
            adversary: AdversaryState::default(),
            scanner: &mut scanner,
            transcript: &mut transcript,
            streams: &mut streams,
        };
        let tr = &mut report.trace;
        let mut attacks: BTreeMap<u32, AttackReport> = BTreeMap::new();
        let fault = |tr: &mut TraceReport, op: &TraceOp, e: String| {
            tr.faults += 1;
            tr.first_fault.get_or_insert_with(|| format!("{op}: {e}"));
        };
        let mut dram_start = None;
        for op in &ops {
            tr.ops += 1;
            if dram_start.is_none() && !matches!(op, TraceOp::Preload { .. }) {
                live.shield.reset_stats();
                dram_start = Some(live.dram.counters());
            }
            let measured = dram_start.is_some();
            let mut traffic = |bursts: u64, bytes: u64| {
                if measured {
                    baseline.bursts += bursts;
                    baseline.bytes += bytes;
                }
            };
            match op {
                TraceOp::Preload { addr, len, payload } => {
                    let data = live.payload(payload, *len);
                    match live.shield.preload(&mut live.dram, *addr, &data) {
                        Ok(()) => {
                            live.reference.write(*addr, &data);
                            live.remember_plaintext(&data);
                        }
                        Err(e) => fault(tr, op, e.to_string()),
                    }
                }
                TraceOp::Read { addr, len } => {
                    traffic(len.div_ceil(MAX_BURST_BYTES), *len);
                    match live.shield.read(&mut live.dram, *addr, *len) {
                        Ok(v) => {
                            tr.reads_checked += 1;
                            if v != live.reference.read(*addr, *len) {
                                tr.read_mismatches += 1;
                            }
                        }
                        Err(e) => fault(tr, op, e.to_string()),
                    }
                }
                TraceOp::Write { addr, len, payload } => {
                    traffic(len.div_ceil(MAX_BURST_BYTES), *len);
                    let data = live.payload(payload, *len);
                    match live.shield.write(&mut live.dram, *addr, &data) {
                        Ok(()) => {
                            live.reference.write(*addr, &data);
                            live.remember_plaintext(&data);
                        }
                        Err(e) => fault(tr, op, e.to_string()),
                    }
                }
                TraceOp::RegWrite { index, value } => {
                    traffic(1, 4);
                    let env = live.client.write(*index, *value);
                    live.transcript.push(env.clone());
                    match live.shield.reg_host_write(&env) {
                        Ok(()) => live.regs[usize::from(*index)] = *value,
                        Err(e) => fault(tr, op, e.to_string()),
                    }
                }
                TraceOp::RegRead { index } => {
                    traffic(1, 4);
                    let req = live.client.read_request(*index);
                    live.transcript.push(req.clone());
                    let resp = match live.shield.reg_host_read(&req) {
                        Ok(r) => r,
                        Err(e) => {
                            fault(tr, op, e.to_string());
                            continue;
                        }
                    };
                    live.transcript.push(resp.clone());
                    tr.register_reads += 1;
                    match live.client.open_response(&resp) {
                        Ok((i, v)) if i == *index && v == live.regs[usize::from(*index)] => {}
                        Ok(_) => tr.register_mismatches += 1,
                        Err(e) => fault(tr, op, e.to_string()),
                    }
                }
                TraceOp::Flush => {
                    if let Err(e) = live.shield.flush(&mut live.dram) {
                        fault(tr, op, e.to_string());
                    }
                }
                TraceOp::Attack(n) => {
                    let spec = &scn.attacks[n];
                    live.attack(*n, spec, attacks.entry(*n).or_default());
                }
            }
        }
        if let Err(e) = live.shield.flush(&mut live.dram) {
            fault(tr, &TraceOp::Flush, e.to_string());
        }
        let dram_start = dram_start.unwrap_or_else(|| {
            live.shield.reset_stats();
            live.dram.counters()
        });
        let run = live.shield.run_stats();
        report.dram = counters_delta(dram_start, live.dram.counters());

        if scn.verify_final {
            for (region, chunk, _) in live.shield.export_state() {
                let Some(r) = config.regions.iter().find(|r| r.id == region) else { continue };
                tr.final_chunks_checked += 1;
                let addr = r.data_addr(chunk);
                match live.shield.read(&mut live.dram, addr, u64::from(r.c_mem)) {
                    Ok(v) if v == live.reference.read(addr, u64::from(r.c_mem)) => {}
                    _ => tr.final_mismatches += 1,
                }
            }
        }
        ivs.merge(live.shield.iv_tracker());
        report.leak_hits = live.leak_scan();

        report.regions = config
            .regions
            .iter()
            .zip(&run.regions)
            .map(|(r, s)| RegionReport {
                name: r.name.clone(),
                id: r.id,
                buffer_hits: s.buffer_hits,
                buffer_misses: s.buffer_misses,
                hit_rate: ratio(s.buffer_hits, s.buffer_hits + s.buffer_misses),
                chunk_fills: s.chunk_fills,
                writebacks: s.writebacks,
                chunks_sealed: s.chunks_sealed,
                chunks_opened: s.chunks_opened,
                dram_bytes_read: s.dram_bytes_read,
                dram_bytes_written: s.dram_bytes_written,
                bursts: s.bursts,
                aes_bytes: s.aes_bytes,
                mac_bytes: s.mac_bytes,
                mac_ops: s.mac_ops,
            })
            .collect();
        report.registers = RegisterReport { ops: run.registers.ops, rejected: run.registers.rejected, wire_bytes: run.registers.wire_bytes };
        report.attacks = attacks.into_values().collect();
        report.overhead = model_cycles(&config, &params, &run, &baseline).ok().map(|o| OverheadSummary {
            baseline_cycles: o.baseline_cycles,
            secured_cycles: o.secured_cycles,
            overhead_pct: o.overhead_pct,
        });
        stats = Some(run);
    } else {
        let hits: usize = transcript.iter().map(|m| scanner.scan(m).len()).sum();
        report.leak_hits = hits as u64;
    }
    report.protocol.messages = transcript.len() as u64;
    report.protocol.transcript_sha256 = hash(&transcript.concat()).to_string();
    report.baseline = BaselineReport { bursts: baseline.bursts, bytes: baseline.bytes };
    report.iv = IvReport { records: ivs.records(), duplicates: ivs.duplicates() };

    expectation_checks(scn, &mut report, &mut checks, accepted);
    report.passed = checks.iter().all(|c| c.pass);
    report.checks = checks;
    Ok(RunOutput { report, stats, baseline, config, ivs, transcript })
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn expectation_checks(scn: &Scenario, report: &mut Report, checks: &mut Vec<Check>, accepted: bool) {
    let e = &scn.expect;
    check(checks, "leak_hits", e.leaks, report.leak_hits, report.leak_hits == e.leaks);
    if !accepted {
        return;
    }
    let t = &report.trace;
    if e.transparency {
        let bad = t.read_mismatches + t.register_mismatches + t.final_mismatches;
        check(checks, "transparency_mismatches", 0, bad, bad == 0);
    }
    check(checks, "faults", e.faults, t.faults, t.faults == e.faults);
    check(checks, "iv_duplicates", e.iv_duplicates, report.iv.duplicates, report.iv.duplicates == e.iv_duplicates);
    for a in &report.attacks {
        let want = scn.attacks[&a.id].expect;
        let (actual, pass) = match want {
            AttackExpect::AuthFailure | AttackExpect::Leak => (a.detected, a.detected == a.placements),
            AttackExpect::Undetected | AttackExpect::NoLeak => (a.undetected, a.undetected == a.placements),
        };
        let name = format!("attack.{}", a.id);
        check(
            checks,
            &name,
            format!("{} {}/{}", want.as_str(), a.placements, a.placements),
            format!("{} {}/{}", want.as_str(), actual, a.placements),
            pass && a.errors == 0,
        );
    }
    let (hits, total) = report.regions.iter().fold((0, 0), |(h, n), r| (h + r.buffer_hits, n + r.buffer_hits + r.buffer_misses));
    if let Some(min) = e.min_hit_rate {
        let rate = ratio(hits, total);
        check(checks, "min_hit_rate", min, rate, rate >= min);
    }
    let pct = report.overhead.map(|o| o.overhead_pct);
    if let Some(max) = e.max_overhead_pct {
        check(checks, "max_overhead_pct", max, fmt_opt(pct), pct.is_some_and(|p| p <= max));
    }
    if let Some(min) = e.min_overhead_pct {
        check(checks, "min_overhead_pct", min, fmt_opt(pct), pct.is_some_and(|p| p >= min));
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |p| p.to_string())
}
