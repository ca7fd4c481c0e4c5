//! Generators for the shipped scenario files.
//!
//! Every file under `scenarios/` is produced by [`all`]; `shef presets <dir>`
//! rewrites them and a test keeps the committed copies in sync.

use std::fmt::Write;

pub const SDP_CONFIGS: [char; 5] = ['a', 'b', 'c', 'd', 'e'];

/// Measured overheads the SDP configurations are calibrated against.
pub const SDP_TARGETS: [f64; 5] = [298.0, 297.0, 59.0, 20.0, 20.0];

pub const VADD_LENGTHS: [u64; 6] = [64 << 10, 256 << 10, 1 << 20, 2 << 20, 4 << 20, 8 << 20];

const FIRST_BASE: u64 = 0x10_0000;
const FIRST_TAG: u64 = 0x300_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mac {
    Hmac,
    Pmac,
}

impl Mac {
    fn as_str(self) -> &'static str {
        match self {
            Mac::Hmac => "hmac",
            Mac::Pmac => "pmac",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Engines {
    pub aes: u8,
    pub sbox: u8,
    pub mac: Mac,
    pub mac_engines: u8,
}

impl Engines {
    pub const fn new(aes: u8, sbox: u8, mac: Mac, mac_engines: u8) -> Self {
        Self { aes, sbox, mac, mac_engines }
    }
}

#[derive(Debug, Clone)]
pub struct RegionSpec {
    pub name: String,
    pub size: u64,
    pub c_mem: u32,
    pub mode: &'static str,
    pub counters: bool,
    pub buffer: u32,
    pub set: u8,
}

impl RegionSpec {
    pub fn new(name: impl Into<String>, size: u64, c_mem: u32, buffer: u32, set: u8) -> Self {
        Self { name: name.into(), size, c_mem, mode: "rw", counters: false, buffer, set }
    }

    pub fn mode(mut self, mode: &'static str) -> Self {
        self.mode = mode;
        self
    }

    pub fn counters(mut self, on: bool) -> Self {
        self.counters = on;
        self
    }
}

/// Scenario text under construction. Regions are laid out one after the
/// other from 1 MiB, metadata tables from 48 MiB.
#[derive(Debug, Clone)]
pub struct ScenarioText {
    name: String,
    seed: u64,
    header: Vec<String>,
    registers: u16,
    sets: Vec<Engines>,
    regions: Vec<(RegionSpec, u64, u64)>,
    next_base: u64,
    next_tag: u64,
    trace: Vec<String>,
    attacks: Vec<(String, u32, Option<&'static str>)>,
    expect: Vec<String>,
}

impl ScenarioText {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        Self {
            name: name.into(),
            seed,
            header: Vec::new(),
            registers: 4,
            sets: Vec::new(),
            regions: Vec::new(),
            next_base: FIRST_BASE,
            next_tag: FIRST_TAG,
            trace: Vec::new(),
            attacks: Vec::new(),
            expect: vec!["protocol = accept".into()],
        }
    }

    /// Seeded from the name, so no two shipped scenarios share key material.
    pub fn named(name: impl Into<String>) -> Self {
        let name = name.into();
        let d = shef_core::crypto::hash(name.as_bytes());
        let seed = u64::from_be_bytes(d.0[..8].try_into().expect("8 bytes"));
        Self::new(name, seed)
    }

    pub fn header(mut self, line: impl Into<String>) -> Self {
        self.header.push(line.into());
        self
    }

    pub fn registers(mut self, n: u16) -> Self {
        self.registers = n;
        self
    }

    /// Adds an engine set; returns its id.
    pub fn set(&mut self, e: Engines) -> u8 {
        self.sets.push(e);
        (self.sets.len() - 1) as u8
    }

    /// Adds a region; returns its base address.
    pub fn region(&mut self, r: RegionSpec) -> u64 {
        let align = u64::from(r.c_mem).max(4096);
        let base = self.next_base.div_ceil(align) * align;
        let tag = self.next_tag;
        self.next_base = base + r.size;
        self.next_tag = (tag + r.size / u64::from(r.c_mem) * 28).div_ceil(4096) * 4096;
        self.regions.push((r, base, tag));
        base
    }

    pub fn op(&mut self, line: impl Into<String>) {
        self.trace.push(line.into());
    }

    pub fn preload(&mut self, region: &str) {
        let size = self.regions.iter().find(|(r, ..)| r.name == region).expect("known region").0.size;
        self.preload_span(region, 0, size);
    }

    pub fn preload_span(&mut self, region: &str, offset: u64, len: u64) {
        let (_, base, _) = self.regions.iter().find(|(r, ..)| r.name == region).expect("known region");
        let line = format!("PRELOAD {:#x} {len:#x} rand", base + offset);
        self.trace.push(line);
    }

    /// Adds an attack and schedules it at the current trace position.
    pub fn attack(&mut self, action: impl Into<String>, repeat: u32, expect: Option<&'static str>) {
        self.attacks.push((action.into(), repeat, expect));
        self.trace.push(format!("ATTACK {}", self.attacks.len()));
    }

    pub fn expect(&mut self, line: impl Into<String>) {
        self.expect.push(line.into());
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[scenario]\nname = {}\nseed = {}", self.name, self.seed);
        for h in &self.header {
            let _ = writeln!(s, "{h}");
        }
        let _ = writeln!(s, "\n[shield]\nregisters = {}", self.registers);
        for (i, e) in self.sets.iter().enumerate() {
            let _ = writeln!(
                s,
                "\n[engine_set {i}]\naes_engines = {}\nsbox = {}\nmac = {}\nmac_engines = {}",
                e.aes,
                e.sbox,
                e.mac.as_str(),
                e.mac_engines
            );
        }
        for (i, (r, base, tag)) in self.regions.iter().enumerate() {
            let _ = writeln!(
                s,
                "\n[region {}]\nid = {}\nbase = {base:#x}\nsize = {:#x}\ntag_base = {tag:#x}\nc_mem = {}\nmode = {}\ncounters = {}\nbuffer_bytes = {}\nengine_set = {}",
                r.name,
                i + 1,
                r.size,
                r.c_mem,
                r.mode,
                if r.counters { "on" } else { "off" },
                r.buffer,
                r.set
            );
        }
        let _ = writeln!(s, "\n[trace]");
        for t in &self.trace {
            let _ = writeln!(s, "{t}");
        }
        for (i, (action, repeat, expect)) in self.attacks.iter().enumerate() {
            let _ = writeln!(s, "\n[attack {}]\naction = {action}\nrepeat = {repeat}", i + 1);
            if let Some(e) = expect {
                let _ = writeln!(s, "expect = {e}");
            }
        }
        let _ = writeln!(s, "\n[expect]");
        for e in &self.expect {
            let _ = writeln!(s, "{e}");
        }
        s
    }
}

fn mib(len: u64) -> String {
    if len >= 1 << 20 {
        format!("{}m", len >> 20)
    } else {
        format!("{}k", len >> 10)
    }
}

/// Storage service: a storage region and a TLS-buffer region on two
/// identical engine sets, serving 4 KiB gets and puts.
pub fn sdp(config: char) -> String {
    let e = match config {
        'a' => Engines::new(4, 4, Mac::Hmac, 4),
        'b' => Engines::new(4, 16, Mac::Hmac, 4),
        'c' => Engines::new(4, 16, Mac::Pmac, 4),
        'd' => Engines::new(8, 16, Mac::Pmac, 8),
        'e' => Engines::new(16, 16, Mac::Pmac, 16),
        _ => panic!("unknown SDP configuration {config}"),
    };
    let mut s = ScenarioText::named(format!("sdp-{config}"));
    let (s0, s1) = (s.set(e), s.set(e));
    s.region(RegionSpec::new("storage", 8 << 20, 4096, 16 << 10, s0));
    s.region(RegionSpec::new("tls", 8 << 20, 4096, 16 << 10, s1));
    // only the spans the requests touch
    for (r, off) in [("storage", 0), ("storage", 0x40_0000), ("tls", 0), ("tls", 0x40_0000)] {
        s.preload_span(r, off, 0x20_0000);
    }
    // get: storage -> tls, put: tls -> storage
    s.op("GEN STR region=storage span=0x200000 unit=4096 count=512");
    s.op("GEN STR region=tls span=0x200000 unit=4096 count=512 write=100");
    s.op("GEN STR region=tls offset=0x400000 span=0x200000 unit=4096 count=512");
    s.op("GEN STR region=storage offset=0x400000 span=0x200000 unit=4096 count=512 write=100");
    s.render()
}

/// Streaming vector add `C = A + B`; each vector is split over four
/// regions, one engine set per region.
pub fn vector_add(sbox: u8, len: u64) -> String {
    let mut s = ScenarioText::named(format!("vadd-x{sbox}-{}", mib(len)));
    let part = len / 4;
    for v in ["a", "b", "c"] {
        for k in 0..4 {
            let set = s.set(Engines::new(1, sbox, Mac::Hmac, 1));
            let mut r = RegionSpec::new(format!("{v}{k}"), part, 512, 4096, set);
            if v == "c" {
                r = r.mode("stream_write");
            }
            s.region(r);
        }
    }
    for v in ["a", "b"] {
        for k in 0..4 {
            s.preload(&format!("{v}{k}"));
        }
    }
    let count = part / 4096;
    for k in 0..4 {
        s.op(format!("GEN STR region=a{k} unit=4096 count={count}"));
        s.op(format!("GEN STR region=b{k} unit=4096 count={count}"));
        s.op(format!("GEN STR region=c{k} unit=4096 count={count} write=100"));
    }
    s.render()
}

/// CNN inference: streamed 4 KiB weight reads and 64 B read-modify-write
/// updates to counter-protected feature maps.
pub fn dnnweaver(mac: Mac) -> String {
    let mut s = ScenarioText::named(format!("dnnweaver-{}", mac.as_str()));
    let w = s.set(match mac {
        Mac::Hmac => Engines::new(4, 16, Mac::Hmac, 1),
        Mac::Pmac => Engines::new(4, 16, Mac::Pmac, 4),
    });
    let f = s.set(Engines::new(4, 16, Mac::Hmac, 1));
    s.region(RegionSpec::new("weights", 1 << 20, 4096, 128 << 10, w));
    s.region(RegionSpec::new("fmaps", 1 << 20, 64, 64 << 10, f).counters(true));
    s.preload("weights");
    s.preload("fmaps");
    s.op("GEN STR region=weights unit=4096 count=256");
    s.op("GEN RMW region=fmaps unit=64 count=1024");
    s.render()
}

/// 3D rendering / convolution style: batched streaming over many regions.
pub fn conv() -> String {
    let mut s = ScenarioText::named("conv");
    for k in 0..8 {
        let set = s.set(Engines::new(1, 4, Mac::Hmac, 1));
        s.region(RegionSpec::new(format!("in{k}"), 256 << 10, 512, 16 << 10, set));
    }
    for k in 0..4 {
        let set = s.set(Engines::new(1, 4, Mac::Hmac, 1));
        s.region(RegionSpec::new(format!("out{k}"), 128 << 10, 512, 16 << 10, set).mode("stream_write"));
    }
    for k in 0..8 {
        s.preload(&format!("in{k}"));
    }
    for k in 0..8 {
        s.op(format!("GEN STR region=in{k} unit=512 count=512"));
    }
    for k in 0..4 {
        s.op(format!("GEN STR region=out{k} unit=512 count=256 write=100"));
    }
    s.render()
}

/// Digit recognition style: small streamed inputs, one small output.
pub fn digit() -> String {
    let mut s = ScenarioText::named("digit");
    for k in 0..2 {
        let set = s.set(Engines::new(1, 4, Mac::Hmac, 1));
        s.region(RegionSpec::new(format!("in{k}"), 48 << 10, 512, 12 << 10, set));
        s.preload(&format!("in{k}"));
    }
    let set = s.set(Engines::new(1, 4, Mac::Hmac, 1));
    s.region(RegionSpec::new("out", 12 << 10, 512, 12 << 10, set));
    s.op("GEN STR region=in0 unit=512 count=96");
    s.op("GEN STR region=in1 unit=512 count=96");
    s.op("GEN STR region=out unit=512 count=24 write=100");
    s.render()
}

/// Face detection style: small random 64 B accesses over on-chip sized
/// regions.
pub fn affine() -> String {
    let mut s = ScenarioText::named("affine");
    for k in 0..8 {
        let set = s.set(Engines::new(1, 4, Mac::Hmac, 1));
        s.region(RegionSpec::new(format!("in{k}"), 4096, 64, 4096, set));
        s.preload(&format!("in{k}"));
    }
    for k in 0..4 {
        let set = s.set(Engines::new(1, 4, Mac::Hmac, 1));
        s.region(RegionSpec::new(format!("out{k}"), 4096, 64, 4096, set));
    }
    for k in 0..8 {
        s.op(format!("GEN RA region=in{k} unit=64 count=256"));
    }
    for k in 0..4 {
        s.op(format!("GEN RA region=out{k} unit=64 count=128 write=100"));
    }
    s.render()
}

/// Bitcoin mining style: all traffic goes through sealed registers.
pub fn bitcoin() -> String {
    let mut s = ScenarioText::named("bitcoin").registers(16).header("verify_final = off");
    let set = s.set(Engines::new(1, 4, Mac::Hmac, 1));
    s.region(RegionSpec::new("scratch", 4096, 64, 4096, set));
    s.op("GEN REG count=2000 registers=16");
    s.render()
}

/// Random 64 B accesses over a working set half the buffer's size.
pub fn ra_hit() -> String {
    let mut s = ScenarioText::named("ra-hit");
    let set = s.set(Engines::new(1, 4, Mac::Hmac, 1));
    s.region(RegionSpec::new("ws", 16 << 10, 64, 32 << 10, set).counters(true));
    s.op("GEN RA region=ws unit=64 count=4000 write=30");
    s.expect("min_hit_rate = 0.9");
    s.render()
}

/// Every integrity attack class, 100 placements each, against one region
/// with or without replay counters.
pub fn detection(counters: bool) -> String {
    let name = if counters { "detect-counters" } else { "detect-no-counters" };
    let mut s = ScenarioText::named(name);
    let set = s.set(Engines::new(2, 16, Mac::Pmac, 2));
    s.region(RegionSpec::new("data", 64 << 10, 64, 4096, set).counters(counters));
    s.preload("data");
    s.op("GEN RMW region=data unit=64 count=500");
    s.attack("flipbit region=data", 100, None);
    s.attack("splice region=data", 100, None);
    s.attack("replay region=data", 100, Some(if counters { "auth_failure" } else { "undetected" }));
    s.attack("scan", 1, None);
    s.render()
}

/// Mixed workload over every pattern, with attacks interleaved.
pub fn honest() -> String {
    let mut s = ScenarioText::named("honest").registers(8).header("device serial=7 seed=5eed5eed5eed5eed5eed5eed5eed5eed5eed5eed5eed5eed5eed5eed5eed5eed");
    let big = s.set(Engines::new(4, 16, Mac::Pmac, 4));
    let small = s.set(Engines::new(1, 4, Mac::Hmac, 1));
    s.region(RegionSpec::new("bulk", 1 << 20, 4096, 32 << 10, big));
    s.region(RegionSpec::new("state", 64 << 10, 64, 4096, small).counters(true));
    s.region(RegionSpec::new("out", 256 << 10, 512, 8192, small).mode("stream_write"));
    s.preload("bulk");
    s.op("GEN STR region=bulk unit=4096 count=256");
    s.op("GEN RMW region=state unit=64 count=500");
    s.attack("flipbit region=state", 20, None);
    s.op("GEN RA region=bulk unit=64 count=500 write=40");
    s.op("GEN STR region=out unit=512 count=512 write=100");
    s.op("FLUSH");
    s.attack("replay region=state", 20, None);
    s.attack("splice region=bulk", 20, None);
    s.op("GEN REG count=200 registers=8");
    s.op("GEN RA region=state unit=64 count=500 write=50");
    s.attack("scan", 1, None);
    s.render()
}

/// Protocol-only scenarios: an honest exchange, a proxy that corrupts the
/// attestation report, and a kernel the vendor does not trust.
pub fn attest(kind: &str) -> String {
    let mut s = ScenarioText::named(format!("attest-{kind}"));
    s = match kind {
        "honest" => s,
        "tampered" => s.header("proxy = modify 1 40 0x01"),
        "untrusted" => s.header("trusted_kernel = off"),
        _ => panic!("unknown attest scenario {kind}"),
    };
    let set = s.set(Engines::new(1, 4, Mac::Hmac, 1));
    s.region(RegionSpec::new("scratch", 4096, 64, 4096, set));
    s.expect.clear();
    s.expect(match kind {
        "honest" => "protocol = accept",
        "tampered" => "protocol = reject:Verify(BadReportSig)",
        _ => "protocol = reject:Verify(UnknownKernel)",
    });
    s.render()
}

/// Targets file for `shef calibrate`.
pub fn sdp_targets() -> String {
    let mut s = String::from("# scenario\toverhead_pct\n");
    for (c, t) in SDP_CONFIGS.iter().zip(SDP_TARGETS) {
        let _ = writeln!(s, "sdp-{c}.scn\t{t}");
    }
    s
}

/// Every shipped file as `(file name, contents)`.
pub fn all() -> Vec<(String, String)> {
    let mut v = Vec::new();
    for c in SDP_CONFIGS {
        v.push((format!("sdp-{c}.scn"), sdp(c)));
    }
    v.push(("sdp-targets.tsv".into(), sdp_targets()));
    for sbox in [4, 16] {
        for len in VADD_LENGTHS {
            v.push((format!("vadd-x{sbox}-{}.scn", mib(len)), vector_add(sbox, len)));
        }
    }
    v.push(("dnnweaver-hmac.scn".into(), dnnweaver(Mac::Hmac)));
    v.push(("dnnweaver-pmac.scn".into(), dnnweaver(Mac::Pmac)));
    v.push(("conv.scn".into(), conv()));
    v.push(("digit.scn".into(), digit()));
    v.push(("affine.scn".into(), affine()));
    v.push(("bitcoin.scn".into(), bitcoin()));
    v.push(("ra-hit.scn".into(), ra_hit()));
    v.push(("detect-counters.scn".into(), detection(true)));
    v.push(("detect-no-counters.scn".into(), detection(false)));
    v.push(("honest.scn".into(), honest()));
    for k in ["honest", "tampered", "untrusted"] {
        v.push((format!("attest-{k}.scn"), attest(k)));
    }
    v
}

/// A random workload over every pattern, for transparency sweeps.
pub fn random_trace(seed: u64) -> String {
    let mut s = ScenarioText::new(format!("random-{seed}"), seed).registers(4);
    let small = s.set(Engines::new(1, 4, Mac::Hmac, 1));
    let wide = s.set(Engines::new(2, 16, Mac::Pmac, 2));
    s.region(RegionSpec::new("a", 16 << 10, 64, 512, small).counters(seed % 2 == 0));
    s.region(RegionSpec::new("b", 64 << 10, 512, 2048, wide).counters(seed % 3 == 0));
    s.region(RegionSpec::new("out", 32 << 10, 512, 2048, wide).mode("stream_write"));
    let n = 200 + seed % 200;
    s.op(format!("GEN RA region=a unit=64 count={n} write=50"));
    s.op(format!("GEN STR region=b unit=512 count={n} write={}", seed % 101));
    s.op(format!("GEN RMW region=a unit=64 count={}", n / 2));
    s.op(format!("GEN RA region=b unit=64 count={n} write=30"));
    s.op("GEN REG count=8 registers=4");
    s.op(format!("GEN RA region=b unit=1024 count={} write=50", n / 4));
    // stream_write regions only ever see whole-chunk writes
    s.op(format!("GEN STR region=out unit=512 count={n} write=100"));
    s.op(format!("GEN RA region=out unit=512 count={} write={}", n / 2, seed % 60));
    s.render()
}
