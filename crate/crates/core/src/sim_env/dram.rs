use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

/// Default addressable size: 64 MiB.
pub const DEFAULT_DRAM_BYTES: u64 = 64 << 20;

const PAGE: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("DRAM access [{addr:#x}, +{len}) out of bounds")]
pub struct DramFault {
    pub addr: u64,
    pub len: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DramCounters {
    pub reads: u64,
    pub writes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
}

/// Untrusted device memory.
///
/// Storage is paged and allocated on first write; untouched pages read as
/// zero. Every access, including the adversary's, goes through the counters.
#[derive(Clone, Debug)]
pub struct SimDram {
    size: u64,
    pages: BTreeMap<u64, Box<[u8]>>,
    counters: DramCounters,
}

impl Default for SimDram {
    fn default() -> Self {
        Self::new(DEFAULT_DRAM_BYTES)
    }
}

impl SimDram {
    pub fn new(size: u64) -> Self {
        Self { size, pages: BTreeMap::new(), counters: DramCounters::default() }
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn counters(&self) -> DramCounters {
        self.counters
    }

    fn check(&self, addr: u64, len: usize) -> Result<(), DramFault> {
        let len = len as u64;
        match addr.checked_add(len) {
            Some(end) if end <= self.size => Ok(()),
            _ => Err(DramFault { addr, len }),
        }
    }

    pub fn read(&mut self, addr: u64, len: usize) -> Result<Vec<u8>, DramFault> {
        let mut out = vec![0u8; len];
        self.read_into(addr, &mut out)?;
        Ok(out)
    }

    pub fn read_into(&mut self, addr: u64, out: &mut [u8]) -> Result<(), DramFault> {
        self.check(addr, out.len())?;
        self.counters.reads += 1;
        self.counters.bytes_read += out.len() as u64;
        self.copy_out(addr, out);
        Ok(())
    }

    pub fn write(&mut self, addr: u64, data: &[u8]) -> Result<(), DramFault> {
        self.check(addr, data.len())?;
        self.counters.writes += 1;
        self.counters.bytes_written += data.len() as u64;
        let mut done = 0usize;
        while done < data.len() {
            let a = addr + done as u64;
            let (page, off) = (a / PAGE, (a % PAGE) as usize);
            let n = (PAGE as usize - off).min(data.len() - done);
            let p = self.pages.entry(page).or_insert_with(|| vec![0u8; PAGE as usize].into_boxed_slice());
            p[off..off + n].copy_from_slice(&data[done..done + n]);
            done += n;
        }
        Ok(())
    }

    fn copy_out(&self, addr: u64, out: &mut [u8]) {
        let mut done = 0usize;
        while done < out.len() {
            let a = addr + done as u64;
            let (page, off) = (a / PAGE, (a % PAGE) as usize);
            let n = (PAGE as usize - off).min(out.len() - done);
            match self.pages.get(&page) {
                Some(p) => out[done..done + n].copy_from_slice(&p[off..off + n]),
                None => out[done..done + n].fill(0),
            }
            done += n;
        }
    }

    /// Maximal runs of allocated pages as `(start address, bytes)`.
    pub fn touched_runs(&self) -> Vec<(u64, Vec<u8>)> {
        let mut runs: Vec<(u64, Vec<u8>)> = Vec::new();
        for (page, data) in &self.pages {
            let start = page * PAGE;
            match runs.last_mut() {
                Some((s, buf)) if *s + buf.len() as u64 == start => buf.extend_from_slice(data),
                _ => runs.push((start, data.to_vec())),
            }
        }
        runs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_write_and_bounds() {
        let mut d = SimDram::new(3 * PAGE);
        d.write(PAGE - 3, b"straddle").unwrap();
        assert_eq!(d.read(PAGE - 3, 8).unwrap(), b"straddle");
        assert_eq!(d.read(0, 4).unwrap(), [0; 4]);
        assert_eq!(d.read(3 * PAGE - 1, 2), Err(DramFault { addr: 3 * PAGE - 1, len: 2 }));
        assert!(d.write(u64::MAX, b"x").is_err());
        let c = d.counters();
        assert_eq!((c.reads, c.writes, c.bytes_read, c.bytes_written), (2, 1, 12, 8));
        let runs = d.touched_runs();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].0, 0);
        assert_eq!(runs[0].1.len(), 2 * PAGE as usize);
    }
}
