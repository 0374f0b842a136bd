//! Post-burn-in sample storage: a versioned length-prefixed binary record
//! file plus a JSON metadata sidecar, with an optional flat CSV export.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::FitConfig;
use crate::error::{Error, Result};

pub const TRACE_MAGIC: &[u8; 6] = b"ZIBNP1";

/// One stored iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    pub cluster_count: u32,
    pub log_joint: f64,
    pub accept_rate: f64,
    /// Taxon-to-cluster allocations at this iteration.
    pub alloc: Vec<u32>,
    /// Per-cluster conditional probability of being non-differential.
    pub cluster_nonda: Vec<f64>,
    /// Per-taxon conditional probability of being non-differential.
    pub taxon_nonda: Vec<f64>,
}

/// Run-level metadata stored next to the records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceMeta {
    pub format_version: u32,
    pub config: FitConfig,
    pub chain: u64,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub taxon_names: Vec<String>,
    /// Taxa called DA by screening, merged back in at reporting time.
    pub forced_da: Vec<String>,
    /// Taxa dropped as all-zero.
    pub dropped: Vec<String>,
    pub reference_taxon: String,
    pub rw_accept_rate: f64,
    pub max_constraint_residual: f64,
    #[serde(default)]
    pub input_digests: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(TRACE_MAGIC);
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.meta.p as u32).to_le_bytes());
        let c_max = self
            .records
            .iter()
            .map(|r| r.cluster_count)
            .max()
            .unwrap_or(0);
        buf.extend_from_slice(&c_max.to_le_bytes());
        for rec in &self.records {
            let mut body: Vec<u8> = Vec::new();
            body.extend_from_slice(&rec.iteration.to_le_bytes());
            body.extend_from_slice(&rec.cluster_count.to_le_bytes());
            body.extend_from_slice(&rec.log_joint.to_le_bytes());
            body.extend_from_slice(&rec.accept_rate.to_le_bytes());
            body.extend_from_slice(&(rec.alloc.len() as u32).to_le_bytes());
            for &a in &rec.alloc {
                body.extend_from_slice(&a.to_le_bytes());
            }
            body.extend_from_slice(&(rec.cluster_nonda.len() as u32).to_le_bytes());
            for &v in &rec.cluster_nonda {
                body.extend_from_slice(&v.to_le_bytes());
            }
            body.extend_from_slice(&(rec.taxon_nonda.len() as u32).to_le_bytes());
            for &v in &rec.taxon_nonda {
                body.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&(body.len() as u32).to_le_bytes());
            buf.extend_from_slice(&body);
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_meta(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| Error::Model(format!("metadata serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(binary_path: &Path, meta_path: &Path) -> Result<Trace> {
        let meta_text = std::fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
        let meta: TraceMeta = serde_json::from_str(&meta_text)
            .map_err(|e| Error::Load(format!("{}: bad metadata: {e}", meta_path.display())))?;
        let mut f = std::fs::File::open(binary_path).map_err(|e| Error::io(binary_path, e))?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)
            .map_err(|e| Error::io(binary_path, e))?;
        let mut cur = Cursor::new(&buf, binary_path);
        let magic = cur.take(6)?;
        if magic != TRACE_MAGIC {
            return Err(Error::Load(format!(
                "{}: not a trace file (bad magic)",
                binary_path.display()
            )));
        }
        let version = cur.u32()?;
        if version != 1 {
            return Err(Error::Load(format!(
                "{}: unsupported trace version {version}",
                binary_path.display()
            )));
        }
        let count = cur.u64()? as usize;
        let _p = cur.u32()?;
        let _c_max = cur.u32()?;
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let _len = cur.u32()?;
            let iteration = cur.u64()?;
            let cluster_count = cur.u32()?;
            let log_joint = cur.f64()?;
            let accept_rate = cur.f64()?;
            let na = cur.u32()? as usize;
            let mut alloc = Vec::with_capacity(na);
            for _ in 0..na {
                alloc.push(cur.u32()?);
            }
            let nc = cur.u32()? as usize;
            let mut cluster_nonda = Vec::with_capacity(nc);
            for _ in 0..nc {
                cluster_nonda.push(cur.f64()?);
            }
            let nt = cur.u32()? as usize;
            let mut taxon_nonda = Vec::with_capacity(nt);
            for _ in 0..nt {
                taxon_nonda.push(cur.f64()?);
            }
            records.push(TraceRecord {
                iteration,
                cluster_count,
                log_joint,
                accept_rate,
                alloc,
                cluster_nonda,
                taxon_nonda,
            });
        }
        Ok(Trace { records, meta })
    }

    /// Flat per-iteration diagnostics.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,cluster_count,log_joint,accept_rate\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.iteration, r.cluster_count, r.log_joint, r.accept_rate
            ));
        }
        out
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Cursor { buf, pos: 0, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Load(format!(
                "{}: truncated trace file at byte {}",
                self.path.display(),
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
