//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CGDK" | version u32 | kind str | config str | layout u64
//! | K u32 | K × beta f64 | V u32 | V × word str
//! | P u32 | P × (name str | rank u32 | dims u32… | f32…)
//! | FNV-1a u64 of everything before it
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8.

use std::path::Path;

use super::params::{fnv1a, ParamStore};
use super::schedule::NoiseSchedule;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"CGDK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config_json: String,
    pub layout_checksum: u64,
    pub schedule: NoiseSchedule,
    pub vocab: Vec<String>,
    pub params: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn capture(
        kind: &str,
        config_json: String,
        schedule: &NoiseSchedule,
        vocab: &[String],
        params: &ParamStore,
    ) -> Result<Self> {
        Ok(Self {
            kind: kind.to_string(),
            config_json,
            layout_checksum: fnv1a(params.layout().as_bytes()),
            schedule: schedule.clone(),
            vocab: vocab.to_vec(),
            params: params.export()?,
        })
    }

    /// Loads values into a freshly built network after checking that the
    /// kind and parameter layout agree.
    pub fn restore_into(&self, kind: &str, params: &ParamStore) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        if self.layout_checksum != fnv1a(params.layout().as_bytes()) {
            return Err(Error::Checkpoint("parameter layout does not match the network".into()));
        }
        params.import(&self.params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_str(&mut out, &self.kind);
        put_str(&mut out, &self.config_json);
        out.extend_from_slice(&self.layout_checksum.to_le_bytes());
        put_u32(&mut out, self.schedule.betas.len() as u32);
        for b in &self.schedule.betas {
            out.extend_from_slice(&b.to_le_bytes());
        }
        put_u32(&mut out, self.vocab.len() as u32);
        for w in &self.vocab {
            put_str(&mut out, w);
        }
        put_u32(&mut out, self.params.len() as u32);
        for (name, dims, data) in &self.params {
            put_str(&mut out, name);
            put_u32(&mut out, dims.len() as u32);
            for &d in dims {
                put_u32(&mut out, d as u32);
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(trailer.try_into().expect("8 bytes"));
        if stored != fnv1a(body) {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = r.str()?;
        let config_json = r.str()?;
        let layout_checksum = r.u64()?;
        let k = r.u32()? as usize;
        let betas = (0..k).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let schedule = NoiseSchedule::from_betas(betas);
        schedule.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let v = r.u32()? as usize;
        let vocab = (0..v).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let p = r.u32()? as usize;
        let mut params = Vec::with_capacity(p.min(4096));
        for _ in 0..p {
            let name = r.str()?;
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            params.push((name, dims, data));
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { kind, config_json, layout_checksum, schedule, vocab, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }
}
