//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "IDDMCKPT"
//! version    u32
//! K, L, hidden, time_dim   u32 each
//! config     u32 length + UTF-8 text (canonical RunConfig)
//! params     u64 count + f64 values
//! checksum   32 bytes, SHA-256 of everything above
//! ```

use std::path::Path;

use iddm_core::denoiser::DenoiserParams;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{io_at, CliError, Result};

pub const MAGIC: &[u8; 8] = b"IDDMCKPT";
pub const VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: DenoiserParams,
}

impl Checkpoint {
    pub fn new(config: RunConfig, params: DenoiserParams) -> Result<Self> {
        let c = Self { config, params };
        c.check_dims()?;
        Ok(c)
    }

    fn check_dims(&self) -> Result<()> {
        let (c, p) = (&self.config, &self.params);
        let want = (c.categories(), c.length(), c.hidden, c.time_dim);
        let have = (p.categories(), p.positions(), p.hidden(), p.time_dim());
        if want != have {
            return Err(CliError::Dims(format!(
                "config implies (K, L, hidden, time_dim) = {want:?}, parameters have {have:?}"
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let config = self.config.to_text();
        let mut out = Vec::with_capacity(64 + config.len() + 8 * p.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for d in [p.categories(), p.positions(), p.hidden(), p.time_dim()] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        for v in p.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| CliError::Checkpoint(m.to_string());
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut r = Reader {
            bytes,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != VERSION {
            return Err(CliError::Version {
                found: version,
                expected: VERSION,
            });
        }
        if bytes.len() < CHECKSUM_LEN {
            return Err(bad("truncated"));
        }
        let (body, stored) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != stored {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader {
            bytes: body,
            pos: r.pos,
        };
        let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
        let config_len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(config_len)?).map_err(|_| bad("config is not UTF-8"))?;
        let config = RunConfig::parse(text)?;
        let count = r.u64()? as usize;
        if count.checked_mul(8) != Some(body.len() - r.pos) {
            return Err(bad("parameter count does not match payload size"));
        }
        let values: Vec<f64> = r
            .take(count * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let params = DenoiserParams::from_values(dims[0], dims[1], dims[2], dims[3], values)?;
        Checkpoint::new(config, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(io_at(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(io_at(path))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CliError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
