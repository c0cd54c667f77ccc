//! Versioned binary checkpoint container.
//!
//! Layout: the 8-byte magic `LFVSCKPT`, a little-endian `u32` format version,
//! a `u64` header length, a JSON header (architecture, step, parameter names
//! and shapes, metadata), then every parameter as little-endian `f64` in
//! header order, followed by the optimizer moments when present.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::networks::{ModelConfig, ModelParams};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"LFVSCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Adam moment estimates, one tensor per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub step: u64,
    pub optimizer: Option<OptimizerState>,
    /// Free-form tags (validation PSNR, seed, diagnostic reason, ...).
    pub meta: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: u64,
    params: Vec<(String, [usize; 4])>,
    optimizer_t: Option<u64>,
    meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(model: ModelParams, step: u64) -> Self {
        Checkpoint {
            model,
            step,
            optimizer: None,
            meta: BTreeMap::new(),
        }
    }

    /// Write atomically (temporary file, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            config: self.model.config.clone(),
            step: self.step,
            params: self
                .model
                .store
                .iter()
                .map(|(_, n, t)| (n.to_string(), t.shape()))
                .collect(),
            optimizer_t: self.optimizer.as_ref().map(|o| o.t),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)
            .map_err(|e| Error::Checkpoint(format!("encoding header: {e}")))?;
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        let tmp = path.with_extension("tmp");
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(MAGIC)?;
            w.write_all(&FORMAT_VERSION.to_le_bytes())?;
            w.write_all(&(json.len() as u64).to_le_bytes())?;
            w.write_all(&json)?;
            let mut put = |t: &Tensor| -> std::io::Result<()> {
                for v in t.data() {
                    w.write_all(&v.to_le_bytes())?;
                }
                Ok(())
            };
            for (_, _, t) in self.model.store.iter() {
                put(t)?;
            }
            if let Some(opt) = &self.optimizer {
                for t in opt.m.iter().chain(&opt.v) {
                    put(t)?;
                }
            }
            w.into_inner().map_err(|e| e.into_error())?.sync_all()
        };
        write().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |what: &str| Error::Checkpoint(format!("{}: {what}", path.display()));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(|_| bad("truncated"))?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(|_| bad("truncated"))?;
        let len = u64::from_le_bytes(b8) as usize;
        if len > 64 << 20 {
            return Err(bad("implausible header length"));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| bad(&format!("header: {e}")))?;

        let mut model = ModelParams::new(header.config, 0)?;
        let expected: Vec<(String, [usize; 4])> = model
            .store
            .iter()
            .map(|(_, n, t)| (n.to_string(), t.shape()))
            .collect();
        if expected != header.params {
            return Err(bad("parameter layout does not match its architecture"));
        }
        let mut take = |shape: [usize; 4]| -> Result<Tensor> {
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * 8];
            r.read_exact(&mut raw).map_err(|_| bad("truncated parameter data"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            Tensor::from_vec(shape, data)
        };
        let ids: Vec<_> = model.store.ids().collect();
        for (&id, (_, shape)) in ids.iter().zip(&expected) {
            *model.store.get_mut(id) = take(*shape)?;
        }
        let optimizer = match header.optimizer_t {
            Some(t) => {
                let m = expected.iter().map(|(_, s)| take(*s)).collect::<Result<Vec<_>>>()?;
                let v = expected.iter().map(|(_, s)| take(*s)).collect::<Result<Vec<_>>>()?;
                Some(OptimizerState { t, m, v })
            }
            None => None,
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint {
            model,
            step: header.step,
            optimizer,
            meta: header.meta,
        })
    }

    /// Load and require the stored architecture to equal `expected`.
    pub fn load_compatible(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if &ckpt.model.config != expected {
            return Err(Error::Checkpoint(format!(
                "{} was trained with {:?}, expected {:?}",
                path.display(),
                ckpt.model.config,
                expected
            )));
        }
        Ok(ckpt)
    }

    /// Short content fingerprint (FNV-1a over all parameter bits) used to tag
    /// reports.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, _, t) in self.model.store.iter() {
            for v in t.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_optimizer_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let model = ModelParams::new(ModelConfig::micro(3, 1, 2), 5).unwrap();
        let mut ck = Checkpoint::new(model, 42);
        let shapes: Vec<_> = ck.model.store.iter().map(|(_, _, t)| t.shape()).collect();
        ck.optimizer = Some(OptimizerState {
            t: 42,
            m: shapes.iter().map(|&s| Tensor::full(s, 0.25)).collect(),
            v: shapes.iter().map(|&s| Tensor::full(s, 1e-9)).collect(),
        });
        ck.meta.insert("val_psnr".into(), "31.5".into());
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.model, ck.model);
        assert_eq!(back.step, 42);
        assert_eq!(back.optimizer, ck.optimizer);
        assert_eq!(back.meta, ck.meta);
        assert_eq!(back.fingerprint(), ck.fingerprint());
    }

    #[test]
    fn rejects_mismatch_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.ckpt");
        let cfg = ModelConfig::micro(2, 1, 1);
        Checkpoint::new(ModelParams::new(cfg.clone(), 0).unwrap(), 0)
            .save(&path)
            .unwrap();
        assert!(Checkpoint::load_compatible(&path, &cfg).is_ok());
        let other = ModelConfig::micro(2, 3, 3);
        assert!(matches!(
            Checkpoint::load_compatible(&path, &other),
            Err(Error::Checkpoint(_))
        ));
        let junk = dir.path().join("junk.ckpt");
        std::fs::write(&junk, b"not a checkpoint").unwrap();
        assert!(Checkpoint::load(&junk).is_err());

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&junk, &bytes[..bytes.len() - 4]).unwrap();
        assert!(Checkpoint::load(&junk).is_err());
    }
}
