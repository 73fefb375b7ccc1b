//! Versioned binary checkpoint container.
//!
//! Layout: magic, format version, architecture fingerprint, init seed,
//! config (JSON, length-prefixed), f32 parameter tensor, and optionally the
//! optimizer state. All integers little-endian. Round trips are bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::optim::OptimizerState;
use super::{ModelConfig, ModelParams};

const MAGIC: &[u8; 4] = b"SLCK";
const VERSION: u32 = 1;

pub fn save_checkpoint(
    params: &ModelParams<f32>,
    opt_state: Option<&OptimizerState<f32>>,
    path: &Path,
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&params.fingerprint().to_le_bytes());
    buf.extend_from_slice(&params.seed.to_le_bytes());
    let cfg = serde_json::to_vec(&params.config).expect("config serializes");
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg);
    write_f32s(&mut buf, &params.flat);
    match opt_state {
        None => buf.push(0),
        Some(st) => {
            buf.push(1);
            buf.extend_from_slice(&st.step.to_le_bytes());
            buf.extend_from_slice(&st.lr.to_le_bytes());
            write_f32s(&mut buf, &st.m);
            write_f32s(&mut buf, &st.v);
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, Option<OptimizerState<f32>>)> {
    let data = fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let mut r = Cursor { data: &data, pos: 0, path };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!("{}: bad magic", path.display())));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let fingerprint = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    let seed = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    let cfg_len = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(cfg_len)?)
        .map_err(|e| Error::Checkpoint(format!("{}: bad config: {e}", path.display())))?;
    if config.fingerprint() != fingerprint {
        return Err(Error::Checkpoint(format!(
            "{}: architecture fingerprint mismatch",
            path.display()
        )));
    }
    let flat = r.read_f32s()?;
    if flat.len() != config.layout().total() {
        return Err(Error::Checkpoint(format!(
            "{}: parameter count {} does not match architecture ({})",
            path.display(),
            flat.len(),
            config.layout().total()
        )));
    }
    let opt = match r.take(1)?[0] {
        0 => None,
        1 => {
            let step = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
            let lr = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
            let m = r.read_f32s()?;
            let v = r.read_f32s()?;
            if m.len() != flat.len() || v.len() != flat.len() {
                return Err(Error::Checkpoint(format!(
                    "{}: optimizer moments shaped unlike parameters",
                    path.display()
                )));
            }
            Some(OptimizerState { step, lr, m, v })
        }
        b => {
            return Err(Error::Checkpoint(format!(
                "{}: bad optimizer flag {b}",
                path.display()
            )))
        }
    };
    if !r.at_end() {
        return Err(Error::Checkpoint(format!("{}: trailing bytes", path.display())));
    }
    Ok((ModelParams { config, seed, flat }, opt))
}

/// Loads and additionally insists on a specific architecture.
pub fn load_checkpoint_expect(
    path: &Path,
    expected: &ModelConfig,
) -> Result<(ModelParams<f32>, Option<OptimizerState<f32>>)> {
    let (params, opt) = load_checkpoint(path)?;
    if params.config.fingerprint() != expected.fingerprint() {
        return Err(Error::Checkpoint(format!(
            "{}: checkpoint architecture does not match the configured model",
            path.display()
        )));
    }
    Ok((params, opt))
}

fn write_f32s(buf: &mut Vec<u8>, vals: &[f32]) {
    buf.extend_from_slice(&(vals.len() as u64).to_le_bytes());
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint(format!("{}: truncated file", self.path.display())));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn read_f32s(&mut self) -> Result<Vec<f32>> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize;
        let bytes = self.take(n * 4)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn at_end(&self) -> bool {
        self.pos == self.data.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, net, ModelConfig};
    use crate::vocab::{TokenSeq, Vocab};

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 18,
            width: 16,
            layers: 1,
            heads: 2,
            max_seq_len: 16,
            param_budget: 1_000_000,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p: ModelParams<f32> = init_model(cfg(), 4).unwrap();
        let st = OptimizerState::new(p.flat.len(), 1e-3);
        let path1 = dir.path().join("a.ckpt");
        let path2 = dir.path().join("b.ckpt");
        save_checkpoint(&p, Some(&st), &path1).unwrap();
        let (p2, st2) = load_checkpoint(&path1).unwrap();
        save_checkpoint(&p2, st2.as_ref(), &path2).unwrap();
        assert_eq!(std::fs::read(&path1).unwrap(), std::fs::read(&path2).unwrap());
        assert_eq!(p.flat, p2.flat);
    }

    #[test]
    fn scores_survive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p: ModelParams<f32> = init_model(cfg(), 9).unwrap();
        let v = Vocab::new(18).unwrap();
        let ctx = TokenSeq::context(vec![13, 14], &v).unwrap();
        let tgt = TokenSeq::target_from_body(&[15, 16], &v).unwrap();
        let (_, before) = net::sequence_log_prob(&p, &ctx, &tgt).unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&p, None, &path).unwrap();
        let (p2, _) = load_checkpoint(&path).unwrap();
        let (_, after) = net::sequence_log_prob(&p2, &ctx, &tgt).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn corrupt_and_mismatched_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p: ModelParams<f32> = init_model(cfg(), 4).unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&p, None, &path).unwrap();

        // flip a fingerprint byte
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[9] ^= 0xff;
        let bad = dir.path().join("bad.ckpt");
        std::fs::write(&bad, &bytes).unwrap();
        assert!(load_checkpoint(&bad).is_err());

        // truncate
        let trunc = dir.path().join("trunc.ckpt");
        std::fs::write(&trunc, &std::fs::read(&path).unwrap()[..40]).unwrap();
        assert!(load_checkpoint(&trunc).is_err());

        // wrong expected architecture
        let mut other = cfg();
        other.width = 8;
        assert!(load_checkpoint_expect(&path, &other).is_err());
        assert!(load_checkpoint_expect(&path, &cfg()).is_ok());
    }
}
