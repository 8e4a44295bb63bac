//! Model checkpoints: magic line, length-prefixed JSON header, then the
//! parameters as little-endian `f64`.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use super::mlp::{MlpArchitecture, MlpScore};
use crate::error::{Error, Result};
use crate::series::Domain;

pub const CHECKPOINT_MAGIC: &[u8; 16] = b"FREQDIFF-CKPT-1\n";

/// Header bytes above this are treated as corruption.
const MAX_HEADER: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: MlpArchitecture,
    pub domain: Domain,
    pub config_hash: String,
    pub n_params: usize,
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &MlpScore, config_hash: &str) -> Result<()> {
    let header = CheckpointHeader {
        architecture: model.architecture().clone(),
        domain: model.architecture().domain,
        config_hash: config_hash.to_string(),
        n_params: model.n_params(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut block = Vec::with_capacity(8 * model.n_params());
    for p in model.params() {
        block.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&block)?;
    w.flush()?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(MlpScore, CheckpointHeader)> {
    let mut magic = [0u8; 16];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let mut len = [0u8; 8];
    read_exact(&mut r, &mut len, "header length")?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(Error::Checkpoint(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    read_exact(&mut r, &mut json, "header")?;
    let header: CheckpointHeader = serde_json::from_slice(&json)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.domain != header.architecture.domain {
        return Err(Error::Checkpoint("domain tag disagrees with architecture".into()));
    }
    let mut block = vec![0u8; 8 * header.n_params];
    read_exact(&mut r, &mut block, "parameter block")?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameter block".into()));
    }
    let params: Vec<f64> = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let model = MlpScore::from_parts(header.architecture.clone(), params)
        .map_err(|e| Error::Checkpoint(format!("parameters do not fit the architecture: {e}")))?;
    Ok((model, header))
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &MlpScore, config_hash: &str) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Io(e).context(format!("writing {}", path.display())))?;
    write_checkpoint(std::io::BufWriter::new(file), model, config_hash)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(MlpScore, CheckpointHeader)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(e).context(format!("reading {}", path.display())))?;
    read_checkpoint(std::io::BufReader::new(file))
        .map_err(|e| e.context(format!("checkpoint {}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::ScoreModel;
    use crate::stochastic::Rng;

    fn model() -> MlpScore {
        let mut m = MlpScore::new(MlpArchitecture {
            n: 5,
            m: 2,
            domain: Domain::Frequency,
            hidden_sizes: vec![8],
            time_features: 4,
            time_scale: 16.0,
            embed_dim: 4,
            scale_by_sigma: true,
            gaussian_skip: false,
            beta_min: 0.1,
            beta_max: 20.0,
            seed: 1,
        })
        .unwrap();
        let mut rng = Rng::new(0, 0);
        for p in m.params_mut() {
            *p = rng.normal();
        }
        m
    }

    #[test]
    fn round_trip_preserves_outputs() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m, "abc").unwrap();
        let (back, header) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(header.config_hash, "abc");
        assert_eq!(back.params(), m.params());
        let x = Rng::new(3, 0).normal_matrix(2, 10);
        assert_eq!(
            back.score_batch(x.view(), &[0.2, 0.9]).unwrap(),
            m.score_batch(x.view(), &[0.2, 0.9]).unwrap()
        );
    }

    #[test]
    fn corruption_is_detected() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m, "abc").unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Checkpoint(_))));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(read_checkpoint(short), Err(Error::Checkpoint(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_checkpoint(long.as_slice()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let m = model();
        save_checkpoint(&path, &m, "h").unwrap();
        let (back, _) = load_checkpoint(&path).unwrap();
        assert_eq!(back.params(), m.params());
        assert!(load_checkpoint(dir.path().join("missing")).is_err());
    }
}
