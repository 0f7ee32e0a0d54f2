//! Binary checkpoints.
//!
//! Layout, all integers little endian:
//!
//! ```text
//! magic     b"G2GCKPT\0"
//! version   u32
//! config    u32 length + compact JSON
//! digest    32 bytes, SHA-256 of the config JSON
//! count     u32
//! tensors   count × (u32 name length, name, u32 rank, rank × u64 dims, f64 data)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{G2GModel, ModelConfig};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"G2GCKPT\0";

pub fn save_checkpoint(model: &G2GModel, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn write_checkpoint<W: Write>(model: &G2GModel, out: &mut W) -> Result<()> {
    let json = model.config().to_json();
    out.write_all(MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    write_len(out, json.len())?;
    out.write_all(json.as_bytes())?;
    out.write_all(&Sha256::digest(json.as_bytes()))?;
    let params = model.params();
    write_len(out, params.len())?;
    for (name, t) in params.iter() {
        write_len(out, name.len())?;
        out.write_all(name.as_bytes())?;
        write_len(out, t.rank())?;
        for &d in t.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in t.data() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn write_len<W: Write>(out: &mut W, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Checkpoint(format!("length {n} does not fit in u32")))?;
    out.write_all(&n.to_le_bytes())?;
    Ok(())
}

/// Reads a checkpoint and rebuilds the model it was written from.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<G2GModel> {
    let bytes = fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}

/// Like [`load_checkpoint`], but fails unless the stored configuration is
/// exactly `expected`.
pub fn load_checkpoint_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<G2GModel> {
    let model = load_checkpoint(path)?;
    let (found, want) = (model.config().digest(), expected.digest());
    if found != want {
        return Err(Error::Checkpoint(format!(
            "checkpoint config digest {found} does not match expected {want}"
        )));
    }
    Ok(model)
}

fn read_checkpoint<R: Read>(input: &mut R) -> Result<G2GModel> {
    let mut magic = [0u8; 8];
    read_exact(input, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = read_u32(input)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let json = read_bytes(input)?;
    let mut digest = [0u8; 32];
    read_exact(input, &mut digest)?;
    if Sha256::digest(&json).as_slice() != digest {
        return Err(Error::Checkpoint("config digest mismatch".into()));
    }
    let config: ModelConfig = serde_json::from_slice(&json)?;

    let count = read_u32(input)? as usize;
    let mut stored = ParamStore::new();
    for _ in 0..count {
        let name = String::from_utf8(read_bytes(input)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = read_u32(input)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            read_exact(input, &mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let mut b = [0u8; 8];
            read_exact(input, &mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        stored.add(name, Tensor::new(shape, data)?);
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }

    let mut model = G2GModel::new(config)?;
    model.params_mut().load_from(&stored)?;
    Ok(model)
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|_| Error::Checkpoint("checkpoint is truncated".into()))
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes<R: Read>(input: &mut R) -> Result<Vec<u8>> {
    let n = read_u32(input)? as usize;
    let mut buf = vec![0u8; n];
    read_exact(input, &mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        let mut c = ModelConfig::max_clique(5);
        c.edge_hidden = 3;
        c.node_hidden = 2;
        c.down_hidden = 2;
        c.emb_dim = 2;
        c.head_hidden = vec![3];
        c.attn_hidden = 4;
        c.seed = 11;
        c
    }

    #[test]
    fn round_trip_is_bitwise() {
        let model = G2GModel::new(small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.config(), model.config());
        for (a, b) in model.params().tensors().iter().zip(back.params().tensors()) {
            assert_eq!(a.shape(), b.shape());
            let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(same);
        }
    }

    #[test]
    fn rejects_other_config() {
        let model = G2GModel::new(small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &path).unwrap();
        assert!(load_checkpoint_expecting(&path, &small()).is_ok());
        let mut other = small();
        other.seed = 12;
        assert!(matches!(
            load_checkpoint_expecting(&path, &other),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn rejects_corruption() {
        let model = G2GModel::new(small()).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());

        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());

        // flip a byte inside the config JSON
        let mut bad = buf.clone();
        bad[20] ^= 1;
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());

        let truncated = &buf[..buf.len() - 3];
        assert!(read_checkpoint(&mut &truncated[..]).is_err());
    }
}
