//! Binary checkpoint: magic `GRCK`, version `u32`, input width `u64`, output
//! width `u64`, a flag byte (bit 0 bias, bit 1 batch norm, bit 2 projector,
//! bit 3 PReLU), then every tensor's values in declaration order as `f64`.
//! Little-endian throughout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::neuro::params::{Activation, ModelConfig, ModelParams};
use crate::rng;

const MAGIC: &[u8; 4] = b"GRCK";
const VERSION: u32 = 1;

pub fn write_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let c = &params.config;
    let flags = u8::from(c.bias)
        | u8::from(c.batch_norm) << 1
        | u8::from(c.projector) << 2
        | u8::from(c.activation == Activation::Prelu) << 3;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(c.in_dim as u64).to_le_bytes())?;
    w.write_all(&(c.dim as u64).to_le_bytes())?;
    w.write_all(&[flags])?;
    for t in params.tensors() {
        for v in &t.value {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 4 + 4 + 8 + 8 + 1];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(Error::Format(format!("{}: not a checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("checkpoint version {version} unsupported")));
    }
    let in_dim = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let flags = head[24];
    let config = ModelConfig {
        in_dim,
        dim,
        activation: if flags & 8 != 0 { Activation::Prelu } else { Activation::Relu },
        bias: flags & 1 != 0,
        batch_norm: flags & 2 != 0,
        projector: flags & 4 != 0,
    };
    let mut params = ModelParams::init(config, &mut rng::stream(0, &[]))?;
    let mut b = [0u8; 8];
    for t in params.tensors_mut() {
        for v in t.value.iter_mut() {
            r.read_exact(&mut b)
                .map_err(|_| Error::Format(format!("checkpoint truncated in tensor {}", t.name)))?;
            *v = f64::from_le_bytes(b);
        }
    }
    if r.read(&mut b)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint tensors".into()));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for act in [Activation::Relu, Activation::Prelu] {
            let p = ModelParams::init(ModelConfig::new(7, 5, act), &mut rng::stream(3, &[])).unwrap();
            let path = dir.path().join("m.grck");
            write_checkpoint(&path, &p).unwrap();
            assert_eq!(read_checkpoint(&path).unwrap(), p);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = ModelParams::init(ModelConfig::new(3, 2, Activation::Relu), &mut rng::stream(3, &[])).unwrap();
        let path = dir.path().join("m.grck");
        write_checkpoint(&path, &p).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format(_))));
    }
}
