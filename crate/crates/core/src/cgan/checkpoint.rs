use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::NetConfig;
use crate::autodiff::{BatchNorm2d, Param, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"ACCG";

pub(crate) type TensorMap = BTreeMap<String, Tensor<f32>>;

/// Named weight tensors of a training run at the end of `epoch`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetConfig,
    pub epoch: u32,
    pub tensors: BTreeMap<String, Tensor<f32>>,
}

pub(crate) fn export_layer(out: &mut TensorMap, prefix: &str, params: [&Param<f32>; 2]) {
    out.insert(format!("{prefix}.w"), params[0].value.clone());
    out.insert(format!("{prefix}.b"), params[1].value.clone());
}

pub(crate) fn import_layer(map: &mut TensorMap, prefix: &str, params: [&mut Param<f32>; 2]) -> Result<()> {
    for (p, suffix) in params.into_iter().zip(["w", "b"]) {
        p.value = take(map, &format!("{prefix}.{suffix}"), p.value.shape())?;
    }
    Ok(())
}

fn channel_tensor(v: &[f32]) -> Tensor<f32> {
    Tensor::from_vec([1, v.len(), 1, 1], v.to_vec()).expect("non-empty channel vector")
}

pub(crate) fn export_bn(out: &mut TensorMap, prefix: &str, bn: &BatchNorm2d<f32>) {
    out.insert(format!("{prefix}.gamma"), bn.gamma.value.clone());
    out.insert(format!("{prefix}.beta"), bn.beta.value.clone());
    out.insert(format!("{prefix}.mean"), channel_tensor(&bn.running_mean));
    out.insert(format!("{prefix}.var"), channel_tensor(&bn.running_var));
}

pub(crate) fn import_bn(map: &mut TensorMap, prefix: &str, bn: &mut BatchNorm2d<f32>) -> Result<()> {
    let shape = bn.gamma.value.shape();
    bn.gamma.value = take(map, &format!("{prefix}.gamma"), shape)?;
    bn.beta.value = take(map, &format!("{prefix}.beta"), shape)?;
    bn.running_mean = take(map, &format!("{prefix}.mean"), shape)?.into_vec();
    bn.running_var = take(map, &format!("{prefix}.var"), shape)?.into_vec();
    Ok(())
}

pub(crate) fn take(map: &mut TensorMap, name: &str, shape: [usize; 4]) -> Result<Tensor<f32>> {
    let t = map
        .remove(name)
        .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {name}")))?;
    if t.shape() != shape {
        return Err(Error::Format(format!(
            "tensor {name} has shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(t)
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&ckpt.config.digest());
    buf.extend_from_slice(&ckpt.epoch.to_le_bytes());
    buf.extend_from_slice(&(ckpt.tensors.len() as u32).to_le_bytes());
    for (name, t) in &ckpt.tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        for d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Parses a checkpoint written for `config`; any other architecture is rejected.
pub fn read_checkpoint<R: Read>(mut r: R, config: &NetConfig) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a generator checkpoint (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest)?;
    if digest != config.digest() {
        return Err(Error::Format(format!(
            "checkpoint was written for a different network than {config:?}"
        )));
    }
    let epoch = read_u32(&mut r)?;
    let count = read_u32(&mut r)?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        if len > 256 {
            return Err(Error::Format("tensor name too long".into()));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name not utf-8".into()))?;
        let mut shape = [0usize; 4];
        for d in &mut shape {
            *d = read_u32(&mut r)? as usize;
        }
        let n: usize = shape.iter().product();
        if n == 0 || n > 1 << 28 {
            return Err(Error::Format(format!("tensor {name} has implausible shape {shape:?}")));
        }
        let mut raw = vec![0u8; 4 * n];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.insert(name, Tensor::from_vec(shape, data)?);
    }
    Ok(Checkpoint {
        config: *config,
        epoch,
        tensors,
    })
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, self)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path, config: &NetConfig) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        read_checkpoint(bytes.as_slice(), config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut tensors = BTreeMap::new();
        tensors.insert("a.w".to_string(), Tensor::from_vec([1, 2, 1, 2], vec![1.0, -2.0, 3.5, 0.0]).unwrap());
        tensors.insert("b".to_string(), Tensor::filled([2, 1, 1, 1], 0.25));
        Checkpoint {
            config: NetConfig { image_size: 64, base_channels: 8 },
            epoch: 7,
            tensors,
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c).unwrap();
        assert_eq!(&buf[..4], b"ACCG");
        assert_eq!(read_checkpoint(buf.as_slice(), &c.config).unwrap(), c);
    }

    #[test]
    fn rejects_other_network() {
        let c = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c).unwrap();
        let other = NetConfig { image_size: 64, base_channels: 16 };
        assert!(matches!(read_checkpoint(buf.as_slice(), &other), Err(Error::Format(_))));
        buf[0] = b'X';
        assert!(read_checkpoint(buf.as_slice(), &c.config).is_err());
    }

    #[test]
    fn rejects_truncation() {
        let c = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(buf.as_slice(), &c.config).is_err());
    }
}
