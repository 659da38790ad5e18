//! Binary weight archive.
//!
//! Layout, all integers little-endian: magic `PCMW`, format version `u32`,
//! tensor count `u32`; per tensor: name length `u16`, UTF-8 name, dtype `u8`
//! (0 = f32, 1 = f64), rank `u8`, `rank` dims as `u64`, raw data.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::model::{build_model, Model, ModelConfig};
use crate::nn::Params;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PCMW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> u8 {
        match self {
            Self::F32(_) => 0,
            Self::F64(_) => 1,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::F32(v) => v.len(),
            Self::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: TensorData,
}

pub fn encode_archive(tensors: &[Tensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let count = u32::try_from(tensors.len()).map_err(|_| Error::Format("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for t in tensors {
        let name_len = u16::try_from(t.name.len())
            .map_err(|_| Error::Format(format!("tensor name '{}' is too long", t.name)))?;
        let rank = u8::try_from(t.dims.len())
            .map_err(|_| Error::Format(format!("tensor '{}' has too many dims", t.name)))?;
        let numel: u64 = t.dims.iter().product();
        if numel != t.data.len() as u64 {
            return Err(Error::Format(format!(
                "tensor '{}' has {} values for dims {:?}",
                t.name,
                t.data.len(),
                t.dims
            )));
        }
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.data.dtype());
        out.push(rank);
        for d in &t.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &t.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("archive truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

pub fn decode_archive(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, not a weight archive".into()));
    }
    let version = u32::from_le_bytes(r.array("version")?);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported archive version {version}")));
    }
    let count = u32::from_le_bytes(r.array("tensor count")?);
    let mut tensors = Vec::new();
    let mut seen = BTreeSet::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(r.array("name length")?) as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        if !seen.insert(name.clone()) {
            return Err(Error::Format(format!("duplicate tensor '{name}'")));
        }
        let [dtype] = r.array("dtype")?;
        let [rank] = r.array("rank")?;
        let dims = (0..rank)
            .map(|_| r.array("dims").map(u64::from_le_bytes))
            .collect::<Result<Vec<u64>>>()?;
        let numel = dims
            .iter()
            .try_fold(1u64, |a, &d| a.checked_mul(d))
            .and_then(|n| usize::try_from(n).ok())
            .ok_or_else(|| Error::Format(format!("tensor '{name}' dims overflow")))?;
        let width = match dtype {
            0 => 4,
            1 => 8,
            other => return Err(Error::Format(format!("tensor '{name}' has unknown dtype {other}"))),
        };
        let size = numel
            .checked_mul(width)
            .ok_or_else(|| Error::Format(format!("tensor '{name}' is too large")))?;
        let raw = r.take(size, &format!("data of '{name}'"))?;
        let data = if dtype == 0 {
            TensorData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
        } else {
            TensorData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        tensors.push(Tensor { name, dims, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok(tensors)
}

pub fn write_archive(tensors: &[Tensor], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_archive(tensors)?)?;
    Ok(())
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    decode_archive(&fs::read(path)?)
}

/// Every model parameter as a named `f32` tensor, in visiting order.
pub fn model_tensors(model: &Model) -> Vec<Tensor> {
    let mut out = Vec::new();
    model.visit("", &mut |name, dims, data| {
        out.push(Tensor {
            name: name.to_string(),
            dims: dims.iter().map(|&d| d as u64).collect(),
            data: TensorData::F32(data.to_vec()),
        });
    });
    out
}

/// Copies archive tensors into `model`; any missing, extra or misshapen
/// tensor aborts before the model is touched.
pub fn assign_tensors(model: &mut Model, tensors: Vec<Tensor>) -> Result<()> {
    let mut by_name: BTreeMap<String, Tensor> = tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
    let mut offenders = Vec::new();
    let mut expected = BTreeSet::new();
    model.visit("", &mut |name, dims, _| {
        expected.insert(name.to_string());
        let dims: Vec<u64> = dims.iter().map(|&d| d as u64).collect();
        match by_name.get(name) {
            None => offenders.push(format!("{name}: missing from archive")),
            Some(t) if t.data.dtype() != 0 => offenders.push(format!("{name}: expected f32 data")),
            Some(t) if t.dims != dims => {
                offenders.push(format!("{name}: expected shape {dims:?}, found {:?}", t.dims))
            }
            Some(_) => {}
        }
    });
    offenders.extend(
        by_name
            .keys()
            .filter(|k| !expected.contains(*k))
            .map(|k| format!("{k}: not a model parameter")),
    );
    if let Some(first) = offenders.first() {
        return Err(Error::TensorMismatch {
            first: first.split(':').next().unwrap_or_default().to_string(),
            offenders,
        });
    }
    model.visit_mut("", &mut |name, _, data| {
        if let Some(Tensor { data: TensorData::F32(v), .. }) = by_name.remove(name) {
            data.copy_from_slice(&v);
        }
    });
    Ok(())
}

pub fn save_weights(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_archive(&model_tensors(model), path)
}

/// Builds `config` and fills it from the archive at `path`.
pub fn load_weights(path: impl AsRef<Path>, config: &ModelConfig) -> Result<Model> {
    let tensors = read_archive(path)?;
    let mut model = build_model(config, config.seed)?;
    assign_tensors(&mut model, tensors)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Tensor> {
        vec![
            Tensor { name: "a".into(), dims: vec![2, 3], data: TensorData::F32(vec![1.0, -2.5, 3.0, f32::MIN_POSITIVE, 0.0, -0.0]) },
            Tensor { name: "b.c".into(), dims: vec![], data: TensorData::F64(vec![std::f64::consts::PI]) },
        ]
    }

    #[test]
    fn header_layout() {
        let bytes = encode_archive(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"PCMW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u16::from_le_bytes(bytes[12..14].try_into().unwrap()), 1);
        assert_eq!(bytes[14], b'a');
        assert_eq!(bytes[15], 0);
        assert_eq!(bytes[16], 2);
        let total = 12 + (2 + 1 + 2 + 16 + 24) + (2 + 3 + 2 + 8);
        assert_eq!(bytes.len(), total);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let t = sample();
        let bytes = encode_archive(&t).unwrap();
        let back = decode_archive(&bytes).unwrap();
        assert_eq!(encode_archive(&back).unwrap(), bytes);
        match &back[0].data {
            TensorData::F32(v) => assert_eq!(v[5].to_bits(), (-0.0f32).to_bits()),
            _ => panic!("dtype changed"),
        }
    }

    #[test]
    fn corrupt_archives_are_format_errors() {
        let bytes = encode_archive(&sample()).unwrap();
        for cut in [0, 3, 10, 20, bytes.len() - 1] {
            assert!(matches!(decode_archive(&bytes[..cut]), Err(Error::Format(_))), "cut at {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_archive(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_archive(&bad), Err(Error::Format(_))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(decode_archive(&long), Err(Error::Format(_))));
    }
}
