//! `NXD1` tensor container: magic, `u64` LE header length, JSON header,
//! little-endian row-major payload.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"NXD1";

/// A named slice of the payload, in elements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    /// Payload shape; `[total]` for multi-block payloads.
    pub shape: Vec<usize>,
    pub dtype: String,
    /// What the payload is, e.g. `"dataset"` or `"params"`.
    pub role: String,
    #[serde(default)]
    pub blocks: Vec<Block>,
    #[serde(default)]
    pub provenance: Value,
    #[serde(default)]
    pub scaling: Value,
    /// Role-specific metadata.
    #[serde(default)]
    pub manifest: Value,
}

impl Header {
    pub fn new(role: impl Into<String>, shape: Vec<usize>, dtype: &str) -> Self {
        Self {
            shape,
            dtype: dtype.to_string(),
            role: role.into(),
            blocks: Vec::new(),
            provenance: Value::Null,
            scaling: Value::Null,
            manifest: Value::Null,
        }
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container<T> {
    pub header: Header,
    pub data: Vec<T>,
}

impl<T: Scalar> Container<T> {
    /// Single-block container of `tensor`.
    pub fn from_tensor(role: impl Into<String>, tensor: &Tensor<T>) -> Self {
        Self { header: Header::new(role, tensor.shape().to_vec(), T::DTYPE), data: tensor.data().to_vec() }
    }

    /// Concatenates named blocks into one payload.
    pub fn from_blocks(role: impl Into<String>, blocks: Vec<(String, Vec<usize>, &[T])>) -> Result<Self> {
        let mut data = Vec::new();
        let mut infos = Vec::with_capacity(blocks.len());
        for (name, shape, values) in blocks {
            if shape.iter().product::<usize>() != values.len() {
                return Err(Error::shape(format!("block {name}: shape {shape:?} vs {} values", values.len())));
            }
            infos.push(Block { name, shape, offset: data.len() });
            data.extend_from_slice(values);
        }
        let mut header = Header::new(role, vec![data.len()], T::DTYPE);
        header.blocks = infos;
        Ok(Self { header, data })
    }

    pub fn tensor(&self) -> Result<Tensor<T>> {
        let shape: [usize; 4] = self
            .header
            .shape
            .as_slice()
            .try_into()
            .map_err(|_| Error::Data(format!("expected a 4-D payload, got shape {:?}", self.header.shape)))?;
        Tensor::from_vec(shape, self.data.clone())
    }

    pub fn block(&self, name: &str) -> Result<&[T]> {
        let b = self.header.block(name).ok_or_else(|| Error::Data(format!("missing block {name:?}")))?;
        self.data
            .get(b.offset..b.offset + b.len())
            .ok_or_else(|| Error::Data(format!("block {name:?} runs past the payload")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.header.dtype != T::DTYPE {
            return Err(Error::Data(format!("header dtype {} but payload is {}", self.header.dtype, T::DTYPE)));
        }
        if self.header.element_count() != self.data.len() {
            return Err(Error::shape(format!(
                "header shape {:?} does not match {} payload elements",
                self.header.shape,
                self.data.len()
            )));
        }
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(12 + header.len() + self.data.len() * T::BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for &v in &self.data {
            v.write_le(&mut out);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = split(bytes)?;
        if header.dtype != T::DTYPE {
            return Err(Error::Data(format!("container holds {}, expected {}", header.dtype, T::DTYPE)));
        }
        let expect = header.element_count() * T::BYTES;
        if payload.len() != expect {
            return Err(Error::Data(format!("payload is {} bytes, header implies {expect}", payload.len())));
        }
        let data = payload.chunks_exact(T::BYTES).map(T::read_le).collect();
        Ok(Self { header, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path.as_ref())?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path.as_ref())?)
    }
}

fn split(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Data("not an NXD1 container".into()));
    }
    let len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12usize.saturating_add(len)).ok_or_else(|| Error::Data("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body)?;
    Ok((header, &bytes[12 + len..]))
}

/// Reads only the header.
pub fn read_header(path: impl AsRef<Path>) -> Result<Header> {
    Ok(split(&std::fs::read(path.as_ref())?)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let t = Tensor::<f32>::from_fn([1, 2, 3, 4], |i| (i[3] as f32 + 4.0 * i[2] as f32).sin() * 1e-3 + f32::MIN_POSITIVE);
        let mut c = Container::from_tensor("test", &t);
        c.header.provenance = serde_json::json!({"seed": 3});
        let back = Container::<f32>::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.tensor().unwrap(), t);

        let vals = [std::f64::consts::PI, -0.0, 1e-308, f64::MAX];
        let c = Container::from_blocks("p", vec![("a".into(), vec![2], &vals[..2]), ("b".into(), vec![1, 2], &vals[2..])])
            .unwrap();
        let back = Container::<f64>::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back.block("b").unwrap(), &vals[2..]);
        assert_eq!(back.block("a").unwrap()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn payload_size_matches_header() {
        let c = Container::from_tensor("x", &Tensor::<f64>::zeros([2, 1, 2, 2]));
        let bytes = c.to_bytes().unwrap();
        let (h, payload) = split(&bytes).unwrap();
        assert_eq!(payload.len(), 8 * h.element_count());
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let c = Container::from_tensor("x", &Tensor::<f64>::zeros([1, 1, 2, 2]));
        let bytes = c.to_bytes().unwrap();
        assert!(Container::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Container::<f32>::from_bytes(&bytes).is_err());
        assert!(Container::<f64>::from_bytes(b"NXD0aaaaaaaaaaaa").is_err());
    }
}
