//! Checkpoint container.
//!
//! Layout: the 8-byte magic `FPMCKPT\n`, a little-endian `u32` format
//! version, a `u32` header length, a JSON header (dtype, seed, problem, model
//! config and the name and shape of every tensor in order), then each
//! tensor's scalars as little-endian IEEE floats of the header's dtype.

use std::io::{Read, Write};
use std::path::Path;

use fpmatch_core::harness::Checkpoint;
use fpmatch_core::matchers::{MatchProblem, ModelConfig};
use fpmatch_core::{DType, Scalar, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"FPMCKPT\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    seed: u64,
    problem: MatchProblem,
    model: ModelConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

fn dtype_name<T: Scalar>() -> &'static str {
    match T::DTYPE {
        DType::F32 => "f32",
        DType::F64 => "f64",
    }
}

fn corrupt(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("bad checkpoint: {msg}"))
}

pub fn encode<T: Scalar>(ck: &Checkpoint<T>) -> Vec<u8> {
    let header = Header {
        dtype: dtype_name::<T>().into(),
        seed: ck.seed,
        problem: ck.problem,
        model: ck.model.clone(),
        tensors: ck.params.iter().map(|(n, t)| TensorEntry { name: n.clone(), shape: t.shape().to_vec() }).collect(),
    };
    let json = serde_json::to_vec(&header).expect("headers always serialise");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &ck.params {
        for &v in t.data() {
            match T::DTYPE {
                DType::F32 => out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes()),
                DType::F64 => out.extend_from_slice(&v.to_f64_lossy().to_le_bytes()),
            }
        }
    }
    out
}

pub fn decode<T: Scalar>(mut bytes: &[u8]) -> Result<Checkpoint<T>, CliError> {
    fn take(r: &mut &[u8], n: usize) -> Result<Vec<u8>, CliError> {
        let mut buf = vec![0; n];
        r.read_exact(&mut buf).map_err(|_| corrupt("truncated"))?;
        Ok(buf)
    }
    let r = &mut bytes;
    if take(r, 8)? != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(take(r, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let len = u32::from_le_bytes(take(r, 4)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(&take(r, len)?).map_err(corrupt)?;
    if header.dtype != dtype_name::<T>() {
        return Err(corrupt(format!("stored as {}, requested {}", header.dtype, dtype_name::<T>())));
    }
    let width = match T::DTYPE {
        DType::F32 => 4,
        DType::F64 => 8,
    };
    let mut params = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let raw = take(r, n * width)?;
        let data: Vec<T> = raw
            .chunks_exact(width)
            .map(|c| match T::DTYPE {
                DType::F32 => T::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64),
                DType::F64 => T::from_f64_lossy(f64::from_le_bytes(c.try_into().unwrap())),
            })
            .collect();
        params.push((entry.name, Tensor::new(&entry.shape, data).map_err(corrupt)?));
    }
    if !r.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(Checkpoint { problem: header.problem, model: header.model, seed: header.seed, params })
}

pub fn save<T: Scalar>(path: &Path, ck: &Checkpoint<T>) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(ck))?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, CliError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| CliError::usage(format!("cannot open checkpoint {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fpmatch_core::matchers::MatchModel;

    fn sample() -> Checkpoint<f32> {
        let model = MatchModel::<f32>::build(MatchProblem::default(), ModelConfig::default(), 5).unwrap();
        Checkpoint::from_model(&model, 5)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = encode(&ck);
        assert_eq!(&bytes[..8], MAGIC);
        let back: Checkpoint<f32> = decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn damage_is_detected() {
        let bytes = encode(&sample());
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode::<f32>(&extra).is_err());
        let mut wrong = bytes.clone();
        wrong[8] = 9;
        assert!(decode::<f32>(&wrong).is_err());
        assert!(decode::<f64>(&bytes).is_err());
        assert!(decode::<f32>(b"nonsense").is_err());
    }
}
