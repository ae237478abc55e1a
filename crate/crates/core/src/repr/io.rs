//! Encoder parameter files.
//!
//! Layout: `u64` little-endian header length, the JSON header (architecture
//! descriptor plus tensor list), then every tensor as little-endian `f32` in
//! declaration order: for the start branch and then the end branch, each
//! layer's weight (`inputs x outputs`, input-major) followed by its bias.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::{Architecture, Branch, Dense, EncoderParams};
use crate::error::{Error, Result};

const FORMAT: &str = "segcurate-encoder";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    arch: Architecture,
    tensors: Vec<TensorInfo>,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

fn tensor_list(arch: &Architecture) -> Vec<TensorInfo> {
    let mut out = Vec::new();
    for branch in ["start", "end"] {
        for (l, (i, o)) in arch.layer_dims().into_iter().enumerate() {
            out.push(TensorInfo {
                name: format!("{branch}.{l}.weight"),
                shape: vec![i, o],
            });
            out.push(TensorInfo {
                name: format!("{branch}.{l}.bias"),
                shape: vec![o],
            });
        }
    }
    out
}

pub fn write_params<W: Write>(params: &EncoderParams, mut w: W) -> std::io::Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: 1,
        arch: params.arch.clone(),
        tensors: tensor_list(&params.arch),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for branch in [&params.start, &params.end] {
        for layer in &branch.layers {
            for v in layer.weights.iter().chain(&layer.bias) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()
}

pub fn read_params<R: Read>(mut r: R, path: &Path) -> Result<EncoderParams> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let io = |e: std::io::Error| Error::io(path, e);
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(bad(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != FORMAT {
        return Err(bad(format!("unexpected format `{}`", header.format)));
    }
    if header.tensors != tensor_list(&header.arch) {
        return Err(bad("tensor list does not match the architecture".into()));
    }
    let mut read_vec = |n: usize| -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(io)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    };
    let mut branches = Vec::new();
    for _ in 0..2 {
        let mut layers = Vec::new();
        for (i, o) in header.arch.layer_dims() {
            let weights = read_vec(i * o)?;
            let bias = read_vec(o)?;
            layers.push(Dense {
                inputs: i,
                outputs: o,
                weights,
                bias,
            });
        }
        branches.push(Branch { layers });
    }
    let end = branches.pop().unwrap();
    let start = branches.pop().unwrap();
    let params = EncoderParams {
        arch: header.arch,
        start,
        end,
    };
    if !params.is_finite() {
        return Err(bad("non-finite parameter".into()));
    }
    Ok(params)
}

pub fn save_params(params: &EncoderParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_params(params, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<EncoderParams> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_params(BufReader::new(file), path)
}
