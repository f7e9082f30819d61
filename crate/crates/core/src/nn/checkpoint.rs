//! Binary checkpoint: `UPARCKPT` magic, u64 LE header length, JSON header,
//! then every parameter tensor as little-endian f64 in declaration order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ClassifierHead, DenseArray, Linear};

const MAGIC: &[u8; 8] = b"UPARCKPT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub shapes: Vec<Vec<usize>>,
    pub dropout_rate: f64,
    pub hyperparameters: serde_json::Value,
    pub seed: u64,
    pub step: u64,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    head: &ClassifierHead,
    hyperparameters: serde_json::Value,
    seed: u64,
    step: u64,
) -> Result<()> {
    let params = head.parameters();
    let header = CheckpointHeader {
        format: "upar-ckpt-v1".into(),
        shapes: params.iter().map(|p| p.shape().to_vec()).collect(),
        dropout_rate: head.dropout_rate(),
        hyperparameters,
        seed,
        step,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * params.iter().map(|p| p.len()).sum::<usize>());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in params {
        for v in p.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ClassifierHead, CheckpointHeader)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("missing magic".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16 + len)
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut blob = &bytes[16 + len..];
    let mut tensors = Vec::with_capacity(header.shapes.len());
    for shape in &header.shapes {
        let n: usize = shape.iter().product();
        if blob.len() < 8 * n {
            return Err(Error::Checkpoint("truncated tensor data".into()));
        }
        let data = blob[..8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        blob = &blob[8 * n..];
        tensors.push(DenseArray::from_vec(shape, data)?);
    }
    if !blob.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    if tensors.len() % 2 != 0 {
        return Err(Error::Checkpoint("odd tensor count".into()));
    }
    let mut layers = Vec::with_capacity(tensors.len() / 2);
    let mut it = tensors.into_iter();
    while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
        layers.push(Linear { weight, bias });
    }
    let head = ClassifierHead::from_layers(layers, header.dropout_rate)?;
    Ok((head, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip() {
        let head = ClassifierHead::new(5, &[3], 2, 0.25, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &head, serde_json::json!({"lr": 1e-4}), 7, 42).unwrap();
        let (back, header) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back.parameter_values(), head.parameter_values());
        assert_eq!(header.seed, 7);
        assert_eq!(header.step, 42);
        assert_eq!(header.shapes, vec![vec![3, 5], vec![3], vec![2, 3], vec![2]]);
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
    }
}
