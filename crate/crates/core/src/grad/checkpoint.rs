//! Binary parameter snapshots.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   "EDGECKPT"
//! u32     format version
//! u32     header length, then that many bytes of `key=value\n` text
//! u32     tensor count; per tensor: u32 rank, rank × u64 dims, values
//! u64     trailing payload length, then the payload bytes
//! ```

use std::collections::BTreeMap;

use super::tensor::ParamTensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"EDGECKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Decoded checkpoint contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<ParamTensor<S>>,
    pub payload: Vec<u8>,
}

pub fn encode<S: Scalar>(meta: &BTreeMap<String, String>, tensors: &[&ParamTensor<S>], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let mut header = format!("scalar={}\n", S::NAME);
    for (k, v) in meta {
        header.push_str(&format!("{k}={v}\n"));
    }
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.values {
            v.put_le(&mut out);
        }
    }
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode<S: Scalar>(bytes: &[u8]) -> Result<Checkpoint<S>> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let header_len = r.u32()? as usize;
    let header = std::str::from_utf8(r.take(header_len)?)
        .map_err(|_| Error::Checkpoint("header is not utf-8".into()))?;
    let mut meta = BTreeMap::new();
    for line in header.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("bad header line `{line}`")))?;
        meta.insert(k.to_string(), v.to_string());
    }
    match meta.remove("scalar") {
        Some(s) if s == S::NAME => {}
        other => {
            return Err(Error::Checkpoint(format!(
                "checkpoint scalar {other:?} does not match {}",
                S::NAME
            )))
        }
    }
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(S::BYTES).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let values = raw.chunks_exact(S::BYTES).map(S::get_le).collect();
        tensors.push(ParamTensor::from_values(&shape, values));
    }
    let payload_len = r.u64()? as usize;
    let payload = r.take(payload_len)?.to_vec();
    if r.at != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    Ok(Checkpoint { meta, tensors, payload })
}

/// Copies decoded tensors into `dst`, checking count and shapes.
pub fn restore<S: Scalar>(dst: Vec<&mut ParamTensor<S>>, src: &[ParamTensor<S>]) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} tensors, model has {}",
            src.len(),
            dst.len()
        )));
    }
    for (i, (d, s)) in dst.into_iter().zip(src).enumerate() {
        if d.shape != s.shape {
            return Err(Error::Checkpoint(format!(
                "tensor {i}: checkpoint shape {:?}, model shape {:?}",
                s.shape, d.shape
            )));
        }
        d.values.copy_from_slice(&s.values);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let a = ParamTensor::<f32>::from_values(&[2, 2], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.25e-7]);
        let b = ParamTensor::<f32>::from_values(&[3], vec![7.0, 8.0, 9.5]);
        let meta = BTreeMap::from([("layers".to_string(), "2x2,3".to_string())]);
        let bytes = encode(&meta, &[&a, &b], b"extra");
        let ck = decode::<f32>(&bytes).unwrap();
        assert_eq!(ck.meta, meta);
        assert_eq!(ck.payload, b"extra");
        for (x, y) in ck.tensors.iter().zip([&a, &b]) {
            let xb: Vec<u32> = x.values.iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.values.iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn version_and_scalar_mismatch_rejected() {
        let a = ParamTensor::<f32>::zeros(&[1]);
        let mut bytes = encode(&BTreeMap::new(), &[&a], &[]);
        assert!(decode::<f64>(&bytes).is_err());
        bytes[8] = 9;
        assert!(matches!(decode::<f32>(&bytes), Err(Error::Checkpoint(_))));
        assert!(decode::<f32>(&bytes[..10]).is_err());
    }
}
