//! Little-endian weight files.
//!
//! Layout: `magic[8]`, `version: u16`, `config fingerprint: u64`,
//! `rng seed: u64`, `tensor count: u32`, then per tensor `rank: u32`,
//! `dims: u32 * rank`, `values: f32 * product(dims)`.

use std::path::Path;

use super::{CnnModel, NetConfig, NnError, Tensor};

pub const WEIGHT_MAGIC: &[u8; 8] = b"FLCNNWTS";
pub const WEIGHT_FORMAT_VERSION: u16 = 1;

pub fn encode_weights(model: &CnnModel<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 4 * model.parameter_count());
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&WEIGHT_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&model.config().fingerprint().to_le_bytes());
    out.extend_from_slice(&model.rng_seed().to_le_bytes());
    out.extend_from_slice(&(model.parameters().len() as u32).to_le_bytes());
    for t in model.parameters() {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::CorruptFile(format!("unexpected end of file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_weights(bytes: &[u8], config: &NetConfig) -> Result<CnnModel<f32>, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != WEIGHT_MAGIC {
        return Err(NnError::CorruptFile("bad magic".into()));
    }
    let version = r.u16()?;
    if version != WEIGHT_FORMAT_VERSION {
        return Err(NnError::VersionMismatch { found: version, expected: WEIGHT_FORMAT_VERSION });
    }
    if r.u64()? != config.fingerprint() {
        return Err(NnError::ConfigFingerprintMismatch);
    }
    let seed = r.u64()?;
    let count = r.u32()? as usize;
    let expected = config.parameter_shapes()?;
    if count != expected.len() {
        return Err(NnError::CorruptFile(format!("{count} tensors, expected {}", expected.len())));
    }
    let mut params = Vec::with_capacity(count);
    for shape in expected {
        let rank = r.u32()? as usize;
        if rank != shape.len() {
            return Err(NnError::CorruptFile("tensor rank mismatch".into()));
        }
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if dims != shape {
            return Err(NnError::CorruptFile(format!("tensor shape {dims:?}, expected {shape:?}")));
        }
        let n: usize = dims.iter().product();
        let raw = r.take(4 * n)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        params.push(Tensor::new(dims, data)?);
    }
    if r.pos != bytes.len() {
        return Err(NnError::CorruptFile(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    CnnModel::from_parts(config.clone(), params, seed)
}

pub fn save_weights(model: &CnnModel<f32>, path: impl AsRef<Path>) -> Result<(), NnError> {
    let path = path.as_ref();
    std::fs::write(path, encode_weights(model)).map_err(|source| NnError::Io { path: path.display().to_string(), source })
}

pub fn load_weights(path: impl AsRef<Path>, config: &NetConfig) -> Result<CnnModel<f32>, NnError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| NnError::Io { path: path.display().to_string(), source })?;
    decode_weights(&bytes, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;

    #[test]
    fn round_trip_is_bit_exact() {
        let model = CnnModel::<f32>::init(NetConfig::tiny(), 12).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.weights");
        save_weights(&model, &path).unwrap();
        let back = load_weights(&path, &NetConfig::tiny()).unwrap();
        assert_eq!(back, model);
        let batch = Tensor::new(vec![1, 8, 8, 1], vec![0.5f32; 64]).unwrap();
        let a = model.forward(&batch, Mode::Inference).unwrap();
        let b = back.forward(&batch, Mode::Inference).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn rejects_mismatches_and_corruption() {
        let model = CnnModel::<f32>::init(NetConfig::tiny(), 12).unwrap();
        let bytes = encode_weights(&model);
        let mut other = NetConfig::tiny();
        other.fc1_units = 5;
        assert!(matches!(decode_weights(&bytes, &other), Err(NnError::ConfigFingerprintMismatch)));
        assert!(matches!(decode_weights(&bytes[..bytes.len() - 3], &NetConfig::tiny()), Err(NnError::CorruptFile(_))));
        assert!(matches!(decode_weights(&bytes[..5], &NetConfig::tiny()), Err(NnError::CorruptFile(_))));
        let mut versioned = bytes.clone();
        versioned[8] = 9;
        assert!(matches!(decode_weights(&versioned, &NetConfig::tiny()), Err(NnError::VersionMismatch { found: 9, .. })));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(decode_weights(&extra, &NetConfig::tiny()), Err(NnError::CorruptFile(_))));
    }
}
