//! Model checkpoint container: one JSON header line followed by the parameter
//! tensors as little-endian `f32`, in declaration order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::ParamStore;
use super::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "hrrp-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    /// Model family, e.g. `"ddpm"` or `"gan"`.
    pub kind: String,
    pub seed: u64,
    pub step: u64,
    pub config: serde_json::Value,
    pub loss_tail: Vec<f64>,
    pub params: Vec<ParamEntry>,
}

impl CheckpointHeader {
    pub fn new(kind: &str, seed: u64, step: u64, config: serde_json::Value, loss_tail: Vec<f64>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            seed,
            step,
            config,
            loss_tail,
            params: Vec::new(),
        }
    }
}

/// Serialize `stores` back to back; the header's parameter table is filled in here.
pub fn encode_checkpoint(header: &CheckpointHeader, stores: &[&ParamStore]) -> Result<Vec<u8>> {
    let mut header = header.clone();
    header.params.clear();
    for store in stores {
        for id in store.ids() {
            header.params.push(ParamEntry {
                name: store.name(id).to_string(),
                shape: store.tensor(id).shape().to_vec(),
            });
        }
    }
    let mut out = serde_json::to_vec(&header).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    out.push(b'\n');
    for store in stores {
        for t in store.tensors() {
            for &v in t.data() {
                out.extend_from_slice(&f32_toward_zero(v).to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Nearest `f32` whose magnitude does not exceed `|v|`, so stored weights
/// respect any bound the live weights satisfy.
pub fn f32_toward_zero(v: f64) -> f32 {
    let f = v as f32;
    if f.is_finite() && f != 0.0 && (f as f64).abs() > v.abs() {
        f32::from_bits(f.to_bits() - 1)
    } else {
        f
    }
}

/// Parse a checkpoint into its header and one flat store of all tensors.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, ParamStore)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("missing header terminator".into()))?;
    let raw: serde_json::Value =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if raw.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
        return Err(Error::MalformedHeader("not a checkpoint file".into()));
    }
    let version = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::MalformedHeader("missing version".into()))?;
    if version != CHECKPOINT_VERSION as u64 {
        return Err(Error::UnsupportedVersion {
            found: version as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header: CheckpointHeader = serde_json::from_value(raw).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let payload = &bytes[nl + 1..];
    let n_values: usize = header.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    let expected = (n_values * 4) as u64;
    if (payload.len() as u64) < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len() as u64,
        });
    }
    if payload.len() as u64 > expected {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after parameter payload",
            payload.len() as u64 - expected
        )));
    }
    let mut store = ParamStore::default();
    let mut values = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    for p in &header.params {
        let n = p.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        store.add(p.name.clone(), Tensor::new(p.shape.clone(), data)?);
    }
    Ok((header, store))
}

/// Copy tensors from a decoded checkpoint into freshly built stores, checking
/// names and shapes.
pub fn restore_stores(loaded: &ParamStore, targets: &mut [&mut ParamStore]) -> Result<()> {
    let total: usize = targets.iter().map(|s| s.len()).sum();
    if total != loaded.len() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint holds {} tensors, model expects {total}",
            loaded.len()
        )));
    }
    let mut src = loaded.ids();
    for store in targets.iter_mut() {
        for id in store.ids().collect::<Vec<_>>() {
            let sid = src.next().expect("counted above");
            let t = loaded.tensor(sid);
            if loaded.name(sid) != store.name(id) || t.shape() != store.tensor(id).shape() {
                return Err(Error::ShapeMismatch(format!(
                    "checkpoint tensor {} {:?} does not match model tensor {} {:?}",
                    loaded.name(sid),
                    t.shape(),
                    store.name(id),
                    store.tensor(id).shape()
                )));
            }
            store.tensor_mut(id).data_mut().copy_from_slice(t.data());
        }
    }
    Ok(())
}

pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, stores: &[&ParamStore]) -> Result<()> {
    let bytes = encode_checkpoint(header, stores)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, ParamStore)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clip_bound_survives_storage() {
        for b in [0.05, -0.05, 0.01, 1e-7] {
            let f = f32_toward_zero(b) as f64;
            assert!(f.abs() <= b.abs() && (f - b).abs() < 1e-8, "{b} -> {f}");
        }
        assert_eq!(f32_toward_zero(0.5), 0.5);
        assert_eq!(f32_toward_zero(0.0), 0.0);
    }

    proptest! {
        #[test]
        fn toward_zero_is_within_one_ulp(v in -1e3f64..1e3) {
            let f = f32_toward_zero(v);
            prop_assert!((f as f64).abs() <= v.abs());
            let up = if f == 0.0 { f32::from_bits(1) } else { f32::from_bits(f.to_bits() + 1) };
            prop_assert!(up.abs() as f64 > v.abs());
        }
    }

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::default();
        s.add("conv.w", Tensor::new(vec![2, 1, 3], vec![0.5, -0.25, 1.0, 2.0, 0.0, -3.5]).unwrap());
        s.add("conv.b", Tensor::new(vec![2], vec![0.125, -1.0]).unwrap());
        s
    }

    fn header() -> CheckpointHeader {
        CheckpointHeader::new("ddpm", 7, 200, serde_json::json!({"T": 200}), vec![0.5, 0.25])
    }

    #[test]
    fn round_trip() {
        let s = sample_store();
        let bytes = encode_checkpoint(&header(), &[&s]).unwrap();
        let (h, loaded) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(h.step, 200);
        assert_eq!(h.params.len(), 2);
        assert_eq!(loaded, s);
        let mut fresh = sample_store();
        fresh.tensors_mut()[0].data_mut().fill(0.0);
        restore_stores(&loaded, &mut [&mut fresh]).unwrap();
        assert_eq!(fresh, s);
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode_checkpoint(&header(), &[&sample_store()]).unwrap();
        let err = decode_checkpoint(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::TruncatedPayload { .. }), "{err}");
    }

    #[test]
    fn version_bump_is_rejected() {
        let mut h = header();
        h.version = 2;
        let bytes = encode_checkpoint(&h, &[&sample_store()]).unwrap();
        let err = decode_checkpoint(&bytes).unwrap_err();
        assert!(matches!(err, Error::UnsupportedVersion { found: 2, expected: 1 }), "{err}");
    }

    #[test]
    fn garbage_header() {
        assert!(matches!(decode_checkpoint(b"{not json\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_checkpoint(b"no newline"), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn shape_mismatch_on_restore() {
        let bytes = encode_checkpoint(&header(), &[&sample_store()]).unwrap();
        let (_, loaded) = decode_checkpoint(&bytes).unwrap();
        let mut other = ParamStore::default();
        other.add("conv.w", Tensor::zeros(&[2, 1, 5]));
        other.add("conv.b", Tensor::zeros(&[2]));
        assert!(restore_stores(&loaded, &mut [&mut other]).is_err());
    }
}
