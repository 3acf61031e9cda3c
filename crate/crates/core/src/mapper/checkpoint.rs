//! NFCKPT1 checkpoint format: a JSON manifest (config, tensor table, norm
//! stats, payload CRC32) followed by the raw f32 LE tensor payload in
//! manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MapperConfig, MapperModel};
use crate::error::{Error, Result};
use crate::params::NormStats;

const MAGIC: &[u8; 7] = b"NFCKPT1";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: MapperConfig,
    tensors: Vec<TensorSpec>,
    norm_stats: NormStats,
    payload_crc32: u32,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct TensorSpec {
    name: String,
    shape: Vec<usize>,
}

pub(super) fn save(model: &MapperModel, path: &Path) -> Result<()> {
    let mut payload = Vec::with_capacity(model.parameter_count() * 4);
    model.visit_tensors(|t| {
        for v in t {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    });

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        tensors: model
            .tensor_specs()
            .into_iter()
            .map(|(name, shape)| TensorSpec { name, shape })
            .collect(),
        norm_stats: model.stats.clone(),
        payload_crc32: crc32(&payload),
    };
    let manifest_bytes = serde_json::to_vec(&manifest).expect("manifest serialization");

    let mut out = Vec::with_capacity(7 + 4 + manifest_bytes.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest_bytes);
    out.extend_from_slice(&payload);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub(super) fn load(path: &Path) -> Result<MapperModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |reason: String| Error::CheckpointFormat {
        path: path.to_path_buf(),
        reason,
    };

    if bytes.len() < 11 {
        return Err(fail("file shorter than header".into()));
    }
    if &bytes[..7] != MAGIC {
        return Err(fail("bad magic bytes".into()));
    }
    let manifest_len = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    if bytes.len() < 11 + manifest_len {
        return Err(fail("manifest truncated".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[11..11 + manifest_len])
        .map_err(|e| fail(format!("manifest parse error: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(fail(format!(
            "format version {} not supported (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }

    // rebuild the model from the declared config and validate the tensor
    // table against the shapes that config implies
    let model_shell = MapperModel::init(manifest.config.clone(), manifest.norm_stats.clone())
        .map_err(|e| fail(format!("declared config invalid: {e}")))?;
    let expected: Vec<TensorSpec> = model_shell
        .tensor_specs()
        .into_iter()
        .map(|(name, shape)| TensorSpec { name, shape })
        .collect();
    if manifest.tensors != expected {
        return Err(fail("tensor table does not match declared config".into()));
    }

    let payload = &bytes[11 + manifest_len..];
    let expected_len = model_shell.parameter_count() * 4;
    if payload.len() != expected_len {
        return Err(fail(format!(
            "payload is {} bytes, expected {expected_len}",
            payload.len()
        )));
    }
    if crc32(payload) != manifest.payload_crc32 {
        return Err(fail("payload checksum mismatch".into()));
    }

    let mut model = model_shell;
    let mut offset = 0usize;
    model.visit_tensors_mut(|t| {
        for v in t.iter_mut() {
            *v = f32::from_le_bytes(payload[offset..offset + 4].try_into().unwrap());
            offset += 4;
        }
    });
    if model.visit_finite_check() {
        Ok(model)
    } else {
        Err(fail("payload contains non-finite weights".into()))
    }
}

impl MapperModel {
    fn visit_finite_check(&self) -> bool {
        let mut ok = true;
        self.visit_tensors(|t| {
            if t.iter().any(|v| !v.is_finite()) {
                ok = false;
            }
        });
        ok
    }
}

/// CRC-32 (IEEE), reflected, table-driven.
fn crc32(bytes: &[u8]) -> u32 {
    let mut table = [0u32; 256];
    for (i, slot) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 {
                0xEDB8_8320 ^ (c >> 1)
            } else {
                c >> 1
            };
        }
        *slot = c;
    }
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = (crc >> 8) ^ table[((crc ^ b as u32) & 0xFF) as usize];
    }
    !crc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats() -> NormStats {
        NormStats {
            mean: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            std: [1.0; 8],
            mel_mean: Some(vec![0.5; 4]),
            mel_std: Some(vec![2.0; 4]),
        }
    }

    fn small_model(seed: u64) -> MapperModel {
        let cfg = MapperConfig {
            in_channels: 9,
            mel_channels: 4,
            residual_channels: 6,
            skip_channels: 5,
            post_channels: 7,
            kernel_width: 3,
            dilations: vec![1, 2],
            seed,
        };
        MapperModel::init(cfg, stats()).unwrap()
    }

    #[test]
    fn crc32_known_vector() {
        // standard check value for "123456789"
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = small_model(5);
        model.save(&path).unwrap();
        let loaded = MapperModel::load(&path).unwrap();

        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.stats, model.stats);
        let mut a = Vec::new();
        let mut b = Vec::new();
        model.visit_tensors(|t| a.extend(t.iter().map(|v| v.to_bits())));
        loaded.visit_tensors(|t| b.extend(t.iter().map(|v| v.to_bits())));
        assert_eq!(a, b);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        small_model(5).save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, bytes).unwrap();
        match MapperModel::load(&path) {
            Err(Error::CheckpointFormat { reason, .. }) => {
                assert!(reason.contains("magic"), "{reason}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        small_model(5).save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        fs::write(&path, bytes).unwrap();
        match MapperModel::load(&path) {
            Err(Error::CheckpointFormat { reason, .. }) => {
                assert!(reason.contains("checksum"), "{reason}");
            }
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        small_model(5).save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(MapperModel::load(&path).is_err());
    }

    #[test]
    fn tensor_table_mismatch_is_rejected() {
        // write a checkpoint, then edit the manifest's declared channel
        // count; the tensor table no longer matches
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        small_model(5).save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let mlen = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
        let manifest = String::from_utf8(bytes[11..11 + mlen].to_vec()).unwrap();
        let edited = manifest.replace("\"residual_channels\":6", "\"residual_channels\":8");
        assert_ne!(manifest, edited);
        let mut out = bytes[..7].to_vec();
        out.extend_from_slice(&(edited.len() as u32).to_le_bytes());
        out.extend_from_slice(edited.as_bytes());
        out.extend_from_slice(&bytes[11 + mlen..]);
        fs::write(&path, out).unwrap();
        match MapperModel::load(&path) {
            Err(Error::CheckpointFormat { reason, .. }) => {
                assert!(reason.contains("tensor table"), "{reason}");
            }
            other => panic!("expected shape validation error, got {other:?}"),
        }
    }
}
