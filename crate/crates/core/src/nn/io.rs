//! Parameter persistence: a JSON manifest next to a raw little-endian
//! `f64` blob (`<stem>.json` + `<stem>.bin`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{count_params, Architecture, ParamVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub architecture: Option<Architecture>,
    pub length: usize,
    pub seed: Option<u64>,
    pub blob: String,
}

pub fn encode_f64s(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "blob length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn with_extension(stem: &Path, ext: &str) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

/// Writes `<stem>.json` and `<stem>.bin`.
pub fn save_params(
    stem: &Path,
    params: &[f64],
    architecture: Option<&Architecture>,
    seed: Option<u64>,
) -> Result<()> {
    let blob_path = with_extension(stem, "bin");
    let manifest = ParamManifest {
        architecture: architecture.cloned(),
        length: params.len(),
        seed,
        blob: blob_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    fs::write(&blob_path, encode_f64s(params))?;
    fs::write(
        with_extension(stem, "json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn load_params(stem: &Path) -> Result<(ParamManifest, ParamVector)> {
    let manifest: ParamManifest = serde_json::from_str(&fs::read_to_string(with_extension(stem, "json"))?)?;
    let dir = stem.parent().unwrap_or_else(|| Path::new("."));
    let values = decode_f64s(&fs::read(dir.join(&manifest.blob))?)?;
    if values.len() != manifest.length {
        return Err(Error::Format(format!(
            "manifest says {} values, blob holds {}",
            manifest.length,
            values.len()
        )));
    }
    if let Some(arch) = &manifest.architecture {
        if count_params(arch) != values.len() {
            return Err(Error::Format(format!(
                "architecture needs {} values, blob holds {}",
                count_params(arch),
                values.len()
            )));
        }
    }
    Ok((manifest, ParamVector::from_raw(values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn save_and_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let arch = Architecture::new(3, vec![5], 2, Activation::Elu).unwrap();
        let p = ParamVector::init(&arch, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9));
        let stem = dir.path().join("node");
        save_params(&stem, p.as_slice(), Some(&arch), Some(9)).unwrap();
        let (manifest, loaded) = load_params(&stem).unwrap();
        assert_eq!(manifest.length, p.len());
        assert_eq!(manifest.seed, Some(9));
        assert_eq!(loaded, p);
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("x");
        save_params(&stem, &[1.0, 2.0], None, None).unwrap();
        fs::write(dir.path().join("x.bin"), [0u8; 12]).unwrap();
        assert!(matches!(load_params(&stem), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn blob_encoding_is_bit_exact(values in proptest::collection::vec(any::<f64>(), 0..64)) {
            let decoded = decode_f64s(&encode_f64s(&values)).unwrap();
            prop_assert_eq!(
                decoded.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
