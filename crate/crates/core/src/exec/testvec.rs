//! Golden test-vector files: a flat little-endian f64 binary plus a JSON
//! manifest describing the tensors it contains.
//!
//! Layout: `<name>.json` holds `{version, data_file, tensors: [{name, rows,
//! cols, offset}]}` with `offset` in elements into `<name>.bin`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorView;

pub const TESTVEC_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    data_file: String,
    tensors: Vec<ManifestEntry>,
}

/// Write named tensors as `<name>.json` + `<name>.bin` under `dir`.
pub fn save(dir: &Path, name: &str, tensors: &[(&str, &TensorView)]) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0usize;
    for (tname, t) in tensors {
        entries.push(ManifestEntry {
            name: tname.to_string(),
            rows: t.rows(),
            cols: t.cols(),
            offset,
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        offset += t.data().len();
    }
    let manifest = Manifest {
        version: TESTVEC_VERSION,
        data_file: format!("{name}.bin"),
        tensors: entries,
    };
    fs::write(dir.join(format!("{name}.bin")), &blob)?;
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Io(format!("manifest encode: {e}")))?;
    fs::write(dir.join(format!("{name}.json")), json)?;
    Ok(())
}

/// Load all tensors of a test vector saved by [`save`].
pub fn load(dir: &Path, name: &str) -> Result<Vec<(String, TensorView)>> {
    let json = fs::read_to_string(dir.join(format!("{name}.json")))?;
    let manifest: Manifest =
        serde_json::from_str(&json).map_err(|e| Error::Io(format!("manifest decode: {e}")))?;
    if manifest.version != TESTVEC_VERSION {
        return Err(Error::Io(format!(
            "unsupported test-vector version {}",
            manifest.version
        )));
    }
    let blob = fs::read(dir.join(&manifest.data_file))?;
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for entry in manifest.tensors {
        let elems = entry.rows * entry.cols;
        let start = entry.offset * 8;
        let end = start + elems * 8;
        if end > blob.len() {
            return Err(Error::Io(format!(
                "tensor '{}' extends past end of {}",
                entry.name, manifest.data_file
            )));
        }
        let data: Vec<f64> = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((entry.name, TensorView::from_vec(entry.rows, entry.cols, data)?));
    }
    Ok(out)
}
