//! Dataset directory layout: `manifest.json` plus one headerless
//! little-endian `f32` row-major blob per modality. Shapes and labels live in
//! the manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetBundle, ModalityDims, SyntheticSpec};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: &str = "neuralign-ds/1";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowCounts {
    paired: usize,
    emotion: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlobNames {
    video: String,
    fmri: String,
    emotion: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: String,
    num_classes: usize,
    dims: ModalityDims,
    rows: RowCounts,
    blobs: BlobNames,
    labels_paired: Vec<usize>,
    labels_emotion: Vec<usize>,
    generator: Option<SyntheticSpec>,
}

fn encode_f32(field: &str, t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(t.len() * 4);
    for (i, &v) in t.data().iter().enumerate() {
        let narrow = v as f32;
        if f64::from(narrow).to_bits() != v.to_bits() {
            return Err(Error::format(
                field,
                format!("element {i} ({v}) is not exactly representable as float32"),
            ));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

/// Writes `bundle` into `dir`, creating it if needed.
pub fn write_dataset(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let blobs = BlobNames {
        video: "video.bin".into(),
        fmri: "fmri.bin".into(),
        emotion: "emotion.bin".into(),
    };
    let payloads = [
        (blobs.video.clone(), encode_f32("video", &bundle.video)?),
        (blobs.fmri.clone(), encode_f32("fmri", &bundle.fmri)?),
        (blobs.emotion.clone(), encode_f32("emotion", &bundle.emotion)?),
    ];
    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION.to_string(),
        num_classes: bundle.num_classes,
        dims: bundle.dims(),
        rows: RowCounts {
            paired: bundle.num_paired(),
            emotion: bundle.num_emotion(),
        },
        labels_paired: bundle.labels_paired.clone(),
        labels_emotion: bundle.labels_emotion.clone(),
        generator: bundle.generator.clone(),
        blobs,
    };
    fs::create_dir_all(dir)?;
    for (name, bytes) in &payloads {
        fs::write(dir.join(name), bytes)?;
    }
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST), json)?;
    Ok(())
}

fn read_blob(dir: &Path, field: &str, name: &str, rows: usize, cols: usize) -> Result<Tensor> {
    if name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(Error::format(format!("blobs.{field}"), format!("invalid blob name {name:?}")));
    }
    let bytes = fs::read(dir.join(name))?;
    let row_bytes = cols * 4;
    if cols == 0 || bytes.len() % row_bytes != 0 {
        return Err(Error::format(
            format!("blobs.{field}"),
            format!(
                "truncated blob: {} bytes is not a whole number of {cols}-wide float32 rows",
                bytes.len()
            ),
        ));
    }
    let blob_rows = bytes.len() / row_bytes;
    if blob_rows != rows {
        return Err(Error::format(
            format!("rows.{field}"),
            format!("manifest declares {rows} rows but blob `{name}` holds {blob_rows}"),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Tensor::matrix(rows, cols, data).map_err(|e| Error::format(field, e.to_string()))
}

/// Reads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<DatasetBundle> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::format("manifest", e.to_string()))?;
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::format("format_version", "missing or not a string"))?;
    if version != DATASET_FORMAT_VERSION {
        return Err(Error::Version {
            found: version.to_string(),
            expected: DATASET_FORMAT_VERSION,
        });
    }
    let m: Manifest =
        serde_json::from_value(raw).map_err(|e| Error::format("manifest", e.to_string()))?;

    if m.labels_paired.len() != m.rows.paired {
        return Err(Error::format(
            "labels_paired",
            format!("{} labels for {} paired rows", m.labels_paired.len(), m.rows.paired),
        ));
    }
    if m.labels_emotion.len() != m.rows.emotion {
        return Err(Error::format(
            "labels_emotion",
            format!("{} labels for {} emotion rows", m.labels_emotion.len(), m.rows.emotion),
        ));
    }
    let video = read_blob(dir, "video", &m.blobs.video, m.rows.paired, m.dims.video)?;
    let fmri = read_blob(dir, "fmri", &m.blobs.fmri, m.rows.paired, m.dims.fmri)?;
    let emotion = read_blob(dir, "emotion", &m.blobs.emotion, m.rows.emotion, m.dims.emotion)?;
    let mut bundle = DatasetBundle::new(
        video,
        fmri,
        emotion,
        m.labels_paired,
        m.labels_emotion,
        m.num_classes,
    )
    .map_err(|e| Error::format("manifest", e.to_string()))?;
    bundle.generator = m.generator;
    Ok(bundle)
}
