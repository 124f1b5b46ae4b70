//! Checkpoint file: `u64` little-endian header length, UTF-8 JSON header,
//! then every parameter as little-endian `f64` in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::losses::Prototypes;
use crate::models::{Activation, Autoencoder, MapDirection, MappingNetwork, Mlp, Modality, ModelBundle};

pub const CHECKPOINT_FORMAT_VERSION: &str = "neuralign-ckpt/1";

/// One optimizer step of a stage's objective on its minibatch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub reconstruction: f64,
    /// Unweighted mapping or matching term; absent in stage 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<f64>,
}

/// Stage objective over the whole training set before and after optimization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSummary {
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: u8,
    pub config: TrainConfig,
    pub steps: usize,
    pub summary: LossSummary,
    pub loss_history: Vec<LossRecord>,
    pub bundle: ModelBundle,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
enum ComponentDesc {
    Autoencoder {
        name: String,
        modality: Modality,
        encoder_dims: Vec<usize>,
        decoder_dims: Vec<usize>,
        activation: Activation,
    },
    Mapping {
        name: String,
        direction: MapDirection,
        dims: Vec<usize>,
        activation: Activation,
    },
    Prototypes {
        name: String,
        counts: Vec<usize>,
        dim: usize,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: String,
    stage: u8,
    config: TrainConfig,
    steps: usize,
    summary: LossSummary,
    loss_history: Vec<LossRecord>,
    components: Vec<ComponentDesc>,
    params: Vec<ParamEntry>,
}

fn describe(bundle: &ModelBundle) -> Vec<ComponentDesc> {
    let ae = |name: &str, a: &Autoencoder| ComponentDesc::Autoencoder {
        name: name.to_string(),
        modality: a.modality,
        encoder_dims: a.encoder.layer_dims().to_vec(),
        decoder_dims: a.decoder.layer_dims().to_vec(),
        activation: a.encoder.activation(),
    };
    let map = |name: &str, m: &MappingNetwork| ComponentDesc::Mapping {
        name: name.to_string(),
        direction: m.direction,
        dims: m.net.layer_dims().to_vec(),
        activation: m.net.activation(),
    };
    let mut out = Vec::new();
    if let Some(a) = &bundle.video_ae {
        out.push(ae("video_ae", a));
    }
    if let Some(a) = &bundle.fmri_ae {
        out.push(ae("fmri_ae", a));
    }
    if let Some(m) = &bundle.map_f_to_v {
        out.push(map("map_f_to_v", m));
    }
    if let Some(a) = &bundle.emotion_ae {
        out.push(ae("emotion_ae", a));
    }
    if let Some(m) = &bundle.map_e_to_f {
        out.push(map("map_e_to_f", m));
    }
    if let Some(p) = &bundle.prototypes {
        out.push(ComponentDesc::Prototypes {
            name: "prototypes".into(),
            counts: p.counts().to_vec(),
            dim: p.dim(),
        });
    }
    out
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let params = self.bundle.named_params();
        let header = Header {
            format_version: CHECKPOINT_FORMAT_VERSION.to_string(),
            stage: self.stage,
            config: self.config.clone(),
            steps: self.steps,
            summary: self.summary,
            loss_history: self.loss_history.clone(),
            components: describe(&self.bundle),
            params: params
                .iter()
                .map(|(name, t)| ParamEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let blob_len: usize = params.iter().map(|(_, t)| t.len() * 8).sum();
        let mut out = Vec::with_capacity(8 + json.len() + blob_len);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &params {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::format("header_length", "file shorter than 8 bytes"));
        }
        let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        let header_end = usize::try_from(header_len)
            .ok()
            .and_then(|n| n.checked_add(8))
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                Error::format(
                    "header_length",
                    format!("declares {header_len} header bytes but file has {}", bytes.len() - 8),
                )
            })?;
        let raw: serde_json::Value = serde_json::from_slice(&bytes[8..header_end])
            .map_err(|e| Error::format("header", e.to_string()))?;
        let version = raw
            .get("format_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::format("format_version", "missing or not a string"))?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Version {
                found: version.to_string(),
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let header: Header =
            serde_json::from_value(raw).map_err(|e| Error::format("header", e.to_string()))?;

        let blob = &bytes[header_end..];
        let expected: usize = header
            .params
            .iter()
            .map(|p| p.shape.iter().product::<usize>() * 8)
            .sum();
        if blob.len() != expected {
            return Err(Error::format(
                "blob",
                format!("parameter manifest needs {expected} bytes, blob has {}", blob.len()),
            ));
        }

        let mut reader = ParamReader {
            entries: header.params.iter(),
            blob,
        };
        let mut bundle = ModelBundle::default();
        for desc in &header.components {
            match desc {
                ComponentDesc::Autoencoder {
                    name,
                    modality,
                    encoder_dims,
                    decoder_dims,
                    activation,
                } => {
                    let encoder = reader.mlp(&format!("{name}.encoder"), encoder_dims, *activation)?;
                    let decoder = reader.mlp(&format!("{name}.decoder"), decoder_dims, *activation)?;
                    let ae = Autoencoder::new(encoder, decoder, *modality)
                        .map_err(|e| Error::format(name.clone(), e.to_string()))?;
                    let slot = match name.as_str() {
                        "video_ae" => &mut bundle.video_ae,
                        "fmri_ae" => &mut bundle.fmri_ae,
                        "emotion_ae" => &mut bundle.emotion_ae,
                        other => return Err(Error::format("components", format!("unknown autoencoder {other:?}"))),
                    };
                    *slot = Some(ae);
                }
                ComponentDesc::Mapping {
                    name,
                    direction,
                    dims,
                    activation,
                } => {
                    let net = reader.mlp(name, dims, *activation)?;
                    let m = MappingNetwork {
                        net,
                        direction: *direction,
                    };
                    match name.as_str() {
                        "map_f_to_v" => bundle.map_f_to_v = Some(m),
                        "map_e_to_f" => bundle.map_e_to_f = Some(m),
                        other => return Err(Error::format("components", format!("unknown mapping {other:?}"))),
                    }
                }
                ComponentDesc::Prototypes { name, counts, dim } => {
                    let matrix = reader.tensor(&format!("{name}.matrix"), &[counts.len(), *dim])?;
                    bundle.prototypes = Some(
                        Prototypes::new(matrix, counts.clone())
                            .map_err(|e| Error::format(name.clone(), e.to_string()))?,
                    );
                }
            }
        }
        if let Some(extra) = reader.entries.next() {
            return Err(Error::format(
                "params",
                format!("parameter `{}` belongs to no component", extra.name),
            ));
        }
        bundle
            .validate()
            .map_err(|e| Error::format("components", e.to_string()))?;
        Ok(Self {
            stage: header.stage,
            config: header.config,
            steps: header.steps,
            summary: header.summary,
            loss_history: header.loss_history,
            bundle,
        })
    }
}

struct ParamReader<'a> {
    entries: std::slice::Iter<'a, ParamEntry>,
    blob: &'a [u8],
}

impl ParamReader<'_> {
    fn tensor(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let entry = self
            .entries
            .next()
            .ok_or_else(|| Error::format("params", format!("missing parameter `{name}`")))?;
        if entry.name != name || entry.shape != shape {
            return Err(Error::format(
                "params",
                format!(
                    "expected `{name}` {shape:?}, manifest lists `{}` {:?}",
                    entry.name, entry.shape
                ),
            ));
        }
        let n: usize = shape.iter().product();
        let (head, rest) = self.blob.split_at(n * 8);
        self.blob = rest;
        let data = head
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(shape.to_vec(), data).map_err(|e| Error::format(name, e.to_string()))
    }

    fn mlp(&mut self, prefix: &str, dims: &[usize], activation: Activation) -> Result<Mlp> {
        if dims.len() < 2 {
            return Err(Error::format(prefix, format!("layer dims {dims:?} too short")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in dims.windows(2).enumerate() {
            weights.push(self.tensor(&format!("{prefix}.w{l}"), &[pair[1], pair[0]])?);
            biases.push(self.tensor(&format!("{prefix}.b{l}"), &[pair[1]])?);
        }
        Mlp::from_parts(dims.to_vec(), weights, biases, activation)
            .map_err(|e| Error::format(prefix, e.to_string()))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
