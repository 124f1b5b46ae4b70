//! Alignment metrics, the evaluation report and raw embedding export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::inference::decode_batch;
use crate::losses::{reconstruction_loss_value, sq_euclidean, Prototypes};
use crate::models::{Component, ModelBundle};
use crate::synthdata::DatasetBundle;

/// Fraction of rows whose true partner ranks within `top_k` by squared
/// Euclidean distance. A competitor at equal distance outranks the true
/// partner only if its index is lower.
pub fn retrieval_accuracy(mapped: &Tensor, video: &Tensor, top_k: usize) -> Result<f64> {
    if mapped.shape() != video.shape() || mapped.shape().len() != 2 {
        return Err(Error::dim("retrieval_accuracy", mapped.shape(), video.shape()));
    }
    let n = mapped.rows();
    if n < 2 {
        return Err(Error::Config(format!("retrieval needs at least 2 rows, got {n}")));
    }
    if top_k < 1 || top_k > n {
        return Err(Error::Config(format!("top_k must lie in 1..={n}, got {top_k}")));
    }
    let mut hits = 0usize;
    for i in 0..n {
        let q = mapped.row(i);
        let own = sq_euclidean(q, video.row(i))?;
        let mut rank = 0usize;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = sq_euclidean(q, video.row(j))?;
            if d < own || (d == own && j < i) {
                rank += 1;
                if rank >= top_k {
                    break;
                }
            }
        }
        if rank < top_k {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

/// Fraction of rows whose prototype-softmax prediction equals the label.
pub fn classification_accuracy<R: AsRef<[f64]>>(
    rows: &[R],
    labels: &[usize],
    bundle: &ModelBundle,
) -> Result<f64> {
    bundle.prototypes()?;
    if rows.is_empty() {
        return Err(Error::Config("classification accuracy of an empty set is undefined".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::dim("classification_accuracy", &[rows.len()], &[labels.len()]));
    }
    let results = decode_batch(rows, bundle)?;
    let correct = results
        .iter()
        .zip(labels)
        .filter(|(r, &l)| r.predicted_class == l)
        .count();
    Ok(correct as f64 / rows.len() as f64)
}

/// Emotion rows pushed through the emotion encoder and emotion→fMRI map.
pub fn mapped_emotion(bundle: &ModelBundle, emotion: &Tensor) -> Result<Tensor> {
    let emb = bundle.emotion_ae()?.encode(emotion)?;
    bundle.map_e_to_f()?.forward(&emb)
}

/// fMRI rows pushed through the fMRI encoder and fMRI→video map.
pub fn mapped_fmri(bundle: &ModelBundle, fmri: &Tensor) -> Result<Tensor> {
    let emb = bundle.fmri_ae()?.encode(fmri)?;
    bundle.map_f_to_v()?.forward(&emb)
}

/// Squared distance between each class's mean mapped emotion embedding and
/// that class's prototype.
pub fn centroid_alignment(bundle: &ModelBundle, data: &DatasetBundle) -> Result<Vec<f64>> {
    let prototypes = bundle.prototypes()?;
    let mapped = mapped_emotion(bundle, &data.emotion)?;
    let groups = DatasetBundle::class_indices(&data.labels_emotion, prototypes.num_classes());
    let d = mapped.cols();
    groups
        .iter()
        .enumerate()
        .map(|(class, idx)| {
            if idx.is_empty() {
                return Err(Error::EmptyClass { class });
            }
            let mut mean = vec![0.0; d];
            for &i in idx {
                for (m, &v) in mean.iter_mut().zip(mapped.row(i)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
            sq_euclidean(&mean, prototypes.row(class))
        })
        .collect()
}

/// Mean squared distance over all unordered prototype pairs.
pub fn mean_inter_prototype_distance(p: &Prototypes) -> Result<f64> {
    let k = p.num_classes();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..k {
        for b in a + 1..k {
            total += sq_euclidean(p.row(a), p.row(b))?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Reconstruction,
    Retrieval,
    Classification,
    Alignment,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Reconstruction,
        Metric::Retrieval,
        Metric::Classification,
        Metric::Alignment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Reconstruction => "reconstruction",
            Metric::Retrieval => "retrieval",
            Metric::Classification => "classification",
            Metric::Alignment => "alignment",
        }
    }

    fn needs(self) -> &'static [Component] {
        match self {
            Metric::Reconstruction => &[Component::VideoAe],
            Metric::Retrieval => &[Component::VideoAe, Component::FmriAe, Component::MapFToV],
            Metric::Classification | Metric::Alignment => &[
                Component::VideoAe,
                Component::FmriAe,
                Component::MapFToV,
                Component::EmotionAe,
                Component::MapEToF,
                Component::Prototypes,
            ],
        }
    }

    fn min_stage(self) -> u8 {
        match self {
            Metric::Reconstruction => 1,
            Metric::Retrieval => 2,
            Metric::Classification | Metric::Alignment => 3,
        }
    }

    pub fn supported_by(self, bundle: &ModelBundle) -> bool {
        self.needs().iter().all(|&c| bundle.has(c))
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ReconstructionMse {
    pub emotion: Option<f64>,
    pub fmri: Option<f64>,
    pub video: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SampleCounts {
    pub emotion: usize,
    pub paired: usize,
}

/// Evaluation summary; absent metrics serialize as `null`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub centroid_distances: Option<Vec<f64>>,
    pub classification_accuracy: Option<f64>,
    pub mean_centroid_distance: Option<f64>,
    pub mean_inter_prototype_distance: Option<f64>,
    pub reconstruction_mse: ReconstructionMse,
    pub retrieval_top1: Option<f64>,
    pub retrieval_top5: Option<f64>,
    pub sample_counts: SampleCounts,
}

impl EvalReport {
    /// Pretty JSON with lexicographically sorted keys and a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        let mut s = serde_json::to_string_pretty(&value)?;
        s.push('\n');
        Ok(s)
    }
}

/// Computes the requested metrics (or every metric the bundle supports).
///
/// Explicitly requested metrics the bundle cannot support are a stage error.
pub fn evaluate(bundle: &ModelBundle, data: &DatasetBundle, requested: Option<&[Metric]>) -> Result<EvalReport> {
    let metrics: Vec<Metric> = match requested {
        Some(list) => {
            if let Some(m) = list.iter().find(|m| !m.supported_by(bundle)) {
                return Err(Error::Stage(format!(
                    "metric `{}` needs a stage-{} checkpoint",
                    m.name(),
                    m.min_stage()
                )));
            }
            list.to_vec()
        }
        None => Metric::ALL.into_iter().filter(|m| m.supported_by(bundle)).collect(),
    };

    let mut report = EvalReport {
        sample_counts: SampleCounts {
            emotion: data.num_emotion(),
            paired: data.num_paired(),
        },
        ..Default::default()
    };
    for m in metrics {
        match m {
            Metric::Reconstruction => {
                let mse = |ae: Option<&crate::models::Autoencoder>, x: &Tensor| -> Result<Option<f64>> {
                    ae.map(|ae| {
                        let (_, rec) = ae.forward(x)?;
                        reconstruction_loss_value(x, &rec)
                    })
                    .transpose()
                };
                report.reconstruction_mse = ReconstructionMse {
                    video: mse(bundle.video_ae.as_ref(), &data.video)?,
                    fmri: mse(bundle.fmri_ae.as_ref(), &data.fmri)?,
                    emotion: mse(bundle.emotion_ae.as_ref(), &data.emotion)?,
                };
            }
            Metric::Retrieval => {
                let mapped = mapped_fmri(bundle, &data.fmri)?;
                let video = bundle.video_ae()?.encode(&data.video)?;
                report.retrieval_top1 = Some(retrieval_accuracy(&mapped, &video, 1)?);
                if data.num_paired() >= 5 {
                    report.retrieval_top5 = Some(retrieval_accuracy(&mapped, &video, 5)?);
                }
            }
            Metric::Classification => {
                let rows: Vec<&[f64]> = data.emotion.row_iter().collect();
                report.classification_accuracy =
                    Some(classification_accuracy(&rows, &data.labels_emotion, bundle)?);
            }
            Metric::Alignment => {
                let dists = centroid_alignment(bundle, data)?;
                report.mean_centroid_distance = Some(dists.iter().sum::<f64>() / dists.len() as f64);
                report.centroid_distances = Some(dists);
                report.mean_inter_prototype_distance =
                    Some(mean_inter_prototype_distance(bundle.prototypes()?)?);
            }
        }
    }
    Ok(report)
}

/// 17 significant digits; parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_embedding_csv(path: &Path, modality: &str, labels: &[usize], emb: &Tensor) -> Result<()> {
    let mut out = String::from("modality,class,index");
    for j in 0..emb.cols() {
        write!(out, ",e{j}").expect("writing to a String");
    }
    out.push('\n');
    for (i, (row, label)) in emb.row_iter().zip(labels).enumerate() {
        write!(out, "{modality},{label},{i}").expect("writing to a String");
        for &v in row {
            out.push(',');
            out.push_str(&format_float(v));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes one CSV per modality the bundle can embed and returns the paths.
///
/// Files: `video.csv` (video encoder), `fmri.csv` (fMRI encoder),
/// `fmri_mapped.csv` (fMRI encoder then fMRI→video map) and
/// `emotion_mapped.csv` (emotion encoder then emotion→fMRI map).
pub fn export_embeddings(bundle: &ModelBundle, data: &DatasetBundle, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, labels: &[usize], emb: Tensor| -> Result<()> {
        let path = dir.join(format!("{name}.csv"));
        write_embedding_csv(&path, name, labels, &emb)?;
        written.push(path);
        Ok(())
    };
    if let Some(v) = &bundle.video_ae {
        emit("video", &data.labels_paired, v.encode(&data.video)?)?;
    }
    if let Some(f) = &bundle.fmri_ae {
        let emb = f.encode(&data.fmri)?;
        if let Some(m) = &bundle.map_f_to_v {
            emit("fmri_mapped", &data.labels_paired, m.forward(&emb)?)?;
        }
        emit("fmri", &data.labels_paired, emb)?;
    }
    if bundle.emotion_ae.is_some() && bundle.map_e_to_f.is_some() {
        emit("emotion_mapped", &data.labels_emotion, mapped_emotion(bundle, &data.emotion)?)?;
    }
    written.sort();
    Ok(written)
}
