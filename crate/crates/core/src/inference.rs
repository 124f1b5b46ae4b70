//! Emotion-prompted decoding: emotion encoder → emotion→fMRI map →
//! fMRI→video map → video decoder, with the prototype posterior read off in
//! the fMRI embedding space.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::losses::proto_softmax;
use crate::models::{Component, ModelBundle};

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub reconstructed_frame: Vec<f64>,
    pub class_posterior: Vec<f64>,
    pub predicted_class: usize,
    pub emotion_embedding: Vec<f64>,
    pub mapped_fmri: Vec<f64>,
    pub mapped_video: Vec<f64>,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn require_decoder(bundle: &ModelBundle) -> Result<()> {
    for c in [
        Component::VideoAe,
        Component::FmriAe,
        Component::MapFToV,
        Component::EmotionAe,
        Component::MapEToF,
        Component::Prototypes,
    ] {
        if !bundle.has(c) {
            return Err(Error::MissingComponent(c.name().to_string()));
        }
    }
    Ok(())
}

pub fn decode(x_e: &[f64], bundle: &ModelBundle) -> Result<DecodeResult> {
    let mut out = decode_batch(&[x_e], bundle)?;
    Ok(out.pop().expect("one row in, one result out"))
}

/// Decodes every row; an empty batch gives an empty list.
pub fn decode_batch<R: AsRef<[f64]>>(rows: &[R], bundle: &ModelBundle) -> Result<Vec<DecodeResult>> {
    require_decoder(bundle)?;
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let emotion_ae = bundle.emotion_ae()?;
    let width = emotion_ae.input_dim();
    for (i, r) in rows.iter().enumerate() {
        if r.as_ref().len() != width {
            return Err(Error::Dimension {
                op: "decode",
                lhs: vec![i, r.as_ref().len()],
                rhs: vec![width],
            });
        }
    }
    let x = Tensor::from_rows(rows)?;
    let emb = emotion_ae.encode(&x)?;
    let mapped_f = bundle.map_e_to_f()?.forward(&emb)?;
    let mapped_v = bundle.map_f_to_v()?.forward(&mapped_f)?;
    let frames = bundle.video_ae()?.decoder.forward(&mapped_v)?;
    let prototypes = bundle.prototypes()?;
    let distance = Default::default();

    (0..x.rows())
        .map(|i| {
            let posterior = proto_softmax(mapped_f.row(i), prototypes, distance)?;
            Ok(DecodeResult {
                reconstructed_frame: frames.row(i).to_vec(),
                predicted_class: argmax(&posterior),
                class_posterior: posterior,
                emotion_embedding: emb.row(i).to_vec(),
                mapped_fmri: mapped_f.row(i).to_vec(),
                mapped_video: mapped_v.row(i).to_vec(),
            })
        })
        .collect()
}

/// `(predicted_class, posterior)` for one emotion row.
pub fn classify(x_e: &[f64], bundle: &ModelBundle) -> Result<(usize, Vec<f64>)> {
    let r = decode(x_e, bundle)?;
    Ok((r.predicted_class, r.class_posterior))
}
