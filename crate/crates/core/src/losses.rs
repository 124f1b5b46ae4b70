//! Training objectives: per-sample squared reconstruction error, paired
//! embedding mapping error, class prototypes, the negative-distance softmax
//! and its negative log-likelihood.
//!
//! Tape-level functions take and return [`Var`]s so gradients flow into the
//! networks that produced their inputs. Value-level helpers with the same
//! names suffixed `_value` build a throwaway tape and return plain numbers.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ordered_sum, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Class centroids in the fMRI embedding space; row `k` belongs to class `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototypes {
    matrix: Tensor,
    counts: Vec<usize>,
}

impl Prototypes {
    pub fn new(matrix: Tensor, counts: Vec<usize>) -> Result<Self> {
        if matrix.shape().len() != 2 {
            return Err(Error::dim("prototypes", matrix.shape(), &[counts.len()]));
        }
        if matrix.rows() < 2 {
            return Err(Error::Config(format!(
                "prototype softmax needs at least 2 classes, got {}",
                matrix.rows()
            )));
        }
        if counts.len() != matrix.rows() {
            return Err(Error::dim("prototypes", matrix.shape(), &[counts.len()]));
        }
        if let Some(class) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass { class });
        }
        Ok(Self { matrix, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.matrix.row(k)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceTag {
    #[default]
    SqEuclidean,
}

impl DistanceTag {
    pub fn distance(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            DistanceTag::SqEuclidean => sq_euclidean(a, b),
        }
    }
}

/// `Σ_j (a_j − b_j)²`, summed in index order.
pub fn sq_euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("sq_euclidean", &[a.len()], &[b.len()]));
    }
    Ok(a.iter().zip(b).fold(0.0, |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    }))
}

fn mean_sq_distance(tape: &mut Tape, op: &'static str, a: Var, b: Var) -> Result<Var> {
    let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
    if sa != sb || sa.len() != 2 {
        return Err(Error::dim(op, sa, sb));
    }
    let diff = tape.sub(a, b)?;
    let sq = tape.square(diff)?;
    let per_sample = tape.sum_rows(sq)?;
    tape.mean(per_sample)
}

/// `(1/n) Σ_i ‖x_i − x̂_i‖²` over the rows of `[n, d]` matrices.
pub fn reconstruction_loss(tape: &mut Tape, x: Var, x_hat: Var) -> Result<Var> {
    mean_sq_distance(tape, "reconstruction_loss", x, x_hat)
}

/// `(1/n) Σ_i ‖v_i − m_i‖²` between row-paired embeddings.
pub fn mapping_loss(tape: &mut Tape, video_emb: Var, mapped_emb: Var) -> Result<Var> {
    mean_sq_distance(tape, "mapping_loss", video_emb, mapped_emb)
}

fn eval_pair(
    f: fn(&mut Tape, Var, Var) -> Result<Var>,
    a: &Tensor,
    b: &Tensor,
) -> Result<f64> {
    let mut tape = Tape::new();
    let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let out = f(&mut tape, va, vb)?;
    tape.value(out).item()
}

pub fn reconstruction_loss_value(x: &Tensor, x_hat: &Tensor) -> Result<f64> {
    eval_pair(reconstruction_loss, x, x_hat)
}

pub fn mapping_loss_value(video_emb: &Tensor, mapped_emb: &Tensor) -> Result<f64> {
    eval_pair(mapping_loss, video_emb, mapped_emb)
}

/// A composite objective and the tape nodes of its two terms.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub reconstruction: Var,
    /// Unweighted second term.
    pub alignment: Var,
}

impl LossTerms {
    pub fn values(&self, tape: &Tape) -> Result<[f64; 3]> {
        Ok([
            tape.value(self.total).item()?,
            tape.value(self.reconstruction).item()?,
            tape.value(self.alignment).item()?,
        ])
    }
}

fn check_weight(name: &str, w: f64) -> Result<()> {
    if w.is_finite() && w >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and >= 0, got {w}")))
    }
}

fn weighted_sum(tape: &mut Tape, first: Var, second: Var, weight: f64) -> Result<Var> {
    let scaled = tape.scale(second, weight)?;
    tape.add(first, scaled)
}

/// fMRI reconstruction plus `lambda_map` times the paired mapping term.
pub fn stage2_loss(
    tape: &mut Tape,
    fmri_x: Var,
    fmri_rec: Var,
    video_emb: Var,
    mapped_emb: Var,
    lambda_map: f64,
) -> Result<LossTerms> {
    check_weight("lambda_map", lambda_map)?;
    let reconstruction = reconstruction_loss(tape, fmri_x, fmri_rec)?;
    let alignment = mapping_loss(tape, video_emb, mapped_emb)?;
    let total = weighted_sum(tape, reconstruction, alignment, lambda_map)?;
    Ok(LossTerms {
        total,
        reconstruction,
        alignment,
    })
}

/// Row `k` is the mean of the embeddings labelled `k`.
pub fn compute_prototypes(embeddings: &Tensor, labels: &[usize], k: usize) -> Result<Prototypes> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {k}")));
    }
    if embeddings.shape().len() != 2 || embeddings.rows() != labels.len() {
        return Err(Error::dim("compute_prototypes", embeddings.shape(), &[labels.len()]));
    }
    let d = embeddings.cols();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (row, &label) in embeddings.row_iter().zip(labels) {
        if label >= k {
            return Err(Error::Index { index: label, len: k });
        }
        counts[label] += 1;
        for (s, &v) in sums[label * d..(label + 1) * d].iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class });
    }
    for (class, &c) in counts.iter().enumerate() {
        for s in &mut sums[class * d..(class + 1) * d] {
            *s /= c as f64;
        }
    }
    Prototypes::new(Tensor::matrix(k, d, sums)?, counts)
}

/// Softmax over negated distances, shifted by the smallest distance.
pub fn softmax_neg_distances(distances: &[f64]) -> Vec<f64> {
    let max_logit = distances
        .iter()
        .map(|&d| -d)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = distances.iter().map(|&d| (-d - max_logit).exp()).collect();
    let total = ordered_sum(&exps);
    exps.into_iter().map(|e| e / total).collect()
}

/// Distances from `query` to every prototype.
pub fn prototype_distances(query: &[f64], prototypes: &Prototypes, tag: DistanceTag) -> Result<Vec<f64>> {
    if query.len() != prototypes.dim() {
        return Err(Error::dim("proto_softmax", &[query.len()], &[prototypes.dim()]));
    }
    (0..prototypes.num_classes())
        .map(|k| tag.distance(query, prototypes.row(k)))
        .collect()
}

/// Class posterior `P(y = k) ∝ exp(−d(query, p_k))`.
pub fn proto_softmax(query: &[f64], prototypes: &Prototypes, tag: DistanceTag) -> Result<Vec<f64>> {
    if prototypes.num_classes() < 2 {
        return Err(Error::Config("prototype softmax needs at least 2 classes".into()));
    }
    Ok(softmax_neg_distances(&prototype_distances(query, prototypes, tag)?))
}

/// `−ln p_k` for a valid probability vector.
pub fn matching_loss(probabilities: &[f64], class: usize) -> Result<f64> {
    if class >= probabilities.len() {
        return Err(Error::Index {
            index: class,
            len: probabilities.len(),
        });
    }
    let total = ordered_sum(probabilities);
    if (total - 1.0).abs() > 1e-9 || probabilities.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::Contract(format!(
            "probabilities must lie in [0, 1] and sum to 1, got sum {total}"
        )));
    }
    Ok(-probabilities[class].ln())
}

/// Mean negative log-likelihood of `labels` under the prototype softmax.
///
/// Each per-class distance column is built with the same summation order as
/// [`sq_euclidean`]; the log-sum-exp is shifted by a constant row maximum,
/// which leaves its gradient unchanged.
pub fn matching_loss_batch(
    tape: &mut Tape,
    mapped: Var,
    prototypes: &Prototypes,
    labels: &[usize],
) -> Result<Var> {
    let shape = tape.value(mapped).shape().to_vec();
    if shape.len() != 2 || shape[1] != prototypes.dim() {
        return Err(Error::dim("matching_loss", &shape, prototypes.matrix().shape()));
    }
    let n = shape[0];
    if labels.len() != n {
        return Err(Error::dim("matching_loss", &shape, &[labels.len()]));
    }
    let k = prototypes.num_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Index { index: bad, len: k });
    }

    let mut logits = Vec::with_capacity(k);
    for class in 0..k {
        let proto = tape.constant(Tensor::vector(prototypes.row(class).to_vec())?);
        let diff = tape.sub(mapped, proto)?;
        let sq = tape.square(diff)?;
        let dist = tape.sum_rows(sq)?;
        logits.push(tape.neg(dist)?);
    }

    let mut row_max = vec![f64::NEG_INFINITY; n];
    for &z in &logits {
        for (m, &v) in row_max.iter_mut().zip(tape.value(z).data()) {
            *m = m.max(v);
        }
    }
    let shift = tape.constant(Tensor::matrix(n, 1, row_max)?);

    let mut sum_exp: Option<Var> = None;
    let mut picked: Option<Var> = None;
    for (class, &z) in logits.iter().enumerate() {
        let shifted = tape.sub(z, shift)?;
        let e = tape.exp(shifted)?;
        sum_exp = Some(match sum_exp {
            Some(acc) => tape.add(acc, e)?,
            None => e,
        });
        let mask: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l == class))).collect();
        let mask = tape.constant(Tensor::matrix(n, 1, mask)?);
        let sel = tape.mul(z, mask)?;
        picked = Some(match picked {
            Some(acc) => tape.add(acc, sel)?,
            None => sel,
        });
    }
    let log_sum = tape.log(sum_exp.expect("k >= 2"))?;
    let lse = tape.add(log_sum, shift)?;
    let nll = tape.sub(lse, picked.expect("k >= 2"))?;
    tape.mean(nll)
}

/// Emotion reconstruction plus `lambda_match` times the mean matching loss.
pub fn stage3_loss(
    tape: &mut Tape,
    emotion_x: Var,
    emotion_rec: Var,
    mapped: Var,
    labels: &[usize],
    prototypes: &Prototypes,
    lambda_match: f64,
) -> Result<LossTerms> {
    check_weight("lambda_match", lambda_match)?;
    let reconstruction = reconstruction_loss(tape, emotion_x, emotion_rec)?;
    let alignment = matching_loss_batch(tape, mapped, prototypes, labels)?;
    let total = weighted_sum(tape, reconstruction, alignment, lambda_match)?;
    Ok(LossTerms {
        total,
        reconstruction,
        alignment,
    })
}
