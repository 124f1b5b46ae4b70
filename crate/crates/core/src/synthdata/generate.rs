use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::DatasetBundle;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Number of random center configurations tried; the best-spread one wins.
const CENTER_CANDIDATES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityDims {
    pub video: usize,
    pub fmri: usize,
    pub emotion: usize,
}

impl Default for ModalityDims {
    fn default() -> Self {
        Self {
            video: 32,
            fmri: 24,
            emotion: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseStd {
    pub video: f64,
    pub fmri: f64,
    pub emotion: f64,
}

impl Default for NoiseStd {
    fn default() -> Self {
        Self {
            video: 0.05,
            fmri: 0.05,
            emotion: 0.05,
        }
    }
}

/// Parameters of the latent-factor generator.
///
/// Each class owns a center in latent space. Paired video/fMRI rows share one
/// latent draw around their class center; emotion rows take independent
/// draws, so they correlate with the others only through the label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub latent_dim: usize,
    pub dims: ModalityDims,
    pub samples_per_class: usize,
    pub repetitions_per_class: usize,
    /// Distance of every class center from the origin.
    pub class_separation: f64,
    /// Per-coordinate spread of latents around their class center.
    pub within_class_std: f64,
    pub noise_std: NoiseStd,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 5,
            latent_dim: 4,
            dims: ModalityDims::default(),
            samples_per_class: 40,
            repetitions_per_class: 10,
            class_separation: 3.0,
            within_class_std: 0.5,
            noise_std: NoiseStd::default(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Parses a JSON spec, rejecting unknown keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.num_classes < 2 {
            return bad("num_classes", format!("must be >= 2, got {}", self.num_classes));
        }
        if self.latent_dim < 1 {
            return bad("latent_dim", "must be >= 1".into());
        }
        for (name, d) in [
            ("dims.video", self.dims.video),
            ("dims.fmri", self.dims.fmri),
            ("dims.emotion", self.dims.emotion),
        ] {
            if d < self.latent_dim {
                return bad(name, format!("{d} is below latent_dim {}", self.latent_dim));
            }
        }
        if self.samples_per_class < 1 {
            return bad("samples_per_class", "must be >= 1".into());
        }
        if self.repetitions_per_class < 1 {
            return bad("repetitions_per_class", "must be >= 1".into());
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return bad("class_separation", format!("must be >= 0, got {}", self.class_separation));
        }
        if !(self.within_class_std.is_finite() && self.within_class_std >= 0.0) {
            return bad("within_class_std", format!("must be >= 0, got {}", self.within_class_std));
        }
        for (name, s) in [
            ("noise_std.video", self.noise_std.video),
            ("noise_std.fmri", self.noise_std.fmri),
            ("noise_std.emotion", self.noise_std.emotion),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return bad(name, format!("must be >= 0, got {s}"));
            }
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Rounds through `f32` so values survive the on-disk format unchanged.
fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

/// Random unit directions scaled by `separation`, keeping the candidate set
/// with the largest minimum pairwise distance.
fn class_centers(rng: &mut ChaCha8Rng, k: usize, latent: usize, separation: f64) -> Vec<Vec<f64>> {
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for _ in 0..CENTER_CANDIDATES {
        let centers: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let mut dir: Vec<f64> = (0..latent).map(|_| normal(rng)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                dir.iter_mut().for_each(|x| *x = *x / norm * separation);
                dir
            })
            .collect();
        let mut min_dist = f64::INFINITY;
        for a in 0..k {
            for b in a + 1..k {
                let d: f64 = centers[a]
                    .iter()
                    .zip(&centers[b])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                min_dist = min_dist.min(d);
            }
        }
        if best.as_ref().is_none_or(|(m, _)| min_dist > *m) {
            best = Some((min_dist, centers));
        }
    }
    best.expect("at least one candidate").1
}

/// `[out, latent]` map with entries `N(0, 1/latent)`.
fn linear_map(rng: &mut ChaCha8Rng, out: usize, latent: usize) -> Vec<f64> {
    let scale = 1.0 / (latent as f64).sqrt();
    (0..out * latent).map(|_| normal(rng) * scale).collect()
}

fn project(map: &[f64], z: &[f64], noise: f64, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    let latent = z.len();
    for row in map.chunks(latent) {
        let clean: f64 = row.iter().zip(z).map(|(a, b)| a * b).sum();
        out.push(quantize(clean + noise * normal(rng)));
    }
}

fn class_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws a full dataset. Identical specs give bit-identical bundles.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let k = spec.num_classes;
    let latent = spec.latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = class_centers(&mut rng, k, latent, spec.class_separation);
    let map_v = linear_map(&mut rng, spec.dims.video, latent);
    let map_f = linear_map(&mut rng, spec.dims.fmri, latent);
    let map_e = linear_map(&mut rng, spec.dims.emotion, latent);

    let draw_latent = |rng: &mut ChaCha8Rng, center: &[f64]| -> Vec<f64> {
        center
            .iter()
            .map(|&c| c + spec.within_class_std * normal(rng))
            .collect()
    };

    let n = k * spec.samples_per_class;
    let mut video = Vec::with_capacity(n * spec.dims.video);
    let mut fmri = Vec::with_capacity(n * spec.dims.fmri);
    let mut labels_paired = Vec::with_capacity(n);
    for (class, center) in centers.iter().enumerate() {
        let mut crng = class_rng(spec.seed, 1 + class as u64);
        for _ in 0..spec.samples_per_class {
            let z = draw_latent(&mut crng, center);
            project(&map_v, &z, spec.noise_std.video, &mut crng, &mut video);
            project(&map_f, &z, spec.noise_std.fmri, &mut crng, &mut fmri);
            labels_paired.push(class);
        }
    }

    let m = k * spec.repetitions_per_class;
    let mut emotion = Vec::with_capacity(m * spec.dims.emotion);
    let mut labels_emotion = Vec::with_capacity(m);
    for (class, center) in centers.iter().enumerate() {
        let mut crng = class_rng(spec.seed, 1 + (k + class) as u64);
        for _ in 0..spec.repetitions_per_class {
            let z = draw_latent(&mut crng, center);
            project(&map_e, &z, spec.noise_std.emotion, &mut crng, &mut emotion);
            labels_emotion.push(class);
        }
    }

    let mut bundle = DatasetBundle::new(
        Tensor::matrix(n, spec.dims.video, video)?,
        Tensor::matrix(n, spec.dims.fmri, fmri)?,
        Tensor::matrix(m, spec.dims.emotion, emotion)?,
        labels_paired,
        labels_emotion,
        k,
    )?;
    bundle.generator = Some(spec.clone());
    Ok(bundle)
}
