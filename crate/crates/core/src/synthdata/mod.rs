//! Synthetic multi-modal datasets with known latent structure, the on-disk
//! dataset format and stratified splitting.

mod format;
mod generate;
mod split;

pub use format::{read_dataset, write_dataset, DATASET_FORMAT_VERSION};
pub use generate::{generate_synthetic, ModalityDims, NoiseStd, SyntheticSpec};
pub use split::split;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Row-paired video/fMRI samples plus a label-only emotion set.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub video: Tensor,
    pub fmri: Tensor,
    pub emotion: Tensor,
    pub labels_paired: Vec<usize>,
    pub labels_emotion: Vec<usize>,
    pub num_classes: usize,
    /// Generator parameters, when the data is synthetic.
    pub generator: Option<SyntheticSpec>,
}

impl DatasetBundle {
    pub fn new(
        video: Tensor,
        fmri: Tensor,
        emotion: Tensor,
        labels_paired: Vec<usize>,
        labels_emotion: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!("num_classes must be >= 2, got {num_classes}")));
        }
        for (name, t) in [("video", &video), ("fmri", &fmri), ("emotion", &emotion)] {
            if t.shape().len() != 2 {
                return Err(Error::Config(format!("{name} must be a matrix, got {:?}", t.shape())));
            }
        }
        if video.rows() != fmri.rows() || video.rows() != labels_paired.len() {
            return Err(Error::Config(format!(
                "paired sets disagree: {} video rows, {} fMRI rows, {} labels",
                video.rows(),
                fmri.rows(),
                labels_paired.len()
            )));
        }
        if emotion.rows() != labels_emotion.len() {
            return Err(Error::Config(format!(
                "{} emotion rows but {} labels",
                emotion.rows(),
                labels_emotion.len()
            )));
        }
        if let Some(&bad) = labels_paired.iter().chain(&labels_emotion).find(|&&l| l >= num_classes) {
            return Err(Error::Index {
                index: bad,
                len: num_classes,
            });
        }
        Ok(Self {
            video,
            fmri,
            emotion,
            labels_paired,
            labels_emotion,
            num_classes,
            generator: None,
        })
    }

    pub fn num_paired(&self) -> usize {
        self.video.rows()
    }

    pub fn num_emotion(&self) -> usize {
        self.emotion.rows()
    }

    pub fn dims(&self) -> ModalityDims {
        ModalityDims {
            video: self.video.cols(),
            fmri: self.fmri.cols(),
            emotion: self.emotion.cols(),
        }
    }

    /// Row indices of each class in `labels`, ascending.
    pub fn class_indices(labels: &[usize], num_classes: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); num_classes];
        for (i, &l) in labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Per-class mean of the video rows.
    pub fn class_mean_video(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.video.cols();
        let groups = Self::class_indices(&self.labels_paired, self.num_classes);
        groups
            .iter()
            .enumerate()
            .map(|(class, idx)| {
                if idx.is_empty() {
                    return Err(Error::EmptyClass { class });
                }
                let mut mean = vec![0.0; d];
                for &i in idx {
                    for (m, &v) in mean.iter_mut().zip(self.video.row(i)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
                Ok(mean)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nearest_centroid_accuracy(x: &Tensor, labels: &[usize], k: usize) -> f64 {
        let d = x.cols();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (row, &l) in x.row_iter().zip(labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(row) {
                *s += v;
            }
        }
        for (s, &c) in sums.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|v| *v /= c.max(1) as f64);
        }
        let correct = x
            .row_iter()
            .zip(labels)
            .filter(|(row, &l)| {
                let dist = |c: &Vec<f64>| -> f64 { c.iter().zip(*row).map(|(a, b)| (a - b).powi(2)).sum() };
                let best = (0..k)
                    .min_by(|&a, &b| dist(&sums[a]).total_cmp(&dist(&sums[b])))
                    .unwrap();
                best == l
            })
            .count();
        correct as f64 / labels.len() as f64
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec::default();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.video.to_bits(), b.video.to_bits());
        assert_eq!(a.fmri.to_bits(), b.fmri.to_bits());
        assert_eq!(a.emotion.to_bits(), b.emotion.to_bits());
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.video, c.video);
    }

    #[test]
    fn default_shapes() {
        let b = generate_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(b.video.shape(), &[200, 32]);
        assert_eq!(b.fmri.shape(), &[200, 24]);
        assert_eq!(b.emotion.shape(), &[50, 16]);
        assert_eq!(b.labels_paired.len(), 200);
        assert_eq!(b.labels_emotion.len(), 50);
    }

    #[test]
    fn separable_without_noise() {
        let spec = SyntheticSpec {
            class_separation: 50.0,
            noise_std: NoiseStd {
                video: 0.0,
                fmri: 0.0,
                emotion: 0.0,
            },
            ..Default::default()
        };
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(nearest_centroid_accuracy(&b.fmri, &b.labels_paired, 5), 1.0);
    }

    #[test]
    fn chance_level_without_separation() {
        let spec = SyntheticSpec {
            class_separation: 0.0,
            samples_per_class: 120,
            seed: 9,
            ..Default::default()
        };
        let b = generate_synthetic(&spec).unwrap();
        assert!(b.num_paired() >= 500);
        let acc = nearest_centroid_accuracy(&b.fmri, &b.labels_paired, 5);
        assert!((acc - 0.2).abs() <= 0.1, "{acc}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let cases = [
            SyntheticSpec { num_classes: 1, ..Default::default() },
            SyntheticSpec { latent_dim: 40, ..Default::default() },
            SyntheticSpec { class_separation: -1.0, ..Default::default() },
            SyntheticSpec {
                noise_std: NoiseStd { video: -0.1, fmri: 0.0, emotion: 0.0 },
                ..Default::default()
            },
        ];
        for spec in cases {
            assert!(matches!(generate_synthetic(&spec), Err(Error::Config(_))));
        }
    }
}
