use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetBundle;
use crate::error::{Error, Result};

/// Per-class shuffle, then the first `round(fraction * count)` rows of each
/// class go to train. Returned index lists are ascending.
fn stratify(
    labels: &[usize],
    num_classes: usize,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in DatasetBundle::class_indices(labels, num_classes)
        .into_iter()
        .enumerate()
    {
        let n_train = (fraction * idx.len() as f64).round() as usize;
        if n_train == 0 {
            return Err(Error::Stratification { class, side: "train" });
        }
        if n_train >= idx.len() {
            return Err(Error::Stratification { class, side: "test" });
        }
        idx.shuffle(rng);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn subset(b: &DatasetBundle, paired: &[usize], emotion: &[usize]) -> Result<DatasetBundle> {
    let mut out = DatasetBundle::new(
        b.video.select_rows(paired)?,
        b.fmri.select_rows(paired)?,
        b.emotion.select_rows(emotion)?,
        paired.iter().map(|&i| b.labels_paired[i]).collect(),
        emotion.iter().map(|&i| b.labels_emotion[i]).collect(),
        b.num_classes,
    )?;
    out.generator = b.generator.clone();
    Ok(out)
}

/// Class-stratified train/test split.
///
/// Video and fMRI rows move together; emotion rows are split on their own.
pub fn split(
    bundle: &DatasetBundle,
    train_fraction: f64,
    seed: u64,
) -> Result<(DatasetBundle, DatasetBundle)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p_train, p_test) = stratify(&bundle.labels_paired, bundle.num_classes, train_fraction, &mut rng)?;
    let (e_train, e_test) = stratify(&bundle.labels_emotion, bundle.num_classes, train_fraction, &mut rng)?;
    Ok((
        subset(bundle, &p_train, &e_train)?,
        subset(bundle, &p_test, &e_test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::synthdata::{generate_synthetic, SyntheticSpec};

    /// Bundle whose first column records the source row index.
    fn tagged(per_class: usize, k: usize) -> DatasetBundle {
        let n = per_class * k;
        let tag = |i: usize, w: usize| (0..w).map(move |j| if j == 0 { i as f64 } else { 0.5 });
        let video: Vec<f64> = (0..n).flat_map(|i| tag(i, 3)).collect();
        let fmri: Vec<f64> = (0..n).flat_map(|i| tag(i, 2)).collect();
        let emotion: Vec<f64> = (0..n).flat_map(|i| tag(1000 + i, 2)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        DatasetBundle::new(
            Tensor::matrix(n, 3, video).unwrap(),
            Tensor::matrix(n, 2, fmri).unwrap(),
            Tensor::matrix(n, 2, emotion).unwrap(),
            labels.clone(),
            labels,
            k,
        )
        .unwrap()
    }

    #[test]
    fn eight_two_per_class() {
        let b = tagged(10, 3);
        let (train, test) = split(&b, 0.8, 5).unwrap();
        for class in 0..3 {
            assert_eq!(train.labels_paired.iter().filter(|&&l| l == class).count(), 8);
            assert_eq!(test.labels_paired.iter().filter(|&&l| l == class).count(), 2);
            assert_eq!(test.labels_emotion.iter().filter(|&&l| l == class).count(), 2);
        }
    }

    #[test]
    fn union_and_pairing() {
        let b = tagged(10, 3);
        let (train, test) = split(&b, 0.7, 11).unwrap();
        let mut sources = Vec::new();
        for part in [&train, &test] {
            for i in 0..part.num_paired() {
                let src = part.video.row(i)[0];
                assert_eq!(part.fmri.row(i)[0], src, "pairing broken");
                assert_eq!(part.labels_paired[i], b.labels_paired[src as usize]);
                sources.push(src as usize);
            }
        }
        sources.sort_unstable();
        assert_eq!(sources, (0..30).collect::<Vec<_>>());

        let mut emo: Vec<usize> = [&train, &test]
            .iter()
            .flat_map(|p| p.emotion.row_iter().map(|r| r[0] as usize).collect::<Vec<_>>())
            .collect();
        emo.sort_unstable();
        assert_eq!(emo, (1000..1030).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_in_seed() {
        let b = generate_synthetic(&SyntheticSpec::default()).unwrap();
        let (a1, b1) = split(&b, 0.8, 3).unwrap();
        let (a2, b2) = split(&b, 0.8, 3).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn stratification_errors() {
        let b = tagged(2, 2);
        assert!(matches!(split(&b, 0.2, 0), Err(Error::Stratification { side: "train", .. })));
        assert!(matches!(split(&b, 0.9, 0), Err(Error::Stratification { side: "test", .. })));
        assert!(matches!(split(&b, 1.0, 0), Err(Error::Config(_))));
        assert!(matches!(split(&b, 0.0, 0), Err(Error::Config(_))));
    }
}
