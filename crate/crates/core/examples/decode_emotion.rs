//! Trains the full pipeline, then decodes held-out emotion rows into a class
//! posterior and a video frame, and checks each frame against the class-mean
//! frames of the dataset.
//!
//! cargo run --release --example decode_emotion

use neuralign::inference::decode_batch;
use neuralign::losses::sq_euclidean;
use neuralign::synthdata::{generate_synthetic, split, SyntheticSpec};
use neuralign::training::{prepare_prototypes, train_stage1, train_stage2, train_stage3, TrainConfig};

fn main() -> neuralign::Result<()> {
    let data = generate_synthetic(&SyntheticSpec::default())?;
    let (train, test) = split(&data, 0.8, 0)?;
    let ckpt1 = train_stage1(&TrainConfig::for_stage(1), &train)?;
    let ckpt2 = train_stage2(&TrainConfig::for_stage(2), &train, &ckpt1)?;
    let prototypes = prepare_prototypes(&ckpt2, &train)?;
    let ckpt3 = train_stage3(&TrainConfig::for_stage(3), &train, &ckpt2, prototypes)?;

    let means = data.class_mean_video()?;
    let rows: Vec<&[f64]> = test.emotion.row_iter().collect();
    println!("row  label  predicted  posterior[label]  nearest-mean-frame");
    for (i, (r, &label)) in decode_batch(&rows, &ckpt3.bundle)?.iter().zip(&test.labels_emotion).enumerate() {
        let nearest = means
            .iter()
            .map(|m| sq_euclidean(&r.reconstructed_frame, m))
            .collect::<neuralign::Result<Vec<_>>>()?
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        println!(
            "{i:>3}  {label:>5}  {:>9}  {:>16.4}  {nearest:>18}",
            r.predicted_class, r.class_posterior[label]
        );
    }
    Ok(())
}
