//! Trains all three stages on the default synthetic dataset and prints the
//! alignment metrics on the held-out split.
//!
//! cargo run --release --example staged_training

use std::time::Instant;

use neuralign::metrics::{evaluate, mean_inter_prototype_distance};
use neuralign::synthdata::{generate_synthetic, split, SyntheticSpec};
use neuralign::training::{prepare_prototypes, train_stage1, train_stage2, train_stage3, TrainConfig};

fn main() -> neuralign::Result<()> {
    let data = generate_synthetic(&SyntheticSpec::default())?;
    let (train, test) = split(&data, 0.8, 0)?;
    println!("paired train/test: {}/{}", train.num_paired(), test.num_paired());

    let t = Instant::now();
    let ckpt1 = train_stage1(&TrainConfig::for_stage(1), &train)?;
    println!(
        "stage 1: loss {:.5} -> {:.5} ({:.1?})",
        ckpt1.summary.initial,
        ckpt1.summary.last,
        t.elapsed()
    );

    let t = Instant::now();
    let ckpt2 = train_stage2(&TrainConfig::for_stage(2), &train, &ckpt1)?;
    println!(
        "stage 2: loss {:.5} -> {:.5} ({:.1?})",
        ckpt2.summary.initial,
        ckpt2.summary.last,
        t.elapsed()
    );

    let t = Instant::now();
    let prototypes = prepare_prototypes(&ckpt2, &train)?;
    let ckpt3 = train_stage3(&TrainConfig::for_stage(3), &train, &ckpt2, prototypes)?;
    println!(
        "stage 3: loss {:.5} -> {:.5} ({:.1?})",
        ckpt3.summary.initial,
        ckpt3.summary.last,
        t.elapsed()
    );

    let on_train = evaluate(&ckpt3.bundle, &train, None)?;
    let on_test = evaluate(&ckpt3.bundle, &test, None)?;
    println!("retrieval top-1 train {:?} test {:?}", on_train.retrieval_top1, on_test.retrieval_top1);
    println!(
        "classification train {:?} test {:?}",
        on_train.classification_accuracy, on_test.classification_accuracy
    );
    println!(
        "centroid distances (test) {:?} vs mean inter-prototype {:.4}",
        on_test.centroid_distances,
        mean_inter_prototype_distance(ckpt3.bundle.prototypes()?)?
    );
    Ok(())
}
