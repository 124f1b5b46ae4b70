use neuralign::models::{assert_unchanged, snapshot_params, Component};
use neuralign::synthdata::{generate_synthetic, DatasetBundle, SyntheticSpec};
use neuralign::training::{
    load_checkpoint, prepare_prototypes, save_checkpoint, train_stage1, train_stage2, train_stage3, Checkpoint,
    OptimizerKind, TrainConfig,
};
use neuralign::Error;

fn small_data() -> DatasetBundle {
    generate_synthetic(&SyntheticSpec {
        num_classes: 3,
        samples_per_class: 12,
        repetitions_per_class: 6,
        ..Default::default()
    })
    .unwrap()
}

fn config(stage: u8, steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 8,
        ..TrainConfig::for_stage(stage)
    }
}

fn three_stages(data: &DatasetBundle, steps: usize) -> (Checkpoint, Checkpoint, Checkpoint) {
    let c1 = train_stage1(&config(1, steps), data).unwrap();
    let c2 = train_stage2(&config(2, steps), data, &c1).unwrap();
    let p = prepare_prototypes(&c2, data).unwrap();
    let c3 = train_stage3(&config(3, steps), data, &c2, p).unwrap();
    (c1, c2, c3)
}

#[test]
fn each_stage_lowers_its_loss() {
    let (c1, c2, c3) = three_stages(&small_data(), 150);
    for c in [&c1, &c2, &c3] {
        assert!(c.summary.last < c.summary.initial, "stage {}: {:?}", c.stage, c.summary);
        assert_eq!(c.loss_history.len(), 150);
        assert_eq!(c.loss_history[0].alignment.is_some(), c.stage > 1);
    }
    assert_eq!(c3.bundle.components(), Component::ALL.to_vec());
}

#[test]
fn stage2_freezes_video_side_by_default() {
    let data = small_data();
    let c1 = train_stage1(&config(1, 20), &data).unwrap();
    let snap = snapshot_params(&c1.bundle, &[Component::VideoAe]).unwrap();
    let c2 = train_stage2(&config(2, 20), &data, &c1).unwrap();
    assert!(assert_unchanged(&snap, &c2.bundle));

    let tuned = train_stage2(
        &TrainConfig {
            finetune_video_encoder: true,
            ..config(2, 20)
        },
        &data,
        &c1,
    )
    .unwrap();
    assert!(!assert_unchanged(&snap, &tuned.bundle));
    let v1 = c1.bundle.video_ae().unwrap();
    let v2 = tuned.bundle.video_ae().unwrap();
    assert_eq!(v1.decoder, v2.decoder);
    assert_ne!(v1.encoder, v2.encoder);
}

#[test]
fn stage3_touches_only_its_networks() {
    let data = small_data();
    let (_, c2, c3) = three_stages(&data, 30);
    let frozen = [Component::VideoAe, Component::FmriAe, Component::MapFToV];
    assert!(assert_unchanged(&snapshot_params(&c2.bundle, &frozen).unwrap(), &c3.bundle));
    assert_eq!(c3.bundle.prototypes().unwrap(), &prepare_prototypes(&c2, &data).unwrap());
}

#[test]
fn training_is_deterministic() {
    let data = small_data();
    let (a1, a2, a3) = three_stages(&data, 25);
    let (b1, b2, b3) = three_stages(&data, 25);
    for (a, b) in [(a1, b1), (a2, b2), (a3, b3)] {
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    }
}

#[test]
fn seed_changes_the_result() {
    let data = small_data();
    let a = train_stage1(&config(1, 10), &data).unwrap();
    let b = train_stage1(&TrainConfig { seed: 9, ..config(1, 10) }, &data).unwrap();
    assert_ne!(a.bundle, b.bundle);
}

#[test]
fn sgd_also_trains() {
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 0.002,
        ..config(1, 100)
    };
    let c = train_stage1(&cfg, &small_data()).unwrap();
    assert!(c.summary.last < c.summary.initial);
}

#[test]
fn stage_order_is_enforced() {
    let data = small_data();
    let c1 = train_stage1(&config(1, 5), &data).unwrap();
    let p = prepare_prototypes(&train_stage2(&config(2, 5), &data, &c1).unwrap(), &data).unwrap();

    let err = train_stage3(&config(3, 5), &data, &c1, p.clone()).unwrap_err();
    assert!(matches!(err, Error::MissingComponent(_)), "{err}");
    assert_eq!(err.exit_code(), 3);

    let err = train_stage2(&config(3, 5), &data, &c1).unwrap_err();
    assert!(matches!(err, Error::Stage(_)), "{err}");

    let c2 = train_stage2(&config(2, 5), &data, &c1).unwrap();
    let c3 = train_stage3(&config(3, 5), &data, &c2, p).unwrap();
    let err = train_stage2(&config(2, 5), &data, &c3).unwrap_err();
    assert!(matches!(err, Error::Stage(_)), "{err}");
}

#[test]
fn divergence_is_reported_with_last_finite_state() {
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 1e6,
        ..config(1, 200)
    };
    let err = train_stage1(&cfg, &small_data()).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    match err {
        Error::Divergence {
            stage: 1,
            step,
            last_finite: Some(ckpt),
            ..
        } => {
            assert_eq!(ckpt.loss_history.len(), step);
            assert!(ckpt.summary.last.is_finite());
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("last.ckpt");
            save_checkpoint(&ckpt, &path).unwrap();
            assert_eq!(load_checkpoint(&path).unwrap(), *ckpt);
        }
        other => panic!("unexpected {other:?}"),
    }
}
