use std::fs;
use std::path::{Path, PathBuf};

use neuralign::cli::{manifest_path, parse_decode_csv, run};

fn neuralign(args: &[&str]) -> i32 {
    run(std::iter::once("neuralign").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Self { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn small_spec(&self) -> PathBuf {
        self.write(
            "spec.json",
            r#"{"num_classes": 3, "samples_per_class": 8, "repetitions_per_class": 4}"#,
        )
    }

    fn config(&self, stage: u8) -> PathBuf {
        self.write(
            &format!("stage{stage}.json"),
            r#"{"steps": 20, "batch_size": 8}"#,
        )
    }

    /// Dataset plus checkpoints for stages 1..=upto.
    fn trained(&self, upto: u8) -> (PathBuf, Vec<PathBuf>) {
        let data = self.path("data");
        assert_eq!(neuralign(&["generate", "--spec", s(&self.small_spec()), "--out", s(&data)]), 0);
        let mut ckpts: Vec<PathBuf> = Vec::new();
        for stage in 1..=upto {
            let out = self.path(&format!("s{stage}.ckpt"));
            let cfg = self.config(stage);
            let st = stage.to_string();
            let mut args = vec!["train", "--stage", &st, "--config", s(&cfg), "--data", s(&data), "--out", s(&out)];
            let from;
            if let Some(prev) = ckpts.last() {
                from = prev.clone();
                args.extend(["--from", s(&from)]);
            }
            assert_eq!(neuralign(&args), 0, "stage {stage}");
            ckpts.push(out);
        }
        (data, ckpts)
    }
}

#[test]
fn generate_writes_manifest_and_blobs() {
    let f = Fixture::new();
    let spec = f.small_spec();
    let (a, b) = (f.path("a"), f.path("b"));
    assert_eq!(neuralign(&["generate", "--spec", s(&spec), "--out", s(&a)]), 0);
    assert_eq!(neuralign(&["generate", "--spec", s(&spec), "--out", s(&b)]), 0);
    for name in ["manifest.json", "video.bin", "fmri.bin", "emotion.bin"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let manifest = fs::read_to_string(a.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"samples_per_class\": 8"));
    assert!(manifest_path(&a).exists());
}

#[test]
fn generate_rejects_bad_specs() {
    let f = Fixture::new();
    let one_class = f.write("k1.json", r#"{"num_classes": 1}"#);
    assert_eq!(neuralign(&["generate", "--spec", s(&one_class), "--out", s(&f.path("x"))]), 2);
    let unknown = f.write("typo.json", r#"{"num_clases": 4}"#);
    assert_eq!(neuralign(&["generate", "--spec", s(&unknown), "--out", s(&f.path("y"))]), 2);
    assert!(!f.path("x").exists() && !f.path("y").exists());
}

#[test]
fn outputs_are_never_overwritten() {
    let f = Fixture::new();
    let spec = f.small_spec();
    let out = f.path("data");
    assert_eq!(neuralign(&["generate", "--spec", s(&spec), "--out", s(&out)]), 0);
    let before = fs::read(out.join("video.bin")).unwrap();
    assert_eq!(neuralign(&["generate", "--spec", s(&spec), "--out", s(&out)]), 2);
    assert_eq!(fs::read(out.join("video.bin")).unwrap(), before);
}

#[test]
fn stage_prerequisites_exit_3() {
    let f = Fixture::new();
    let (data, ckpts) = f.trained(1);
    let cfg = f.config(2);
    assert_eq!(
        neuralign(&["train", "--stage", "2", "--config", s(&cfg), "--data", s(&data), "--out", s(&f.path("x"))]),
        3
    );
    assert_eq!(
        neuralign(&[
            "train", "--stage", "3", "--config", s(&cfg), "--data", s(&data), "--from", s(&ckpts[0]), "--out",
            s(&f.path("y"))
        ]),
        3
    );
    assert!(!f.path("x").exists() && !f.path("y").exists());
}

#[test]
fn training_is_reproducible_byte_for_byte() {
    let f = Fixture::new();
    let (data, ckpts) = f.trained(1);
    let again = f.path("again.ckpt");
    assert_eq!(
        neuralign(&["train", "--stage", "1", "--config", s(&f.config(1)), "--data", s(&data), "--out", s(&again)]),
        0
    );
    assert_eq!(fs::read(&ckpts[0]).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn divergence_exits_4() {
    let f = Fixture::new();
    let (data, _) = f.trained(0);
    let cfg = f.write("hot.json", r#"{"steps": 100, "optimizer": "sgd", "learning_rate": 1e6}"#);
    let out = f.path("hot.ckpt");
    assert_eq!(
        neuralign(&["train", "--stage", "1", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]),
        4
    );
    assert!(!out.exists());
    assert!(f.path("hot.ckpt.last_finite").exists());
}

#[test]
fn decode_contract() {
    let f = Fixture::new();
    let (data, ckpts) = f.trained(3);

    let out = f.path("decoded.csv");
    assert_eq!(neuralign(&["decode", "--ckpt", s(&ckpts[2]), "--input", s(&data), "--out", s(&out)]), 0);
    let text = fs::read_to_string(&out).unwrap();
    let rows = parse_decode_csv(&text).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(text.starts_with("index,predicted_class,p0,p1,p2,f0,"));
    assert!(rows.iter().all(|r| r.1.len() == 3 && r.2.len() == 32));

    let empty = f.write("empty.csv", "");
    let out = f.path("empty_out.csv");
    assert_eq!(neuralign(&["decode", "--ckpt", s(&ckpts[2]), "--input", s(&empty), "--out", s(&out)]), 0);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1);

    let row = vec!["0.5"; 16].join(",");
    let bad = f.write("bad.csv", &format!("{row}\n{row}\n0.1,0.2\n"));
    assert_eq!(
        neuralign(&["decode", "--ckpt", s(&ckpts[2]), "--input", s(&bad), "--out", s(&f.path("bad_out.csv"))]),
        2
    );
    assert!(!f.path("bad_out.csv").exists());

    let csv_in = f.write("two.csv", &format!("{row}\n{row}\n"));
    assert_eq!(
        neuralign(&["decode", "--ckpt", s(&ckpts[1]), "--input", s(&csv_in), "--out", s(&f.path("s2.csv"))]),
        3
    );
}

#[test]
fn eval_contract() {
    let f = Fixture::new();
    let (data, ckpts) = f.trained(3);
    let (r1, r2) = (f.path("r1.json"), f.path("r2.json"));
    let emb = f.path("emb");
    assert_eq!(
        neuralign(&[
            "eval", "--ckpt", s(&ckpts[2]), "--data", s(&data), "--report", s(&r1), "--export-embeddings", s(&emb)
        ]),
        0
    );
    assert_eq!(neuralign(&["eval", "--ckpt", s(&ckpts[2]), "--data", s(&data), "--report", s(&r2)]), 0);
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
    for (name, rows, width) in [("video", 24, 16), ("fmri", 24, 16), ("fmri_mapped", 24, 16), ("emotion_mapped", 12, 16)] {
        let text = fs::read_to_string(emb.join(format!("{name}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 3 + width, "{name}");
        assert_eq!(lines.count(), rows, "{name}");
    }

    let stage2 = f.path("report_s2.json");
    assert_eq!(
        neuralign(&[
            "eval", "--ckpt", s(&ckpts[1]), "--data", s(&data), "--report", s(&stage2), "--metrics", "classification"
        ]),
        3
    );
    assert_eq!(
        neuralign(&[
            "eval", "--ckpt", s(&ckpts[1]), "--data", s(&data), "--report", s(&stage2), "--metrics",
            "reconstruction,retrieval"
        ]),
        0
    );
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&stage2).unwrap()).unwrap();
    assert!(report["retrieval_top1"].is_number());
    assert!(report["classification_accuracy"].is_null());
}

#[test]
fn decode_accuracy_matches_eval() {
    let f = Fixture::new();
    let (data, ckpts) = f.trained(3);
    let (csv, report) = (f.path("d.csv"), f.path("r.json"));
    assert_eq!(neuralign(&["decode", "--ckpt", s(&ckpts[2]), "--input", s(&data), "--out", s(&csv)]), 0);
    assert_eq!(neuralign(&["eval", "--ckpt", s(&ckpts[2]), "--data", s(&data), "--report", s(&report)]), 0);
    let labels = neuralign::read_dataset(&data).unwrap().labels_emotion;
    let rows = parse_decode_csv(&fs::read_to_string(&csv).unwrap()).unwrap();
    let acc = rows.iter().zip(&labels).filter(|(r, &l)| r.0 == l).count() as f64 / rows.len() as f64;
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["classification_accuracy"].as_f64(), Some(acc));
}
