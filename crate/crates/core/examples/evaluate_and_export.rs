//! Runs the whole pipeline through the command-line entry point into a
//! directory, then re-evaluates the stage-3 checkpoint and exports every
//! embedding as CSV.
//!
//! cargo run --release --example evaluate_and_export -- [out_dir]

use neuralign::cli::{self, layout};
use neuralign::metrics::{evaluate, export_embeddings, Metric};
use neuralign::synthdata::read_dataset;
use neuralign::training::load_checkpoint;

fn main() -> neuralign::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("neuralign-example-run"));
    if out.exists() {
        std::fs::remove_dir_all(&out)?;
    }
    let code = cli::run(["neuralign", "run-all", "--out", out.to_str().expect("utf-8 path")]);
    if code != 0 {
        std::process::exit(code);
    }

    let ckpt = load_checkpoint(out.join(layout::CHECKPOINTS[2]))?;
    let test = read_dataset(out.join(layout::TEST))?;
    let report = evaluate(&ckpt.bundle, &test, Some(&[Metric::Retrieval, Metric::Classification]))?;
    print!("{}", report.to_json()?);

    for path in export_embeddings(&ckpt.bundle, &test, out.join("embeddings"))? {
        let lines = std::fs::read_to_string(&path)?.lines().count();
        println!("{} ({} rows)", path.display(), lines - 1);
    }
    Ok(())
}
