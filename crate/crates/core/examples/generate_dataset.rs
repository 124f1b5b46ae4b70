//! Generates the default synthetic dataset, writes it to disk, reads it back
//! and shows the stratified split.
//!
//! cargo run --example generate_dataset -- [out_dir]

use neuralign::synthdata::{generate_synthetic, read_dataset, split, write_dataset, SyntheticSpec};

fn main() -> neuralign::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("neuralign-example-dataset"));

    let spec = SyntheticSpec::default();
    println!("spec:\n{}", serde_json::to_string_pretty(&spec)?);
    let data = generate_synthetic(&spec)?;
    let dims = data.dims();
    println!(
        "{} classes, {} paired rows (video {} / fmri {}), {} emotion rows (width {})",
        data.num_classes,
        data.num_paired(),
        dims.video,
        dims.fmri,
        data.num_emotion(),
        dims.emotion
    );

    if out.exists() {
        std::fs::remove_dir_all(&out)?;
    }
    write_dataset(&data, &out)?;
    let back = read_dataset(&out)?;
    println!("wrote {} and read it back: identical = {}", out.display(), back == data);

    let (train, test) = split(&data, 0.8, spec.seed)?;
    println!(
        "split 0.8: train {} paired / {} emotion, test {} paired / {} emotion",
        train.num_paired(),
        train.num_emotion(),
        test.num_paired(),
        test.num_emotion()
    );
    Ok(())
}
