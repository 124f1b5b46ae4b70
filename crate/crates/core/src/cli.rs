//! Command-line front end. Every command reads its inputs from files, writes
//! to fresh paths only and leaves a `RunManifest` next to its output.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 stage or
//! compatibility error, 4 numerical divergence.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::inference::decode_batch;
use crate::metrics::{evaluate, export_embeddings, format_float, Metric};
use crate::synthdata::{
    generate_synthetic, read_dataset, split, write_dataset, DatasetBundle, SyntheticSpec, DATASET_FORMAT_VERSION,
};
use crate::training::{
    load_checkpoint, prepare_prototypes, train_stage1, train_stage2, train_stage3, Checkpoint, TrainConfig,
    CHECKPOINT_FORMAT_VERSION,
};

#[derive(Debug, Parser)]
#[command(name = "neuralign", version, about = "Staged cross-modal embedding alignment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from a JSON spec.
    Generate(GenerateArgs),
    /// Train one stage and write a checkpoint.
    Train(TrainArgs),
    /// Decode emotion rows into class posteriors and video frames.
    Decode(DecodeArgs),
    /// Evaluate a checkpoint on a dataset and write a JSON report.
    Eval(EvalArgs),
    /// Generate, split, train all three stages and evaluate.
    RunAll(RunAllArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub stage: u8,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint of the previous stage (stages 2 and 3).
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// CSV of emotion rows, or a dataset directory whose emotion rows are used.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub export_embeddings: Option<PathBuf>,
    /// Comma-separated subset of reconstruction, retrieval, classification,
    /// alignment. Defaults to everything the checkpoint supports.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct RunAllArgs {
    /// Generator spec; defaults when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub config1: Option<PathBuf>,
    #[arg(long)]
    pub config2: Option<PathBuf>,
    #[arg(long)]
    pub config3: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Output directory; must not exist yet.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Serialize)]
struct FormatVersions {
    checkpoint: &'static str,
    dataset: &'static str,
}

/// Provenance record written once per run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    command: String,
    config_path: Option<PathBuf>,
    config: Option<serde_json::Value>,
    dataset: Option<PathBuf>,
    checkpoint_in: Option<PathBuf>,
    checkpoint_out: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    format_versions: FormatVersions,
}

impl RunManifest {
    fn start(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config_path: None,
            config: None,
            dataset: None,
            checkpoint_in: None,
            checkpoint_out: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            format_versions: FormatVersions {
                checkpoint: CHECKPOINT_FORMAT_VERSION,
                dataset: DATASET_FORMAT_VERSION,
            },
        }
    }

    fn finish(mut self, path: &Path) -> Result<()> {
        self.finished_unix_ms = now_ms();
        let mut json = serde_json::to_string_pretty(&self)?;
        json.push('\n');
        write_atomic(path, json.as_bytes())
    }
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// `<path>.run.json`
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".run.json");
    out.with_file_name(name)
}

fn ensure_fresh(path: &Path) -> Result<()> {
    if path.exists() {
        return Err(Error::Config(format!("refusing to overwrite existing {}", path.display())));
    }
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = OsString::from(".");
    name.push(path.file_name().unwrap_or_default());
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_fresh(path)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = temp_sibling(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_dataset_atomic(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    ensure_fresh(dir)?;
    let tmp = temp_sibling(dir);
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    write_dataset(bundle, &tmp)?;
    fs::rename(&tmp, dir)?;
    Ok(())
}

fn save_checkpoint_atomic(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes()?)
}

fn log(msg: impl AsRef<str>) {
    eprintln!("neuralign: {}", msg.as_ref());
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            log(format!("error: {e}"));
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Decode(a) => cmd_decode(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::RunAll(a) => cmd_run_all(&a),
    }
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let manifest_out = manifest_path(&a.out);
    ensure_fresh(&a.out)?;
    ensure_fresh(&manifest_out)?;
    let mut run = RunManifest::start("generate");
    let spec = SyntheticSpec::load(&a.spec)?;
    run.config_path = Some(a.spec.clone());
    run.config = Some(serde_json::to_value(&spec)?);
    run.seed = Some(spec.seed);
    let data = generate_synthetic(&spec)?;
    write_dataset_atomic(&data, &a.out)?;
    log(format!(
        "wrote {} paired and {} emotion rows to {}",
        data.num_paired(),
        data.num_emotion(),
        a.out.display()
    ));
    run.outputs.push(a.out.clone());
    run.finish(&manifest_out)
}

fn train_one(stage: u8, config: &TrainConfig, data: &DatasetBundle, from: Option<&Checkpoint>) -> Result<Checkpoint> {
    match (stage, from) {
        (1, None) => train_stage1(config, data),
        (1, Some(_)) => Err(Error::Stage("stage 1 trains from scratch and takes no --from".into())),
        (_, None) => Err(Error::Stage(format!(
            "stage {stage} needs --from pointing at a stage {} checkpoint",
            stage - 1
        ))),
        (2, Some(prev)) => train_stage2(config, data, prev),
        (_, Some(prev)) => {
            if prev.stage != 2 {
                return Err(Error::Stage(format!(
                    "stage 3 needs a stage 2 checkpoint, got stage {}",
                    prev.stage
                )));
            }
            let prototypes = prepare_prototypes(prev, data)?;
            train_stage3(config, data, prev, prototypes)
        }
    }
}

fn save_divergence(err: Error, out: &Path) -> Error {
    if let Error::Divergence { last_finite: Some(ckpt), .. } = &err {
        let mut name = out.file_name().map(OsString::from).unwrap_or_default();
        name.push(".last_finite");
        let path = out.with_file_name(name);
        match save_checkpoint_atomic(ckpt, &path) {
            Ok(()) => log(format!("last finite state saved to {}", path.display())),
            Err(e) => log(format!("could not save last finite state: {e}")),
        }
    }
    err
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let manifest_out = manifest_path(&a.out);
    ensure_fresh(&a.out)?;
    ensure_fresh(&manifest_out)?;
    let mut run = RunManifest::start("train");
    let mut config = TrainConfig::load(&a.config)?;
    config.stage = a.stage;
    run.config_path = Some(a.config.clone());
    run.config = Some(serde_json::to_value(&config)?);
    run.seed = Some(config.seed);
    run.dataset = Some(a.data.clone());
    run.checkpoint_in = a.from.clone();

    let from = a.from.as_deref().map(load_checkpoint).transpose()?;
    if a.stage > 1 && from.is_none() {
        return Err(Error::Stage(format!(
            "stage {} needs --from pointing at a stage {} checkpoint",
            a.stage,
            a.stage - 1
        )));
    }
    let data = read_dataset(&a.data)?;
    log(format!("training stage {} for {} steps", a.stage, config.steps));
    let ckpt = train_one(a.stage, &config, &data, from.as_ref()).map_err(|e| save_divergence(e, &a.out))?;
    log(format!(
        "stage {} loss {} -> {}",
        ckpt.stage, ckpt.summary.initial, ckpt.summary.last
    ));
    save_checkpoint_atomic(&ckpt, &a.out)?;
    run.checkpoint_out.push(a.out.clone());
    run.finish(&manifest_out)
}

fn parse_row(line: &str, index: usize, line_no: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|f| {
            f.trim().parse::<f64>().map_err(|_| {
                Error::Config(format!("input row {index} (line {line_no}): `{}` is not a number", f.trim()))
            })
        })
        .collect()
}

/// Emotion rows from a CSV file (optional header line) or a dataset directory.
pub fn read_emotion_rows(input: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    if input.is_dir() {
        let data = read_dataset(input)?;
        return Ok(data.emotion.row_iter().map(<[f64]>::to_vec).collect());
    }
    let text = fs::read_to_string(input)?;
    let mut rows = Vec::new();
    let mut header_allowed = true;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let is_header = header_allowed && line.split(',').any(|f| f.trim().parse::<f64>().is_err());
        header_allowed = false;
        if is_header {
            continue;
        }
        let row = parse_row(line, rows.len(), n + 1)?;
        if row.len() != width {
            return Err(Error::Config(format!(
                "input row {} (line {}) has {} values, expected {width}",
                rows.len(),
                n + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Decoded rows as CSV: `index,predicted_class,p0..,f0..`.
pub fn decode_csv(rows: &[Vec<f64>], ckpt: &Checkpoint) -> Result<String> {
    let bundle = &ckpt.bundle;
    let k = bundle.prototypes()?.num_classes();
    let frame_dim = bundle.video_ae()?.input_dim();
    let mut out = String::from("index,predicted_class");
    for j in 0..k {
        write!(out, ",p{j}").expect("writing to a String");
    }
    for j in 0..frame_dim {
        write!(out, ",f{j}").expect("writing to a String");
    }
    out.push('\n');
    for (i, r) in decode_batch(rows, bundle)?.iter().enumerate() {
        write!(out, "{i},{}", r.predicted_class).expect("writing to a String");
        for &v in r.class_posterior.iter().chain(&r.reconstructed_frame) {
            out.push(',');
            out.push_str(&format_float(v));
        }
        out.push('\n');
    }
    Ok(out)
}

fn require_stage3(ckpt: &Checkpoint) -> Result<()> {
    if ckpt.stage < 3 {
        return Err(Error::Stage(format!(
            "decoding needs a stage 3 checkpoint, got stage {}",
            ckpt.stage
        )));
    }
    Ok(())
}

pub fn cmd_decode(a: &DecodeArgs) -> Result<()> {
    let manifest_out = manifest_path(&a.out);
    ensure_fresh(&a.out)?;
    ensure_fresh(&manifest_out)?;
    let mut run = RunManifest::start("decode");
    run.checkpoint_in = Some(a.ckpt.clone());
    run.dataset = Some(a.input.clone());
    let ckpt = load_checkpoint(&a.ckpt)?;
    require_stage3(&ckpt)?;
    let width = ckpt.bundle.emotion_ae()?.input_dim();
    let rows = read_emotion_rows(&a.input, width)?;
    let csv = decode_csv(&rows, &ckpt)?;
    write_atomic(&a.out, csv.as_bytes())?;
    log(format!("decoded {} rows to {}", rows.len(), a.out.display()));
    run.outputs.push(a.out.clone());
    run.finish(&manifest_out)
}

fn parse_metrics(names: &Option<Vec<String>>) -> Result<Option<Vec<Metric>>> {
    names
        .as_ref()
        .map(|list| list.iter().map(|s| s.trim().parse()).collect())
        .transpose()
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let manifest_out = manifest_path(&a.report);
    ensure_fresh(&a.report)?;
    ensure_fresh(&manifest_out)?;
    if let Some(dir) = &a.export_embeddings {
        ensure_fresh(dir)?;
    }
    let mut run = RunManifest::start("eval");
    run.checkpoint_in = Some(a.ckpt.clone());
    run.dataset = Some(a.data.clone());
    let metrics = parse_metrics(&a.metrics)?;
    let ckpt = load_checkpoint(&a.ckpt)?;
    let data = read_dataset(&a.data)?;
    let report = evaluate(&ckpt.bundle, &data, metrics.as_deref())?;
    write_atomic(&a.report, report.to_json()?.as_bytes())?;
    run.outputs.push(a.report.clone());
    if let Some(dir) = &a.export_embeddings {
        run.outputs.extend(export_embeddings(&ckpt.bundle, &data, dir)?);
    }
    log(format!("report written to {}", a.report.display()));
    run.finish(&manifest_out)
}

fn stage_config(path: &Option<PathBuf>, stage: u8) -> Result<TrainConfig> {
    let mut c = match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::for_stage(stage),
    };
    c.stage = stage;
    Ok(c)
}

/// Output layout of `run-all` inside its directory.
pub mod layout {
    pub const DATASET: &str = "dataset";
    pub const TRAIN: &str = "train";
    pub const TEST: &str = "test";
    pub const CHECKPOINTS: [&str; 3] = ["stage1.ckpt", "stage2.ckpt", "stage3.ckpt"];
    pub const REPORT_TRAIN: &str = "report_train.json";
    pub const REPORT_TEST: &str = "report_test.json";
    pub const DECODED_TEST: &str = "decoded_test.csv";
    pub const MANIFEST: &str = "run.json";
}

pub fn cmd_run_all(a: &RunAllArgs) -> Result<()> {
    ensure_fresh(&a.out)?;
    let spec = match &a.spec {
        Some(p) => SyntheticSpec::load(p)?,
        None => SyntheticSpec::default(),
    };
    let configs = [
        stage_config(&a.config1, 1)?,
        stage_config(&a.config2, 2)?,
        stage_config(&a.config3, 3)?,
    ];
    fs::create_dir_all(&a.out)?;
    let mut run = RunManifest::start("run-all");
    run.config_path = a.spec.clone();
    run.config = Some(serde_json::json!({ "spec": spec, "stages": configs }));
    run.seed = Some(spec.seed);
    let at = |name: &str| a.out.join(name);

    let data = generate_synthetic(&spec)?;
    write_dataset_atomic(&data, &at(layout::DATASET))?;
    let (train, test) = split(&data, a.train_fraction, spec.seed)?;
    write_dataset_atomic(&train, &at(layout::TRAIN))?;
    write_dataset_atomic(&test, &at(layout::TEST))?;
    run.dataset = Some(at(layout::DATASET));

    let mut prev: Option<Checkpoint> = None;
    for (i, config) in configs.iter().enumerate() {
        let stage = i as u8 + 1;
        let path = at(layout::CHECKPOINTS[i]);
        log(format!("training stage {stage} for {} steps", config.steps));
        let ckpt = train_one(stage, config, &train, prev.as_ref()).map_err(|e| save_divergence(e, &path))?;
        log(format!("stage {stage} loss {} -> {}", ckpt.summary.initial, ckpt.summary.last));
        save_checkpoint_atomic(&ckpt, &path)?;
        run.checkpoint_out.push(path);
        prev = Some(ckpt);
    }
    let ckpt = prev.expect("three stages ran");

    for (name, d) in [(layout::REPORT_TRAIN, &train), (layout::REPORT_TEST, &test)] {
        let report = evaluate(&ckpt.bundle, d, None)?;
        write_atomic(&at(name), report.to_json()?.as_bytes())?;
        run.outputs.push(at(name));
    }
    let rows: Vec<Vec<f64>> = test.emotion.row_iter().map(<[f64]>::to_vec).collect();
    write_atomic(&at(layout::DECODED_TEST), decode_csv(&rows, &ckpt)?.as_bytes())?;
    run.outputs.push(at(layout::DECODED_TEST));
    log(format!("run complete in {}", a.out.display()));
    run.finish(&at(layout::MANIFEST))
}

/// Rows of a decode CSV as `(predicted_class, posterior, frame)`.
pub fn parse_decode_csv(text: &str) -> Result<Vec<(usize, Vec<f64>, Vec<f64>)>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format("decode_csv", "missing header"))?;
    let k = header
        .split(',')
        .filter(|h| h.strip_prefix('p').is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())))
        .count();
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::format("decode_csv", format!("row {i} is malformed"));
            if fields.len() < 2 + k {
                return Err(bad());
            }
            let class = fields[1].parse().map_err(|_| bad())?;
            let nums = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            let (post, frame) = nums.split_at(k);
            Ok((class, post.to_vec(), frame.to_vec()))
        })
        .collect()
}

/// Frame matrix of a parsed decode CSV.
pub fn decoded_frames(rows: &[(usize, Vec<f64>, Vec<f64>)]) -> Result<Option<Tensor>> {
    if rows.is_empty() {
        return Ok(None);
    }
    let frames: Vec<&[f64]> = rows.iter().map(|r| r.2.as_slice()).collect();
    Tensor::from_rows(&frames).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(manifest_path(Path::new("/x/y/model.ckpt")), Path::new("/x/y/model.ckpt.run.json"));
    }

    #[test]
    fn header_line_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("in.csv");
        fs::write(&p, "a,b\n1,2\n\n3,4\n").unwrap();
        assert_eq!(read_emotion_rows(&p, 2).unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn bad_width_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("in.csv");
        fs::write(&p, "1,2\n3,4,5\n").unwrap();
        let err = read_emotion_rows(&p, 2).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn atomic_write_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        assert!(matches!(write_atomic(&p, b"two"), Err(Error::Config(_))));
        assert_eq!(fs::read(&p).unwrap(), b"one");
    }

    #[test]
    fn parse_errors_exit_2_help_exits_0() {
        assert_eq!(run(["neuralign", "train", "--stage", "7"]), 2);
        assert_eq!(run(["neuralign", "--help"]), 0);
    }

    #[test]
    fn unknown_metric_is_config_error() {
        let r = parse_metrics(&Some(vec!["retrieval".into(), "bogus".into()]));
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
