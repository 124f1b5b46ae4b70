//! The three training stages.
//!
//! Stage 1 fits the video autoencoder. Stage 2 fits the fMRI autoencoder and
//! the fMRI→video map against frozen video embeddings. Stage 3 fits the
//! emotion autoencoder and the emotion→fMRI map against fixed fMRI class
//! prototypes, with everything from stages 1–2 frozen.

use rand::seq::{index, IndexedRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, LossRecord, LossSummary};
use super::config::TrainConfig;
use super::optim::Optimizer;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::{compute_prototypes, reconstruction_loss, stage2_loss, stage3_loss, LossTerms, Prototypes};
use crate::models::{Autoencoder, Component, MapDirection, MappingNetwork, Modality, ModelBundle};
use crate::synthdata::DatasetBundle;

fn derive_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(tag)
}

fn batch_rng(config: &TrainConfig) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(100 + u64::from(config.stage));
    rng
}

fn check_stage(config: &TrainConfig, expected: u8) -> Result<()> {
    config.validate()?;
    if config.stage != expected {
        return Err(Error::Stage(format!(
            "config is for stage {} but stage {expected} was requested",
            config.stage
        )));
    }
    Ok(())
}

fn require(ckpt: &Checkpoint, components: &[Component], stage: u8) -> Result<()> {
    for &c in components {
        if !ckpt.bundle.has(c) {
            return Err(Error::MissingComponent(c.name().to_string()));
        }
    }
    if ckpt.stage + 1 != stage {
        return Err(Error::Stage(format!(
            "stage {stage} needs a stage {} checkpoint, got stage {}",
            stage - 1,
            ckpt.stage
        )));
    }
    Ok(())
}

/// Uniform minibatch of paired row indices, without replacement.
fn uniform_batch(rng: &mut ChaCha8Rng, n: usize, batch: usize) -> Vec<usize> {
    index::sample(rng, n, batch.min(n)).into_vec()
}

/// Equal rows per class (`batch / K`, at least one), drawn without
/// replacement while the class has enough rows.
fn balanced_batch(rng: &mut ChaCha8Rng, groups: &[Vec<usize>], batch: usize) -> Vec<usize> {
    let per_class = (batch / groups.len()).max(1);
    let mut out = Vec::with_capacity(per_class * groups.len());
    for g in groups {
        if per_class <= g.len() {
            out.extend(index::sample(rng, g.len(), per_class).into_iter().map(|i| g[i]));
        } else {
            out.extend((0..per_class).map(|_| *g.choose(rng).expect("class is non-empty")));
        }
    }
    out
}

/// Trainable tensors of a stage, in the same order as the tape handles
/// returned by its loss builder.
type ParamSelector = for<'a> fn(&'a mut ModelBundle, &TrainConfig) -> Vec<&'a mut Tensor>;

/// Builds the stage objective on `tape` for the given rows and returns it
/// together with the trainable parameter handles.
type LossBuilder<'a> = dyn Fn(&mut Tape, &ModelBundle, &[usize]) -> Result<(LossTerms, Vec<Var>)> + 'a;

struct StageLoop<'a> {
    stage: u8,
    config: &'a TrainConfig,
    names: Vec<String>,
    select: ParamSelector,
    build: Box<LossBuilder<'a>>,
    all_rows: Vec<usize>,
}

impl StageLoop<'_> {
    fn full_loss(&self, bundle: &ModelBundle) -> Result<f64> {
        let mut tape = Tape::new();
        let (terms, _) = (self.build)(&mut tape, bundle, &self.all_rows)?;
        tape.value(terms.total).item()
    }

    fn diverged(&self, bundle: &ModelBundle, step: usize, history: &[LossRecord], initial: f64, detail: String) -> Error {
        let last = self
            .full_loss(bundle)
            .ok()
            .filter(|v| v.is_finite())
            .or_else(|| history.last().map(|r| r.loss))
            .unwrap_or(initial);
        Error::Divergence {
            stage: self.stage,
            step,
            detail,
            last_finite: Some(Box::new(Checkpoint {
                stage: self.stage,
                config: self.config.clone(),
                steps: step,
                summary: LossSummary { initial, last },
                loss_history: history.to_vec(),
                bundle: bundle.clone(),
            })),
        }
    }

    fn run(
        &self,
        mut bundle: ModelBundle,
        mut sample: impl FnMut(&mut ChaCha8Rng) -> Vec<usize>,
    ) -> Result<Checkpoint> {
        let mut rng = batch_rng(self.config);
        let mut optimizer = {
            let params = (self.select)(&mut bundle, self.config);
            Optimizer::new(self.config, params.into_iter().map(|p| &*p))
        };
        let initial = self.full_loss(&bundle)?;
        let mut history = Vec::with_capacity(self.config.steps);

        for step in 0..self.config.steps {
            let rows = sample(&mut rng);
            let mut tape = Tape::new();
            let (terms, vars) = (self.build)(&mut tape, &bundle, &rows)?;
            let [loss, reconstruction, alignment] = terms.values(&tape)?;
            if !loss.is_finite() {
                return Err(self.diverged(&bundle, step, &history, initial, format!("loss is {loss}")));
            }
            let grads = tape.backward(terms.total)?;
            let grads: Vec<Tensor> = vars
                .iter()
                .map(|&v| grads.get_or_zeros(v, tape.value(v)))
                .collect();
            {
                let mut params = (self.select)(&mut bundle, self.config);
                match optimizer.step(&mut params, &grads, &self.names) {
                    Ok(()) => {}
                    Err(Error::NonFiniteGradient { param, .. }) => {
                        drop(params);
                        return Err(self.diverged(
                            &bundle,
                            step,
                            &history,
                            initial,
                            format!("non-finite gradient for `{param}`"),
                        ));
                    }
                    Err(e) => return Err(e),
                }
            }
            history.push(LossRecord {
                step,
                loss,
                reconstruction,
                alignment: (self.stage > 1).then_some(alignment),
            });
        }

        let last = self.full_loss(&bundle)?;
        if !last.is_finite() {
            return Err(self.diverged(&bundle, self.config.steps, &history, initial, format!("final loss is {last}")));
        }
        Ok(Checkpoint {
            stage: self.stage,
            config: self.config.clone(),
            steps: self.config.steps,
            summary: LossSummary { initial, last },
            loss_history: history,
            bundle,
        })
    }
}

fn prefixed(prefix: &str, names: Vec<(String, &Tensor)>) -> Vec<String> {
    names.into_iter().map(|(n, _)| format!("{prefix}.{n}")).collect()
}

/// Fresh stage-1 model for `data`.
pub fn init_stage1(config: &TrainConfig, data: &DatasetBundle) -> Result<ModelBundle> {
    let a = &config.architecture;
    Ok(ModelBundle {
        video_ae: Some(Autoencoder::init(
            Modality::Video,
            data.dims().video,
            &a.ae_hidden,
            a.video_embed_dim,
            a.activation,
            derive_seed(config.seed, 1),
        )?),
        ..Default::default()
    })
}

/// Minimizes video reconstruction error.
pub fn train_stage1(config: &TrainConfig, data: &DatasetBundle) -> Result<Checkpoint> {
    check_stage(config, 1)?;
    let bundle = init_stage1(config, data)?;
    let video = &data.video;
    let names = prefixed("video_ae", bundle.video_ae()?.named_params());
    let stage = StageLoop {
        stage: 1,
        config,
        names,
        select: |b, _| b.video_ae.as_mut().expect("present").params_mut(),
        build: Box::new(move |tape, b, rows| {
            let ae = b.video_ae()?;
            let bound = ae.bind(tape, true, true);
            let x = tape.constant(video.select_rows(rows)?);
            let (_, rec) = bound.forward(tape, x)?;
            let loss = reconstruction_loss(tape, x, rec)?;
            let mut vars = bound.encoder.vars();
            vars.extend(bound.decoder.vars());
            Ok((
                LossTerms {
                    total: loss,
                    reconstruction: loss,
                    alignment: loss,
                },
                vars,
            ))
        }),
        all_rows: (0..data.num_paired()).collect(),
    };
    let n = data.num_paired();
    stage.run(bundle, |rng| uniform_batch(rng, n, config.batch_size))
}

/// Stage-1 checkpoint extended with fresh fMRI autoencoder and fMRI→video map.
pub fn init_stage2(config: &TrainConfig, data: &DatasetBundle, ckpt1: &Checkpoint) -> Result<ModelBundle> {
    let a = &config.architecture;
    let mut bundle = ckpt1.bundle.clone();
    let video_embed = bundle.video_ae()?.embed_dim();
    bundle.fmri_ae = Some(Autoencoder::init(
        Modality::Fmri,
        data.dims().fmri,
        &a.ae_hidden,
        a.fmri_embed_dim,
        a.activation,
        derive_seed(config.seed, 2),
    )?);
    bundle.map_f_to_v = Some(MappingNetwork::init(
        MapDirection::FToV,
        a.fmri_embed_dim,
        &a.map_hidden,
        video_embed,
        a.activation,
        derive_seed(config.seed, 3),
    )?);
    Ok(bundle)
}

fn stage2_params<'b>(b: &'b mut ModelBundle, config: &TrainConfig) -> Vec<&'b mut Tensor> {
    let mut out = b.fmri_ae.as_mut().expect("present").params_mut();
    out.extend(b.map_f_to_v.as_mut().expect("present").net.params_mut());
    if config.finetune_video_encoder {
        out.extend(b.video_ae.as_mut().expect("present").encoder.params_mut());
    }
    out
}

/// Fits the fMRI autoencoder and the fMRI→video map on paired rows.
///
/// The video decoder is always frozen; the video encoder is frozen unless
/// `finetune_video_encoder` is set.
pub fn train_stage2(config: &TrainConfig, data: &DatasetBundle, ckpt1: &Checkpoint) -> Result<Checkpoint> {
    check_stage(config, 2)?;
    require(ckpt1, &[Component::VideoAe], 2)?;
    let bundle = init_stage2(config, data, ckpt1)?;
    let mut names = prefixed("fmri_ae", bundle.fmri_ae()?.named_params());
    names.extend(prefixed("map_f_to_v", bundle.map_f_to_v()?.net.named_params()));
    if config.finetune_video_encoder {
        names.extend(prefixed("video_ae.encoder", bundle.video_ae()?.encoder.named_params()));
    }
    let (video, fmri) = (&data.video, &data.fmri);
    let finetune = config.finetune_video_encoder;
    let lambda_map = config.lambda_map;
    let stage = StageLoop {
        stage: 2,
        config,
        names,
        select: stage2_params,
        build: Box::new(move |tape, b, rows| {
            let fmri_ae = b.fmri_ae()?.bind(tape, true, true);
            let map = b.map_f_to_v()?.net.bind(tape, true);
            let video_enc = b.video_ae()?.encoder.bind(tape, finetune);
            let xf = tape.constant(fmri.select_rows(rows)?);
            let xv = tape.constant(video.select_rows(rows)?);
            let (emb_f, rec_f) = fmri_ae.forward(tape, xf)?;
            let mapped = map.forward(tape, emb_f)?;
            let emb_v = video_enc.forward(tape, xv)?;
            let terms = stage2_loss(tape, xf, rec_f, emb_v, mapped, lambda_map)?;
            let mut vars = fmri_ae.encoder.vars();
            vars.extend(fmri_ae.decoder.vars());
            vars.extend(map.vars());
            if finetune {
                vars.extend(video_enc.vars());
            }
            Ok((terms, vars))
        }),
        all_rows: (0..data.num_paired()).collect(),
    };
    let n = data.num_paired();
    stage.run(bundle, |rng| uniform_batch(rng, n, config.batch_size))
}

/// Class centroids of the frozen fMRI encoder over all paired fMRI rows.
pub fn prepare_prototypes(ckpt2: &Checkpoint, data: &DatasetBundle) -> Result<Prototypes> {
    if data.num_classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {}", data.num_classes)));
    }
    let emb = ckpt2.bundle.fmri_ae()?.encode(&data.fmri)?;
    compute_prototypes(&emb, &data.labels_paired, data.num_classes)
}

/// Stage-2 checkpoint extended with prototypes, a fresh emotion autoencoder
/// and a fresh emotion→fMRI map.
pub fn init_stage3(
    config: &TrainConfig,
    data: &DatasetBundle,
    ckpt2: &Checkpoint,
    prototypes: Prototypes,
) -> Result<ModelBundle> {
    let a = &config.architecture;
    let mut bundle = ckpt2.bundle.clone();
    let fmri_embed = bundle.fmri_ae()?.embed_dim();
    if prototypes.dim() != fmri_embed {
        return Err(Error::dim("prototypes", prototypes.matrix().shape(), &[fmri_embed]));
    }
    bundle.emotion_ae = Some(Autoencoder::init(
        Modality::Emotion,
        data.dims().emotion,
        &a.ae_hidden,
        a.emotion_embed_dim,
        a.activation,
        derive_seed(config.seed, 4),
    )?);
    let mut map = MappingNetwork::init(
        MapDirection::EToF,
        a.emotion_embed_dim,
        &a.map_hidden,
        fmri_embed,
        a.activation,
        derive_seed(config.seed, 5),
    )?;
    start_at_prototype_mean(&mut map, &prototypes);
    bundle.map_e_to_f = Some(map);
    bundle.prototypes = Some(prototypes);
    Ok(bundle)
}

/// Zero output weights and a bias at the prototype mean, so the map's output
/// starts inside the prototypes' affine hull. The matching loss is blind to
/// offsets orthogonal to that hull, so they would otherwise never shrink.
fn start_at_prototype_mean(map: &mut MappingNetwork, prototypes: &Prototypes) {
    let k = prototypes.num_classes() as f64;
    let mut mean = vec![0.0; prototypes.dim()];
    for c in 0..prototypes.num_classes() {
        for (m, &v) in mean.iter_mut().zip(prototypes.row(c)) {
            *m += v;
        }
    }
    let last = map.net.weights().len() - 1;
    map.net.weights_mut()[last].data_mut().fill(0.0);
    for (b, m) in map.net.biases_mut()[last].data_mut().iter_mut().zip(mean) {
        *b = m / k;
    }
}

fn stage3_params<'b>(b: &'b mut ModelBundle, _: &TrainConfig) -> Vec<&'b mut Tensor> {
    let mut out = b.emotion_ae.as_mut().expect("present").params_mut();
    out.extend(b.map_e_to_f.as_mut().expect("present").net.params_mut());
    out
}

/// Fits the emotion autoencoder and emotion→fMRI map by reconstruction plus
/// prototype matching, on class-balanced minibatches.
pub fn train_stage3(
    config: &TrainConfig,
    data: &DatasetBundle,
    ckpt2: &Checkpoint,
    prototypes: Prototypes,
) -> Result<Checkpoint> {
    check_stage(config, 3)?;
    require(ckpt2, &[Component::VideoAe, Component::FmriAe, Component::MapFToV], 3)?;
    if prototypes.num_classes() != data.num_classes {
        return Err(Error::Config(format!(
            "{} prototypes for {} classes",
            prototypes.num_classes(),
            data.num_classes
        )));
    }
    let bundle = init_stage3(config, data, ckpt2, prototypes)?;
    let mut names = prefixed("emotion_ae", bundle.emotion_ae()?.named_params());
    names.extend(prefixed("map_e_to_f", bundle.map_e_to_f()?.net.named_params()));
    let emotion = &data.emotion;
    let labels = &data.labels_emotion;
    let lambda_match = config.lambda_match;
    let stage = StageLoop {
        stage: 3,
        config,
        names,
        select: stage3_params,
        build: Box::new(move |tape, b, rows| {
            let ae = b.emotion_ae()?.bind(tape, true, true);
            let map = b.map_e_to_f()?.net.bind(tape, true);
            let x = tape.constant(emotion.select_rows(rows)?);
            let (emb, rec) = ae.forward(tape, x)?;
            let mapped = map.forward(tape, emb)?;
            let batch_labels: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
            let terms = stage3_loss(tape, x, rec, mapped, &batch_labels, b.prototypes()?, lambda_match)?;
            let mut vars = ae.encoder.vars();
            vars.extend(ae.decoder.vars());
            vars.extend(map.vars());
            Ok((terms, vars))
        }),
        all_rows: (0..data.num_emotion()).collect(),
    };
    let groups = DatasetBundle::class_indices(labels, data.num_classes);
    if let Some(class) = groups.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass { class });
    }
    stage.run(bundle, |rng| balanced_batch(rng, &groups, config.batch_size))
}
