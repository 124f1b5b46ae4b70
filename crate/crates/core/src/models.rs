//! Parameter containers and forward passes: multilayer perceptrons, the three
//! per-modality autoencoders and the two embedding mapping networks.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::Prototypes;

/// Hidden-layer nonlinearity. The output layer is always affine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

/// Fully connected network with weights stored `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
    activation: Activation,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn init(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            weights.push(Tensor::matrix(fan_out, fan_in, w)?);
            biases.push(Tensor::zeros(vec![fan_out])?);
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Tensor>,
        biases: Vec<Tensor>,
        activation: Activation,
    ) -> Result<Self> {
        validate_dims(&layer_dims)?;
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::Config(format!(
                "{layers} layers need {layers} weights and biases, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for (l, pair) in layer_dims.windows(2).enumerate() {
            if weights[l].shape() != [pair[1], pair[0]] {
                return Err(Error::dim("mlp weight", weights[l].shape(), &[pair[1], pair[0]]));
            }
            if biases[l].shape() != [pair[1]] {
                return Err(Error::dim("mlp bias", biases[l].shape(), &[pair[1]]));
            }
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
            activation,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn in_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated non-empty")
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn biases(&self) -> &[Tensor] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Tensor] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Tensor] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Tensor::len).sum()
    }

    /// Parameters in load order: `w0, b0, w1, b1, ...`.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("w{l}"), w));
            out.push((format!("b{l}"), b));
        }
        out
    }

    /// Mutable parameters in the same order as [`Mlp::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }

    /// Places the parameters on `tape`, tracked when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        let mut weights = Vec::with_capacity(self.weights.len());
        let mut biases = Vec::with_capacity(self.biases.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            weights.push(tape.leaf(w.clone(), trainable));
            biases.push(tape.leaf(b.clone(), trainable));
        }
        BoundMlp {
            in_dim: self.in_dim(),
            weights,
            biases,
            activation: self.activation,
        }
    }

    /// Binds existing tape handles, given in [`Mlp::named_params`] order, as
    /// this network's parameters.
    pub fn bind_vars(&self, tape: &Tape, vars: &[Var]) -> Result<BoundMlp> {
        let expected: Vec<&[usize]> = self.named_params().iter().map(|(_, t)| t.shape()).collect();
        let found: Vec<&[usize]> = vars.iter().map(|&v| tape.value(v).shape()).collect();
        if expected != found {
            return Err(Error::Contract(format!(
                "bind_vars: expected parameter shapes {expected:?}, got {found:?}"
            )));
        }
        Ok(BoundMlp {
            in_dim: self.in_dim(),
            weights: vars.iter().step_by(2).copied().collect(),
            biases: vars.iter().skip(1).step_by(2).copied().collect(),
            activation: self.activation,
        })
    }

    /// Batched forward pass over the rows of `x` (`[batch, in_dim]`).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let input = tape.constant(x.clone());
        let out = bound.forward(&mut tape, input)?;
        Ok(tape.value(out).clone())
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config(format!(
            "an MLP needs at least 2 layer sizes, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::Config(format!(
            "MLP layer sizes must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// An [`Mlp`] whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    in_dim: usize,
    weights: Vec<Var>,
    biases: Vec<Var>,
    activation: Activation,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let shape = tape.value(x).shape();
        if shape.len() != 2 || shape[1] != self.in_dim {
            return Err(Error::dim("mlp_forward", shape, &[self.in_dim]));
        }
        let last = self.weights.len() - 1;
        let mut h = x;
        for (l, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wt = tape.transpose(w)?;
            let z = tape.matmul(h, wt)?;
            let z = tape.add(z, b)?;
            h = if l == last {
                z
            } else {
                match self.activation {
                    Activation::Tanh => tape.tanh(z)?,
                    Activation::Relu => tape.relu(z)?,
                }
            };
        }
        Ok(h)
    }

    /// Tape handles in the order of [`Mlp::named_params`].
    pub fn vars(&self) -> Vec<Var> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(&w, &b)| [w, b])
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Video,
    Fmri,
    Emotion,
}

/// Encoder/decoder pair for one modality.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub modality: Modality,
}

impl Autoencoder {
    pub fn new(encoder: Mlp, decoder: Mlp, modality: Modality) -> Result<Self> {
        if encoder.out_dim() != decoder.in_dim() {
            return Err(Error::Config(format!(
                "{modality:?} encoder emits {} dims but decoder expects {}",
                encoder.out_dim(),
                decoder.in_dim()
            )));
        }
        if decoder.out_dim() != encoder.in_dim() {
            return Err(Error::Config(format!(
                "{modality:?} decoder emits {} dims but inputs have {}",
                decoder.out_dim(),
                encoder.in_dim()
            )));
        }
        Ok(Self {
            encoder,
            decoder,
            modality,
        })
    }

    /// Encoder `[input, hidden.., embed]`, decoder mirrored.
    pub fn init(
        modality: Modality,
        input_dim: usize,
        hidden: &[usize],
        embed_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut enc_dims = vec![input_dim];
        enc_dims.extend_from_slice(hidden);
        enc_dims.push(embed_dim);
        let dec_dims: Vec<usize> = enc_dims.iter().rev().copied().collect();
        let encoder = Mlp::init(&enc_dims, activation, seed)?;
        let decoder = Mlp::init(&dec_dims, activation, seed.wrapping_add(1))?;
        Self::new(encoder, decoder, modality)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    /// Returns `(embedding, reconstruction)`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let embedding = self.encoder.forward(x)?;
        let reconstruction = self.decoder.forward(&embedding)?;
        Ok((embedding, reconstruction))
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.encoder.forward(x)
    }

    pub fn bind(&self, tape: &mut Tape, train_encoder: bool, train_decoder: bool) -> BoundAutoencoder {
        BoundAutoencoder {
            encoder: self.encoder.bind(tape, train_encoder),
            decoder: self.decoder.bind(tape, train_decoder),
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let enc = self.encoder.named_params().into_iter();
        let dec = self.decoder.named_params().into_iter();
        enc.map(|(n, t)| (format!("encoder.{n}"), t))
            .chain(dec.map(|(n, t)| (format!("decoder.{n}"), t)))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.params_mut();
        out.extend(self.decoder.params_mut());
        out
    }
}

#[derive(Clone, Debug)]
pub struct BoundAutoencoder {
    pub encoder: BoundMlp,
    pub decoder: BoundMlp,
}

impl BoundAutoencoder {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
        let emb = self.encoder.forward(tape, x)?;
        let rec = self.decoder.forward(tape, emb)?;
        Ok((emb, rec))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapDirection {
    /// fMRI embedding space into video embedding space.
    FToV,
    /// Emotion embedding space into fMRI embedding space.
    EToF,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MappingNetwork {
    pub net: Mlp,
    pub direction: MapDirection,
}

impl MappingNetwork {
    pub fn init(
        direction: MapDirection,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut dims = vec![in_dim];
        dims.extend_from_slice(hidden);
        dims.push(out_dim);
        Ok(Self {
            net: Mlp::init(&dims, activation, seed)?,
            direction,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.net.forward(x)
    }
}

/// Named, snapshot-able parts of a [`ModelBundle`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    VideoAe,
    FmriAe,
    MapFToV,
    EmotionAe,
    MapEToF,
    Prototypes,
}

impl Component {
    /// Manifest order.
    pub const ALL: [Component; 6] = [
        Component::VideoAe,
        Component::FmriAe,
        Component::MapFToV,
        Component::EmotionAe,
        Component::MapEToF,
        Component::Prototypes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::VideoAe => "video_ae",
            Component::FmriAe => "fmri_ae",
            Component::MapFToV => "map_f_to_v",
            Component::EmotionAe => "emotion_ae",
            Component::MapEToF => "map_e_to_f",
            Component::Prototypes => "prototypes",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown component `{s}`")))
    }
}

/// All networks of the staged pipeline. Components appear as stages complete.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelBundle {
    pub video_ae: Option<Autoencoder>,
    pub fmri_ae: Option<Autoencoder>,
    pub emotion_ae: Option<Autoencoder>,
    pub map_f_to_v: Option<MappingNetwork>,
    pub map_e_to_f: Option<MappingNetwork>,
    pub prototypes: Option<Prototypes>,
}

fn missing(c: Component) -> Error {
    Error::MissingComponent(c.name().to_string())
}

impl ModelBundle {
    pub fn video_ae(&self) -> Result<&Autoencoder> {
        self.video_ae.as_ref().ok_or_else(|| missing(Component::VideoAe))
    }

    pub fn fmri_ae(&self) -> Result<&Autoencoder> {
        self.fmri_ae.as_ref().ok_or_else(|| missing(Component::FmriAe))
    }

    pub fn emotion_ae(&self) -> Result<&Autoencoder> {
        self.emotion_ae
            .as_ref()
            .ok_or_else(|| missing(Component::EmotionAe))
    }

    pub fn map_f_to_v(&self) -> Result<&MappingNetwork> {
        self.map_f_to_v
            .as_ref()
            .ok_or_else(|| missing(Component::MapFToV))
    }

    pub fn map_e_to_f(&self) -> Result<&MappingNetwork> {
        self.map_e_to_f
            .as_ref()
            .ok_or_else(|| missing(Component::MapEToF))
    }

    pub fn prototypes(&self) -> Result<&Prototypes> {
        self.prototypes
            .as_ref()
            .ok_or_else(|| missing(Component::Prototypes))
    }

    pub fn has(&self, c: Component) -> bool {
        match c {
            Component::VideoAe => self.video_ae.is_some(),
            Component::FmriAe => self.fmri_ae.is_some(),
            Component::MapFToV => self.map_f_to_v.is_some(),
            Component::EmotionAe => self.emotion_ae.is_some(),
            Component::MapEToF => self.map_e_to_f.is_some(),
            Component::Prototypes => self.prototypes.is_some(),
        }
    }

    /// Present components in manifest order.
    pub fn components(&self) -> Vec<Component> {
        Component::ALL.into_iter().filter(|&c| self.has(c)).collect()
    }

    /// Parameters of one component, names prefixed with the component name.
    pub fn component_params(&self, c: Component) -> Result<Vec<(String, &Tensor)>> {
        let prefix = c.name();
        let raw: Vec<(String, &Tensor)> = match c {
            Component::VideoAe => self.video_ae()?.named_params(),
            Component::FmriAe => self.fmri_ae()?.named_params(),
            Component::EmotionAe => self.emotion_ae()?.named_params(),
            Component::MapFToV => self.map_f_to_v()?.net.named_params(),
            Component::MapEToF => self.map_e_to_f()?.net.named_params(),
            Component::Prototypes => vec![("matrix".to_string(), self.prototypes()?.matrix())],
        };
        Ok(raw
            .into_iter()
            .map(|(n, t)| (format!("{prefix}.{n}"), t))
            .collect())
    }

    /// Every parameter of every present component, in manifest order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.components()
            .into_iter()
            .flat_map(|c| self.component_params(c).expect("component present"))
            .collect()
    }

    /// Checks that embedding sizes chain emotion → fMRI → video → frame.
    pub fn validate(&self) -> Result<()> {
        let chain_err = |what: &str, a: usize, b: usize| {
            Err(Error::Config(format!("{what}: {a} != {b}")))
        };
        if let (Some(f), Some(v), Some(m)) = (&self.fmri_ae, &self.video_ae, &self.map_f_to_v) {
            if m.net.in_dim() != f.embed_dim() {
                return chain_err("map_f_to_v input vs fMRI embedding", m.net.in_dim(), f.embed_dim());
            }
            if m.net.out_dim() != v.embed_dim() {
                return chain_err("map_f_to_v output vs video embedding", m.net.out_dim(), v.embed_dim());
            }
        }
        if let (Some(e), Some(f), Some(m)) = (&self.emotion_ae, &self.fmri_ae, &self.map_e_to_f) {
            if m.net.in_dim() != e.embed_dim() {
                return chain_err("map_e_to_f input vs emotion embedding", m.net.in_dim(), e.embed_dim());
            }
            if m.net.out_dim() != f.embed_dim() {
                return chain_err("map_e_to_f output vs fMRI embedding", m.net.out_dim(), f.embed_dim());
            }
        }
        if let (Some(p), Some(f)) = (&self.prototypes, &self.fmri_ae) {
            if p.dim() != f.embed_dim() {
                return chain_err("prototype width vs fMRI embedding", p.dim(), f.embed_dim());
            }
        }
        Ok(())
    }
}

/// Bit-exact copy of selected parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSnapshot {
    entries: Vec<(String, Vec<usize>, Vec<u64>)>,
}

impl ParamSnapshot {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn snapshot_params(bundle: &ModelBundle, subset: &[Component]) -> Result<ParamSnapshot> {
    let mut entries = Vec::new();
    for &c in subset {
        for (name, t) in bundle.component_params(c)? {
            entries.push((name, t.shape().to_vec(), t.to_bits()));
        }
    }
    Ok(ParamSnapshot { entries })
}

/// Parses component names, rejecting unknown ones.
pub fn parse_subset<S: AsRef<str>>(names: &[S]) -> Result<Vec<Component>> {
    names.iter().map(|n| n.as_ref().parse()).collect()
}

/// True iff every snapshotted parameter is still present and bit-identical.
pub fn assert_unchanged(snapshot: &ParamSnapshot, bundle: &ModelBundle) -> bool {
    let current: Vec<(String, &Tensor)> = bundle.named_params();
    snapshot.entries.iter().all(|(name, shape, bits)| {
        current
            .iter()
            .find(|(n, _)| n == name)
            .is_some_and(|(_, t)| t.shape() == shape.as_slice() && &t.to_bits() == bits)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_biases_are_zero() {
        let m = Mlp::init(&[4, 4], Activation::Tanh, 11).unwrap();
        assert!(m.biases()[0].data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_is_deterministic() {
        let a = Mlp::init(&[5, 3, 2], Activation::Relu, 3).unwrap();
        let b = Mlp::init(&[5, 3, 2], Activation::Relu, 3).unwrap();
        for ((_, x), (_, y)) in a.named_params().iter().zip(b.named_params().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn init_respects_glorot_bound() {
        let m = Mlp::init(&[8, 3], Activation::Tanh, 7).unwrap();
        let bound = (6.0f64 / 11.0).sqrt();
        assert!(m.weights()[0].data().iter().all(|w| w.abs() <= bound));
        assert_eq!(m.weights()[0].shape(), &[3, 8]);
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(matches!(Mlp::init(&[4], Activation::Tanh, 0), Err(Error::Config(_))));
        assert!(matches!(Mlp::init(&[], Activation::Tanh, 0), Err(Error::Config(_))));
        assert!(matches!(Mlp::init(&[3, 0, 2], Activation::Tanh, 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::from_parts(
            vec![3, 4, 2],
            vec![Tensor::zeros(vec![4, 3]).unwrap(), Tensor::zeros(vec![2, 4]).unwrap()],
            vec![Tensor::zeros(vec![4]).unwrap(), Tensor::zeros(vec![2]).unwrap()],
            Activation::Tanh,
        )
        .unwrap();
        let x = Tensor::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]]).unwrap();
        assert!(m.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    fn identity(n: usize) -> Tensor {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 1.0;
        }
        Tensor::matrix(n, n, d).unwrap()
    }

    #[test]
    fn identity_layer_passes_input() {
        let m = Mlp::from_parts(
            vec![3, 3],
            vec![identity(3)],
            vec![Tensor::zeros(vec![3]).unwrap()],
            Activation::Relu,
        )
        .unwrap();
        let x = Tensor::from_rows(&[[1.0, -2.0, 3.0]]).unwrap();
        assert_eq!(m.forward(&x).unwrap(), x);
    }

    #[test]
    fn hand_affine() {
        let m = Mlp::from_parts(
            vec![2, 2],
            vec![identity(2)],
            vec![Tensor::vector(vec![1.0, 1.0]).unwrap()],
            Activation::Tanh,
        )
        .unwrap();
        let x = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(m.forward(&x).unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let m = Mlp::init(&[3, 2], Activation::Tanh, 0).unwrap();
        let x = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(m.forward(&x), Err(Error::Dimension { op: "mlp_forward", .. })));
    }

    #[test]
    fn param_count_formula() {
        let dims = [7, 5, 3, 2];
        let m = Mlp::init(&dims, Activation::Tanh, 1).unwrap();
        let expected: usize = dims.windows(2).map(|p| p[1] * p[0] + p[1]).sum();
        assert_eq!(m.param_count(), expected);
    }

    #[test]
    fn identity_autoencoder_reconstructs() {
        let enc = Mlp::from_parts(vec![3, 3], vec![identity(3)], vec![Tensor::zeros(vec![3]).unwrap()], Activation::Tanh).unwrap();
        let ae = Autoencoder::new(enc.clone(), enc, Modality::Video).unwrap();
        let x = Tensor::from_rows(&[[0.1, 0.2, 0.3], [1.0, 2.0, 3.0]]).unwrap();
        let (emb, rec) = ae.forward(&x).unwrap();
        assert_eq!(emb, x);
        assert_eq!(rec, x);
    }

    #[test]
    fn zero_decoder_reconstructs_zero() {
        let mut ae = Autoencoder::init(Modality::Fmri, 6, &[5], 3, Activation::Tanh, 4).unwrap();
        for p in ae.decoder.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::from_rows(&[[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]]).unwrap();
        let (_, rec) = ae.forward(&x).unwrap();
        assert!(rec.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn autoencoder_rejects_mismatched_halves() {
        let enc = Mlp::init(&[6, 3], Activation::Tanh, 0).unwrap();
        let dec = Mlp::init(&[4, 6], Activation::Tanh, 0).unwrap();
        assert!(Autoencoder::new(enc, dec, Modality::Video).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut bundle = ModelBundle {
            video_ae: Some(Autoencoder::init(Modality::Video, 4, &[], 2, Activation::Tanh, 0).unwrap()),
            ..Default::default()
        };
        let snap = snapshot_params(&bundle, &[Component::VideoAe]).unwrap();
        assert!(assert_unchanged(&snap, &bundle));
        bundle.video_ae.as_mut().unwrap().encoder.weights_mut()[0].data_mut()[0] += 1e-12;
        assert!(!assert_unchanged(&snap, &bundle));
    }

    #[test]
    fn snapshot_subset_errors() {
        let bundle = ModelBundle::default();
        assert!(matches!(parse_subset(&["video_ae", "bogus"]), Err(Error::Config(_))));
        assert!(matches!(
            snapshot_params(&bundle, &[Component::FmriAe]),
            Err(Error::MissingComponent(_))
        ));
    }
}
