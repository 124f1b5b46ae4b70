//! Builds a small expression and a small autoencoder on the tape and compares
//! reverse-mode gradients with central differences.
//!
//! cargo run --example gradient_check

use neuralign::autodiff::{check_gradients, finite_difference_check, Tape, Tensor};
use neuralign::losses::reconstruction_loss;
use neuralign::models::{Activation, Autoencoder, Modality};

fn main() -> neuralign::Result<()> {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, -2.0, 0.5])?);
    let y = tape.tanh(x)?;
    let y = tape.square(y)?;
    let loss = tape.sum(y)?;
    let grads = tape.backward(loss)?;
    println!("sum(tanh(x)^2) = {:.6}", tape.value(loss).item()?);
    println!("d/dx = {:?}", grads.get(x).map(Tensor::data));

    let err = finite_difference_check(
        |tape, x| {
            let t = tape.tanh(x)?;
            let s = tape.square(t)?;
            tape.sum(s)
        },
        &Tensor::vector(vec![1.0, -2.0, 0.5])?,
        1e-5,
    )?;
    println!("scalar expression: max relative error {err:.2e}");

    let ae = Autoencoder::init(Modality::Video, 6, &[5], 3, Activation::Tanh, 7)?;
    let x = Tensor::from_rows(&[[0.1, -0.4, 0.9, 0.0, 0.3, -0.2], [0.5, 0.5, -0.5, 1.0, -1.0, 0.2]])?;
    let n_enc = ae.encoder.named_params().len();
    let params: Vec<Tensor> = ae
        .named_params()
        .into_iter()
        .map(|(_, t)| t.clone())
        .collect();
    let report = check_gradients(
        |tape, vars| {
            let enc = ae.encoder.bind_vars(tape, &vars[..n_enc])?;
            let dec = ae.decoder.bind_vars(tape, &vars[n_enc..])?;
            let input = tape.constant(x.clone());
            let emb = enc.forward(tape, input)?;
            let rec = dec.forward(tape, emb)?;
            reconstruction_loss(tape, input, rec)
        },
        &params,
        1e-5,
    )?;
    for ((name, _), e) in ae.named_params().iter().zip(&report.per_input) {
        println!("{name:>10}: {e:.2e}");
    }
    println!("autoencoder: max relative error {:.2e}", report.max_relative_error());
    Ok(())
}
