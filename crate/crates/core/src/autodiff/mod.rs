//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, finite_difference_check, GradCheckReport};
pub use tape::{Gradients, OpTag, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::ordered_sum;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::vector((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn gradcheck_sum_of_squares() {
        let x = random_vec(8, 1);
        let err = finite_difference_check(
            |t, x| {
                let s = t.square(x)?;
                t.sum(s)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn gradcheck_constant_is_exact() {
        let x = random_vec(5, 2);
        let err = finite_difference_check(|t, _| Ok(t.constant(Tensor::scalar(3.5))), &x, 1e-5)
            .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn gradcheck_sum_tanh() {
        let x = random_vec(8, 3);
        let err = finite_difference_check(
            |t, x| {
                let y = t.tanh(x)?;
                t.sum(y)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn rejects_nonpositive_eps() {
        let x = random_vec(2, 4);
        assert!(finite_difference_check(|t, x| t.sum(x), &x, 0.0).is_err());
    }
}
