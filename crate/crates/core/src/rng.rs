//! Seeded standard-normal generation.
//!
//! A draw is identified by `(seed, stream)`: ChaCha8 keyed by the seed, with
//! the stream selecting an independent 64-bit counter space. Trials use their
//! index as the stream, so parallel execution order never changes the values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Matrix;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `rows × cols` matrix of i.i.d. N(0,1) entries, filled column by column.
pub fn normal_matrix(rows: usize, cols: usize, seed: u64, stream: u64) -> Matrix {
    let mut rng = stream_rng(seed, stream);
    fill_normal(rows, cols, &mut rng)
}

pub fn fill_normal<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}
