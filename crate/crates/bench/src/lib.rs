//! Deterministic inputs shared by the benchmarks and their smoke tests.

pub use pcgc_core;

use pcgc_core::entropy::{gaussian_tables, scale_bin, CdfTable};
use pcgc_core::nn::{KernelShape, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Input, weights and kernel for a `channels`-to-`channels` 3x3x3 conv
/// over a `side`^3 volume.
pub fn conv_fixture(channels: usize, side: usize, seed: u64) -> (Tensor, Vec<f64>, KernelShape) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::random_uniform(Shape::cube(channels, side), -1.0, 1.0, &mut rng);
    let k = KernelShape::full(channels, channels, 3);
    let w = (0..channels * channels * 27).map(|_| rng.gen_range(-0.1..0.1)).collect();
    (x, w, k)
}

/// `n` symbols drawn near the support of the unit-ish Gaussian table.
pub fn symbol_fixture(n: usize, seed: u64) -> (Vec<i32>, &'static CdfTable) {
    let table = &gaussian_tables()[scale_bin(3.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbols = (0..n).map(|_| table.clamp((rng.gen::<f64>() * 6.0 - 3.0).round() as i32)).collect();
    (symbols, table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic_and_shaped() {
        let (x, w, k) = conv_fixture(4, 8, 1);
        assert_eq!((x.channels(), x.dims(), w.len()), (4, [8; 3], k.c_out * k.c_in * 27));
        assert_eq!(conv_fixture(4, 8, 1).1, w);
        let (s, t) = symbol_fixture(1000, 2);
        assert_eq!(s.len(), 1000);
        assert!(s.iter().all(|&v| t.clamp(v) == v));
    }
}
