use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numcore::{Matrix, Real};

/// Deterministic RNG for one named stream. Streams are derived from the run
/// seed plus a label so that adding a consumer does not shift the others.
pub fn stream_rng(seed: u64, label: &str) -> ChaCha8Rng {
    // FNV-1a over the label, mixed into the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h.rotate_left(17))
}

/// Uniform draw in `±sqrt(6 / (rows + cols))`.
pub fn xavier_init<T: Real>(rows: usize, cols: usize, seed: u64) -> Matrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xavier_with(rows, cols, &mut rng)
}

pub fn xavier_with<T: Real>(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<T> {
    let bound = (6.0 / (rows + cols).max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::of(rng.random_range(-bound..=bound)))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("xavier shape")
}

/// Keep-and-rescale mask for inverted dropout: each entry is 0 with
/// probability `rate`, otherwise `1 / (1 - rate)`.
pub fn dropout_mask<T: Real>(rows: usize, cols: usize, rate: f64, rng: &mut impl Rng) -> Matrix<T> {
    assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
    let keep = T::of(1.0 / (1.0 - rate));
    let data = (0..rows * cols)
        .map(|_| {
            if rate > 0.0 && rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("mask shape")
}

impl<T: Real> crate::numcore::Tape<T> {
    /// Inverted dropout. Identity when `training` is false or `rate` is 0.
    pub fn dropout(
        &mut self,
        a: crate::numcore::Var,
        rate: f64,
        training: bool,
        rng: &mut impl Rng,
    ) -> crate::error::Result<crate::numcore::Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(crate::error::Error::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let (r, c) = self.shape(a);
        let mask = dropout_mask(r, c, rate, rng);
        self.mask(a, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_draws() {
        let a: Matrix<f64> = xavier_init(5, 7, 42);
        let b: Matrix<f64> = xavier_init(5, 7, 42);
        assert_eq!(a, b);
        let c: Matrix<f64> = xavier_init(5, 7, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn xavier_bound() {
        let a: Matrix<f64> = xavier_init(30, 20, 1);
        let bound = (6.0f64 / 50.0).sqrt();
        assert!(a.as_slice().iter().all(|x| x.abs() <= bound));
        // roughly uniform: mean near zero, spread near bound
        let mean = a.sum() / a.len() as f64;
        assert!(mean.abs() < 0.05);
        assert!(a.max_abs() > 0.9 * bound);
    }

    #[test]
    fn dropout_mask_rates() {
        let mut rng = stream_rng(3, "dropout");
        let m: Matrix<f64> = dropout_mask(100, 100, 0.3, &mut rng);
        let zeros = m.as_slice().iter().filter(|&&x| x == 0.0).count() as f64 / 1e4;
        assert!((zeros - 0.3).abs() < 0.02, "{zeros}");
        let keep = m.as_slice().iter().find(|&&x| x != 0.0).copied().unwrap();
        assert!((keep - 1.0 / 0.7).abs() < 1e-12);

        let ones: Matrix<f64> = dropout_mask(3, 3, 0.0, &mut rng);
        assert!(ones.as_slice().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn streams_are_independent_of_label_order() {
        let mut a = stream_rng(9, "init");
        let mut b = stream_rng(9, "init");
        let mut c = stream_rng(9, "dropout");
        let (x, y, z): (u64, u64, u64) = (a.random(), b.random(), c.random());
        assert_eq!(x, y);
        assert_ne!(x, z);
    }
}
