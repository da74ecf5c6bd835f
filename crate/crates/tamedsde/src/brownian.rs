//! Seeded Brownian increments on a fine dyadic reference grid.
//!
//! All pathwise quantities in this crate are evaluated on a reference grid
//! of `n_ref` equal steps over `[0, 1]`, with `n_ref` a power of two.
//! Coarser schemes are driven by block sums of the same fine increments,
//! so every discretization level sees one and the same Brownian motion.
//!
//! Generator: a ChaCha12 stream cipher RNG keyed by `seed` (via
//! `seed_from_u64`) with the 64-bit stream id set to `path_index`, drawing
//! standard normal variates (ziggurat) scaled by `sqrt(1/n_ref)` in index
//! order. This derivation is part of the output contract: identical
//! `(seed, path_index, n_ref)` reproduce identical increments bit for bit,
//! and distinct `path_index` values give independent streams.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Brownian increments over each reference step, with cached prefix sums.
#[derive(Debug, Clone)]
pub struct BrownianPath {
    n_ref: usize,
    increments: Vec<f64>,
    /// `prefix[j] = W(j / n_ref)`, ascending single-pass sums.
    prefix: Vec<f64>,
    seed: u64,
    path_index: u64,
}

fn require_power_of_two(name: &'static str, n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { name, value: n });
    }
    Ok(())
}

/// Draws one Brownian path on the reference grid.
pub fn sample_path(seed: u64, path_index: u64, n_ref: usize) -> Result<BrownianPath> {
    require_power_of_two("n_ref", n_ref)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    let scale = (1.0 / n_ref as f64).sqrt();
    let increments: Vec<f64> = (0..n_ref)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect();
    let mut prefix = Vec::with_capacity(n_ref + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for &dw in &increments {
        acc += dw;
        prefix.push(acc);
    }
    Ok(BrownianPath {
        n_ref,
        increments,
        prefix,
        seed,
        path_index,
    })
}

impl BrownianPath {
    pub fn n_ref(&self) -> usize {
        self.n_ref
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Coarse increments for an `n`-step grid, `n` dividing `n_ref`.
    ///
    /// Entry `j` is the sum of the fine increments over `[j/n, (j+1)/n]`,
    /// always accumulated in ascending index order; the scheme drivers use
    /// the same order, so coarse steps and fine partial sums agree bit for
    /// bit.
    pub fn coarsen(&self, n: usize) -> Result<Vec<f64>> {
        if n == 0 || self.n_ref % n != 0 {
            return Err(Error::DivisibilityViolation {
                coarse: n,
                fine: self.n_ref,
            });
        }
        let block = self.n_ref / n;
        Ok(self
            .increments
            .chunks_exact(block)
            .map(|c| c.iter().sum())
            .collect())
    }

    /// `W(j / n_ref)` from the cached prefix sums; `value_at(0) = 0`.
    ///
    /// Panics if `j > n_ref`.
    pub fn value_at(&self, j: usize) -> f64 {
        assert!(
            j <= self.n_ref,
            "reference index {j} out of range (n_ref = {})",
            self.n_ref
        );
        self.prefix[j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic_replay() {
        let a = sample_path(7, 3, 256).unwrap();
        let b = sample_path(7, 3, 256).unwrap();
        assert_eq!(a.increments(), b.increments());
    }

    #[test]
    fn distinct_streams_differ() {
        let a = sample_path(7, 0, 64).unwrap();
        let b = sample_path(7, 1, 64).unwrap();
        assert_ne!(a.increments(), b.increments());
        let c = sample_path(8, 0, 64).unwrap();
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(sample_path(1, 0, 12).is_err());
        assert!(sample_path(1, 0, 0).is_err());
        assert!(sample_path(1, 0, 1).is_err());
    }

    #[test]
    fn coarsen_identity_and_total() {
        let p = sample_path(42, 0, 128).unwrap();
        assert_eq!(p.coarsen(128).unwrap(), p.increments());
        let total = p.coarsen(1).unwrap();
        assert_eq!(total.len(), 1);
        assert!((total[0] - p.value_at(128)).abs() < 1e-12);
    }

    #[test]
    fn coarsen_rejects_non_divisor() {
        let p = sample_path(42, 0, 128).unwrap();
        assert!(p.coarsen(3).is_err());
        assert!(p.coarsen(256).is_err());
        assert!(p.coarsen(0).is_err());
    }

    #[test]
    fn prefix_sums_telescope() {
        let p = sample_path(5, 2, 64).unwrap();
        assert_eq!(p.value_at(0), 0.0);
        for j in 0..64 {
            let diff = p.value_at(j + 1) - p.value_at(j);
            assert!((diff - p.increments()[j]).abs() < 1e-15);
        }
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn value_at_out_of_range_panics() {
        let p = sample_path(5, 2, 64).unwrap();
        p.value_at(65);
    }

    #[test]
    fn pooled_increment_statistics() {
        // ~10^6 increments at n_ref = 2^10: mean within 5 SE of 0 and
        // variance within 5 SE of 1/1024.
        let n_ref = 1024usize;
        let paths = 977usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for m in 0..paths {
            let p = sample_path(2024, m as u64, n_ref).unwrap();
            for &dw in p.increments() {
                sum += dw;
                sumsq += dw * dw;
            }
        }
        let count = (paths * n_ref) as f64;
        let mean = sum / count;
        let var = sumsq / count - mean * mean;
        let true_var = 1.0 / n_ref as f64;
        let se_mean = (true_var / count).sqrt();
        let se_var = true_var * (2.0 / (count - 1.0)).sqrt();
        assert!(mean.abs() < 5.0 * se_mean, "mean {mean} vs SE {se_mean}");
        assert!(
            (var - true_var).abs() < 5.0 * se_var,
            "var {var} vs {true_var} (SE {se_var})"
        );
    }

    proptest! {
        #[test]
        fn coarsen_preserves_totals(seed in 0u64..1000, exp in 1u32..6) {
            let p = sample_path(seed, 0, 256).unwrap();
            let n = 1usize << exp;
            let coarse = p.coarsen(n).unwrap();
            prop_assert_eq!(coarse.len(), n);
            let total: f64 = coarse.iter().sum();
            let fine_total: f64 = p.increments().iter().sum();
            prop_assert!((total - fine_total).abs() <= 1e-12 * (1.0 + fine_total.abs()));
        }
    }
}
