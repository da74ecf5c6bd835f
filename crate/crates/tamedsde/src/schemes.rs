//! Tamed Euler schemes on the reference grid.
//!
//! The tamed coefficients divide both drift and diffusion by
//! `1 + n^{-1/2} |x|^{ell_mu}`, which keeps the explicit Euler recursion
//! from blowing up under superlinear growth while perturbing the
//! coefficients only at order `n^{-1/2}`. The time-continuous scheme
//!
//! `X(t) = X(i/n) + mu_n(X(i/n)) (t - i/n) + sigma_n(X(i/n)) (W_t - W_{i/n})`
//!
//! is materialized at every reference grid time. Within each coarse step
//! the Brownian partial sums accumulate in ascending index order, the same
//! order [`BrownianPath::coarsen`] uses, and elapsed in-step time is a
//! dyadic rational computed from integer counters, so the fine values at
//! coarse grid indices reproduce the grid recursion bit for bit.

use crate::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::sde_model::SdeProblem;
use crate::transform::{TransformG, TransformedProblem};

/// Scheme values above this magnitude (or non-finite) mark the path
/// divergent. Taming prevents this for well-posed problems; the guard
/// catches coefficient misconfiguration instead of propagating infinities.
pub const OVERFLOW_GUARD: f64 = 1e300;

/// `1 + n^{-1/2} |x|^{ell_mu}`, the common taming denominator.
#[inline]
fn taming_denominator(n: usize, ell_mu: f64, x: f64) -> f64 {
    1.0 + x.abs().powf(ell_mu) / (n as f64).sqrt()
}

/// Tamed drift `mu_n(x) = mu(x) / (1 + n^{-1/2} |x|^{ell_mu})`.
pub fn tamed_drift(problem: &SdeProblem, n: usize, x: f64) -> f64 {
    problem.mu(x) / taming_denominator(n, problem.growth().ell_mu(), x)
}

/// Tamed diffusion; the denominator uses `ell_mu`, not `ell_sigma`.
pub fn tamed_diffusion(problem: &SdeProblem, n: usize, x: f64) -> f64 {
    problem.sigma(x) / taming_denominator(n, problem.growth().ell_mu(), x)
}

/// A tamed Euler trajectory: values on its own coarse grid plus the
/// time-continuous scheme evaluated at every reference grid time.
#[derive(Debug, Clone)]
pub struct SchemePath {
    n: usize,
    n_ref: usize,
    grid_values: Vec<f64>,
    fine_values: Vec<f64>,
    divergent: bool,
}

impl SchemePath {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_ref(&self) -> usize {
        self.n_ref
    }

    /// Values at the coarse grid times `0, 1/n, ..., 1`.
    pub fn grid_values(&self) -> &[f64] {
        &self.grid_values
    }

    /// Time-continuous scheme at the reference times `j / n_ref`.
    pub fn fine_values(&self) -> &[f64] {
        &self.fine_values
    }

    /// True when the overflow guard fired; values are frozen at the last
    /// finite state from that point on.
    pub fn is_divergent(&self) -> bool {
        self.divergent
    }
}

/// Runs the tamed recursion for coefficients already tamed at level `n`.
fn run_scheme(
    tamed: impl Fn(f64) -> (f64, f64),
    x0: f64,
    n: usize,
    path: &BrownianPath,
) -> Result<SchemePath> {
    let n_ref = path.n_ref();
    if n == 0 || n_ref % n != 0 {
        return Err(Error::DivisibilityViolation {
            coarse: n,
            fine: n_ref,
        });
    }
    let block = n_ref / n;
    let increments = path.increments();
    let mut grid_values = Vec::with_capacity(n + 1);
    let mut fine_values = Vec::with_capacity(n_ref + 1);
    grid_values.push(x0);
    fine_values.push(x0);
    let mut x = x0;
    let mut divergent = false;
    'steps: for i in 0..n {
        let (mu, sigma) = tamed(x);
        let mut w_acc = 0.0;
        for jj in 0..block {
            w_acc += increments[i * block + jj];
            // Elapsed in-step time (jj + 1) / n_ref is an exact dyadic
            // rational; at the block end it equals 1/n exactly.
            let dt = (jj + 1) as f64 / n_ref as f64;
            let v = x + mu * dt + sigma * w_acc;
            if !v.is_finite() || v.abs() > OVERFLOW_GUARD {
                divergent = true;
                break 'steps;
            }
            fine_values.push(v);
        }
        x = *fine_values.last().unwrap();
        grid_values.push(x);
    }
    if divergent {
        let frozen = *fine_values.last().unwrap();
        fine_values.resize(n_ref + 1, frozen);
        while grid_values.len() < n + 1 {
            grid_values.push(frozen);
        }
    }
    Ok(SchemePath {
        n,
        n_ref,
        grid_values,
        fine_values,
        divergent,
    })
}

/// Tamed Euler scheme for `problem` with `n` steps, driven by `path`.
pub fn tamed_euler_path(problem: &SdeProblem, n: usize, path: &BrownianPath) -> Result<SchemePath> {
    let ell_mu = problem.growth().ell_mu();
    run_scheme(
        |x| {
            let d = taming_denominator(n, ell_mu, x);
            (problem.mu(x) / d, problem.sigma(x) / d)
        },
        problem.x0(),
        n,
        path,
    )
}

/// Piecewise linear interpolation of the coarse grid values, evaluated at
/// every reference grid time.
pub fn linear_interp_path(sp: &SchemePath) -> Vec<f64> {
    let step = sp.n_ref / sp.n;
    let grid = &sp.grid_values;
    (0..=sp.n_ref)
        .map(|j| {
            let i = (j / step).min(sp.n - 1);
            let lambda = (j - i * step) as f64 / step as f64;
            (1.0 - lambda) * grid[i] + lambda * grid[i + 1]
        })
        .collect()
}

/// Tamed Euler scheme for the transformed equation, started at `G(x0)`.
pub fn transformed_scheme_path(
    tp: &TransformedProblem,
    n: usize,
    path: &BrownianPath,
) -> Result<SchemePath> {
    let ell_mu = tp.tilde_growth().ell_mu();
    run_scheme(
        |x| {
            let (mu_t, sigma_t) = tp.coefficients(x);
            let d = taming_denominator(n, ell_mu, x);
            (mu_t / d, sigma_t / d)
        },
        tp.z0(),
        n,
        path,
    )
}

/// Maps a trajectory of the transformed scheme back through the inverse
/// transform, pointwise on both grids.
pub fn pullback_path(g: &TransformG, sp: &SchemePath) -> SchemePath {
    SchemePath {
        n: sp.n,
        n_ref: sp.n_ref,
        grid_values: sp.grid_values.iter().map(|&v| g.inverse(v)).collect(),
        fine_values: sp.fine_values.iter().map(|&v| g.inverse(v)).collect(),
        divergent: sp.divergent,
    }
}

/// Riemann measure of times where the continuous scheme and its last grid
/// value sit on opposite sides of `xi`.
#[derive(Debug, Clone, Copy)]
pub struct OccupationStat {
    pub xi: f64,
    /// Fraction of `[0, 1]` occupied by sign changes, in `[0, 1]`.
    pub measure: f64,
    pub n: usize,
    pub n_ref: usize,
}

/// Counts reference times `t = j / n_ref` with
/// `(X(t) - xi) * (X(floor(t)_n) - xi) <= 0`, as a right-endpoint Riemann
/// sum over `(0, 1]`. Ties count: a grid value exactly at `xi` makes its
/// whole step fire. The step index is recovered by integer arithmetic, so
/// no reference time is misattributed across a step boundary.
pub fn sign_change_occupation(sp: &SchemePath, xi: f64) -> OccupationStat {
    let count = (1..=sp.n_ref)
        .filter(|&j| {
            let i = j * sp.n / sp.n_ref;
            (sp.fine_values[j] - xi) * (sp.grid_values[i] - xi) <= 0.0
        })
        .count();
    OccupationStat {
        xi,
        measure: count as f64 / sp.n_ref as f64,
        n: sp.n,
        n_ref: sp.n_ref,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::sample_path;
    use crate::presets;
    use crate::sde_model::{GrowthParams, SdeProblem};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn custom(
        x0: f64,
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
        ell_mu: f64,
    ) -> SdeProblem {
        SdeProblem::new(
            x0,
            Arc::new(drift),
            Arc::new(diffusion),
            vec![],
            GrowthParams::new(ell_mu, 0.0, 15.0, 3.0).unwrap(),
            "custom",
        )
        .unwrap()
    }

    #[test]
    fn tamed_drift_at_zero_is_untamed() {
        let p = custom(0.0, |_| 5.0, |_| 1.0, 2.0);
        assert_eq!(tamed_drift(&p, 64, 0.0), 5.0);
    }

    #[test]
    fn tamed_drift_hand_value() {
        let p = custom(0.0, |x| -x * x * x, |_| 1.0, 2.0);
        let v = tamed_drift(&p, 4, 2.0);
        assert!((v - (-8.0 / 3.0)).abs() < 1e-15, "got {v}");
    }

    #[test]
    fn taming_never_amplifies() {
        let p = presets::by_name("cubic_jump").unwrap().problem();
        for e in 0..=20u32 {
            let n = 1usize << e;
            for j in 0..500 {
                let x = -1000.0 + 2000.0 * j as f64 / 499.0;
                assert!(tamed_drift(&p, n, x).abs() <= p.mu(x).abs() + 1e-300);
                assert!(tamed_diffusion(&p, n, x).abs() <= p.sigma(x).abs() + 1e-300);
            }
        }
    }

    #[test]
    fn zero_coefficients_give_constant_path() {
        let p = custom(1.5, |_| 0.0, |_| 0.0, 2.0);
        let path = sample_path(3, 0, 64).unwrap();
        let sp = tamed_euler_path(&p, 8, &path).unwrap();
        assert!(sp.fine_values().iter().all(|&v| v == 1.5));
        assert!(sp.grid_values().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn single_step_matches_closed_form() {
        let p = presets::by_name("cubic_jump").unwrap().problem();
        let path = sample_path(11, 4, 8).unwrap();
        let sp = tamed_euler_path(&p, 1, &path).unwrap();
        let x0 = p.x0();
        let expected = x0 + tamed_drift(&p, 1, x0) * 1.0 + tamed_diffusion(&p, 1, x0) * path.value_at(8);
        assert_eq!(sp.grid_values()[1], expected);
    }

    #[test]
    fn two_step_deterministic_recursion() {
        let p = custom(0.0, |_| 1.0, |_| 0.0, 2.0);
        let path = sample_path(9, 0, 4).unwrap();
        let sp = tamed_euler_path(&p, 2, &path).unwrap();
        // First step from 0: denominator 1, so X(1/2) = 1/2.
        assert_eq!(sp.grid_values()[1], 0.5);
        let d = 1.0 + 0.25 / 2.0f64.sqrt();
        let expected = 0.5 + 0.5 / d;
        assert!((sp.grid_values()[2] - expected).abs() < 1e-15);
    }

    #[test]
    fn fine_values_match_grid_bitwise() {
        let p = presets::by_name("cubic_jump").unwrap().problem();
        let path = sample_path(21, 7, 1024).unwrap();
        let sp = tamed_euler_path(&p, 32, &path).unwrap();
        let step = 1024 / 32;
        for i in 0..=32 {
            assert_eq!(
                sp.fine_values()[i * step].to_bits(),
                sp.grid_values()[i].to_bits()
            );
        }
        assert_eq!(sp.fine_values()[0], p.x0());
    }

    #[test]
    fn grid_recursion_uses_coarsened_increments() {
        let p = presets::by_name("ginzburg_landau").unwrap().problem();
        let path = sample_path(13, 1, 256).unwrap();
        let n = 16;
        let sp = tamed_euler_path(&p, n, &path).unwrap();
        let dw = path.coarsen(n).unwrap();
        let mut x = p.x0();
        for i in 0..n {
            let expected = x + tamed_drift(&p, n, x) / n as f64 + tamed_diffusion(&p, n, x) * dw[i];
            assert_eq!(sp.grid_values()[i + 1].to_bits(), expected.to_bits());
            x = expected;
        }
    }

    #[test]
    fn interpolation_nodes_and_midpoints() {
        let p = presets::by_name("cubic_jump").unwrap().problem();
        let path = sample_path(5, 0, 64).unwrap();
        let sp = tamed_euler_path(&p, 8, &path).unwrap();
        let interp = linear_interp_path(&sp);
        assert_eq!(interp.len(), 65);
        let step = 64 / 8;
        for i in 0..=8 {
            assert_eq!(interp[i * step], sp.grid_values()[i]);
        }
        for i in 0..8 {
            let mid = interp[i * step + step / 2];
            let avg = 0.5 * sp.grid_values()[i] + 0.5 * sp.grid_values()[i + 1];
            assert!((mid - avg).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolation_of_constant_grid_is_constant() {
        let p = custom(2.0, |_| 0.0, |_| 0.0, 2.0);
        let path = sample_path(5, 0, 32).unwrap();
        let sp = tamed_euler_path(&p, 4, &path).unwrap();
        assert!(linear_interp_path(&sp).iter().all(|&v| v == 2.0));
    }

    #[test]
    fn transformed_scheme_reduces_to_plain_without_breakpoints() {
        use crate::transform::TransformedProblem;
        let p = presets::by_name("gbm").unwrap().problem();
        let tp = TransformedProblem::new(p.clone(), 0.5).unwrap();
        let path = sample_path(77, 2, 512).unwrap();
        let plain = tamed_euler_path(&p, 16, &path).unwrap();
        let transformed = transformed_scheme_path(&tp, 16, &path).unwrap();
        assert_eq!(plain.fine_values(), transformed.fine_values());
    }

    #[test]
    fn transformed_scheme_starts_at_z0_and_pulls_back() {
        use crate::transform::TransformedProblem;
        let p = presets::by_name("cubic_jump").unwrap().problem();
        let tp = TransformedProblem::new(p.clone(), 0.5).unwrap();
        let path = sample_path(77, 2, 256).unwrap();
        let sp = transformed_scheme_path(&tp, 16, &path).unwrap();
        assert_eq!(sp.fine_values()[0], tp.z0());
        let pulled = pullback_path(tp.transform(), &sp);
        assert!((pulled.fine_values()[0] - p.x0()).abs() <= 1e-10);
    }

    #[test]
    fn divergence_guard_flags_and_freezes() {
        // exp growth outpaces the polynomial taming denominator, so the
        // guard must fire instead of leaking infinities.
        let p = custom(10.0, |x: f64| x.exp(), |_| 0.0, 1.0);
        let path = sample_path(1, 0, 64).unwrap();
        let sp = tamed_euler_path(&p, 4, &path).unwrap();
        assert!(sp.is_divergent());
        assert_eq!(sp.fine_values().len(), 65);
        assert_eq!(sp.grid_values().len(), 5);
        assert!(sp.fine_values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn occupation_zero_when_path_stays_above() {
        let sp = SchemePath {
            n: 2,
            n_ref: 4,
            grid_values: vec![5.0, 6.0, 7.0],
            fine_values: vec![5.0, 5.5, 6.0, 6.5, 7.0],
            divergent: false,
        };
        assert_eq!(sign_change_occupation(&sp, 1.0).measure, 0.0);
    }

    #[test]
    fn occupation_full_step_when_grid_hits_xi() {
        // Grid value at step 1 sits exactly on xi, so both reference times
        // attributed to that step fire under the tie convention.
        let sp = SchemePath {
            n: 2,
            n_ref: 4,
            grid_values: vec![5.0, 1.0, 6.0],
            fine_values: vec![5.0, 5.0, 1.0, 3.0, 6.0],
            divergent: false,
        };
        let stat = sign_change_occupation(&sp, 1.0);
        assert_eq!(stat.measure, 0.5);
    }

    #[test]
    fn occupation_matches_brute_force_enumeration() {
        let sp = SchemePath {
            n: 2,
            n_ref: 4,
            grid_values: vec![2.0, -1.0, 3.0],
            fine_values: vec![2.0, 0.5, -1.0, 1.5, 3.0],
            divergent: false,
        };
        let xi = 1.0;
        // Brute force over j = 1..4 with plain floor arithmetic.
        let mut count = 0;
        for j in 1..=4usize {
            let i = (j as f64 * 2.0 / 4.0).floor() as usize;
            if (sp.fine_values[j] - xi) * (sp.grid_values[i] - xi) <= 0.0 {
                count += 1;
            }
        }
        let stat = sign_change_occupation(&sp, xi);
        assert_eq!(stat.measure, count as f64 / 4.0);
        assert!(stat.measure > 0.0);
    }

    #[test]
    fn occupation_zero_for_separated_random_paths() {
        // Strong inward drift far from xi: no crossings, measure 0.
        let p = custom(8.0, |x| -(x - 8.0), |_| 0.01, 2.0);
        for m in 0..100 {
            let path = sample_path(31, m, 256).unwrap();
            let sp = tamed_euler_path(&p, 16, &path).unwrap();
            let stat = sign_change_occupation(&sp, 0.0);
            let min_dist = sp
                .fine_values()
                .iter()
                .map(|v| (v - 0.0).abs())
                .fold(f64::INFINITY, f64::min);
            if min_dist > 0.0 {
                assert_eq!(stat.measure, 0.0, "path {m}");
            }
        }
    }

    proptest! {
        #[test]
        fn tamed_magnitude_bounds_sampled(n_exp in 0u32..20, x in -1000.0f64..1000.0) {
            let p = presets::by_name("cubic_jump").unwrap().problem();
            let n = 1usize << n_exp;
            let mu_n = tamed_drift(&p, n, x);
            let sigma_n = tamed_diffusion(&p, n, x);
            prop_assert!(mu_n.abs() <= p.mu(x).abs());
            prop_assert!(sigma_n.abs() <= p.sigma(x).abs());
            // Lemma-style cap: |mu_n| <= c sqrt(n) (1 + |x|) with c from
            // the preset's polynomial bound |mu| <= 2 (1 + |x|^3).
            let cap = 2.0 * (n as f64).sqrt() * (1.0 + x.abs());
            prop_assert!(mu_n.abs() <= cap);
        }
    }
}
