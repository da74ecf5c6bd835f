//! The kink-removing transformation.
//!
//! Around each drift breakpoint `xi_i` the map adds a localized quadratic
//! kink, `G(x) = x + sum_i alpha_i (x - xi_i)|x - xi_i| phi((x - xi_i)/nu)`,
//! where `phi(x) = (1 - x^2)^4` on `[-1, 1]` and zero outside. The jump
//! weights `alpha_i = (mu(xi_i-) - mu(xi_i+)) / (2 sigma^2(xi_i))` are chosen
//! so that the transformed drift `(G' mu + G'' sigma^2 / 2) o G^{-1}` is
//! continuous: the second-derivative jump of `G` at `xi_i` cancels the drift
//! jump exactly. `G` fixes every breakpoint, is the identity outside
//! `[xi_1 - nu, xi_k + nu]`, and is strictly increasing with derivative
//! bounded away from zero whenever `nu` stays below the admissible radius
//! `rho` (see [`compute_rho`]), so it has a globally Lipschitz inverse.

use crate::error::{Error, Result};
use crate::sde_model::{GrowthParams, SdeProblem};

/// Quartic bump weight `(1 - x^2)^4` on `[-1, 1]`, zero outside.
pub fn bump_phi(x: f64) -> f64 {
    if x.abs() > 1.0 {
        return 0.0;
    }
    let w = 1.0 - x * x;
    w * w * w * w
}

/// First derivative of [`bump_phi`]: `-8 x (1 - x^2)^3` on `[-1, 1]`.
pub fn bump_phi_d1(x: f64) -> f64 {
    if x.abs() > 1.0 {
        return 0.0;
    }
    let w = 1.0 - x * x;
    -8.0 * x * w * w * w
}

/// Second derivative of [`bump_phi`]: `8 (1 - x^2)^2 (7 x^2 - 1)` on `[-1, 1]`.
pub fn bump_phi_d2(x: f64) -> f64 {
    if x.abs() > 1.0 {
        return 0.0;
    }
    let w = 1.0 - x * x;
    8.0 * w * w * (7.0 * x * x - 1.0)
}

/// Jump weights `alpha_i = (mu(xi_i-) - mu(xi_i+)) / (2 sigma^2(xi_i))`.
///
/// Fails with a degeneracy error naming the breakpoint when the diffusion
/// vanishes there.
pub fn compute_alpha(problem: &SdeProblem) -> Result<Vec<f64>> {
    problem
        .breakpoints()
        .iter()
        .map(|bp| {
            let s = problem.sigma(bp.xi);
            if s == 0.0 {
                return Err(Error::DegenerateDiffusion { xi: bp.xi });
            }
            Ok((bp.mu_left - bp.mu_right) / (2.0 * s * s))
        })
        .collect()
}

/// Admissible bump radius for breakpoints `z` and weights `alpha`.
///
/// For one breakpoint this is `1 / (8 |alpha_1|)`; for several it is the
/// minimum of all `1 / (8 |alpha_i|)` and all half-gaps
/// `(z_i - z_{i-1}) / 2`. Division by zero yields infinity, so the result
/// is infinite exactly when every weight vanishes and there is at most one
/// breakpoint.
pub fn compute_rho(z: &[f64], alpha: &[f64]) -> Result<f64> {
    if z.len() != alpha.len() {
        return Err(Error::LengthMismatch {
            left: z.len(),
            right: alpha.len(),
        });
    }
    for w in z.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::UnorderedBreakpoints);
        }
    }
    let mut rho = f64::INFINITY;
    for &a in alpha {
        rho = rho.min(1.0 / (8.0 * a.abs()));
    }
    for w in z.windows(2) {
        rho = rho.min((w[1] - w[0]) / 2.0);
    }
    Ok(rho)
}

/// Per-breakpoint data cached at build time: the kink location and weight,
/// the one-sided drift limits, the drift and diffusion values at the point,
/// and the extended second derivative used exactly at the kink. The
/// coefficient values are kept so a built transform is self-contained.
#[derive(Debug, Clone, Copy)]
#[allow(dead_code)]
struct Kink {
    xi: f64,
    alpha: f64,
    mu_left: f64,
    mu_right: f64,
    mu_at: f64,
    sigma_at: f64,
    /// Value assigned to `G''` exactly at `xi`.
    d2_at: f64,
}

/// The piecewise-smooth increasing bijection described in the module docs.
///
/// Immutable after construction; all evaluations are pure.
#[derive(Debug, Clone)]
pub struct TransformG {
    kinks: Vec<Kink>,
    nu: f64,
    rho: f64,
    deriv_bounds: (f64, f64),
}

/// Default relative tolerance of the numeric inverse.
pub const INVERSE_TOL: f64 = 1e-12;

const BISECT_ITERS: usize = 50;
const NEWTON_ITERS: usize = 3;

impl TransformG {
    /// The identity transform (no breakpoints).
    pub fn identity() -> Self {
        Self {
            kinks: Vec::new(),
            nu: 1.0,
            rho: f64::INFINITY,
            deriv_bounds: (1.0, 1.0),
        }
    }

    /// Builds a transform from raw breakpoints, weights, and radius,
    /// without coefficient data. The second derivative exactly at a
    /// breakpoint is set to the right-hand limit `2 alpha_i`.
    pub fn from_parts(xi: &[f64], alpha: &[f64], nu: f64) -> Result<Self> {
        let rho = compute_rho(xi, alpha)?;
        if xi.is_empty() {
            return Ok(Self::identity());
        }
        if !(nu > 0.0 && nu < rho) {
            return Err(Error::InvalidParameter(format!(
                "nu must lie in (0, rho) = (0, {rho}), got {nu}"
            )));
        }
        let kinks = xi
            .iter()
            .zip(alpha)
            .map(|(&x, &a)| Kink {
                xi: x,
                alpha: a,
                mu_left: 0.0,
                mu_right: 0.0,
                mu_at: 0.0,
                sigma_at: 0.0,
                d2_at: 2.0 * a,
            })
            .collect();
        Self::finish(kinks, nu, rho)
    }

    fn finish(kinks: Vec<Kink>, nu: f64, rho: f64) -> Result<Self> {
        let mut g = Self {
            kinks,
            nu,
            rho,
            deriv_bounds: (1.0, 1.0),
        };
        g.deriv_bounds = g.sample_deriv_bounds();
        if !(g.deriv_bounds.0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "transform derivative not positive on sample: inf G' = {}",
                g.deriv_bounds.0
            )));
        }
        for k in &g.kinks {
            if (g.eval(k.xi) - k.xi).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "transform does not fix breakpoint {}",
                    k.xi
                )));
            }
        }
        Ok(g)
    }

    fn sample_deriv_bounds(&self) -> (f64, f64) {
        let mut lo = 1.0f64;
        let mut hi = 1.0f64;
        const M: usize = 2001;
        for k in &self.kinks {
            for j in 0..M {
                let s = -1.0 + 2.0 * j as f64 / (M - 1) as f64;
                let d = self.deriv(k.xi + s * self.nu);
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        (lo, hi)
    }

    pub fn breakpoint_count(&self) -> usize {
        self.kinks.len()
    }

    pub fn xi(&self) -> Vec<f64> {
        self.kinks.iter().map(|k| k.xi).collect()
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.kinks.iter().map(|k| k.alpha).collect()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Sampled `(inf G', sup G')` over the real line.
    pub fn deriv_bounds(&self) -> (f64, f64) {
        self.deriv_bounds
    }

    /// Evaluates `G(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let mut sum = 0.0;
        for k in &self.kinks {
            let u = x - k.xi;
            if u.abs() <= self.nu {
                sum += k.alpha * u * u.abs() * bump_phi(u / self.nu);
            }
        }
        x + sum
    }

    /// Evaluates `G'(x)`.
    pub fn deriv(&self, x: f64) -> f64 {
        let mut sum = 0.0;
        for k in &self.kinks {
            let u = x - k.xi;
            if u.abs() <= self.nu {
                let s = u / self.nu;
                sum += k.alpha
                    * (2.0 * u.abs() * bump_phi(s) + u * u.abs() * bump_phi_d1(s) / self.nu);
            }
        }
        1.0 + sum
    }

    /// Evaluates `G''(x)`. Exactly at a breakpoint the stored extension
    /// value is returned (the one-sided limits there are `-2 alpha_i` from
    /// the left and `+2 alpha_i` from the right).
    pub fn second_deriv(&self, x: f64) -> f64 {
        let mut sum = 0.0;
        for k in &self.kinks {
            if x == k.xi {
                return k.d2_at;
            }
            let u = x - k.xi;
            if u.abs() <= self.nu {
                let s = u / self.nu;
                let nu = self.nu;
                sum += k.alpha
                    * (2.0 * u.signum() * bump_phi(s)
                        + 4.0 * u.abs() * bump_phi_d1(s) / nu
                        + u * u.abs() * bump_phi_d2(s) / (nu * nu));
            }
        }
        sum
    }

    /// Inverts `G` with the default tolerance [`INVERSE_TOL`].
    pub fn inverse(&self, y: f64) -> f64 {
        self.inverse_with_tol(y, INVERSE_TOL)
            .expect("positive tolerance")
    }

    /// Solves `G(x) = y` to `|G(x) - y| <= tol * max(1, |y|)`.
    ///
    /// `G` is the identity outside the kink neighbourhoods, and every
    /// breakpoint is a fixed point, so those cases return `y` exactly.
    /// Otherwise the containing neighbourhood `[xi_i - nu, xi_i + nu]`
    /// brackets the root and bisection followed by a few Newton steps
    /// converges; termination is guaranteed by strict monotonicity.
    pub fn inverse_with_tol(&self, y: f64, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "inverse tolerance must be > 0, got {tol}"
            )));
        }
        let mut bracket = None;
        for k in &self.kinks {
            if y == k.xi {
                return Ok(y);
            }
            if (y - k.xi).abs() < self.nu {
                bracket = Some((k.xi - self.nu, k.xi + self.nu));
                break;
            }
        }
        let (mut lo, mut hi) = match bracket {
            // G is the identity here: either off the band entirely or in a
            // gap between kink neighbourhoods.
            None => return Ok(y),
            Some(b) => b,
        };
        let target = tol * f64::max(1.0, y.abs());
        let mut x = 0.5 * (lo + hi);
        for _ in 0..BISECT_ITERS {
            let f = self.eval(x) - y;
            if f.abs() <= target {
                return Ok(x);
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            x = 0.5 * (lo + hi);
        }
        for _ in 0..NEWTON_ITERS {
            let f = self.eval(x) - y;
            if f.abs() <= target {
                return Ok(x);
            }
            x = (x - f / self.deriv(x)).clamp(lo, hi);
        }
        // Monotone bracketing cannot stall: resume bisection until the
        // residual is below target.
        for _ in 0..4 * BISECT_ITERS {
            let f = self.eval(x) - y;
            if f.abs() <= target {
                return Ok(x);
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            x = 0.5 * (lo + hi);
        }
        Ok(x)
    }
}

/// Builds the transform for a problem with `nu = nu_fraction * rho`
/// (clamped to 1 when `rho` is infinite). The extended second derivative
/// at each breakpoint is `2 alpha_i + 2 (mu(xi_i+) - mu(xi_i)) / sigma^2(xi_i)`,
/// the value that makes the transformed drift continuous through the kink.
pub fn build_transform(problem: &SdeProblem, nu_fraction: f64) -> Result<TransformG> {
    if !(nu_fraction > 0.0 && nu_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "nu_fraction must lie in (0, 1), got {nu_fraction}"
        )));
    }
    if problem.breakpoints().is_empty() {
        return Ok(TransformG::identity());
    }
    let alpha = compute_alpha(problem)?;
    let xi: Vec<f64> = problem.breakpoints().iter().map(|b| b.xi).collect();
    let rho = compute_rho(&xi, &alpha)?;
    let nu = if rho.is_finite() {
        nu_fraction * rho
    } else {
        1.0
    };
    let kinks = problem
        .breakpoints()
        .iter()
        .zip(&alpha)
        .map(|(bp, &a)| {
            let s = problem.sigma(bp.xi);
            Kink {
                xi: bp.xi,
                alpha: a,
                mu_left: bp.mu_left,
                mu_right: bp.mu_right,
                mu_at: bp.mu_at,
                sigma_at: s,
                d2_at: 2.0 * a + 2.0 * (bp.mu_right - bp.mu_at) / (s * s),
            }
        })
        .collect();
    TransformG::finish(kinks, nu, rho)
}

/// A problem together with its transform: the process `Z = G(X)` solves
/// an equation with continuous coefficients
/// `tilde_mu = (G' mu + G'' sigma^2 / 2) o G^{-1}` and
/// `tilde_sigma = (G' sigma) o G^{-1}`, started at `z0 = G(x0)`.
#[derive(Debug, Clone)]
pub struct TransformedProblem {
    base: SdeProblem,
    g: TransformG,
    z0: f64,
    tilde_growth: GrowthParams,
}

impl TransformedProblem {
    /// Builds the transform for `problem` and records `z0 = G(x0)`.
    /// The transformed coefficients keep the growth exponents of the base.
    pub fn new(problem: SdeProblem, nu_fraction: f64) -> Result<Self> {
        let g = build_transform(&problem, nu_fraction)?;
        let z0 = g.eval(problem.x0());
        let tilde_growth = *problem.growth();
        Ok(Self {
            base: problem,
            g,
            z0,
            tilde_growth,
        })
    }

    pub fn base(&self) -> &SdeProblem {
        &self.base
    }

    pub fn transform(&self) -> &TransformG {
        &self.g
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn tilde_growth(&self) -> &GrowthParams {
        &self.tilde_growth
    }

    /// Evaluates `(tilde_mu(y), tilde_sigma(y))`.
    pub fn coefficients(&self, y: f64) -> (f64, f64) {
        let x = self.g.inverse(y);
        let gp = self.g.deriv(x);
        let gs = self.g.second_deriv(x);
        let mu = self.base.mu(x);
        let sigma = self.base.sigma(x);
        (gp * mu + 0.5 * gs * sigma * sigma, gp * sigma)
    }
}

/// One named deviation check with its tolerance.
#[derive(Debug, Clone, Copy)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub max_deviation: f64,
    pub tolerance: f64,
}

impl InvariantCheck {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

/// Offsets (as fractions of `nu`) used for derivative spot checks inside a
/// kink neighbourhood, clear of the kink itself and the bump edges.
const FD_OFFSETS: [f64; 10] = [-0.86, -0.63, -0.41, -0.22, -0.08, 0.08, 0.22, 0.41, 0.63, 0.86];

fn fd_point_admissible(g: &TransformG, x: f64) -> bool {
    for k in &g.kinks {
        for special in [k.xi, k.xi - g.nu, k.xi + g.nu] {
            if (x - special).abs() < 1e-3 {
                return false;
            }
        }
    }
    true
}

/// Deviation suite for a bare transform: fixed points, identity off the
/// band, unit derivative at breakpoints, inverse round trips, finite
/// difference consistency of both derivatives, one-sided second-derivative
/// limits, and strict monotonicity on a sample.
pub fn transform_invariant_checks(g: &TransformG) -> Vec<InvariantCheck> {
    let mut out = Vec::new();
    let xi = g.xi();
    let alpha = g.alpha();

    let fixed = xi
        .iter()
        .map(|&x| (g.eval(x) - x).abs())
        .fold(0.0, f64::max);
    out.push(InvariantCheck {
        name: "fixed_points",
        max_deviation: fixed,
        tolerance: 1e-12,
    });

    let mut identity_dev = 0.0f64;
    if let (Some(&first), Some(&last)) = (xi.first(), xi.last()) {
        for off in [0.0, 0.25, 1.0, 3.5, 20.0] {
            let left = first - g.nu - off;
            let right = last + g.nu + off;
            identity_dev = identity_dev.max((g.eval(left) - left).abs());
            identity_dev = identity_dev.max((g.eval(right) - right).abs());
        }
    }
    out.push(InvariantCheck {
        name: "identity_off_band",
        max_deviation: identity_dev,
        tolerance: 0.0,
    });

    let unit = xi
        .iter()
        .map(|&x| (g.deriv(x) - 1.0).abs())
        .fold(0.0, f64::max);
    out.push(InvariantCheck {
        name: "unit_derivative_at_breakpoints",
        max_deviation: unit,
        tolerance: 1e-12,
    });

    let mut roundtrip = 0.0f64;
    if let (Some(&first), Some(&last)) = (xi.first(), xi.last()) {
        let lo = first - 2.0 * g.nu;
        let hi = last + 2.0 * g.nu;
        const M: usize = 2000;
        for j in 0..=M {
            let x = lo + (hi - lo) * j as f64 / M as f64;
            roundtrip = roundtrip.max((g.inverse(g.eval(x)) - x).abs());
        }
    }
    out.push(InvariantCheck {
        name: "inverse_round_trip",
        max_deviation: roundtrip,
        tolerance: 1e-10,
    });

    let mut d1_dev = 0.0f64;
    let mut d2_dev = 0.0f64;
    for &x0 in &xi {
        for &f in &FD_OFFSETS {
            let x = x0 + f * g.nu;
            if !fd_point_admissible(g, x) {
                continue;
            }
            let h1 = 1e-5;
            let fd1 = (g.eval(x + h1) - g.eval(x - h1)) / (2.0 * h1);
            let d1 = g.deriv(x);
            d1_dev = d1_dev.max((fd1 - d1).abs() / f64::max(1.0, d1.abs()));
            // Smaller step here: the fourth derivative scales like 1/nu^2
            // and dominates the truncation error of this difference.
            let h2 = 5e-7;
            let fd2 = (g.deriv(x + h2) - g.deriv(x - h2)) / (2.0 * h2);
            let d2 = g.second_deriv(x);
            d2_dev = d2_dev.max((fd2 - d2).abs() / f64::max(1.0, d2.abs()));
        }
    }
    out.push(InvariantCheck {
        name: "first_derivative_fd",
        max_deviation: d1_dev,
        tolerance: 1e-6,
    });
    out.push(InvariantCheck {
        name: "second_derivative_fd",
        max_deviation: d2_dev,
        tolerance: 1e-6,
    });

    let h = 1e-6;
    let one_sided = xi
        .iter()
        .zip(&alpha)
        .map(|(&x, &a)| {
            let left = (g.second_deriv(x - h) + 2.0 * a).abs();
            let right = (g.second_deriv(x + h) - 2.0 * a).abs();
            left.max(right)
        })
        .fold(0.0, f64::max);
    out.push(InvariantCheck {
        name: "second_derivative_one_sided_limits",
        max_deviation: one_sided,
        tolerance: 1e-4,
    });

    let mut mono_dev = 0.0f64;
    if let (Some(&first), Some(&last)) = (xi.first(), xi.last()) {
        let lo = first - 1.5 * g.nu;
        let hi = last + 1.5 * g.nu;
        const M: usize = 4000;
        let mut prev = g.eval(lo);
        for j in 1..=M {
            let x = lo + (hi - lo) * j as f64 / M as f64;
            let v = g.eval(x);
            mono_dev = mono_dev.max(prev - v);
            prev = v;
        }
    }
    out.push(InvariantCheck {
        name: "strict_monotonicity",
        max_deviation: mono_dev,
        tolerance: 0.0,
    });

    out
}

/// Deviation suite for the transformed coefficients of a problem: the
/// transformed drift approaches the average of the one-sided drift limits
/// at each breakpoint, and equals it exactly at the breakpoint.
pub fn transformed_problem_checks(tp: &TransformedProblem) -> Vec<InvariantCheck> {
    let mut near = 0.0f64;
    let mut at = 0.0f64;
    let h = 1e-6;
    for bp in tp.base().breakpoints() {
        let mid = 0.5 * (bp.mu_left + bp.mu_right);
        for y in [bp.xi - h, bp.xi + h] {
            near = near.max((tp.coefficients(y).0 - mid).abs());
        }
        at = at.max((tp.coefficients(bp.xi).0 - mid).abs());
    }
    vec![
        InvariantCheck {
            name: "transformed_drift_midpoint_near_kinks",
            max_deviation: near,
            tolerance: 1e-3,
        },
        InvariantCheck {
            name: "transformed_drift_midpoint_at_kinks",
            max_deviation: at,
            tolerance: 1e-12,
        },
    ]
}
