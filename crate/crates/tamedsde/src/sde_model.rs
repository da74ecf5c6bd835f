//! Scalar SDE problems `dX_t = mu(X_t) dt + sigma(X_t) dW_t` on the unit
//! time horizon, where the drift may jump at finitely many points and both
//! coefficients may grow superlinearly.
//!
//! A problem carries its drift discontinuities as explicit [`Breakpoint`]
//! records with exact one-sided limits, plus growth/moment parameters that
//! control taming and the admissible error-moment range. The numeric
//! assumption checker in [`check_assumptions`] fits the smallest constants
//! that make the coercivity, piecewise monotonicity, and polynomial
//! Lipschitz-growth inequalities hold on a sample; it is a diagnostic
//! surrogate, never a proof.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// A scalar coefficient evaluator. Must be pure: same input, same output.
pub type Coeff = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Growth and moment-order parameters of a problem.
///
/// `ell_mu` bounds the polynomial growth of the drift's local Lipschitz
/// constant, `ell_sigma` the diffusion's; `p0` is the coercivity moment
/// order and `p1` the piecewise monotonicity order. The derived exponent
/// `kappa = ell_mu + max(ell_mu, 2 ell_sigma + 2) + 1` caps the admissible
/// error-moment range together with `p0` and `p1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthParams {
    ell_mu: f64,
    ell_sigma: f64,
    p0: f64,
    p1: f64,
    kappa: f64,
}

impl GrowthParams {
    /// Validates and builds the parameter set.
    ///
    /// Requires `ell_mu > 0` (the zero case reduces to the classical
    /// piecewise Lipschitz setting and is deliberately not supported),
    /// `0 <= ell_sigma <= ell_mu / 2`, and `p0, p1 >= 2`.
    pub fn new(ell_mu: f64, ell_sigma: f64, p0: f64, p1: f64) -> Result<Self> {
        if !(ell_mu.is_finite() && ell_mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ell_mu must be finite and > 0, got {ell_mu}"
            )));
        }
        if !(ell_sigma.is_finite() && (0.0..=ell_mu / 2.0).contains(&ell_sigma)) {
            return Err(Error::InvalidParameter(format!(
                "ell_sigma must lie in [0, ell_mu/2] = [0, {}], got {ell_sigma}",
                ell_mu / 2.0
            )));
        }
        for (name, v) in [("p0", p0), ("p1", p1)] {
            if !(v.is_finite() && v >= 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 2, got {v}"
                )));
            }
        }
        let kappa = ell_mu + f64::max(ell_mu, 2.0 * ell_sigma + 2.0) + 1.0;
        Ok(Self {
            ell_mu,
            ell_sigma,
            p0,
            p1,
            kappa,
        })
    }

    pub fn ell_mu(&self) -> f64 {
        self.ell_mu
    }

    pub fn ell_sigma(&self) -> f64 {
        self.ell_sigma
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    /// `ell_mu + max(ell_mu, 2 ell_sigma + 2) + 1`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// A drift discontinuity at `xi` with exact one-sided limits.
///
/// The limits are user-supplied data, not numerical estimates: the jump
/// weights of the kink-removing transformation are computed from them and
/// must be exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    /// Location of the discontinuity.
    pub xi: f64,
    /// Left limit of the drift at `xi`.
    pub mu_left: f64,
    /// Right limit of the drift at `xi`.
    pub mu_right: f64,
    /// Value the drift evaluator takes exactly at `xi`.
    pub mu_at: f64,
}

impl Breakpoint {
    pub fn new(xi: f64, mu_left: f64, mu_right: f64, mu_at: f64) -> Self {
        Self {
            xi,
            mu_left,
            mu_right,
            mu_at,
        }
    }
}

/// A scalar SDE problem on the unit time horizon.
///
/// Immutable after construction; coefficient evaluators must be pure and
/// are called from concurrent Monte Carlo workers.
#[derive(Clone)]
pub struct SdeProblem {
    x0: f64,
    drift: Coeff,
    diffusion: Coeff,
    breakpoints: Vec<Breakpoint>,
    growth: GrowthParams,
    label: String,
}

impl fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProblem")
            .field("label", &self.label)
            .field("x0", &self.x0)
            .field("breakpoints", &self.breakpoints)
            .field("growth", &self.growth)
            .finish()
    }
}

impl SdeProblem {
    /// Builds a problem, enforcing strictly increasing breakpoints and
    /// finite one-sided limits.
    pub fn new(
        x0: f64,
        drift: Coeff,
        diffusion: Coeff,
        breakpoints: Vec<Breakpoint>,
        growth: GrowthParams,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !x0.is_finite() {
            return Err(Error::NonFiniteInput(x0));
        }
        for w in breakpoints.windows(2) {
            if !(w[0].xi < w[1].xi) {
                return Err(Error::UnorderedBreakpoints);
            }
        }
        for bp in &breakpoints {
            if !(bp.xi.is_finite()
                && bp.mu_left.is_finite()
                && bp.mu_right.is_finite()
                && bp.mu_at.is_finite())
            {
                return Err(Error::NonFiniteInput(bp.xi));
            }
        }
        Ok(Self {
            x0,
            drift,
            diffusion,
            breakpoints,
            growth,
            label: label.into(),
        })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn growth(&self) -> &GrowthParams {
        &self.growth
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Drift value at `x`. At a breakpoint this is the stored `mu_at`,
    /// overriding whatever the raw evaluator would return.
    pub fn mu(&self, x: f64) -> f64 {
        for bp in &self.breakpoints {
            if x == bp.xi {
                return bp.mu_at;
            }
        }
        (self.drift)(x)
    }

    /// Diffusion value at `x`.
    pub fn sigma(&self, x: f64) -> f64 {
        (self.diffusion)(x)
    }

    /// Checked drift evaluation; rejects non-finite input.
    pub fn eval_drift(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFiniteInput(x));
        }
        Ok(self.mu(x))
    }

    /// One-sided drift limits `(mu(xi_i-), mu(xi_i+))` at breakpoint `i`
    /// (zero-based). These are the authoritative user-supplied limits.
    pub fn one_sided_limits(&self, i: usize) -> Result<(f64, f64)> {
        self.breakpoints
            .get(i)
            .map(|b| (b.mu_left, b.mu_right))
            .ok_or(Error::IndexOutOfRange {
                index: i,
                k: self.breakpoints.len(),
            })
    }
}

/// Sampling plan for [`check_assumptions`].
#[derive(Debug, Clone, Copy)]
pub struct SampleSpec {
    /// Left end of the sampled interval.
    pub lo: f64,
    /// Right end of the sampled interval.
    pub hi: f64,
    /// Number of single-point samples (coercivity check).
    pub points: usize,
    /// Number of sampled pairs per condition (monotonicity/Lipschitz checks).
    pub pairs: usize,
    /// Seed for the pair sampler.
    pub seed: u64,
    /// Fitted constants above this value are flagged as violations.
    pub threshold: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            lo: -10.0,
            hi: 10.0,
            points: 10_000,
            pairs: 10_000,
            seed: 0x5eed,
            threshold: 100.0,
        }
    }
}

/// A sampled inequality instance that exceeded the threshold.
#[derive(Debug, Clone, Copy)]
pub struct ViolationRecord {
    /// First sample point.
    pub x: f64,
    /// Second sample point for pairwise conditions.
    pub y: Option<f64>,
    /// Left-hand side of the inequality at the sample.
    pub lhs: f64,
    /// `threshold * rhs` the left-hand side was compared against.
    pub bound: f64,
}

/// Result of the sampled assumption check.
///
/// `fitted_constants` maps each condition name to the smallest constant
/// `c` that makes every sampled inequality instance hold; a value may be
/// negative or zero when the left-hand sides never come close to the
/// bound (any positive `c` then works). Violation lists hold the samples
/// whose required constant exceeded the threshold. The non-degeneracy
/// check at each breakpoint is exact, not sampled.
#[derive(Debug, Default)]
pub struct AssumptionReport {
    pub a1_violations: Vec<ViolationRecord>,
    pub a2i_violations: Vec<ViolationRecord>,
    pub a2ii_violations: Vec<ViolationRecord>,
    pub a3_violations: Vec<ViolationRecord>,
    pub a4_violations: Vec<ViolationRecord>,
    pub fitted_constants: BTreeMap<String, f64>,
}

impl AssumptionReport {
    pub fn is_clean(&self) -> bool {
        self.a1_violations.is_empty()
            && self.a2i_violations.is_empty()
            && self.a2ii_violations.is_empty()
            && self.a3_violations.is_empty()
            && self.a4_violations.is_empty()
    }
}

/// Numerically probes the standing assumptions on a sample grid.
///
/// Four inequalities are sampled: coercivity (`a1`,
/// `2 x mu(x) + (p0-1) sigma^2(x) <= c (1 + x^2)`) on a uniform grid over
/// `[lo, hi]`; the piecewise one-sided Lipschitz bound (`a2i`) and the
/// piecewise polynomial-growth Lipschitz bound for the drift (`a2ii`) on
/// random pairs drawn inside each open piece between breakpoints; and the
/// global polynomial-growth Lipschitz bound for the diffusion (`a3`) on
/// random pairs over the whole interval. For each, the report records the
/// smallest constant making all sampled instances hold, plus the samples
/// exceeding `spec.threshold`. Non-degeneracy of the diffusion at each
/// breakpoint (`a4`) is checked exactly.
pub fn check_assumptions(problem: &SdeProblem, spec: &SampleSpec) -> Result<AssumptionReport> {
    if spec.points == 0 || spec.pairs == 0 {
        return Err(Error::EmptySample);
    }
    if !(spec.lo.is_finite() && spec.hi.is_finite() && spec.lo < spec.hi) {
        return Err(Error::InvalidParameter(format!(
            "sample interval [{}, {}] is invalid",
            spec.lo, spec.hi
        )));
    }

    let g = problem.growth;
    let mut report = AssumptionReport::default();

    // a1: coercivity on a uniform grid.
    let mut c1 = f64::NEG_INFINITY;
    for j in 0..spec.points {
        let x = if spec.points == 1 {
            spec.lo
        } else {
            spec.lo + (spec.hi - spec.lo) * j as f64 / (spec.points - 1) as f64
        };
        let s = problem.sigma(x);
        let lhs = 2.0 * x * problem.mu(x) + (g.p0 - 1.0) * s * s;
        let rhs = 1.0 + x * x;
        c1 = c1.max(lhs / rhs);
        if lhs > spec.threshold * rhs {
            report.a1_violations.push(ViolationRecord {
                x,
                y: None,
                lhs,
                bound: spec.threshold * rhs,
            });
        }
    }
    report.fitted_constants.insert("a1".into(), c1);

    // Pieces between consecutive breakpoints, clipped to [lo, hi].
    let mut edges = vec![spec.lo];
    for bp in &problem.breakpoints {
        if bp.xi > spec.lo && bp.xi < spec.hi {
            edges.push(bp.xi);
        }
    }
    edges.push(spec.hi);
    let pieces: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let pairs_per_piece = (spec.pairs / pieces.len()).max(2);

    let mut c2i = f64::NEG_INFINITY;
    let mut c2ii = f64::NEG_INFINITY;
    for &(a, b) in &pieces {
        for _ in 0..pairs_per_piece {
            let x = a + rng.random::<f64>() * (b - a);
            let y = a + rng.random::<f64>() * (b - a);
            let d = x - y;
            if d.abs() < 1e-9 * (1.0 + x.abs() + y.abs()) {
                continue;
            }
            let (mx, my) = (problem.mu(x), problem.mu(y));
            let (sx, sy) = (problem.sigma(x), problem.sigma(y));

            let lhs_i = 2.0 * d * (mx - my) + (g.p1 - 1.0) * (sx - sy) * (sx - sy);
            let rhs_i = d * d;
            c2i = c2i.max(lhs_i / rhs_i);
            if lhs_i > spec.threshold * rhs_i {
                report.a2i_violations.push(ViolationRecord {
                    x,
                    y: Some(y),
                    lhs: lhs_i,
                    bound: spec.threshold * rhs_i,
                });
            }

            let lhs_ii = (mx - my).abs();
            let rhs_ii = (1.0 + x.abs().powf(g.ell_mu) + y.abs().powf(g.ell_mu)) * d.abs();
            c2ii = c2ii.max(lhs_ii / rhs_ii);
            if lhs_ii > spec.threshold * rhs_ii {
                report.a2ii_violations.push(ViolationRecord {
                    x,
                    y: Some(y),
                    lhs: lhs_ii,
                    bound: spec.threshold * rhs_ii,
                });
            }
        }
    }
    report.fitted_constants.insert("a2i".into(), c2i);
    report.fitted_constants.insert("a2ii".into(), c2ii);

    // a3: global diffusion Lipschitz bound on random pairs.
    let mut c3 = f64::NEG_INFINITY;
    for _ in 0..spec.pairs {
        let x = spec.lo + rng.random::<f64>() * (spec.hi - spec.lo);
        let y = spec.lo + rng.random::<f64>() * (spec.hi - spec.lo);
        let d = x - y;
        if d.abs() < 1e-9 * (1.0 + x.abs() + y.abs()) {
            continue;
        }
        let lhs = (problem.sigma(x) - problem.sigma(y)).abs();
        let rhs = (1.0 + x.abs().powf(g.ell_sigma) + y.abs().powf(g.ell_sigma)) * d.abs();
        c3 = c3.max(lhs / rhs);
        if lhs > spec.threshold * rhs {
            report.a3_violations.push(ViolationRecord {
                x,
                y: Some(y),
                lhs,
                bound: spec.threshold * rhs,
            });
        }
    }
    report.fitted_constants.insert("a3".into(), c3);

    // a4: exact non-degeneracy at each breakpoint.
    for bp in &problem.breakpoints {
        if problem.sigma(bp.xi) == 0.0 {
            report.a4_violations.push(ViolationRecord {
                x: bp.xi,
                y: None,
                lhs: 0.0,
                bound: 0.0,
            });
        }
    }

    Ok(report)
}
