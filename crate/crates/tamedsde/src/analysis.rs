//! Monte Carlo error estimation and empirical rate fitting.
//!
//! A study couples every discretization level to one fine reference
//! trajectory per path, all driven by the same Brownian increments, so the
//! per-level differences isolate discretization error. Per level the study
//! reports `E[error^p]^{1/p}` with a delta-method standard error, then fits
//! `log2(error)` against `log2(n)` by ordinary least squares; the reported
//! rate is the negated slope.

use rayon::prelude::*;

use crate::brownian::{sample_path, BrownianPath};
use crate::error::{Error, Result};
use crate::schemes::{
    linear_interp_path, pullback_path, sign_change_occupation, tamed_euler_path,
    transformed_scheme_path,
};
use crate::sde_model::{GrowthParams, SdeProblem};
use crate::transform::TransformedProblem;

/// Reference grid must be at least this multiple of the largest level.
pub const MIN_REF_MULTIPLIER: usize = 8;

/// How a per-path error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    /// Sup norm of the time-continuous scheme against the reference.
    SupContinuous,
    /// `L_q` norm (in time) of the piecewise linear interpolation against
    /// the reference; `q = inf` means the sup norm and the reported errors
    /// are divided by `sqrt(ln(n + 1))` to expose the log-corrected rate.
    PathwiseLq,
}

/// Error specification: outer moment order `p`, pathwise norm order `q`,
/// and the comparison mode.
#[derive(Debug, Clone, Copy)]
pub struct ErrorSpec {
    pub p: f64,
    pub q: f64,
    pub mode: ErrorMode,
}

impl ErrorSpec {
    pub fn new(p: f64, q: f64, mode: ErrorMode) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "moment order p must be finite and > 0, got {p}"
            )));
        }
        if !(q >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "norm order q must satisfy q >= 1 (inf allowed), got {q}"
            )));
        }
        Ok(Self { p, q, mode })
    }
}

/// Reference trajectory a study compares against.
#[derive(Debug, Clone, Copy)]
pub enum Reference {
    /// Tamed Euler on the full reference grid (self-reference).
    FineGrid,
    /// Closed-form solution for linear coefficients `a x`, `b x`.
    ExactGbm { a: f64, b: f64 },
    /// Transformed tamed Euler on the reference grid, mapped back through
    /// the inverse transform.
    TransformedPullback { nu_fraction: f64 },
}

impl Reference {
    pub fn label(&self) -> &'static str {
        match self {
            Reference::FineGrid => "fine_grid",
            Reference::ExactGbm { .. } => "exact_oracle",
            Reference::TransformedPullback { .. } => "transformed_pullback",
        }
    }
}

/// Per-level error statistics.
#[derive(Debug, Clone, Copy)]
pub struct LevelError {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    /// Paths that entered the average (divergent ones are excluded).
    pub paths_used: usize,
}

/// What a report measures.
#[derive(Debug, Clone, Copy)]
pub enum StudyKind {
    Convergence { spec: ErrorSpec, reference: Reference },
    Occupation { xi: f64, p: f64 },
}

/// Per-level error statistics plus the fitted log-log rate.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub levels: Vec<usize>,
    pub errors: Vec<LevelError>,
    /// Negated fitted slope of `log2(error)` vs `log2(n)`.
    pub rate: f64,
    pub rate_se: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub seed: u64,
    pub kind: StudyKind,
    pub flags: Vec<String>,
}

/// Open interval of moment orders `(0, min(p1, p0 / kappa))` for which the
/// rate statements apply. Requests outside it are legitimate exploration
/// and only flag the report.
pub fn admissible_p(growth: &GrowthParams) -> (f64, f64) {
    (0.0, f64::min(growth.p1(), growth.p0() / growth.kappa()))
}

/// Pathwise distance of `coarse` to `reference` on the reference grid.
///
/// `SupContinuous` and `q = inf` take the max of pointwise differences;
/// finite `q` takes a right-endpoint Riemann sum of `|diff|^q` over `(0,1]`.
pub fn pathwise_error(
    coarse: &[f64],
    reference: &[f64],
    spec: &ErrorSpec,
    n_ref: usize,
) -> Result<f64> {
    if coarse.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: coarse.len(),
            right: reference.len(),
        });
    }
    if coarse.len() != n_ref + 1 {
        return Err(Error::LengthMismatch {
            left: coarse.len(),
            right: n_ref + 1,
        });
    }
    let sup = || {
        coarse
            .iter()
            .zip(reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    match spec.mode {
        ErrorMode::SupContinuous => Ok(sup()),
        ErrorMode::PathwiseLq => {
            if spec.q.is_infinite() {
                Ok(sup())
            } else {
                let sum: f64 = (1..=n_ref)
                    .map(|j| (coarse[j] - reference[j]).abs().powf(spec.q))
                    .sum();
                Ok((sum / n_ref as f64).powf(1.0 / spec.q))
            }
        }
    }
}

/// Closed-form solution `x0 exp((a - b^2/2) t + b W_t)` at every reference
/// grid time.
pub fn exact_gbm(x0: f64, a: f64, b: f64, path: &BrownianPath) -> Vec<f64> {
    let n_ref = path.n_ref();
    let drift = a - 0.5 * b * b;
    (0..=n_ref)
        .map(|j| {
            let t = j as f64 / n_ref as f64;
            x0 * (drift * t + b * path.value_at(j)).exp()
        })
        .collect()
}

/// `(mean of |v|^p)^(1/p)`.
pub fn moment_estimate(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "moment order must be > 0, got {p}"
        )));
    }
    let mean = values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / values.len() as f64;
    Ok(mean.powf(1.0 / p))
}

/// `(E[v^p]^{1/p}, delta-method SE)` over nonnegative samples.
fn moment_with_se(values: &[f64], p: f64) -> (f64, f64) {
    let m = values.len() as f64;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for &v in values {
        let vp = v.abs().powf(p);
        sum += vp;
        sumsq += vp * vp;
    }
    let mean_p = sum / m;
    let est = mean_p.powf(1.0 / p);
    if mean_p <= 0.0 || values.len() < 2 {
        return (est, 0.0);
    }
    let var = ((sumsq - sum * sum / m) / (m - 1.0)).max(0.0);
    let se_mean_p = (var / m).sqrt();
    let se = se_mean_p * est / (p * mean_p);
    (est, se)
}

/// Ordinary least-squares fit of `log2(y)` against `log2(n)`.
#[derive(Debug, Clone, Copy)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
}

/// Fits a power law through `(n, y)` pairs on log2 axes. Pairs with
/// non-positive or non-finite `y` are skipped.
pub fn fit_loglog(levels: &[usize], values: &[f64]) -> Result<LogLogFit> {
    if levels.len() != values.len() {
        return Err(Error::LengthMismatch {
            left: levels.len(),
            right: values.len(),
        });
    }
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .zip(values)
        .filter(|(_, &y)| y > 0.0 && y.is_finite())
        .map(|(&n, &y)| ((n as f64).log2(), y.log2()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two positive values to fit a rate".into(),
        ));
    }
    let m = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - ybar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 {
        1.0 - ss_res / syy
    } else {
        // Constant data is fit perfectly by the constant line.
        1.0
    };
    let slope_se = if pts.len() > 2 {
        (ss_res / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
        slope_se,
    })
}

fn validate_levels(levels: &[usize], n_ref: usize, paths: usize) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("levels must be nonempty".into()));
    }
    for w in levels.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "levels must be strictly increasing".into(),
            ));
        }
    }
    for &n in levels {
        if n == 0 || n_ref % n != 0 {
            return Err(Error::DivisibilityViolation {
                coarse: n,
                fine: n_ref,
            });
        }
    }
    let max = *levels.last().unwrap();
    if n_ref < MIN_REF_MULTIPLIER * max {
        return Err(Error::InvalidParameter(format!(
            "n_ref = {n_ref} must be at least {MIN_REF_MULTIPLIER} * max level = {}",
            MIN_REF_MULTIPLIER * max
        )));
    }
    if paths < 2 {
        return Err(Error::InvalidParameter(format!(
            "paths must be >= 2, got {paths}"
        )));
    }
    Ok(())
}

/// Assembles level statistics, the fit, and divergence accounting from the
/// ordered per-path metric table (`None` marks a divergent path).
fn assemble_report(
    levels: &[usize],
    per_path: Vec<Vec<Option<f64>>>,
    p: f64,
    paths: usize,
    seed: u64,
    kind: StudyKind,
    normalize: impl Fn(usize) -> f64,
    mut flags: Vec<String>,
) -> Result<ConvergenceReport> {
    let mut errors = Vec::with_capacity(levels.len());
    let mut total_divergent = 0usize;
    for (li, &n) in levels.iter().enumerate() {
        let vals: Vec<f64> = per_path.iter().filter_map(|row| row[li]).collect();
        let divergent = paths - vals.len();
        total_divergent = total_divergent.max(divergent);
        if divergent * 100 > paths {
            return Err(Error::ExcessiveDivergence {
                level: n,
                count: divergent,
                paths,
            });
        }
        let (mut est, mut se) = moment_with_se(&vals, p);
        let scale = normalize(n);
        est /= scale;
        se /= scale;
        errors.push(LevelError {
            n,
            mean: est,
            se,
            paths_used: vals.len(),
        });
    }
    if total_divergent > 0 {
        flags.push(format!("divergent_paths={total_divergent}"));
    }
    let positive: Vec<usize> = (0..levels.len())
        .filter(|&i| errors[i].mean > 0.0 && errors[i].mean.is_finite())
        .collect();
    if positive.len() < levels.len() {
        flags.push("zero_error_levels_excluded_from_fit".into());
    }
    let fit_levels: Vec<usize> = positive.iter().map(|&i| levels[i]).collect();
    let fit_values: Vec<f64> = positive.iter().map(|&i| errors[i].mean).collect();
    let fit = fit_loglog(&fit_levels, &fit_values)?;
    Ok(ConvergenceReport {
        levels: levels.to_vec(),
        errors,
        rate: -fit.slope,
        rate_se: fit.slope_se,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        seed,
        kind,
        flags,
    })
}

/// Strong-error study: per path, one reference trajectory and one coarse
/// scheme per level, all driven by the same Brownian path; per level the
/// `p`-th mean error and its standard error; then the log-log rate fit.
///
/// Divergent paths are excluded from averages and counted; more than 1%
/// at any level aborts. With `q = inf` in interpolation mode the reported
/// per-level errors carry the `1 / sqrt(ln(n + 1))` normalization.
pub fn run_convergence_study(
    problem: &SdeProblem,
    levels: &[usize],
    n_ref: usize,
    paths: usize,
    spec: ErrorSpec,
    seed: u64,
    reference: Reference,
) -> Result<ConvergenceReport> {
    validate_levels(levels, n_ref, paths)?;
    let transformed = match reference {
        Reference::TransformedPullback { nu_fraction } => {
            Some(TransformedProblem::new(problem.clone(), nu_fraction)?)
        }
        _ => None,
    };

    let mut flags = Vec::new();
    let (_, p_max) = admissible_p(problem.growth());
    if spec.p >= p_max {
        flags.push(format!("p_outside_admissible_(0,{p_max})"));
    }

    let per_path: Vec<Vec<Option<f64>>> = (0..paths as u64)
        .into_par_iter()
        .map(|m| -> Result<Vec<Option<f64>>> {
            let path = sample_path(seed, m, n_ref)?;
            let reference_traj: Option<Vec<f64>> = match &reference {
                Reference::FineGrid => {
                    let sp = tamed_euler_path(problem, n_ref, &path)?;
                    (!sp.is_divergent()).then(|| sp.fine_values().to_vec())
                }
                Reference::ExactGbm { a, b } => Some(exact_gbm(problem.x0(), *a, *b, &path)),
                Reference::TransformedPullback { .. } => {
                    let tp = transformed.as_ref().unwrap();
                    let sp = transformed_scheme_path(tp, n_ref, &path)?;
                    (!sp.is_divergent())
                        .then(|| pullback_path(tp.transform(), &sp).fine_values().to_vec())
                }
            };
            let Some(reference_traj) = reference_traj else {
                return Ok(vec![None; levels.len()]);
            };
            levels
                .iter()
                .map(|&n| -> Result<Option<f64>> {
                    let sp = tamed_euler_path(problem, n, &path)?;
                    if sp.is_divergent() {
                        return Ok(None);
                    }
                    let err = match spec.mode {
                        ErrorMode::SupContinuous => {
                            pathwise_error(sp.fine_values(), &reference_traj, &spec, n_ref)?
                        }
                        ErrorMode::PathwiseLq => {
                            let interp = linear_interp_path(&sp);
                            pathwise_error(&interp, &reference_traj, &spec, n_ref)?
                        }
                    };
                    Ok(Some(err))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let log_normalized = spec.mode == ErrorMode::PathwiseLq && spec.q.is_infinite();
    assemble_report(
        levels,
        per_path,
        spec.p,
        paths,
        seed,
        StudyKind::Convergence { spec, reference },
        move |n| {
            if log_normalized {
                ((n as f64) + 1.0).ln().sqrt()
            } else {
                1.0
            }
        },
        flags,
    )
}

/// Occupation-scaling study: per level the `p`-th mean of the sign-change
/// occupation measure at breakpoint `xi_index`, with the same fit
/// machinery as the error studies. The measure decays, so the fitted
/// slope is negative and `rate` is its magnitude.
pub fn occupation_scaling_study(
    problem: &SdeProblem,
    xi_index: usize,
    levels: &[usize],
    n_ref: usize,
    paths: usize,
    p: f64,
    seed: u64,
) -> Result<ConvergenceReport> {
    validate_levels(levels, n_ref, paths)?;
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "moment order must be > 0, got {p}"
        )));
    }
    let k = problem.breakpoints().len();
    let xi = problem
        .breakpoints()
        .get(xi_index)
        .map(|b| b.xi)
        .ok_or(Error::IndexOutOfRange { index: xi_index, k })?;

    let per_path: Vec<Vec<Option<f64>>> = (0..paths as u64)
        .into_par_iter()
        .map(|m| -> Result<Vec<Option<f64>>> {
            let path = sample_path(seed, m, n_ref)?;
            levels
                .iter()
                .map(|&n| -> Result<Option<f64>> {
                    let sp = tamed_euler_path(problem, n, &path)?;
                    if sp.is_divergent() {
                        return Ok(None);
                    }
                    Ok(Some(sign_change_occupation(&sp, xi).measure))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    assemble_report(
        levels,
        per_path,
        p,
        paths,
        seed,
        StudyKind::Occupation { xi, p },
        |_| 1.0,
        Vec::new(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn admissible_interval_examples() {
        let g = GrowthParams::new(2.0, 1.0, 15.0, 3.0).unwrap();
        assert_eq!(g.kappa(), 7.0);
        let (lo, hi) = admissible_p(&g);
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 15.0 / 7.0);

        // Equal bounds: p1 = p0 / kappa.
        let g = GrowthParams::new(2.0, 0.0, 15.0, 3.0).unwrap();
        assert_eq!(g.kappa(), 5.0);
        assert_eq!(admissible_p(&g).1, 3.0);

        // The hypothesis threshold p0 > 2 kappa holds for both presets.
        assert!(15.0 > 2.0 * g.kappa());
    }

    #[test]
    fn pathwise_error_basics() {
        let spec = ErrorSpec::new(2.0, 2.0, ErrorMode::PathwiseLq).unwrap();
        let a = vec![1.0; 5];
        assert_eq!(pathwise_error(&a, &a, &spec, 4).unwrap(), 0.0);

        let b = vec![3.0; 5];
        for q in [1.0, 2.0, f64::INFINITY] {
            let s = ErrorSpec::new(2.0, q, ErrorMode::PathwiseLq).unwrap();
            let e = pathwise_error(&a, &b, &s, 4).unwrap();
            assert!((e - 2.0).abs() < 1e-14, "q={q}: {e}");
        }

        let c = vec![0.0, 1.0, 0.0, 0.0, 0.0];
        let z = vec![0.0; 5];
        let s = ErrorSpec::new(2.0, 2.0, ErrorMode::PathwiseLq).unwrap();
        assert_eq!(pathwise_error(&c, &z, &s, 4).unwrap(), 0.5);

        let sup = ErrorSpec::new(2.0, 2.0, ErrorMode::SupContinuous).unwrap();
        assert_eq!(pathwise_error(&c, &z, &sup, 4).unwrap(), 1.0);

        assert!(pathwise_error(&a, &b[..4], &spec, 4).is_err());
    }

    #[test]
    fn fit_recovers_exact_power_laws() {
        let levels = vec![8usize, 16, 32, 64, 128, 256, 512];
        for r in [0.5, 1.0, 0.25] {
            let values: Vec<f64> = levels.iter().map(|&n| 3.7 * (n as f64).powf(-r)).collect();
            let fit = fit_loglog(&levels, &values).unwrap();
            assert!((-fit.slope - r).abs() < 1e-12, "r={r}: slope {}", fit.slope);
            assert!((fit.r_squared - 1.0).abs() < 1e-12);
            assert!(fit.slope_se.abs() < 1e-9);
        }
        // Constant values: zero slope.
        let values = vec![2.0; levels.len()];
        let fit = fit_loglog(&levels, &values).unwrap();
        assert_eq!(fit.slope, 0.0);
    }

    #[test]
    fn exact_gbm_degenerate_cases() {
        let path = sample_path(3, 1, 128).unwrap();
        // b = 0: deterministic exponential.
        let traj = exact_gbm(2.0, 0.5, 0.0, &path);
        assert_eq!(traj[0], 2.0);
        for (j, &v) in traj.iter().enumerate() {
            let t = j as f64 / 128.0;
            assert!((v - 2.0 * (0.5 * t).exp()).abs() < 1e-12);
        }
        // a = b^2 / 2: pure exponential of the Brownian path.
        let b = 0.4;
        let traj = exact_gbm(1.0, 0.5 * b * b, b, &path);
        for (j, &v) in traj.iter().enumerate() {
            assert!((v - (b * path.value_at(j)).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn moment_estimate_examples() {
        assert_eq!(moment_estimate(&[1.0, 1.0, 1.0], 3.0).unwrap(), 1.0);
        let v = moment_estimate(&[0.0, 2.0], 2.0).unwrap();
        assert!((v - 2.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(moment_estimate(&[3.0], 5.0).unwrap(), 3.0);
        assert!(moment_estimate(&[], 2.0).is_err());
        assert!(moment_estimate(&[1.0], 0.0).is_err());
    }

    #[test]
    fn study_validation_errors() {
        let p = presets::by_name("gbm").unwrap().problem();
        let spec = ErrorSpec::new(2.0, 2.0, ErrorMode::SupContinuous).unwrap();
        // Level does not divide n_ref.
        assert!(run_convergence_study(&p, &[12], 256, 4, spec, 1, Reference::FineGrid).is_err());
        // n_ref too small relative to max level.
        assert!(run_convergence_study(&p, &[64], 256, 4, spec, 1, Reference::FineGrid).is_err());
        // Too few paths.
        assert!(run_convergence_study(&p, &[8], 256, 1, spec, 1, Reference::FineGrid).is_err());
        // Unordered levels.
        assert!(
            run_convergence_study(&p, &[16, 8], 256, 4, spec, 1, Reference::FineGrid).is_err()
        );
    }

    #[test]
    fn self_reference_error_is_zero() {
        let p = presets::by_name("cubic_jump").unwrap().problem();
        let path = sample_path(9, 0, 256).unwrap();
        let sp = tamed_euler_path(&p, 256, &path).unwrap();
        let spec = ErrorSpec::new(2.0, f64::INFINITY, ErrorMode::SupContinuous).unwrap();
        let e = pathwise_error(sp.fine_values(), sp.fine_values(), &spec, 256).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn study_is_deterministic() {
        let p = presets::by_name("gbm").unwrap().problem();
        let spec = ErrorSpec::new(2.0, 2.0, ErrorMode::SupContinuous).unwrap();
        let run = || {
            run_convergence_study(
                &p,
                &[8, 16],
                256,
                50,
                spec,
                77,
                Reference::ExactGbm { a: 0.5, b: 0.3 },
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.rate.to_bits(), b.rate.to_bits());
        for (x, y) in a.errors.iter().zip(&b.errors) {
            assert_eq!(x.mean.to_bits(), y.mean.to_bits());
            assert_eq!(x.se.to_bits(), y.se.to_bits());
        }
    }

    #[test]
    fn gbm_level_means_decrease() {
        let p = presets::by_name("gbm").unwrap().problem();
        let spec = ErrorSpec::new(2.0, f64::INFINITY, ErrorMode::SupContinuous).unwrap();
        let report = run_convergence_study(
            &p,
            &[8, 16, 32, 64],
            1024,
            2000,
            spec,
            2024,
            Reference::ExactGbm { a: 0.5, b: 0.3 },
        )
        .unwrap();
        let mut inversions = 0;
        for w in report.errors.windows(2) {
            if w[0].mean <= w[1].mean {
                inversions += 1;
            }
        }
        assert!(inversions <= 1, "means: {:?}", report.errors);
        assert!(report.rate > 0.0);
    }

    #[test]
    fn occupation_study_requires_breakpoint() {
        let p = presets::by_name("gbm").unwrap().problem();
        assert!(occupation_scaling_study(&p, 0, &[8], 256, 4, 1.0, 1).is_err());
    }

    #[test]
    fn occupation_study_slope_negative_smoke() {
        let p = presets::by_name("cubic_jump").unwrap().problem();
        let report = occupation_scaling_study(&p, 0, &[8, 16, 32], 512, 200, 1.0, 5).unwrap();
        // Decay: fitted slope negative, i.e. positive rate.
        assert!(report.rate > 0.0, "rate {}", report.rate);
        assert!(matches!(report.kind, StudyKind::Occupation { xi, .. } if xi == 0.0));
    }
}
