//! Experiment runner: JSON configuration, study dispatch, deterministic
//! CSV output.
//!
//! The CSV schema is stable:
//! `study,preset,seed,level_n,n_ref,paths,p,q,error_mean,error_se,rate,rate_se,r_squared,flags`.
//! Level rows fill the error columns and leave the rate columns empty; the
//! summary row does the opposite. Invariant and assumption studies emit
//! one row per check with the check name in `flags`. All floating-point
//! fields are printed with 17 significant digits, so identical configs
//! yield byte-identical files regardless of worker-thread count.

use std::fmt;
use std::path::PathBuf;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::analysis::{
    occupation_scaling_study, run_convergence_study, ConvergenceReport, ErrorMode, ErrorSpec,
    Reference, StudyKind,
};
use crate::error::{Error, Result};
use crate::presets;
use crate::sde_model::{check_assumptions, AssumptionReport, SampleSpec};
use crate::transform::{
    transform_invariant_checks, transformed_problem_checks, InvariantCheck, TransformedProblem,
};

/// Environment variable overriding the worker-thread count.
pub const THREADS_ENV: &str = "TAMEDSDE_THREADS";

/// Study selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// Sup-norm error of the time-continuous scheme vs a reference.
    Convergence,
    /// Pathwise `L_q` error of the linear interpolation vs a reference.
    Interpolation,
    /// Scaling of the sign-change occupation measure at a breakpoint.
    Occupation,
    /// Transform invariant suite; per-check max deviations.
    Invariants,
    /// Sampled assumption checker; per-condition fitted constants.
    Assumptions,
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Study::Convergence => "convergence",
            Study::Interpolation => "interpolation",
            Study::Occupation => "occupation",
            Study::Invariants => "invariants",
            Study::Assumptions => "assumptions",
        };
        f.write_str(s)
    }
}

/// Pathwise norm order; serializes as a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QNorm(pub f64);

impl Serialize for QNorm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for QNorm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(QNorm)
                .ok_or_else(|| D::Error::custom("q: not a representable number")),
            serde_json::Value::String(s) if s.eq_ignore_ascii_case("inf") => {
                Ok(QNorm(f64::INFINITY))
            }
            _ => Err(D::Error::custom("q: expected a number or \"inf\"")),
        }
    }
}

fn default_levels() -> Vec<usize> {
    vec![16, 32, 64, 128, 256, 512]
}
fn default_n_ref() -> usize {
    8192
}
fn default_paths() -> usize {
    2000
}
fn default_p() -> f64 {
    2.0
}
fn default_q() -> QNorm {
    QNorm(f64::INFINITY)
}
fn default_nu_fraction() -> f64 {
    0.5
}
fn default_reference() -> String {
    "fine_grid".into()
}
fn default_out() -> PathBuf {
    PathBuf::from("report.csv")
}

/// Full experiment description. JSON is the canonical form; `--seed`,
/// `--paths`, and `--out` may override single fields from the command
/// line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: String,
    pub study: Study,
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    #[serde(default = "default_n_ref")]
    pub n_ref: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_q")]
    pub q: QNorm,
    pub seed: u64,
    #[serde(default = "default_nu_fraction")]
    pub nu_fraction: f64,
    #[serde(default = "default_reference")]
    pub reference: String,
    #[serde(default = "default_out")]
    pub out_path: PathBuf,
    /// Worker threads; 0 means machine parallelism. Affects runtime only,
    /// never output bytes.
    #[serde(default)]
    pub threads: usize,
}

impl ExperimentConfig {
    /// Field-level validation of the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let preset = presets::by_name(&self.preset)?;
        if self.n_ref < 2 || !self.n_ref.is_power_of_two() {
            return Err(Error::Config(format!(
                "n_ref: must be a power of two >= 2, got {}",
                self.n_ref
            )));
        }
        let runs_levels = matches!(
            self.study,
            Study::Convergence | Study::Interpolation | Study::Occupation
        );
        if runs_levels {
            if self.levels.is_empty() {
                return Err(Error::Config("levels: must be nonempty".into()));
            }
            for &n in &self.levels {
                if n < 2 || !n.is_power_of_two() || self.n_ref % n != 0 {
                    return Err(Error::Config(format!(
                        "levels: each level must be a power of two dividing n_ref = {}, got {n}",
                        self.n_ref
                    )));
                }
            }
            for w in self.levels.windows(2) {
                if !(w[0] < w[1]) {
                    return Err(Error::Config(
                        "levels: must be strictly increasing".into(),
                    ));
                }
            }
            if self.paths < 2 {
                return Err(Error::Config(format!(
                    "paths: must be >= 2, got {}",
                    self.paths
                )));
            }
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::Config(format!(
                "p: must be finite and > 0, got {}",
                self.p
            )));
        }
        if !(self.q.0 >= 1.0) {
            return Err(Error::Config(format!(
                "q: must be >= 1 or \"inf\", got {}",
                self.q.0
            )));
        }
        if !(self.nu_fraction > 0.0 && self.nu_fraction < 1.0) {
            return Err(Error::Config(format!(
                "nu_fraction: must lie in (0, 1), got {}",
                self.nu_fraction
            )));
        }
        match self.reference.as_str() {
            "fine_grid" | "transformed_pullback" => {}
            "exact_oracle" => {
                if preset.oracle.is_none() {
                    return Err(Error::Config(format!(
                        "reference: preset '{}' has no exact oracle",
                        self.preset
                    )));
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "reference: unknown '{other}' (fine_grid | exact_oracle | transformed_pullback)"
                )));
            }
        }
        Ok(())
    }

    fn reference(&self) -> Result<Reference> {
        Ok(match self.reference.as_str() {
            "fine_grid" => Reference::FineGrid,
            "exact_oracle" => {
                let oracle = presets::by_name(&self.preset)?
                    .oracle
                    .expect("validated: oracle present");
                Reference::ExactGbm {
                    a: oracle.a,
                    b: oracle.b,
                }
            }
            "transformed_pullback" => Reference::TransformedPullback {
                nu_fraction: self.nu_fraction,
            },
            other => return Err(Error::Config(format!("reference: unknown '{other}'"))),
        })
    }
}

/// Parses a config from a file path or an inline JSON object, applies
/// defaults, and validates.
pub fn load_config(path_or_json: &str) -> Result<ExperimentConfig> {
    let text = if path_or_json.trim_start().starts_with('{') {
        path_or_json.to_string()
    } else {
        std::fs::read_to_string(path_or_json)?
    };
    let config: ExperimentConfig = serde_json::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

/// Outcome of a dispatched study.
pub enum StudyOutput {
    Report(ConvergenceReport),
    Invariants(Vec<InvariantCheck>),
    Assumptions(AssumptionReport),
}

fn dispatch(config: &ExperimentConfig) -> Result<StudyOutput> {
    let preset = presets::by_name(&config.preset)?;
    let problem = preset.problem();
    match config.study {
        Study::Convergence => {
            let spec = ErrorSpec::new(config.p, config.q.0, ErrorMode::SupContinuous)?;
            let report = run_convergence_study(
                &problem,
                &config.levels,
                config.n_ref,
                config.paths,
                spec,
                config.seed,
                config.reference()?,
            )?;
            Ok(StudyOutput::Report(report))
        }
        Study::Interpolation => {
            let spec = ErrorSpec::new(config.p, config.q.0, ErrorMode::PathwiseLq)?;
            let report = run_convergence_study(
                &problem,
                &config.levels,
                config.n_ref,
                config.paths,
                spec,
                config.seed,
                config.reference()?,
            )?;
            Ok(StudyOutput::Report(report))
        }
        Study::Occupation => {
            let report = occupation_scaling_study(
                &problem,
                0,
                &config.levels,
                config.n_ref,
                config.paths,
                config.p,
                config.seed,
            )?;
            Ok(StudyOutput::Report(report))
        }
        Study::Invariants => {
            let tp = TransformedProblem::new(problem, config.nu_fraction)?;
            let mut checks = transform_invariant_checks(tp.transform());
            checks.extend(transformed_problem_checks(&tp));
            Ok(StudyOutput::Invariants(checks))
        }
        Study::Assumptions => {
            let spec = SampleSpec {
                threshold: preset.assumption_threshold,
                seed: config.seed,
                ..SampleSpec::default()
            };
            Ok(StudyOutput::Assumptions(check_assumptions(&problem, &spec)?))
        }
    }
}

/// 17 significant digits; `inf` for infinities.
fn fmt_float(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

const CSV_HEADER: &str =
    "study,preset,seed,level_n,n_ref,paths,p,q,error_mean,error_se,rate,rate_se,r_squared,flags";

struct RowBase<'a> {
    config: &'a ExperimentConfig,
}

impl RowBase<'_> {
    fn row(
        &self,
        level_n: Option<usize>,
        error_mean: Option<f64>,
        error_se: Option<f64>,
        rate: Option<f64>,
        rate_se: Option<f64>,
        r_squared: Option<f64>,
        flags: &str,
    ) -> String {
        let c = self.config;
        let opt_u = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_f = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.study,
            c.preset,
            c.seed,
            opt_u(level_n),
            c.n_ref,
            c.paths,
            fmt_float(c.p),
            fmt_float(c.q.0),
            opt_f(error_mean),
            opt_f(error_se),
            opt_f(rate),
            opt_f(rate_se),
            opt_f(r_squared),
            flags
        )
    }
}

fn render_csv(config: &ExperimentConfig, output: &StudyOutput) -> String {
    let base = RowBase { config };
    let mut lines = vec![CSV_HEADER.to_string()];
    match output {
        StudyOutput::Report(report) => {
            for le in &report.errors {
                lines.push(base.row(
                    Some(le.n),
                    Some(le.mean),
                    Some(le.se),
                    None,
                    None,
                    None,
                    "",
                ));
            }
            lines.push(base.row(
                None,
                None,
                None,
                Some(report.rate),
                Some(report.rate_se),
                Some(report.r_squared),
                &report.flags.join(";"),
            ));
        }
        StudyOutput::Invariants(checks) => {
            for c in checks {
                let status = if c.passed() { "pass" } else { "fail" };
                lines.push(base.row(
                    None,
                    Some(c.max_deviation),
                    None,
                    None,
                    None,
                    None,
                    &format!("{}:{}", c.name, status),
                ));
            }
        }
        StudyOutput::Assumptions(report) => {
            let violations = [
                ("a1", report.a1_violations.len()),
                ("a2i", report.a2i_violations.len()),
                ("a2ii", report.a2ii_violations.len()),
                ("a3", report.a3_violations.len()),
                ("a4", report.a4_violations.len()),
            ];
            for (name, count) in violations {
                let fitted = report.fitted_constants.get(name).copied();
                lines.push(base.row(
                    None,
                    fitted,
                    None,
                    None,
                    None,
                    None,
                    &format!("{name}:{count}_violations"),
                ));
            }
        }
    }
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

fn summary_line(config: &ExperimentConfig, output: &StudyOutput) -> String {
    match output {
        StudyOutput::Report(r) => {
            let slope_note = match r.kind {
                StudyKind::Occupation { .. } => " (fitted slope is -rate)",
                StudyKind::Convergence { .. } => "",
            };
            format!(
                "{} {}: rate = {:.4} +/- {:.4} (r2 = {:.4}, levels {}..{}, paths {}){}",
                config.study,
                config.preset,
                r.rate,
                r.rate_se,
                r.r_squared,
                r.levels.first().copied().unwrap_or(0),
                r.levels.last().copied().unwrap_or(0),
                config.paths,
                slope_note
            )
        }
        StudyOutput::Invariants(checks) => {
            let failures = checks.iter().filter(|c| !c.passed()).count();
            let worst = checks
                .iter()
                .map(|c| c.max_deviation)
                .fold(0.0f64, f64::max);
            format!(
                "invariants {}: {} checks, {} failures, max deviation {:.3e}",
                config.preset,
                checks.len(),
                failures,
                worst
            )
        }
        StudyOutput::Assumptions(report) => {
            let total = report.a1_violations.len()
                + report.a2i_violations.len()
                + report.a2ii_violations.len()
                + report.a3_violations.len()
                + report.a4_violations.len();
            let fitted: Vec<String> = report
                .fitted_constants
                .iter()
                .map(|(k, v)| format!("{k}={v:.3}"))
                .collect();
            format!(
                "assumptions {}: {} violations ({})",
                config.preset,
                total,
                fitted.join(", ")
            )
        }
    }
}

fn resolve_threads(config: &ExperimentConfig) -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(config.threads)
}

/// Runs the study and returns `(csv, summary line)` without touching the
/// filesystem. Thread count changes runtime only; the bytes are identical.
pub fn run_to_csv(config: &ExperimentConfig) -> Result<(String, String)> {
    config.validate()?;
    let threads = resolve_threads(config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let output = pool.install(|| dispatch(config))?;
    Ok((render_csv(config, &output), summary_line(config, &output)))
}

/// Runs the study, writes the CSV to `config.out_path`, and prints the
/// one-line summary to standard output.
pub fn run(config: &ExperimentConfig) -> Result<()> {
    let (csv, summary) = run_to_csv(config)?;
    std::fs::write(&config.out_path, csv)?;
    println!("{summary}");
    println!("wrote {}", config.out_path.display());
    Ok(())
}
