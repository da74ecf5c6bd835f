//! Built-in problem catalog, addressed by name from the CLI.
//!
//! Each preset documents the constant threshold its sampled assumption
//! check stays below on `[-10, 10]`. The `gbm` preset additionally carries
//! the parameters of its closed-form solution, which serves as the exact
//! reference in rate studies.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sde_model::{Breakpoint, GrowthParams, SdeProblem};

/// Linear-coefficient parameters `mu(x) = a x`, `sigma(x) = b x`, for
/// which `X_t = x0 * exp((a - b^2/2) t + b W_t)` solves the equation.
#[derive(Debug, Clone, Copy)]
pub struct GbmOracle {
    pub a: f64,
    pub b: f64,
}

/// A named, fully parameterized problem.
#[derive(Debug)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    /// Fitted assumption constants on `[-10, 10]` stay below this value.
    pub assumption_threshold: f64,
    /// Closed-form solution parameters, when one exists.
    pub oracle: Option<GbmOracle>,
    build: fn() -> SdeProblem,
}

impl Preset {
    /// Instantiates the problem.
    pub fn problem(&self) -> SdeProblem {
        (self.build)()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn build_gbm() -> SdeProblem {
    // Linear coefficients admit any growth exponents; the smallest valid
    // pair keeps the taming perturbation mild enough that the classical
    // order-1/2 behaviour shows at desk-scale step counts.
    SdeProblem::new(
        1.0,
        Arc::new(|x: f64| 0.5 * x),
        Arc::new(|x: f64| 0.3 * x),
        vec![],
        GrowthParams::new(1.0, 0.5, 15.0, 3.0).expect("valid growth"),
        "gbm",
    )
    .expect("valid preset")
}

fn build_cubic_jump() -> SdeProblem {
    SdeProblem::new(
        0.0,
        Arc::new(|x: f64| -x * x * x - 2.0 * sign(x)),
        Arc::new(|_| 1.0),
        vec![Breakpoint::new(0.0, 2.0, -2.0, 0.0)],
        GrowthParams::new(2.0, 0.0, 15.0, 3.0).expect("valid growth"),
        "cubic_jump",
    )
    .expect("valid preset")
}

fn double_jump_step(x: f64) -> f64 {
    if x <= -1.0 {
        2.0
    } else if x <= 1.0 {
        0.0
    } else {
        -2.0
    }
}

fn build_double_jump() -> SdeProblem {
    SdeProblem::new(
        0.0,
        Arc::new(|x: f64| -x * x * x + double_jump_step(x)),
        Arc::new(|_| 1.0),
        vec![
            Breakpoint::new(-1.0, 3.0, 1.0, 3.0),
            Breakpoint::new(1.0, -1.0, -3.0, -1.0),
        ],
        GrowthParams::new(2.0, 0.0, 15.0, 3.0).expect("valid growth"),
        "double_jump",
    )
    .expect("valid preset")
}

fn build_ginzburg_landau() -> SdeProblem {
    SdeProblem::new(
        1.0,
        Arc::new(|x: f64| x - x * x * x),
        Arc::new(|x: f64| 0.5 * x),
        vec![],
        GrowthParams::new(2.0, 0.0, 15.0, 3.0).expect("valid growth"),
        "ginzburg_landau",
    )
    .expect("valid preset")
}

const CATALOG: &[Preset] = &[
    Preset {
        name: "gbm",
        summary: "mu = 0.5 x, sigma = 0.3 x, x0 = 1; closed-form solution available",
        assumption_threshold: 20.0,
        oracle: Some(GbmOracle { a: 0.5, b: 0.3 }),
        build: build_gbm,
    },
    Preset {
        name: "cubic_jump",
        summary: "mu = -x^3 - 2 sign(x) with mu(0) = 0, sigma = 1, jump at xi = 0, x0 = 0",
        assumption_threshold: 20.0,
        oracle: None,
        build: build_cubic_jump,
    },
    Preset {
        name: "double_jump",
        summary: "mu = -x^3 + step (+2 / 0 / -2 on (-inf,-1], (-1,1], (1,inf)), sigma = 1, x0 = 0",
        assumption_threshold: 20.0,
        oracle: None,
        build: build_double_jump,
    },
    Preset {
        name: "ginzburg_landau",
        summary: "mu = x - x^3, sigma = 0.5 x, continuous superlinear pair, x0 = 1",
        assumption_threshold: 20.0,
        oracle: None,
        build: build_ginzburg_landau,
    },
];

/// The full catalog, in stable order.
pub fn catalog() -> &'static [Preset] {
    CATALOG
}

/// Looks a preset up by name; the error lists all available names.
pub fn by_name(name: &str) -> Result<&'static Preset> {
    CATALOG
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset {
            name: name.to_string(),
            available: CATALOG
                .iter()
                .map(|p| p.name)
                .collect::<Vec<_>>()
                .join(", "),
        })
}
