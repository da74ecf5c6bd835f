use std::sync::Arc;
use tamedsde::analysis::*;
use tamedsde::sde_model::{GrowthParams, SdeProblem};

fn gbm_with_ellmu(ell_mu: f64) -> SdeProblem {
    SdeProblem::new(
        1.0,
        Arc::new(|x: f64| 0.5 * x),
        Arc::new(|x: f64| 0.3 * x),
        vec![],
        GrowthParams::new(ell_mu, 0.0, 15.0, 3.0).unwrap(),
        "gbm",
    )
    .unwrap()
}

fn cubic_with_x0(x0: f64) -> SdeProblem {
    use tamedsde::sde_model::Breakpoint;
    fn sign(x: f64) -> f64 { if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 } }
    SdeProblem::new(
        x0,
        Arc::new(|x: f64| -x * x * x - 2.0 * sign(x)),
        Arc::new(|_| 1.0),
        vec![Breakpoint::new(0.0, 2.0, -2.0, 0.0)],
        GrowthParams::new(2.0, 0.0, 15.0, 3.0).unwrap(),
        "cubic_jump",
    )
    .unwrap()
}

fn main() {
    let spec = ErrorSpec::new(2.0, f64::INFINITY, ErrorMode::SupContinuous).unwrap();
    let levels = [8, 16, 32, 64, 128, 256, 512];
    for ell in [0.1, 0.25, 0.5] {
        let p = gbm_with_ellmu(ell);
        let r = run_convergence_study(&p, &levels, 8192, 4000, spec, 0xA4,
            Reference::ExactGbm { a: 0.5, b: 0.3 }).unwrap();
        let es: Vec<String> = r.errors.iter().map(|e| format!("{:.4}", e.mean)).collect();
        println!("gbm ell_mu={ell}: rate={:.4} r2={:.4} errs=[{}]", r.rate, r.r_squared, es.join(","));
    }
    let lev5 = [16, 32, 64, 128, 256, 512];
    for x0 in [0.0, 1.0, 1.5, 2.0, 2.5] {
        let p = cubic_with_x0(x0);
        let r = run_convergence_study(&p, &lev5, 8192, 2000, spec, 0xA5, Reference::FineGrid).unwrap();
        let es: Vec<String> = r.errors.iter().map(|e| format!("{:.4}", e.mean)).collect();
        println!("cubic x0={x0}: sup rate={:.4} r2={:.4} errs=[{}] flags={:?}", r.rate, r.r_squared, es.join(","), r.flags);
    }
}
