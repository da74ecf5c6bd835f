use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tamedsde::cli::{self, ExperimentConfig};
use tamedsde::presets;
use tamedsde::sde_model::{check_assumptions, SampleSpec};

#[derive(Parser)]
#[command(
    name = "tamedsde",
    about = "Tamed Euler simulation and strong-rate studies for scalar SDEs with discontinuous superlinear drift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study described by a JSON config (file path or inline JSON)
    Run {
        #[arg(long)]
        config: String,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config path count
        #[arg(long)]
        paths: Option<usize>,
        /// Override the CSV output path
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the preset catalog with parameters
    Presets,
    /// Run the sampled assumption checker on a preset
    Check {
        #[arg(long)]
        preset: String,
    },
}

fn cmd_run(
    config: &str,
    seed: Option<u64>,
    paths: Option<usize>,
    out: Option<PathBuf>,
) -> tamedsde::Result<()> {
    let mut config: ExperimentConfig = cli::load_config(config)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(paths) = paths {
        config.paths = paths;
    }
    if let Some(out) = out {
        config.out_path = out;
    }
    config.validate()?;
    cli::run(&config)
}

fn cmd_presets() {
    for preset in presets::catalog() {
        let p = preset.problem();
        let g = p.growth();
        println!("{}", preset.name);
        println!("  {}", preset.summary);
        println!(
            "  x0 = {}, ell_mu = {}, ell_sigma = {}, p0 = {}, p1 = {}",
            p.x0(),
            g.ell_mu(),
            g.ell_sigma(),
            g.p0(),
            g.p1()
        );
        if p.breakpoints().is_empty() {
            println!("  breakpoints: none");
        } else {
            for bp in p.breakpoints() {
                println!(
                    "  breakpoint xi = {}: left {}, right {}, at {}",
                    bp.xi, bp.mu_left, bp.mu_right, bp.mu_at
                );
            }
        }
        if let Some(o) = &preset.oracle {
            println!("  exact oracle: a = {}, b = {}", o.a, o.b);
        }
        println!(
            "  assumption check threshold on [-10, 10]: {}",
            preset.assumption_threshold
        );
    }
}

fn cmd_check(name: &str) -> tamedsde::Result<bool> {
    let preset = presets::by_name(name)?;
    let problem = preset.problem();
    let spec = SampleSpec {
        threshold: preset.assumption_threshold,
        ..SampleSpec::default()
    };
    let report = check_assumptions(&problem, &spec)?;
    println!(
        "assumption check for '{}' on [{}, {}] with {} points (threshold {}):",
        name, spec.lo, spec.hi, spec.points, spec.threshold
    );
    for (cond, c) in &report.fitted_constants {
        println!("  {cond}: fitted constant {c:.6}");
    }
    let buckets = [
        ("a1", &report.a1_violations),
        ("a2i", &report.a2i_violations),
        ("a2ii", &report.a2ii_violations),
        ("a3", &report.a3_violations),
        ("a4", &report.a4_violations),
    ];
    for (cond, list) in buckets {
        if !list.is_empty() {
            println!("  {cond}: {} violations, e.g. at x = {}", list.len(), list[0].x);
        }
    }
    if report.is_clean() {
        println!("  all sampled inequalities hold below the threshold");
    }
    Ok(report.is_clean())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            seed,
            paths,
            out,
        } => cmd_run(&config, seed, paths, out).map(|()| true),
        Command::Presets => {
            cmd_presets();
            Ok(true)
        }
        Command::Check { preset } => cmd_check(&preset),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
