//! Command-line harness for the homogenization laboratory.
//!
//! Exit codes: 0 on success, 1 on configuration or input validation
//! failure, 2 on solver failure, 3 when a verification command detects
//! a threshold breach.

use clap::{Parser, Subcommand};
use hstokes::cache;
use hstokes::cell::{solve_cell, verify_corrector_identities};
use hstokes::coeff::{build_coefficient, Tensor4};
use hstokes::config::{parse_config, StudyConfig};
use hstokes::domain::{manufactured_problem, solve_dirichlet_stokes, ProblemCoeff};
use hstokes::grid::CellGrid;
use hstokes::solver::GmresParams;
use hstokes::study::{mms_suite, prepare_cell_stage, run_convergence_study, smoothing_suite};
use hstokes::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hstokes",
    version,
    about = "Periodic homogenization laboratory for 2D Stokes systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Study configuration (TOML); defaults describe the standard
    /// laminate sweep.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV, reports, and solution dumps.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Corrector cache directory (falls back to HS_CACHE_DIR).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Worker threads for the sweep fan-out; 0 lets the pool decide.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Disable the corrector cache for this run.
    #[arg(long, global = true)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cell problems, print the effective tensor, and cache
    /// the correctors.
    Cell,
    /// Verify the corrector and dual-corrector identities; a broken
    /// roundoff-level invariant exits 3.
    Identities,
    /// One Dirichlet solve (fine when --epsilon is given, homogenized
    /// otherwise); dumps the fields next to a printed summary.
    Solve {
        /// Oscillation scale of the fine problem.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Run the configured convergence sweep; writes rates.csv and
    /// report.txt.
    Rates,
    /// Measure the smoothing-operator bounds; a violated bound exits 3.
    Smoothing,
    /// Manufactured-solution convergence suite; an off-band slope
    /// exits 3.
    Mms,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("hstokes: {e}");
            let code = match e {
                Error::NonConvergence { .. } => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

/// Config resolution order: file (or defaults), then flag overrides,
/// then the HS_CACHE_DIR fallback, with --no-cache trumping everything.
fn load_config(cli: &Cli) -> Result<StudyConfig> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        None => StudyConfig::default(),
    };
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    if let Some(dir) = &cli.cache {
        cfg.cache_dir = Some(dir.clone());
    }
    if cfg.cache_dir.is_none() {
        if let Ok(dir) = std::env::var("HS_CACHE_DIR") {
            if !dir.is_empty() {
                cfg.cache_dir = Some(PathBuf::from(dir));
            }
        }
    }
    if cli.no_cache {
        cfg.cache_dir = None;
    }
    if let Some(dir) = &cli.out {
        cfg.out_dir = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &StudyConfig) -> Result<PathBuf> {
    let dir = cfg
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn print_tensor(label: &str, t: &Tensor4) {
    println!("{label} (rows i alpha, columns j beta):");
    for i in 0..2 {
        for a in 0..2 {
            let mut line = String::from("  ");
            for j in 0..2 {
                for b in 0..2 {
                    line.push_str(&format!("{:>14.8} ", t.get(i, j, a, b)));
                }
            }
            println!("{}", line.trim_end());
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Cell => cmd_cell(&cfg),
        Command::Identities => cmd_identities(&cfg),
        Command::Solve { epsilon } => cmd_solve(&cfg, epsilon),
        Command::Rates => cmd_rates(&cfg),
        Command::Smoothing => cmd_smoothing(&cfg),
        Command::Mms => cmd_mms(&cfg),
    }
}

fn cmd_cell(cfg: &StudyConfig) -> Result<ExitCode> {
    let stage = prepare_cell_stage(cfg)?;
    println!(
        "correctors for family {} {:?} at N = {}: {}",
        cfg.family.name(),
        cfg.family.params(),
        cfg.cell_n,
        if stage.from_cache {
            "restored from cache".to_string()
        } else {
            let iters: usize = stage.correctors.stats.iter().map(|s| s.iterations).sum();
            format!("computed in {iters} total Krylov iterations")
        }
    );
    print_tensor("effective tensor", &stage.a_hat);
    Ok(ExitCode::SUCCESS)
}

fn cmd_identities(cfg: &StudyConfig) -> Result<ExitCode> {
    let coeff = build_coefficient(cfg.family, cfg.mu)?;
    let params = GmresParams {
        tol: cfg.cell_tol,
        ..GmresParams::default()
    };
    let cell = solve_cell(&coeff, CellGrid::new(cfg.cell_n)?, &params)?;
    let rep = verify_corrector_identities(&coeff, &cell);
    println!("corrector identities at N = {}:", rep.n);
    println!("  skew symmetry of Phi        {:.3e}", rep.phi_skew_max);
    println!("  b = div Phi + grad q        {:.3e}", rep.flux_potential_residual);
    println!("  div q row = pi              {:.3e}", rep.pressure_potential_residual);
    println!("  div b = grad pi             {:.3e}", rep.flux_divergence_residual);
    println!("  b mean projection shift     {:.3e}", rep.b_mean_shift);
    println!("  corrector means             {:.3e}", rep.corrector_mean_max);
    println!("  corrector divergence        {:.3e}", rep.divergence_residual_max);
    println!(
        "  effective form in [{:.4}, {:.4}], declared mu {:.4}: {}",
        rep.effective_lower,
        rep.effective_upper,
        rep.declared_mu,
        if rep.effective_in_bounds { "ok" } else { "VIOLATED" }
    );

    let mut breaches = Vec::new();
    if rep.phi_skew_max > 1e-12 {
        breaches.push(format!("Phi skew symmetry {:.3e} > 1e-12", rep.phi_skew_max));
    }
    if rep.corrector_mean_max > 1e-10 {
        breaches.push(format!("corrector means {:.3e} > 1e-10", rep.corrector_mean_max));
    }
    if rep.divergence_residual_max > 1e-5 {
        breaches.push(format!(
            "corrector divergence {:.3e} > 1e-5",
            rep.divergence_residual_max
        ));
    }
    if !rep.effective_in_bounds {
        breaches.push("effective tensor leaves its ellipticity bounds".to_string());
    }
    if breaches.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for b in &breaches {
            eprintln!("threshold breach: {b}");
        }
        Ok(ExitCode::from(3))
    }
}

fn cmd_solve(cfg: &StudyConfig, epsilon: Option<f64>) -> Result<ExitCode> {
    if let Some(eps) = epsilon {
        if !(eps > 0.0 && eps <= 0.5) {
            return Err(Error::config(
                "epsilon",
                format!("must lie in (0, 1/2], got {eps}"),
            ));
        }
    }
    let stage = prepare_cell_stage(cfg)?;
    let reference = epsilon.unwrap_or(cfg.epsilons[0]);
    let m = cfg.domain_m(reference);
    let params = GmresParams {
        tol: cfg.domain_tol,
        ..GmresParams::default()
    };
    let hom = manufactured_problem(cfg.recipe, ProblemCoeff::effective(stage.a_hat), m)?;
    let (problem, eps_tag) = match epsilon {
        Some(eps) => (
            hom.with_source(ProblemCoeff::Oscillating {
                coeff: stage.coeff,
                epsilon: eps,
            }),
            eps,
        ),
        None => (hom, 0.0),
    };
    let sol = solve_dirichlet_stokes(&problem, &params)?;
    let dir = out_dir(cfg)?;
    let name = if epsilon.is_some() {
        format!("solution_eps{eps_tag}_m{m}.hssol")
    } else {
        format!("solution_hom_m{m}.hssol")
    };
    let path = dir.join(name);
    cache::write_solution(&path, eps_tag, &sol.velocity, &sol.pressure)?;
    println!(
        "solved {} on a {m} x {m} grid: {} iterations, residual {:.3e}",
        if epsilon.is_some() { "fine problem" } else { "homogenized problem" },
        sol.stats.iterations,
        sol.stats.residual
    );
    if sol.under_resolved {
        println!("warning: grid misses the h <= epsilon / 8 resolution rule");
    }
    println!("fields written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_rates(cfg: &StudyConfig) -> Result<ExitCode> {
    let report = run_convergence_study(cfg)?;
    let dir = out_dir(cfg)?;
    let csv_path = dir.join("rates.csv");
    let report_path = dir.join("report.txt");
    std::fs::write(&csv_path, report.to_csv())?;
    std::fs::write(&report_path, report.render())?;
    print!("{}", report.render());
    println!("csv written to {}", csv_path.display());
    println!("report written to {}", report_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_smoothing(cfg: &StudyConfig) -> Result<ExitCode> {
    let stage = prepare_cell_stage(cfg)?;
    let epsilons = [0.25, 0.125, 0.0625, 0.03125, 0.015625];
    let rep = smoothing_suite(&stage.correctors, &epsilons, 64, 10)?;
    println!("approximation ratios |S u - u| / (eps |grad u|) on a {0} x {0} grid:", rep.m);
    println!("    eps        trig       cubic      exponential");
    for (eps, r) in &rep.rows {
        println!("  {:<9.6} {:<10.4} {:<10.4} {:<10.4}", eps, r[0], r[1], r[2]);
    }
    println!(
        "product bound over {} cases: margin {:+.3e}, worst quotient {:.4}",
        rep.product_cases, rep.product_margin, rep.product_worst_quotient
    );
    let mut breaches = Vec::new();
    if rep.worst_ratio > 1.0 {
        breaches.push(format!("approximation ratio {:.3} > 1.0", rep.worst_ratio));
    }
    if rep.product_margin > 1e-8 {
        breaches.push(format!(
            "product bound violated by {:.3e}",
            rep.product_margin
        ));
    }
    if breaches.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for b in &breaches {
            eprintln!("threshold breach: {b}");
        }
        Ok(ExitCode::from(3))
    }
}

fn cmd_mms(cfg: &StudyConfig) -> Result<ExitCode> {
    let cases = mms_suite(&[32, 64, 128], cfg.domain_tol)?;
    let mut breach = false;
    for case in &cases {
        println!("{}:", case.label);
        for (h, err) in &case.points {
            println!("  h = {:<10.6} velocity L2 error {:.6e}", h, err);
        }
        println!(
            "  slope {:.3} (R^2 = {:.5})",
            case.fit.slope, case.fit.r_squared
        );
        if case.fit.slope < 1.7 || case.fit.slope > 2.3 {
            eprintln!(
                "threshold breach: {} slope {:.3} outside [1.7, 2.3]",
                case.label, case.fit.slope
            );
            breach = true;
        }
    }
    Ok(if breach {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}
