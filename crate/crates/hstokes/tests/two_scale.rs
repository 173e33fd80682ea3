//! The expansion machinery end to end: trace and divergence bookkeeping
//! of the boundary corrector, the repaired error field, extension-bound
//! constants, and the commutation identity of the smoothing operator.

use hstokes::cell::{pair_index, solve_cell};
use hstokes::coeff::{build_coefficient, Family};
use hstokes::config::StudyConfig;
use hstokes::domain::{manufactured_problem, solve_dirichlet_stokes, vortex, ProblemCoeff, Recipe};
use hstokes::field::Field2;
use hstokes::norms::{discrete_norm, fit_rate, NormKind};
use hstokes::solver::GmresParams;
use hstokes::study::run_convergence_study;
use hstokes::twoscale::{
    build_velocity_expansion, chi_component, extend_analytic, extend_reflection, required_pad,
    smooth_derivatives_analytic, solve_boundary_corrector, steklov_smooth, ExtendedField,
};

fn params() -> GmresParams {
    GmresParams {
        tol: 1e-9,
        ..GmresParams::default()
    }
}

fn laminate() -> Family {
    Family::Laminate {
        offset: 2.0,
        amplitude: 1.0,
    }
}

/// Plain lattice L2 with an explicit cell width, for padded lattices
/// whose physical extent is larger than the unit square.
fn lattice_l2(f: &Field2, h: f64) -> f64 {
    (f.data.iter().map(|v| v * v).sum::<f64>() * h * h).sqrt()
}

fn lattice_h2(ext: &ExtendedField) -> f64 {
    let h = ext.h();
    let mut sq = lattice_l2(&ext.values, h).powi(2);
    for i in 0..2 {
        let d = ext.derivative(i).unwrap();
        sq += lattice_l2(&d.values, h).powi(2);
        for j in 0..2 {
            let dd = d.derivative(j).unwrap();
            sq += lattice_l2(&dd.values, h).powi(2);
        }
    }
    sq.sqrt()
}

#[test]
fn boundary_corrector_carries_exactly_the_expansion_trace() {
    let coeff = build_coefficient(laminate(), None).unwrap();
    let cell = solve_cell(&coeff, hstokes::grid::CellGrid::new(32).unwrap(), &params()).unwrap();
    let (m, eps) = (32usize, 0.25);
    let h = 1.0 / m as f64;

    let hom = manufactured_problem(Recipe::Vortex, ProblemCoeff::effective(cell.a_hat), m).unwrap();
    let u0 = solve_dirichlet_stokes(&hom, &params()).unwrap();
    let sd =
        smooth_derivatives_analytic(m, eps, vortex::velocity_grad, vortex::velocity_hessian)
            .unwrap();
    let w = solve_boundary_corrector(&coeff, eps, &cell.correctors, &sd, u0.grid, &params())
        .unwrap();

    // The trace must be the expansion's correction term, nothing else.
    let term = |c: usize, x: [f64; 2]| -> f64 {
        let mut s = 0.0;
        for j in 0..2 {
            for b in 0..2 {
                let chi = &cell.correctors.chi[pair_index(j, b)];
                s += chi_component(chi, c, eps, x) * sd.grad[b][j].value_at(x);
            }
        }
        eps * s
    };
    let mut worst = 0.0f64;
    for j in 0..m {
        let y = (j as f64 + 0.5) * h;
        worst = worst.max((w.solution.velocity.u1.at(0, j) - term(0, [0.0, y])).abs());
        worst = worst.max((w.solution.velocity.u1.at(m, j) - term(0, [1.0, y])).abs());
        let x = (j as f64 + 0.5) * h;
        worst = worst.max((w.solution.velocity.u2.at(j, 0) - term(1, [x, 0.0])).abs());
        worst = worst.max((w.solution.velocity.u2.at(j, m) - term(1, [x, 1.0])).abs());
    }
    assert!(worst < 1e-14, "trace deviates from the expansion term by {worst:.3e}");

    // Divergence data assembled as the discrete divergence of the face
    // interpolant is compatible with that trace by the discrete Gauss
    // theorem; the correcting shift must be rounding noise.
    assert!(
        w.divergence_correction.abs() < 1e-12,
        "compatibility shift too large: {:.3e}",
        w.divergence_correction
    );
}

#[test]
fn repaired_expansion_error_is_discretely_divergence_free() {
    let coeff = build_coefficient(laminate(), None).unwrap();
    let cell = solve_cell(&coeff, hstokes::grid::CellGrid::new(32).unwrap(), &params()).unwrap();
    let (m, eps) = (32usize, 0.25);
    let h = 1.0 / m as f64;

    let hom = manufactured_problem(Recipe::Vortex, ProblemCoeff::effective(cell.a_hat), m).unwrap();
    let fine_problem = hom.with_source(ProblemCoeff::Oscillating {
        coeff,
        epsilon: eps,
    });
    let u0 = solve_dirichlet_stokes(&hom, &params()).unwrap();
    let fine = solve_dirichlet_stokes(&fine_problem, &params()).unwrap();
    let sd =
        smooth_derivatives_analytic(m, eps, vortex::velocity_grad, vortex::velocity_hessian)
            .unwrap();
    let v = build_velocity_expansion(&u0.velocity, &cell.correctors, &sd, eps);
    let w = solve_boundary_corrector(&coeff, eps, &cell.correctors, &sd, u0.grid, &params())
        .unwrap();

    // u_eps - v_eps + w_eps: every constituent's divergence is data, and
    // the data cancel exactly, so the discrete divergence vanishes to
    // solver tolerance.
    let u1 = |i: usize, j: usize| {
        fine.velocity.u1.at(i, j) - v.u1.at(i, j) + w.solution.velocity.u1.at(i, j)
    };
    let u2 = |i: usize, j: usize| {
        fine.velocity.u2.at(i, j) - v.u2.at(i, j) + w.solution.velocity.u2.at(i, j)
    };
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let div = (u1(i + 1, j) - u1(i, j)) / h + (u2(i, j + 1) - u2(i, j)) / h;
            worst = worst.max(div.abs());
        }
    }
    assert!(worst < 1e-6, "repaired field leaks divergence: {worst:.3e}");
}

#[test]
fn repaired_error_decays_one_full_order_across_the_sweep() {
    let cfg = StudyConfig {
        cell_n: 64,
        epsilons: vec![0.125, 0.0625, 0.03125],
        ..StudyConfig::default()
    };
    let report = run_convergence_study(&cfg).unwrap();
    let pts: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.epsilon, r.h1_full)).collect();
    for pair in pts.windows(2) {
        assert!(
            pair[1].1 < pair[0].1,
            "repaired error failed to decrease: {pts:?}"
        );
    }
    let fit = fit_rate(&pts).unwrap();
    assert!(
        (0.85..=1.3).contains(&fit.slope),
        "repaired H1 error slope {:.3} outside [0.85, 1.3] (points {pts:?})",
        fit.slope
    );
}

#[test]
fn extension_modes_keep_the_h2_norm_under_a_fixed_constant() {
    let m = 64usize;
    let h = 1.0 / m as f64;
    let pad = required_pad(m, 0.25) + 2;
    let component = |x: [f64; 2]| vortex::velocity(x)[0];

    let interior = Field2::from_fn(m, m, |i, j| {
        component([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h])
    });
    let interior_h2 = {
        let g0 = hstokes::norms::center_gradient(&interior, 0, h);
        let g1 = hstokes::norms::center_gradient(&interior, 1, h);
        let mut sq = discrete_norm(&[&interior], NormKind::L2).powi(2);
        for g in [&g0, &g1] {
            sq += discrete_norm(&[g], NormKind::L2).powi(2);
            sq += discrete_norm(&[&hstokes::norms::center_gradient(g, 0, h)], NormKind::L2)
                .powi(2);
            sq += discrete_norm(&[&hstokes::norms::center_gradient(g, 1, h)], NormKind::L2)
                .powi(2);
        }
        sq.sqrt()
    };

    let analytic = lattice_h2(&extend_analytic(m, pad, component)) / interior_h2;
    let reflected = lattice_h2(&extend_reflection(&interior, pad).unwrap()) / interior_h2;
    println!("extension H2 constants: analytic {analytic:.3}, reflection {reflected:.3}");

    assert!(analytic.is_finite() && reflected.is_finite());
    assert!(
        analytic < 6.0,
        "analytic extension constant blew up: {analytic:.3}"
    );
    // Even reflection can kink odd derivatives across the faces, so its
    // constant is looser, but it must stay of order one.
    assert!(
        reflected < 12.0,
        "reflection extension constant blew up: {reflected:.3}"
    );
}

#[test]
fn smoothing_commutes_with_lattice_differentiation() {
    let m = 64usize;
    let eps = 0.125;
    let pad = required_pad(m, eps) + 2;
    let f = |x: [f64; 2]| (2.0 * std::f64::consts::PI * x[0]).sin()
        * (2.0 * std::f64::consts::PI * x[1]).cos()
        + 0.5 * x[0] * x[1];
    let ext = extend_analytic(m, pad, f);

    for axis in 0..2 {
        let smooth_then_diff = steklov_smooth(&ext, eps).unwrap().derivative(axis).unwrap();
        let diff_then_smooth = steklov_smooth(&ext.derivative(axis).unwrap(), eps).unwrap();
        let a = smooth_then_diff.restrict();
        let b = diff_then_smooth.restrict();
        let worst = a
            .data
            .iter()
            .zip(&b.data)
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        assert!(
            worst < 1e-12,
            "axis {axis}: smoothing and differencing failed to commute, gap {worst:.3e}"
        );
    }
}
