//! Property tests for the measurement layer: norms, rate fits, the
//! boundary-layer quadrature, and the CSV contract of the study report.

use hstokes::config::StudyConfig;
use hstokes::field::Field2;
use hstokes::norms::{boundary_layer_integral, discrete_norm, fit_rate, NormKind};
use hstokes::study::{run_convergence_study, COLUMNS};
use proptest::prelude::*;

fn random_field(m: usize, seed: &[f64]) -> Field2 {
    // Deterministic pseudo-field: smooth modes weighted by the seed so
    // proptest shrinking stays meaningful.
    let h = 1.0 / m as f64;
    Field2::from_fn(m, m, |i, j| {
        let x = (i as f64 + 0.5) * h;
        let y = (j as f64 + 0.5) * h;
        let mut v = 0.0;
        for (k, w) in seed.iter().enumerate() {
            let f = (k + 1) as f64 * std::f64::consts::PI;
            v += w * (f * x).sin() * (f * y).cos();
        }
        v
    })
}

proptest! {
    #[test]
    fn fit_recovers_exact_power_laws(
        slope in -3.0f64..3.0,
        scale in 0.01f64..100.0,
        count in 3usize..8,
    ) {
        let points: Vec<(f64, f64)> = (0..count)
            .map(|k| {
                let eps = 0.5f64.powi(k as i32 + 1);
                (eps, scale * eps.powf(slope))
            })
            .collect();
        let fit = fit_rate(&points).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-12,
            "slope {} recovered as {}", slope, fit.slope);
        prop_assert!(fit.r_squared > 1.0 - 1e-9);
        prop_assert_eq!(fit.points, count);
    }

    #[test]
    fn norms_scale_homogeneously(
        alpha in -50.0f64..50.0,
        seed in prop::collection::vec(-1.0f64..1.0, 1..5),
    ) {
        let f = random_field(24, &seed);
        let scaled = Field2 {
            nx: f.nx,
            ny: f.ny,
            data: f.data.iter().map(|v| alpha * v).collect(),
        };
        for kind in [NormKind::L2, NormKind::H1Semi, NormKind::H1] {
            let a = discrete_norm(&[&scaled], kind);
            let b = alpha.abs() * discrete_norm(&[&f], kind);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b),
                "{:?}: {} vs {}", kind, a, b);
        }
    }

    #[test]
    fn norms_obey_the_triangle_inequality(
        sa in prop::collection::vec(-1.0f64..1.0, 1..5),
        sb in prop::collection::vec(-1.0f64..1.0, 1..5),
    ) {
        let fa = random_field(24, &sa);
        let fb = random_field(24, &sb);
        let sum = Field2 {
            nx: fa.nx,
            ny: fa.ny,
            data: fa.data.iter().zip(&fb.data).map(|(a, b)| a + b).collect(),
        };
        for kind in [NormKind::L2, NormKind::H1Semi, NormKind::H1] {
            let lhs = discrete_norm(&[&sum], kind);
            let rhs = discrete_norm(&[&fa], kind) + discrete_norm(&[&fb], kind);
            prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs));
        }
    }
}

#[test]
fn fit_rejects_degenerate_inputs() {
    assert!(fit_rate(&[(0.25, 1.0)]).is_err());
    assert!(fit_rate(&[(0.25, 1.0), (0.125, 0.0)]).is_err());
    assert!(fit_rate(&[(0.25, 1.0), (0.125, -2.0)]).is_err());
}

#[test]
fn boundary_layer_integral_shrinks_near_linearly_with_the_radius() {
    let m = 128usize;
    let h = 1.0 / m as f64;
    // Sample the vortex off its wall-aligned phase: a field vanishing on
    // the walls would make the layer integral superlinear in r, hiding
    // the area-driven trend the quadrature is supposed to expose.
    let fields: Vec<Field2> = (0..2)
        .map(|c| {
            Field2::from_fn(m, m, |i, j| {
                let x = (i as f64 + 0.5) * h + 0.37;
                let y = (j as f64 + 0.5) * h + 0.21;
                hstokes::domain::vortex::velocity([x, y])[c]
            })
        })
        .collect();
    let refs: Vec<&Field2> = fields.iter().collect();
    let full = boundary_layer_integral(&refs, 0.2);
    let half = boundary_layer_integral(&refs, 0.1);
    assert!(full > 0.0 && half > 0.0);
    let factor = full / half;
    assert!(
        (1.5..=2.5).contains(&factor),
        "halving the radius changed the integral by {factor:.3}, expected a near-linear trend"
    );
}

#[test]
fn constant_coefficients_produce_error_columns_at_solver_tolerance() {
    let cfg = StudyConfig {
        family: hstokes::coeff::Family::Constant,
        cell_n: 32,
        epsilons: vec![0.25, 0.125],
        ..StudyConfig::default()
    };
    let report = run_convergence_study(&cfg).unwrap();
    for row in &report.rows {
        for name in ["l2_u", "h1_twoscale", "l2_pressure", "l2_w", "h1_w"] {
            let v = row.column(name);
            assert!(
                v <= 1e-6,
                "column {name} should sit at tolerance for constant coefficients, got {v:.3e}"
            );
        }
    }

    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epsilon,l2_u,h1_twoscale,l2_pressure,l2_w,h1_w,bl_const"
    );
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), report.rows.len() + COLUMNS.len());
    for row_line in &body[..report.rows.len()] {
        assert_eq!(row_line.split(',').count(), 7);
    }
    for (slope_line, name) in body[report.rows.len()..].iter().zip(COLUMNS) {
        assert!(
            slope_line.starts_with(&format!("# slope_{name} = ")),
            "unexpected slope line: {slope_line}"
        );
    }
}
