//! Discrete norms on the unit square, boundary-layer integrals, and
//! log-log rate fitting.
//!
//! All norms act on center-collocated scalar lattices (`m x m` samples at
//! cell midpoints); staggered velocities are collocated first via
//! [`crate::field::BoxVelocity::to_centers`]. The L2 quadrature is the
//! composite midpoint rule, which on this lattice integrates trigonometric
//! polynomials of full periods exactly. Gradients for the H1 seminorm use
//! centered differences inside and one-sided three-point stencils on the
//! boundary ring, so affine and quadratic profiles differentiate exactly.

use crate::error::{Error, Result};
use crate::field::Field2;
use crate::grid::DomainGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1Semi,
    H1,
}

/// All three norms of one field, sharing a single gradient pass.
#[derive(Debug, Clone, Copy)]
pub struct NormReport {
    /// Lattice extent of the measured field.
    pub m: usize,
    pub l2: f64,
    pub h1_semi: f64,
    pub h1: f64,
}

/// Least-squares fit of `log error` against `log epsilon`.
#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Differentiates a center lattice along `axis` (0 = x, 1 = y) on the same
/// lattice: centered differences inside, one-sided three-point stencils on
/// the first and last line, all second order.
pub fn center_gradient(f: &Field2, axis: usize, h: f64) -> Field2 {
    let (nx, ny) = (f.nx, f.ny);
    let extent = if axis == 0 { nx } else { ny };
    assert!(extent >= 3, "gradient stencil needs at least 3 samples");
    let inv2h = 1.0 / (2.0 * h);
    Field2::from_fn(nx, ny, |i, j| {
        let k = if axis == 0 { i } else { j };
        let get = |k: usize| {
            if axis == 0 {
                f.at(k, j)
            } else {
                f.at(i, k)
            }
        };
        if k == 0 {
            (-3.0 * get(0) + 4.0 * get(1) - get(2)) * inv2h
        } else if k == extent - 1 {
            (3.0 * get(extent - 1) - 4.0 * get(extent - 2) + get(extent - 3)) * inv2h
        } else {
            (get(k + 1) - get(k - 1)) * inv2h
        }
    })
}

fn squared_l2(components: &[&Field2]) -> (f64, f64) {
    let first = components.first().expect("at least one component");
    assert_eq!(first.nx, first.ny, "norms expect square center lattices");
    let m = first.nx;
    let h2 = 1.0 / (m * m) as f64;
    let mut s = 0.0;
    for c in components {
        assert_eq!((c.nx, c.ny), (m, m), "component lattices must agree");
        for &v in &c.data {
            s += v * v;
        }
    }
    (s * h2, 1.0 / m as f64)
}

fn squared_seminorm(components: &[&Field2], h: f64) -> f64 {
    let mut s = 0.0;
    for c in components {
        for axis in 0..2 {
            let g = center_gradient(c, axis, h);
            for &v in &g.data {
                s += v * v;
            }
        }
    }
    s * h * h
}

/// Discrete norm of a (possibly multi-component) center-collocated field.
pub fn discrete_norm(components: &[&Field2], kind: NormKind) -> f64 {
    let (l2sq, h) = squared_l2(components);
    match kind {
        NormKind::L2 => l2sq.sqrt(),
        NormKind::H1Semi => squared_seminorm(components, h).sqrt(),
        NormKind::H1 => (l2sq + squared_seminorm(components, h)).sqrt(),
    }
}

/// Computes L2, H1 seminorm, and full H1 norm in one pass. The report
/// satisfies `h1^2 = l2^2 + h1_semi^2` by construction.
pub fn norm_report(components: &[&Field2]) -> NormReport {
    let (l2sq, h) = squared_l2(components);
    let semisq = squared_seminorm(components, h);
    NormReport {
        m: components[0].nx,
        l2: l2sq.sqrt(),
        h1_semi: semisq.sqrt(),
        h1: (l2sq + semisq).sqrt(),
    }
}

/// Midpoint quadrature of `|u|^2` over the cells whose centers lie within
/// distance `r` of the boundary of the unit square. With `r` a multiple of
/// the mesh size the strip is resolved exactly, because center distances
/// are half-integer multiples of `h` and never tie with `r`.
pub fn boundary_layer_integral(components: &[&Field2], r: f64) -> f64 {
    let first = components.first().expect("at least one component");
    assert_eq!(first.nx, first.ny, "norms expect square center lattices");
    let m = first.nx;
    let h = 1.0 / m as f64;
    let h2 = h * h;
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            let x = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
            if DomainGrid::boundary_distance(x) < r {
                for c in components {
                    let v = c.at(i, j);
                    s += v * v;
                }
            }
        }
    }
    s * h2
}

/// Fits `log error = slope * log epsilon + intercept` by least squares.
/// Requires at least two points with positive abscissae and errors.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(Error::precondition(format!(
            "rate fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    for &(eps, err) in points {
        if !(eps > 0.0) || !(err > 0.0) {
            return Err(Error::precondition(format!(
                "rate fit needs positive samples, got ({eps}, {err})"
            )));
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - xbar) * (x - xbar);
        sxy += (x - xbar) * (y - ybar);
    }
    if sxx == 0.0 {
        return Err(Error::precondition(
            "rate fit needs at least two distinct epsilon values".to_string(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let fit = slope * x + intercept;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - ybar) * (y - ybar);
    }
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn centers(m: usize, f: impl Fn(f64, f64) -> f64) -> Field2 {
        let h = 1.0 / m as f64;
        Field2::from_fn(m, m, |i, j| f((i as f64 + 0.5) * h, (j as f64 + 0.5) * h))
    }

    #[test]
    fn unit_field_has_unit_l2_norm() {
        let f = centers(32, |_, _| 1.0);
        assert!((discrete_norm(&[&f], NormKind::L2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sine_l2_norm_matches_closed_form() {
        // Midpoint quadrature integrates sin^2 over full periods exactly.
        let f = centers(64, |x, _| (2.0 * std::f64::consts::PI * x).sin());
        let want = 0.5f64.sqrt();
        assert!((discrete_norm(&[&f], NormKind::L2) - want).abs() < 1e-13);
    }

    #[test]
    fn linear_field_has_unit_seminorm() {
        let f = centers(32, |x, _| x);
        assert!((discrete_norm(&[&f], NormKind::H1Semi) - 1.0).abs() < 1e-13);
        let full = discrete_norm(&[&f], NormKind::H1);
        let l2 = discrete_norm(&[&f], NormKind::L2);
        assert!((full * full - (1.0 + l2 * l2)).abs() < 1e-13);
    }

    #[test]
    fn report_components_are_consistent() {
        let f = centers(24, |x, y| (x * y).exp());
        let g = centers(24, |x, y| x - y * y);
        let rep = norm_report(&[&f, &g]);
        let resid = rep.h1 * rep.h1 - (rep.l2 * rep.l2 + rep.h1_semi * rep.h1_semi);
        assert!(resid.abs() <= 1e-13 * rep.h1 * rep.h1);
        assert_eq!(rep.m, 24);
    }

    #[test]
    fn boundary_strip_of_unit_field_measures_strip_area() {
        // Area of the strip of width 0.1: 1 - 0.8^2 = 0.36, resolved
        // exactly at m = 40 since the strip is 4 cells wide.
        let f = centers(40, |_, _| 1.0);
        let got = boundary_layer_integral(&[&f], 0.1);
        assert!((got - 0.36).abs() < 1e-14);
        // Implied constant of the layer estimate for u = 1: area / r <= 4.
        assert!(got / 0.1 <= 4.0);
    }

    #[test]
    fn boundary_layer_shrinks_nearly_linearly_for_smooth_fields() {
        // Rigid rotation about the center: smooth, with a nonvanishing
        // boundary trace, so the strip integral tracks the strip width.
        let m = 128;
        let f = centers(m, |_, y| -(y - 0.5));
        let g = centers(m, |x, _| x - 0.5);
        let coarse = boundary_layer_integral(&[&f, &g], 1.0 / 8.0);
        let fine = boundary_layer_integral(&[&f, &g], 1.0 / 16.0);
        let ratio = coarse / fine;
        assert!(
            (1.5..=2.5).contains(&ratio),
            "halving r changed the integral by {ratio}"
        );
    }

    #[test]
    fn exact_power_laws_are_recovered() {
        let fit = fit_rate(&[(0.25, 0.25), (0.125, 0.125), (0.0625, 0.0625)]).unwrap();
        assert!((fit.slope - 1.0).abs() <= 1e-12);
        assert!((fit.r_squared - 1.0).abs() <= 1e-12);
        let half = fit_rate(&[(0.25, 0.5), (0.0625, 0.25)]).unwrap();
        assert!((half.slope - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn degenerate_fits_are_rejected() {
        assert!(fit_rate(&[(0.25, 0.1)]).is_err());
        assert!(fit_rate(&[(0.25, 0.0), (0.125, 0.1)]).is_err());
        assert!(fit_rate(&[(0.25, -1.0), (0.125, 0.1)]).is_err());
        assert!(fit_rate(&[(0.25, 0.1), (0.25, 0.2)]).is_err());
    }

    proptest! {
        #[test]
        fn norms_are_homogeneous_and_subadditive(
            seed_u in proptest::collection::vec(-1.0f64..1.0, 64),
            seed_v in proptest::collection::vec(-1.0f64..1.0, 64),
        ) {
            let u = Field2 { nx: 8, ny: 8, data: seed_u };
            let v = Field2 { nx: 8, ny: 8, data: seed_v };
            let sum = Field2::from_fn(8, 8, |i, j| u.at(i, j) + v.at(i, j));
            for kind in [NormKind::L2, NormKind::H1Semi, NormKind::H1] {
                let nu = discrete_norm(&[&u], kind);
                let nv = discrete_norm(&[&v], kind);
                let ns = discrete_norm(&[&sum], kind);
                // Doubling is exact in floating point.
                let scaled = Field2::from_fn(8, 8, |i, j| -2.0 * u.at(i, j));
                prop_assert_eq!(discrete_norm(&[&scaled], kind), 2.0 * nu);
                prop_assert!(ns <= nu + nv + 1e-12 * (1.0 + nu + nv));
            }
        }
    }
}
