//! Dirichlet Stokes problems on the unit square: data assembly,
//! compatibility checking, the Krylov solve for oscillating and constant
//! coefficients, and manufactured problems for verification.
//!
//! A problem carries its coefficient source, body force sampled on the
//! staggered faces, divergence data at centers, and Dirichlet traces. The
//! solve eliminates boundary rows by lifting: the operator applied to the
//! boundary data moves to the right-hand side and the remaining system in
//! the interior unknowns goes to the preconditioned Krylov loop.

use crate::coeff::{CoefficientTensor, Tensor4, D};
use crate::error::{Error, Result};
use crate::field::{BoxVelocity, Field2};
use crate::grid::DomainGrid;
use crate::oper::{BoundaryData, BoxStokesOp, CoeffMap};
use crate::solver::{solve_box_stokes, GmresParams, SolveStats};

/// Coefficient source of a domain problem: a periodic tensor read at
/// `x / epsilon`, or a constant tensor (homogenized problems).
#[derive(Debug, Clone)]
pub enum ProblemCoeff {
    Oscillating {
        coeff: CoefficientTensor,
        epsilon: f64,
    },
    Constant {
        tensor: Tensor4,
        scalar_mean: f64,
    },
}

impl ProblemCoeff {
    /// Wraps a constant tensor, deriving the reference viscosity for the
    /// preconditioner from the mean of its Laplacian-type diagonal.
    pub fn effective(tensor: Tensor4) -> Self {
        let mut diag = 0.0;
        for i in 0..D {
            for a in 0..D {
                diag += tensor.get(i, i, a, a);
            }
        }
        ProblemCoeff::Constant {
            tensor,
            scalar_mean: diag / (D * D) as f64,
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match *self {
            ProblemCoeff::Oscillating { epsilon, .. } => Some(epsilon),
            ProblemCoeff::Constant { .. } => None,
        }
    }

    pub fn as_map(&self) -> CoeffMap<'_> {
        match *self {
            ProblemCoeff::Oscillating { ref coeff, epsilon } => {
                CoeffMap::Oscillating { coeff, epsilon }
            }
            ProblemCoeff::Constant {
                tensor,
                scalar_mean,
            } => CoeffMap::Constant {
                tensor,
                scalar_mean,
            },
        }
    }

    /// Tensor value and spatial gradient at a domain point.
    fn at_with_grad(&self, x: [f64; 2]) -> (Tensor4, [Tensor4; 2]) {
        match *self {
            ProblemCoeff::Oscillating { ref coeff, epsilon } => {
                let y = [x[0] / epsilon, x[1] / epsilon];
                let a = coeff.evaluate(y);
                let mut da = coeff.evaluate_grad(y);
                for t in &mut da {
                    for v in &mut t.0 {
                        *v /= epsilon;
                    }
                }
                (a, da)
            }
            ProblemCoeff::Constant { tensor, .. } => {
                (tensor, [Tensor4::default(), Tensor4::default()])
            }
        }
    }
}

/// Exact solution attached to manufactured problems, sampled on the
/// problem's staggered lattices.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub velocity: BoxVelocity,
    pub pressure: Field2,
}

/// A Dirichlet Stokes problem on the unit square.
#[derive(Debug, Clone)]
pub struct StokesProblem {
    pub grid: DomainGrid,
    pub source: ProblemCoeff,
    /// Body force sampled at the velocity faces; boundary-face entries
    /// are ignored (no momentum rows live there).
    pub force: BoxVelocity,
    /// Divergence data at cell centers.
    pub div_data: Field2,
    /// Dirichlet velocity trace on all four edges.
    pub boundary: BoundaryData,
    pub exact: Option<ExactSolution>,
}

impl StokesProblem {
    /// Same data, different coefficients. Drops the exact solution: it
    /// belongs to the original operator, not the new one.
    pub fn with_source(&self, source: ProblemCoeff) -> Self {
        StokesProblem {
            source,
            exact: None,
            ..self.clone()
        }
    }
}

/// Solved problem: velocity with the prescribed normal traces embedded in
/// its boundary faces, mean-zero pressure, and solver diagnostics.
#[derive(Debug, Clone)]
pub struct DomainSolution {
    pub grid: DomainGrid,
    pub velocity: BoxVelocity,
    pub pressure: Field2,
    pub stats: SolveStats,
    /// True when the mesh misses the `h <= epsilon / 8` resolution rule.
    pub under_resolved: bool,
    pub compatibility_residual: f64,
}

/// Discrete `int_Omega g - int_bdry f . n`, using the center quadrature
/// for the bulk and edge-midpoint sums for the flux. Must vanish for the
/// problem to admit a velocity with the prescribed trace.
pub fn check_compatibility(problem: &StokesProblem) -> f64 {
    let m = problem.grid.m();
    let h = problem.grid.h();
    let mut bulk = 0.0;
    for &v in &problem.div_data.data {
        bulk += v;
    }
    bulk *= h * h;
    let b = &problem.boundary;
    let mut flux = 0.0;
    for j in 0..m {
        flux += b.u1_right[j] - b.u1_left[j];
    }
    for i in 0..m {
        flux += b.u2_top[i] - b.u2_bottom[i];
    }
    bulk - flux * h
}

fn data_scale(problem: &StokesProblem) -> f64 {
    let h = problem.grid.h();
    let mut g2 = 0.0;
    for &v in &problem.div_data.data {
        g2 += v * v;
    }
    (g2 * h * h).sqrt() + problem.boundary.max_abs() + 1e-30
}

/// Solves the problem to the requested Krylov tolerance. Fails on an
/// incompatible problem or a non-convergent solve; an under-resolved
/// oscillation (`h > epsilon / 8`) is recorded but not fatal.
pub fn solve_dirichlet_stokes(
    problem: &StokesProblem,
    params: &GmresParams,
) -> Result<DomainSolution> {
    let grid = problem.grid;
    let m = grid.m();
    let compat = check_compatibility(problem);
    if compat.abs() > 1e-10 * data_scale(problem) {
        return Err(Error::precondition(format!(
            "incompatible Stokes data: residual {compat:.3e} for scale {:.3e}",
            data_scale(problem)
        )));
    }
    let under_resolved = match problem.source.epsilon() {
        Some(eps) => grid.h() > eps / 8.0 + 1e-14,
        None => false,
    };

    let op = BoxStokesOp::new(grid, problem.source.as_map());
    let (lift_u, lift_div) = op.bc_contribution(&problem.boundary);
    let mut rhs_u = BoxVelocity::zeros(m);
    for i in 1..m {
        for j in 0..m {
            *rhs_u.u1.at_mut(i, j) = problem.force.u1.at(i, j) - lift_u.u1.at(i, j);
        }
    }
    for i in 0..m {
        for j in 1..m {
            *rhs_u.u2.at_mut(i, j) = problem.force.u2.at(i, j) - lift_u.u2.at(i, j);
        }
    }
    let rhs_div = Field2::from_fn(m, m, |i, j| problem.div_data.at(i, j) - lift_div.at(i, j));

    let (mut u, p, stats) = solve_box_stokes(&op, &rhs_u, &rhs_div, params, "domain Stokes")?;

    let b = &problem.boundary;
    for j in 0..m {
        *u.u1.at_mut(0, j) = b.u1_left[j];
        *u.u1.at_mut(m, j) = b.u1_right[j];
    }
    for i in 0..m {
        *u.u2.at_mut(i, 0) = b.u2_bottom[i];
        *u.u2.at_mut(i, m) = b.u2_top[i];
    }
    Ok(DomainSolution {
        grid,
        velocity: u,
        pressure: p,
        stats,
        under_resolved,
        compatibility_residual: compat,
    })
}

/// Constant-coefficient convenience wrapper: solves `-div(T grad u)
/// + grad p = F, div u = g` with trace `f`.
pub fn solve_homogenized(
    tensor: &Tensor4,
    force: BoxVelocity,
    div_data: Field2,
    boundary: BoundaryData,
    grid: DomainGrid,
    params: &GmresParams,
) -> Result<DomainSolution> {
    let problem = StokesProblem {
        grid,
        source: ProblemCoeff::effective(*tensor),
        force,
        div_data,
        boundary,
        exact: None,
    };
    solve_dirichlet_stokes(&problem, params)
}

/// Built-in manufactured cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    /// All data zero; the solution is zero by uniqueness.
    Zero,
    /// Divergence-free vortex from the stream function
    /// `sin^2(pi x_1) sin^2(pi x_2)` with pressure
    /// `sin(2 pi x_1) cos(2 pi x_2)`; vanishes on the boundary.
    Vortex,
    /// `g = 1` with zero trace: violates the divergence theorem, used to
    /// exercise the rejection path.
    Incompatible,
}

/// Smooth reference fields of the vortex recipe.
pub mod vortex {
    use std::f64::consts::PI;

    pub fn velocity(x: [f64; 2]) -> [f64; 2] {
        let (s1, s2) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        [
            PI * s1 * s1 * (2.0 * PI * x[1]).sin(),
            -PI * (2.0 * PI * x[0]).sin() * s2 * s2,
        ]
    }

    /// `grad[b][j] = d_j u^b`.
    pub fn velocity_grad(x: [f64; 2]) -> [[f64; 2]; 2] {
        let p2 = PI * PI;
        let (s1, s2) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        let (t1, t2) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin());
        let (c1, c2) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos());
        [
            [p2 * t1 * t2, 2.0 * p2 * s1 * s1 * c2],
            [-2.0 * p2 * c1 * s2 * s2, -p2 * t1 * t2],
        ]
    }

    /// `hess[b][i][j] = d_i d_j u^b`.
    pub fn velocity_hessian(x: [f64; 2]) -> [[[f64; 2]; 2]; 2] {
        let p3 = PI * PI * PI;
        let (s1, s2) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        let (t1, t2) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin());
        let (c1, c2) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos());
        [
            [
                [2.0 * p3 * c1 * t2, 2.0 * p3 * t1 * c2],
                [2.0 * p3 * t1 * c2, -4.0 * p3 * s1 * s1 * t2],
            ],
            [
                [4.0 * p3 * t1 * s2 * s2, -2.0 * p3 * c1 * t2],
                [-2.0 * p3 * c1 * t2, -2.0 * p3 * t1 * c2],
            ],
        ]
    }

    pub fn pressure(x: [f64; 2]) -> f64 {
        (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()
    }

    pub fn pressure_grad(x: [f64; 2]) -> [f64; 2] {
        [
            2.0 * PI * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos(),
            -2.0 * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin(),
        ]
    }
}

/// Body force of the vortex fields under the given coefficients,
/// `F^a = -d_i(a_ij^ab d_j u^b) + d_a p`, assembled analytically.
pub fn vortex_force(source: &ProblemCoeff, x: [f64; 2], alpha: usize) -> f64 {
    let (a, da) = source.at_with_grad(x);
    let du = vortex::velocity_grad(x);
    let hess = vortex::velocity_hessian(x);
    let mut f = vortex::pressure_grad(x)[alpha];
    for i in 0..D {
        for j in 0..D {
            for b in 0..D {
                f -= da[i].get(i, j, alpha, b) * du[b][j] + a.get(i, j, alpha, b) * hess[b][i][j];
            }
        }
    }
    f
}

/// Builds a manufactured problem on an `m x m` grid.
pub fn manufactured_problem(recipe: Recipe, source: ProblemCoeff, m: usize) -> Result<StokesProblem> {
    let grid = DomainGrid::new(m)?;
    let h = grid.h();
    match recipe {
        Recipe::Zero => Ok(StokesProblem {
            grid,
            source,
            force: BoxVelocity::zeros(m),
            div_data: Field2::zeros(m, m),
            boundary: BoundaryData::zero(m),
            exact: Some(ExactSolution {
                velocity: BoxVelocity::zeros(m),
                pressure: Field2::zeros(m, m),
            }),
        }),
        Recipe::Incompatible => Ok(StokesProblem {
            grid,
            source,
            force: BoxVelocity::zeros(m),
            div_data: Field2::from_fn(m, m, |_, _| 1.0),
            boundary: BoundaryData::zero(m),
            exact: None,
        }),
        Recipe::Vortex => {
            let mut force = BoxVelocity::zeros(m);
            for i in 0..=m {
                for j in 0..m {
                    let x = [i as f64 * h, (j as f64 + 0.5) * h];
                    *force.u1.at_mut(i, j) = vortex_force(&source, x, 0);
                }
            }
            for i in 0..m {
                for j in 0..=m {
                    let x = [(i as f64 + 0.5) * h, j as f64 * h];
                    *force.u2.at_mut(i, j) = vortex_force(&source, x, 1);
                }
            }
            let mut exact_u = BoxVelocity::zeros(m);
            for i in 0..=m {
                for j in 0..m {
                    let x = [i as f64 * h, (j as f64 + 0.5) * h];
                    *exact_u.u1.at_mut(i, j) = vortex::velocity(x)[0];
                }
            }
            for i in 0..m {
                for j in 0..=m {
                    let x = [(i as f64 + 0.5) * h, j as f64 * h];
                    *exact_u.u2.at_mut(i, j) = vortex::velocity(x)[1];
                }
            }
            let mut exact_p = Field2::from_fn(m, m, |i, j| {
                let x = grid.center(i, j);
                vortex::pressure(x)
            });
            exact_p.project_mean_zero();
            Ok(StokesProblem {
                grid,
                source,
                force,
                div_data: Field2::zeros(m, m),
                boundary: BoundaryData::zero(m),
                exact: Some(ExactSolution {
                    velocity: exact_u,
                    pressure: exact_p,
                }),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{build_coefficient, Family};
    use crate::norms::{discrete_norm, NormKind};

    fn identity_source() -> ProblemCoeff {
        ProblemCoeff::effective(Tensor4::isotropic(1.0))
    }

    fn velocity_error_l2(sol: &DomainSolution, exact: &ExactSolution) -> f64 {
        let uc = sol.velocity.to_centers();
        let ec = exact.velocity.to_centers();
        let d1 = Field2::from_fn(sol.grid.m(), sol.grid.m(), |i, j| {
            uc[0].at(i, j) - ec[0].at(i, j)
        });
        let d2 = Field2::from_fn(sol.grid.m(), sol.grid.m(), |i, j| {
            uc[1].at(i, j) - ec[1].at(i, j)
        });
        discrete_norm(&[&d1, &d2], NormKind::L2)
    }

    #[test]
    fn compatibility_matches_the_divergence_theorem() {
        let m = 32;
        let zero = manufactured_problem(Recipe::Zero, identity_source(), m).unwrap();
        assert_eq!(check_compatibility(&zero), 0.0);

        // g = 2 with the identity trace: int g = 2 = int x . n.
        let mut expanding = manufactured_problem(Recipe::Zero, identity_source(), m).unwrap();
        expanding.div_data = Field2::from_fn(m, m, |_, _| 2.0);
        expanding.boundary = BoundaryData::from_fn(m, |x| [x[0], x[1]]);
        assert!(check_compatibility(&expanding).abs() < 1e-13);

        let bad = manufactured_problem(Recipe::Incompatible, identity_source(), m).unwrap();
        assert!((check_compatibility(&bad) - 1.0).abs() < 1e-13);
        let err = solve_dirichlet_stokes(&bad, &GmresParams::default());
        assert!(err.is_err());
    }

    #[test]
    fn zero_data_produces_zero_fields() {
        let problem = manufactured_problem(Recipe::Zero, identity_source(), 16).unwrap();
        let sol = solve_dirichlet_stokes(&problem, &GmresParams::default()).unwrap();
        assert_eq!(sol.velocity.u1.max_abs(), 0.0);
        assert_eq!(sol.velocity.u2.max_abs(), 0.0);
        assert_eq!(sol.pressure.max_abs(), 0.0);
    }

    #[test]
    fn linear_expansion_flow_is_reproduced_to_solver_tolerance() {
        // u = x, p = 0 solves the identity-coefficient problem with
        // F = 0, g = 2: every stencil is exact on affine data, so the
        // only error left is the Krylov tolerance.
        let m = 32;
        let mut problem = manufactured_problem(Recipe::Zero, identity_source(), m).unwrap();
        problem.div_data = Field2::from_fn(m, m, |_, _| 2.0);
        problem.boundary = BoundaryData::from_fn(m, |x| [x[0], x[1]]);
        problem.exact = None;
        let sol = solve_dirichlet_stokes(&problem, &GmresParams::default()).unwrap();
        let h = 1.0 / m as f64;
        let mut worst = 0.0f64;
        for i in 0..=m {
            for j in 0..m {
                worst = worst.max((sol.velocity.u1.at(i, j) - i as f64 * h).abs());
            }
        }
        for i in 0..m {
            for j in 1..m {
                worst = worst.max((sol.velocity.u2.at(i, j) - j as f64 * h).abs());
            }
        }
        assert!(worst < 1e-7, "linear flow error {worst}");
        assert!(sol.pressure.max_abs() < 1e-7);
        assert!(sol.pressure.mean().abs() <= 1e-12 * (1.0 + sol.pressure.max_abs()));
    }

    #[test]
    fn vortex_converges_at_second_order_with_identity_coefficients() {
        let mut errors = Vec::new();
        for m in [24usize, 48] {
            let problem = manufactured_problem(Recipe::Vortex, identity_source(), m).unwrap();
            let sol = solve_dirichlet_stokes(&problem, &GmresParams::default()).unwrap();
            assert!(!sol.under_resolved);
            errors.push(velocity_error_l2(&sol, problem.exact.as_ref().unwrap()));
        }
        let ratio = errors[0] / errors[1];
        assert!(
            (3.2..=4.9).contains(&ratio),
            "doubling the grid gave ratio {ratio}, errors {errors:?}"
        );
    }

    #[test]
    fn vortex_converges_at_second_order_with_oscillating_coefficients() {
        let coeff = build_coefficient(
            Family::Laminate {
                offset: 2.0,
                amplitude: 1.0,
            },
            None,
        )
        .unwrap();
        let source = ProblemCoeff::Oscillating {
            coeff,
            epsilon: 0.25,
        };
        let mut errors = Vec::new();
        for m in [32usize, 64] {
            let problem = manufactured_problem(Recipe::Vortex, source.clone(), m).unwrap();
            let sol = solve_dirichlet_stokes(&problem, &GmresParams::default()).unwrap();
            assert!(!sol.under_resolved, "m = {m} flagged under-resolved");
            assert!(sol.pressure.mean().abs() <= 1e-12 * (1.0 + sol.pressure.max_abs()));
            errors.push(velocity_error_l2(&sol, problem.exact.as_ref().unwrap()));
        }
        let ratio = errors[0] / errors[1];
        assert!(
            (3.2..=4.9).contains(&ratio),
            "doubling the grid gave ratio {ratio}, errors {errors:?}"
        );

        // The resolution rule h <= eps / 8 fires just past the boundary.
        let coarse = manufactured_problem(Recipe::Vortex, source, 16).unwrap();
        let sol = solve_dirichlet_stokes(&coarse, &GmresParams::default()).unwrap();
        assert!(sol.under_resolved);
    }

    #[test]
    fn returned_velocity_satisfies_the_divergence_data() {
        let m = 32;
        let problem = manufactured_problem(Recipe::Vortex, identity_source(), m).unwrap();
        let params = GmresParams::default();
        let sol = solve_dirichlet_stokes(&problem, &params).unwrap();
        let op = BoxStokesOp::new(problem.grid, problem.source.as_map());
        let mut out_u = BoxVelocity::zeros(m);
        let mut out_div = Field2::zeros(m, m);
        op.apply(
            &sol.velocity,
            Some(&sol.pressure),
            Some(&problem.boundary),
            &mut out_u,
            &mut out_div,
        );
        let mut div_resid = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                div_resid = div_resid.max((out_div.at(i, j) - problem.div_data.at(i, j)).abs());
            }
        }
        // The Krylov residual is measured in the scaled system; allow a
        // modest factor over the raw tolerance.
        assert!(div_resid <= 1e-6, "divergence residual {div_resid}");
    }
}
