//! Extension, smoothing, and the two-scale expansion pieces: padded
//! extensions of domain fields, the cell-average smoothing operator,
//! periodic sampling of cell fields at `x / epsilon`, the first-order
//! velocity and pressure expansions, boundary cutoffs, and the boundary
//! corrector solve.
//!
//! Extended fields live on a center lattice that continues the domain
//! lattice outward by a uniform ring of `pad_cells` cells, so index
//! `(i, j)` of the padded array sits at `((i - pad + 1/2) h, ...)`.
//! Operations that consume a margin (differentiation, smoothing) return a
//! field with a smaller pad and fail when the pad runs out.

use crate::cell::{pair_index, CorrectorSet};
use crate::coeff::CoefficientTensor;
use crate::domain::{
    check_compatibility, solve_dirichlet_stokes, DomainSolution, ProblemCoeff, StokesProblem,
};
use crate::error::{Error, Result};
use crate::field::{BoxVelocity, Field2};
use crate::grid::DomainGrid;
use crate::oper::BoundaryData;
use crate::solver::GmresParams;

/// How an extension was produced; recorded so studies can report which
/// mode a constant was measured under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtensionMode {
    /// Values of a closed-form formula, valid on the whole plane.
    Analytic,
    /// Even reflection of interior samples across each face; corners get
    /// the double reflection.
    Reflection,
}

/// Scalar field on the padded center lattice around the unit square.
#[derive(Debug, Clone)]
pub struct ExtendedField {
    /// Interior resolution (the domain contributes `m x m` centers).
    pub m: usize,
    /// Width of the surrounding ring, in cells.
    pub pad_cells: usize,
    /// `(m + 2 pad)^2` samples, row-major as in [`Field2`].
    pub values: Field2,
    pub mode: ExtensionMode,
}

impl ExtendedField {
    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    fn size(&self) -> usize {
        self.m + 2 * self.pad_cells
    }

    /// Bilinear value at `x`, which must lie at least half a cell inside
    /// the padded hull.
    pub fn value_at(&self, x: [f64; 2]) -> f64 {
        let h = self.h();
        let size = self.size();
        let gx = x[0] / h + self.pad_cells as f64 - 0.5;
        let gy = x[1] / h + self.pad_cells as f64 - 0.5;
        let i0 = gx.floor();
        let j0 = gy.floor();
        let fx = gx - i0;
        let fy = gy - j0;
        let (i0, j0) = (i0 as isize, j0 as isize);
        assert!(
            i0 >= 0 && j0 >= 0 && (i0 as usize) + 1 < size && (j0 as usize) + 1 < size,
            "evaluation point {x:?} leaves the padded lattice"
        );
        let (i0, j0) = (i0 as usize, j0 as usize);
        let v00 = self.values.at(i0, j0);
        let v10 = self.values.at(i0 + 1, j0);
        let v01 = self.values.at(i0, j0 + 1);
        let v11 = self.values.at(i0 + 1, j0 + 1);
        v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }

    /// Interior `m x m` samples; the restriction identity of extensions.
    pub fn restrict(&self) -> Field2 {
        let p = self.pad_cells;
        Field2::from_fn(self.m, self.m, |i, j| self.values.at(i + p, j + p))
    }

    /// Centered difference along `axis`, shrinking the pad by one cell.
    pub fn derivative(&self, axis: usize) -> Result<ExtendedField> {
        if self.pad_cells == 0 {
            return Err(Error::precondition(
                "derivative needs at least one pad cell".to_string(),
            ));
        }
        let size = self.size();
        let inv2h = 0.5 * self.m as f64;
        let new_size = size - 2;
        let values = Field2::from_fn(new_size, new_size, |i, j| {
            let (i, j) = (i + 1, j + 1);
            if axis == 0 {
                (self.values.at(i + 1, j) - self.values.at(i - 1, j)) * inv2h
            } else {
                (self.values.at(i, j + 1) - self.values.at(i, j - 1)) * inv2h
            }
        });
        Ok(ExtendedField {
            m: self.m,
            pad_cells: self.pad_cells - 1,
            values,
            mode: self.mode,
        })
    }
}

/// Evaluates a formula on the padded lattice.
pub fn extend_analytic(
    m: usize,
    pad_cells: usize,
    f: impl Fn([f64; 2]) -> f64,
) -> ExtendedField {
    let h = 1.0 / m as f64;
    let size = m + 2 * pad_cells;
    let p = pad_cells as f64;
    let values = Field2::from_fn(size, size, |i, j| {
        f([(i as f64 - p + 0.5) * h, (j as f64 - p + 0.5) * h])
    });
    ExtendedField {
        m,
        pad_cells,
        values,
        mode: ExtensionMode::Analytic,
    }
}

/// Even reflection of an `m x m` center field across each face of the
/// unit square; the interior samples are reproduced exactly.
pub fn extend_reflection(interior: &Field2, pad_cells: usize) -> Result<ExtendedField> {
    let m = interior.nx;
    assert_eq!(interior.ny, m, "reflection expects a square center field");
    if pad_cells > m {
        return Err(Error::precondition(format!(
            "reflection pad {pad_cells} exceeds the field extent {m}"
        )));
    }
    let size = m + 2 * pad_cells;
    let mirror = |k: isize| -> usize {
        let k = if k < 0 { -1 - k } else { k };
        let k = k as usize;
        if k >= m {
            2 * m - 1 - k
        } else {
            k
        }
    };
    let values = Field2::from_fn(size, size, |i, j| {
        let gi = mirror(i as isize - pad_cells as isize);
        let gj = mirror(j as isize - pad_cells as isize);
        interior.at(gi, gj)
    });
    Ok(ExtendedField {
        m,
        pad_cells,
        values,
        mode: ExtensionMode::Reflection,
    })
}

/// Cell-average smoothing: the output sample at `x` is the average of the
/// input over the square `[x - eps, x]^2`, computed as a separable
/// composite midpoint rule with two quadrature subcells per grid cell and
/// linear interpolation between samples. Exact on affine fields; consumes
/// `ceil(eps / h) + 1` pad cells.
pub fn steklov_smooth(field: &ExtendedField, eps: f64) -> Result<ExtendedField> {
    assert!(eps > 0.0, "smoothing radius must be positive");
    let h = field.h();
    let shrink = (eps / h).ceil() as usize + 1;
    if field.pad_cells < shrink {
        return Err(Error::precondition(format!(
            "smoothing radius {eps} needs {shrink} pad cells, field has {}",
            field.pad_cells
        )));
    }
    let size = field.size();
    let k = 2 * (eps / h).ceil() as usize;
    let step = eps / k as f64;
    let weight = 1.0 / k as f64;

    // Offsets of the quadrature points, in lattice units, relative to the
    // output sample.
    let offsets: Vec<f64> = (0..k)
        .map(|q| (q as f64 + 0.5) * step / h)
        .collect();

    let interp = |line: &dyn Fn(usize) -> f64, g: f64| -> f64 {
        let i0 = g.floor();
        let f = g - i0;
        let i0 = i0 as usize;
        line(i0) * (1.0 - f) + line(i0 + 1) * f
    };

    // Pass 1: window average along x, valid for i >= shrink.
    let mut tmp = Field2::zeros(size, size);
    for i in shrink..size {
        for j in 0..size {
            let mut s = 0.0;
            for &o in &offsets {
                let g = i as f64 - o;
                s += interp(&|ii| field.values.at(ii, j), g);
            }
            *tmp.at_mut(i, j) = s * weight;
        }
    }
    // Pass 2: window average along y, then keep the uniformly shrunk core.
    let new_size = size - 2 * shrink;
    let values = Field2::from_fn(new_size, new_size, |i, j| {
        let (i, j) = (i + shrink, j + shrink);
        let mut s = 0.0;
        for &o in &offsets {
            let g = j as f64 - o;
            s += interp(&|jj| tmp.at(i, jj), g);
        }
        s * weight
    });
    Ok(ExtendedField {
        m: field.m,
        pad_cells: field.pad_cells - shrink,
        values,
        mode: field.mode,
    })
}

/// Evaluates a cell-periodic lattice field at `x / eps`. `ox, oy` are the
/// sub-cell offsets of the lattice samples (0 for node-aligned, 1/2 for
/// center-aligned coordinates).
pub fn sample_periodic(cell: &Field2, ox: f64, oy: f64, eps: f64, x: [f64; 2]) -> f64 {
    cell.interp_periodic(x[0] / eps, x[1] / eps, ox, oy)
}

/// Samples one velocity component of a cell corrector at `x / eps`,
/// honoring the staggered sample offsets of each component.
pub fn chi_component(chi: &crate::field::TorusVelocity, comp: usize, eps: f64, x: [f64; 2]) -> f64 {
    match comp {
        0 => sample_periodic(&chi.u1, 0.0, 0.5, eps, x),
        _ => sample_periodic(&chi.u2, 0.5, 0.0, eps, x),
    }
}

/// The smoothed derivatives of the extended homogenized velocity that the
/// expansions consume: `grad[b][j]` holds the smoothing of `d_j u0^b`,
/// `hess[b][i][j]` of `d_i d_j u0^b`.
pub struct SmoothedDerivatives {
    pub m: usize,
    pub eps: f64,
    pub mode: ExtensionMode,
    pub grad: [[ExtendedField; 2]; 2],
    pub hess: [[[ExtendedField; 2]; 2]; 2],
}

/// Pad sufficient to differentiate twice, smooth once, and interpolate.
pub fn required_pad(m: usize, eps: f64) -> usize {
    (eps * m as f64).ceil() as usize + 6
}

/// Builds the smoothed derivative set from closed-form derivatives.
pub fn smooth_derivatives_analytic(
    m: usize,
    eps: f64,
    grad: impl Fn([f64; 2]) -> [[f64; 2]; 2],
    hess: impl Fn([f64; 2]) -> [[[f64; 2]; 2]; 2],
) -> Result<SmoothedDerivatives> {
    let pad = required_pad(m, eps);
    let build = |f: &dyn Fn([f64; 2]) -> f64| -> Result<ExtendedField> {
        steklov_smooth(&extend_analytic(m, pad, f), eps)
    };
    let g = |b: usize, j: usize| build(&|x| grad(x)[b][j]);
    let hs = |b: usize, i: usize, j: usize| build(&|x| hess(x)[b][i][j]);
    Ok(SmoothedDerivatives {
        m,
        eps,
        mode: ExtensionMode::Analytic,
        grad: [[g(0, 0)?, g(0, 1)?], [g(1, 0)?, g(1, 1)?]],
        hess: [
            [
                [hs(0, 0, 0)?, hs(0, 0, 1)?],
                [hs(0, 1, 0)?, hs(0, 1, 1)?],
            ],
            [
                [hs(1, 0, 0)?, hs(1, 0, 1)?],
                [hs(1, 1, 0)?, hs(1, 1, 1)?],
            ],
        ],
    })
}

/// Builds the smoothed derivative set from a discrete velocity by even
/// reflection, differentiating on the padded lattice.
pub fn smooth_derivatives_reflected(u0: &BoxVelocity, eps: f64) -> Result<SmoothedDerivatives> {
    let m = u0.m;
    // Two extra cells feed the two derivative passes.
    let pad = required_pad(m, eps) + 2;
    let centers = u0.to_centers();
    let ext = [
        extend_reflection(&centers[0], pad)?,
        extend_reflection(&centers[1], pad)?,
    ];
    let mut grad: Vec<ExtendedField> = Vec::with_capacity(4);
    let mut hess: Vec<ExtendedField> = Vec::with_capacity(8);
    for b in 0..2 {
        for j in 0..2 {
            let d = ext[b].derivative(j)?;
            for i in 0..2 {
                hess.push(steklov_smooth(&d.derivative(i)?, eps)?);
            }
            grad.push(steklov_smooth(&d, eps)?);
        }
    }
    let mut grad = grad.into_iter();
    let mut hess = hess.into_iter();
    let mut next_g = move || grad.next().expect("four gradient fields");
    let mut next_h = move || hess.next().expect("eight hessian fields");
    // Iteration order above: b, then j, then i for the hessian.
    let g00 = next_g();
    let g01 = next_g();
    let g10 = next_g();
    let g11 = next_g();
    let h000 = next_h();
    let h010 = next_h();
    let h001 = next_h();
    let h011 = next_h();
    let h100 = next_h();
    let h110 = next_h();
    let h101 = next_h();
    let h111 = next_h();
    Ok(SmoothedDerivatives {
        m,
        eps,
        mode: ExtensionMode::Reflection,
        grad: [[g00, g01], [g10, g11]],
        hess: [[[h000, h001], [h010, h011]], [[h100, h101], [h110, h111]]],
    })
}

/// First-order velocity expansion `v^c = u0^c + eps chi_j^b[c](x/eps)
/// S_eps(d_j u0~^b)(x)`, sampled on the staggered faces of `u0`'s grid,
/// boundary faces included.
pub fn build_velocity_expansion(
    u0: &BoxVelocity,
    correctors: &CorrectorSet,
    sd: &SmoothedDerivatives,
    eps: f64,
) -> BoxVelocity {
    let m = u0.m;
    let h = 1.0 / m as f64;
    let term = |comp: usize, x: [f64; 2]| -> f64 {
        let mut s = 0.0;
        for j in 0..2 {
            for b in 0..2 {
                let chi = &correctors.chi[pair_index(j, b)];
                s += chi_component(chi, comp, eps, x) * sd.grad[b][j].value_at(x);
            }
        }
        eps * s
    };
    let mut v = u0.clone();
    for i in 0..=m {
        for j in 0..m {
            let x = [i as f64 * h, (j as f64 + 0.5) * h];
            *v.u1.at_mut(i, j) += term(0, x);
        }
    }
    for i in 0..m {
        for j in 0..=m {
            let x = [(i as f64 + 0.5) * h, j as f64 * h];
            *v.u2.at_mut(i, j) += term(1, x);
        }
    }
    v
}

/// Pressure expansion `p0 + pi_j^b(x/eps) S_eps(d_j u0~^b) - mean`, the
/// mean taken over the domain so the correction does not move the gauge.
pub fn build_pressure_expansion(
    p0: &Field2,
    correctors: &CorrectorSet,
    sd: &SmoothedDerivatives,
    eps: f64,
) -> Field2 {
    let m = p0.nx;
    let h = 1.0 / m as f64;
    let mut correction = Field2::from_fn(m, m, |i, j| {
        let x = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
        let mut s = 0.0;
        for jj in 0..2 {
            for b in 0..2 {
                let pi = &correctors.pi[pair_index(jj, b)];
                s += sample_periodic(pi, 0.5, 0.5, eps, x) * sd.grad[b][jj].value_at(x);
            }
        }
        s
    });
    correction.project_mean_zero();
    Field2::from_fn(m, m, |i, j| p0.at(i, j) + correction.at(i, j))
}

/// Boundary cutoffs: `theta` ramps from 1 on the boundary to 0 at
/// distance `eps`; `theta_tilde` is 1 out to distance `eps` and ramps to
/// 0 at `2 eps`. Cubic smoothstep ramps keep the scaled gradient bound
/// `eps |grad theta| <= 2.5`.
#[derive(Debug, Clone)]
pub struct CutoffPair {
    pub eps: f64,
    pub theta: Field2,
    pub theta_tilde: Field2,
    /// Measured discrete `eps * max |grad theta|`.
    pub kappa: f64,
    pub kappa_tilde: f64,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

pub fn build_cutoffs(eps: f64, grid: DomainGrid) -> Result<CutoffPair> {
    let m = grid.m();
    let h = grid.h();
    if eps < 4.0 * h {
        return Err(Error::precondition(format!(
            "cutoff layer eps = {eps} is unresolvable at h = {h}"
        )));
    }
    let theta = Field2::from_fn(m, m, |i, j| {
        let d = DomainGrid::boundary_distance(grid.center(i, j));
        1.0 - smoothstep(d / eps)
    });
    let theta_tilde = Field2::from_fn(m, m, |i, j| {
        let d = DomainGrid::boundary_distance(grid.center(i, j));
        1.0 - smoothstep(d / eps - 1.0)
    });
    let scaled_grad_max = |f: &Field2| -> f64 {
        let gx = crate::norms::center_gradient(f, 0, h);
        let gy = crate::norms::center_gradient(f, 1, h);
        let mut worst = 0.0f64;
        for e in 0..f.data.len() {
            worst = worst.max((gx.data[e] * gx.data[e] + gy.data[e] * gy.data[e]).sqrt());
        }
        worst * eps
    };
    let kappa = scaled_grad_max(&theta);
    let kappa_tilde = scaled_grad_max(&theta_tilde);
    Ok(CutoffPair {
        eps,
        theta,
        theta_tilde,
        kappa,
        kappa_tilde,
    })
}

/// The boundary corrector: solves the oscillating Stokes system with zero
/// force, the trace of the expansion correction as boundary data, and the
/// discrete divergence of that correction (interpolated to the faces) as
/// divergence data. Taking the divergence discretely rather than from the
/// continuum identity makes the data compatible with the trace to machine
/// precision and leaves `u_eps - v_eps + w_eps` exactly divergence free.
#[derive(Debug)]
pub struct BoundaryCorrector {
    pub solution: DomainSolution,
    pub boundary: BoundaryData,
    pub div_data: Field2,
    /// Residual divergence shift applied to restore exact compatibility;
    /// rounding noise under the discrete construction.
    pub divergence_correction: f64,
}

pub fn solve_boundary_corrector(
    coeff: &CoefficientTensor,
    eps: f64,
    correctors: &CorrectorSet,
    sd: &SmoothedDerivatives,
    grid: DomainGrid,
    params: &GmresParams,
) -> Result<BoundaryCorrector> {
    let m = grid.m();
    let h = grid.h();
    let expansion_term = |x: [f64; 2]| -> [f64; 2] {
        let mut out = [0.0; 2];
        for c in 0..2 {
            let mut s = 0.0;
            for j in 0..2 {
                for b in 0..2 {
                    let chi = &correctors.chi[pair_index(j, b)];
                    s += chi_component(chi, c, eps, x) * sd.grad[b][j].value_at(x);
                }
            }
            out[c] = eps * s;
        }
        out
    };
    let boundary = BoundaryData::from_fn(m, expansion_term);
    let correction = {
        let mut v = BoxVelocity::zeros(m);
        for i in 0..=m {
            for j in 0..m {
                let x = [i as f64 * h, (j as f64 + 0.5) * h];
                *v.u1.at_mut(i, j) = expansion_term(x)[0];
            }
        }
        for i in 0..m {
            for j in 0..=m {
                let x = [(i as f64 + 0.5) * h, j as f64 * h];
                *v.u2.at_mut(i, j) = expansion_term(x)[1];
            }
        }
        v
    };
    let div_data = Field2::from_fn(m, m, |i, j| {
        (correction.u1.at(i + 1, j) - correction.u1.at(i, j)) / h
            + (correction.u2.at(i, j + 1) - correction.u2.at(i, j)) / h
    });

    let mut problem = StokesProblem {
        grid,
        source: ProblemCoeff::Oscillating {
            coeff: *coeff,
            epsilon: eps,
        },
        force: BoxVelocity::zeros(m),
        div_data,
        boundary,
        exact: None,
    };
    let raw_residual = check_compatibility(&problem);
    problem.div_data.shift_by(-raw_residual);
    let solution = solve_dirichlet_stokes(&problem, params)?;
    Ok(BoundaryCorrector {
        solution,
        boundary: problem.boundary,
        div_data: problem.div_data,
        divergence_correction: raw_residual,
    })
}
