//! Staggered-grid discretization of `u -> -div(A grad u)` with a full
//! 4-index coefficient, on the torus and on the unit square.
//!
//! Velocity gradients are sampled where the staggering puts them
//! naturally: `d1 u1` and `d2 u2` at cell centers, `d2 u1` and `d1 u2` at
//! corners. A coefficient entry coupling two same-class gradients is
//! applied at that class's points; an entry coupling a center-class and a
//! corner-class gradient is applied at centers, with the corner-class
//! factor moved there by the 4-point average. The averaging operators
//! used on the trial and test sides are exact transposes of each other,
//! so the assembled operator for a pointwise-symmetric tensor is exactly
//! symmetric, and for any tensor the discrete adjoint of `L_A` is
//! `L_{A*}` with `a*_{ij}^{ab} = a_{ji}^{ba}`. The effective-tensor
//! quadrature in [`energy_pairing`] reuses the identical sampling rule,
//! which is what makes the algebraic identities of the cell module hold
//! at solver precision instead of discretization precision.
//!
//! Sign and layout conventions (`h = 1/n`):
//!
//! * momentum output is `(L u)^a + (grad p)^a` located on the `a` faces;
//! * `grad p` on `u1` faces is `(p[i][j] - p[i-1][j]) / h`;
//! * divergence at centers is the exact negative transpose of that.

use crate::coeff::{CoefficientTensor, Tensor4};
use crate::field::{BoxVelocity, Field2, TorusVelocity};
use crate::grid::{CellGrid, DomainGrid};

/// Gradient samples of a velocity field, one bucket per component of the
/// velocity Jacobian. Center buckets have one sample per cell; corner
/// buckets have one per node (`n x n` on the torus, `(m+1) x (m+1)` on
/// the box).
pub struct GradSamples {
    /// `d1 u1` at centers.
    pub g11: Field2,
    /// `d2 u2` at centers.
    pub g22: Field2,
    /// `d2 u1` at corners.
    pub g21: Field2,
    /// `d1 u2` at corners.
    pub g12: Field2,
}

/// Gradient bucket labels in `(derivative, component)` form. Buckets 11
/// and 22 live at centers, 21 and 12 at corners.
const CENTER_BUCKETS: [(usize, usize); 2] = [(0, 0), (1, 1)];
const CORNER_BUCKETS: [(usize, usize); 2] = [(1, 0), (0, 1)];

#[inline]
fn is_center_bucket(j: usize, beta: usize) -> bool {
    j == beta
}

/// 4-point average from corners to the center they surround (torus).
pub(crate) fn avg_corners_to_centers_torus(f: &Field2) -> Field2 {
    let n = f.nx;
    Field2::from_fn(n, n, |i, j| {
        0.25 * (f.at(i, j)
            + f.at_p(i as isize + 1, j as isize)
            + f.at_p(i as isize, j as isize + 1)
            + f.at_p(i as isize + 1, j as isize + 1))
    })
}

/// Exact transpose of [`avg_corners_to_centers_torus`].
fn spread_centers_to_corners_torus(f: &Field2) -> Field2 {
    let n = f.nx;
    Field2::from_fn(n, n, |i, j| {
        0.25 * (f.at(i, j)
            + f.at_p(i as isize - 1, j as isize)
            + f.at_p(i as isize, j as isize - 1)
            + f.at_p(i as isize - 1, j as isize - 1))
    })
}

/// 4-point average from `(m+1)^2` corners to `m^2` centers (box); every
/// center has all four corners, no boundary case.
fn avg_corners_to_centers_box(f: &Field2) -> Field2 {
    let m = f.nx - 1;
    Field2::from_fn(m, m, |i, j| {
        0.25 * (f.at(i, j) + f.at(i + 1, j) + f.at(i, j + 1) + f.at(i + 1, j + 1))
    })
}

/// Exact transpose of [`avg_corners_to_centers_box`]: boundary corners
/// receive only the centers that exist, with unchanged 1/4 weights.
fn spread_centers_to_corners_box(f: &Field2) -> Field2 {
    let m = f.nx;
    let mut out = Field2::zeros(m + 1, m + 1);
    for i in 0..m {
        for j in 0..m {
            let v = 0.25 * f.at(i, j);
            *out.at_mut(i, j) += v;
            *out.at_mut(i + 1, j) += v;
            *out.at_mut(i, j + 1) += v;
            *out.at_mut(i + 1, j + 1) += v;
        }
    }
    out
}

/// Coefficient tensors sampled once at the quadrature points of a grid.
pub struct SampledCoeff {
    /// Tensor per cell center, `n x n` (or `m x m`).
    pub centers: Vec<Tensor4>,
    /// Tensor per corner, `n x n` on the torus, `(m+1) x (m+1)` on the box.
    pub corners: Vec<Tensor4>,
    /// Mean of the scalar part, used by the reference preconditioners.
    pub scalar_mean: f64,
}

/// How coefficients are evaluated in physical coordinates.
#[derive(Clone, Copy)]
pub enum CoeffMap<'a> {
    /// `A(x / epsilon)` for an oscillating fine-scale problem.
    Oscillating {
        coeff: &'a CoefficientTensor,
        epsilon: f64,
    },
    /// `A(y)` directly on the periodicity cell.
    Cell { coeff: &'a CoefficientTensor },
    /// A constant tensor (homogenized problems, dual cell problems).
    Constant { tensor: Tensor4, scalar_mean: f64 },
}

impl<'a> CoeffMap<'a> {
    pub fn at(&self, x: [f64; 2]) -> Tensor4 {
        match *self {
            CoeffMap::Oscillating { coeff, epsilon } => {
                coeff.evaluate([x[0] / epsilon, x[1] / epsilon])
            }
            CoeffMap::Cell { coeff } => coeff.evaluate(x),
            CoeffMap::Constant { tensor, .. } => tensor,
        }
    }

    pub fn scalar_mean(&self) -> f64 {
        match *self {
            CoeffMap::Oscillating { coeff, .. } | CoeffMap::Cell { coeff } => coeff.scalar_mean(),
            CoeffMap::Constant { scalar_mean, .. } => scalar_mean,
        }
    }

    /// Samples centers and corners of an `n`-cell lattice with spacing
    /// `h = 1/n`; `corner_extent` is `n` on the torus, `n + 1` on the box.
    fn sample(&self, n: usize, corner_extent: usize) -> SampledCoeff {
        let h = 1.0 / n as f64;
        let mut centers = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                centers.push(self.at([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]));
            }
        }
        let mut corners = Vec::with_capacity(corner_extent * corner_extent);
        for i in 0..corner_extent {
            for j in 0..corner_extent {
                corners.push(self.at([i as f64 * h, j as f64 * h]));
            }
        }
        SampledCoeff {
            centers,
            corners,
            scalar_mean: self.scalar_mean(),
        }
    }
}

// ---------------------------------------------------------------------------
// Torus operator
// ---------------------------------------------------------------------------

pub struct TorusStokesOp {
    pub n: usize,
    pub coeff: SampledCoeff,
}

impl TorusStokesOp {
    pub fn new(grid: CellGrid, map: CoeffMap) -> Self {
        let n = grid.n();
        TorusStokesOp {
            n,
            coeff: map.sample(n, n),
        }
    }

    pub fn gradients(&self, u: &TorusVelocity) -> GradSamples {
        let n = self.n;
        let h = 1.0 / n as f64;
        let g11 = Field2::from_fn(n, n, |i, j| {
            (u.u1.at_p(i as isize + 1, j as isize) - u.u1.at(i, j)) / h
        });
        let g22 = Field2::from_fn(n, n, |i, j| {
            (u.u2.at_p(i as isize, j as isize + 1) - u.u2.at(i, j)) / h
        });
        let g21 = Field2::from_fn(n, n, |i, j| {
            (u.u1.at(i, j) - u.u1.at_p(i as isize, j as isize - 1)) / h
        });
        let g12 = Field2::from_fn(n, n, |i, j| {
            (u.u2.at(i, j) - u.u2.at_p(i as isize - 1, j as isize)) / h
        });
        GradSamples { g11, g22, g21, g12 }
    }

    /// Flux buckets `sigma_I` for the sampled gradients, following the
    /// class rule described in the module docs. Returns
    /// `(sigma_11, sigma_22 at centers, sigma_21, sigma_12 at corners)`.
    fn fluxes(&self, g: &GradSamples) -> [Field2; 4] {
        let n = self.n;
        let g21c = avg_corners_to_centers_torus(&g.g21);
        let g12c = avg_corners_to_centers_torus(&g.g12);

        let mut s11 = Field2::zeros(n, n);
        let mut s22 = Field2::zeros(n, n);
        let mut s21 = Field2::zeros(n, n);
        let mut s12 = Field2::zeros(n, n);
        // Cross contributions to corner-class fluxes are accumulated at
        // centers first, then spread by the transposed average.
        let mut t21 = Field2::zeros(n, n);
        let mut t12 = Field2::zeros(n, n);

        for i in 0..n {
            for j in 0..n {
                let a = &self.coeff.centers[i * n + j];
                let e = i * n + j;
                let gc = [
                    [g.g11.data[e], g12c.data[e]],
                    [g21c.data[e], g.g22.data[e]],
                ];
                // gc[jd][beta] = sampled d_jd u^beta at this center.
                for &(i_d, al) in &CENTER_BUCKETS {
                    let mut acc = 0.0;
                    for jd in 0..2 {
                        for be in 0..2 {
                            acc += a.get(i_d, jd, al, be) * gc[jd][be];
                        }
                    }
                    if (i_d, al) == (0, 0) {
                        s11.data[e] = acc;
                    } else {
                        s22.data[e] = acc;
                    }
                }
                for &(i_d, al) in &CORNER_BUCKETS {
                    // Only the center-class gradient factors contribute
                    // here; corner-class ones are handled at corners.
                    let mut acc = 0.0;
                    for &(jd, be) in &CENTER_BUCKETS {
                        acc += a.get(i_d, jd, al, be) * gc[jd][be];
                    }
                    if (i_d, al) == (1, 0) {
                        t21.data[e] = acc;
                    } else {
                        t12.data[e] = acc;
                    }
                }
            }
        }

        for i in 0..n {
            for j in 0..n {
                let a = &self.coeff.corners[i * n + j];
                let e = i * n + j;
                let gk21 = g.g21.data[e];
                let gk12 = g.g12.data[e];
                for &(i_d, al) in &CORNER_BUCKETS {
                    let acc = a.get(i_d, 1, al, 0) * gk21 + a.get(i_d, 0, al, 1) * gk12;
                    if (i_d, al) == (1, 0) {
                        s21.data[e] = acc;
                    } else {
                        s12.data[e] = acc;
                    }
                }
            }
        }

        let t21k = spread_centers_to_corners_torus(&t21);
        let t12k = spread_centers_to_corners_torus(&t12);
        for e in 0..n * n {
            s21.data[e] += t21k.data[e];
            s12.data[e] += t12k.data[e];
        }
        [s11, s22, s21, s12]
    }

    /// `out_u = L u + grad p`, `out_div = div u`. Pointwise scaling.
    pub fn apply(
        &self,
        u: &TorusVelocity,
        p: &Field2,
        out_u: &mut TorusVelocity,
        out_div: &mut Field2,
    ) {
        let n = self.n;
        let h = 1.0 / n as f64;
        let g = self.gradients(u);
        let [s11, s22, s21, s12] = self.fluxes(&g);
        for i in 0..n {
            for j in 0..n {
                let ii = i as isize;
                let jj = j as isize;
                let lap1 = (s11.at(i, j) - s11.at_p(ii - 1, jj)) / h
                    + (s21.at_p(ii, jj + 1) - s21.at(i, j)) / h;
                let gp1 = (p.at(i, j) - p.at_p(ii - 1, jj)) / h;
                *out_u.u1.at_mut(i, j) = -lap1 + gp1;

                let lap2 = (s12.at_p(ii + 1, jj) - s12.at(i, j)) / h
                    + (s22.at(i, j) - s22.at_p(ii, jj - 1)) / h;
                let gp2 = (p.at(i, j) - p.at_p(ii, jj - 1)) / h;
                *out_u.u2.at_mut(i, j) = -lap2 + gp2;

                *out_div.at_mut(i, j) = (u.u1.at_p(ii + 1, jj) - u.u1.at(i, j)) / h
                    + (u.u2.at_p(ii, jj + 1) - u.u2.at(i, j)) / h;
            }
        }
    }

    /// Momentum field of `L` applied to the affine profile with constant
    /// unit gradient in bucket `(j0, b0)` (`d_{j0} u^{b0} = 1`, all other
    /// gradient samples zero). The profile itself is not periodic but its
    /// gradient is, so the flux machinery applies verbatim; the result is
    /// the forcing that drives the corrector of that index pair, with
    /// exactly zero discrete mean by telescoping.
    pub fn apply_affine(&self, j0: usize, b0: usize) -> TorusVelocity {
        let n = self.n;
        let one = Field2::from_fn(n, n, |_, _| 1.0);
        let zero = Field2::zeros(n, n);
        let pick = |jd: usize, be: usize| {
            if (jd, be) == (j0, b0) {
                one.clone()
            } else {
                zero.clone()
            }
        };
        let g = GradSamples {
            g11: pick(0, 0),
            g22: pick(1, 1),
            g21: pick(1, 0),
            g12: pick(0, 1),
        };
        let [s11, s22, s21, s12] = self.fluxes(&g);
        let h = 1.0 / n as f64;
        let mut out = TorusVelocity::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let ii = i as isize;
                let jj = j as isize;
                let lap1 = (s11.at(i, j) - s11.at_p(ii - 1, jj)) / h
                    + (s21.at_p(ii, jj + 1) - s21.at(i, j)) / h;
                *out.u1.at_mut(i, j) = -lap1;
                let lap2 = (s12.at_p(ii + 1, jj) - s12.at(i, j)) / h
                    + (s22.at(i, j) - s22.at_p(ii, jj - 1)) / h;
                *out.u2.at_mut(i, j) = -lap2;
            }
        }
        out
    }

    /// Discrete bilinear energy `sum a_IJ (grad u)_J (grad v)_I` over the
    /// cell, using the same sampling rule as the operator, times `h^2`.
    /// For corrector fields paired with affine profiles this quadrature
    /// IS the effective tensor.
    pub fn energy_pairing(&self, gu: &GradSamples, gv: &GradSamples) -> f64 {
        let n = self.n;
        let h2 = 1.0 / (n * n) as f64;
        let gu21c = avg_corners_to_centers_torus(&gu.g21);
        let gu12c = avg_corners_to_centers_torus(&gu.g12);
        let gv21c = avg_corners_to_centers_torus(&gv.g21);
        let gv12c = avg_corners_to_centers_torus(&gv.g12);
        let mut total = 0.0;
        for e in 0..n * n {
            let a = &self.coeff.centers[e];
            let guc = [
                [gu.g11.data[e], gu12c.data[e]],
                [gu21c.data[e], gu.g22.data[e]],
            ];
            let gvc = [
                [gv.g11.data[e], gv12c.data[e]],
                [gv21c.data[e], gv.g22.data[e]],
            ];
            let mut acc = 0.0;
            for i_d in 0..2 {
                for al in 0..2 {
                    for jd in 0..2 {
                        for be in 0..2 {
                            // Corner-class pairs are integrated at corners.
                            if !is_center_bucket(i_d, al) && !is_center_bucket(jd, be) {
                                continue;
                            }
                            acc += a.get(i_d, jd, al, be) * guc[jd][be] * gvc[i_d][al];
                        }
                    }
                }
            }
            total += acc * h2;
        }
        for e in 0..n * n {
            let a = &self.coeff.corners[e];
            let gu_k = [gu.g21.data[e], gu.g12.data[e]];
            let gv_k = [gv.g21.data[e], gv.g12.data[e]];
            let lab = [(1usize, 0usize), (0usize, 1usize)];
            let mut acc = 0.0;
            for (vi, &(i_d, al)) in lab.iter().enumerate() {
                for (uj, &(jd, be)) in lab.iter().enumerate() {
                    acc += a.get(i_d, jd, al, be) * gu_k[uj] * gv_k[vi];
                }
            }
            total += acc * h2;
        }
        total
    }

    /// Gradient samples of the affine profile `P` with unit gradient in
    /// bucket `(j0, b0)`, for pairing against corrector gradients.
    pub fn affine_gradients(&self, j0: usize, b0: usize) -> GradSamples {
        let n = self.n;
        let fill = |jd: usize, be: usize| {
            if (jd, be) == (j0, b0) {
                Field2::from_fn(n, n, |_, _| 1.0)
            } else {
                Field2::zeros(n, n)
            }
        };
        GradSamples {
            g11: fill(0, 0),
            g22: fill(1, 1),
            g21: fill(1, 0),
            g12: fill(0, 1),
        }
    }
}

// ---------------------------------------------------------------------------
// Box operator
// ---------------------------------------------------------------------------

/// Dirichlet data sampled where the staggered scheme consumes it: normal
/// components on boundary faces, tangential components at the node
/// positions of the ghost extrapolation.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    /// `u1` on the left/right edges at `(0 | 1, (j+1/2) h)`, length `m`.
    pub u1_left: Vec<f64>,
    pub u1_right: Vec<f64>,
    /// `u2` on the bottom/top edges at `((i+1/2) h, 0 | 1)`, length `m`.
    pub u2_bottom: Vec<f64>,
    pub u2_top: Vec<f64>,
    /// `u1` on the bottom/top edges at `(i h, 0 | 1)`, length `m + 1`.
    pub u1_bottom: Vec<f64>,
    pub u1_top: Vec<f64>,
    /// `u2` on the left/right edges at `(0 | 1, j h)`, length `m + 1`.
    pub u2_left: Vec<f64>,
    pub u2_right: Vec<f64>,
}

impl BoundaryData {
    pub fn zero(m: usize) -> Self {
        BoundaryData {
            u1_left: vec![0.0; m],
            u1_right: vec![0.0; m],
            u2_bottom: vec![0.0; m],
            u2_top: vec![0.0; m],
            u1_bottom: vec![0.0; m + 1],
            u1_top: vec![0.0; m + 1],
            u2_left: vec![0.0; m + 1],
            u2_right: vec![0.0; m + 1],
        }
    }

    /// Samples a closure `f(x) -> [u1, u2]` on all eight traces.
    pub fn from_fn(m: usize, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let h = 1.0 / m as f64;
        let mut b = BoundaryData::zero(m);
        for j in 0..m {
            let y = (j as f64 + 0.5) * h;
            b.u1_left[j] = f([0.0, y])[0];
            b.u1_right[j] = f([1.0, y])[0];
        }
        for i in 0..m {
            let x = (i as f64 + 0.5) * h;
            b.u2_bottom[i] = f([x, 0.0])[1];
            b.u2_top[i] = f([x, 1.0])[1];
        }
        for i in 0..=m {
            let x = i as f64 * h;
            b.u1_bottom[i] = f([x, 0.0])[0];
            b.u1_top[i] = f([x, 1.0])[0];
        }
        for j in 0..=m {
            let y = j as f64 * h;
            b.u2_left[j] = f([0.0, y])[1];
            b.u2_right[j] = f([1.0, y])[1];
        }
        b
    }

    /// Max absolute value over all traces, the natural data scale.
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for v in [
            &self.u1_left,
            &self.u1_right,
            &self.u2_bottom,
            &self.u2_top,
            &self.u1_bottom,
            &self.u1_top,
            &self.u2_left,
            &self.u2_right,
        ] {
            for &x in v {
                m = m.max(x.abs());
            }
        }
        m
    }
}

pub struct BoxStokesOp {
    pub m: usize,
    pub coeff: SampledCoeff,
}

impl BoxStokesOp {
    pub fn new(grid: DomainGrid, map: CoeffMap) -> Self {
        let m = grid.m();
        BoxStokesOp {
            m,
            coeff: map.sample(m, m + 1),
        }
    }

    /// Velocity gradients with ghost handling. Boundary face values are
    /// read from the arrays as stored; tangential ghosts are linear
    /// extrapolations through the boundary trace (`2 f_t - u_inner`), or
    /// through zero when `bc` is `None`.
    fn gradients(&self, u: &BoxVelocity, bc: Option<&BoundaryData>) -> GradSamples {
        let m = self.m;
        let h = 1.0 / m as f64;
        let g11 = Field2::from_fn(m, m, |i, j| (u.u1.at(i + 1, j) - u.u1.at(i, j)) / h);
        let g22 = Field2::from_fn(m, m, |i, j| (u.u2.at(i, j + 1) - u.u2.at(i, j)) / h);
        let g21 = Field2::from_fn(m + 1, m + 1, |i, j| {
            let above = if j == m {
                match bc {
                    Some(b) => 2.0 * b.u1_top[i] - u.u1.at(i, m - 1),
                    None => -u.u1.at(i, m - 1),
                }
            } else {
                u.u1.at(i, j)
            };
            let below = if j == 0 {
                match bc {
                    Some(b) => 2.0 * b.u1_bottom[i] - u.u1.at(i, 0),
                    None => -u.u1.at(i, 0),
                }
            } else {
                u.u1.at(i, j - 1)
            };
            (above - below) / h
        });
        let g12 = Field2::from_fn(m + 1, m + 1, |i, j| {
            let right = if i == m {
                match bc {
                    Some(b) => 2.0 * b.u2_right[j] - u.u2.at(m - 1, j),
                    None => -u.u2.at(m - 1, j),
                }
            } else {
                u.u2.at(i, j)
            };
            let left = if i == 0 {
                match bc {
                    Some(b) => 2.0 * b.u2_left[j] - u.u2.at(0, j),
                    None => -u.u2.at(0, j),
                }
            } else {
                u.u2.at(i - 1, j)
            };
            (right - left) / h
        });
        GradSamples { g11, g22, g21, g12 }
    }

    fn fluxes(&self, g: &GradSamples) -> [Field2; 4] {
        let m = self.m;
        let g21c = avg_corners_to_centers_box(&g.g21);
        let g12c = avg_corners_to_centers_box(&g.g12);
        let mut s11 = Field2::zeros(m, m);
        let mut s22 = Field2::zeros(m, m);
        let mut s21 = Field2::zeros(m + 1, m + 1);
        let mut s12 = Field2::zeros(m + 1, m + 1);
        let mut t21 = Field2::zeros(m, m);
        let mut t12 = Field2::zeros(m, m);

        for e in 0..m * m {
            let a = &self.coeff.centers[e];
            let gc = [
                [g.g11.data[e], g12c.data[e]],
                [g21c.data[e], g.g22.data[e]],
            ];
            for &(i_d, al) in &CENTER_BUCKETS {
                let mut acc = 0.0;
                for jd in 0..2 {
                    for be in 0..2 {
                        acc += a.get(i_d, jd, al, be) * gc[jd][be];
                    }
                }
                if (i_d, al) == (0, 0) {
                    s11.data[e] = acc;
                } else {
                    s22.data[e] = acc;
                }
            }
            for &(i_d, al) in &CORNER_BUCKETS {
                let mut acc = 0.0;
                for &(jd, be) in &CENTER_BUCKETS {
                    acc += a.get(i_d, jd, al, be) * gc[jd][be];
                }
                if (i_d, al) == (1, 0) {
                    t21.data[e] = acc;
                } else {
                    t12.data[e] = acc;
                }
            }
        }

        for e in 0..(m + 1) * (m + 1) {
            let a = &self.coeff.corners[e];
            let gk21 = g.g21.data[e];
            let gk12 = g.g12.data[e];
            for &(i_d, al) in &CORNER_BUCKETS {
                let acc = a.get(i_d, 1, al, 0) * gk21 + a.get(i_d, 0, al, 1) * gk12;
                if (i_d, al) == (1, 0) {
                    s21.data[e] = acc;
                } else {
                    s12.data[e] = acc;
                }
            }
        }

        let t21k = spread_centers_to_corners_box(&t21);
        let t12k = spread_centers_to_corners_box(&t12);
        for e in 0..(m + 1) * (m + 1) {
            s21.data[e] += t21k.data[e];
            s12.data[e] += t12k.data[e];
        }
        [s11, s22, s21, s12]
    }

    /// Applies momentum and continuity rows. Boundary faces of `u` are
    /// used as stored and never written; `out_u` receives values on
    /// interior faces only. With `bc = None` this is the homogeneous
    /// linear operator; with data it computes the lifting contribution.
    pub fn apply(
        &self,
        u: &BoxVelocity,
        p: Option<&Field2>,
        bc: Option<&BoundaryData>,
        out_u: &mut BoxVelocity,
        out_div: &mut Field2,
    ) {
        let m = self.m;
        let h = 1.0 / m as f64;
        let g = self.gradients(u, bc);
        let [s11, s22, s21, s12] = self.fluxes(&g);

        for i in 1..m {
            for j in 0..m {
                let lap = (s11.at(i, j) - s11.at(i - 1, j)) / h
                    + (s21.at(i, j + 1) - s21.at(i, j)) / h;
                let gp = match p {
                    Some(p) => (p.at(i, j) - p.at(i - 1, j)) / h,
                    None => 0.0,
                };
                *out_u.u1.at_mut(i, j) = -lap + gp;
            }
        }
        for i in 0..m {
            for j in 1..m {
                let lap = (s12.at(i + 1, j) - s12.at(i, j)) / h
                    + (s22.at(i, j) - s22.at(i, j - 1)) / h;
                let gp = match p {
                    Some(p) => (p.at(i, j) - p.at(i, j - 1)) / h,
                    None => 0.0,
                };
                *out_u.u2.at_mut(i, j) = -lap + gp;
            }
        }
        for i in 0..m {
            for j in 0..m {
                *out_div.at_mut(i, j) = (u.u1.at(i + 1, j) - u.u1.at(i, j)) / h
                    + (u.u2.at(i, j + 1) - u.u2.at(i, j)) / h;
            }
        }
    }

    /// Contribution of inhomogeneous Dirichlet data to the right-hand
    /// side: applies the operator to the boundary lifting (zero interior,
    /// data on boundary faces and in the ghost rule).
    pub fn bc_contribution(&self, bc: &BoundaryData) -> (BoxVelocity, Field2) {
        let m = self.m;
        let mut lift = BoxVelocity::zeros(m);
        for j in 0..m {
            *lift.u1.at_mut(0, j) = bc.u1_left[j];
            *lift.u1.at_mut(m, j) = bc.u1_right[j];
        }
        for i in 0..m {
            *lift.u2.at_mut(i, 0) = bc.u2_bottom[i];
            *lift.u2.at_mut(i, m) = bc.u2_top[i];
        }
        let mut out_u = BoxVelocity::zeros(m);
        let mut out_div = Field2::zeros(m, m);
        self.apply(&lift, None, Some(bc), &mut out_u, &mut out_div);
        (out_u, out_div)
    }
}
