//! Periodic cell problems: correctors, the effective tensor, the
//! flux-deviation tensor `b`, and its dual potentials.
//!
//! For each index pair `(j, beta)` the corrector `(chi_j^b, pi_j^b)`
//! solves the cell Stokes system driven by the affine profile
//! `P_j^b = y_j e^b`:
//!
//! ```text
//! L(chi + P) + grad pi = 0,   div chi = 0,   mean chi = mean pi = 0.
//! ```
//!
//! The effective tensor is the energy pairing of corrected profiles,
//! evaluated with the operator's own quadrature, so its algebraic
//! properties (adjoint compatibility in particular) hold at solver
//! accuracy rather than discretization accuracy.
//!
//! The deviation `b_ij^ab = a_ij^ab + a_ik^ag d_k chi_j^gb - ahat_ij^ab`
//! measures how far the corrected flux sits from its homogenized value;
//! it has zero mean and admits potentials `(f, q)` with
//! `b = div Phi + grad q`, `Phi_kij = d_k f_ij - d_i f_kj` skew in
//! `(k, i)`, and `sum_i d_i q_ij^b = pi_j^b`. Those potentials drive both
//! the pressure part of two-scale expansions and the identity checks of
//! [`verify_corrector_identities`]; residuals of the checks shrink at
//! second order because every discrete derivative here is a centered
//! second-order stencil on center-collocated fields.

use crate::coeff::{CoefficientTensor, Tensor4};
use crate::error::Result;
use crate::fft::Fft2;
use crate::field::{Field2, TorusVelocity};
use crate::grid::CellGrid;
use crate::oper::{avg_corners_to_centers_torus, CoeffMap, GradSamples, TorusStokesOp};
use crate::solver::{solve_torus_stokes, GmresParams, SolveStats};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Flat index for corrector pairs `(j, beta)`.
#[inline]
pub fn pair_index(j: usize, beta: usize) -> usize {
    2 * j + beta
}

/// Flat index for pressure potentials `q_ij^b`.
#[inline]
pub fn q_index(i: usize, j: usize, beta: usize) -> usize {
    4 * i + 2 * j + beta
}

/// The four velocity correctors and their pressures, plus solve stats.
pub struct CorrectorSet {
    pub n: usize,
    /// `chi[pair_index(j, beta)]`, zero-mean, discretely divergence-free.
    pub chi: Vec<TorusVelocity>,
    /// `pi[pair_index(j, beta)]`, zero-mean cell pressures.
    pub pi: Vec<Field2>,
    pub stats: Vec<SolveStats>,
}

/// One scalar field per tensor entry `(i, j, alpha, beta)`, collocated at
/// cell centers, in [`Tensor4::idx`] order.
pub struct CellTensorField {
    pub n: usize,
    pub entries: Vec<Field2>,
}

impl CellTensorField {
    pub fn entry(&self, i: usize, j: usize, alpha: usize, beta: usize) -> &Field2 {
        &self.entries[Tensor4::idx(i, j, alpha, beta)]
    }
}

/// Dual potentials of the deviation tensor: `f` shares the entry layout
/// of `b`; `q[q_index(i, j, beta)]` are the pressure potentials.
pub struct DualSet {
    pub n: usize,
    pub f: CellTensorField,
    pub q: Vec<Field2>,
}

/// Everything the rest of the crate needs about one coefficient family
/// at one cell resolution.
pub struct CellSolution {
    pub n: usize,
    pub correctors: CorrectorSet,
    pub adjoint_correctors: CorrectorSet,
    pub a_hat: Tensor4,
    pub a_hat_adjoint: Tensor4,
    pub b: CellTensorField,
    /// Largest per-entry mean removed from `b` (a second-order
    /// quadrature artifact; the projection restores exact solvability).
    pub b_mean_shift: f64,
    pub duals: DualSet,
}

/// Thin wrapper for generic cell-geometry Stokes solves.
pub fn solve_cell_stokes(
    op: &TorusStokesOp,
    f: &TorusVelocity,
    g: &Field2,
    params: &GmresParams,
    context: &str,
) -> Result<(TorusVelocity, Field2, SolveStats)> {
    solve_torus_stokes(op, f, g, params, context)
}

/// Solves the four corrector problems of an operator, in parallel.
pub fn compute_correctors(op: &TorusStokesOp, params: &GmresParams) -> Result<CorrectorSet> {
    let n = op.n;
    let zero_g = Field2::zeros(n, n);
    let results: Result<Vec<_>> = (0..4usize)
        .into_par_iter()
        .map(|e| {
            let (j, beta) = (e / 2, e % 2);
            // L chi + grad pi = -L P; the affine forcing has exactly zero
            // mean by telescoping, so the system is solvable as posed.
            let mut f = op.apply_affine(j, beta);
            for v in f.u1.data.iter_mut().chain(f.u2.data.iter_mut()) {
                *v = -*v;
            }
            let context = format!("corrector chi[{j}][{beta}]");
            solve_torus_stokes(op, &f, &zero_g, params, &context)
        })
        .collect();
    let mut chi = Vec::with_capacity(4);
    let mut pi = Vec::with_capacity(4);
    let mut stats = Vec::with_capacity(4);
    for (u, p, s) in results? {
        chi.push(u);
        pi.push(p);
        stats.push(s);
    }
    Ok(CorrectorSet { n, chi, pi, stats })
}

/// Gradient samples of `chi_j^b + P_j^b`: corrector gradients plus the
/// constant unit in bucket `(j, beta)`. Constants average to themselves,
/// so adding them before any corner averaging is exact.
fn corrected_gradients(op: &TorusStokesOp, chi: &TorusVelocity, j: usize, beta: usize) -> GradSamples {
    let mut g = op.gradients(chi);
    let bucket = match (j, beta) {
        (0, 0) => &mut g.g11,
        (1, 1) => &mut g.g22,
        (1, 0) => &mut g.g21,
        _ => &mut g.g12,
    };
    for v in bucket.data.iter_mut() {
        *v += 1.0;
    }
    g
}

/// Effective tensor via the discrete energy pairing of corrected
/// profiles: `ahat_ij^ab = E(chi_j^b + P_j^b, chi_i^a + P_i^a)`.
pub fn compute_effective_tensor(op: &TorusStokesOp, correctors: &CorrectorSet) -> Tensor4 {
    let grads: Vec<GradSamples> = (0..4)
        .map(|e| corrected_gradients(op, &correctors.chi[e], e / 2, e % 2))
        .collect();
    let mut a_hat = Tensor4([0.0; 16]);
    for i in 0..2 {
        for al in 0..2 {
            for j in 0..2 {
                for be in 0..2 {
                    let val = op.energy_pairing(
                        &grads[pair_index(j, be)],
                        &grads[pair_index(i, al)],
                    );
                    a_hat.set(i, j, al, be, val);
                }
            }
        }
    }
    a_hat
}

/// Corrector Jacobian collocated at cell centers: `d[k][gamma]` holds
/// `d_k chi^gamma`, with corner-class samples moved by the 4-point
/// average (the same rule the operator uses).
fn center_jacobian(op: &TorusStokesOp, chi: &TorusVelocity) -> [[Field2; 2]; 2] {
    let g = op.gradients(chi);
    let g21c = avg_corners_to_centers_torus(&g.g21);
    let g12c = avg_corners_to_centers_torus(&g.g12);
    [[g.g11, g12c], [g21c, g.g22]]
}

/// Flux-deviation tensor at cell centers, mean-projected entrywise.
/// Returns the field and the largest removed mean.
pub fn compute_b_tensor(
    op: &TorusStokesOp,
    correctors: &CorrectorSet,
    a_hat: &Tensor4,
) -> (CellTensorField, f64) {
    let n = op.n;
    let jac: Vec<[[Field2; 2]; 2]> = (0..4)
        .map(|e| center_jacobian(op, &correctors.chi[e]))
        .collect();
    let mut entries = vec![Field2::zeros(n, n); 16];
    for c in 0..n * n {
        let a = &op.coeff.centers[c];
        for j in 0..2 {
            for be in 0..2 {
                let dchi = &jac[pair_index(j, be)];
                for i in 0..2 {
                    for al in 0..2 {
                        let mut v = a.get(i, j, al, be) - a_hat.get(i, j, al, be);
                        for k in 0..2 {
                            for ga in 0..2 {
                                v += a.get(i, k, al, ga) * dchi[k][ga].data[c];
                            }
                        }
                        entries[Tensor4::idx(i, j, al, be)].data[c] = v;
                    }
                }
            }
        }
    }
    let mut shift = 0.0f64;
    for f in entries.iter_mut() {
        shift = shift.max(f.project_mean_zero().abs());
    }
    (CellTensorField { n, entries }, shift)
}

/// Centered periodic difference `d_axis` of a center field.
pub(crate) fn centered_diff(f: &Field2, axis: usize) -> Field2 {
    let n = f.nx;
    let h = 1.0 / n as f64;
    Field2::from_fn(n, n, |i, j| {
        let (ii, jj) = (i as isize, j as isize);
        let (p, m) = if axis == 0 {
            (f.at_p(ii + 1, jj), f.at_p(ii - 1, jj))
        } else {
            (f.at_p(ii, jj + 1), f.at_p(ii, jj - 1))
        };
        (p - m) / (2.0 * h)
    })
}

/// Solves the periodic dual systems `lap f_ij^b + grad_a q_ij^b = b_ij^b`
/// with `div_a f = 0`, one Stokes triple per `(i, j, beta)`, by direct
/// Fourier inversion with the 5-point Laplacian symbol and centered
/// first-difference symbols. At the handful of modes where the centered
/// difference is blind (Nyquist pairs) the pressure is dropped and the
/// Laplacian inverted alone; smooth data put only `O(h^2)` content there.
pub fn compute_dual_correctors(b: &CellTensorField) -> DualSet {
    let n = b.n;
    let h = 1.0 / n as f64;
    let mut fft = Fft2::new(n);
    let mut f_entries = vec![Field2::zeros(n, n); 16];
    let mut q = Vec::with_capacity(8);

    let mut s1: Vec<Complex64> = Vec::new();
    let mut s2: Vec<Complex64> = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            for be in 0..2 {
                fft.forward(b.entry(i, j, 0, be), &mut s1);
                fft.forward(b.entry(i, j, 1, be), &mut s2);
                let mut sq = vec![Complex64::default(); n * n];
                for k1 in 0..n {
                    for k2 in 0..n {
                        let e = k1 * n + k2;
                        if k1 == 0 && k2 == 0 {
                            s1[e] = Complex64::default();
                            s2[e] = Complex64::default();
                            continue;
                        }
                        let th1 = 2.0 * PI * k1 as f64 / n as f64;
                        let th2 = 2.0 * PI * k2 as f64 / n as f64;
                        let sig1 = th1.sin() / h;
                        let sig2 = th2.sin() / h;
                        let lam = (4.0 / (h * h))
                            * ((0.5 * th1).sin().powi(2) + (0.5 * th2).sin().powi(2));
                        let sig_sq = sig1 * sig1 + sig2 * sig2;
                        let (b1, b2) = (s1[e], s2[e]);
                        let qh = if sig_sq > 0.0 {
                            -Complex64::i() * (sig1 * b1 + sig2 * b2) / sig_sq
                        } else {
                            Complex64::default()
                        };
                        sq[e] = qh;
                        s1[e] = (Complex64::i() * sig1 * qh - b1) / lam;
                        s2[e] = (Complex64::i() * sig2 * qh - b2) / lam;
                    }
                }
                fft.inverse(&mut s1, &mut f_entries[Tensor4::idx(i, j, 0, be)]);
                fft.inverse(&mut s2, &mut f_entries[Tensor4::idx(i, j, 1, be)]);
                let mut qf = Field2::zeros(n, n);
                fft.inverse(&mut sq, &mut qf);
                q.push(qf);
            }
        }
    }
    DualSet {
        n,
        f: CellTensorField { n, entries: f_entries },
        q,
    }
}

/// Solves correctors, adjoint correctors, both effective tensors, the
/// deviation field, and its dual potentials for one coefficient family.
pub fn solve_cell(
    coeff: &CoefficientTensor,
    grid: CellGrid,
    params: &GmresParams,
) -> Result<CellSolution> {
    let adj = coeff.adjoint_coefficient();
    let op = TorusStokesOp::new(grid, CoeffMap::Cell { coeff });
    let op_adj = TorusStokesOp::new(grid, CoeffMap::Cell { coeff: &adj });
    let (correctors, adjoint_correctors) = {
        let (a, b) = rayon::join(
            || compute_correctors(&op, params),
            || compute_correctors(&op_adj, params),
        );
        (a?, b?)
    };
    let a_hat = compute_effective_tensor(&op, &correctors);
    let a_hat_adjoint = compute_effective_tensor(&op_adj, &adjoint_correctors);
    let (b, b_mean_shift) = compute_b_tensor(&op, &correctors, &a_hat);
    let duals = compute_dual_correctors(&b);
    Ok(CellSolution {
        n: grid.n(),
        correctors,
        adjoint_correctors,
        a_hat,
        a_hat_adjoint,
        b,
        b_mean_shift,
        duals,
    })
}

/// Residuals of the exact relations the cell quantities satisfy in the
/// continuum. All derivatives are centered second-order stencils, so
/// each residual should shrink like `h^2` under refinement; the skewness
/// of `Phi` holds to roundoff by construction.
#[derive(Debug, Clone)]
pub struct CellIdentityReport {
    pub n: usize,
    /// `max |Phi_kij + Phi_ikj|` over entries and points.
    pub phi_skew_max: f64,
    /// `max |b - div Phi - grad q|`.
    pub flux_potential_residual: f64,
    /// `max |sum_i d_i q_ij^b - pi_j^b|`.
    pub pressure_potential_residual: f64,
    /// `max |sum_i d_i b_ij^ab - d_a pi_j^b|`.
    pub flux_divergence_residual: f64,
    /// Largest mean removed from a `b` entry before the dual solves.
    pub b_mean_shift: f64,
    /// Largest corrector velocity or pressure mean (should be roundoff).
    pub corrector_mean_max: f64,
    /// `max |div chi|` over the grid, all four correctors.
    pub divergence_residual_max: f64,
    /// Quadratic-form range of the effective tensor over unit gradients.
    pub effective_lower: f64,
    pub effective_upper: f64,
    pub declared_mu: f64,
    pub effective_in_bounds: bool,
}

/// `Phi_kij^ab = d_k f_ij^ab - d_i f_kj^ab` for one entry.
fn phi_entry(duals: &DualSet, k: usize, i: usize, j: usize, al: usize, be: usize) -> Field2 {
    let dk = centered_diff(duals.f.entry(i, j, al, be), k);
    let di = centered_diff(duals.f.entry(k, j, al, be), i);
    let mut out = dk;
    for (o, v) in out.data.iter_mut().zip(di.data.iter()) {
        *o -= v;
    }
    out
}

pub fn verify_corrector_identities(
    coeff: &CoefficientTensor,
    cell: &CellSolution,
) -> CellIdentityReport {
    let n = cell.n;
    let h = 1.0 / n as f64;

    // Skewness: Phi_kij + Phi_ikj = 0 by construction; verify the
    // implementation honors it bitwise up to rounding.
    let mut skew = 0.0f64;
    for j in 0..2 {
        for al in 0..2 {
            for be in 0..2 {
                let p01 = phi_entry(&cell.duals, 0, 1, j, al, be);
                let p10 = phi_entry(&cell.duals, 1, 0, j, al, be);
                for e in 0..n * n {
                    skew = skew.max((p01.data[e] + p10.data[e]).abs());
                }
            }
        }
    }

    // b = div Phi + grad q, entrywise.
    let mut flux_potential = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            for al in 0..2 {
                for be in 0..2 {
                    let mut recon = Field2::zeros(n, n);
                    for k in 0..2 {
                        let phi = phi_entry(&cell.duals, k, i, j, al, be);
                        let dphi = centered_diff(&phi, k);
                        for (r, v) in recon.data.iter_mut().zip(dphi.data.iter()) {
                            *r += v;
                        }
                    }
                    let dq = centered_diff(&cell.duals.q[q_index(i, j, be)], al);
                    let b = cell.b.entry(i, j, al, be);
                    for e in 0..n * n {
                        let r = b.data[e] - recon.data[e] - dq.data[e];
                        flux_potential = flux_potential.max(r.abs());
                    }
                }
            }
        }
    }

    // sum_i d_i q_ij^b = pi_j^b.
    let mut pressure_potential = 0.0f64;
    for j in 0..2 {
        for be in 0..2 {
            let d0 = centered_diff(&cell.duals.q[q_index(0, j, be)], 0);
            let d1 = centered_diff(&cell.duals.q[q_index(1, j, be)], 1);
            let pi = &cell.correctors.pi[pair_index(j, be)];
            // pi lives at centers already; the comparison is collocated.
            for e in 0..n * n {
                let r = d0.data[e] + d1.data[e] - pi.data[e];
                pressure_potential = pressure_potential.max(r.abs());
            }
        }
    }

    // sum_i d_i b_ij^ab = d_a pi_j^b.
    let mut flux_divergence = 0.0f64;
    for j in 0..2 {
        for al in 0..2 {
            for be in 0..2 {
                let d0 = centered_diff(cell.b.entry(0, j, al, be), 0);
                let d1 = centered_diff(cell.b.entry(1, j, al, be), 1);
                let dpi = centered_diff(&cell.correctors.pi[pair_index(j, be)], al);
                for e in 0..n * n {
                    let r = d0.data[e] + d1.data[e] - dpi.data[e];
                    flux_divergence = flux_divergence.max(r.abs());
                }
            }
        }
    }

    let mut mean_max = 0.0f64;
    let mut div_max = 0.0f64;
    for e in 0..4 {
        let chi = &cell.correctors.chi[e];
        let [m1, m2] = chi.means();
        mean_max = mean_max
            .max(m1.abs())
            .max(m2.abs())
            .max(cell.correctors.pi[e].mean().abs());
        for i in 0..n {
            for j in 0..n {
                let (ii, jj) = (i as isize, j as isize);
                let d = (chi.u1.at_p(ii + 1, jj) - chi.u1.at(i, j)) / h
                    + (chi.u2.at_p(ii, jj + 1) - chi.u2.at(i, j)) / h;
                div_max = div_max.max(d.abs());
            }
        }
    }

    // Quadratic-form range of ahat over canonical and random directions.
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    let mut probe = |xi: [[f64; 2]; 2]| {
        let norm2: f64 = xi.iter().flatten().map(|v| v * v).sum();
        if norm2 > 0.0 {
            let v = cell.a_hat.quadratic_form(&xi) / norm2;
            lower = lower.min(v);
            upper = upper.max(v);
        }
    };
    for i in 0..2 {
        for a in 0..2 {
            let mut xi = [[0.0; 2]; 2];
            xi[i][a] = 1.0;
            probe(xi);
        }
    }
    let mut state = 0x2545f4914f6cdd1du64;
    for _ in 0..256 {
        let mut xi = [[0.0; 2]; 2];
        for row in xi.iter_mut() {
            for v in row.iter_mut() {
                // xorshift is plenty for probe directions and keeps the
                // report independent of RNG crate versions.
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                *v = (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
            }
        }
        probe(xi);
    }
    let mu = coeff.mu;
    let slack = 1e-9;
    let effective_in_bounds = lower >= mu - slack && upper <= 1.0 / mu + slack;

    CellIdentityReport {
        n,
        phi_skew_max: skew,
        flux_potential_residual: flux_potential,
        pressure_potential_residual: pressure_potential,
        flux_divergence_residual: flux_divergence,
        b_mean_shift: cell.b_mean_shift,
        corrector_mean_max: mean_max,
        divergence_residual_max: div_max,
        effective_lower: lower,
        effective_upper: upper,
        declared_mu: mu,
        effective_in_bounds,
    }
}
