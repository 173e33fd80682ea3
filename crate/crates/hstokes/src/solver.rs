//! Saddle-point solvers for the discrete Stokes systems.
//!
//! Both geometries use restarted GMRES with right preconditioning. The
//! preconditioner is an exact constant-coefficient solve: on the torus a
//! per-mode 3x3 solve in Fourier space, on the square a free-slip solve
//! in mixed sine and half-point cosine bases. For constant coefficients
//! the preconditioned operator is the identity (plus a boundary-condition
//! perturbation on the square), so convergence there takes one or a few
//! iterations and the variable-coefficient case inherits a mesh-size
//! independent iteration count.
//!
//! Residuals are measured in the plain Euclidean norm of the packed
//! `[momentum; continuity]` vector, relative to the right-hand side, and
//! the convergence decision always uses an explicitly recomputed
//! residual, never the Arnoldi estimate alone.

use crate::error::{Error, Result};
use crate::fft::{transform_x, transform_y, Basis, Fft2, RealTransforms};
use crate::field::{BoxVelocity, Field2, TorusVelocity};
use crate::oper::{BoxStokesOp, TorusStokesOp};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub restarts: usize,
    /// Final relative residual `|b - A x| / |b|`.
    pub residual: f64,
    pub converged: bool,
}

impl SolveStats {
    pub fn require_converged(&self, context: &str, tolerance: f64) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NonConvergence {
                context: context.to_string(),
                residual: self.residual,
                iterations: self.iterations,
                tolerance,
            })
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresParams {
    /// Relative residual target.
    pub tol: f64,
    /// Krylov basis size per restart cycle.
    pub restart: usize,
    pub max_iters: usize,
}

impl Default for GmresParams {
    fn default() -> Self {
        GmresParams {
            tol: 1e-9,
            restart: 120,
            max_iters: 4000,
        }
    }
}

/// A packed saddle system with its preconditioner and the projection onto
/// the subspace where the system is nonsingular (zero-mean constraints).
pub trait SaddleSystem {
    fn dim(&self) -> usize;
    fn apply(&mut self, x: &[f64], out: &mut [f64]);
    fn precondition(&mut self, r: &[f64], out: &mut [f64]);
    fn project(&self, x: &mut [f64]);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Restarted GMRES with right preconditioning and modified Gram-Schmidt.
/// Starts from zero; a zero right-hand side returns zeros immediately.
pub fn gmres<S: SaddleSystem + ?Sized>(
    sys: &mut S,
    b: &[f64],
    params: &GmresParams,
) -> (Vec<f64>, SolveStats) {
    let dim = b.len();
    debug_assert_eq!(dim, sys.dim());
    let mut x = vec![0.0; dim];
    let bnorm = norm(b);
    if bnorm == 0.0 || !bnorm.is_finite() {
        return (
            x,
            SolveStats {
                iterations: 0,
                restarts: 0,
                residual: if bnorm == 0.0 { 0.0 } else { f64::NAN },
                converged: bnorm == 0.0,
            },
        );
    }

    let mut r = b.to_vec();
    sys.project(&mut r);
    let mut z = vec![0.0; dim];
    let mut w = vec![0.0; dim];
    let mut total_iters = 0usize;
    let mut restarts = 0usize;

    loop {
        let beta = norm(&r);
        if beta <= params.tol * bnorm {
            return (
                x,
                SolveStats {
                    iterations: total_iters,
                    restarts,
                    residual: beta / bnorm,
                    converged: true,
                },
            );
        }

        let k_max = params.restart;
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k_max + 1);
        basis.push(r.iter().map(|&t| t / beta).collect());
        let mut h = vec![vec![0.0f64; k_max]; k_max + 1];
        let mut cs = vec![0.0f64; k_max];
        let mut sn = vec![0.0f64; k_max];
        let mut g = vec![0.0f64; k_max + 1];
        g[0] = beta;
        let mut k_used = 0usize;

        for j in 0..k_max {
            sys.precondition(&basis[j], &mut z);
            sys.project(&mut z);
            sys.apply(&z, &mut w);
            sys.project(&mut w);
            let mut v = w.clone();
            for i in 0..=j {
                let hij = dot(&v, &basis[i]);
                h[i][j] = hij;
                axpy(&mut v, -hij, &basis[i]);
            }
            let hn = norm(&v);
            h[j + 1][j] = hn;

            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = (h[j][j] * h[j][j] + hn * hn).sqrt();
            if denom > 0.0 {
                cs[j] = h[j][j] / denom;
                sn[j] = h[j + 1][j] / denom;
            } else {
                cs[j] = 1.0;
                sn[j] = 0.0;
            }
            h[j][j] = cs[j] * h[j][j] + sn[j] * h[j + 1][j];
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];

            total_iters += 1;
            k_used = j + 1;
            let est = g[j + 1].abs();
            let breakdown = hn <= 1e-14 * bnorm;
            if est <= params.tol * bnorm
                || total_iters >= params.max_iters
                || breakdown
                || !est.is_finite()
            {
                break;
            }
            basis.push(v.iter().map(|&t| t / hn).collect());
        }

        let mut y = vec![0.0f64; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s -= h[i][l] * y[l];
            }
            y[i] = if h[i][i].abs() > 0.0 { s / h[i][i] } else { 0.0 };
        }
        let mut corr = vec![0.0; dim];
        for (i, yi) in y.iter().enumerate() {
            axpy(&mut corr, *yi, &basis[i]);
        }
        sys.precondition(&corr, &mut z);
        sys.project(&mut z);
        for (xi, zi) in x.iter_mut().zip(z.iter()) {
            *xi += zi;
        }

        sys.apply(&x, &mut w);
        for e in 0..dim {
            r[e] = b[e] - w[e];
        }
        sys.project(&mut r);
        let resid = norm(&r);
        let converged = resid.is_finite() && resid <= params.tol * bnorm;
        if converged || total_iters >= params.max_iters || !resid.is_finite() {
            return (
                x,
                SolveStats {
                    iterations: total_iters,
                    restarts,
                    residual: resid / bnorm,
                    converged,
                },
            );
        }
        restarts += 1;
    }
}

// ---------------------------------------------------------------------------
// Torus constant-coefficient reference solver
// ---------------------------------------------------------------------------

/// Exact solver for `cbar (-lap) u + grad p = f`, `div u = g` on the
/// torus, with zero-mean velocity and pressure. Works on index-space
/// Fourier symbols, which are identical on every staggered sub-lattice.
pub struct TorusConstantSolver {
    n: usize,
    cbar: f64,
    fft: Fft2,
    s1: Vec<Complex64>,
    s2: Vec<Complex64>,
    sg: Vec<Complex64>,
}

impl TorusConstantSolver {
    pub fn new(n: usize, cbar: f64) -> Self {
        TorusConstantSolver {
            n,
            cbar,
            fft: Fft2::new(n),
            s1: Vec::new(),
            s2: Vec::new(),
            sg: Vec::new(),
        }
    }

    pub fn solve(
        &mut self,
        f: &TorusVelocity,
        g: &Field2,
        out_u: &mut TorusVelocity,
        out_p: &mut Field2,
    ) {
        let n = self.n;
        let h = 1.0 / n as f64;
        self.fft.forward(&f.u1, &mut self.s1);
        self.fft.forward(&f.u2, &mut self.s2);
        self.fft.forward(g, &mut self.sg);
        let mut sp = vec![Complex64::default(); n * n];

        for k1 in 0..n {
            for k2 in 0..n {
                let e = k1 * n + k2;
                if k1 == 0 && k2 == 0 {
                    self.s1[e] = Complex64::default();
                    self.s2[e] = Complex64::default();
                    sp[e] = Complex64::default();
                    continue;
                }
                let th1 = 2.0 * PI * k1 as f64 / n as f64;
                let th2 = 2.0 * PI * k2 as f64 / n as f64;
                // grad symbol (center to face) and div symbol (face to
                // center); d = -conj(grad), d.grad = -lambda.
                let g1 = (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -th1)) / h;
                let g2 = (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -th2)) / h;
                let d1 = (Complex64::from_polar(1.0, th1) - Complex64::new(1.0, 0.0)) / h;
                let d2 = (Complex64::from_polar(1.0, th2) - Complex64::new(1.0, 0.0)) / h;
                let lam = (4.0 / (h * h))
                    * ((0.5 * th1).sin().powi(2) + (0.5 * th2).sin().powi(2));
                let df = d1 * self.s1[e] + d2 * self.s2[e];
                let p = (self.cbar * lam * self.sg[e] - df) / lam;
                sp[e] = p;
                self.s1[e] = (self.s1[e] - g1 * p) / (self.cbar * lam);
                self.s2[e] = (self.s2[e] - g2 * p) / (self.cbar * lam);
            }
        }

        self.fft.inverse(&mut self.s1, &mut out_u.u1);
        self.fft.inverse(&mut self.s2, &mut out_u.u2);
        self.fft.inverse(&mut sp, out_p);
    }
}

// ---------------------------------------------------------------------------
// Box free-slip constant-coefficient reference solver
// ---------------------------------------------------------------------------

/// Exact solver for the constant-coefficient staggered Stokes system on
/// the unit square with zero normal velocity and free-slip tangential
/// ghosts. In the sine basis across Dirichlet directions and the
/// half-point cosine basis across Neumann directions every mode couples
/// through at most a 3x3 system. Used as the preconditioner for the
/// no-slip problem, whose difference is a boundary perturbation.
pub struct BoxConstantSolver {
    m: usize,
    cbar: f64,
    tr: RealTransforms,
}

impl BoxConstantSolver {
    pub fn new(m: usize, cbar: f64) -> Self {
        BoxConstantSolver {
            m,
            cbar,
            tr: RealTransforms::new(),
        }
    }

    /// `f` is read on interior faces only; `out_u` boundary faces are set
    /// to zero. The `(0,0)` cosine mode of `g` (total divergence) has no
    /// matching pressure mode and is discarded, which is the projection
    /// that makes the system solvable.
    pub fn solve(
        &mut self,
        f: &BoxVelocity,
        g: &Field2,
        out_u: &mut BoxVelocity,
        out_p: &mut Field2,
    ) {
        let m = self.m;
        let h = 1.0 / m as f64;
        let gamma = |k: usize| -(2.0 / h) * (PI * k as f64 / (2.0 * m as f64)).sin();

        let mut a1 = Field2::from_fn(m - 1, m, |i, j| f.u1.at(i + 1, j));
        let mut a2 = Field2::from_fn(m, m - 1, |i, j| f.u2.at(i, j + 1));
        let mut ag = g.clone();
        transform_x(&mut self.tr, &mut a1, Basis::Sine, true);
        transform_y(&mut self.tr, &mut a1, Basis::Cosine, true);
        transform_x(&mut self.tr, &mut a2, Basis::Cosine, true);
        transform_y(&mut self.tr, &mut a2, Basis::Sine, true);
        transform_x(&mut self.tr, &mut ag, Basis::Cosine, true);
        transform_y(&mut self.tr, &mut ag, Basis::Cosine, true);

        let mut p = Field2::zeros(m, m);
        for k in 0..m {
            for q in 0..m {
                let gx = gamma(k);
                let gy = gamma(q);
                let (lx, ly) = (gx * gx, gy * gy);
                match (k, q) {
                    (0, 0) => {}
                    (_, 0) => {
                        let f1 = a1.at(k - 1, 0);
                        let gg = ag.at(k, 0);
                        let u1 = -gg / gx;
                        *p.at_mut(k, 0) = (f1 - self.cbar * lx * u1) / gx;
                        *a1.at_mut(k - 1, 0) = u1;
                    }
                    (0, _) => {
                        let f2 = a2.at(0, q - 1);
                        let gg = ag.at(0, q);
                        let u2 = -gg / gy;
                        *p.at_mut(0, q) = (f2 - self.cbar * ly * u2) / gy;
                        *a2.at_mut(0, q - 1) = u2;
                    }
                    _ => {
                        let f1 = a1.at(k - 1, q);
                        let f2 = a2.at(k, q - 1);
                        let gg = ag.at(k, q);
                        let lam = lx + ly;
                        let ph = (self.cbar * lam * gg + gx * f1 + gy * f2) / lam;
                        *p.at_mut(k, q) = ph;
                        *a1.at_mut(k - 1, q) = (f1 - gx * ph) / (self.cbar * lam);
                        *a2.at_mut(k, q - 1) = (f2 - gy * ph) / (self.cbar * lam);
                    }
                }
            }
        }

        transform_x(&mut self.tr, &mut a1, Basis::Sine, false);
        transform_y(&mut self.tr, &mut a1, Basis::Cosine, false);
        transform_x(&mut self.tr, &mut a2, Basis::Cosine, false);
        transform_y(&mut self.tr, &mut a2, Basis::Sine, false);
        transform_x(&mut self.tr, &mut p, Basis::Cosine, false);
        transform_y(&mut self.tr, &mut p, Basis::Cosine, false);

        out_u.u1 = Field2::zeros(m + 1, m);
        out_u.u2 = Field2::zeros(m, m + 1);
        for i in 0..m - 1 {
            for j in 0..m {
                *out_u.u1.at_mut(i + 1, j) = a1.at(i, j);
            }
        }
        for i in 0..m {
            for j in 0..m - 1 {
                *out_u.u2.at_mut(i, j + 1) = a2.at(i, j);
            }
        }
        *out_p = p;
    }
}

// ---------------------------------------------------------------------------
// Packed systems
// ---------------------------------------------------------------------------

/// Packed `[u1; u2; p]` system for a torus operator, preconditioned by
/// the exact constant-coefficient solver at the coefficient's mean.
pub struct TorusSystem<'a> {
    op: &'a TorusStokesOp,
    pre: TorusConstantSolver,
    u: TorusVelocity,
    p: Field2,
    ou: TorusVelocity,
    op_out: Field2,
}

impl<'a> TorusSystem<'a> {
    pub fn new(op: &'a TorusStokesOp) -> Self {
        let n = op.n;
        TorusSystem {
            op,
            pre: TorusConstantSolver::new(n, op.coeff.scalar_mean),
            u: TorusVelocity::zeros(n),
            p: Field2::zeros(n, n),
            ou: TorusVelocity::zeros(n),
            op_out: Field2::zeros(n, n),
        }
    }

    pub fn pack(u: &TorusVelocity, p: &Field2, out: &mut [f64]) {
        let nn = p.data.len();
        out[..nn].copy_from_slice(&u.u1.data);
        out[nn..2 * nn].copy_from_slice(&u.u2.data);
        out[2 * nn..].copy_from_slice(&p.data);
    }

    pub fn unpack(x: &[f64], u: &mut TorusVelocity, p: &mut Field2) {
        let nn = p.data.len();
        u.u1.data.copy_from_slice(&x[..nn]);
        u.u2.data.copy_from_slice(&x[nn..2 * nn]);
        p.data.copy_from_slice(&x[2 * nn..]);
    }
}

impl<'a> SaddleSystem for TorusSystem<'a> {
    fn dim(&self) -> usize {
        3 * self.op.n * self.op.n
    }

    fn apply(&mut self, x: &[f64], out: &mut [f64]) {
        Self::unpack(x, &mut self.u, &mut self.p);
        self.op.apply(&self.u, &self.p, &mut self.ou, &mut self.op_out);
        Self::pack(&self.ou, &self.op_out, out);
    }

    fn precondition(&mut self, r: &[f64], out: &mut [f64]) {
        Self::unpack(r, &mut self.u, &mut self.p);
        self.pre.solve(&self.u, &self.p, &mut self.ou, &mut self.op_out);
        Self::pack(&self.ou, &self.op_out, out);
    }

    fn project(&self, x: &mut [f64]) {
        let nn = self.op.n * self.op.n;
        for block in x.chunks_exact_mut(nn) {
            let mean = block.iter().sum::<f64>() / nn as f64;
            for v in block.iter_mut() {
                *v -= mean;
            }
        }
    }
}

/// Packed system for the no-slip box operator. Unknowns are interior
/// faces and all pressures: `[(m-1) m | m (m-1) | m m]`.
pub struct BoxSystem<'a> {
    op: &'a BoxStokesOp,
    pre: BoxConstantSolver,
    u: BoxVelocity,
    p: Field2,
    ou: BoxVelocity,
    od: Field2,
}

impl<'a> BoxSystem<'a> {
    pub fn new(op: &'a BoxStokesOp) -> Self {
        let m = op.m;
        BoxSystem {
            op,
            pre: BoxConstantSolver::new(m, op.coeff.scalar_mean),
            u: BoxVelocity::zeros(m),
            p: Field2::zeros(m, m),
            ou: BoxVelocity::zeros(m),
            od: Field2::zeros(m, m),
        }
    }

    pub fn dim_for(m: usize) -> usize {
        (m - 1) * m + m * (m - 1) + m * m
    }

    pub fn pack(u: &BoxVelocity, p: &Field2, out: &mut [f64]) {
        let m = p.nx;
        let mut e = 0;
        for i in 1..m {
            for j in 0..m {
                out[e] = u.u1.at(i, j);
                e += 1;
            }
        }
        for i in 0..m {
            for j in 1..m {
                out[e] = u.u2.at(i, j);
                e += 1;
            }
        }
        out[e..].copy_from_slice(&p.data);
    }

    /// Boundary faces of `u` are zeroed; the packed vector has none.
    pub fn unpack(x: &[f64], u: &mut BoxVelocity, p: &mut Field2) {
        let m = p.nx;
        u.u1.data.iter_mut().for_each(|v| *v = 0.0);
        u.u2.data.iter_mut().for_each(|v| *v = 0.0);
        let mut e = 0;
        for i in 1..m {
            for j in 0..m {
                *u.u1.at_mut(i, j) = x[e];
                e += 1;
            }
        }
        for i in 0..m {
            for j in 1..m {
                *u.u2.at_mut(i, j) = x[e];
                e += 1;
            }
        }
        p.data.copy_from_slice(&x[e..]);
    }
}

impl<'a> SaddleSystem for BoxSystem<'a> {
    fn dim(&self) -> usize {
        Self::dim_for(self.op.m)
    }

    fn apply(&mut self, x: &[f64], out: &mut [f64]) {
        Self::unpack(x, &mut self.u, &mut self.p);
        self.op
            .apply(&self.u, Some(&self.p), None, &mut self.ou, &mut self.od);
        Self::pack(&self.ou, &self.od, out);
    }

    fn precondition(&mut self, r: &[f64], out: &mut [f64]) {
        Self::unpack(r, &mut self.u, &mut self.p);
        self.pre.solve(&self.u, &self.p, &mut self.ou, &mut self.od);
        Self::pack(&self.ou, &self.od, out);
    }

    /// Only the pressure mean is constrained; velocity unknowns carry
    /// Dirichlet conditions and need no projection.
    fn project(&self, x: &mut [f64]) {
        let m = self.op.m;
        let off = (m - 1) * m + m * (m - 1);
        let nn = m * m;
        let mean = x[off..].iter().sum::<f64>() / nn as f64;
        for v in x[off..].iter_mut() {
            *v -= mean;
        }
    }
}

// ---------------------------------------------------------------------------
// High-level entry points
// ---------------------------------------------------------------------------

/// Solves `L u + grad p = f`, `div u = g` on the torus with zero-mean
/// velocity and pressure. Momentum and continuity means of the data are
/// projected out (they must vanish for solvability; callers assemble data
/// where they do up to roundoff).
pub fn solve_torus_stokes(
    op: &TorusStokesOp,
    f: &TorusVelocity,
    g: &Field2,
    params: &GmresParams,
    context: &str,
) -> Result<(TorusVelocity, Field2, SolveStats)> {
    let n = op.n;
    let mut sys = TorusSystem::new(op);
    let mut b = vec![0.0; sys.dim()];
    TorusSystem::pack(f, g, &mut b);
    sys.project(&mut b);
    let (x, stats) = gmres(&mut sys, &b, params);
    stats.require_converged(context, params.tol)?;
    let mut u = TorusVelocity::zeros(n);
    let mut p = Field2::zeros(n, n);
    TorusSystem::unpack(&x, &mut u, &mut p);
    u.project_mean_zero();
    p.project_mean_zero();
    Ok((u, p, stats))
}

/// Solves the no-slip box system for assembled interior data (forcing
/// minus boundary lifting). Returns velocity with zero boundary faces;
/// the caller adds boundary values back when sampling traces.
pub fn solve_box_stokes(
    op: &BoxStokesOp,
    rhs_u: &BoxVelocity,
    rhs_div: &Field2,
    params: &GmresParams,
    context: &str,
) -> Result<(BoxVelocity, Field2, SolveStats)> {
    let m = op.m;
    let mut sys = BoxSystem::new(op);
    let mut b = vec![0.0; sys.dim()];
    BoxSystem::pack(rhs_u, rhs_div, &mut b);
    sys.project(&mut b);
    let (x, stats) = gmres(&mut sys, &b, params);
    stats.require_converged(context, params.tol)?;
    let mut u = BoxVelocity::zeros(m);
    let mut p = Field2::zeros(m, m);
    BoxSystem::unpack(&x, &mut u, &mut p);
    p.project_mean_zero();
    Ok((u, p, stats))
}
