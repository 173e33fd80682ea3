//! Fast transforms backing the constant-coefficient reference solvers.
//!
//! Three transform families are wrapped here:
//!
//! * complex 2D FFT on the torus (both staggered sub-lattices share it,
//!   since translation-invariant stencils have the same symbol on every
//!   shifted copy of the lattice);
//! * DST-I on interior nodes `i = 1..m-1` of `[0, 1]`, the eigenbasis of
//!   the second difference with homogeneous end values;
//! * half-point cosine transforms (DCT-II forward, DCT-III inverse), the
//!   eigenbasis of the second difference with symmetric ghost values.
//!
//! Conventions are spelled out per function; every one is checked against
//! a naive `O(n^2)` evaluation in the tests below.

use crate::field::Field2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::Arc;

/// Complex 2D FFT of an `n x n` field with cached plans and scratch.
/// Forward uses the `e^{-i}` kernel, unnormalized; `inverse` applies the
/// `e^{+i}` kernel and the `1/n^2` normalization, so the pair round-trips.
pub struct Fft2 {
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    col: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            col: vec![Complex64::default(); n],
        }
    }

    fn rows(&self, buf: &mut [Complex64], fwd: bool) {
        let plan = if fwd { &self.fwd } else { &self.inv };
        for row in buf.chunks_exact_mut(self.n) {
            plan.process(row);
        }
    }

    fn cols(&mut self, buf: &mut [Complex64], fwd: bool) {
        let n = self.n;
        for j in 0..n {
            for i in 0..n {
                self.col[i] = buf[i * n + j];
            }
            if fwd {
                self.fwd.process(&mut self.col);
            } else {
                self.inv.process(&mut self.col);
            }
            for i in 0..n {
                buf[i * n + j] = self.col[i];
            }
        }
    }

    /// Forward transform of a real field into a caller-provided buffer of
    /// length `n * n`, laid out like the field (`[i * n + j]`).
    pub fn forward(&mut self, f: &Field2, out: &mut Vec<Complex64>) {
        let n = self.n;
        debug_assert_eq!(f.nx, n);
        out.clear();
        out.extend(f.data.iter().map(|&v| Complex64::new(v, 0.0)));
        self.rows(out, true);
        self.cols(out, true);
    }

    /// Inverse transform; writes the real part into `out` (imaginary
    /// residue of real input is below roundoff and discarded).
    pub fn inverse(&mut self, spec: &mut [Complex64], out: &mut Field2) {
        let n = self.n;
        self.rows(spec, false);
        self.cols(spec, false);
        let scale = 1.0 / (n * n) as f64;
        for (dst, src) in out.data.iter_mut().zip(spec.iter()) {
            *dst = src.re * scale;
        }
    }
}

/// Shared 1D real-transform engine; plans are cached per length.
pub struct RealTransforms {
    planner: FftPlanner<f64>,
    plans: HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

impl Default for RealTransforms {
    fn default() -> Self {
        Self::new()
    }
}

impl RealTransforms {
    pub fn new() -> Self {
        RealTransforms {
            planner: FftPlanner::new(),
            plans: HashMap::new(),
        }
    }

    fn plan(&mut self, len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        let planner = &mut self.planner;
        self.plans
            .entry(len)
            .or_insert_with(|| {
                (
                    planner.plan_fft_forward(len),
                    planner.plan_fft_inverse(len),
                )
            })
            .clone()
    }

    /// DST-I of `x[0..l]` viewed as values at interior nodes `1..=l` of a
    /// lattice with `m = l + 1` cells: `X_k = sum_i x_i sin(pi k i / m)`
    /// for `k = 1..=l`. The transform is proportional to its own inverse:
    /// applying it twice multiplies by `m / 2`.
    pub fn dst1(&mut self, x: &mut [f64]) {
        let l = x.len();
        let m = l + 1;
        let (fwd, _) = self.plan(2 * m);
        let mut buf = vec![Complex64::default(); 2 * m];
        for i in 0..l {
            buf[i + 1] = Complex64::new(x[i], 0.0);
            buf[2 * m - 1 - i] = Complex64::new(-x[i], 0.0);
        }
        fwd.process(&mut buf);
        for k in 0..l {
            x[k] = -0.5 * buf[k + 1].im;
        }
    }

    pub fn dst1_inv(&mut self, x: &mut [f64]) {
        let m = x.len() + 1;
        self.dst1(x);
        let s = 2.0 / m as f64;
        for v in x.iter_mut() {
            *v *= s;
        }
    }

    /// Half-point cosine analysis: `C_k = sum_j x_j cos(pi k (j+1/2) / m)`
    /// for `k = 0..m-1`, where `x_j` sits at `(j + 1/2) h`.
    pub fn dct2(&mut self, x: &mut [f64]) {
        let m = x.len();
        let (fwd, _) = self.plan(2 * m);
        let mut buf = vec![Complex64::default(); 2 * m];
        for j in 0..m {
            buf[j] = Complex64::new(x[j], 0.0);
            buf[2 * m - 1 - j] = Complex64::new(x[j], 0.0);
        }
        fwd.process(&mut buf);
        for k in 0..m {
            let w = Complex64::from_polar(1.0, -std::f64::consts::PI * k as f64 / (2.0 * m as f64));
            x[k] = 0.5 * (w * buf[k]).re;
        }
    }

    /// Half-point cosine synthesis, the exact inverse of [`Self::dct2`]:
    /// `x_j = (C_0 + 2 sum_{k>=1} C_k cos(pi k (j+1/2)/m)) / m`.
    pub fn dct3(&mut self, x: &mut [f64]) {
        let m = x.len();
        let (_, inv) = self.plan(2 * m);
        let mut buf = vec![Complex64::default(); 2 * m];
        for k in 0..m {
            let w = if k == 0 { 1.0 } else { 2.0 };
            let ph =
                Complex64::from_polar(1.0, std::f64::consts::PI * k as f64 / (2.0 * m as f64));
            buf[k] = ph * (w * x[k]);
        }
        inv.process(&mut buf);
        for j in 0..m {
            x[j] = buf[j].re / m as f64;
        }
    }
}

/// Which 1D basis to use along an axis of a box lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Interior-node sine (homogeneous Dirichlet second difference).
    Sine,
    /// Half-point cosine (symmetric-ghost second difference).
    Cosine,
}

/// Applies the forward (`analysis = true`) or inverse 1D transform along
/// the x axis (index `i`) of a field, in place.
pub fn transform_x(tr: &mut RealTransforms, f: &mut Field2, basis: Basis, analysis: bool) {
    let (nx, ny) = (f.nx, f.ny);
    let mut col = vec![0.0; nx];
    for j in 0..ny {
        for i in 0..nx {
            col[i] = f.data[i * ny + j];
        }
        apply_1d(tr, &mut col, basis, analysis);
        for i in 0..nx {
            f.data[i * ny + j] = col[i];
        }
    }
}

/// Same along the y axis (index `j`), which is contiguous in memory.
pub fn transform_y(tr: &mut RealTransforms, f: &mut Field2, basis: Basis, analysis: bool) {
    for row in f.data.chunks_exact_mut(f.ny) {
        apply_1d(tr, row, basis, analysis);
    }
}

fn apply_1d(tr: &mut RealTransforms, x: &mut [f64], basis: Basis, analysis: bool) {
    match (basis, analysis) {
        (Basis::Sine, true) => tr.dst1(x),
        (Basis::Sine, false) => tr.dst1_inv(x),
        (Basis::Cosine, true) => tr.dct2(x),
        (Basis::Cosine, false) => tr.dct3(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn dst1_matches_naive_and_inverts() {
        let mut tr = RealTransforms::new();
        let l = 11;
        let m = l + 1;
        let x0 = random_vec(l, 1);
        let mut x = x0.clone();
        tr.dst1(&mut x);
        for k in 1..=l {
            let naive: f64 = (1..=l)
                .map(|i| x0[i - 1] * (PI * (k * i) as f64 / m as f64).sin())
                .sum();
            assert!((x[k - 1] - naive).abs() < 1e-12, "k={k}");
        }
        tr.dst1_inv(&mut x);
        for i in 0..l {
            assert!((x[i] - x0[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dct2_matches_naive_and_dct3_inverts() {
        let mut tr = RealTransforms::new();
        let m = 12;
        let x0 = random_vec(m, 2);
        let mut x = x0.clone();
        tr.dct2(&mut x);
        for k in 0..m {
            let naive: f64 = (0..m)
                .map(|j| x0[j] * (PI * k as f64 * (j as f64 + 0.5) / m as f64).cos())
                .sum();
            assert!((x[k] - naive).abs() < 1e-12, "k={k}");
        }
        tr.dct3(&mut x);
        for j in 0..m {
            assert!((x[j] - x0[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn fft2_round_trips_and_matches_naive_mode() {
        let n = 8;
        let mut fft = Fft2::new(n);
        let f = Field2::from_fn(n, n, |i, j| ((3 * i + 5 * j) as f64 * 0.37).sin());
        let mut spec = Vec::new();
        fft.forward(&f, &mut spec);
        // Naive check of one coefficient.
        let (k1, k2) = (3usize, 6usize);
        let mut naive = Complex64::default();
        for i in 0..n {
            for j in 0..n {
                let ph = -2.0 * PI * ((k1 * i + k2 * j) as f64) / n as f64;
                naive += Complex64::from_polar(f.at(i, j), ph);
            }
        }
        assert!((spec[k1 * n + k2] - naive).norm() < 1e-10);
        let mut back = Field2::zeros(n, n);
        fft.inverse(&mut spec, &mut back);
        for e in 0..n * n {
            assert!((back.data[e] - f.data[e]).abs() < 1e-12);
        }
    }

    #[test]
    fn axis_transforms_respect_layout() {
        let mut tr = RealTransforms::new();
        // Diagonalization check: half-point cosine must turn the periodic
        // symmetric-ghost second difference into a multiplication.
        let m = 16;
        let l = 3;
        let f0 = Field2::from_fn(m, m, |i, j| {
            (PI * l as f64 * (i as f64 + 0.5) / m as f64).cos() * (0.3 * j as f64).sin()
        });
        // Second difference in x with symmetric ghosts.
        let mut d2 = Field2::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let c = f0.at(i, j);
                let lft = if i == 0 { c } else { f0.at(i - 1, j) };
                let rgt = if i == m - 1 { c } else { f0.at(i + 1, j) };
                *d2.at_mut(i, j) = lft - 2.0 * c + rgt;
            }
        }
        let mut hat = f0.clone();
        let mut d2hat = d2.clone();
        transform_x(&mut tr, &mut hat, Basis::Cosine, true);
        transform_x(&mut tr, &mut d2hat, Basis::Cosine, true);
        let lam = -4.0 * (PI * l as f64 / (2.0 * m as f64)).sin().powi(2);
        for j in 0..m {
            assert!((d2hat.at(l, j) - lam * hat.at(l, j)).abs() < 1e-10);
        }
    }
}
