//! Coefficient tensors `a_{ij}^{ab}(y)` for the variable-viscosity Stokes
//! operator, together with two-sided ellipticity verification.
//!
//! All built-in families are 1-periodic and smooth. The tensor acts on
//! velocity gradients: the flux carried by the operator is
//! `sigma_i^a = a_{ij}^{ab} d_j u^b` with lower indices enumerating the
//! derivative direction and upper indices the vector component. No
//! symmetry in `(i,a) <-> (j,b)` is assumed anywhere downstream.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub const D: usize = 2;

/// Pointwise 4-index tensor, flat layout `a[i*8 + j*4 + alpha*2 + beta]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tensor4(pub [f64; 16]);

impl Tensor4 {
    #[inline]
    pub fn idx(i: usize, j: usize, alpha: usize, beta: usize) -> usize {
        i * 8 + j * 4 + alpha * 2 + beta
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, alpha: usize, beta: usize) -> f64 {
        self.0[Self::idx(i, j, alpha, beta)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, alpha: usize, beta: usize, v: f64) {
        self.0[Self::idx(i, j, alpha, beta)] = v;
    }

    /// `c * delta_ij delta^ab`, the isotropic tensor.
    pub fn isotropic(c: f64) -> Self {
        let mut t = Tensor4::default();
        for i in 0..D {
            for alpha in 0..D {
                t.set(i, i, alpha, alpha, c);
            }
        }
        t
    }

    /// Index-transposed tensor `a*_{ij}^{ab} = a_{ji}^{ba}`.
    pub fn adjoint(&self) -> Self {
        let mut t = Tensor4::default();
        for i in 0..D {
            for j in 0..D {
                for a in 0..D {
                    for b in 0..D {
                        t.set(i, j, a, b, self.get(j, i, b, a));
                    }
                }
            }
        }
        t
    }

    /// Quadratic form `a_{ij}^{ab} xi_i^a xi_j^b` for a matrix direction
    /// `xi[i][a]`. This is the quantity the ellipticity condition bounds.
    pub fn quadratic_form(&self, xi: &[[f64; 2]; 2]) -> f64 {
        let mut q = 0.0;
        for i in 0..D {
            for a in 0..D {
                for j in 0..D {
                    for b in 0..D {
                        q += self.get(i, j, a, b) * xi[i][a] * xi[j][b];
                    }
                }
            }
        }
        q
    }

    /// Flux of a gradient sample: `sigma[i][a] = a_{ij}^{ab} g[j][b]`.
    #[inline]
    pub fn flux(&self, g: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut s = [[0.0; 2]; 2];
        for i in 0..D {
            for a in 0..D {
                let mut acc = 0.0;
                for j in 0..D {
                    for b in 0..D {
                        acc += self.get(i, j, a, b) * g[j][b];
                    }
                }
                s[i][a] = acc;
            }
        }
        s
    }
}

/// Built-in coefficient families. `offset` and `amplitude` parametrize the
/// scalar factor; the nonsymmetric family adds a mean-zero skew part on
/// the `(i, j)` index pair with magnitude 10% of the offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Identity tensor, `a = delta_ij delta^ab`.
    Constant,
    /// `s(y) = offset + amplitude * sin(2 pi y_1)`, isotropic.
    Laminate { offset: f64, amplitude: f64 },
    /// `s(y) = offset + amplitude * sin(2 pi y_1) sin(2 pi y_2)`, isotropic.
    Trig2d { offset: f64, amplitude: f64 },
    /// Scalar `offset + amplitude * (sin(2 pi y_1) sin(2 pi y_2)
    /// + 0.3 sin(2 pi y_1))` plus two mean-zero skew parts built from the
    /// rotation generator `rho = [[0, 1], [-1, 0]]`: one on the component
    /// pair, one on the coordinate pair, with distinct trigonometric
    /// profiles sharing the same frequencies. Skew terms vanish in the
    /// quadratic form, so ellipticity comes from the scalar alone; the
    /// drift term and the profile pairing are chosen so that no cell
    /// symmetry maps the tensor onto its index adjoint, which keeps the
    /// homogenized tensor genuinely nonsymmetric.
    Nonsymmetric { offset: f64, amplitude: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Constant => "constant",
            Family::Laminate { .. } => "laminate",
            Family::Trig2d { .. } => "trig2d",
            Family::Nonsymmetric { .. } => "nonsymmetric",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Family::Constant => vec![],
            Family::Laminate { offset, amplitude }
            | Family::Trig2d { offset, amplitude }
            | Family::Nonsymmetric { offset, amplitude } => vec![offset, amplitude],
        }
    }

    fn is_symmetric(&self) -> bool {
        !matches!(self, Family::Nonsymmetric { .. })
    }

    /// Exact range of the scalar factor, used for the default `mu`.
    fn scalar_range(&self) -> (f64, f64) {
        match *self {
            Family::Constant => (1.0, 1.0),
            Family::Laminate { offset, amplitude }
            | Family::Trig2d { offset, amplitude } => (offset - amplitude, offset + amplitude),
            Family::Nonsymmetric { offset, amplitude } => {
                // |sin sin + 0.3 sin| peaks at 1.3 when both sines are +-1.
                (offset - 1.3 * amplitude, offset + 1.3 * amplitude)
            }
        }
    }
}

/// A coefficient field: family plus the declared ellipticity constant.
/// `flipped` marks the index-adjoint of a nonsymmetric family so that
/// taking the adjoint twice restores the original value exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientTensor {
    pub family: Family,
    pub mu: f64,
    flipped: bool,
}

/// Builds a coefficient field, validating that the family parameters keep
/// the tensor uniformly elliptic and that `mu` is admissible for it.
/// Passing `mu = None` selects the largest admissible constant.
pub fn build_coefficient(family: Family, mu: Option<f64>) -> Result<CoefficientTensor> {
    let (lo, hi) = family.scalar_range();
    if lo <= 0.0 {
        return Err(Error::precondition(format!(
            "family {} with params {:?} has scalar lower bound {lo} <= 0",
            family.name(),
            family.params()
        )));
    }
    let mu_max = lo.min(1.0 / hi);
    let mu = mu.unwrap_or(mu_max);
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::precondition(format!(
            "declared mu must lie in (0, 1], got {mu}"
        )));
    }
    if mu > mu_max + 1e-12 {
        return Err(Error::precondition(format!(
            "declared mu = {mu} exceeds the admissible bound {mu_max} \
             for family {}",
            family.name()
        )));
    }
    Ok(CoefficientTensor {
        family,
        mu,
        flipped: false,
    })
}

impl CoefficientTensor {
    /// Scalar factor of the isotropic part at `y`.
    fn scalar(&self, y: [f64; 2]) -> f64 {
        match self.family {
            Family::Constant => 1.0,
            Family::Laminate { offset, amplitude } => {
                offset + amplitude * (2.0 * PI * y[0]).sin()
            }
            Family::Trig2d { offset, amplitude } => {
                offset + amplitude * (2.0 * PI * y[0]).sin() * (2.0 * PI * y[1]).sin()
            }
            Family::Nonsymmetric { offset, amplitude } => {
                let s1 = (2.0 * PI * y[0]).sin();
                offset + amplitude * s1 * ((2.0 * PI * y[1]).sin() + 0.3)
            }
        }
    }

    fn scalar_grad(&self, y: [f64; 2]) -> [f64; 2] {
        match self.family {
            Family::Constant => [0.0, 0.0],
            Family::Laminate { amplitude, .. } => {
                [2.0 * PI * amplitude * (2.0 * PI * y[0]).cos(), 0.0]
            }
            Family::Trig2d { amplitude, .. } => [
                2.0 * PI * amplitude * (2.0 * PI * y[0]).cos() * (2.0 * PI * y[1]).sin(),
                2.0 * PI * amplitude * (2.0 * PI * y[0]).sin() * (2.0 * PI * y[1]).cos(),
            ],
            Family::Nonsymmetric { amplitude, .. } => [
                2.0 * PI * amplitude * (2.0 * PI * y[0]).cos() * ((2.0 * PI * y[1]).sin() + 0.3),
                2.0 * PI * amplitude * (2.0 * PI * y[0]).sin() * (2.0 * PI * y[1]).cos(),
            ],
        }
    }

    /// Coefficients `[tau_c, tau_s]` of the two skew generators: `tau_c`
    /// multiplies `delta_ij rho^ab` (component pair), `tau_s` multiplies
    /// `rho_ij delta^ab` (coordinate pair). Both are zero for symmetric
    /// families; a `flipped` tensor negates both, which is exactly the
    /// index adjoint for this family shape.
    fn skew_pair(&self, y: [f64; 2]) -> [f64; 2] {
        match self.family {
            Family::Nonsymmetric { offset, .. } => {
                let sign = if self.flipped { -1.0 } else { 1.0 };
                let k = sign * 0.1 * offset;
                let (c1, c2) = ((2.0 * PI * y[0]).cos(), (2.0 * PI * y[1]).cos());
                let s1 = (2.0 * PI * y[0]).sin();
                [k * c1 * c2, k * s1 * c2]
            }
            _ => [0.0, 0.0],
        }
    }

    /// Gradients of the two skew coefficients, `[grad tau_c, grad tau_s]`.
    fn skew_pair_grad(&self, y: [f64; 2]) -> [[f64; 2]; 2] {
        match self.family {
            Family::Nonsymmetric { offset, .. } => {
                let sign = if self.flipped { -1.0 } else { 1.0 };
                let k = sign * 0.2 * PI * offset;
                let (c1, c2) = ((2.0 * PI * y[0]).cos(), (2.0 * PI * y[1]).cos());
                let (s1, s2) = ((2.0 * PI * y[0]).sin(), (2.0 * PI * y[1]).sin());
                [[-k * s1 * c2, -k * c1 * s2], [k * c1 * c2, -k * s1 * s2]]
            }
            _ => [[0.0, 0.0], [0.0, 0.0]],
        }
    }

    /// Full 4-index tensor at a point of the unit torus. Accepts any `y`;
    /// the families are 1-periodic by construction.
    pub fn evaluate(&self, y: [f64; 2]) -> Tensor4 {
        let mut t = Tensor4::isotropic(self.scalar(y));
        let [tau_c, tau_s] = self.skew_pair(y);
        add_skew(&mut t, tau_c, tau_s);
        t
    }

    /// Analytic gradient `[d a / d y_1, d a / d y_2]` at a point; needed
    /// for manufactured forcings of the oscillating operator.
    pub fn evaluate_grad(&self, y: [f64; 2]) -> [Tensor4; 2] {
        let ds = self.scalar_grad(y);
        let dt = self.skew_pair_grad(y);
        let mut out = [Tensor4::default(), Tensor4::default()];
        for k in 0..D {
            let mut g = Tensor4::isotropic(ds[k]);
            add_skew(&mut g, dt[0][k], dt[1][k]);
            out[k] = g;
        }
        out
    }

    /// Index adjoint `a*_{ij}^{ab}(y) = a_{ji}^{ba}(y)` as a first-class
    /// coefficient field. Symmetric families are returned unchanged, so
    /// applying the operation twice is the identity in all cases.
    pub fn adjoint_coefficient(&self) -> Self {
        if self.family.is_symmetric() {
            *self
        } else {
            CoefficientTensor {
                flipped: !self.flipped,
                ..*self
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.family.is_symmetric()
    }

    /// True for the index-adjoint of a nonsymmetric family. Distinguishes
    /// the primal and adjoint corrector sets in cache keys.
    pub fn is_flipped(&self) -> bool {
        self.flipped
    }

    /// Mean of the scalar factor over the cell; the constant-coefficient
    /// reference operator in the solvers is built from this value.
    pub fn scalar_mean(&self) -> f64 {
        match self.family {
            Family::Constant => 1.0,
            Family::Laminate { offset, .. }
            | Family::Trig2d { offset, .. }
            | Family::Nonsymmetric { offset, .. } => offset,
        }
    }
}

/// Adds `tau_c * delta_ij rho^ab + tau_s * rho_ij delta^ab` in place.
/// Both generators pair a diagonal index with an off-diagonal one, so
/// every touched entry is skew under the `(i, a) <-> (j, b)` swap and
/// cancels from the quadratic form.
fn add_skew(t: &mut Tensor4, tau_c: f64, tau_s: f64) {
    if tau_c != 0.0 {
        for i in 0..D {
            *tensor_entry(t, i, i, 0, 1) += tau_c;
            *tensor_entry(t, i, i, 1, 0) -= tau_c;
        }
    }
    if tau_s != 0.0 {
        for a in 0..D {
            *tensor_entry(t, 0, 1, a, a) += tau_s;
            *tensor_entry(t, 1, 0, a, a) -= tau_s;
        }
    }
}

#[inline]
fn tensor_entry<'t>(
    t: &'t mut Tensor4,
    i: usize,
    j: usize,
    alpha: usize,
    beta: usize,
) -> &'t mut f64 {
    &mut t.0[Tensor4::idx(i, j, alpha, beta)]
}

/// Outcome of sampling the two-sided ellipticity bounds.
#[derive(Debug, Clone)]
pub struct EllipticityReport {
    pub declared_mu: f64,
    pub sampled_lower: f64,
    pub sampled_upper: f64,
    pub worst_lower_point: [f64; 2],
    pub worst_upper_point: [f64; 2],
    /// True when `mu <= sampled_lower` and `sampled_upper <= 1/mu`.
    pub ok: bool,
}

/// Samples the quadratic form over a `grid_n x grid_n` lattice of cell
/// points and, at each point, over the four canonical matrix directions
/// plus `n_random` seeded random unit directions.
pub fn verify_ellipticity(
    coeff: &CoefficientTensor,
    grid_n: usize,
    n_random: usize,
    seed: u64,
) -> EllipticityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut directions: Vec<[[f64; 2]; 2]> = Vec::with_capacity(4 + n_random);
    for i in 0..D {
        for a in 0..D {
            let mut xi = [[0.0; 2]; 2];
            xi[i][a] = 1.0;
            directions.push(xi);
        }
    }
    for _ in 0..n_random {
        let mut xi = [[0.0; 2]; 2];
        let mut norm2 = 0.0f64;
        for row in xi.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
                norm2 += *v * *v;
            }
        }
        if norm2 < 1e-12 {
            xi[0][0] = 1.0;
            norm2 = 1.0;
        }
        let inv = 1.0 / norm2.sqrt();
        for row in xi.iter_mut() {
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        directions.push(xi);
    }

    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    let mut worst_lower = [0.0, 0.0];
    let mut worst_upper = [0.0, 0.0];
    for gi in 0..grid_n {
        for gj in 0..grid_n {
            let y = [gi as f64 / grid_n as f64, gj as f64 / grid_n as f64];
            let t = coeff.evaluate(y);
            for xi in &directions {
                let q = t.quadratic_form(xi);
                if q < lower {
                    lower = q;
                    worst_lower = y;
                }
                if q > upper {
                    upper = q;
                    worst_upper = y;
                }
            }
        }
    }

    let ok = coeff.mu <= lower + 1e-12 && upper <= 1.0 / coeff.mu + 1e-12;
    EllipticityReport {
        declared_mu: coeff.mu,
        sampled_lower: lower,
        sampled_upper: upper,
        worst_lower_point: worst_lower,
        worst_upper_point: worst_upper,
        ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laminate_bounds_match_the_extremes() {
        let c = build_coefficient(
            Family::Laminate {
                offset: 2.0,
                amplitude: 1.0,
            },
            None,
        )
        .unwrap();
        // Largest admissible mu for range [1, 3] is min(1, 1/3).
        assert!((c.mu - 1.0 / 3.0).abs() < 1e-15);
        let rep = verify_ellipticity(&c, 64, 16, 7);
        assert!(rep.ok);
        assert!((rep.sampled_lower - 1.0).abs() < 1e-2);
        assert!((rep.sampled_upper - 3.0).abs() < 1e-2);
    }

    #[test]
    fn overdeclared_mu_fails_verification() {
        let c = CoefficientTensor {
            family: Family::Laminate {
                offset: 2.0,
                amplitude: 1.0,
            },
            mu: 0.5,
            flipped: false,
        };
        // upper bound 3 > 1/0.5 = 2, so the declaration must be rejected.
        let rep = verify_ellipticity(&c, 64, 8, 3);
        assert!(!rep.ok);
    }

    #[test]
    fn degenerate_parameters_are_rejected() {
        let r = build_coefficient(
            Family::Laminate {
                offset: 1.0,
                amplitude: 1.0,
            },
            None,
        );
        assert!(r.is_err());
    }

    #[test]
    fn adjoint_is_an_involution_and_flips_skew() {
        let c = build_coefficient(
            Family::Nonsymmetric {
                offset: 2.0,
                amplitude: 1.0,
            },
            None,
        )
        .unwrap();
        let y = [0.31, 0.77];
        let a = c.evaluate(y);
        let astar = c.adjoint_coefficient().evaluate(y);
        for i in 0..2 {
            for j in 0..2 {
                for al in 0..2 {
                    for be in 0..2 {
                        assert_eq!(astar.get(i, j, al, be), a.get(j, i, be, al));
                    }
                }
            }
        }
        assert_eq!(c.adjoint_coefficient().adjoint_coefficient(), c);
        let lam = build_coefficient(
            Family::Laminate {
                offset: 2.0,
                amplitude: 1.0,
            },
            None,
        )
        .unwrap();
        assert_eq!(lam.adjoint_coefficient(), lam);
    }

    #[test]
    fn skew_part_leaves_the_quadratic_form_unchanged() {
        let non = build_coefficient(
            Family::Nonsymmetric {
                offset: 2.0,
                amplitude: 1.0,
            },
            None,
        )
        .unwrap();
        let xi = [[0.3, -1.2], [0.7, 0.4]];
        let y = [0.13, 0.62];
        let t = non.evaluate(y);
        let qn = t.quadratic_form(&xi);
        // The form must see only the isotropic scalar part.
        let norm2: f64 = xi.iter().flatten().map(|v| v * v).sum();
        let expected = non.scalar(y) * norm2;
        assert!((qn - expected).abs() < 1e-14 * expected.abs());
        // And the adjoint shares it pointwise, since only skew entries flip.
        let qa = non.adjoint_coefficient().evaluate(y).quadratic_form(&xi);
        assert!((qn - qa).abs() < 1e-14 * qn.abs());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let c = build_coefficient(
            Family::Nonsymmetric {
                offset: 2.0,
                amplitude: 1.0,
            },
            None,
        )
        .unwrap();
        let y = [0.37, 0.59];
        let g = c.evaluate_grad(y);
        let d = 1e-6;
        for k in 0..2 {
            let mut yp = y;
            let mut ym = y;
            yp[k] += d;
            ym[k] -= d;
            let tp = c.evaluate(yp);
            let tm = c.evaluate(ym);
            for e in 0..16 {
                let fd = (tp.0[e] - tm.0[e]) / (2.0 * d);
                assert!(
                    (fd - g[k].0[e]).abs() < 1e-5,
                    "entry {e} direction {k}: fd {fd} vs analytic {}",
                    g[k].0[e]
                );
            }
        }
    }
}
