//! Convergence studies: the epsilon sweep that turns the solver stack
//! into measured homogenization rates.
//!
//! One study fixes a coefficient family and body-force data, solves the
//! cell problems once, then for each epsilon solves the oscillating and
//! homogenized problems on the same grid, builds the smoothed two-scale
//! expansions, solves the boundary corrector, and measures every error
//! column. Slopes come from least squares on (log eps, log error).
//!
//! Determinism contract: a fixed config yields byte-identical CSV. All
//! reductions run in fixed order, the parallel fan-out preserves row
//! order, and cached correctors are bit-exact copies of fresh ones.

use crate::cache::{self, CacheKey};
use crate::cell::{compute_correctors, compute_effective_tensor, CorrectorSet};
use crate::coeff::{build_coefficient, CoefficientTensor, Tensor4};
use crate::config::StudyConfig;
use crate::domain::{
    manufactured_problem, solve_dirichlet_stokes, vortex, DomainSolution, ProblemCoeff, Recipe,
};
use crate::error::{Error, Result};
use crate::field::{BoxVelocity, Field2};
use crate::grid::{CellGrid, DomainGrid};
use crate::norms::{
    boundary_layer_integral, center_gradient, discrete_norm, fit_rate, norm_report, NormKind,
    RateFit,
};
use crate::oper::CoeffMap;
use crate::solver::GmresParams;
use crate::twoscale::{
    build_pressure_expansion, build_velocity_expansion, smooth_derivatives_analytic,
    smooth_derivatives_reflected, solve_boundary_corrector, ExtensionMode, SmoothedDerivatives,
};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Error columns of the report, in CSV order.
pub const COLUMNS: [&str; 6] = [
    "l2_u",
    "h1_twoscale",
    "l2_pressure",
    "l2_w",
    "h1_w",
    "bl_const",
];

/// Columns whose maximum falls below this are reported with slope `nan`:
/// they sit at solver-noise level and a power law fitted to noise would
/// only mislead.
const DEGENERATE_FLOOR: f64 = 1e-8;

/// Everything the sweep shares across epsilons: the coefficient field,
/// its correctors, and the effective tensor they induce.
pub struct CellStage {
    pub coeff: CoefficientTensor,
    pub correctors: CorrectorSet,
    pub a_hat: Tensor4,
    pub from_cache: bool,
}

/// Computes or restores the corrector set, then assembles the effective
/// tensor from it. The tensor is always re-derived from the corrector
/// fields, so a cache hit reproduces the fresh result bit for bit.
pub fn prepare_cell_stage(cfg: &StudyConfig) -> Result<CellStage> {
    let coeff = build_coefficient(cfg.family, cfg.mu)?;
    let grid = CellGrid::new(cfg.cell_n)?;
    let params = GmresParams {
        tol: cfg.cell_tol,
        ..GmresParams::default()
    };
    let op = crate::oper::TorusStokesOp::new(grid, CoeffMap::Cell { coeff: &coeff });
    let key = CacheKey::for_correctors(&coeff, cfg.cell_n, cfg.cell_tol);
    let cached = match &cfg.cache_dir {
        Some(dir) => cache::read_correctors(dir, &key)?,
        None => None,
    };
    let from_cache = cached.is_some();
    let correctors = match cached {
        Some(set) => set,
        None => {
            let set = compute_correctors(&op, &params)?;
            if let Some(dir) = &cfg.cache_dir {
                cache::write_correctors(dir, &key, &set)?;
            }
            set
        }
    };
    let a_hat = compute_effective_tensor(&op, &correctors);
    Ok(CellStage {
        coeff,
        correctors,
        a_hat,
        from_cache,
    })
}

/// One measured epsilon.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub epsilon: f64,
    pub m: usize,
    /// Fine solve missed the `h <= eps / 8` resolution rule.
    pub under_resolved: bool,
    pub l2_u: f64,
    pub h1_twoscale: f64,
    pub l2_pressure: f64,
    pub l2_w: f64,
    pub h1_w: f64,
    /// Worst boundary-layer constant over the solved fields and
    /// radii r in {eps, 2 eps}.
    pub bl_const: f64,
    /// Discrete H2 norm of the homogenized velocity, the quantity the
    /// error bounds scale by.
    pub u0_h2: f64,
    /// `|u_eps - v_eps + w_eps|_H1`: the expansion error after the
    /// boundary corrector repairs the trace. First order in eps, against
    /// the half order of `h1_twoscale`. Not a CSV column.
    pub h1_full: f64,
    pub fine_iterations: usize,
}

impl SweepRow {
    pub fn column(&self, name: &str) -> f64 {
        match name {
            "l2_u" => self.l2_u,
            "h1_twoscale" => self.h1_twoscale,
            "l2_pressure" => self.l2_pressure,
            "l2_w" => self.l2_w,
            "h1_w" => self.h1_w,
            "bl_const" => self.bl_const,
            other => panic!("no column named {other}"),
        }
    }
}

/// Sweep result: rows in descending epsilon order plus one fit per
/// column, `None` where the column is degenerate or unfittable.
pub struct RateReport {
    pub config: StudyConfig,
    pub a_hat: Tensor4,
    pub cell_from_cache: bool,
    pub rows: Vec<SweepRow>,
    pub fits: Vec<(&'static str, Option<RateFit>)>,
}

fn tag_eps(e: Error, eps: f64) -> Error {
    match e {
        Error::NonConvergence {
            context,
            residual,
            iterations,
            tolerance,
        } => Error::NonConvergence {
            context: format!("eps = {eps}: {context}"),
            residual,
            iterations,
            tolerance,
        },
        Error::Precondition(msg) => Error::precondition(format!("eps = {eps}: {msg}")),
        other => other,
    }
}

fn velocity_difference(a: &BoxVelocity, b: &BoxVelocity) -> BoxVelocity {
    let sub = |x: &Field2, y: &Field2| Field2 {
        nx: x.nx,
        ny: x.ny,
        data: x.data.iter().zip(&y.data).map(|(p, q)| p - q).collect(),
    };
    BoxVelocity {
        m: a.m,
        u1: sub(&a.u1, &b.u1),
        u2: sub(&a.u2, &b.u2),
    }
}

/// Smoothed derivatives of the homogenized velocity, from closed-form
/// derivatives when the recipe has them, otherwise by reflecting the
/// discrete field.
fn smoothed_derivatives(
    cfg: &StudyConfig,
    u0: &DomainSolution,
    eps: f64,
) -> Result<SmoothedDerivatives> {
    match (cfg.extension, cfg.recipe) {
        (ExtensionMode::Analytic, Recipe::Vortex) => smooth_derivatives_analytic(
            u0.grid.m(),
            eps,
            vortex::velocity_grad,
            vortex::velocity_hessian,
        ),
        (ExtensionMode::Analytic, Recipe::Zero) => {
            smooth_derivatives_analytic(u0.grid.m(), eps, |_| [[0.0; 2]; 2], |_| [[[0.0; 2]; 2]; 2])
        }
        (ExtensionMode::Analytic, Recipe::Incompatible) => Err(Error::precondition(
            "analytic extension has no closed form for this recipe".to_string(),
        )),
        (ExtensionMode::Reflection, _) => smooth_derivatives_reflected(&u0.velocity, eps),
    }
}

/// Largest constant C with `int_{Omega_r} |u|^2 = C r |u|_H1 |u|_L2`
/// over the given fields and the two tested radii. Fields at noise
/// level are skipped: their constant is 0/0.
fn boundary_layer_constant(fields: &[[&Field2; 2]], eps: f64) -> f64 {
    let mut worst = 0.0f64;
    for comps in fields {
        let rep = norm_report(&comps[..]);
        if rep.l2 < 1e-13 {
            continue;
        }
        for r in [eps, 2.0 * eps] {
            let integral = boundary_layer_integral(&comps[..], r);
            worst = worst.max(integral / (r * rep.h1 * rep.l2));
        }
    }
    worst
}

/// Discrete H2 norm of a velocity via repeated center gradients.
fn h2_norm(centers: &[Field2; 2], h: f64) -> f64 {
    let mut total = 0.0;
    for c in centers {
        let rep = norm_report(&[c]);
        total += rep.l2 * rep.l2 + rep.h1_semi * rep.h1_semi;
        for axis in 0..2 {
            let g = center_gradient(c, axis, h);
            let semi = discrete_norm(&[&g], NormKind::H1Semi);
            total += semi * semi;
        }
    }
    total.sqrt()
}

fn sweep_row(
    cfg: &StudyConfig,
    cell: &CellStage,
    eps: f64,
    u0: &DomainSolution,
) -> Result<SweepRow> {
    let m = cfg.domain_m(eps);
    let grid = DomainGrid::new(m)?;
    let params = GmresParams {
        tol: cfg.domain_tol,
        ..GmresParams::default()
    };

    // Both problems share the same body force, divergence data, and
    // trace; only the coefficients differ, so the gap between their
    // solutions is pure homogenization error.
    let hom_problem = manufactured_problem(cfg.recipe, ProblemCoeff::effective(cell.a_hat), m)?;
    let fine_problem = hom_problem.with_source(ProblemCoeff::Oscillating {
        coeff: cell.coeff,
        epsilon: eps,
    });
    let fine = solve_dirichlet_stokes(&fine_problem, &params).map_err(|e| tag_eps(e, eps))?;

    let fine_centers = fine.velocity.to_centers();
    let u0_centers = u0.velocity.to_centers();
    let diff_centers = [
        Field2 {
            nx: m,
            ny: m,
            data: fine_centers[0]
                .data
                .iter()
                .zip(&u0_centers[0].data)
                .map(|(a, b)| a - b)
                .collect(),
        },
        Field2 {
            nx: m,
            ny: m,
            data: fine_centers[1]
                .data
                .iter()
                .zip(&u0_centers[1].data)
                .map(|(a, b)| a - b)
                .collect(),
        },
    ];
    let l2_u = discrete_norm(&[&diff_centers[0], &diff_centers[1]], NormKind::L2);

    let sd = smoothed_derivatives(cfg, u0, eps).map_err(|e| tag_eps(e, eps))?;
    let expansion = build_velocity_expansion(&u0.velocity, &cell.correctors, &sd, eps);
    let two_scale_gap = velocity_difference(&fine.velocity, &expansion);
    let two_scale_diff = two_scale_gap.to_centers();
    let h1_twoscale = discrete_norm(&[&two_scale_diff[0], &two_scale_diff[1]], NormKind::H1);

    let p_expansion = build_pressure_expansion(&u0.pressure, &cell.correctors, &sd, eps);
    let p_diff = Field2 {
        nx: m,
        ny: m,
        data: fine
            .pressure
            .data
            .iter()
            .zip(&p_expansion.data)
            .map(|(a, b)| a - b)
            .collect(),
    };
    let l2_pressure = discrete_norm(&[&p_diff], NormKind::L2);

    let w = solve_boundary_corrector(&cell.coeff, eps, &cell.correctors, &sd, grid, &params)
        .map_err(|e| tag_eps(e, eps))?;
    let w_centers = w.solution.velocity.to_centers();
    let w_report = norm_report(&[&w_centers[0], &w_centers[1]]);

    // u_eps and u_0 share a trace, so the expansion gap misses the
    // boundary data by exactly the corrector trace; adding w back leaves
    // a field that vanishes on the walls and decays one full order.
    let repaired = {
        let mut gap = two_scale_gap;
        for (g, v) in gap.u1.data.iter_mut().zip(&w.solution.velocity.u1.data) {
            *g += v;
        }
        for (g, v) in gap.u2.data.iter_mut().zip(&w.solution.velocity.u2.data) {
            *g += v;
        }
        gap.to_centers()
    };
    let h1_full = discrete_norm(&[&repaired[0], &repaired[1]], NormKind::H1);

    let bl_const = boundary_layer_constant(
        &[
            [&fine_centers[0], &fine_centers[1]],
            [&u0_centers[0], &u0_centers[1]],
            [&w_centers[0], &w_centers[1]],
        ],
        eps,
    );

    Ok(SweepRow {
        epsilon: eps,
        m,
        under_resolved: fine.under_resolved,
        l2_u,
        h1_twoscale,
        l2_pressure,
        l2_w: w_report.l2,
        h1_w: w_report.h1,
        bl_const,
        u0_h2: h2_norm(&u0_centers, grid.h()),
        h1_full,
        fine_iterations: fine.stats.iterations,
    })
}

fn column_fits(rows: &[SweepRow]) -> Vec<(&'static str, Option<RateFit>)> {
    // Pre-asymptotic pollution: an under-resolved coarsest row is
    // excluded from the fits but still reported.
    let fit_rows = if rows.len() > 2 && rows[0].under_resolved {
        &rows[1..]
    } else {
        rows
    };
    COLUMNS
        .iter()
        .map(|&name| {
            let points: Vec<(f64, f64)> = fit_rows
                .iter()
                .map(|r| (r.epsilon, r.column(name)))
                .collect();
            let max = points.iter().fold(0.0f64, |m, p| m.max(p.1));
            if max < DEGENERATE_FLOOR {
                return (name, None);
            }
            (name, fit_rate(&points).ok())
        })
        .collect()
}

/// Runs the full sweep described by the config. Row order follows the
/// config's epsilon list (descending by validation); the report is
/// deterministic for a fixed config and cache state.
pub fn run_convergence_study(cfg: &StudyConfig) -> Result<RateReport> {
    cfg.validate()?;
    let cell = prepare_cell_stage(cfg)?;
    let u0_by_grid = homogenized_by_grid(cfg, &cell.a_hat)?;

    let run = || -> Result<Vec<SweepRow>> {
        cfg.epsilons
            .par_iter()
            .map(|&eps| sweep_row(cfg, &cell, eps, &u0_by_grid[&cfg.domain_m(eps)]))
            .collect()
    };
    let rows = if cfg.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::precondition(format!("cannot build worker pool: {e}")))?;
        pool.install(run)?
    } else {
        run()?
    };

    let fits = column_fits(&rows);
    Ok(RateReport {
        config: cfg.clone(),
        a_hat: cell.a_hat,
        cell_from_cache: cell.from_cache,
        rows,
        fits,
    })
}

impl RateReport {
    /// CSV body: header, one row per epsilon at 17 significant digits,
    /// then one slope comment per column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,l2_u,h1_twoscale,l2_pressure,l2_w,h1_w,bl_const\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.epsilon, r.l2_u, r.h1_twoscale, r.l2_pressure, r.l2_w, r.h1_w, r.bl_const
            ));
        }
        for (name, fit) in &self.fits {
            match fit {
                Some(f) => out.push_str(&format!("# slope_{name} = {:.16e}\n", f.slope)),
                None => out.push_str(&format!("# slope_{name} = nan\n")),
            }
        }
        out
    }

    pub fn fit(&self, column: &str) -> Option<&RateFit> {
        self.fits
            .iter()
            .find(|(name, _)| *name == column)
            .and_then(|(_, f)| f.as_ref())
    }

    /// Human-readable summary of the sweep.
    pub fn render(&self) -> String {
        let cfg = &self.config;
        let mut out = String::new();
        out.push_str(&format!(
            "convergence study: family {} {:?}, cell N = {}, recipe {:?}, extension {:?}\n",
            cfg.family.name(),
            cfg.family.params(),
            cfg.cell_n,
            cfg.recipe,
            cfg.extension,
        ));
        out.push_str(&format!(
            "correctors {} (cell tol {:.1e}, domain tol {:.1e})\n",
            if self.cell_from_cache {
                "restored from cache"
            } else {
                "computed"
            },
            cfg.cell_tol,
            cfg.domain_tol,
        ));
        out.push_str("effective tensor (rows i alpha, columns j beta):\n");
        for i in 0..2 {
            for a in 0..2 {
                let mut line = String::from("  ");
                for j in 0..2 {
                    for b in 0..2 {
                        line.push_str(&format!("{:>12.6} ", self.a_hat.get(i, j, a, b)));
                    }
                }
                out.push_str(line.trim_end());
                out.push('\n');
            }
        }
        out.push_str(
            "    eps      M    l2_u       h1_twoscale l2_pressure l2_w       h1_w       bl_const   h1_full    u0_H2     warn\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "  {:<8.5} {:>4}  {:<10.3e} {:<11.3e} {:<11.3e} {:<10.3e} {:<10.3e} {:<10.3e} {:<10.3e} {:<9.3e} {}\n",
                r.epsilon,
                r.m,
                r.l2_u,
                r.h1_twoscale,
                r.l2_pressure,
                r.l2_w,
                r.h1_w,
                r.bl_const,
                r.h1_full,
                r.u0_h2,
                if r.under_resolved { "under-resolved" } else { "" },
            ));
        }
        for (name, fit) in &self.fits {
            match fit {
                Some(f) => out.push_str(&format!(
                    "slope {name}: {:+.3} (R^2 = {:.4}, {} points)\n",
                    f.slope, f.r_squared, f.points
                )),
                None => out.push_str(&format!("slope {name}: degenerate column\n")),
            }
        }
        if let Some(f) = fit_rate(
            &self
                .rows
                .iter()
                .map(|r| (r.epsilon, r.h1_full))
                .collect::<Vec<_>>(),
        )
        .ok()
        .filter(|_| self.rows.iter().any(|r| r.h1_full > DEGENERATE_FLOOR))
        {
            out.push_str(&format!(
                "slope h1_full: {:+.3} (R^2 = {:.4}, {} points)\n",
                f.slope, f.r_squared, f.points
            ));
        }
        out
    }
}

/// Shared homogenized solves: epsilons mapping to the same grid size
/// reuse one solve.
pub fn homogenized_by_grid(
    cfg: &StudyConfig,
    a_hat: &Tensor4,
) -> Result<BTreeMap<usize, DomainSolution>> {
    let params = GmresParams {
        tol: cfg.domain_tol,
        ..GmresParams::default()
    };
    let mut map = BTreeMap::new();
    for &eps in &cfg.epsilons {
        let m = cfg.domain_m(eps);
        if let std::collections::btree_map::Entry::Vacant(e) = map.entry(m) {
            let problem = manufactured_problem(cfg.recipe, ProblemCoeff::effective(*a_hat), m)?;
            e.insert(solve_dirichlet_stokes(&problem, &params).map_err(|er| tag_eps(er, eps))?);
        }
    }
    Ok(map)
}

/// Results of the smoothing-operator property suite.
#[derive(Debug, Clone)]
pub struct SmoothingReport {
    /// Measurement grid for the domain-side quadratures.
    pub m: usize,
    /// Per epsilon: `|S_eps u - u| / (eps |grad u|)` for each test field.
    pub rows: Vec<(f64, [f64; 3])>,
    pub worst_ratio: f64,
    /// Largest `lhs - rhs` over all product-bound cases
    /// `|f^eps S_eps u| <= |f|_Y |u|`; at or below zero the bound holds
    /// with slack.
    pub product_margin: f64,
    /// Largest `lhs / rhs` over the cases with a nonzero weight; the
    /// slack factor the bound actually has.
    pub product_worst_quotient: f64,
    pub product_cases: usize,
}

/// The three smooth fields the approximation property is measured on,
/// with their gradients.
fn smoothing_test_fields() -> [(fn([f64; 2]) -> f64, fn([f64; 2]) -> [f64; 2]); 3] {
    use std::f64::consts::PI;
    fn f0(x: [f64; 2]) -> f64 {
        (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()
    }
    fn g0(x: [f64; 2]) -> [f64; 2] {
        [
            2.0 * PI * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos(),
            -2.0 * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin(),
        ]
    }
    fn f1(x: [f64; 2]) -> f64 {
        x[0] * x[0] * x[0] * x[1] - x[1] * x[1]
    }
    fn g1(x: [f64; 2]) -> [f64; 2] {
        [3.0 * x[0] * x[0] * x[1], x[0] * x[0] * x[0] - 2.0 * x[1]]
    }
    fn f2(x: [f64; 2]) -> f64 {
        (x[0] - x[1]).exp()
    }
    fn g2(x: [f64; 2]) -> [f64; 2] {
        let e = (x[0] - x[1]).exp();
        [e, -e]
    }
    [(f0, g0), (f1, g1), (f2, g2)]
}

/// L2 norm of analytic samples over the padded center lattice of extent
/// `m + 2 pad`, with the interior cell width `1/m` as quadrature weight.
fn padded_l2(m: usize, pad: usize, f: impl Fn([f64; 2]) -> f64) -> f64 {
    let h = 1.0 / m as f64;
    let size = m + 2 * pad;
    let p = pad as f64;
    let mut s = 0.0;
    for i in 0..size {
        for j in 0..size {
            let v = f([(i as f64 - p + 0.5) * h, (j as f64 - p + 0.5) * h]);
            s += v * v;
        }
    }
    (s * h * h).sqrt()
}

/// A seeded band-limited field: a trigonometric polynomial with modes up
/// to two in each direction and uniform random coefficients.
fn random_trig_field(seed: u64) -> impl Fn([f64; 2]) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::new();
    for p in 0..3i32 {
        for q in 0..3i32 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            terms.push((p as f64, q as f64, a, b));
        }
    }
    move |x: [f64; 2]| -> f64 {
        use std::f64::consts::PI;
        let mut s = 0.0;
        for &(p, q, a, b) in &terms {
            let phase = 2.0 * PI * (p * x[0] + q * x[1]);
            s += a * phase.cos() + b * phase.sin();
        }
        s
    }
}

/// Measures the two smoothing-operator properties the expansions rely
/// on: the approximation bound `|S_eps u - u| <= C eps |grad u|` and the
/// periodic-weight product bound `|f^eps S_eps u| <= |f|_{L2(Y)} |u|`,
/// the latter with every corrector component as the weight and
/// `random_fields` seeded band-limited fields as `u`. Gradient and field
/// norms on the right-hand sides are taken over the padded region the
/// smoothing actually reads, matching the enlarged domains in the
/// continuum statements; the cell norm of the weight is the sample mean
/// over the same lattice the product is measured on, which is the
/// discretization under which the bound holds exactly.
pub fn smoothing_suite(
    correctors: &CorrectorSet,
    epsilons: &[f64],
    m: usize,
    random_fields: usize,
) -> Result<SmoothingReport> {
    use crate::twoscale::{extend_analytic, required_pad, sample_periodic, steklov_smooth};
    let h = 1.0 / m as f64;
    let fields = smoothing_test_fields();

    let mut rows = Vec::with_capacity(epsilons.len());
    let mut worst_ratio = 0.0f64;
    for &eps in epsilons {
        let pad = required_pad(m, eps);
        let mut ratios = [0.0f64; 3];
        for (t, (f, grad)) in fields.iter().enumerate() {
            let smooth = steklov_smooth(&extend_analytic(m, pad, f), eps)?;
            let interior = smooth.restrict();
            let diff = Field2::from_fn(m, m, |i, j| {
                let x = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                interior.at(i, j) - f(x)
            });
            let num = discrete_norm(&[&diff], NormKind::L2);
            let den = eps * padded_l2(m, pad, |x| {
                let g = grad(x);
                (g[0] * g[0] + g[1] * g[1]).sqrt()
            });
            ratios[t] = num / den;
            worst_ratio = worst_ratio.max(ratios[t]);
        }
        rows.push((eps, ratios));
    }

    // Product bound: every corrector component as the periodic weight.
    let mut weights: Vec<(&Field2, f64, f64)> = Vec::new();
    for q in 0..4 {
        weights.push((&correctors.chi[q].u1, 0.0, 0.5));
        weights.push((&correctors.chi[q].u2, 0.5, 0.0));
        weights.push((&correctors.pi[q], 0.5, 0.5));
    }
    let cell_l2 = |f: &Field2| -> f64 {
        let mut s = 0.0;
        for &v in &f.data {
            s += v * v;
        }
        (s / f.data.len() as f64).sqrt()
    };

    let mut product_margin = f64::NEG_INFINITY;
    let mut product_worst_quotient = 0.0f64;
    let mut product_cases = 0;
    for &eps in epsilons {
        let pad = required_pad(m, eps);
        // The weight enters both sides through the same lattice samples:
        // the smoothing kernel is a convex combination of lattice shifts
        // whose weights average any window-periodic sequence exactly, so
        // with the sample mean of `f^eps` on the right the inequality is
        // a lattice identity, not an asymptotic statement.
        let sampled: Vec<(Field2, f64)> = weights
            .iter()
            .map(|&(w, ox, oy)| {
                let field = Field2::from_fn(m, m, |i, j| {
                    let x = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                    sample_periodic(w, ox, oy, eps, x)
                });
                let norm = cell_l2(&field);
                (field, norm)
            })
            .collect();
        for r in 0..random_fields {
            let u = random_trig_field(0x5eed + r as u64);
            let smooth = steklov_smooth(&extend_analytic(m, pad, &u), eps)?;
            let su = smooth.restrict();
            let u_norm = padded_l2(m, pad, &u);
            for (field, norm) in &sampled {
                let prod = Field2::from_fn(m, m, |i, j| field.at(i, j) * su.at(i, j));
                let lhs = discrete_norm(&[&prod], NormKind::L2);
                let rhs = norm * u_norm;
                product_margin = product_margin.max(lhs - rhs);
                if rhs > 1e-13 {
                    product_worst_quotient = product_worst_quotient.max(lhs / rhs);
                }
                product_cases += 1;
            }
        }
    }

    Ok(SmoothingReport {
        m,
        rows,
        worst_ratio,
        product_margin,
        product_worst_quotient,
        product_cases,
    })
}

/// One manufactured-solution refinement series.
#[derive(Debug, Clone)]
pub struct MmsCase {
    pub label: &'static str,
    /// `(h, velocity L2 error)` per grid, coarse to fine.
    pub points: Vec<(f64, f64)>,
    pub fit: RateFit,
}

/// Solves the manufactured vortex on each grid for a constant and an
/// oscillating coefficient and fits the velocity error against `h`.
/// Second order is the discretization contract.
pub fn mms_suite(ms: &[usize], tol: f64) -> Result<Vec<MmsCase>> {
    let laminate = build_coefficient(
        crate::coeff::Family::Laminate {
            offset: 2.0,
            amplitude: 1.0,
        },
        None,
    )?;
    let sources: [(&'static str, ProblemCoeff); 2] = [
        ("constant", ProblemCoeff::effective(Tensor4::isotropic(2.0))),
        (
            "laminate eps=1/4",
            ProblemCoeff::Oscillating {
                coeff: laminate,
                epsilon: 0.25,
            },
        ),
    ];
    let params = GmresParams {
        tol,
        ..GmresParams::default()
    };
    let mut cases = Vec::with_capacity(sources.len());
    for (label, source) in sources {
        let mut points = Vec::with_capacity(ms.len());
        for &m in ms {
            let problem = manufactured_problem(Recipe::Vortex, source.clone(), m)?;
            let sol = solve_dirichlet_stokes(&problem, &params)?;
            let exact = problem.exact.as_ref().expect("manufactured case");
            let got = sol.velocity.to_centers();
            let want = exact.velocity.to_centers();
            let diff: Vec<Field2> = (0..2)
                .map(|c| Field2 {
                    nx: m,
                    ny: m,
                    data: got[c]
                        .data
                        .iter()
                        .zip(&want[c].data)
                        .map(|(a, b)| a - b)
                        .collect(),
                })
                .collect();
            let err = discrete_norm(&[&diff[0], &diff[1]], NormKind::L2);
            points.push((1.0 / m as f64, err));
        }
        let fit = fit_rate(&points)?;
        cases.push(MmsCase { label, points, fit });
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn smoke_config(extra: &str) -> StudyConfig {
        let text = format!(
            r#"
            [coefficient]
            family = "laminate"
            offset = 2.0
            amplitude = 1.0
            [cell]
            n = 32
            [sweep]
            epsilons = [0.25, 0.125]
            {extra}
            "#
        );
        parse_config_str(&text).unwrap()
    }

    #[test]
    fn zero_recipe_yields_degenerate_columns() {
        let cfg = smoke_config("recipe = \"zero\"");
        let report = run_convergence_study(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        for r in &report.rows {
            for name in COLUMNS {
                assert!(
                    r.column(name).abs() < 1e-10,
                    "column {name} expected at noise level, got {}",
                    r.column(name)
                );
            }
        }
        for (name, fit) in &report.fits {
            assert!(fit.is_none(), "column {name} should be degenerate");
        }
        let csv = report.to_csv();
        assert!(csv.starts_with("epsilon,l2_u,h1_twoscale,l2_pressure,l2_w,h1_w,bl_const\n"));
        assert!(csv.contains("# slope_l2_u = nan"));
    }

    #[test]
    fn vortex_smoke_run_produces_finite_rows_and_csv() {
        let cfg = smoke_config("");
        let report = run_convergence_study(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows[0].epsilon > report.rows[1].epsilon);
        for r in &report.rows {
            assert_eq!(r.m, 32.max((8.0 / r.epsilon).ceil() as usize).next_power_of_two());
            for name in COLUMNS {
                let v = r.column(name);
                assert!(v.is_finite() && v >= 0.0, "column {name} = {v}");
            }
            assert!(r.l2_u > 1e-6, "homogenization error should be visible");
            assert!(r.u0_h2 > 1.0, "the vortex has an order-one H2 norm");
        }
        // The error must shrink with eps even in this tiny sweep.
        assert!(report.rows[1].l2_u < report.rows[0].l2_u);
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 + COLUMNS.len());
        assert!(lines[1].split(',').count() == 7);
    }

    #[test]
    fn smoothing_suite_bounds_hold_for_small_correctors() {
        let coeff = build_coefficient(
            crate::coeff::Family::Laminate {
                offset: 2.0,
                amplitude: 1.0,
            },
            None,
        )
        .unwrap();
        let grid = CellGrid::new(32).unwrap();
        let op = crate::oper::TorusStokesOp::new(grid, CoeffMap::Cell { coeff: &coeff });
        let set = compute_correctors(&op, &GmresParams::default()).unwrap();
        let rep = smoothing_suite(&set, &[0.25, 0.0625], 32, 3).unwrap();
        eprintln!(
            "worst ratio {:.3}, product margin {:+.6e}, worst quotient {:.4} over {} cases",
            rep.worst_ratio, rep.product_margin, rep.product_worst_quotient, rep.product_cases
        );
        assert!(rep.worst_ratio < 1.5, "ratio {}", rep.worst_ratio);
        assert!(
            rep.product_margin < 1e-8,
            "product bound violated by {:.3e}",
            rep.product_margin
        );
        assert_eq!(rep.product_cases, 2 * 3 * 12);
        for (eps, ratios) in &rep.rows {
            assert!(ratios.iter().all(|r| r.is_finite()), "eps {eps}");
        }
    }

    #[test]
    fn mms_suite_recovers_second_order_velocity_convergence() {
        let cases = mms_suite(&[16, 32], 1e-9).unwrap();
        assert_eq!(cases.len(), 2);
        for c in &cases {
            assert!(
                c.fit.slope > 1.5 && c.fit.slope < 2.6,
                "{}: slope {:.2}",
                c.label,
                c.fit.slope
            );
            assert!(c.points[1].1 < c.points[0].1);
        }
    }

    #[test]
    fn identical_configs_produce_identical_csv_and_cache_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke_config("");
        cfg.cache_dir = Some(dir.path().to_path_buf());
        let cold = run_convergence_study(&cfg).unwrap();
        assert!(!cold.cell_from_cache);
        let warm = run_convergence_study(&cfg).unwrap();
        assert!(warm.cell_from_cache);
        assert_eq!(cold.to_csv(), warm.to_csv());
        // The human report differs only in its cache provenance line.
        let strip = |s: String| -> Vec<String> {
            s.lines()
                .filter(|l| !l.starts_with("correctors "))
                .map(str::to_string)
                .collect()
        };
        assert_eq!(strip(cold.render()), strip(warm.render()));
    }
}
