//! Dense 2D lattices and the staggered velocity containers built on them.
//!
//! Every grid function in this crate is stored row-major in a [`Field2`]:
//! `data[i * ny + j]` is the sample at column `i`, row `j`. The physical
//! location of sample `(i, j)` depends on which staggered sub-lattice the
//! field lives on; the containers below fix those conventions once:
//!
//! * pressure / scalar cell fields: centers `((i + 1/2) h, (j + 1/2) h)`
//! * first velocity component `u1`: vertical faces `(i h, (j + 1/2) h)`
//! * second velocity component `u2`: horizontal faces `((i + 1/2) h, j h)`
//! * corner fields (shear-type gradients): nodes `(i h, j h)`

/// Row-major scalar lattice with `nx * ny` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2 {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl Field2 {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Field2 {
            nx,
            ny,
            data: vec![0.0; nx * ny],
        }
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                data.push(f(i, j));
            }
        }
        Field2 { nx, ny, data }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        i * self.ny + j
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ny + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.ny + j]
    }

    /// Periodic accessor: indices wrap modulo the lattice extent.
    #[inline]
    pub fn at_p(&self, i: isize, j: isize) -> f64 {
        let i = i.rem_euclid(self.nx as isize) as usize;
        let j = j.rem_euclid(self.ny as isize) as usize;
        self.data[i * self.ny + j]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Plain arithmetic mean over all samples, accumulated in index order
    /// so repeated runs produce bit-identical results.
    pub fn mean(&self) -> f64 {
        let mut s = 0.0;
        for &v in &self.data {
            s += v;
        }
        s / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for &v in &self.data {
            m = m.max(v.abs());
        }
        m
    }

    pub fn shift_by(&mut self, c: f64) {
        for v in &mut self.data {
            *v += c;
        }
    }

    /// Subtracts the mean in place and returns the value that was removed.
    pub fn project_mean_zero(&mut self) -> f64 {
        let m = self.mean();
        self.shift_by(-m);
        m
    }

    /// Bilinear interpolation treating the lattice as periodic with unit
    /// period and samples at offsets `((i + ox) h, (j + oy) h)`, `h = 1/n`.
    /// Used for sampling cell-periodic fields at arbitrary points.
    pub fn interp_periodic(&self, x: f64, y: f64, ox: f64, oy: f64) -> f64 {
        debug_assert_eq!(self.nx, self.ny);
        let n = self.nx as f64;
        // Fractional lattice coordinates relative to the sample offsets.
        let gx = x * n - ox;
        let gy = y * n - oy;
        let i0 = gx.floor();
        let j0 = gy.floor();
        let fx = gx - i0;
        let fy = gy - j0;
        let i0 = i0 as isize;
        let j0 = j0 as isize;
        let v00 = self.at_p(i0, j0);
        let v10 = self.at_p(i0 + 1, j0);
        let v01 = self.at_p(i0, j0 + 1);
        let v11 = self.at_p(i0 + 1, j0 + 1);
        v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy + v11 * fx * fy
    }
}

/// MAC velocity on the unit torus: both components are `n x n`, `u1` on
/// vertical faces, `u2` on horizontal faces, indices wrapping periodically.
#[derive(Debug, Clone)]
pub struct TorusVelocity {
    pub n: usize,
    pub u1: Field2,
    pub u2: Field2,
}

impl TorusVelocity {
    pub fn zeros(n: usize) -> Self {
        TorusVelocity {
            n,
            u1: Field2::zeros(n, n),
            u2: Field2::zeros(n, n),
        }
    }

    /// Component means; these are the discrete null directions of the
    /// periodic Stokes operator and must vanish for corrector fields.
    pub fn means(&self) -> [f64; 2] {
        [self.u1.mean(), self.u2.mean()]
    }

    pub fn project_mean_zero(&mut self) {
        self.u1.project_mean_zero();
        self.u2.project_mean_zero();
    }

    /// Collocates both components at cell centers by averaging the two
    /// faces of each cell. Second order, used for norms and sampling.
    pub fn to_centers(&self) -> [Field2; 2] {
        let n = self.n;
        let u1c = Field2::from_fn(n, n, |i, j| {
            0.5 * (self.u1.at(i, j) + self.u1.at_p(i as isize + 1, j as isize))
        });
        let u2c = Field2::from_fn(n, n, |i, j| {
            0.5 * (self.u2.at(i, j) + self.u2.at_p(i as isize, j as isize + 1))
        });
        [u1c, u2c]
    }
}

/// MAC velocity on the unit square with `m x m` cells: `u1` is
/// `(m+1) x m` (columns 0 and `m` lie on the left/right boundary), `u2`
/// is `m x (m+1)` (rows 0 and `m` on the bottom/top boundary).
#[derive(Debug, Clone)]
pub struct BoxVelocity {
    pub m: usize,
    pub u1: Field2,
    pub u2: Field2,
}

impl BoxVelocity {
    pub fn zeros(m: usize) -> Self {
        BoxVelocity {
            m,
            u1: Field2::zeros(m + 1, m),
            u2: Field2::zeros(m, m + 1),
        }
    }

    /// Collocates both components at the `m x m` cell centers.
    pub fn to_centers(&self) -> [Field2; 2] {
        let m = self.m;
        let u1c = Field2::from_fn(m, m, |i, j| 0.5 * (self.u1.at(i, j) + self.u1.at(i + 1, j)));
        let u2c = Field2::from_fn(m, m, |i, j| 0.5 * (self.u2.at(i, j) + self.u2.at(i, j + 1)));
        [u1c, u2c]
    }
}
