//! Uniform grids for the periodicity cell and the physical domain.

use crate::error::{Error, Result};

/// Uniform `n x n` grid on the unit torus; `h = 1/n` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellGrid {
    n: usize,
}

impl CellGrid {
    /// Fails below `n = 8`: coarser grids cannot carry the staggered
    /// stencils meaningfully.
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::precondition(format!(
                "cell grid must have n >= 8, got {n}"
            )));
        }
        Ok(CellGrid { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }
}

/// Uniform `m x m` cell grid on the closed unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainGrid {
    m: usize,
}

/// Which edge of the square a boundary sample belongs to. The four sets
/// partition the boundary: corners are owned by the bottom and top edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Bottom,
    Top,
    Left,
    Right,
}

impl DomainGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m < 16 {
            return Err(Error::precondition(format!(
                "domain grid must have m >= 16, got {m}"
            )));
        }
        Ok(DomainGrid { m })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Center coordinates of cell `(i, j)`.
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]
    }

    /// Distance from a point to the boundary of the unit square.
    pub fn boundary_distance(x: [f64; 2]) -> f64 {
        let dx = x[0].min(1.0 - x[0]);
        let dy = x[1].min(1.0 - x[1]);
        dx.min(dy).max(0.0)
    }

    /// Boundary nodes `(i h, j h)` of the node lattice, partitioned by
    /// owning edge. Each node appears exactly once.
    pub fn boundary_nodes(&self) -> Vec<(usize, usize, Edge)> {
        let m = self.m;
        let mut out = Vec::with_capacity(4 * m);
        for i in 0..=m {
            out.push((i, 0, Edge::Bottom));
            out.push((i, m, Edge::Top));
        }
        for j in 1..m {
            out.push((0, j, Edge::Left));
            out.push((m, j, Edge::Right));
        }
        out
    }
}
