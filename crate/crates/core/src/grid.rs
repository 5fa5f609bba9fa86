//! Evaluation grids, trapezoid weights and interpolation on tensor grids.

use crate::{Error, Result};

/// `m` equally spaced points from `lo` to `hi` inclusive.
pub fn uniform(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (m - 1) as f64;
            let mut g: Vec<f64> = (0..m).map(|i| lo + i as f64 * step).collect();
            g[m - 1] = hi;
            g
        }
    }
}

/// Composite trapezoid weights on a (possibly non-uniform) ascending grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let m = grid.len();
    let mut w = vec![0.0; m];
    for i in 0..m.saturating_sub(1) {
        let half = 0.5 * (grid[i + 1] - grid[i]);
        w[i] += half;
        w[i + 1] += half;
    }
    w
}

pub fn is_strictly_ascending(grid: &[f64]) -> bool {
    grid.windows(2).all(|w| w[0] < w[1]) && grid.iter().all(|x| x.is_finite())
}

/// Bracketing cell of `x` on an ascending grid: `(lower index, fraction)`.
/// Points outside the grid are clamped to the end cells.
#[inline]
pub(crate) fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    let m = grid.len();
    if m == 1 || x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[m - 1] {
        return (m - 2, 1.0);
    }
    // first index with grid[i] > x
    let hi = grid.partition_point(|&g| g <= x);
    let lo = hi - 1;
    let frac = (x - grid[lo]) / (grid[hi] - grid[lo]);
    (lo, frac)
}

/// Linear interpolation of `values` on `grid` at `x`, clamped at the ends.
pub fn interp_linear(grid: &[f64], values: &[f64], x: f64) -> f64 {
    if grid.len() == 1 {
        return values[0];
    }
    let (i, f) = locate(grid, x);
    if f == 0.0 {
        values[i]
    } else if f == 1.0 {
        values[i + 1]
    } else {
        values[i] * (1.0 - f) + values[i + 1] * f
    }
}

/// A tensor-product grid: one ascending axis per dimension, points in
/// row-major order (last axis varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
    len: usize,
}

impl TensorGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(Error::invalid("tensor grid needs nonempty axes"));
        }
        if !axes.iter().all(|a| is_strictly_ascending(a)) {
            return Err(Error::invalid("tensor grid axes must be strictly ascending"));
        }
        let mut strides = vec![1; axes.len()];
        for d in (0..axes.len() - 1).rev() {
            strides[d] = strides[d + 1] * axes[d + 1].len();
        }
        let len = axes.iter().map(Vec::len).product();
        Ok(Self { axes, strides, len })
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut rem = index;
        self.axes
            .iter()
            .zip(&self.strides)
            .map(|(axis, &s)| {
                let i = rem / s;
                rem %= s;
                axis[i]
            })
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len).map(|i| self.point(i)).collect()
    }

    /// Multilinear interpolation of per-point `values` at `x`, clamped to the
    /// grid's bounding box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len);
        let d = self.axes.len();
        let cells: Vec<(usize, f64)> = self
            .axes
            .iter()
            .zip(x)
            .map(|(axis, &xi)| if axis.len() == 1 { (0, 0.0) } else { locate(axis, xi) })
            .collect();
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut index = 0;
            for (k, &(lo, f)) in cells.iter().enumerate() {
                let upper = (corner >> k) & 1 == 1;
                let wk = if upper { f } else { 1.0 - f };
                if wk == 0.0 {
                    weight = 0.0;
                    break;
                }
                weight *= wk;
                index += (lo + upper as usize) * self.strides[k];
            }
            if weight != 0.0 {
                acc += weight * values[index];
            }
        }
        acc
    }
}

/// Lattice coordinates `i / (q - 1)`, `i = 0..q`, covering `[0, 1]`.
pub fn unit_lattice_axis(q: usize) -> Vec<f64> {
    uniform(0.0, 1.0, q)
}
