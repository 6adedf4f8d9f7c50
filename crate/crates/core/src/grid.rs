use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid of `n` nodes spanning `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Grid(format!("need at least 3 nodes, got {n}")));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::Grid(format!("invalid bounds [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, n })
    }

    /// Symmetric grid on `[-half_width, half_width]` with spacing close to `h`.
    /// The node count is odd so that 0 is a node.
    pub fn symmetric(half_width: f64, h: f64) -> Result<Self> {
        let cells = (2.0 * half_width / h).round() as usize;
        let cells = cells + cells % 2;
        Self::new(-half_width, half_width, cells + 1)
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Cell index and fractional offset of `x`; `x` is clamped to the grid.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let h = self.spacing();
        let t = ((x - self.lo) / h).clamp(0.0, (self.n - 1) as f64);
        let i = (t.floor() as usize).min(self.n - 2);
        (i, t - i as f64)
    }

    /// Nearest node index.
    pub fn nearest(&self, x: f64) -> usize {
        let (i, f) = self.locate(x);
        if f > 0.5 {
            i + 1
        } else {
            i
        }
    }

    /// Piecewise-linear interpolation of nodal `values` at `x` (zero outside).
    pub fn interp(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        if !self.contains(x) {
            return 0.0;
        }
        let (i, f) = self.locate(x);
        values[i] * (1.0 - f) + values[i + 1] * f
    }

    /// Trapezoid integral of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        trapezoid(values, self.spacing())
    }

    /// Same nodes range, `factor` times finer spacing.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            lo: self.lo,
            hi: self.hi,
            n: (self.n - 1) * factor + 1,
        }
    }

    pub fn same_nodes(&self, other: &Grid1D) -> bool {
        self.n == other.n
            && (self.lo - other.lo).abs() <= 1e-12 * (1.0 + self.lo.abs())
            && (self.hi - other.hi).abs() <= 1e-12 * (1.0 + self.hi.abs())
    }
}

/// Composite trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            h * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Composite Simpson rule; falls back to Simpson + one trapezoid cell for an
/// odd number of intervals.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 3 {
        return trapezoid(values, h);
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut acc = values[0] + values[even];
    for (i, v) in values.iter().enumerate().take(even).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    let mut total = acc * h / 3.0;
    if even < intervals {
        total += 0.5 * h * (values[even] + values[even + 1]);
    }
    total
}

/// Integral over a nonuniform abscissa by the trapezoid rule.
pub fn trapezoid_nonuniform(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
        assert!(Grid1D::new(1.0, 0.0, 10).is_err());
    }

    #[test]
    fn symmetric_grid_has_zero_node() {
        let g = Grid1D::symmetric(10.0, 0.013).unwrap();
        let i = g.nearest(0.0);
        assert!(g.node(i).abs() < 1e-12);
        assert_eq!(g.n % 2, 1);
    }

    #[test]
    fn interp_is_exact_for_linear() {
        let g = Grid1D::new(-1.0, 3.0, 17).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| 2.0 * x - 1.0).collect();
        for &x in &[-1.0, -0.3, 0.77, 2.99, 3.0] {
            assert!((g.interp(&v, x) - (2.0 * x - 1.0)).abs() < 1e-12);
        }
        assert_eq!(g.interp(&v, 3.5), 0.0);
    }

    #[test]
    fn simpson_exact_on_cubic() {
        let g = Grid1D::new(0.0, 2.0, 11).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| x * x * x).collect();
        assert!((simpson(&v, g.spacing()) - 4.0).abs() < 1e-12);
    }
}
