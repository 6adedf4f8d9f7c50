//! Discrete sine transform on a Dirichlet grid of `[0, L]`.
//!
//! Nodes are `r_j = j L / n`, `j = 0..=n`. Coefficients are taken against the
//! orthonormal modes `e_m(r) = sqrt(2/L) sin(m π r / L)`, `m = 1..n-1`, so that
//! `f(r_j) = Σ_m c_m e_m(r_j)` holds exactly on the nodes.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct SineTransform {
    n: usize,
    length: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SineTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineTransform")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl SineTransform {
    /// Transform for `n` intervals on `[0, length]`.
    pub fn new(n: usize, length: f64) -> Self {
        assert!(n >= 2, "need at least two intervals");
        let fft = FftPlanner::new().plan_fft_forward(2 * n);
        Self { n, length, fft }
    }

    pub fn intervals(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Wavenumber `m π / L` of mode `m`.
    #[inline]
    pub fn wavenumber(&self, m: usize) -> f64 {
        m as f64 * PI / self.length
    }

    /// `S_m = Σ_{j=1}^{n-1} x_j sin(π j m / n)` for `m = 1..n-1`; input and
    /// output both have length `n - 1`.
    fn dst1(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
        for (j, &v) in x.iter().enumerate() {
            buf[j + 1] = Complex64::new(v, 0.0);
            buf[2 * n - j - 1] = Complex64::new(-v, 0.0);
        }
        self.fft.process(&mut buf);
        (1..n).map(|m| -0.5 * buf[m].im).collect()
    }

    /// Coefficients `c_1..c_{n-1}` of nodal values `f_0..f_n` (endpoints ignored).
    pub fn forward(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.n + 1);
        let h = self.length / self.n as f64;
        let scale = h * (2.0 / self.length).sqrt();
        self.dst1(&values[1..self.n])
            .into_iter()
            .map(|s| s * scale)
            .collect()
    }

    /// Nodal values `f_0..f_n` (with `f_0 = f_n = 0`) from coefficients.
    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n - 1);
        let scale = (2.0 / self.length).sqrt();
        let mut out = Vec::with_capacity(self.n + 1);
        out.push(0.0);
        out.extend(self.dst1(coeffs).into_iter().map(|s| s * scale));
        out.push(0.0);
        out
    }

    /// Applies the Fourier multiplier `m ↦ mult(k_m)` to nodal values.
    pub fn multiply<F: Fn(f64) -> f64>(&self, values: &[f64], mult: F) -> Vec<f64> {
        let mut c = self.forward(values);
        for (i, ci) in c.iter_mut().enumerate() {
            *ci *= mult(self.wavenumber(i + 1));
        }
        self.inverse(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_has_unit_coefficient() {
        let n = 16;
        let l = 3.0;
        let st = SineTransform::new(n, l);
        let f: Vec<f64> = (0..=n)
            .map(|j| (2.0 / l).sqrt() * (3.0 * PI * j as f64 / n as f64).sin())
            .collect();
        let c = st.forward(&f);
        for (i, ci) in c.iter().enumerate() {
            let expect = if i + 1 == 3 { 1.0 } else { 0.0 };
            assert!((ci - expect).abs() < 1e-13, "mode {} -> {}", i + 1, ci);
        }
    }

    #[test]
    fn round_trip() {
        let n = 37;
        let st = SineTransform::new(n, 2.5);
        let mut f: Vec<f64> = (0..=n).map(|j| ((j * j) as f64).sin()).collect();
        f[0] = 0.0;
        f[n] = 0.0;
        let back = st.inverse(&st.forward(&f));
        for (a, b) in f.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
