//! Low-lying spectrum of `H = −½ ∂_x² + ¼ x⁴` with Dirichlet walls, by
//! bisection on Sturm counts and inverse iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::tridiag::Tridiagonal;

/// Lowest eigenpairs of the discretized quartic oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    pub x_grid: Grid1D,
    pub eigenvalues: Vec<f64>,
    /// L²-normalized on the grid (trapezoid), walls zero.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// `‖Hψ_k − λ_k ψ_k‖₂` for the discrete operator.
    pub residuals: Vec<f64>,
}

/// Diagonal and off-diagonal of the discrete `H` on interior nodes.
fn operator(grid: &Grid1D) -> (Vec<f64>, f64) {
    let h = grid.spacing();
    let diag = (1..grid.n - 1)
        .map(|i| 1.0 / (h * h) + 0.25 * grid.node(i).powi(4))
        .collect();
    (diag, -0.5 / (h * h))
}

/// Number of eigenvalues below `mu`.
fn sturm_count(diag: &[f64], off: f64, mu: f64) -> usize {
    let e2 = off * off;
    let mut q = diag[0] - mu;
    let mut count = usize::from(q < 0.0);
    for &d in &diag[1..] {
        let denom = if q == 0.0 { f64::EPSILON * off.abs() } else { q };
        q = d - mu - e2 / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `k`-th eigenvalue (0-based) by bisection.
fn bisect(diag: &[f64], off: f64, k: usize) -> f64 {
    let mut lo = diag.iter().copied().fold(f64::INFINITY, f64::min) - 2.0 * off.abs();
    let mut hi = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 2.0 * off.abs();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn inverse_iteration(diag: &[f64], off: f64, lambda: f64, lower: &[Vec<f64>]) -> Vec<f64> {
    let n = diag.len();
    let shift = lambda + 1e-10 * lambda.abs().max(1.0);
    let d: Vec<f64> = diag.iter().map(|v| v - shift).collect();
    let lu = Tridiagonal::factor(&vec![off; n], &d, &vec![off; n]);
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 101) as f64 / 101.0).collect();
    for _ in 0..4 {
        lu.solve_in_place(&mut x);
        for q in lower {
            let dot: f64 = q.iter().zip(&x).map(|(a, b)| a * b).sum();
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi -= dot * qi;
            }
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
    }
    x
}

fn residual(diag: &[f64], off: f64, lambda: f64, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut hv = diag[i] * v[i];
        if i > 0 {
            hv += off * v[i - 1];
        }
        if i + 1 < n {
            hv += off * v[i + 1];
        }
        acc += (hv - lambda * v[i]).powi(2);
    }
    acc.sqrt()
}

/// Sign convention: the outermost lobe on the right is positive.
fn orient(v: &mut [f64]) {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(x) = v.iter().rev().find(|x| x.abs() > 1e-3 * peak) {
        if *x < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
    }
}

/// Lowest `k + 1` eigenpairs on `x_grid`.
pub fn eigenpairs(k: usize, x_grid: Grid1D) -> Result<SpectralBasis> {
    if x_grid.n < 5 {
        return Err(Error::Grid("spectral grid needs at least 5 nodes".into()));
    }
    let (diag, off) = operator(&x_grid);
    let h = x_grid.spacing();
    let mut eigenvalues = Vec::with_capacity(k + 1);
    let mut interior: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    let mut residuals = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let lam = bisect(&diag, off, j);
        let mut v = inverse_iteration(&diag, off, lam, &interior);
        orient(&mut v);
        residuals.push(residual(&diag, off, lam, &v));
        eigenvalues.push(lam);
        interior.push(v);
    }
    let scale = 1.0 / h.sqrt();
    let eigenfunctions: Vec<Vec<f64>> = interior
        .into_iter()
        .map(|v| {
            let mut full = Vec::with_capacity(x_grid.n);
            full.push(0.0);
            full.extend(v.into_iter().map(|a| a * scale));
            full.push(0.0);
            full
        })
        .collect();
    for (j, f) in eigenfunctions.iter().enumerate() {
        let amp = f[1].abs().max(f[f.len() - 2].abs());
        if amp > 1e-12 {
            return Err(Error::GridTooSmall { k: j, amplitude: amp });
        }
    }
    Ok(SpectralBasis {
        x_grid,
        eigenvalues,
        eigenfunctions,
        residuals: residuals.into_iter().map(|r| r * scale).collect(),
    })
}

/// Default grid `[−12, 12]` with `h = 2⁻⁸`.
pub fn default_grid() -> Grid1D {
    Grid1D::symmetric(12.0, 1.0 / 256.0).expect("valid default grid")
}

/// Ground-state energy extrapolated from `h` and `h/2` (removes the `h²` term).
pub fn richardson_ground_state(x_grid: &Grid1D) -> f64 {
    let fine = x_grid.refined(2);
    let e = |g: &Grid1D| {
        let (d, o) = operator(g);
        bisect(&d, o, 0)
    };
    let (a, b) = (e(x_grid), e(&fine));
    (4.0 * b - a) / 3.0
}

/// Maximum absolute nodal sign-change-free count helper: number of sign
/// changes of `v`, ignoring values below `1e-8` of its peak.
pub fn sign_changes(v: &[f64]) -> usize {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut last = 0.0f64;
    let mut count = 0;
    for &x in v {
        if x.abs() <= 1e-8 * peak {
            continue;
        }
        if last != 0.0 && (x > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = x;
    }
    count
}

impl SpectralBasis {
    pub fn k(&self) -> usize {
        self.eigenvalues.len() - 1
    }

    pub fn lambda0(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn psi(&self, k: usize, x: f64) -> f64 {
        self.x_grid.interp(&self.eigenfunctions[k], x)
    }

    /// Largest `|∫ψ_jψ_k − δ_jk|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, a) in self.eigenfunctions.iter().enumerate() {
            for (k, b) in self.eigenfunctions.iter().enumerate().skip(j) {
                let prod: Vec<f64> = a.iter().zip(b).map(|(u, v)| u * v).collect();
                let ip = self.x_grid.integrate(&prod);
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }

    /// Largest `|ψ_k(−x) − (−1)^k ψ_k(x)|` over nodes and `k`.
    pub fn parity_defect(&self) -> f64 {
        let n = self.x_grid.n;
        let mut worst: f64 = 0.0;
        for (k, f) in self.eigenfunctions.iter().enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            for i in 0..n {
                worst = worst.max((f[n - 1 - i] - sign * f[i]).abs());
            }
        }
        worst
    }

    /// `‖ψ_k‖_∞ / √λ_k` for each `k`.
    pub fn sup_norm_ratios(&self) -> Vec<f64> {
        self.eigenfunctions
            .iter()
            .zip(&self.eigenvalues)
            .map(|(f, l)| f.iter().fold(0.0f64, |m, v| m.max(v.abs())) / l.sqrt())
            .collect()
    }

    /// `Σ_k e^{−τλ_k} ψ_k(x) ψ_k(y)`.
    pub fn semigroup_kernel(&self, tau: f64, x: f64, y: f64) -> Result<f64> {
        if tau <= 0.0 {
            return Err(Error::Domain(format!("semigroup time must be positive, got {tau}")));
        }
        let lk = *self.eigenvalues.last().unwrap();
        if (-tau * lk).exp() * lk.sqrt() >= 1e-14 {
            // λ_k grows like k^{4/3}; ask for the count that reaches the bound
            let needed_lambda = (32.2 + 0.5 * lk.ln()) / tau;
            let needed_k = (self.k() as f64 * (needed_lambda / lk).powf(0.75)).ceil() as usize;
            return Err(Error::Truncation(format!(
                "τ = {tau} needs λ_K ≈ {needed_lambda:.1}; basis has λ_{} = {lk:.1}; use K ≥ {needed_k}",
                self.k()
            )));
        }
        Ok(self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, l)| (-tau * l).exp() * self.psi(k, x) * self.psi(k, y))
            .sum())
    }

    /// `⟨f, ψ₀⟩`.
    pub fn ground_state_overlap(&self, f: &[f64]) -> Result<f64> {
        self.overlap(0, f)
    }

    pub fn overlap(&self, k: usize, f: &[f64]) -> Result<f64> {
        if f.len() != self.x_grid.n {
            return Err(Error::Grid(format!(
                "array of length {} does not match basis grid of {} nodes",
                f.len(),
                self.x_grid.n
            )));
        }
        let prod: Vec<f64> = f.iter().zip(&self.eigenfunctions[k]).map(|(a, b)| a * b).collect();
        Ok(self.x_grid.integrate(&prod))
    }

    /// `f − ⟨f,ψ₀⟩ψ₀`.
    pub fn project_out_ground(&self, f: &[f64]) -> Result<Vec<f64>> {
        let c = self.ground_state_overlap(f)?;
        Ok(f.iter().zip(&self.eigenfunctions[0]).map(|(a, p)| a - c * p).collect())
    }

    /// Checks the structural invariants of a basis (used on import).
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.eigenvalues.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Check("eigenvalues not strictly increasing".into()));
        }
        for (k, l) in self.eigenvalues.iter().enumerate() {
            if *l < k as f64 + 0.25 {
                return Err(Error::Check(format!("λ_{k} = {l} below k + 1/4")));
            }
        }
        if self.eigenfunctions[0][1..self.x_grid.n - 1].iter().any(|v| *v <= 0.0) {
            return Err(Error::Check("ground state not positive".into()));
        }
        let d = self.orthonormality_defect();
        if d > tol {
            return Err(Error::Check(format!("orthonormality defect {d:.3e} > {tol:.1e}")));
        }
        for (k, f) in self.eigenfunctions.iter().enumerate() {
            let c = sign_changes(f);
            if c != k {
                return Err(Error::Check(format!("ψ_{k} has {c} sign changes")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        crate::artifact::to_json("spectral_basis", self)
    }

    /// Parses and validates a basis.
    pub fn from_json(text: &str) -> Result<Self> {
        let b: Self = crate::artifact::from_json("spectral_basis", text)?;
        b.validate(1e-8)?;
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_check_of_sturm_bisection() {
        // the quartic potential on a tiny box is dominated by the Dirichlet
        // Laplacian: λ_k ≈ ½ ((k+1)π/2)² on [−1,1]
        let g = Grid1D::symmetric(1.0, 1.0 / 512.0).unwrap();
        let (d, o) = operator(&g);
        let l0 = bisect(&d, o, 0);
        let free = 0.5 * (std::f64::consts::PI / 2.0).powi(2);
        assert!(l0 > free && l0 < free + 0.25);
    }

    #[test]
    fn sign_change_counter() {
        assert_eq!(sign_changes(&[0.0, 1.0, -1.0, 1e-20, -2.0, 3.0, 0.0]), 2);
    }
}
