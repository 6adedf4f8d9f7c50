//! Numerical integration helpers: adaptive Gauss–Kronrod and exact Gaussian
//! integrals of piecewise-linear data.

use statrs::function::erf::erfc;

use crate::grid::Grid1D;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integral of `f` over `[a, b]`.
///
/// Returns the estimate and the accumulated error estimate.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    let mut err = 0.0;
    let (whole, _) = kronrod15(&f, a, b);
    let scale = whole.abs().max(abs_tol);
    let width = (b - a).abs();
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, e) = kronrod15(&f, lo, hi);
        let share = (hi - lo).abs() / width;
        let allowed = (abs_tol.max(rel_tol * scale)) * share;
        if e <= allowed || depth >= 40 {
            total += val;
            err += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    (total, err)
}

/// Seven-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss7<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = WG[3] * f(c);
    for j in 0..3 {
        let dx = half * XGK[2 * j + 1];
        acc += WG[j] * (f(c - dx) + f(c + dx));
    }
    acc * half
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Exact value of `∫ N(w; mean, var) g(w) dw` where `g` is the piecewise-linear
/// interpolant of nodal `values` on `grid` (zero outside the grid).
///
/// Cells farther than 12 standard deviations from the mean are skipped.
pub fn gaussian_against_linear(grid: &Grid1D, values: &[f64], mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return grid.interp(values, mean);
    }
    let sd = var.sqrt();
    let h = grid.spacing();
    let lo = mean - 12.0 * sd;
    let hi = mean + 12.0 * sd;
    if hi < grid.lo || lo > grid.hi {
        return 0.0;
    }
    let i0 = (((lo - grid.lo) / h).floor().max(0.0)) as usize;
    let i1 = ((((hi - grid.lo) / h).ceil()) as usize).min(grid.n - 1);
    if i1 <= i0 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut za = (grid.node(i0) - mean) / sd;
    let mut cdf_a = normal_cdf(za);
    let mut pdf_a = normal_pdf(za);
    for i in i0..i1 {
        let a = grid.node(i);
        let zb = (grid.node(i + 1) - mean) / sd;
        let cdf_b = normal_cdf(zb);
        let pdf_b = normal_pdf(zb);
        let mass = cdf_b - cdf_a;
        // first moment of the normal restricted to the cell, about `a`
        let first = (mean - a) * mass + sd * (pdf_a - pdf_b);
        let slope = (values[i + 1] - values[i]) / h;
        acc += values[i] * mass + slope * first;
        za = zb;
        cdf_a = cdf_b;
        pdf_a = pdf_b;
    }
    let _ = za;
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_handles_polynomials_and_exp() {
        let (v, _) = integrate_adaptive(|x| x.powi(5) - x, 0.0, 2.0, 1e-14, 1e-14);
        assert!((v - (64.0 / 6.0 - 2.0)).abs() < 1e-12);
        let (v, _) = integrate_adaptive(|x: f64| x.exp(), -1.0, 1.0, 1e-14, 1e-14);
        assert!((v - (1f64.exp() - (-1f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn gauss7_is_exact_for_degree_13() {
        let v = gauss7(|x| x.powi(13) + x.powi(12), 0.0, 1.0);
        assert!((v - (1.0 / 14.0 + 1.0 / 13.0)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_against_linear_matches_moments() {
        let g = Grid1D::new(-20.0, 20.0, 801).unwrap();
        let ones = vec![1.0; g.n];
        let lin: Vec<f64> = g.nodes().iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((gaussian_against_linear(&g, &ones, 0.3, 2.0) - 1.0).abs() < 1e-13);
        assert!((gaussian_against_linear(&g, &lin, 0.3, 2.0) - 1.9).abs() < 1e-12);
        // very narrow Gaussian reproduces the interpolant
        assert!((gaussian_against_linear(&g, &lin, 0.31, 1e-12) - (3.0 * 0.31 + 1.0)).abs() < 1e-9);
    }
}
