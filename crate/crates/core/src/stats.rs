//! Statistical tests and summaries used by the samplers and the harness.

use serde::{Deserialize, Serialize};

/// Outcome of a statistical or numerical check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Worst of two verdicts.
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Warn, _) | (_, Warn) => Warn,
            _ => Pass,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Warn => "warn",
            Verdict::Fail => "fail",
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample covariance with its Monte Carlo standard error.
///
/// The standard error is the empirical standard deviation of the centred
/// products divided by `sqrt(n)`.
pub fn covariance_with_se(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let c = prods.iter().sum::<f64>() / (n - 1.0);
    let sd = variance(&prods).sqrt();
    (c, sd / n.sqrt())
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let (c, _) = covariance_with_se(xs, ys);
    c / (variance(xs) * variance(ys)).sqrt()
}

/// Weighted mean and its delta-method standard error for self-normalized
/// weights.
pub fn weighted_mean_with_se(xs: &[f64], ws: &[f64]) -> (f64, f64) {
    let sw: f64 = ws.iter().sum();
    let m = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let v = xs
        .iter()
        .zip(ws)
        .map(|(x, w)| (w / sw).powi(2) * (x - m).powi(2))
        .sum::<f64>();
    (m, v.sqrt())
}

/// Kish effective sample size `(Σw)² / Σw²`.
pub fn effective_sample_size(ws: &[f64]) -> f64 {
    let s: f64 = ws.iter().sum();
    let s2: f64 = ws.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{k-1} exp(-2 k² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `λ` with `Q(λ) = alpha`.
pub fn kolmogorov_quantile(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.2, 5.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_q(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sample Kolmogorov–Smirnov result.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sizes used for the asymptotic distribution.
    pub n1: f64,
    pub n2: f64,
}

impl KsResult {
    /// Critical statistic at level `alpha`.
    pub fn critical(&self, alpha: f64) -> f64 {
        ks_critical(self.n1, self.n2, alpha)
    }
}

pub fn ks_critical(n1: f64, n2: f64, alpha: f64) -> f64 {
    kolmogorov_quantile(alpha) * ((n1 + n2) / (n1 * n2)).sqrt()
}

fn ks_p_value(d: f64, n1: f64, n2: f64) -> f64 {
    let ne = n1 * n2 / (n1 + n2);
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Unweighted two-sample KS test.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsResult {
    let a = sorted(xs);
    let b = sorted(ys);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n1, n2),
        n1,
        n2,
    }
}

/// KS test between a weighted sample and an unweighted one; the weighted side
/// enters the asymptotics with its effective sample size.
pub fn ks_weighted_vs_unweighted(xs: &[f64], ws: &[f64], ys: &[f64]) -> KsResult {
    let mut a: Vec<(f64, f64)> = xs.iter().copied().zip(ws.iter().copied()).collect();
    a.sort_by(|p, q| p.0.total_cmp(&q.0));
    let b = sorted(ys);
    let total_w: f64 = ws.iter().sum();
    let n2 = b.len() as f64;
    let (mut i, mut j) = (0usize, 0usize);
    let mut fa = 0.0;
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].0.min(b[j]);
        while i < a.len() && a[i].0 <= x {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((fa / total_w - j as f64 / n2).abs());
    }
    let n1 = effective_sample_size(ws);
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n1, n2),
        n1,
        n2,
    }
}

/// Ordinary least squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    pub stderr: Vec<f64>,
    pub residual_rms: f64,
    pub max_abs_residual: f64,
}

/// Least squares for `y ≈ X c` with `X` given row by row.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> LinearFit {
    let p = rows[0].len();
    let n = rows.len();
    let mut ata = vec![vec![0.0; p]; p];
    let mut aty = vec![0.0; p];
    for (row, &yi) in rows.iter().zip(y) {
        for a in 0..p {
            aty[a] += row[a] * yi;
            for b in 0..p {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    let inv = invert(&ata);
    let coef: Vec<f64> = (0..p).map(|a| (0..p).map(|b| inv[a][b] * aty[b]).sum()).collect();
    let resid: Vec<f64> = rows
        .iter()
        .zip(y)
        .map(|(row, yi)| yi - row.iter().zip(&coef).map(|(x, c)| x * c).sum::<f64>())
        .collect();
    let ss: f64 = resid.iter().map(|r| r * r).sum();
    let dof = (n as f64 - p as f64).max(1.0);
    let sigma2 = ss / dof;
    LinearFit {
        stderr: (0..p).map(|a| (sigma2 * inv[a][a]).max(0.0).sqrt()).collect(),
        coef,
        residual_rms: (ss / n as f64).sqrt(),
        max_abs_residual: resid.iter().fold(0.0, |m, r| m.max(r.abs())),
    }
}

fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for j in 0..p {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..p {
            if i != col {
                let f = a[i][col];
                for j in 0..p {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_quantiles() {
        // classic table values
        assert!((kolmogorov_quantile(0.05) - 1.3581).abs() < 1e-3);
        assert!((kolmogorov_quantile(0.01) - 1.6276).abs() < 1e-3);
    }

    #[test]
    fn ks_statistic_of_shifted_sets() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [3.5, 4.5, 5.5, 6.5];
        let r = ks_two_sample(&a, &b);
        assert!((r.statistic - 0.75).abs() < 1e-12);
        let w = ks_weighted_vs_unweighted(&a, &[1.0; 4], &b);
        assert!((w.statistic - 0.75).abs() < 1e-12);
    }

    #[test]
    fn ks_identical_samples_is_zero() {
        let a = [0.3, -1.0, 2.0, 0.1];
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
    }

    #[test]
    fn least_squares_recovers_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 - 0.5 * i as f64).collect();
        let fit = least_squares(&rows, &y);
        assert!((fit.coef[0] - 2.0).abs() < 1e-12);
        assert!((fit.coef[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn verdict_combination() {
        assert_eq!(Verdict::Pass.and(Verdict::Warn), Verdict::Warn);
        assert_eq!(Verdict::Warn.and(Verdict::Fail), Verdict::Fail);
    }
}
