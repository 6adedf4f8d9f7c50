/// LU factorization of a tridiagonal matrix (Thomas algorithm without pivoting).
///
/// `sub[i]` multiplies `x[i-1]` in row `i` (`sub[0]` unused), `diag[i]` is the
/// diagonal and `sup[i]` multiplies `x[i+1]` (`sup[n-1]` unused).
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    sub: Vec<f64>,
    inv_pivot: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Self {
        let n = diag.len();
        assert!(sub.len() == n && sup.len() == n, "band length mismatch");
        let mut inv_pivot = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut pivot = diag[0];
        inv_pivot[0] = 1.0 / pivot;
        for i in 1..n {
            upper[i - 1] = sup[i - 1] * inv_pivot[i - 1];
            pivot = diag[i] - sub[i] * upper[i - 1];
            inv_pivot[i] = 1.0 / pivot;
        }
        Self {
            sub: sub.to_vec(),
            inv_pivot,
            upper,
        }
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Solves in place.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }
}

/// Product of a tridiagonal matrix with a vector.
pub fn apply(sub: &[f64], diag: &[f64], sup: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let mut v = diag[i] * x[i];
        if i > 0 {
            v += sub[i] * x[i - 1];
        }
        if i + 1 < n {
            v += sup[i] * x[i + 1];
        }
        out[i] = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_random_diagonally_dominant_system() {
        let n = 9;
        let sub: Vec<f64> = (0..n).map(|i| -0.3 - 0.01 * i as f64).collect();
        let sup: Vec<f64> = (0..n).map(|i| -0.2 + 0.02 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + 0.1 * i as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        apply(&sub, &diag, &sup, &x, &mut b);
        let lu = Tridiagonal::factor(&sub, &diag, &sup);
        lu.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }
}
