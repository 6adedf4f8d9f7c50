//! Crank–Nicolson propagation of `∂_t u = ½ ∂_x² u + b(t,x) ∂_x u + V(t,x) u`
//! on a uniform grid with homogeneous Dirichlet walls.
//!
//! The stepper advances any number of columns at once (one factorization per
//! step), uses geometrically graded steps after the start so that data close
//! to a delta function is resolved, and replaces the first steps with
//! backward-Euler half steps (Rannacher start-up) to damp grid-scale modes.

use serde::{Deserialize, Serialize};

use crate::grid::Grid1D;
use crate::tridiag::Tridiagonal;

/// Step-size controls for the parabolic stepper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// First step length.
    pub k_start: f64,
    /// Largest step length.
    pub k_max: f64,
    /// Growth factor between consecutive steps.
    pub growth: f64,
    /// Number of initial steps split into two backward-Euler half steps.
    pub rannacher_steps: usize,
}

impl StepControl {
    pub fn new(k_start: f64, k_max: f64) -> Self {
        Self {
            k_start: k_start.min(k_max),
            k_max,
            growth: 1.2,
            rannacher_steps: 2,
        }
    }
}

/// Coefficients `(V, b)` of the operator at step `step`, time `t`, position `x`.
pub trait Coefficients: Sync {
    fn at(&self, step: usize, t: f64, x: f64) -> (f64, f64);
}

impl<F> Coefficients for F
where
    F: Fn(usize, f64, f64) -> (f64, f64) + Sync,
{
    fn at(&self, step: usize, t: f64, x: f64) -> (f64, f64) {
        self(step, t, x)
    }
}

/// Summary of a propagation run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub steps: usize,
    pub smallest_step: f64,
    pub largest_step: f64,
}

struct Operator {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

fn assemble<C: Coefficients + ?Sized>(grid: &Grid1D, coef: &C, step: usize, t: f64) -> Operator {
    let n = grid.n - 2;
    let h = grid.spacing();
    let d2 = 0.5 / (h * h);
    let d1 = 0.5 / h;
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    for i in 0..n {
        let x = grid.node(i + 1);
        let (v, b) = coef.at(step, t, x);
        sub[i] = d2 - b * d1;
        diag[i] = -2.0 * d2 + v;
        sup[i] = d2 + b * d1;
    }
    Operator { sub, diag, sup }
}

/// One θ-step of length `k` for all `columns` (interior values only are
/// touched; walls stay zero).
fn theta_step<C: Coefficients + ?Sized>(
    grid: &Grid1D,
    coef: &C,
    step: usize,
    t: f64,
    k: f64,
    implicit: bool,
    columns: &mut [Vec<f64>],
) {
    let (theta, t_eval) = if implicit { (1.0, t + k) } else { (0.5, t + 0.5 * k) };
    let op = assemble(grid, coef, step, t_eval);
    let n = op.diag.len();
    let lhs_sub: Vec<f64> = op.sub.iter().map(|a| -theta * k * a).collect();
    let lhs_sup: Vec<f64> = op.sup.iter().map(|a| -theta * k * a).collect();
    let lhs_diag: Vec<f64> = op.diag.iter().map(|a| 1.0 - theta * k * a).collect();
    let lu = Tridiagonal::factor(&lhs_sub, &lhs_diag, &lhs_sup);
    let explicit = 1.0 - theta;
    let mut rhs = vec![0.0; n];
    for col in columns.iter_mut() {
        let u = &col[1..=n];
        if explicit > 0.0 {
            for i in 0..n {
                let mut a = op.diag[i] * u[i];
                if i > 0 {
                    a += op.sub[i] * u[i - 1];
                }
                if i + 1 < n {
                    a += op.sup[i] * u[i + 1];
                }
                rhs[i] = u[i] + explicit * k * a;
            }
        } else {
            rhs.copy_from_slice(u);
        }
        lu.solve_in_place(&mut rhs);
        col[1..=n].copy_from_slice(&rhs);
        col[0] = 0.0;
        col[n + 1] = 0.0;
    }
}

/// Propagates `columns` from `t0` through every time in `outputs`
/// (increasing, all `> t0`), calling `on_output(index, time, columns)` at each.
pub fn propagate<C, F>(
    grid: &Grid1D,
    coef: &C,
    control: &StepControl,
    columns: &mut [Vec<f64>],
    t0: f64,
    outputs: &[f64],
    mut on_output: F,
) -> StepStats
where
    C: Coefficients + ?Sized,
    F: FnMut(usize, f64, &[Vec<f64>]),
{
    let mut t = t0;
    let mut allowed = control.k_start;
    let mut stats = StepStats {
        smallest_step: f64::INFINITY,
        ..Default::default()
    };
    for (idx, &target) in outputs.iter().enumerate() {
        assert!(target > t - 1e-14, "output times must increase");
        while target - t > 1e-13 * target.abs().max(1.0) {
            let remaining = target - t;
            let nsteps = (remaining / allowed - 1e-9).ceil().max(1.0);
            let k = remaining / nsteps;
            let step = stats.steps;
            if step < control.rannacher_steps {
                theta_step(grid, coef, step, t, 0.5 * k, true, columns);
                theta_step(grid, coef, step, t + 0.5 * k, 0.5 * k, true, columns);
            } else {
                theta_step(grid, coef, step, t, k, false, columns);
            }
            t = if nsteps <= 1.0 { target } else { t + k };
            stats.steps += 1;
            stats.smallest_step = stats.smallest_step.min(k);
            stats.largest_step = stats.largest_step.max(k);
            allowed = (allowed * control.growth).min(control.k_max);
        }
        on_output(idx, target, columns);
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_mode(rannacher: usize) -> (f64, f64) {
        // u = sin(pi x) on [0,1] is an eigenvector of the discrete operator
        let grid = Grid1D::new(0.0, 1.0, 401).unwrap();
        let c = -0.7;
        let coef = move |_: usize, _: f64, _: f64| (c, 0.0);
        let mut cols = vec![grid
            .nodes()
            .iter()
            .map(|x| (std::f64::consts::PI * x).sin())
            .collect::<Vec<_>>()];
        let mut ctl = StepControl::new(2e-4, 5e-4);
        ctl.rannacher_steps = rannacher;
        propagate(&grid, &coef, &ctl, &mut cols, 0.0, &[0.5], |_, _, _| {});
        let h = grid.spacing();
        let lam = -0.5 * (2.0 - 2.0 * (std::f64::consts::PI * h).cos()) / (h * h) + c;
        (cols[0][200], (lam * 0.5).exp())
    }

    #[test]
    fn crank_nicolson_tracks_decaying_mode() {
        let (got, expect) = run_mode(0);
        assert!((got / expect - 1.0).abs() < 1e-5, "{got} vs {expect}");
    }

    #[test]
    fn startup_steps_cost_little_accuracy() {
        let (got, expect) = run_mode(2);
        assert!((got / expect - 1.0).abs() < 1e-4, "{got} vs {expect}");
    }
}
