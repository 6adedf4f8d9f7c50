//! Fundamental solutions of `∂_r φ = ½ ∂_x² φ + V(r,x) φ (+ b ∂_x φ)` with a
//! delta initial condition at `(s, y)`, and the identities they satisfy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta;

use crate::error::{Error, Result};
use crate::grid::{trapezoid_nonuniform, Grid1D};
use crate::parabolic::{propagate, StepControl, StepStats};
use crate::quadrature::{gauss7, gaussian_against_linear, integrate_adaptive};
use crate::stats::Verdict;

pub const SCHEME_ID: &str = "crank-nicolson/rannacher/graded-v1";

/// The potential term of the parabolic equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero,
    Constant { c: f64 },
    /// `−(x⁴ ∧ n) / (4 (r² ∨ 1/n))`
    CutoffQuartic { n: u32 },
    /// `−x⁴ / (4 r²)`
    Quartic,
    /// `−x⁴ / 4` with drift `(x/r) ∂_x`.
    TransformedQuartic,
    /// `−x⁴ / 4`, time independent, no drift.
    StaticQuartic,
}

impl PotentialSpec {
    #[inline]
    pub fn value(&self, r: f64, x: f64) -> f64 {
        match *self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::Constant { c } => c,
            PotentialSpec::CutoffQuartic { n } => {
                let n = f64::from(n);
                -(x.powi(4).min(n)) / (4.0 * (r * r).max(1.0 / n))
            }
            PotentialSpec::Quartic => -x.powi(4) / (4.0 * r * r),
            PotentialSpec::TransformedQuartic | PotentialSpec::StaticQuartic => -0.25 * x.powi(4),
        }
    }

    #[inline]
    pub fn drift(&self, r: f64, x: f64) -> f64 {
        match self {
            PotentialSpec::TransformedQuartic => x / r,
            _ => 0.0,
        }
    }

    pub fn has_drift(&self) -> bool {
        matches!(self, PotentialSpec::TransformedQuartic)
    }

    /// True when the potential is `≤ 0` everywhere.
    pub fn is_nonpositive(&self) -> bool {
        match self {
            PotentialSpec::Constant { c } => *c <= 0.0,
            _ => true,
        }
    }

    fn validate_source(&self, s: f64, y: f64) -> Result<()> {
        match self {
            PotentialSpec::Quartic if s == 0.0 && y != 0.0 => Err(Error::Domain(format!(
                "quartic kernel from time 0 is only defined for y = 0 (got y = {y})"
            ))),
            PotentialSpec::Quartic | PotentialSpec::TransformedQuartic if s < 0.0 => {
                Err(Error::Domain(format!("source time must be nonnegative, got {s}")))
            }
            PotentialSpec::TransformedQuartic if s == 0.0 => {
                Err(Error::Domain("drift x/r is singular at r = 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `(2π(r−s))^{−1/2} exp(−(x−y)²/(2(r−s)))`.
pub fn heat_kernel(r: f64, x: f64, s: f64, y: f64) -> Result<f64> {
    if r <= s {
        return Err(Error::Domain(format!("heat kernel needs r > s (r = {r}, s = {s})")));
    }
    Ok(gaussian(r - s, x - y))
}

#[inline]
pub(crate) fn gaussian(var: f64, d: f64) -> f64 {
    (-(d * d) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Solver knobs. `None` fields take grid-dependent defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bootstrap offset; default `5 h²`.
    pub epsilon: Option<f64>,
    /// Largest time step; default `h`.
    pub k_max: Option<f64>,
    pub growth: f64,
    pub rannacher_steps: usize,
    /// Allowed mass in the outer strips of the grid.
    pub boundary_limit: f64,
    /// Additional geometric output rows between the bootstrap and the first
    /// uniform row.
    pub refine_start: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            epsilon: None,
            k_max: None,
            growth: 1.2,
            rannacher_steps: 2,
            boundary_limit: 1e-10,
            refine_start: true,
        }
    }
}

impl SolverOptions {
    pub fn epsilon_for(&self, grid: &Grid1D) -> f64 {
        self.epsilon.unwrap_or_else(|| 5.0 * grid.spacing().powi(2))
    }

    pub fn k_max_for(&self, grid: &Grid1D) -> f64 {
        self.k_max.unwrap_or_else(|| grid.spacing())
    }

    fn control(&self, grid: &Grid1D) -> StepControl {
        let eps = self.epsilon_for(grid);
        let mut c = StepControl::new(0.25 * eps, self.k_max_for(grid));
        c.growth = self.growth;
        c.rannacher_steps = self.rannacher_steps;
        c
    }

    /// Acceptance tolerance `5 max(h², k²)`.
    pub fn tolerance_for(&self, grid: &Grid1D) -> f64 {
        5.0 * grid.spacing().powi(2).max(self.k_max_for(grid).powi(2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub scheme: String,
    pub epsilon: f64,
    pub k_max: f64,
    pub tolerance: f64,
    pub boundary_mass: f64,
    pub steps: usize,
}

/// A sampled fundamental solution `φ(r, x; s, y)` for fixed `(s, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelField {
    pub source: (f64, f64),
    pub potential: PotentialSpec,
    pub x_grid: Grid1D,
    /// Row times; the first row is the bootstrap at `s + ε`.
    pub r_nodes: Vec<f64>,
    /// `values[i][j] = φ(r_nodes[i], x_j)`.
    pub values: Vec<Vec<f64>>,
    pub meta: SolverMeta,
}

impl KernelField {
    /// Closed-form field for `Zero` and `Constant` potentials on the given rows.
    pub fn analytic(pot: PotentialSpec, source: (f64, f64), r_nodes: &[f64], x_grid: Grid1D) -> Result<Self> {
        let c = match pot {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::Constant { c } => c,
            _ => return Err(Error::Domain("closed form exists only for zero and constant potentials".into())),
        };
        let (s, y) = source;
        let mut values = Vec::with_capacity(r_nodes.len());
        for &r in r_nodes {
            let fac = (c * (r - s)).exp();
            let row = x_grid
                .nodes()
                .iter()
                .map(|&x| heat_kernel(r, x, s, y).map(|v| v * fac))
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
        Ok(Self {
            source,
            potential: pot,
            x_grid,
            r_nodes: r_nodes.to_vec(),
            values,
            meta: SolverMeta {
                scheme: "closed-form".into(),
                epsilon: r_nodes.first().map_or(0.0, |r| r - s),
                k_max: 0.0,
                tolerance: 0.0,
                boundary_mass: 0.0,
                steps: 0,
            },
        })
    }

    pub fn tolerance(&self) -> f64 {
        self.meta.tolerance
    }

    /// Index of a stored row at time `r` (within 1e-12 relative).
    pub fn row_index(&self, r: f64) -> Option<usize> {
        self.r_nodes
            .iter()
            .position(|&t| (t - r).abs() <= 1e-12 * r.abs().max(1.0))
    }

    /// Row at time `r`, linearly interpolated in time between stored rows.
    pub fn row_at(&self, r: f64) -> Result<Vec<f64>> {
        if let Some(i) = self.row_index(r) {
            return Ok(self.values[i].clone());
        }
        let first = self.r_nodes[0];
        let last = *self.r_nodes.last().unwrap();
        if r < first || r > last {
            return Err(Error::Domain(format!("time {r} outside stored range [{first}, {last}]")));
        }
        let j = self.r_nodes.partition_point(|&t| t < r);
        let (t0, t1) = (self.r_nodes[j - 1], self.r_nodes[j]);
        let a = (r - t0) / (t1 - t0);
        Ok(self.values[j - 1]
            .iter()
            .zip(&self.values[j])
            .map(|(u, v)| (1.0 - a) * u + a * v)
            .collect())
    }

    /// `φ(r, x)` with linear interpolation in `x` (and in `r` between rows).
    pub fn value_at(&self, r: f64, x: f64) -> Result<f64> {
        if !self.x_grid.contains(x) {
            return Err(Error::Domain(format!("x = {x} outside the kernel grid")));
        }
        Ok(self.x_grid.interp(&self.row_at(r)?, x))
    }

    pub fn mass(&self, row: usize) -> f64 {
        self.x_grid.integrate(&self.values[row])
    }

    pub fn to_json(&self) -> Result<String> {
        crate::artifact::to_json("kernel_field", self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        crate::artifact::from_json("kernel_field", text)
    }
}

/// Mass of `row` in the outer strips of the grid.
pub(crate) fn edge_mass(grid: &Grid1D, row: &[f64]) -> f64 {
    let m = (grid.n / 50).max(3).min(grid.n / 2);
    let h = grid.spacing();
    let left: f64 = row[..m].iter().map(|v| v.abs()).sum();
    let right: f64 = row[row.len() - m..].iter().map(|v| v.abs()).sum();
    (left + right) * h
}

/// Heat kernel at time `eps` centred at `y` (shifted by the drift), times the
/// exponential of the potential averaged along the straight line from
/// `(s, y)` to `(s + eps, x)`.
fn bootstrap_row<V, B>(grid: &Grid1D, s: f64, y: f64, eps: f64, v: V, b: B) -> Vec<f64>
where
    V: Fn(f64, f64) -> f64,
    B: Fn(f64, f64) -> f64,
{
    let centre = y + eps * b(s + 0.5 * eps, y);
    let mut row: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| {
            let avg = gauss7(|th| v(s + th * eps, y + th * (x - y)), 0.0, 1.0);
            gaussian(eps, x - centre) * (eps * avg).exp()
        })
        .collect();
    row[0] = 0.0;
    let n = row.len();
    row[n - 1] = 0.0;
    row
}

struct RawSolve {
    rows: Vec<Vec<f64>>,
    stats: StepStats,
    boundary_mass: f64,
}

/// Runs one solve from a bootstrap at `t0 + eps`, storing rows at `outputs`.
/// `coef(step, t, x)` gives `(V, b)`; `step == usize::MAX` asks for the exact
/// coefficients used by the bootstrap.
fn raw_solve<C>(
    grid: &Grid1D,
    coef: &C,
    t0: f64,
    y: f64,
    outputs: &[f64],
    opts: &SolverOptions,
    what: &str,
) -> Result<RawSolve>
where
    C: Fn(usize, f64, f64) -> (f64, f64) + Sync,
{
    let eps = opts.epsilon_for(grid);
    let boot = bootstrap_row(
        grid,
        t0,
        y,
        eps,
        |t, x| coef(usize::MAX, t, x).0,
        |t, x| coef(usize::MAX, t, x).1,
    );
    let mut rows = Vec::with_capacity(outputs.len() + 1);
    let mut boundary_mass = edge_mass(grid, &boot);
    rows.push(boot.clone());
    let mut cols = vec![boot];
    let control = opts.control(grid);
    let stats = propagate(grid, coef, &control, &mut cols, t0 + eps, outputs, |_, _, c| {
        boundary_mass = boundary_mass.max(edge_mass(grid, &c[0]));
        rows.push(c[0].clone());
    });
    if boundary_mass > opts.boundary_limit {
        return Err(Error::Resolution {
            what: what.to_string(),
            boundary_mass,
            limit: opts.boundary_limit,
        });
    }
    Ok(RawSolve {
        rows,
        stats,
        boundary_mass,
    })
}

/// Coefficient closure for `pot` solved forward from source time `s`.
fn forward_coef(pot: PotentialSpec, s: f64, y: f64, eps: f64) -> impl Fn(usize, f64, f64) -> (f64, f64) + Sync {
    let at_origin = matches!(pot, PotentialSpec::Quartic) && s == 0.0 && y == 0.0;
    let first = PotentialSpec::CutoffQuartic {
        n: (1.0 / eps).ceil().min(f64::from(u32::MAX)) as u32,
    };
    move |step, t, x| {
        if at_origin && step == 0 {
            (first.value(t, x), 0.0)
        } else {
            (pot.value(t, x), pot.drift(t, x))
        }
    }
}

fn check_source(grid: &Grid1D, y: f64) -> Result<()> {
    let h = grid.spacing();
    if y < grid.lo + 5.0 * h || y > grid.hi - 5.0 * h {
        return Err(Error::Domain(format!(
            "source {y} not inside the grid [{}, {}] with margin",
            grid.lo, grid.hi
        )));
    }
    Ok(())
}

/// Row times for a field on `(s, r_max]` with `r_steps` uniform rows.
fn field_times(s: f64, r_max: f64, r_steps: usize, eps: f64, refine_start: bool, extra: &[f64]) -> Vec<f64> {
    let dr = (r_max - s) / r_steps as f64;
    let mut times: Vec<f64> = (1..=r_steps).map(|j| s + j as f64 * dr).collect();
    if refine_start {
        let mut t = 2.0 * eps;
        while t < 0.75 * dr {
            times.push(s + t);
            t *= 2.0;
        }
    }
    times.extend(extra.iter().copied().filter(|&t| t > s + eps && t <= r_max));
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    times
}

/// Solves for `φ(·, ·; s, y)` up to `r_max` with `r_steps` uniform rows.
pub fn solve_kernel(pot: PotentialSpec, source: (f64, f64), r_max: f64, x_grid: Grid1D, r_steps: usize) -> Result<KernelField> {
    solve_kernel_with(pot, source, r_max, x_grid, r_steps, &[], &SolverOptions::default())
}

/// As [`solve_kernel`], also storing rows at `extra_times`.
pub fn solve_kernel_with(
    pot: PotentialSpec,
    source: (f64, f64),
    r_max: f64,
    x_grid: Grid1D,
    r_steps: usize,
    extra_times: &[f64],
    opts: &SolverOptions,
) -> Result<KernelField> {
    let (s, y) = source;
    pot.validate_source(s, y)?;
    check_source(&x_grid, y)?;
    let eps = opts.epsilon_for(&x_grid);
    if r_max <= s + eps || r_steps == 0 {
        return Err(Error::Domain(format!("empty time range (s = {s}, r_max = {r_max})")));
    }
    let times = field_times(s, r_max, r_steps, eps, opts.refine_start, extra_times);
    let coef = forward_coef(pot, s, y, eps);
    let raw = raw_solve(&x_grid, &coef, s, y, &times, opts, "kernel solve")?;
    let mut r_nodes = vec![s + eps];
    r_nodes.extend(times);
    Ok(KernelField {
        source,
        potential: pot,
        meta: SolverMeta {
            scheme: SCHEME_ID.into(),
            epsilon: eps,
            k_max: opts.k_max_for(&x_grid),
            tolerance: opts.tolerance_for(&x_grid),
            boundary_mass: raw.boundary_mass,
            steps: raw.stats.steps,
        },
        x_grid,
        r_nodes,
        values: raw.rows,
    })
}

/// Evolves an arbitrary initial row from time `t0` under `pot`, returning the
/// rows at `outputs` (increasing, all `> t0`) and the largest edge mass seen.
pub fn propagate_row(
    pot: PotentialSpec,
    t0: f64,
    row: &[f64],
    outputs: &[f64],
    x_grid: &Grid1D,
    opts: &SolverOptions,
) -> Result<(Vec<Vec<f64>>, f64)> {
    if row.len() != x_grid.n {
        return Err(Error::Grid("initial row does not match the grid".into()));
    }
    let coef = move |_: usize, t: f64, x: f64| (pot.value(t, x), pot.drift(t, x));
    let mut cols = vec![row.to_vec()];
    cols[0][0] = 0.0;
    cols[0][x_grid.n - 1] = 0.0;
    let mut control = opts.control(x_grid);
    control.k_start = control.k_max;
    let mut rows = Vec::with_capacity(outputs.len());
    let mut boundary_mass = edge_mass(x_grid, row);
    propagate(x_grid, &coef, &control, &mut cols, t0, outputs, |_, _, c| {
        boundary_mass = boundary_mass.max(edge_mass(x_grid, &c[0]));
        rows.push(c[0].clone());
    });
    if boundary_mass > opts.boundary_limit {
        return Err(Error::Resolution {
            what: "row propagation".into(),
            boundary_mass,
            limit: opts.boundary_limit,
        });
    }
    Ok((rows, boundary_mass))
}

/// Rows of `w ↦ φ(r, x; ρ, w)` for each `ρ` in `rho` (all `< r`), computed as
/// a forward solve of the time-reversed equation. Drift-free potentials only.
pub fn solve_adjoint(
    pot: PotentialSpec,
    terminal: (f64, f64),
    rho: &[f64],
    x_grid: &Grid1D,
    opts: &SolverOptions,
) -> Result<Vec<Vec<f64>>> {
    if pot.has_drift() {
        return Err(Error::Domain("adjoint solve supports drift-free potentials only".into()));
    }
    let (r, x) = terminal;
    check_source(x_grid, x)?;
    let eps = opts.epsilon_for(x_grid);
    let mut taus: Vec<(usize, f64)> = rho.iter().map(|&p| r - p).enumerate().collect();
    if taus.iter().any(|&(_, t)| t <= eps) {
        return Err(Error::Domain("adjoint rows must lie before r − ε".into()));
    }
    if matches!(pot, PotentialSpec::Quartic) && rho.iter().any(|&p| p <= 0.0) {
        return Err(Error::Domain("quartic adjoint rows need ρ > 0".into()));
    }
    taus.sort_by(|a, b| a.1.total_cmp(&b.1));
    let outputs: Vec<f64> = taus.iter().map(|p| p.1).collect();
    let coef = move |_: usize, t: f64, w: f64| (pot.value(r - t, w), 0.0);
    let raw = raw_solve(x_grid, &coef, 0.0, x, &outputs, opts, "adjoint solve")?;
    let mut out = vec![Vec::new(); rho.len()];
    for (k, &(i, _)) in taus.iter().enumerate() {
        out[i] = raw.rows[k + 1].clone();
    }
    Ok(out)
}

/// Discretized transition density `w ↦ φ(r_to, w; r_from, x_from)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub density: Vec<f64>,
    pub mass: f64,
}

/// Transition row from a field, recomputed when `(r_from, x_from)` is not the
/// field's own source.
pub fn transition_row(field: &KernelField, r_from: f64, x_from: f64, r_to: f64) -> Result<TransitionRow> {
    let grid = &field.x_grid;
    if !grid.contains(x_from) {
        return Err(Error::Domain(format!("x_from = {x_from} outside the grid")));
    }
    if r_to <= r_from {
        return Err(Error::Domain("transition needs r_to > r_from".into()));
    }
    let (s, y) = field.source;
    let density = if (r_from - s).abs() < 1e-12 && (x_from - y).abs() < 1e-12 && field.row_index(r_to).is_some() {
        field.row_at(r_to)?
    } else {
        let opts = SolverOptions {
            epsilon: Some(field.meta.epsilon),
            k_max: Some(field.meta.k_max),
            ..Default::default()
        };
        let f = solve_kernel_with(field.potential, (r_from, x_from), r_to, grid.clone(), 1, &[], &opts)?;
        f.values.last().unwrap().clone()
    };
    let mass = grid.integrate(&density);
    Ok(TransitionRow { density, mass })
}

/// Columns of the transition operator between two times: column `j` holds
/// `φ(r_to, ·; r_from, x_j)` on a window of nodes starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub grid: Grid1D,
    pub r_from: f64,
    pub r_to: f64,
    pub columns: Vec<WindowColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowColumn {
    pub start: usize,
    pub values: Vec<f64>,
}

impl WindowColumn {
    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        if i < self.start {
            return 0.0;
        }
        self.values.get(i - self.start).copied().unwrap_or(0.0)
    }

    pub fn end(&self) -> usize {
        self.start + self.values.len()
    }
}

impl TransitionMatrix {
    /// Solves every column; sources are the interior nodes of `grid`
    /// (wall columns are zero). Each column lives on a window of ±10
    /// standard deviations around its source.
    pub fn compute(pot: PotentialSpec, r_from: f64, r_to: f64, grid: &Grid1D, opts: &SolverOptions) -> Result<Self> {
        if matches!(pot, PotentialSpec::Quartic) && r_from <= 0.0 {
            return Err(Error::Domain("quartic transitions from time 0 exist only from the origin".into()));
        }
        let h = grid.spacing();
        let half = ((10.0 * (r_to - r_from).sqrt()) / h).ceil() as usize + 6;
        let eps = opts.epsilon_for(grid);
        let columns: Vec<Result<WindowColumn>> = (0..grid.n)
            .into_par_iter()
            .map(|j| {
                if j == 0 || j + 1 == grid.n {
                    return Ok(WindowColumn { start: j, values: vec![0.0] });
                }
                let lo = j.saturating_sub(half);
                let hi = (j + half).min(grid.n - 1);
                let sub = Grid1D::new(grid.node(lo), grid.node(hi), hi - lo + 1)?;
                let y = grid.node(j);
                let coef = forward_coef(pot, r_from, y, eps);
                let truncated = lo == 0 || hi == grid.n - 1;
                let mut o = opts.clone();
                if truncated {
                    o.boundary_limit = f64::INFINITY;
                }
                let raw = raw_solve(&sub, &coef, r_from, y, &[r_to], &o, "transition column")?;
                Ok(WindowColumn {
                    start: lo,
                    values: raw.rows.into_iter().nth(1).unwrap(),
                })
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            r_from,
            r_to,
            columns: columns.into_iter().collect::<Result<_>>()?,
        })
    }

    /// `∫ φ(r_to, z; r_from, x_j) g(z) dz` for every source node `j`.
    pub fn pull_back(&self, g: &[f64]) -> Vec<f64> {
        let h = self.grid.spacing();
        self.columns
            .iter()
            .map(|c| {
                let lo = c.start;
                let s: f64 = c.values.iter().zip(&g[lo..c.end()]).map(|(a, b)| a * b).sum();
                s * h
            })
            .collect()
    }

    /// `∫ q(x) φ(r_to, ·; r_from, x) dx`.
    pub fn push_forward(&self, q: &[f64]) -> Vec<f64> {
        let h = self.grid.spacing();
        let mut out = vec![0.0; self.grid.n];
        for (c, &w) in self.columns.iter().zip(q) {
            for (o, v) in out[c.start..c.end()].iter_mut().zip(&c.values) {
                *o += w * v * h;
            }
        }
        out
    }
}

/// Result of a Duhamel residual evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuhamelReport {
    pub residual: f64,
    pub per_probe: Vec<f64>,
}

/// `sup |φ − φ₀ − ∫∫ φ₀(r,x;ρ,w) V(ρ,w) φ(ρ,w) dw dρ|` over probes `(r, x)`.
///
/// Probe times must be stored rows. The `w` integral is the exact Gaussian
/// integral of the piecewise-linear interpolant; the `ρ` integral is a
/// trapezoid over the stored rows with a constant first cell `[s, s+ε]`.
pub fn duhamel_residual(field: &KernelField, probes: &[(f64, f64)]) -> Result<DuhamelReport> {
    let (s, y) = field.source;
    let grid = &field.x_grid;
    let pot = field.potential;
    let mut per_probe = Vec::with_capacity(probes.len());
    for &(r, x) in probes {
        let ir = field
            .row_index(r)
            .ok_or_else(|| Error::Domain(format!("probe time {r} is not a stored row")))?;
        let mut rhos = Vec::with_capacity(ir + 1);
        let mut integrand = Vec::with_capacity(ir + 1);
        for i in 0..=ir {
            let rho = field.r_nodes[i];
            let vphi: Vec<f64> = grid
                .nodes()
                .iter()
                .zip(&field.values[i])
                .map(|(&w, &p)| pot.value(rho, w) * p)
                .collect();
            let val = if i == ir {
                grid.interp(&vphi, x)
            } else {
                gaussian_against_linear(grid, &vphi, x, r - rho)
            };
            rhos.push(rho);
            integrand.push(val);
        }
        let head = (rhos[0] - s) * integrand[0];
        let integral = head + trapezoid_nonuniform(&rhos, &integrand);
        let phi = grid.interp(&field.values[ir], x);
        let phi0 = heat_kernel(r, x, s, y)?;
        per_probe.push((phi - phi0 - integral).abs());
    }
    Ok(DuhamelReport {
        residual: per_probe.iter().fold(0.0, |m, v| m.max(*v)),
        per_probe,
    })
}

/// Outcome of the cutoff monotonicity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub n_list: Vec<u32>,
    pub probes: Vec<(f64, f64)>,
    /// `values[k][p]`: cutoff `n_list[k]` at probe `p`.
    pub values: Vec<Vec<f64>>,
    pub heat: Vec<f64>,
    pub max_violation: f64,
    pub min_value: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

/// Checks `φ₀ ≥ φ_{n₁} ≥ φ_{n₂} ≥ … ≥ 0` at the probes.
pub fn cutoff_monotonicity_check(
    source: (f64, f64),
    probes: &[(f64, f64)],
    n_list: &[u32],
    x_grid: &Grid1D,
    opts: &SolverOptions,
) -> Result<MonotonicityReport> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("cutoff list must be strictly increasing".into()));
    }
    let r_max = probes.iter().fold(0.0f64, |m, p| m.max(p.0));
    let times: Vec<f64> = probes.iter().map(|p| p.0).collect();
    let fields: Vec<KernelField> = n_list
        .par_iter()
        .map(|&n| {
            solve_kernel_with(
                PotentialSpec::CutoffQuartic { n },
                source,
                r_max,
                x_grid.clone(),
                1,
                &times,
                opts,
            )
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(fields.len());
    for f in &fields {
        values.push(probes.iter().map(|&(r, x)| f.value_at(r, x)).collect::<Result<Vec<_>>>()?);
    }
    let heat = probes
        .iter()
        .map(|&(r, x)| heat_kernel(r, x, source.0, source.1))
        .collect::<Result<Vec<_>>>()?;
    let tolerance = opts.tolerance_for(x_grid);
    let mut max_violation: f64 = 0.0;
    let mut prev = heat.clone();
    for row in &values {
        for (p, v) in prev.iter().zip(row) {
            max_violation = max_violation.max(v - p);
        }
        prev = row.clone();
    }
    let min_value = values.iter().flatten().fold(f64::INFINITY, |m, v| m.min(*v));
    let ok = max_violation <= tolerance && min_value >= -tolerance;
    Ok(MonotonicityReport {
        n_list: n_list.to_vec(),
        probes: probes.to_vec(),
        values,
        heat,
        max_violation,
        min_value,
        tolerance,
        verdict: Verdict::from_bool(ok),
    })
}

/// Chapman–Kolmogorov comparison at probes `x` (all at time `r`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupReport {
    pub direct: Vec<f64>,
    pub composed: Vec<f64>,
    pub max_error: f64,
}

/// Compares `∫ φ(r,x;mid,w) φ(mid,w;s,y) dw` with `φ(r,x;s,y)`.
pub fn chapman_kolmogorov_check(
    pot: PotentialSpec,
    s: f64,
    mid: f64,
    r: f64,
    y: f64,
    probes: &[f64],
    x_grid: &Grid1D,
    opts: &SolverOptions,
) -> Result<SemigroupReport> {
    if !(s < mid && mid < r) {
        return Err(Error::Domain("need s < mid < r".into()));
    }
    let field = solve_kernel_with(pot, (s, y), r, x_grid.clone(), 1, &[mid], opts)?;
    let first = field.row_at(mid)?;
    let rows: Vec<Result<Vec<f64>>> = probes
        .par_iter()
        .map(|&x| solve_adjoint(pot, (r, x), &[mid], x_grid, opts).map(|mut v| v.remove(0)))
        .collect();
    let mut direct = Vec::new();
    let mut composed = Vec::new();
    for (&x, second) in probes.iter().zip(rows) {
        let second = second?;
        let prod: Vec<f64> = first.iter().zip(&second).map(|(a, b)| a * b).collect();
        composed.push(x_grid.integrate(&prod));
        direct.push(field.value_at(r, x)?);
    }
    let max_error = direct
        .iter()
        .zip(&composed)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(SemigroupReport {
        direct,
        composed,
        max_error,
    })
}

/// Returns `(quadrature, closed_form)` for the beta-function identity
/// `∫_s^r ∫ (r−ρ)^{−α} e^{−λ|x−w|²/(2(r−ρ))} (ρ−s)^{−β} e^{−λ|w−y|²/(2(ρ−s))} dw dρ
///   = √(2π/λ) B(3/2−α, 3/2−β) (r−s)^{3/2−α−β} e^{−λ|x−y|²/(2(r−s))}`.
#[allow(clippy::too_many_arguments)]
pub fn beta_identity_check(alpha: f64, beta_: f64, lambda: f64, s: f64, r: f64, x: f64, y: f64) -> Result<(f64, f64)> {
    if alpha >= 1.5 || beta_ >= 1.5 {
        return Err(Error::Domain(format!("exponents must be < 3/2 (α = {alpha}, β = {beta_})")));
    }
    if r <= s || lambda <= 0.0 {
        return Err(Error::Domain("need r > s and λ > 0".into()));
    }
    let t = r - s;
    let closed = (2.0 * std::f64::consts::PI / lambda).sqrt()
        * beta(1.5 - alpha, 1.5 - beta_)
        * t.powf(1.5 - alpha - beta_)
        * (-lambda * (x - y).powi(2) / (2.0 * t)).exp();

    // inner integral in w, done numerically over the Gaussian bulk
    let inner = |rho: f64| -> f64 {
        let a = r - rho;
        let b = rho - s;
        if a <= 0.0 || b <= 0.0 {
            return 0.0;
        }
        let var = a * b / (lambda * t);
        let centre = (x * b + y * a) / t;
        let sd = var.sqrt();
        let f = |w: f64| {
            a.powf(-alpha)
                * (-lambda * (x - w).powi(2) / (2.0 * a)).exp()
                * b.powf(-beta_)
                * (-lambda * (w - y).powi(2) / (2.0 * b)).exp()
        };
        integrate_adaptive(f, centre - 14.0 * sd, centre + 14.0 * sd, 1e-15, 1e-12).0
    };
    let m = 0.5 * (s + r);
    let left = integrate_adaptive(|u| 2.0 * u * inner(s + u * u), 0.0, (m - s).sqrt(), 1e-13, 1e-11).0;
    let right = integrate_adaptive(|u| 2.0 * u * inner(r - u * u), 0.0, (r - m).sqrt(), 1e-13, 1e-11).0;
    Ok((left + right, closed))
}
