//! Radial cubic wave flow on `[0, L]` with Dirichlet walls, for the complex
//! amplitude `w = v + i |∂_r|⁻¹ ∂_t v` where `v_tt − v_rr + v³/r² = 0`.
//!
//! The real part is advanced by Picard iteration of the Duhamel formula built
//! from the reflected d'Alembert propagators; the imaginary part is rebuilt
//! from sine coefficients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::PathSample;
use crate::sine::SineTransform;
use crate::stats::Verdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub t: f64,
    pub length: f64,
    /// `v = Re w` on the nodes `j L / n`.
    pub re: Vec<f64>,
    /// `Im w = |∂_r|⁻¹ ∂_t v`.
    pub im: Vec<f64>,
}

impl WaveState {
    pub fn new(t: f64, length: f64, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let s = Self { t, length, re, im };
        s.validate()?;
        Ok(s)
    }

    pub fn zero(length: f64, intervals: usize) -> Self {
        Self {
            t: 0.0,
            length,
            re: vec![0.0; intervals + 1],
            im: vec![0.0; intervals + 1],
        }
    }

    pub fn intervals(&self) -> usize {
        self.re.len() - 1
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.intervals() as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        crate::measures::uniform_nodes(self.length, self.intervals())
    }

    pub fn validate(&self) -> Result<()> {
        if self.re.len() != self.im.len() || self.re.len() < 3 {
            return Err(Error::Format("state arrays have inconsistent lengths".into()));
        }
        if !(self.length > 0.0) {
            return Err(Error::Format("state length must be positive".into()));
        }
        if self.boundary_residual() > 1e-12 {
            return Err(Error::Format(format!("state does not vanish at the walls ({:.3e})", self.boundary_residual())));
        }
        Ok(())
    }

    pub fn boundary_residual(&self) -> f64 {
        let n = self.intervals();
        [self.re[0], self.re[n], self.im[0], self.im[n]].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∂_t v = |∂_r| Im w`.
    pub fn velocity(&self) -> Vec<f64> {
        SineTransform::new(self.intervals(), self.length).multiply(&self.im, |k| k)
    }

    pub fn conj(&self) -> Self {
        Self {
            im: self.im.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }

    /// Complex data from a path with both components on a uniform grid of `[0, L]`.
    pub fn from_path(path: &PathSample, length: f64) -> Result<Self> {
        let n = path.r_nodes.len() - 1;
        let h = length / n as f64;
        if path.r_nodes.iter().enumerate().any(|(j, &r)| (r - j as f64 * h).abs() > 1e-9 * length) {
            return Err(Error::Domain("path is not on a uniform grid of [0, L]".into()));
        }
        let mut re = path.re.clone();
        let mut im = path.im.clone().unwrap_or_else(|| vec![0.0; n + 1]);
        re[0] = 0.0;
        re[n] = 0.0;
        im[0] = 0.0;
        im[n] = 0.0;
        Self::new(0.0, length, re, im)
    }

    /// Sup distance between two states on the same grid.
    pub fn distance(&self, other: &WaveState) -> f64 {
        self.re
            .iter()
            .zip(&other.re)
            .chain(self.im.iter().zip(&other.im))
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Odd, `2L`-periodic extension of nodal data, indexed by integer node.
#[inline]
fn odd_node(values: &[f64], j: i64) -> f64 {
    let n = (values.len() - 1) as i64;
    let mut q = j.rem_euclid(2 * n);
    if q > n {
        q -= 2 * n;
    }
    if q < 0 {
        -values[(-q) as usize]
    } else {
        values[q as usize]
    }
}

/// Odd extension at an arbitrary point, with linear interpolation.
fn odd_at(values: &[f64], h: f64, x: f64) -> f64 {
    let t = x / h;
    let j = t.round();
    if (t - j).abs() < 1e-9 {
        return odd_node(values, j as i64);
    }
    let j0 = t.floor();
    let f = t - j0;
    odd_node(values, j0 as i64) * (1.0 - f) + odd_node(values, j0 as i64 + 1) * f
}

/// Prefix sums of the odd extension used by the local integration rules.
struct Primitive<'a> {
    values: &'a [f64],
    h: f64,
    offset: i64,
    /// `par[p][i]` sums extended values `j < i − offset` with `j ≡ p (mod 2)`.
    par: [Vec<f64>; 2],
    /// Trapezoid primitive on extended nodes.
    trap: Vec<f64>,
}

impl<'a> Primitive<'a> {
    fn new(values: &'a [f64], h: f64) -> Self {
        let n = (values.len() - 1) as i64;
        let offset = 2 * n;
        let len = (5 * n + 2) as usize;
        let mut par = [vec![0.0; len], vec![0.0; len]];
        let mut trap = vec![0.0; len];
        for i in 1..len {
            let j = i as i64 - 1 - offset;
            let gj = odd_node(values, j);
            let p = j.rem_euclid(2) as usize;
            par[p][i] = par[p][i - 1] + gj;
            par[1 - p][i] = par[1 - p][i - 1];
            trap[i] = trap[i - 1] + 0.5 * h * (gj + odd_node(values, j + 1));
        }
        Self { values, h, offset, par, trap }
    }

    fn sum_parity(&self, a: i64, b: i64, p: i64) -> f64 {
        // extended nodes a..=b with parity p
        let (lo, hi) = ((a + self.offset) as usize, (b + 1 + self.offset) as usize);
        let q = p.rem_euclid(2) as usize;
        self.par[q][hi] - self.par[q][lo]
    }

    /// Composite Simpson rule over the nodes `a..=b` (`b − a` even and positive).
    fn simpson(&self, a: i64, b: i64) -> f64 {
        let ends = odd_node(self.values, a) + odd_node(self.values, b);
        let odd = self.sum_parity(a + 1, b - 1, a + 1);
        let even = if b - a > 2 { self.sum_parity(a + 2, b - 2, a) } else { 0.0 };
        self.h / 3.0 * (ends + 4.0 * odd + 2.0 * even)
    }

    /// Integral of the linear interpolant from 0 to `x` (even in `x`).
    fn linear(&self, x: f64) -> f64 {
        let t = x / self.h;
        let j = t.floor();
        let f = t - j;
        let i = (j as i64 + self.offset) as usize;
        let g0 = odd_node(self.values, j as i64);
        let g1 = odd_node(self.values, j as i64 + 1);
        let base = self.trap[i] - self.trap[self.offset as usize];
        base + self.h * (f * g0 + 0.5 * f * f * (g1 - g0))
    }

    /// `½ ∫_{r−s}^{r+s}` of the extension.
    fn half_window(&self, j: i64, s: f64) -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        let m = s / self.h;
        let mr = m.round();
        if (m - mr).abs() < 1e-9 {
            let m = mr as i64;
            0.5 * self.simpson(j - m, j + m)
        } else {
            let r = j as f64 * self.h;
            0.5 * (self.linear(r + s) - self.linear(r - s))
        }
    }
}

fn check_regime(t: f64, length: f64) -> Result<()> {
    if t.abs() > 1.0 + 1e-12 || length < 2.0 {
        return Err(Error::Domain(format!("single-step propagators need |t| ≤ 1 and L ≥ 2 (t = {t}, L = {length})")));
    }
    Ok(())
}

fn cos_prop_any(f: &[f64], t: f64, length: f64) -> Vec<f64> {
    let n = f.len() - 1;
    let h = length / n as f64;
    let mut out: Vec<f64> = (0..=n)
        .map(|j| {
            let r = j as f64 * h;
            0.5 * (odd_at(f, h, r + t) + odd_at(f, h, r - t))
        })
        .collect();
    out[0] = 0.0;
    out[n] = 0.0;
    out
}

fn sin_prop_prim(p: &Primitive, t: f64) -> Vec<f64> {
    let n = p.values.len() - 1;
    let sign = t.signum();
    let mut out: Vec<f64> = (0..=n as i64).map(|j| sign * p.half_window(j, t.abs())).collect();
    out[0] = 0.0;
    out[n] = 0.0;
    out
}

/// `cos(t |∂_r|) f` on `[0, L]` by reflected d'Alembert.
pub fn cos_prop(f: &[f64], t: f64, length: f64) -> Result<Vec<f64>> {
    check_regime(t, length)?;
    Ok(cos_prop_any(f, t, length))
}

/// `sin(t |∂_r|) / |∂_r| g`, i.e. half the integral of the reflected `g` over
/// `[r − t, r + t]`.
pub fn sin_prop(g: &[f64], t: f64, length: f64) -> Result<Vec<f64>> {
    check_regime(t, length)?;
    let h = length / (g.len() - 1) as f64;
    Ok(sin_prop_prim(&Primitive::new(g, h), t))
}

/// Exact evolution of the sine coefficients of `w` by `e^{−i t |∂_r|}`.
pub fn spectral_free_flow(state: &WaveState, t: f64) -> WaveState {
    let sine = SineTransform::new(state.intervals(), state.length);
    let a = sine.forward(&state.re);
    let b = sine.forward(&state.im);
    let (mut re, mut im) = (Vec::with_capacity(a.len()), Vec::with_capacity(a.len()));
    for (m, (x, y)) in a.iter().zip(&b).enumerate() {
        let (s, c) = (t * sine.wavenumber(m + 1)).sin_cos();
        re.push(c * x + s * y);
        im.push(c * y - s * x);
    }
    WaveState {
        t: state.t + t,
        length: state.length,
        re: sine.inverse(&re),
        im: sine.inverse(&im),
    }
}

/// `v³ / r²`, zero at `r = 0`.
pub fn nonlinearity(v: &[f64], h: f64) -> Vec<f64> {
    v.iter()
        .enumerate()
        .map(|(j, &x)| if j == 0 { 0.0 } else { x * x * x / (j as f64 * h).powi(2) })
        .collect()
}

/// `K(v)(t_m) = ∫₀^{t_m} sin((t_m−τ)|∂_r|)/|∂_r| [v³/r²](τ) dτ` at every
/// history time `t_m = m k`, with the trapezoid rule in `τ`.
pub fn duhamel_k(history: &[Vec<f64>], k: f64, length: f64) -> Vec<Vec<f64>> {
    let n = history[0].len() - 1;
    let h = length / n as f64;
    let sources: Vec<Vec<f64>> = history.iter().map(|v| nonlinearity(v, h)).collect();
    let mut out = vec![vec![0.0; n + 1]; history.len()];
    for (l, src) in sources.iter().enumerate() {
        if src.iter().all(|&x| x == 0.0) {
            continue;
        }
        let prim = Primitive::new(src, h);
        let weight = if l == 0 { 0.5 * k } else { k };
        let contributions: Vec<(usize, Vec<f64>)> = ((l + 1)..history.len())
            .into_par_iter()
            .map(|m| (m, sin_prop_prim(&prim, (m - l) as f64 * k).into_iter().map(|x| weight * x).collect()))
            .collect();
        for (m, c) in contributions {
            for (o, x) in out[m].iter_mut().zip(c) {
                *o += x;
            }
        }
    }
    out
}

/// Duhamel term at the last history time only.
pub fn duhamel_k_at(history: &[Vec<f64>], k: f64, length: f64) -> Vec<f64> {
    duhamel_k(history, k, length).pop().unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Windows whose observed contraction ratio reaches this are halved.
    pub ratio_limit: f64,
    pub min_window: f64,
    pub nonlinear: bool,
    /// Run exactly this many iterations in a window of fixed length.
    pub fixed_iterations: Option<usize>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 60,
            ratio_limit: 0.9,
            min_window: 1.0 / 1024.0,
            nonlinear: true,
            fixed_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardSolution {
    pub k: f64,
    pub window: f64,
    /// `v` at `m k`, `m = 0..=M`.
    pub history: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Sup distance between successive iterates.
    pub increments: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `sup |v − free − (−K(v))|` for the accepted iterate.
    pub residual: f64,
    pub shrinks: usize,
}

fn time_step(window: f64, h: f64) -> (usize, f64) {
    let m = ((window / h) - 1e-9).ceil().max(1.0) as usize;
    (m, window / m as f64)
}

/// How the second datum enters the free evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FreeRoute {
    /// Second datum is `Im w = |∂_r|⁻¹ ∂_t v`; `sin(t|∂_r|)` acts on sine coefficients.
    Spectral,
    /// Second datum is the velocity `∂_t v`; it enters through [`sin_prop`],
    /// so the whole solution obeys the domain of dependence exactly.
    Dalembert,
}

/// Free part at `m k`, `m = 0..=M`.
fn free_history(f1: &[f64], second: &[f64], route: FreeRoute, length: f64, k: f64, steps: usize) -> Vec<Vec<f64>> {
    let n = f1.len() - 1;
    let h = length / n as f64;
    let sine = SineTransform::new(n, length);
    let b = match route {
        FreeRoute::Spectral => sine.forward(second),
        FreeRoute::Dalembert => Vec::new(),
    };
    let prim = Primitive::new(second, h);
    (0..=steps)
        .map(|m| {
            let t = m as f64 * k;
            let mut lin = cos_prop_any(f1, t, length);
            let extra = match route {
                FreeRoute::Spectral => {
                    let c: Vec<f64> = b.iter().enumerate().map(|(i, y)| (t * sine.wavenumber(i + 1)).sin() * y).collect();
                    sine.inverse(&c)
                }
                FreeRoute::Dalembert => sin_prop_prim(&prim, t),
            };
            for (x, y) in lin.iter_mut().zip(extra) {
                *x += y;
            }
            lin
        })
        .collect()
}

fn sup_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, |m, d| if d.is_nan() { f64::INFINITY } else { m.max(d) })
}

fn picard_iterate(lin: &[Vec<f64>], k: f64, length: f64, opts: &PicardOptions) -> (Vec<Vec<f64>>, Vec<f64>, bool) {
    let mut v = lin.to_vec();
    let mut incs = Vec::new();
    if !opts.nonlinear {
        return (v, vec![0.0], true);
    }
    loop {
        let kv = duhamel_k(&v, k, length);
        let next: Vec<Vec<f64>> = lin
            .iter()
            .zip(&kv)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        let d = sup_diff(&next, &v);
        incs.push(d);
        v = next;
        if let Some(fixed) = opts.fixed_iterations {
            if incs.len() >= fixed {
                return (v, incs, true);
            }
            continue;
        }
        if d < opts.tol {
            return (v, incs, true);
        }
        let n = incs.len();
        let diverging = !d.is_finite() || d > 1e8;
        let slow = n >= 3 && d / incs[n - 2] >= opts.ratio_limit;
        if diverging || slow || n >= opts.max_iterations {
            return (v, incs, false);
        }
    }
}

/// Solves the Duhamel equation for `v` on `[0, T]`, halving `T` until the
/// iteration contracts.
pub fn picard_solve(f1: &[f64], g2: &[f64], length: f64, window: f64, opts: &PicardOptions) -> Result<PicardSolution> {
    picard_solve_with(f1, g2, FreeRoute::Spectral, length, window, opts)
}

/// As [`picard_solve`] with the second datum interpreted according to `route`.
pub fn picard_solve_with(
    f1: &[f64],
    g2: &[f64],
    route: FreeRoute,
    length: f64,
    window: f64,
    opts: &PicardOptions,
) -> Result<PicardSolution> {
    if f1.len() != g2.len() || f1.len() < 3 {
        return Err(Error::Domain("data arrays must share a grid".into()));
    }
    if !(window > 0.0) || window > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("window {window} outside (0, 1]")));
    }
    let n = f1.len() - 1;
    let h = length / n as f64;
    let mut t_win = window;
    let mut shrinks = 0;
    loop {
        let (steps, k) = time_step(t_win, h);
        let lin = free_history(f1, g2, route, length, k, steps);
        let (v, incs, ok) = picard_iterate(&lin, k, length, opts);
        if ok {
            let residual = if opts.nonlinear {
                let kv = duhamel_k(&v, k, length);
                let target: Vec<Vec<f64>> = lin
                    .iter()
                    .zip(&kv)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                    .collect();
                sup_diff(&target, &v)
            } else {
                0.0
            };
            let ratios = incs.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
            return Ok(PicardSolution {
                k,
                window: t_win,
                history: v,
                iterations: incs.len(),
                increments: incs,
                ratios,
                residual,
                shrinks,
            });
        }
        if opts.fixed_iterations.is_some() {
            unreachable!("fixed iteration runs always return");
        }
        t_win *= 0.5;
        shrinks += 1;
        if t_win < opts.min_window {
            let norm = f1.iter().chain(g2).fold(0.0f64, |m, x| m.max(x.abs()));
            return Err(Error::Solver(format!(
                "no contraction down to window {:.3e} (data sup norm {norm:.3e}, last increments {:?})",
                t_win * 2.0,
                &incs[incs.len().saturating_sub(3)..]
            )));
        }
    }
}

/// `w` at history time `m k` of a Picard solution.
pub fn reconstruct_w(sol: &PicardSolution, f1: &[f64], g2: &[f64], length: f64, m: usize) -> WaveState {
    let n = f1.len() - 1;
    let h = length / n as f64;
    let sine = SineTransform::new(n, length);
    let t = m as f64 * sol.k;
    let a = sine.forward(f1);
    let b = sine.forward(g2);
    let mut c: Vec<f64> = a
        .iter()
        .zip(&b)
        .enumerate()
        .map(|(i, (x, y))| {
            let (s, co) = (t * sine.wavenumber(i + 1)).sin_cos();
            -s * x + co * y
        })
        .collect();
    for l in 0..=m {
        let src = nonlinearity(&sol.history[l], h);
        if src.iter().all(|&x| x == 0.0) {
            continue;
        }
        let w = if l == 0 || l == m { 0.5 * sol.k } else { sol.k };
        let hat = sine.forward(&src);
        for (i, ci) in c.iter_mut().enumerate() {
            let kappa = sine.wavenumber(i + 1);
            *ci -= w * ((t - l as f64 * sol.k) * kappa).cos() / kappa * hat[i];
        }
    }
    let mut re = sol.history[m].clone();
    re[0] = 0.0;
    re[n] = 0.0;
    WaveState {
        t,
        length,
        re,
        im: sine.inverse(&c),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDiagnostics {
    pub t_start: f64,
    pub t_end: f64,
    pub iterations: usize,
    pub ratios: Vec<f64>,
    pub residual: f64,
    pub shrinks: usize,
    pub holder_norm: f64,
    pub boundary_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub length: f64,
    pub states: Vec<WaveState>,
    pub windows: Vec<WindowDiagnostics>,
    pub status: Verdict,
    pub message: Option<String>,
}

impl FlowTrace {
    pub fn last(&self) -> &WaveState {
        self.states.last().unwrap()
    }

    /// State stored at time `t`.
    pub fn at(&self, t: f64) -> Option<&WaveState> {
        self.states.iter().find(|s| (s.t - t).abs() < 1e-9)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::artifact::to_json("flow_trace", self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = crate::artifact::from_json("flow_trace", text)?;
        if t.states.windows(2).any(|w| (w[1].t - w[0].t).abs() <= 0.0) {
            return Err(Error::Format("trace times must be strictly monotone".into()));
        }
        for s in &t.states {
            s.validate()?;
        }
        Ok(t)
    }
}

pub const HOLDER_EXPONENT: f64 = 0.4;

/// Flows `g` through the output times (all of one sign, increasing in
/// magnitude) using windows of at most `window`.
pub fn flow_l(g: &WaveState, outputs: &[f64], window: f64, opts: &PicardOptions) -> FlowTrace {
    let backward = outputs.iter().any(|&t| t < 0.0);
    let start = if backward { g.conj() } else { g.clone() };
    let mut trace = FlowTrace {
        length: g.length,
        states: vec![g.clone()],
        windows: Vec::new(),
        status: Verdict::Pass,
        message: None,
    };
    if backward && outputs.iter().any(|&t| t > 0.0) {
        trace.status = Verdict::Fail;
        trace.message = Some("output times must share one sign".into());
        return trace;
    }
    let mut state = start;
    let mut t = 0.0;
    for &target in outputs {
        let target = target.abs();
        while target - t > 1e-12 {
            let want = (target - t).min(window);
            match picard_solve(&state.re, &state.im, state.length, want, opts) {
                Ok(sol) => {
                    let m = sol.history.len() - 1;
                    let mut next = reconstruct_w(&sol, &state.re, &state.im, state.length, m);
                    t = if (target - t - sol.window).abs() < 1e-12 { target } else { t + sol.window };
                    next.t = t;
                    trace.windows.push(WindowDiagnostics {
                        t_start: t - sol.window,
                        t_end: t,
                        iterations: sol.iterations,
                        ratios: sol.ratios.clone(),
                        residual: sol.residual,
                        shrinks: sol.shrinks,
                        holder_norm: holder_norm(&next.re, &next.im, next.spacing(), HOLDER_EXPONENT),
                        boundary_residual: next.boundary_residual(),
                    });
                    state = next;
                }
                Err(e) => {
                    trace.status = Verdict::Fail;
                    trace.message = Some(format!("window starting at t = {t}: {e}"));
                    return trace;
                }
            }
        }
        let mut out = if backward { state.conj() } else { state.clone() };
        out.t = if backward { -t } else { t };
        if target > 0.0 {
            trace.states.push(out);
        }
    }
    trace
}

/// Discrete `C^s` norm `sup |w| + sup |w_i − w_j| / |r_i − r_j|^s`; exact
/// double maximum up to 4097 nodes, pairs at all lags up to 64 and dyadic
/// lags beyond above that.
pub fn holder_norm(re: &[f64], im: &[f64], h: f64, s: f64) -> f64 {
    let n = re.len();
    let sup = re.iter().zip(im).fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)));
    let lags: Vec<usize> = if n <= 4097 {
        (1..n).collect()
    } else {
        (1..=64).chain((7..).map(|e| 1usize << e).take_while(|&l| l < n)).collect()
    };
    let semi = lags
        .iter()
        .map(|&m| {
            let d = (m as f64 * h).powf(s);
            (0..n - m).map(|i| (re[i + m] - re[i]).hypot(im[i + m] - im[i])).fold(0.0, f64::max) / d
        })
        .fold(0.0, f64::max);
    sup + semi
}

/// `Ψ_λ`: identity on `[0, λ]`, linear down to zero on `[λ, λ+1]`, zero beyond.
pub fn cutoff_linear(values: &[f64], nodes: &[f64], lambda: f64) -> Vec<f64> {
    values
        .iter()
        .zip(nodes)
        .map(|(&v, &r)| {
            let c = if r <= lambda {
                1.0
            } else if r >= lambda + 1.0 {
                0.0
            } else {
                lambda + 1.0 - r
            };
            c * v
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsopReport {
    /// Largest change of `v` on `[0, R]` over all time steps, with the
    /// velocity entering through the d'Alembert route.
    pub deviation_dalembert: f64,
    /// Same with the velocity converted to `Im w` and propagated spectrally.
    pub deviation_mixed: f64,
    /// Largest change of `∂_t v = |∂_r| Im w` on `[0, R]` at time `t` (mixed route).
    pub deviation_velocity: f64,
    pub iterations: usize,
}

fn window_deviation(a: &[Vec<f64>], b: &[Vec<f64>], inside: usize) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x[..inside].iter().zip(&y[..inside]).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Flows physical data `(v, ∂_t v)` and a copy perturbed by `(δv, δv_t)`
/// (supported in `support`) for time `t > 0` in one window, and compares `v`
/// on `[0, window_r]`.
#[allow(clippy::too_many_arguments)]
pub fn fsop_check(
    length: f64,
    v: &[f64],
    v_t: &[f64],
    delta_v: &[f64],
    delta_vt: &[f64],
    support: (f64, f64),
    window_r: f64,
    t: f64,
    opts: &PicardOptions,
) -> Result<FsopReport> {
    let n = v.len() - 1;
    let h = length / n as f64;
    let nodes = crate::measures::uniform_nodes(length, n);
    if !(t > 0.0) || support.0 <= window_r + t + 2.0 * h {
        return Err(Error::Domain("perturbation lies inside the domain of dependence of the window".into()));
    }
    let outside = nodes
        .iter()
        .zip(delta_v.iter().zip(delta_vt))
        .any(|(&r, (a, b))| (r < support.0 || r > support.1) && (*a != 0.0 || *b != 0.0));
    if outside {
        return Err(Error::Domain("perturbation is not supported in the given interval".into()));
    }
    let add = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
    let (pv, pvt) = (add(v, delta_v), add(v_t, delta_vt));
    let sine = SineTransform::new(n, length);
    let (g2, pg2) = (sine.multiply(v_t, |k| 1.0 / k), sine.multiply(&pvt, |k| 1.0 / k));
    let inside = nodes.iter().take_while(|&&r| r <= window_r + 1e-12).count();

    // both members of a pair run the same window and iteration count
    let pair = |f: &[f64], s: &[f64], pf: &[f64], ps: &[f64], route: FreeRoute| -> Result<(PicardSolution, PicardSolution)> {
        let a = picard_solve_with(f, s, route, length, t, opts)?;
        let b = picard_solve_with(pf, ps, route, length, t, opts)?;
        let fixed = PicardOptions {
            fixed_iterations: Some(a.iterations.max(b.iterations)),
            ..*opts
        };
        let w = a.window.min(b.window);
        Ok((
            picard_solve_with(f, s, route, length, w, &fixed)?,
            picard_solve_with(pf, ps, route, length, w, &fixed)?,
        ))
    };
    let (da, db) = pair(v, v_t, &pv, &pvt, FreeRoute::Dalembert)?;
    let (ma, mb) = pair(v, &g2, &pv, &pg2, FreeRoute::Spectral)?;
    let m = ma.history.len() - 1;
    let wa = reconstruct_w(&ma, v, &g2, length, m).velocity();
    let wb = reconstruct_w(&mb, &pv, &pg2, length, m).velocity();
    Ok(FsopReport {
        deviation_dalembert: window_deviation(&da.history, &db.history, inside),
        deviation_mixed: window_deviation(&ma.history, &mb.history, inside),
        deviation_velocity: (0..inside).map(|j| (wa[j] - wb[j]).abs()).fold(0.0, f64::max),
        iterations: da.iterations,
    })
}

/// Physical data `(v, ∂_t v)` on `[0, window_r]` after a half-line flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFlow {
    pub length: f64,
    pub r_nodes: Vec<f64>,
    pub v: Vec<f64>,
    pub v_t: Vec<f64>,
    pub iterations: usize,
}

/// Flows a half-line datum given on `[0, R']` for time `t` (`|t| ≤ 1`, one
/// window) and keeps `[0, window_r]`.
///
/// The datum is turned into physical data once: `v = Ψ Re g` and
/// `∂_t v = Ψ' |∂_r| Ψ Im g`, with `|∂_r|` taken on `[0, 2(R' + |t|)]` and the
/// cut-offs `Ψ = Ψ_{R'−1}`, `Ψ' = Ψ_{R'−2}`. These are zero-extended to
/// `L = 2(R' + |t|) + extra` and flowed through the d'Alembert route, so the
/// window does not depend on `extra`. The returned velocity is a one-sided
/// difference of the `v` history.
pub fn flow_inf(path: &PathSample, t: f64, window_r: f64, extra: f64, opts: &PicardOptions) -> Result<WindowFlow> {
    let r_prime = *path.r_nodes.last().unwrap();
    if r_prime < window_r + 2.0 * t.abs() + 2.0 {
        return Err(Error::Domain(format!("need R' ≥ R + 2|t| + 2 (R' = {r_prime})")));
    }
    if t.abs() > 1.0 || t == 0.0 {
        return Err(Error::Domain("half-line flows run in a single window 0 < |t| ≤ 1".into()));
    }
    let n0 = path.r_nodes.len() - 1;
    let h = r_prime / n0 as f64;
    if path.r_nodes.iter().enumerate().any(|(j, &r)| (r - j as f64 * h).abs() > 1e-9 * r_prime) {
        return Err(Error::Domain("half-line datum must sit on a uniform grid".into()));
    }
    let base = 2.0 * (r_prime + t.abs());
    let to_nodes = |len: f64| -> Result<usize> {
        let n = (len / h).round() as usize;
        if ((n as f64) * h - len).abs() > 1e-9 * len {
            return Err(Error::Domain("embedding length is not a multiple of the path spacing".into()));
        }
        Ok(n)
    };
    let nb = to_nodes(base)?;
    let n = to_nodes(base + extra)?;
    let zero = vec![0.0; n0 + 1];
    let cut_re = cutoff_linear(&path.re, &path.r_nodes, r_prime - 1.0);
    let cut_im = cutoff_linear(path.im.as_deref().unwrap_or(&zero), &path.r_nodes, r_prime - 1.0);
    let mut im_base = vec![0.0; nb + 1];
    im_base[..=n0].copy_from_slice(&cut_im);
    let vel_base = SineTransform::new(nb, base).multiply(&im_base, |k| k);
    let base_nodes = crate::measures::uniform_nodes(base, nb);
    let vel_cut = cutoff_linear(&vel_base, &base_nodes, r_prime - 2.0);
    let sign = t.signum();
    let mut v0 = vec![0.0; n + 1];
    let mut vt0 = vec![0.0; n + 1];
    v0[..=n0].copy_from_slice(&cut_re);
    for j in 0..=n0 {
        vt0[j] = sign * vel_cut[j];
    }
    let sol = picard_solve_with(&v0, &vt0, FreeRoute::Dalembert, base + extra, t.abs(), opts)?;
    if (sol.window - t.abs()).abs() > 1e-12 {
        return Err(Error::Solver("half-line window had to shrink".into()));
    }
    let nodes = crate::measures::uniform_nodes(base + extra, n);
    let inside = nodes.iter().take_while(|&&r| r <= window_r + 1e-12).count();
    let hist = &sol.history;
    let m = hist.len() - 1;
    let v_t: Vec<f64> = (0..inside)
        .map(|j| {
            let d = if m >= 2 {
                (3.0 * hist[m][j] - 4.0 * hist[m - 1][j] + hist[m - 2][j]) / (2.0 * sol.k)
            } else {
                (hist[m][j] - hist[m - 1][j]) / sol.k
            };
            sign * d
        })
        .collect();
    Ok(WindowFlow {
        length: base + extra,
        r_nodes: nodes[..inside].to_vec(),
        v: hist[m][..inside].to_vec(),
        v_t,
        iterations: sol.iterations,
    })
}

/// `∫ ¼ u⁴ + ½ |∇u|² + ½ u_t²` in the radial reduction `v = r u`:
/// `∫₀ᴸ ½ v_r² + ½ v_t² + ¼ v⁴ / r² dr`, with the gradient term by Parseval.
pub fn hamiltonian(u: &[f64], u_t: &[f64], length: f64) -> f64 {
    let n = u.len() - 1;
    let h = length / n as f64;
    let v: Vec<f64> = u.iter().enumerate().map(|(j, x)| j as f64 * h * x).collect();
    let vt: Vec<f64> = u_t.iter().enumerate().map(|(j, x)| j as f64 * h * x).collect();
    energy_of(&v, &vt, length)
}

fn energy_of(v: &[f64], vt: &[f64], length: f64) -> f64 {
    let n = v.len() - 1;
    let h = length / n as f64;
    let sine = SineTransform::new(n, length);
    let grad: f64 = sine.forward(v).iter().enumerate().map(|(i, c)| (sine.wavenumber(i + 1) * c).powi(2)).sum();
    let kin: f64 = vt[1..n].iter().map(|x| x * x).sum::<f64>() * h;
    let quartic: Vec<f64> = nonlinearity(v, h).iter().zip(v).map(|(a, b)| 0.25 * a * b).collect();
    0.5 * grad + 0.5 * kin + crate::grid::trapezoid(&quartic, h)
}

/// Hamiltonian of a state, with `∂_t v = |∂_r| Im w`.
pub fn hamiltonian_state(state: &WaveState) -> f64 {
    energy_of(&state.re, &state.velocity(), state.length)
}

/// `|∂_r|⁻¹ f` as the convolution of the odd periodic extension with
/// `(1/L) h`, `h(ρ) = Σ (nπ/L)⁻¹ cos(nπρ/L) = −(L/π) log|2 sin(πρ/2L)|`.
/// The log singularity is removed by subtracting `f(r)` (the kernel has mean zero).
pub fn inverse_abs_derivative_convolution(f: &[f64], length: f64) -> Vec<f64> {
    let n = f.len() - 1;
    let h = length / n as f64;
    let kernel: Vec<f64> = (0..2 * n)
        .map(|q| {
            if q == 0 {
                0.0
            } else {
                let rho = q as f64 * h;
                -(length / std::f64::consts::PI) * (2.0 * (std::f64::consts::PI * rho / (2.0 * length)).sin()).abs().ln()
            }
        })
        .collect();
    let mut out: Vec<f64> = (0..=n as i64)
        .map(|j| {
            let fr = f[j as usize];
            let s: f64 = (0..2 * n as i64)
                .map(|q| (odd_node(f, j - q) - fr) * kernel[q as usize])
                .sum();
            s * h / length
        })
        .collect();
    out[0] = 0.0;
    out[n] = 0.0;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_window_matches_polynomial_integral() {
        let n = 64;
        let length = 4.0;
        let h = length / n as f64;
        let g: Vec<f64> = (0..=n).map(|j| (j as f64 * h).powi(3)).collect();
        let p = Primitive::new(&g, h);
        // ∫_{1}^{2} r³ dr = 15/4, away from the walls
        let j = (1.5 / h) as i64;
        let got = p.half_window(j, 0.5) * 2.0;
        assert!((got - 3.75).abs() < 1e-12, "{got}");
    }

    #[test]
    fn odd_extension_reflects() {
        let f = vec![0.0, 1.0, 2.0, 0.0];
        assert_eq!(odd_node(&f, -1), -1.0);
        assert_eq!(odd_node(&f, 4), -2.0);
        assert_eq!(odd_node(&f, 6), 0.0);
    }
}
