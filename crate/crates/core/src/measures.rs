//! Path measures on `[0, L]` and `[0, R]`: Brownian bridge, Wiener measure and
//! the quartic Gibbs measures, with two independent samplers for the Gibbs
//! case (bridge importance weights and an h-transformed Markov chain).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::endpoint_row;
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::kernel::{heat_kernel, propagate_row, solve_kernel_with, PotentialSpec, SolverOptions, TransitionMatrix};
use crate::rng::{self, tag, SampleRng};
use crate::sine::SineTransform;
use crate::stats::{effective_sample_size, weighted_mean_with_se, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureTag {
    /// Real bridge component of the free measure.
    MuL1,
    /// Imaginary bridge component of the free measure.
    MuL2,
    /// Quartic Gibbs measure on real paths.
    NuL1,
    /// Imaginary component of the finite-volume Gibbs measure (a bridge).
    NuL2,
    /// Product of `NuL1` and a bridge.
    NuL,
    Wiener,
    NuInf1,
    /// Product of `NuInf1` and Wiener measure.
    NuInf,
}

impl MeasureTag {
    pub fn is_complex(&self) -> bool {
        matches!(self, MeasureTag::NuL | MeasureTag::NuInf)
    }

    pub fn is_finite_volume(&self) -> bool {
        !matches!(self, MeasureTag::Wiener | MeasureTag::NuInf1 | MeasureTag::NuInf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub tag: MeasureTag,
    /// Volume `L` for finite-volume tags.
    pub length: Option<f64>,
    /// Sampling horizon `R` for infinite-volume tags.
    pub restriction: Option<f64>,
}

impl MeasureSpec {
    pub fn finite(tag: MeasureTag, length: f64) -> Self {
        Self { tag, length: Some(length), restriction: None }
    }

    pub fn infinite(tag: MeasureTag, restriction: f64) -> Self {
        Self { tag, length: None, restriction: Some(restriction) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tag.is_finite_volume() {
            match self.length {
                Some(l) if l > 0.0 && l.is_finite() => Ok(()),
                _ => Err(Error::Domain(format!("{:?} needs a positive length", self.tag))),
            }
        } else {
            match self.restriction {
                Some(r) if r > 0.0 && r.is_finite() => Ok(()),
                _ => Err(Error::Domain(format!("{:?} needs a positive restriction length", self.tag))),
            }
        }
    }

    /// Right end of the sampling interval.
    pub fn horizon(&self) -> f64 {
        self.length.or(self.restriction).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub r_nodes: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Option<Vec<f64>>,
    pub weight: f64,
    pub seed: u64,
    pub index: u64,
    pub measure: MeasureSpec,
}

impl PathSample {
    pub fn validate(&self) -> Result<()> {
        let n = self.r_nodes.len();
        if n < 2 || self.re.len() != n || self.im.as_ref().is_some_and(|v| v.len() != n) {
            return Err(Error::Format("path arrays have inconsistent lengths".into()));
        }
        if self.r_nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Format("path nodes must increase".into()));
        }
        if !(self.weight > 0.0) || !self.weight.is_finite() {
            return Err(Error::Format(format!("weight {} is not positive", self.weight)));
        }
        let zero_at = |i: usize| self.re[i] == 0.0 && self.im.as_ref().is_none_or(|v| v[i] == 0.0);
        if self.r_nodes[0] == 0.0 && !zero_at(0) {
            return Err(Error::Format("path does not vanish at r = 0".into()));
        }
        if let Some(l) = self.measure.length {
            if (self.r_nodes[n - 1] - l).abs() < 1e-12 && !zero_at(n - 1) {
                return Err(Error::Format("bridge path does not vanish at r = L".into()));
            }
        }
        Ok(())
    }

    /// Value of the real part at `r` by linear interpolation.
    pub fn re_at(&self, r: f64) -> f64 {
        interp_nodes(&self.r_nodes, &self.re, r)
    }
}

fn interp_nodes(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v < x);
    if k == 0 {
        return ys[0];
    }
    if k >= xs.len() {
        return ys[xs.len() - 1];
    }
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] * (1.0 - t) + ys[k] * t
}

/// Uniform nodes `j L / n`, `j = 0..=n`.
pub fn uniform_nodes(length: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|j| if j == n { length } else { length * j as f64 / n as f64 }).collect()
}

fn uniform_intervals(nodes: &[f64], length: f64) -> Option<usize> {
    let n = nodes.len().checked_sub(1)?;
    if n < 2 || nodes[0] != 0.0 || (nodes[n] - length).abs() > 1e-12 * length {
        return None;
    }
    let h = length / n as f64;
    nodes
        .iter()
        .enumerate()
        .all(|(j, &r)| (r - j as f64 * h).abs() <= 1e-9 * length)
        .then_some(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BridgeMethod {
    SineSeries { n_modes: usize },
    Sequential,
}

impl Default for BridgeMethod {
    fn default() -> Self {
        BridgeMethod::SineSeries { n_modes: 4096 }
    }
}

fn check_nodes(r_nodes: &[f64], hi: f64) -> Result<()> {
    if r_nodes.is_empty() || r_nodes[0] < 0.0 || r_nodes[r_nodes.len() - 1] > hi * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("nodes must lie in [0, {hi}]")));
    }
    if r_nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("nodes must increase".into()));
    }
    Ok(())
}

/// Bridge values on `r_nodes` drawn from `rng`.
pub fn bridge_values(length: f64, r_nodes: &[f64], method: BridgeMethod, rng: &mut SampleRng) -> Vec<f64> {
    match method {
        BridgeMethod::Sequential => {
            let mut out = Vec::with_capacity(r_nodes.len());
            let (mut r0, mut x0) = (0.0, 0.0);
            for &r in r_nodes {
                let x = if r <= 0.0 || r >= length {
                    0.0
                } else {
                    let rest = length - r0;
                    let mean = x0 * (length - r) / rest;
                    let var = (r - r0) * (length - r) / rest;
                    mean + var.sqrt() * rng::normal(rng)
                };
                out.push(x);
                r0 = r;
                x0 = x;
            }
            out
        }
        BridgeMethod::SineSeries { n_modes } => {
            let a = rng::normals(rng, n_modes);
            let intervals = 2 * n_modes;
            let h = length / intervals as f64;
            let on_fft_grid = r_nodes
                .iter()
                .all(|&r| ((r / h).round() - r / h).abs() < 1e-9 && r <= length * (1.0 + 1e-12));
            if on_fft_grid {
                let sine = SineTransform::new(intervals, length);
                let mut c = vec![0.0; intervals - 1];
                for (m, &am) in a.iter().enumerate() {
                    c[m] = am / sine.wavenumber(m + 1);
                }
                let vals = sine.inverse(&c);
                r_nodes.iter().map(|&r| vals[(r / h).round() as usize]).collect()
            } else {
                let norm = (2.0 / length).sqrt();
                r_nodes
                    .iter()
                    .map(|&r| {
                        a.iter()
                            .enumerate()
                            .map(|(m, am)| {
                                let k = (m + 1) as f64 * PI / length;
                                am / k * norm * (k * r).sin()
                            })
                            .sum()
                    })
                    .collect()
            }
        }
    }
}

/// Brownian motion values on `r_nodes`.
pub fn wiener_values(r_nodes: &[f64], rng: &mut SampleRng) -> Vec<f64> {
    let (mut r0, mut x) = (0.0, 0.0);
    r_nodes
        .iter()
        .map(|&r| {
            if r > r0 {
                x += (r - r0).sqrt() * rng::normal(rng);
            }
            r0 = r;
            x
        })
        .collect()
}

pub fn sample_bridge(length: f64, r_nodes: &[f64], seed: u64, index: u64, method: BridgeMethod) -> Result<PathSample> {
    check_nodes(r_nodes, length)?;
    let mut g = rng::stream(seed, index, tag::BRIDGE);
    Ok(PathSample {
        r_nodes: r_nodes.to_vec(),
        re: bridge_values(length, r_nodes, method, &mut g),
        im: None,
        weight: 1.0,
        seed,
        index,
        measure: MeasureSpec::finite(MeasureTag::MuL1, length),
    })
}

pub fn sample_wiener(r_nodes: &[f64], seed: u64, index: u64) -> Result<PathSample> {
    check_nodes(r_nodes, f64::INFINITY)?;
    let mut g = rng::stream(seed, index, tag::WIENER);
    Ok(PathSample {
        r_nodes: r_nodes.to_vec(),
        re: wiener_values(r_nodes, &mut g),
        im: None,
        weight: 1.0,
        seed,
        index,
        measure: MeasureSpec::infinite(MeasureTag::Wiener, *r_nodes.last().unwrap()),
    })
}

/// `∫ ¼ f⁴ / r² dr` over the nodes; the first cell uses the limit 0 at `r = 0`.
pub fn gibbs_energy(r_nodes: &[f64], values: &[f64]) -> Result<f64> {
    if r_nodes[0] != 0.0 || values[0] != 0.0 {
        return Err(Error::Domain("Gibbs weight needs a path starting at f(0) = 0".into()));
    }
    let g: Vec<f64> = r_nodes
        .iter()
        .zip(values)
        .map(|(&r, &f)| if r == 0.0 { 0.0 } else { 0.25 * f.powi(4) / (r * r) })
        .collect();
    Ok(crate::grid::trapezoid_nonuniform(r_nodes, &g))
}

/// `exp(−¼ ∫ (Re f)⁴ r⁻² dr)`.
pub fn gibbs_weight(path: &PathSample) -> Result<f64> {
    Ok((-gibbs_energy(&path.r_nodes, &path.re)?).exp())
}

/// Inverse-CDF table for one source node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CdfColumn {
    start: usize,
    cdf: Vec<f64>,
}

impl CdfColumn {
    fn new(start: usize, density: impl Iterator<Item = f64>, h: f64) -> Self {
        let mut cdf = vec![0.0];
        let mut prev: Option<f64> = None;
        for d in density {
            let d = d.max(0.0);
            if let Some(p) = prev {
                cdf.push(cdf.last().unwrap() + 0.5 * h * (p + d));
            }
            prev = Some(d);
        }
        Self { start, cdf }
    }

    fn mass(&self) -> f64 {
        *self.cdf.last().unwrap()
    }

    fn invert(&self, grid: &Grid1D, u: f64) -> f64 {
        let t = u * self.mass();
        let k = self.cdf.partition_point(|&c| c <= t).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let frac = if c1 > c0 { ((t - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.5 };
        grid.node(self.start + k - 1) + frac * grid.spacing()
    }
}

/// End condition of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Terminal {
    /// Pinned to 0 at the last time.
    Bridge,
    /// Free end weighted by `h(r_last, ·)` on the chain grid.
    Weight(Vec<f64>),
}

/// Transition data of the quartic kernel between consecutive chain times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainKernels {
    pub times: Vec<f64>,
    pub grid: Grid1D,
    /// `φ(r₁, ·; 0, 0)`.
    pub first_row: Vec<f64>,
    /// `matrices[j]` maps time `times[j+1]` to `times[j+2]`.
    pub matrices: Vec<TransitionMatrix>,
}

impl ChainKernels {
    /// `times` starts with 0 and increases.
    pub fn compute(times: &[f64], grid: &Grid1D, opts: &SolverOptions) -> Result<Self> {
        if times.len() < 3 || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("chain times must start at 0, increase, and have at least 3 entries".into()));
        }
        let field = solve_kernel_with(PotentialSpec::Quartic, (0.0, 0.0), times[1], *grid, 1, &[], opts)?;
        let first_row = field.values.last().unwrap().clone();
        let matrices = times[1..]
            .windows(2)
            .map(|w| TransitionMatrix::compute(PotentialSpec::Quartic, w[0], w[1], grid, opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { times: times.to_vec(), grid: *grid, first_row, matrices })
    }

    /// `φ(r_j, ·; 0, 0)` on the grid for `j ≥ 1`, built from the stored matrices.
    pub fn forward_density(&self, j: usize) -> Vec<f64> {
        let mut q = self.first_row.clone();
        for m in &self.matrices[..j - 1] {
            q = m.push_forward(&q);
        }
        q
    }
}

/// Normalized CDF at the grid nodes of a nonnegative nodal density (trapezoid).
pub fn nodal_cdf(density: &[f64], h: f64) -> Vec<f64> {
    let col = CdfColumn::new(0, density.iter().copied(), h);
    let m = col.mass();
    col.cdf.iter().map(|c| c / m).collect()
}

/// Sequential sampler of the finite-dimensional law
/// `Π φ(r_j, x_j; r_{j−1}, x_{j−1}) · h(r_J, x_J)` on the chain times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSampler {
    pub times: Vec<f64>,
    pub grid: Grid1D,
    pub terminal_is_bridge: bool,
    first: CdfColumn,
    steps: Vec<Vec<CdfColumn>>,
    /// `h(r_j, ·)` for `j = 1..`, as used by the sampler.
    pub h: Vec<Vec<f64>>,
}

impl ChainSampler {
    pub fn new(kernels: &ChainKernels, terminal: &Terminal) -> Result<Self> {
        let grid = kernels.grid;
        let n = grid.n;
        let j_last = kernels.times.len() - 1;
        // h[j] is h(times[j+1], ·)
        let mut h: Vec<Vec<f64>> = vec![Vec::new(); j_last];
        let sampled = match terminal {
            Terminal::Bridge => {
                if grid.node(grid.nearest(0.0)).abs() > 1e-12 {
                    return Err(Error::Grid("bridge chain needs 0 as a grid node".into()));
                }
                let i0 = grid.nearest(0.0);
                let last = kernels.matrices.last().unwrap();
                h[j_last - 2] = last.columns.iter().map(|c| c.get(i0)).collect();
                j_last - 1
            }
            Terminal::Weight(w) => {
                if w.len() != n {
                    return Err(Error::Grid("terminal weight does not match the chain grid".into()));
                }
                h[j_last - 1] = w.clone();
                j_last
            }
        };
        for j in (0..sampled - 1).rev() {
            h[j] = kernels.matrices[j].pull_back(&h[j + 1]);
        }
        h.truncate(sampled);
        let hx = grid.spacing();
        let first = CdfColumn::new(0, kernels.first_row.iter().zip(&h[0]).map(|(a, b)| a * b), hx);
        if !(first.mass() > 0.0) {
            return Err(Error::Check("chain normalization vanished".into()));
        }
        let steps = (1..sampled)
            .map(|j| {
                let m = &kernels.matrices[j - 1];
                let hj = &h[j];
                m.columns
                    .iter()
                    .map(|c| CdfColumn::new(c.start, c.values.iter().zip(&hj[c.start..c.end()]).map(|(a, b)| a * b), hx))
                    .collect()
            })
            .collect();
        Ok(Self {
            times: kernels.times.clone(),
            grid,
            terminal_is_bridge: matches!(terminal, Terminal::Bridge),
            first,
            steps,
            h,
        })
    }

    /// Density of the chain value at `times[j]`, `1 ≤ j < times.len()` (excluding a pinned end),
    /// normalized on the grid.
    pub fn marginal_density(&self, kernels: &ChainKernels, j: usize) -> Result<Vec<f64>> {
        if j == 0 || j > self.h.len() {
            return Err(Error::Domain(format!("no free chain value at index {j}")));
        }
        let q = kernels.forward_density(j);
        let mut p: Vec<f64> = q.iter().zip(&self.h[j - 1]).map(|(a, b)| (a * b).max(0.0)).collect();
        let mass = self.grid.integrate(&p);
        p.iter_mut().for_each(|x| *x /= mass);
        Ok(p)
    }

    /// One path on the chain times (value 0 at time 0, and at the end for a bridge).
    pub fn sample(&self, rng: &mut SampleRng) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.times.len());
        out.push(0.0);
        let mut x = self.first.invert(&self.grid, rng::uniform(rng));
        out.push(x);
        for cols in &self.steps {
            let (i, a) = self.grid.locate(x);
            let (m0, m1) = (cols[i].mass() * (1.0 - a), cols[i + 1].mass() * a);
            let u = rng::uniform(rng);
            let v = rng::uniform(rng);
            let col = if m0 + m1 <= 0.0 {
                &cols[self.grid.nearest(x)]
            } else if u * (m0 + m1) < m0 {
                &cols[i]
            } else {
                &cols[i + 1]
            };
            x = col.invert(&self.grid, v);
            out.push(x);
        }
        if self.terminal_is_bridge {
            out.push(0.0);
        }
        out
    }
}

/// Sampler for the finite-volume Gibbs measure with `L = times.last()`.
pub fn nu_l1_chain(times: &[f64], grid: &Grid1D, opts: &SolverOptions) -> Result<ChainSampler> {
    ChainSampler::new(&ChainKernels::compute(times, grid, opts)?, &Terminal::Bridge)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NuMethod {
    Importance,
    Markov,
}

pub const ESS_WARN_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub measure: MeasureSpec,
    pub samples: Vec<PathSample>,
    pub ess: f64,
    pub status: Verdict,
}

impl Ensemble {
    fn from_samples(measure: MeasureSpec, samples: Vec<PathSample>) -> Self {
        let ws: Vec<f64> = samples.iter().map(|s| s.weight).collect();
        let ess = effective_sample_size(&ws).min(samples.len() as f64);
        let status = if ess < ESS_WARN_FRACTION * samples.len() as f64 { Verdict::Warn } else { Verdict::Pass };
        Self { measure, samples, ess, status }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.weight).collect()
    }

    /// Real parts at node `j` of every sample.
    pub fn re_column(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.re[j]).collect()
    }

    pub fn im_column(&self, j: usize) -> Option<Vec<f64>> {
        self.samples.iter().map(|s| s.im.as_ref().map(|v| v[j])).collect()
    }

    /// Index of the node closest to `r`.
    pub fn node_index(&self, r: f64) -> usize {
        let nodes = &self.samples[0].r_nodes;
        (0..nodes.len())
            .min_by(|&a, &b| (nodes[a] - r).abs().total_cmp(&(nodes[b] - r).abs()))
            .unwrap()
    }

    /// Weighted mean and standard error of `f` applied to every sample.
    pub fn mean_of<F: Fn(&PathSample) -> f64 + Sync + Send>(&self, f: F) -> (f64, f64) {
        let xs: Vec<f64> = self.samples.par_iter().map(f).collect();
        weighted_mean_with_se(&xs, &self.weights())
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.samples.first().ok_or_else(|| Error::Format("empty ensemble".into()))?;
        for s in &self.samples {
            s.validate()?;
            if s.measure != self.measure || s.r_nodes != first.r_nodes {
                return Err(Error::Format("ensemble mixes measures or node sets".into()));
            }
        }
        if self.ess > self.samples.len() as f64 * (1.0 + 1e-12) {
            return Err(Error::Format("effective sample size exceeds N".into()));
        }
        Ok(())
    }

    /// One record per line: index, seed, weight, real values, imaginary values.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let nodes = self.samples.first().map(|s| s.r_nodes.clone()).unwrap_or_default();
        out.push_str("# r_nodes");
        for r in &nodes {
            out.push_str(&format!(",{r:?}"));
        }
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!("{},{},{:?}", s.index, s.seed, s.weight));
            for v in s.re.iter().chain(s.im.iter().flatten()) {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(measure: MeasureSpec, text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("ensemble table: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let nodes: Vec<f64> = header
            .strip_prefix("# r_nodes")
            .ok_or_else(|| bad("missing node header"))?
            .split(',')
            .skip(1)
            .map(|t| t.parse::<f64>().map_err(|_| bad("node value")))
            .collect::<Result<_>>()?;
        let n = nodes.len();
        let mut samples = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 + n && f.len() != 3 + 2 * n {
                return Err(bad("record length"));
            }
            let num = |t: &str| t.parse::<f64>().map_err(|_| bad("number"));
            let vals: Vec<f64> = f[3..].iter().map(|t| num(t)).collect::<Result<_>>()?;
            samples.push(PathSample {
                r_nodes: nodes.clone(),
                re: vals[..n].to_vec(),
                im: (vals.len() == 2 * n).then(|| vals[n..].to_vec()),
                weight: num(f[2])?,
                seed: f[1].parse().map_err(|_| bad("seed"))?,
                index: f[0].parse().map_err(|_| bad("index"))?,
                measure,
            });
        }
        let e = Self::from_samples(measure, samples);
        e.validate()?;
        Ok(e)
    }

    /// Per-node weighted means and variances of the real part.
    pub fn summary(&self) -> EnsembleSummary {
        let ws = self.weights();
        let nodes = self.samples.first().map(|s| s.r_nodes.clone()).unwrap_or_default();
        let (mut mean, mut variance) = (Vec::new(), Vec::new());
        for j in 0..nodes.len() {
            let col = self.re_column(j);
            let (m, _) = weighted_mean_with_se(&col, &ws);
            let sq: Vec<f64> = col.iter().map(|x| (x - m).powi(2)).collect();
            mean.push(m);
            variance.push(weighted_mean_with_se(&sq, &ws).0);
        }
        EnsembleSummary {
            measure: self.measure,
            n: self.samples.len(),
            ess: self.ess,
            r_nodes: nodes,
            mean,
            variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub measure: MeasureSpec,
    pub n: usize,
    pub ess: f64,
    pub r_nodes: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// `N` paths of the quartic Gibbs measure on `[0, L]`. The Markov method
/// samples on `chain.times` and ignores `r_nodes`.
pub fn sample_nu_l1(
    length: f64,
    r_nodes: &[f64],
    n: usize,
    seed: u64,
    method: NuMethod,
    chain: Option<&ChainSampler>,
) -> Result<Ensemble> {
    let spec = MeasureSpec::finite(MeasureTag::NuL1, length);
    spec.validate()?;
    let samples = match method {
        NuMethod::Importance => {
            check_nodes(r_nodes, length)?;
            (0..n as u64)
                .into_par_iter()
                .map(|i| {
                    let mut g = rng::stream(seed, i, tag::REAL);
                    let re = bridge_values(length, r_nodes, BridgeMethod::Sequential, &mut g);
                    let weight = (-gibbs_energy(r_nodes, &re)?).exp();
                    Ok(PathSample {
                        r_nodes: r_nodes.to_vec(),
                        re,
                        im: None,
                        weight,
                        seed,
                        index: i,
                        measure: spec,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        NuMethod::Markov => {
            let chain = chain_for(chain, length, true)?;
            chain_samples(chain, spec, n, seed)
        }
    };
    Ok(Ensemble::from_samples(spec, samples))
}

fn chain_for(chain: Option<&ChainSampler>, horizon: f64, bridge: bool) -> Result<&ChainSampler> {
    let c = chain.ok_or_else(|| Error::Missing("transition kernels for the Markov sampler".into()))?;
    if (c.times.last().unwrap() - horizon).abs() > 1e-9 * horizon || c.terminal_is_bridge != bridge {
        return Err(Error::Missing(format!("kernels do not cover [0, {horizon}] with the required end condition")));
    }
    Ok(c)
}

fn chain_samples(chain: &ChainSampler, spec: MeasureSpec, n: usize, seed: u64) -> Vec<PathSample> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(seed, i, tag::CHAIN);
            PathSample {
                r_nodes: chain.times.clone(),
                re: chain.sample(&mut g),
                im: None,
                weight: 1.0,
                seed,
                index: i,
                measure: spec,
            }
        })
        .collect()
}

/// Dispatches to the component samplers. Gibbs components come from
/// `chain`, whose times then replace `r_nodes`.
pub fn sample_measure(
    spec: MeasureSpec,
    r_nodes: &[f64],
    n: usize,
    seed: u64,
    bridge: BridgeMethod,
    chain: Option<&ChainSampler>,
) -> Result<Ensemble> {
    spec.validate()?;
    let horizon = spec.horizon();
    use MeasureTag::*;
    let samples: Vec<PathSample> = match spec.tag {
        MuL1 | MuL2 | NuL2 | Wiener => {
            check_nodes(r_nodes, horizon)?;
            (0..n as u64)
                .into_par_iter()
                .map(|i| {
                    let stream_tag = if spec.tag == MuL1 { tag::REAL } else { tag::IMAG };
                    let mut g = rng::stream(seed, i, stream_tag);
                    let re = if spec.tag == Wiener {
                        wiener_values(r_nodes, &mut g)
                    } else {
                        bridge_values(horizon, r_nodes, bridge, &mut g)
                    };
                    PathSample {
                        r_nodes: r_nodes.to_vec(),
                        re,
                        im: None,
                        weight: 1.0,
                        seed,
                        index: i,
                        measure: spec,
                    }
                })
                .collect()
        }
        NuL1 => return sample_nu_l1(horizon, r_nodes, n, seed, NuMethod::Markov, chain).map(|e| Ensemble { measure: spec, ..e }),
        NuInf1 => chain_samples(chain_for(chain, horizon, false)?, spec, n, seed),
        NuL | NuInf => {
            let c = chain_for(chain, horizon, spec.tag == NuL)?;
            let mut s = chain_samples(c, spec, n, seed);
            s.par_iter_mut().for_each(|p| {
                let mut g = rng::stream(seed, p.index, tag::IMAG);
                p.im = Some(if spec.tag == NuL {
                    bridge_values(horizon, &p.r_nodes, bridge, &mut g)
                } else {
                    wiener_values(&p.r_nodes, &mut g)
                });
            });
            s
        }
    };
    Ok(Ensemble::from_samples(spec, samples))
}

/// `φ₀(L,0;R,x) / φ₀(L,0;0,0)`, the density of the bridge marginal at `R`
/// relative to the Wiener marginal.
pub fn rn_gaussian(x: f64, r: f64, l: f64) -> Result<f64> {
    Ok(heat_kernel(l, 0.0, r, x)? / heat_kernel(l, 0.0, 0.0, 0.0)?)
}

/// Ingredients of the Radon–Nikodym derivative of `ν_{L,1}|[0,R]` with respect
/// to `ν_{∞,1}|[0,R]`, tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnProfile {
    pub r: f64,
    pub l: f64,
    pub grid: Grid1D,
    /// `φ(L, 0; R, ·)`.
    pub endpoint: Vec<f64>,
    /// `F(R, ·)`.
    pub f: Vec<f64>,
    /// `φ(L, 0; 0, 0)`.
    pub z: f64,
}

impl RnProfile {
    /// `f` must be normalized against `φ(R, ·; 0, 0)`; `z` is then obtained by
    /// Chapman–Kolmogorov on the grid.
    pub fn quartic(r: f64, l: f64, grid: &Grid1D, f: Vec<f64>, opts: &SolverOptions) -> Result<Self> {
        if l <= r {
            return Err(Error::Domain("need L > R".into()));
        }
        let endpoint = endpoint_row(l, r, grid, opts)?;
        let field = solve_kernel_with(PotentialSpec::Quartic, (0.0, 0.0), r, *grid, 1, &[], opts)?;
        let prod: Vec<f64> = endpoint.iter().zip(field.values.last().unwrap()).map(|(a, b)| a * b).collect();
        let z = grid.integrate(&prod);
        Ok(Self { r, l, grid: *grid, endpoint, f, z })
    }

    /// `φ(L,0;R,x) / (F(R,x) φ(L,0;0,0))`.
    pub fn value(&self, x: f64) -> Result<f64> {
        let fx = self.grid.interp(&self.f, x);
        if !(fx > 0.0) {
            return Err(Error::Check(format!("F(R, {x}) = {fx} is not positive")));
        }
        Ok(self.grid.interp(&self.endpoint, x) / (fx * self.z))
    }
}

/// Radon–Nikodym derivative evaluated at `f(R)`.
pub fn rn_derivative(path: &PathSample, profile: &RnProfile) -> Result<f64> {
    if path.r_nodes.last().unwrap() + 1e-12 < profile.r {
        return Err(Error::Domain("path does not reach R".into()));
    }
    profile.value(path.re_at(profile.r))
}

/// Slope of `log max_i |f(i+m) − f(i)|` against `log(m h)` over the lags.
pub fn holder_exponent_estimate(values: &[f64], spacing: f64, lags: &[usize]) -> Result<f64> {
    if lags.len() < 3 || lags.iter().any(|&m| m == 0 || m >= values.len()) {
        return Err(Error::Domain("need at least three lags inside the grid".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &m in lags {
        let sup = values.windows(m + 1).map(|w| (w[m] - w[0]).abs()).fold(0.0, f64::max);
        if sup <= 0.0 {
            return Err(Error::Check("constant path: exponent undefined".into()));
        }
        xs.push((m as f64 * spacing).ln());
        ys.push(sup.ln());
    }
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Dyadic lags `1, 2, …, 2^(count−1)`.
pub fn dyadic_lags(count: usize) -> Vec<usize> {
    (0..count).map(|k| 1usize << k).collect()
}

/// Largest `E|f(r+δ) − f(r)|⁴ / δ²` over the lags, pooled over nodes.
pub fn fourth_moment_constant(ensemble: &Ensemble, lags: &[usize]) -> f64 {
    let ws = ensemble.weights();
    let nodes = &ensemble.samples[0].r_nodes;
    lags.iter()
        .map(|&m| {
            let delta = nodes[m] - nodes[0];
            let per: Vec<f64> = ensemble
                .samples
                .iter()
                .map(|s| {
                    let k = s.re.len() - m;
                    s.re.windows(m + 1).map(|w| (w[m] - w[0]).powi(4)).sum::<f64>() / k as f64
                })
                .collect();
            weighted_mean_with_se(&per, &ws).0 / (delta * delta)
        })
        .fold(0.0, f64::max)
}

/// Test functions for multi-time expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Observable {
    Indicator { lo: f64, hi: f64 },
    Gaussian { width: f64 },
    Power { p: i32 },
}

impl Observable {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Observable::Indicator { lo, hi } => {
                if x > lo && x < hi {
                    1.0
                } else {
                    0.0
                }
            }
            Observable::Gaussian { width } => (-0.5 * (x / width).powi(2)).exp(),
            Observable::Power { p } => x.powi(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkReport {
    pub monte_carlo: f64,
    pub standard_error: f64,
    pub kernel: f64,
    /// Allowed gap: three standard errors plus the solver tolerance.
    pub band: f64,
    pub verdict: Verdict,
}

/// Compares a bridge Monte Carlo estimate of
/// `E[exp(∫V(ρ,B(ρ))dρ) Π f_j(B(r_j))]` with iterated kernel integrals.
/// Observation times must be multiples of `L / intervals`.
pub fn fk_crosscheck(
    pot: PotentialSpec,
    length: f64,
    observables: &[(f64, Observable)],
    n: usize,
    seed: u64,
    intervals: usize,
    grid: &Grid1D,
    opts: &SolverOptions,
) -> Result<FkReport> {
    if matches!(pot, PotentialSpec::Quartic | PotentialSpec::TransformedQuartic) {
        return Err(Error::Domain("the cross-check needs a bounded potential".into()));
    }
    let nodes = uniform_nodes(length, intervals);
    let h = length / intervals as f64;
    let mut obs_idx = Vec::new();
    for &(r, _) in observables {
        let j = (r / h).round();
        if (j * h - r).abs() > 1e-9 || r <= 0.0 || r >= length {
            return Err(Error::Domain(format!("observation time {r} is not an interior node")));
        }
        obs_idx.push(j as usize);
    }
    if obs_idx.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("observation times must increase".into()));
    }
    let vals: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(seed, i, tag::AUX);
            let path = bridge_values(length, &nodes, BridgeMethod::Sequential, &mut g);
            let v: Vec<f64> = nodes.iter().zip(&path).map(|(&r, &x)| pot.value(r, x)).collect();
            let action = crate::grid::trapezoid(&v, h);
            let obs: f64 = observables.iter().zip(&obs_idx).map(|((_, f), &j)| f.eval(path[j])).product();
            action.exp() * obs
        })
        .collect();
    let ones = vec![1.0; n];
    let (mc, se) = weighted_mean_with_se(&vals, &ones);

    let mut times: Vec<f64> = observables.iter().map(|p| p.0).collect();
    times.push(length);
    let field = solve_kernel_with(pot, (0.0, 0.0), times[0], *grid, 1, &[], opts)?;
    let mut row = field.values.last().unwrap().clone();
    let xs = grid.nodes();
    for (k, &(_, f)) in observables.iter().enumerate() {
        for (u, &x) in row.iter_mut().zip(&xs) {
            *u *= f.eval(x);
        }
        let (rows, _) = propagate_row(pot, times[k], &row, &[times[k + 1]], grid, opts)?;
        row = rows.into_iter().next().unwrap();
    }
    let kernel = grid.interp(&row, 0.0) / heat_kernel(length, 0.0, 0.0, 0.0)?;
    let band = 3.0 * se + field.tolerance() * (1 + observables.len()) as f64 + 1e-12;
    Ok(FkReport {
        monte_carlo: mc,
        standard_error: se,
        kernel,
        band,
        verdict: Verdict::from_bool((mc - kernel).abs() <= band),
    })
}

/// Keeps the nodes in `[0, R]`.
pub fn restrict_path(path: &PathSample, r: f64) -> Result<PathSample> {
    let k = path.r_nodes.partition_point(|&x| x <= r * (1.0 + 1e-12) + 1e-15);
    if k < 2 {
        return Err(Error::Domain(format!("restriction to [0, {r}] keeps fewer than two nodes")));
    }
    let mut out = path.clone();
    out.r_nodes.truncate(k);
    out.re.truncate(k);
    if let Some(im) = out.im.as_mut() {
        im.truncate(k);
    }
    Ok(out)
}

/// Radial fields `(u, u_t)` with `u = Re g / r` and `u_t = |∂_r| Im g / r`.
/// At `r = 0` the value is the derivative of the band-limited interpolant.
pub fn lift_to_3d(path: &PathSample, length: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = uniform_intervals(&path.r_nodes, length)
        .ok_or_else(|| Error::Domain("lift needs a path on a uniform grid of [0, L]".into()))?;
    let sine = SineTransform::new(n, length);
    let zero = vec![0.0; n + 1];
    let re = &path.re;
    let im_mult = sine.multiply(path.im.as_deref().unwrap_or(&zero), |k| k);
    let slope_at_zero = |vals: &[f64]| -> f64 {
        let c = sine.forward(vals);
        let norm = (2.0 / length).sqrt();
        c.iter().enumerate().map(|(m, cm)| cm * norm * sine.wavenumber(m + 1)).sum()
    };
    let divide = |vals: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = path.r_nodes.iter().zip(vals).map(|(&r, &v)| if r > 0.0 { v / r } else { 0.0 }).collect();
        out[0] = slope_at_zero(vals);
        out
    };
    Ok((divide(re), divide(&im_mult)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gibbs_weight_of_line() {
        let nodes = uniform_nodes(1.0, 4000);
        let path = PathSample {
            re: nodes.clone(),
            r_nodes: nodes,
            im: None,
            weight: 1.0,
            seed: 0,
            index: 0,
            measure: MeasureSpec::finite(MeasureTag::MuL1, 1.0),
        };
        assert!((gibbs_weight(&path).unwrap() - (-1.0f64 / 12.0).exp()).abs() < 1e-7);
    }

    #[test]
    fn cdf_inverse_of_flat_density() {
        let grid = Grid1D::new(0.0, 1.0, 11).unwrap();
        let c = CdfColumn::new(0, std::iter::repeat(1.0).take(11), grid.spacing());
        assert!((c.invert(&grid, 0.37) - 0.37).abs() < 1e-12);
    }

    #[test]
    fn restriction_keeps_prefix() {
        let p = sample_wiener(&uniform_nodes(2.0, 8), 1, 0).unwrap();
        let q = restrict_path(&p, 1.0).unwrap();
        assert_eq!(q.r_nodes.len(), 5);
        assert_eq!(q.re[..], p.re[..5]);
    }
}
