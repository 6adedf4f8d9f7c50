//! Long-time behaviour of the quartic kernel through the variables
//! `Φ(r,x;s,y) = (s/3) φ(r³/27, x r/3; s³/27, y s/3)`, which solve
//! `∂_r Φ = ½ Φ'' − ¼ x⁴ Φ + (x/r) Φ'`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{trapezoid_nonuniform, Grid1D};
use crate::kernel::{propagate_row, solve_adjoint, solve_kernel_with, KernelField, PotentialSpec, SolverOptions};
use crate::spectrum::SpectralBasis;
use crate::stats::{least_squares, LinearFit, Verdict};

/// Maps arguments of `Φ` to the arguments of `φ` it is built from.
pub fn to_phi_coordinates(r: f64, x: f64, s: f64, y: f64) -> (f64, f64, f64, f64) {
    (r.powi(3) / 27.0, x * r / 3.0, s.powi(3) / 27.0, y * s / 3.0)
}

/// Inverse of [`to_phi_coordinates`].
pub fn from_phi_coordinates(rr: f64, xx: f64, ss: f64, yy: f64) -> Result<(f64, f64, f64, f64)> {
    if ss <= 0.0 || rr <= 0.0 {
        return Err(Error::Domain("inverse change of variables needs positive times".into()));
    }
    let r = 3.0 * rr.cbrt();
    let s = 3.0 * ss.cbrt();
    Ok((r, 3.0 * xx / r, s, 3.0 * yy / s))
}

/// `Φ` value from a `φ` value, for source time `s` in `Φ` variables.
pub fn phi_to_big_phi(value: f64, s: f64) -> f64 {
    s / 3.0 * value
}

/// `φ` value from a `Φ` value, for source time `s` in `Φ` variables.
pub fn big_phi_to_phi(value: f64, s: f64) -> Result<f64> {
    if s <= 0.0 {
        return Err(Error::Domain("source time must be positive".into()));
    }
    Ok(3.0 * value / s)
}

/// Default grid for `Φ` solves.
pub fn default_grid() -> Grid1D {
    Grid1D::symmetric(10.0, 1.0 / 64.0).expect("valid grid")
}

/// Solves for `Φ(·,·;s,y)` on `(s, r_max]` with rows every `dr`.
pub fn solve_big_phi(s: f64, y: f64, r_max: f64, dr: f64, grid: &Grid1D, extra: &[f64]) -> Result<KernelField> {
    let steps = ((r_max - s) / dr).round().max(1.0) as usize;
    solve_kernel_with(
        PotentialSpec::TransformedQuartic,
        (s, y),
        r_max,
        *grid,
        steps,
        extra,
        &SolverOptions::default(),
    )
}

/// Plateau of `(r/s)^{1/2} e^{(r−s)λ₀} Φ(r,0;s,y)` over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub window: (f64, f64),
    /// Mean of the scaled quantity over the stored rows in the window.
    pub value: f64,
    /// `(max − min) / |mean|`.
    pub variation: f64,
    /// Intercept of a fit `a + b/r` over the window.
    pub extrapolated: f64,
    pub samples: Vec<(f64, f64)>,
    pub status: Verdict,
}

pub const PLATEAU_LIMIT: f64 = 0.02;

pub fn scaled_limit(field: &KernelField, lambda0: f64, window: (f64, f64)) -> Result<Plateau> {
    let (s, _) = field.source;
    if window.0 < s + 3.0 - 1e-12 || window.1 > *field.r_nodes.last().unwrap() + 1e-12 || window.0 >= window.1 {
        return Err(Error::Domain(format!("window {window:?} not inside [s+3, r_max]")));
    }
    let samples: Vec<(f64, f64)> = field
        .r_nodes
        .iter()
        .zip(&field.values)
        .filter(|(r, _)| **r >= window.0 - 1e-12 && **r <= window.1 + 1e-12)
        .map(|(&r, row)| (r, (r / s).sqrt() * ((r - s) * lambda0).exp() * field.x_grid.interp(row, 0.0)))
        .collect();
    if samples.len() < 3 {
        return Err(Error::Domain("window holds fewer than three rows".into()));
    }
    let qs: Vec<f64> = samples.iter().map(|p| p.1).collect();
    let mean = qs.iter().sum::<f64>() / qs.len() as f64;
    let lo = qs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let variation = (hi - lo) / mean.abs();
    let rows: Vec<Vec<f64>> = samples.iter().map(|p| vec![1.0, 1.0 / p.0]).collect();
    let fit = least_squares(&rows, &qs);
    Ok(Plateau {
        window,
        value: mean,
        variation,
        extrapolated: fit.coef[0],
        samples,
        status: if variation < PLATEAU_LIMIT { Verdict::Pass } else { Verdict::Warn },
    })
}

/// `G(s,y)` with its quadrature diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GValue {
    pub s: f64,
    pub y: f64,
    pub value: f64,
    /// Contribution of `[s+T, ∞)` from the fitted algebraic tail.
    pub tail: f64,
    /// Disagreement between one- and two-term tail fits.
    pub tail_uncertainty: f64,
    pub horizon: f64,
}

/// `ψ₀` and `½ψ₀ + wψ₀'` sampled on `grid`.
fn ground_weights(basis: &SpectralBasis, grid: &Grid1D) -> (Vec<f64>, Vec<f64>) {
    let bg = &basis.x_grid;
    let hb = bg.spacing();
    let psi = &basis.eigenfunctions[0];
    let mut dpsi = vec![0.0; bg.n];
    for i in 1..bg.n - 1 {
        dpsi[i] = (psi[i + 1] - psi[i - 1]) / (2.0 * hb);
    }
    let p: Vec<f64> = grid.nodes().iter().map(|&x| bg.interp(psi, x)).collect();
    let w: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&p)
        .map(|(&x, &v)| 0.5 * v + x * bg.interp(&dpsi, x))
        .collect();
    (p, w)
}

/// `G(s,y) = ψ₀(y) − ∫_s^∞ (ρ/s)^{1/2} e^{(ρ−s)λ₀} ρ⁻¹ ⟨½ψ₀ + wψ₀', Φ(ρ,·;s,y)⟩ dρ`
/// (the drift term moved onto `ψ₀` by parts).
///
/// The integrand decays like `ρ⁻²`; the part beyond the field's last row is
/// taken from a fit `a/ρ² + b/ρ³` over the second half of the horizon.
pub fn compute_g(basis: &SpectralBasis, field: &KernelField) -> Result<GValue> {
    if field.potential != PotentialSpec::TransformedQuartic {
        return Err(Error::Domain("G needs a transformed-quartic field".into()));
    }
    let (s, y) = field.source;
    let lambda0 = basis.lambda0();
    let grid = &field.x_grid;
    let (_, weight) = ground_weights(basis, grid);
    let integrand: Vec<f64> = field
        .r_nodes
        .iter()
        .zip(&field.values)
        .map(|(&rho, row)| {
            let prod: Vec<f64> = row.iter().zip(&weight).map(|(a, b)| a * b).collect();
            -(rho / s).sqrt() * ((rho - s) * lambda0).exp() / rho * grid.integrate(&prod)
        })
        .collect();
    let rho = &field.r_nodes;
    let end = *rho.last().unwrap();
    let horizon = end - s;
    if horizon < 10.0 {
        return Err(Error::Truncation(format!("horizon {horizon} too short for the tail fit")));
    }
    let head = (rho[0] - s) * integrand[0];
    let body = trapezoid_nonuniform(rho, &integrand);
    let (tail, tail_uncertainty) = algebraic_tail(rho, &integrand, s + 0.5 * horizon)?;
    let value = basis.psi(0, y) + head + body + tail;
    if tail_uncertainty > 1e-3 * value.abs().max(1e-3) {
        return Err(Error::Truncation(format!(
            "G({s}, {y}) tail not settled: uncertainty {tail_uncertainty:.2e}"
        )));
    }
    Ok(GValue {
        s,
        y,
        value,
        tail,
        tail_uncertainty,
        horizon,
    })
}

fn algebraic_tail(rho: &[f64], f: &[f64], from: f64) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = rho.iter().zip(f).filter(|(r, _)| **r >= from).map(|(r, v)| (*r, *v)).collect();
    if pts.len() < 4 {
        return Err(Error::Truncation("not enough rows for the tail fit".into()));
    }
    let end = pts.last().unwrap().0;
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let two = least_squares(&pts.iter().map(|p| vec![p.0.powi(-2), p.0.powi(-3)]).collect::<Vec<_>>(), &ys);
    let one = least_squares(&pts.iter().map(|p| vec![p.0.powi(-2)]).collect::<Vec<_>>(), &ys);
    let t2 = two.coef[0] / end + two.coef[1] / (2.0 * end * end);
    let t1 = one.coef[0] / end;
    Ok((t2, (t2 - t1).abs()))
}

/// `φ(L,0;0,0)` for each `L`, obtained by propagating
/// `Q(r,x) = φ(r³/27, x r/3; 0, 0)` in `Φ` variables from `r = 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginDecay {
    pub l_values: Vec<f64>,
    pub r_values: Vec<f64>,
    pub phi: Vec<f64>,
}

pub fn origin_decay(l_values: &[f64], grid: &Grid1D) -> Result<OriginDecay> {
    let mut ls = l_values.to_vec();
    ls.sort_by(f64::total_cmp);
    if ls.first().is_none_or(|&l| l <= 1.0) {
        return Err(Error::Domain("decay lengths must exceed 1".into()));
    }
    let opts = SolverOptions::default();
    // Q(3, x) = φ(1, x; 0, 0)
    let start = solve_kernel_with(PotentialSpec::Quartic, (0.0, 0.0), 1.0, *grid, 1, &[], &opts)?;
    let row0 = start.values.last().unwrap().clone();
    let r_values: Vec<f64> = ls.iter().map(|l| 3.0 * l.cbrt()).collect();
    let (rows, _) = propagate_row(PotentialSpec::TransformedQuartic, 3.0, &row0, &r_values, grid, &opts)?;
    let phi = rows.iter().map(|row| grid.interp(row, 0.0)).collect();
    Ok(OriginDecay {
        l_values: ls,
        r_values,
        phi,
    })
}

/// Fit of `log φ(L,0;0,0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `−∂ log φ / ∂ L^{1/3}` (target `3λ₀`).
    pub exp_coeff: f64,
    /// `−∂ log φ / ∂ log L` (target `1/6`).
    pub power: f64,
    /// `lim L^{1/6} e^{3λ₀ L^{1/3}} φ(L,0;0,0)`.
    pub c: f64,
    /// Half-width of the 95% band of `C`, relative.
    pub c_rel_ci: f64,
    pub exp_ratio: f64,
    pub power_ratio: f64,
    pub free_fit: LinearFit,
    pub constant_fit: LinearFit,
    pub window: (f64, f64),
}

/// Regresses `log φ` on `[1, L^{1/3}, log L, L^{−1/3}]`; the last column
/// absorbs the `O(1/r)` correction. `C` comes from the fit of
/// `log φ + 3λ₀L^{1/3} + (1/6) log L` on `[1, L^{−1/3}]`.
pub fn decay_fit(decay: &OriginDecay, lambda0: f64) -> Result<DecayFit> {
    let n = decay.l_values.len();
    if n < 5 {
        return Err(Error::Domain("decay fit needs at least five lengths".into()));
    }
    let lo = decay.l_values[0];
    let hi = decay.l_values[n - 1];
    if hi < 8.0 * lo * (1.0 - 1e-12) {
        return Err(Error::Domain("decay lengths must span a factor of 8".into()));
    }
    if decay.phi.iter().any(|p| *p <= 0.0) {
        return Err(Error::Solver("nonpositive kernel value in decay series".into()));
    }
    let logs: Vec<f64> = decay.phi.iter().map(|p| p.ln()).collect();
    let rows: Vec<Vec<f64>> = decay
        .l_values
        .iter()
        .map(|l| vec![1.0, l.cbrt(), l.ln(), 1.0 / l.cbrt()])
        .collect();
    let free_fit = least_squares(&rows, &logs);
    let exp_coeff = -free_fit.coef[1];
    let power = -free_fit.coef[2];
    let adjusted: Vec<f64> = decay
        .l_values
        .iter()
        .zip(&logs)
        .map(|(l, lp)| lp + 3.0 * lambda0 * l.cbrt() + l.ln() / 6.0)
        .collect();
    let crow: Vec<Vec<f64>> = decay.l_values.iter().map(|l| vec![1.0, 1.0 / l.cbrt()]).collect();
    let constant_fit = least_squares(&crow, &adjusted);
    let c = constant_fit.coef[0].exp();
    Ok(DecayFit {
        exp_coeff,
        power,
        c,
        c_rel_ci: 1.96 * constant_fit.stderr[0],
        exp_ratio: exp_coeff / (3.0 * lambda0),
        power_ratio: power * 6.0,
        free_fit,
        constant_fit,
        window: (lo, hi),
    })
}

/// Both evaluations of `F(s,y) = lim φ(L,0;s,y)/φ(L,0;0,0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FValue {
    pub s: f64,
    pub y: f64,
    /// Ratio extrapolated in `1/r_L`.
    pub route_a: f64,
    /// `C⁻¹ s^{−1/6} e^{3λ₀ s^{1/3}} ψ₀(0) G(3 s^{1/3}, y s^{−1/3})`.
    pub route_b: f64,
    pub g: GValue,
    pub relative_gap: f64,
}

/// Settings for the `F` computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FSettings {
    pub grid: Grid1D,
    /// Lengths used by route A (values of `L`).
    pub l_values: Vec<f64>,
    /// Horizon of the `G` quadrature in `Φ` time.
    pub g_horizon: f64,
    pub dr: f64,
}

impl Default for FSettings {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            l_values: (0..=12).map(|k| 64.0 * 2f64.powf(k as f64 / 4.0)).collect(),
            g_horizon: 40.0,
            dr: 0.05,
        }
    }
}

pub fn compute_f(
    s: f64,
    y: f64,
    basis: &SpectralBasis,
    decay: &OriginDecay,
    fit: &DecayFit,
    settings: &FSettings,
) -> Result<FValue> {
    if s <= 0.0 {
        return Err(Error::Domain("F needs s > 0".into()));
    }
    let sp = 3.0 * s.cbrt();
    let yp = y / s.cbrt();
    let r_top = decay.r_values.last().copied().unwrap_or(sp).max(sp + settings.g_horizon);
    let field = solve_big_phi(sp, yp, r_top, settings.dr, &settings.grid, &decay.r_values)?;
    // route A: φ(L,0;s,y) = s^{−1/3} Φ(3L^{1/3}, 0; s', y')
    let mut pts = Vec::new();
    for (&r, &p0) in decay.r_values.iter().zip(&decay.phi) {
        if r <= sp + 3.0 {
            continue;
        }
        let num = field.value_at(r, 0.0)? / s.cbrt();
        pts.push((r, num / p0));
    }
    if pts.len() < 3 {
        return Err(Error::Domain("too few lengths beyond the source for route A".into()));
    }
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![1.0, 1.0 / p.0]).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let route_a = least_squares(&rows, &ys).coef[0];
    // route B, from G over the first g_horizon of the same field
    let g_field = truncate_field(&field, sp + settings.g_horizon);
    let g = compute_g(basis, &g_field)?;
    let lambda0 = basis.lambda0();
    let route_b = s.powf(-1.0 / 6.0) * (3.0 * lambda0 * s.cbrt()).exp() * basis.psi(0, 0.0) * g.value / fit.c;
    Ok(FValue {
        s,
        y,
        route_a,
        route_b,
        relative_gap: (route_a - route_b).abs() / route_a.abs(),
        g,
    })
}

fn truncate_field(field: &KernelField, r_end: f64) -> KernelField {
    let keep = field.r_nodes.partition_point(|&r| r <= r_end + 1e-12);
    KernelField {
        r_nodes: field.r_nodes[..keep].to_vec(),
        values: field.values[..keep].to_vec(),
        ..field.clone()
    }
}

/// `w ↦ φ(L, 0; R, w)` for the quartic potential, solved on a grid wide enough
/// for the whole backward evolution and sampled on `grid`.
pub fn endpoint_row(l: f64, r: f64, grid: &Grid1D, opts: &SolverOptions) -> Result<Vec<f64>> {
    let half = (6.0 * l.cbrt()).max(10.0).max(grid.hi.abs()).max(grid.lo.abs());
    let wide = Grid1D::symmetric(half, grid.spacing())?;
    let back = solve_adjoint(PotentialSpec::Quartic, (l, 0.0), &[r], &wide, opts)?.remove(0);
    Ok(grid.nodes().iter().map(|&x| wide.interp(&back, x)).collect())
}

/// `F(R, ·)` on `grid`, from adjoint solves out of `(L, 0)` at two lengths,
/// normalized so that `∫ F(R,w) φ(R,w;0,0) dw = 1`, and extrapolated in
/// `1/r_L` with `r_L = 3L^{1/3}`.
pub fn f_row(r: f64, grid: &Grid1D, l_pair: (f64, f64), opts: &SolverOptions) -> Result<Vec<f64>> {
    let forward = solve_kernel_with(PotentialSpec::Quartic, (0.0, 0.0), r, *grid, 1, &[], opts)?;
    let from_origin = forward.values.last().unwrap().clone();
    let rows: Vec<Result<Vec<f64>>> = [l_pair.0, l_pair.1]
        .par_iter()
        .map(|&l| {
            let row = endpoint_row(l, r, grid, opts)?;
            let prod: Vec<f64> = row.iter().zip(&from_origin).map(|(a, b)| a * b).collect();
            let norm = grid.integrate(&prod);
            Ok(row.into_iter().map(|v| v / norm).collect())
        })
        .collect();
    let mut it = rows.into_iter();
    let a = it.next().unwrap()?;
    let b = it.next().unwrap()?;
    let (ra, rb) = (3.0 * l_pair.0.cbrt(), 3.0 * l_pair.1.cbrt());
    Ok(a.iter().zip(&b).map(|(u, v)| (ra * u - rb * v) / (ra - rb)).collect())
}

/// Tables of `G` and `F` with the decay fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticProfile {
    pub s_values: Vec<f64>,
    pub y_values: Vec<f64>,
    /// `g_table[i][j] = G(s_i, y_j)` (`Φ` variables).
    pub g_table: Vec<Vec<f64>>,
    /// `f_table[i][j] = F(s_i, y_j)` (route A).
    pub f_table: Vec<Vec<f64>>,
    pub f_route_b: Vec<Vec<f64>>,
    pub lambda0: f64,
    pub fitted_c: f64,
    pub fit: DecayFit,
    /// Smallest tabled `s` from which `G > 0` for every tabled `|y| < 1`.
    pub m_emp: Option<f64>,
    /// `max G / (ψ₀(y) + s^{−1/2})` over the table.
    pub g_bound_constant: f64,
}

impl AsymptoticProfile {
    pub fn build(s_values: &[f64], y_values: &[f64], basis: &SpectralBasis, settings: &FSettings) -> Result<Self> {
        let decay = origin_decay(&settings.l_values, &settings.grid)?;
        let fit = decay_fit(&decay, basis.lambda0())?;
        let cells: Vec<(usize, usize)> = (0..s_values.len())
            .flat_map(|i| (0..y_values.len()).map(move |j| (i, j)))
            .collect();
        let results: Vec<Result<(GValue, FValue)>> = cells
            .par_iter()
            .map(|&(i, j)| {
                let (s, y) = (s_values[i], y_values[j]);
                let field = solve_big_phi(s, y, s + settings.g_horizon, settings.dr, &settings.grid, &[])?;
                let g = compute_g(basis, &field)?;
                let f = compute_f(s, y, basis, &decay, &fit, settings)?;
                Ok((g, f))
            })
            .collect();
        let mut g_table = vec![vec![0.0; y_values.len()]; s_values.len()];
        let mut f_table = g_table.clone();
        let mut f_route_b = g_table.clone();
        for (&(i, j), r) in cells.iter().zip(results) {
            let (g, f) = r?;
            g_table[i][j] = g.value;
            f_table[i][j] = f.route_a;
            f_route_b[i][j] = f.route_b;
        }
        let mut m_emp = None;
        for i in (0..s_values.len()).rev() {
            let ok = y_values
                .iter()
                .zip(&g_table[i])
                .filter(|(y, _)| y.abs() < 1.0)
                .all(|(_, g)| *g > 0.0);
            if ok {
                m_emp = Some(s_values[i]);
            } else {
                break;
            }
        }
        let mut g_bound_constant: f64 = 0.0;
        for (i, &s) in s_values.iter().enumerate() {
            for (j, &y) in y_values.iter().enumerate() {
                g_bound_constant = g_bound_constant.max(g_table[i][j] / (basis.psi(0, y) + s.powf(-0.5)));
            }
        }
        Ok(Self {
            s_values: s_values.to_vec(),
            y_values: y_values.to_vec(),
            g_table,
            f_table,
            f_route_b,
            lambda0: basis.lambda0(),
            fitted_c: fit.c,
            fit,
            m_emp,
            g_bound_constant,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        crate::artifact::to_json("asymptotic_profile", self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        crate::artifact::from_json("asymptotic_profile", text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn change_of_variables_round_trip() {
        let (a, b, c, d) = to_phi_coordinates(3.0, 0.0, 3.0, 0.0);
        assert_eq!((a, c), (1.0, 1.0));
        assert_eq!((b, d), (0.0, 0.0));
        let p = to_phi_coordinates(4.2, -0.7, 1.3, 0.4);
        let q = from_phi_coordinates(p.0, p.1, p.2, p.3).unwrap();
        for (u, v) in [(q.0, 4.2), (q.1, -0.7), (q.2, 1.3), (q.3, 0.4)] {
            assert!((u - v).abs() < 1e-14);
        }
        let v = 0.123;
        assert!((big_phi_to_phi(phi_to_big_phi(v, 2.5), 2.5).unwrap() - v).abs() < 1e-16);
    }
}
