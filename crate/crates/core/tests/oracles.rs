//! Fixed reference values, each computed independently of the routine under test.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use radial_gibbs::asymptotics::{big_phi_to_phi, from_phi_coordinates, phi_to_big_phi, to_phi_coordinates};
use radial_gibbs::grid::Grid1D;
use radial_gibbs::kernel::{cutoff_monotonicity_check, heat_kernel, solve_kernel, KernelField, PotentialSpec, SolverOptions};
use radial_gibbs::measures::{
    gibbs_weight, holder_exponent_estimate, lift_to_3d, restrict_path, rn_gaussian, sample_bridge, sample_wiener, uniform_nodes, BridgeMethod,
    MeasureSpec, MeasureTag, PathSample,
};
use radial_gibbs::quadrature::integrate_adaptive;
use radial_gibbs::spectrum::{default_grid, eigenpairs, richardson_ground_state};
use radial_gibbs::stats::covariance_with_se;
use radial_gibbs::wave::{cos_prop, hamiltonian, sin_prop};

#[test]
fn heat_kernel_at_unit_time() {
    assert_relative_eq!(heat_kernel(1.0, 0.0, 0.0, 0.0).unwrap(), 0.398_942_280_401_432_7, max_relative = 1e-15);
    assert!(heat_kernel(1.0, 0.0, 1.0, 0.0).is_err());
}

#[test]
fn quartic_row_mass_is_strictly_between_zero_and_one() {
    let coarse = Grid1D::symmetric(8.0, 1.0 / 32.0).unwrap();
    let fine = coarse.refined(4);
    let a = solve_kernel(PotentialSpec::Quartic, (0.0, 0.0), 1.0, coarse, 4).unwrap();
    let b = solve_kernel(PotentialSpec::Quartic, (0.0, 0.0), 1.0, fine, 4).unwrap();
    let (ma, mb) = (a.mass(a.r_nodes.len() - 1), b.mass(b.r_nodes.len() - 1));
    assert!(mb > 0.0 && mb < 1.0, "{mb}");
    assert!((ma - mb).abs() < a.tolerance(), "{ma} vs {mb}");
}

#[test]
fn cutoff_levels_are_ordered_below_the_heat_kernel() {
    let grid = Grid1D::symmetric(8.0, 1.0 / 32.0).unwrap();
    let rep = cutoff_monotonicity_check((0.0, 0.0), &[(1.0, 0.0)], &[1, 4, 16], &grid, &SolverOptions::default()).unwrap();
    let v: Vec<f64> = rep.values.iter().map(|row| row[0]).collect();
    assert!(v[0] >= v[1] && v[1] >= v[2] && v[2] >= 0.0, "{v:?}");
    assert!(rep.heat[0] >= v[0]);
}

#[test]
fn ground_state_matches_frozen_shooting_value() {
    // 2^{-4/3} times the ground state of -d²/dx² + x⁴ (1.0603620904841828)
    let l0 = richardson_ground_state(&default_grid());
    assert_relative_eq!(l0, 0.420_804_974_475_447_8, max_relative = 1e-6);
    let basis = eigenpairs(2, default_grid()).unwrap();
    assert!(basis.eigenvalues[0] >= 0.25 && basis.eigenvalues[1] >= 1.25);
}

#[test]
fn semigroup_matches_static_quartic_solve() {
    let grid = Grid1D::symmetric(8.0, 1.0 / 64.0).unwrap();
    let basis = eigenpairs(80, default_grid()).unwrap();
    let field = solve_kernel(PotentialSpec::StaticQuartic, (0.0, 0.3), 0.5, grid, 8).unwrap();
    let row = field.row_at(0.5).unwrap();
    let worst = [-1.5, -0.5, 0.0, 0.3, 1.0, 2.0]
        .iter()
        .map(|&x| (grid.interp(&row, x) - basis.semigroup_kernel(0.5, x, 0.3).unwrap()).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn kernel_artifact_round_trips() {
    let grid = Grid1D::symmetric(8.0, 1.0 / 16.0).unwrap();
    let field = solve_kernel(PotentialSpec::CutoffQuartic { n: 2 }, (0.0, 0.0), 1.0, grid, 4).unwrap();
    let text = field.to_json().unwrap();
    assert_eq!(KernelField::from_json(&text).unwrap(), field);
    let again = solve_kernel(PotentialSpec::CutoffQuartic { n: 2 }, (0.0, 0.0), 1.0, grid, 4).unwrap();
    assert_eq!(again.to_json().unwrap(), text);
}

#[test]
fn bridge_covariances() {
    let nodes = uniform_nodes(1.0, 8);
    let n = 20_000;
    let paths: Vec<PathSample> = (0..n).map(|i| sample_bridge(1.0, &nodes, 11, i, BridgeMethod::default()).unwrap()).collect();
    let col = |r: f64| -> Vec<f64> { paths.iter().map(|p| p.re_at(r)).collect() };
    let (v, se) = covariance_with_se(&col(0.5), &col(0.5));
    assert!((v - 0.25).abs() < 4.0 * se, "{v} ± {se}");
    let (c, se) = covariance_with_se(&col(0.25), &col(0.5));
    assert!((c - 0.125).abs() < 4.0 * se, "{c} ± {se}");
}

#[test]
fn wiener_covariances() {
    let nodes = uniform_nodes(2.0, 8);
    let n = 40_000;
    let paths: Vec<PathSample> = (0..n).map(|i| sample_wiener(&nodes, 12, i).unwrap()).collect();
    let col = |r: f64| -> Vec<f64> { paths.iter().map(|p| p.re_at(r)).collect() };
    let (v, se) = covariance_with_se(&col(1.0), &col(1.0));
    assert!((v - 1.0).abs() < 4.0 * se, "{v} ± {se}");
    let (c, se) = covariance_with_se(&col(1.0), &col(2.0));
    assert!((c - 1.0).abs() < 4.0 * se, "{c} ± {se}");
}

#[test]
fn gaussian_radon_nikodym_is_sqrt_two() {
    assert_relative_eq!(rn_gaussian(0.0, 1.0, 2.0).unwrap(), 2f64.sqrt(), max_relative = 1e-12);
}

#[test]
fn holder_slope_of_a_line_is_one() {
    let values: Vec<f64> = (0..=256).map(|i| 0.3 * i as f64).collect();
    let s = holder_exponent_estimate(&values, 1.0 / 256.0, &[1, 2, 4, 8]).unwrap();
    assert_relative_eq!(s, 1.0, epsilon = 1e-12);
}

#[test]
fn gibbs_weight_of_a_bridge_is_a_probability_ratio() {
    let nodes = uniform_nodes(4.0, 64);
    for i in 0..50 {
        let p = sample_bridge(4.0, &nodes, 3, i, BridgeMethod::default()).unwrap();
        let w = gibbs_weight(&p).unwrap();
        assert!(w > 0.0 && w <= 1.0);
    }
}

fn mode_path(length: f64, n: usize, k: f64) -> PathSample {
    let nodes = uniform_nodes(length, n);
    let re: Vec<f64> = nodes.iter().map(|&r| (k * PI * r / length).sin()).collect();
    PathSample {
        im: Some(re.clone()),
        re,
        r_nodes: nodes,
        weight: 1.0,
        seed: 0,
        index: 0,
        measure: MeasureSpec::finite(MeasureTag::NuL, length),
    }
}

#[test]
fn lift_of_a_single_mode() {
    let (l, n) = (4.0, 128);
    let path = mode_path(l, n, 1.0);
    let (u, ut) = lift_to_3d(&path, l).unwrap();
    let k = PI / l;
    assert_relative_eq!(u[0], k, max_relative = 1e-10);
    assert_relative_eq!(ut[0], k * k, max_relative = 1e-10);
    for j in [1, 17, 64, 100] {
        let r = path.r_nodes[j];
        assert_relative_eq!(u[j], (k * r).sin() / r, max_relative = 1e-10);
        assert_relative_eq!(ut[j], k * (k * r).sin() / r, max_relative = 1e-10);
    }
}

#[test]
fn restrictions_compose() {
    let path = mode_path(4.0, 64, 3.0);
    let once = restrict_path(&path, 1.0).unwrap();
    let twice = restrict_path(&restrict_path(&path, 2.0).unwrap(), 1.0).unwrap();
    assert_eq!(once, twice);
    assert_eq!(once.r_nodes.len(), 17);
    assert!(restrict_path(&path, 0.01).is_err());
}

#[test]
fn free_propagators_on_an_eigenmode() {
    let (l, n, t) = (4.0, 256, 0.5);
    let nodes = uniform_nodes(l, n);
    let e1: Vec<f64> = nodes.iter().map(|&r| (2.0 / l).sqrt() * (PI * r / l).sin()).collect();
    let c = cos_prop(&e1, t, l).unwrap();
    assert_relative_eq!(c[n / 2] / e1[n / 2], 0.923_879_532_511_286_7, max_relative = 1e-12);
    let s = sin_prop(&e1, t, l).unwrap();
    assert_relative_eq!(s[n / 2] / e1[n / 2], (t * PI / l).sin() / (PI / l), max_relative = 1e-6);
    for v in [&c, &s] {
        assert_eq!(v[0], 0.0);
        assert_eq!(v[n], 0.0);
    }
}

#[test]
fn hamiltonian_of_the_first_mode() {
    let (l, n) = (4.0, 512);
    let nodes = uniform_nodes(l, n);
    let v = |r: f64| (2.0 / l).sqrt() * (PI * r / l).sin();
    let u: Vec<f64> = nodes.iter().map(|&r| if r == 0.0 { (2.0 / l).sqrt() * PI / l } else { v(r) / r }).collect();
    let quartic = integrate_adaptive(|r| if r == 0.0 { 0.0 } else { 0.25 * v(r).powi(4) / (r * r) }, 0.0, l, 1e-13, 1e-12).0;
    let expected = 0.5 * (PI / l).powi(2) + quartic;
    assert_relative_eq!(hamiltonian(&u, &vec![0.0; n + 1], l), expected, max_relative = 1e-5);
}

#[test]
fn phi_coordinates_invert() {
    let (r, x, s, y) = (6.0, 0.7, 3.0, -0.4);
    let (rr, xx, ss, yy) = to_phi_coordinates(r, x, s, y);
    assert_relative_eq!(rr, 8.0, max_relative = 1e-15);
    assert_relative_eq!(ss, 1.0, max_relative = 1e-15);
    let back = from_phi_coordinates(rr, xx, ss, yy).unwrap();
    assert_relative_eq!(back.0, r, max_relative = 1e-14);
    assert_relative_eq!(back.1, x, max_relative = 1e-14);
    assert_relative_eq!(back.3, y, max_relative = 1e-14);
    assert_relative_eq!(big_phi_to_phi(phi_to_big_phi(0.2, 3.0), 3.0).unwrap(), 0.2, max_relative = 1e-15);
}
