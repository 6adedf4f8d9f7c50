use proptest::prelude::*;
use radial_gibbs::asymptotics::{from_phi_coordinates, to_phi_coordinates};
use radial_gibbs::grid::{trapezoid, Grid1D};
use radial_gibbs::kernel::heat_kernel;
use radial_gibbs::measures::{gibbs_weight, holder_exponent_estimate, sample_bridge, uniform_nodes, BridgeMethod};
use radial_gibbs::sine::SineTransform;
use radial_gibbs::stats::{ks_two_sample, Verdict};
use radial_gibbs::wave::{cos_prop, nonlinearity, sin_prop, spectral_free_flow, WaveState};

fn mode_state(length: f64, n: usize, amps: &[(f64, f64)]) -> WaveState {
    let nodes = uniform_nodes(length, n);
    let field = |part: usize| -> Vec<f64> {
        nodes
            .iter()
            .enumerate()
            .map(|(j, &r)| {
                if j == 0 || j == n {
                    return 0.0;
                }
                amps.iter()
                    .enumerate()
                    .map(|(m, a)| (if part == 0 { a.0 } else { a.1 }) * ((m + 1) as f64 * std::f64::consts::PI * r / length).sin())
                    .sum()
            })
            .collect()
    };
    WaveState::new(0.0, length, field(0), field(1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heat_kernel_is_positive_and_symmetric(r in 0.1f64..10.0, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let a = heat_kernel(r, x, 0.0, y).unwrap();
        let b = heat_kernel(r, y, 0.0, x).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-15 * a.max(1e-300));
    }

    #[test]
    fn heat_kernel_composes(s in 0.2f64..1.0, r in 1.2f64..2.0, x in -1.0f64..1.0) {
        let g = Grid1D::symmetric(14.0, 1.0 / 32.0).unwrap();
        let prod: Vec<f64> = g.nodes().iter().map(|&z| heat_kernel(r, x, s, z).unwrap() * heat_kernel(s, z, 0.0, 0.0).unwrap()).collect();
        let direct = heat_kernel(r, x, 0.0, 0.0).unwrap();
        prop_assert!((g.integrate(&prod) - direct).abs() < 1e-9);
    }

    #[test]
    fn phi_coordinates_round_trip(r in 0.5f64..20.0, x in -3.0f64..3.0, s in 0.5f64..20.0, y in -3.0f64..3.0) {
        let (rr, xx, ss, yy) = to_phi_coordinates(r, x, s, y);
        let back = from_phi_coordinates(rr, xx, ss, yy).unwrap();
        for (a, b) in [(back.0, r), (back.1, x), (back.2, s), (back.3, y)] {
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn sine_transform_inverts(vals in proptest::collection::vec(-2.0f64..2.0, 31)) {
        let mut v = vec![0.0];
        v.extend(vals);
        v.push(0.0);
        let t = SineTransform::new(32, 3.0);
        let back = t.inverse(&t.forward(&v));
        for (a, b) in back.iter().zip(&v) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn propagators_vanish_at_the_walls(vals in proptest::collection::vec(-2.0f64..2.0, 63), t in -1.0f64..1.0) {
        let mut v = vec![0.0];
        v.extend(vals);
        v.push(0.0);
        for out in [cos_prop(&v, t, 2.0).unwrap(), sin_prop(&v, t, 2.0).unwrap()] {
            prop_assert_eq!(out[0], 0.0);
            prop_assert_eq!(out[64], 0.0);
        }
        prop_assert!(cos_prop(&v, 1.5, 2.0).is_err());
        let id = cos_prop(&v, 0.0, 2.0).unwrap();
        for (a, b) in id.iter().zip(&v) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn free_flow_is_a_group(amps in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6), s in -1.0f64..1.0, t in -1.0f64..1.0) {
        let g = mode_state(4.0, 64, &amps);
        let two = spectral_free_flow(&spectral_free_flow(&g, s), t);
        let one = spectral_free_flow(&g, s + t);
        prop_assert!(two.distance(&one) < 1e-12);
        let back = spectral_free_flow(&one, -(s + t));
        prop_assert!(back.distance(&g) < 1e-12);
    }

    #[test]
    fn nonlinearity_is_odd(vals in proptest::collection::vec(-3.0f64..3.0, 2..40)) {
        let neg: Vec<f64> = vals.iter().map(|v| -v).collect();
        let a = nonlinearity(&vals, 0.1);
        let b = nonlinearity(&neg, 0.1);
        prop_assert_eq!(a[0], 0.0);
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn bridge_paths_are_pinned_and_weights_in_unit_interval(seed in any::<u64>(), index in 0u64..1000, length in 0.5f64..8.0) {
        let nodes = uniform_nodes(length, 32);
        let p = sample_bridge(length, &nodes, seed, index, BridgeMethod::Sequential).unwrap();
        prop_assert_eq!(p.re[0], 0.0);
        prop_assert_eq!(p.re[32], 0.0);
        let w = gibbs_weight(&p).unwrap();
        prop_assert!(w > 0.0 && w <= 1.0);
        let again = sample_bridge(length, &nodes, seed, index, BridgeMethod::Sequential).unwrap();
        prop_assert_eq!(p, again);
    }

    #[test]
    fn holder_estimate_ignores_affine_rescaling(vals in proptest::collection::vec(-1.0f64..1.0, 65), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let lags = [1, 2, 4, 8];
        let base = holder_exponent_estimate(&vals, 1.0 / 64.0, &lags);
        let scaled: Vec<f64> = vals.iter().map(|v| a * v + b).collect();
        let other = holder_exponent_estimate(&scaled, 1.0 / 64.0, &lags);
        if let (Ok(x), Ok(y)) = (base, other) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn ks_statistic_is_a_symmetric_distance(xs in proptest::collection::vec(-5.0f64..5.0, 1..60), ys in proptest::collection::vec(-5.0f64..5.0, 1..60)) {
        let d1 = ks_two_sample(&xs, &ys).statistic;
        let d2 = ks_two_sample(&ys, &xs).statistic;
        prop_assert!((0.0..=1.0).contains(&d1));
        prop_assert!((d1 - d2).abs() < 1e-15);
        prop_assert_eq!(ks_two_sample(&xs, &xs).statistic, 0.0);
    }

    #[test]
    fn trapezoid_is_exact_on_lines(a in -3.0f64..3.0, b in -3.0f64..3.0, n in 2usize..50) {
        let h = 1.0 / n as f64;
        let v: Vec<f64> = (0..=n).map(|i| a + b * i as f64 * h).collect();
        prop_assert!((trapezoid(&v, h) - (a + 0.5 * b)).abs() < 1e-12);
    }
}

#[test]
fn verdicts_combine_to_the_worst() {
    assert_eq!(Verdict::Pass.and(Verdict::Warn), Verdict::Warn);
    assert_eq!(Verdict::Warn.and(Verdict::Fail), Verdict::Fail);
    assert_eq!(Verdict::Pass.and(Verdict::Pass), Verdict::Pass);
}
