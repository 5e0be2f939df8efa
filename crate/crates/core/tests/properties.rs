use nalgebra::DMatrix;
use num_bigint::BigUint;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};

use xpdmimo_core::boundary::{xpd_distance_closed, BoundaryThresholds};
use xpdmimo_core::capacity::{ergodic_capacity_mc, instantaneous_capacity, BoundEvaluator};
use xpdmimo_core::channel::{ChannelStats, Complex64, FadingParams, SubarrayConfig};
use xpdmimo_core::geometry::{delta_u, ArrayGeometry, Cartesian, Cluster, ClusterSet, Layout, SphericalPosition};
use xpdmimo_core::optimizer::{project_capped_simplex, PowerAllocation};
use xpdmimo_core::permanent::{
    binomial, enumerate_count_vectors, identity_augmented, multiplicity, permanent_def, permanent_expanded,
    permanent_structured,
};
use xpdmimo_core::polarization::{l_of_xpd, power_gains, XpdParams};

fn clusters() -> ClusterSet {
    let w = 35f64.to_radians();
    ClusterSet::new(
        [(29.3, 0.0, 6.2), (24.6, -4.3, 1.3), (39.0, -9.0, 0.0), (32.7, -2.9, -2.9), (48.5, -8.7, -8.6)]
            .iter()
            .map(|&(x, y, z)| Cluster::new(Cartesian::new(x, y, z), w, PI).unwrap())
            .collect(),
    )
    .unwrap()
}

fn tied_stats(n: usize, s: usize, m0: usize, beta: &[f64], l: &[f64]) -> ChannelStats {
    let expand = |v: &[f64]| v.iter().flat_map(|&x| std::iter::repeat_n(x, m0)).collect::<Vec<_>>();
    ChannelStats::from_columns(n, expand(&beta[..s]), expand(&l[..s]), SubarrayConfig::new(s, m0).unwrap()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn structured_matches_both_oracles(
        n in 1usize..=2,
        (s, m0) in prop_oneof![Just((1usize, 1usize)), Just((1, 2)), Just((2, 1)), Just((1, 3)), Just((1, 4)), Just((2, 2)), Just((4, 1))],
        beta in prop::collection::vec(0.05f64..3.0, 4),
        l in prop::collection::vec(0.0f64..0.5, 4),
        lambda in prop::collection::vec(0.0f64..1.0, 8),
        gamma in 0.0f64..20.0,
    ) {
        let stats = tied_stats(n, s, m0, &beta, &l);
        let alloc = PowerAllocation::from_vec(stats.subarrays(), &lambda[..2 * s]).unwrap();
        let w: Vec<f64> = alloc.expand().iter().map(|x| gamma * x).collect();
        let b = stats.omega() * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(w));
        let mut t = stats.templates().unwrap();
        for j in 0..2 * s {
            t.column_mut(j).scale_mut(gamma * lambda[j]);
        }
        let def = permanent_def(&identity_augmented(&b)).unwrap();
        prop_assert!(close(permanent_expanded(&b).unwrap(), def, 1e-10));
        prop_assert!(close(permanent_structured(&t, s, m0).unwrap(), def, 1e-10));
        let eval = BoundEvaluator::new(&stats, gamma).unwrap();
        prop_assert!(close(eval.f(&lambda[..2 * s]).unwrap(), def, 1e-10));
    }

    #[test]
    fn permanent_ignores_column_order(a in prop::collection::vec(-2.0f64..2.0, 12), shift in 0usize..4) {
        let m = DMatrix::from_column_slice(3, 4, &a);
        let mut p = m.clone();
        for j in 0..4 {
            p.set_column(j, &m.column((j + shift) % 4));
        }
        prop_assert!(close(permanent_def(&m).unwrap(), permanent_def(&p).unwrap(), 1e-12) || permanent_def(&m).unwrap().abs() < 1e-12);
        prop_assert!((permanent_def(&m).unwrap() - permanent_def(&m.transpose()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn count_vector_multiplicities_sum_to_binomial(s in 1usize..=4, m0 in 1usize..=4, k in 0usize..=6) {
        let total: BigUint = enumerate_count_vectors(s, m0, k).iter().map(|b| multiplicity(b, m0)).sum();
        prop_assert_eq!(total, binomial(2 * s * m0, k));
        for b in enumerate_count_vectors(s, m0, k) {
            prop_assert_eq!(b.k(), k);
            prop_assert!(b.b.iter().all(|&x| x <= m0));
        }
    }

    #[test]
    fn power_split_conserves_gain(xpd in 1e-3f64..1e6, beta in 1e-12f64..1.0) {
        let l = l_of_xpd(xpd).unwrap();
        prop_assert!(l > 0.0 && l < 1.0);
        let (co, cross) = power_gains(beta, l);
        prop_assert!(close(co + cross, beta, 1e-12));
        prop_assert!(close(co / cross, xpd, 1e-9));
    }

    #[test]
    fn delta_u_symmetric_under_half_turn(theta in 0.01f64..3.13, phi in 0.0f64..6.28, k in 0.0f64..3.0) {
        let a = SphericalPosition::new(10.0, theta, phi).unwrap();
        let b = SphericalPosition::new(10.0, theta, phi + PI).unwrap();
        prop_assert!((delta_u(&a, k) - delta_u(&b, k)).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&delta_u(&a, k)));
    }

    #[test]
    fn closed_form_is_max_of_terms(phi in 0.0f64..6.28, eta in 0.2f64..1.5) {
        let geom = ArrayGeometry::new(40, Layout::Linear, 0.05, 0.1).unwrap();
        let user = SphericalPosition::new(30.0, FRAC_PI_2, phi).unwrap();
        let cl = clusters();
        let c: Vec<f64> = cl.iter().map(|x| x.spherical().r / 30.0).collect();
        let th = BoundaryThresholds::new(1.05, 1.05, 1.15).unwrap();
        let r = xpd_distance_closed(&geom, &user, &cl, &c, &XpdParams::new(3.16, eta).unwrap(), &th).unwrap();
        prop_assert_eq!(r.r_u_th, r.r_1_th.max(r.chi2_term));
        prop_assert!(r.r_1_th > 0.0);
    }

    #[test]
    fn projection_is_feasible_and_idempotent(y in prop::collection::vec(-0.5f64..0.5, 2..12)) {
        let n = y.len();
        let (q0, budget) = (2.0 / n as f64, 1.0);
        let x = project_capped_simplex(&y, q0, budget).unwrap();
        prop_assert!((x.iter().sum::<f64>() - budget).abs() < 1e-9);
        prop_assert!(x.iter().all(|&v| (0.0..=q0).contains(&v)));
        let again = project_capped_simplex(&x, q0, budget).unwrap();
        for (a, b) in x.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn capacity_is_unitarily_invariant(re in prop::collection::vec(-1.0f64..1.0, 16), im in prop::collection::vec(-1.0f64..1.0, 16), gamma in 0.0f64..100.0, seed in 0u64..1000) {
        let g = DMatrix::from_fn(2, 4, |i, j| Complex64::new(re[i * 4 + j], im[i * 4 + j]));
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.4, 0.3, 0.2, 0.1]));
        let t = seed as f64 * 0.01;
        let (c, s) = (t.cos(), t.sin());
        let ph = Complex64::from_polar(1.0, 3.0 * t);
        let u = DMatrix::from_row_slice(2, 2, &[Complex64::new(c, 0.0), -ph.conj() * s, ph * s, Complex64::new(c, 0.0)]);
        let a = instantaneous_capacity(&g, &q, gamma).unwrap();
        let b = instantaneous_capacity(&(&u * &g), &q, gamma).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
        prop_assert!(a >= 0.0);
    }
}

#[test]
fn monte_carlo_is_reproducible_and_order_free() {
    let stats = tied_stats(2, 2, 2, &[1.0, 0.5], &[0.1, 0.3]);
    let q = DMatrix::from_diagonal_element(8, 8, 0.125);
    let f = FadingParams::new(5.0, 42).unwrap();
    let a = ergodic_capacity_mc(&stats, &q, 10.0, 500, &f).unwrap();
    let b = ergodic_capacity_mc(&stats, &q, 10.0, 500, &f).unwrap();
    assert_eq!(a, b);
    let c = ergodic_capacity_mc(&stats, &q, 10.0, 500, &FadingParams::new(5.0, 43).unwrap()).unwrap();
    assert_ne!(a.mean_bits_per_symbol, c.mean_bits_per_symbol);
    assert!(a.std_error > 0.0);
}
