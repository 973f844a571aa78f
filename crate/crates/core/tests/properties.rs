use proptest::prelude::*;
use std::f64::consts::TAU;
use selfsim_core::kernels::{ball_intersection_volume, kernel_kh, random_balls_profile, Pulse};
use selfsim_core::measures::{
    check_membership, dilate, moment, riesz_transform, translate, unit_ball_volume, Atom, Density, SignedMeasure,
};
use selfsim_core::membranes::{hard_membrane_covariance, soft_membrane_covariance, DomainSpec};
use selfsim_core::processes::{fbm_shape, volterra_to_measure, VolterraKernel};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn atoms_1d() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-3.0..3.0f64, -2.0..2.0f64), 1..6)
}

fn planar_atoms() -> impl Strategy<Value = SignedMeasure> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -1.0..1.0f64), 1..5).prop_map(|v| {
        let atoms = v.into_iter().map(|(x, y, w)| Atom(vec![x, y], w)).collect();
        SignedMeasure::new(2, atoms, Vec::new()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dilation_composes(pairs in atoms_1d(), c in 0.2..5.0f64, c2 in 0.2..5.0f64, x in -4.0..4.0f64) {
        let mu = SignedMeasure::atoms_1d(&pairs).with_density(Density::UniformBox { lo: vec![-1.0], hi: vec![0.5], value: 0.7 });
        let a = dilate(&dilate(&mu, c).unwrap(), c2).unwrap();
        let b = dilate(&mu, c * c2).unwrap();
        for (p, q) in a.atoms.iter().zip(&b.atoms) {
            prop_assert!((p.0[0] - q.0[0]).abs() <= 1e-12 * p.0[0].abs().max(1.0));
            prop_assert_eq!(p.1, q.1);
        }
        prop_assert!((a.density_at(&[x]) - b.density_at(&[x])).abs() < 1e-12);
    }

    #[test]
    fn moments_scale_with_order(mu in planar_atoms(), c in 0.3..3.0f64, j0 in 0usize..3, j1 in 0usize..3) {
        let j = [j0, j1];
        let base = moment(&mu, &j).unwrap();
        let scaled = moment(&dilate(&mu, c).unwrap(), &j).unwrap();
        let want = c.powi((j0 + j1) as i32) * base;
        prop_assert!((scaled - want).abs() <= 1e-8 * want.abs().max(1e-8));
    }

    #[test]
    fn membership_survives_translation(
        xs in prop::collection::vec(-2.0..2.0f64, 3),
        sx in -5.0..5.0f64,
        r in 0usize..3,
        balanced in any::<bool>(),
    ) {
        // Second difference has zero mass and zero first moment.
        let w = if balanced { [1.0, -2.0, 1.0] } else { [1.0, -1.5, 1.0] };
        let h = 0.3;
        let mu = SignedMeasure::atoms_1d(&[(xs[0], w[0]), (xs[0] + h, w[1]), (xs[0] + 2.0 * h, w[2])]);
        let moved = translate(&mu, &[sx]).unwrap();
        prop_assert_eq!(check_membership(&mu, r).member, check_membership(&moved, r).member);
    }

    #[test]
    fn kh_is_isotropic(theta in 0.0..TAU, phi in 0.0..std::f64::consts::PI, frac in 0.05..0.95f64) {
        let beta = 1.0 + frac;
        let e2 = [theta.cos(), theta.sin()];
        let a = kernel_kh(&Pulse::BallIndicator, beta, 2, &e2).unwrap();
        let b = kernel_kh(&Pulse::BallIndicator, beta, 2, &[1.0, 0.0]).unwrap();
        prop_assert!(rel(a, b) < 1e-8);
        let e3 = [phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos()];
        let a = kernel_kh(&Pulse::BallIndicator, beta + 1.0, 3, &e3).unwrap();
        let b = kernel_kh(&Pulse::BallIndicator, beta + 1.0, 3, &[0.0, 0.0, 1.0]).unwrap();
        prop_assert!(rel(a, b) < 1e-8);
    }

    #[test]
    fn random_balls_profile_is_power(r in 0.05..20.0f64, d in 1usize..4, frac in 0.1..0.9f64) {
        let beta = d as f64 * (1.0 + frac);
        let p = random_balls_profile(r, d, beta).unwrap();
        let unit = random_balls_profile(1.0, d, beta).unwrap();
        prop_assert!(rel(p, unit * r.powf(d as f64 - beta)) < 1e-8);
    }

    #[test]
    fn fbm_shape_scales(h in 0.05..0.95f64, s in -3.0..3.0f64, t in -3.0..3.0f64, c in 0.5..2.0f64) {
        let a = fbm_shape(h, &[c * s], &[c * t]);
        let b = c.powf(2.0 * h) * fbm_shape(h, &[s], &[t]);
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn volterra_round_trip(alpha in 0.1..2.0f64, sigma in 0.2..2.0f64, t in 0.1..3.0f64, bridge in 0.1..0.9f64) {
        let ou = VolterraKernel::OrnsteinUhlenbeck { alpha, sigma };
        let f = riesz_transform(&volterra_to_measure(&ou, t).unwrap(), 1.0, 1).unwrap();
        for i in 1..=10 {
            let x = t * i as f64 / 10.0;
            prop_assert!((f.density_at(&[x]) - ou.k(t, x)).abs() < 1e-9);
        }
        let ab = VolterraKernel::AlphaBridge { alpha: bridge };
        let tb = t.min(0.95);
        let f = riesz_transform(&volterra_to_measure(&ab, tb).unwrap(), 1.0, 1).unwrap();
        for i in 1..10 {
            let x = tb * i as f64 / 10.0;
            prop_assert!((f.density_at(&[x]) - ab.k(tb, x)).abs() < 1e-9);
        }
    }
}

#[test]
fn intersection_volume_profile() {
    for d in 1..=4 {
        assert!(rel(ball_intersection_volume(0.0, d), unit_ball_volume(d)) < 1e-12);
        assert_eq!(ball_intersection_volume(2.0, d), 0.0);
        let mut prev = f64::INFINITY;
        for k in 0..=100 {
            let v = ball_intersection_volume(2.0 * k as f64 / 100.0, d);
            assert!(v <= prev + 1e-14, "d={d} k={k}");
            assert!(prev == f64::INFINITY || (prev - v).abs() < 0.2 * unit_ball_volume(d), "jump at d={d} k={k}");
            prev = v;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn hard_disk_symmetric(r1 in 0.0..0.8f64, r2 in 0.0..0.8f64, a1 in 0.0..TAU, a2 in 0.0..TAU, rot in 0.0..TAU) {
        let d = DomainSpec::unit_disk();
        let p = |r: f64, a: f64| [r * a.cos(), r * a.sin()];
        let (s, t) = (p(r1, a1), p(r2, a2));
        let st = hard_membrane_covariance(&d, 0.5, &s, &t).unwrap();
        let ts = hard_membrane_covariance(&d, 0.5, &t, &s).unwrap();
        prop_assert!((st - ts).abs() <= 1e-6 * st.abs().max(1e-6));
        let rotated = hard_membrane_covariance(&d, 0.5, &p(r1, a1 + rot), &p(r2, a2 + rot)).unwrap();
        prop_assert!((st - rotated).abs() <= 1e-6 * st.abs().max(1e-6));
    }

    #[test]
    fn soft_variance_decays_at_boundary(angle in 0.0..TAU, h in 0.1..0.45f64) {
        let d = DomainSpec::unit_disk();
        let v: Vec<f64> = [0.9, 0.93, 0.96, 0.99]
            .iter()
            .map(|r| {
                let x = [r * angle.cos(), r * angle.sin()];
                soft_membrane_covariance(&d, h, &x, &x).unwrap()
            })
            .collect();
        prop_assert!(v.windows(2).all(|w| w[1] < w[0]), "{:?}", v);
    }
}
