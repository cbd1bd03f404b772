use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use selfsim::cli::random_frame;
use selfsim::functionals::{gaussian_density, kernel_identity_residual, total_curvature, HeatKernelSpec};
use selfsim::geometry::{FlowParams, ProfileCurve};
use std::f64::consts::PI;

fn ellipse(a: f64, b: f64, rot: f64, centre: (f64, f64), m: usize) -> Vec<[f64; 2]> {
    let (c, s) = (rot.cos(), rot.sin());
    (0..m)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / m as f64;
            let (x, y) = (a * t.cos(), b * t.sin());
            [centre.0 + c * x - s * y, centre.1 + s * x + c * y]
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_identity_holds_at_random_points(seed in any::<u64>(), n in 2usize..7, tau in 0.05f64..4.0) {
        let mut rng = StdRng::seed_from_u64(seed);
        let frame = random_frame(&mut rng, n);
        let x: Vec<f64> = (0..n).map(|i| ((seed >> (i % 8)) % 17) as f64 * 0.2 - 1.6).collect();
        let x0 = vec![0.3; n];
        let k = kernel_identity_residual(&x, &x0, -tau, 0.0, &frame, 4.0).unwrap();
        prop_assert!(k.residual.abs() <= 1e-10 * k.scale, "residual {} scale {}", k.residual, k.scale);
    }

    #[test]
    fn wrong_spread_breaks_kernel_identity(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = StdRng::seed_from_u64(seed);
        let frame = random_frame(&mut rng, n);
        // at the centre the residual is ρ(n−1)(1/2 − 2/spread)/τ whatever the frame
        let x = vec![0.7; n];
        let k = kernel_identity_residual(&x, &x, -1.0, 0.0, &frame, 3.0).unwrap();
        prop_assert!(k.residual.abs() > 1e-6 * k.scale);
    }

    #[test]
    fn density_is_invariant_under_parabolic_rescaling(
        p in 1usize..4,
        q in 2usize..4,
        radius in 0.5f64..3.0,
        lambda in 0.3f64..3.0,
        tau in 0.1f64..2.0,
    ) {
        let params = FlowParams::new(p, q).unwrap();
        let curve = ProfileCurve::sphere(radius, 400, params).unwrap();
        let spec = HeatKernelSpec::origin(0.0, params.n);
        let base = gaussian_density(&curve, &params, &spec, -tau).unwrap().phi;
        let scaled = gaussian_density(&curve.scaled(lambda), &params, &spec, -lambda * lambda * tau).unwrap().phi;
        prop_assert!((base - scaled).abs() <= 1e-10 * base, "{base} vs {scaled}");
    }

    #[test]
    fn convex_curves_have_total_curvature_two_pi(
        a in 0.2f64..5.0,
        ratio in 0.2f64..1.0,
        rot in 0.0f64..PI,
        cx in -3.0f64..3.0,
        cy in -3.0f64..3.0,
    ) {
        let tc = total_curvature(&[ellipse(a, a * ratio, rot, (cx, cy), 2000)]).unwrap();
        prop_assert!((tc.integral - 2.0 * PI).abs() <= 1e-9);
        prop_assert!(tc.bound_holds);
    }

    #[test]
    fn each_component_contributes_at_least_two_pi(m in 1usize..5, r in 0.1f64..2.0) {
        let comps: Vec<Vec<[f64; 2]>> = (0..m).map(|i| ellipse(r, r, 0.0, (5.0 * i as f64, 0.0), 500)).collect();
        let tc = total_curvature(&comps).unwrap();
        prop_assert_eq!(tc.components, m);
        prop_assert!(tc.integral >= 2.0 * PI * m as f64 - 1e-9);
    }
}
