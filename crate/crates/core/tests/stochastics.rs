use kiw_core::stochastics::{
    covariation, fv_integral, ito_integral, stratonovich_integral, DriverDecl, DriverSpec, DrivingPaths, FvSpec,
    MartSpec, RngStream, TimeGrid,
};
use kiw_core::tensor::TimeProfile;
use proptest::prelude::*;
use std::sync::Arc;

fn spec(brownian: usize) -> Arc<DriverSpec> {
    Arc::new(DriverSpec { brownian, drivers: Vec::new() })
}

fn sample(seed: u64, path: u64, steps: usize) -> DrivingPaths {
    DrivingPaths::sample(spec(2), TimeGrid::new(1.0, steps).unwrap(), RngStream::new(seed, path)).unwrap()
}

#[test]
fn paths_depend_only_on_seed_and_index() {
    let a = sample(9, 4, 32);
    let b = sample(9, 4, 32);
    assert_eq!(a.bm, b.bm);
    assert_ne!(a.bm, sample(9, 5, 32).bm);
    assert_ne!(a.bm, sample(10, 4, 32).bm);
    assert_ne!(a.bm[0], a.bm[1]);
}

#[test]
fn refinement_keeps_coarse_values() {
    let a = sample(1, 0, 16);
    let mut r = a.clone();
    for _ in 0..3 {
        r = r.refine();
    }
    assert_eq!(r.grid.steps, 128);
    for j in 0..2 {
        for k in 0..=16 {
            assert_eq!(r.bm[j][8 * k].to_bits(), a.bm[j][k].to_bits());
        }
    }
    // refinement is itself reproducible
    assert_eq!(a.refine().refine().bm, sample(1, 0, 16).refine().refine().bm);
}

#[test]
fn bridge_midpoints_have_quarter_step_variance() {
    let (steps, paths) = (8, 4000);
    let h = 1.0 / steps as f64;
    let mut sq = 0.0;
    for p in 0..paths {
        let a = sample(2, p, steps);
        let r = a.refine();
        for k in 0..steps {
            let d = r.bm[0][2 * k + 1] - 0.5 * (a.bm[0][k] + a.bm[0][k + 1]);
            sq += d * d;
        }
    }
    let var = sq / (paths * steps as u64) as f64;
    let want = h / 4.0;
    // the sample variance of N normals has relative sd sqrt(2/N)
    let sd = want * (2.0 / (paths * steps as u64) as f64).sqrt();
    assert!((var - want).abs() < 5.0 * sd, "{var} vs {want}");
}

#[test]
fn terminal_variance_matches_horizon() {
    let paths = 4000;
    let mut sq = 0.0;
    for p in 0..paths {
        let b = &sample(3, p, 16).bm[1];
        sq += b[16] * b[16];
    }
    let var = sq / paths as f64;
    assert!((var - 1.0).abs() < 5.0 * (2.0 / paths as f64).sqrt(), "{var}");
}

#[test]
fn drivers_follow_their_declarations() {
    let sigma = TimeProfile::Affine { a: 1.0, b: 2.0 };
    let spec = Arc::new(DriverSpec {
        brownian: 2,
        drivers: vec![
            DriverDecl { fv: FvSpec::Quadratic { a: 1.0, b: 0.5 }, mart: MartSpec::Brownian { component: 1 } },
            DriverDecl { fv: FvSpec::Zero, mart: MartSpec::Integral { component: 0, sigma: sigma.clone() } },
        ],
    });
    let grid = TimeGrid::new(2.0, 20).unwrap();
    let d = DrivingPaths::sample(spec, grid, RngStream::new(0, 0)).unwrap();
    for k in 0..=20 {
        let t = grid.t(k);
        assert!((d.fv[0][k] - (t + 0.5 * t * t)).abs() < 1e-14);
        assert_eq!(d.mart[0][k], d.bm[1][k]);
    }
    let want = ito_integral(&(0..=20).map(|k| sigma.value(grid.t(k))).collect::<Vec<_>>(), &d.bm[0]).unwrap();
    for (m, w) in d.mart[1].iter().zip(&want) {
        assert!((m - w).abs() < 1e-14);
    }
}

#[test]
fn unknown_component_is_rejected() {
    let spec = Arc::new(DriverSpec {
        brownian: 1,
        drivers: vec![DriverDecl { fv: FvSpec::Zero, mart: MartSpec::Brownian { component: 1 } }],
    });
    assert!(DrivingPaths::sample(spec, TimeGrid::new(1.0, 4).unwrap(), RngStream::new(0, 0)).is_err());
}

#[test]
fn mismatched_lengths_are_rejected() {
    assert!(ito_integral(&[1.0, 2.0], &[0.0, 1.0, 2.0]).is_err());
    assert!(covariation(&[], &[]).is_err());
}

proptest! {
    #[test]
    fn strat_minus_ito_is_half_covariation(
        pts in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 2..200)
    ) {
        let (f, x): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let s = stratonovich_integral(&f, &x).unwrap();
        let i = ito_integral(&f, &x).unwrap();
        let c = covariation(&f, &x).unwrap();
        for k in 0..x.len() {
            prop_assert!((s[k] - i[k] - 0.5 * c[k]).abs() < 1e-12);
        }
    }

    // telescoping: Σ x_k Δx_k = ½(x_N² - x_0²) - ½ Σ Δx_k²
    #[test]
    fn ito_integral_of_the_integrator(x in prop::collection::vec(-3.0..3.0f64, 2..200)) {
        let i = ito_integral(&x, &x).unwrap();
        let q = covariation(&x, &x).unwrap();
        for k in 0..x.len() {
            let want = 0.5 * (x[k] * x[k] - x[0] * x[0]) - 0.5 * q[k];
            prop_assert!((i[k] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn fv_integral_of_constant_is_increment(c in -2.0..2.0f64, a in prop::collection::vec(-3.0..3.0f64, 2..50)) {
        let f = vec![c; a.len()];
        let r = fv_integral(&f, &a).unwrap();
        prop_assert!((r[a.len() - 1] - c * (a[a.len() - 1] - a[0])).abs() < 1e-10);
    }
}
