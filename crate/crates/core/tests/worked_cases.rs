//! Small hand-computed cases for each layer of the library.

mod common;

use approx::assert_relative_eq;
use common::field;
use kiw_core::flow::{
    chart_hop, integrate_flow, inverse_flow_residual, strat_to_ito_correction, FlowSde, FlowState, Scheme,
};
use kiw_core::geometry::{pair, pullback, pushforward, transform_tensor, ChartAtlas, Manifold, TensorValue, Valence};
use kiw_core::registry;
use kiw_core::stochastics::{
    covariation, ito_integral, stratonovich_integral, DriverDecl, DriverSpec, DrivingPaths, FvSpec, MartSpec,
    RngStream, TimeGrid,
};
use kiw_core::tensor::{directional_derivative, lie_derivative, lie_derivative_fd, FieldDecl, FieldRef, Pairing};
use kiw_core::verifier::{
    convergence_study, expanded_integrand_check, synthesize_k_path, ExpandedState, GTerm, Scenario, StudyConfig,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn euclid(decl: FieldDecl, n: usize) -> FieldRef {
    field(&decl, Manifold::Euclidean, n)
}

fn constant(data: &[f64], r: usize, s: usize, n: usize) -> FieldRef {
    euclid(FieldDecl::new("constant", data).with_valence(r, s), n)
}

fn tv(r: usize, s: usize, n: usize, data: &[f64]) -> TensorValue {
    TensorValue::new(Valence::new(r, s), n, data.to_vec()).unwrap()
}

fn m1(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

// geometry

#[test]
fn stereographic_transition_is_inversion_and_roundtrips() {
    let atlas = ChartAtlas::sphere();
    let x = [0.6, -0.8];
    let y = atlas.transition(&x, 0, 1).unwrap();
    assert_relative_eq!(y.as_slice(), [0.6, -0.8].as_slice(), epsilon = 1e-15);
    let x = [1.2, 0.5];
    let r2 = 1.2 * 1.2 + 0.25;
    assert_relative_eq!(
        atlas.transition(&x, 0, 1).unwrap().as_slice(),
        [1.2 / r2, 0.5 / r2].as_slice(),
        epsilon = 1e-15
    );
    assert_eq!(atlas.transition(&x, 0, 0).unwrap(), x.to_vec());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let r = rng.random_range(0.7..1.4);
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let x = [r * a.cos(), r * a.sin()];
        let back = atlas.transition(&atlas.transition(&x, 0, 1).unwrap(), 1, 0).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12);
    }
}

#[test]
fn diagonal_jacobian_scales_mixed_components() {
    let j = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0]));
    let ji = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.0 / 3.0]));
    let k = tv(1, 1, 2, &[0.0, 1.0, 0.0, 0.0]);
    assert_relative_eq!(transform_tensor(&k, &j, &ji).get(&[0, 1]), 2.0 / 3.0, epsilon = 1e-15);
    assert_relative_eq!(pushforward(&k, &j, &ji).get(&[0, 1]), 2.0 / 3.0, epsilon = 1e-15);
    assert_relative_eq!(pullback(&k, &j, &ji).get(&[0, 1]), 1.5, epsilon = 1e-15);
    let s = TensorValue::scalar(4.0);
    assert_eq!(transform_tensor(&s, &j, &ji).data, vec![4.0]);
}

#[test]
fn doubling_map_on_the_line() {
    let (j, ji) = (m1(2.0), m1(0.5));
    assert_eq!(pullback(&tv(0, 1, 1, &[1.0]), &j, &ji).data, vec![2.0]);
    assert_eq!(pullback(&tv(1, 0, 1, &[1.0]), &j, &ji).data, vec![0.5]);
    assert_eq!(pushforward(&tv(1, 0, 1, &[1.0]), &j, &ji).data, vec![2.0]);
}

#[test]
fn single_term_contraction() {
    let k = tv(1, 1, 2, &[0.0, 3.0, 0.0, 0.0]);
    let s = tv(1, 1, 2, &[0.0, 0.0, 5.0, 0.0]);
    assert_eq!(pair(&k, &s).unwrap(), 15.0);
    assert_eq!(pair(&tv(0, 1, 1, &[1.0]), &tv(1, 0, 1, &[1.0])).unwrap(), 1.0);
    assert!(pair(&k, &tv(0, 2, 2, &[0.0; 4])).is_err());
}

// tensor calculus

#[test]
fn lie_derivative_of_dx_along_rotation() {
    let dx = constant(&[1.0, 0.0], 0, 1, 2);
    let x = euclid(FieldDecl::new("rotation", &[1.0]), 2);
    for p in [[0.3, -0.7], [1.1, 0.4]] {
        let l = lie_derivative(&dx, &x, 0).unwrap().eval(0.0, &p, 0).unwrap();
        assert_relative_eq!(l.data.as_slice(), [0.0, -1.0].as_slice(), epsilon = 1e-15);
        let fd = lie_derivative_fd(&dx, &x, 0.0, &p, 0, 1e-4).unwrap();
        assert!((fd.data[0]).abs() < 1e-6 && (fd.data[1] + 1.0).abs() < 1e-6, "{:?}", fd.data);
    }
    // [X, X] = 0
    let xx = lie_derivative(&x, &x, 0).unwrap().eval(0.0, &[0.2, 0.9], 0).unwrap();
    assert!(xx.data.iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn finite_difference_oracle_on_the_line() {
    let f = euclid(FieldDecl::new("polynomial", &[2.0, 0.0, 0.0, 1.0]).with_valence(0, 0), 1);
    let dx = constant(&[1.0], 1, 0, 1);
    for x in [-1.3, 0.2, 2.5] {
        let fd = lie_derivative_fd(&f, &dx, 0.0, &[x], 0, 1e-4).unwrap();
        assert!((fd.data[0] - 2.0 * x).abs() < 1e-7);
    }
    let zero = euclid(FieldDecl::new("zero", &[]), 2);
    let k = euclid(FieldDecl::new("trig", &[0.7, 1.3]).with_valence(1, 1), 2);
    assert!(lie_derivative_fd(&k, &zero, 0.0, &[0.4, 0.1], 0, 1e-4).unwrap().data.iter().all(|&v| v == 0.0));
}

#[test]
fn leibniz_rule_for_the_pairing() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let k = field(&common::random_tensor(&mut rng, Manifold::Euclidean, 2, 1, 1), Manifold::Euclidean, 2);
        let s = field(&common::random_tensor(&mut rng, Manifold::Euclidean, 2, 1, 1), Manifold::Euclidean, 2);
        let x = field(&common::random_vector(&mut rng, Manifold::Euclidean, 2), Manifold::Euclidean, 2);
        let p = common::random_point(&mut rng, Manifold::Euclidean, 2);
        let ks: FieldRef = Arc::new(Pairing::new(k.clone(), s.clone()).unwrap());
        assert_eq!(ks.valence(), Valence::SCALAR);
        let lk = lie_derivative(&k, &x, 0).unwrap().eval(0.0, &p, 0).unwrap();
        let ls = lie_derivative(&s, &x, 0).unwrap().eval(0.0, &p, 0).unwrap();
        let lhs = pair(&lk, &s.eval(0.0, &p, 0).unwrap()).unwrap() + pair(&k.eval(0.0, &p, 0).unwrap(), &ls).unwrap();
        let rhs = directional_derivative(&ks, &x, 0.0, &p, 0).unwrap();
        assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }
}

// stochastics

fn bm_paths(steps: usize, path: u64, brownian: usize) -> DrivingPaths {
    DrivingPaths::sample(
        Arc::new(DriverSpec { brownian, drivers: Vec::new() }),
        TimeGrid::new(1.0, steps).unwrap(),
        RngStream::new(21, path),
    )
    .unwrap()
}

#[test]
fn brownian_integrals_against_closed_forms() {
    let n = 1024;
    let h = 1.0 / n as f64;
    let paths = 400;
    let mut sq = 0.0;
    for p in 0..paths {
        let b = &bm_paths(n, p, 1).bm[0];
        let end = b[n];
        let qv = covariation(b, b).unwrap()[n];
        let ito = ito_integral(b, b).unwrap();
        // discrete Itô formula: Σ B ΔB = (B² - Σ ΔB²) / 2
        assert!((ito[n] - 0.5 * (end * end - qv)).abs() < 1e-12);
        sq += (ito[n] - 0.5 * (end * end - 1.0)).powi(2);
        let strat = stratonovich_integral(b, b).unwrap();
        assert!((strat[n] - 0.5 * end * end).abs() < 1e-12);
        let ones = vec![1.0; n + 1];
        assert_eq!(ito_integral(&ones, b).unwrap(), *b);
        let c = stratonovich_integral(&vec![2.5; n + 1], b).unwrap();
        assert!(c.iter().zip(b).all(|(s, x)| (s - 2.5 * x).abs() < 1e-12));
        assert!(ito_integral(&vec![0.0; n + 1], b).unwrap().iter().all(|&v| v == 0.0));
    }
    // the gap to the continuous closed form is (1 - [B]_1) / 2, with RMS sqrt(h / 2)
    let rms = (sq / paths as f64).sqrt();
    assert!((rms / (0.5 * h).sqrt() - 1.0).abs() < 0.15, "{rms}");
}

#[test]
fn ensemble_moments_of_brownian_motion() {
    let n = 100_000u64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for p in 0..n {
        let b = bm_paths(1, p, 1).bm[0][1];
        s1 += b;
        s2 += b * b;
    }
    let mean = s1 / n as f64;
    let var = s2 / n as f64 - mean * mean;
    assert!(mean.abs() < 3.0 * (1.0 / n as f64).sqrt(), "{mean}");
    assert!((var - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn covariations_of_independent_and_smooth_paths() {
    let steps = 64;
    let h = 1.0 / steps as f64;
    let (mut cross, mut fv) = (0.0, 0.0);
    let paths = 4000;
    for p in 0..paths {
        let d = bm_paths(steps, p, 2);
        cross += covariation(&d.bm[0], &d.bm[1]).unwrap()[steps].powi(2);
        let a: Vec<f64> = (0..=steps).map(|k| (k as f64 * h).sin()).collect();
        fv += covariation(&a, &d.bm[0]).unwrap()[steps].powi(2);
    }
    let cross = (cross / paths as f64).sqrt();
    assert!(cross <= 3.0 * h.sqrt(), "{cross}");
    // Σ ΔA ΔB has RMS about h·sqrt(Σ(A')²) = O(h), well inside O(√h)
    let fv = (fv / paths as f64).sqrt();
    assert!(fv <= h, "{fv}");
}

// flow

fn line_sde(xi: FieldDecl) -> FlowSde {
    FlowSde::new(euclid(FieldDecl::new("zero", &[]), 1), vec![euclid(xi, 1)], Arc::new(ChartAtlas::euclidean(1)))
        .unwrap()
}

#[test]
fn correction_terms_by_hand() {
    let c = strat_to_ito_correction(&[euclid(FieldDecl::new("dilation", &[1.0]), 1)], 0.0, &[0.7], 0).unwrap();
    assert_relative_eq!(c.c_plus[(0, 0)], 0.5, epsilon = 1e-15);
    assert_relative_eq!(c.c_minus[(0, 0)], 0.5, epsilon = 1e-15);
    let half_square = euclid(FieldDecl::new("polynomial", &[2.0, 0.0, 0.0, 0.5]), 1);
    let c = strat_to_ito_correction(&[half_square], 0.0, &[1.0], 0).unwrap();
    assert_relative_eq!(c.c_plus[(0, 0)], 0.75, epsilon = 1e-15);
    assert_relative_eq!(c.c_minus[(0, 0)], 0.25, epsilon = 1e-15);
    let c = strat_to_ito_correction(&[constant(&[0.3, -1.0], 1, 0, 2)], 0.0, &[0.1, 0.2], 0).unwrap();
    assert!(c.c_plus.iter().chain(c.c_minus.iter()).chain(c.drift.iter()).all(|&v| v == 0.0));
}

#[test]
fn geometric_brownian_flow_converges_to_its_closed_form() {
    let sde = line_sde(FieldDecl::new("dilation", &[1.0]));
    for scheme in [Scheme::Euler, Scheme::Heun] {
        let mut rms = Vec::new();
        let mut jac_err: f64 = 0.0;
        let paths = 200;
        let mut err = vec![0.0; 5];
        for p in 0..paths {
            let mut d = bm_paths(64, p, 1);
            for (l, e) in err.iter_mut().enumerate() {
                let flow = integrate_flow(&sde, &d, &[0.8], 0, scheme).unwrap();
                let s = flow.states.last().unwrap();
                let exact = d.bm[0][d.grid.steps].exp();
                *e += (s.coords[0] - 0.8 * exact).powi(2);
                if l == 4 {
                    jac_err = jac_err.max((s.jac[(0, 0)] / exact - 1.0).abs());
                    jac_err = jac_err.max((s.inv_jac[(0, 0)] * exact - 1.0).abs());
                }
                d = d.refine();
            }
        }
        for e in &err {
            rms.push((e / paths as f64).sqrt());
        }
        let order = (rms[0] / rms[4]).log2() / 4.0;
        assert!(order >= 0.4, "{scheme:?} {rms:?}");
        assert!(jac_err < 0.2, "{scheme:?} {jac_err}");
    }
}

#[test]
fn inverse_flow_of_a_deterministic_rotation() {
    let sde =
        FlowSde::new(euclid(FieldDecl::new("rotation", &[0.5]), 2), Vec::new(), Arc::new(ChartAtlas::euclidean(2)))
            .unwrap();
    let d = bm_paths(4096, 0, 0);
    let flow = integrate_flow(&sde, &d, &[0.6, 0.3], 0, Scheme::Heun).unwrap();
    let r = inverse_flow_residual(&sde, &d, &flow, Scheme::Heun).unwrap();
    assert!(r.iter().all(|&v| v <= 1e-8), "{:e}", r.iter().copied().fold(0.0, f64::max));

    // Euler: first order, Heun: at least second order
    let sup = |steps: usize, scheme: Scheme| {
        let d = bm_paths(steps, 0, 0);
        let flow = integrate_flow(&sde, &d, &[0.6, 0.3], 0, scheme).unwrap();
        inverse_flow_residual(&sde, &d, &flow, scheme).unwrap().into_iter().fold(0.0, f64::max)
    };
    let e = sup(64, Scheme::Euler) / sup(256, Scheme::Euler);
    let h = sup(64, Scheme::Heun) / sup(256, Scheme::Heun);
    assert!((3.5..4.5).contains(&e), "{e}");
    assert!(h >= 14.0, "{h}");
}

#[test]
fn sphere_hop_and_back() {
    let atlas = ChartAtlas::sphere();
    let state = FlowState {
        chart: 0,
        coords: vec![3.4, -1.0],
        jac: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.1, 0.9]),
        inv_jac: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.1, 0.9]).try_inverse().unwrap(),
    };
    let hopped = chart_hop(&atlas, &state).unwrap().expect("outside V");
    assert_eq!(hopped.chart, 1);
    let back = atlas.transition(&hopped.coords, 1, 0).unwrap();
    assert!((back[0] - 3.4).abs() < 1e-10 && (back[1] + 1.0).abs() < 1e-10);
    let dt = atlas.transition_jacobian(&hopped.coords, 1, 0).unwrap();
    assert!((dt * &hopped.jac - &state.jac).amax() < 1e-10);
    assert!((&hopped.jac * &hopped.inv_jac - DMatrix::identity(2, 2)).amax() < 1e-12);
    // a state inside V stays put
    assert!(chart_hop(&atlas, &FlowState::identity(&[0.5, 0.5], 0)).unwrap().is_none());
}

// verifier

#[test]
fn synthesized_field_follows_its_drivers() {
    let g = GTerm {
        profile: kiw_core::tensor::TimeProfile::Constant { value: 1.0 },
        field: constant(&[1.0, 2.0, 3.0, 4.0], 1, 1, 2),
        driver: 0,
    };
    // A_t = t, no martingale: K(t) = (1 + t) K(0)
    let spec = Arc::new(DriverSpec {
        brownian: 1,
        drivers: vec![DriverDecl { fv: FvSpec::Linear { rate: 1.0 }, mart: MartSpec::Zero }],
    });
    let d = DrivingPaths::sample(spec, TimeGrid::new(1.0, 32).unwrap(), RngStream::new(0, 0)).unwrap();
    let w = &synthesize_k_path(std::slice::from_ref(&g), &d, false).weights[0];
    for (k, wk) in w.iter().enumerate() {
        assert!((wk - d.grid.t(k)).abs() < 1e-14);
    }
    // M = B: the Itô weights have mean zero
    let spec = Arc::new(DriverSpec {
        brownian: 1,
        drivers: vec![DriverDecl { fv: FvSpec::Zero, mart: MartSpec::Brownian { component: 0 } }],
    });
    let n = 20_000;
    let mut s = 0.0;
    for p in 0..n {
        let d = DrivingPaths::sample(spec.clone(), TimeGrid::new(1.0, 8).unwrap(), RngStream::new(1, p)).unwrap();
        s += synthesize_k_path(std::slice::from_ref(&g), &d, false).weights[0][8];
    }
    assert!((s / n as f64).abs() < 4.0 / (n as f64).sqrt());
}

#[test]
fn expanded_integrands_in_degenerate_states() {
    // identity Jacobian and constant fields: every term vanishes
    let k = constant(&[1.0, 2.0, -1.0, 0.5], 1, 1, 2);
    let g = constant(&[0.3, 0.0, 0.1, 2.0], 1, 1, 2);
    let b = constant(&[0.4, -0.2], 1, 0, 2);
    let st = ExpandedState {
        t: 0.0,
        y: vec![0.1, 0.2],
        chart: 0,
        jac: DMatrix::identity(2, 2),
        inv_jac: DMatrix::identity(2, 2),
    };
    let c = expanded_integrand_check(&k, &[g], &b, std::slice::from_ref(&b), &st).unwrap();
    assert_eq!(c.max(), 0.0);

    // scalar K: the dt coefficient is b·∇K + ½ ξ·∇(ξ·∇K)
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let m = Manifold::Euclidean;
        let k = field(&common::random_tensor(&mut rng, m, 2, 0, 0), m, 2);
        let g = field(&common::random_tensor(&mut rng, m, 2, 0, 0), m, 2);
        let b = field(&common::random_vector(&mut rng, m, 2), m, 2);
        let xi = field(&common::random_vector(&mut rng, m, 2), m, 2);
        let y = common::random_point(&mut rng, m, 2);
        let jac = DMatrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.0 } + rng.random_range(-0.4..0.4));
        let st = ExpandedState { t: 0.0, y: y.clone(), chart: 0, inv_jac: jac.clone().try_inverse().unwrap(), jac };
        let c = expanded_integrand_check(&k, &[g], &b, std::slice::from_ref(&xi), &st).unwrap();
        assert!(c.max() <= 1e-12, "{c:?}");

        let xk = lie_derivative(&k, &xi, 1).unwrap();
        let hand = directional_derivative(&k, &b, 0.0, &y, 0).unwrap()
            + 0.5 * directional_derivative(&xk, &xi, 0.0, &y, 0).unwrap();
        let lb = lie_derivative(&k, &b, 0).unwrap().eval(0.0, &y, 0).unwrap().data[0];
        let l2 = lie_derivative(&xk, &xi, 0).unwrap().eval(0.0, &y, 0).unwrap().data[0];
        assert!((lb + 0.5 * l2 - hand).abs() <= 1e-12 * (1.0 + hand.abs()));
    }
}

#[test]
fn geometric_brownian_one_form_residual_decreases_with_every_level() {
    let s = Scenario::from_decl(&registry::find("gbm_one_form").unwrap()).unwrap();
    let r = convergence_study(&s, &StudyConfig { seed: 3, paths: 200, levels: 4, workers: 1 }).unwrap();
    for w in r.levels.windows(2) {
        assert!(w[1].rms_sup_residual < w[0].rms_sup_residual, "{:?}", r.levels);
    }
    assert!((0.35..=0.75).contains(&r.fitted_order), "{}", r.fitted_order);
}

#[test]
fn identity_flow_reproduces_the_synthesized_field() {
    let s = Scenario::from_decl(&registry::find("identity").unwrap()).unwrap();
    let r = convergence_study(&s, &StudyConfig { seed: 0, paths: 10, levels: 2, workers: 1 }).unwrap();
    assert!(r.levels.iter().all(|l| l.max_sup_residual <= 1e-12));
}
