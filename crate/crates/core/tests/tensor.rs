mod common;

use approx::assert_relative_eq;
use common::{field, random_point, random_tensor, random_vector, rel_diff};
use kiw_core::geometry::{invert, pair, pullback, pushforward, Manifold, TensorValue, Valence};
use kiw_core::tensor::{directional_derivative, lie_derivative, lie_derivative_fd, FieldDecl, FieldRef};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn constant(data: &[f64], r: usize, s: usize) -> FieldRef {
    let mut p = vec![0.0];
    p.extend_from_slice(data);
    field(&FieldDecl::new("polynomial", &p).with_valence(r, s), Manifold::Euclidean, 2)
}

fn linear(m: [f64; 4]) -> FieldRef {
    field(&FieldDecl::new("linear", &m), Manifold::Euclidean, 2)
}

fn mat2(m: [f64; 4]) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &m)
}

fn lie_at(k: &FieldRef, x: &FieldRef, p: &[f64]) -> Vec<f64> {
    lie_derivative(k, x, 0).unwrap().eval(0.0, p, 0).unwrap().data
}

#[test]
fn lie_of_constant_fields_along_linear_flow() {
    let m = [0.3, -1.2, 0.7, 0.4];
    let mm = mat2(m);
    let x = linear(m);
    let p = [0.4, -0.9];

    // [X, Y] = -M Y for constant Y
    let y = [1.5, -0.5];
    let got = lie_at(&constant(&y, 1, 0), &x, &p);
    let want = -(&mm * nalgebra::DVector::from_column_slice(&y));
    assert_relative_eq!(got.as_slice(), want.as_slice(), epsilon = 1e-13);

    // L_X ω = Mᵀ ω
    let w = [0.2, 1.1];
    let got = lie_at(&constant(&w, 0, 1), &x, &p);
    let want = mm.transpose() * nalgebra::DVector::from_column_slice(&w);
    assert_relative_eq!(got.as_slice(), want.as_slice(), epsilon = 1e-13);

    // L_X K = K M - M K for constant (1,1) K
    let k = [1.0, 2.0, -0.5, 0.3];
    let got = lie_at(&constant(&k, 1, 1), &x, &p);
    let kk = mat2(k);
    let want = (&kk * &mm - &mm * &kk).transpose();
    assert_relative_eq!(got.as_slice(), want.as_slice(), epsilon = 1e-13);
}

#[test]
fn identity_endomorphism_is_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let delta = constant(&[1.0, 0.0, 0.0, 1.0], 1, 1);
    for _ in 0..20 {
        let x = field(&random_vector(&mut rng, Manifold::Euclidean, 2), Manifold::Euclidean, 2);
        let p = random_point(&mut rng, Manifold::Euclidean, 2);
        let l = lie_at(&delta, &x, &p);
        assert!(l.iter().all(|v| v.abs() < 1e-12), "{l:?}");
    }
}

#[test]
fn lie_of_scalar_is_directional_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for m in [Manifold::Euclidean, Manifold::Torus, Manifold::Sphere] {
        for _ in 0..10 {
            let f = field(&random_tensor(&mut rng, m, 2, 0, 0), m, 2);
            let x = field(&random_vector(&mut rng, m, 2), m, 2);
            let p = random_point(&mut rng, m, 2);
            let l = lie_at(&f, &x, &p)[0];
            assert_relative_eq!(
                l,
                directional_derivative(&f, &x, 0.0, &p, 0).unwrap(),
                epsilon = 1e-12,
                max_relative = 1e-12
            );
        }
    }
}

#[test]
fn bracket_is_antisymmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let m = Manifold::Euclidean;
        let x = field(&random_vector(&mut rng, m, 2), m, 2);
        let y = field(&random_vector(&mut rng, m, 2), m, 2);
        let p = random_point(&mut rng, m, 2);
        let a = lie_at(&y, &x, &p);
        let b: Vec<f64> = lie_at(&x, &y, &p).iter().map(|v| -v).collect();
        assert!(rel_diff(&a, &b) < 1e-12);
    }
}

#[test]
fn lie_matches_finite_differences_on_sphere_charts() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for chart in 0..2 {
        for (r, s) in [(0, 1), (1, 1), (1, 0)] {
            let k = field(&random_tensor(&mut rng, Manifold::Sphere, 2, r, s), Manifold::Sphere, 2);
            let x = field(&random_vector(&mut rng, Manifold::Sphere, 2), Manifold::Sphere, 2);
            let p = random_point(&mut rng, Manifold::Sphere, 2);
            let a = lie_derivative(&k, &x, 0).unwrap().eval(0.0, &p, chart).unwrap();
            let fd = lie_derivative_fd(&k, &x, 0.0, &p, chart, 1e-4).unwrap();
            assert!(rel_diff(&a.data, &fd.data) < 1e-6);
        }
    }
}

fn near_identity(n: usize, entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + 0.4 * entries[i * n + j])
}

fn valence_and_data() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=4, 0usize..=2, 0usize..=2).prop_flat_map(|(n, r, s)| {
        let comps = n.pow((r + s) as u32);
        (
            Just(n),
            Just(r),
            Just(s),
            prop::collection::vec(-1.0..1.0f64, comps),
            prop::collection::vec(-1.0..1.0f64, n * n),
            prop::collection::vec(-1.0..1.0f64, n * n),
        )
    })
}

proptest! {
    #[test]
    fn pushforward_inverts_pullback((n, r, s, data, a, _) in valence_and_data()) {
        let j = near_identity(n, &a);
        let inv = invert(&j).unwrap();
        let k = TensorValue::new(Valence::new(r, s), n, data).unwrap();
        let back = pushforward(&pullback(&k, &j, &inv), &j, &inv);
        prop_assert!(rel_diff(&back.data, &k.data) < 1e-10);
    }

    #[test]
    fn pullback_composes((n, r, s, data, a, b) in valence_and_data()) {
        let (f, g) = (near_identity(n, &a), near_identity(n, &b));
        let (fi, gi) = (invert(&f).unwrap(), invert(&g).unwrap());
        let k = TensorValue::new(Valence::new(r, s), n, data).unwrap();
        let two = pullback(&pullback(&k, &f, &fi), &g, &gi);
        let fg = &f * &g;
        let one = pullback(&k, &fg, &invert(&fg).unwrap());
        prop_assert!(rel_diff(&one.data, &two.data) < 1e-10);
    }

    #[test]
    fn pairing_is_invariant((n, r, s, data, a, _) in valence_and_data(), seed in any::<u64>()) {
        let j = near_identity(n, &a);
        let inv = invert(&j).unwrap();
        let v = Valence::new(r, s);
        let k = TensorValue::new(v, n, data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dual: Vec<f64> = (0..k.data.len()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let d = TensorValue::new(v.dual(), n, dual).unwrap();
        let before = pair(&k, &d).unwrap();
        let after = pair(&pullback(&k, &j, &inv), &pullback(&d, &j, &inv)).unwrap();
        prop_assert!((before - after).abs() <= 1e-10 * (1.0 + before.abs()));
    }

    #[test]
    fn lie_derivative_is_linear_in_the_tensor(seed in any::<u64>(), c in -2.0..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Manifold::Euclidean;
        let k1 = field(&random_tensor(&mut rng, m, 2, 1, 1), m, 2);
        let k2 = field(&random_tensor(&mut rng, m, 2, 1, 1), m, 2);
        let x = field(&random_vector(&mut rng, m, 2), m, 2);
        let p = random_point(&mut rng, m, 2);
        let l1 = lie_derivative(&k1, &x, 0).unwrap().eval(0.0, &p, 0).unwrap();
        let l2 = lie_derivative(&k2, &x, 0).unwrap().eval(0.0, &p, 0).unwrap();
        // L_X(K1 + c K2) through the values and first jets of both fields
        let sum = kiw_core::tensor::lie_jet(
            &{
                let mut j = k1.jet(0.0, &p, 0, 1).unwrap();
                j.axpy(c, &k2.jet(0.0, &p, 0, 1).unwrap());
                j
            },
            &x.jet(0.0, &p, 0, 1).unwrap(),
        )
        .value();
        let mut want = l1.clone();
        want.axpy(c, &l2);
        prop_assert!(rel_diff(&sum.data, &want.data) < 1e-12);
    }
}
