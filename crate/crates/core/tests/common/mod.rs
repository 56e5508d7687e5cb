#![allow(dead_code)]

use kiw_core::geometry::Manifold;
use kiw_core::jet::jet_len;
use kiw_core::tensor::{build_field, FieldDecl, FieldRef};
use rand::Rng;

pub fn field(decl: &FieldDecl, m: Manifold, n: usize) -> FieldRef {
    build_field(decl, m, n).expect("library field")
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// A random tensor field of valence `(r, s)` from the library.
pub fn random_tensor<R: Rng>(rng: &mut R, m: Manifold, n: usize, r: usize, s: usize) -> FieldDecl {
    match m {
        Manifold::Euclidean => {
            if rng.random_bool(0.5) {
                FieldDecl::new("trig", &[uniform(rng, 0.2, 1.0), uniform(rng, 0.5, 1.5)]).with_valence(r, s)
            } else {
                let degree = rng.random_range(2..=3usize);
                let m = jet_len(n, degree);
                let comps = n.pow((r + s) as u32);
                let mut p = vec![degree as f64];
                p.extend((0..m * comps).map(|_| uniform(rng, -1.0, 1.0)));
                FieldDecl::new("polynomial", &p).with_valence(r, s)
            }
        }
        Manifold::Torus => {
            FieldDecl::new("torus_trig", &[uniform(rng, 0.2, 1.0), rng.random_range(1..=2) as f64]).with_valence(r, s)
        }
        Manifold::Sphere => {
            let mut v = || -> Vec<f64> { (0..3).map(|_| uniform(rng, -1.0, 1.0)).collect() };
            match (r, s) {
                (0, 0) => FieldDecl::new("sphere_height", &v()),
                (0, 1) => {
                    let mut p = v();
                    p.extend(v());
                    FieldDecl::new("sphere_one_form", &p)
                }
                (1, 1) => {
                    let mut p = v();
                    p.extend(v());
                    FieldDecl::new("sphere_mixed", &p)
                }
                (1, 0) => FieldDecl::new("sphere_rotation", &v()),
                _ => panic!("no sphere field of valence ({r},{s})"),
            }
        }
    }
}

pub fn random_vector<R: Rng>(rng: &mut R, m: Manifold, n: usize) -> FieldDecl {
    match m {
        Manifold::Euclidean => match rng.random_range(if n == 2 { 0 } else { 2 }..4) {
            0 => FieldDecl::new("swirl", &[uniform(rng, -1.0, 1.0), uniform(rng, 0.5, 1.5)]),
            1 => FieldDecl::new("rotation", &[uniform(rng, -1.0, 1.0)]),
            2 => FieldDecl::new("linear", &(0..n * n).map(|_| uniform(rng, -1.0, 1.0)).collect::<Vec<_>>()),
            _ => random_tensor(rng, m, n, 1, 0),
        },
        Manifold::Torus => FieldDecl::new("torus_wave", &[uniform(rng, -1.0, 1.0), rng.random_range(1..=2) as f64]),
        Manifold::Sphere => {
            FieldDecl::new("sphere_rotation", &(0..3).map(|_| uniform(rng, -1.0, 1.0)).collect::<Vec<_>>())
        }
    }
}

/// A point well inside chart 0.
pub fn random_point<R: Rng>(rng: &mut R, m: Manifold, n: usize) -> Vec<f64> {
    let r = match m {
        Manifold::Sphere => 0.8,
        _ => 1.2,
    };
    (0..n).map(|_| uniform(rng, -r, r)).collect()
}

/// Max-abs difference relative to the larger of the two max-abs norms.
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let s = a.iter().chain(b).map(|x| x.abs()).fold(0.0, f64::max);
    if s == 0.0 {
        d
    } else {
        d / s
    }
}
