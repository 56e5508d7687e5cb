//! Built-in analytic fields, addressable by name from scenario files.

use super::field::{Declared, Differential, FieldError, FieldRef, FnField, Product, ProfiledField, TimeProfile};
use crate::geometry::{ChartId, Manifold, Valence};
use crate::jet::{exponent, jet_len, Jet};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A field as written in a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDecl {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
    /// `[r, s]`, for the families that accept any valence.
    #[serde(default)]
    pub valence: Option<[usize; 2]>,
    /// Caps the smoothness reported by the field.
    #[serde(default)]
    pub smoothness: Option<usize>,
    /// Multiplies the field by a function of time.
    #[serde(default)]
    pub time: Option<TimeProfile>,
}

impl FieldDecl {
    pub fn new(name: &str, params: &[f64]) -> FieldDecl {
        FieldDecl { name: name.into(), params: params.to_vec(), valence: None, smoothness: None, time: None }
    }

    pub fn with_valence(mut self, r: usize, s: usize) -> FieldDecl {
        self.valence = Some([r, s]);
        self
    }

    pub fn with_smoothness(mut self, k: usize) -> FieldDecl {
        self.smoothness = Some(k);
        self
    }

    pub fn with_time(mut self, p: TimeProfile) -> FieldDecl {
        self.time = Some(p);
        self
    }
}

pub struct FieldInfo {
    pub name: &'static str,
    pub manifold: Manifold,
    pub params: &'static str,
    pub description: &'static str,
}

pub const CATALOG: &[FieldInfo] = &[
    FieldInfo {
        name: "zero",
        manifold: Manifold::Euclidean,
        params: "-",
        description: "identically zero, any valence (default vector)",
    },
    FieldInfo {
        name: "constant",
        manifold: Manifold::Euclidean,
        params: "components",
        description: "constant components, any valence",
    },
    FieldInfo { name: "dilation", manifold: Manifold::Euclidean, params: "a", description: "vector field a·x" },
    FieldInfo {
        name: "linear",
        manifold: Manifold::Euclidean,
        params: "M (row-major n×n)",
        description: "vector field M x",
    },
    FieldInfo {
        name: "rotation",
        manifold: Manifold::Euclidean,
        params: "a",
        description: "planar vector field a(-y, x)",
    },
    FieldInfo {
        name: "shear",
        manifold: Manifold::Euclidean,
        params: "a",
        description: "planar vector field (a y, 0)",
    },
    FieldInfo {
        name: "swirl",
        manifold: Manifold::Euclidean,
        params: "a, k",
        description: "planar vector field (a sin ky, a sin kx)",
    },
    FieldInfo {
        name: "polynomial",
        manifold: Manifold::Euclidean,
        params: "degree, coefficients",
        description: "polynomial components, any valence; coefficients per component in graded monomial order",
    },
    FieldInfo {
        name: "trig",
        manifold: Manifold::Euclidean,
        params: "amp, freq",
        description: "fixed trigonometric pattern, any valence",
    },
    FieldInfo {
        name: "torus_wave",
        manifold: Manifold::Torus,
        params: "amp, k (integer)",
        description: "periodic vector field amp·sin(k x_{l+1} + l)",
    },
    FieldInfo {
        name: "torus_trig",
        manifold: Manifold::Torus,
        params: "amp, k (integer)",
        description: "periodic trigonometric pattern, any valence",
    },
    FieldInfo {
        name: "sphere_rotation",
        manifold: Manifold::Sphere,
        params: "wx, wy, wz",
        description: "infinitesimal rotation about the axis w",
    },
    FieldInfo {
        name: "sphere_height",
        manifold: Manifold::Sphere,
        params: "a1, a2, a3",
        description: "scalar a·P of the embedded point P",
    },
    FieldInfo {
        name: "sphere_exact_form",
        manifold: Manifold::Sphere,
        params: "a1, a2, a3",
        description: "1-form d(a·P)",
    },
    FieldInfo {
        name: "sphere_one_form",
        manifold: Manifold::Sphere,
        params: "c (3), e (3)",
        description: "1-form (c·P) d(e·P)",
    },
    FieldInfo {
        name: "sphere_mixed",
        manifold: Manifold::Sphere,
        params: "w (3), a (3)",
        description: "(1,1) tensor V_w ⊗ d(a·P)",
    },
];

fn bad(name: &str, msg: impl Into<String>) -> FieldError {
    FieldError::BadParams { field: name.into(), msg: msg.into() }
}

fn need(name: &str, params: &[f64], k: usize) -> Result<(), FieldError> {
    if params.len() != k {
        return Err(bad(name, format!("expected {k} parameters, got {}", params.len())));
    }
    Ok(())
}

fn planar(name: &str, n: usize) -> Result<(), FieldError> {
    if n != 2 {
        return Err(bad(name, "only defined in dimension 2"));
    }
    Ok(())
}

/// Build a field from its declaration for an atlas of the given kind.
pub fn build_field(decl: &FieldDecl, manifold: Manifold, n: usize) -> Result<FieldRef, FieldError> {
    let base = build_base(decl, manifold, n)?;
    if let Some([r, s]) = decl.valence {
        if base.valence() != Valence::new(r, s) {
            return Err(bad(&decl.name, format!("declared valence ({r},{s}) but the field is {}", base.valence())));
        }
    }
    let mut f = base;
    if let Some(k) = decl.smoothness {
        f = Arc::new(Declared { inner: f, smoothness: k });
    }
    if let Some(p) = &decl.time {
        f = Arc::new(ProfiledField { profile: p.clone(), inner: f });
    }
    Ok(f)
}

fn build_base(decl: &FieldDecl, manifold: Manifold, n: usize) -> Result<FieldRef, FieldError> {
    let name = decl.name.as_str();
    let p = decl.params.clone();
    let valence = decl.valence.map(|[r, s]| Valence::new(r, s));
    let info = CATALOG.iter().find(|i| i.name == name).ok_or_else(|| FieldError::UnknownField(name.into()))?;
    if info.manifold != manifold && !(info.manifold == Manifold::Euclidean && matches!(name, "zero" | "constant")) {
        return Err(bad(name, format!("defined on {:?}, not on {:?}", info.manifold, manifold)));
    }
    let f = match name {
        "zero" => {
            let v = valence.unwrap_or(Valence::VECTOR);
            let len = v.n_components(n);
            FnField::new(name, v, n, move |_, _, x| vec![Jet::zero(x.len(), x[0].order()); len])
        }
        "constant" => {
            let v = valence.unwrap_or(Valence::VECTOR);
            if p.len() != v.n_components(n) {
                return Err(bad(name, format!("expected {} components", v.n_components(n))));
            }
            FnField::new(name, v, n, move |_, _, x| {
                p.iter().map(|&c| Jet::constant(x.len(), x[0].order(), c)).collect()
            })
        }
        "dilation" => {
            need(name, &p, 1)?;
            FnField::new(name, Valence::VECTOR, n, move |_, _, x| x.iter().map(|xi| xi.scale(p[0])).collect())
        }
        "linear" => {
            need(name, &p, n * n)?;
            FnField::new(name, Valence::VECTOR, n, move |_, _, x| {
                let n = x.len();
                (0..n)
                    .map(|i| {
                        let mut acc = Jet::zero(n, x[0].order());
                        for j in 0..n {
                            acc.axpy(p[i * n + j], &x[j]);
                        }
                        acc
                    })
                    .collect()
            })
        }
        "rotation" => {
            need(name, &p, 1)?;
            planar(name, n)?;
            FnField::new(name, Valence::VECTOR, n, move |_, _, x| vec![x[1].scale(-p[0]), x[0].scale(p[0])])
        }
        "shear" => {
            need(name, &p, 1)?;
            planar(name, n)?;
            FnField::new(name, Valence::VECTOR, n, move |_, _, x| vec![x[1].scale(p[0]), Jet::zero(2, x[0].order())])
        }
        "swirl" => {
            need(name, &p, 2)?;
            planar(name, n)?;
            FnField::new(name, Valence::VECTOR, n, move |_, _, x| {
                vec![x[1].scale(p[1]).sin().scale(p[0]), x[0].scale(p[1]).sin().scale(p[0])]
            })
        }
        "polynomial" => polynomial(name, valence.unwrap_or(Valence::VECTOR), n, &p)?,
        "trig" => {
            need(name, &p, 2)?;
            let v = valence.unwrap_or(Valence::VECTOR);
            FnField::new(name, v, n, move |_, _, x| trig_pattern(x, v, p[0], p[1], false))
        }
        "torus_wave" => {
            need(name, &p, 2)?;
            integer(name, p[1])?;
            FnField::new(name, Valence::VECTOR, n, move |_, _, x| {
                let n = x.len();
                (0..n).map(|l| x[(l + 1) % n].scale(p[1]).add_scalar(l as f64).sin().scale(p[0])).collect()
            })
        }
        "torus_trig" => {
            need(name, &p, 2)?;
            integer(name, p[1])?;
            let v = valence.unwrap_or(Valence::VECTOR);
            FnField::new(name, v, n, move |_, _, x| trig_pattern(x, v, p[0], p[1], true))
        }
        "sphere_rotation" => {
            need(name, &p, 3)?;
            return Ok(sphere_rotation([p[0], p[1], p[2]]));
        }
        "sphere_height" => {
            need(name, &p, 3)?;
            return Ok(sphere_height([p[0], p[1], p[2]]));
        }
        "sphere_exact_form" => {
            need(name, &p, 3)?;
            return Ok(Arc::new(Differential { scalar: sphere_height([p[0], p[1], p[2]]) }));
        }
        "sphere_one_form" => {
            need(name, &p, 6)?;
            let c = sphere_height([p[0], p[1], p[2]]);
            let df: FieldRef = Arc::new(Differential { scalar: sphere_height([p[3], p[4], p[5]]) });
            return Ok(Arc::new(Product::new(c, df)?));
        }
        "sphere_mixed" => {
            need(name, &p, 6)?;
            let v = sphere_rotation([p[0], p[1], p[2]]);
            let df: FieldRef = Arc::new(Differential { scalar: sphere_height([p[3], p[4], p[5]]) });
            return Ok(Arc::new(Product::new(v, df)?));
        }
        _ => return Err(FieldError::UnknownField(name.into())),
    };
    Ok(f.into_ref())
}

fn integer(name: &str, k: f64) -> Result<(), FieldError> {
    if k.fract() != 0.0 {
        return Err(bad(name, "frequency must be an integer to be periodic"));
    }
    Ok(())
}

fn polynomial(name: &str, v: Valence, n: usize, p: &[f64]) -> Result<FnField, FieldError> {
    let degree = *p.first().ok_or_else(|| bad(name, "missing degree"))?;
    if degree < 0.0 || degree.fract() != 0.0 || degree > 8.0 {
        return Err(bad(name, "degree must be an integer in 0..=8"));
    }
    let m = jet_len(n, degree as usize);
    let ncomp = v.n_components(n);
    let coeffs = p[1..].to_vec();
    if coeffs.len() != m * ncomp {
        return Err(bad(name, format!("expected {} coefficients ({} per component)", m * ncomp, m)));
    }
    Ok(FnField::new(name, v, n, move |_, _, x| {
        let n = x.len();
        let order = x[0].order();
        let monos: Vec<Jet> = (0..m)
            .map(|i| {
                let e = exponent(n, i);
                let mut acc = Jet::constant(n, order, 1.0);
                for (l, xl) in x.iter().enumerate() {
                    acc = &acc * &xl.powi(e[l] as u32);
                }
                acc
            })
            .collect();
        (0..ncomp)
            .map(|c| {
                let mut acc = Jet::zero(n, order);
                for (i, mono) in monos.iter().enumerate() {
                    let a = coeffs[c * m + i];
                    if a != 0.0 {
                        acc.axpy(a, mono);
                    }
                }
                acc
            })
            .collect()
    }))
}

fn trig_pattern(x: &[Jet], v: Valence, amp: f64, freq: f64, periodic: bool) -> Vec<Jet> {
    let n = x.len();
    let order = x[0].order();
    (0..v.n_components(n))
        .map(|c| {
            let mut arg = Jet::constant(n, order, 0.3 + 0.7 * c as f64);
            for (l, xl) in x.iter().enumerate() {
                let w = if periodic { 1.0 + ((c + l) % 2) as f64 } else { 1.0 + 0.5 * ((c + 2 * l) % 3) as f64 };
                arg.axpy(freq * w, xl);
            }
            let a = amp * (1.0 + 0.25 * (c % 3) as f64);
            arg.sin().scale(a)
        })
        .collect()
}

/// Embedded point `P ∈ S² ⊂ ℝ³` as jets of the chart coordinates.
pub fn sphere_point(u: &[Jet], chart: ChartId) -> [Jet; 3] {
    let s = &(&u[0] * &u[0]) + &(&u[1] * &u[1]);
    let inv = s.add_scalar(1.0).recip();
    let z = &(-&s).add_scalar(1.0) * &inv;
    [&u[0].scale(2.0) * &inv, &u[1].scale(2.0) * &inv, if chart == 0 { z } else { -z }]
}

pub fn sphere_height(a: [f64; 3]) -> FieldRef {
    FnField::new("sphere_height", Valence::SCALAR, 2, move |_, chart, u| {
        let p = sphere_point(u, chart);
        let mut acc = p[0].scale(a[0]);
        acc.axpy(a[1], &p[1]);
        acc.axpy(a[2], &p[2]);
        vec![acc]
    })
    .into_ref()
}

/// Infinitesimal rotation `w × P` written in stereographic coordinates.
pub fn sphere_rotation(w: [f64; 3]) -> FieldRef {
    FnField::new("sphere_rotation", Valence::VECTOR, 2, move |_, chart, u| {
        let one = Jet::constant(2, u[0].order(), 1.0);
        let (a, b) = (&u[0], &u[1]);
        let aa = a * a;
        let bb = b * b;
        let ab = a * b;
        let half = |j: Jet| j.scale(0.5);
        let (x_axis, y_axis, z_axis) = if chart == 0 {
            ([-&ab, half(&(&aa - &bb) - &one)], [half(&(&one + &aa) - &bb), ab.clone()], [-b, a.clone()])
        } else {
            ([ab.clone(), half(&(&one - &aa) + &bb)], [half(&(&bb - &aa) - &one), -&ab], [-b, a.clone()])
        };
        (0..2)
            .map(|i| {
                let mut acc = x_axis[i].scale(w[0]);
                acc.axpy(w[1], &y_axis[i]);
                acc.axpy(w[2], &z_axis[i]);
                acc
            })
            .collect()
    })
    .into_ref()
}
