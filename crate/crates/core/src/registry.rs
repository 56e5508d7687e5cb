//! Built-in scenarios, one or more per formula.

use crate::flow::Scheme;
use crate::geometry::Manifold;
use crate::stochastics::{BracketMode, DriverDecl, FvSpec, MartSpec};
use crate::tensor::{FieldDecl, TimeProfile};
use crate::verifier::{ExactFlow, GDecl, ScenarioDecl, Theorem};

fn f(name: &str, params: &[f64]) -> FieldDecl {
    FieldDecl::new(name, params)
}

fn g(field: FieldDecl, driver: usize) -> GDecl {
    GDecl { field, profile: TimeProfile::Constant { value: 1.0 }, driver }
}

fn fv(rate: f64) -> DriverDecl {
    DriverDecl { fv: FvSpec::Linear { rate }, mart: MartSpec::Zero }
}

fn bm(component: usize) -> DriverDecl {
    DriverDecl { fv: FvSpec::Zero, mart: MartSpec::Brownian { component } }
}

fn base(name: &str, theorem: Theorem, manifold: Manifold, dim: usize, x0: &[f64]) -> ScenarioDecl {
    ScenarioDecl {
        name: name.into(),
        theorem,
        manifold,
        dim,
        x0: x0.to_vec(),
        chart: 0,
        horizon: 1.0,
        base_steps: 64,
        scheme: None,
        bracket: BracketMode::Realized,
        brownian: None,
        drift: f("zero", &[]),
        diffusions: Vec::new(),
        k: f("zero", &[]),
        g: Vec::new(),
        drivers: Vec::new(),
        r_max: None,
        exact_flow: None,
        fd_eps: None,
    }
}

/// Flow with a bounded drift and one rotational noise on the plane, a
/// `(1,1)` field `K` and two `G` terms: one against `A_t = t`, one against
/// an independent Brownian motion `B²`.
fn planar_kiw(name: &str, theorem: Theorem) -> ScenarioDecl {
    let mut d = base(name, theorem, Manifold::Euclidean, 2, &[0.3, -0.2]);
    d.drift = f("swirl", &[0.5, 1.0]);
    d.diffusions = vec![f("rotation", &[0.5])];
    d.brownian = Some(2);
    d.k = f("trig", &[0.5, 1.0]).with_valence(1, 1);
    d.g = vec![g(f("trig", &[0.3, 0.8]).with_valence(1, 1), 0), g(f("trig", &[0.2, 1.2]).with_valence(1, 1), 1)];
    d.drivers = vec![fv(1.0), bm(1)];
    d
}

pub fn builtin() -> Vec<ScenarioDecl> {
    let mut out = Vec::new();

    let mut d = base("identity", Theorem::KiwItoPullback, Manifold::Euclidean, 2, &[0.3, -0.2]);
    d.brownian = Some(1);
    d.k = f("trig", &[0.5, 1.0]).with_valence(1, 1);
    d.g = vec![g(f("trig", &[0.3, 0.8]).with_valence(1, 1), 0)];
    d.drivers = vec![DriverDecl { fv: FvSpec::Linear { rate: 1.0 }, mart: MartSpec::Brownian { component: 0 } }];
    out.push(d);

    let mut d = base("deterministic", Theorem::KiwItoPullback, Manifold::Euclidean, 2, &[0.3, -0.2]);
    d.drift = f("swirl", &[0.8, 1.0]);
    d.k = f("trig", &[0.5, 1.0]).with_valence(1, 1);
    d.g = vec![g(f("trig", &[0.3, 0.8]).with_valence(1, 1), 0)];
    d.drivers = vec![fv(1.0)];
    out.push(d);

    let mut d = base("kunita_sphere", Theorem::KunitaSecond, Manifold::Sphere, 2, &[0.2, 0.1]);
    d.drift = f("sphere_rotation", &[0.0, 3.0, 0.0]);
    d.diffusions = vec![f("sphere_rotation", &[0.6, 0.0, 0.0]), f("sphere_rotation", &[0.0, 0.0, 0.6])];
    d.k = f("sphere_mixed", &[0.0, 0.0, 1.0, 1.0, 0.5, -0.3]);
    out.push(d);

    out.push(planar_kiw("kiw_ito_pull", Theorem::KiwItoPullback));

    let mut d = base("gbm_one_form", Theorem::KiwItoPullback, Manifold::Euclidean, 1, &[1.0]);
    d.drift = f("dilation", &[0.0]);
    d.diffusions = vec![f("dilation", &[1.0])];
    d.k = f("constant", &[1.0]).with_valence(0, 1);
    d.exact_flow = Some(ExactFlow::Dilation);
    out.push(d);

    let mut d = planar_kiw("kiw_ito_push", Theorem::KiwItoPushforward);
    d.base_steps = 32;
    d.drift = d.drift.with_smoothness(3);
    d.diffusions = d.diffusions.into_iter().map(|x| x.with_smoothness(4)).collect();
    out.push(d);

    let mut d = planar_kiw("kiw_strat_pull", Theorem::KiwStratPullback);
    d.scheme = Some(Scheme::Heun);
    out.push(d);

    let mut d = planar_kiw("kiw_strat_push", Theorem::KiwStratPushforward);
    d.scheme = Some(Scheme::Heun);
    d.base_steps = 32;
    out.push(d);

    let mut d = base("kunita_first", Theorem::KunitaFirst, Manifold::Euclidean, 2, &[0.3, -0.2]);
    d.base_steps = 32;
    d.drift = f("swirl", &[0.5, 1.0]);
    d.diffusions = vec![f("rotation", &[0.5])];
    d.k = f("trig", &[0.5, 1.0]).with_valence(1, 1);
    out.push(d);

    let mut d = base("scalar_iw", Theorem::ScalarItoWentzell, Manifold::Euclidean, 2, &[0.3, -0.2]);
    d.drift = f("swirl", &[0.5, 1.0]);
    d.diffusions = vec![f("rotation", &[0.5])];
    d.brownian = Some(2);
    d.k = f("trig", &[0.5, 1.0]).with_valence(0, 0);
    d.g = vec![g(f("trig", &[0.3, 0.8]).with_valence(0, 0), 0), g(f("trig", &[0.2, 1.2]).with_valence(0, 0), 1)];
    d.drivers = vec![fv(1.0), bm(1)];
    out.push(d);

    let mut d = base("torus_kiw", Theorem::KiwItoPullback, Manifold::Torus, 2, &[0.4, 0.7]);
    d.drift = f("torus_wave", &[1.5, 1.0]);
    d.diffusions = vec![f("torus_wave", &[0.5, 2.0])];
    d.brownian = Some(2);
    d.k = f("torus_trig", &[0.5, 1.0]).with_valence(0, 1);
    d.g = vec![g(f("torus_trig", &[0.3, 2.0]).with_valence(0, 1), 0)];
    d.drivers =
        vec![DriverDecl { fv: FvSpec::Sine { amp: 1.0, freq: 2.0 }, mart: MartSpec::Brownian { component: 1 } }];
    out.push(d);

    out
}

pub fn find(name: &str) -> Option<ScenarioDecl> {
    builtin().into_iter().find(|d| d.name == name)
}
