//! Discrete verification of the Itô-Wentzell formulas for pull-backs and
//! push-forwards of random tensor fields along stochastic flows.
//!
//! A scenario fixes the flow, the random field
//! `K(t) = K₀ + Σ_i ∫ G_i dA^i + Σ_i ∫ G_i dM^i`, and the formula under test. For each ensemble member
//! and each refinement level the verifier evaluates both sides of the
//! formula on the grid and records the sup-in-time residual.

mod expanded;
mod kpath;
mod pull;
mod push;
mod study;

pub use expanded::{expanded_integrand_check, ExpandedCheck, ExpandedState};
pub use kpath::{synthesize_k_path, KPath, KPathField};
pub use pull::{
    assemble_rhs, eval_lhs, eval_rhs, g_fields, pull_integrands, scalar_rhs, stratonovich_bridge_check, Integrands,
    Rhs, TermPaths, TERM_NAMES,
};
pub use push::{push_integrands, push_sample, PushSample};
pub use study::{
    bridge_deviation, convergence_study, evaluate_sides, member_drivers, pulled_value, run_path, scenario_flow,
    scenario_k, LevelStats, PathOutcome, ResidualReport, StudyConfig,
};

use crate::flow::{FlowError, FlowSde, Scheme};
use crate::geometry::{ChartAtlas, ChartId, GeometryError, Manifold, Valence};
use crate::stochastics::{BracketMode, DriverDecl, DriverSpec, StochasticError};
use crate::tensor::{build_field, FieldDecl, FieldError, FieldRef, TimeProfile};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
}

/// The formula a scenario checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    KiwItoPullback,
    KiwItoPushforward,
    KiwStratPullback,
    KiwStratPushforward,
    KunitaSecond,
    KunitaFirst,
    ScalarItoWentzell,
}

impl Theorem {
    pub const ALL: [Theorem; 7] = [
        Theorem::KiwItoPullback,
        Theorem::KiwItoPushforward,
        Theorem::KiwStratPullback,
        Theorem::KiwStratPushforward,
        Theorem::KunitaSecond,
        Theorem::KunitaFirst,
        Theorem::ScalarItoWentzell,
    ];

    pub fn is_push(&self) -> bool {
        matches!(self, Theorem::KiwItoPushforward | Theorem::KiwStratPushforward | Theorem::KunitaFirst)
    }

    pub fn is_strat(&self) -> bool {
        matches!(self, Theorem::KiwStratPullback | Theorem::KiwStratPushforward)
    }

    pub fn default_scheme(&self) -> Scheme {
        if self.is_strat() {
            Scheme::Heun
        } else {
            Scheme::Euler
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Theorem::KiwItoPullback => "kiw_ito_pullback",
            Theorem::KiwItoPushforward => "kiw_ito_pushforward",
            Theorem::KiwStratPullback => "kiw_strat_pullback",
            Theorem::KiwStratPushforward => "kiw_strat_pushforward",
            Theorem::KunitaSecond => "kunita_second",
            Theorem::KunitaFirst => "kunita_first",
            Theorem::ScalarItoWentzell => "scalar_ito_wentzell",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Theorem::KiwItoPullback => "Itô form, pull-back φ*K of a random tensor field",
            Theorem::KiwItoPushforward => "Itô form, push-forward φ_*K of a random tensor field",
            Theorem::KiwStratPullback => "Stratonovich form, pull-back",
            Theorem::KiwStratPushforward => "Stratonovich form, push-forward",
            Theorem::KunitaSecond => "pull-back of a deterministic tensor field",
            Theorem::KunitaFirst => "push-forward of a deterministic tensor field",
            Theorem::ScalarItoWentzell => "classical scalar Itô-Wentzell formula",
        }
    }

    /// `(K, G, flow class k)` smoothness the formula needs.
    pub fn requirements(&self) -> (usize, usize, usize) {
        match self {
            Theorem::KiwItoPullback => (2, 1, 1),
            Theorem::KiwItoPushforward => (2, 1, 3),
            Theorem::KiwStratPullback | Theorem::KiwStratPushforward => (3, 2, 4),
            Theorem::KunitaSecond | Theorem::KunitaFirst => (3, 0, 4),
            Theorem::ScalarItoWentzell => (2, 1, 1),
        }
    }
}

impl std::str::FromStr for Theorem {
    type Err = String;
    fn from_str(s: &str) -> Result<Theorem, String> {
        Theorem::ALL.iter().copied().find(|t| t.key() == s).ok_or_else(|| format!("unknown theorem `{s}`"))
    }
}

/// `G_i(t, x) = θ_i(t) H_i(x)` driving `K` through driver `driver`.
#[derive(Clone, Debug)]
pub struct GTerm {
    pub profile: TimeProfile,
    pub field: FieldRef,
    pub driver: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GDecl {
    pub field: FieldDecl,
    #[serde(default = "unit_profile")]
    pub profile: TimeProfile,
    #[serde(default)]
    pub driver: usize,
}

fn unit_profile() -> TimeProfile {
    TimeProfile::Constant { value: 1.0 }
}

fn default_dim() -> usize {
    2
}

fn default_horizon() -> f64 {
    1.0
}

fn default_steps() -> usize {
    64
}

/// Closed-form flows that may replace the numerical scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactFlow {
    /// `b = c x`, `ξ_j = a_j x`: `φ_t(x) = x exp(c t + Σ a_j B^j_t)`.
    Dilation,
}

/// A scenario as written in a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDecl {
    pub name: String,
    pub theorem: Theorem,
    pub manifold: Manifold,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub chart: ChartId,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub base_steps: usize,
    #[serde(default)]
    pub scheme: Option<Scheme>,
    #[serde(default)]
    pub bracket: BracketMode,
    /// Total Brownian components; defaults to the number of diffusions.
    #[serde(default)]
    pub brownian: Option<usize>,
    pub drift: FieldDecl,
    #[serde(default)]
    pub diffusions: Vec<FieldDecl>,
    pub k: FieldDecl,
    #[serde(default)]
    pub g: Vec<GDecl>,
    #[serde(default)]
    pub drivers: Vec<DriverDecl>,
    #[serde(default)]
    pub r_max: Option<f64>,
    #[serde(default)]
    pub exact_flow: Option<ExactFlow>,
    /// Finite-difference step for jets of pushed-forward fields.
    #[serde(default)]
    pub fd_eps: Option<f64>,
}

/// A resolved, validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub theorem: Theorem,
    pub sde: FlowSde,
    pub x0: Vec<f64>,
    pub chart0: ChartId,
    pub horizon: f64,
    pub base_steps: usize,
    pub scheme: Scheme,
    pub bracket: BracketMode,
    pub drivers: Arc<DriverSpec>,
    pub k0: FieldRef,
    pub g: Vec<GTerm>,
    pub exact_flow: Option<ExactFlow>,
    pub fd_eps: f64,
    pub decl: ScenarioDecl,
}

fn violation(msg: String) -> VerifyError {
    VerifyError::HypothesisViolation(msg)
}

impl Scenario {
    pub fn from_decl(decl: &ScenarioDecl) -> Result<Scenario, VerifyError> {
        let atlas = Arc::new(match decl.manifold {
            Manifold::Euclidean => ChartAtlas::euclidean(decl.dim),
            Manifold::Torus => ChartAtlas::torus(decl.dim),
            Manifold::Sphere => ChartAtlas::sphere(),
        });
        let n = atlas.dim;
        let build = |f: &FieldDecl| build_field(f, decl.manifold, n);
        let drift = build(&decl.drift)?;
        let diffusions = decl.diffusions.iter().map(build).collect::<Result<Vec<_>, _>>()?;
        let mut sde = FlowSde::new(drift, diffusions, atlas.clone())?;
        if let Some(r) = decl.r_max {
            sde.r_max = r;
        }
        let k0 = build(&decl.k)?;
        let g = decl
            .g
            .iter()
            .map(|gd| Ok(GTerm { profile: gd.profile.clone(), field: build(&gd.field)?, driver: gd.driver }))
            .collect::<Result<Vec<_>, VerifyError>>()?;
        let brownian = decl.brownian.unwrap_or(decl.diffusions.len());
        let drivers = Arc::new(DriverSpec { brownian, drivers: decl.drivers.clone() });
        drivers.validate()?;
        let invalid = |m: String| Err(VerifyError::InvalidScenario(m));
        if decl.x0.len() != n {
            return invalid(format!("x0 has {} coordinates, manifold has dimension {n}", decl.x0.len()));
        }
        if !atlas.chart(decl.chart)?.in_u(&decl.x0) {
            return invalid("x0 is outside its chart".into());
        }
        if brownian < decl.diffusions.len() {
            return invalid(format!("{} diffusions but only {brownian} Brownian components", decl.diffusions.len()));
        }
        if decl.horizon.is_nan() || decl.horizon <= 0.0 || decl.base_steps == 0 {
            return invalid("horizon and base_steps must be positive".into());
        }
        for (i, gt) in g.iter().enumerate() {
            if gt.driver >= drivers.drivers.len() {
                return invalid(format!(
                    "g[{i}] uses driver {} but only {} are declared",
                    gt.driver,
                    drivers.drivers.len()
                ));
            }
            if gt.field.valence() != k0.valence() {
                return invalid(format!("g[{i}] has valence {} but K has {}", gt.field.valence(), k0.valence()));
            }
        }
        if let Some(ExactFlow::Dilation) = decl.exact_flow {
            let ok = |f: &FieldDecl| f.name == "dilation" && f.time.is_none();
            if decl.manifold != Manifold::Euclidean || !ok(&decl.drift) || !decl.diffusions.iter().all(ok) {
                return invalid("the closed-form dilation flow needs dilation drift and diffusions on R^n".into());
            }
        }
        let scenario = Scenario {
            name: decl.name.clone(),
            theorem: decl.theorem,
            sde,
            x0: decl.x0.clone(),
            chart0: decl.chart,
            horizon: decl.horizon,
            base_steps: decl.base_steps,
            scheme: decl.scheme.unwrap_or(decl.theorem.default_scheme()),
            bracket: decl.bracket,
            drivers,
            k0,
            g,
            exact_flow: decl.exact_flow,
            fd_eps: decl.fd_eps.unwrap_or(1e-4),
            decl: decl.clone(),
        };
        scenario.check_hypotheses()?;
        Ok(scenario)
    }

    /// Refuse to run a formula outside its smoothness hypotheses.
    pub fn check_hypotheses(&self) -> Result<(), VerifyError> {
        let t = self.theorem;
        let (need_k, need_g, class) = t.requirements();
        let label = t.key();
        if matches!(t, Theorem::KunitaSecond | Theorem::KunitaFirst) && !self.g.is_empty() {
            return Err(violation(format!("{label} is stated for deterministic K; remove the G terms")));
        }
        if t == Theorem::ScalarItoWentzell && self.k0.valence() != Valence::SCALAR {
            return Err(violation(format!("{label} needs a scalar field, K has valence {}", self.k0.valence())));
        }
        let b = self.sde.drift.smoothness();
        let xi = self.sde.diffusions.iter().map(|f| f.smoothness()).min();
        let need_xi = (class + 1).max(2);
        if b < class || xi.is_some_and(|x| x < need_xi) {
            return Err(violation(format!(
                "{label} requires flow coefficients of class k = {class}: drift C^{class} and diffusions C^{need_xi}; \
                 got drift C^{b} and diffusions C^{}",
                xi.map_or("-".to_string(), |x| x.to_string())
            )));
        }
        if self.k0.smoothness() < need_k {
            return Err(violation(format!(
                "{label} needs K of class C^{need_k}, `{}` is C^{}",
                self.k0.name(),
                self.k0.smoothness()
            )));
        }
        for gt in &self.g {
            if gt.field.smoothness() < need_g {
                return Err(violation(format!(
                    "{label} needs G of class C^{need_g}, `{}` is C^{}",
                    gt.field.name(),
                    gt.field.smoothness()
                )));
            }
            if t.is_strat() && !gt.profile.time_c1() {
                return Err(violation(format!("{label} needs G to be C^1 in time")));
            }
        }
        self.sde.check_scheme(self.scheme)?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.sde.dim()
    }
}
