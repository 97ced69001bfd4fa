//! Run configuration: a sectioned TOML document, flag overrides, defaults.
//!
//! ```toml
//! experiment = "ids"
//! alpha = 2.0
//! d = 1
//! seed = 7
//!
//! [coupling]
//! law = "bernoulli"
//! p0 = 0.5
//! v = 1.0
//!
//! [geometry]
//! kind = "torus"
//! side = 16
//!
//! [resolution]
//! n = [256]
//!
//! [budget]
//! n_disorder = 10000
//! ```
//!
//! Defaults that depend on the experiment (geometry, resolution, grids) are
//! filled in by [`RunConfig::resolve`]; a resolved config names every value
//! explicitly and serializes back to an equal config.

use std::path::PathBuf;

use lifschitz_core::montecarlo::PotentialLaw;
use lifschitz_core::spectral::{default_embed_factor, Domain};
use lifschitz_core::{CouplingDistribution, SingleSiteProfile};
use serde::{Deserialize, Serialize};

use crate::error::{usage, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Eig,
    Ids,
    LaplaceSpectral,
    LaplaceMc,
    Fit,
    Check,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Eig => "eig",
            Experiment::Ids => "ids",
            Experiment::LaplaceSpectral => "laplace-spectral",
            Experiment::LaplaceMc => "laplace-mc",
            Experiment::Fit => "fit",
            Experiment::Check => "check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingSection {
    Bernoulli { p0: f64, v: f64 },
    Uniform { v_max: f64 },
    Exponential { rate: f64 },
    PointMasses { masses: Vec<[f64; 2]> },
}

impl Default for CouplingSection {
    fn default() -> Self {
        CouplingSection::Bernoulli { p0: 0.5, v: 1.0 }
    }
}

impl CouplingSection {
    pub fn to_core(&self) -> CouplingDistribution {
        match self {
            CouplingSection::Bernoulli { p0, v } => CouplingDistribution::Bernoulli { p0: *p0, v: *v },
            CouplingSection::Uniform { v_max } => CouplingDistribution::Uniform { v_max: *v_max },
            CouplingSection::Exponential { rate } => CouplingDistribution::Exponential { rate: *rate },
            CouplingSection::PointMasses { masses } => CouplingDistribution::PointMasses {
                masses: masses.iter().map(|m| (m[0], m[1])).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSection {
    Indicator {
        radius: f64,
        height: f64,
    },
    Bump {
        radius: f64,
        inner_radius: f64,
        floor: f64,
        height: f64,
    },
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection::Indicator {
            radius: 0.25,
            height: 1.0,
        }
    }
}

impl ProfileSection {
    pub fn to_core(&self) -> SingleSiteProfile {
        match *self {
            ProfileSection::Indicator { radius, height } => SingleSiteProfile::Indicator { radius, height },
            ProfileSection::Bump {
                radius,
                inner_radius,
                floor,
                height,
            } => SingleSiteProfile::Bump {
                radius,
                inner_radius,
                floor,
                height,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySection {
    /// Periodic cell [0, side)^d.
    Torus { side: u32 },
    /// Dirichlet exterior condition outside B(0, radius).
    Ball { radius: f64 },
    /// Dirichlet exterior condition outside the box [lo, hi].
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// The whole line (Monte Carlo only).
    Line,
}

impl GeometrySection {
    pub fn domain(&self, d: usize) -> Option<Domain> {
        match self {
            GeometrySection::Ball { radius } => Some(Domain::ball(d, *radius)),
            GeometrySection::Box { lo, hi } => Some(Domain::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionSection {
    /// Grid points per axis; several values form a refinement schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_factor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSection {
    pub n_disorder: usize,
    pub n_paths: usize,
    pub n_steps: usize,
    /// Average exactly over all disorder configurations of the torus cell.
    pub enumerate: bool,
    pub n_eigen: usize,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            n_disorder: 100,
            n_paths: 1000,
            n_steps: 64,
            enumerate: false,
            n_eigen: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// λ_1 of the unit ball; computed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_d: Option<f64>,
    pub min_hits: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            window: None,
            lambda_d: None,
            min_hits: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub coupling: CouplingSection,
    #[serde(default)]
    pub profile: ProfileSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySection>,
    #[serde(default)]
    pub resolution: ResolutionSection,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub fit: FitSection,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub alpha: Option<f64>,
    pub d: Option<usize>,
    pub ball_r: Option<f64>,
    pub n: Option<Vec<usize>>,
}

/// Parses a document without applying defaults; unknown keys are errors.
pub fn parse_document(text: &str) -> Result<RunConfig, RunError> {
    toml::from_str(text).map_err(|e| RunError::Usage(format!("config: {}", e.message().trim()).replace('\n', " ")))
}

/// Parses and resolves a document.
pub fn parse_config(text: &str) -> Result<RunConfig, RunError> {
    parse_document(text)?.resolve()
}

fn log_grid(lo_exp: f64, hi_exp: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| 10f64.powf(lo_exp + (hi_exp - lo_exp) * i as f64 / (count - 1) as f64))
        .collect()
}

fn check_grid(key: &str, g: &[f64]) -> Result<(), RunError> {
    if g.is_empty() {
        return usage(format!("{key} must not be empty"));
    }
    if g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return usage(format!("{key} entries must be positive and finite"));
    }
    if g.windows(2).any(|w| !(w[1] > w[0])) {
        return usage(format!("{key} must be strictly increasing"));
    }
    Ok(())
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(e) = o.experiment {
            self.experiment = Some(e);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        if let Some(a) = o.alpha {
            self.alpha = Some(a);
        }
        if let Some(d) = o.d {
            self.d = Some(d);
        }
        if let Some(r) = o.ball_r {
            self.geometry = Some(GeometrySection::Ball { radius: r });
        }
        if let Some(n) = &o.n {
            self.resolution.n = Some(n.clone());
        }
    }

    /// Fills experiment-dependent defaults and validates every field.
    pub fn resolve(mut self) -> Result<RunConfig, RunError> {
        let Some(exp) = self.experiment else {
            return usage("experiment is required (eig, ids, laplace-spectral, laplace-mc, fit, check)");
        };
        if exp == Experiment::Check {
            self.alpha.get_or_insert(2.0);
            self.d.get_or_insert(1);
        }
        let Some(alpha) = self.alpha else {
            return usage("alpha is required");
        };
        let Some(d) = self.d else {
            return usage("d is required");
        };
        if !(alpha > 0.0 && alpha <= 2.0) {
            return usage(format!("alpha = {alpha} violates the constraint alpha ∈ (0, 2]"));
        }
        if !(1..=3).contains(&d) {
            return usage(format!("d = {d} violates the constraint d ∈ {{1, 2, 3}}"));
        }
        if self.workers == Some(0) {
            return usage("workers must be at least 1");
        }
        let b = &self.budget;
        for (key, v) in [
            ("budget.n_disorder", b.n_disorder),
            ("budget.n_paths", b.n_paths),
            ("budget.n_steps", b.n_steps),
            ("budget.n_eigen", b.n_eigen),
            ("fit.min_hits", self.fit.min_hits),
        ] {
            if v < 1 {
                return usage(format!("{key} = {v} must be at least 1"));
            }
        }
        if !b.n_steps.is_multiple_of(2) {
            return usage(format!("budget.n_steps = {} must be even", b.n_steps));
        }
        self.coupling
            .to_core()
            .validate()
            .map_err(|e| RunError::Usage(format!("coupling: {e}")))?;
        self.profile
            .to_core()
            .validate()
            .map_err(|e| RunError::Usage(format!("profile: {e}")))?;

        let geometry = self.geometry.clone().unwrap_or(match exp {
            Experiment::Eig => GeometrySection::Ball { radius: 1.0 },
            Experiment::LaplaceMc => GeometrySection::Torus { side: 1 },
            _ => GeometrySection::Torus { side: 16 },
        });
        match &geometry {
            GeometrySection::Torus { side } if *side == 0 => return usage("geometry.side must be at least 1"),
            GeometrySection::Ball { radius } if !(*radius > 0.0 && radius.is_finite()) => {
                return usage(format!("geometry.radius = {radius} must be positive"))
            }
            GeometrySection::Box { lo, hi } => {
                if lo.len() != d || hi.len() != d {
                    return usage(format!("geometry.lo and geometry.hi need {d} entries"));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
                    return usage("geometry.hi must exceed geometry.lo on every axis");
                }
            }
            _ => {}
        }
        let needs = match exp {
            Experiment::Eig => !matches!(geometry, GeometrySection::Line),
            Experiment::LaplaceMc => matches!(geometry, GeometrySection::Torus { .. } | GeometrySection::Line),
            Experiment::Check => true,
            _ => matches!(geometry, GeometrySection::Torus { .. }),
        };
        if !needs {
            return usage(format!("geometry.kind does not fit the {} experiment", exp.name()));
        }
        if exp == Experiment::LaplaceMc && d != 1 {
            return usage(format!("d = {d}: the laplace-mc experiment supports d = 1 only"));
        }
        if self.budget.enumerate
            && !matches!(
                self.coupling,
                CouplingSection::Bernoulli { .. } | CouplingSection::PointMasses { .. }
            )
        {
            return usage("budget.enumerate needs a finite coupling law (bernoulli or point_masses)");
        }
        if self.budget.enumerate && matches!(exp, Experiment::Eig | Experiment::Ids | Experiment::Fit) {
            return usage(format!(
                "budget.enumerate is not available for the {} experiment",
                exp.name()
            ));
        }
        self.geometry = Some(geometry);

        let n = self.resolution.n.clone().unwrap_or(match exp {
            Experiment::Eig => vec![256, 512, 1024],
            _ => vec![256],
        });
        if n.is_empty() {
            return usage("resolution.n must not be empty");
        }
        if let Some(bad) = n.iter().find(|v| **v < 8 || **v % 2 != 0) {
            return usage(format!("resolution.n entry {bad} must be even and at least 8"));
        }
        if n.windows(2).any(|w| w[1] <= w[0]) {
            return usage("resolution.n must be strictly increasing");
        }
        self.resolution.n = Some(n);
        let embed = self.resolution.embed_factor.unwrap_or(default_embed_factor(d));
        if embed < 3 {
            return usage(format!("resolution.embed_factor = {embed} must be at least 3"));
        }
        self.resolution.embed_factor = Some(embed);

        let lambdas = self.grid.lambdas.clone().unwrap_or_else(|| log_grid(-2.0, 1.0, 41));
        check_grid("grid.lambdas", &lambdas)?;
        self.grid.lambdas = Some(lambdas);
        let ts = self.grid.ts.clone().unwrap_or_else(|| match exp {
            Experiment::LaplaceMc | Experiment::LaplaceSpectral => vec![0.5, 1.0, 2.0],
            _ => log_grid(0.0, 3.0, 13),
        });
        check_grid("grid.ts", &ts)?;
        self.grid.ts = Some(ts);
        if let Some([lo, hi]) = self.fit.window {
            if !(lo > 0.0 && hi > lo) {
                return usage("fit.window must be [lo, hi] with 0 < lo < hi");
            }
        }
        if let Some(l) = self.fit.lambda_d {
            if !(l > 0.0 && l.is_finite()) {
                return usage(format!("fit.lambda_d = {l} must be positive"));
            }
        }
        if self.out.is_none() {
            self.out = Some(PathBuf::from("lifschitz-out").join(exp.name()));
        }
        Ok(self)
    }

    pub fn experiment(&self) -> Experiment {
        self.experiment.expect("resolved config")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.expect("resolved config")
    }

    pub fn d(&self) -> usize {
        self.d.expect("resolved config")
    }

    pub fn geometry(&self) -> &GeometrySection {
        self.geometry.as_ref().expect("resolved config")
    }

    pub fn schedule(&self) -> &[usize] {
        self.resolution.n.as_deref().expect("resolved config")
    }

    pub fn embed_factor(&self) -> usize {
        self.resolution.embed_factor.expect("resolved config")
    }

    pub fn lambdas(&self) -> &[f64] {
        self.grid.lambdas.as_deref().expect("resolved config")
    }

    pub fn ts(&self) -> &[f64] {
        self.grid.ts.as_deref().expect("resolved config")
    }

    pub fn out(&self) -> &std::path::Path {
        self.out.as_deref().expect("resolved config")
    }

    pub fn law(&self) -> PotentialLaw {
        PotentialLaw {
            profile: self.profile.to_core(),
            dist: self.coupling.to_core(),
            transforms: vec![],
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
