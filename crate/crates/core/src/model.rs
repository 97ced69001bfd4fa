//! Coupling laws, lattice disorder fields, single-site profiles and the
//! alloy-type potential V(x) = Σ_i q_i W(x − i).

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, LabError, Result};
use crate::rng;

const PROB_TOL: f64 = 1e-12;

/// Law of the i.i.d. nonnegative couplings q_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingDistribution {
    /// q = 0 with probability `p0`, q = `v` otherwise.
    Bernoulli { p0: f64, v: f64 },
    /// q uniform on [0, v_max].
    Uniform { v_max: f64 },
    /// q exponential with the given rate.
    Exponential { rate: f64 },
    /// Finite law given as (value, probability) pairs.
    PointMasses { masses: Vec<(f64, f64)> },
}

impl CouplingDistribution {
    /// Checks nonnegativity, normalization, nondegeneracy and F_q(κ) > 0 for all κ > 0.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Bernoulli { p0, v } => {
                if !(*p0 > 0.0 && *p0 < 1.0) {
                    return domain(format!("bernoulli p0 = {p0} must lie in (0, 1)"));
                }
                if !(*v > 0.0 && v.is_finite()) {
                    return domain(format!("bernoulli level v = {v} must be positive"));
                }
            }
            Self::Uniform { v_max } => {
                if !(*v_max > 0.0 && v_max.is_finite()) {
                    return domain(format!("uniform v_max = {v_max} must be positive"));
                }
            }
            Self::Exponential { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return domain(format!("exponential rate = {rate} must be positive"));
                }
            }
            Self::PointMasses { masses } => {
                if masses.is_empty() {
                    return domain("point-mass law has no atoms");
                }
                let mut total = 0.0;
                for &(v, p) in masses {
                    if !(v >= 0.0 && v.is_finite()) {
                        return domain(format!("atom value {v} must be finite and nonnegative"));
                    }
                    if !(p >= 0.0) {
                        return domain(format!("atom probability {p} is negative"));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > PROB_TOL {
                    return domain(format!("atom probabilities sum to {total}, not 1"));
                }
                let support = self.finite_support().unwrap_or_default();
                if support.len() < 2 {
                    return domain("coupling law is degenerate (single atom)");
                }
                if support[0].0 != 0.0 {
                    return domain(format!(
                        "F_q(κ) = 0 for κ < {}: the smallest atom must be at zero",
                        support[0].0
                    ));
                }
            }
        }
        Ok(())
    }

    /// F_q(0) = P[q = 0].
    pub fn atom_at_zero(&self) -> f64 {
        match self {
            Self::Bernoulli { p0, .. } => *p0,
            Self::Uniform { .. } | Self::Exponential { .. } => 0.0,
            Self::PointMasses { masses } => masses.iter().filter(|(v, _)| *v == 0.0).map(|(_, p)| p).sum(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            Self::Bernoulli { p0, v } => {
                if x < *v {
                    *p0
                } else {
                    1.0
                }
            }
            Self::Uniform { v_max } => (x / v_max).min(1.0),
            Self::Exponential { rate } => 1.0 - (-rate * x).exp(),
            Self::PointMasses { masses } => masses
                .iter()
                .filter(|(v, _)| *v <= x)
                .map(|(_, p)| p)
                .sum::<f64>()
                .min(1.0),
        }
    }

    /// Inverse CDF at u ∈ (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Self::Bernoulli { p0, v } => {
                if u < *p0 {
                    0.0
                } else {
                    *v
                }
            }
            Self::Uniform { v_max } => u * v_max,
            Self::Exponential { rate } => -(-u).ln_1p() / rate,
            Self::PointMasses { .. } => {
                let support = self.finite_support().unwrap_or_default();
                let mut acc = 0.0;
                for &(v, p) in &support {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                support.last().map(|s| s.0).unwrap_or(0.0)
            }
        }
    }

    /// Atoms sorted by value with duplicates merged; `None` for continuous laws.
    pub fn finite_support(&self) -> Option<Vec<(f64, f64)>> {
        let mut atoms: Vec<(f64, f64)> = match self {
            Self::Bernoulli { p0, v } => vec![(0.0, *p0), (*v, 1.0 - p0)],
            Self::PointMasses { masses } => masses.clone(),
            Self::Uniform { .. } | Self::Exponential { .. } => return None,
        };
        atoms.retain(|(_, p)| *p > 0.0);
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        Some(merged)
    }

    /// Laplace transform E[e^{−s q}] for s ≥ 0.
    pub fn laplace(&self, s: f64) -> f64 {
        match self {
            Self::Uniform { v_max } => {
                let x = s * v_max;
                if x < 1e-8 {
                    1.0 - x / 2.0
                } else {
                    -(-x).exp_m1() / x
                }
            }
            Self::Exponential { rate } => rate / (rate + s),
            _ => self
                .finite_support()
                .unwrap_or_default()
                .iter()
                .map(|(v, p)| p * (-s * v).exp())
                .sum(),
        }
    }

    pub fn max_value(&self) -> f64 {
        match self {
            Self::Bernoulli { v, .. } => *v,
            Self::Uniform { v_max } => *v_max,
            Self::Exponential { .. } => f64::INFINITY,
            Self::PointMasses { masses } => masses.iter().map(|m| m.0).fold(0.0, f64::max),
        }
    }
}

/// Integer box ∏ [lo_j, hi_j) in Z^d.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return domain("lattice box bounds must have equal, nonzero length");
        }
        Ok(Self { lo, hi })
    }

    /// The cube [lo, hi)^d.
    pub fn cube(d: usize, lo: i64, hi: i64) -> Self {
        Self {
            lo: vec![lo; d],
            hi: vec![hi; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l).max(0) as usize)
            .product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, site: &[i64]) -> bool {
        site.len() == self.dim()
            && site
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(s, (l, h))| s >= l && s < h)
    }

    /// Row-major index, last axis fastest.
    pub fn index(&self, site: &[i64]) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let mut idx = 0usize;
        for ((s, lo), hi) in site.iter().zip(&self.lo).zip(&self.hi) {
            idx = idx * (hi - lo) as usize + (s - lo) as usize;
        }
        Some(idx)
    }

    pub fn site(&self, mut idx: usize) -> Vec<i64> {
        let d = self.dim();
        let mut site = vec![0; d];
        for j in (0..d).rev() {
            let extent = (self.hi[j] - self.lo[j]) as usize;
            site[j] = self.lo[j] + (idx % extent) as i64;
            idx /= extent;
        }
        site
    }

    pub fn sites(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }
}

/// Post-processing applied to sampled couplings, in order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum FieldTransform {
    /// q ↦ 0 if q ≤ κ, κ otherwise.
    Truncate { kappa: f64 },
    /// q ↦ c q.
    Scale { factor: f64 },
}

impl FieldTransform {
    #[inline]
    pub fn apply(&self, q: f64) -> f64 {
        match *self {
            Self::Truncate { kappa } => {
                if q <= kappa {
                    0.0
                } else {
                    kappa
                }
            }
            Self::Scale { factor } => factor * q,
        }
    }
}

fn keyed_coupling(dist: &CouplingDistribution, seed: u64, site: &[i64], tf: &[FieldTransform]) -> f64 {
    let q = dist.quantile(rng::open_unit(rng::key(seed, site)));
    tf.iter().fold(q, |q, t| t.apply(q))
}

/// Couplings on all of Z^d, generated on demand from `(seed, site)`.
///
/// Any [`DisorderField`] with the same seed and law agrees with this source on
/// its box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyedCouplings {
    pub dist: CouplingDistribution,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transforms: Vec<FieldTransform>,
}

impl KeyedCouplings {
    pub fn value(&self, site: &[i64]) -> f64 {
        keyed_coupling(&self.dist, self.seed, site, &self.transforms)
    }
}

/// A realization {q_i} on a finite lattice box.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderField {
    lattice: LatticeBox,
    dist: CouplingDistribution,
    seed: u64,
    transforms: Vec<FieldTransform>,
    values: Vec<f64>,
    /// Values were supplied directly and cannot be regenerated from the seed.
    explicit: bool,
}

/// Samples i.i.d. couplings on `lattice`; each value depends only on `(seed, site)`.
pub fn sample_disorder(dist: &CouplingDistribution, lattice: &LatticeBox, seed: u64) -> Result<DisorderField> {
    dist.validate()?;
    sample_unchecked(dist, lattice, seed)
}

pub(crate) fn sample_unchecked(dist: &CouplingDistribution, lattice: &LatticeBox, seed: u64) -> Result<DisorderField> {
    if lattice.is_empty() {
        return domain("cannot sample disorder on an empty box");
    }
    let values = lattice.sites().map(|s| keyed_coupling(dist, seed, &s, &[])).collect();
    Ok(DisorderField {
        lattice: lattice.clone(),
        dist: dist.clone(),
        seed,
        transforms: Vec::new(),
        values,
        explicit: false,
    })
}

/// Maps each coupling to 0 if q ≤ κ and to κ otherwise.
pub fn truncate_kappa(field: &DisorderField, kappa: f64) -> Result<DisorderField> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return domain(format!("truncation level κ = {kappa} must be positive"));
    }
    Ok(field.transformed(FieldTransform::Truncate { kappa }))
}

/// JSON form of a field: values are optional when the field can be regenerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderDocument {
    pub dist: CouplingDistribution,
    #[serde(rename = "box")]
    pub lattice: LatticeBox,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transforms: Vec<FieldTransform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl DisorderField {
    /// A field with explicitly given values (row-major over `lattice`).
    pub fn from_values(dist: CouplingDistribution, lattice: LatticeBox, seed: u64, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return domain(format!(
                "{} values supplied for a box of {} sites",
                values.len(),
                lattice.len()
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return domain("coupling values must be finite and nonnegative");
        }
        Ok(Self {
            lattice,
            dist,
            seed,
            transforms: Vec::new(),
            values,
            explicit: true,
        })
    }

    pub fn lattice(&self) -> &LatticeBox {
        &self.lattice
    }

    pub fn dist(&self) -> &CouplingDistribution {
        &self.dist
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transforms(&self) -> &[FieldTransform] {
        &self.transforms
    }

    pub fn value(&self, site: &[i64]) -> Option<f64> {
        self.lattice.index(site).map(|i| self.values[i])
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn transformed(&self, tf: FieldTransform) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|q| *q = tf.apply(*q));
        out.transforms.push(tf);
        out
    }

    /// Multiplies every coupling by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return domain(format!("scale factor {factor} must be finite and nonnegative"));
        }
        Ok(self.transformed(FieldTransform::Scale { factor }))
    }

    pub fn to_document(&self, include_values: bool) -> DisorderDocument {
        DisorderDocument {
            dist: self.dist.clone(),
            lattice: self.lattice.clone(),
            seed: self.seed,
            transforms: if self.explicit {
                Vec::new()
            } else {
                self.transforms.clone()
            },
            values: (include_values || self.explicit).then(|| self.values.clone()),
        }
    }

    pub fn from_document(doc: DisorderDocument) -> Result<Self> {
        match doc.values {
            Some(values) => {
                let mut f = Self::from_values(doc.dist, doc.lattice, doc.seed, values)?;
                if !doc.transforms.is_empty() {
                    // values already include the transforms
                    f.transforms = doc.transforms;
                }
                Ok(f)
            }
            None => {
                let mut f = sample_disorder(&doc.dist, &doc.lattice, doc.seed)?;
                for tf in doc.transforms {
                    f = f.transformed(tf);
                }
                Ok(f)
            }
        }
    }

    pub fn to_json(&self, include_values: bool) -> String {
        serde_json::to_string_pretty(&self.to_document(include_values)).expect("disorder document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DisorderDocument = serde_json::from_str(text).map_err(|e| LabError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }
}

/// Shape of the single-site profile W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SingleSiteProfile {
    /// height · 1{|x| < radius}.
    Indicator { radius: f64, height: f64 },
    /// `height` on |x| ≤ inner_radius, cosine taper to 0 at `radius`.
    Bump {
        radius: f64,
        inner_radius: f64,
        floor: f64,
        height: f64,
    },
    /// Samples on a uniform grid over [−radius, radius]^d (n per axis, row-major),
    /// multilinear in between; zero for |x| ≥ radius.
    Tabulated {
        radius: f64,
        inner_radius: f64,
        floor: f64,
        d: usize,
        n: usize,
        samples: Vec<f64>,
    },
}

impl Default for SingleSiteProfile {
    fn default() -> Self {
        Self::Indicator {
            radius: 0.25,
            height: 1.0,
        }
    }
}

impl SingleSiteProfile {
    pub fn validate(&self) -> Result<()> {
        let a = self.radius();
        let a0 = self.inner_radius();
        if !(a > 0.0 && a.is_finite()) {
            return domain(format!("profile radius {a} must be positive"));
        }
        if !(a0 > 0.0 && a0 <= a) {
            return domain(format!("inner radius {a0} must lie in (0, {a}]"));
        }
        if !(self.floor() > 0.0) {
            return domain("profile floor b must be positive");
        }
        match self {
            Self::Indicator { .. } => {}
            Self::Bump { floor, height, .. } => {
                if height < floor {
                    return domain(format!("bump height {height} is below its floor {floor}"));
                }
            }
            Self::Tabulated {
                d,
                n,
                samples,
                floor,
                radius,
                inner_radius,
            } => {
                if *n < 2 || samples.len() != n.pow(*d as u32) {
                    return domain("tabulated profile needs n ≥ 2 and n^d samples");
                }
                if samples.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                    return domain("tabulated profile samples must be finite and nonnegative");
                }
                let h = 2.0 * radius / (*n - 1) as f64;
                for (idx, s) in samples.iter().enumerate() {
                    let mut r2 = 0.0;
                    let mut k = idx;
                    for _ in 0..*d {
                        let x = -radius + (k % n) as f64 * h;
                        r2 += x * x;
                        k /= n;
                    }
                    if r2.sqrt() <= *inner_radius && s < floor {
                        return domain("tabulated profile drops below its floor inside the core");
                    }
                }
            }
        }
        Ok(())
    }

    /// Support radius a.
    pub fn radius(&self) -> f64 {
        match self {
            Self::Indicator { radius, .. } | Self::Bump { radius, .. } | Self::Tabulated { radius, .. } => *radius,
        }
    }

    /// Core radius a0.
    pub fn inner_radius(&self) -> f64 {
        match self {
            Self::Indicator { radius, .. } => *radius,
            Self::Bump { inner_radius, .. } | Self::Tabulated { inner_radius, .. } => *inner_radius,
        }
    }

    /// Lower bound b on the core.
    pub fn floor(&self) -> f64 {
        match self {
            Self::Indicator { height, .. } => *height,
            Self::Bump { floor, .. } | Self::Tabulated { floor, .. } => *floor,
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            Self::Indicator { height, .. } | Self::Bump { height, .. } => *height,
            Self::Tabulated { samples, .. } => samples.iter().cloned().fold(0.0, f64::max),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            Self::Indicator { radius, height } => {
                if r < *radius {
                    *height
                } else {
                    0.0
                }
            }
            Self::Bump {
                radius,
                inner_radius,
                height,
                ..
            } => {
                if r <= *inner_radius {
                    *height
                } else if r < *radius {
                    let s = (r - inner_radius) / (radius - inner_radius);
                    height * 0.5 * (1.0 + (std::f64::consts::PI * s).cos())
                } else {
                    0.0
                }
            }
            Self::Tabulated {
                radius, d, n, samples, ..
            } => {
                if r >= *radius || x.len() != *d {
                    return 0.0;
                }
                multilinear(samples, *n, *radius, x)
            }
        }
    }
}

fn multilinear(samples: &[f64], n: usize, radius: f64, x: &[f64]) -> f64 {
    let h = 2.0 * radius / (n - 1) as f64;
    let d = x.len();
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for j in 0..d {
        let s = ((x[j] + radius) / h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        base[j] = i;
        frac[j] = s - i as f64;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = 0usize;
        for j in 0..d {
            let bit = (corner >> j) & 1;
            w *= if bit == 1 { frac[j] } else { 1.0 - frac[j] };
            idx = idx * n + base[j] + bit;
        }
        acc += w * samples[idx];
    }
    acc
}

/// Where the couplings come from.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingSource {
    Field(DisorderField),
    Keyed(KeyedCouplings),
}

impl CouplingSource {
    fn value(&self, site: &[i64]) -> Option<f64> {
        match self {
            Self::Field(f) => f.value(site),
            Self::Keyed(k) => Some(k.value(site)),
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Self::Field(f) => Some(f.lattice().dim()),
            Self::Keyed(_) => None,
        }
    }

    fn max_value(&self) -> f64 {
        match self {
            Self::Field(f) => f.max_value(),
            Self::Keyed(k) => k.transforms.iter().fold(k.dist.max_value(), |m, t| t.apply(m)),
        }
    }
}

/// Evaluation mode of an alloy potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PotentialMode {
    /// Σ_i q_i W(x − i).
    Free,
    /// Σ_i q_{π_M(i)} W(x − i), periodic with period `side` along each axis.
    Periodized { side: u32 },
    /// κ-truncated couplings, optionally periodized.
    Truncated { kappa: f64, side: Option<u32> },
}

/// V(x) = Σ_i q_i W(x − i) in one of the evaluation modes.
#[derive(Debug, Clone, PartialEq)]
pub struct AlloyPotential {
    pub profile: SingleSiteProfile,
    pub couplings: CouplingSource,
    pub mode: PotentialMode,
}

impl AlloyPotential {
    pub fn new(profile: SingleSiteProfile, field: DisorderField, mode: PotentialMode) -> Result<Self> {
        profile.validate()?;
        let pot = Self {
            profile,
            couplings: CouplingSource::Field(field),
            mode,
        };
        pot.check_mode()?;
        Ok(pot)
    }

    /// Potential over all of Z^d with couplings generated on demand.
    pub fn keyed(profile: SingleSiteProfile, couplings: KeyedCouplings, mode: PotentialMode) -> Result<Self> {
        profile.validate()?;
        couplings.dist.validate()?;
        let pot = Self {
            profile,
            couplings: CouplingSource::Keyed(couplings),
            mode,
        };
        pot.check_mode()?;
        Ok(pot)
    }

    fn check_mode(&self) -> Result<()> {
        let side = match self.mode {
            PotentialMode::Free => None,
            PotentialMode::Periodized { side } => Some(side),
            PotentialMode::Truncated { kappa, side } => {
                if !(kappa > 0.0) {
                    return domain(format!("truncation level κ = {kappa} must be positive"));
                }
                side
            }
        };
        if let (Some(side), CouplingSource::Field(f)) = (side, &self.couplings) {
            if side == 0 {
                return config("torus side must be positive");
            }
            let cell = LatticeBox::cube(f.lattice().dim(), 0, side as i64);
            if cell.sites().any(|s| !f.lattice().contains(&s)) {
                return config(format!("field box does not cover the torus cell [0,{side})^d"));
            }
        }
        Ok(())
    }

    /// Torus side when the potential is periodic.
    pub fn period(&self) -> Option<u32> {
        match self.mode {
            PotentialMode::Free => None,
            PotentialMode::Periodized { side } => Some(side),
            PotentialMode::Truncated { side, .. } => side,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.couplings.dim()
    }

    /// Upper bound (sup W) · (max coupling) · (number of sites within reach).
    pub fn bound(&self) -> f64 {
        let a = self.profile.radius();
        let d = self.dim().unwrap_or(1) as i32;
        let reach = (2.0 * (a + 1.0)).ceil().powi(d);
        self.profile.sup() * self.couplings.max_value() * reach
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if let Some(d) = self.dim() {
            if x.len() != d {
                return domain(format!("point has dimension {}, potential has {d}", x.len()));
            }
        }
        let a = self.profile.radius();
        let d = x.len();
        let lo: Vec<i64> = x.iter().map(|v| (v - a).ceil() as i64).collect();
        let hi: Vec<i64> = x.iter().map(|v| (v + a).floor() as i64).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Ok(0.0);
        }
        let mut site = lo.clone();
        let mut diff = vec![0.0; d];
        let mut total = 0.0;
        loop {
            let mut r2 = 0.0;
            for j in 0..d {
                diff[j] = x[j] - site[j] as f64;
                r2 += diff[j] * diff[j];
            }
            if r2 < a * a {
                total += self.coupling(x, &site)? * self.profile.eval(&diff);
            }
            // odometer over the candidate cube
            let mut j = d;
            loop {
                if j == 0 {
                    return Ok(total);
                }
                j -= 1;
                if site[j] < hi[j] {
                    site[j] += 1;
                    break;
                }
                site[j] = lo[j];
            }
        }
    }

    fn coupling(&self, x: &[f64], site: &[i64]) -> Result<f64> {
        let (side, kappa) = match self.mode {
            PotentialMode::Free => (None, None),
            PotentialMode::Periodized { side } => (Some(side), None),
            PotentialMode::Truncated { kappa, side } => (side, Some(kappa)),
        };
        let lookup: Vec<i64> = match side {
            Some(m) => site.iter().map(|s| s.rem_euclid(m as i64)).collect(),
            None => site.to_vec(),
        };
        let q = self.couplings.value(&lookup).ok_or_else(|| LabError::OutOfCoverage {
            point: x.to_vec(),
            site: site.to_vec(),
        })?;
        Ok(match kappa {
            Some(k) => FieldTransform::Truncate { kappa: k }.apply(q),
            None => q,
        })
    }
}

/// How `periodization_gap` computes its two expectations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapMode {
    /// Exact enumeration of all coupling configurations (finite-support laws).
    Exhaustive,
    /// Independent keyed samples.
    MonteCarlo { samples: usize, seed: u64 },
}

/// Both sides of the periodization inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodizationGap {
    /// E[exp(−Σ_i a_i q_i)].
    pub lhs: f64,
    /// E[exp(−Σ_{i∈[0,M)^d} q_i Σ_{i'∈π_M^{-1}(i)} a_{i'})].
    pub rhs: f64,
    pub lhs_stderr: f64,
    pub rhs_stderr: f64,
}

const MAX_CONFIGURATIONS: f64 = 16_777_216.0;

/// Evaluates both sides of E e^{−Σ a_i q_i} ≤ E e^{−Σ_{[0,M)^d} q_i Σ_{fold} a_{i'}}.
pub fn periodization_gap(
    dist: &CouplingDistribution,
    weights: &[(Vec<i64>, f64)],
    side: u32,
    mode: GapMode,
) -> Result<PeriodizationGap> {
    if side == 0 {
        return domain("torus side M must be positive");
    }
    let mut direct: Vec<(Vec<i64>, f64)> = Vec::new();
    for (site, a) in weights {
        if !(*a >= 0.0 && a.is_finite()) {
            return domain(format!("weight {a} at {site:?} must be finite and nonnegative"));
        }
        if *a == 0.0 {
            continue;
        }
        match direct.iter_mut().find(|(s, _)| s == site) {
            Some(entry) => entry.1 += a,
            None => direct.push((site.clone(), *a)),
        }
    }
    let mut folded: Vec<(Vec<i64>, f64)> = Vec::new();
    for (site, a) in &direct {
        let image: Vec<i64> = site.iter().map(|s| s.rem_euclid(side as i64)).collect();
        match folded.iter_mut().find(|(s, _)| *s == image) {
            Some(entry) => entry.1 += a,
            None => folded.push((image, *a)),
        }
    }
    match mode {
        GapMode::Exhaustive => {
            let support = dist
                .finite_support()
                .ok_or_else(|| LabError::Mode("exhaustive mode needs a finite-support coupling law".into()))?;
            let a: Vec<f64> = direct.iter().map(|w| w.1).collect();
            let b: Vec<f64> = folded.iter().map(|w| w.1).collect();
            Ok(PeriodizationGap {
                lhs: enumerate_expectation(&support, &a)?,
                rhs: enumerate_expectation(&support, &b)?,
                lhs_stderr: 0.0,
                rhs_stderr: 0.0,
            })
        }
        GapMode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return domain("Monte Carlo mode needs at least two samples");
            }
            let mut lhs = crate::stats::Moments::default();
            let mut rhs = crate::stats::Moments::default();
            for s in 0..samples as i64 {
                let draw = |side_tag: i64, site: &[i64]| {
                    let mut k = vec![side_tag, s];
                    k.extend_from_slice(site);
                    dist.quantile(rng::open_unit(rng::key(seed, &k)))
                };
                lhs.push((-direct.iter().map(|(i, a)| a * draw(0, i)).sum::<f64>()).exp());
                rhs.push((-folded.iter().map(|(i, a)| a * draw(1, i)).sum::<f64>()).exp());
            }
            Ok(PeriodizationGap {
                lhs: lhs.mean(),
                rhs: rhs.mean(),
                lhs_stderr: lhs.stderr(),
                rhs_stderr: rhs.stderr(),
            })
        }
    }
}

/// Σ over all configurations of ∏ P[q_j = v] · exp(−Σ_j w_j q_j).
fn enumerate_expectation(support: &[(f64, f64)], w: &[f64]) -> Result<f64> {
    let s = support.len();
    if (s as f64).powi(w.len() as i32) > MAX_CONFIGURATIONS {
        return Err(LabError::Mode(format!(
            "{} sites with {s} atoms exceed the enumeration budget",
            w.len()
        )));
    }
    let mut state = vec![0usize; w.len()];
    let mut total = 0.0;
    loop {
        let mut prob = 1.0;
        let mut exponent = 0.0;
        for (j, &k) in state.iter().enumerate() {
            prob *= support[k].1;
            exponent += w[j] * support[k].0;
        }
        total += prob * (-exponent).exp();
        let mut j = 0;
        loop {
            if j == state.len() {
                return Ok(total);
            }
            state[j] += 1;
            if state[j] < s {
                break;
            }
            state[j] = 0;
            j += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn coin() -> CouplingDistribution {
        CouplingDistribution::PointMasses {
            masses: vec![(0.0, 0.5), (1.0, 0.5)],
        }
    }

    #[test]
    fn degenerate_law_is_rejected_but_samples_at_zero() {
        let dist = CouplingDistribution::Bernoulli { p0: 1.0, v: 1.0 };
        assert!(dist.validate().is_err());
        let f = sample_unchecked(&dist, &LatticeBox::cube(1, 0, 4), 7).unwrap();
        assert_eq!(f.values(), &[0.0; 4]);
    }

    #[test]
    fn point_masses_need_an_atom_at_zero() {
        let d = CouplingDistribution::PointMasses {
            masses: vec![(0.5, 0.5), (1.0, 0.5)],
        };
        assert!(matches!(d.validate(), Err(LabError::Domain(_))));
        let d = CouplingDistribution::PointMasses {
            masses: vec![(0.0, 0.5), (1.0, 0.4)],
        };
        assert!(d.validate().is_err());
        assert!(coin().validate().is_ok());
    }

    #[test]
    fn empty_box_is_a_domain_error() {
        let lattice = LatticeBox::new(vec![0], vec![0]).unwrap();
        assert!(matches!(
            sample_disorder(&coin(), &lattice, 1),
            Err(LabError::Domain(_))
        ));
    }

    #[test]
    fn coin_mean_follows_law_of_large_numbers() {
        let f = sample_disorder(&coin(), &LatticeBox::cube(1, 0, 1_000_000), 42).unwrap();
        let mean = f.values().iter().sum::<f64>() / 1e6;
        assert!((0.498..=0.502).contains(&mean), "mean {mean}");
    }

    #[test]
    fn sampling_is_deterministic_and_box_independent() {
        let a = sample_disorder(&coin(), &LatticeBox::cube(2, -3, 5), 11).unwrap();
        let b = sample_disorder(&coin(), &LatticeBox::cube(2, -3, 5), 11).unwrap();
        assert_eq!(a, b);
        let small = sample_disorder(&coin(), &LatticeBox::cube(2, 0, 2), 11).unwrap();
        for s in small.lattice().sites() {
            assert_eq!(small.value(&s), a.value(&s));
        }
    }

    #[test]
    fn truncation_examples() {
        let lattice = LatticeBox::cube(1, 0, 3);
        let f = DisorderField::from_values(coin(), lattice.clone(), 0, vec![0.0, 0.3, 2.0]).unwrap();
        assert_eq!(truncate_kappa(&f, 0.5).unwrap().values(), &[0.0, 0.0, 0.5]);
        assert!(matches!(truncate_kappa(&f, 0.0), Err(LabError::Domain(_))));
        let u = CouplingDistribution::Uniform { v_max: 1.0 };
        let f = sample_disorder(&u, &LatticeBox::cube(1, 0, 100), 3).unwrap();
        assert!(truncate_kappa(&f, 1.0).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_site_indicator() {
        let mut values = vec![0.0; 9];
        values[4] = 3.0;
        let f = DisorderField::from_values(coin(), LatticeBox::new(vec![-4], vec![5]).unwrap(), 0, values).unwrap();
        let pot = AlloyPotential::new(SingleSiteProfile::default(), f, PotentialMode::Free).unwrap();
        assert_eq!(pot.eval(&[0.1]).unwrap(), 3.0);
        assert_eq!(pot.eval(&[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn periodized_lookup_folds_sites() {
        let f = DisorderField::from_values(coin(), LatticeBox::cube(1, 0, 2), 0, vec![1.0, 0.0]).unwrap();
        let pot = AlloyPotential::new(SingleSiteProfile::default(), f, PotentialMode::Periodized { side: 2 }).unwrap();
        assert_eq!(pot.eval(&[2.1]).unwrap(), 1.0);
        assert_eq!(pot.eval(&[3.1]).unwrap(), 0.0);
        assert_eq!(pot.eval(&[-1.9]).unwrap(), 1.0);
    }

    #[test]
    fn free_mode_refuses_points_near_the_box_edge() {
        let f = sample_disorder(&coin(), &LatticeBox::cube(1, 0, 4), 1).unwrap();
        let pot = AlloyPotential::new(SingleSiteProfile::default(), f, PotentialMode::Free).unwrap();
        assert!(pot.eval(&[1.5]).is_ok());
        assert!(matches!(pot.eval(&[3.9]), Err(LabError::OutOfCoverage { .. })));
        assert!(matches!(pot.eval(&[-0.9]), Err(LabError::OutOfCoverage { .. })));
    }

    #[test]
    fn mode_mismatch_is_a_configuration_error() {
        let f = sample_disorder(&coin(), &LatticeBox::cube(1, 0, 2), 1).unwrap();
        let r = AlloyPotential::new(SingleSiteProfile::default(), f, PotentialMode::Periodized { side: 4 });
        assert!(matches!(r, Err(LabError::Configuration(_))));
    }

    #[test]
    fn zero_field_gives_zero_potential() {
        let f = DisorderField::from_values(coin(), LatticeBox::cube(1, 0, 8), 0, vec![0.0; 8]).unwrap();
        let pot = AlloyPotential::new(SingleSiteProfile::default(), f, PotentialMode::Periodized { side: 8 }).unwrap();
        for k in 0..100 {
            assert_eq!(pot.eval(&[k as f64 * 0.173]).unwrap(), 0.0);
        }
    }

    #[test]
    fn bump_profile_satisfies_core_bound() {
        let p = SingleSiteProfile::Bump {
            radius: 0.4,
            inner_radius: 0.2,
            floor: 0.5,
            height: 1.0,
        };
        p.validate().unwrap();
        assert_eq!(p.eval(&[0.1, 0.1]), 1.0);
        assert!(p.eval(&[0.3, 0.0]) > 0.0 && p.eval(&[0.3, 0.0]) < 1.0);
        assert_eq!(p.eval(&[0.4, 0.0]), 0.0);
    }

    #[test]
    fn tabulated_profile_interpolates() {
        let n = 5;
        let samples = vec![2.0; n * n];
        let p = SingleSiteProfile::Tabulated {
            radius: 0.5,
            inner_radius: 0.25,
            floor: 1.0,
            d: 2,
            n,
            samples,
        };
        p.validate().unwrap();
        assert_relative_eq!(p.eval(&[0.1, -0.2]), 2.0, epsilon = 1e-14);
        assert_eq!(p.eval(&[0.4, 0.4]), 0.0);
    }

    #[test]
    fn document_round_trip_regenerates_values() {
        let f = sample_disorder(&coin(), &LatticeBox::cube(2, 0, 3), 99).unwrap();
        let t = truncate_kappa(&f, 0.5).unwrap();
        for field in [&f, &t] {
            let lean = DisorderField::from_json(&field.to_json(false)).unwrap();
            assert_eq!(lean.values(), field.values());
            let full = DisorderField::from_json(&field.to_json(true)).unwrap();
            assert_eq!(full.values(), field.values());
        }
        let doc: serde_json::Value = serde_json::from_str(&f.to_json(false)).unwrap();
        assert!(doc.get("values").is_none() && doc.get("box").is_some());
    }

    #[test]
    fn gap_examples() {
        let w = vec![(vec![0], 1.0), (vec![1], 2.0)];
        let g = periodization_gap(&coin(), &w, 1, GapMode::Exhaustive).unwrap();
        let e = |x: f64| (-x).exp();
        assert_relative_eq!(g.lhs, 0.25 * (1.0 + e(1.0) + e(2.0) + e(3.0)), epsilon = 1e-15);
        assert_relative_eq!(g.rhs, 0.5 * (1.0 + e(3.0)), epsilon = 1e-15);
        assert!((g.lhs - 0.38825).abs() < 1e-5 && (g.rhs - 0.52489).abs() < 1e-5);

        let z = periodization_gap(&coin(), &[(vec![3], 0.0)], 2, GapMode::Exhaustive).unwrap();
        assert_eq!((z.lhs, z.rhs), (1.0, 1.0));

        let one = periodization_gap(&coin(), &[(vec![5], 1.7)], 3, GapMode::Exhaustive).unwrap();
        assert_eq!(one.lhs, one.rhs);

        let cont = CouplingDistribution::Exponential { rate: 1.0 };
        assert!(matches!(
            periodization_gap(&cont, &w, 1, GapMode::Exhaustive),
            Err(LabError::Mode(_))
        ));
    }

    #[test]
    fn gap_monte_carlo_agrees_with_closed_form() {
        let dist = CouplingDistribution::Exponential { rate: 2.0 };
        let w = vec![(vec![0], 0.5), (vec![2], 1.0), (vec![3], 0.25)];
        let g = periodization_gap(
            &dist,
            &w,
            2,
            GapMode::MonteCarlo {
                samples: 40_000,
                seed: 5,
            },
        )
        .unwrap();
        let lhs: f64 = [0.5, 1.0, 0.25].iter().map(|a| dist.laplace(*a)).product();
        let rhs = dist.laplace(1.5) * dist.laplace(0.25);
        assert!((g.lhs - lhs).abs() < 4.0 * g.lhs_stderr);
        assert!((g.rhs - rhs).abs() < 4.0 * g.rhs_stderr);
        assert!(lhs <= rhs);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn truncation_never_raises_the_potential(seed in any::<u64>(), kappa in 0.05f64..3.0, x in 0.0f64..8.0) {
            let dist = CouplingDistribution::Uniform { v_max: 2.0 };
            let f = sample_disorder(&dist, &LatticeBox::cube(1, 0, 8), seed).unwrap();
            let t = truncate_kappa(&f, kappa).unwrap();
            let mode = PotentialMode::Periodized { side: 8 };
            let v = AlloyPotential::new(SingleSiteProfile::default(), f, mode).unwrap();
            let vt = AlloyPotential::new(SingleSiteProfile::default(), t, mode).unwrap();
            prop_assert!(vt.eval(&[x]).unwrap() <= v.eval(&[x]).unwrap());
        }

        #[test]
        fn periodized_potential_is_periodic(seed in any::<u64>(), x in -4.0f64..4.0, y in -4.0f64..4.0, axis in 0usize..2) {
            let profile = SingleSiteProfile::Bump { radius: 0.45, inner_radius: 0.2, floor: 1.0, height: 1.5 };
            let f = sample_disorder(&coin(), &LatticeBox::cube(2, 0, 3), seed).unwrap();
            let pot = AlloyPotential::new(profile, f, PotentialMode::Periodized { side: 3 }).unwrap();
            let mut shifted = [x, y];
            shifted[axis] += 3.0;
            let v = pot.eval(&[x, y]).unwrap();
            prop_assert!((v - pot.eval(&shifted).unwrap()).abs() <= 1e-12 * (1.0 + v.abs()));
            prop_assert!(v >= 0.0 && v <= pot.bound());
        }
    }
}
