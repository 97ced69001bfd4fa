//! Stable increments and bridges, Feynman–Kac functionals, and Monte Carlo
//! estimates of the Laplace transform of the integrated density of states.
//!
//! Bridges are one-dimensional. Each interior node is drawn by inverse CDF
//! from the exact conditional density on a nonuniform spatial grid.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::kernel::{StableKernel, TorusKernel};
use crate::model::{AlloyPotential, CouplingDistribution, FieldTransform, KeyedCouplings, SingleSiteProfile};
use crate::rng::{child_seed, stream};
use crate::stats::Moments;

/// Z_dt for the process with E e^{iξ·Z_t} = e^{−t|ξ|^α}.
///
/// d = 1, α < 2: Chambers–Mallows–Stuck. d ≥ 2, α < 2: a Gaussian subordinated
/// by a positive (α/2)-stable variable (Kanter's representation).
pub fn sample_stable_increment<R: Rng + ?Sized>(alpha: f64, d: usize, dt: f64, rng: &mut R) -> Vec<f64> {
    let gauss = |rng: &mut R| -> f64 {
        let g: f64 = StandardNormal.sample(rng);
        2f64.sqrt() * g
    };
    if alpha == 2.0 {
        return (0..d).map(|_| gauss(rng) * dt.sqrt()).collect();
    }
    let scale = dt.powf(1.0 / alpha);
    if d == 1 {
        let v = PI * (rng.random::<f64>() - 0.5);
        let x = if alpha == 1.0 {
            v.tan()
        } else {
            let w: f64 = Exp1.sample(rng);
            (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
        };
        return vec![x * scale];
    }
    let a = positive_stable(alpha / 2.0, rng);
    let s = a.sqrt() * scale;
    (0..d).map(|_| gauss(rng) * s).collect()
}

/// Positive ρ-stable variable with E e^{−sA} = e^{−s^ρ}, 0 < ρ < 1.
fn positive_stable<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> f64 {
    let u = PI * rng.random::<f64>();
    let w: f64 = Exp1.sample(rng);
    let a = (rho * u).sin().powf(rho / (1.0 - rho)) * ((1.0 - rho) * u).sin() / u.sin().powf(1.0 / (1.0 - rho));
    (a / w).powf((1.0 - rho) / rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BridgeGeometry {
    Free,
    Torus { side: u32 },
}

impl BridgeGeometry {
    pub fn label(&self) -> String {
        match self {
            BridgeGeometry::Free => "free".into(),
            BridgeGeometry::Torus { side } => format!("torus(M={side})"),
        }
    }
}

/// Transition density on the line or on a circle, specialized for speed.
#[derive(Debug, Clone)]
pub struct LineKernel {
    base: StableKernel,
    geometry: BridgeGeometry,
}

impl LineKernel {
    pub fn new(base: StableKernel, geometry: BridgeGeometry) -> Result<Self> {
        if base.dim() != 1 {
            return domain("bridges are sampled in dimension 1");
        }
        if let BridgeGeometry::Torus { side: 0 } = geometry {
            return domain("torus side must be positive");
        }
        Ok(Self { base, geometry })
    }

    pub fn base(&self) -> &StableKernel {
        &self.base
    }

    pub fn geometry(&self) -> BridgeGeometry {
        self.geometry
    }

    /// p(s, z) on the line, or p_M(s, z) on the circle.
    pub fn density(&self, s: f64, z: f64) -> f64 {
        let alpha = self.base.alpha();
        match self.geometry {
            BridgeGeometry::Free => self.base.density_1d(s, z),
            BridgeGeometry::Torus { side } => {
                let m = side as f64;
                if alpha == 1.0 {
                    let a = 2.0 * PI * s / m;
                    // sinh(a)/(cosh(a) − cos θ), written to stay finite for large a
                    let e = (-a).exp();
                    let num = 1.0 - e * e;
                    let den = 1.0 + e * e - 2.0 * e * (2.0 * PI * z / m).cos();
                    return num / (m * den);
                }
                // Fourier modes needed versus fold terms needed
                let c = s * (2.0 * PI / m).powf(alpha);
                let modes = (45.0 / c).powf(1.0 / alpha);
                if modes <= 24.0 {
                    let kmax = modes.ceil() as i64;
                    let mut acc = 1.0;
                    for k in 1..=kmax {
                        acc += 2.0 * (-c * (k as f64).powf(alpha)).exp() * (2.0 * PI * k as f64 * z / m).cos();
                    }
                    acc / m
                } else if alpha == 2.0 {
                    let zr = z.rem_euclid(m);
                    let reach = (4.0 * s * 45.0).sqrt();
                    let j = (reach / m).ceil() as i64 + 1;
                    let mut acc = 0.0;
                    for k in -j..=j {
                        acc += self.base.density_1d(s, zr + k as f64 * m);
                    }
                    acc
                } else {
                    let zr = z.rem_euclid(m);
                    self.base.lattice_fold(s, &[zr], m, 4).unwrap_or(0.0)
                }
            }
        }
    }
}

impl LineKernel {
    /// `density(s, z)` for every z in `zs`, sharing the mode weights on a torus.
    pub fn density_row(&self, s: f64, zs: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let alpha = self.base.alpha();
        if let BridgeGeometry::Torus { side } = self.geometry {
            let m = side as f64;
            let c = s * (2.0 * PI / m).powf(alpha);
            let modes = (45.0 / c).powf(1.0 / alpha);
            if alpha != 1.0 && modes <= 24.0 {
                let weights: Vec<f64> = (1..=modes.ceil() as i64)
                    .map(|k| 2.0 * (-c * (k as f64).powf(alpha)).exp())
                    .collect();
                for &z in zs {
                    let cos1 = (2.0 * PI * z / m).cos();
                    // cos(kθ) by the Chebyshev recurrence
                    let (mut prev, mut cur) = (1.0, cos1);
                    let mut acc = 1.0;
                    for w in &weights {
                        acc += w * cur;
                        let next = 2.0 * cos1 * cur - prev;
                        prev = cur;
                        cur = next;
                    }
                    out.push(acc / m);
                }
                return;
            }
        }
        out.extend(zs.iter().map(|&z| self.density(s, z)));
    }
}

/// A sampled bridge from x to y on the uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeSkeleton {
    pub t: f64,
    pub n: usize,
    pub times: Vec<f64>,
    /// Nodes w_0 = x, …, w_n = y; reduced to [0, M) on a torus.
    pub points: Vec<f64>,
    pub log_weight: f64,
    pub geometry: BridgeGeometry,
    /// Largest |Z_grid / Z_exact − 1| over the conditional densities.
    pub max_normalization_error: f64,
}

/// Reusable inverse-CDF bridge sampler for fixed (kernel, t, n).
#[derive(Debug, Clone)]
pub struct BridgeSampler {
    kernel: LineKernel,
    t: f64,
    n: usize,
    dt: f64,
    /// Offsets of the grid around the previous node and p(dt, offset).
    offsets: Vec<f64>,
    near: Vec<f64>,
    du: f64,
    umax: f64,
    grid: Vec<(f64, f64)>,
    cdf: Vec<f64>,
    scratch: Vec<f64>,
    far: Vec<f64>,
}

impl BridgeSampler {
    pub fn new(kernel: LineKernel, t: f64, n: usize) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return domain(format!("bridge horizon t = {t} must be positive"));
        }
        if n < 2 {
            return domain(format!("a bridge needs n ≥ 2 steps, got {n}"));
        }
        let alpha = kernel.base.alpha();
        let dt = t / n as f64;
        let (du, umax): (f64, f64) = if alpha == 2.0 { (0.02, 3.4) } else { (0.02, 14.0) };
        let sigma = Self::spread(alpha, dt);
        let half = match kernel.geometry {
            BridgeGeometry::Free => f64::INFINITY,
            BridgeGeometry::Torus { side } => side as f64 / 2.0,
        };
        let steps = (umax / du).round() as i64;
        let mut offsets: Vec<f64> = (-steps..=steps)
            .map(|i| sigma * (i as f64 * du).sinh())
            .filter(|o| o.abs() < half)
            .collect();
        if half.is_finite() {
            offsets.insert(0, -half);
            offsets.push(half);
        }
        let near = offsets.iter().map(|o| kernel.density(dt, *o)).collect();
        Ok(Self {
            kernel,
            t,
            n,
            dt,
            offsets,
            near,
            du,
            umax,
            grid: Vec::new(),
            cdf: Vec::new(),
            scratch: Vec::new(),
            far: Vec::new(),
        })
    }

    fn spread(alpha: f64, s: f64) -> f64 {
        if alpha == 2.0 {
            (2.0 * s).sqrt()
        } else {
            s.powf(1.0 / alpha)
        }
    }

    /// Samples a bridge from x to y.
    pub fn sample<R: Rng + ?Sized>(&mut self, x: f64, y: f64, rng: &mut R) -> Result<BridgeSkeleton> {
        let (x, y) = match self.kernel.geometry {
            BridgeGeometry::Free => (x, y),
            BridgeGeometry::Torus { side } => (x.rem_euclid(side as f64), y.rem_euclid(side as f64)),
        };
        let total = self.kernel.density(self.t, y - x);
        if !(total > 1e-300) {
            return Err(LabError::NumericRange(format!(
                "bridge density p({}, {x}, {y}) underflows",
                self.t
            )));
        }
        let mut points = Vec::with_capacity(self.n + 1);
        points.push(x);
        let mut worst: f64 = 0.0;
        let mut a = x;
        for j in 1..self.n {
            let remaining = self.t - j as f64 * self.dt;
            let (w, err) = self.step(a, y, remaining, rng)?;
            worst = worst.max(err);
            points.push(w);
            a = w;
        }
        points.push(y);
        Ok(BridgeSkeleton {
            t: self.t,
            n: self.n,
            times: (0..=self.n).map(|j| j as f64 * self.dt).collect(),
            points,
            log_weight: 0.0,
            geometry: self.kernel.geometry,
            max_normalization_error: worst,
        })
    }

    /// Draws w ∝ p(dt, w − a) p(r, y − w); returns w and the normalization error.
    fn step<R: Rng + ?Sized>(&mut self, a: f64, y: f64, r: f64, rng: &mut R) -> Result<(f64, f64)> {
        let alpha = self.kernel.base.alpha();
        let kernel = &self.kernel;
        let (side, half) = match kernel.geometry {
            BridgeGeometry::Free => (f64::INFINITY, f64::INFINITY),
            BridgeGeometry::Torus { side } => (side as f64, side as f64 / 2.0),
        };
        // nearest image of y relative to a
        let dy = if side.is_finite() {
            let mut v = (y - a).rem_euclid(side);
            if v >= half {
                v -= side;
            }
            v
        } else {
            y - a
        };
        self.grid.clear();
        self.scratch.clear();
        self.scratch.extend(self.offsets.iter().map(|o| dy - o));
        kernel.density_row(r, &self.scratch, &mut self.far);
        for ((o, p), f) in self.offsets.iter().zip(&self.near).zip(&self.far) {
            self.grid.push((*o, p * f));
        }
        // refine around y when the far factor is sharp on the local cell scale
        let rho = Self::spread(alpha, r);
        let sigma = Self::spread(alpha, self.dt);
        let local_cell = self.du * (sigma * sigma + dy * dy).sqrt();
        if rho < 20.0 * local_cell {
            let steps = (self.umax / self.du).round() as i64;
            let fine: Vec<f64> = (-steps..=steps)
                .map(|i| dy + rho * (i as f64 * self.du).sinh())
                .filter(|o| o.abs() < half)
                .collect();
            self.scratch.clear();
            self.scratch.extend(fine.iter().map(|o| dy - o));
            kernel.density_row(r, &self.scratch, &mut self.far);
            let mut near = Vec::with_capacity(fine.len());
            kernel.density_row(self.dt, &fine, &mut near);
            for ((o, p), f) in fine.iter().zip(&near).zip(&self.far) {
                self.grid.push((*o, p * f));
            }
            self.grid.sort_by(|p, q| p.0.total_cmp(&q.0));
            self.grid.dedup_by(|p, q| p.0 == q.0);
        }
        self.cdf.clear();
        self.cdf.push(0.0);
        let mut acc = 0.0;
        for w in self.grid.windows(2) {
            acc += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
            self.cdf.push(acc);
        }
        let exact = kernel.density(self.dt + r, dy);
        if !(acc > 0.0) || !(exact > 1e-300) {
            return Err(LabError::NumericRange(format!(
                "conditional bridge density vanished at remaining time {r}"
            )));
        }
        let err = (acc / exact - 1.0).abs();
        let target = rng.random::<f64>() * acc;
        let cell = match self.cdf.binary_search_by(|c| c.total_cmp(&target)) {
            Ok(i) => i.min(self.grid.len() - 2),
            Err(i) => (i.max(1) - 1).min(self.grid.len() - 2),
        };
        let (x0, f0) = self.grid[cell];
        let (x1, f1) = self.grid[cell + 1];
        let h = x1 - x0;
        let tau = (target - self.cdf[cell]).max(0.0);
        // invert the linear density inside the cell
        let disc = (f0 * f0 + 2.0 * (f1 - f0) * tau / h).max(0.0);
        let denom = f0 + disc.sqrt();
        let s = if denom > 0.0 {
            (2.0 * tau / denom).min(h)
        } else {
            0.5 * h
        };
        let mut w = a + x0 + s;
        if side.is_finite() {
            w = w.rem_euclid(side);
        }
        Ok((w, err))
    }
}

/// Samples one bridge; see [`BridgeSampler`] for repeated draws.
pub fn sample_bridge<R: Rng + ?Sized>(
    kernel: &StableKernel,
    x: f64,
    y: f64,
    t: f64,
    n: usize,
    geometry: BridgeGeometry,
    rng: &mut R,
) -> Result<BridgeSkeleton> {
    let mut s = BridgeSampler::new(LineKernel::new(kernel.clone(), geometry)?, t, n)?;
    s.sample(x, y, rng)
}

/// Anything that can be integrated along a path.
pub trait PathPotential {
    fn value(&self, x: &[f64]) -> Result<f64>;
}

impl PathPotential for AlloyPotential {
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.eval(x)
    }
}

/// V ≡ c.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPotential(pub f64);

impl PathPotential for ConstantPotential {
    fn value(&self, _x: &[f64]) -> Result<f64> {
        Ok(self.0)
    }
}

/// Trapezoid rule for ∫_0^t V(w(s)) ds using every `stride`-th node.
pub fn path_integral(skel: &BridgeSkeleton, pot: &dyn PathPotential, stride: usize) -> Result<f64> {
    if stride == 0 || !skel.n.is_multiple_of(stride) {
        return domain(format!("stride {stride} does not divide the {} steps", skel.n));
    }
    let h = skel.t / skel.n as f64 * stride as f64;
    let mut acc = 0.0;
    let last = skel.n / stride;
    for j in 0..=last {
        let v = pot.value(&[skel.points[j * stride]])?;
        acc += if j == 0 || j == last { 0.5 * v } else { v };
    }
    Ok(acc * h)
}

/// e^{−∫V} along the skeleton.
pub fn fk_functional(skel: &BridgeSkeleton, pot: &dyn PathPotential) -> Result<f64> {
    Ok((-path_integral(skel, pot, 1)?).exp())
}

/// Law of a random alloy potential for Monte Carlo estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialLaw {
    pub profile: SingleSiteProfile,
    pub dist: CouplingDistribution,
    #[serde(default)]
    pub transforms: Vec<FieldTransform>,
}

impl PotentialLaw {
    fn coupling(&self, seed: u64, site: i64) -> f64 {
        KeyedCouplings {
            dist: self.dist.clone(),
            seed,
            transforms: self.transforms.clone(),
        }
        .value(&[site])
    }
}

/// How disorder is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisorderMode {
    /// Fresh keyed disorder per outer sample.
    Sampled { n: usize },
    /// Exact average over every configuration of the torus cell (finite laws only).
    Enumerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McBudget {
    pub disorder: DisorderMode,
    /// Bridges per disorder sample (or in total when enumerating).
    pub n_paths: usize,
    /// Time steps per bridge (even, so the half-resolution estimate exists).
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub n_disorder: usize,
    pub n_steps: usize,
    pub geometry: String,
    pub seed: u64,
    /// The diagonal factor p(t,0,0) or p_M(t,x,x).
    pub diagonal: f64,
    /// Same paths with every other node dropped from the time quadrature.
    pub mean_half: f64,
    /// Paired difference (full − half resolution) and its standard error.
    pub doubling_diff: f64,
    pub doubling_stderr: f64,
    /// 2·full − half per path: cancels the leading O(1/n) quadrature bias.
    pub extrapolated: f64,
    pub extrapolated_stderr: f64,
}

impl TraceEstimate {
    /// The step-doubling extrapolate when the paired doubling difference is
    /// significant at 2σ, the full-resolution value otherwise; the flag tells
    /// which one was taken.
    pub fn corrected(&self) -> (f64, f64, bool) {
        if self.doubling_diff.abs() > 2.0 * self.doubling_stderr {
            (self.extrapolated, self.extrapolated_stderr, true)
        } else {
            (self.mean, self.stderr, false)
        }
    }
}

/// Per-site time integrals ∫ W(w(s) − i) ds along one path, at full and half resolution.
/// (site, ∫ W(w_s − site) ds) pairs.
type SiteIntegrals = Vec<(i64, f64)>;

fn site_integrals(
    skel: &BridgeSkeleton,
    profile: &SingleSiteProfile,
    side: Option<u32>,
) -> (SiteIntegrals, SiteIntegrals) {
    let a = profile.radius();
    let n = skel.n;
    let h = skel.t / n as f64;
    let mut full: Vec<(i64, f64)> = Vec::new();
    let mut half: Vec<(i64, f64)> = Vec::new();
    for (j, &w) in skel.points.iter().enumerate() {
        let wf = if j == 0 || j == n { 0.5 * h } else { h };
        let wh = if j % 2 == 1 {
            0.0
        } else if j == 0 || j == n {
            h
        } else {
            2.0 * h
        };
        let lo = (w - a).ceil() as i64;
        let hi = (w + a).floor() as i64;
        for i in lo..=hi {
            let v = profile.eval(&[w - i as f64]);
            if v == 0.0 {
                continue;
            }
            let site = match side {
                Some(m) => i.rem_euclid(m as i64),
                None => i,
            };
            full.push((site, wf * v));
            if wh > 0.0 {
                half.push((site, wh * v));
            }
        }
    }
    (merge_sites(full), merge_sites(half))
}

fn merge_sites(mut v: Vec<(i64, f64)>) -> Vec<(i64, f64)> {
    v.sort_by_key(|p| p.0);
    let mut out: Vec<(i64, f64)> = Vec::with_capacity(v.len());
    for (s, x) in v {
        match out.last_mut() {
            Some(last) if last.0 == s => last.1 += x,
            _ => out.push((s, x)),
        }
    }
    out
}

/// Paths are processed in fixed-size chunks whose partial sums are merged in
/// index order, so results do not depend on the number of worker threads.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    full: Moments,
    half: Moments,
    diff: Moments,
    extra: Moments,
}

impl Partial {
    fn merge(&mut self, o: &Partial) {
        self.full.merge(&o.full);
        self.half.merge(&o.half);
        self.diff.merge(&o.diff);
        self.extra.merge(&o.extra);
    }
}

/// L(t) by Monte Carlo: p(t,0,0) ∫_{[0,1)} E^Q E^t_{x,x}[e^{−∫V}] dx on the
/// line, or the same expression with p_M on the torus T_M.
pub fn estimate_laplace(
    kernel: &StableKernel,
    law: &PotentialLaw,
    t: f64,
    budget: McBudget,
    geometry: BridgeGeometry,
    seed: u64,
) -> Result<TraceEstimate> {
    if !(t > 0.0) {
        return domain(format!("time t = {t} must be positive"));
    }
    if budget.n_paths == 0 || budget.n_steps < 2 || !budget.n_steps.is_multiple_of(2) {
        return domain("budgets: n_paths ≥ 1 and an even n_steps ≥ 2 are required");
    }
    law.dist.validate()?;
    law.profile.validate()?;
    let line = LineKernel::new(kernel.clone(), geometry)?;
    let side = match geometry {
        BridgeGeometry::Free => None,
        BridgeGeometry::Torus { side } => Some(side),
    };
    let diagonal = line.density(t, 0.0);
    let sampler = BridgeSampler::new(line, t, budget.n_steps)?;

    let (n_disorder, configs) = match budget.disorder {
        DisorderMode::Sampled { n } => {
            if n == 0 {
                return domain("n_disorder must be at least 1");
            }
            (n, None)
        }
        DisorderMode::Enumerated => {
            let Some(m) = side else {
                return domain("disorder can only be enumerated on a torus");
            };
            (1, Some(enumerate_configurations(law, m)?))
        }
    };

    let run_path = |sampler: &mut BridgeSampler, k: usize, j: usize| -> Result<(f64, f64)> {
        let mut rng = stream(seed, k as u64, j as u64);
        let x: f64 = rng.random();
        let skel = sampler.sample(x, x, &mut rng)?;
        let (full, half) = site_integrals(&skel, &law.profile, side);
        match &configs {
            Some(cfgs) => {
                let (mut ef, mut eh) = (0.0, 0.0);
                for (weight, q) in cfgs {
                    let dot = |v: &[(i64, f64)]| v.iter().map(|(s, x)| q[*s as usize] * x).sum::<f64>();
                    ef += weight * (-dot(&full)).exp();
                    eh += weight * (-dot(&half)).exp();
                }
                Ok((ef, eh))
            }
            None => {
                let dseed = child_seed(seed, k as u64);
                let dot = |v: &[(i64, f64)]| v.iter().map(|(s, x)| law.coupling(dseed, *s) * x).sum::<f64>();
                Ok(((-dot(&full)).exp(), (-dot(&half)).exp()))
            }
        }
    };

    let chunks_per = budget.n_paths.div_ceil(CHUNK);
    let tasks: Vec<(usize, usize)> = (0..n_disorder)
        .flat_map(|k| (0..chunks_per).map(move |c| (k, c)))
        .collect();
    let partials: Vec<Result<Partial>> = tasks
        .par_iter()
        .map_init(
            || sampler.clone(),
            |smp, &(k, c)| {
                let mut p = Partial::default();
                for j in c * CHUNK..((c + 1) * CHUNK).min(budget.n_paths) {
                    let (f, h) = run_path(smp, k, j)?;
                    p.full.push(f);
                    p.half.push(h);
                    p.diff.push(f - h);
                    p.extra.push(2.0 * f - h);
                }
                Ok(p)
            },
        )
        .collect();

    // per-disorder means give the outer variance when several samples exist
    let mut outer = Moments::default();
    let mut outer_extra = Moments::default();
    let mut total = Partial::default();
    let mut current = Partial::default();
    for (idx, p) in partials.into_iter().enumerate() {
        let p = p?;
        current.merge(&p);
        if (idx + 1) % chunks_per == 0 {
            outer.push(current.full.mean());
            outer_extra.push(current.extra.mean());
            total.merge(&current);
            current = Partial::default();
        }
    }
    let (stderr, extra_stderr) = if n_disorder >= 2 {
        (outer.stderr(), outer_extra.stderr())
    } else {
        (total.full.stderr(), total.extra.stderr())
    };
    Ok(TraceEstimate {
        t,
        mean: diagonal * total.full.mean(),
        stderr: diagonal * stderr,
        n_paths: budget.n_paths,
        n_disorder,
        n_steps: budget.n_steps,
        geometry: geometry.label(),
        seed,
        diagonal,
        mean_half: diagonal * total.half.mean(),
        doubling_diff: diagonal * total.diff.mean(),
        doubling_stderr: diagonal * total.diff.stderr(),
        extrapolated: diagonal * total.extra.mean(),
        extrapolated_stderr: diagonal * extra_stderr,
    })
}

/// All coupling configurations of the torus cell {0, …, M−1} with their probabilities.
fn enumerate_configurations(law: &PotentialLaw, m: u32) -> Result<Vec<(f64, Vec<f64>)>> {
    let Some(atoms) = law.dist.finite_support() else {
        return Err(LabError::Mode(
            "disorder enumeration needs a finite coupling law".into(),
        ));
    };
    let count = (atoms.len() as f64).powi(m as i32);
    if count > (1u64 << 20) as f64 {
        return Err(LabError::Mode(format!(
            "{count} configurations are too many to enumerate"
        )));
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut idx = vec![0usize; m as usize];
    loop {
        let mut p = 1.0;
        let q: Vec<f64> = idx
            .iter()
            .map(|&i| {
                p *= atoms[i].1;
                law.transforms.iter().fold(atoms[i].0, |q, t| t.apply(q))
            })
            .collect();
        out.push((p, q));
        let mut a = idx.len();
        loop {
            if a == 0 {
                return Ok(out);
            }
            a -= 1;
            if idx[a] + 1 < atoms.len() {
                idx[a] += 1;
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Two-route comparison of both sides of the bridge-fold identity for the
/// event {w(t/2) mod M ∈ [lo, hi)}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldCheck {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub z: f64,
    /// |p_M(t,x,y) − Σ_j p(t,x,y+jM)| for the full event.
    pub full_event_residual: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn bridge_fold_check(
    kernel: &StableKernel,
    x: f64,
    y: f64,
    t: f64,
    m: u32,
    interval: (f64, f64),
    n_samples: usize,
    seed: u64,
) -> Result<FoldCheck> {
    if n_samples < 1000 {
        return domain(format!("bridge fold check needs ≥ 1000 samples, got {n_samples}"));
    }
    let mf = m as f64;
    let inside = |w: f64| {
        let v = w.rem_euclid(mf);
        v >= interval.0 && v < interval.1
    };
    let torus = TorusKernel::new(kernel.clone(), m)?;
    let pm = torus.density(t, &[x], &[y])?;
    let fold = kernel.lattice_fold(t, &[(y - x).rem_euclid(mf)], mf, 64)?;

    // left: bridges on the circle
    let mut left = BridgeSampler::new(
        LineKernel::new(kernel.clone(), BridgeGeometry::Torus { side: m })?,
        t,
        2,
    )?;
    let mut hits = Moments::default();
    let mut rng = stream(seed, 1, 0);
    for _ in 0..n_samples {
        let s = left.sample(x, y, &mut rng)?;
        hits.push(if inside(s.points[1]) { 1.0 } else { 0.0 });
    }

    // right: an image y + jM chosen with weight p(t, x, y + jM), then a free bridge
    let reach: i64 = if kernel.alpha() == 2.0 {
        ((4.0 * t * 50.0).sqrt() / mf).ceil() as i64 + 2
    } else {
        100_000
    };
    let mut cum = Vec::with_capacity(2 * reach as usize + 1);
    let mut acc = 0.0;
    for j in -reach..=reach {
        acc += kernel.density_1d(t, y + j as f64 * mf - x);
        cum.push(acc);
    }
    let mut right = BridgeSampler::new(LineKernel::new(kernel.clone(), BridgeGeometry::Free)?, t, 2)?;
    let mut rhits = Moments::default();
    let mut rng = stream(seed, 2, 0);
    for _ in 0..n_samples {
        let u = rng.random::<f64>() * acc;
        let i = cum.partition_point(|c| *c < u).min(cum.len() - 1);
        let j = i as i64 - reach;
        let s = right.sample(x, y + j as f64 * mf, &mut rng)?;
        rhits.push(if inside(s.points[1]) { 1.0 } else { 0.0 });
    }
    let lhs = pm * hits.mean();
    let rhs = fold * rhits.mean();
    let (se_l, se_r) = (pm * hits.stderr(), fold * rhits.stderr());
    let se = (se_l * se_l + se_r * se_r).sqrt();
    Ok(FoldCheck {
        lhs,
        lhs_stderr: se_l,
        rhs,
        rhs_stderr: se_r,
        z: if se > 0.0 { (lhs - rhs) / se } else { 0.0 },
        full_event_residual: (pm - fold).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_two_sample;

    #[test]
    fn gaussian_increment_variance() {
        let mut rng = stream(1, 0, 0);
        let m: Moments = (0..200_000)
            .map(|_| sample_stable_increment(2.0, 1, 1.0, &mut rng)[0])
            .collect();
        assert!((m.variance() - 2.0).abs() < 0.03);
    }

    #[test]
    fn cauchy_increment_tail() {
        let mut rng = stream(2, 0, 0);
        let n = 200_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| sample_stable_increment(1.0, 1, 1.0, &mut rng)[0])
            .collect();
        let tail = xs.iter().filter(|v| v.abs() > 10.0).count() as f64 / n as f64;
        let expect = 1.0 - 2.0 / PI * 10f64.atan();
        assert!((tail - expect).abs() < 0.003, "{tail} vs {expect}");
        xs.sort_by(f64::total_cmp);
        assert!(xs[n / 2].abs() < 0.01);
    }

    #[test]
    fn subordinated_increment_matches_characteristic_function() {
        let mut rng = stream(3, 0, 0);
        let n = 100_000;
        let alpha = 1.2;
        let mut acc = 0.0;
        for _ in 0..n {
            let z = sample_stable_increment(alpha, 2, 1.0, &mut rng);
            acc += (0.7 * z[0] + 0.4 * z[1]).cos();
        }
        let expect = (-(0.65f64).sqrt().powf(alpha)).exp();
        assert!((acc / n as f64 - expect).abs() < 0.01);
    }

    #[test]
    fn stable_self_similarity() {
        let alpha = 1.5;
        let mut rng = stream(4, 0, 0);
        let a: Vec<f64> = (0..20_000)
            .map(|_| sample_stable_increment(alpha, 1, 4.0, &mut rng)[0])
            .collect();
        let b: Vec<f64> = (0..20_000)
            .map(|_| 4f64.powf(1.0 / alpha) * sample_stable_increment(alpha, 1, 1.0, &mut rng)[0])
            .collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.01);
    }

    #[test]
    fn bridge_endpoints_and_normalization() {
        for alpha in [1.0, 1.5, 2.0] {
            let k = StableKernel::new(1, alpha).unwrap();
            let mut rng = stream(5, 0, 0);
            let s = sample_bridge(&k, 0.3, -0.4, 1.0, 16, BridgeGeometry::Free, &mut rng).unwrap();
            assert_eq!(s.points[0], 0.3);
            assert_eq!(s.points[16], -0.4);
            assert!(
                s.max_normalization_error < 1e-4,
                "α={alpha}: {}",
                s.max_normalization_error
            );
            let s = sample_bridge(&k, 0.3, 0.9, 1.0, 16, BridgeGeometry::Torus { side: 1 }, &mut rng).unwrap();
            assert!(
                s.max_normalization_error < 1e-4,
                "α={alpha} torus: {}",
                s.max_normalization_error
            );
            assert!(s.points.iter().all(|p| (0.0..1.0).contains(p)));
        }
    }

    #[test]
    fn brownian_bridge_midpoint_variance() {
        let k = StableKernel::new(1, 2.0).unwrap();
        let mut smp = BridgeSampler::new(LineKernel::new(k, BridgeGeometry::Free).unwrap(), 2.0, 4).unwrap();
        let mut rng = stream(6, 0, 0);
        let m: Moments = (0..20_000)
            .map(|_| smp.sample(0.0, 0.0, &mut rng).unwrap().points[2])
            .collect();
        // generator variance 2s: bridge variance 2 s (t − s) / t = t/2 at the midpoint
        let expect = 1.0;
        assert!((m.variance() - expect).abs() < 3.0 * expect * (2.0 / 20_000f64).sqrt());
    }

    #[test]
    fn fk_functional_examples() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let mut rng = stream(7, 0, 0);
        let s = sample_bridge(&k, 0.0, 0.0, 1.5, 8, BridgeGeometry::Free, &mut rng).unwrap();
        assert_eq!(fk_functional(&s, &ConstantPotential(0.0)).unwrap(), 1.0);
        assert!((fk_functional(&s, &ConstantPotential(0.4)).unwrap() - (-0.6f64).exp()).abs() < 1e-15);
        let skel = BridgeSkeleton {
            t: 1.0,
            n: 4,
            times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            points: vec![0.5, 0.6, 0.55, 0.7, 0.5],
            log_weight: 0.0,
            geometry: BridgeGeometry::Free,
            max_normalization_error: 0.0,
        };
        let field = crate::model::DisorderField::from_values(
            CouplingDistribution::Bernoulli { p0: 0.5, v: 1.0 },
            crate::model::LatticeBox::cube(1, -2, 3),
            0,
            vec![1.0; 5],
        )
        .unwrap();
        let pot = AlloyPotential::new(SingleSiteProfile::default(), field, crate::model::PotentialMode::Free).unwrap();
        assert_eq!(fk_functional(&skel, &pot).unwrap(), 1.0);
    }

    #[test]
    fn zero_potential_estimate_is_the_diagonal() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let law = PotentialLaw {
            profile: SingleSiteProfile::default(),
            dist: CouplingDistribution::Bernoulli { p0: 0.5, v: 1.0 },
            transforms: vec![FieldTransform::Scale { factor: 0.0 }],
        };
        let b = McBudget {
            disorder: DisorderMode::Sampled { n: 3 },
            n_paths: 5,
            n_steps: 8,
        };
        let e = estimate_laplace(&k, &law, 0.7, b, BridgeGeometry::Free, 1).unwrap();
        assert!((e.mean - 0.7 / (PI * 0.49)).abs() < 1e-15);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn enumeration_needs_a_finite_law() {
        let k = StableKernel::new(1, 2.0).unwrap();
        let law = PotentialLaw {
            profile: SingleSiteProfile::default(),
            dist: CouplingDistribution::Uniform { v_max: 1.0 },
            transforms: vec![],
        };
        let b = McBudget {
            disorder: DisorderMode::Enumerated,
            n_paths: 4,
            n_steps: 4,
        };
        let r = estimate_laplace(&k, &law, 1.0, b, BridgeGeometry::Torus { side: 1 }, 0);
        assert!(matches!(r, Err(LabError::Mode(_))));
    }

    #[test]
    fn wrapped_cauchy_matches_fourier() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let line = LineKernel::new(k.clone(), BridgeGeometry::Torus { side: 3 }).unwrap();
        let tk = TorusKernel::new(k, 3).unwrap();
        for (s, z) in [(0.01, 0.2), (0.5, 1.7), (4.0, 2.9)] {
            let a = line.density(s, z);
            let b = tk.density(s, &[z], &[0.0]).unwrap();
            assert!((a - b).abs() < 1e-9 * b.max(1.0), "{s} {z}: {a} {b}");
        }
        for alpha in [2.0, 1.5] {
            let k = StableKernel::new(1, alpha).unwrap();
            let line = LineKernel::new(k.clone(), BridgeGeometry::Torus { side: 2 }).unwrap();
            let tk = TorusKernel::new(k, 2).unwrap();
            for (s, z) in [(0.001, 0.03), (0.05, 1.9), (0.7, 0.4), (3.0, 1.1)] {
                let a = line.density(s, z);
                let b = tk.density(s, &[z], &[0.0]).unwrap();
                assert!((a - b).abs() < 1e-8 * b.max(1.0), "α={alpha} {s} {z}: {a} {b}");
            }
        }
    }
}
