//! Transition densities of the isotropic α-stable process on R^d and on tori,
//! its Lévy density, the torus fold of the Lévy density, and the diagonal
//! constant C_1 = Σ_{i∈Z^d} p(1, 0, i).
//!
//! The process has characteristic function E e^{iξ·Z_t} = e^{−t|ξ|^α}; for
//! α = 2 it is Brownian motion at double speed. Densities for α ∉ {1, 2} come
//! from a radial Fourier inversion with an error estimate, switching to the
//! large-|z| series where that series is accurate.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};
use crate::special::{bessel_j0, gamma, gauss_legendre, ln_gamma, unit_sphere_area};

/// Exponent cutoff: the Fourier integrand e^{−η^α} is dropped beyond η^α = 39.
const FOURIER_CUTOFF_EXP: f64 = 39.0;

/// A_{d,−α} = Γ((d+α)/2) / (2^{−α} π^{d/2} |Γ(−α/2)|), the Lévy density constant.
pub fn levy_constant(d: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return domain(format!("Lévy density needs 0 < α < 2, got α = {alpha}"));
    }
    if d == 0 {
        return domain("dimension must be positive");
    }
    let df = d as f64;
    Ok(gamma((df + alpha) / 2.0) / (2f64.powf(-alpha) * PI.powf(df / 2.0) * gamma(-alpha / 2.0).abs()))
}

/// Settings for the radial Fourier inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierQuadrature {
    /// Gauss–Legendre points per panel.
    pub order: usize,
    /// Integration stops at η with η^α = `cutoff_exponent` (so e^{−tR^α} ≈ e^{−cutoff}).
    pub cutoff_exponent: f64,
}

impl Default for FourierQuadrature {
    fn default() -> Self {
        Self {
            order: 16,
            cutoff_exponent: FOURIER_CUTOFF_EXP,
        }
    }
}

/// The free-space α-stable kernel in dimension d.
#[derive(Debug, Clone)]
pub struct StableKernel {
    d: usize,
    alpha: f64,
    quadrature: FourierQuadrature,
    rule: Arc<QuadRule>,
    table: Arc<OnceLock<DensityTable>>,
}

#[derive(Debug)]
struct QuadRule {
    hi: (Vec<f64>, Vec<f64>),
    lo: (Vec<f64>, Vec<f64>),
}

impl PartialEq for StableKernel {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.alpha == other.alpha && self.quadrature == other.quadrature
    }
}

impl StableKernel {
    pub fn new(d: usize, alpha: f64) -> Result<Self> {
        Self::with_quadrature(d, alpha, FourierQuadrature::default())
    }

    pub fn with_quadrature(d: usize, alpha: f64, quadrature: FourierQuadrature) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return domain(format!("dimension d = {d} must be 1, 2 or 3"));
        }
        if !(alpha > 0.0 && alpha <= 2.0) {
            return domain(format!("stability index α = {alpha} must lie in (0, 2]"));
        }
        if quadrature.order < 4 {
            return domain("quadrature order must be at least 4");
        }
        let rule = QuadRule {
            hi: gauss_legendre(quadrature.order),
            lo: gauss_legendre(quadrature.order * 2 / 3),
        };
        Ok(Self {
            d,
            alpha,
            quadrature,
            rule: Arc::new(rule),
            table: Arc::new(OnceLock::new()),
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn quadrature(&self) -> FourierQuadrature {
        self.quadrature
    }

    /// The symbol |ξ|^α.
    pub fn symbol(&self, xi: &[f64]) -> f64 {
        xi.iter().map(|v| v * v).sum::<f64>().sqrt().powf(self.alpha)
    }

    /// ν(z) = A_{d,−α} |z|^{−d−α}.
    pub fn levy_density(&self, z: &[f64]) -> Result<f64> {
        let a = levy_constant(self.d, self.alpha)?;
        let r = norm(z);
        if r == 0.0 {
            return Err(LabError::Singularity("Lévy density at z = 0".into()));
        }
        Ok(a * r.powf(-(self.d as f64) - self.alpha))
    }

    /// p(t, z).
    pub fn free_density(&self, t: f64, z: &[f64]) -> Result<f64> {
        self.free_density_with_error(t, z).map(|(v, _)| v)
    }

    /// p(t, z) together with an absolute error estimate.
    pub fn free_density_with_error(&self, t: f64, z: &[f64]) -> Result<(f64, f64)> {
        if !(t > 0.0 && t.is_finite()) {
            return domain(format!("time t = {t} must be positive"));
        }
        if z.len() != self.d {
            return domain(format!("point has dimension {}, kernel has {}", z.len(), self.d));
        }
        Ok(self.radial_density(t, norm(z)))
    }

    /// p(t, x, y) = p(t, y − x).
    pub fn transition(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        let z: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        self.free_density(t, &z)
    }

    /// p(t, 0) in closed form.
    pub fn density_at_origin(&self, t: f64) -> f64 {
        let df = self.d as f64;
        unit_sphere_area(self.d) * gamma(df / self.alpha) / (self.alpha * (2.0 * PI).powf(df))
            * t.powf(-df / self.alpha)
    }

    fn radial_density(&self, t: f64, r: f64) -> (f64, f64) {
        let d = self.d as f64;
        if self.alpha == 2.0 {
            return ((4.0 * PI * t).powf(-d / 2.0) * (-r * r / (4.0 * t)).exp(), 0.0);
        }
        if self.alpha == 1.0 {
            let c = gamma((d + 1.0) / 2.0) / PI.powf((d + 1.0) / 2.0);
            return (c * t / (t * t + r * r).powf((d + 1.0) / 2.0), 0.0);
        }
        let scale = t.powf(-1.0 / self.alpha);
        let (v, e) = self.standard_density(r * scale);
        let jac = scale.powf(d);
        (v * jac, e * jac)
    }

    /// p(1, u) for |u| = u, with an absolute error estimate.
    fn standard_density(&self, u: f64) -> (f64, f64) {
        if u >= 1.0 {
            if let Some(s) = self.tail_series(u) {
                if s.1 < 1e-14 {
                    return s;
                }
            }
        }
        self.fourier_inversion(u)
    }

    /// Large-|u| series p(1,u) = π^{−d/2−1} Σ_k (−1)^{k+1}/k! 2^{αk} Γ((αk+d)/2) Γ(αk/2+1) sin(παk/2) u^{−αk−d}.
    ///
    /// Convergent for α < 1 and asymptotic otherwise, in which case it is cut
    /// at the smallest term. Returns `None` when cancellation is too severe.
    fn tail_series(&self, u: f64) -> Option<(f64, f64)> {
        let mut sum: f64 = 0.0;
        let mut biggest: f64 = 0.0;
        let mut prev_log = f64::INFINITY;
        for k in 1..400 {
            let log_mag = self.series_magnitude(k) - (self.alpha * k as f64 + self.d as f64) * u.ln();
            if k > 2 && log_mag > prev_log {
                // optimal truncation of the asymptotic series
                if biggest > 1e3 * sum.abs() {
                    return None;
                }
                return Some((sum, prev_log.exp() + biggest * 1e-16 * k as f64));
            }
            prev_log = log_mag;
            let mag = log_mag.exp();
            sum += self.series_coefficient(k) * u.powf(-self.alpha * k as f64 - self.d as f64);
            biggest = biggest.max(mag);
            if mag < 1e-17 * sum.abs() || mag < 1e-300 {
                if biggest > 1e3 * sum.abs() {
                    return None;
                }
                return Some((sum, mag + biggest * 1e-16 * k as f64));
            }
        }
        None
    }

    fn series_magnitude(&self, k: usize) -> f64 {
        let ak = self.alpha * k as f64;
        let d = self.d as f64;
        -(d / 2.0 + 1.0) * PI.ln() + ak * 2f64.ln() + ln_gamma((ak + d) / 2.0) + ln_gamma(ak / 2.0 + 1.0)
            - ln_gamma(k as f64 + 1.0)
    }

    /// Coefficient of u^{−αk−d} in the large-|u| series.
    pub fn series_coefficient(&self, k: usize) -> f64 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sign * self.series_magnitude(k).exp() * (PI * self.alpha * k as f64 / 2.0).sin()
    }

    fn fourier_inversion(&self, u: f64) -> (f64, f64) {
        let alpha = self.alpha;
        let big_r = self.quadrature.cutoff_exponent.powf(1.0 / alpha);
        let d = self.d;
        if d == 3 && u < 1e-7 {
            return (self.density_at_origin(1.0), 1e-14);
        }
        let integrand = |eta: f64| -> f64 {
            let damp = (-eta.powf(alpha)).exp();
            match d {
                1 => (eta * u).cos() * damp,
                2 => eta * bessel_j0(eta * u) * damp,
                _ => eta * (eta * u).sin() * damp,
            }
        };
        let prefactor = match d {
            1 => 1.0 / PI,
            2 => 1.0 / (2.0 * PI),
            _ => 1.0 / (2.0 * PI * PI * u),
        };
        let mut breaks = vec![0.0];
        let r0 = big_r.min(1.0);
        for k in (1..=40).rev() {
            breaks.push(r0 * 0.5f64.powi(k));
        }
        breaks.push(r0);
        let width = if u > 0.0 { (PI / u).min(1.0) } else { 1.0 };
        let panels = ((big_r - r0) / width).ceil().max(0.0) as usize;
        for j in 1..=panels {
            breaks.push((r0 + j as f64 * width).min(big_r));
        }
        let (mut hi_sum, mut lo_sum) = (0.0, 0.0);
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            let (xs, ws) = &self.rule.hi;
            hi_sum += half
                * xs.iter()
                    .zip(ws)
                    .map(|(x, w)| w * integrand(mid + half * x))
                    .sum::<f64>();
            let (xs, ws) = &self.rule.lo;
            lo_sum += half
                * xs.iter()
                    .zip(ws)
                    .map(|(x, w)| w * integrand(mid + half * x))
                    .sum::<f64>();
        }
        let tail = (-self.quadrature.cutoff_exponent).exp() * big_r;
        let value = prefactor * hi_sum;
        let err = prefactor.abs() * ((hi_sum - lo_sum).abs() + tail) + 1e-16 * value.abs();
        (value, err)
    }

    /// Fast p(t, z) for d = 1: closed forms for α ∈ {1, 2}, otherwise a cubic
    /// table of p(1, ·) on [0, 32] and the tail series beyond.
    pub fn density_1d(&self, t: f64, z: f64) -> f64 {
        if self.alpha == 2.0 {
            return (-z * z / (4.0 * t)).exp() / (4.0 * PI * t).sqrt();
        }
        if self.alpha == 1.0 {
            return t / (PI * (t * t + z * z));
        }
        let scale = t.powf(-1.0 / self.alpha);
        scale * self.table().eval(self, z.abs() * scale)
    }

    fn table(&self) -> &DensityTable {
        self.table.get_or_init(|| DensityTable::build(self))
    }

    /// Sum Σ_{j≥J+1} p(t, δ + jM) over one side of a 1-D lattice fold, from
    /// the tail series with Euler–Maclaurin corrections. Valid when (J+½)M − |δ|
    /// is far beyond the bulk of p(t, ·).
    fn fold_tail_1d(&self, t: f64, delta: f64, m: f64, j: usize) -> f64 {
        if self.alpha == 2.0 {
            let mut s = 0.0;
            for k in j + 1..j + 200 {
                let z = delta + k as f64 * m;
                let v = (-z * z / (4.0 * t)).exp() / (4.0 * PI * t).sqrt();
                s += v;
                if v < 1e-300 {
                    break;
                }
            }
            return s;
        }
        let table = self.table();
        let lt = t.ln();
        let mut total = 0.0;
        for (i, (lm, sg)) in table.series_log.iter().zip(&table.series_sign).enumerate().take(59) {
            let k = (i + 1) as f64;
            let p = self.alpha * k + 1.0;
            // magnitude without the sine factor, which vanishes for some k
            let size = (lm + k * lt).exp() * power_tail_sum(p, m, delta, j);
            total += sg * size;
            if size < 1e-18 * total.abs().max(1e-300) {
                break;
            }
        }
        total
    }

    /// Σ_{i∈Z^d} p(t, δ + iM) by direct lattice summation plus analytic tails.
    pub fn lattice_fold(&self, t: f64, delta: &[f64], m: f64, terms: usize) -> Result<f64> {
        if !(t > 0.0) {
            return domain(format!("time t = {t} must be positive"));
        }
        if delta.len() != self.d {
            return domain("offset dimension mismatch");
        }
        if self.d == 1 {
            let spread = t.powf(1.0 / self.alpha);
            let need = if self.alpha == 2.0 {
                (12.0 * spread / m).ceil() as usize + 2
            } else {
                (60.0 * spread / m).ceil() as usize + 2
            };
            let j = terms.max(need);
            let mut s = 0.0;
            for k in -(j as i64)..=(j as i64) {
                s += self.density_1d(t, delta[0] + k as f64 * m);
            }
            s += self.fold_tail_1d(t, delta[0], m, j) + self.fold_tail_1d(t, -delta[0], m, j);
            return Ok(s);
        }
        if self.alpha == 2.0 {
            // the Gaussian factorizes over axes
            let k1 = StableKernel::new(1, 2.0)?;
            let mut prod = 1.0;
            for &c in delta {
                prod *= k1.lattice_fold(t, &[c], m, terms)?;
            }
            return Ok(prod);
        }
        let j = terms as i64;
        let mut s = 0.0;
        let mut idx = vec![-j; self.d];
        let mut z = vec![0.0; self.d];
        loop {
            for a in 0..self.d {
                z[a] = delta[a] + idx[a] as f64 * m;
            }
            s += self.free_density(t, &z)?;
            let mut a = self.d;
            loop {
                if a == 0 {
                    return Ok(s + self.cube_tail(t, delta, m, j as usize));
                }
                a -= 1;
                if idx[a] < j {
                    idx[a] += 1;
                    break;
                }
                idx[a] = -j;
            }
        }
    }

    /// Σ_{|i|_∞ > J} p(t, δ + iM) for d ≥ 2 from the far-field series
    /// Σ_k a_k t^k |z|^{−d−αk}, integrated outside the cube of half-width
    /// (J + ½)M with the midpoint and offset corrections (|δ|²/2d − M²/24) ∫Δf.
    fn cube_tail(&self, t: f64, delta: &[f64], m: f64, j: usize) -> f64 {
        let d = self.d as f64;
        let half = (j as f64 + 0.5) * m;
        let shift = delta.iter().map(|c| c * c).sum::<f64>() / (2.0 * d) - m * m / 24.0;
        let mut tail = 0.0;
        for k in 1..=6 {
            let a = self.series_coefficient(k);
            let beta = self.alpha * k as f64;
            let gamma = d + beta;
            let main = cube_exterior_integral(self.d, beta) * half.powf(-beta);
            let lap = gamma * (gamma + 2.0 - d) * cube_exterior_integral(self.d, beta + 2.0) * half.powf(-beta - 2.0);
            tail += a * t.powi(k as i32) * (main + shift * lap) / m.powi(self.d as i32);
        }
        tail
    }

    /// Diagonal constant C_1 = Σ_{i∈Z^d} p(1, 0, i), plus p_M(1, x, x) for the given sides.
    pub fn diag_bound(&self, sides: &[u32]) -> Result<DiagBound> {
        let zero = vec![0.0; self.d];
        let c1 = self.lattice_fold(1.0, &zero, 1.0, 64)?;
        let mut torus_diagonal = Vec::with_capacity(sides.len());
        for &m in sides {
            let tk = TorusKernel::new(self.clone(), m)?;
            torus_diagonal.push((m, tk.density(1.0, &zero, &zero)?));
        }
        Ok(DiagBound { c1, torus_diagonal })
    }

    /// Σ_{|i|_∞ ≤ J} p(1, 0, i) without tail correction, for each J.
    pub fn diag_partial_sums(&self, radii: &[usize]) -> Result<Vec<f64>> {
        radii
            .iter()
            .map(|&j| {
                if self.d == 1 {
                    Ok((-(j as i64)..=j as i64).map(|k| self.density_1d(1.0, k as f64)).sum())
                } else {
                    let mut s = 0.0;
                    let mut idx = vec![-(j as i64); self.d];
                    loop {
                        let z: Vec<f64> = idx.iter().map(|v| *v as f64).collect();
                        s += self.free_density(1.0, &z)?;
                        let mut a = self.d;
                        loop {
                            if a == 0 {
                                return Ok(s);
                            }
                            a -= 1;
                            if idx[a] < j as i64 {
                                idx[a] += 1;
                                break;
                            }
                            idx[a] = -(j as i64);
                        }
                    }
                }
            })
            .collect()
    }
}

/// ∫_{|z|_∞ > 1} |z|^{−d−β} dz = (2d/β) ∫_{[−1,1]^{d−1}} (1 + |u|²)^{−(d+β)/2} du.
fn cube_exterior_integral(d: usize, beta: f64) -> f64 {
    let (x, w) = gauss_legendre(32);
    let e = -(d as f64 + beta) / 2.0;
    let face = match d {
        1 => 1.0,
        2 => x.iter().zip(&w).map(|(u, wu)| wu * (1.0 + u * u).powf(e)).sum(),
        _ => {
            let mut acc = 0.0;
            for (u, wu) in x.iter().zip(&w) {
                for (v, wv) in x.iter().zip(&w) {
                    acc += wu * wv * (1.0 + u * u + v * v).powf(e);
                }
            }
            acc
        }
    };
    2.0 * d as f64 * face / beta
}

/// Σ_{j≥J+1} (jM + δ)^{−p} by the midpoint Euler–Maclaurin formula:
/// ∫_{J+½}^∞ f + f′(J+½)/24 − 7 f‴(J+½)/5760.
fn power_tail_sum(p: f64, m: f64, delta: f64, j: usize) -> f64 {
    let s0 = (j as f64 + 0.5) * m + delta;
    let integral = s0.powf(1.0 - p) / (m * (p - 1.0));
    let d1 = -p * m * s0.powf(-p - 1.0);
    let d3 = -p * (p + 1.0) * (p + 2.0) * m.powi(3) * s0.powf(-p - 3.0);
    integral + d1 / 24.0 - 7.0 * d3 / 5760.0
}

/// Result of [`StableKernel::diag_bound`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiagBound {
    pub c1: f64,
    /// (M, p_M(1, x, x)) pairs.
    pub torus_diagonal: Vec<(u32, f64)>,
}

/// Cubic interpolation table of p(1, u), u ∈ [0, 32], for d = 1.
#[derive(Debug)]
struct DensityTable {
    step: f64,
    values: Vec<f64>,
    /// Log magnitudes and signed sine factors of the far-field series terms.
    series_log: Vec<f64>,
    series_sign: Vec<f64>,
}

impl DensityTable {
    const UMAX: f64 = 32.0;
    const PER_UNIT: usize = 256;

    fn build(k: &StableKernel) -> Self {
        let n = (Self::UMAX as usize) * Self::PER_UNIT + 3;
        let step = 1.0 / Self::PER_UNIT as f64;
        let values = (0..n).map(|i| k.standard_density(i as f64 * step).0).collect();
        let terms = 64;
        let series_log = (1..=terms).map(|j| k.series_magnitude(j)).collect();
        let series_sign = (1..=terms)
            .map(|j| {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * (PI * k.alpha * j as f64 / 2.0).sin()
            })
            .collect();
        Self {
            step,
            values,
            series_log,
            series_sign,
        }
    }

    /// The far-field series with cached coefficients; `None` where the
    /// uncached routine has to decide.
    fn far_field(&self, alpha: f64, u: f64) -> Option<f64> {
        let lu = u.ln();
        let mut sum = 0.0;
        let mut biggest: f64 = 0.0;
        let mut prev = f64::INFINITY;
        for (j, (lm, sg)) in self.series_log.iter().zip(&self.series_sign).enumerate() {
            let k = (j + 1) as f64;
            let log_mag = lm - (alpha * k + 1.0) * lu;
            if j > 1 && log_mag > prev {
                return (prev.exp() < 1e-14 * sum && biggest < 1e3 * sum).then_some(sum);
            }
            prev = log_mag;
            let mag = log_mag.exp();
            sum += sg * mag;
            biggest = biggest.max(mag);
            if mag < 1e-17 * sum.abs() {
                return (biggest < 1e3 * sum).then_some(sum);
            }
        }
        None
    }

    fn eval(&self, k: &StableKernel, u: f64) -> f64 {
        if u >= Self::UMAX {
            return self.far_field(k.alpha, u).unwrap_or_else(|| k.standard_density(u).0);
        }
        let s = u / self.step;
        let i = s.floor() as i64;
        let f = s - i as f64;
        let at = |j: i64| self.values[j.unsigned_abs() as usize];
        let (y0, y1, y2, y3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        // cubic Lagrange through four equispaced nodes
        y1 + 0.5 * f * (y2 - y0 + f * (2.0 * y0 - 5.0 * y1 + 4.0 * y2 - y3 + f * (3.0 * (y1 - y2) + y3 - y0)))
    }
}

/// The projected process on the torus T_M = R^d / (M Z^d).
#[derive(Debug, Clone, PartialEq)]
pub struct TorusKernel {
    pub base: StableKernel,
    pub side: u32,
    /// Lattice truncation radius for fold sums.
    pub fold_terms: usize,
}

impl TorusKernel {
    pub fn new(base: StableKernel, side: u32) -> Result<Self> {
        if side == 0 {
            return domain("torus side M must be positive");
        }
        Ok(Self {
            base,
            side,
            fold_terms: 64,
        })
    }

    fn offset(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let d = self.base.dim();
        if x.len() != d || y.len() != d {
            return domain("torus point dimension mismatch");
        }
        let m = self.side as f64;
        Ok(x.iter().zip(y).map(|(a, b)| (a - b).rem_euclid(m)).collect())
    }

    /// p_M(t, x, y) by the Fourier eigen-sum M^{−d} Σ_k e^{−t|2πk/M|^α} cos(2πk·(x−y)/M).
    pub fn density(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        self.density_with_error(t, x, y).map(|(v, _)| v)
    }

    /// Fourier eigen-sum with a bound on the truncated modes.
    pub fn density_with_error(&self, t: f64, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
        if !(t > 0.0 && t.is_finite()) {
            return domain(format!("time t = {t} must be positive"));
        }
        let delta = self.offset(x, y)?;
        let m = self.side as f64;
        let alpha = self.base.alpha();
        let d = self.base.dim();
        let c = t * (2.0 * PI / m).powf(alpha);
        // smallest K with e^{−cK^α} · (polynomial) below 1e-18
        let mut kmax = ((45.0 / c).powf(1.0 / alpha)).ceil().max(1.0) as i64;
        let tail = |k: i64| -> f64 {
            let x = c * (k as f64).powf(alpha);
            let one_d = 2.0 * (-x).exp() * (1.0 + (k as f64) / (alpha * x).max(1e-300));
            one_d * (2 * k + 1).pow(d as u32 - 1) as f64 * d as f64 / m.powi(d as i32)
        };
        while tail(kmax) > 1e-13 {
            kmax = (kmax as f64 * 1.2).ceil() as i64 + 1;
        }
        if (2 * kmax + 1).pow(d as u32) > 50_000_000 {
            return Err(LabError::NumericRange(format!(
                "Fourier sum needs {kmax} modes per axis at t = {t}; use the lattice fold"
            )));
        }
        let mut s = 0.0;
        let mut k = vec![-kmax; d];
        loop {
            let k2: f64 = k.iter().map(|v| (*v * *v) as f64).sum();
            let phase: f64 = k.iter().zip(&delta).map(|(kk, dd)| *kk as f64 * dd).sum();
            s += (-c * k2.powf(alpha / 2.0)).exp() * (2.0 * PI * phase / m).cos();
            let mut a = d;
            loop {
                if a == 0 {
                    let norm = m.powi(d as i32);
                    return Ok((s / norm, tail(kmax)));
                }
                a -= 1;
                if k[a] < kmax {
                    k[a] += 1;
                    break;
                }
                k[a] = -kmax;
            }
        }
    }

    /// p_M(t, x, y) = Σ_{y'∈π^{−1}(y)} p(t, x, y') by lattice summation.
    pub fn density_fold(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        let delta = self.offset(x, y)?;
        self.base.lattice_fold(t, &delta, self.side as f64, self.fold_terms)
    }

    /// ν_M(x, y) = Σ_{y'} A_{d,−α} |x − y'|^{−d−α}, with error estimate.
    pub fn levy_with_error(&self, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
        let alpha = self.base.alpha();
        let a = levy_constant(self.base.dim(), alpha)?;
        let mut delta = self.offset(x, y)?;
        let m = self.side as f64;
        // nearest representative in [−M/2, M/2)
        for v in delta.iter_mut() {
            if *v >= m / 2.0 {
                *v -= m;
            }
        }
        if delta.iter().all(|v| *v == 0.0) {
            return Err(LabError::Singularity("ν_M(x, x) is infinite".into()));
        }
        let d = self.base.dim();
        let j = self.fold_terms;
        if d == 1 {
            let p = 1.0 + alpha;
            let mut s = 0.0;
            for k in -(j as i64)..=j as i64 {
                s += a * (delta[0] + k as f64 * m).abs().powf(-p);
            }
            let tail = power_tail_sum(p, m, delta[0], j) + power_tail_sum(p, m, -delta[0], j);
            let s0 = (j as f64 + 0.5) * m - delta[0].abs();
            let err = a * 2.0 * 31.0 / 967_680.0
                * p
                * (p + 1.0)
                * (p + 2.0)
                * (p + 3.0)
                * (p + 4.0)
                * m.powi(5)
                * s0.powf(-p - 5.0)
                / m;
            return Ok((s + a * tail, err));
        }
        let p = d as f64 + alpha;
        let mut s = 0.0;
        let mut idx = vec![-(j as i64); d];
        loop {
            let r2: f64 = idx.iter().zip(&delta).map(|(k, dd)| (dd + *k as f64 * m).powi(2)).sum();
            s += a * r2.sqrt().powf(-p);
            let mut ax = d;
            loop {
                if ax == 0 {
                    let half = (j as f64 + 0.5) * m;
                    let shift = delta.iter().map(|c| c * c).sum::<f64>() / (2.0 * d as f64) - m * m / 24.0;
                    let main = cube_exterior_integral(d, alpha) * half.powf(-alpha);
                    let lap =
                        p * (p + 2.0 - d as f64) * cube_exterior_integral(d, alpha + 2.0) * half.powf(-alpha - 2.0);
                    let tail = a * (main + shift * lap) / m.powi(d as i32);
                    // next order is O(half^{−4}) relative to the leading tail
                    let err = a * main * (p + 4.0).powi(2) * (m / half).powi(4) / m.powi(d as i32);
                    return Ok((s + tail, err));
                }
                ax -= 1;
                if idx[ax] < j as i64 {
                    idx[ax] += 1;
                    break;
                }
                idx[ax] = -(j as i64);
            }
        }
    }

    pub fn levy(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.levy_with_error(x, y).map(|(v, _)| v)
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One row of an exported density table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityRow {
    pub t: f64,
    pub z: f64,
    pub value: f64,
    pub error_bound: f64,
}

/// p(t, z) on a (t, z) grid for d = 1, with error estimates.
pub fn density_table(kernel: &StableKernel, ts: &[f64], zs: &[f64]) -> Result<Vec<DensityRow>> {
    let mut rows = Vec::with_capacity(ts.len() * zs.len());
    for &t in ts {
        for &z in zs {
            let mut point = vec![0.0; kernel.dim()];
            point[0] = z;
            let (value, error_bound) = kernel.free_density_with_error(t, &point)?;
            rows.push(DensityRow {
                t,
                z,
                value,
                error_bound,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn levy_constant_examples() {
        assert_relative_eq!(levy_constant(1, 1.0).unwrap(), 1.0 / PI, epsilon = 1e-14);
        assert_relative_eq!(levy_constant(2, 1.0).unwrap(), 1.0 / (2.0 * PI), epsilon = 1e-14);
        assert!(matches!(levy_constant(1, 2.0), Err(LabError::Domain(_))));
        // α 2^{α−1} Γ((d+α)/2) / (π^{d/2} Γ(1 − α/2))
        for (d, alpha) in [(1usize, 0.7), (2, 1.3), (3, 1.9)] {
            let df = d as f64;
            let alt = alpha * 2f64.powf(alpha - 1.0) * gamma((df + alpha) / 2.0)
                / (PI.powf(df / 2.0) * gamma(1.0 - alpha / 2.0));
            assert_relative_eq!(levy_constant(d, alpha).unwrap(), alt, max_relative = 1e-13);
        }
        let near = levy_constant(1, 1.999_999).unwrap();
        assert!(
            near < 1e-5,
            "A_{{1,-α}} vanishes as α → 2 (density coefficient), got {near}"
        );
    }

    #[test]
    fn closed_forms_at_origin() {
        let g = StableKernel::new(1, 2.0).unwrap();
        assert_relative_eq!(
            g.free_density(1.0, &[0.0]).unwrap(),
            0.282_094_791_773_878_1,
            epsilon = 1e-15
        );
        let c = StableKernel::new(1, 1.0).unwrap();
        assert_relative_eq!(c.free_density(1.0, &[0.0]).unwrap(), 1.0 / PI, epsilon = 1e-15);
        assert!(matches!(c.free_density(0.0, &[0.0]), Err(LabError::Domain(_))));
        for (d, alpha) in [(1, 1.5), (2, 0.8), (3, 1.2), (2, 2.0), (3, 1.0)] {
            let k = StableKernel::new(d, alpha).unwrap();
            let z = vec![0.0; d];
            assert_relative_eq!(
                k.free_density(0.7, &z).unwrap(),
                k.density_at_origin(0.7),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn quadrature_reproduces_cauchy_and_gauss() {
        // force the general route by perturbing α off the closed-form values
        for alpha in [1.0 - 1e-12, 2.0 - 1e-12] {
            let k = StableKernel::new(1, alpha).unwrap();
            let exact = StableKernel::new(1, alpha.round()).unwrap();
            for z in [0.0, 0.3, 1.0, 2.5, 7.0, 20.0] {
                let (v, e) = k.standard_density(z);
                let w = exact.free_density(1.0, &[z]).unwrap();
                assert!((v - w).abs() < 1e-9, "α={alpha} z={z}: {v} vs {w}");
                assert!(e < 1e-8);
            }
        }
    }

    #[test]
    fn series_and_quadrature_agree_where_both_apply() {
        for d in 1..=3 {
            for alpha in [0.6, 1.5] {
                let k = StableKernel::new(d, alpha).unwrap();
                for u in [6.0, 12.0] {
                    let (s, _) = k
                        .tail_series(u)
                        .unwrap_or_else(|| panic!("series fails d={d} α={alpha} u={u}"));
                    let (q, e) = k.fourier_inversion(u);
                    assert!((s - q).abs() < 1e-10 + 10.0 * e, "d={d} α={alpha} u={u}: {s} vs {q}");
                }
            }
        }
    }

    #[test]
    fn table_matches_direct_evaluation() {
        let k = StableKernel::new(1, 1.5).unwrap();
        for z in [0.0, 0.0123, 0.77, 3.3, 15.1, 31.9, 40.0] {
            let direct = k.free_density(1.0, &[z]).unwrap();
            assert!((k.density_1d(1.0, z) - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_diag_bound() {
        let k = StableKernel::new(1, 2.0).unwrap();
        let direct: f64 = (-60i64..=60).map(|j| (-(j * j) as f64 / 4.0).exp()).sum::<f64>() / (4.0 * PI).sqrt();
        let b = k.diag_bound(&[1, 2, 4]).unwrap();
        assert_relative_eq!(b.c1, direct, epsilon = 1e-13);
        for (_, v) in &b.torus_diagonal {
            assert!(*v - b.c1 <= 1e-10);
        }
    }

    #[test]
    fn cauchy_diag_bound_is_coth_pi() {
        let k = StableKernel::new(1, 1.0).unwrap();
        let b = k.diag_bound(&[1, 2, 4]).unwrap();
        assert_relative_eq!(b.c1, 1.0 / PI.tanh(), epsilon = 1e-10);
        assert_relative_eq!(b.torus_diagonal[0].1, b.c1, epsilon = 1e-10);
        assert!(b.torus_diagonal.iter().all(|(_, v)| *v - b.c1 <= 1e-10));
    }

    #[test]
    fn diag_partial_sums_increase() {
        let k = StableKernel::new(1, 1.3).unwrap();
        let sums = k.diag_partial_sums(&[0, 1, 2, 4, 8, 16]).unwrap();
        assert!(sums.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn torus_density_examples() {
        let g = TorusKernel::new(StableKernel::new(1, 2.0).unwrap(), 1).unwrap();
        assert!((g.density(100.0, &[0.3], &[0.8]).unwrap() - 1.0).abs() < 1e-10);
        // fold of the Gauss kernel against the Fourier sum at t = 0.5
        let fold: f64 = (-40i64..=40).map(|j| (-(j * j) as f64 / 2.0).exp()).sum::<f64>() / (2.0 * PI).sqrt();
        let fourier: f64 = (-40i64..=40)
            .map(|k| (-0.5 * (2.0 * PI * k as f64).powi(2)).exp())
            .sum();
        assert!((fold - fourier).abs() < 1e-10);
        assert!((g.density(0.5, &[0.0], &[0.0]).unwrap() - fourier).abs() < 1e-10);
        let c = TorusKernel::new(StableKernel::new(1, 1.0).unwrap(), 3).unwrap();
        assert_eq!(
            c.density(0.4, &[0.2], &[2.1]).unwrap(),
            c.density(0.4, &[2.1], &[0.2]).unwrap()
        );
        assert!(matches!(c.density(-1.0, &[0.0], &[0.0]), Err(LabError::Domain(_))));
    }

    #[test]
    fn wrapped_cauchy_closed_form() {
        let m = 4.0;
        let c = TorusKernel::new(StableKernel::new(1, 1.0).unwrap(), 4).unwrap();
        for (t, x) in [(0.1, 0.3), (1.0, 1.7), (5.0, 3.9)] {
            let a = 2.0 * PI * t / m;
            let closed = a.sinh() / (m * (a.cosh() - (2.0 * PI * x / m).cos()));
            assert!((c.density(t, &[x], &[0.0]).unwrap() - closed).abs() < 1e-12);
            assert!((c.density_fold(t, &[x], &[0.0]).unwrap() - closed).abs() < 1e-10);
        }
    }

    #[test]
    fn torus_levy_examples() {
        let tk = TorusKernel::new(StableKernel::new(1, 1.0).unwrap(), 4).unwrap();
        let (v, err) = tk.levy_with_error(&[0.0], &[1.0]).unwrap();
        // Σ_j |1 + 4j|^{−2} = (π/4)^2 / sin^2(π/4), divided by π
        let exact = (PI / 4.0).powi(2) / (PI / 4.0).sin().powi(2) / PI;
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
        assert!(err <= 1e-10);
        assert_relative_eq!(v, tk.levy(&[1.0], &[0.0]).unwrap(), max_relative = 1e-14);
        let free = tk.base.levy_density(&[1.0]).unwrap();
        assert!(v >= free);
        assert!(matches!(tk.levy(&[0.5], &[4.5]), Err(LabError::Singularity(_))));
        let g = TorusKernel::new(StableKernel::new(1, 2.0).unwrap(), 4).unwrap();
        assert!(matches!(g.levy(&[0.0], &[1.0]), Err(LabError::Domain(_))));
    }

    #[test]
    fn torus_levy_tail_correction_small_alpha() {
        // brute force with a very long direct sum plus the same tail formula
        let tk = TorusKernel::new(StableKernel::new(1, 0.5).unwrap(), 3).unwrap();
        let mut long = tk.clone();
        long.fold_terms = 20_000;
        let (a, _) = tk.levy_with_error(&[0.4], &[2.2]).unwrap();
        let (b, _) = long.levy_with_error(&[0.4], &[2.2]).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}
