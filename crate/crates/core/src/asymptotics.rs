//! IDS and Laplace-transform curves from finite-volume spectra, the Lifschitz
//! plateau fit, the Laplace exponent fit, and their Tauberian comparison.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, LabError, Result};
use crate::special::unit_ball_volume;
use crate::spectral::{rate_constant, SpectrumResult};
use crate::stats::{linear_fit, mann_kendall, Moments, TrendTest};

/// ℓ̂[0, λ] on a grid of thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsCurve {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Number of disorder samples with at least one eigenvalue ≤ λ.
    pub hits: Vec<usize>,
    pub volume: f64,
    pub n_disorder: usize,
    pub geometry: String,
    pub d: usize,
    pub alpha: f64,
    /// Grid modes per unit volume, the trivial cap on ℓ̂.
    pub counting_cap: f64,
}

fn check_grid(grid: &[f64], name: &str) -> Result<()> {
    if grid.is_empty() {
        return domain(format!("{name} grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return domain(format!("{name} grid must be strictly increasing"));
    }
    Ok(())
}

fn check_same_geometry(spectra: &[SpectrumResult]) -> Result<()> {
    if spectra.len() < 2 {
        return domain(format!("need at least 2 disorder samples, got {}", spectra.len()));
    }
    let first = &spectra[0].meta;
    for s in &spectra[1..] {
        if s.meta != *first || s.eigenvalues.len() != spectra[0].eigenvalues.len() {
            return config(format!(
                "spectra come from different geometries: {} vs {}",
                first.geometry, s.meta.geometry
            ));
        }
    }
    Ok(())
}

/// ℓ̂[0, λ] = average over disorder of |Λ|^{−1} #{k : λ_k ≤ λ}.
///
/// Spectra must be complete and sorted ascending.
pub fn ids_estimate(spectra: &[SpectrumResult], lambda_grid: &[f64]) -> Result<IdsCurve> {
    check_same_geometry(spectra)?;
    check_grid(lambda_grid, "λ")?;
    let meta = &spectra[0].meta;
    let volume = meta.volume;
    let mut per_lambda = vec![Moments::default(); lambda_grid.len()];
    let mut hits = vec![0usize; lambda_grid.len()];
    for s in spectra {
        for (i, &lam) in lambda_grid.iter().enumerate() {
            let count = s.eigenvalues.partition_point(|e| *e <= lam);
            per_lambda[i].push(count as f64 / volume);
            if count > 0 {
                hits[i] += 1;
            }
        }
    }
    Ok(IdsCurve {
        lambdas: lambda_grid.to_vec(),
        values: per_lambda.iter().map(Moments::mean).collect(),
        stderr: per_lambda.iter().map(Moments::stderr).collect(),
        hits,
        volume,
        n_disorder: spectra.len(),
        geometry: meta.geometry.clone(),
        d: meta.d,
        alpha: meta.alpha,
        counting_cap: meta.dim as f64 / volume,
    })
}

/// L̂(t) = average over disorder of |Λ|^{−1} Σ_k e^{−tλ_k}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceCurve {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub volume: f64,
    pub n_disorder: usize,
}

/// Laplace transform of the counting measure; `weights` gives exact
/// probabilities for enumerated disorder (stderr is then zero).
pub fn laplace_from_spectrum(
    spectra: &[SpectrumResult],
    t_grid: &[f64],
    weights: Option<&[f64]>,
) -> Result<LaplaceCurve> {
    if spectra.len() == 1 && weights.is_some() {
        // a single enumerated configuration is an exact average
    } else {
        check_same_geometry(spectra)?;
    }
    check_grid(t_grid, "t")?;
    if t_grid.iter().any(|t| !(*t > 0.0)) {
        return domain("t grid must be positive");
    }
    let volume = spectra[0].meta.volume;
    let traces = |s: &SpectrumResult, t: f64| s.eigenvalues.iter().map(|e| (-t * e).exp()).sum::<f64>() / volume;
    let mut values = Vec::with_capacity(t_grid.len());
    let mut stderr = Vec::with_capacity(t_grid.len());
    match weights {
        Some(w) => {
            if w.len() != spectra.len() {
                return domain("one weight per spectrum is required");
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-9 || w.iter().any(|v| *v < 0.0) {
                return domain("weights must be a probability vector");
            }
            for &t in t_grid {
                values.push(spectra.iter().zip(w).map(|(s, p)| p * traces(s, t)).sum());
                stderr.push(0.0);
            }
        }
        None => {
            for &t in t_grid {
                let m: Moments = spectra.iter().map(|s| traces(s, t)).collect();
                values.push(m.mean());
                stderr.push(m.stderr());
            }
        }
    }
    Ok(LaplaceCurve {
        ts: t_grid.to_vec(),
        values,
        stderr,
        volume,
        n_disorder: spectra.len(),
    })
}

/// Plateau fit of g(λ) = λ^{d/α} ln ℓ̂[0, λ].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifschitzFit {
    pub exponent_target: f64,
    pub window: (f64, f64),
    /// (λ, g(λ)) on the window, ascending in λ.
    pub plateau: Vec<(f64, f64)>,
    /// g at the smallest λ of the window.
    pub plateau_value: f64,
    /// Half the spread of g over the lower half of the window.
    pub plateau_uncertainty: f64,
    /// Mann–Kendall test of g against ascending λ; an increasing trend means
    /// g keeps falling as λ ↓ 0.
    pub trend: TrendTest,
    /// −ln(1/F_q(0)) (λ_d^{(α)})^{d/α}; `None` when F_q(0) = 0.
    pub theory_constant: Option<f64>,
    /// The same constant with the ball volume ω_d, −ln(1/F_q(0)) ω_d (λ_d^{(α)})^{d/α}.
    pub theory_constant_volume_weighted: Option<f64>,
}

/// Default window: [λ_min, 10 λ_min], λ_min the first grid point with ≥ `min_hits` hits.
pub fn default_window(curve: &IdsCurve, min_hits: usize) -> Option<(f64, f64)> {
    let i = curve.hits.iter().position(|h| *h >= min_hits)?;
    let lo = curve.lambdas[i];
    Some((lo, 10.0 * lo))
}

pub fn fit_lifschitz(
    curve: &IdsCurve,
    d: usize,
    alpha: f64,
    window: Option<(f64, f64)>,
    f_q0: f64,
    lambda_d: f64,
) -> Result<LifschitzFit> {
    if !(0.0..=1.0).contains(&f_q0) {
        return domain(format!("F_q(0) = {f_q0} must be a probability"));
    }
    let window = match window {
        Some(w) => w,
        None => default_window(curve, 10)
            .ok_or_else(|| LabError::InsufficientStatistics("no threshold reaches 10 disorder hits".into()))?,
    };
    let s = d as f64 / alpha;
    let plateau: Vec<(f64, f64)> = curve
        .lambdas
        .iter()
        .zip(&curve.values)
        .filter(|(l, v)| **l >= window.0 && **l <= window.1 && **v > 0.0)
        .map(|(l, v)| (*l, l.powf(s) * v.ln()))
        .collect();
    if plateau.is_empty() {
        return Err(LabError::InsufficientStatistics(format!(
            "ℓ̂ vanishes on the whole window [{}, {}]",
            window.0, window.1
        )));
    }
    let g: Vec<f64> = plateau.iter().map(|p| p.1).collect();
    let lower = &g[..g.len().div_ceil(2)];
    let (mn, mx) = lower
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let (theory, weighted) = if f_q0 > 0.0 {
        let c = -(1.0 / f_q0).ln() * lambda_d.powf(s);
        (Some(c), Some(c * unit_ball_volume(d)))
    } else {
        (None, None)
    };
    Ok(LifschitzFit {
        exponent_target: s,
        window,
        plateau_value: g[0],
        plateau_uncertainty: 0.5 * (mx - mn),
        trend: mann_kendall(&g),
        plateau,
        theory_constant: theory,
        theory_constant_volume_weighted: weighted,
    })
}

/// Regression of ln(−ln L̂(t)) on ln t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceFit {
    pub slope: f64,
    pub slope_stderr: f64,
    pub target_slope: f64,
    /// −e^{intercept}: the fitted c in ln L ≈ c t^{slope}.
    pub prefactor: f64,
    pub prefactor_stderr: f64,
    /// (t, ln L̂(t) / t^{d/(d+α)}).
    pub normalized: Vec<(f64, f64)>,
    /// −C_{d,α} (ln(1/F_q(0)))^{α/(d+α)}, when F_q(0) > 0 and λ_d is given.
    pub theory_prefactor: Option<f64>,
}

pub fn fit_laplace_exponent(
    curve: &LaplaceCurve,
    d: usize,
    alpha: f64,
    f_q0: f64,
    lambda_d: Option<f64>,
) -> Result<LaplaceFit> {
    check_grid(&curve.ts, "t")?;
    if curve.ts.len() < 3 {
        return domain("at least three t values are needed");
    }
    let span = (curve.ts[curve.ts.len() - 1] / curve.ts[0]).log10();
    if span < 1.5 - 1e-12 {
        return domain(format!("t grid spans {span:.2} decades; at least 1.5 are needed"));
    }
    if let Some(bad) = curve.values.iter().position(|v| !(*v > 0.0 && *v < 1.0)) {
        return domain(format!(
            "L̂({}) = {} leaves −ln L̂ nonpositive or undefined",
            curve.ts[bad], curve.values[bad]
        ));
    }
    let x: Vec<f64> = curve.ts.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = curve.values.iter().map(|v| (-v.ln()).ln()).collect();
    let (a, b, sa, sb) = linear_fit(&x, &y);
    let target = d as f64 / (d as f64 + alpha);
    let theory = match (f_q0 > 0.0, lambda_d) {
        (true, Some(l)) => Some(-rate_constant(d, alpha, l)? * (1.0 / f_q0).ln().powf(alpha / (d as f64 + alpha))),
        _ => None,
    };
    Ok(LaplaceFit {
        slope: b,
        slope_stderr: sb,
        target_slope: target,
        prefactor: -a.exp(),
        prefactor_stderr: a.exp() * sa,
        normalized: curve
            .ts
            .iter()
            .zip(&curve.values)
            .map(|(t, v)| (*t, v.ln() / t.powf(target)))
            .collect(),
        theory_prefactor: theory,
    })
}

/// Whether the eigenvalue-side and Laplace-side constants point to the same λ_d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauberianReport {
    /// λ_d implied by the plateau through −ln(1/F) λ_d^{d/α}.
    pub implied_lambda_eig: Option<f64>,
    pub implied_lambda_eig_stderr: Option<f64>,
    /// λ_d implied by the plateau through −ln(1/F) ω_d λ_d^{d/α}.
    pub implied_lambda_eig_weighted: Option<f64>,
    /// λ_d implied by the Laplace prefactor through −C_{d,α}(λ_d) (ln 1/F)^{α/(d+α)}.
    pub implied_lambda_lap: Option<f64>,
    pub implied_lambda_lap_stderr: Option<f64>,
    /// implied_lambda_lap / implied_lambda_eig − 1.
    pub residual: Option<f64>,
    pub consistent: Option<bool>,
    /// The same 2σ test against the ω_d-weighted eigenvalue side.
    pub consistent_weighted: Option<bool>,
    pub note: String,
}

fn within_two_sigma(a: f64, sa: f64, b: f64, sb: f64) -> bool {
    let sigma = (sa * sa + sb * sb).sqrt();
    if sigma > 0.0 {
        (a - b).abs() <= 2.0 * sigma
    } else {
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
    }
}

/// Compares the two fits at 2σ through the λ_d each of them implies.
pub fn tauberian_crosscheck(
    eig: &LifschitzFit,
    lap: &LaplaceFit,
    d: usize,
    alpha: f64,
    f_q0: f64,
) -> Result<TauberianReport> {
    let mut report = TauberianReport {
        implied_lambda_eig: None,
        implied_lambda_eig_stderr: None,
        implied_lambda_eig_weighted: None,
        implied_lambda_lap: None,
        implied_lambda_lap_stderr: None,
        residual: None,
        consistent: None,
        consistent_weighted: None,
        note: String::new(),
    };
    if f_q0 <= 0.0 {
        report.note = "F_q(0) = 0: both limits are −∞ and no finite constant is compared".into();
        return Ok(report);
    }
    let nu = (1.0 / f_q0).ln();
    let s = d as f64 / alpha;
    let omega = unit_ball_volume(d);
    // eigen side: g = −ν λ^{d/α}
    let from_g = |g: f64, w: f64| (-g / (nu * w)).powf(1.0 / s);
    let le = from_g(eig.plateau_value, 1.0);
    let le_se = (from_g(eig.plateau_value - eig.plateau_uncertainty, 1.0) - le).abs();
    let lw = from_g(eig.plateau_value, omega);
    let lw_se = (from_g(eig.plateau_value - eig.plateau_uncertainty, omega) - lw).abs();
    // Laplace side: c = −C(λ) ν^{α/(d+α)}, C(λ) = C(1) λ^{d/(d+α)}
    let c1 = rate_constant(d, alpha, 1.0)?;
    let expo = d as f64 / (d as f64 + alpha);
    let from_c = |c: f64| (-c / (c1 * nu.powf(alpha / (d as f64 + alpha)))).powf(1.0 / expo);
    let ll = from_c(lap.prefactor);
    let ll_se = (from_c(lap.prefactor - lap.prefactor_stderr) - ll).abs();
    report.implied_lambda_eig = Some(le);
    report.implied_lambda_eig_stderr = Some(le_se);
    report.implied_lambda_eig_weighted = Some(lw);
    report.implied_lambda_lap = Some(ll);
    report.implied_lambda_lap_stderr = Some(ll_se);
    if !(le.is_finite() && ll.is_finite() && le > 0.0 && ll > 0.0) {
        report.consistent = Some(false);
        report.consistent_weighted = Some(false);
        report.note = "a fitted constant has the wrong sign".into();
        return Ok(report);
    }
    report.residual = Some(ll / le - 1.0);
    report.consistent = Some(within_two_sigma(le, le_se, ll, ll_se));
    report.consistent_weighted = Some(within_two_sigma(lw, lw_se, ll, ll_se));
    report.note = format!(
        "|Δλ_d| = {:.3e} (ω_d-weighted {:.3e})",
        (ll - le).abs(),
        (ll - lw).abs()
    );
    Ok(report)
}

/// #{i ∈ Z^d : |i| < r + 2a} and F_q(0) raised to that count.
pub fn lower_bound_event_prob(f_q0: f64, r: f64, a: f64, d: usize) -> Result<(usize, f64)> {
    if !(r > 0.0) {
        return domain(format!("radius r = {r} must be positive"));
    }
    if !(0.0..=1.0).contains(&f_q0) {
        return domain(format!("F_q(0) = {f_q0} must be a probability"));
    }
    let reach = r + 2.0 * a;
    let m = reach.ceil() as i64;
    let mut count = 0usize;
    let mut idx = vec![-m; d];
    loop {
        let n2: f64 = idx.iter().map(|v| (*v * *v) as f64).sum();
        if n2.sqrt() < reach {
            count += 1;
        }
        let mut k = d;
        loop {
            if k == 0 {
                return Ok((count, f_q0.powi(count as i32)));
            }
            k -= 1;
            if idx[k] < m {
                idx[k] += 1;
                break;
            }
            idx[k] = -m;
        }
    }
}

/// One point of the lower-bound chain L̂(t) ≥ |B_r|^{−1} Q[A_0] e^{−tλ_1(B_r)}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundPoint {
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn lower_bound_chain(
    curve: &LaplaceCurve,
    d: usize,
    r: f64,
    event_prob: f64,
    ball_lambda: f64,
    tolerance: f64,
) -> Vec<LowerBoundPoint> {
    let vol = unit_ball_volume(d) * r.powi(d as i32);
    curve
        .ts
        .iter()
        .zip(curve.values.iter().zip(&curve.stderr))
        .map(|(&t, (&v, &se))| {
            let bound = event_prob * (-t * ball_lambda).exp() / vol;
            LowerBoundPoint {
                t,
                estimate: v,
                stderr: se,
                bound,
                holds: v + 3.0 * se >= bound * (1.0 - tolerance),
            }
        })
        .collect()
}

/// |T_M|^{−1} #{k ∈ Z^d : −N/2 ≤ k_j < N/2, |2πk/M|^α ≤ λ}, the free torus
/// count on the same modes as the grid operator.
pub fn free_torus_counting(d: usize, side: f64, n: usize, alpha: f64, lambda: f64) -> f64 {
    let half = (n / 2) as i64;
    let radius = lambda.powf(1.0 / alpha) * side / (2.0 * std::f64::consts::PI);
    let lo = -(radius.floor() as i64).min(half);
    let hi = (radius.floor() as i64).min(half - 1);
    let radius2 = radius * radius;
    let mut count = 0usize;
    let mut idx = vec![lo; d];
    loop {
        let k2: f64 = idx.iter().map(|v| (*v * *v) as f64).sum();
        if k2 <= radius2 * (1.0 + 1e-12) {
            count += 1;
        }
        let mut a = d;
        loop {
            if a == 0 {
                return count as f64 / side.powi(d as i32);
            }
            a -= 1;
            if idx[a] < hi {
                idx[a] += 1;
                break;
            }
            idx[a] = lo;
        }
    }
}

/// ω_d / (2π)^d, the Weyl constant of ℓ[0, λ] / λ^{d/α} for the free operator.
pub fn weyl_constant(d: usize) -> f64 {
    unit_ball_volume(d) / (2.0 * std::f64::consts::PI).powi(d as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{all_eigenvalues, free_torus_operator};
    use std::f64::consts::PI;

    fn fake(values: Vec<f64>) -> SpectrumResult {
        let op = free_torus_operator(1, 1.0, 8, 2.0).unwrap();
        let mut s = all_eigenvalues(&op).unwrap();
        s.eigenvalues = values;
        s.residuals.clear();
        s
    }

    #[test]
    fn zero_disorder_ids_is_the_multiplier_count() {
        let op = free_torus_operator(1, 4.0, 64, 2.0).unwrap();
        let s = all_eigenvalues(&op).unwrap();
        let grid = [0.5, 3.0, 10.0, 40.0];
        let c = ids_estimate(&[s.clone(), s], &grid).unwrap();
        for (l, v) in grid.iter().zip(&c.values) {
            assert!((v - free_torus_counting(1, 4.0, 64, 2.0, *l)).abs() < 1e-12);
        }
        assert!(c.values.windows(2).all(|w| w[1] >= w[0]));
        assert!(c.values.iter().all(|v| *v <= c.counting_cap));
    }

    #[test]
    fn ids_below_spectrum_is_zero_and_geometry_is_checked() {
        let a = fake(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let c = ids_estimate(&[a.clone(), a.clone()], &[0.5]).unwrap();
        assert_eq!(c.values, vec![0.0]);
        let mut b = a.clone();
        b.meta.n = 16;
        assert!(matches!(
            ids_estimate(&[a.clone(), b], &[1.0]),
            Err(LabError::Configuration(_))
        ));
        assert!(matches!(ids_estimate(&[a], &[1.0]), Err(LabError::Domain(_))));
    }

    #[test]
    fn laplace_examples() {
        let mut z = fake(vec![0.0]);
        z.meta.volume = 1.0;
        let l = laplace_from_spectrum(&[z], &[0.1, 1.0, 10.0], Some(&[1.0])).unwrap();
        assert_eq!(l.values, vec![1.0, 1.0, 1.0]);
        let a = fake(vec![0.5, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let b = fake(a.eigenvalues.iter().map(|e| e + 0.3).collect());
        let la = laplace_from_spectrum(&[a.clone(), a], &[0.5, 2.0], None).unwrap();
        let lb = laplace_from_spectrum(&[b.clone(), b], &[0.5, 2.0], None).unwrap();
        for ((t, x), y) in la.ts.iter().zip(&la.values).zip(&lb.values) {
            assert!((y - x * (-0.3 * t).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn synthetic_laplace_round_trip() {
        let c = 4.05 * 2f64.ln().powf(2.0 / 3.0);
        let ts: Vec<f64> = (0..13).map(|i| 10f64.powf(0.25 * i as f64)).collect();
        let curve = LaplaceCurve {
            values: ts.iter().map(|t| (-c * t.powf(1.0 / 3.0)).exp()).collect(),
            stderr: vec![0.0; ts.len()],
            ts,
            volume: 1.0,
            n_disorder: 1,
        };
        let f = fit_laplace_exponent(&curve, 1, 2.0, 0.5, Some(PI * PI / 4.0)).unwrap();
        assert!((f.slope - 1.0 / 3.0).abs() < 1e-10);
        assert!((f.prefactor + c).abs() < 1e-9 * c);
        let short = LaplaceCurve {
            ts: vec![1.0, 2.0, 4.0],
            values: vec![0.5, 0.4, 0.3],
            stderr: vec![0.0; 3],
            volume: 1.0,
            n_disorder: 1,
        };
        assert!(matches!(
            fit_laplace_exponent(&short, 1, 2.0, 0.5, None),
            Err(LabError::Domain(_))
        ));
    }

    #[test]
    fn theory_constant_and_dichotomy() {
        let curve = IdsCurve {
            lambdas: vec![0.1, 0.2, 0.4],
            values: vec![1e-4, 1e-3, 1e-2],
            stderr: vec![0.0; 3],
            hits: vec![20, 40, 80],
            volume: 16.0,
            n_disorder: 100,
            geometry: "t".into(),
            d: 1,
            alpha: 2.0,
            counting_cap: 16.0,
        };
        let f = fit_lifschitz(&curve, 1, 2.0, None, 0.5, PI * PI / 4.0).unwrap();
        assert!((f.theory_constant.unwrap() + 2f64.ln() * PI / 2.0).abs() < 1e-12);
        assert!((f.theory_constant.unwrap() + 1.0888).abs() < 1e-4);
        assert!(f.plateau.iter().all(|p| p.1 < 0.0));
        let u = fit_lifschitz(&curve, 1, 2.0, None, 0.0, PI * PI / 4.0).unwrap();
        assert!(u.theory_constant.is_none());
        let empty = IdsCurve {
            values: vec![0.0; 3],
            hits: vec![0; 3],
            ..curve
        };
        assert!(matches!(
            fit_lifschitz(&empty, 1, 2.0, Some((0.1, 0.4)), 0.5, 1.0),
            Err(LabError::InsufficientStatistics(_))
        ));
    }

    #[test]
    fn tauberian_round_trip_and_sensitivity() {
        let lam = PI * PI / 4.0;
        let nu = 2f64.ln();
        let g = -nu * lam.sqrt();
        let c = -rate_constant(1, 2.0, lam).unwrap() * nu.powf(2.0 / 3.0);
        let eig = LifschitzFit {
            exponent_target: 0.5,
            window: (0.0, 1.0),
            plateau: vec![(0.1, g)],
            plateau_value: g,
            plateau_uncertainty: 0.0,
            trend: mann_kendall(&[g]),
            theory_constant: None,
            theory_constant_volume_weighted: None,
        };
        let mut lap = LaplaceFit {
            slope: 1.0 / 3.0,
            slope_stderr: 0.0,
            target_slope: 1.0 / 3.0,
            prefactor: c,
            prefactor_stderr: 0.0,
            normalized: vec![],
            theory_prefactor: Some(c),
        };
        let r = tauberian_crosscheck(&eig, &lap, 1, 2.0, 0.5).unwrap();
        assert!(r.residual.unwrap().abs() < 1e-12);
        assert_eq!(r.consistent, Some(true));
        assert!((r.implied_lambda_eig_weighted.unwrap() - lam / 4.0).abs() < 1e-12);
        lap.prefactor = 1.2 * c;
        assert_eq!(
            tauberian_crosscheck(&eig, &lap, 1, 2.0, 0.5).unwrap().consistent,
            Some(false)
        );
        assert!(tauberian_crosscheck(&eig, &lap, 1, 2.0, 0.0)
            .unwrap()
            .consistent
            .is_none());
    }

    #[test]
    fn lower_bound_counts() {
        assert_eq!(lower_bound_event_prob(0.5, 2.0, 0.25, 1).unwrap(), (5, 1.0 / 32.0));
        assert_eq!(lower_bound_event_prob(1.0, 7.3, 0.25, 2).unwrap().1, 1.0);
        let mut prev = 1.0;
        for r in [0.5, 1.0, 2.0, 3.5, 6.0] {
            let p = lower_bound_event_prob(0.7, r, 0.25, 1).unwrap().1;
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn weyl_limit_of_free_counting() {
        let lam = 1.0e5;
        let ratio = free_torus_counting(1, 64.0, 8192, 2.0, lam) / lam.sqrt();
        assert!((ratio / weyl_constant(1) - 1.0).abs() < 0.02);
        let ratio2 = free_torus_counting(2, 16.0, 256, 1.0, 45.0) / 45f64.powi(2);
        assert!((ratio2 / weyl_constant(2) - 1.0).abs() < 0.02);
    }
}
