//! The experiments behind each subcommand. Every function returns its tables
//! in memory; nothing touches the output directory here.

use lifschitz_core::asymptotics::{
    default_window, fit_laplace_exponent, fit_lifschitz, free_torus_counting, ids_estimate, laplace_from_spectrum,
    tauberian_crosscheck, LaplaceCurve,
};
use lifschitz_core::montecarlo::{estimate_laplace, BridgeGeometry, DisorderMode, McBudget};
use lifschitz_core::rng::child_seed;
use lifschitz_core::spectral::{
    all_eigenvalues, assumed_order, ball_ground_state, build_dirichlet_operator, build_torus_operator,
    classical_ball_eigenvalue, default_embed_factor, eigenvalues, richardson, SpectrumResult,
};
use lifschitz_core::{
    sample_disorder, AlloyPotential, DisorderField, LabError, LatticeBox, PotentialMode, StableKernel,
};
use rayon::prelude::*;

use crate::checks;
use crate::config::{Experiment, GeometrySection, RunConfig};
use crate::error::RunError;
use crate::output::{fmt_f64, fmt_opt, Table};

/// Tables of a finished experiment; `failed` lists checks that did not pass.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub failed: Vec<String>,
}

impl From<Vec<Table>> for Outcome {
    fn from(tables: Vec<Table>) -> Self {
        Self { tables, failed: vec![] }
    }
}

const ENUMERATION_LIMIT: usize = 1 << 16;

pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    match cfg.experiment() {
        Experiment::Eig => eig(cfg).map(Into::into),
        Experiment::Ids => ids(cfg).map(Into::into),
        Experiment::LaplaceSpectral => laplace_spectral(cfg).map(Into::into),
        Experiment::LaplaceMc => laplace_mc(cfg).map(Into::into),
        Experiment::Fit => fit(cfg).map(Into::into),
        Experiment::Check => checks::run(cfg),
    }
}

fn torus_side(cfg: &RunConfig) -> u32 {
    match cfg.geometry() {
        GeometrySection::Torus { side } => *side,
        _ => unreachable!("resolved config checks the geometry"),
    }
}

fn cell(cfg: &RunConfig, side: u32) -> LatticeBox {
    LatticeBox::cube(cfg.d(), 0, side as i64)
}

fn potential(cfg: &RunConfig, field: DisorderField, side: u32) -> Result<AlloyPotential, LabError> {
    AlloyPotential::new(cfg.profile.to_core(), field, PotentialMode::Periodized { side })
}

/// Spectrum of disorder sample `i`; sample i always uses child seed i.
fn sampled_spectrum(cfg: &RunConfig, n: usize, i: usize, k: Option<usize>) -> Result<SpectrumResult, LabError> {
    let side = torus_side(cfg);
    let field = sample_disorder(
        &cfg.coupling.to_core(),
        &cell(cfg, side),
        child_seed(cfg.seed, i as u64),
    )?;
    let op = build_torus_operator(&potential(cfg, field, side)?, n, cfg.alpha())?;
    match k {
        Some(k) => eigenvalues(&op, k.min(op.dim())),
        None => all_eigenvalues(&op),
    }
}

/// Complete spectra of every disorder sample, in sample order.
fn sampled_spectra(cfg: &RunConfig, n: usize) -> Result<Vec<SpectrumResult>, LabError> {
    (0..cfg.budget.n_disorder)
        .into_par_iter()
        .map(|i| sampled_spectrum(cfg, n, i, None))
        .collect()
}

/// Complete spectra of every configuration of the torus cell, with probabilities.
fn enumerated_spectra(cfg: &RunConfig, n: usize) -> Result<(Vec<SpectrumResult>, Vec<f64>), LabError> {
    let dist = cfg.coupling.to_core();
    let atoms = dist
        .finite_support()
        .ok_or_else(|| LabError::Mode("enumeration needs a finite coupling law".into()))?;
    let side = torus_side(cfg);
    let lattice = cell(cfg, side);
    let sites = lattice.len();
    let count = (atoms.len() as f64).powi(sites as i32);
    if count > ENUMERATION_LIMIT as f64 {
        return Err(LabError::Mode(format!(
            "{count} configurations exceed the enumeration limit of {ENUMERATION_LIMIT}"
        )));
    }
    let count = count as usize;
    let results: Vec<(SpectrumResult, f64)> = (0..count)
        .into_par_iter()
        .map(|c| {
            let mut rem = c;
            let mut p = 1.0;
            let mut values = Vec::with_capacity(sites);
            for _ in 0..sites {
                let (v, w) = atoms[rem % atoms.len()];
                rem /= atoms.len();
                values.push(v);
                p *= w;
            }
            let field = DisorderField::from_values(dist.clone(), lattice.clone(), cfg.seed, values)?;
            let op = build_torus_operator(&potential(cfg, field, side)?, n, cfg.alpha())?;
            Ok((all_eigenvalues(&op)?, p))
        })
        .collect::<Result<_, LabError>>()?;
    Ok(results.into_iter().unzip())
}

fn laplace_curve(cfg: &RunConfig, n: usize) -> Result<LaplaceCurve, LabError> {
    if cfg.budget.enumerate {
        let (spectra, weights) = enumerated_spectra(cfg, n)?;
        laplace_from_spectrum(&spectra, cfg.ts(), Some(&weights))
    } else {
        laplace_from_spectrum(&sampled_spectra(cfg, n)?, cfg.ts(), None)
    }
}

pub fn eig(cfg: &RunConfig) -> Result<Vec<Table>, RunError> {
    let (d, alpha) = (cfg.d(), cfg.alpha());
    let mut eig = Table::new("eigenvalues.csv", &["n", "k", "lambda", "residual"]);
    let mut lowest = Vec::new();
    for &n in cfg.schedule() {
        let s = match cfg.geometry().domain(d) {
            Some(dom) => {
                let op = build_dirichlet_operator(&dom, alpha, n, cfg.embed_factor())?;
                eigenvalues(&op, cfg.budget.n_eigen.min(op.dim()))?
            }
            None => sampled_spectrum(cfg, n, 0, Some(cfg.budget.n_eigen))?,
        };
        for (k, lambda) in s.eigenvalues.iter().enumerate() {
            let res = s.residuals.get(k).copied();
            eig.push(vec![n.to_string(), (k + 1).to_string(), fmt_f64(*lambda), fmt_opt(res)]);
        }
        lowest.push((n, s.eigenvalues[0]));
    }
    let mut tables = vec![eig];
    if lowest.len() >= 2 && cfg.geometry().domain(d).is_some() {
        let ex = richardson(&lowest, assumed_order(alpha))?;
        let mut t = Table::new(
            "extrapolation.csv",
            &["quantity", "value", "error", "order", "measured_order"],
        );
        let row = |name: &str, scale: f64| {
            vec![
                name.to_string(),
                fmt_f64(ex.value * scale),
                fmt_f64(ex.error * scale),
                fmt_f64(ex.order),
                fmt_opt(ex.measured_order),
            ]
        };
        t.push(row("lambda_1", 1.0));
        if let GeometrySection::Ball { radius } = cfg.geometry() {
            t.push(row("lambda_1_unit_ball", radius.powf(alpha)));
        }
        tables.push(t);
    }
    Ok(tables)
}

pub fn ids(cfg: &RunConfig) -> Result<Vec<Table>, RunError> {
    let (d, alpha) = (cfg.d(), cfg.alpha());
    let side = torus_side(cfg);
    let mut t = Table::new("ids.csv", &["n", "lambda", "ids", "stderr", "hits", "g", "free_torus"]);
    for &n in cfg.schedule() {
        let spectra = sampled_spectra(cfg, n)?;
        let curve = ids_estimate(&spectra, cfg.lambdas())?;
        let s = d as f64 / alpha;
        for i in 0..curve.lambdas.len() {
            let (l, v) = (curve.lambdas[i], curve.values[i]);
            t.push(vec![
                n.to_string(),
                fmt_f64(l),
                fmt_f64(v),
                fmt_f64(curve.stderr[i]),
                curve.hits[i].to_string(),
                fmt_f64(l.powf(s) * v.ln()),
                fmt_f64(free_torus_counting(d, side as f64, n, alpha, l)),
            ]);
        }
    }
    Ok(vec![t])
}

pub fn laplace_spectral(cfg: &RunConfig) -> Result<Vec<Table>, RunError> {
    let mut raw = Table::new("laplace_spectral.csv", &["n", "t", "laplace", "stderr"]);
    let mut curves = Vec::new();
    for &n in cfg.schedule() {
        let c = laplace_curve(cfg, n)?;
        for i in 0..c.ts.len() {
            raw.push(vec![
                n.to_string(),
                fmt_f64(c.ts[i]),
                fmt_f64(c.values[i]),
                fmt_f64(c.stderr[i]),
            ]);
        }
        curves.push((n, c));
    }
    let mut tables = vec![raw];
    if curves.len() >= 2 {
        let mut ex_t = Table::new(
            "laplace_spectral_extrapolated.csv",
            &["t", "laplace", "error", "order", "measured_order", "status"],
        );
        for (i, &t) in cfg.ts().iter().enumerate() {
            let table: Vec<(usize, f64)> = curves.iter().map(|(n, c)| (*n, c.values[i])).collect();
            let finest = table[table.len() - 1].1;
            match richardson(&table, assumed_order(cfg.alpha())) {
                Ok(ex) => ex_t.push(vec![
                    fmt_f64(t),
                    fmt_f64(ex.value),
                    fmt_f64(ex.error),
                    fmt_f64(ex.order),
                    fmt_opt(ex.measured_order),
                    "extrapolated".into(),
                ]),
                Err(LabError::Convergence(_)) => ex_t.push(vec![
                    fmt_f64(t),
                    fmt_f64(finest),
                    fmt_f64(f64::NAN),
                    String::new(),
                    String::new(),
                    "raw_not_monotone".into(),
                ]),
                Err(e) => return Err(e.into()),
            }
        }
        tables.push(ex_t);
    }
    Ok(tables)
}

pub fn laplace_mc(cfg: &RunConfig) -> Result<Vec<Table>, RunError> {
    let kernel = StableKernel::new(1, cfg.alpha())?;
    let geometry = match cfg.geometry() {
        GeometrySection::Torus { side } => BridgeGeometry::Torus { side: *side },
        _ => BridgeGeometry::Free,
    };
    let budget = McBudget {
        disorder: if cfg.budget.enumerate {
            DisorderMode::Enumerated
        } else {
            DisorderMode::Sampled {
                n: cfg.budget.n_disorder,
            }
        },
        n_paths: cfg.budget.n_paths,
        n_steps: cfg.budget.n_steps,
    };
    let law = cfg.law();
    let mut t = Table::new(
        "laplace_mc.csv",
        &[
            "t",
            "laplace",
            "stderr",
            "step_doubled",
            "raw",
            "raw_stderr",
            "half_steps",
            "doubling_diff",
            "doubling_stderr",
            "diagonal",
            "n_paths",
            "n_disorder",
            "n_steps",
        ],
    );
    // common random numbers across t
    for &time in cfg.ts() {
        let e = estimate_laplace(&kernel, &law, time, budget, geometry, cfg.seed)?;
        let (value, se, doubled) = e.corrected();
        t.push(vec![
            fmt_f64(time),
            fmt_f64(value),
            fmt_f64(se),
            doubled.to_string(),
            fmt_f64(e.mean),
            fmt_f64(e.stderr),
            fmt_f64(e.mean_half),
            fmt_f64(e.doubling_diff),
            fmt_f64(e.doubling_stderr),
            fmt_f64(e.diagonal),
            e.n_paths.to_string(),
            e.n_disorder.to_string(),
            e.n_steps.to_string(),
        ]);
    }
    Ok(vec![t])
}

/// λ_1 of the unit ball: closed form for α = 2, extrapolated otherwise.
pub fn unit_ball_eigenvalue(d: usize, alpha: f64) -> Result<f64, LabError> {
    if alpha == 2.0 {
        return classical_ball_eigenvalue(d);
    }
    let schedule: &[usize] = match d {
        1 => &[256, 512, 1024],
        2 => &[16, 32, 64],
        _ => &[8, 16, 32],
    };
    Ok(ball_ground_state(d, 1.0, alpha, schedule, default_embed_factor(d))?.unit_ball)
}

pub fn fit(cfg: &RunConfig) -> Result<Vec<Table>, RunError> {
    let (d, alpha) = (cfg.d(), cfg.alpha());
    let n = *cfg.schedule().last().expect("nonempty schedule");
    let spectra = sampled_spectra(cfg, n)?;
    let curve = ids_estimate(&spectra, cfg.lambdas())?;
    let f_q0 = cfg.coupling.to_core().atom_at_zero();
    let lambda_d = match cfg.fit.lambda_d {
        Some(l) => l,
        None => unit_ball_eigenvalue(d, alpha)?,
    };
    let window = match cfg.fit.window {
        Some([lo, hi]) => (lo, hi),
        None => default_window(&curve, cfg.fit.min_hits).ok_or_else(|| {
            LabError::InsufficientStatistics(format!(
                "no threshold reaches {} disorder hits; raise budget.n_disorder or the λ grid",
                cfg.fit.min_hits
            ))
        })?,
    };
    let eig_fit = fit_lifschitz(&curve, d, alpha, Some(window), f_q0, lambda_d)?;

    let s = d as f64 / alpha;
    let mut ids_t = Table::new("fit_ids.csv", &["lambda", "ids", "stderr", "hits", "g", "in_window"]);
    for i in 0..curve.lambdas.len() {
        let l = curve.lambdas[i];
        ids_t.push(vec![
            fmt_f64(l),
            fmt_f64(curve.values[i]),
            fmt_f64(curve.stderr[i]),
            curve.hits[i].to_string(),
            fmt_f64(l.powf(s) * curve.values[i].ln()),
            (l >= window.0 && l <= window.1 && curve.values[i] > 0.0).to_string(),
        ]);
    }

    // −ln L̂ is only defined where L̂ < 1; small t on a small torus is dropped
    let lap = laplace_from_spectrum(&spectra, cfg.ts(), None)?;
    let keep: Vec<usize> = (0..lap.ts.len())
        .filter(|&i| lap.values[i] > 0.0 && lap.values[i] < 1.0)
        .collect();
    let usable = LaplaceCurve {
        ts: keep.iter().map(|&i| lap.ts[i]).collect(),
        values: keep.iter().map(|&i| lap.values[i]).collect(),
        stderr: keep.iter().map(|&i| lap.stderr[i]).collect(),
        ..lap.clone()
    };
    let lap_fit = fit_laplace_exponent(&usable, d, alpha, f_q0, Some(lambda_d)).ok();
    let mut lap_t = Table::new("fit_laplace.csv", &["t", "laplace", "stderr", "normalized", "used"]);
    let target = d as f64 / (d as f64 + alpha);
    for i in 0..lap.ts.len() {
        lap_t.push(vec![
            fmt_f64(lap.ts[i]),
            fmt_f64(lap.values[i]),
            fmt_f64(lap.stderr[i]),
            fmt_f64(lap.values[i].ln() / lap.ts[i].powf(target)),
            (lap_fit.is_some() && keep.contains(&i)).to_string(),
        ]);
    }

    let mut sum = Table::new("fit_summary.csv", &["quantity", "value"]);
    let mut put = |k: &str, v: String| sum.push(vec![k.to_string(), v]);
    put("f_q0", fmt_f64(f_q0));
    put("lambda_d", fmt_f64(lambda_d));
    put("n_disorder", spectra.len().to_string());
    put("volume", fmt_f64(curve.volume));
    put("exponent_target", fmt_f64(eig_fit.exponent_target));
    put("window_lo", fmt_f64(window.0));
    put("window_hi", fmt_f64(window.1));
    put("plateau_points", eig_fit.plateau.len().to_string());
    put("plateau_value", fmt_f64(eig_fit.plateau_value));
    put("plateau_uncertainty", fmt_f64(eig_fit.plateau_uncertainty));
    put("trend_tau", fmt_f64(eig_fit.trend.tau));
    put("trend_z", fmt_f64(eig_fit.trend.z));
    put("trend_p_increasing", fmt_f64(eig_fit.trend.p_increasing));
    put("theory_constant", fmt_opt(eig_fit.theory_constant));
    put(
        "theory_constant_volume_weighted",
        fmt_opt(eig_fit.theory_constant_volume_weighted),
    );
    if let Some(lf) = &lap_fit {
        put("laplace_slope", fmt_f64(lf.slope));
        put("laplace_slope_stderr", fmt_f64(lf.slope_stderr));
        put("laplace_target_slope", fmt_f64(lf.target_slope));
        put("laplace_prefactor", fmt_f64(lf.prefactor));
        put("laplace_prefactor_stderr", fmt_f64(lf.prefactor_stderr));
        put("laplace_theory_prefactor", fmt_opt(lf.theory_prefactor));
        let tb = tauberian_crosscheck(&eig_fit, lf, d, alpha, f_q0)?;
        put("tauberian_lambda_eig", fmt_opt(tb.implied_lambda_eig));
        put("tauberian_lambda_eig_weighted", fmt_opt(tb.implied_lambda_eig_weighted));
        put("tauberian_lambda_lap", fmt_opt(tb.implied_lambda_lap));
        put("tauberian_residual", fmt_opt(tb.residual));
        put(
            "tauberian_consistent",
            tb.consistent.map(|b| b.to_string()).unwrap_or_default(),
        );
        put(
            "tauberian_consistent_weighted",
            tb.consistent_weighted.map(|b| b.to_string()).unwrap_or_default(),
        );
    } else {
        put("laplace_points_usable", keep.len().to_string());
    }
    Ok(vec![ids_t, lap_t, sum])
}
