//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use lifschitz_core::asymptotics::{
    fit_laplace_exponent, fit_lifschitz, ids_estimate, laplace_from_spectrum, lower_bound_chain,
    lower_bound_event_prob, weyl_constant, LaplaceCurve,
};
use lifschitz_core::model::{periodization_gap, GapMode};
use lifschitz_core::montecarlo::{
    bridge_fold_check, estimate_laplace, BridgeGeometry, DisorderMode, McBudget, PotentialLaw,
};
use lifschitz_core::rng::{child_seed, key, open_unit};
use lifschitz_core::spectral::{
    all_eigenvalues, assumed_order, ball_ground_state, build_torus_operator, free_torus_operator, rate_constant,
    rate_function, richardson, torus_operator_from_fn, SpectrumResult,
};
use lifschitz_core::{
    sample_disorder, AlloyPotential, CouplingDistribution, DisorderField, LatticeBox, PotentialMode, SingleSiteProfile,
    StableKernel,
};
use rayon::prelude::*;

const BIN: &str = env!("CARGO_BIN_EXE_lifschitz-lab");

type Verdict = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn unit_ball(alpha: f64) -> f64 {
    ball_ground_state(1, 1.0, alpha, &[256, 512, 1024], 256)
        .unwrap()
        .unit_ball
}

fn ball_ground_state_via_cli() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eig");
    let status = Command::new(BIN)
        .args([
            "eig",
            "--alpha",
            "2",
            "--d",
            "1",
            "--ball-r",
            "1",
            "--N",
            "256,512,1024",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    let rows = read_csv(&out.join("extrapolation.csv"));
    let lambda: f64 = rows[0][1].parse().unwrap();
    let exact = PI * PI / 4.0;
    let rel = (lambda - exact).abs() / exact;
    verdict(
        rel < 1e-3,
        format!("λ_1 = {lambda:.6}, π²/4 = {exact:.6}, rel {rel:.1e}"),
    )
}

fn ball_scaling() -> Verdict {
    let mut worst = 0.0f64;
    for alpha in [1.0, 1.5, 2.0] {
        let vals: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&r| {
                ball_ground_state(1, r, alpha, &[256, 512, 1024], 256)
                    .unwrap()
                    .unit_ball
            })
            .collect();
        let (lo, hi) = vals
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        worst = worst.max(hi / lo - 1.0);
    }
    verdict(worst < 0.01, format!("max spread of λ_1(B_r) r^α over r: {worst:.1e}"))
}

fn rate_function_closed_form() -> Verdict {
    let mut worst = 0.0f64;
    let mut at_one = 0.0;
    for alpha in [1.0, 2.0] {
        let lambda = if alpha == 2.0 { PI * PI / 4.0 } else { unit_ball(alpha) };
        for nu in [0.5, 1.0, 2.0] {
            let rf = rate_function(nu, 1, alpha, lambda).unwrap();
            let closed = rate_constant(1, alpha, lambda).unwrap() * nu.powf(alpha / (1.0 + alpha));
            worst = worst.max((rf.value - closed).abs() / closed);
            if alpha == 2.0 && nu == 1.0 {
                at_one = rf.value;
            }
        }
    }
    verdict(
        worst < 1e-8 && (at_one - 4.0536).abs() < 5e-4,
        format!("max rel gap {worst:.1e}, (d,α)=(1,2) ν=1 value {at_one:.6}"),
    )
}

fn torus_scaling() -> Verdict {
    let profile = SingleSiteProfile::default();
    let dist = CouplingDistribution::Uniform { v_max: 2.0 };
    let mut worst = 0.0f64;
    for alpha in [1.0, 2.0] {
        for k in [2u32, 3] {
            let kf = k as f64;
            let field = sample_disorder(&dist, &LatticeBox::cube(1, 0, k as i64), 17).unwrap();
            let pot = AlloyPotential::new(profile.clone(), field, PotentialMode::Periodized { side: k }).unwrap();
            let n = 96 * k as usize;
            let big = torus_operator_from_fn(1, kf, n, alpha, |x| pot.eval(x)).unwrap();
            let small =
                torus_operator_from_fn(1, 1.0, n, alpha, |x| Ok(kf.powf(alpha) * pot.eval(&[kf * x[0]])?)).unwrap();
            let a = all_eigenvalues(&big).unwrap().eigenvalues[0];
            let b = kf.powf(-alpha) * all_eigenvalues(&small).unwrap().eigenvalues[0];
            worst = worst.max((a - b).abs() / a);
        }
    }
    verdict(worst < 5e-3, format!("max rel gap {worst:.1e}"))
}

fn periodization() -> Verdict {
    let mut violations = 0;
    let mut cases = 0;
    for case in 0..200u64 {
        let u = |j: i64| open_unit(key(2024, &[case as i64, j]));
        let dist = if case % 2 == 0 {
            CouplingDistribution::Bernoulli {
                p0: 0.05 + 0.9 * u(0),
                v: 0.05 + 5.0 * u(1),
            }
        } else {
            let p0 = 0.05 + 0.85 * u(0);
            let split = u(1);
            let v1 = 0.05 + 3.0 * u(2);
            CouplingDistribution::PointMasses {
                masses: vec![
                    (0.0, p0),
                    (v1, (1.0 - p0) * split),
                    (v1 + 0.05 + 3.0 * u(3), (1.0 - p0) * (1.0 - split)),
                ],
            }
        };
        let len = 1 + (u(4) * 8.0) as i64;
        let weights: Vec<(Vec<i64>, f64)> = (0..len)
            .map(|j| (vec![(u(10 + j) * 12.0) as i64 - 6], 3.0 * u(30 + j)))
            .collect();
        for side in 1..=4 {
            let g = periodization_gap(&dist, &weights, side, GapMode::Exhaustive).unwrap();
            cases += 1;
            if g.lhs > g.rhs * (1.0 + 1e-14) {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!("{violations} violations in {cases} exhaustive comparisons"),
    )
}

fn one_site_spectral_trace(alpha: f64, ts: &[f64]) -> Vec<(f64, f64)> {
    let dist = CouplingDistribution::Bernoulli { p0: 0.5, v: 5.0 };
    let cell = LatticeBox::cube(1, 0, 1);
    let schedule = [256usize, 512, 1024];
    let curves: Vec<LaplaceCurve> = schedule
        .iter()
        .map(|&n| {
            let spectra: Vec<SpectrumResult> = [0.0, 5.0]
                .iter()
                .map(|&q| {
                    let field = DisorderField::from_values(dist.clone(), cell.clone(), 0, vec![q]).unwrap();
                    let pot = AlloyPotential::new(
                        SingleSiteProfile::default(),
                        field,
                        PotentialMode::Periodized { side: 1 },
                    )
                    .unwrap();
                    all_eigenvalues(&build_torus_operator(&pot, n, alpha).unwrap()).unwrap()
                })
                .collect();
            laplace_from_spectrum(&spectra, ts, Some(&[0.5, 0.5])).unwrap()
        })
        .collect();
    (0..ts.len())
        .map(|i| {
            let table: Vec<(usize, f64)> = schedule.iter().zip(&curves).map(|(n, c)| (*n, c.values[i])).collect();
            let ex = richardson(&table, assumed_order(alpha)).unwrap();
            (ex.value, ex.error)
        })
        .collect()
}

fn dual_route_trace() -> Verdict {
    let ts = [0.5, 1.0, 2.0];
    let law = PotentialLaw {
        profile: SingleSiteProfile::default(),
        dist: CouplingDistribution::Bernoulli { p0: 0.5, v: 5.0 },
        transforms: vec![],
    };
    let budget = McBudget {
        disorder: DisorderMode::Enumerated,
        n_paths: 5000,
        n_steps: 128,
    };
    let mut ok = true;
    let mut worst = 0.0f64;
    for alpha in [1.0, 2.0] {
        let k = StableKernel::new(1, alpha).unwrap();
        let spectral = one_site_spectral_trace(alpha, &ts);
        for (&t, (sv, sv_err)) in ts.iter().zip(spectral) {
            let e = estimate_laplace(&k, &law, t, budget, BridgeGeometry::Torus { side: 1 }, 1).unwrap();
            let (mc, se, _) = e.corrected();
            let z = (mc - sv).abs() / (se * se + sv_err * sv_err).sqrt();
            worst = worst.max(z);
            ok &= z <= 3.0;
        }
    }
    verdict(ok, format!("max |spectral − MC| / stderr = {worst:.2}"))
}

fn bridge_fold() -> Verdict {
    let mut worst = 0.0f64;
    for alpha in [1.0, 2.0] {
        let k = StableKernel::new(1, alpha).unwrap();
        for (i, interval) in [(0.0, 0.5), (0.3, 1.4)].into_iter().enumerate() {
            let c = bridge_fold_check(&k, 0.2, 0.7, 1.0, 2, interval, 10_000, 40 + i as u64).unwrap();
            worst = worst.max(c.z.abs());
        }
    }
    verdict(worst < 3.0, format!("max |z| = {worst:.2}"))
}

fn laplace_round_trip() -> Verdict {
    let mut worst_slope = 0.0f64;
    let mut worst_pref = 0.0f64;
    for (d, alpha, c) in [(1, 2.0, 1.3), (1, 1.0, 0.7), (2, 1.5, 2.1), (3, 0.8, 0.4)] {
        let target = d as f64 / (d as f64 + alpha);
        let ts: Vec<f64> = (0..13).map(|i| 10f64.powf(-0.5 + 0.25 * i as f64)).collect();
        let curve = LaplaceCurve {
            values: ts.iter().map(|t| (-c * t.powf(target)).exp()).collect(),
            stderr: vec![0.0; ts.len()],
            ts,
            volume: 1.0,
            n_disorder: 1,
        };
        let f = fit_laplace_exponent(&curve, d, alpha, 0.5, None).unwrap();
        worst_slope = worst_slope.max((f.slope - target).abs());
        worst_pref = worst_pref.max((f.prefactor + c).abs() / c);
    }
    verdict(
        worst_slope < 0.01 && worst_pref < 0.01,
        format!("max slope error {worst_slope:.1e}, max prefactor error {worst_pref:.1e}"),
    )
}

fn torus_spectra(
    dist: &CouplingDistribution,
    alpha: f64,
    side: u32,
    n: usize,
    samples: usize,
    seed: u64,
) -> Vec<SpectrumResult> {
    let cell = LatticeBox::cube(1, 0, side as i64);
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let field = sample_disorder(dist, &cell, child_seed(seed, i as u64)).unwrap();
            let pot =
                AlloyPotential::new(SingleSiteProfile::default(), field, PotentialMode::Periodized { side }).unwrap();
            all_eigenvalues(&build_torus_operator(&pot, n, alpha).unwrap()).unwrap()
        })
        .collect()
}

fn lifschitz_dichotomy() -> Verdict {
    let grid: Vec<f64> = (0..40).map(|i| 0.01 * 10f64.powf(0.075 * i as f64)).collect();
    let lambda_d = PI * PI / 4.0;

    let bern = torus_spectra(
        &CouplingDistribution::Bernoulli { p0: 0.5, v: 1.0 },
        2.0,
        16,
        256,
        10_000,
        9,
    );
    let curve = ids_estimate(&bern, &grid).unwrap();
    let fit = match fit_lifschitz(&curve, 1, 2.0, None, 0.5, lambda_d) {
        Ok(f) => f,
        Err(e) => return Err(format!("bernoulli fit: {e}")),
    };
    let c = fit.theory_constant.unwrap();
    let (lo, hi) = (3.0 * c, c / 3.0);
    let g: Vec<f64> = fit.plateau.iter().map(|p| p.1).collect();
    let bracket = g.iter().all(|v| *v < 0.0 && *v >= lo && *v <= hi);
    let (gmin, gmax) = g
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));

    let unif = torus_spectra(&CouplingDistribution::Uniform { v_max: 1.0 }, 2.0, 16, 256, 10_000, 10);
    let ucurve = ids_estimate(&unif, &grid).unwrap();
    let ufit = match fit_lifschitz(&ucurve, 1, 2.0, None, 0.0, lambda_d) {
        Ok(f) => f,
        Err(e) => return Err(format!("uniform fit: {e}")),
    };
    let p = ufit.trend.p_increasing;
    verdict(
        bracket && p < 0.05,
        format!(
            "bernoulli g ∈ [{gmin:.3}, {gmax:.3}] on [{:.3}, {:.3}] vs bracket [{lo:.3}, {hi:.3}]; uniform trend p = {p:.1e}",
            fit.window.0, fit.window.1
        ),
    )
}

fn lower_bound() -> Verdict {
    let ts = [1.0, 2.0, 4.0];
    let dist = CouplingDistribution::Bernoulli { p0: 0.5, v: 1.0 };
    let mut worst_margin = f64::INFINITY;
    let mut ok = true;
    for alpha in [1.0, 2.0] {
        let spectra = torus_spectra(&dist, alpha, 16, 256, 500, 31);
        let curve = laplace_from_spectrum(&spectra, &ts, None).unwrap();
        let lambda_d = if alpha == 2.0 { PI * PI / 4.0 } else { unit_ball(alpha) };
        for r in [2.0, 4.0] {
            let (_, prob) = lower_bound_event_prob(0.5, r, 0.25, 1).unwrap();
            for pt in lower_bound_chain(&curve, 1, r, prob, lambda_d * r.powf(-alpha), 0.0) {
                ok &= pt.holds;
                worst_margin = worst_margin.min((pt.estimate + 3.0 * pt.stderr) / pt.bound);
            }
        }
    }
    verdict(ok, format!("min (L̂ + 3σ) / bound = {worst_margin:.3e}"))
}

fn free_weyl() -> Verdict {
    let (side, n) = (16.0, 256usize);
    let mut worst = 0.0f64;
    for alpha in [0.5, 1.0, 2.0] {
        let eig = all_eigenvalues(&free_torus_operator(1, side, n, alpha).unwrap())
            .unwrap()
            .eigenvalues;
        let cap = (2.0 * PI * (n / 2 - 1) as f64 / side).powf(alpha);
        let lambda = 0.99 * cap;
        let count = eig.iter().filter(|e| **e <= lambda).count() as f64 / side;
        worst = worst.max((count / lambda.powf(1.0 / alpha) / weyl_constant(1) - 1.0).abs());
    }
    verdict(worst < 0.02, format!("max rel gap to ω_1/(2π) = {worst:.1e}"))
}

fn run_cli(args: &[&str], config: &Path, out: &Path, workers: &str) -> Result<(), String> {
    let o = Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--workers")
        .arg(workers)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&o.stderr).into_owned())
    }
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "alpha = 1.5\nd = 1\nseed = 77\n[geometry]\nkind = \"torus\"\nside = 4\n\
         [resolution]\nn = [64, 128]\n[budget]\nn_disorder = 8\nn_paths = 48\nn_steps = 16\n[fit]\nmin_hits = 2\n",
    )
    .unwrap();
    let mut compared = 0;
    for exp in ["ids", "laplace-spectral", "laplace-mc", "fit"] {
        let a = dir.path().join(format!("{exp}-1"));
        let b = dir.path().join(format!("{exp}-4"));
        run_cli(&[exp], &cfg, &a, "1")?;
        run_cli(&[exp], &cfg, &b, "4")?;
        // a repeat into the same directory replaces the earlier run
        run_cli(&[exp], &cfg, &b, "3")?;
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            if !name.to_string_lossy().ends_with(".csv") {
                continue;
            }
            if fs::read(a.join(&name)).unwrap() != fs::read(b.join(&name)).unwrap() {
                return Err(format!(
                    "{exp}: {} differs between worker counts",
                    name.to_string_lossy()
                ));
            }
            compared += 1;
        }
    }
    verdict(
        compared > 0,
        format!("{compared} CSV files byte-identical across 1, 3 and 4 workers"),
    )
}

fn main() {
    let criteria: [(u32, fn() -> Verdict); 12] = [
        (1, ball_ground_state_via_cli),
        (2, ball_scaling),
        (3, rate_function_closed_form),
        (4, torus_scaling),
        (5, periodization),
        (6, dual_route_trace),
        (7, bridge_fold),
        (8, laplace_round_trip),
        (9, lifschitz_dichotomy),
        (10, lower_bound),
        (11, free_weyl),
        (12, determinism),
    ];
    let mut failures = 0;
    for (id, check) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {id}: PASS | {detail} | {secs:.1} s"),
            Err(detail) => {
                failures += 1;
                println!("criterion {id}: FAIL | {detail} | {secs:.1} s");
            }
        }
    }
    println!("acceptance: {} of 12 criteria passed", 12 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
