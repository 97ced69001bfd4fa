//! Fast invariant suite behind `lifschitz-lab check`.

use std::f64::consts::PI;

use lifschitz_core::asymptotics::{ids_estimate, lower_bound_event_prob};
use lifschitz_core::model::{periodization_gap, GapMode};
use lifschitz_core::montecarlo::{fk_functional, sample_bridge, BridgeGeometry};
use lifschitz_core::rng::stream;
use lifschitz_core::spectral::{all_eigenvalues, ball_ground_state, build_torus_operator, free_torus_operator};
use lifschitz_core::{
    sample_disorder, AlloyPotential, CouplingDistribution, LabError, LatticeBox, PotentialMode, SingleSiteProfile,
    StableKernel,
};

use crate::config::{parse_config, RunConfig};
use crate::error::RunError;
use crate::experiments::Outcome;
use crate::output::{fmt_f64, Table};

struct Check {
    name: &'static str,
    /// Observed discrepancy (or statistic) and the tolerance it is held to.
    value: f64,
    tolerance: f64,
}

type Probe = fn(&RunConfig) -> Result<Check, LabError>;

fn cauchy_closed_form(_: &RunConfig) -> Result<Check, LabError> {
    let k = StableKernel::new(1, 1.0)?;
    let mut worst = 0.0f64;
    for z in [0.0, 0.3, 1.0, 4.0, 25.0] {
        let exact = 1.0 / (PI * (1.0 + z * z));
        worst = worst.max((k.free_density(1.0, &[z])? - exact).abs() / exact);
    }
    Ok(Check {
        name: "cauchy_density",
        value: worst,
        tolerance: 1e-8,
    })
}

fn gaussian_closed_form(_: &RunConfig) -> Result<Check, LabError> {
    let k = StableKernel::new(2, 2.0)?;
    let mut worst = 0.0f64;
    for (t, r) in [(0.5f64, 0.0f64), (1.0, 1.0), (2.0, 3.0)] {
        let exact = (-r * r / (4.0 * t)).exp() / (4.0 * PI * t);
        worst = worst.max((k.free_density(t, &[r, 0.0])? - exact).abs() / exact);
    }
    Ok(Check {
        name: "gaussian_density",
        value: worst,
        tolerance: 1e-8,
    })
}

fn self_similarity(_: &RunConfig) -> Result<Check, LabError> {
    let alpha = 1.5;
    let k = StableKernel::new(1, alpha)?;
    let mut worst = 0.0f64;
    for (t, z) in [(0.2f64, 0.7), (3.0, 1.9), (7.0, 40.0)] {
        let scale = t.powf(-1.0 / alpha);
        let lhs = k.free_density(t, &[z])?;
        let rhs = scale * k.free_density(1.0, &[z * scale])?;
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    Ok(Check {
        name: "stable_scaling",
        value: worst,
        tolerance: 1e-8,
    })
}

fn free_torus_multiplier(_: &RunConfig) -> Result<Check, LabError> {
    let (side, n, alpha) = (2.0, 64, 1.3);
    let s = all_eigenvalues(&free_torus_operator(1, side, n, alpha)?)?;
    let mut expect: Vec<f64> = (-(n as i64) / 2..n as i64 / 2)
        .map(|k| (2.0 * PI * k.unsigned_abs() as f64 / side).powf(alpha))
        .collect();
    expect.sort_by(f64::total_cmp);
    let top = expect[expect.len() - 1];
    let worst = s
        .eigenvalues
        .iter()
        .zip(&expect)
        .map(|(a, b)| (a - b).abs() / top)
        .fold(0.0, f64::max);
    Ok(Check {
        name: "free_torus_spectrum",
        value: worst,
        tolerance: 1e-10,
    })
}

fn classical_ball(_: &RunConfig) -> Result<Check, LabError> {
    let lambda = ball_ground_state(1, 1.0, 2.0, &[128, 256, 512], 64)?.lambda;
    let exact = PI * PI / 4.0;
    Ok(Check {
        name: "unit_interval_ground_state",
        value: (lambda - exact).abs() / exact,
        tolerance: 1e-3,
    })
}

fn periodization(_: &RunConfig) -> Result<Check, LabError> {
    let dist = CouplingDistribution::PointMasses {
        masses: vec![(0.0, 0.4), (0.5, 0.35), (2.0, 0.25)],
    };
    let w: Vec<(Vec<i64>, f64)> = [(-2, 0.3), (0, 1.2), (1, 0.8), (5, 0.4)]
        .iter()
        .map(|&(i, a)| (vec![i], a))
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for side in 1..=4 {
        let g = periodization_gap(&dist, &w, side, GapMode::Exhaustive)?;
        worst = worst.max(g.lhs / g.rhs - 1.0);
    }
    Ok(Check {
        name: "periodization_inequality",
        value: worst.max(0.0),
        tolerance: 1e-14,
    })
}

fn event_count(_: &RunConfig) -> Result<Check, LabError> {
    let (count, _) = lower_bound_event_prob(0.5, 2.0, 0.25, 1)?;
    Ok(Check {
        name: "lower_bound_site_count",
        value: (count as f64 - 5.0).abs(),
        tolerance: 0.0,
    })
}

fn fk_weights(_: &RunConfig) -> Result<Check, LabError> {
    let k = StableKernel::new(1, 1.5)?;
    let field = sample_disorder(
        &CouplingDistribution::Exponential { rate: 1.0 },
        &LatticeBox::cube(1, 0, 3),
        5,
    )?;
    let pot = AlloyPotential::new(
        SingleSiteProfile::default(),
        field,
        PotentialMode::Periodized { side: 3 },
    )?;
    let mut rng = stream(5, 0, 0);
    let mut outside = 0.0;
    for _ in 0..32 {
        let skel = sample_bridge(&k, 0.1, 0.4, 1.0, 16, BridgeGeometry::Torus { side: 3 }, &mut rng)?;
        let w = fk_functional(&skel, &pot)?;
        if !(w > 0.0 && w <= 1.0) {
            outside += 1.0;
        }
    }
    Ok(Check {
        name: "feynman_kac_weights",
        value: outside,
        tolerance: 0.0,
    })
}

fn ids_monotone(_: &RunConfig) -> Result<Check, LabError> {
    let dist = CouplingDistribution::Bernoulli { p0: 0.5, v: 2.0 };
    let spectra = (0..4)
        .map(|s| {
            let field = sample_disorder(&dist, &LatticeBox::cube(1, 0, 4), s)?;
            let pot = AlloyPotential::new(
                SingleSiteProfile::default(),
                field,
                PotentialMode::Periodized { side: 4 },
            )?;
            all_eigenvalues(&build_torus_operator(&pot, 32, 1.0)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let grid: Vec<f64> = (0..20).map(|i| 0.05 * 1.5f64.powi(i)).collect();
    let curve = ids_estimate(&spectra, &grid)?;
    let drops = curve.values.windows(2).filter(|w| w[1] < w[0]).count();
    Ok(Check {
        name: "ids_monotone",
        value: drops as f64,
        tolerance: 0.0,
    })
}

fn config_round_trip(cfg: &RunConfig) -> Result<Check, LabError> {
    let same = parse_config(&cfg.to_toml()).map(|c| c == *cfg).unwrap_or(false);
    Ok(Check {
        name: "config_round_trip",
        value: if same { 0.0 } else { 1.0 },
        tolerance: 0.0,
    })
}

const PROBES: &[Probe] = &[
    cauchy_closed_form,
    gaussian_closed_form,
    self_similarity,
    free_torus_multiplier,
    classical_ball,
    periodization,
    event_count,
    fk_weights,
    ids_monotone,
    config_round_trip,
];

pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let mut t = Table::new("check.csv", &["check", "passed", "value", "tolerance"]);
    let mut failed = Vec::new();
    for probe in PROBES {
        let c = probe(cfg)?;
        let passed = c.value <= c.tolerance;
        if !passed {
            failed.push(c.name.to_string());
        }
        t.push(vec![
            c.name.into(),
            passed.to_string(),
            fmt_f64(c.value),
            fmt_f64(c.tolerance),
        ]);
    }
    Ok(Outcome {
        tables: vec![t],
        failed,
    })
}
