//! Fixtures shared by the benchmarks.

use lifschitz_core::{
    sample_disorder, AlloyPotential, CouplingDistribution, LatticeBox, PotentialMode, Result, SingleSiteProfile,
};

/// A Bernoulli(½, 1) alloy potential periodized on a torus of `side` cells in d = 1.
pub fn bernoulli_torus(side: u32, seed: u64) -> Result<AlloyPotential> {
    let dist = CouplingDistribution::Bernoulli { p0: 0.5, v: 1.0 };
    let field = sample_disorder(&dist, &LatticeBox::cube(1, 0, side as i64), seed)?;
    AlloyPotential::new(SingleSiteProfile::default(), field, PotentialMode::Periodized { side })
}
