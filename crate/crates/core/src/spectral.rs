//! Finite-dimensional (−Δ)^{α/2} + V on tori and on domains with an exterior
//! Dirichlet condition, eigen-solvers, and the ball variational constants.
//!
//! The kinetic part is the exact Fourier multiplier |2πk/M|^α on a uniform
//! grid, written as a dense circulant. Dirichlet operators embed the domain in
//! a much larger torus and keep only the rows and columns of interior nodes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, LabError, Result};
use crate::model::AlloyPotential;
use crate::special::{golden_min, unit_ball_volume};

/// Largest matrix handled by the dense solver.
pub const DENSE_LIMIT: usize = 4096;
/// Largest matrix accepted at all (the iterative route still factors densely).
pub const MATRIX_LIMIT: usize = 6144;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Domain {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Domain {
    pub fn ball(d: usize, radius: f64) -> Self {
        Domain::Ball {
            center: vec![0.0; d],
            radius,
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Domain::Box {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Ball { center, .. } => center.len(),
            Domain::Box { lo, .. } => lo.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Domain::Ball { center, radius } => {
                if center.is_empty() || center.len() > 3 {
                    return domain("ball dimension must be 1, 2 or 3");
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return domain(format!("ball radius {radius} must be positive"));
                }
            }
            Domain::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() || lo.len() > 3 {
                    return domain("box corners must share a dimension in 1..=3");
                }
                if lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
                    return domain("box must have positive extent on every axis");
                }
            }
        }
        Ok(())
    }

    /// Lower corner of the bounding cube and its side.
    fn bounding_cube(&self) -> (Vec<f64>, f64) {
        match self {
            Domain::Ball { center, radius } => (center.iter().map(|c| c - radius).collect(), 2.0 * radius),
            Domain::Box { lo, hi } => {
                let side = lo.iter().zip(hi).map(|(a, b)| b - a).fold(0.0, f64::max);
                (lo.clone(), side)
            }
        }
    }

    fn contains_open(&self, x: &[f64]) -> bool {
        match self {
            Domain::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt() < radius * (1.0 - 1e-12)
            }
            Domain::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| {
                let tol = 1e-12 * (b - a);
                *v > a + tol && *v < b - tol
            }),
        }
    }

    /// Lebesgue measure.
    pub fn volume(&self) -> f64 {
        match self {
            Domain::Ball { center, radius } => unit_ball_volume(center.len()) * radius.powi(center.len() as i32),
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Torus of side `side` with `n` grid points per axis.
    Torus { side: f64, n: usize },
    /// Domain sampled with `n` cells across its bounding cube, embedded in a
    /// torus `embed_factor` times larger.
    Dirichlet {
        domain: Domain,
        n: usize,
        embed_factor: usize,
    },
}

impl Geometry {
    pub fn label(&self) -> String {
        match self {
            Geometry::Torus { side, n } => format!("torus(M={side},N={n})"),
            Geometry::Dirichlet {
                domain,
                n,
                embed_factor,
            } => {
                let shape = match domain {
                    Domain::Ball { radius, .. } => format!("ball(r={radius})"),
                    Domain::Box { lo, hi } => format!("box({lo:?},{hi:?})"),
                };
                format!("dirichlet({shape},N={n},emb={embed_factor})")
            }
        }
    }

    /// Volume |Λ| used to normalize counting functions.
    pub fn volume(&self, d: usize) -> f64 {
        match self {
            Geometry::Torus { side, .. } => side.powi(d as i32),
            Geometry::Dirichlet { domain, .. } => domain.volume(),
        }
    }
}

/// A real symmetric matrix representing (−Δ)^{α/2} + V.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub geometry: Geometry,
    pub alpha: f64,
    pub d: usize,
    /// Kinetic part only; the potential is added on the diagonal on demand.
    kinetic: DMatrix<f64>,
    pub potential_samples: Vec<f64>,
    /// Grid coordinates of the retained nodes, row-major.
    pub nodes: Vec<Vec<f64>>,
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Full matrix K + diag(V).
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = self.kinetic.clone();
        for (i, v) in self.potential_samples.iter().enumerate() {
            m[(i, i)] += v;
        }
        m
    }

    pub fn kinetic(&self) -> &DMatrix<f64> {
        &self.kinetic
    }

    /// Replaces the potential by the given grid samples.
    pub fn with_potential(&self, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != self.dim() {
            return domain(format!(
                "{} potential samples for a {}-node grid",
                samples.len(),
                self.dim()
            ));
        }
        if samples.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return domain("potential samples must be finite and nonnegative");
        }
        Ok(Self {
            potential_samples: samples,
            ..self.clone()
        })
    }

    /// Samples `v` at the grid nodes and uses it as the potential.
    pub fn with_potential_fn(&self, v: impl Fn(&[f64]) -> Result<f64>) -> Result<Self> {
        let samples = self.nodes.iter().map(|x| v(x)).collect::<Result<Vec<_>>>()?;
        self.with_potential(samples)
    }

    /// Test hook: the same grid with the kinetic term removed.
    pub fn diagonal_only(&self) -> Self {
        Self {
            kinetic: DMatrix::zeros(self.dim(), self.dim()),
            ..self.clone()
        }
    }

    /// Largest absolute asymmetry relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let m = self.matrix();
        let scale = m.amax().max(1e-300);
        let mut worst: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..i {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        worst / scale
    }

    pub fn meta(&self) -> GridMeta {
        let n = match &self.geometry {
            Geometry::Torus { n, .. } | Geometry::Dirichlet { n, .. } => *n,
        };
        GridMeta {
            geometry: self.geometry.label(),
            alpha: self.alpha,
            d: self.d,
            n,
            dim: self.dim(),
            volume: self.geometry.volume(self.d),
        }
    }
}

/// Inverse DFT of the multiplier |2πk/L|^α on an n^d grid of a torus of side L.
///
/// Entry m (row-major, axis-wise offsets in 0..n) is the matrix element between
/// two nodes whose index difference is m modulo n.
fn multiplier_kernel(d: usize, n: usize, side: f64, alpha: f64) -> Vec<f64> {
    let total = n.pow(d as u32);
    let mut data: Vec<Complex<f64>> = (0..total)
        .map(|flat| {
            let mut rem = flat;
            let mut k2 = 0.0;
            for _ in 0..d {
                let c = rem % n;
                rem /= n;
                let k = if c >= n / 2 { c as f64 - n as f64 } else { c as f64 };
                k2 += k * k;
            }
            Complex::new((2.0 * PI / side).powf(alpha) * k2.sqrt().powf(alpha), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(n);
    let mut line = vec![Complex::new(0.0, 0.0); n];
    for axis in 0..d {
        let stride = n.pow(axis as u32);
        for start in 0..total {
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for (j, slot) in line.iter_mut().enumerate() {
                *slot = data[start + j * stride];
            }
            fft.process(&mut line);
            for (j, v) in line.iter().enumerate() {
                data[start + j * stride] = *v;
            }
        }
    }
    let norm = total as f64;
    data.into_iter().map(|c| c.re / norm).collect()
}

fn grid_index(flat: usize, d: usize, n: usize) -> Vec<usize> {
    let mut rem = flat;
    let mut idx = vec![0; d];
    for slot in idx.iter_mut().rev() {
        *slot = rem % n;
        rem /= n;
    }
    idx
}

/// Flat position of the wrapped index difference a − b in the kernel array.
///
/// The kernel is invariant under permuting axes, so the axis order of the
/// flattening does not matter as long as it is consistent.
fn kernel_offset_flat(a: &[usize], b: &[usize], n: usize) -> usize {
    let mut f = 0;
    let mut s = 1;
    for (x, y) in a.iter().zip(b) {
        f += ((x + n - y) % n) * s;
        s *= n;
    }
    f
}

fn check_grid(d: usize, n: usize) -> Result<()> {
    if !(1..=3).contains(&d) {
        return domain(format!("dimension d = {d} must be 1, 2 or 3"));
    }
    if n < 8 || !n.is_multiple_of(2) {
        return domain(format!("grid size N = {n} must be even and at least 8"));
    }
    let total = n.checked_pow(d as u32).unwrap_or(usize::MAX);
    if total > MATRIX_LIMIT {
        return Err(LabError::NumericRange(format!(
            "N^d = {total} exceeds the matrix limit {MATRIX_LIMIT}"
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return domain(format!("stability index α = {alpha} must lie in (0, 2]"));
    }
    Ok(())
}

/// Zero-potential torus operator of side `side` with n points per axis.
pub fn free_torus_operator(d: usize, side: f64, n: usize, alpha: f64) -> Result<DiscreteOperator> {
    check_grid(d, n)?;
    check_alpha(alpha)?;
    if !(side > 0.0) {
        return domain("torus side must be positive");
    }
    let c = multiplier_kernel(d, n, side, alpha);
    let total = n.pow(d as u32);
    let h = side / n as f64;
    let idx: Vec<Vec<usize>> = (0..total).map(|f| grid_index(f, d, n)).collect();
    let kinetic = DMatrix::from_fn(total, total, |i, j| c[kernel_offset_flat(&idx[i], &idx[j], n)]);
    let nodes = idx.iter().map(|v| v.iter().map(|&i| i as f64 * h).collect()).collect();
    Ok(DiscreteOperator {
        geometry: Geometry::Torus { side, n },
        alpha,
        d,
        kinetic: symmetrize(kinetic),
        potential_samples: vec![0.0; total],
        nodes,
    })
}

/// Torus operator with an arbitrary potential sampled at the grid nodes.
pub fn torus_operator_from_fn(
    d: usize,
    side: f64,
    n: usize,
    alpha: f64,
    v: impl Fn(&[f64]) -> Result<f64>,
) -> Result<DiscreteOperator> {
    free_torus_operator(d, side, n, alpha)?.with_potential_fn(v)
}

/// (−Δ)^{α/2} + V on T_M, V an alloy potential periodized with period M.
pub fn build_torus_operator(pot: &AlloyPotential, n: usize, alpha: f64) -> Result<DiscreteOperator> {
    let Some(side) = pot.period() else {
        return config("torus operator needs a potential periodized on the same torus");
    };
    let d = match pot.dim() {
        Some(d) => d,
        None => return config("potential dimension is not determined by its couplings"),
    };
    torus_operator_from_fn(d, side as f64, n, alpha, |x| pot.eval(x))
}

/// Restricted (Dirichlet-exterior) operator on `domain`.
///
/// The bounding cube of the domain gets `n` cells per axis; the grid is
/// extended to a torus `embed_factor` times larger, and rows and columns of
/// nodes strictly inside the domain are kept.
pub fn build_dirichlet_operator(dom: &Domain, alpha: f64, n: usize, embed_factor: usize) -> Result<DiscreteOperator> {
    dom.validate()?;
    check_alpha(alpha)?;
    let d = dom.dim();
    if embed_factor < 3 {
        return config(format!(
            "embed_factor = {embed_factor} leaves a margin below 2·diam; torus wrap-around would couple the domain to itself"
        ));
    }
    if n < 4 {
        return domain(format!("grid size N = {n} is too small"));
    }
    let big = n * embed_factor;
    let (lo, diam) = dom.bounding_cube();
    let h = diam / n as f64;
    let mut kept: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    let inner = n - 1;
    for flat in 0..inner.pow(d as u32) {
        let idx: Vec<usize> = grid_index(flat, d, inner).into_iter().map(|i| i + 1).collect();
        let x: Vec<f64> = idx.iter().zip(&lo).map(|(&i, l)| l + i as f64 * h).collect();
        if dom.contains_open(&x) {
            kept.push((idx, x));
        }
    }
    if kept.is_empty() {
        return domain("grid has no interior nodes");
    }
    if kept.len() > MATRIX_LIMIT {
        return Err(LabError::NumericRange(format!(
            "{} interior nodes exceed the matrix limit {MATRIX_LIMIT}",
            kept.len()
        )));
    }
    let c = if d == 1 {
        multiplier_kernel_1d_head(big, diam * embed_factor as f64, alpha, n + 1)
    } else {
        if big.pow(d as u32) > 1 << 24 {
            return Err(LabError::NumericRange(format!(
                "embedding grid {big}^{d} is too large; lower N or embed_factor"
            )));
        }
        multiplier_kernel(d, big, diam * embed_factor as f64, alpha)
    };
    let dim = kept.len();
    let kinetic = DMatrix::from_fn(dim, dim, |i, j| {
        if d == 1 {
            let off = kept[i].0[0].abs_diff(kept[j].0[0]);
            c[off]
        } else {
            c[kernel_offset_flat(&kept[i].0, &kept[j].0, big)]
        }
    });
    Ok(DiscreteOperator {
        geometry: Geometry::Dirichlet {
            domain: dom.clone(),
            n,
            embed_factor,
        },
        alpha,
        d,
        kinetic: symmetrize(kinetic),
        potential_samples: vec![0.0; dim],
        nodes: kept.into_iter().map(|(_, x)| x).collect(),
    })
}

/// First `head` entries of the 1-D multiplier kernel on `n` points.
fn multiplier_kernel_1d_head(n: usize, side: f64, alpha: f64, head: usize) -> Vec<f64> {
    let mut c = multiplier_kernel(1, n, side, alpha);
    c.truncate(head);
    c
}

fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub geometry: String,
    pub alpha: f64,
    pub d: usize,
    pub n: usize,
    pub dim: usize,
    pub volume: f64,
}

/// The k smallest eigenvalues with residual certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    /// ‖Hv − λv‖ for unit v; empty when only eigenvalues were computed.
    pub residuals: Vec<f64>,
    /// λ_2 − λ_1 when at least two eigenvalues are reported.
    pub gap: Option<f64>,
    pub meta: GridMeta,
}

impl SpectrumResult {
    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }
}

fn check_k(op: &DiscreteOperator, k: usize) -> Result<()> {
    if k == 0 || k > op.dim() {
        return domain(format!(
            "requested {k} eigenvalues of a {}-dimensional operator",
            op.dim()
        ));
    }
    Ok(())
}

fn residual(m: &DMatrix<f64>, lambda: f64, v: &DVector<f64>) -> f64 {
    let r = m * v - v * lambda;
    r.norm() / v.norm()
}

/// k smallest eigenpairs: dense up to [`DENSE_LIMIT`], shift-invert Lanczos beyond.
pub fn eigenvalues(op: &DiscreteOperator, k: usize) -> Result<SpectrumResult> {
    check_k(op, k)?;
    if op.dim() <= DENSE_LIMIT {
        eigenvalues_dense(op, k)
    } else {
        eigenvalues_iterative(op, k)
    }
}

/// Dense symmetric eigensolve.
pub fn eigenvalues_dense(op: &DiscreteOperator, k: usize) -> Result<SpectrumResult> {
    check_k(op, k)?;
    let m = op.matrix();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let lambda = eig.eigenvalues[i];
        let v = eig.eigenvectors.column(i).into_owned();
        values.push(lambda);
        residuals.push(residual(&m, lambda, &v));
    }
    Ok(finish(op, values, residuals))
}

/// All eigenvalues, ascending, without vectors or residuals.
pub fn all_eigenvalues(op: &DiscreteOperator) -> Result<SpectrumResult> {
    if op.dim() > DENSE_LIMIT {
        return Err(LabError::NumericRange(format!(
            "full spectrum of a {}-dimensional operator exceeds the dense limit",
            op.dim()
        )));
    }
    let mut values: Vec<f64> = op.matrix().symmetric_eigenvalues().iter().cloned().collect();
    values.sort_by(f64::total_cmp);
    Ok(finish(op, values, Vec::new()))
}

fn finish(op: &DiscreteOperator, eigenvalues: Vec<f64>, residuals: Vec<f64>) -> SpectrumResult {
    let gap = if eigenvalues.len() >= 2 {
        Some(eigenvalues[1] - eigenvalues[0])
    } else {
        None
    };
    SpectrumResult {
        eigenvalues,
        residuals,
        gap,
        meta: op.meta(),
    }
}

/// Shift-invert Lanczos with full reorthogonalization.
///
/// A single Krylov space sees one vector per eigenspace, so repeated
/// eigenvalues appear once; the ground state (simple for connected geometries)
/// is always reliable.
pub fn eigenvalues_iterative(op: &DiscreteOperator, k: usize) -> Result<SpectrumResult> {
    check_k(op, k)?;
    let m = op.matrix();
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    let sigma = 1e-8 * scale;
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] += sigma;
    }
    let chol = shifted
        .cholesky()
        .ok_or_else(|| LabError::Convergence("shifted operator is not positive definite".into()))?;
    let mut steps = (2 * k + 30).max(60).min(n);
    loop {
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(steps);
        let mut alphas = Vec::with_capacity(steps);
        let mut betas: Vec<f64> = Vec::with_capacity(steps);
        let mut q = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64 * 0.618_033_988_7).fract() - 0.5));
        q /= q.norm();
        for j in 0..steps {
            basis.push(q.clone());
            let mut w = chol.solve(&q);
            let a = w.dot(&q);
            alphas.push(a);
            for _ in 0..2 {
                for b in &basis {
                    let c = w.dot(b);
                    w.axpy(-c, b, 1.0);
                }
            }
            let beta = w.norm();
            if j + 1 == steps || beta < 1e-14 {
                break;
            }
            betas.push(beta);
            q = w / beta;
        }
        let size = alphas.len();
        let mut t = DMatrix::zeros(size, size);
        for i in 0..size {
            t[(i, i)] = alphas[i];
            if i + 1 < size {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let take = k.min(size);
        let mut values = Vec::with_capacity(take);
        let mut residuals = Vec::with_capacity(take);
        for &i in order.iter().take(take) {
            let theta = eig.eigenvalues[i];
            let lambda = 1.0 / theta - sigma;
            let s = eig.eigenvectors.column(i);
            let mut v = DVector::zeros(n);
            for (bj, sj) in basis.iter().zip(s.iter()) {
                v.axpy(*sj, bj, 1.0);
            }
            values.push(lambda);
            residuals.push(residual(&m, lambda, &v));
        }
        let tol = 1e-8 * scale.max(1.0);
        if residuals.iter().all(|r| *r <= tol) || steps >= n {
            if residuals[0] > tol {
                return Err(LabError::Convergence(format!(
                    "Lanczos residual {} above tolerance after {steps} steps",
                    residuals[0]
                )));
            }
            return Ok(finish(op, values, residuals));
        }
        steps = (steps * 2).min(n);
    }
}

/// Result of a Richardson extrapolation over a refinement schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub value: f64,
    pub error: f64,
    /// Order used: the smaller of the assumed and the measured order.
    pub order: f64,
    pub measured_order: Option<f64>,
    /// (N, raw value) pairs.
    pub table: Vec<(usize, f64)>,
}

/// Richardson extrapolation in h ∝ 1/N for a schedule doubling N each step.
pub fn richardson(table: &[(usize, f64)], assumed_order: f64) -> Result<Extrapolation> {
    if table.len() < 2 {
        return domain("extrapolation needs at least two resolutions");
    }
    for w in table.windows(2) {
        if w[1].0 != 2 * w[0].0 {
            return domain("resolution schedule must double N at each step");
        }
    }
    let k = table.len();
    let (a, b) = (table[k - 2].1, table[k - 1].1);
    let mut measured = None;
    let mut order = assumed_order;
    if k >= 3 {
        let z = table[k - 3].1;
        let (d1, d2) = (a - z, b - a);
        let scale = b.abs().max(1e-300);
        if d1.abs() > 1e-13 * scale && d2.abs() > 1e-13 * scale {
            if d1.signum() != d2.signum() {
                return Err(LabError::Convergence(format!(
                    "refinement sequence {z}, {a}, {b} is not monotone"
                )));
            }
            let p = (d1 / d2).log2();
            measured = Some(p);
            if p.is_finite() && p > 0.0 {
                order = order.min(p);
            } else {
                return Err(LabError::Convergence(format!(
                    "refinement sequence {z}, {a}, {b} does not contract"
                )));
            }
        }
    }
    let factor = 2f64.powf(order) - 1.0;
    let value = b + (b - a) / factor;
    let error = if k >= 3 {
        let z = table[k - 3].1;
        let prev = a + (a - z) / factor;
        (value - prev).abs().max((b - a).abs() / factor * 0.1)
    } else {
        (b - a).abs() / factor
    };
    Ok(Extrapolation {
        value,
        error,
        order,
        measured_order: measured,
        table: table.to_vec(),
    })
}

/// Leading order of the embedding-restriction scheme in h.
pub fn assumed_order(alpha: f64) -> f64 {
    if alpha == 2.0 {
        2.0
    } else {
        alpha.min(1.0)
    }
}

/// Default embedding factor per dimension.
pub fn default_embed_factor(d: usize) -> usize {
    if d == 1 {
        256
    } else {
        8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallGroundState {
    pub radius: f64,
    pub alpha: f64,
    pub d: usize,
    /// Extrapolated λ_1(B_r).
    pub lambda: f64,
    pub error: f64,
    /// λ_1(B_r) r^α, the estimate of λ_d^{(α)}.
    pub unit_ball: f64,
    pub extrapolation: Extrapolation,
}

/// λ_1 of the ball B_r, extrapolated over the resolution schedule.
pub fn ball_ground_state(
    d: usize,
    r: f64,
    alpha: f64,
    schedule: &[usize],
    embed_factor: usize,
) -> Result<BallGroundState> {
    if !(r > 0.0) {
        return domain(format!("radius r = {r} must be positive"));
    }
    let dom = Domain::ball(d, r);
    let mut table = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let op = build_dirichlet_operator(&dom, alpha, n, embed_factor)?;
        let s = ground_state_value(&op)?;
        table.push((n, s));
    }
    let ex = richardson(&table, assumed_order(alpha))?;
    Ok(BallGroundState {
        radius: r,
        alpha,
        d,
        lambda: ex.value,
        error: ex.error,
        unit_ball: ex.value * r.powf(alpha),
        extrapolation: ex,
    })
}

fn ground_state_value(op: &DiscreteOperator) -> Result<f64> {
    if op.dim() <= DENSE_LIMIT {
        let all = all_eigenvalues(op)?;
        Ok(all.eigenvalues[0])
    } else {
        Ok(eigenvalues_iterative(op, 1)?.eigenvalues[0])
    }
}

/// Classical Dirichlet-Laplacian ground state of the unit ball.
pub fn classical_ball_eigenvalue(d: usize) -> Result<f64> {
    match d {
        1 => Ok(PI * PI / 4.0),
        // square of the first zero of J0
        2 => Ok(2.404_825_557_695_773_f64.powi(2)),
        3 => Ok(PI * PI),
        _ => domain(format!("dimension d = {d} must be 1, 2 or 3")),
    }
}

/// C_{d,α} = ω_d^{α/(d+α)} ((d+α)/α) (αλ/d)^{d/(d+α)}.
pub fn rate_constant(d: usize, alpha: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return domain(format!("ball eigenvalue λ = {lambda} must be positive"));
    }
    check_alpha(alpha)?;
    let (df, s) = (d as f64, d as f64 + alpha);
    Ok(unit_ball_volume(d).powf(alpha / s) * (s / alpha) * (alpha * lambda / df).powf(df / s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    pub value: f64,
    pub minimizer: f64,
    /// C_{d,α} ν^{α/(d+α)}.
    pub closed_form: f64,
    /// (αλr^{−α} − dνω_d r^d) / (αλr^{−α}) at the minimizer.
    pub stationarity_residual: f64,
}

/// inf_{r>0} λ r^{−α} + ν ω_d r^d by golden-section search in ln r, polished
/// by Newton steps on the first-order condition.
pub fn rate_function(nu: f64, d: usize, alpha: f64, lambda: f64) -> Result<RateFunction> {
    if !(nu > 0.0) {
        return domain(format!("weight ν = {nu} must be positive"));
    }
    let closed_form = rate_constant(d, alpha, lambda)? * nu.powf(alpha / (d as f64 + alpha));
    let omega = unit_ball_volume(d);
    let df = d as f64;
    let f = |s: f64| lambda * (-alpha * s).exp() + nu * omega * (df * s).exp();
    let mut s = golden_min(f, -30.0, 30.0, 1e-12);
    for _ in 0..8 {
        let g1 = -alpha * lambda * (-alpha * s).exp() + df * nu * omega * (df * s).exp();
        let g2 = alpha * alpha * lambda * (-alpha * s).exp() + df * df * nu * omega * (df * s).exp();
        s -= g1 / g2;
    }
    let r = s.exp();
    let kin = alpha * lambda * r.powf(-alpha);
    Ok(RateFunction {
        value: f(s),
        minimizer: r,
        closed_form,
        stationarity_residual: (kin - df * nu * omega * r.powf(df)) / kin,
    })
}
