//! Supervised normalized-Laplacian embedding.
//!
//! The embedding minimizes Δ(x) = x'P_λ'P_λx + γ (y − x)'(y − x). On a full
//! graph this has the closed form x₀ = (I + γ⁻¹P'P)⁻¹ y. From a 1-wave
//! snowball sample the design-weighted loss Δ_s gives a local system over U_s
//! whose solutions, averaged over repeated samples, define the sample-graph
//! embedding E(x̂_i | i ∈ U_s). That average is not x₀ in general: for
//! j ∈ U_s \ s the sample only sees the rows of P belonging to seed nodes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeValues};
use crate::sampling::{replicate_rng, srs_inclusion_weights, InclusionWeights, SampleGraph, SbsDesign};
use crate::spectral::{best_correlated_eigenvector, correlation, p_entry, EigenSystem, PLambda, Variant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnleConfig {
    pub lambda: f64,
    /// γ = 0 selects the unit-norm minimizer of x'P'Px.
    pub gamma: f64,
    pub variant: Variant,
}

impl SnleConfig {
    pub fn new(lambda: f64, gamma: f64, variant: Variant) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite"));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("gamma must be finite and >= 0"));
        }
        Ok(SnleConfig {
            lambda,
            gamma,
            variant,
        })
    }
}

fn check_len(g: &Graph, v: &NodeValues) -> Result<()> {
    if v.len() == g.n_nodes() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: g.n_nodes(),
            actual: v.len(),
        })
    }
}

/// Solves `a x = b` by LU with partial pivoting plus one round of residual
/// refinement.
fn solve_refined(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let mut x = lu
        .solve(b)
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    let residual = b - a * &x;
    if let Some(dx) = lu.solve(&residual) {
        x += dx;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what.to_string()));
    }
    Ok(x)
}

/// Full-graph embedding x₀.
///
/// γ > 0 solves (I + γ⁻¹P'P) x₀ = y. γ = 0 returns the unit-norm eigenvector
/// of P'P with the smallest eigenvalue, signed so that corr(x₀, y) ≥ 0.
pub fn snle_full(g: &Graph, y: &NodeValues, cfg: &SnleConfig) -> Result<NodeValues> {
    check_len(g, y)?;
    let p = PLambda::new(g, cfg.lambda, cfg.variant)?;
    let gram = p.gram();
    let n = g.n_nodes();
    if cfg.gamma == 0.0 {
        let eig = SymmetricEigen::new(gram);
        let k = eig.eigenvalues.imin();
        let mut x = eig.eigenvectors.column(k).into_owned();
        x /= x.norm();
        if correlation(&x, y).is_some_and(|c| c < 0.0) {
            x.neg_mut();
        }
        return Ok(x);
    }
    let a = DMatrix::identity(n, n) + gram / cfg.gamma;
    let chol = a
        .clone()
        .cholesky()
        .expect("I + γ⁻¹P'P is positive definite for γ > 0");
    let mut x = chol.solve(y);
    let residual = y - &a * &x;
    x += chol.solve(&residual);
    Ok(x)
}

/// Δ(x) evaluated as a sum over nodes: Σ_i ẋ_i² + γ Σ_i (y_i − x_i)² with
/// ẋ_i = Σ_{j ∈ τ̃_i} p_ij x_j.
pub fn snle_loss(g: &Graph, y: &NodeValues, cfg: &SnleConfig, x: &NodeValues) -> Result<f64> {
    check_len(g, y)?;
    check_len(g, x)?;
    let p = PLambda::new(g, cfg.lambda, cfg.variant)?;
    let smooth: f64 = p
        .looped_neighbourhoods
        .iter()
        .enumerate()
        .map(|(i, nbhd)| {
            nbhd.iter()
                .map(|&j| p.matrix[(i, j)] * x[j])
                .sum::<f64>()
                .powi(2)
        })
        .sum();
    let fit: f64 = y.iter().zip(x.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(smooth + cfg.gamma * fit)
}

/// ∂Δ/∂x = 2P'Px − 2γ(y − x).
pub fn snle_gradient(g: &Graph, y: &NodeValues, cfg: &SnleConfig, x: &NodeValues) -> Result<NodeValues> {
    check_len(g, y)?;
    check_len(g, x)?;
    let p = PLambda::new(g, cfg.lambda, cfg.variant)?;
    Ok((p.matrix.transpose() * (&p.matrix * x)) * 2.0 - (y - x) * (2.0 * cfg.gamma))
}

/// Solution x̂ of the sample estimating equation on U_s.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEmbedding {
    /// U_s, sorted.
    pub nodes: Vec<usize>,
    pub values: DVector<f64>,
}

/// Solves (γ⁻¹ W_{U_s}⁻¹ P_{sU_s}' W_s P_{sU_s} + I) x̂ = y_{U_s} for a
/// 1-wave snowball sample.
///
/// Row k of P_{sU_s} is row k of P_λ restricted to U_s; it needs only the
/// observed neighbourhood of seed node k and the degrees on it.
pub fn snle_sample(
    g: &Graph,
    sg: &SampleGraph,
    y_us: &[f64],
    iw: &InclusionWeights,
    cfg: &SnleConfig,
) -> Result<SampleEmbedding> {
    if cfg.gamma <= 0.0 {
        return Err(Error::invalid("sample embedding needs gamma > 0"));
    }
    if sg.waves.len() > 1 {
        return Err(Error::invalid("sample embedding is defined for 1-wave snowball samples"));
    }
    let m = sg.sampled_nodes.len();
    if y_us.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: y_us.len(),
        });
    }
    let n_seed = sg.seed.len();
    let mut p = DMatrix::zeros(n_seed, m);
    for (row, (&k, nbhd)) in sg.seed.iter().zip(&sg.observed_rows).enumerate() {
        let col = |j: usize| sg.position(j).expect("observed neighbours lie in U_s");
        p[(row, col(k))] = p_entry(g, cfg.variant, cfg.lambda, k, k);
        for &j in nbhd {
            p[(row, col(j))] = p_entry(g, cfg.variant, cfg.lambda, k, j);
        }
    }
    let w_seed = sg
        .seed
        .iter()
        .map(|&k| iw.seed_weight(k))
        .collect::<Result<Vec<_>>>()?;
    let pi_node = sg
        .sampled_nodes
        .iter()
        .map(|&j| iw.node_weight(j).map(|w| 1.0 / w))
        .collect::<Result<Vec<_>>>()?;

    let mut weighted_p = p.clone();
    for (row, w) in w_seed.iter().enumerate() {
        weighted_p.row_mut(row).scale_mut(*w);
    }
    let mut a = p.transpose() * weighted_p;
    for (r, pi) in pi_node.iter().enumerate() {
        a.row_mut(r).scale_mut(pi / cfg.gamma);
    }
    for r in 0..m {
        a[(r, r)] += 1.0;
    }
    let values = solve_refined(&a, &DVector::from_column_slice(y_us), "sample embedding system")?;
    Ok(SampleEmbedding {
        nodes: sg.sampled_nodes.clone(),
        values,
    })
}

/// Running conditional means E(x̂_i | i ∈ U_s) over replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedEmbedding {
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub inclusion_count: Vec<usize>,
    pub replications: usize,
}

impl ExpectedEmbedding {
    pub fn new(n_nodes: usize) -> Self {
        ExpectedEmbedding {
            sum: vec![0.0; n_nodes],
            sum_sq: vec![0.0; n_nodes],
            inclusion_count: vec![0; n_nodes],
            replications: 0,
        }
    }

    pub fn add(&mut self, sample: &SampleEmbedding) {
        for (&j, &v) in sample.nodes.iter().zip(sample.values.iter()) {
            self.sum[j] += v;
            self.sum_sq[j] += v * v;
            self.inclusion_count[j] += 1;
        }
        self.replications += 1;
    }

    /// Conditional mean per node; `None` where the node was never sampled.
    pub fn mean(&self) -> Vec<Option<f64>> {
        self.sum
            .iter()
            .zip(&self.inclusion_count)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect()
    }

    /// Means as a dense vector, failing if any node was never sampled.
    pub fn mean_vector(&self) -> Result<NodeValues> {
        let mean = self.mean();
        match mean.iter().position(Option::is_none) {
            Some(i) => Err(Error::UnusableWeight(i)),
            None => Ok(DVector::from_iterator(
                mean.len(),
                mean.into_iter().map(|m| m.unwrap_or_default()),
            )),
        }
    }

    /// Monte-Carlo standard error of the conditional mean of node `i`.
    pub fn standard_error(&self, i: usize) -> Option<f64> {
        let c = self.inclusion_count[i];
        if c < 2 {
            return None;
        }
        let c = c as f64;
        let mean = self.sum[i] / c;
        let var = ((self.sum_sq[i] - c * mean * mean) / (c - 1.0)).max(0.0);
        Some((var / c).sqrt())
    }

    pub fn missing(&self) -> Vec<usize> {
        (0..self.sum.len())
            .filter(|&i| self.inclusion_count[i] == 0)
            .collect()
    }
}

/// Monte-Carlo sample-graph embedding: `replications` independent 1-wave
/// snowball samples from SRS seeds of size `seed_size`, replicate `r` seeded
/// with `replicate_rng(rng_seed, r)`. Replicates are summed in index order,
/// so the result does not depend on the thread count.
pub fn snle_expected(
    g: &Graph,
    y: &NodeValues,
    cfg: &SnleConfig,
    seed_size: usize,
    replications: usize,
    rng_seed: u64,
) -> Result<ExpectedEmbedding> {
    check_len(g, y)?;
    if replications == 0 {
        return Err(Error::invalid("at least one replicate is required"));
    }
    let design = SbsDesign::one_wave(seed_size);
    design.validate(g)?;
    let iw = srs_inclusion_weights(g, seed_size, 1)?;
    let samples = (0..replications)
        .into_par_iter()
        .map(|r| {
            let sg = design.draw(g, &mut replicate_rng(rng_seed, r as u64))?;
            snle_sample(g, &sg, &sg.observe(y.as_slice()), &iw, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = ExpectedEmbedding::new(g.n_nodes());
    for s in &samples {
        acc.add(s);
    }
    Ok(acc)
}

/// Smallest gap between the classes of a 0/1 labelling along `x` after
/// scaling x to unit norm and orienting it so class 1 has the larger mean:
/// min over 1-nodes minus max over 0-nodes. Positive means a threshold on x
/// separates the classes.
pub fn separation_margin(x: &NodeValues, y: &NodeValues) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: x.len(),
        });
    }
    let norm = x.norm();
    if norm == 0.0 {
        return Err(Error::invalid("cannot scale a zero embedding"));
    }
    let mean = |class: f64| {
        let (s, c) = x
            .iter()
            .zip(y.iter())
            .filter(|p| *p.1 == class)
            .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        (c > 0).then(|| s / c as f64)
    };
    let (m0, m1) = match (mean(0.0), mean(1.0)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::invalid("both classes must be present")),
    };
    let sign = if m1 >= m0 { 1.0 } else { -1.0 };
    let scaled = x * (sign / norm);
    let lowest_one = scaled
        .iter()
        .zip(y.iter())
        .filter(|p| *p.1 == 1.0)
        .map(|p| *p.0)
        .fold(f64::INFINITY, f64::min);
    let highest_zero = scaled
        .iter()
        .zip(y.iter())
        .filter(|p| *p.1 == 0.0)
        .map(|p| *p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(lowest_one - highest_zero)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub rank: usize,
    pub correlation: f64,
}

/// For each λ, the rank of the Laplacian eigenvector best correlated with
/// the full-graph embedding x₀.
pub fn rank_sweep(
    g: &Graph,
    y: &NodeValues,
    lambdas: &[f64],
    gamma: f64,
    variant: Variant,
) -> Result<Vec<SweepRow>> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("rank sweep needs gamma > 0"));
    }
    let es = EigenSystem::of_graph(g)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let cfg = SnleConfig::new(lambda, gamma, variant)?;
            let x0 = snle_full(g, y, &cfg)?;
            let (rank, correlation) = best_correlated_eigenvector(&x0, &es)?;
            Ok(SweepRow {
                lambda,
                rank,
                correlation,
            })
        })
        .collect()
}

/// lo, lo + step, ..., hi (inclusive, to within half a step).
pub fn lambda_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid("grid needs finite lo <= hi and step > 0"));
    }
    let count = ((hi - lo) / step + 0.5).floor() as usize + 1;
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}
