//! Sample estimating equations: design-weighted node samples, weighted
//! scores, replicate combination and the linearised sampling variance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sampling::{InclusionWeights, SampleGraph, WalkTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    SbsSeed,
    TrwStates,
    Census,
}

/// Nodes entering a sample estimating equation with their weights.
///
/// Under a random walk the same node may appear once per extracted state.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNodeSample {
    pub entries: Vec<(usize, f64)>,
    pub provenance: Provenance,
}

impl WeightedNodeSample {
    pub fn census(n_nodes: usize) -> Self {
        WeightedNodeSample {
            entries: (0..n_nodes).map(|i| (i, 1.0)).collect(),
            provenance: Provenance::Census,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w).sum()
    }
}

/// One entry per extracted state O_{t_k} with weight 1/(n (d_i + r)).
///
/// The weights are proportional, not equal, to inverse stationary
/// probabilities; the estimating equation is invariant to that scale.
pub fn trw_weights(trace: &WalkTrace, g: &Graph) -> WeightedNodeSample {
    let n = trace.states.len() as f64;
    let r = trace.config.r;
    WeightedNodeSample {
        entries: trace
            .states
            .iter()
            .map(|&i| (i, 1.0 / (n * (g.degree(i) as f64 + r))))
            .collect(),
        provenance: Provenance::TrwStates,
    }
}

/// One entry per seed node k with weight 1/π_k.
pub fn sbs_weights(sg: &SampleGraph, iw: &InclusionWeights) -> Result<WeightedNodeSample> {
    let entries = sg
        .seed
        .iter()
        .map(|&k| iw.seed_weight(k).map(|w| (k, w)))
        .collect::<Result<_>>()?;
    Ok(WeightedNodeSample {
        entries,
        provenance: Provenance::SbsSeed,
    })
}

/// Per-node contributions u_i(θ) = ∂Δ_i/∂θ to a loss that is a sum over
/// nodes, and their Jacobians ∂u_i/∂θ.
pub trait NodeScore {
    fn dim(&self) -> usize;
    fn n_nodes(&self) -> usize;
    fn score(&self, i: usize, theta: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, i: usize, theta: &DVector<f64>) -> DMatrix<f64>;
}

/// u_s(θ) = Σ w_i u_i(θ) over the sample entries.
pub fn weighted_score<S: NodeScore + ?Sized>(
    ws: &WeightedNodeSample,
    score: &S,
    theta: &DVector<f64>,
) -> DVector<f64> {
    ws.entries
        .iter()
        .fold(DVector::zeros(score.dim()), |acc, &(i, w)| {
            acc + score.score(i, theta) * w
        })
}

/// Full-graph score u(θ) = Σ_i u_i(θ).
pub fn full_score<S: NodeScore + ?Sized>(score: &S, theta: &DVector<f64>) -> DVector<f64> {
    weighted_score(&WeightedNodeSample::census(score.n_nodes()), score, theta)
}

/// L independent estimates, their mean, and (for L ≥ 2) the estimated
/// covariance of the mean, (1/(L(L−1))) Σ_l (θ̂_l − θ̂)(θ̂_l − θ̂)'.
#[derive(Debug, Clone)]
pub struct ReplicateSet {
    pub estimates: Vec<DVector<f64>>,
    pub combined: DVector<f64>,
    variance: Option<DMatrix<f64>>,
}

impl ReplicateSet {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn variance(&self) -> Result<&DMatrix<f64>> {
        self.variance
            .as_ref()
            .ok_or(Error::TooFewReplicates(self.estimates.len()))
    }

    /// Componentwise standard errors of the combined estimate.
    pub fn standard_errors(&self) -> Result<DVector<f64>> {
        Ok(self.variance()?.diagonal().map(f64::sqrt))
    }
}

pub fn combine_replicates(estimates: Vec<DVector<f64>>) -> Result<ReplicateSet> {
    let first = estimates
        .first()
        .ok_or(Error::TooFewReplicates(0))?;
    let dim = first.len();
    if let Some(bad) = estimates.iter().find(|e| e.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    let l = estimates.len() as f64;
    let combined = estimates
        .iter()
        .fold(DVector::zeros(dim), |acc, e| acc + e)
        / l;
    let variance = (estimates.len() >= 2).then(|| {
        estimates.iter().fold(DMatrix::zeros(dim, dim), |acc, e| {
            let dev = e - &combined;
            acc + &dev * dev.transpose()
        }) / (l * (l - 1.0))
    });
    Ok(ReplicateSet {
        estimates,
        combined,
        variance,
    })
}

/// Linearised sampling covariance of the seed-sample SEE estimator,
///
/// H⁻¹ { Σ_{i,j} (w_i w_j Pr(i, j ∈ s) − 1) u_i(θ₀) u_j(θ₀)' } H⁻¹,
///
/// with H = Σ_i ∂u_i/∂θ at θ₀ taken over the full graph (its expectation
/// under unbiased weights).
pub fn sbs_variance_approx<S: NodeScore + ?Sized>(
    score: &S,
    iw: &InclusionWeights,
    theta0: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let joint = iw
        .joint_seed_prob
        .as_ref()
        .ok_or_else(|| Error::invalid("joint seed inclusion probabilities are required"))?;
    let n = score.n_nodes();
    if joint.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: joint.nrows(),
        });
    }
    let p = score.dim();
    let weights: Vec<f64> = (0..n).map(|i| iw.seed_weight(i)).collect::<Result<_>>()?;
    let mut u = DMatrix::zeros(p, n);
    let mut h = DMatrix::zeros(p, p);
    for i in 0..n {
        u.set_column(i, &score.score(i, theta0));
        h += score.jacobian(i, theta0);
    }
    let design = DMatrix::from_fn(n, n, |i, j| weights[i] * weights[j] * joint[(i, j)] - 1.0);
    let middle = &u * design * u.transpose();
    let h_inv = h
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Hessian of the full-graph score".into()))?;
    Ok(&h_inv * middle * h_inv.transpose())
}
