//! Eigen-neighbour-function embedding x = ξ M y and generalized-linear node
//! classification on it.
//!
//! Labels are coded {0, 1}. The embedding scale ξ has a closed-form
//! least-squares fit; the classifier ψ = (intercept, slope) is fitted by
//! Newton-Raphson on the score Σ w_i (y_i − p_i)(1, x_i)'.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeValues};
use crate::sampling::{
    replicate_rng, run_trw, srs_inclusion_weights, SampleGraph, SbsDesign, WalkConfig, WalkTrace,
};
use crate::see::{
    combine_replicates, sbs_weights, trw_weights, NodeScore, ReplicateSet, WeightedNodeSample,
};
use crate::spectral::correlation;

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_MAX_HALVINGS: usize = 20;
const SCORE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// p = 1 / (1 + e^{−η})
    Logistic,
    /// p = (1 + tanh η) / 2
    Tanh,
}

impl Link {
    pub fn prob(self, eta: f64) -> f64 {
        match self {
            Link::Logistic => 1.0 / (1.0 + (-eta).exp()),
            Link::Tanh => 0.5 * (1.0 + eta.tanh()),
        }
    }

    /// dp/dη, the per-node weight in ∂u/∂ψ = −Σ w (dp/dη)(1, x)'(1, x).
    pub fn slope(self, eta: f64) -> f64 {
        match self {
            Link::Logistic => {
                let p = self.prob(eta);
                p * (1.0 - p)
            }
            Link::Tanh => {
                let t = eta.tanh();
                0.5 * (1.0 + t) * (1.0 - t)
            }
        }
    }

    /// Negative Bernoulli log-likelihood of one observation.
    fn nll(self, eta: f64, y: f64) -> f64 {
        // both links are a logistic in a scaled argument
        let z = match self {
            Link::Logistic => eta,
            Link::Tanh => 2.0 * eta,
        };
        y * softplus(-z) + (1.0 - y) * softplus(z)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl std::str::FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Link::Logistic),
            "tanh" => Ok(Link::Tanh),
            other => Err(Error::invalid(format!(
                "unknown link `{other}` (expected logistic or tanh)"
            ))),
        }
    }
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Link::Logistic => "logistic",
            Link::Tanh => "tanh",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnfModel {
    pub xi: f64,
    /// (intercept, slope)
    pub psi: Vector2<f64>,
    pub link: Link,
    /// Whether x was rescaled to unit norm before the classifier was fitted.
    pub normalized: bool,
}

/// ẏ = M y, i.e. ẏ_i = Σ_{j ∈ ν_i} y_j / sqrt(d_i d_j).
pub fn m_smooth(g: &Graph, y: &NodeValues) -> Result<NodeValues> {
    check_len(g, y)?;
    if let Some(i) = g.first_isolated() {
        return Err(Error::IsolatedNode(i));
    }
    Ok(DVector::from_iterator(
        g.n_nodes(),
        (0..g.n_nodes()).map(|i| smooth_at(g, i, |j| y[j])),
    ))
}

/// ẏ_k from the labels of ν_k and the degrees of k and its neighbours.
fn smooth_at(g: &Graph, k: usize, label: impl Fn(usize) -> f64) -> f64 {
    let dk = g.degree(k) as f64;
    g.neighbours(k)
        .iter()
        .map(|&j| label(j) / (dk * g.degree(j) as f64).sqrt())
        .sum()
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

/// Δ(ξ) = Σ_i (y_i − ξ ẏ_i)².
pub fn xi_loss(y: &NodeValues, ydot: &NodeValues, xi: f64) -> f64 {
    y.iter()
        .zip(ydot.iter())
        .map(|(yi, di)| (yi - xi * di).powi(2))
        .sum()
}

/// Graph-fit ξ₀ = (ẏ'ẏ)⁻¹ ẏ'y.
pub fn fit_xi(g: &Graph, y: &NodeValues) -> Result<f64> {
    let ydot = m_smooth(g, y)?;
    xi_ratio(ydot.iter().zip(y.iter()).map(|(&d, &yi)| (1.0, d, yi)))
}

/// ξ = Σ w ẏ y / Σ w ẏ² over (w, ẏ, y) triples.
fn xi_ratio(terms: impl Iterator<Item = (f64, f64, f64)>) -> Result<f64> {
    let (num, den) = terms.fold((0.0, 0.0), |(n, d), (w, yd, y)| {
        (n + w * yd * y, d + w * yd * yd)
    });
    if den == 0.0 {
        Err(Error::Singular("Σ w ẏ² = 0; ξ is not identified".into()))
    } else {
        Ok(num / den)
    }
}

/// x = ξ ẏ, optionally rescaled to unit norm with corr(x, y) ≥ 0.
pub fn embed(g: &Graph, y: &NodeValues, xi: f64, normalize: bool) -> Result<NodeValues> {
    if !xi.is_finite() {
        return Err(Error::invalid("ξ must be finite"));
    }
    let x = m_smooth(g, y)? * xi;
    if !normalize {
        return Ok(x);
    }
    let norm = x.norm();
    if norm == 0.0 {
        return Err(Error::invalid("cannot normalize a zero embedding"));
    }
    let sign = match correlation(&x, y) {
        Some(c) if c < 0.0 => -1.0,
        _ => 1.0,
    };
    Ok(x * (sign / norm))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiFit {
    pub psi: Vector2<f64>,
    pub iterations: usize,
    pub score_norm: f64,
}

/// Graph-fit ψ₀ solving Σ (y_i − p_i)(1, x_i)' = 0.
pub fn fit_psi(x: &NodeValues, y: &NodeValues, link: Link) -> Result<PsiFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: x.len(),
        });
    }
    let points: Vec<_> = x.iter().zip(y.iter()).map(|(&xi, &yi)| (xi, yi, 1.0)).collect();
    fit_psi_weighted(&points, link)
}

fn psi_score_and_hessian(points: &[(f64, f64, f64)], psi: &Vector2<f64>, link: Link) -> (Vector2<f64>, Matrix2<f64>) {
    let mut u = Vector2::zeros();
    let mut h = Matrix2::zeros();
    for &(x, y, w) in points {
        let eta = psi[0] + psi[1] * x;
        let z = Vector2::new(1.0, x);
        u += z * (w * (y - link.prob(eta)));
        h -= z * z.transpose() * (w * link.slope(eta));
    }
    (u, h)
}

fn psi_nll(points: &[(f64, f64, f64)], psi: &Vector2<f64>, link: Link) -> f64 {
    points
        .iter()
        .map(|&(x, y, w)| w * link.nll(psi[0] + psi[1] * x, y))
        .sum()
}

/// Newton-Raphson on weighted (x_i, y_i, w_i) triples, started at ψ = 0,
/// halving the step while the weighted negative log-likelihood increases.
pub fn fit_psi_weighted(points: &[(f64, f64, f64)], link: Link) -> Result<PsiFit> {
    if let Some(&(x, y, w)) = points
        .iter()
        .find(|(x, y, w)| !x.is_finite() || !(*y == 0.0 || *y == 1.0) || !(*w > 0.0))
    {
        return Err(Error::invalid(format!(
            "classifier input must have finite x, y in {{0,1}} and w > 0 (got x={x}, y={y}, w={w})"
        )));
    }
    if is_separated(points) {
        return Err(Error::Separated);
    }
    let mut psi = Vector2::zeros();
    let mut loss = psi_nll(points, &psi, link);
    let mut score_norm = f64::INFINITY;
    for iteration in 0..=NEWTON_MAX_ITER {
        let (u, h) = psi_score_and_hessian(points, &psi, link);
        score_norm = u.norm();
        if score_norm <= SCORE_TOL {
            return Ok(PsiFit {
                psi,
                iterations: iteration,
                score_norm,
            });
        }
        if iteration == NEWTON_MAX_ITER {
            break;
        }
        let step = h
            .lu()
            .solve(&u)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Singular("classifier Hessian".into()))?;
        // ψ_new = ψ − H⁻¹u; H is negative definite so this ascends the likelihood
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let candidate = psi - step * scale;
            let cand_loss = psi_nll(points, &candidate, link);
            if cand_loss <= loss {
                psi = candidate;
                loss = cand_loss;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // no descent left at machine precision: take the full step and
            // let the score test decide
            psi -= step;
            loss = psi_nll(points, &psi, link);
        }
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        score_norm,
    })
}

/// True when a threshold on x splits the classes (ties allowed), or only one
/// class is present. The likelihood then has no finite maximizer.
fn is_separated(points: &[(f64, f64, f64)]) -> bool {
    let range = |class: f64| {
        points
            .iter()
            .filter(|p| p.1 == class)
            .fold(None, |acc: Option<(f64, f64)>, p| {
                Some(acc.map_or((p.0, p.0), |(lo, hi)| (lo.min(p.0), hi.max(p.0))))
            })
    };
    match (range(0.0), range(1.0)) {
        (Some((lo0, hi0)), Some((lo1, hi1))) => hi0 <= lo1 || hi1 <= lo0,
        _ => true,
    }
}

/// Negative Bernoulli log-likelihood −Σ [y log p + (1 − y) log(1 − p)] of
/// the classifier at `psi`.
pub fn classifier_nll(x: &NodeValues, y: &NodeValues, psi: &Vector2<f64>, link: Link) -> f64 {
    let points: Vec<_> = x.iter().zip(y.iter()).map(|(&a, &b)| (a, b, 1.0)).collect();
    psi_nll(&points, psi, link)
}

pub fn probabilities(x: &NodeValues, psi: &Vector2<f64>, link: Link) -> NodeValues {
    x.map(|xi| link.prob(psi[0] + psi[1] * xi))
}

/// 1(p_i > 0.5), strict.
pub fn classify(x: &NodeValues, psi: &Vector2<f64>, link: Link) -> NodeValues {
    probabilities(x, psi, link).map(|p| if p > 0.5 { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Misclassification {
    /// 1-nodes predicted as 0.
    pub ones: usize,
    /// 0-nodes predicted as 1.
    pub zeros: usize,
}

impl Misclassification {
    pub fn total(&self) -> usize {
        self.ones + self.zeros
    }
}

pub fn misclassification(predicted: &NodeValues, y: &NodeValues) -> Misclassification {
    let mut m = Misclassification { ones: 0, zeros: 0 };
    for (&p, &t) in predicted.iter().zip(y.iter()) {
        match (t == 1.0, p == 1.0) {
            (true, false) => m.ones += 1,
            (false, true) => m.zeros += 1,
            _ => {}
        }
    }
    m
}

/// Full-graph fit: ξ₀, then ψ₀ on x = ξ₀ẏ (unit-normalized if asked).
pub fn fit_model(g: &Graph, y: &NodeValues, link: Link, normalize: bool) -> Result<EnfModel> {
    let xi = fit_xi(g, y)?;
    let x = embed(g, y, xi, normalize)?;
    let psi = fit_psi(&x, y, link)?.psi;
    Ok(EnfModel {
        xi,
        psi,
        link,
        normalized: normalize,
    })
}

/// Per-node score of Δ(ξ) in the form ẏ_i (y_i − ξ ẏ_i).
#[derive(Debug, Clone)]
pub struct XiScore {
    pub y: NodeValues,
    pub ydot: NodeValues,
}

impl XiScore {
    pub fn new(g: &Graph, y: &NodeValues) -> Result<Self> {
        Ok(XiScore {
            ydot: m_smooth(g, y)?,
            y: y.clone(),
        })
    }
}

impl NodeScore for XiScore {
    fn dim(&self) -> usize {
        1
    }

    fn n_nodes(&self) -> usize {
        self.y.len()
    }

    fn score(&self, i: usize, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.ydot[i] * (self.y[i] - theta[0] * self.ydot[i]))
    }

    fn jacobian(&self, i: usize, _theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -self.ydot[i] * self.ydot[i])
    }
}

/// Per-node classifier score (y_i − p_i)(1, x_i)'.
#[derive(Debug, Clone)]
pub struct PsiScore {
    pub x: NodeValues,
    pub y: NodeValues,
    pub link: Link,
}

impl NodeScore for PsiScore {
    fn dim(&self) -> usize {
        2
    }

    fn n_nodes(&self) -> usize {
        self.y.len()
    }

    fn score(&self, i: usize, theta: &DVector<f64>) -> DVector<f64> {
        let p = self.link.prob(theta[0] + theta[1] * self.x[i]);
        DVector::from_column_slice(&[1.0, self.x[i]]) * (self.y[i] - p)
    }

    fn jacobian(&self, i: usize, theta: &DVector<f64>) -> DMatrix<f64> {
        let z = DVector::from_column_slice(&[1.0, self.x[i]]);
        let s = self.link.slope(theta[0] + theta[1] * self.x[i]);
        -(&z * z.transpose()) * s
    }
}

/// Looks up an observed label on U_s.
fn observed_label(sg: &SampleGraph, y_us: &[f64], j: usize) -> f64 {
    let pos = sg
        .position(j)
        .expect("neighbours of seed nodes are in U_s by construction");
    y_us[pos]
}

/// ẏ_k for every seed node k, computed from what the sample graph reveals:
/// ν_k and the labels on it. Degrees are frame information.
pub fn sample_smooth(g: &Graph, sg: &SampleGraph, y_us: &[f64]) -> Result<Vec<f64>> {
    if y_us.len() != sg.sampled_nodes.len() {
        return Err(Error::DimensionMismatch {
            expected: sg.sampled_nodes.len(),
            actual: y_us.len(),
        });
    }
    sg.seed
        .iter()
        .map(|&k| {
            if g.degree(k) == 0 {
                return Err(Error::IsolatedNode(k));
            }
            Ok(smooth_at(g, k, |j| observed_label(sg, y_us, j)))
        })
        .collect()
}

fn seed_position(sg: &SampleGraph, k: usize) -> Result<usize> {
    sg.seed
        .binary_search(&k)
        .map_err(|_| Error::invalid(format!("weighted entry {k} is not a seed node")))
}

/// Sample-fit ξ̂₀ = (Σ_s w ẏ²)⁻¹ Σ_s w ẏ y from a snowball sample.
pub fn sample_fit_xi(
    g: &Graph,
    sg: &SampleGraph,
    y_us: &[f64],
    ws: &WeightedNodeSample,
) -> Result<f64> {
    let ydot = sample_smooth(g, sg, y_us)?;
    let terms = ws
        .entries
        .iter()
        .map(|&(k, w)| {
            let p = seed_position(sg, k)?;
            Ok((w, ydot[p], observed_label(sg, y_us, k)))
        })
        .collect::<Result<Vec<_>>>()?;
    xi_ratio(terms.into_iter())
}

/// ξ̂₀ from walk-weighted states. Reads labels only on ν_i ∪ {i} of visited
/// states, which is what the walk's observation procedure reveals.
pub fn trw_fit_xi(g: &Graph, y: &NodeValues, ws: &WeightedNodeSample) -> Result<f64> {
    check_len(g, y)?;
    let terms = ws
        .entries
        .iter()
        .map(|&(i, w)| {
            if g.degree(i) == 0 {
                return Err(Error::IsolatedNode(i));
            }
            Ok((w, smooth_at(g, i, |j| y[j]), y[i]))
        })
        .collect::<Result<Vec<_>>>()?;
    xi_ratio(terms.into_iter())
}

/// Plug-in ψ̂₀ from the weighted SEE Σ_s w_i (y_i − p_i)(1, x̂_i)' = 0.
/// `xhat` holds x̂_k = ξ̂₀ ẏ_k aligned with `sg.seed`.
pub fn sample_fit_psi(
    sg: &SampleGraph,
    y_us: &[f64],
    ws: &WeightedNodeSample,
    xhat: &[f64],
    link: Link,
) -> Result<PsiFit> {
    if xhat.len() != sg.seed.len() {
        return Err(Error::DimensionMismatch {
            expected: sg.seed.len(),
            actual: xhat.len(),
        });
    }
    let points = ws
        .entries
        .iter()
        .map(|&(k, w)| Ok((xhat[seed_position(sg, k)?], observed_label(sg, y_us, k), w)))
        .collect::<Result<Vec<_>>>()?;
    fit_psi_weighted(&points, link)
}

/// One replicate of the ENF sample fit.
#[derive(Debug, Clone)]
pub struct EnfReplicate {
    /// `None` when Σ w ẏ² = 0 on the drawn seed.
    pub xi_hat: Option<f64>,
    /// `None` when ξ̂₀ or the classifier failed.
    pub psi_hat: Option<Vector2<f64>>,
    /// (k, x̂_k = ξ̂₀ ẏ_k) for each seed node k; empty when ξ̂₀ is `None`.
    pub seed_xhat: Vec<(usize, f64)>,
    /// u_s(ξ₀) = Σ_s w_k ẏ_k (y_k − ξ₀ ẏ_k).
    pub score_at_xi0: f64,
}

/// Monte-Carlo study of the ENF sample fit under 1-wave SBS from an SRS.
#[derive(Debug, Clone)]
pub struct EnfSampleStudy {
    pub replicates: Vec<EnfReplicate>,
    pub xi0: f64,
    /// Replicates with a usable ξ̂₀ combined as in [`combine_replicates`].
    pub xi: ReplicateSet,
    /// Replicates with a converged classifier, or `None` if there were fewer
    /// than one.
    pub psi: Option<ReplicateSet>,
    pub xi_failures: usize,
    pub psi_failures: usize,
}

impl EnfSampleStudy {
    /// Mean and standard error of ξ̂₀ over replicates.
    pub fn xi_mean_se(&self) -> (f64, f64) {
        let v: Vec<f64> = self.replicates.iter().filter_map(|r| r.xi_hat).collect();
        mean_se(&v)
    }

    /// Mean and standard error of the weighted score at ξ₀.
    pub fn score_mean_se(&self) -> (f64, f64) {
        let v: Vec<f64> = self.replicates.iter().map(|r| r.score_at_xi0).collect();
        mean_se(&v)
    }

    /// Monte-Carlo variance (divisor R − 1) of ξ̂₀ across replicates.
    pub fn xi_variance(&self) -> f64 {
        let v: Vec<f64> = self.replicates.iter().filter_map(|r| r.xi_hat).collect();
        sample_variance(&v)
    }
}

/// Independent targeted random walks, each yielding ξ̂₀ from its own
/// walk-weighted estimating equation.
#[derive(Debug, Clone)]
pub struct TrwStudy {
    pub traces: Vec<WalkTrace>,
    /// ξ̂₀ per walk.
    pub xi: ReplicateSet,
    /// u_s(ξ₀) = Σ_k w_k ẏ_k (y_k − ξ₀ ẏ_k) per walk.
    pub scores_at_xi0: Vec<f64>,
    pub xi0: f64,
}

impl TrwStudy {
    pub fn score_mean_se(&self) -> (f64, f64) {
        mean_se(&self.scores_at_xi0)
    }

    /// Visit counts pooled over all walks.
    pub fn pooled_visits(&self) -> Vec<usize> {
        let mut counts = vec![0; self.traces.first().map_or(0, |t| t.visit_counts.len())];
        for t in &self.traces {
            for (c, v) in counts.iter_mut().zip(&t.visit_counts) {
                *c += v;
            }
        }
        counts
    }
}

/// Runs `walks` independent walks. Walk `l` uses rng seed
/// `base.rng_seed + l * seed_stride` and starts at that seed modulo N, so a
/// stride of 0 repeats the same walk.
pub fn trw_study(
    g: &Graph,
    y: &NodeValues,
    base: &WalkConfig,
    walks: usize,
    seed_stride: u64,
) -> Result<TrwStudy> {
    if walks == 0 {
        return Err(Error::invalid("at least one walk is required"));
    }
    let xi0 = fit_xi(g, y)?;
    let ydot = m_smooth(g, y)?;
    let runs = (0..walks as u64)
        .into_par_iter()
        .map(|l| -> Result<(WalkTrace, f64, f64)> {
            let rng_seed = base.rng_seed.wrapping_add(l.wrapping_mul(seed_stride));
            let cfg = WalkConfig { rng_seed, ..*base };
            let start = (rng_seed % g.n_nodes() as u64) as usize;
            let trace = run_trw(g, &cfg, start)?;
            let ws = trw_weights(&trace, g);
            let xi_hat = trw_fit_xi(g, y, &ws)?;
            let score = ws
                .entries
                .iter()
                .map(|&(i, w)| w * ydot[i] * (y[i] - xi0 * ydot[i]))
                .sum();
            Ok((trace, xi_hat, score))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut traces = Vec::with_capacity(walks);
    let mut estimates = Vec::with_capacity(walks);
    let mut scores_at_xi0 = Vec::with_capacity(walks);
    for (trace, xi_hat, score) in runs {
        traces.push(trace);
        estimates.push(DVector::from_element(1, xi_hat));
        scores_at_xi0.push(score);
    }
    Ok(TrwStudy {
        traces,
        xi: combine_replicates(estimates)?,
        scores_at_xi0,
        xi0,
    })
}

pub(crate) fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, (sample_variance(v) / n).sqrt())
}

pub(crate) fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Runs `replications` independent 1-wave SBS draws with SRS seeds of size
/// `seed_size` and fits ξ̂₀ and ψ̂₀ on each. Replicate `r` uses
/// `replicate_rng(rng_seed, r)`.
pub fn sample_study(
    g: &Graph,
    y: &NodeValues,
    seed_size: usize,
    replications: usize,
    rng_seed: u64,
    link: Link,
) -> Result<EnfSampleStudy> {
    if replications == 0 {
        return Err(Error::invalid("at least one replicate is required"));
    }
    let design = SbsDesign::one_wave(seed_size);
    design.validate(g)?;
    let iw = srs_inclusion_weights(g, seed_size, 1)?;
    let xi0 = fit_xi(g, y)?;
    let y_full = y.as_slice();

    let replicates = (0..replications)
        .into_par_iter()
        .map(|r| -> Result<EnfReplicate> {
            let mut rng = replicate_rng(rng_seed, r as u64);
            let sg = design.draw(g, &mut rng)?;
            let y_us = sg.observe(y_full);
            let ws = sbs_weights(&sg, &iw)?;
            let ydot = sample_smooth(g, &sg, &y_us)?;
            let score_at_xi0 = ws
                .entries
                .iter()
                .zip(&ydot)
                .map(|(&(k, w), &d)| w * d * (y[k] - xi0 * d))
                .sum();
            let xi_hat = sample_fit_xi(g, &sg, &y_us, &ws).ok();
            let xhat: Vec<f64> = xi_hat
                .map(|xi| ydot.iter().map(|d| xi * d).collect())
                .unwrap_or_default();
            let psi_hat = xi_hat.and_then(|_| {
                sample_fit_psi(&sg, &y_us, &ws, &xhat, link).ok().map(|f| f.psi)
            });
            Ok(EnfReplicate {
                xi_hat,
                psi_hat,
                seed_xhat: sg.seed.iter().copied().zip(xhat).collect(),
                score_at_xi0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let xi_estimates: Vec<DVector<f64>> = replicates
        .iter()
        .filter_map(|r| r.xi_hat.map(|x| DVector::from_element(1, x)))
        .collect();
    let xi_failures = replications - xi_estimates.len();
    let xi = combine_replicates(xi_estimates)?;
    let psi_estimates: Vec<DVector<f64>> = replicates
        .iter()
        .filter_map(|r| r.psi_hat.map(|p| DVector::from_column_slice(p.as_slice())))
        .collect();
    let psi_failures = replications - psi_estimates.len();
    let psi = if psi_estimates.is_empty() {
        None
    } else {
        Some(combine_replicates(psi_estimates)?)
    };
    Ok(EnfSampleStudy {
        replicates,
        xi0,
        xi,
        psi,
        xi_failures,
        psi_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::run_sbs;
    use crate::see::weighted_score;
    use crate::spectral::EigenSystem;

    fn path(n: usize) -> Graph {
        Graph::from_edges(n, (0..n - 1).map(|i| (i, i + 1))).unwrap()
    }

    fn dv(x: &[f64]) -> NodeValues {
        DVector::from_column_slice(x)
    }

    #[test]
    fn smoothing_small_cases() {
        let edge = path(2);
        assert_eq!(m_smooth(&edge, &dv(&[1.0, 0.0])).unwrap(), dv(&[0.0, 1.0]));
        assert_eq!(m_smooth(&path(4), &DVector::zeros(4)).unwrap(), DVector::zeros(4));
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        assert!(matches!(m_smooth(&g, &DVector::zeros(3)), Err(Error::IsolatedNode(2))));
    }

    #[test]
    fn smoothing_an_eigenvector_scales_it() {
        let g = path(7);
        let es = EigenSystem::of_graph(&g).unwrap();
        for k in 0..7 {
            let z = es.eigenvectors.column(k).into_owned();
            let ydot = m_smooth(&g, &z).unwrap();
            assert!((ydot - &z * (1.0 - es.eigenvalues[k])).norm() < 1e-8);
            if (1.0 - es.eigenvalues[k]).abs() > 1e-6 {
                let xi = fit_xi(&g, &z).unwrap();
                assert!((xi - 1.0 / (1.0 - es.eigenvalues[k])).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn xi_is_zero_when_smoothing_is_orthogonal() {
        // on a single edge ẏ swaps the two entries, so y = (1, 0) gives ẏ'y = 0
        assert_eq!(fit_xi(&path(2), &dv(&[1.0, 0.0])).unwrap(), 0.0);
        assert!(fit_xi(&path(3), &DVector::zeros(3)).is_err());
    }

    #[test]
    fn xi_minimizes_the_loss() {
        let g = Graph::parse_edge_list("1 2\n2 3\n3 4\n4 1\n1 3\n4 5").unwrap();
        let y = dv(&[1.0, 1.0, 0.0, 1.0, 0.0]);
        let xi = fit_xi(&g, &y).unwrap();
        let ydot = m_smooth(&g, &y).unwrap();
        let at = xi_loss(&y, &ydot, xi);
        assert!(at <= xi_loss(&y, &ydot, xi + 1e-3));
        assert!(at <= xi_loss(&y, &ydot, xi - 1e-3));
    }

    #[test]
    fn embedding_normalization() {
        let g = Graph::parse_edge_list("1 2\n2 3\n3 4\n4 1\n1 3\n4 5").unwrap();
        let y = dv(&[1.0, 1.0, 0.0, 1.0, 0.0]);
        let xi = fit_xi(&g, &y).unwrap();
        let raw = embed(&g, &y, xi, false).unwrap();
        let unit = embed(&g, &y, xi, true).unwrap();
        assert!((unit.norm() - 1.0).abs() < 1e-12);
        assert!(correlation(&unit, &y).unwrap() >= 0.0);
        let ratio = raw[0] / unit[0];
        // same sign exactly when the raw embedding already correlates with y
        assert_eq!(ratio > 0.0, correlation(&raw, &y).unwrap() >= 0.0);
        assert!((raw - unit * ratio).amax() < 1e-12);
        assert_eq!(embed(&g, &y, 0.0, false).unwrap(), DVector::zeros(5));
        assert!(embed(&g, &y, 0.0, true).is_err());
    }

    #[test]
    fn links_are_rescalings_of_each_other() {
        for eta in [-3.0, -0.4, 0.0, 0.7, 5.0] {
            let t = Link::Tanh.prob(eta);
            let l = Link::Logistic.prob(2.0 * eta);
            assert!((t - l).abs() < 1e-15);
            assert!((Link::Tanh.slope(eta) * 2.0 - 4.0 * Link::Logistic.slope(2.0 * eta)).abs() < 1e-14);
        }
    }

    fn overlapping_data() -> (NodeValues, NodeValues) {
        let x = dv(&[-2.0, -1.5, -1.0, -0.2, 0.1, 0.3, 0.9, 1.4, 2.2, 0.0]);
        let y = dv(&[0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        (x, y)
    }

    #[test]
    fn newton_solves_the_score_equation() {
        let (x, y) = overlapping_data();
        for link in [Link::Logistic, Link::Tanh] {
            let fit = fit_psi(&x, &y, link).unwrap();
            assert!(fit.score_norm <= 1e-10);
            let score = PsiScore {
                x: x.clone(),
                y: y.clone(),
                link,
            };
            let u = crate::see::full_score(&score, &DVector::from_column_slice(fit.psi.as_slice()));
            assert!(u.norm() <= 1e-10);
        }
        let lo = fit_psi(&x, &y, Link::Logistic).unwrap().psi;
        let th = fit_psi(&x, &y, Link::Tanh).unwrap().psi;
        assert!((th - lo / 2.0).amax() < 1e-9);
    }

    #[test]
    fn score_matches_finite_differences_of_likelihood() {
        let (x, y) = overlapping_data();
        let points: Vec<_> = x.iter().zip(y.iter()).map(|(&a, &b)| (a, b, 1.0)).collect();
        for link in [Link::Logistic, Link::Tanh] {
            let psi = Vector2::new(0.3, -0.7);
            let (u, _) = psi_score_and_hessian(&points, &psi, link);
            // logistic score is −∇NLL; tanh score is −∇NLL / 2
            let scale = if link == Link::Logistic { 1.0 } else { 0.5 };
            let h = 1e-6;
            for c in 0..2 {
                let mut up = psi;
                let mut dn = psi;
                up[c] += h;
                dn[c] -= h;
                let fd = -(psi_nll(&points, &up, link) - psi_nll(&points, &dn, link)) / (2.0 * h) * scale;
                assert!((fd - u[c]).abs() <= 1e-6 * u[c].abs().max(1.0), "{link}: {fd} vs {}", u[c]);
            }
        }
    }

    #[test]
    fn separated_classes_do_not_converge() {
        let x = dv(&[-2.0, -1.0, 1.0, 2.0]);
        let y = dv(&[0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(fit_psi(&x, &y, Link::Logistic), Err(Error::Separated)));
        // quasi-complete: classes touch at a single x
        let x = dv(&[-2.0, 0.0, 0.0, 2.0]);
        assert!(matches!(fit_psi(&x, &y, Link::Tanh), Err(Error::Separated)));
        let one_class = dv(&[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(fit_psi(&x, &one_class, Link::Tanh), Err(Error::Separated)));
    }

    #[test]
    fn classifier_tie_goes_to_zero() {
        let x = dv(&[-1.0, 0.0, 3.0]);
        assert_eq!(classify(&x, &Vector2::zeros(), Link::Logistic), DVector::zeros(3));
        let pred = dv(&[1.0, 0.0, 1.0, 0.0]);
        let y = dv(&[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(misclassification(&pred, &y), Misclassification { ones: 1, zeros: 1 });
    }

    #[test]
    fn census_sample_fit_equals_graph_fit() {
        let g = Graph::parse_edge_list("1 2\n2 3\n3 4\n4 1\n1 3\n4 5\n5 6\n6 2").unwrap();
        let y = dv(&[1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let all: Vec<usize> = (0..6).collect();
        let sg = run_sbs(&g, &all, 1).unwrap();
        let y_us = sg.observe(y.as_slice());
        let ws = WeightedNodeSample::census(6);
        let xi_hat = sample_fit_xi(&g, &sg, &y_us, &ws).unwrap();
        assert!((xi_hat - fit_xi(&g, &y).unwrap()).abs() < 1e-12);

        let ydot = sample_smooth(&g, &sg, &y_us).unwrap();
        let xhat: Vec<f64> = ydot.iter().map(|d| xi_hat * d).collect();
        let full = fit_psi(&embed(&g, &y, xi_hat, false).unwrap(), &y, Link::Logistic).unwrap();
        let sample = sample_fit_psi(&sg, &y_us, &ws, &xhat, Link::Logistic).unwrap();
        assert!((full.psi - sample.psi).amax() < 1e-10);
    }

    #[test]
    fn single_seed_ratio() {
        let g = Graph::parse_edge_list("1 2\n2 3\n3 4\n4 1\n1 3").unwrap();
        let y = dv(&[1.0, 1.0, 0.0, 1.0]);
        let sg = run_sbs(&g, &[0], 1).unwrap();
        let y_us = sg.observe(y.as_slice());
        let ws = WeightedNodeSample {
            entries: vec![(0, 4.0)],
            provenance: crate::see::Provenance::SbsSeed,
        };
        let ydot0 = m_smooth(&g, &y).unwrap()[0];
        let xi = sample_fit_xi(&g, &sg, &y_us, &ws).unwrap();
        assert!((xi - y[0] / ydot0).abs() < 1e-12);
    }

    #[test]
    fn weighted_entries_must_be_seed_nodes() {
        let g = path(4);
        let sg = run_sbs(&g, &[0], 1).unwrap();
        let y_us = sg.observe(&[1.0, 0.0, 1.0, 0.0]);
        let ws = WeightedNodeSample {
            entries: vec![(1, 1.0)],
            provenance: crate::see::Provenance::SbsSeed,
        };
        assert!(sample_fit_xi(&g, &sg, &y_us, &ws).is_err());
    }

    #[test]
    fn xi_score_weighted_sum_is_proportional_to_estimating_equation() {
        let g = Graph::parse_edge_list("1 2\n2 3\n3 4\n4 1\n1 3\n4 5").unwrap();
        let y = dv(&[1.0, 1.0, 0.0, 1.0, 0.0]);
        let score = XiScore::new(&g, &y).unwrap();
        let xi0 = fit_xi(&g, &y).unwrap();
        let u = weighted_score(&WeightedNodeSample::census(5), &score, &DVector::from_element(1, xi0));
        assert!(u[0].abs() < 1e-12);
    }

    #[test]
    fn identical_walks_have_zero_variance() {
        let g = Graph::parse_edge_list("1 2\n2 3\n3 4\n4 1\n1 3\n4 5\n5 6\n6 2").unwrap();
        let y = dv(&[1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let cfg = WalkConfig::for_graph(&g, 2.0, 300, 7);
        let study = trw_study(&g, &y, &cfg, 2, 0).unwrap();
        assert_eq!(study.traces[0], study.traces[1]);
        assert_eq!(study.xi.variance().unwrap()[(0, 0)], 0.0);
        let study = trw_study(&g, &y, &cfg, 3, 1).unwrap();
        assert!(study.xi.variance().unwrap()[(0, 0)] > 0.0);
        assert_eq!(study.pooled_visits().iter().sum::<usize>(), 900);
    }

    #[test]
    fn study_is_deterministic() {
        let g = Graph::parse_edge_list("1 2\n2 3\n3 4\n4 1\n1 3\n4 5\n5 6\n6 2").unwrap();
        let y = dv(&[1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let a = sample_study(&g, &y, 3, 200, 11, Link::Logistic).unwrap();
        let b = sample_study(&g, &y, 3, 200, 11, Link::Logistic).unwrap();
        assert_eq!(a.xi.combined, b.xi.combined);
        assert_eq!(a.psi_failures, b.psi_failures);
        // census every replicate reproduces the graph fit
        let c = sample_study(&g, &y, 6, 20, 3, Link::Logistic).unwrap();
        assert!((c.xi.combined[0] - c.xi0).abs() < 1e-12);
        assert!(c.xi.variance().unwrap()[(0, 0)] < 1e-24);
    }
}
