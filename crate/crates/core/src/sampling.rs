//! Targeted random walks, T-wave snowball sampling and the inclusion
//! probabilities used to weight what they observe.
//!
//! Every sampler is a pure function of the graph, its configuration and a
//! 64-bit seed. Replicate `r` of a Monte-Carlo study uses
//! [`replicate_rng`]`(base_seed, r)`, a ChaCha8 stream seeded with
//! `base_seed + r`.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// RNG for replicate `index` of a study seeded with `base_seed`.
pub fn replicate_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(index))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    /// Jump-rate tuning constant r ≥ 0.
    pub r: f64,
    pub burn_in: usize,
    /// Steps between consecutive extracted states.
    pub spacing: usize,
    pub n_states: usize,
    pub rng_seed: u64,
}

impl WalkConfig {
    /// Defaults: burn-in of 50 N steps, spacing 5.
    pub fn for_graph(g: &Graph, r: f64, n_states: usize, rng_seed: u64) -> Self {
        WalkConfig {
            r,
            burn_in: 50 * g.n_nodes(),
            spacing: 5,
            n_states,
            rng_seed,
        }
    }

    fn validate(&self, g: &Graph) -> Result<()> {
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::invalid("walk tuning constant r must be finite and >= 0"));
        }
        if self.spacing == 0 || self.n_states == 0 {
            return Err(Error::invalid("spacing and n_states must be positive"));
        }
        if self.r == 0.0 {
            if let Some(i) = g.first_isolated() {
                return Err(Error::IsolatedNode(i));
            }
            if !g.is_connected() {
                return Err(Error::invalid(
                    "r = 0 on a disconnected graph gives a reducible walk",
                ));
            }
        }
        Ok(())
    }
}

/// Transition probabilities out of node `i`:
/// (1 + r/N)/(d_i + r) to each neighbour and r/(N(d_i + r)) to every other
/// node, the current one included.
pub fn trw_transition_row(g: &Graph, r: f64, i: usize) -> Result<Vec<f64>> {
    g.check_node(i)?;
    let d = g.degree(i) as f64;
    if r == 0.0 && d == 0.0 {
        return Err(Error::IsolatedNode(i));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::invalid("walk tuning constant r must be finite and >= 0"));
    }
    let n = g.n_nodes() as f64;
    let jump = r / ((d + r) * n);
    let mut row = vec![jump; g.n_nodes()];
    let edge = (1.0 + r / n) / (d + r);
    for &j in g.neighbours(i) {
        row[j] = edge;
    }
    Ok(row)
}

/// Stationary law of the walk, π_i = (d_i + r) / Σ_j (d_j + r).
pub fn trw_stationary(g: &Graph, r: f64) -> Vec<f64> {
    let total: f64 = (0..g.n_nodes()).map(|i| g.degree(i) as f64 + r).sum();
    (0..g.n_nodes())
        .map(|i| (g.degree(i) as f64 + r) / total)
        .collect()
}

fn trw_step<R: Rng>(g: &Graph, r: f64, i: usize, rng: &mut R) -> usize {
    // Edge move with prob d/(d + r), otherwise a uniform jump over all nodes;
    // this mixture has exactly the transition row above.
    let d = g.degree(i);
    let u: f64 = rng.random::<f64>() * (d as f64 + r);
    if u < d as f64 {
        g.neighbours(i)[(u as usize).min(d - 1)]
    } else {
        rng.random_range(0..g.n_nodes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkTrace {
    /// Extracted states O_{t_1}, ..., O_{t_n}.
    pub states: Vec<usize>,
    pub visit_counts: Vec<usize>,
    pub config: WalkConfig,
}

pub fn run_trw(g: &Graph, cfg: &WalkConfig, start: usize) -> Result<WalkTrace> {
    g.check_node(start)?;
    cfg.validate(g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut at = start;
    for _ in 0..cfg.burn_in {
        at = trw_step(g, cfg.r, at, &mut rng);
    }
    let mut states = Vec::with_capacity(cfg.n_states);
    let mut visit_counts = vec![0; g.n_nodes()];
    for _ in 0..cfg.n_states {
        for _ in 0..cfg.spacing {
            at = trw_step(g, cfg.r, at, &mut rng);
        }
        states.push(at);
        visit_counts[at] += 1;
    }
    Ok(WalkTrace {
        states,
        visit_counts,
        config: *cfg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquaredTest {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit of the trace's visit counts against the walk's
/// stationary law.
pub fn stationarity_test(g: &Graph, trace: &WalkTrace) -> Result<ChiSquaredTest> {
    let n = g.n_nodes();
    if n < 2 {
        return Err(Error::invalid("goodness-of-fit needs at least two nodes"));
    }
    let total = trace.states.len() as f64;
    let statistic = trw_stationary(g, trace.config.r)
        .iter()
        .zip(&trace.visit_counts)
        .map(|(&p, &c)| {
            let expected = p * total;
            (c as f64 - expected).powi(2) / expected
        })
        .sum();
    let df = n - 1;
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(ChiSquaredTest {
        statistic,
        degrees_of_freedom: df,
        p_value: dist.sf(statistic),
    })
}

/// Outcome of T-wave snowball sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleGraph {
    /// Seed sample s, sorted: the nodes whose neighbourhoods were observed.
    pub seed: Vec<usize>,
    /// s_0, ..., s_{T-1}; disjoint, union is `seed`. Shorter than T if
    /// sampling stopped early on an empty wave.
    pub waves: Vec<Vec<usize>>,
    /// U_s, sorted.
    pub sampled_nodes: Vec<usize>,
    /// Neighbourhood of each seed node, aligned with `seed`.
    pub observed_rows: Vec<Vec<usize>>,
    pub t_waves: usize,
}

impl SampleGraph {
    pub fn is_seed(&self, k: usize) -> bool {
        self.seed.binary_search(&k).is_ok()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.sampled_nodes.binary_search(&j).is_ok()
    }

    /// Position of `j` within `sampled_nodes`.
    pub fn position(&self, j: usize) -> Option<usize> {
        self.sampled_nodes.binary_search(&j).ok()
    }

    /// Observed neighbourhood ν_k of seed node `k`.
    pub fn observed_neighbours(&self, k: usize) -> Option<&[usize]> {
        self.seed
            .binary_search(&k)
            .ok()
            .map(|p| self.observed_rows[p].as_slice())
    }

    /// Values of `full` restricted to U_s, aligned with `sampled_nodes`.
    /// This is what the observation procedure reveals about node values.
    pub fn observe(&self, full: &[f64]) -> Vec<f64> {
        self.sampled_nodes.iter().map(|&j| full[j]).collect()
    }
}

/// T-wave snowball sampling from the initial sample `s0`.
pub fn run_sbs(g: &Graph, s0: &[usize], t_waves: usize) -> Result<SampleGraph> {
    if s0.is_empty() {
        return Err(Error::invalid("initial sample s0 is empty"));
    }
    if t_waves == 0 {
        return Err(Error::invalid("snowball sampling needs T >= 1 waves"));
    }
    for &i in s0 {
        g.check_node(i)?;
    }
    let n = g.n_nodes();
    let mut reached = vec![false; n];
    let mut wave: Vec<usize> = s0.to_vec();
    wave.sort_unstable();
    wave.dedup();
    for &i in &wave {
        reached[i] = true;
    }
    let mut waves = Vec::new();
    while !wave.is_empty() && waves.len() < t_waves {
        let mut next = Vec::new();
        for &i in &wave {
            for &j in g.neighbours(i) {
                if !reached[j] {
                    reached[j] = true;
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        waves.push(std::mem::replace(&mut wave, next));
    }
    let mut seed: Vec<usize> = waves.iter().flatten().copied().collect();
    seed.sort_unstable();
    let observed_rows = seed.iter().map(|&k| g.neighbours(k).to_vec()).collect();
    // `reached` now covers s plus the final (unexpanded) wave, which is U_s
    let sampled_nodes = (0..n).filter(|&j| reached[j]).collect();
    Ok(SampleGraph {
        seed,
        waves,
        sampled_nodes,
        observed_rows,
        t_waves,
    })
}

/// Simple random sample of `n` distinct nodes, sorted.
pub fn srs_nodes<R: Rng>(n_nodes: usize, n: usize, rng: &mut R) -> Vec<usize> {
    let mut s = index::sample(rng, n_nodes, n).into_vec();
    s.sort_unstable();
    s
}

/// SRS initial sample of fixed size followed by T-wave snowball sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SbsDesign {
    pub seed_size: usize,
    pub t_waves: usize,
}

impl SbsDesign {
    pub fn one_wave(seed_size: usize) -> Self {
        SbsDesign {
            seed_size,
            t_waves: 1,
        }
    }

    pub fn validate(&self, g: &Graph) -> Result<()> {
        if self.seed_size == 0 || self.seed_size > g.n_nodes() {
            return Err(Error::invalid(format!(
                "seed size {} outside 1..={}",
                self.seed_size,
                g.n_nodes()
            )));
        }
        if self.t_waves == 0 {
            return Err(Error::invalid("snowball sampling needs T >= 1 waves"));
        }
        Ok(())
    }

    pub fn draw<R: Rng>(&self, g: &Graph, rng: &mut R) -> Result<SampleGraph> {
        let s0 = srs_nodes(g.n_nodes(), self.seed_size, rng);
        run_sbs(g, &s0, self.t_waves)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMethod {
    ExactSrs1Wave,
    MonteCarlo { replications: usize },
}

/// Inclusion probabilities of a sampling design. A Monte-Carlo probability of
/// exactly zero marks a node that was never observed; its weight is unusable.
#[derive(Debug, Clone)]
pub struct InclusionWeights {
    /// π_k = Pr(k ∈ s)
    pub seed_prob: Vec<f64>,
    /// π̇_j = Pr(j ∈ U_s)
    pub node_prob: Vec<f64>,
    /// Pr(i ∈ s and j ∈ s); diagonal equals `seed_prob`.
    pub joint_seed_prob: Option<DMatrix<f64>>,
    /// Pr(i ∈ U_s and j ∈ U_s); diagonal equals `node_prob`.
    pub joint_node_prob: Option<DMatrix<f64>>,
    pub method: WeightMethod,
}

impl InclusionWeights {
    /// Design weight 1/π_k of a seed node.
    pub fn seed_weight(&self, k: usize) -> Result<f64> {
        inverse(self.seed_prob[k], k)
    }

    /// Design weight 1/π̇_j of a sample-graph node.
    pub fn node_weight(&self, j: usize) -> Result<f64> {
        inverse(self.node_prob[j], j)
    }

    /// Nodes whose Monte-Carlo probability is zero.
    pub fn unusable(&self) -> Vec<usize> {
        (0..self.seed_prob.len())
            .filter(|&i| self.seed_prob[i] == 0.0 || self.node_prob[i] == 0.0)
            .collect()
    }

    /// Binomial standard error of a Monte-Carlo probability estimate.
    pub fn standard_error(&self, p: f64) -> Option<f64> {
        match self.method {
            WeightMethod::MonteCarlo { replications } => {
                Some((p * (1.0 - p) / replications as f64).sqrt())
            }
            WeightMethod::ExactSrs1Wave => None,
        }
    }
}

fn inverse(p: f64, node: usize) -> Result<f64> {
    if p > 0.0 {
        Ok(1.0 / p)
    } else {
        Err(Error::UnusableWeight(node))
    }
}

/// C(N − k, n) / C(N, n): probability that an SRS of size n misses a fixed
/// set of k nodes.
fn miss_probability(n_nodes: usize, n: usize, k: usize) -> f64 {
    if k + n > n_nodes {
        return 0.0;
    }
    (0..n)
        .map(|i| (n_nodes - k - i) as f64 / (n_nodes - i) as f64)
        .product()
}

fn closed_set(g: &Graph, i: usize) -> Vec<usize> {
    let mut f = g.neighbours(i).to_vec();
    let pos = f.binary_search(&i).unwrap_err();
    f.insert(pos, i);
    f
}

fn union_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut both) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                both += 1;
                i += 1;
                j += 1;
            }
        }
    }
    a.len() + b.len() - both
}

/// Exact inclusion probabilities for 1-wave snowball sampling from an SRS
/// of size `n`.
///
/// j ∈ U_s exactly when s hits F_j = ν_j ∪ {j}, so
/// π̇_j = 1 − C(N − d_j − 1, n) / C(N, n).
pub fn srs_inclusion_weights(g: &Graph, n: usize, t_waves: usize) -> Result<InclusionWeights> {
    let big_n = g.n_nodes();
    if n == 0 || n > big_n {
        return Err(Error::invalid(format!("seed size {n} outside 1..={big_n}")));
    }
    if t_waves != 1 {
        return Err(Error::invalid(
            "closed-form weights exist for 1-wave SBS only; use Monte-Carlo weights",
        ));
    }
    let pi = n as f64 / big_n as f64;
    let pair = if big_n > 1 {
        (n * (n - 1)) as f64 / (big_n * (big_n - 1)) as f64
    } else {
        pi
    };
    let sets: Vec<Vec<usize>> = (0..big_n).map(|i| closed_set(g, i)).collect();
    let miss: Vec<f64> = sets
        .iter()
        .map(|f| miss_probability(big_n, n, f.len()))
        .collect();
    let node_prob: Vec<f64> = miss.iter().map(|q| 1.0 - q).collect();

    let joint_seed = DMatrix::from_fn(big_n, big_n, |i, j| if i == j { pi } else { pair });
    let joint_node = DMatrix::from_fn(big_n, big_n, |i, j| {
        if i == j {
            node_prob[i]
        } else {
            let q_ij = miss_probability(big_n, n, union_size(&sets[i], &sets[j]));
            1.0 - miss[i] - miss[j] + q_ij
        }
    });
    Ok(InclusionWeights {
        seed_prob: vec![pi; big_n],
        node_prob,
        joint_seed_prob: Some(joint_seed),
        joint_node_prob: Some(joint_node),
        method: WeightMethod::ExactSrs1Wave,
    })
}

#[derive(Clone)]
struct InclusionTally {
    seed: Vec<u64>,
    node: Vec<u64>,
    joint_seed: DMatrix<u64>,
}

impl InclusionTally {
    fn new(n: usize) -> Self {
        InclusionTally {
            seed: vec![0; n],
            node: vec![0; n],
            joint_seed: DMatrix::zeros(n, n),
        }
    }

    fn add(&mut self, sg: &SampleGraph) {
        for &k in &sg.seed {
            self.seed[k] += 1;
            for &l in &sg.seed {
                self.joint_seed[(k, l)] += 1;
            }
        }
        for &j in &sg.sampled_nodes {
            self.node[j] += 1;
        }
    }

    fn merge(mut self, other: InclusionTally) -> Self {
        for (a, b) in self.seed.iter_mut().zip(other.seed) {
            *a += b;
        }
        for (a, b) in self.node.iter_mut().zip(other.node) {
            *a += b;
        }
        self.joint_seed += other.joint_seed;
        self
    }
}

/// Inclusion frequencies over `replications` independent draws of `design`.
/// Seed joint frequencies are tallied as well; U_s joints are not.
pub fn monte_carlo_inclusion_weights(
    g: &Graph,
    design: SbsDesign,
    replications: usize,
    rng_seed: u64,
) -> Result<InclusionWeights> {
    design.validate(g)?;
    if replications < 1000 {
        return Err(Error::invalid(format!(
            "Monte-Carlo weights need at least 1000 replications, got {replications}"
        )));
    }
    let n = g.n_nodes();
    let tally = (0..replications)
        .into_par_iter()
        .try_fold(
            || InclusionTally::new(n),
            |mut t, r| {
                let sg = design.draw(g, &mut replicate_rng(rng_seed, r as u64))?;
                t.add(&sg);
                Ok::<_, Error>(t)
            },
        )
        .try_reduce(|| InclusionTally::new(n), |a, b| Ok(a.merge(b)))?;
    let total = replications as f64;
    Ok(InclusionWeights {
        seed_prob: tally.seed.iter().map(|&c| c as f64 / total).collect(),
        node_prob: tally.node.iter().map(|&c| c as f64 / total).collect(),
        joint_seed_prob: Some(tally.joint_seed.map(|c| c as f64 / total)),
        joint_node_prob: None,
        method: WeightMethod::MonteCarlo { replications },
    })
}
