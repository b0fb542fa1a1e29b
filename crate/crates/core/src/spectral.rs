//! Eigen-decomposition of the normalized Laplacian and the P_λ operators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::{normalized_laplacian, Graph, NodeValues};

/// Eigenvalues at or below this are treated as zero when locating λ₀.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-12;

/// Full eigen-decomposition of a symmetric matrix, eigenvalues ascending.
///
/// Each eigenvector is signed so that its entry of largest magnitude is
/// positive.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: DVector<f64>,
    /// Column `k` pairs with `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
    /// Index of the smallest eigenvalue above [`ZERO_EIGENVALUE_TOL`], if any.
    pub fiedler_index: Option<usize>,
}

impl EigenSystem {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid("eigensystem needs a square matrix"));
        }
        let asym = max_asymmetry(matrix);
        if asym > SYMMETRY_TOL * matrix.amax().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        let n = matrix.nrows();
        let eig = SymmetricEigen::new(matrix.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(src).into_owned();
            if v[v.iamax()] < 0.0 {
                v.neg_mut();
            }
            eigenvectors.set_column(dst, &v);
        }
        let fiedler_index = eigenvalues.iter().position(|&l| l > ZERO_EIGENVALUE_TOL);
        Ok(EigenSystem {
            eigenvalues,
            eigenvectors,
            fiedler_index,
        })
    }

    /// Decomposition of the normalized Laplacian of `g`.
    pub fn of_graph(g: &Graph) -> Result<Self> {
        EigenSystem::new(&normalized_laplacian(g)?)
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of eigenvalues at or below the zero tolerance; for a Laplacian
    /// this counts connected components.
    pub fn zero_count(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|&&l| l <= ZERO_EIGENVALUE_TOL)
            .count()
    }

    /// λ₀, the smallest non-zero eigenvalue.
    pub fn fiedler_value(&self) -> Option<f64> {
        self.fiedler_index.map(|k| self.eigenvalues[k])
    }

    /// z₀, the eigenvector paired with λ₀.
    pub fn fiedler_vector(&self) -> Option<NodeValues> {
        self.fiedler_index
            .map(|k| self.eigenvectors.column(k).into_owned())
    }

    /// Rank of eigenvector `k` when eigenvectors are ordered by decreasing
    /// eigenvalue (rank 1 is the largest eigenvalue).
    pub fn rank_of(&self, k: usize) -> usize {
        self.len() - k
    }

    pub fn index_of_rank(&self, rank: usize) -> usize {
        self.len() - rank
    }
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn correlation(a: &DVector<f64>, b: &DVector<f64>) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let scale = (saa * sbb).sqrt();
    // relative to the data magnitude, so float noise in a constant vector
    // still counts as constant
    let tiny = |s: f64, m: f64| s <= 1e-24 * n * (1.0 + m * m);
    if tiny(saa, ma) || tiny(sbb, mb) || scale == 0.0 {
        None
    } else {
        Some(sab / scale)
    }
}

/// Finds the eigenvector with the largest |correlation| with `x`.
///
/// Returns its rank (1 = largest eigenvalue) and the signed correlation.
/// Eigenvectors that are themselves constant are skipped.
pub fn best_correlated_eigenvector(x: &NodeValues, es: &EigenSystem) -> Result<(usize, f64)> {
    if x.len() != es.len() {
        return Err(Error::DimensionMismatch {
            expected: es.len(),
            actual: x.len(),
        });
    }
    if correlation(x, x).is_none() {
        return Err(Error::ConstantVector);
    }
    let mut best: Option<(usize, f64)> = None;
    for k in 0..es.len() {
        let v = es.eigenvectors.column(k).into_owned();
        if let Some(c) = correlation(x, &v) {
            if best.is_none_or(|(_, b)| c.abs() > b.abs()) {
                best = Some((k, c));
            }
        }
    }
    best.map(|(k, c)| (es.rank_of(k), c))
        .ok_or(Error::ConstantVector)
}

/// Which normalized adjacency the P_λ operator is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// P_λ(M) = (1 − λ) I − M
    Plain,
    /// P_λ(M̃) = Diag(1 − λ d_i / (1 + d_i)) − M̃
    Looped,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Variant::Plain),
            "looped" => Ok(Variant::Looped),
            other => Err(Error::invalid(format!(
                "unknown variant `{other}` (expected plain or looped)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Plain => "plain",
            Variant::Looped => "looped",
        })
    }
}

/// Entry p_kj of P_λ, computed from degrees alone. Only nodes `j` in the
/// looped neighbourhood of `k` can be non-zero, so this is all a sampler
/// that observed row `k` needs.
pub fn p_entry(g: &Graph, variant: Variant, lambda: f64, k: usize, j: usize) -> f64 {
    let dk = g.degree(k) as f64;
    let dj = g.degree(j) as f64;
    match variant {
        Variant::Plain => {
            if k == j {
                1.0 - lambda
            } else if g.has_edge(k, j) {
                -1.0 / (dk * dj).sqrt()
            } else {
                0.0
            }
        }
        Variant::Looped => {
            if k == j {
                1.0 - lambda * dk / (1.0 + dk) - 1.0 / (1.0 + dk)
            } else if g.has_edge(k, j) {
                -1.0 / ((1.0 + dk) * (1.0 + dj)).sqrt()
            } else {
                0.0
            }
        }
    }
}

/// Dense P_λ operator with its looped neighbourhoods τ̃_i = { j : p_ij ≠ 0 }.
#[derive(Debug, Clone)]
pub struct PLambda {
    pub variant: Variant,
    pub lambda: f64,
    pub matrix: DMatrix<f64>,
    pub looped_neighbourhoods: Vec<Vec<usize>>,
}

impl PLambda {
    pub fn new(g: &Graph, lambda: f64, variant: Variant) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite"));
        }
        if variant == Variant::Plain {
            if let Some(i) = g.first_isolated() {
                return Err(Error::IsolatedNode(i));
            }
        }
        let n = g.n_nodes();
        let mut matrix = DMatrix::zeros(n, n);
        let mut looped_neighbourhoods = Vec::with_capacity(n);
        for k in 0..n {
            let diag = p_entry(g, variant, lambda, k, k);
            matrix[(k, k)] = diag;
            let mut row = Vec::with_capacity(g.degree(k) + 1);
            let mut pushed_self = diag == 0.0;
            for &j in g.neighbours(k) {
                if !pushed_self && j > k {
                    row.push(k);
                    pushed_self = true;
                }
                matrix[(k, j)] = p_entry(g, variant, lambda, k, j);
                row.push(j);
            }
            if !pushed_self {
                row.push(k);
            }
            looped_neighbourhoods.push(row);
        }
        Ok(PLambda {
            variant,
            lambda,
            matrix,
            looped_neighbourhoods,
        })
    }

    /// P'P, the quadratic form of the embedding penalty.
    pub fn gram(&self) -> DMatrix<f64> {
        self.matrix.transpose() * &self.matrix
    }
}
