//! Normalization, Gram-system pseudoinverse solves and the alignment
//! projections on flat vectors.
//!
//! All routines are pure. The pseudoinverse `U^+ b` of an `m x d` alignment
//! matrix is evaluated as `U^T (U U^T)^+ b` so that the only dense
//! factorization is of the `m x m` Gram matrix; forming it costs `O(d m^2)`.

mod eigen;

pub use eigen::SymmetricEigen;

use crate::error::{Error, Result};
use crate::scalar::{all_finite, dot, norm, Scalar};

/// Default stabilizer in [`normalize`].
pub const DEFAULT_EPS: f64 = 1e-8;
/// Default relative eigenvalue cutoff for [`gram_solve`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const REFINEMENT_STEPS: usize = 2;

/// `v / (||v|| + eps)`; the zero vector maps to itself.
pub fn normalize<T: Scalar>(v: &[T], eps: T) -> Result<Vec<T>> {
    if !(eps > T::zero()) {
        return Err(Error::invalid("normalization stabilizer must be positive"));
    }
    if !all_finite(v) {
        return Err(Error::invalid("cannot normalize a vector with non-finite components"));
    }
    let n = norm(v);
    if n == T::zero() {
        return Ok(vec![T::zero(); v.len()]);
    }
    let scale = n + eps;
    Ok(v.iter().map(|&x| x / scale).collect())
}

/// Row-major `m x d` matrix whose rows are normalized client directions.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix<T> {
    data: Vec<T>,
    rows: usize,
    dim: usize,
}

impl<T: Scalar> AlignmentMatrix<T> {
    /// Wrap rows that are already normalized. Each row must have a norm in
    /// `(0, 1]` (up to a few ulps).
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::invalid("alignment matrix needs at least one row"));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::invalid("alignment matrix rows must be non-empty"));
        }
        let slack = T::one() + T::epsilon() * T::lit(16.0);
        let mut data = Vec::with_capacity(m * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::mismatch(format!("alignment row {i}"), dim, row.len()));
            }
            if !all_finite(&row) {
                return Err(Error::invalid(format!("alignment row {i} is not finite")));
            }
            let n = norm(&row);
            if n == T::zero() || n > slack {
                return Err(Error::invalid(format!(
                    "alignment row {i} has norm {n}, expected a value in (0, 1]"
                )));
            }
            data.extend(row);
        }
        Ok(Self { data, rows: m, dim })
    }

    /// Build the matrix by normalizing raw updates with stabilizer `eps`.
    pub fn from_updates<V: AsRef<[T]>>(updates: &[V], eps: T) -> Result<Self> {
        let rows = updates
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let u = u.as_ref();
                if u.iter().all(|x| *x == T::zero()) {
                    return Err(Error::invalid(format!("update {i} is the zero vector")));
                }
                normalize(u, eps)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `U x`
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `U^T y`
    pub fn apply_transpose(&self, y: &[T]) -> Vec<T> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![T::zero(); self.dim];
        for (i, &yi) in y.iter().enumerate() {
            for (o, &u) in out.iter_mut().zip(self.row(i)) {
                *o += yi * u;
            }
        }
        out
    }

    /// Row-major `U U^T`.
    pub fn gram(&self) -> Vec<T> {
        let m = self.rows;
        let mut g = vec![T::zero(); m * m];
        for i in 0..m {
            for j in i..m {
                let v = dot(self.row(i), self.row(j));
                g[i * m + j] = v;
                g[j * m + i] = v;
            }
        }
        g
    }
}

/// Strictly positive per-row alignment targets.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentTarget<T> {
    values: Vec<T>,
}

impl<T: Scalar> AlignmentTarget<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("alignment target is empty"));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > T::zero())) {
            return Err(Error::invalid(format!(
                "alignment target entry {i} must be finite and positive"
            )));
        }
        Ok(Self { values })
    }

    /// Targets proportional to `weights`, summing to one.
    pub fn from_weights(weights: &[T]) -> Result<Self> {
        let total: T = weights.iter().copied().sum();
        Self::new(weights.iter().map(|&w| w / total).collect())
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Minimum-norm least-squares solution of `(U U^T) y = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSolution<T> {
    pub y: Vec<T>,
    pub rank: usize,
}

/// Truncated eigendecomposition of a Gram matrix, reusable across solves.
#[derive(Debug, Clone)]
struct GramFactor<T> {
    eigen: SymmetricEigen<T>,
    keep: Vec<bool>,
    rank: usize,
}

impl<T: Scalar> GramFactor<T> {
    fn new(u: &AlignmentMatrix<T>, rank_tol: T) -> Result<Self> {
        if !(rank_tol > T::zero()) {
            return Err(Error::invalid("rank tolerance must be positive"));
        }
        let eigen = SymmetricEigen::new(u.gram(), u.rows())?;
        let largest = eigen.values.iter().copied().fold(T::zero(), T::max);
        let cutoff = rank_tol * largest;
        let keep: Vec<bool> = eigen
            .values
            .iter()
            .map(|&l| largest > T::zero() && l > cutoff)
            .collect();
        let rank = keep.iter().filter(|k| **k).count();
        Ok(Self { eigen, keep, rank })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.eigen.n;
        let mut y = vec![T::zero(); n];
        for k in 0..n {
            if !self.keep[k] {
                continue;
            }
            let coeff = self.eigen.vector(k).zip(b).map(|(v, &bi)| v * bi).sum::<T>() / self.eigen.values[k];
            for (yi, v) in y.iter_mut().zip(self.eigen.vector(k)) {
                *yi += coeff * v;
            }
        }
        y
    }
}

/// Solve `(U U^T) y = b` in the minimum-norm least-squares sense, discarding
/// Gram eigenvalues below `rank_tol` times the largest.
pub fn gram_solve<T: Scalar>(u: &AlignmentMatrix<T>, b: &[T], rank_tol: T) -> Result<GramSolution<T>> {
    if b.len() != u.rows() {
        return Err(Error::mismatch("gram_solve right-hand side", u.rows(), b.len()));
    }
    if !all_finite(b) {
        return Err(Error::invalid("gram_solve right-hand side is not finite"));
    }
    let factor = GramFactor::new(u, rank_tol)?;
    Ok(GramSolution {
        y: factor.solve(b),
        rank: factor.rank,
    })
}

/// Output of a projection: `direction = reference + correction`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult<T> {
    pub direction: Vec<T>,
    pub correction: Vec<T>,
    /// `U direction - rho`
    pub residual: Vec<T>,
    pub gram_rank: usize,
}

impl<T: Scalar> ProjectionResult<T> {
    pub fn residual_norm(&self) -> T {
        norm(&self.residual)
    }

    pub fn is_full_rank(&self) -> bool {
        self.gram_rank == self.residual.len()
    }
}

/// Closest direction to `reference` satisfying `U g = rho`:
/// `g = reference + U^+ (rho - U reference)`.
///
/// Inconsistent or rank-deficient systems return the least-squares solution;
/// the leftover violation is reported in [`ProjectionResult::residual`].
pub fn craft_correct<T: Scalar>(
    u: &AlignmentMatrix<T>,
    rho: &AlignmentTarget<T>,
    reference: &[T],
    rank_tol: T,
) -> Result<ProjectionResult<T>> {
    if reference.len() != u.dim() {
        return Err(Error::mismatch("reference direction", u.dim(), reference.len()));
    }
    if rho.len() != u.rows() {
        return Err(Error::mismatch("alignment target", u.rows(), rho.len()));
    }
    if !all_finite(reference) {
        return Err(Error::invalid("reference direction is not finite"));
    }
    let factor = GramFactor::new(u, rank_tol)?;
    let rhs: Vec<T> = rho
        .values()
        .iter()
        .zip(u.apply(reference))
        .map(|(&r, a)| r - a)
        .collect();
    let mut correction = u.apply_transpose(&factor.solve(&rhs));
    // Forming U U^T squares the conditioning; recover accuracy by refining
    // against the residual of U itself. A no-op in exact arithmetic.
    for _ in 0..REFINEMENT_STEPS {
        let r: Vec<T> = rhs.iter().zip(u.apply(&correction)).map(|(&b, a)| b - a).collect();
        let step = u.apply_transpose(&factor.solve(&r));
        correction.iter_mut().zip(&step).for_each(|(c, &s)| *c += s);
    }
    let direction: Vec<T> = reference.iter().zip(&correction).map(|(&r, &c)| r + c).collect();
    let residual = u
        .apply(&direction)
        .into_iter()
        .zip(rho.values())
        .map(|(a, &r)| a - r)
        .collect();
    Ok(ProjectionResult {
        direction,
        correction,
        residual,
        gram_rank: factor.rank,
    })
}

/// Minimum-norm direction satisfying `U g = rho` (zero reference).
pub fn config_direction<T: Scalar>(
    u: &AlignmentMatrix<T>,
    rho: &AlignmentTarget<T>,
    rank_tol: T,
) -> Result<ProjectionResult<T>> {
    craft_correct(u, rho, &vec![T::zero(); u.dim()], rank_tol)
}
