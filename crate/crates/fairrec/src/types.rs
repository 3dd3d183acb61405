//! Shared domain types: relevance matrices, validated problem instances,
//! allocations, exposure policies and exposure counts.
//!
//! All types are immutable after construction, so they can be shared freely
//! across concurrent experiment runs.

use thiserror::Error;

/// Errors raised while constructing or validating instance data.
#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    /// The recommendation size must be strictly smaller than the catalogue.
    #[error("recommendation size k={k} must be strictly less than the number of products n={n}")]
    KTooLarge { k: usize, n: usize },
    /// With fewer than n/k customers some products could never be allocated.
    #[error("n={n} products cannot all be exposed with m={m} customers and k={k} slots (requires n <= m*k = {})", m * k)]
    TooFewCustomers { m: usize, n: usize, k: usize },
    /// Relevance scores must be finite and nonnegative.
    #[error("relevance score at customer {customer}, product {product} is invalid: {value}")]
    BadValue {
        customer: usize,
        product: usize,
        value: f64,
    },
    #[error("matrix dimensions {m}x{n} do not match {len} values")]
    DimensionMismatch { m: usize, n: usize, len: usize },
    #[error("matrix must have at least one customer and one product")]
    EmptyMatrix,
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("per-producer alpha vector has {got} entries, expected {expected}")]
    AlphaLengthMismatch { expected: usize, got: usize },
    #[error("product id {id} is out of range for n={n}")]
    IdOutOfRange { id: usize, n: usize },
}

/// Dense m x n matrix of nonnegative relevance scores, row per customer.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMatrix {
    m: usize,
    n: usize,
    values: Vec<f64>,
}

impl RelevanceMatrix {
    /// Builds a matrix from row-major values, rejecting negative or
    /// non-finite entries.
    pub fn new(m: usize, n: usize, values: Vec<f64>) -> Result<Self, InstanceError> {
        if m == 0 || n == 0 {
            return Err(InstanceError::EmptyMatrix);
        }
        if values.len() != m * n {
            return Err(InstanceError::DimensionMismatch {
                m,
                n,
                len: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(InstanceError::BadValue {
                    customer: i / n,
                    product: i % n,
                    value: v,
                });
            }
        }
        Ok(Self { m, n, values })
    }

    /// Number of customers.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of products.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Relevance of product `p` to customer `u`.
    #[inline]
    pub fn value(&self, u: usize, p: usize) -> f64 {
        self.values[u * self.n + p]
    }

    /// Relevance row of customer `u`.
    #[inline]
    pub fn row(&self, u: usize) -> &[f64] {
        &self.values[u * self.n..(u + 1) * self.n]
    }

    /// Row-major view of all values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A validated problem instance: relevance data plus recommendation size,
/// with the feasibility regime `k < n <= m*k` enforced.
#[derive(Debug, Clone)]
pub struct Instance {
    rel: RelevanceMatrix,
    k: usize,
}

impl Instance {
    pub fn rel(&self) -> &RelevanceMatrix {
        &self.rel
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.rel.m()
    }

    pub fn n(&self) -> usize {
        self.rel.n()
    }
}

/// Checks the feasibility regime and wraps the data into an [`Instance`].
///
/// Accepts exactly the dimension triples with `k < n <= m*k`.
pub fn validate_instance(rel: RelevanceMatrix, k: usize) -> Result<Instance, InstanceError> {
    let (m, n) = (rel.m(), rel.n());
    if k >= n {
        return Err(InstanceError::KTooLarge { k, n });
    }
    if n > m * k {
        return Err(InstanceError::TooFewCustomers { m, n, k });
    }
    Ok(Instance { rel, k })
}

/// Per-customer sets of recommended product ids.
///
/// Bundles are sets, so ids within a bundle are distinct by construction.
/// Partial allocations (bundles smaller than k) occur mid-algorithm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    bundles: Vec<std::collections::BTreeSet<usize>>,
}

impl Allocation {
    pub fn new(bundles: Vec<std::collections::BTreeSet<usize>>) -> Self {
        Self { bundles }
    }

    /// An allocation of `m` empty bundles.
    pub fn empty(m: usize) -> Self {
        Self {
            bundles: vec![std::collections::BTreeSet::new(); m],
        }
    }

    pub fn bundles(&self) -> &[std::collections::BTreeSet<usize>] {
        &self.bundles
    }

    pub fn bundle(&self, u: usize) -> &std::collections::BTreeSet<usize> {
        &self.bundles[u]
    }

    /// Number of customers.
    pub fn m(&self) -> usize {
        self.bundles.len()
    }

    /// Merges another allocation into this one, customer by customer.
    pub(crate) fn union_with(&mut self, other: &Allocation) {
        assert_eq!(self.bundles.len(), other.bundles.len());
        for (mine, theirs) in self.bundles.iter_mut().zip(other.bundles.iter()) {
            mine.extend(theirs.iter().copied());
        }
    }

    pub fn into_bundles(self) -> Vec<std::collections::BTreeSet<usize>> {
        self.bundles
    }
}

/// Exposure guarantee level: a single `alpha` for every producer or an
/// individual `alpha_p` per producer, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExposurePolicy {
    Global(f64),
    PerProducer(Vec<f64>),
}

impl ExposurePolicy {
    /// Validates a global alpha.
    pub fn global(alpha: f64) -> Result<Self, InstanceError> {
        if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(InstanceError::AlphaOutOfRange(alpha));
        }
        Ok(ExposurePolicy::Global(alpha))
    }

    /// Validates a per-producer alpha vector of length `n`.
    pub fn per_producer(alphas: Vec<f64>, n: usize) -> Result<Self, InstanceError> {
        if alphas.len() != n {
            return Err(InstanceError::AlphaLengthMismatch {
                expected: n,
                got: alphas.len(),
            });
        }
        for &a in &alphas {
            if !(0.0..=1.0).contains(&a) || !a.is_finite() {
                return Err(InstanceError::AlphaOutOfRange(a));
            }
        }
        Ok(ExposurePolicy::PerProducer(alphas))
    }
}

/// Exposure counts per product: how many customers were recommended each one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposureVector {
    counts: Vec<usize>,
}

impl ExposureVector {
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    /// Total number of allocated item slots.
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

impl From<Vec<usize>> for ExposureVector {
    fn from(counts: Vec<usize>) -> Self {
        Self { counts }
    }
}

/// Counts, for each of `n` products, the number of bundles containing it.
pub fn exposures_of(alloc: &Allocation, n: usize) -> Result<ExposureVector, InstanceError> {
    let mut counts = vec![0usize; n];
    for bundle in alloc.bundles() {
        for &p in bundle {
            if p >= n {
                return Err(InstanceError::IdOutOfRange { id: p, n });
            }
            counts[p] += 1;
        }
    }
    Ok(ExposureVector { counts })
}

/// Ids of the `k` largest entries of `row` (ties broken toward the lower id),
/// returned in ascending id order.
///
/// Shared by the top-k baseline and the normalized-utility denominator so the
/// two always select, and sum, the same products in the same order.
pub fn top_k_indices(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_unstable_by(|&a, &b| {
        row[b]
            .partial_cmp(&row[a])
            .expect("relevance values are finite")
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn matrix(m: usize, n: usize, v: f64) -> RelevanceMatrix {
        RelevanceMatrix::new(m, n, vec![v; m * n]).unwrap()
    }

    #[test]
    fn validate_accepts_regime() {
        let inst = validate_instance(matrix(2, 4, 1.0), 2).unwrap();
        assert_eq!((inst.m(), inst.n(), inst.k()), (2, 4, 2));
    }

    #[test]
    fn validate_rejects_k_equal_n() {
        let err = validate_instance(matrix(2, 3, 1.0), 3).unwrap_err();
        assert_eq!(err, InstanceError::KTooLarge { k: 3, n: 3 });
    }

    #[test]
    fn validate_rejects_too_few_customers() {
        let err = validate_instance(matrix(1, 5, 1.0), 2).unwrap_err();
        assert_eq!(err, InstanceError::TooFewCustomers { m: 1, n: 5, k: 2 });
    }

    #[test]
    fn matrix_rejects_negative_and_non_finite() {
        let err = RelevanceMatrix::new(1, 2, vec![1.0, -0.5]).unwrap_err();
        assert_eq!(
            err,
            InstanceError::BadValue {
                customer: 0,
                product: 1,
                value: -0.5
            }
        );
        assert!(RelevanceMatrix::new(1, 2, vec![f64::NAN, 0.0]).is_err());
        assert!(RelevanceMatrix::new(1, 2, vec![f64::INFINITY, 0.0]).is_err());
    }

    /// The acceptance region of validate_instance is exactly {k < n <= m*k};
    /// small dimensions are checked exhaustively.
    #[test]
    fn validate_region_exhaustive() {
        for m in 1..=12usize {
            for n in 1..=12usize {
                for k in 1..=12usize {
                    let ok = validate_instance(matrix(m, n, 1.0), k).is_ok();
                    assert_eq!(ok, k < n && n <= m * k, "m={m} n={n} k={k}");
                }
            }
        }
    }

    #[test]
    fn exposures_counts_memberships() {
        let alloc = Allocation::new(vec![
            BTreeSet::from([0, 1]),
            BTreeSet::from([1, 2]),
        ]);
        let e = exposures_of(&alloc, 3).unwrap();
        assert_eq!(e.counts(), &[1, 2, 1]);
        assert_eq!(e.total(), 4);
    }

    #[test]
    fn exposures_empty_and_single() {
        let empty = Allocation::empty(2);
        assert_eq!(exposures_of(&empty, 2).unwrap().counts(), &[0, 0]);

        let alloc = Allocation::new(vec![
            BTreeSet::from([0]),
            BTreeSet::from([0]),
            BTreeSet::from([0]),
        ]);
        assert_eq!(exposures_of(&alloc, 1).unwrap().counts(), &[3]);
    }

    #[test]
    fn exposures_rejects_out_of_range() {
        let alloc = Allocation::new(vec![BTreeSet::from([5])]);
        assert_eq!(
            exposures_of(&alloc, 3).unwrap_err(),
            InstanceError::IdOutOfRange { id: 5, n: 3 }
        );
    }

    #[test]
    fn top_k_indices_breaks_ties_low() {
        assert_eq!(top_k_indices(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
        assert_eq!(top_k_indices(&[3.0, 2.0, 1.0], 2), vec![0, 1]);
        assert_eq!(top_k_indices(&[1.0, 2.0, 3.0], 2), vec![1, 2]);
    }
}
