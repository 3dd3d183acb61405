//! Producer- and customer-side evaluation metrics, normalized customer
//! utility, and the fairness verifiers used by the acceptance checks.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

use crate::types::{top_k_indices, Allocation, ExposureVector, RelevanceMatrix};

/// Float tolerance absorbing summation-order noise in fairness verifiers.
pub const FAIRNESS_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("bundle has {got} items, expected exactly {expected}")]
    BadBundleSize { expected: usize, got: usize },
    #[error("entropy base must be at least 2, got n={0}")]
    DegenerateBase(usize),
}

/// All producer-side and customer-side metric values for one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Fraction of producers meeting their exposure threshold.
    pub h: f64,
    /// Entropy-like exposure equality measure in [0, 1].
    pub z: f64,
    /// Mean exposure loss relative to the top-k reference.
    pub l: f64,
    /// Mean average envy between customers.
    pub y: f64,
    /// Mean normalized customer utility.
    pub mu_phi: f64,
    /// Population standard deviation of normalized customer utilities.
    pub std_phi: f64,
    /// Whether the allocation is envy-free up to one item.
    pub ef1: bool,
    /// Fraction of producers at or above their scaled maximin share.
    pub alpha_mms_fraction: f64,
}

/// Sum of a viewer's relevance over a bundle, in ascending product-id order.
pub(crate) fn bundle_value(rel: &RelevanceMatrix, viewer: usize, bundle: &BTreeSet<usize>) -> f64 {
    bundle.iter().map(|&p| rel.value(viewer, p)).sum()
}

/// Sum of a customer's `k` largest relevance scores, selected and summed in
/// the same order as the top-k baseline builds its bundles.
fn best_k_value(rel: &RelevanceMatrix, u: usize, k: usize) -> f64 {
    top_k_indices(rel.row(u), k)
        .into_iter()
        .map(|p| rel.value(u, p))
        .sum()
}

/// Normalized utility of an arbitrary bundle for customer `u`: bundle value
/// divided by the value of `u`'s best possible k-set. A zero denominator
/// counts as full utility.
fn phi(rel: &RelevanceMatrix, u: usize, bundle: &BTreeSet<usize>, k: usize) -> f64 {
    let denominator = best_k_value(rel, u, k);
    if denominator == 0.0 {
        return 1.0;
    }
    bundle_value(rel, u, bundle) / denominator
}

/// Normalized customer utility of a complete k-sized bundle.
pub fn customer_utility(
    rel: &RelevanceMatrix,
    u: usize,
    bundle: &BTreeSet<usize>,
    k: usize,
) -> Result<f64, MetricsError> {
    if bundle.len() != k {
        return Err(MetricsError::BadBundleSize {
            expected: k,
            got: bundle.len(),
        });
    }
    Ok(phi(rel, u, bundle, k))
}

/// Scaled maximin-share exposure threshold `floor(alpha * m * k / n)`,
/// computed with exact rational arithmetic on the stored value of `alpha`.
pub fn mms_threshold(m: usize, n: usize, k: usize, alpha: f64) -> usize {
    assert!(
        (0.0..=1.0).contains(&alpha),
        "alpha must lie in [0, 1], got {alpha}"
    );
    if alpha == 1.0 {
        return m * k / n;
    }
    let ratio = BigRational::from_float(alpha).expect("alpha is finite")
        * BigInt::from(m)
        * BigInt::from(k)
        / BigInt::from(n);
    usize::try_from(ratio.floor().to_integer()).expect("threshold fits in usize")
}

/// Fraction of producers whose exposure meets their threshold.
pub fn metric_h(exposures: &ExposureVector, thresholds: &[usize]) -> f64 {
    assert_eq!(exposures.n(), thresholds.len());
    if exposures.n() == 0 {
        return 1.0;
    }
    let satisfied = exposures
        .counts()
        .iter()
        .zip(thresholds)
        .filter(|(&e, &t)| e >= t)
        .count();
    satisfied as f64 / exposures.n() as f64
}

/// Entropy-like equality measure of producer exposures, base-n logarithm;
/// 1 at perfectly uniform exposure, 0 when one producer holds everything.
pub fn metric_z(
    exposures: &ExposureVector,
    m: usize,
    n: usize,
    k: usize,
) -> Result<f64, MetricsError> {
    if n < 2 {
        return Err(MetricsError::DegenerateBase(n));
    }
    let total = (m * k) as f64;
    let log_n = (n as f64).ln();
    let mut z = 0.0;
    for &e in exposures.counts() {
        if e > 0 {
            let share = e as f64 / total;
            z -= share * (share.ln() / log_n);
        }
    }
    Ok(z)
}

/// Mean fraction of exposure lost per producer relative to a top-k
/// reference run; producers the reference never exposed contribute nothing.
pub fn metric_l(exposures: &ExposureVector, topk_exposures: &ExposureVector) -> f64 {
    assert_eq!(exposures.n(), topk_exposures.n());
    let n = exposures.n();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = exposures
        .counts()
        .iter()
        .zip(topk_exposures.counts())
        .map(|(&e, &reference)| {
            if reference == 0 {
                0.0
            } else {
                ((reference as f64 - e as f64) / reference as f64).max(0.0)
            }
        })
        .sum();
    sum / n as f64
}

/// Mean average envy: how much extra normalized utility customers would
/// gain on average from receiving another customer's bundle.
pub fn metric_y(rel: &RelevanceMatrix, alloc: &Allocation, k: usize) -> f64 {
    let m = alloc.m();
    if m <= 1 {
        return 0.0;
    }
    let mut total = 0.0;
    for u in 0..m {
        let denominator = best_k_value(rel, u, k);
        let own = if denominator == 0.0 {
            1.0
        } else {
            bundle_value(rel, u, alloc.bundle(u)) / denominator
        };
        let mut envy_sum = 0.0;
        for w in 0..m {
            if w == u {
                continue;
            }
            let other = if denominator == 0.0 {
                1.0
            } else {
                bundle_value(rel, u, alloc.bundle(w)) / denominator
            };
            envy_sum += (other - own).max(0.0);
        }
        total += envy_sum / (m - 1) as f64;
    }
    total / m as f64
}

/// Mean and population standard deviation of normalized customer utilities.
pub fn utility_stats(rel: &RelevanceMatrix, alloc: &Allocation, k: usize) -> (f64, f64) {
    let m = alloc.m();
    let phis: Vec<f64> = (0..m).map(|u| phi(rel, u, alloc.bundle(u), k)).collect();
    let mean = phis.iter().sum::<f64>() / m as f64;
    let variance = phis.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / m as f64;
    (mean, variance.sqrt())
}

/// Envy-freeness up to one item: every customer values their own bundle at
/// least as much as any other bundle with its single most valuable item
/// removed, up to [`FAIRNESS_EPS`].
pub fn is_ef1(rel: &RelevanceMatrix, alloc: &Allocation) -> bool {
    let m = alloc.m();
    for u in 0..m {
        let own = bundle_value(rel, u, alloc.bundle(u));
        for w in 0..m {
            if w == u {
                continue;
            }
            let other = bundle_value(rel, u, alloc.bundle(w));
            let max_item = alloc
                .bundle(w)
                .iter()
                .map(|&p| rel.value(u, p))
                .fold(0.0_f64, f64::max);
            if own < other - max_item - FAIRNESS_EPS {
                return false;
            }
        }
    }
    true
}

/// Fraction of producers at or above their scaled maximin-share threshold.
/// Same computation as [`metric_h`], reported separately so verifier output
/// can quote it next to the theoretical lower bound.
pub fn alpha_mms_fraction(exposures: &ExposureVector, thresholds: &[usize]) -> f64 {
    metric_h(exposures, thresholds)
}

/// Lower bound on the fraction of producers achieving their scaled maximin
/// share: `1 - floor(alpha*m*k/n) / (m+1)`.
pub fn mms_fraction_bound(m: usize, n: usize, k: usize, alpha: f64) -> f64 {
    1.0 - mms_threshold(m, n, k, alpha) as f64 / (m + 1) as f64
}

/// Cumulative exposure-share curve: producers sorted by ascending exposure,
/// point `i` is (fraction of producers, fraction of total exposure), with a
/// leading (0, 0). A zero-exposure vector yields the equality diagonal.
pub fn lorenz_points(exposures: &ExposureVector) -> Vec<(f64, f64)> {
    let n = exposures.n();
    assert!(n > 0, "exposure vector must be nonempty");
    let mut sorted: Vec<usize> = exposures.counts().to_vec();
    sorted.sort_unstable();
    let total: usize = sorted.iter().sum();
    let mut points = Vec::with_capacity(n + 1);
    points.push((0.0, 0.0));
    if total == 0 {
        for i in 1..=n {
            let f = i as f64 / n as f64;
            points.push((f, f));
        }
        return points;
    }
    let mut cumulative = 0usize;
    for (i, e) in sorted.into_iter().enumerate() {
        cumulative += e;
        points.push(((i + 1) as f64 / n as f64, cumulative as f64 / total as f64));
    }
    points
}

/// Assembles the full metric report for one allocation. The loss metric is
/// computed against the supplied top-k reference exposures; thresholds are
/// the per-producer copy floors.
pub fn full_report(
    rel: &RelevanceMatrix,
    alloc: &Allocation,
    k: usize,
    exposures: &ExposureVector,
    thresholds: &[usize],
    topk_exposures: &ExposureVector,
) -> Result<MetricsReport, MetricsError> {
    let (mu_phi, std_phi) = utility_stats(rel, alloc, k);
    Ok(MetricsReport {
        h: metric_h(exposures, thresholds),
        z: metric_z(exposures, rel.m(), rel.n(), k)?,
        l: metric_l(exposures, topk_exposures),
        y: metric_y(rel, alloc, k),
        mu_phi,
        std_phi,
        ef1: is_ef1(rel, alloc),
        alpha_mms_fraction: alpha_mms_fraction(exposures, thresholds),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> RelevanceMatrix {
        let m = rows.len();
        let n = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        RelevanceMatrix::new(m, n, flat).unwrap()
    }

    fn alloc(bundles: &[&[usize]]) -> Allocation {
        Allocation::new(
            bundles
                .iter()
                .map(|b| b.iter().copied().collect())
                .collect(),
        )
    }

    #[test]
    fn utility_of_top_bundle_is_one() {
        let rel = matrix(&[&[4.0, 3.0, 2.0, 1.0]]);
        let top = BTreeSet::from([0, 1]);
        assert_eq!(customer_utility(&rel, 0, &top, 2).unwrap(), 1.0);
    }

    #[test]
    fn utility_of_tail_bundle() {
        let rel = matrix(&[&[4.0, 3.0, 2.0, 1.0]]);
        let tail = BTreeSet::from([2, 3]);
        let got = customer_utility(&rel, 0, &tail, 2).unwrap();
        assert!((got - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn utility_zero_row_defaults_to_one() {
        let rel = matrix(&[&[0.0, 0.0, 0.0]]);
        let bundle = BTreeSet::from([1, 2]);
        assert_eq!(customer_utility(&rel, 0, &bundle, 2).unwrap(), 1.0);
    }

    #[test]
    fn utility_rejects_wrong_size() {
        let rel = matrix(&[&[1.0, 2.0]]);
        let bundle = BTreeSet::from([0]);
        assert_eq!(
            customer_utility(&rel, 0, &bundle, 2).unwrap_err(),
            MetricsError::BadBundleSize {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn threshold_matches_exact_floors() {
        assert_eq!(mms_threshold(1892, 17632, 20, 1.0), 2);
        assert_eq!(mms_threshold(1892, 17632, 10, 1.0), 1);
        assert_eq!(mms_threshold(1892, 17632, 9, 1.0), 0);
        assert_eq!(mms_threshold(11172, 855, 20, 1.0), 261);
        assert_eq!(mms_threshold(5, 7, 3, 0.0), 0);
        assert_eq!(mms_threshold(11172, 855, 20, 0.5), 130);
    }

    #[test]
    fn h_counts_satisfied_producers() {
        let e = ExposureVector::from(vec![2, 1, 0]);
        assert!((metric_h(&e, &[1, 1, 1]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(metric_h(&e, &[0, 0, 0]), 1.0);
    }

    #[test]
    fn z_closed_forms() {
        // Uniform exposure: m=2, k=2, n=2, every producer exposed twice.
        let uniform = ExposureVector::from(vec![2, 2]);
        assert!((metric_z(&uniform, 2, 2, 2).unwrap() - 1.0).abs() < 1e-12);

        let concentrated = ExposureVector::from(vec![4, 0]);
        assert!(metric_z(&concentrated, 2, 2, 2).unwrap().abs() < 1e-12);

        let skew = ExposureVector::from(vec![3, 1]);
        let expected = 0.811_278_124_459_132_8;
        assert!((metric_z(&skew, 2, 2, 2).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn z_rejects_degenerate_base() {
        let e = ExposureVector::from(vec![4]);
        assert_eq!(
            metric_z(&e, 2, 1, 2).unwrap_err(),
            MetricsError::DegenerateBase(1)
        );
    }

    #[test]
    fn l_clamps_and_skips_zero_reference() {
        let same = ExposureVector::from(vec![2, 2]);
        assert_eq!(metric_l(&same, &same), 0.0);

        let above = ExposureVector::from(vec![5, 5]);
        let reference = ExposureVector::from(vec![2, 2]);
        assert_eq!(metric_l(&above, &reference), 0.0);

        let actual = ExposureVector::from(vec![2, 5, 2]);
        let topk = ExposureVector::from(vec![4, 0, 2]);
        assert!((metric_l(&actual, &topk) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn envy_of_swapped_bundles() {
        let rel = matrix(&[&[4.0, 1.0], &[4.0, 1.0]]);
        let swapped = alloc(&[&[1], &[0]]);
        assert!((metric_y(&rel, &swapped, 1) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn envy_zero_for_symmetric_bundles() {
        let rel = matrix(&[&[2.0, 2.0], &[2.0, 2.0]]);
        let split = alloc(&[&[0], &[1]]);
        assert_eq!(metric_y(&rel, &split, 1), 0.0);
    }

    #[test]
    fn stats_of_extreme_utilities() {
        // phi values 1 and 0: one customer holds their best item, the other
        // a worthless one.
        let rel = matrix(&[&[5.0, 0.0], &[0.0, 5.0]]);
        let a = alloc(&[&[0], &[0]]);
        let (mu, std) = utility_stats(&rel, &a, 1);
        assert_eq!((mu, std), (0.5, 0.5));
    }

    #[test]
    fn ef1_examples() {
        let rel = matrix(&[&[10.0, 1.0], &[10.0, 1.0]]);
        assert!(is_ef1(&rel, &alloc(&[&[0], &[1]])));

        let rel2 = matrix(&[&[5.0, 5.0, 1.0, 1.0], &[5.0, 5.0, 1.0, 1.0]]);
        assert!(!is_ef1(&rel2, &alloc(&[&[0, 1], &[2, 3]])));
    }

    #[test]
    fn mms_fraction_trivial_thresholds() {
        let e = ExposureVector::from(vec![0, 0, 0]);
        assert_eq!(alpha_mms_fraction(&e, &[0, 0, 0]), 1.0);
    }

    #[test]
    fn lorenz_shapes() {
        let uniform = ExposureVector::from(vec![3, 3, 3]);
        for (x, y) in lorenz_points(&uniform) {
            assert!((x - y).abs() < 1e-12);
        }

        let concentrated = ExposureVector::from(vec![0, 0, 4]);
        let points = lorenz_points(&concentrated);
        let expected = [
            (0.0, 0.0),
            (1.0 / 3.0, 0.0),
            (2.0 / 3.0, 0.0),
            (1.0, 1.0),
        ];
        assert_eq!(points.len(), expected.len());
        for ((x, y), (ex, ey)) in points.into_iter().zip(expected) {
            assert!((x - ex).abs() < 1e-12 && (y - ey).abs() < 1e-12);
        }
    }
}
