//! Comparison algorithms: pure relevance ranking, random and exposure-
//! balancing selections, their mixtures, and a popularity-debiasing
//! score adjustment.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::types::{top_k_indices, Allocation, Instance};

/// Seed for the randomized baselines; the same seed always reproduces the
/// same allocation on the same instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed {
    pub value: u64,
}

impl From<u64> for Seed {
    fn from(value: u64) -> Self {
        Seed { value }
    }
}

impl Seed {
    pub(crate) fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.value)
    }
}

/// Every customer receives their k most relevant products.
pub fn top_k(inst: &Instance) -> Allocation {
    let rel = inst.rel();
    let bundles = (0..inst.m())
        .map(|u| top_k_indices(rel.row(u), inst.k()).into_iter().collect())
        .collect();
    Allocation::new(bundles)
}

/// Every customer receives k distinct products drawn uniformly at random.
pub fn random_k(inst: &Instance, seed: Seed) -> Allocation {
    let mut rng = seed.rng();
    let bundles = (0..inst.m())
        .map(|_| {
            rand::seq::index::sample(&mut rng, inst.n(), inst.k())
                .into_iter()
                .collect()
        })
        .collect();
    Allocation::new(bundles)
}

/// Ids of the `k` smallest exposure counts, ties toward the lower id,
/// optionally excluding a set of products.
fn poorest_ids(exposures: &[usize], k: usize, exclude: &BTreeSet<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..exposures.len())
        .filter(|p| !exclude.contains(p))
        .collect();
    idx.sort_unstable_by_key(|&p| (exposures[p], p));
    idx.truncate(k);
    idx
}

/// Customers are served in id order; each receives the k currently least
/// exposed products, and exposures update after every customer.
pub fn poorest_k(inst: &Instance) -> Allocation {
    let mut exposures = vec![0usize; inst.n()];
    let none = BTreeSet::new();
    let mut bundles = Vec::with_capacity(inst.m());
    for _ in 0..inst.m() {
        let picks = poorest_ids(&exposures, inst.k(), &none);
        for &p in &picks {
            exposures[p] += 1;
        }
        bundles.push(picks.into_iter().collect());
    }
    Allocation::new(bundles)
}

/// Top half by relevance, the rest drawn uniformly from the remainder.
pub fn mixed_tr_k(inst: &Instance, seed: Seed) -> Allocation {
    let rel = inst.rel();
    let k = inst.k();
    let top_half = k.div_ceil(2);
    let mut rng = seed.rng();
    let mut bundles = Vec::with_capacity(inst.m());
    for u in 0..inst.m() {
        let mut bundle: BTreeSet<usize> =
            top_k_indices(rel.row(u), top_half).into_iter().collect();
        let remainder: Vec<usize> = (0..inst.n()).filter(|p| !bundle.contains(p)).collect();
        for i in rand::seq::index::sample(&mut rng, remainder.len(), k - top_half) {
            bundle.insert(remainder[i]);
        }
        bundles.push(bundle);
    }
    Allocation::new(bundles)
}

/// Top half by relevance, the rest filled with the least exposed products;
/// exposures update per customer, counting the whole bundle.
pub fn mixed_tp_k(inst: &Instance) -> Allocation {
    let rel = inst.rel();
    let k = inst.k();
    let top_half = k.div_ceil(2);
    let mut exposures = vec![0usize; inst.n()];
    let mut bundles = Vec::with_capacity(inst.m());
    for u in 0..inst.m() {
        let mut bundle: BTreeSet<usize> =
            top_k_indices(rel.row(u), top_half).into_iter().collect();
        for p in poorest_ids(&exposures, k - top_half, &bundle) {
            bundle.insert(p);
        }
        for &p in &bundle {
            exposures[p] += 1;
        }
        bundles.push(bundle);
    }
    Allocation::new(bundles)
}

/// Relevance blended with an under-exposure bonus: customers are served in
/// id order and each receives the top k products by
/// `0.5 * relevance + 0.5 * (1 - exposure share)` under the exposures
/// accumulated so far.
pub fn mpb19(inst: &Instance) -> Allocation {
    let rel = inst.rel();
    let n = inst.n();
    let mut exposures = vec![0usize; n];
    let mut total_exposure = 0usize;
    let mut bundles = Vec::with_capacity(inst.m());
    let mut scores = vec![0.0f64; n];
    for u in 0..inst.m() {
        let row = rel.row(u);
        for p in 0..n {
            let share = if total_exposure == 0 {
                0.0
            } else {
                exposures[p] as f64 / total_exposure as f64
            };
            scores[p] = 0.5 * row[p] + 0.5 * (1.0 - share);
        }
        let picks = top_k_indices(&scores, inst.k());
        for &p in &picks {
            exposures[p] += 1;
        }
        total_exposure += picks.len();
        bundles.push(picks.into_iter().collect());
    }
    Allocation::new(bundles)
}
