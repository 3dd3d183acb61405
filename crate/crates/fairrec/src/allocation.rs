//! Allocation algorithms: greedy round-robin service, the two-phase fair
//! allocation with per-producer exposure floors, envy-graph machinery with
//! cycle elimination, and the envy-aware round-robin variant built on it.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::metrics::mms_threshold;
use crate::types::{Allocation, ExposurePolicy, Instance, RelevanceMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("envy graph contains a directed cycle; no topological order exists")]
    CyclicGraph,
}

/// Feasible product sets per customer, stored as one flat bitmask so the
/// inner argmax loop stays branch-light.
///
/// A product is feasible for a customer until that customer receives it;
/// the mask rows are exactly "catalogue minus own bundle".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibleSets {
    n: usize,
    bits: Vec<bool>,
}

impl FeasibleSets {
    /// Every product feasible for every customer.
    pub fn full(m: usize, n: usize) -> Self {
        Self {
            n,
            bits: vec![true; m * n],
        }
    }

    #[inline]
    pub fn contains(&self, u: usize, p: usize) -> bool {
        self.bits[u * self.n + p]
    }

    fn remove(&mut self, u: usize, p: usize) {
        self.bits[u * self.n + p] = false;
    }

    /// Feasible product ids of customer `u`, ascending.
    pub fn products_of(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.bits[u * self.n..(u + 1) * self.n]
            .iter()
            .enumerate()
            .filter_map(|(p, &b)| b.then_some(p))
    }

    /// Resets customer `u`'s row to the complement of `bundle`.
    fn reset_to_complement(&mut self, u: usize, bundle: &BTreeSet<usize>) {
        let row = &mut self.bits[u * self.n..(u + 1) * self.n];
        row.fill(true);
        for &p in bundle {
            row[p] = false;
        }
    }
}

/// Copy budget per product: entry `p` is `floor(alpha_p * m * k / n)`.
pub fn copies_per_product(m: usize, n: usize, k: usize, policy: &ExposurePolicy) -> Vec<usize> {
    match policy {
        ExposurePolicy::Global(alpha) => vec![mms_threshold(m, n, k, *alpha); n],
        ExposurePolicy::PerProducer(alphas) => alphas
            .iter()
            .map(|&a| mms_threshold(m, n, k, a))
            .collect(),
    }
}

/// Working state of a single round-robin service pass: remaining copies,
/// remaining item budget, feasibility mask and partial bundles.
struct RoundRobinState {
    copies: Vec<usize>,
    remaining: usize,
    feasible: FeasibleSets,
    bundles: Vec<BTreeSet<usize>>,
}

impl RoundRobinState {
    fn new(m: usize, copies: Vec<usize>, remaining: usize, feasible: FeasibleSets) -> Self {
        Self {
            copies,
            remaining,
            feasible,
            bundles: vec![BTreeSet::new(); m],
        }
    }

    /// Most relevant product for `u` that still has copies and was never
    /// given to `u` before. Ties break toward the lowest product id.
    #[inline]
    fn best_feasible(&self, rel: &RelevanceMatrix, u: usize) -> Option<usize> {
        let row = rel.row(u);
        let mut best = None;
        let mut best_value = f64::NEG_INFINITY;
        for (p, &v) in row.iter().enumerate() {
            if self.copies[p] > 0 && self.feasible.contains(u, p) && v > best_value {
                best = Some(p);
                best_value = v;
            }
        }
        best
    }

    /// Gives `p` to `u`, consuming one copy and one budget slot.
    fn serve(&mut self, u: usize, p: usize) {
        self.bundles[u].insert(p);
        self.feasible.remove(u, p);
        self.copies[p] -= 1;
        self.remaining -= 1;
    }
}

/// Result of one greedy round-robin pass.
pub struct GreedyOutcome {
    /// Partial allocation produced by this pass alone.
    pub allocation: Allocation,
    /// Residual feasibility mask after the pass.
    pub feasible: FeasibleSets,
    /// 1-based position within `order` of the last customer served. Stays at
    /// `m` when nothing was allocated or when the first customer of a round
    /// already had no feasible product.
    pub last_served_pos: usize,
}

/// Serves customers cyclically in `order`; each served customer receives
/// their most relevant product among those with remaining copies that they
/// do not already hold.
///
/// The pass ends when `remaining` items have been handed out, or as soon as
/// some customer finds no feasible product left.
pub fn greedy_round_robin(
    inst: &Instance,
    copies: Vec<usize>,
    remaining: usize,
    order: &[usize],
    feasible: FeasibleSets,
) -> GreedyOutcome {
    let m = inst.m();
    assert_permutation(order, m);
    assert_eq!(copies.len(), inst.n());
    let rel = inst.rel();

    let mut state = RoundRobinState::new(m, copies, remaining, feasible);
    let mut last_served_pos = m;
    if state.remaining > 0 {
        'pass: loop {
            for (i, &u) in order.iter().enumerate() {
                let pos = i + 1;
                match state.best_feasible(rel, u) {
                    None => {
                        if pos != 1 {
                            last_served_pos = pos - 1;
                        }
                        break 'pass;
                    }
                    Some(p) => {
                        state.serve(u, p);
                        if state.remaining == 0 {
                            last_served_pos = pos;
                            break 'pass;
                        }
                    }
                }
            }
        }
    }
    GreedyOutcome {
        allocation: Allocation::new(state.bundles),
        feasible: state.feasible,
        last_served_pos,
    }
}

/// Phase-1 and final allocations of a two-phase run.
pub struct TwoPhaseOutcome {
    pub phase1: Allocation,
    pub allocation: Allocation,
}

/// Two-phase fair allocation.
///
/// Phase 1 hands out the exposure-floor copies via [`greedy_round_robin`].
/// Phase 2 tops every bundle up to exactly `k` items, restarting the service
/// order from the customer after the last one served so partially-served
/// rounds complete first.
pub fn fairrec(inst: &Instance, policy: &ExposurePolicy, order: &[usize]) -> Allocation {
    fairrec_phases(inst, policy, order).allocation
}

/// As [`fairrec`], also exposing the phase-1 partial allocation.
pub fn fairrec_phases(
    inst: &Instance,
    policy: &ExposurePolicy,
    order: &[usize],
) -> TwoPhaseOutcome {
    let (m, n, k) = (inst.m(), inst.n(), inst.k());
    assert_permutation(order, m);

    let copies = copies_per_product(m, n, k, policy);
    let total: usize = copies.iter().sum();
    let outcome = greedy_round_robin(inst, copies, total, order, FeasibleSets::full(m, n));
    let phase1 = outcome.allocation.clone();
    let mut allocation = outcome.allocation;
    let x = outcome.last_served_pos;

    // Bundle size of the customer at the position cyclically after x.
    let lambda = allocation.bundle(order[x % m]).len();
    if lambda < k {
        let copies = vec![m; n];
        let mut remaining = 0usize;
        let mut lambda = lambda;
        let rotated;
        let order2: &[usize] = if x < m {
            // The tail of the interrupted round goes first and receives one
            // item each, evening out all bundle sizes before the top-up.
            rotated = (0..m).map(|i| order[(i + x) % m]).collect::<Vec<_>>();
            remaining = m - x;
            lambda += 1;
            &rotated
        } else {
            order
        };
        remaining += m * (k - lambda);
        let second = greedy_round_robin(inst, copies, remaining, order2, outcome.feasible);
        allocation.union_with(&second.allocation);
    }
    TwoPhaseOutcome { phase1, allocation }
}

/// Directed envy relation over customers: edge `(u, w)` means `u` strictly
/// prefers `w`'s current bundle to their own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvyGraph {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EnvyGraph {
    pub fn from_edges(m: usize, edges: BTreeSet<(usize, usize)>) -> Self {
        Self { m, edges }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn is_acyclic(&self) -> bool {
        topological_order(self).is_ok()
    }
}

fn bundle_value(rel: &RelevanceMatrix, viewer: usize, bundle: &BTreeSet<usize>) -> f64 {
    bundle.iter().map(|&p| rel.value(viewer, p)).sum()
}

/// Builds the envy graph of a (possibly partial) allocation under raw
/// relevance sums.
pub fn build_envy_graph(alloc: &Allocation, rel: &RelevanceMatrix) -> EnvyGraph {
    let m = alloc.m();
    let mut edges = BTreeSet::new();
    for u in 0..m {
        let own = bundle_value(rel, u, alloc.bundle(u));
        for w in 0..m {
            if w != u && bundle_value(rel, u, alloc.bundle(w)) > own {
                edges.insert((u, w));
            }
        }
    }
    EnvyGraph { m, edges }
}

/// Topological order of an acyclic envy graph: every envier appears before
/// the customer they envy, so they pick earlier in the next round. Among the
/// simultaneously available nodes the lowest id goes first.
pub fn topological_order(g: &EnvyGraph) -> Result<Vec<usize>, GraphError> {
    let m = g.m;
    let mut indegree = vec![0usize; m];
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); m];
    for &(u, w) in &g.edges {
        successors[u].push(w);
        indegree[w] += 1;
    }

    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let mut frontier: BinaryHeap<Reverse<usize>> = (0..m)
        .filter(|&v| indegree[v] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(m);
    while let Some(Reverse(v)) = frontier.pop() {
        order.push(v);
        for &w in &successors[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                frontier.push(Reverse(w));
            }
        }
    }
    if order.len() != m {
        return Err(GraphError::CyclicGraph);
    }
    Ok(order)
}

/// Pairwise bundle values for every viewer; rotated in place alongside the
/// bundles so cycle elimination never re-sums (and never drifts).
struct ValueTable {
    m: usize,
    vals: Vec<f64>,
}

impl ValueTable {
    fn new(bundles: &[BTreeSet<usize>], rel: &RelevanceMatrix) -> Self {
        let m = bundles.len();
        let mut vals = vec![0.0; m * m];
        for u in 0..m {
            for (w, bundle) in bundles.iter().enumerate() {
                vals[u * m + w] = bundle_value(rel, u, bundle);
            }
        }
        Self { m, vals }
    }

    #[inline]
    fn envies(&self, u: usize, w: usize) -> bool {
        u != w && self.vals[u * self.m + w] > self.vals[u * self.m + u]
    }

    /// Moves each cycle member's column to its predecessor in the cycle,
    /// mirroring the bundle rotation.
    fn rotate(&mut self, cycle: &[usize]) {
        let len = cycle.len();
        for u in 0..self.m {
            let row = &mut self.vals[u * self.m..(u + 1) * self.m];
            let snapshot: Vec<f64> = cycle.iter().map(|&c| row[c]).collect();
            for (i, &c) in cycle.iter().enumerate() {
                row[c] = snapshot[(i + 1) % len];
            }
        }
    }
}

/// First directed cycle found by depth-first search from the lowest node id,
/// visiting successors in ascending id order. Returns the cycle as a node
/// list where each entry envies the next and the last envies the first.
fn find_cycle(table: &ValueTable) -> Option<Vec<usize>> {
    let m = table.m;
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    let mut color = vec![Color::White; m];
    let mut stack: Vec<usize> = Vec::new();

    fn dfs(
        v: usize,
        table: &ValueTable,
        color: &mut [Color],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        color[v] = Color::Gray;
        stack.push(v);
        for w in 0..table.m {
            if !table.envies(v, w) {
                continue;
            }
            match color[w] {
                Color::Gray => {
                    let start = stack.iter().position(|&x| x == w).expect("on stack");
                    return Some(stack[start..].to_vec());
                }
                Color::White => {
                    if let Some(cycle) = dfs(w, table, color, stack) {
                        return Some(cycle);
                    }
                }
                Color::Black => {}
            }
        }
        stack.pop();
        color[v] = Color::Black;
        None
    }

    for root in 0..m {
        if color[root] == Color::White {
            if let Some(cycle) = dfs(root, table, &mut color, &mut stack) {
                return Some(cycle);
            }
        }
    }
    None
}

/// Repeatedly rotates bundles along envy cycles (each member takes their
/// successor's bundle) until the envy graph is acyclic. Marks which agents
/// ended up with a different bundle.
fn eliminate_cycles_in_place(
    bundles: &mut [BTreeSet<usize>],
    rel: &RelevanceMatrix,
) -> Vec<bool> {
    let mut table = ValueTable::new(bundles, rel);
    let mut changed = vec![false; bundles.len()];
    while let Some(cycle) = find_cycle(&table) {
        let mut rotated: Vec<BTreeSet<usize>> = cycle
            .iter()
            .map(|&c| std::mem::take(&mut bundles[c]))
            .collect();
        rotated.rotate_left(1);
        for (&c, bundle) in cycle.iter().zip(rotated) {
            bundles[c] = bundle;
            changed[c] = true;
        }
        table.rotate(&cycle);
    }
    changed
}

/// Rotates bundles along directed envy cycles until none remain. Every
/// agent's own-bundle value weakly increases and the resulting envy graph is
/// acyclic. Cycle choice is deterministic: depth-first from the lowest node
/// id, first back edge found.
pub fn eliminate_envy_cycles(alloc: Allocation, rel: &RelevanceMatrix) -> Allocation {
    let mut bundles = alloc.into_bundles();
    eliminate_cycles_in_place(&mut bundles, rel);
    Allocation::new(bundles)
}

/// Greedy round-robin that keeps the envy graph acyclic: after every
/// completed round (and at both exit points) envy cycles are rotated away
/// and the service order is re-derived from the topological order of the
/// cleaned graph.
///
/// When bundles rotate, the feasibility rows of the affected customers are
/// reset to the complement of their new bundle, preserving the one-copy-per-
/// customer constraint and nothing else.
pub fn modified_greedy_round_robin(
    inst: &Instance,
    copies: Vec<usize>,
    remaining: usize,
    order: &[usize],
    feasible: FeasibleSets,
) -> (Allocation, FeasibleSets) {
    let m = inst.m();
    assert_permutation(order, m);
    assert_eq!(copies.len(), inst.n());
    let rel = inst.rel();

    let mut state = RoundRobinState::new(m, copies, remaining, feasible);
    let mut order = order.to_vec();
    if state.remaining > 0 {
        'pass: loop {
            for &u in &order {
                match state.best_feasible(rel, u) {
                    None => {
                        cleanup_cycles(&mut state, rel);
                        break 'pass;
                    }
                    Some(p) => {
                        state.serve(u, p);
                        if state.remaining == 0 {
                            cleanup_cycles(&mut state, rel);
                            break 'pass;
                        }
                    }
                }
            }
            cleanup_cycles(&mut state, rel);
            let graph = graph_from_bundles(&state.bundles, rel);
            order = topological_order(&graph).expect("graph is acyclic after cycle elimination");
        }
    }
    (Allocation::new(state.bundles), state.feasible)
}

fn cleanup_cycles(state: &mut RoundRobinState, rel: &RelevanceMatrix) {
    let changed = eliminate_cycles_in_place(&mut state.bundles, rel);
    for (u, was_changed) in changed.into_iter().enumerate() {
        if was_changed {
            state.feasible.reset_to_complement(u, &state.bundles[u]);
        }
    }
}

fn graph_from_bundles(bundles: &[BTreeSet<usize>], rel: &RelevanceMatrix) -> EnvyGraph {
    let m = bundles.len();
    let mut edges = BTreeSet::new();
    for u in 0..m {
        let own = bundle_value(rel, u, &bundles[u]);
        for (w, bundle) in bundles.iter().enumerate() {
            if w != u && bundle_value(rel, u, bundle) > own {
                edges.insert((u, w));
            }
        }
    }
    EnvyGraph { m, edges }
}

/// Two-phase fair allocation with envy-cycle elimination.
///
/// Phase 1 runs [`modified_greedy_round_robin`] on the exposure-floor
/// copies. Phase 2 tops each customer up to `k` items with their most
/// relevant remaining feasible products, in customer-id order.
pub fn fairrecplus(inst: &Instance, policy: &ExposurePolicy, order: &[usize]) -> Allocation {
    fairrecplus_phases(inst, policy, order).allocation
}

/// As [`fairrecplus`], also exposing the phase-1 partial allocation.
pub fn fairrecplus_phases(
    inst: &Instance,
    policy: &ExposurePolicy,
    order: &[usize],
) -> TwoPhaseOutcome {
    let (m, n, k) = (inst.m(), inst.n(), inst.k());
    assert_permutation(order, m);
    let rel = inst.rel();

    let copies = copies_per_product(m, n, k, policy);
    let total: usize = copies.iter().sum();
    let (phase1, feasible) =
        modified_greedy_round_robin(inst, copies, total, order, FeasibleSets::full(m, n));

    let mut bundles = phase1.clone().into_bundles();
    for (u, bundle) in bundles.iter_mut().enumerate() {
        let need = k.saturating_sub(bundle.len());
        if need == 0 {
            continue;
        }
        let row = rel.row(u);
        let mut candidates: Vec<usize> = feasible.products_of(u).collect();
        candidates.sort_unstable_by(|&a, &b| {
            row[b]
                .partial_cmp(&row[a])
                .expect("relevance values are finite")
                .then(a.cmp(&b))
        });
        bundle.extend(candidates.into_iter().take(need));
    }
    TwoPhaseOutcome {
        phase1,
        allocation: Allocation::new(bundles),
    }
}

fn assert_permutation(order: &[usize], m: usize) {
    assert_eq!(order.len(), m, "service order must cover all customers");
    let mut seen = vec![false; m];
    for &u in order {
        assert!(u < m && !seen[u], "service order must be a permutation");
        seen[u] = true;
    }
}
