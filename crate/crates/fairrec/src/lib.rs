//! Two-sided fair recommendation as constrained fair allocation.
//!
//! Personalized recommendation is rephrased as allocating product copies to
//! customers: every customer receives exactly `k` distinct products, the
//! allocation targets envy-freeness up to one item on the customer side,
//! and every producer is guaranteed a tunable floor of exposure on the
//! other side. The producer guarantees are exact; the customer-side envy
//! bound holds on the vast majority of instances but can be exceeded in
//! multi-copy regimes (the test suite pins minimal counterexamples).
//!
//! The crate provides:
//!
//! - [`allocation`]: greedy round-robin service, the two-phase [`fairrec`]
//!   allocator, envy-graph machinery, and the envy-cycle-eliminating
//!   [`fairrecplus`] variant;
//! - [`baselines`]: six comparison algorithms from pure relevance ranking to
//!   exposure-balancing selections;
//! - [`metrics`]: producer- and customer-side metrics plus the EF1 and
//!   maximin-share verifiers;
//! - [`io`]: matrix loaders, synthetic instance generation, and the
//!   allocation/report file formats.
//!
//! [`fairrec`]: allocation::fairrec
//! [`fairrecplus`]: allocation::fairrecplus

pub mod allocation;
pub mod baselines;
pub mod io;
pub mod metrics;
pub mod types;

pub use allocation::{
    build_envy_graph, copies_per_product, eliminate_envy_cycles, fairrec, fairrec_phases,
    fairrecplus, fairrecplus_phases, greedy_round_robin, modified_greedy_round_robin,
    topological_order, EnvyGraph, FeasibleSets,
};
pub use baselines::{mixed_tp_k, mixed_tr_k, mpb19, poorest_k, random_k, top_k, Seed};
pub use metrics::{is_ef1, mms_threshold, MetricsReport};
pub use types::{
    exposures_of, validate_instance, Allocation, ExposurePolicy, ExposureVector, Instance,
    RelevanceMatrix,
};
