//! Synthetic two-dimensional task with rare clusters, active-learning loop
//! with ensemble-based acquisition signals, and reweighted final training.

mod al;
mod data;
mod frontier;
mod signals;

pub use al::{run_al_loop, ALConfig, ALResult, RoundMetrics, UnderrepSource};
pub use data::{
    default_spec, gen_2d, sample_mixture, Cluster, Dataset2D, SyntheticSpec2D, N_GROUPS,
};
pub use frontier::{
    evaluate, reweight_grid, reweighted_train, trace_frontier, Evaluation, FrontierCell,
    FrontierTrace, ReweightResult,
};
pub use signals::{
    acquisition_scores, diversity, margin, predicted_underrep, variance_signal, EnsembleOutputs,
    Signal,
};
