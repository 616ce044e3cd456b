//! Distributed-bottleneck decomposition of transfer entropy.
//!
//! Either the source past or the target future is cut into cells, each
//! squeezed through its own Gaussian bottleneck while β is annealed upward.
//! The drop in validation InfoNCE across the sweep is the transfer entropy;
//! the per-cell KL costs say where it lives.

mod config;
mod model;
mod readout;
mod studies;
mod train;

pub use config::{Architecture, Direction, LayerSpec, Partition, SchemeConfig};
pub use model::{partition_cells, Cell, CellLabel, Dataset, Forward, Model, Noise, Shapes, WindowData};
pub use readout::{decompose, local_kl_trace, model_at, DecompositionResult, LocalKLTrace, PlanePoint, Share};
pub use studies::{
    all_pairs, direction_consistency, pairwise_te_nce, parallel_map, run_scheme, run_seeds, summarize,
    DirectionReport, Pair, PairEntry, PairwiseResult, Run, SeedSummary, ShareSummary,
};
pub use train::{build_model, evaluate, fit, train, validation_batches, LogPoint, RunRecord};
