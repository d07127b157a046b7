//! The collapsed trans-dimensional sampler: cluster sufficient statistics,
//! assignment resampling with latent events integrated out, latent-event and
//! global-parameter conditionals, the partition prior, and split-merge
//! Metropolis-Hastings moves.

mod partition;
mod split_merge;
mod state;
mod stats;
mod sweep;

pub use partition::{log_partition_prior, log_v};
pub use split_merge::split_merge_move;
pub use state::{Assignment, ChainState, Cluster};
pub use stats::{log_z, ClusterStats, ModelCtx, SpikeHyp};
pub use sweep::{
    assignment_log_weights, assignment_sweep, gather_global_stats, gibbs_sweep, resample_events,
    resample_globals, resample_globals_from_stats, resample_latent_event, GlobalStats, SweepOrder,
};
