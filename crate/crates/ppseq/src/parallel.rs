//! Time-sharded parallel sampler: the interval is cut into contiguous shards
//! that resample assignments, events and split-merge moves independently,
//! while a coordinator gathers sufficient statistics and resamples the shared
//! global parameters each sweep.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dists::{coordinator_rng, shard_rng};
use crate::error::{Error, Result};
use crate::gibbs::{
    assignment_sweep, gather_global_stats, gibbs_sweep, resample_events,
    resample_globals_from_stats, split_merge_move, ChainState, GlobalStats, ModelCtx, SweepOrder,
};
use crate::generative::sample_global_params;
use crate::model::{Dataset, GlobalParams, Hyperparams, LatentEvent, Spike, WarpGrid};

/// Cut a dataset into `p` contiguous half-open time shards `[jT/p, (j+1)T/p)`
/// (the last shard also takes `t = T`). Spike times are shifted to
/// shard-local coordinates.
pub fn shard_dataset(data: &Dataset, p: usize) -> Result<Vec<Dataset>> {
    if p == 0 {
        return Err(Error::InvalidParameter("shard count must be >= 1".into()));
    }
    let len = data.duration / p as f64;
    let mut buckets: Vec<Vec<Spike>> = vec![Vec::new(); p];
    for &s in data.spikes() {
        let j = ((s.time / len) as usize).min(p - 1);
        buckets[j].push(Spike {
            neuron: s.neuron,
            time: (s.time - j as f64 * len).clamp(0.0, len),
        });
    }
    buckets
        .into_iter()
        .map(|spikes| Dataset::new(spikes, data.n_neurons, len))
        .collect()
}

/// A sampler over `p` time shards sharing one set of global parameters.
///
/// With a single shard this reduces exactly to the serial sampler: one sweep
/// is then a plain [`gibbs_sweep`] driven by shard RNG 0, bit-for-bit.
pub struct ParallelSampler {
    shards: Vec<ChainState>,
    rngs: Vec<ChaCha8Rng>,
    coordinator: ChaCha8Rng,
    shard_len: f64,
    hyper: Hyperparams,
    grid: WarpGrid,
}

impl ParallelSampler {
    pub fn new(
        data: &Dataset,
        hyper: &Hyperparams,
        n_shards: usize,
        master_seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        let grid = hyper.warp_grid()?;
        let shard_data = shard_dataset(data, n_shards)?;
        let rngs: Vec<ChaCha8Rng> = (0..n_shards).map(|j| shard_rng(master_seed, j)).collect();
        let mut coordinator = coordinator_rng(master_seed);
        let params = sample_global_params(hyper, &mut coordinator);
        let shards = shard_data
            .iter()
            .map(|d| ChainState::new(d, params.clone()))
            .collect();
        Ok(ParallelSampler {
            shards,
            rngs,
            coordinator,
            shard_len: data.duration / n_shards as f64,
            hyper: hyper.clone(),
            grid,
        })
    }

    pub fn n_shards(&self) -> usize {
        self.shards.len()
    }

    pub fn params(&self) -> &GlobalParams {
        &self.shards[0].params
    }

    pub fn shard_states(&self) -> &[ChainState] {
        &self.shards
    }

    /// Latent events of every shard, times mapped back to global coordinates.
    pub fn events(&self) -> Vec<LatentEvent> {
        let mut out = Vec::new();
        for (j, shard) in self.shards.iter().enumerate() {
            let offset = j as f64 * self.shard_len;
            for mut z in shard.events() {
                z.time += offset;
                out.push(z);
            }
        }
        out
    }

    /// One global sweep: shard-local assignment resampling, split-merge
    /// moves and event updates in parallel, then a coordinator update of the
    /// shared global parameters from the merged statistics.
    pub fn sweep(&mut self, order: SweepOrder, sm_moves: usize) {
        let hyper = self.hyper.clone();
        self.sweep_with(&hyper, order, sm_moves);
    }

    /// As [`sweep`](Self::sweep) under substituted hyperparameters (e.g. an
    /// annealed amplitude prior).
    pub fn sweep_with(&mut self, hyper: &Hyperparams, order: SweepOrder, sm_moves: usize) {
        if self.shards.len() == 1 {
            gibbs_sweep(
                &mut self.shards[0],
                hyper,
                &self.grid,
                order,
                &mut self.rngs[0],
            );
            for _ in 0..sm_moves {
                let params = self.shards[0].params.clone();
                let ctx = ModelCtx::new(&params, &self.grid, self.shard_len);
                split_merge_move(&mut self.shards[0], hyper, &ctx, &mut self.rngs[0]);
            }
            return;
        }
        let grid = &self.grid;
        let stats: Vec<GlobalStats> = self
            .shards
            .par_iter_mut()
            .zip(self.rngs.par_iter_mut())
            .map(|(state, rng)| {
                let params = state.params.clone();
                let ctx = ModelCtx::new(&params, grid, state.duration);
                state.rebuild_stats(&ctx);
                assignment_sweep(state, hyper, &ctx, order, rng);
                for _ in 0..sm_moves {
                    split_merge_move(state, hyper, &ctx, rng);
                }
                resample_events(state, hyper, &ctx, rng);
                gather_global_stats(state, grid)
            })
            .collect();
        let mut merged = GlobalStats::zero(self.hyper.n_neurons, self.hyper.n_types);
        for s in &stats {
            merged.merge(s);
        }
        let params = resample_globals_from_stats(&merged, hyper, &mut self.coordinator);
        for state in &mut self.shards {
            state.params = params.clone();
        }
    }

    /// Snapshot the joint state as one posterior sample: all shard events in
    /// global coordinates, with shard-local assignments remapped to dense
    /// indices into that event list. Shard concatenation preserves the
    /// canonical global spike order.
    pub fn posterior_sample(&self) -> crate::driver::PosteriorSample {
        let mut events = Vec::new();
        let mut assignments = Vec::new();
        for (j, shard) in self.shards.iter().enumerate() {
            let offset = j as f64 * self.shard_len;
            let base = events.len();
            let live = shard.live_ids();
            let mut dense = vec![usize::MAX; live.iter().copied().max().map_or(0, |m| m + 1)];
            for (i, &id) in live.iter().enumerate() {
                dense[id] = base + i;
            }
            for mut z in shard.events() {
                z.time += offset;
                events.push(z);
            }
            for a in &shard.assignments {
                assignments.push(match a {
                    crate::gibbs::Assignment::Background => crate::gibbs::Assignment::Background,
                    crate::gibbs::Assignment::Cluster(id) => {
                        crate::gibbs::Assignment::Cluster(dense[*id])
                    }
                });
            }
        }
        crate::driver::PosteriorSample {
            params: self.params().clone(),
            events,
            assignments,
        }
    }

    /// Joint log-likelihood of all shards under the current state.
    pub fn log_likelihood(&self) -> Result<f64> {
        let mut ll = 0.0;
        for shard in &self.shards {
            let data = Dataset::new(shard.spikes.clone(), self.hyper.n_neurons, shard.duration)?;
            ll += crate::model::log_likelihood(&data, &shard.events(), &shard.params, &self.grid)?;
        }
        Ok(ll)
    }
}
