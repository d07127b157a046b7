//! Orchestration of full MCMC runs: the annealing ladder, speckled held-out
//! masks with spike imputation, the sweep loop, and held-out scoring.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dists::draw_poisson;
use crate::error::{Error, Result};
use crate::gibbs::{
    assignment_sweep, resample_events, resample_globals, split_merge_move, Assignment, ChainState,
    ModelCtx, SweepOrder,
};
use crate::generative::sample_global_params;
use crate::math::normal_cdf;
use crate::model::{
    intensity, log_likelihood, Dataset, GlobalParams, Hyperparams, LatentEvent, Spike, WarpGrid,
};

/// Geometric temperature ladder for the amplitude prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub initial_temp: f64,
    pub n_stages: usize,
    pub sweeps_per_stage: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            initial_temp: 500.0,
            n_stages: 20,
            sweeps_per_stage: 100,
        }
    }
}

impl AnnealSchedule {
    /// Temperatures `T0^(1 - j/n)` for `j = 0..=n`: geometric decay from
    /// `initial_temp` to exactly 1.
    pub fn stage_temperatures(&self) -> Vec<f64> {
        let n = self.n_stages.max(1) as f64;
        (0..=self.n_stages)
            .map(|j| {
                if j == self.n_stages {
                    1.0
                } else {
                    self.initial_temp.powf(1.0 - j as f64 / n)
                }
            })
            .collect()
    }
}

/// Scale the amplitude prior to temperature `temp >= 1`: shape and rate are
/// both divided by `temp`, preserving the prior mean while inflating the
/// variance by `temp`.
pub fn anneal_amplitude_prior(hyper: &Hyperparams, temp: f64) -> Result<Hyperparams> {
    if temp < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "annealing temperature {temp} < 1"
        )));
    }
    let mut out = hyper.clone();
    out.amp_shape /= temp;
    out.amp_rate /= temp;
    Ok(out)
}

/// A speckled held-out mask: the interval is tiled into blocks of
/// `block_length` seconds and each (neuron, block) cell is held out
/// independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeckledMask {
    pub duration: f64,
    pub block_length: f64,
    /// `masked[n][b]` is true when block `b` of neuron `n` is held out.
    masked: Vec<Vec<bool>>,
}

impl SpeckledMask {
    /// Draw a mask holding out each cell with probability `fraction`.
    /// Retries a few times rather than returning a mask with no held-out
    /// cells.
    pub fn generate<R: Rng + ?Sized>(
        n_neurons: usize,
        duration: f64,
        fraction: f64,
        block_length: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidParameter(format!(
                "mask fraction {fraction} outside [0, 1)"
            )));
        }
        if block_length <= 0.0 || duration <= 0.0 || n_neurons == 0 {
            return Err(Error::InvalidParameter(
                "mask needs positive block length, duration and neurons".into(),
            ));
        }
        let n_blocks = (duration / block_length).ceil() as usize;
        let masked: Vec<Vec<bool>> = (0..n_neurons)
            .map(|_| (0..n_blocks).map(|_| rng.random::<f64>() < fraction).collect())
            .collect();
        Ok(SpeckledMask {
            duration,
            block_length,
            masked,
        })
    }

    /// True when no cell is held out (e.g. fraction 0).
    pub fn is_empty(&self) -> bool {
        !self.masked.iter().flatten().any(|&m| m)
    }

    pub fn n_neurons(&self) -> usize {
        self.masked.len()
    }

    pub fn contains(&self, neuron: usize, t: f64) -> bool {
        let b = (t / self.block_length) as usize;
        self.masked[neuron]
            .get(b.min(self.masked[neuron].len().saturating_sub(1)))
            .copied()
            .unwrap_or(false)
    }

    /// Held-out intervals `(lo, hi)` of one neuron, clipped to the duration.
    pub fn blocks(&self, neuron: usize) -> Vec<(f64, f64)> {
        self.masked[neuron]
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(b, _)| {
                let lo = b as f64 * self.block_length;
                (lo, (lo + self.block_length).min(self.duration))
            })
            .collect()
    }

    /// Total held-out length of one neuron.
    pub fn masked_len(&self, neuron: usize) -> f64 {
        self.blocks(neuron).iter().map(|(lo, hi)| hi - lo).sum()
    }

    /// Total held-out area (seconds x neurons).
    pub fn total_area(&self) -> f64 {
        (0..self.n_neurons()).map(|n| self.masked_len(n)).sum()
    }

    /// Split a dataset into (train, test) by mask membership.
    pub fn split(&self, data: &Dataset) -> Result<(Dataset, Dataset)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for &s in data.spikes() {
            if self.contains(s.neuron, s.time) {
                test.push(s);
            } else {
                train.push(s);
            }
        }
        Ok((
            Dataset::new(train, data.n_neurons, data.duration)?,
            Dataset::new(test, data.n_neurons, data.duration)?,
        ))
    }
}

/// Inverse standard-normal CDF via the error function.
fn normal_quantile(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * statrs::function::erf::erf_inv(2.0 * p - 1.0)
}

/// Replace the imputed spikes of a state with a fresh draw given the current
/// parameters, latent events and partition: background spikes are homogeneous
/// Poisson within each held-out cell, and each latent event contributes
/// truncated-Gaussian spikes with its cell mass.
pub fn impute_masked_spikes<R: Rng + ?Sized>(
    state: &mut ChainState,
    mask: &SpeckledMask,
    ctx: &ModelCtx,
    rng: &mut R,
) {
    state.clear_imputed(ctx);
    state.rebuild_stats(ctx);
    for n in 0..state.params.n_neurons() {
        let bg = state.params.bg_rates[n];
        for (lo, hi) in mask.blocks(n) {
            for _ in 0..draw_poisson(bg * (hi - lo), rng) {
                let t = lo + rng.random::<f64>() * (hi - lo);
                state.push_imputed(Spike { neuron: n, time: t }, Assignment::Background, ctx);
            }
        }
    }
    let ids: Vec<usize> = state.live_ids().to_vec();
    for id in ids {
        let z = state.cluster(id).event;
        let r = z.seq_type;
        let w = ctx.grid.values[z.warp];
        for n in 0..state.params.n_neurons() {
            let a = state.params.weights[r][n];
            if a == 0.0 {
                continue;
            }
            let mean = z.time + w * state.params.delays[r][n];
            let sd = (w * w * state.params.widths[r][n]).sqrt();
            for (lo, hi) in mask.blocks(n) {
                let p_lo = normal_cdf(lo, mean, sd);
                let p_hi = normal_cdf(hi, mean, sd);
                let mass = (p_hi - p_lo).max(0.0);
                if mass <= 0.0 {
                    continue;
                }
                for _ in 0..draw_poisson(z.amplitude * a * mass, rng) {
                    let u = p_lo + rng.random::<f64>() * (p_hi - p_lo);
                    let t = (mean + sd * normal_quantile(u)).clamp(lo, hi);
                    state.push_imputed(Spike { neuron: n, time: t }, Assignment::Cluster(id), ctx);
                }
            }
        }
    }
}

/// Settings for one chain run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schedule: AnnealSchedule,
    /// Unannealed sweeps after the ladder.
    pub final_sweeps: usize,
    /// Posterior samples retained from the tail of the final sweeps.
    pub keep_last: usize,
    /// Split-merge proposals per annealed sweep.
    pub sm_moves_anneal: usize,
    /// Split-merge proposals per final sweep.
    pub sm_moves_final: usize,
    pub order: SweepOrder,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schedule: AnnealSchedule::default(),
            final_sweeps: 100,
            keep_last: 50,
            sm_moves_anneal: 10,
            sm_moves_final: 1000,
            order: SweepOrder::Ascending,
        }
    }
}

/// One retained posterior sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub params: GlobalParams,
    pub events: Vec<LatentEvent>,
    /// Assignment of each observed (non-imputed) spike; cluster ids index
    /// into `events` for this sample.
    pub assignments: Vec<Assignment>,
}

/// Output of one chain: retained samples and the training log-likelihood
/// trace (one entry per sweep, annealed stages included).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainRun {
    pub samples: Vec<PosteriorSample>,
    pub train_ll: Vec<f64>,
}

fn snapshot(state: &ChainState, n_train: usize) -> PosteriorSample {
    // Remap slab cluster ids to dense indices into the event list.
    let live = state.live_ids();
    let mut dense = vec![usize::MAX; live.iter().copied().max().map_or(0, |m| m + 1)];
    for (i, &id) in live.iter().enumerate() {
        dense[id] = i;
    }
    PosteriorSample {
        params: state.params.clone(),
        events: state.events(),
        assignments: state.assignments[..n_train]
            .iter()
            .map(|a| match a {
                Assignment::Background => Assignment::Background,
                Assignment::Cluster(id) => Assignment::Cluster(dense[*id]),
            })
            .collect(),
    }
}

fn one_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    hyper: &Hyperparams,
    grid: &WarpGrid,
    order: SweepOrder,
    sm_moves: usize,
    mask: Option<&SpeckledMask>,
    rng: &mut R,
) {
    let params = state.params.clone();
    let ctx = ModelCtx::new(&params, grid, state.duration);
    if let Some(mask) = mask {
        impute_masked_spikes(state, mask, &ctx, rng);
    } else {
        state.rebuild_stats(&ctx);
    }
    assignment_sweep(state, hyper, &ctx, order, rng);
    for _ in 0..sm_moves {
        split_merge_move(state, hyper, &ctx, rng);
    }
    resample_events(state, hyper, &ctx, rng);
    resample_globals(state, hyper, grid, rng);
}

/// Run one annealed chain on (masked) training data. Returns the retained
/// tail samples and the per-sweep training log-likelihood trace.
pub fn run_chain<R: Rng + ?Sized>(
    train: &Dataset,
    hyper: &Hyperparams,
    config: &RunConfig,
    mask: Option<&SpeckledMask>,
    rng: &mut R,
) -> Result<ChainRun> {
    hyper.validate()?;
    let grid = hyper.warp_grid()?;
    let params = sample_global_params(hyper, rng);
    let mut state = ChainState::new(train, params);
    let n_train = train.len();
    let mut train_ll = Vec::new();
    let mut samples = Vec::new();

    for temp in config.schedule.stage_temperatures() {
        let annealed = anneal_amplitude_prior(hyper, temp)?;
        for _ in 0..config.schedule.sweeps_per_stage {
            one_sweep(
                &mut state,
                &annealed,
                &grid,
                config.order,
                config.sm_moves_anneal,
                mask,
                rng,
            );
            train_ll.push(log_likelihood(train, &state.events(), &state.params, &grid)?);
        }
    }
    for sweep in 0..config.final_sweeps {
        one_sweep(
            &mut state,
            hyper,
            &grid,
            config.order,
            config.sm_moves_final,
            mask,
            rng,
        );
        train_ll.push(log_likelihood(train, &state.events(), &state.params, &grid)?);
        if config.final_sweeps - sweep <= config.keep_last {
            samples.push(snapshot(&state, n_train));
        }
    }
    if train_ll.is_empty() {
        // Zero-sweep run: report the initialization state itself.
        samples.push(snapshot(&state, n_train));
        train_ll.push(log_likelihood(train, &state.events(), &state.params, &grid)?);
    }
    Ok(ChainRun { samples, train_ll })
}

/// Fraction of retained samples in which each spike pair shares a cluster.
/// Quadratic in the number of spikes; intended for diagnostics on small data.
pub fn co_occupancy(samples: &[PosteriorSample]) -> Vec<Vec<f64>> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let s = first.assignments.len();
    let mut co = vec![vec![0.0; s]; s];
    for sample in samples {
        for i in 0..s {
            let Assignment::Cluster(ki) = sample.assignments[i] else {
                continue;
            };
            for j in (i + 1)..s {
                if sample.assignments[j] == Assignment::Cluster(ki) {
                    co[i][j] += 1.0;
                    co[j][i] += 1.0;
                }
            }
        }
    }
    let denom = samples.len() as f64;
    for row in &mut co {
        for v in row {
            *v /= denom;
        }
    }
    for (i, row) in co.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    co
}

/// Held-out score of a posterior against masked test spikes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldoutScore {
    /// Posterior-mean held-out log-likelihood over the masked region.
    pub model_ll: f64,
    /// Held-out log-likelihood of a homogeneous per-neuron Poisson baseline
    /// fit to the training spikes.
    pub baseline_ll: f64,
    /// (model - baseline) per unit of masked area.
    pub per_area: f64,
}

const RATE_FLOOR: f64 = 1e-12;

/// Score posterior samples on the held-out spikes: the Poisson log-likelihood
/// restricted to the masked region, averaged over samples, against the
/// homogeneous baseline.
pub fn heldout_log_likelihood(
    samples: &[PosteriorSample],
    train: &Dataset,
    test: &Dataset,
    mask: &SpeckledMask,
    grid: &WarpGrid,
) -> Result<HeldoutScore> {
    let n = train.n_neurons;
    let area = mask.total_area();
    if area == 0.0 || samples.is_empty() {
        return Err(Error::EmptyMask);
    }
    let masked_len: Vec<f64> = (0..n).map(|i| mask.masked_len(i)).collect();

    let mut model_ll = 0.0;
    for sample in samples {
        let mut ll = 0.0;
        for s in test.spikes() {
            let lam = intensity(s.time, s.neuron, &sample.events, &sample.params, grid)
                .max(RATE_FLOOR);
            ll += lam.ln();
        }
        for i in 0..n {
            ll -= sample.params.bg_rates[i] * masked_len[i];
        }
        for z in &sample.events {
            let w = grid.values[z.warp];
            for i in 0..n {
                let a = sample.params.weights[z.seq_type][i];
                if a == 0.0 {
                    continue;
                }
                let mean = z.time + w * sample.params.delays[z.seq_type][i];
                let sd = (w * w * sample.params.widths[z.seq_type][i]).sqrt();
                for (lo, hi) in mask.blocks(i) {
                    ll -= z.amplitude
                        * a
                        * (normal_cdf(hi, mean, sd) - normal_cdf(lo, mean, sd)).max(0.0);
                }
            }
        }
        model_ll += ll;
    }
    model_ll /= samples.len() as f64;

    let mut train_counts = vec![0usize; n];
    for s in train.spikes() {
        train_counts[s.neuron] += 1;
    }
    let mut baseline_ll = 0.0;
    let mut baseline_rates = vec![RATE_FLOOR; n];
    for i in 0..n {
        let open = (train.duration - masked_len[i]).max(0.0);
        if open > 0.0 {
            baseline_rates[i] = (train_counts[i] as f64 / open).max(RATE_FLOOR);
        }
        baseline_ll -= baseline_rates[i] * masked_len[i];
    }
    for s in test.spikes() {
        baseline_ll += baseline_rates[s.neuron].ln();
    }

    Ok(HeldoutScore {
        model_ll,
        baseline_ll,
        per_area: (model_ll - baseline_ll) / area,
    })
}
