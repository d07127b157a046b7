//! Collapsed assignment resampling and the conjugate conditionals for latent
//! events and global parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dists::{draw_dirichlet, draw_gamma, draw_normal, draw_scaled_inv_chi2};
use crate::gibbs::state::{Assignment, ChainState};
use crate::gibbs::stats::ModelCtx;
use crate::math::sample_log_categorical;
use crate::model::{GlobalParams, Hyperparams, LatentEvent, WarpGrid};

/// Spike processing order within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepOrder {
    /// Ascending spike time (the default).
    Ascending,
    /// A fresh uniform permutation per sweep.
    RandomPermutation,
}

impl Default for SweepOrder {
    fn default() -> Self {
        SweepOrder::Ascending
    }
}

/// Unnormalized log weights for reassigning one spike, in the order
/// `[background, live clusters (in live order)..., new cluster]`.
///
/// The spike must already be removed from its cluster. Clusters whose
/// predictive is -inf (e.g. zero neuron weight under every hypothesis) are
/// retained with weight -inf.
pub fn assignment_log_weights(
    spike_idx: usize,
    state: &ChainState,
    hyper: &Hyperparams,
    ctx: &ModelCtx,
) -> Vec<f64> {
    let spike = state.spikes[spike_idx];
    debug_assert_eq!(state.assignments[spike_idx], Assignment::Background);
    let hyps = ctx.spike_hypotheses(spike.time, spike.neuron);
    let beta = hyper.amp_rate;
    let alpha = hyper.amp_shape;

    let mut weights = Vec::with_capacity(state.n_clusters() + 2);
    // Background: (1 + beta) lambda_n.
    let bg = state.params.bg_rates[spike.neuron];
    weights.push(if bg > 0.0 {
        (1.0 + beta).ln() + bg.ln()
    } else {
        f64::NEG_INFINITY
    });
    // Existing clusters: (alpha + S_k) p(x_s | X_k, params).
    for &id in state.live_ids() {
        let cluster = state.cluster(id);
        weights.push(
            (alpha + cluster.stats.size as f64).ln() + cluster.stats.log_predictive(&hyps, ctx),
        );
    }
    // New cluster: alpha (beta/(1+beta))^alpha psi sum_{r,f} pi_r eta_f a.
    let f_count = ctx.grid.len();
    let mix: Vec<f64> = hyps
        .iter()
        .enumerate()
        .map(|(rf, sh)| {
            ctx.log_type_probs[rf / f_count] + ctx.log_warp_probs[rf % f_count] + sh.log_a
        })
        .collect();
    weights.push(
        alpha.ln()
            + alpha * (beta / (1.0 + beta)).ln()
            + hyper.seq_rate.ln()
            + crate::math::log_sum_exp(&mix),
    );
    weights
}

/// One pass of collapsed assignment resampling over every spike.
///
/// The caller is responsible for the statistics being current for
/// `state.params` (see [`ChainState::rebuild_stats`]).
pub fn assignment_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    hyper: &Hyperparams,
    ctx: &ModelCtx,
    order: SweepOrder,
    rng: &mut R,
) {
    let s = state.n_spikes();
    let mut indices: Vec<usize> = (0..s).collect();
    match order {
        SweepOrder::Ascending => {
            indices.sort_by(|&a, &b| state.spikes[a].time.total_cmp(&state.spikes[b].time));
        }
        SweepOrder::RandomPermutation => {
            // Fisher-Yates with the injected RNG for determinism.
            for i in (1..s).rev() {
                let j = rng.random_range(0..=i);
                indices.swap(i, j);
            }
        }
    }
    for idx in indices {
        state.remove_spike(idx, ctx);
        let weights = assignment_log_weights(idx, state, hyper, ctx);
        let choice = sample_log_categorical(&weights, rng);
        if choice == 0 {
            // Background; already there after removal.
        } else if choice <= state.n_clusters() {
            let id = state.live_ids()[choice - 1];
            state.add_to_cluster(idx, id, ctx);
        } else {
            state.create_cluster(idx, ctx);
        }
    }
}

/// Draw a latent event for a cluster: joint (type, warp) from the collapsed
/// categorical, then the time from its conjugate Gaussian, then the
/// amplitude from `Gamma(alpha + S_k, beta + 1)`.
pub fn resample_latent_event<R: Rng + ?Sized>(
    stats: &crate::gibbs::stats::ClusterStats,
    hyper: &Hyperparams,
    ctx: &ModelCtx,
    rng: &mut R,
) -> LatentEvent {
    debug_assert!(stats.size >= 1);
    let rf = sample_log_categorical(&stats.hypothesis_log_weights(ctx), rng);
    let f_count = ctx.grid.len();
    let (r, f) = (rf / f_count, rf % f_count);
    let acc = &stats.hyp[rf];
    let var = 1.0 / acc.sum_j;
    let mean = acc.sum_h * var;
    LatentEvent {
        time: draw_normal(mean, var, rng),
        seq_type: r,
        amplitude: draw_gamma(
            hyper.amp_shape + stats.size as f64,
            hyper.amp_rate + 1.0,
            rng,
        ),
        warp: f,
    }
}

/// Resample the latent event of every live cluster.
pub fn resample_events<R: Rng + ?Sized>(
    state: &mut ChainState,
    hyper: &Hyperparams,
    ctx: &ModelCtx,
    rng: &mut R,
) {
    for i in 0..state.n_clusters() {
        let id = state.live_ids()[i];
        let event = resample_latent_event(&state.cluster(id).stats, hyper, ctx, rng);
        state.cluster_mut(id).event = event;
    }
}

/// Sufficient statistics for the global-parameter conditionals, gatherable
/// across shards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalStats {
    /// Background spike count per neuron.
    pub bg_counts: Vec<usize>,
    /// Live cluster count per sequence type.
    pub type_counts: Vec<usize>,
    /// Spike count per (type, neuron).
    pub weight_counts: Vec<Vec<usize>>,
    /// Count, sum and squared sum of warped offsets `(t - tau)/w` per
    /// (type, neuron).
    pub offset_counts: Vec<Vec<usize>>,
    pub offset_sums: Vec<Vec<f64>>,
    pub offset_sq_sums: Vec<Vec<f64>>,
    /// Total exposure time (sums to T across shards).
    pub exposure: f64,
}

impl GlobalStats {
    pub fn zero(n_neurons: usize, n_types: usize) -> Self {
        GlobalStats {
            bg_counts: vec![0; n_neurons],
            type_counts: vec![0; n_types],
            weight_counts: vec![vec![0; n_neurons]; n_types],
            offset_counts: vec![vec![0; n_neurons]; n_types],
            offset_sums: vec![vec![0.0; n_neurons]; n_types],
            offset_sq_sums: vec![vec![0.0; n_neurons]; n_types],
            exposure: 0.0,
        }
    }

    pub fn merge(&mut self, other: &GlobalStats) {
        for (a, b) in self.bg_counts.iter_mut().zip(&other.bg_counts) {
            *a += b;
        }
        for (a, b) in self.type_counts.iter_mut().zip(&other.type_counts) {
            *a += b;
        }
        for r in 0..self.weight_counts.len() {
            for n in 0..self.weight_counts[r].len() {
                self.weight_counts[r][n] += other.weight_counts[r][n];
                self.offset_counts[r][n] += other.offset_counts[r][n];
                self.offset_sums[r][n] += other.offset_sums[r][n];
                self.offset_sq_sums[r][n] += other.offset_sq_sums[r][n];
            }
        }
        self.exposure += other.exposure;
    }
}

/// Collect the global-update statistics from one state.
pub fn gather_global_stats(state: &ChainState, grid: &WarpGrid) -> GlobalStats {
    let n = state.params.n_neurons();
    let r_count = state.params.n_types();
    let mut stats = GlobalStats::zero(n, r_count);
    stats.exposure = state.duration;
    for (idx, a) in state.assignments.iter().enumerate() {
        if matches!(a, Assignment::Background) {
            stats.bg_counts[state.spikes[idx].neuron] += 1;
        }
    }
    for &id in state.live_ids() {
        let cluster = state.cluster(id);
        let z = cluster.event;
        stats.type_counts[z.seq_type] += 1;
        let w = grid.values[z.warp];
        for &s in &cluster.members {
            let spike = state.spikes[s];
            let delta = (spike.time - z.time) / w;
            stats.weight_counts[z.seq_type][spike.neuron] += 1;
            stats.offset_counts[z.seq_type][spike.neuron] += 1;
            stats.offset_sums[z.seq_type][spike.neuron] += delta;
            stats.offset_sq_sums[z.seq_type][spike.neuron] += delta * delta;
        }
    }
    stats
}

/// Draw global parameters from their conjugate conditionals given gathered
/// statistics.
///
/// The width/delay update is the standard normal-scaled-inverse-chi-squared
/// posterior with prior mean zero:
/// `nu' = nu + S`, `kappa' = kappa + S`, `mu' = sum(d) / kappa'`,
/// `nu' s'^2 = nu s^2 + sum(d^2) - (sum d)^2 / kappa'`.
pub fn resample_globals_from_stats<R: Rng + ?Sized>(
    stats: &GlobalStats,
    hyper: &Hyperparams,
    rng: &mut R,
) -> GlobalParams {
    let n = stats.bg_counts.len();
    let r_count = stats.type_counts.len();
    let bg_rates = (0..n)
        .map(|i| {
            draw_gamma(
                hyper.bg_shape + stats.bg_counts[i] as f64,
                hyper.bg_rate + stats.exposure,
                rng,
            )
        })
        .collect();
    let type_conc: Vec<f64> = stats
        .type_counts
        .iter()
        .map(|&c| hyper.type_conc + c as f64)
        .collect();
    let type_probs = draw_dirichlet(&type_conc, rng);
    let mut weights = Vec::with_capacity(r_count);
    let mut delays = Vec::with_capacity(r_count);
    let mut widths = Vec::with_capacity(r_count);
    for r in 0..r_count {
        let conc: Vec<f64> = stats.weight_counts[r]
            .iter()
            .map(|&c| hyper.weight_conc + c as f64)
            .collect();
        weights.push(draw_dirichlet(&conc, rng));
        let mut b_row = Vec::with_capacity(n);
        let mut c_row = Vec::with_capacity(n);
        for i in 0..n {
            let s = stats.offset_counts[r][i] as f64;
            let sum_d = stats.offset_sums[r][i];
            let sum_d2 = stats.offset_sq_sums[r][i];
            let nu_post = hyper.width_df + s;
            let kappa_post = hyper.delay_precision + s;
            let mu_post = sum_d / kappa_post;
            let s2_post =
                (hyper.width_df * hyper.width_scale + sum_d2 - sum_d * sum_d / kappa_post)
                    / nu_post;
            let c = draw_scaled_inv_chi2(nu_post, s2_post, rng);
            b_row.push(draw_normal(mu_post, c / kappa_post, rng));
            c_row.push(c);
        }
        delays.push(b_row);
        widths.push(c_row);
    }
    GlobalParams {
        bg_rates,
        type_probs,
        weights,
        delays,
        widths,
    }
}

/// Resample the global parameters of one state in place.
pub fn resample_globals<R: Rng + ?Sized>(
    state: &mut ChainState,
    hyper: &Hyperparams,
    grid: &WarpGrid,
    rng: &mut R,
) {
    let stats = gather_global_stats(state, grid);
    state.params = resample_globals_from_stats(&stats, hyper, rng);
}

/// One full Gibbs sweep: rebuild statistics under the current parameters,
/// resample every assignment, then the latent events, then the globals.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    hyper: &Hyperparams,
    grid: &WarpGrid,
    order: SweepOrder,
    rng: &mut R,
) {
    let params = state.params.clone();
    let ctx = ModelCtx::new(&params, grid, state.duration);
    state.rebuild_stats(&ctx);
    assignment_sweep(state, hyper, &ctx, order, rng);
    resample_events(state, hyper, &ctx, rng);
    resample_globals(state, hyper, grid, rng);
}
