//! Split-merge Metropolis-Hastings moves over the collapsed partition.
//!
//! A pair of clustered spikes within `merge_window` of each other is drawn by
//! rejection sampling. If they share a cluster, a split is proposed: the pair
//! anchors two new clusters and the remaining members are allocated
//! sequentially, each with probability proportional to its restricted
//! conditional under the partial sub-clusters. Otherwise their two clusters
//! are merged, with the reverse split probability computed by replaying the
//! same sequential allocation against the existing membership. Latent events
//! are resampled from their conditional for any cluster the accepted move
//! creates.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::gibbs::state::{Assignment, ChainState};
use crate::gibbs::stats::{ClusterStats, ModelCtx};
use crate::gibbs::sweep::resample_latent_event;
use crate::math::ln_gamma;
use crate::model::Hyperparams;

const PAIR_TRIES: usize = 1000;

fn stats_for(state: &ChainState, members: &[usize], ctx: &ModelCtx) -> ClusterStats {
    let mut stats = ClusterStats::empty(ctx.n_hypotheses());
    for &s in members {
        let spike = state.spikes[s];
        stats.add(&ctx.spike_hypotheses(spike.time, spike.neuron));
    }
    stats
}

/// One split-merge proposal. Returns whether the move was accepted (a failed
/// pair draw counts as a rejection).
pub fn split_merge_move<R: Rng + ?Sized>(
    state: &mut ChainState,
    hyper: &Hyperparams,
    ctx: &ModelCtx,
    rng: &mut R,
) -> bool {
    let clustered: Vec<usize> = (0..state.n_spikes())
        .filter(|&s| matches!(state.assignments[s], Assignment::Cluster(_)))
        .collect();
    if clustered.len() < 2 {
        return false;
    }
    let mut pair = None;
    for _ in 0..PAIR_TRIES {
        let i = clustered[rng.random_range(0..clustered.len())];
        let j = clustered[rng.random_range(0..clustered.len())];
        if i != j && (state.spikes[i].time - state.spikes[j].time).abs() <= hyper.merge_window {
            pair = Some((i, j));
            break;
        }
    }
    let Some((i, j)) = pair else {
        return false;
    };
    let (Assignment::Cluster(ki), Assignment::Cluster(kj)) =
        (state.assignments[i], state.assignments[j])
    else {
        unreachable!("pair drawn from clustered spikes");
    };

    let alpha = hyper.amp_shape;
    let psi_t = hyper.seq_rate * state.duration;
    let k_star = state.n_clusters();

    if ki == kj {
        // Split: i and j anchor the two halves, the rest are allocated
        // sequentially in random order by their restricted conditionals.
        let size = state.cluster(ki).members.len();
        let mut others: Vec<usize> = state
            .cluster(ki)
            .members
            .iter()
            .copied()
            .filter(|&s| s != i && s != j)
            .collect();
        others.shuffle(rng);
        let mut left = vec![i];
        let mut right = vec![j];
        let mut left_stats = stats_for(state, &left, ctx);
        let mut right_stats = stats_for(state, &right, ctx);
        let mut log_q = 0.0;
        for &s in &others {
            let spike = state.spikes[s];
            let hyps = ctx.spike_hypotheses(spike.time, spike.neuron);
            let wl = (left.len() as f64 + alpha).ln() + left_stats.log_predictive(&hyps, ctx);
            let wr = (right.len() as f64 + alpha).ln() + right_stats.log_predictive(&hyps, ctx);
            let m = wl.max(wr);
            let lse = m + ((wl - m).exp() + (wr - m).exp()).ln();
            if rng.random::<f64>() < (wl - lse).exp() {
                left.push(s);
                left_stats.add(&hyps);
                log_q += wl - lse;
            } else {
                right.push(s);
                right_stats.add(&hyps);
                log_q += wr - lse;
            }
        }
        let old_marginal = state.cluster(ki).stats.log_marginal(ctx);

        let mut log_accept = log_v_ratio(k_star + 1, k_star, psi_t, hyper);
        log_accept += ln_gamma(left.len() as f64 + alpha) + ln_gamma(right.len() as f64 + alpha)
            - ln_gamma(size as f64 + alpha)
            - ln_gamma(alpha);
        log_accept += left_stats.log_marginal(ctx) + right_stats.log_marginal(ctx) - old_marginal;
        // Forward proposal probability exp(log_q); reverse merge is
        // deterministic.
        log_accept -= log_q;

        if log_accept >= 0.0 || rng.random::<f64>() < log_accept.exp() {
            state.dissolve_cluster(ki);
            for members in [left, right] {
                let anchor = members[0];
                let event = crate::model::LatentEvent {
                    time: state.spikes[anchor].time,
                    seq_type: 0,
                    amplitude: 1.0,
                    warp: 0,
                };
                let id = state.create_cluster_from_members(members, event, ctx);
                let event = resample_latent_event(&state.cluster(id).stats, hyper, ctx, rng);
                state.cluster_mut(id).event = event;
            }
            true
        } else {
            false
        }
    } else {
        // Merge the two clusters containing i and j.
        let si = state.cluster(ki).members.len();
        let sj = state.cluster(kj).members.len();
        let merged_size = si + sj;
        let mut merged_stats = state.cluster(ki).stats.clone();
        for &s in &state.cluster(kj).members {
            let spike = state.spikes[s];
            merged_stats.add(&ctx.spike_hypotheses(spike.time, spike.neuron));
        }
        // Reverse split probability: replay the sequential allocation over a
        // random order, forcing each spike back to the cluster it came from.
        let mut others: Vec<usize> = state
            .cluster(ki)
            .members
            .iter()
            .chain(state.cluster(kj).members.iter())
            .copied()
            .filter(|&s| s != i && s != j)
            .collect();
        others.shuffle(rng);
        let mut left = vec![i];
        let mut right = vec![j];
        let mut left_stats = stats_for(state, &left, ctx);
        let mut right_stats = stats_for(state, &right, ctx);
        let mut log_q = 0.0;
        for &s in &others {
            let spike = state.spikes[s];
            let hyps = ctx.spike_hypotheses(spike.time, spike.neuron);
            let wl = (left.len() as f64 + alpha).ln() + left_stats.log_predictive(&hyps, ctx);
            let wr = (right.len() as f64 + alpha).ln() + right_stats.log_predictive(&hyps, ctx);
            let m = wl.max(wr);
            let lse = m + ((wl - m).exp() + (wr - m).exp()).ln();
            if state.assignments[s] == Assignment::Cluster(ki) {
                left.push(s);
                left_stats.add(&hyps);
                log_q += wl - lse;
            } else {
                right.push(s);
                right_stats.add(&hyps);
                log_q += wr - lse;
            }
        }

        let mut log_accept = log_v_ratio(k_star - 1, k_star, psi_t, hyper);
        log_accept += ln_gamma(merged_size as f64 + alpha) + ln_gamma(alpha)
            - ln_gamma(si as f64 + alpha)
            - ln_gamma(sj as f64 + alpha);
        log_accept += merged_stats.log_marginal(ctx)
            - state.cluster(ki).stats.log_marginal(ctx)
            - state.cluster(kj).stats.log_marginal(ctx);
        // Reverse split proposal probability exp(log_q); forward merge is
        // deterministic.
        log_accept += log_q;

        if log_accept >= 0.0 || rng.random::<f64>() < log_accept.exp() {
            let mut members = state.dissolve_cluster(ki);
            members.extend(state.dissolve_cluster(kj));
            let event = crate::model::LatentEvent {
                time: state.spikes[i].time,
                seq_type: 0,
                amplitude: 1.0,
                warp: 0,
            };
            let id = state.create_cluster_from_members(members, event, ctx);
            let event = resample_latent_event(&state.cluster(id).stats, hyper, ctx, rng);
            state.cluster_mut(id).event = event;
            true
        } else {
            false
        }
    }
}

/// `log V(a) - log V(b)`, using the exact one-step ratio when |a - b| = 1.
fn log_v_ratio(a: usize, b: usize, psi_t: f64, hyper: &Hyperparams) -> f64 {
    // V(K+1)/V(K) = psi T (beta/(1+beta))^alpha exactly for this series.
    let step = psi_t.ln() + hyper.amp_shape * (hyper.amp_rate / (1.0 + hyper.amp_rate)).ln();
    match a as i64 - b as i64 {
        1 => step,
        -1 => -step,
        _ => {
            let h = |k: usize| {
                crate::gibbs::partition::log_v_with(k, psi_t, hyper.amp_shape, hyper.amp_rate)
            };
            h(a) - h(b)
        }
    }
}
