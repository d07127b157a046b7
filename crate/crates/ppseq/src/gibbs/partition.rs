//! Prior over partitions of the spikes into background plus clusters,
//! marginalizing the latent events.

use crate::math::{ln_gamma, log_sum_exp, poisson_logpmf};
use crate::model::Hyperparams;

/// `log V(K*)` where
/// `V(K*) = sum_{K >= K*} Po(K; psi T) K!/(K-K*)! (beta/(1+beta))^(alpha K)`.
///
/// The series is accumulated in log space and truncated once a term falls
/// below 1e-16 of the running sum and `K` is past the mode
/// (`psi T (beta/(1+beta))^alpha + 10 sqrt(psi T)`).
pub fn log_v(k_star: usize, hyper: &Hyperparams) -> f64 {
    log_v_with(k_star, hyper.seq_rate * hyper.duration, hyper.amp_shape, hyper.amp_rate)
}

/// As [`log_v`] with an explicit `psi T` (shards cover T/P).
pub fn log_v_with(k_star: usize, psi_t: f64, amp_shape: f64, amp_rate: f64) -> f64 {
    if psi_t == 0.0 {
        // Po(K; 0) is a point mass at K = 0; only K* = 0 has mass.
        return if k_star == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let log_q = (amp_rate / (1.0 + amp_rate)).ln();
    let mode = psi_t * (amp_shape * log_q).exp() + 10.0 * psi_t.sqrt();
    let mut terms: Vec<f64> = Vec::new();
    let mut running = f64::NEG_INFINITY;
    let mut k = k_star;
    loop {
        let term = poisson_logpmf(k as u64, psi_t)
            + ln_gamma(k as f64 + 1.0)
            - ln_gamma((k - k_star) as f64 + 1.0)
            + k as f64 * amp_shape * log_q;
        terms.push(term);
        running = log_sum_exp(&[running, term]);
        if running.is_finite()
            && term < running + (1e-16f64).ln()
            && (k as f64) > mode
        {
            break;
        }
        k += 1;
        if k > k_star + 100_000 {
            break; // safety net; never reached for sane psi T
        }
    }
    log_sum_exp(&terms)
}

/// Log prior probability of a partition with the given background size and
/// (nonempty) cluster sizes:
/// `log V(K*) + log Po(S0; L T) + log S0! - log S! - (S - S0) log(1+beta)
///  + sum_k [lgamma(S_k + alpha) - lgamma(alpha)]`
/// where `L` is the total background rate.
pub fn log_partition_prior(
    bg_size: usize,
    cluster_sizes: &[usize],
    total_bg_rate: f64,
    hyper: &Hyperparams,
) -> f64 {
    let s = bg_size + cluster_sizes.iter().sum::<usize>();
    let lt = total_bg_rate * hyper.duration;
    let mut lp = log_v(cluster_sizes.len(), hyper);
    lp += poisson_logpmf(bg_size as u64, lt);
    lp += ln_gamma(bg_size as f64 + 1.0);
    lp -= ln_gamma(s as f64 + 1.0);
    lp -= (s - bg_size) as f64 * (1.0 + hyper.amp_rate).ln();
    for &size in cluster_sizes {
        debug_assert!(size >= 1, "clusters in a partition are nonempty");
        lp += ln_gamma(size as f64 + hyper.amp_shape) - ln_gamma(hyper.amp_shape);
    }
    lp
}
