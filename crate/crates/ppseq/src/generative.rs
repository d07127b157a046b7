//! Forward simulation of the full generative process: global parameters,
//! latent sequence events and the induced spike train, with ground-truth
//! parent labels retained for evaluation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dists::{draw_categorical, draw_dirichlet, draw_gamma, draw_normal, draw_poisson, draw_scaled_inv_chi2};
use crate::error::Result;
use crate::model::{Dataset, GlobalParams, Hyperparams, LatentEvent, Spike, WarpGrid};

/// Ground-truth parent of a simulated spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parent {
    Background,
    /// Index into the simulated latent event list.
    Event(usize),
}

/// A forward simulation with exact per-spike attributions. Labels are kept
/// even for events that generated no other spikes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub events: Vec<LatentEvent>,
    /// Parent of each spike, aligned with the dataset's canonical order.
    pub labels: Vec<Parent>,
    /// Spikes that fell outside [0, T] and were discarded.
    pub discarded: usize,
}

impl GroundTruth {
    /// Fraction of generated spikes dropped at the boundary; expected to be
    /// well below 1% in the short-sequence regime.
    pub fn discard_fraction(&self) -> f64 {
        let kept = self.labels.len();
        if kept + self.discarded == 0 {
            0.0
        } else {
            self.discarded as f64 / (kept + self.discarded) as f64
        }
    }
}

/// Draw global parameters from the prior. The background rates are
/// constructed as `lambda * pi_n` with `lambda ~ Gamma(alpha_0, beta_0)` and
/// `pi ~ Dirichlet(gamma_0 1_N)`.
pub fn sample_global_params<R: Rng + ?Sized>(hyper: &Hyperparams, rng: &mut R) -> GlobalParams {
    let n = hyper.n_neurons;
    let r = hyper.n_types;
    let total_bg = draw_gamma(hyper.bg_shape, hyper.bg_rate, rng);
    let bg_split = draw_dirichlet(&vec![hyper.bg_conc; n], rng);
    let bg_rates = bg_split.iter().map(|p| total_bg * p).collect();
    let type_probs = draw_dirichlet(&vec![hyper.type_conc; r], rng);
    let mut weights = Vec::with_capacity(r);
    let mut delays = Vec::with_capacity(r);
    let mut widths = Vec::with_capacity(r);
    for _ in 0..r {
        weights.push(draw_dirichlet(&vec![hyper.weight_conc; n], rng));
        let mut c_row = Vec::with_capacity(n);
        let mut b_row = Vec::with_capacity(n);
        for _ in 0..n {
            let c = draw_scaled_inv_chi2(hyper.width_df, hyper.width_scale, rng);
            b_row.push(draw_normal(0.0, c / hyper.delay_precision, rng));
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

/// Variant used by prior-consistency (Geweke) checks: backgrounds are drawn
/// per neuron as iid `Gamma(alpha_0, beta_0)`, exactly the prior inverted by
/// the Gibbs background update. Everything else matches
/// [`sample_global_params`].
pub fn sample_global_params_iid_bg<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    rng: &mut R,
) -> GlobalParams {
    let mut params = sample_global_params(hyper, rng);
    params.bg_rates = (0..hyper.n_neurons)
        .map(|_| draw_gamma(hyper.bg_shape, hyper.bg_rate, rng))
        .collect();
    params
}

/// Draw latent events: count `K ~ Poisson(psi T)`, then iid times, types,
/// amplitudes and warp indices.
pub fn sample_latent_events<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    params: &GlobalParams,
    grid: &WarpGrid,
    rng: &mut R,
) -> Vec<LatentEvent> {
    let k = draw_poisson(hyper.seq_rate * hyper.duration, rng);
    (0..k)
        .map(|_| LatentEvent {
            time: rng.random::<f64>() * hyper.duration,
            seq_type: draw_categorical(&params.type_probs, rng),
            amplitude: draw_gamma(hyper.amp_shape, hyper.amp_rate, rng),
            warp: draw_categorical(&grid.probs, rng),
        })
        .collect()
}

/// Sample the spike train given latent events: background spikes plus the
/// induced spikes of each event, discarding anything outside [0, T].
pub fn sample_spikes<R: Rng + ?Sized>(
    events: &[LatentEvent],
    params: &GlobalParams,
    grid: &WarpGrid,
    duration: f64,
    rng: &mut R,
) -> Result<(Dataset, Vec<Parent>, usize)> {
    let mut labeled: Vec<(Spike, Parent)> = Vec::new();
    let mut discarded = 0usize;

    let total_bg = params.total_bg_rate();
    let n_bg = draw_poisson(total_bg * duration, rng);
    if n_bg > 0 {
        let probs: Vec<f64> = params.bg_rates.iter().map(|r| r / total_bg).collect();
        for _ in 0..n_bg {
            labeled.push((
                Spike {
                    neuron: draw_categorical(&probs, rng),
                    time: rng.random::<f64>() * duration,
                },
                Parent::Background,
            ));
        }
    }

    for (k, z) in events.iter().enumerate() {
        let count = draw_poisson(z.amplitude, rng);
        let w = grid.values[z.warp];
        for _ in 0..count {
            let n = draw_categorical(&params.weights[z.seq_type], rng);
            let mean = z.time + w * params.delays[z.seq_type][n];
            let var = w * w * params.widths[z.seq_type][n];
            let t = draw_normal(mean, var, rng);
            if (0.0..=duration).contains(&t) {
                labeled.push((Spike { neuron: n, time: t }, Parent::Event(k)));
            } else {
                discarded += 1;
            }
        }
    }

    labeled.sort_by(|a, b| {
        a.0.time
            .total_cmp(&b.0.time)
            .then(a.0.neuron.cmp(&b.0.neuron))
    });
    let labels = labeled.iter().map(|(_, p)| *p).collect();
    let spikes = labeled.into_iter().map(|(s, _)| s).collect();
    let data = Dataset::new(spikes, params.n_neurons(), duration)?;
    Ok((data, labels, discarded))
}

/// Full forward simulation: parameters from the prior (unless supplied),
/// latent events, spike train, and ground truth.
pub fn simulate<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    grid: &WarpGrid,
    rng: &mut R,
) -> Result<(Dataset, GlobalParams, GroundTruth)> {
    let params = sample_global_params(hyper, rng);
    simulate_with_params(hyper, &params, grid, rng).map(|(d, t)| (d, params, t))
}

/// Forward simulation holding the global parameters fixed.
pub fn simulate_with_params<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    params: &GlobalParams,
    grid: &WarpGrid,
    rng: &mut R,
) -> Result<(Dataset, GroundTruth)> {
    let events = sample_latent_events(hyper, params, grid, rng);
    let (data, labels, discarded) = sample_spikes(&events, params, grid, hyper.duration, rng)?;
    Ok((
        data,
        GroundTruth {
            events,
            labels,
            discarded,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_hyper() -> Hyperparams {
        Hyperparams {
            seq_rate: 0.05,
            amp_shape: 20.0,
            amp_rate: 1.0,
            type_conc: 1.0,
            bg_conc: 1.0,
            weight_conc: 1.0,
            width_df: 4.0,
            width_scale: 0.04,
            delay_precision: 1.0,
            bg_shape: 4.0,
            bg_rate: 2.0,
            n_warps: 1,
            max_warp: 1.0,
            warp_variance: 1.0,
            merge_window: 5.0,
            n_types: 2,
            n_neurons: 10,
            duration: 100.0,
        }
    }

    #[test]
    fn prior_draw_satisfies_invariants() {
        let hyper = test_hyper();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = sample_global_params(&hyper, &mut rng);
            p.validate().unwrap();
        }
    }

    #[test]
    fn dirichlet_concentration_limit() {
        // gamma_0 -> inf: background split approaches uniform.
        let mut hyper = test_hyper();
        hyper.bg_conc = 1e6;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = sample_global_params(&hyper, &mut rng);
        let total = p.total_bg_rate();
        for &b in &p.bg_rates {
            assert!((b / total - 0.1).abs() < 1e-2);
        }
    }

    #[test]
    fn bg_rate_monte_carlo_mean() {
        // lambda ~ Gamma(4, 2): mean 2, relative MC bound 3 sigma.
        let hyper = test_hyper();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| sample_global_params(&hyper, &mut rng).total_bg_rate())
            .sum::<f64>()
            / n as f64;
        let se = (4.0 / 4.0f64).sqrt() / (n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se);
    }

    #[test]
    fn zero_rate_yields_no_events() {
        let mut hyper = test_hyper();
        hyper.seq_rate = 0.0;
        let grid = WarpGrid::unit();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = sample_global_params(&hyper, &mut rng);
        for _ in 0..50 {
            assert!(sample_latent_events(&hyper, &params, &grid, &mut rng).is_empty());
        }
    }

    #[test]
    fn event_count_and_amplitude_means() {
        // psi = 0.02, T = 2000 -> mean K = 40; alpha = 225, beta = 7.5 ->
        // mean amplitude 30. Checked by Monte Carlo at 3 sigma.
        let mut hyper = test_hyper();
        hyper.seq_rate = 0.02;
        hyper.duration = 2000.0;
        hyper.amp_shape = 225.0;
        hyper.amp_rate = 7.5;
        let grid = WarpGrid::unit();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = sample_global_params(&hyper, &mut rng);
        let reps = 10_000;
        let mut k_sum = 0.0;
        let mut amp_sum = 0.0;
        let mut amp_n = 0.0;
        for _ in 0..reps {
            let evs = sample_latent_events(&hyper, &params, &grid, &mut rng);
            k_sum += evs.len() as f64;
            for z in &evs {
                amp_sum += z.amplitude;
                amp_n += 1.0;
            }
        }
        let k_mean = k_sum / reps as f64;
        let k_se = (40.0f64).sqrt() / (reps as f64).sqrt();
        assert!((k_mean - 40.0).abs() < 3.0 * k_se, "K mean {k_mean}");
        let amp_mean = amp_sum / amp_n;
        let amp_se = (225.0 / 7.5 / 7.5f64).sqrt() / amp_n.sqrt();
        assert!((amp_mean - 30.0).abs() < 3.0 * amp_se, "amp mean {amp_mean}");
    }

    #[test]
    fn empty_simulation() {
        let mut hyper = test_hyper();
        hyper.seq_rate = 0.0;
        let grid = WarpGrid::unit();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut params = sample_global_params(&hyper, &mut rng);
        params.bg_rates = vec![0.0; hyper.n_neurons];
        let (data, labels, _) =
            sample_spikes(&[], &params, &grid, hyper.duration, &mut rng).unwrap();
        assert!(data.is_empty());
        assert!(labels.is_empty());
    }

    #[test]
    fn induced_count_matches_amplitude() {
        // One event with A = 50 far from boundaries: mean induced count 50.
        let hyper = test_hyper();
        let grid = WarpGrid::unit();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = sample_global_params(&hyper, &mut rng);
        params.bg_rates = vec![0.0; hyper.n_neurons];
        let z = LatentEvent {
            time: 50.0,
            seq_type: 0,
            amplitude: 50.0,
            warp: 0,
        };
        let reps = 1000;
        let mut total = 0usize;
        for _ in 0..reps {
            let (d, _, disc) = sample_spikes(&[z], &params, &grid, 100.0, &mut rng).unwrap();
            total += d.len() + disc;
        }
        let mean = total as f64 / reps as f64;
        let se = (50.0f64).sqrt() / (reps as f64).sqrt();
        assert!((mean - 50.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn degenerate_weights_pin_neuron() {
        let hyper = test_hyper();
        let grid = WarpGrid::unit();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut params = sample_global_params(&hyper, &mut rng);
        params.bg_rates = vec![0.0; hyper.n_neurons];
        let mut w = vec![0.0; hyper.n_neurons];
        w[7] = 1.0;
        params.weights[0] = w;
        let z = LatentEvent {
            time: 50.0,
            seq_type: 0,
            amplitude: 30.0,
            warp: 0,
        };
        let (d, _, _) = sample_spikes(&[z], &params, &grid, 100.0, &mut rng).unwrap();
        assert!(d.spikes().iter().all(|s| s.neuron == 7));
    }

    #[test]
    fn simulate_is_deterministic() {
        let hyper = test_hyper();
        let grid = WarpGrid::unit();
        let a = simulate(&hyper, &grid, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = simulate(&hyper, &grid, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.2.events, b.2.events);
        assert_eq!(a.2.labels, b.2.labels);
    }

    #[test]
    fn zero_seq_rate_labels_all_background() {
        let mut hyper = test_hyper();
        hyper.seq_rate = 0.0;
        let grid = WarpGrid::unit();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (_, _, truth) = simulate(&hyper, &grid, &mut rng).unwrap();
        assert!(truth.labels.iter().all(|&l| l == Parent::Background));
    }

    #[test]
    fn background_rate_converges_per_neuron() {
        // Long T: empirical per-neuron background counts near lambda_n T.
        let mut hyper = test_hyper();
        hyper.duration = 5000.0;
        let grid = WarpGrid::unit();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = sample_global_params(&hyper, &mut rng);
        let (d, labels, _) = sample_spikes(&[], &params, &grid, hyper.duration, &mut rng).unwrap();
        assert_eq!(labels.len(), d.len());
        let mut counts = vec![0f64; hyper.n_neurons];
        for s in d.spikes() {
            counts[s.neuron] += 1.0;
        }
        for n in 0..hyper.n_neurons {
            let expect = params.bg_rates[n] * hyper.duration;
            assert!(
                (counts[n] - expect).abs() < 3.0 * expect.sqrt() + 3.0,
                "neuron {n}: {} vs {expect}",
                counts[n]
            );
        }
    }
}
