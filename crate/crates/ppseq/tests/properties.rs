//! Property tests for structural invariants of the public API.

use proptest::prelude::*;

use ppseq::dists::{coordinator_rng, shard_rng};
use ppseq::driver::SpeckledMask;
use ppseq::eval::roc_auc;
use ppseq::gibbs::{log_partition_prior, log_v};
use ppseq::generative::sample_global_params;
use ppseq::model::{intensity, log_likelihood, Dataset, Hyperparams, LatentEvent, Spike};
use ppseq::parallel::shard_dataset;

const T: f64 = 20.0;
const N: usize = 5;
const R: usize = 2;
const F: usize = 3;

fn hyper() -> Hyperparams {
    Hyperparams {
        seq_rate: 0.2,
        amp_shape: 10.0,
        amp_rate: 0.8,
        type_conc: 1.0,
        bg_conc: 1.0,
        weight_conc: 1.0,
        width_df: 4.0,
        width_scale: 0.05,
        delay_precision: 0.5,
        bg_shape: 2.0,
        bg_rate: 2.0,
        n_warps: F,
        max_warp: 1.4,
        warp_variance: 1.0,
        merge_window: 2.0,
        n_types: R,
        n_neurons: N,
        duration: T,
    }
}

prop_compose! {
    fn arb_event()(
        time in 0.0..T,
        seq_type in 0..R,
        amplitude in 0.5f64..50.0,
        warp in 0..F,
    ) -> LatentEvent {
        LatentEvent { time, seq_type, amplitude, warp }
    }
}

prop_compose! {
    fn arb_spikes(max: usize)(
        raw in prop::collection::vec((0..N, 0.0..T), 0..max),
    ) -> Vec<Spike> {
        raw.into_iter().map(|(neuron, time)| Spike { neuron, time }).collect()
    }
}

proptest! {
    #[test]
    fn likelihood_invariant_under_event_permutation(
        seed in 0u64..1000,
        events in prop::collection::vec(arb_event(), 0..8),
        spikes in arb_spikes(40),
        perm_seed in 0u64..1000,
    ) {
        let h = hyper();
        let grid = h.warp_grid().unwrap();
        let params = sample_global_params(&h, &mut coordinator_rng(seed));
        let data = Dataset::new(spikes, N, T).unwrap();
        let ll = log_likelihood(&data, &events, &params, &grid).unwrap();

        let mut shuffled = events.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut shard_rng(perm_seed, 0));
        let ll2 = log_likelihood(&data, &shuffled, &params, &grid).unwrap();
        prop_assert!((ll - ll2).abs() <= 1e-9 * (1.0 + ll.abs()));
    }

    #[test]
    fn intensity_is_additive_over_events(
        seed in 0u64..1000,
        events in prop::collection::vec(arb_event(), 0..6),
        t in 0.0..T,
        neuron in 0..N,
    ) {
        let h = hyper();
        let grid = h.warp_grid().unwrap();
        let params = sample_global_params(&h, &mut coordinator_rng(seed));
        let bg = params.bg_rates[neuron];
        let total = intensity(t, neuron, &events, &params, &grid);
        prop_assert!(total >= bg);
        let sum: f64 = events
            .iter()
            .map(|z| intensity(t, neuron, std::slice::from_ref(z), &params, &grid) - bg)
            .sum();
        prop_assert!((total - (bg + sum)).abs() <= 1e-9 * (1.0 + total));
    }

    #[test]
    fn auc_invariant_under_monotone_transform(
        scores in prop::collection::vec(-50.0f64..50.0, 2..60),
        labels in prop::collection::vec(any::<bool>(), 60),
        scale in 0.1f64..10.0,
        offset in -5.0f64..5.0,
    ) {
        let labels = &labels[..scores.len()];
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let base = roc_auc(&scores, labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| scale * s + offset).collect();
        let tanh: Vec<f64> = scores.iter().map(|s| (s / 25.0).tanh()).collect();
        prop_assert!((roc_auc(&affine, labels).unwrap() - base).abs() < 1e-12);
        prop_assert!((roc_auc(&tanh, labels).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn auc_of_negated_scores_is_complement(
        scores in prop::collection::vec(-50.0f64..50.0, 2..60),
        labels in prop::collection::vec(any::<bool>(), 60),
    ) {
        let labels = &labels[..scores.len()];
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let auc = roc_auc(&scores, labels).unwrap();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc + roc_auc(&neg, labels).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partition_prior_is_exchangeable(
        bg_size in 0usize..30,
        mut sizes in prop::collection::vec(1usize..10, 0..6),
        rot in 0usize..6,
    ) {
        let h = hyper();
        let a = log_partition_prior(bg_size, &sizes, 1.5, &h);
        let rot = rot % sizes.len().max(1);
        sizes.rotate_left(rot);
        let b = log_partition_prior(bg_size, &sizes, 1.5, &h);
        prop_assert!((a - b).abs() < 1e-12 || (a == b));
    }

    #[test]
    fn log_v_ratio_has_closed_form(k in 0usize..40, psi_t in 0.01f64..100.0) {
        let mut h = hyper();
        h.seq_rate = psi_t / h.duration;
        let step = log_v(k + 1, &h) - log_v(k, &h);
        let expect = psi_t.ln() + h.amp_shape * (h.amp_rate / (1.0 + h.amp_rate)).ln();
        prop_assert!((step - expect).abs() < 1e-8, "step {step} expect {expect}");
    }

    #[test]
    fn sharding_conserves_spikes(spikes in arb_spikes(80), p in 1usize..8) {
        let data = Dataset::new(spikes, N, T).unwrap();
        let shards = shard_dataset(&data, p).unwrap();
        prop_assert_eq!(shards.len(), p);
        prop_assert_eq!(shards.iter().map(|s| s.len()).sum::<usize>(), data.len());
        let len = T / p as f64;
        for s in &shards {
            prop_assert!(s.spikes().iter().all(|x| (0.0..=len).contains(&x.time)));
        }
    }

    #[test]
    fn mask_split_partitions_dataset(
        spikes in arb_spikes(80),
        fraction in 0.0f64..0.9,
        mask_seed in 0u64..1000,
    ) {
        let data = Dataset::new(spikes, N, T).unwrap();
        let mask = SpeckledMask::generate(N, T, fraction, 1.0, &mut coordinator_rng(mask_seed))
            .unwrap();
        let (train, test) = mask.split(&data).unwrap();
        prop_assert_eq!(train.len() + test.len(), data.len());
        for s in test.spikes() {
            prop_assert!(mask.contains(s.neuron, s.time));
        }
        for s in train.spikes() {
            prop_assert!(!mask.contains(s.neuron, s.time));
        }
        let area: f64 = (0..N).map(|n| mask.masked_len(n)).sum();
        prop_assert!(area <= fraction * N as f64 * T + 1e-9 + T);
    }

    #[test]
    fn spike_csv_round_trips(spikes in arb_spikes(60)) {
        let data = Dataset::new(spikes, N, T).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        ppseq::io::write_spikes_csv(&path, &data).unwrap();
        let back = ppseq::io::read_spikes_csv(&path, Some(N), Some(T)).unwrap();
        prop_assert_eq!(back.spikes(), data.spikes());
    }

    #[test]
    fn warp_grid_is_valid_distribution(
        n_warps in 1usize..12,
        max_warp in 1.0f64..2.5,
        variance in 0.1f64..5.0,
    ) {
        let mut h = hyper();
        h.n_warps = n_warps;
        h.max_warp = if n_warps == 1 { 1.0 } else { max_warp };
        h.warp_variance = variance;
        let grid = h.warp_grid().unwrap();
        prop_assert_eq!(grid.values.len(), n_warps);
        prop_assert!((grid.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(grid.values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(grid.values.iter().all(|&v| v > 0.0));
        // log-symmetric grid: w_f * w_{F+1-f} = 1
        for (a, b) in grid.values.iter().zip(grid.values.iter().rev()) {
            prop_assert!((a * b - 1.0).abs() < 1e-9);
        }
    }
}
