//! Evaluation harness: binned event scores, shift-tolerant ROC analysis
//! against ground-truth event times, and randomized hyperparameter search
//! scored by speckled held-out likelihood.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::driver::{heldout_log_likelihood, run_chain, RunConfig, SpeckledMask};
use crate::error::{Error, Result};
use crate::model::{Dataset, Hyperparams, LatentEvent};

/// Number of time bins covering `[0, duration]` at the given width.
pub fn n_bins(duration: f64, bin_width: f64) -> usize {
    (duration / bin_width).ceil().max(1.0) as usize
}

/// Posterior event score per time bin: the mean number of latent events per
/// bin across samples.
pub fn event_rate_vector(
    events_per_sample: &[Vec<LatentEvent>],
    duration: f64,
    bin_width: f64,
) -> Vec<f64> {
    let bins = n_bins(duration, bin_width);
    let mut score = vec![0.0; bins];
    for events in events_per_sample {
        for z in events {
            let b = ((z.time / bin_width) as usize).min(bins - 1);
            if z.time >= 0.0 && z.time <= duration {
                score[b] += 1.0;
            }
        }
    }
    let denom = events_per_sample.len().max(1) as f64;
    for v in &mut score {
        *v /= denom;
    }
    score
}

/// Binary labels per time bin: true where at least one ground-truth event
/// time falls in the bin.
pub fn bin_labels(true_times: &[f64], duration: f64, bin_width: f64) -> Vec<bool> {
    let bins = n_bins(duration, bin_width);
    let mut labels = vec![false; bins];
    for &t in true_times {
        if (0.0..=duration).contains(&t) {
            labels[((t / bin_width) as usize).min(bins - 1)] = true;
        }
    }
    labels
}

/// ROC AUC by the Mann-Whitney statistic with average ranks for ties.
/// Returns an error when either class is empty.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateTruth);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average rank within each tie group, 1-based.
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Best AUC over integer bin shifts in `[-max_shift, max_shift]`. A positive
/// shift delays the scores relative to the labels. Returns `(auc, shift)`;
/// ties prefer the smallest |shift| (then the earlier shift).
pub fn shifted_roc_auc(
    scores: &[f64],
    labels: &[bool],
    max_shift: usize,
) -> Result<(f64, i64)> {
    assert_eq!(scores.len(), labels.len());
    let n = scores.len();
    let mut best: Option<(f64, i64)> = None;
    let mut shifts: Vec<i64> = (-(max_shift as i64)..=max_shift as i64).collect();
    shifts.sort_by_key(|&s| (s.abs(), s));
    for s in shifts {
        // Pair label[i] with score[i - s] over the overlapping region.
        let (lab_lo, sc_lo) = if s >= 0 { (s as usize, 0) } else { (0, (-s) as usize) };
        let overlap = n - s.unsigned_abs() as usize;
        if overlap == 0 {
            continue;
        }
        let sub_scores = &scores[sc_lo..sc_lo + overlap];
        let sub_labels = &labels[lab_lo..lab_lo + overlap];
        let Ok(auc) = roc_auc(sub_scores, sub_labels) else {
            continue;
        };
        if best.map_or(true, |(b, _)| auc > b) {
            best = Some((auc, s));
        }
    }
    best.ok_or(Error::DegenerateTruth)
}

/// One sampled configuration of the randomized search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_types: usize,
    pub max_warp: f64,
    pub amp_shape: f64,
    pub amp_rate: f64,
    pub seq_rate: f64,
    pub width_scale: f64,
}

fn log_uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Draw one search configuration: `R ~ U{1..4}`, `w_F ~ U(1, 1.5)`, the
/// amplitude mean log-uniform on `[1e2, 1e4]` with variance equal to the mean
/// (unit rate), `psi` log-uniform on `[1e-3, 1e-1]`, and the width scale
/// log-uniform on `[1e-1, 1e1]` times the base scale.
pub fn sample_sweep_config<R: Rng + ?Sized>(base_width_scale: f64, rng: &mut R) -> SweepConfig {
    let amp_mean = log_uniform(1e2, 1e4, rng);
    SweepConfig {
        n_types: rng.random_range(1..=4),
        max_warp: 1.0 + rng.random::<f64>() * 0.5,
        amp_shape: amp_mean,
        amp_rate: 1.0,
        seq_rate: log_uniform(1e-3, 1e-1, rng),
        width_scale: base_width_scale * log_uniform(1e-1, 1e1, rng),
    }
}

impl SweepConfig {
    /// Apply this configuration on top of a base hyperparameter set.
    pub fn apply(&self, base: &Hyperparams) -> Hyperparams {
        let mut h = base.clone();
        h.n_types = self.n_types;
        h.max_warp = self.max_warp;
        h.amp_shape = self.amp_shape;
        h.amp_rate = self.amp_rate;
        h.seq_rate = self.seq_rate;
        h.width_scale = self.width_scale;
        h
    }
}

/// Outcome of one search configuration. A failed fit records the error and
/// scores as `None` rather than aborting the sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub index: usize,
    pub config: SweepConfig,
    /// RNG seed the fit ran under.
    pub seed: u64,
    /// Mean training log-likelihood over the retained samples.
    pub train_score: Option<f64>,
    /// Held-out improvement per unit masked area, when the fit succeeded.
    pub score: Option<f64>,
    pub error: Option<String>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub results: Vec<SweepResult>,
    /// Index of the best-scoring configuration; ties go to the lower index.
    pub best: Option<usize>,
}

/// Settings for the randomized hyperparameter search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSettings {
    pub n_configs: usize,
    pub mask_fraction: f64,
    pub block_length: f64,
    pub run: RunConfig,
}

/// Randomized search: draw configurations, fit each on speckled training
/// data, score on the held-out spikes, and report the best by held-out
/// improvement per area.
///
/// Each configuration runs under its own seed derived from `master_seed`, so
/// the whole sweep (config draws, mask, fits) replays exactly for a fixed
/// master seed.
pub fn hyperparameter_sweep(
    data: &Dataset,
    base: &Hyperparams,
    settings: &SweepSettings,
    master_seed: u64,
) -> Result<SweepOutcome> {
    let mut sample_rng = crate::dists::coordinator_rng(master_seed);
    let mask = SpeckledMask::generate(
        data.n_neurons,
        data.duration,
        settings.mask_fraction,
        settings.block_length,
        &mut sample_rng,
    )?;
    let (train, test) = mask.split(data)?;
    let mut results = Vec::with_capacity(settings.n_configs);
    for index in 0..settings.n_configs {
        let config = sample_sweep_config(base.width_scale, &mut sample_rng);
        let hyper = config.apply(base);
        let seed = master_seed.wrapping_add(index as u64 + 1);
        let start = std::time::Instant::now();
        let fit = (|| -> Result<(f64, f64)> {
            let grid = hyper.warp_grid()?;
            let mut rng = crate::dists::shard_rng(seed, 0);
            let run = run_chain(&train, &hyper, &settings.run, Some(&mask), &mut rng)?;
            let score = heldout_log_likelihood(&run.samples, &train, &test, &mask, &grid)?;
            let tail = run.train_ll.len().saturating_sub(run.samples.len());
            let train_score =
                run.train_ll[tail..].iter().sum::<f64>() / run.train_ll[tail..].len().max(1) as f64;
            Ok((score.per_area, train_score))
        })();
        let runtime_secs = start.elapsed().as_secs_f64();
        results.push(match fit {
            Ok((score, train_score)) => SweepResult {
                index,
                config,
                seed,
                train_score: Some(train_score),
                score: Some(score),
                error: None,
                runtime_secs,
            },
            Err(e) => SweepResult {
                index,
                config,
                seed,
                train_score: None,
                score: None,
                error: Some(e.to_string()),
                runtime_secs,
            },
        });
    }
    let best = results
        .iter()
        .filter_map(|r| r.score.map(|s| (r.index, s)))
        .fold(None::<(usize, f64)>, |acc, (i, s)| match acc {
            Some((_, bs)) if s <= bs => acc,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i);
    Ok(SweepOutcome { results, best })
}
