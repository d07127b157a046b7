//! Domain types, warp grid construction, intensity evaluation and the exact
//! log-likelihood of a spike train under a set of latent sequence events.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, normal_logpdf};

/// One observed marked event: a spike on neuron `neuron` at `time` seconds.
///
/// Neurons are 0-based in memory; the CSV interface uses 1-based ids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub neuron: usize,
    pub time: f64,
}

/// A latent sequence event: time, type, amplitude (expected spike count) and
/// warp index into a [`WarpGrid`]. The non-warped model is the special case
/// of a single unit warp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentEvent {
    pub time: f64,
    pub seq_type: usize,
    pub amplitude: f64,
    pub warp: usize,
}

/// Global parameters: background rates, type probabilities and per-neuron
/// response weights, delays and widths for each sequence type.
///
/// Indexing is `[type][neuron]` for the per-type arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams {
    /// Background rate per neuron, events/sec.
    pub bg_rates: Vec<f64>,
    /// Sequence type probabilities, an R-simplex.
    pub type_probs: Vec<f64>,
    /// Response weights `a[r][n]`; each row is an N-simplex.
    pub weights: Vec<Vec<f64>>,
    /// Response delays `b[r][n]`, seconds.
    pub delays: Vec<Vec<f64>>,
    /// Response widths `c[r][n]`, seconds^2; strictly positive.
    pub widths: Vec<Vec<f64>>,
}

impl GlobalParams {
    pub fn n_neurons(&self) -> usize {
        self.bg_rates.len()
    }

    pub fn n_types(&self) -> usize {
        self.type_probs.len()
    }

    /// Total background rate, summed over neurons.
    pub fn total_bg_rate(&self) -> f64 {
        self.bg_rates.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_neurons();
        let r = self.n_types();
        if self.bg_rates.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidParameter("bg_rates must be >= 0".into()));
        }
        check_simplex(&self.type_probs, "type_probs")?;
        for arrays in [&self.weights, &self.delays, &self.widths] {
            if arrays.len() != r || arrays.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidParameter(
                    "per-type arrays must be R x N".into(),
                ));
            }
        }
        for row in &self.weights {
            check_simplex(row, "weights")?;
        }
        if self.widths.iter().flatten().any(|&c| c <= 0.0) {
            return Err(Error::InvalidParameter("widths must be > 0".into()));
        }
        Ok(())
    }
}

fn check_simplex(p: &[f64], name: &str) -> Result<()> {
    if p.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidParameter(format!("{name} has negative mass")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "{name} sums to {s}, expected 1 within 1e-12"
        )));
    }
    Ok(())
}

/// All fixed prior quantities, plus warp-grid and split-merge settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Sequence event rate psi, events/sec.
    pub seq_rate: f64,
    /// Gamma shape for amplitudes (alpha).
    pub amp_shape: f64,
    /// Gamma rate for amplitudes (beta).
    pub amp_rate: f64,
    /// Dirichlet concentration for the type probabilities (gamma).
    pub type_conc: f64,
    /// Dirichlet concentration for the background neuron split (gamma_0).
    /// Used generatively only; the Gibbs update infers per-neuron gammas.
    pub bg_conc: f64,
    /// Dirichlet concentration for the per-type neuron weights (phi).
    pub weight_conc: f64,
    /// Scaled inverse-chi-squared degrees of freedom for widths (nu).
    pub width_df: f64,
    /// Scaled inverse-chi-squared scale for widths (sigma^2).
    pub width_scale: f64,
    /// Delay precision scale (kappa).
    pub delay_precision: f64,
    /// Gamma shape for the total background rate (alpha_0).
    pub bg_shape: f64,
    /// Gamma rate for the total background rate (beta_0).
    pub bg_rate: f64,
    /// Warp grid size F.
    pub n_warps: usize,
    /// Maximum warp value w_F.
    pub max_warp: f64,
    /// Variance of the warp probabilities, sigma_w^2.
    pub warp_variance: f64,
    /// Split-merge pairing window W, seconds.
    pub merge_window: f64,
    /// Number of sequence types R.
    pub n_types: usize,
    /// Number of neurons N.
    pub n_neurons: usize,
    /// Recording duration T, seconds.
    pub duration: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("seq_rate >= 0", self.seq_rate >= 0.0),
            ("amp_shape", self.amp_shape > 0.0),
            ("amp_rate", self.amp_rate > 0.0),
            ("type_conc", self.type_conc > 0.0),
            ("bg_conc", self.bg_conc > 0.0),
            ("weight_conc", self.weight_conc > 0.0),
            ("width_df", self.width_df > 0.0),
            ("width_scale", self.width_scale > 0.0),
            ("delay_precision", self.delay_precision > 0.0),
            ("bg_shape", self.bg_shape > 0.0),
            ("bg_rate", self.bg_rate > 0.0),
            ("merge_window", self.merge_window > 0.0),
            ("duration", self.duration > 0.0),
            ("n_warps >= 1", self.n_warps >= 1),
            ("max_warp >= 1", self.max_warp >= 1.0),
            ("warp_variance", self.warp_variance > 0.0),
            ("n_types >= 1", self.n_types >= 1),
            ("n_neurons >= 1", self.n_neurons >= 1),
        ];
        for (name, ok) in positive {
            if !ok {
                return Err(Error::InvalidParameter(format!("hyperparam {name}")));
            }
        }
        Ok(())
    }

    pub fn warp_grid(&self) -> Result<WarpGrid> {
        WarpGrid::build(self.n_warps, self.max_warp, self.warp_variance)
    }
}

/// Discrete grid of warp values with their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpGrid {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl WarpGrid {
    /// The F = 1 grid: a single unit warp with probability 1.
    pub fn unit() -> Self {
        WarpGrid {
            values: vec![1.0],
            probs: vec![1.0],
        }
    }

    /// Log-spaced grid `w_f = w_max^(-1 + 2(f-1)/(F-1))` with probabilities
    /// `eta_f` proportional to a Gaussian over the index. For F = 1 the
    /// formula degenerates and the unit grid is returned.
    pub fn build(f_count: usize, w_max: f64, sigma2: f64) -> Result<Self> {
        if f_count == 0 {
            return Err(Error::InvalidParameter("warp grid size F = 0".into()));
        }
        if w_max < 1.0 {
            return Err(Error::InvalidParameter(
                "max warp w_F < 1 makes the grid non-monotone".into(),
            ));
        }
        if sigma2 <= 0.0 {
            return Err(Error::InvalidParameter("warp variance must be > 0".into()));
        }
        if f_count == 1 {
            return Ok(Self::unit());
        }
        let fm1 = (f_count - 1) as f64;
        let values: Vec<f64> = (0..f_count)
            .map(|f| w_max.powf(-1.0 + 2.0 * f as f64 / fm1))
            .collect();
        // Center the index Gaussian so the middle of an odd grid gets the
        // peak probability; for odd F the middle value is exactly 1.
        let mid = fm1 / 2.0;
        let raw: Vec<f64> = (0..f_count)
            .map(|f| (-0.5 * (f as f64 - mid).powi(2) / sigma2).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        let probs = raw.into_iter().map(|p| p / total).collect();
        let mut grid = WarpGrid { values, probs };
        // Pin the center of an odd grid to exactly 1 (zero exponent).
        if f_count % 2 == 1 {
            grid.values[f_count / 2] = 1.0;
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn log_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.ln()).collect()
    }
}

/// An observed dataset in canonical form: spikes sorted ascending by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    spikes: Vec<Spike>,
    pub n_neurons: usize,
    pub duration: f64,
}

impl Dataset {
    /// Build a dataset, sorting the spikes into canonical order. Duplicate
    /// (neuron, time) pairs are permitted and kept as distinct spikes.
    pub fn new(mut spikes: Vec<Spike>, n_neurons: usize, duration: f64) -> Result<Self> {
        if duration <= 0.0 {
            return Err(Error::InvalidParameter("duration must be > 0".into()));
        }
        for s in &spikes {
            if s.neuron >= n_neurons {
                return Err(Error::InvalidParameter(format!(
                    "neuron index {} out of range (N = {n_neurons})",
                    s.neuron
                )));
            }
            if !(0.0..=duration).contains(&s.time) {
                return Err(Error::InvalidParameter(format!(
                    "spike time {} outside [0, {duration}]",
                    s.time
                )));
            }
        }
        spikes.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.neuron.cmp(&b.neuron)));
        Ok(Dataset {
            spikes,
            n_neurons,
            duration,
        })
    }

    pub fn spikes(&self) -> &[Spike] {
        &self.spikes
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }
}

/// Log of one warped Gaussian impulse response evaluated at `t`:
/// `log[A a N(t | tau + w b, w^2 c)]`. Returns -inf for zero weight.
pub fn log_impulse(
    t: f64,
    neuron: usize,
    event: &LatentEvent,
    params: &GlobalParams,
    grid: &WarpGrid,
) -> f64 {
    let r = event.seq_type;
    let a = params.weights[r][neuron];
    if a == 0.0 || event.amplitude == 0.0 {
        return f64::NEG_INFINITY;
    }
    let w = grid.values[event.warp];
    let mean = event.time + w * params.delays[r][neuron];
    let var = w * w * params.widths[r][neuron];
    event.amplitude.ln() + a.ln() + normal_logpdf(t, mean, var)
}

/// Conditional intensity of neuron `n` at time `t` given the latent events.
pub fn intensity(
    t: f64,
    neuron: usize,
    events: &[LatentEvent],
    params: &GlobalParams,
    grid: &WarpGrid,
) -> f64 {
    params.bg_rates[neuron]
        + events
            .iter()
            .map(|z| {
                let li = log_impulse(t, neuron, z, params, grid);
                if li == f64::NEG_INFINITY {
                    0.0
                } else {
                    li.exp()
                }
            })
            .sum::<f64>()
}

/// Exact log-likelihood of the dataset under the given latent events:
/// `sum_s log lambda_{n_s}(t_s) - sum_n lambda_n^0 T - sum_k A_k`.
///
/// The integral of each impulse response over the whole line is its
/// amplitude; boundary truncation is ignored (valid when sequences are short
/// relative to the interval). Computed in log space throughout.
pub fn log_likelihood(
    data: &Dataset,
    events: &[LatentEvent],
    params: &GlobalParams,
    grid: &WarpGrid,
) -> Result<f64> {
    let mut ll = 0.0;
    let mut terms: Vec<f64> = Vec::with_capacity(events.len() + 1);
    for s in data.spikes() {
        terms.clear();
        let bg = params.bg_rates[s.neuron];
        if bg > 0.0 {
            terms.push(bg.ln());
        }
        for z in events {
            terms.push(log_impulse(s.time, s.neuron, z, params, grid));
        }
        let log_rate = log_sum_exp(&terms);
        if log_rate == f64::NEG_INFINITY {
            return Err(Error::ZeroIntensity {
                neuron: s.neuron,
                time: s.time,
            });
        }
        ll += log_rate;
    }
    ll -= params.total_bg_rate() * data.duration;
    ll -= events.iter().map(|z| z.amplitude).sum::<f64>();
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_neuron_params(bg: f64, a: f64, b: f64, c: f64) -> GlobalParams {
        GlobalParams {
            bg_rates: vec![bg],
            type_probs: vec![1.0],
            weights: vec![vec![a]],
            delays: vec![vec![b]],
            widths: vec![vec![c]],
        }
    }

    #[test]
    fn warp_grid_f3() {
        let g = WarpGrid::build(3, 2.0, 1.0).unwrap();
        assert!((g.values[0] - 0.5).abs() < 1e-15);
        assert_eq!(g.values[1], 1.0);
        assert!((g.values[2] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn warp_grid_odd_middle_is_unit() {
        let g = WarpGrid::build(5, 3.7, 2.0).unwrap();
        assert_eq!(g.values[2], 1.0);
    }

    #[test]
    fn warp_grid_wide_variance_near_uniform() {
        // F = 10, w_F = 1.5, sigma_w^2 = 100: values within [1/1.5, 1.5] and
        // nearly uniform probabilities.
        let g = WarpGrid::build(10, 1.5, 100.0).unwrap();
        assert_eq!(g.len(), 10);
        for &w in &g.values {
            assert!(w >= 1.0 / 1.5 - 1e-12 && w <= 1.5 + 1e-12);
        }
        let max = g.probs.iter().cloned().fold(0.0, f64::max);
        let min = g.probs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 1.11, "ratio {}", max / min);
        let total: f64 = g.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn warp_grid_reversal_symmetry() {
        let g = WarpGrid::build(8, 2.5, 10.0).unwrap();
        let f = g.len();
        for i in 0..f {
            assert!((g.values[i] * g.values[f - 1 - i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn warp_grid_rejects_bad_input() {
        assert!(WarpGrid::build(0, 2.0, 1.0).is_err());
        assert!(WarpGrid::build(3, 0.9, 1.0).is_err());
        let unit = WarpGrid::build(1, 5.0, 1.0).unwrap();
        assert_eq!(unit.values, vec![1.0]);
        assert_eq!(unit.probs, vec![1.0]);
    }

    #[test]
    fn intensity_no_events_is_background() {
        let p = one_neuron_params(0.5, 1.0, 0.0, 1.0);
        let g = WarpGrid::unit();
        assert_eq!(intensity(3.0, 0, &[], &p, &g), 0.5);
    }

    #[test]
    fn intensity_gaussian_peak() {
        // Event tau=10, A=2, a=0.5, b=1, c=0.25, unit warp; at t=11 the
        // impulse contributes 2*0.5/sqrt(2 pi 0.25).
        let p = one_neuron_params(0.1, 0.5, 1.0, 0.25);
        let g = WarpGrid::unit();
        let z = LatentEvent {
            time: 10.0,
            seq_type: 0,
            amplitude: 2.0,
            warp: 0,
        };
        let expect = 0.1 + 1.0 / (2.0 * std::f64::consts::PI * 0.25).sqrt();
        assert!((intensity(11.0, 0, &[z], &p, &g) - expect).abs() < 1e-10);
        assert!((expect - 0.1 - 0.79788).abs() < 1e-4);
    }

    #[test]
    fn intensity_warped_peak() {
        // Same event with warp 2: peak at t = 10 + 2*1, std doubled.
        let p = one_neuron_params(0.1, 0.5, 1.0, 0.25);
        let g = WarpGrid {
            values: vec![2.0],
            probs: vec![1.0],
        };
        let z = LatentEvent {
            time: 10.0,
            seq_type: 0,
            amplitude: 2.0,
            warp: 0,
        };
        let expect = 0.1 + 1.0 / (2.0 * std::f64::consts::PI * 4.0 * 0.25).sqrt();
        assert!((intensity(12.0, 0, &[z], &p, &g) - expect).abs() < 1e-10);
        assert!((expect - 0.1 - 0.39894).abs() < 1e-4);
    }

    #[test]
    fn log_likelihood_empty() {
        let p = one_neuron_params(1.0, 1.0, 0.0, 1.0);
        let g = WarpGrid::unit();
        let d = Dataset::new(vec![], 1, 5.0).unwrap();
        assert!((log_likelihood(&d, &[], &p, &g).unwrap() + 5.0).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_one_spike() {
        let p = one_neuron_params(2.0, 1.0, 0.0, 1.0);
        let g = WarpGrid::unit();
        let d = Dataset::new(
            vec![Spike {
                neuron: 0,
                time: 0.4,
            }],
            1,
            1.0,
        )
        .unwrap();
        let ll = log_likelihood(&d, &[], &p, &g).unwrap();
        assert!((ll - (2.0_f64.ln() - 2.0)).abs() < 1e-12);
        assert!((ll + 1.30685).abs() < 1e-4);
    }

    #[test]
    fn log_likelihood_zero_rate_is_error() {
        let p = one_neuron_params(0.0, 1.0, 0.0, 1.0);
        let g = WarpGrid::unit();
        let d = Dataset::new(
            vec![Spike {
                neuron: 0,
                time: 0.4,
            }],
            1,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            log_likelihood(&d, &[], &p, &g),
            Err(Error::ZeroIntensity { .. })
        ));
    }

    #[test]
    fn dataset_sorts_and_validates() {
        let d = Dataset::new(
            vec![
                Spike {
                    neuron: 2,
                    time: 0.5,
                },
                Spike {
                    neuron: 0,
                    time: 0.25,
                },
            ],
            3,
            1.0,
        )
        .unwrap();
        assert_eq!(d.spikes()[0].neuron, 0);
        assert!(Dataset::new(
            vec![Spike {
                neuron: 5,
                time: 0.1
            }],
            3,
            1.0
        )
        .is_err());
    }
}
