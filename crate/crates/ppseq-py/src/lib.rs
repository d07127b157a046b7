//! Python bindings: model setup, simulation, fitting and evaluation.
//!
//! Spikes cross the boundary as `(neuron, time)` tuples with 0-based neuron
//! indices; latent events as `(time, seq_type, amplitude, warp)` tuples.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ppseq::driver::{run_chain, AnnealSchedule, RunConfig, SpeckledMask};
use ppseq::gibbs::{Assignment, SweepOrder};
use ppseq::model;

type PySpike = (usize, f64);
type PyEvent = (f64, usize, f64, usize);

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_dataset(spikes: Vec<PySpike>, n_neurons: usize, duration: f64) -> PyResult<model::Dataset> {
    let spikes = spikes
        .into_iter()
        .map(|(neuron, time)| model::Spike { neuron, time })
        .collect();
    model::Dataset::new(spikes, n_neurons, duration).map_err(err)
}

fn to_events(events: Vec<PyEvent>) -> Vec<model::LatentEvent> {
    events
        .into_iter()
        .map(|(time, seq_type, amplitude, warp)| model::LatentEvent {
            time,
            seq_type,
            amplitude,
            warp,
        })
        .collect()
}

fn from_events(events: &[model::LatentEvent]) -> Vec<PyEvent> {
    events
        .iter()
        .map(|z| (z.time, z.seq_type, z.amplitude, z.warp))
        .collect()
}

/// Model hyperparameters; defaults give a small single-type model.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
pub struct Hyperparams {
    inner: model::Hyperparams,
}

#[pymethods]
impl Hyperparams {
    #[new]
    #[pyo3(signature = (
        n_neurons, duration, n_types=1, seq_rate=0.05, amp_shape=30.0, amp_rate=1.0,
        type_conc=1.0, bg_conc=1.0, weight_conc=1.0, width_df=4.0, width_scale=0.04,
        delay_precision=1.0, bg_shape=2.0, bg_rate=2.0, n_warps=1, max_warp=1.0,
        warp_variance=1.0, merge_window=2.0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_neurons: usize,
        duration: f64,
        n_types: usize,
        seq_rate: f64,
        amp_shape: f64,
        amp_rate: f64,
        type_conc: f64,
        bg_conc: f64,
        weight_conc: f64,
        width_df: f64,
        width_scale: f64,
        delay_precision: f64,
        bg_shape: f64,
        bg_rate: f64,
        n_warps: usize,
        max_warp: f64,
        warp_variance: f64,
        merge_window: f64,
    ) -> PyResult<Self> {
        let inner = model::Hyperparams {
            seq_rate,
            amp_shape,
            amp_rate,
            type_conc,
            bg_conc,
            weight_conc,
            width_df,
            width_scale,
            delay_precision,
            bg_shape,
            bg_rate,
            n_warps,
            max_warp,
            warp_variance,
            merge_window,
            n_types,
            n_neurons,
            duration,
        };
        inner.validate().map_err(err)?;
        Ok(Hyperparams { inner })
    }

    #[getter]
    fn n_neurons(&self) -> usize {
        self.inner.n_neurons
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }

    /// Warp grid values and probabilities.
    fn warp_grid(&self) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let grid = self.inner.warp_grid().map_err(err)?;
        Ok((grid.values, grid.probs))
    }

    fn __repr__(&self) -> String {
        format!(
            "Hyperparams(n_neurons={}, duration={}, n_types={}, seq_rate={})",
            self.inner.n_neurons, self.inner.duration, self.inner.n_types, self.inner.seq_rate
        )
    }
}

/// Global parameters of one model draw or posterior sample.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
pub struct Params {
    inner: model::GlobalParams,
}

#[pymethods]
impl Params {
    #[getter]
    fn bg_rates(&self) -> Vec<f64> {
        self.inner.bg_rates.clone()
    }

    #[getter]
    fn type_probs(&self) -> Vec<f64> {
        self.inner.type_probs.clone()
    }

    #[getter]
    fn weights(&self) -> Vec<Vec<f64>> {
        self.inner.weights.clone()
    }

    #[getter]
    fn delays(&self) -> Vec<Vec<f64>> {
        self.inner.delays.clone()
    }

    #[getter]
    fn widths(&self) -> Vec<Vec<f64>> {
        self.inner.widths.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }
}

/// Result of a fit: retained posterior samples plus the training
/// log-likelihood trace.
#[pyclass]
pub struct FitResult {
    samples: Vec<ppseq::driver::PosteriorSample>,
    train_ll: Vec<f64>,
}

#[pymethods]
impl FitResult {
    #[getter]
    fn n_samples(&self) -> usize {
        self.samples.len()
    }

    #[getter]
    fn train_ll(&self) -> Vec<f64> {
        self.train_ll.clone()
    }

    fn events(&self, sample: usize) -> PyResult<Vec<PyEvent>> {
        self.samples
            .get(sample)
            .map(|s| from_events(&s.events))
            .ok_or_else(|| err(format!("sample index {sample} out of range")))
    }

    /// Assignment per spike: -1 background, otherwise an index into the
    /// sample's event list.
    fn assignments(&self, sample: usize) -> PyResult<Vec<i64>> {
        self.samples
            .get(sample)
            .map(|s| {
                s.assignments
                    .iter()
                    .map(|a| match a {
                        Assignment::Background => -1,
                        Assignment::Cluster(k) => *k as i64,
                    })
                    .collect()
            })
            .ok_or_else(|| err(format!("sample index {sample} out of range")))
    }

    fn params(&self, sample: usize) -> PyResult<Params> {
        self.samples
            .get(sample)
            .map(|s| Params {
                inner: s.params.clone(),
            })
            .ok_or_else(|| err(format!("sample index {sample} out of range")))
    }
}

/// Simulate a dataset: returns (spikes, true events, true params).
#[pyfunction]
fn simulate(hyper: &Hyperparams, seed: u64) -> PyResult<(Vec<PySpike>, Vec<PyEvent>, Params)> {
    let grid = hyper.inner.warp_grid().map_err(err)?;
    let mut rng = ppseq::dists::coordinator_rng(seed);
    let (data, params, truth) =
        ppseq::generative::simulate(&hyper.inner, &grid, &mut rng).map_err(err)?;
    let spikes = data.spikes().iter().map(|s| (s.neuron, s.time)).collect();
    Ok((spikes, from_events(&truth.events), Params { inner: params }))
}

/// Exact log-likelihood of spikes under latent events and parameters.
#[pyfunction]
fn log_likelihood(
    spikes: Vec<PySpike>,
    events: Vec<PyEvent>,
    params: &Params,
    hyper: &Hyperparams,
) -> PyResult<f64> {
    let data = to_dataset(spikes, hyper.inner.n_neurons, hyper.inner.duration)?;
    let grid = hyper.inner.warp_grid().map_err(err)?;
    model::log_likelihood(&data, &to_events(events), &params.inner, &grid).map_err(err)
}

/// Fit the model with the annealed collapsed Gibbs sampler.
#[pyfunction]
#[pyo3(signature = (
    spikes, hyper, seed, n_stages=5, sweeps_per_stage=20, initial_temp=100.0,
    final_sweeps=40, keep_last=20, sm_moves_anneal=5, sm_moves_final=20,
    mask_fraction=0.0, block_length=1.0
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    spikes: Vec<PySpike>,
    hyper: &Hyperparams,
    seed: u64,
    n_stages: usize,
    sweeps_per_stage: usize,
    initial_temp: f64,
    final_sweeps: usize,
    keep_last: usize,
    sm_moves_anneal: usize,
    sm_moves_final: usize,
    mask_fraction: f64,
    block_length: f64,
) -> PyResult<FitResult> {
    let data = to_dataset(spikes, hyper.inner.n_neurons, hyper.inner.duration)?;
    let config = RunConfig {
        schedule: AnnealSchedule {
            initial_temp,
            n_stages,
            sweeps_per_stage,
        },
        final_sweeps,
        keep_last,
        sm_moves_anneal,
        sm_moves_final,
        order: SweepOrder::Ascending,
    };
    let mut rng = ppseq::dists::shard_rng(seed, 0);
    let (train, mask) = if mask_fraction > 0.0 {
        let mask = SpeckledMask::generate(
            data.n_neurons,
            data.duration,
            mask_fraction,
            block_length,
            &mut rng,
        )
        .map_err(err)?;
        let (train, _) = mask.split(&data).map_err(err)?;
        (train, Some(mask))
    } else {
        (data, None)
    };
    let run = run_chain(&train, &hyper.inner, &config, mask.as_ref(), &mut rng).map_err(err)?;
    Ok(FitResult {
        samples: run.samples,
        train_ll: run.train_ll,
    })
}

/// Mean per-bin event count across samples of event-time lists.
#[pyfunction]
fn event_rate_vector(
    event_times: Vec<Vec<f64>>,
    duration: f64,
    bin_width: f64,
) -> PyResult<Vec<f64>> {
    let samples: Vec<Vec<model::LatentEvent>> = event_times
        .into_iter()
        .map(|times| {
            times
                .into_iter()
                .map(|time| model::LatentEvent {
                    time,
                    seq_type: 0,
                    amplitude: 1.0,
                    warp: 0,
                })
                .collect()
        })
        .collect();
    Ok(ppseq::eval::event_rate_vector(&samples, duration, bin_width))
}

/// Per-bin truth labels for ground-truth event times.
#[pyfunction]
fn bin_labels(times: Vec<f64>, duration: f64, bin_width: f64) -> Vec<bool> {
    ppseq::eval::bin_labels(&times, duration, bin_width)
}

/// Best AUC over bin shifts; returns (auc, shift).
#[pyfunction]
fn shifted_roc_auc(scores: Vec<f64>, labels: Vec<bool>, max_shift: usize) -> PyResult<(f64, i64)> {
    ppseq::eval::shifted_roc_auc(&scores, &labels, max_shift).map_err(err)
}

#[pymodule]
fn ppseq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Hyperparams>()?;
    m.add_class::<Params>()?;
    m.add_class::<FitResult>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(event_rate_vector, m)?)?;
    m.add_function(wrap_pyfunction!(bin_labels, m)?)?;
    m.add_function(wrap_pyfunction!(shifted_roc_auc, m)?)?;
    Ok(())
}
