use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ppseq::dists::{coordinator_rng, shard_rng};
use ppseq::driver::{
    anneal_amplitude_prior, co_occupancy, heldout_log_likelihood, run_chain, ChainRun,
    PosteriorSample, SpeckledMask,
};
use ppseq::eval::{
    bin_labels, event_rate_vector, hyperparameter_sweep, shifted_roc_auc, SweepSettings,
};
use ppseq::io::{
    read_events_csv, read_fit_config, read_posterior_jsonl, read_spikes_csv, write_events_csv,
    write_posterior_jsonl, write_spikes_csv, write_sweep_csv, FitConfig,
};
use ppseq::parallel::ParallelSampler;

/// Sequence detection in event streams via a Neyman-Scott point process.
#[derive(Parser)]
#[command(name = "ppseq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON fit configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $PPSEQ_OUTPUT_DIR or the current dir).
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset with ground-truth events.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit the model to a spike CSV.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Spike CSV (`neuron,time`, 1-based ids).
        #[arg(long)]
        spikes: PathBuf,
        /// Number of time shards (parallel engine); overrides the config.
        #[arg(long)]
        threads: Option<usize>,
        /// Held-out cell fraction; overrides the config.
        #[arg(long)]
        mask_fraction: Option<f64>,
        /// Independent chains to run (seeds seed, seed+1, ...).
        #[arg(long, default_value_t = 1)]
        chains: u64,
        /// Emit the co-occupancy matrix for spikes [start, end).
        #[arg(long, value_names = ["START", "END"], num_args = 2)]
        co_occupancy: Option<Vec<usize>>,
    },
    /// Score saved posterior samples: shifted ROC/AUC against ground-truth
    /// events, and held-out likelihood when a mask is available.
    Evaluate {
        /// Posterior JSONL written by `fit`.
        #[arg(long)]
        posterior: PathBuf,
        /// Ground-truth events CSV (from `generate`).
        #[arg(long)]
        events: Option<PathBuf>,
        /// Full spike CSV, for held-out scoring.
        #[arg(long)]
        spikes: Option<PathBuf>,
        /// Mask JSON written by `fit`.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        bin_width: f64,
        #[arg(long, default_value_t = 20)]
        max_shift: usize,
    },
    /// Randomized hyperparameter search with speckled validation.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        spikes: PathBuf,
        #[arg(long, default_value_t = 20)]
        n_configs: usize,
    },
}

fn output_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| std::env::var_os("PPSEQ_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output dir {}", dir.display()))?;
    Ok(dir)
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<FitConfig> {
    let mut config =
        read_fit_config(path).with_context(|| format!("reading config {}", path.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common } => generate(common),
        Command::Fit {
            common,
            spikes,
            threads,
            mask_fraction,
            chains,
            co_occupancy,
        } => fit(common, &spikes, threads, mask_fraction, chains, co_occupancy),
        Command::Evaluate {
            posterior,
            events,
            spikes,
            mask,
            bin_width,
            max_shift,
        } => evaluate(&posterior, events, spikes, mask, bin_width, max_shift),
        Command::Sweep {
            common,
            spikes,
            n_configs,
        } => sweep(common, &spikes, n_configs),
    }
}

fn generate(common: CommonArgs) -> Result<()> {
    let config = load_config(&common.config, common.seed)?;
    let dir = output_dir(common.output_dir)?;
    let grid = config.hyper.warp_grid()?;
    let mut rng = coordinator_rng(config.seed);
    let (data, params, truth) = ppseq::generative::simulate(&config.hyper, &grid, &mut rng)?;
    write_spikes_csv(dir.join("spikes.csv"), &data)?;
    write_events_csv(dir.join("events.csv"), &truth.events)?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(dir.join("params.json"))?),
        &params,
    )?;
    if truth.discard_fraction() > 0.01 {
        eprintln!(
            "warning: {:.2}% of generated spikes fell outside [0, T]",
            100.0 * truth.discard_fraction()
        );
    }
    println!(
        "generated {} spikes from {} events into {}",
        data.len(),
        truth.events.len(),
        dir.display()
    );
    Ok(())
}

fn write_trace_csv(path: &Path, run: &ChainRun) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "sweep,train_ll")?;
    for (i, ll) in run.train_ll.iter().enumerate() {
        writeln!(w, "{i},{ll}")?;
    }
    Ok(())
}

fn write_k_hist_csv(path: &Path, samples: &[PosteriorSample]) -> Result<()> {
    use std::io::Write;
    let mut hist = std::collections::BTreeMap::new();
    for s in samples {
        *hist.entry(s.events.len()).or_insert(0usize) += 1;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "k,count")?;
    for (k, count) in hist {
        writeln!(w, "{k},{count}")?;
    }
    Ok(())
}

fn fit(
    common: CommonArgs,
    spikes: &Path,
    threads: Option<usize>,
    mask_fraction: Option<f64>,
    chains: u64,
    co_range: Option<Vec<usize>>,
) -> Result<()> {
    let mut config = load_config(&common.config, common.seed)?;
    if let Some(f) = mask_fraction {
        config.mask_fraction = Some(f);
    }
    if let Some(t) = threads {
        config.n_shards = t;
    }
    let dir = output_dir(common.output_dir)?;
    let data = read_spikes_csv(
        spikes,
        Some(config.hyper.n_neurons),
        Some(config.hyper.duration),
    )
    .with_context(|| format!("reading spikes {}", spikes.display()))?;

    let masked = config.mask_fraction.map_or(false, |f| f > 0.0);
    if masked && config.n_shards > 1 {
        bail!("speckled masking requires a single shard (--threads 1)");
    }
    for chain in 0..chains {
        let seed = config.seed + chain;
        let mut mask_rng = coordinator_rng(seed ^ 0x5EED_AA55);
        let mask = if masked {
            Some(SpeckledMask::generate(
                data.n_neurons,
                data.duration,
                config.mask_fraction.unwrap(),
                config.block_length,
                &mut mask_rng,
            )?)
        } else {
            None
        };
        let (train, test) = match &mask {
            Some(m) => m.split(&data)?,
            None => (data.clone(), ppseq::Dataset::new(vec![], data.n_neurons, data.duration)?),
        };

        let suffix = |name: &str| dir.join(format!("{name}-chain{chain}.csv"));
        let (samples, run) = if config.n_shards > 1 {
            let run = fit_parallel(&train, &config, seed)?;
            (run.samples.clone(), run)
        } else {
            let mut rng = shard_rng(seed, 0);
            let run = run_chain(&train, &config.hyper, &config.run, mask.as_ref(), &mut rng)?;
            (run.samples.clone(), run)
        };

        let mut chain_config = config.clone();
        chain_config.seed = seed;
        write_posterior_jsonl(
            dir.join(format!("posterior-chain{chain}.jsonl")),
            &chain_config,
            &samples,
        )?;
        write_trace_csv(&suffix("trace"), &run)?;
        write_k_hist_csv(&suffix("k-hist"), &samples)?;

        if let Some(m) = &mask {
            serde_json::to_writer_pretty(
                std::io::BufWriter::new(std::fs::File::create(
                    dir.join(format!("mask-chain{chain}.json")),
                )?),
                m,
            )?;
            let grid = config.hyper.warp_grid()?;
            let score = heldout_log_likelihood(&samples, &train, &test, m, &grid)?;
            use std::io::Write;
            let mut w = std::io::BufWriter::new(std::fs::File::create(
                dir.join(format!("heldout-chain{chain}.json")),
            )?);
            serde_json::to_writer_pretty(&mut w, &score)?;
            w.flush()?;
            println!(
                "chain {chain}: heldout excess {:.4} nats per unit area",
                score.per_area
            );
        }

        if let Some(range) = &co_range {
            let (start, end) = (range[0], range[1].min(train.len()));
            if start >= end {
                bail!("empty co-occupancy range {start}..{}", range[1]);
            }
            let window: Vec<PosteriorSample> = samples
                .iter()
                .map(|s| PosteriorSample {
                    params: s.params.clone(),
                    events: s.events.clone(),
                    assignments: s.assignments[start..end].to_vec(),
                })
                .collect();
            let co = co_occupancy(&window);
            use std::io::Write;
            let mut w = std::io::BufWriter::new(std::fs::File::create(
                dir.join(format!("co-occupancy-chain{chain}.csv")),
            )?);
            for row in &co {
                let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
        }
        println!(
            "chain {chain}: {} samples, final train ll {:.3}",
            samples.len(),
            run.train_ll.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

/// Annealed fit on the sharded sampler (no masking support).
fn fit_parallel(train: &ppseq::Dataset, config: &FitConfig, seed: u64) -> Result<ChainRun> {
    let hyper = &config.hyper;
    let mut par = ParallelSampler::new(train, hyper, config.n_shards, seed)?;
    let mut train_ll = Vec::new();
    let mut samples = Vec::new();
    let run = &config.run;
    for temp in run.schedule.stage_temperatures() {
        let annealed = anneal_amplitude_prior(hyper, temp)?;
        for _ in 0..run.schedule.sweeps_per_stage {
            par.sweep_with(&annealed, run.order, run.sm_moves_anneal);
            train_ll.push(par.log_likelihood()?);
        }
    }
    for sweep in 0..run.final_sweeps {
        par.sweep(run.order, run.sm_moves_final);
        train_ll.push(par.log_likelihood()?);
        if run.final_sweeps - sweep <= run.keep_last {
            samples.push(par.posterior_sample());
        }
    }
    if train_ll.is_empty() {
        samples.push(par.posterior_sample());
        train_ll.push(par.log_likelihood()?);
    }
    Ok(ChainRun { samples, train_ll })
}

fn evaluate(
    posterior: &Path,
    events: Option<PathBuf>,
    spikes: Option<PathBuf>,
    mask: Option<PathBuf>,
    bin_width: f64,
    max_shift: usize,
) -> Result<()> {
    let (config, samples) = read_posterior_jsonl(posterior)
        .with_context(|| format!("reading posterior {}", posterior.display()))?;
    if samples.is_empty() {
        bail!("posterior file has no samples");
    }
    println!("samples: {}", samples.len());

    if let Some(events_path) = events {
        let truth = read_events_csv(&events_path)
            .with_context(|| format!("reading events {}", events_path.display()))?;
        let t = config.hyper.duration;
        let per_sample: Vec<Vec<ppseq::LatentEvent>> =
            samples.iter().map(|s| s.events.clone()).collect();
        let scores = event_rate_vector(&per_sample, t, bin_width);
        let truth_times: Vec<f64> = truth.iter().map(|z| z.time).collect();
        let labels = bin_labels(&truth_times, t, bin_width);
        let (auc, shift) = shifted_roc_auc(&scores, &labels, max_shift)?;
        println!("auc: {auc:.4} at shift {shift} bins (bin width {bin_width})");
    }

    if let (Some(spikes_path), Some(mask_path)) = (spikes, mask) {
        let data = read_spikes_csv(
            &spikes_path,
            Some(config.hyper.n_neurons),
            Some(config.hyper.duration),
        )?;
        let mask: SpeckledMask = serde_json::from_reader(std::io::BufReader::new(
            std::fs::File::open(&mask_path)
                .with_context(|| format!("reading mask {}", mask_path.display()))?,
        ))?;
        let (train, test) = mask.split(&data)?;
        let grid = config.hyper.warp_grid()?;
        let score = heldout_log_likelihood(&samples, &train, &test, &mask, &grid)?;
        println!(
            "heldout: model {:.4}, baseline {:.4}, excess per area {:.4}",
            score.model_ll, score.baseline_ll, score.per_area
        );
    }
    Ok(())
}

fn sweep(common: CommonArgs, spikes: &Path, n_configs: usize) -> Result<()> {
    let config = load_config(&common.config, common.seed)?;
    let dir = output_dir(common.output_dir)?;
    let data = read_spikes_csv(
        spikes,
        Some(config.hyper.n_neurons),
        Some(config.hyper.duration),
    )?;
    let settings = SweepSettings {
        n_configs,
        mask_fraction: config.mask_fraction.unwrap_or(0.075),
        block_length: config.block_length,
        run: config.run.clone(),
    };
    let outcome = hyperparameter_sweep(&data, &config.hyper, &settings, config.seed)?;
    write_sweep_csv(dir.join("sweep.csv"), &outcome.results)?;
    match outcome.best {
        Some(best) => {
            let r = &outcome.results[best];
            serde_json::to_writer_pretty(
                std::io::BufWriter::new(std::fs::File::create(dir.join("best-config.json"))?),
                &r.config,
            )?;
            println!(
                "best config {} (score {:.4}): {:?}",
                best,
                r.score.unwrap(),
                r.config
            );
        }
        None => println!("no configuration produced a score"),
    }
    Ok(())
}
