//! File formats: spike and event CSVs, the JSON fit configuration, posterior
//! sample JSONL with run-length-encoded assignments, checkpoints, and sweep
//! result CSVs.
//!
//! Neuron ids, sequence types and warp indices are 1-based on disk and
//! 0-based in memory.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::driver::{PosteriorSample, RunConfig};
use crate::error::{Error, Result};
use crate::eval::SweepResult;
use crate::gibbs::{Assignment, ChainState};
use crate::model::{Dataset, Hyperparams, LatentEvent, Spike};

/// Parse a spike CSV (`neuron,time`, 1-based neuron ids). `n_neurons` and
/// `duration` default to the largest id and latest spike time seen.
pub fn parse_spikes<R: Read>(
    reader: R,
    n_neurons: Option<usize>,
    duration: Option<f64>,
) -> Result<Dataset> {
    let mut spikes = Vec::new();
    let mut max_neuron = 0usize;
    let mut max_time = 0.0f64;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 && trimmed.eq_ignore_ascii_case("neuron,time") {
            continue;
        }
        let mut fields = trimmed.split(',');
        let (Some(neuron_s), Some(time_s), None) =
            (fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 2 fields `neuron,time`, got `{trimmed}`"),
            });
        };
        let neuron: usize = neuron_s.trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad neuron id `{neuron_s}`"),
        })?;
        if neuron == 0 {
            return Err(Error::Parse {
                line: lineno,
                msg: "neuron ids are 1-based".into(),
            });
        }
        let time: f64 = time_s.trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad time `{time_s}`"),
        })?;
        if !time.is_finite() || time < 0.0 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("time {time} must be finite and >= 0"),
            });
        }
        max_neuron = max_neuron.max(neuron);
        max_time = max_time.max(time);
        spikes.push(Spike {
            neuron: neuron - 1,
            time,
        });
    }
    // Inferred shape: N from the largest id, T from the latest spike rounded
    // up to a whole second.
    let n = n_neurons.unwrap_or(max_neuron.max(1));
    let t = duration.unwrap_or(if max_time > 0.0 { max_time.ceil() } else { 1.0 });
    Dataset::new(spikes, n, t)
}

pub fn read_spikes_csv<P: AsRef<Path>>(
    path: P,
    n_neurons: Option<usize>,
    duration: Option<f64>,
) -> Result<Dataset> {
    parse_spikes(File::open(path)?, n_neurons, duration)
}

pub fn write_spikes_csv<P: AsRef<Path>>(path: P, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "neuron,time")?;
    for s in data.spikes() {
        writeln!(w, "{},{}", s.neuron + 1, s.time)?;
    }
    w.flush()?;
    Ok(())
}

/// Write latent events as `time,type,amplitude,warp` with 1-based type and
/// warp indices.
pub fn write_events_csv<P: AsRef<Path>>(path: P, events: &[LatentEvent]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "time,type,amplitude,warp")?;
    for z in events {
        writeln!(w, "{},{},{},{}", z.time, z.seq_type + 1, z.amplitude, z.warp + 1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_csv<P: AsRef<Path>>(path: P) -> Result<Vec<LatentEvent>> {
    let mut events = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || (i == 0 && trimmed.starts_with("time,")) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad {what} `{s}`"),
            })
        };
        let parse_idx = |s: &str, what: &str| -> Result<usize> {
            let v: usize = s.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad {what} `{s}`"),
            })?;
            if v == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("{what} is 1-based"),
                });
            }
            Ok(v - 1)
        };
        events.push(LatentEvent {
            time: parse_f(fields[0], "time")?,
            seq_type: parse_idx(fields[1], "type")?,
            amplitude: parse_f(fields[2], "amplitude")?,
            warp: parse_idx(fields[3], "warp")?,
        });
    }
    Ok(events)
}

/// Full fit configuration as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub hyper: Hyperparams,
    pub run: RunConfig,
    /// Fraction of (neuron, block) cells held out; `None` fits on all data.
    pub mask_fraction: Option<f64>,
    pub block_length: f64,
    pub seed: u64,
    pub n_shards: usize,
}

pub fn read_fit_config<P: AsRef<Path>>(path: P) -> Result<FitConfig> {
    let config: FitConfig = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    config.hyper.validate()?;
    Ok(config)
}

pub fn write_fit_config<P: AsRef<Path>>(path: P, config: &FitConfig) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, config)?;
    w.flush()?;
    Ok(())
}

/// Run-length encode assignments: `-1` is background, `k >= 0` indexes the
/// sample's event list.
fn rle_encode(assignments: &[Assignment]) -> Vec<(i64, u32)> {
    let mut out: Vec<(i64, u32)> = Vec::new();
    for a in assignments {
        let code = match a {
            Assignment::Background => -1,
            Assignment::Cluster(k) => *k as i64,
        };
        match out.last_mut() {
            Some((c, n)) if *c == code => *n += 1,
            _ => out.push((code, 1)),
        }
    }
    out
}

fn rle_decode(rle: &[(i64, u32)]) -> Vec<Assignment> {
    let mut out = Vec::new();
    for &(code, n) in rle {
        let a = if code < 0 {
            Assignment::Background
        } else {
            Assignment::Cluster(code as usize)
        };
        out.extend(std::iter::repeat(a).take(n as usize));
    }
    out
}

const POSTERIOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct PosteriorHeader {
    format_version: u32,
    seed: u64,
    config: FitConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct PosteriorLine {
    params: crate::model::GlobalParams,
    events: Vec<LatentEvent>,
    assignments_rle: Vec<(i64, u32)>,
}

/// Write posterior samples as JSONL: a header line carrying the format
/// version, seed and configuration, then one line per sample.
pub fn write_posterior_jsonl<P: AsRef<Path>>(
    path: P,
    config: &FitConfig,
    samples: &[PosteriorSample],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = PosteriorHeader {
        format_version: POSTERIOR_FORMAT_VERSION,
        seed: config.seed,
        config: config.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for s in samples {
        let line = PosteriorLine {
            params: s.params.clone(),
            events: s.events.clone(),
            assignments_rle: rle_encode(&s.assignments),
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a posterior JSONL file back. The format version must match.
pub fn read_posterior_jsonl<P: AsRef<Path>>(
    path: P,
) -> Result<(FitConfig, Vec<PosteriorSample>)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header_line = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty posterior file".into(),
    })??;
    let header: PosteriorHeader = serde_json::from_str(&header_line)?;
    if header.format_version != POSTERIOR_FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: header.format_version,
            expected: POSTERIOR_FORMAT_VERSION,
        });
    }
    let mut samples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: PosteriorLine = serde_json::from_str(&line)?;
        samples.push(PosteriorSample {
            params: raw.params,
            events: raw.events,
            assignments: rle_decode(&raw.assignments_rle),
        });
    }
    Ok((header.config, samples))
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// A resumable snapshot of one chain mid-run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Sweeps completed so far.
    pub sweep: usize,
    pub state: ChainState,
    pub rng: ChaCha8Rng,
}

pub fn write_checkpoint<P: AsRef<Path>>(path: P, checkpoint: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, checkpoint)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<P: AsRef<Path>>(path: P) -> Result<Checkpoint> {
    let checkpoint: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: checkpoint.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    Ok(checkpoint)
}

/// Write sweep results as a flat CSV, one row per configuration.
pub fn write_sweep_csv<P: AsRef<Path>>(path: P, results: &[SweepResult]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "index,seed,n_types,max_warp,amp_shape,amp_rate,seq_rate,width_scale,\
         train_score,score,runtime_secs,error"
    )?;
    for r in results {
        let opt = |v: Option<f64>| v.map_or(String::new(), |s| s.to_string());
        let error = r.error.as_deref().unwrap_or("").replace(',', ";");
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.seed,
            r.config.n_types,
            r.config.max_warp,
            r.config.amp_shape,
            r.config.amp_rate,
            r.config.seq_rate,
            r.config.width_scale,
            opt(r.train_score),
            opt(r.score),
            r.runtime_secs,
            error
        )?;
    }
    w.flush()?;
    Ok(())
}
