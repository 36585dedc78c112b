//! Rate decoding, accuracy measurement and the CSV tables written by runs.

use std::fs::File;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data_io::LabeledExample;
use crate::error::{Error, Result};
use crate::sampler::derive_seed;
use crate::spike::SpikeTensor;
use crate::trainer::run::{streams, ChannelPlan, MetricsRecord};
use crate::trainer::JsccSystem;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassificationResult {
    pub predicted_class: usize,
    /// Spikes of every output neuron within the horizon.
    pub spike_counts: Vec<usize>,
    /// `cumulative_counts[t][i]`: spikes of neuron `i` in steps `1..=t+1`.
    pub cumulative_counts: Vec<Vec<usize>>,
    /// No output neuron spiked within the horizon.
    pub no_spikes: bool,
}

/// Index of the largest count, lowest index on ties.
fn argmax(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Classifies by the output neuron with the most spikes in steps `1..=horizon`.
pub fn rate_decode(outputs: &SpikeTensor, horizon: usize) -> Result<ClassificationResult> {
    if horizon == 0 || horizon > outputs.num_steps() {
        return Err(Error::Parameter(format!(
            "horizon must lie in 1..={}, got {horizon}",
            outputs.num_steps()
        )));
    }
    let d = outputs.num_signals();
    let mut running = vec![0usize; d];
    let mut cumulative = Vec::with_capacity(horizon);
    for t in 0..horizon {
        for (i, c) in running.iter_mut().enumerate() {
            *c += usize::from(outputs.get(i, t));
        }
        cumulative.push(running.clone());
    }
    Ok(ClassificationResult {
        predicted_class: argmax(&running),
        no_spikes: running.iter().all(|&c| c == 0),
        spike_counts: running,
        cumulative_counts: cumulative,
    })
}

/// Decoded class at every horizon `1..=T`.
pub fn predictions_by_horizon(outputs: &SpikeTensor) -> Vec<usize> {
    let mut counts = vec![0usize; outputs.num_signals()];
    (0..outputs.num_steps())
        .map(|t| {
            for (i, c) in counts.iter_mut().enumerate() {
                *c += usize::from(outputs.get(i, t));
            }
            argmax(&counts)
        })
        .collect()
}

/// Outcome of evaluating a test set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Accuracy at the full horizon.
    pub accuracy: f64,
    /// `curve[t]`: accuracy when deciding after `t + 1` steps.
    pub curve: Vec<f64>,
    /// Final-horizon decision per example.
    pub predictions: Vec<usize>,
    /// Output spikes emitted over all examples and repetitions.
    pub output_spikes: usize,
}

/// Runs inference (outputs sampled, not clamped) on every test example.
///
/// With `votes > 1` each example is transmitted `votes` times and the
/// decision at each horizon is the most frequent class, lowest on ties.
/// Example `i` draws from its own stream derived from `(seed, i)`, so the
/// result does not depend on scheduling.
pub fn evaluate(
    system: &JsccSystem,
    plan: &ChannelPlan,
    test: &[LabeledExample],
    votes: usize,
    seed: u64,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Parameter(
            "cannot evaluate on an empty test set".into(),
        ));
    }
    if votes == 0 {
        return Err(Error::config("votes", "must be >= 1"));
    }
    let num_classes = system.num_outputs();
    let per_example: Vec<(Vec<usize>, usize)> = test
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, streams::EVAL, i as u64));
            let channel = plan.channel_for(system, &ex.spikes, &mut rng)?;
            let mut tallies = vec![vec![0usize; num_classes]; ex.spikes.num_steps()];
            let mut spikes = 0;
            for _ in 0..votes {
                let out = system.infer(&channel, &ex.spikes, &mut rng)?;
                spikes += out.count();
                for (tally, class) in tallies.iter_mut().zip(predictions_by_horizon(&out)) {
                    tally[class] += 1;
                }
            }
            Ok((tallies.iter().map(|t| argmax(t)).collect(), spikes))
        })
        .collect::<Result<_>>()?;

    let steps = per_example.iter().map(|(p, _)| p.len()).min().unwrap_or(0);
    let n = test.len() as f64;
    let curve: Vec<f64> = (0..steps)
        .map(|t| {
            let hits = per_example
                .iter()
                .zip(test)
                .filter(|((p, _), ex)| p[t] == ex.label)
                .count();
            hits as f64 / n
        })
        .collect();
    let predictions: Vec<usize> = per_example
        .iter()
        .map(|(p, _)| *p.last().unwrap_or(&0))
        .collect();
    let hits = predictions
        .iter()
        .zip(test)
        .filter(|(p, ex)| **p == ex.label)
        .count();
    Ok(EvalReport {
        accuracy: hits as f64 / n,
        curve,
        predictions,
        output_spikes: per_example.iter().map(|(_, s)| s).sum(),
    })
}

/// `inf` for the noiseless channel.
pub fn format_snr(snr_db: Option<f64>) -> String {
    snr_db.map_or_else(|| "inf".to_string(), |s| s.to_string())
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct IterationRow {
    iteration: usize,
    train_loss: Option<f64>,
    test_accuracy: f64,
    snr_db: String,
    sigma2: Option<f64>,
}

pub fn write_accuracy_vs_iteration(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    write_rows(
        path,
        records.iter().map(|r| IterationRow {
            iteration: r.iteration,
            train_loss: r.train_loss,
            test_accuracy: r.test_accuracy,
            snr_db: format_snr(r.snr_db),
            sigma2: r.sigma2,
        }),
    )
}

#[derive(Serialize)]
struct TimestepRow {
    timestep: usize,
    accuracy: f64,
}

pub fn write_accuracy_vs_timestep(path: &Path, curve: &[f64]) -> Result<()> {
    write_rows(
        path,
        curve.iter().enumerate().map(|(t, &a)| TimestepRow {
            timestep: t + 1,
            accuracy: a,
        }),
    )
}

/// One point of an SNR sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnrPoint {
    pub snr_db: Option<f64>,
    pub test_accuracy: f64,
    pub sigma2: Option<f64>,
    pub seed: u64,
}

#[derive(Serialize)]
struct SnrRow {
    snr_db: String,
    test_accuracy: f64,
    sigma2: Option<f64>,
    seed: u64,
}

pub fn write_accuracy_vs_snr(path: &Path, points: &[SnrPoint]) -> Result<()> {
    write_rows(
        path,
        points.iter().map(|p| SnrRow {
            snr_db: format_snr(p.snr_db),
            test_accuracy: p.test_accuracy,
            sigma2: p.sigma2,
            seed: p.seed,
        }),
    )
}

/// `accuracy[i][j]`: model trained at `train_snr[i]`, tested at `test_snr[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MismatchMatrix {
    pub train_snr: Vec<Option<f64>>,
    pub test_snr: Vec<Option<f64>>,
    pub accuracy: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct MismatchRow {
    train_snr_db: String,
    test_snr_db: String,
    test_accuracy: f64,
}

pub fn write_mismatch_matrix(path: &Path, m: &MismatchMatrix) -> Result<()> {
    let rows = m.train_snr.iter().zip(&m.accuracy).flat_map(|(tr, row)| {
        m.test_snr.iter().zip(row).map(move |(te, &a)| MismatchRow {
            train_snr_db: format_snr(*tr),
            test_snr_db: format_snr(*te),
            test_accuracy: a,
        })
    });
    write_rows(path, rows)
}
