//! Training loop over a dataset: epochs, channel recalibration, periodic
//! evaluation and metrics records.
//!
//! One iteration is one training example. Each epoch visits the training set
//! in a fresh seeded order. With dataset calibration the channel noise power
//! is recomputed at the start of every epoch from the spike density of the
//! current encoder over the training set and held fixed within the epoch.
//! The final record uses a fresh calibration with the final parameters, the
//! same procedure [`final_evaluation`] runs for a stored checkpoint.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{measure_density, Calibration, Channel, ChannelConfig};
use crate::data_io::{delayed_target_spike_train, LabeledExample};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::sampler::{derive_seed, Sampler};
use crate::spike::SpikeTensor;

use super::episodic::{train_example_episodic, EpisodicBaseline};
use super::online::{train_example, ExampleOutcome, TrainerState};
use super::{Hyperparams, JsccSystem};

/// Stream identifiers for [`derive_seed`].
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const CALIBRATE: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const SWEEP: u64 = 6;
    pub const SPLIT: u64 = 7;
}

/// Epoch index reserved for the post-training calibration.
const FINAL_CALIBRATION: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Per-step online rule.
    #[default]
    Online,
    /// Whole-trajectory score-function update once per example.
    Episodic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Evaluate every this many iterations; 0 evaluates only at the end.
    pub eval_every: usize,
    pub hyperparams: Hyperparams,
    pub estimator: Estimator,
    pub channel: ChannelConfig,
    pub seed: u64,
    /// Inference repetitions per test example.
    pub votes: usize,
    /// Spike rate of the target train of the true class.
    pub target_rate: f64,
    /// Silent steps before the target train of the true class starts.
    pub target_delay: usize,
    /// `d_x / d_u`, recorded in the metrics.
    pub rate: f64,
}

/// One evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    /// Mean per-example loss since the previous record.
    pub train_loss: Option<f64>,
    pub test_accuracy: f64,
    /// `None` for the noiseless channel.
    pub snr_db: Option<f64>,
    /// `None` when every example is calibrated separately.
    pub sigma2: Option<f64>,
    pub rate: f64,
    pub seed: u64,
    pub hyperparams: Hyperparams,
}

/// Channel used for a set of transmissions.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelPlan {
    Fixed(Channel),
    /// Noise power set from each example's own encoded density.
    PerExample(ChannelConfig),
}

impl ChannelPlan {
    pub fn sigma2(&self) -> Option<f64> {
        match self {
            ChannelPlan::Fixed(c) => Some(c.sigma2()),
            ChannelPlan::PerExample(_) => None,
        }
    }

    /// Channel for transmitting `u`. Per-example plans encode `u` once with
    /// `sampler` to measure its density.
    pub fn channel_for(
        &self,
        system: &JsccSystem,
        u: &SpikeTensor,
        sampler: &mut dyn Sampler,
    ) -> Result<Channel> {
        match self {
            ChannelPlan::Fixed(c) => Ok(*c),
            ChannelPlan::PerExample(cfg) => {
                let x = system.encode(u, sampler)?;
                cfg.build(x.density())
            }
        }
    }
}

/// Measures the encoder's spike density over `examples` and builds the
/// channel. Example `i` is encoded with its own stream derived from
/// `(seed, i)`.
pub fn calibrate(
    system: &JsccSystem,
    examples: &[LabeledExample],
    config: &ChannelConfig,
    seed: u64,
) -> Result<ChannelPlan> {
    if config.snr_db().is_none() {
        return Ok(ChannelPlan::Fixed(config.build(1.0)?));
    }
    if config.calibration() == Calibration::PerExample {
        return Ok(ChannelPlan::PerExample(config.clone()));
    }
    let encoded: Vec<SpikeTensor> = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, i as u64));
            system.encode(&ex.spikes, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(ChannelPlan::Fixed(config.build(measure_density(&encoded))?))
}

fn epoch_calibration_seed(seed: u64, epoch: u64) -> u64 {
    derive_seed(seed, streams::CALIBRATE, epoch)
}

/// Calibrates on `calibration_set` with the current parameters and evaluates
/// `test`. Reproduces the last record of [`train`] for the same inputs.
pub fn final_evaluation(
    system: &JsccSystem,
    calibration_set: &[LabeledExample],
    test: &[LabeledExample],
    channel: &ChannelConfig,
    seed: u64,
    votes: usize,
) -> Result<(ChannelPlan, EvalReport)> {
    let plan = calibrate(
        system,
        calibration_set,
        channel,
        epoch_calibration_seed(seed, FINAL_CALIBRATION),
    )?;
    let report = evaluate(system, &plan, test, votes, seed)?;
    Ok((plan, report))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub system: JsccSystem,
    pub records: Vec<MetricsRecord>,
    pub final_plan: ChannelPlan,
    pub final_report: EvalReport,
}

enum Learner {
    Online(TrainerState),
    Episodic(EpisodicBaseline),
}

fn with_iteration(err: Error, iteration: usize) -> Error {
    match err {
        Error::Divergence { detail, .. } => Error::Divergence { iteration, detail },
        other => other,
    }
}

/// Trains for `cfg.iterations` examples and returns the trained system with
/// one metrics record per evaluation point (always including the last).
pub fn train(
    mut system: JsccSystem,
    train_set: &[LabeledExample],
    test_set: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.hyperparams.validate()?;
    if cfg.iterations > 0 && train_set.is_empty() {
        return Err(Error::Parameter("training set is empty".into()));
    }
    let targets: Vec<SpikeTensor> = train_set
        .iter()
        .map(|ex| {
            delayed_target_spike_train(
                ex.label,
                system.num_outputs(),
                ex.spikes.num_steps(),
                cfg.target_rate,
                cfg.target_delay,
            )
        })
        .collect::<Result<_>>()?;

    let mut learner = match cfg.estimator {
        Estimator::Online => Learner::Online(TrainerState::new(&system)),
        Estimator::Episodic => Learner::Episodic(EpisodicBaseline::new(
            &system,
            cfg.hyperparams.alpha,
            cfg.hyperparams.epsilon,
        )),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, streams::TRAIN, 0));
    let mut records = Vec::new();
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut order: Vec<usize> = Vec::new();
    let mut plan: Option<ChannelPlan> = None;

    let record = |iteration: usize,
                  plan: &ChannelPlan,
                  report: &EvalReport,
                  loss_sum: f64,
                  loss_count: usize| MetricsRecord {
        iteration,
        train_loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
        test_accuracy: report.accuracy,
        snr_db: cfg.channel.snr_db(),
        sigma2: plan.sigma2(),
        rate: cfg.rate,
        seed: cfg.seed,
        hyperparams: cfg.hyperparams.clone(),
    };

    for it in 0..cfg.iterations {
        let pos = it % train_set.len();
        if pos == 0 {
            let epoch = (it / train_set.len()) as u64;
            order = (0..train_set.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.seed,
                streams::SHUFFLE,
                epoch,
            )));
            plan = Some(
                calibrate(
                    &system,
                    train_set,
                    &cfg.channel,
                    epoch_calibration_seed(cfg.seed, epoch),
                )
                .map_err(|e| with_iteration(e, it))?,
            );
        }
        let current = plan.as_ref().expect("calibrated at epoch start");
        if cfg.eval_every > 0 && it % cfg.eval_every == 0 {
            let report = evaluate(&system, current, test_set, cfg.votes, cfg.seed)?;
            records.push(record(it, current, &report, loss_sum, loss_count));
            loss_sum = 0.0;
            loss_count = 0;
        }

        let idx = order[pos];
        let u = &train_set[idx].spikes;
        let v = &targets[idx];
        let channel = current.channel_for(&system, u, &mut rng)?;
        let outcome: ExampleOutcome = match &mut learner {
            Learner::Online(state) => train_example(
                &mut system,
                &channel,
                u,
                v,
                &cfg.hyperparams,
                state,
                &mut rng,
            ),
            Learner::Episodic(baseline) => train_example_episodic(
                &mut system,
                &channel,
                u,
                v,
                &cfg.hyperparams,
                baseline,
                &mut rng,
            ),
        }
        .map_err(|e| with_iteration(e, it + 1))?;
        let loss = outcome.total_loss();
        loss_sum += loss;
        if !loss_sum.is_finite() {
            return Err(Error::Divergence {
                iteration: it + 1,
                detail: format!("example loss {loss}, running loss {loss_sum}"),
            });
        }
        loss_count += 1;
    }

    let (final_plan, final_report) = final_evaluation(
        &system,
        train_set,
        test_set,
        &cfg.channel,
        cfg.seed,
        cfg.votes,
    )?;
    records.push(record(
        cfg.iterations,
        &final_plan,
        &final_report,
        loss_sum,
        loss_count,
    ));
    Ok(TrainOutcome {
        system,
        records,
        final_plan,
        final_report,
    })
}
