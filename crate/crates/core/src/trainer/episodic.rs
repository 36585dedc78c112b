//! Whole-trajectory score-function estimator.
//!
//! For one sampled trajectory with total output loss `L` and summed scores
//! `S_i = sum_t grad log p(s_i(t) | o_i(t))`, the update direction is
//! `(L - b_i) * S_i` for sampled neurons and `-S_i` for clamped decoder
//! outputs. Its expectation is the exact gradient of `E[L]` when `b_i` does
//! not depend on the current trajectory; the baseline here is built from
//! earlier trajectories only.

use crate::channel::ChannelModel;
use crate::error::Result;
use crate::sampler::Sampler;
use crate::spike::SpikeTensor;

use super::online::ExampleOutcome;
use super::rules::{apply_update, BaselineStats};
use super::{check_example, Hyperparams, JsccSystem, NeuronClass, Part, SystemGrads};

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEstimate {
    pub direction: SystemGrads,
    /// Summed scores `S_i`.
    pub scores: SystemGrads,
    pub step_losses: Vec<f64>,
}

impl TrajectoryEstimate {
    pub fn loss(&self) -> f64 {
        self.step_losses.iter().sum()
    }
}

/// Per-parameter `<L S^2> / <S^2>` averaged over past trajectories.
#[derive(Clone, Debug)]
pub struct EpisodicBaseline {
    alpha: f64,
    epsilon: f64,
    encoder: Vec<BaselineStats>,
    decoder: Vec<BaselineStats>,
}

impl EpisodicBaseline {
    pub fn new(system: &JsccSystem, alpha: f64, epsilon: f64) -> Self {
        let stats = |m: &crate::glm::SnnModel| {
            m.params()
                .iter()
                .map(|p| BaselineStats::zeros(p.len()))
                .collect()
        };
        EpisodicBaseline {
            alpha,
            epsilon,
            encoder: system.encoder.as_ref().map_or_else(Vec::new, stats),
            decoder: stats(&system.decoder),
        }
    }

    /// Baseline for the next trajectory.
    pub fn current(&self) -> SystemGrads {
        let ratio = |s: &BaselineStats| -> Vec<f64> {
            s.mean_sq
                .iter()
                .zip(&s.mean_weighted_sq)
                .map(|(&m, &w)| if m > self.epsilon { w / m } else { 0.0 })
                .collect()
        };
        SystemGrads {
            encoder: self.encoder.iter().map(ratio).collect(),
            decoder: self.decoder.iter().map(ratio).collect(),
        }
    }

    pub fn observe(&mut self, estimate: &TrajectoryEstimate) -> Result<()> {
        let loss = estimate.loss();
        let mut scratch = Vec::new();
        for (stats, score) in self
            .encoder
            .iter_mut()
            .zip(&estimate.scores.encoder)
            .chain(self.decoder.iter_mut().zip(&estimate.scores.decoder))
        {
            scratch.resize(score.len(), 0.0);
            stats.update(loss, score, self.alpha, self.epsilon, &mut scratch)?;
        }
        Ok(())
    }
}

/// Samples one trajectory with outputs clamped to `v` and returns its update
/// direction. Parameters are not modified.
pub fn trajectory_direction(
    system: &JsccSystem,
    channel: &dyn ChannelModel,
    u: &SpikeTensor,
    v: &SpikeTensor,
    sampler: &mut dyn Sampler,
    baseline: Option<&SystemGrads>,
) -> Result<TrajectoryEstimate> {
    check_example(system, u, v)?;
    let mut scores = SystemGrads::zeros_like(system);
    let mut buf = SystemGrads::zeros_like(system);
    let mut rollout = system.new_state();
    let mut step_losses = Vec::with_capacity(u.num_steps());

    for t in 0..u.num_steps() {
        let v_t = v.column(t);
        let step = system.rollout_step(
            &mut rollout,
            channel,
            &u.column(t),
            Some(&v_t),
            sampler,
            |part, model, net, out| {
                let (acc, tmp) = match part {
                    Part::Encoder => (&mut scores.encoder, &mut buf.encoder),
                    Part::Decoder => (&mut scores.decoder, &mut buf.decoder),
                };
                for (i, (a, g)) in acc.iter_mut().zip(tmp.iter_mut()).enumerate() {
                    model.log_prob_grad(i, out.spikes[i], out.potentials[i], net, g);
                    a.iter_mut().zip(g.iter()).for_each(|(x, y)| *x += y);
                }
                Ok(())
            },
        )?;
        step_losses.push(system.output_loss(&step.decoder));
    }

    let loss: f64 = step_losses.iter().sum();
    let mut direction = scores.clone();
    let topo = system.decoder.topology();
    for (part, neurons) in [
        (Part::Encoder, &mut direction.encoder),
        (Part::Decoder, &mut direction.decoder),
    ] {
        for (i, d) in neurons.iter_mut().enumerate() {
            let class = match part {
                Part::Encoder => NeuronClass::Stochastic,
                Part::Decoder => JsccSystem::class_of(part, topo.role(i)),
            };
            match class {
                NeuronClass::Observed => d.iter_mut().for_each(|x| *x = -*x),
                NeuronClass::Stochastic => {
                    let b = baseline.map(|b| match part {
                        Part::Encoder => &b.encoder[i],
                        Part::Decoder => &b.decoder[i],
                    });
                    for (idx, x) in d.iter_mut().enumerate() {
                        let shift = b.map_or(0.0, |b| b[idx]);
                        *x *= loss - shift;
                    }
                }
            }
        }
    }
    Ok(TrajectoryEstimate {
        direction,
        scores,
        step_losses,
    })
}

/// One descent step along the trajectory direction of a single example.
pub fn train_example_episodic(
    system: &mut JsccSystem,
    channel: &dyn ChannelModel,
    u: &SpikeTensor,
    v: &SpikeTensor,
    hp: &Hyperparams,
    baseline: &mut EpisodicBaseline,
    sampler: &mut dyn Sampler,
) -> Result<ExampleOutcome> {
    let b = hp.use_baseline.then(|| baseline.current());
    let estimate = trajectory_direction(system, channel, u, v, sampler, b.as_ref())?;
    if hp.use_baseline {
        baseline.observe(&estimate)?;
    }
    let mut result = Ok(());
    system.for_each_params_mut(|part, i, params| {
        if result.is_ok() {
            let d = match part {
                Part::Encoder => &estimate.direction.encoder[i],
                Part::Decoder => &estimate.direction.decoder[i],
            };
            result = apply_update(params, d, hp.eta);
        }
    });
    result?;
    Ok(ExampleOutcome {
        step_losses: estimate.step_losses,
    })
}
