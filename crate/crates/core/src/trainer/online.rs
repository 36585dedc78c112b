//! Online rule: one parameter update per time step.
//!
//! At every step the system is rolled forward once (encoder sampled, channel
//! sampled, decoder hidden neurons sampled, decoder outputs clamped to the
//! target), the summed output loss is folded into the learning signal, and
//! every neuron updates its eligibility trace, baseline, smoothed direction
//! and parameters.

use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::glm::SnnModel;
use crate::sampler::Sampler;
use crate::spike::SpikeTensor;

use super::rules::{
    apply_update, delta_update, eligibility_update, learning_signal_update, BaselineStats,
};
use super::{check_example, Hyperparams, JsccSystem, NeuronClass, Part};

/// Per-neuron learning state of one network.
#[derive(Clone, Debug)]
pub struct NetworkTrainState {
    pub eligibility: Vec<Vec<f64>>,
    pub stats: Vec<BaselineStats>,
    pub baseline: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
    grad: Vec<Vec<f64>>,
}

impl NetworkTrainState {
    fn new(model: &SnnModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
        NetworkTrainState {
            eligibility: zeros.clone(),
            stats: model
                .params()
                .iter()
                .map(|p| BaselineStats::zeros(p.len()))
                .collect(),
            baseline: zeros.clone(),
            delta: zeros.clone(),
            grad: zeros,
        }
    }

    fn reset_example(&mut self, reset_stats: bool) {
        for v in self
            .eligibility
            .iter_mut()
            .chain(&mut self.delta)
            .chain(&mut self.baseline)
        {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        if reset_stats {
            self.stats.iter_mut().for_each(BaselineStats::reset);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainerState {
    pub learning_signal: f64,
    pub encoder: Option<NetworkTrainState>,
    pub decoder: NetworkTrainState,
}

impl TrainerState {
    pub fn new(system: &JsccSystem) -> Self {
        TrainerState {
            learning_signal: 0.0,
            encoder: system.encoder.as_ref().map(NetworkTrainState::new),
            decoder: NetworkTrainState::new(&system.decoder),
        }
    }

    /// Clears the learning signal, eligibilities and directions. Baseline
    /// statistics persist unless `reset_baseline_per_example` is set.
    pub fn begin_example(&mut self, hp: &Hyperparams) {
        self.learning_signal = 0.0;
        if let Some(e) = &mut self.encoder {
            e.reset_example(hp.reset_baseline_per_example);
        }
        self.decoder.reset_example(hp.reset_baseline_per_example);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExampleOutcome {
    /// Summed output loss at every step.
    pub step_losses: Vec<f64>,
}

impl ExampleOutcome {
    pub fn total_loss(&self) -> f64 {
        self.step_losses.iter().sum()
    }
}

/// Trains on one `(u, v)` pair, updating parameters after every step.
pub fn train_example(
    system: &mut JsccSystem,
    channel: &dyn ChannelModel,
    u: &SpikeTensor,
    v: &SpikeTensor,
    hp: &Hyperparams,
    state: &mut TrainerState,
    sampler: &mut dyn Sampler,
) -> Result<ExampleOutcome> {
    check_example(system, u, v)?;
    state.begin_example(hp);
    let mut rollout = system.new_state();
    let decoder_classes: Vec<NeuronClass> = (0..system.decoder.topology().num_neurons())
        .map(|i| JsccSystem::class_of(Part::Decoder, system.decoder.topology().role(i)))
        .collect();
    let mut step_losses = Vec::with_capacity(u.num_steps());

    for t in 0..u.num_steps() {
        let v_t = v.column(t);
        let step = {
            let TrainerState {
                encoder, decoder, ..
            } = &mut *state;
            system.rollout_step(
                &mut rollout,
                channel,
                &u.column(t),
                Some(&v_t),
                sampler,
                |part, model, net, out| {
                    let grads = match part {
                        Part::Encoder => &mut encoder.as_mut().expect("encoder state").grad,
                        Part::Decoder => &mut decoder.grad,
                    };
                    for (i, g) in grads.iter_mut().enumerate() {
                        model.log_prob_grad(i, out.spikes[i], out.potentials[i], net, g);
                    }
                    Ok(())
                },
            )?
        };

        let losses = system
            .decoder
            .topology()
            .outputs()
            .iter()
            .map(|&i| -step.decoder.log_probs[i])
            .collect::<Vec<f64>>();
        let step_loss: f64 = losses.iter().sum();
        if !step_loss.is_finite() {
            return Err(Error::Divergence {
                iteration: 0,
                detail: format!("output loss {step_loss} at step {}", t + 1),
            });
        }
        step_losses.push(step_loss);
        state.learning_signal = learning_signal_update(state.learning_signal, &losses, hp.kappa);
        let signal = state.learning_signal;

        let TrainerState {
            encoder, decoder, ..
        } = &mut *state;
        let mut result = Ok(());
        system.for_each_params_mut(|part, i, params| {
            if result.is_ok() {
                let net = match part {
                    Part::Encoder => encoder.as_mut().expect("encoder state"),
                    Part::Decoder => &mut *decoder,
                };
                let class = match part {
                    Part::Decoder => decoder_classes[i],
                    Part::Encoder => NeuronClass::Stochastic,
                };
                result = update_neuron(net, i, params, signal, class, hp);
            }
        });
        result?;
    }
    Ok(ExampleOutcome { step_losses })
}

fn update_neuron(
    net: &mut NetworkTrainState,
    i: usize,
    params: &mut [f64],
    signal: f64,
    class: NeuronClass,
    hp: &Hyperparams,
) -> Result<()> {
    eligibility_update(&mut net.eligibility[i], &net.grad[i], hp.kappa)?;
    if hp.use_baseline && class == NeuronClass::Stochastic {
        net.stats[i].update(
            signal,
            &net.eligibility[i],
            hp.alpha,
            hp.epsilon,
            &mut net.baseline[i],
        )?;
    }
    delta_update(
        &mut net.delta[i],
        signal,
        &net.baseline[i],
        &net.eligibility[i],
        class,
        hp.kappa2,
    )?;
    apply_update(params, &net.delta[i], hp.eta)
}
