//! End-to-end training of encoder and decoder through the channel.
//!
//! [`online`] runs the per-step rule with smoothed learning signal,
//! eligibility traces, adaptive baselines and smoothed updates. [`episodic`]
//! holds the whole-trajectory score-function estimator whose expectation is
//! checked against the enumeration in [`oracle`].

pub mod episodic;
pub mod online;
pub mod oracle;
pub mod rules;
pub mod run;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelHistory, ChannelModel};
use crate::error::{check_dim, Error, Result};
use crate::filters::FilterConfig;
use crate::glm::{NetworkState, NeuronRole, SnnModel, StepOutput};
use crate::sampler::Sampler;
use crate::spike::SpikeTensor;

pub use rules::NeuronClass;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Learning rate.
    pub eta: f64,
    /// Smoothing of the learning signal and of the eligibility traces.
    pub kappa: f64,
    /// Smoothing of the update direction.
    pub kappa2: f64,
    /// Averaging constant of the baseline statistics.
    pub alpha: f64,
    /// Guard below which `<e^2>` counts as zero.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_true")]
    pub use_baseline: bool,
    /// Reset baseline statistics at every example instead of carrying them.
    #[serde(default)]
    pub reset_baseline_per_example: bool,
}

fn default_epsilon() -> f64 {
    1e-12
}

fn default_true() -> bool {
    true
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            eta: 0.05,
            kappa: 0.2,
            kappa2: 0.2,
            alpha: 0.9,
            epsilon: default_epsilon(),
            use_baseline: true,
            reset_baseline_per_example: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(
                    format!("hyperparams.{name}"),
                    format!("must lie in [0, 1), got {v}"),
                ))
            }
        };
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::config(
                "hyperparams.eta",
                format!("must be finite and >= 0, got {}", self.eta),
            ));
        }
        unit("kappa", self.kappa)?;
        unit("kappa2", self.kappa2)?;
        unit("alpha", self.alpha)?;
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::config(
                "hyperparams.epsilon",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// Layer sizes of the end-to-end link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Exogenous source signals `d_u`.
    pub inputs: usize,
    /// Transmitted signals `d_x`; ignored when `uncoded`.
    pub channel_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    /// Decoder outputs `d_v`, one per class.
    pub outputs: usize,
    /// Transmit the source directly (on-off keying) without an encoder.
    #[serde(default)]
    pub uncoded: bool,
}

/// Encoder (absent for uncoded transmission) and decoder networks.
#[derive(Clone, Debug)]
pub struct JsccSystem {
    pub encoder: Option<SnnModel>,
    pub decoder: SnnModel,
}

/// Which network a neuron belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Encoder,
    Decoder,
}

/// Per-network parameter-shaped vectors, encoder neurons first.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemGrads {
    pub encoder: Vec<Vec<f64>>,
    pub decoder: Vec<Vec<f64>>,
}

impl SystemGrads {
    pub fn zeros_like(system: &JsccSystem) -> Self {
        let shape = |m: &SnnModel| m.params().iter().map(|p| vec![0.0; p.len()]).collect();
        SystemGrads {
            encoder: system.encoder.as_ref().map_or_else(Vec::new, shape),
            decoder: shape(&system.decoder),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flatten()
            .copied()
            .collect()
    }

    pub fn axpy(&mut self, a: f64, other: &SystemGrads) {
        for (x, y) in self
            .encoder
            .iter_mut()
            .chain(&mut self.decoder)
            .zip(other.encoder.iter().chain(&other.decoder))
        {
            x.iter_mut().zip(y).for_each(|(xi, yi)| *xi += a * yi);
        }
    }
}

impl JsccSystem {
    pub fn new<R: Rng + ?Sized>(
        arch: &Architecture,
        filters: &FilterConfig,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        use crate::glm::NetworkTopology;
        if arch.inputs == 0 || arch.outputs == 0 {
            return Err(Error::Parameter(
                "source and output dimensions must be >= 1".into(),
            ));
        }
        let (encoder, channel_dim) = if arch.uncoded {
            (None, arch.inputs)
        } else {
            if arch.channel_dim == 0 {
                return Err(Error::Parameter("channel dimension must be >= 1".into()));
            }
            let topo = NetworkTopology::fully_connected(
                arch.inputs,
                arch.channel_dim,
                arch.encoder_hidden,
            )?;
            (
                Some(SnnModel::random(topo, filters.clone(), init_scale, rng)?),
                arch.channel_dim,
            )
        };
        let topo =
            NetworkTopology::fully_connected(channel_dim, arch.outputs, arch.decoder_hidden)?;
        let decoder = SnnModel::random(topo, filters.clone(), init_scale, rng)?;
        Self::from_parts(encoder, decoder)
    }

    pub fn from_parts(encoder: Option<SnnModel>, decoder: SnnModel) -> Result<Self> {
        if let Some(enc) = &encoder {
            check_dim(
                "decoder inputs vs encoder outputs",
                enc.topology().outputs().len(),
                decoder.topology().num_inputs(),
            )?;
        }
        Ok(JsccSystem { encoder, decoder })
    }

    pub fn source_dim(&self) -> usize {
        match &self.encoder {
            Some(e) => e.topology().num_inputs(),
            None => self.decoder.topology().num_inputs(),
        }
    }

    pub fn channel_dim(&self) -> usize {
        self.decoder.topology().num_inputs()
    }

    pub fn num_outputs(&self) -> usize {
        self.decoder.topology().outputs().len()
    }

    pub fn new_state(&self) -> SystemState {
        SystemState {
            encoder: self.encoder.as_ref().map(SnnModel::new_state),
            decoder: self.decoder.new_state(),
            channel: ChannelHistory::default(),
        }
    }

    pub fn class_of(part: Part, role: NeuronRole) -> NeuronClass {
        match (part, role) {
            (Part::Decoder, NeuronRole::Output) => NeuronClass::Observed,
            _ => NeuronClass::Stochastic,
        }
    }

    /// Runs one step of encoder, channel and decoder. `visit` sees each
    /// network's sampled step while the traces still describe step `t - 1`,
    /// which is when gradients must be taken.
    pub fn rollout_step<F>(
        &self,
        state: &mut SystemState,
        channel: &dyn ChannelModel,
        u_t: &[u8],
        target: Option<&[u8]>,
        sampler: &mut dyn Sampler,
        mut visit: F,
    ) -> Result<RolloutStep>
    where
        F: FnMut(Part, &SnnModel, &NetworkState, &StepOutput) -> Result<()>,
    {
        check_dim("source signals", self.source_dim(), u_t.len())?;
        let x_t = match (&self.encoder, &mut state.encoder) {
            (Some(enc), Some(st)) => {
                let out = enc.sample_step(st, u_t, None, sampler)?;
                visit(Part::Encoder, enc, st, &out)?;
                enc.advance(st, u_t, &out.spikes)?;
                enc.topology()
                    .outputs()
                    .iter()
                    .map(|&i| out.spikes[i])
                    .collect()
            }
            _ => u_t.to_vec(),
        };
        let y_t = channel.transmit(&state.channel, &x_t, sampler);
        check_dim("channel output", self.channel_dim(), y_t.len())?;
        let out = self
            .decoder
            .sample_step(&state.decoder, &y_t, target, sampler)?;
        visit(Part::Decoder, &self.decoder, &state.decoder, &out)?;
        self.decoder
            .advance(&mut state.decoder, &y_t, &out.spikes)?;
        state.channel.push(x_t, y_t);
        Ok(RolloutStep { decoder: out })
    }

    /// Sum over decoder outputs of `-log p(v_i | o_i)` for a step's record.
    pub fn output_loss(&self, step: &StepOutput) -> f64 {
        self.decoder
            .topology()
            .outputs()
            .iter()
            .map(|&i| -step.log_probs[i])
            .sum()
    }

    pub fn output_spikes(&self, step: &StepOutput) -> Vec<u8> {
        self.decoder
            .topology()
            .outputs()
            .iter()
            .map(|&i| step.spikes[i])
            .collect()
    }

    /// Transmitted symbols of one example with the current encoder, used to
    /// measure code density for SNR calibration.
    pub fn encode(&self, u: &SpikeTensor, sampler: &mut dyn Sampler) -> Result<SpikeTensor> {
        check_dim("source signals", self.source_dim(), u.num_signals())?;
        let Some(enc) = &self.encoder else {
            return Ok(u.clone());
        };
        let mut st = enc.new_state();
        let mut cols = Vec::with_capacity(u.num_steps());
        for t in 0..u.num_steps() {
            let u_t = u.column(t);
            let out = enc.step(&mut st, &u_t, None, sampler)?;
            cols.push(
                enc.topology()
                    .outputs()
                    .iter()
                    .map(|&i| out.spikes[i])
                    .collect(),
            );
        }
        SpikeTensor::from_columns(&cols)
    }

    /// Inference rollout: decoder outputs are sampled, not clamped.
    pub fn infer(
        &self,
        channel: &dyn ChannelModel,
        u: &SpikeTensor,
        sampler: &mut dyn Sampler,
    ) -> Result<SpikeTensor> {
        let mut state = self.new_state();
        let mut cols = Vec::with_capacity(u.num_steps());
        for t in 0..u.num_steps() {
            let step = self.rollout_step(
                &mut state,
                channel,
                &u.column(t),
                None,
                sampler,
                |_, _, _, _| Ok(()),
            )?;
            cols.push(self.output_spikes(&step.decoder));
        }
        SpikeTensor::from_columns(&cols)
    }

    pub fn for_each_params_mut<F: FnMut(Part, usize, &mut [f64])>(&mut self, mut f: F) {
        if let Some(enc) = &mut self.encoder {
            for (i, p) in enc.params_mut().iter_mut().enumerate() {
                f(Part::Encoder, i, p.values_mut());
            }
        }
        for (i, p) in self.decoder.params_mut().iter_mut().enumerate() {
            f(Part::Decoder, i, p.values_mut());
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.encoder
            .iter()
            .chain(std::iter::once(&self.decoder))
            .flat_map(|m| m.params().iter().flat_map(|p| p.values().iter().copied()))
            .collect()
    }
}

/// Rollout state of a [`JsccSystem`].
#[derive(Clone, Debug)]
pub struct SystemState {
    pub encoder: Option<NetworkState>,
    pub decoder: NetworkState,
    pub channel: ChannelHistory,
}

#[derive(Clone, Debug)]
pub struct RolloutStep {
    pub decoder: StepOutput,
}

pub(crate) fn check_example(system: &JsccSystem, u: &SpikeTensor, v: &SpikeTensor) -> Result<()> {
    check_dim("source signals", system.source_dim(), u.num_signals())?;
    check_dim("target signals", system.num_outputs(), v.num_signals())?;
    check_dim("target steps", u.num_steps(), v.num_steps())
}
