//! Stochastic binary channels between encoder outputs and decoder inputs.
//!
//! A channel maps the transmitted history `x_1..x_t` (and its own past
//! outputs) to a binary received vector `y_t`. The shipped Gaussian model is
//! memoryless: `y_t = Q(x_t + n_t)` with i.i.d. `N(0, sigma^2)` noise and a
//! hard threshold quantizer.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::sampler::Sampler;
use crate::spike::SpikeTensor;

/// Past channel inputs and outputs of the current transmission.
#[derive(Clone, Debug, Default)]
pub struct ChannelHistory {
    pub inputs: Vec<Vec<u8>>,
    pub outputs: Vec<Vec<u8>>,
}

impl ChannelHistory {
    pub fn clear(&mut self) {
        self.inputs.clear();
        self.outputs.clear();
    }

    pub fn push(&mut self, x: Vec<u8>, y: Vec<u8>) {
        self.inputs.push(x);
        self.outputs.push(y);
    }
}

pub trait ChannelModel: Send + Sync {
    /// Number of received signals for `input_dim` transmitted signals.
    fn output_dim(&self, input_dim: usize) -> usize;

    /// `P(y_t[j] = 1 | x_1..x_t, y_1..y_{t-1})` per received signal. Entries
    /// are conditionally independent given the history.
    fn one_probabilities(&self, history: &ChannelHistory, x_t: &[u8]) -> Vec<f64>;

    /// Draws `y_t`. The default samples each entry from [`Self::one_probabilities`].
    fn transmit(&self, history: &ChannelHistory, x_t: &[u8], sampler: &mut dyn Sampler) -> Vec<u8> {
        self.one_probabilities(history, x_t)
            .into_iter()
            .map(|p| sampler.bernoulli(p))
            .collect()
    }
}

/// Hard decision: 1 iff `x >= threshold`.
#[inline]
pub fn quantize(x: f64, threshold: f64) -> u8 {
    u8::from(x >= threshold)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Noise power that yields `snr_db` for a code with spike density `density`:
/// `sigma^2 = density / 10^(snr_db / 10)`.
pub fn sigma2_from_snr(snr_db: f64, density: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::Calibration(format!(
            "SNR must be finite, got {snr_db}"
        )));
    }
    if density.is_nan() || density <= 0.0 {
        return Err(Error::Calibration(format!(
            "spike density {density} carries no transmitted energy"
        )));
    }
    if density > 1.0 {
        return Err(Error::Calibration(format!(
            "spike density {density} exceeds 1"
        )));
    }
    Ok(density / 10f64.powf(snr_db / 10.0))
}

/// Spike count over `signals x steps`, pooled across all tensors.
pub fn measure_density<'a, I>(tensors: I) -> f64
where
    I: IntoIterator<Item = &'a SpikeTensor>,
{
    let (spikes, cells) = tensors.into_iter().fold((0usize, 0usize), |(s, c), x| {
        (s + x.count(), c + x.num_signals() * x.num_steps())
    });
    if cells == 0 {
        0.0
    } else {
        spikes as f64 / cells as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianQuantizedChannel {
    sigma2: f64,
    threshold: f64,
}

impl GaussianQuantizedChannel {
    pub const DEFAULT_THRESHOLD: f64 = 0.5;

    pub fn new(sigma2: f64, threshold: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::Parameter(format!(
                "noise power must be positive and finite, got {sigma2}"
            )));
        }
        if !threshold.is_finite() {
            return Err(Error::Parameter(format!(
                "quantizer threshold must be finite, got {threshold}"
            )));
        }
        Ok(GaussianQuantizedChannel { sigma2, threshold })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `P(y = 1 | x)` for one symbol.
    pub fn one_probability(&self, x: u8) -> f64 {
        1.0 - normal_cdf((self.threshold - f64::from(x)) / self.sigma2.sqrt())
    }

    /// `P(y != x | x)`.
    pub fn flip_probability(&self, x: u8) -> f64 {
        let p1 = self.one_probability(x);
        if x == 1 {
            1.0 - p1
        } else {
            p1
        }
    }

    pub fn channel_step(&self, x_t: &[u8], sampler: &mut dyn Sampler) -> Vec<u8> {
        let sigma = self.sigma2.sqrt();
        x_t.iter()
            .map(|&x| {
                quantize(
                    f64::from(x) + sigma * sampler.standard_normal(),
                    self.threshold,
                )
            })
            .collect()
    }
}

impl ChannelModel for GaussianQuantizedChannel {
    fn output_dim(&self, input_dim: usize) -> usize {
        input_dim
    }

    fn one_probabilities(&self, _history: &ChannelHistory, x_t: &[u8]) -> Vec<f64> {
        x_t.iter().map(|&x| self.one_probability(x)).collect()
    }

    fn transmit(
        &self,
        _history: &ChannelHistory,
        x_t: &[u8],
        sampler: &mut dyn Sampler,
    ) -> Vec<u8> {
        self.channel_step(x_t, sampler)
    }
}

/// `y_t = x_t`; the zero-noise limit of the quantized Gaussian channel.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiselessChannel;

impl ChannelModel for NoiselessChannel {
    fn output_dim(&self, input_dim: usize) -> usize {
        input_dim
    }

    fn one_probabilities(&self, _history: &ChannelHistory, x_t: &[u8]) -> Vec<f64> {
        x_t.iter().map(|&x| f64::from(x)).collect()
    }

    fn transmit(
        &self,
        _history: &ChannelHistory,
        x_t: &[u8],
        _sampler: &mut dyn Sampler,
    ) -> Vec<u8> {
        x_t.to_vec()
    }
}

/// Samples any channel bit by bit from its conditional law instead of its
/// native mechanism. Same distribution; usable with scripted samplers.
pub struct LawSampled<'a>(pub &'a dyn ChannelModel);

impl ChannelModel for LawSampled<'_> {
    fn output_dim(&self, input_dim: usize) -> usize {
        self.0.output_dim(input_dim)
    }

    fn one_probabilities(&self, history: &ChannelHistory, x_t: &[u8]) -> Vec<f64> {
        self.0.one_probabilities(history, x_t)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Density measured over the training set once per epoch.
    #[default]
    Dataset,
    /// Density measured on each example's own transmission.
    PerExample,
}

/// Channel block of an experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelConfig {
    Noiseless {},
    GaussianQuantized {
        snr_db: f64,
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default)]
        calibration: Calibration,
    },
}

fn default_threshold() -> f64 {
    GaussianQuantizedChannel::DEFAULT_THRESHOLD
}

impl ChannelConfig {
    pub fn snr_db(&self) -> Option<f64> {
        match self {
            ChannelConfig::Noiseless {} => None,
            ChannelConfig::GaussianQuantized { snr_db, .. } => Some(*snr_db),
        }
    }

    /// Same config at a different SNR; noiseless stays noiseless.
    pub fn with_snr(&self, snr: Option<f64>) -> ChannelConfig {
        match (self, snr) {
            (_, None) => ChannelConfig::Noiseless {},
            (
                ChannelConfig::GaussianQuantized {
                    threshold,
                    calibration,
                    ..
                },
                Some(s),
            ) => ChannelConfig::GaussianQuantized {
                snr_db: s,
                threshold: *threshold,
                calibration: *calibration,
            },
            (ChannelConfig::Noiseless {}, Some(s)) => ChannelConfig::GaussianQuantized {
                snr_db: s,
                threshold: default_threshold(),
                calibration: Calibration::Dataset,
            },
        }
    }

    pub fn calibration(&self) -> Calibration {
        match self {
            ChannelConfig::Noiseless {} => Calibration::Dataset,
            ChannelConfig::GaussianQuantized { calibration, .. } => *calibration,
        }
    }

    /// Instantiates the channel for a measured spike density.
    pub fn build(&self, density: f64) -> Result<Channel> {
        match self {
            ChannelConfig::Noiseless {} => Ok(Channel::Noiseless(NoiselessChannel)),
            ChannelConfig::GaussianQuantized {
                snr_db, threshold, ..
            } => {
                let sigma2 = sigma2_from_snr(*snr_db, density)?;
                Ok(Channel::Gaussian(GaussianQuantizedChannel::new(
                    sigma2, *threshold,
                )?))
            }
        }
    }
}

/// Concrete channel chosen by configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Channel {
    Noiseless(NoiselessChannel),
    Gaussian(GaussianQuantizedChannel),
}

impl Channel {
    /// Noise power, zero for the noiseless channel.
    pub fn sigma2(&self) -> f64 {
        match self {
            Channel::Noiseless(_) => 0.0,
            Channel::Gaussian(g) => g.sigma2(),
        }
    }
}

impl ChannelModel for Channel {
    fn output_dim(&self, input_dim: usize) -> usize {
        input_dim
    }

    fn one_probabilities(&self, history: &ChannelHistory, x_t: &[u8]) -> Vec<f64> {
        match self {
            Channel::Noiseless(c) => c.one_probabilities(history, x_t),
            Channel::Gaussian(c) => c.one_probabilities(history, x_t),
        }
    }

    fn transmit(&self, history: &ChannelHistory, x_t: &[u8], sampler: &mut dyn Sampler) -> Vec<u8> {
        match self {
            Channel::Noiseless(c) => c.transmit(history, x_t, sampler),
            Channel::Gaussian(c) => c.transmit(history, x_t, sampler),
        }
    }
}

/// Checks that a channel produces one received signal per decoder input.
pub fn check_channel_dims(
    channel: &dyn ChannelModel,
    input_dim: usize,
    decoder_inputs: usize,
) -> Result<()> {
    check_dim(
        "channel output vs decoder inputs",
        decoder_inputs,
        channel.output_dim(input_dim),
    )
}
