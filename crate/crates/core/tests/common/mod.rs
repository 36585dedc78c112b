//! Helpers shared by the integration tests: tiny systems and exact
//! expectations of sampled quantities by trajectory enumeration.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spiking_jscc::channel::{ChannelModel, LawSampled};
use spiking_jscc::filters::FilterConfig;
use spiking_jscc::sampler::ScriptedSampler;
use spiking_jscc::spike::SpikeTensor;
use spiking_jscc::trainer::{Architecture, JsccSystem, SystemGrads};

pub fn tiny_filters() -> FilterConfig {
    FilterConfig::RaisedCosine {
        num_filters: 2,
        window: 3,
        offset: 1.0,
    }
}

/// Fully connected encoder and decoder with every parameter drawn
/// uniformly from `[-spread, spread]`.
pub fn random_system(arch: &Architecture, spread: f64, seed: u64) -> JsccSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut system = JsccSystem::new(arch, &tiny_filters(), 1.0, &mut rng).unwrap();
    system.for_each_params_mut(|_, _, p| {
        for v in p.iter_mut() {
            *v = rng.random_range(-spread..spread);
        }
    });
    system
}

/// One input, one encoder output, one decoder hidden neuron, one output.
pub fn tiny_arch() -> Architecture {
    Architecture {
        inputs: 1,
        channel_dim: 1,
        encoder_hidden: 0,
        decoder_hidden: 1,
        outputs: 1,
        uncoded: false,
    }
}

pub fn random_tensor(rows: usize, steps: usize, rng: &mut ChaCha8Rng) -> SpikeTensor {
    let data = (0..rows * steps)
        .map(|_| rng.random_range(0..2u8))
        .collect();
    SpikeTensor::from_rows(rows, steps, data).unwrap()
}

/// `sum over trajectories of P(traj) * f(traj)`, with every free binary draw
/// of `f` scripted. `f` must draw the same variables in the same order as a
/// rollout through `channel`; returns the weighted sum and the total weight.
pub fn enumerate<F>(num_variables: usize, mut f: F) -> (Vec<f64>, f64)
where
    F: FnMut(&mut ScriptedSampler) -> Vec<f64>,
{
    let mut acc: Vec<f64> = Vec::new();
    let mut total = 0.0;
    for bits in 0..(1u64 << num_variables) {
        let mut s = ScriptedSampler::new(bits);
        let value = f(&mut s);
        if s.consumed() < 64 && (bits >> s.consumed()) != 0 {
            continue;
        }
        let w = s.probability();
        if acc.is_empty() {
            acc = vec![0.0; value.len()];
        }
        acc.iter_mut().zip(&value).for_each(|(a, v)| *a += w * v);
        total += w;
    }
    (acc, total)
}

/// Exact expectation of the whole-trajectory update direction.
pub fn expected_direction(
    system: &JsccSystem,
    channel: &dyn ChannelModel,
    u: &SpikeTensor,
    v: &SpikeTensor,
    num_variables: usize,
    baseline: Option<&SystemGrads>,
) -> (Vec<f64>, f64) {
    let law = LawSampled(channel);
    enumerate(num_variables, |s| {
        spiking_jscc::trainer::episodic::trajectory_direction(system, &law, u, v, s, baseline)
            .unwrap()
            .direction
            .flatten()
    })
}

/// Largest `|a - b|` over coordinates.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
