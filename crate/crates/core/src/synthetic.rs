//! Small labelled spike datasets with a known class structure.
//!
//! Every class owns a random prototype pattern with the requested spike
//! density; examples are copies of their class prototype with each entry
//! flipped independently with probability `jitter`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::LabeledExample;
use crate::error::{Error, Result};
use crate::spike::SpikeTensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub examples_per_class: usize,
    pub num_signals: usize,
    pub num_steps: usize,
    pub spike_density: f64,
    pub jitter: f64,
    pub seed: u64,
}

/// Redraws of a prototype that collides with an earlier class before giving up
/// (collisions are unavoidable at density 0 or 1).
const MAX_REDRAWS: usize = 1000;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::config("dataset.num_classes", "must be >= 1"));
        }
        if self.num_signals == 0 || self.num_steps == 0 {
            return Err(Error::config(
                "dataset.num_signals",
                "tensors need at least one signal and one step",
            ));
        }
        if !(0.0..=1.0).contains(&self.spike_density) {
            return Err(Error::config("dataset.spike_density", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(Error::config("dataset.jitter", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// One random pattern per class, distinct whenever the density allows.
    pub fn prototypes(&self, rng: &mut ChaCha8Rng) -> Result<Vec<SpikeTensor>> {
        let cells = self.num_signals * self.num_steps;
        let mut out: Vec<SpikeTensor> = Vec::with_capacity(self.num_classes);
        for _ in 0..self.num_classes {
            let mut draw = || {
                let data = (0..cells)
                    .map(|_| u8::from(rng.random::<f64>() < self.spike_density))
                    .collect();
                SpikeTensor::from_rows(self.num_signals, self.num_steps, data)
            };
            let mut p = draw()?;
            for _ in 0..MAX_REDRAWS {
                if !out.contains(&p) {
                    break;
                }
                p = draw()?;
            }
            out.push(p);
        }
        Ok(out)
    }
}

/// Examples are ordered round-robin over classes: `0, 1, .., C-1, 0, 1, ..`.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec) -> Result<Vec<LabeledExample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let prototypes = spec.prototypes(&mut rng)?;
    let mut out = Vec::with_capacity(spec.num_classes * spec.examples_per_class);
    for _ in 0..spec.examples_per_class {
        for (label, proto) in prototypes.iter().enumerate() {
            let data = proto
                .as_bytes()
                .iter()
                .map(|&b| {
                    if rng.random::<f64>() < spec.jitter {
                        1 - b
                    } else {
                        b
                    }
                })
                .collect();
            out.push(LabeledExample {
                label,
                spikes: SpikeTensor::from_rows(spec.num_signals, spec.num_steps, data)?,
            });
        }
    }
    Ok(out)
}
