//! Per-step recursions of the online learning rule.
//!
//! Sign convention: the trained objective is the expected output loss
//! `E[sum_t sum_{i in V} -log p(v_i(t) | o_i(t))]`. Eligibility traces smooth
//! `grad log p` of realised spikes. Sampled neurons descend along
//! `(loss - baseline) * eligibility` (score-function form); observed decoder
//! outputs descend along `-eligibility`, the gradient of their own loss.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// How a neuron's spikes arise during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronClass {
    /// Sampled from the model: encoder neurons and decoder hidden neurons.
    Stochastic,
    /// Clamped to the target: decoder output neurons.
    Observed,
}

/// `l_t = kappa * l_{t-1} + (1 - kappa) * sum_i loss_i(t)`.
pub fn learning_signal_update(previous: f64, step_losses: &[f64], kappa: f64) -> f64 {
    let total: f64 = step_losses.iter().sum();
    kappa * previous + (1.0 - kappa) * total
}

/// `e_t = kappa * e_{t-1} + (1 - kappa) * grad`, in place.
pub fn eligibility_update(eligibility: &mut [f64], grad: &[f64], kappa: f64) -> Result<()> {
    check_dim("eligibility vs gradient", eligibility.len(), grad.len())?;
    for (e, &g) in eligibility.iter_mut().zip(grad) {
        *e = kappa * *e + (1.0 - kappa) * g;
    }
    Ok(())
}

/// Running second moments behind the per-parameter baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineStats {
    /// `<e^2>`
    pub mean_sq: Vec<f64>,
    /// `<l * e^2>`
    pub mean_weighted_sq: Vec<f64>,
}

impl BaselineStats {
    pub fn zeros(len: usize) -> Self {
        BaselineStats {
            mean_sq: vec![0.0; len],
            mean_weighted_sq: vec![0.0; len],
        }
    }

    pub fn reset(&mut self) {
        self.mean_sq.iter_mut().for_each(|v| *v = 0.0);
        self.mean_weighted_sq.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Folds in `(l, e)` and writes `b = <l e^2> / <e^2>` (0 where `<e^2> <= eps`).
    pub fn update(
        &mut self,
        signal: f64,
        eligibility: &[f64],
        alpha: f64,
        eps: f64,
        baseline: &mut [f64],
    ) -> Result<()> {
        check_dim(
            "baseline stats vs eligibility",
            self.mean_sq.len(),
            eligibility.len(),
        )?;
        check_dim("baseline output", self.mean_sq.len(), baseline.len())?;
        for (idx, &e) in eligibility.iter().enumerate() {
            let e2 = e * e;
            let m = alpha * self.mean_sq[idx] + (1.0 - alpha) * e2;
            let w = alpha * self.mean_weighted_sq[idx] + (1.0 - alpha) * signal * e2;
            self.mean_sq[idx] = m;
            self.mean_weighted_sq[idx] = w;
            baseline[idx] = if m > eps { w / m } else { 0.0 };
        }
        Ok(())
    }
}

/// Smoothed update direction of one neuron, in place.
pub fn delta_update(
    delta: &mut [f64],
    signal: f64,
    baseline: &[f64],
    eligibility: &[f64],
    class: NeuronClass,
    kappa2: f64,
) -> Result<()> {
    check_dim("delta vs eligibility", delta.len(), eligibility.len())?;
    match class {
        NeuronClass::Stochastic => {
            check_dim("delta vs baseline", delta.len(), baseline.len())?;
            for ((d, &b), &e) in delta.iter_mut().zip(baseline).zip(eligibility) {
                *d = kappa2 * *d + (1.0 - kappa2) * (signal - b) * e;
            }
        }
        NeuronClass::Observed => {
            for (d, &e) in delta.iter_mut().zip(eligibility) {
                *d = -e;
            }
        }
    }
    Ok(())
}

/// `theta <- theta - eta * delta`. Refuses non-finite directions and updates
/// that would leave a parameter non-finite; `params` is untouched on error.
pub fn apply_update(params: &mut [f64], delta: &[f64], eta: f64) -> Result<()> {
    check_dim("params vs delta", params.len(), delta.len())?;
    if let Some(idx) = delta.iter().position(|d| !d.is_finite()) {
        return Err(Error::Divergence {
            iteration: 0,
            detail: format!("update component {idx} is {}", delta[idx]),
        });
    }
    if let Some(idx) = params
        .iter()
        .zip(delta)
        .position(|(p, d)| !(p - eta * d).is_finite())
    {
        return Err(Error::Divergence {
            iteration: 0,
            detail: format!("parameter {idx} becomes {}", params[idx] - eta * delta[idx]),
        });
    }
    for (p, &d) in params.iter_mut().zip(delta) {
        *p -= eta * d;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn learning_signal_examples() {
        assert_eq!(learning_signal_update(3.0, &[0.5, 0.25], 0.0), 0.75);
        assert_eq!(learning_signal_update(3.0, &[0.5, 0.25], 1.0), 3.0);
        let l1 = learning_signal_update(0.0, &[1.0], 0.5);
        let l2 = learning_signal_update(l1, &[1.0], 0.5);
        assert_eq!((l1, l2), (0.5, 0.75));
    }

    #[test]
    fn eligibility_examples() {
        let mut e = vec![1.0, -2.0];
        eligibility_update(&mut e, &[0.3, 0.4], 0.0).unwrap();
        assert_eq!(e, vec![0.3, 0.4]);

        let mut e = vec![1.0];
        for t in 1..=10 {
            eligibility_update(&mut e, &[0.0], 0.5).unwrap();
            assert_eq!(e[0], 0.5f64.powi(t));
        }

        let mut e = vec![0.0];
        for _ in 0..200 {
            eligibility_update(&mut e, &[2.5], 0.8).unwrap();
        }
        assert!((e[0] - 2.5).abs() < 1e-12);
        assert!(eligibility_update(&mut e, &[1.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn baseline_examples() {
        let mut stats = BaselineStats::zeros(2);
        let mut b = vec![0.0; 2];
        for _ in 0..300 {
            stats.update(1.7, &[0.3, 0.0], 0.9, 1e-12, &mut b).unwrap();
        }
        assert!((b[0] - 1.7).abs() < 1e-12);
        assert_eq!(b[1], 0.0);

        let mut stats = BaselineStats::zeros(1);
        for &(l, e) in &[(0.4, 0.2), (2.0, -1.0), (0.7, 0.5)] {
            stats.update(l, &[e], 0.0, 1e-12, &mut b[..1]).unwrap();
            assert!((b[0] - l).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_examples() {
        let mut d = vec![0.8];
        delta_update(&mut d, 1.2, &[1.2], &[0.5], NeuronClass::Stochastic, 0.3).unwrap();
        assert!((d[0] - 0.24).abs() < 1e-15);

        let mut d = vec![5.0];
        delta_update(&mut d, 2.0, &[0.5], &[0.4], NeuronClass::Stochastic, 0.0).unwrap();
        assert!((d[0] - 0.6).abs() < 1e-15);

        let mut d = vec![5.0, 1.0];
        delta_update(
            &mut d,
            9.0,
            &[3.0, 3.0],
            &[0.4, -0.1],
            NeuronClass::Observed,
            0.7,
        )
        .unwrap();
        assert_eq!(d, vec![-0.4, 0.1]);
    }

    #[test]
    fn apply_examples() {
        let mut p = vec![1.0];
        apply_update(&mut p, &[2.0], 0.1).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
        let mut p = vec![1.0, -3.0];
        apply_update(&mut p, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(p, vec![1.0, -3.0]);
        apply_update(&mut p, &[7.0, 2.0], 0.0).unwrap();
        assert_eq!(p, vec![1.0, -3.0]);
        assert!(matches!(
            apply_update(&mut p, &[f64::NAN, 0.0], 0.1),
            Err(Error::Divergence { .. })
        ));
        assert_eq!(p, vec![1.0, -3.0]);
    }

    proptest! {
        #[test]
        fn no_smoothing_is_instantaneous(
            grads in prop::collection::vec(-5.0f64..5.0, 1..6),
            signal in 0.0f64..4.0,
        ) {
            let mut e = vec![9.0; grads.len()];
            eligibility_update(&mut e, &grads, 0.0).unwrap();
            prop_assert_eq!(&e, &grads);
            let mut stats = BaselineStats::zeros(grads.len());
            let mut b = vec![0.0; grads.len()];
            stats.update(signal, &e, 0.0, 1e-12, &mut b).unwrap();
            let mut d = vec![-1.0; grads.len()];
            delta_update(&mut d, signal, &vec![0.0; grads.len()], &e, NeuronClass::Stochastic, 0.0).unwrap();
            for i in 0..grads.len() {
                prop_assert!((d[i] - signal * grads[i]).abs() <= 1e-12 * (1.0 + (signal * grads[i]).abs()));
                if grads[i] * grads[i] > 1e-12 {
                    prop_assert!((b[i] - signal).abs() <= 1e-12 * (1.0 + signal));
                }
            }
        }
    }
}
