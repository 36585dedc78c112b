//! Finite-duration synaptic and feedback filters.
//!
//! Filter values are indexed by lag: `values[d - 1]` is the weight applied to
//! the spike emitted `d` steps in the past. Lags beyond the window are zero.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the filter bank is built. Stored verbatim in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterConfig {
    /// Log-time raised-cosine basis; the feedback filter is the first element.
    RaisedCosine {
        num_filters: usize,
        window: usize,
        #[serde(default = "default_offset")]
        offset: f64,
    },
    /// `a_k(d) = beta_k^d` for each synaptic decay and `b(d) = feedback_beta^d`.
    Exponential {
        decays: Vec<f64>,
        feedback_decay: f64,
        window: usize,
    },
}

fn default_offset() -> f64 {
    1.0
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig::RaisedCosine {
            num_filters: 2,
            window: 10,
            offset: 1.0,
        }
    }
}

impl FilterConfig {
    pub fn build(&self) -> Result<FilterBank> {
        match self {
            FilterConfig::RaisedCosine {
                num_filters,
                window,
                offset,
            } => raised_cosine_bank(*num_filters, *window, *offset),
            FilterConfig::Exponential {
                decays,
                feedback_decay,
                window,
            } => exponential_bank(decays, *feedback_decay, *window),
        }
    }
}

/// K synaptic filters plus one feedback filter sharing a window length.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    synaptic: Vec<Vec<f64>>,
    feedback: Vec<f64>,
}

impl FilterBank {
    pub fn new(synaptic: Vec<Vec<f64>>, feedback: Vec<f64>) -> Result<Self> {
        let window = feedback.len();
        if synaptic.is_empty() {
            return Err(Error::Parameter(
                "filter bank needs at least one synaptic filter".into(),
            ));
        }
        if window == 0 {
            return Err(Error::Parameter("filter window must be at least 1".into()));
        }
        for f in &synaptic {
            if f.len() != window {
                return Err(Error::dim("synaptic filter window", window, f.len()));
            }
        }
        if synaptic
            .iter()
            .flatten()
            .chain(&feedback)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Parameter("filter values must be finite".into()));
        }
        Ok(FilterBank { synaptic, feedback })
    }

    pub fn num_filters(&self) -> usize {
        self.synaptic.len()
    }

    pub fn window(&self) -> usize {
        self.feedback.len()
    }

    pub fn synaptic(&self, k: usize) -> &[f64] {
        &self.synaptic[k]
    }

    pub fn feedback(&self) -> &[f64] {
        &self.feedback
    }

    /// Filter value at lag `lag` (1-based); zero outside the window.
    pub fn synaptic_at(&self, k: usize, lag: usize) -> f64 {
        lag_value(&self.synaptic[k], lag)
    }

    pub fn feedback_at(&self, lag: usize) -> f64 {
        lag_value(&self.feedback, lag)
    }
}

fn lag_value(filter: &[f64], lag: usize) -> f64 {
    if lag == 0 || lag > filter.len() {
        0.0
    } else {
        filter[lag - 1]
    }
}

/// Direct evaluation of `sum_{d >= 1} filter(d) * spikes(t - d)` for a
/// 1-based step `t` in `1..=spikes.len()`.
///
/// This is the slow reference form; [`crate::trace::TraceState`] keeps the
/// same quantity online.
pub fn convolve_filter(filter: &[f64], spikes: &[u8], t: usize) -> Result<f64> {
    if filter.is_empty() {
        return Err(Error::dim("filter window", 1, 0));
    }
    if t == 0 || t > spikes.len() {
        return Err(Error::dim("query step within spike train", spikes.len(), t));
    }
    let max_lag = filter.len().min(t - 1);
    Ok((1..=max_lag)
        .map(|lag| filter[lag - 1] * f64::from(spikes[t - lag - 1]))
        .sum())
}

/// Raised-cosine basis on a logarithmic time axis.
///
/// Element k is `0.5 * cos(clamp(pi * (ln(d + c) - phi_k) / dphi, -pi, pi)) + 0.5`
/// with centres `phi_k` evenly spaced over `[ln(1 + c), ln(W + c)]` and `dphi`
/// their spacing. Each element is rescaled to a peak of exactly 1.
pub fn raised_cosine_bank(num_filters: usize, window: usize, offset: f64) -> Result<FilterBank> {
    if num_filters == 0 || window == 0 {
        return Err(Error::Parameter(format!(
            "raised-cosine bank needs K >= 1 and W >= 1, got K={num_filters}, W={window}"
        )));
    }
    if !(offset.is_finite() && offset > 0.0) {
        return Err(Error::Parameter(format!(
            "raised-cosine offset must be > 0, got {offset}"
        )));
    }
    let lo = (1.0 + offset).ln();
    let hi = (window as f64 + offset).ln();
    let span = hi - lo;
    let spacing = if num_filters > 1 {
        span / (num_filters - 1) as f64
    } else if span > 0.0 {
        span
    } else {
        1.0
    };

    let mut synaptic = Vec::with_capacity(num_filters);
    for k in 0..num_filters {
        let centre = lo + k as f64 * spacing;
        let mut values: Vec<f64> = (1..=window)
            .map(|lag| {
                let arg = PI * ((lag as f64 + offset).ln() - centre) / spacing;
                0.5 * arg.clamp(-PI, PI).cos() + 0.5
            })
            .collect();
        let peak = values.iter().cloned().fold(0.0, f64::max);
        if peak <= 1e-12 {
            return Err(Error::Parameter(format!(
                "raised-cosine element {k} has no support on a window of {window} steps; use fewer filters"
            )));
        }
        values.iter_mut().for_each(|v| *v /= peak);
        synaptic.push(values);
    }
    let feedback = synaptic[0].clone();
    FilterBank::new(synaptic, feedback)
}

pub fn exponential_bank(decays: &[f64], feedback_decay: f64, window: usize) -> Result<FilterBank> {
    if decays.is_empty() || window == 0 {
        return Err(Error::Parameter(format!(
            "exponential bank needs K >= 1 and W >= 1, got K={}, W={window}",
            decays.len()
        )));
    }
    let powers = |beta: f64| -> Vec<f64> { (1..=window).map(|d| beta.powi(d as i32)).collect() };
    FilterBank::new(
        decays.iter().map(|&b| powers(b)).collect(),
        powers(feedback_decay),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn convolution_examples() {
        let f = [0.5, 0.25];
        let spikes = [1u8, 0, 0, 0];
        assert_eq!(convolve_filter(&f, &spikes, 1).unwrap(), 0.0);
        assert_eq!(convolve_filter(&f, &spikes, 2).unwrap(), 0.5);
        assert_eq!(convolve_filter(&f, &spikes, 3).unwrap(), 0.25);
        assert_eq!(convolve_filter(&f, &spikes, 4).unwrap(), 0.0);
    }

    #[test]
    fn convolution_errors() {
        assert!(convolve_filter(&[], &[1, 0], 1).is_err());
        assert!(convolve_filter(&[1.0], &[1, 0], 0).is_err());
        assert!(convolve_filter(&[1.0], &[1, 0], 3).is_err());
    }

    #[test]
    fn raised_cosine_peaks_increase() {
        let bank = raised_cosine_bank(2, 10, 1.0).unwrap();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert!(argmax(bank.synaptic(0)) < argmax(bank.synaptic(1)));
        assert_eq!(bank.feedback(), bank.synaptic(0));
    }

    #[test]
    fn raised_cosine_rejects_bad_shapes() {
        assert!(raised_cosine_bank(0, 10, 1.0).is_err());
        assert!(raised_cosine_bank(2, 0, 1.0).is_err());
        assert!(raised_cosine_bank(10, 2, 1.0).is_err());
    }

    #[test]
    fn exponential_values() {
        let bank = exponential_bank(&[0.5], 0.25, 3).unwrap();
        assert_eq!(bank.synaptic(0), &[0.5, 0.25, 0.125]);
        assert_eq!(bank.feedback_at(1), 0.25);
        assert_eq!(bank.feedback_at(4), 0.0);
    }

    proptest! {
        #[test]
        fn raised_cosine_peak_is_one(k in 1usize..5, w in 1usize..40) {
            if let Ok(bank) = raised_cosine_bank(k, w, 1.0) {
                for i in 0..k {
                    let max = bank.synaptic(i).iter().cloned().fold(f64::MIN, f64::max);
                    prop_assert_eq!(max, 1.0);
                    prop_assert!(bank.synaptic(i).iter().all(|v| (0.0..=1.0).contains(v)));
                    prop_assert_eq!(bank.synaptic_at(i, w + 1), 0.0);
                }
            } else {
                prop_assert!(k > w);
            }
        }
    }
}
