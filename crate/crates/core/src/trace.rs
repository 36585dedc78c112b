//! Online synaptic and feedback traces.
//!
//! The state keeps the last `W` spike vectors in a ring buffer and recomputes
//! every trace as a dot product after each push. After `t - 1` pushes the
//! traces equal `convolve_filter(.., history, t)`, i.e. they summarise spikes
//! up to step `t - 1` and feed the potentials of step `t`.

use crate::error::{check_dim, Result};
use crate::filters::FilterBank;

#[derive(Clone, Debug)]
pub struct TraceState {
    num_signals: usize,
    num_filters: usize,
    window: usize,
    /// `synaptic[j * K + k]`
    synaptic: Vec<f64>,
    feedback: Vec<f64>,
    /// `history[slot * num_signals + j]`, most recent push at `head - 1`.
    history: Vec<u8>,
    head: usize,
    filled: usize,
    step: usize,
}

impl TraceState {
    pub fn new(num_signals: usize, filters: &FilterBank) -> Self {
        let window = filters.window();
        let num_filters = filters.num_filters();
        TraceState {
            num_signals,
            num_filters,
            window,
            synaptic: vec![0.0; num_signals * num_filters],
            feedback: vec![0.0; num_signals],
            history: vec![0; num_signals * window],
            head: 0,
            filled: 0,
            step: 1,
        }
    }

    pub fn num_signals(&self) -> usize {
        self.num_signals
    }

    /// 1-based step whose potentials the current traces feed.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn reset(&mut self) {
        self.synaptic.iter_mut().for_each(|v| *v = 0.0);
        self.feedback.iter_mut().for_each(|v| *v = 0.0);
        self.history.iter_mut().for_each(|v| *v = 0);
        self.head = 0;
        self.filled = 0;
        self.step = 1;
    }

    #[inline]
    pub fn synaptic(&self, signal: usize, k: usize) -> f64 {
        self.synaptic[signal * self.num_filters + k]
    }

    /// The K synaptic traces of one signal.
    #[inline]
    pub fn synaptic_row(&self, signal: usize) -> &[f64] {
        let start = signal * self.num_filters;
        &self.synaptic[start..start + self.num_filters]
    }

    #[inline]
    pub fn feedback(&self, signal: usize) -> f64 {
        self.feedback[signal]
    }

    /// Pushes the spikes emitted at the current step and recomputes all traces.
    pub fn update(&mut self, spikes: &[u8], filters: &FilterBank) -> Result<()> {
        check_dim("trace update spikes", self.num_signals, spikes.len())?;
        check_dim("filter count", self.num_filters, filters.num_filters())?;
        check_dim("filter window", self.window, filters.window())?;

        let n = self.num_signals;
        self.history[self.head * n..(self.head + 1) * n].copy_from_slice(spikes);
        self.head = (self.head + 1) % self.window;
        self.filled = (self.filled + 1).min(self.window);
        self.step += 1;

        self.synaptic.iter_mut().for_each(|v| *v = 0.0);
        self.feedback.iter_mut().for_each(|v| *v = 0.0);
        for lag in 1..=self.filled {
            let slot = (self.head + self.window - lag) % self.window;
            let row = &self.history[slot * n..(slot + 1) * n];
            let b = filters.feedback()[lag - 1];
            for (j, &s) in row.iter().enumerate() {
                if s == 0 {
                    continue;
                }
                let traces = &mut self.synaptic[j * self.num_filters..(j + 1) * self.num_filters];
                for (k, tr) in traces.iter_mut().enumerate() {
                    *tr += filters.synaptic(k)[lag - 1];
                }
                self.feedback[j] += b;
            }
        }
        Ok(())
    }
}
