//! Dense binary spike containers.
//!
//! A [`SpikeTensor`] holds `d` binary signals over `T` steps. Steps are
//! 0-indexed in storage; the step `t` of the recurrences (1-based) lives in
//! column `t - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary matrix of shape (signals x steps), stored row-major as bytes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpikeTensor {
    num_signals: usize,
    num_steps: usize,
    data: Vec<u8>,
}

impl SpikeTensor {
    pub fn zeros(num_signals: usize, num_steps: usize) -> Result<Self> {
        if num_signals == 0 || num_steps == 0 {
            return Err(Error::Parameter(format!(
                "spike tensor shape must be non-empty, got ({num_signals}, {num_steps})"
            )));
        }
        Ok(SpikeTensor {
            num_signals,
            num_steps,
            data: vec![0; num_signals * num_steps],
        })
    }

    /// Builds a tensor from row-major data; every entry must be 0 or 1.
    pub fn from_rows(num_signals: usize, num_steps: usize, data: Vec<u8>) -> Result<Self> {
        let mut out = Self::zeros(num_signals, num_steps)?;
        if data.len() != num_signals * num_steps {
            return Err(Error::dim(
                "spike data",
                num_signals * num_steps,
                data.len(),
            ));
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::Parameter(format!(
                "spike entries must be 0 or 1, found {bad}"
            )));
        }
        out.data = data;
        Ok(out)
    }

    /// Builds a tensor from a per-step list of spike vectors (one per column).
    pub fn from_columns(columns: &[Vec<u8>]) -> Result<Self> {
        let num_steps = columns.len();
        let num_signals = columns.first().map_or(0, Vec::len);
        let mut out = Self::zeros(num_signals, num_steps)?;
        for (t, col) in columns.iter().enumerate() {
            if col.len() != num_signals {
                return Err(Error::dim("spike column", num_signals, col.len()));
            }
            for (j, &s) in col.iter().enumerate() {
                out.set(j, t, s)?;
            }
        }
        Ok(out)
    }

    pub fn num_signals(&self) -> usize {
        self.num_signals
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_signals, self.num_steps)
    }

    #[inline]
    pub fn get(&self, signal: usize, step: usize) -> u8 {
        self.data[signal * self.num_steps + step]
    }

    pub fn set(&mut self, signal: usize, step: usize, value: u8) -> Result<()> {
        if value > 1 {
            return Err(Error::Parameter(format!(
                "spike entries must be 0 or 1, found {value}"
            )));
        }
        if signal >= self.num_signals {
            return Err(Error::dim("signal index bound", self.num_signals, signal));
        }
        if step >= self.num_steps {
            return Err(Error::dim("step index bound", self.num_steps, step));
        }
        self.data[signal * self.num_steps + step] = value;
        Ok(())
    }

    /// Spike train of one signal over all steps.
    pub fn row(&self, signal: usize) -> &[u8] {
        let start = signal * self.num_steps;
        &self.data[start..start + self.num_steps]
    }

    /// Spikes of every signal at one (0-based) step.
    pub fn column(&self, step: usize) -> Vec<u8> {
        (0..self.num_signals).map(|j| self.get(j, step)).collect()
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn row_count(&self, signal: usize) -> usize {
        self.row(signal).iter().map(|&v| v as usize).sum()
    }

    /// Fraction of entries equal to one.
    pub fn density(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    /// Sparse `(signal, step)` coordinates of every spike, ordered by signal then step.
    pub fn coordinates(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.count());
        for j in 0..self.num_signals {
            for (t, &s) in self.row(j).iter().enumerate() {
                if s == 1 {
                    out.push((j, t));
                }
            }
        }
        out
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary_and_empty() {
        assert!(SpikeTensor::zeros(0, 3).is_err());
        assert!(SpikeTensor::zeros(2, 0).is_err());
        assert!(SpikeTensor::from_rows(1, 2, vec![0, 2]).is_err());
        let mut s = SpikeTensor::zeros(2, 2).unwrap();
        assert!(s.set(0, 0, 3).is_err());
        assert!(s.set(2, 0, 1).is_err());
    }

    #[test]
    fn columns_and_counts() {
        let s = SpikeTensor::from_columns(&[vec![1, 0], vec![1, 1], vec![0, 0]]).unwrap();
        assert_eq!(s.shape(), (2, 3));
        assert_eq!(s.row(0), &[1, 1, 0]);
        assert_eq!(s.column(1), vec![1, 1]);
        assert_eq!(s.count(), 3);
        assert_eq!(s.coordinates(), vec![(0, 0), (0, 1), (1, 1)]);
        assert!((s.density() - 0.5).abs() < 1e-15);
    }
}
