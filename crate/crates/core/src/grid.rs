use std::sync::Arc;

use crate::error::Error;
use crate::Result;

/// Shared, strictly decreasing grid of epsilon samples in (0, 1).
///
/// All asymptotic statements are judged on the tail: the `tail_len` smallest
/// samples.  The head exists so reports show how a quantity behaves before
/// the asymptotic regime sets in; it never influences classification.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonGrid {
    samples: Vec<f64>,
    tail_len: usize,
}

impl EpsilonGrid {
    pub fn new(samples: Vec<f64>, tail_len: usize) -> Result<Arc<EpsilonGrid>> {
        if samples.len() < 4 {
            return Err(Error::InvalidInput("grid needs at least 4 samples".into()));
        }
        if tail_len < 4 || tail_len > samples.len() {
            return Err(Error::InvalidInput(format!(
                "tail length {tail_len} out of range for {} samples (want 4..=len)",
                samples.len()
            )));
        }
        for w in samples.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::InvalidInput(
                    "grid samples must be strictly decreasing".into(),
                ));
            }
        }
        if samples.iter().any(|&e| !(e > 0.0 && e <= 1.0) || !e.is_finite()) {
            return Err(Error::InvalidInput(
                "grid samples must lie in (0, 1]".into(),
            ));
        }
        // Asymptotic fits divide by log eps, so the tail must stay below 1.
        if samples[samples.len() - tail_len] >= 1.0 {
            return Err(Error::InvalidInput(
                "tail samples must be strictly below 1".into(),
            ));
        }
        Ok(Arc::new(EpsilonGrid { samples, tail_len }))
    }

    /// Logarithmic grid `10^(-k/per_decade)` for `k = k_min ..= k_max`.
    pub fn logarithmic(
        k_min: u32,
        k_max: u32,
        per_decade: u32,
        tail_len: usize,
    ) -> Result<Arc<EpsilonGrid>> {
        if per_decade == 0 || k_max <= k_min {
            return Err(Error::InvalidInput("need k_max > k_min and per_decade > 0".into()));
        }
        let samples: Vec<f64> = (k_min..=k_max)
            .map(|k| 10f64.powf(-(k as f64) / per_decade as f64))
            .collect();
        EpsilonGrid::new(samples, tail_len)
    }

    /// Default grid: four samples per decade from 1e-1 to 1e-12, judging the
    /// sixteen smallest (1e-8.25 .. 1e-12).
    pub fn standard() -> Arc<EpsilonGrid> {
        EpsilonGrid::logarithmic(4, 48, 4, 16).expect("standard grid is valid")
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn tail_len(&self) -> usize {
        self.tail_len
    }

    pub fn tail_start(&self) -> usize {
        self.samples.len() - self.tail_len
    }

    pub fn tail_samples(&self) -> &[f64] {
        &self.samples[self.tail_start()..]
    }

    /// Smallest epsilon on the grid.
    pub fn finest(&self) -> f64 {
        *self.samples.last().expect("non-empty")
    }
}

/// Nets may only be combined when they live on the same grid (same samples,
/// same tail).
pub fn compatible(a: &Arc<EpsilonGrid>, b: &Arc<EpsilonGrid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}
