//! Saved-buffer accounting for recorded tapes.

use std::collections::BTreeMap;
use std::fmt;

use super::tape::{OpKind, Tape};
use super::Strategy;

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryReport {
    pub strategy: Strategy,
    pub pixels: usize,
    pub setup_bytes: usize,
    pub per_iteration: Vec<usize>,
    pub total_bytes: usize,
    /// Bytes per node kind over the whole tape.
    pub by_kind: BTreeMap<OpKind, usize>,
}

impl MemoryReport {
    pub fn from_tape(tape: &Tape<'_>, strategy: Strategy, pixels: usize) -> Self {
        let mut by_kind = BTreeMap::new();
        for node in tape.nodes() {
            *by_kind.entry(node.kind()).or_insert(0) += node.saved_bytes();
        }
        MemoryReport {
            strategy,
            pixels,
            setup_bytes: tape.setup_bytes(),
            per_iteration: tape.per_iteration_bytes(),
            total_bytes: tape.total_saved_bytes(),
            by_kind,
        }
    }

    /// Bytes of the last recorded iteration.
    pub fn steady_iteration_bytes(&self) -> usize {
        self.per_iteration.last().copied().unwrap_or(0)
    }

    /// Steady per-iteration bytes divided by the pixel count.
    pub fn bytes_per_pixel(&self) -> f64 {
        self.steady_iteration_bytes() as f64 / self.pixels as f64
    }
}

impl fmt::Display for MemoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "strategy        {}", self.strategy)?;
        writeln!(f, "pixels          {}", self.pixels)?;
        writeln!(f, "iterations      {}", self.per_iteration.len())?;
        writeln!(f, "setup bytes     {}", self.setup_bytes)?;
        writeln!(f, "bytes/iteration {}", self.steady_iteration_bytes())?;
        writeln!(f, "bytes/pixel/it  {:.3}", self.bytes_per_pixel())?;
        writeln!(f, "total bytes     {}", self.total_bytes)?;
        for (kind, bytes) in &self.by_kind {
            writeln!(f, "  {:<18}{bytes}", kind.to_string())?;
        }
        Ok(())
    }
}

/// Least-squares line through `(x_i, y_i)`: `(slope, intercept, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}
