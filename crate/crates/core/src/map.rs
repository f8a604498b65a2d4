//! Two-tone spectroscopy maps: response amplitude over (coil current, probe frequency).

use crate::error::{Error, Result};
use crate::transmon::BiasPoint;

/// Current sweep of a single coil; all other coils stay at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub coil: usize,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

/// Uniform grid of probe frequencies (GHz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

fn check_range(what: &str, start: f64, stop: f64, points: usize) -> Result<()> {
    if !(start.is_finite() && stop.is_finite()) || start == stop {
        return Err(Error::InvalidRange(format!("{what} range [{start}, {stop}] is degenerate")));
    }
    if points < 2 {
        return Err(Error::InvalidRange(format!("{what} needs at least 2 points, got {points}")));
    }
    Ok(())
}

/// `points` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (points - 1) as f64;
            (0..points)
                .map(|k| if k == points - 1 { stop } else { start + step * k as f64 })
                .collect()
        }
    }
}

impl Sweep {
    pub fn validate(&self) -> Result<()> {
        check_range("current", self.start, self.stop, self.points)
    }

    pub fn currents(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.points)
    }
}

impl ProbeRange {
    pub fn validate(&self) -> Result<()> {
        check_range("probe", self.start, self.stop, self.points)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.points)
    }
}

/// Response amplitude on a (bias, probe) grid, bias-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectroscopyMap {
    /// Index of the swept coil.
    pub coil: usize,
    /// Total number of coils; unswept coils carry zero current.
    pub n_coils: usize,
    /// Current of the swept coil at each bias row (mA).
    pub currents: Vec<f64>,
    /// Probe frequencies (GHz), ascending.
    pub probes: Vec<f64>,
    /// `amplitudes[b * probes.len() + p]`.
    pub amplitudes: Vec<f64>,
}

impl SpectroscopyMap {
    pub fn new(
        coil: usize,
        n_coils: usize,
        currents: Vec<f64>,
        probes: Vec<f64>,
        amplitudes: Vec<f64>,
    ) -> Result<Self> {
        if coil >= n_coils {
            return Err(Error::DimensionMismatch(format!(
                "swept coil {coil} out of range for {n_coils} coils"
            )));
        }
        if amplitudes.len() != currents.len() * probes.len() {
            return Err(Error::DimensionMismatch(format!(
                "grid has {} values, expected {} x {}",
                amplitudes.len(),
                currents.len(),
                probes.len()
            )));
        }
        if currents.iter().chain(&probes).chain(&amplitudes).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite value in spectroscopy map".into()));
        }
        if probes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidRange("probe frequencies must increase".into()));
        }
        Ok(Self { coil, n_coils, currents, probes, amplitudes })
    }

    pub fn n_bias(&self) -> usize {
        self.currents.len()
    }

    pub fn n_probe(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn bias(&self, row: usize) -> BiasPoint {
        BiasPoint::single_coil(self.n_coils, self.coil, self.currents[row])
    }

    /// Probe response at one bias point.
    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.n_probe();
        &self.amplitudes[row * n..(row + 1) * n]
    }

    /// Mean probe spacing (GHz).
    pub fn probe_step(&self) -> f64 {
        match self.probes.len() {
            0 | 1 => 0.0,
            n => (self.probes[n - 1] - self.probes[0]) / (n - 1) as f64,
        }
    }
}
