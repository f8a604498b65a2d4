//! Recovery of the crosstalk map and transmon energies from peak data.
//!
//! Each observation is a qubit frequency seen at some coil bias. The fit
//! adjusts `e_j_max`, the flux offset and one row of mutuals per qubit, with
//! every qubit's charging energy held fixed. The fitted flux of each qubit is
//! only defined up to `Φ → -Φ` and `Φ → Φ + 1`, so results are reported with
//! offsets wrapped into `[-0.5, 0.5)` and a non-negative diagonal mutual.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{minimize, LeastSquaresProblem, LmOptions};
use crate::transmon::{transmon_frequency, transmon_frequency_slope, BiasPoint, FluxMap, TransmonParams};

/// Observations whose model frequency is within this distance of `-e_c` are down-weighted.
const HALF_FLUX_BAND_GHZ: f64 = 0.010;
const HALF_FLUX_WEIGHT: f64 = 0.01;

/// One qubit line located at a bias point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakObservation {
    pub coil_currents: BiasPoint,
    pub qubit_index: usize,
    /// Observed frequency (GHz).
    pub frequency: f64,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

impl PeakObservation {
    pub fn new(coil_currents: BiasPoint, qubit_index: usize, frequency: f64) -> Self {
        Self { coil_currents, qubit_index, frequency, weight: 1.0 }
    }
}

/// Fitted crosstalk map and transmon energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub flux_map: FluxMap,
    pub params: Vec<TransmonParams>,
    /// Unweighted RMS of observed minus model frequency (GHz).
    #[serde(default)]
    pub residual_rms: f64,
    /// Variance estimates in parameter order: per qubit `e_j_max`, offset, then
    /// the qubit's mutual row. Frozen parameters report zero.
    #[serde(default)]
    pub covariance_diagonal: Vec<f64>,
}

impl CalibrationResult {
    /// A starting point for [`fit_arcs`] with no fit statistics.
    pub fn seed(flux_map: FluxMap, params: Vec<TransmonParams>) -> Result<Self> {
        if flux_map.n_qubits() != params.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} transmons for a {}-qubit flux map",
                params.len(),
                flux_map.n_qubits()
            )));
        }
        Ok(Self { flux_map, params, residual_rms: 0.0, covariance_diagonal: Vec::new() })
    }

    pub fn n_qubits(&self) -> usize {
        self.params.len()
    }

    pub fn n_coils(&self) -> usize {
        self.flux_map.n_coils()
    }

    /// Model frequency of one qubit at a bias point.
    pub fn predict(&self, qubit: usize, bias: &BiasPoint) -> Result<f64> {
        let flux = crate::transmon::fluxes_from_currents(&self.flux_map, bias)?[qubit];
        Ok(transmon_frequency(&self.params[qubit], flux))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub lm: LmOptions,
    /// Number of nested current windows fitted with the squared-frequency
    /// objective before the final fit; zero fits the full data directly.
    pub continuation_stages: usize,
    /// Keep every `e_j_max` at its seed value.
    pub freeze_e_j_max: bool,
    /// Skip the half-period coverage check.
    pub allow_underdetermined: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lm: LmOptions::default(),
            continuation_stages: 3,
            freeze_e_j_max: false,
            allow_underdetermined: false,
        }
    }
}

/// Least-squares problem over the free calibration parameters.
///
/// The full layout, per qubit, is `[e_j_max, offset, mutual_0, ..., mutual_{n_coils-1}]`;
/// when `e_j_max` is frozen it is dropped from the free vector.
pub struct ArcProblem<'a> {
    observations: &'a [PeakObservation],
    charging: Vec<f64>,
    frozen_e_j: Option<Vec<f64>>,
    n_coils: usize,
    squared: bool,
}

impl<'a> ArcProblem<'a> {
    pub fn new(
        observations: &'a [PeakObservation],
        seed: &CalibrationResult,
        freeze_e_j_max: bool,
    ) -> Result<Self> {
        let n_qubits = seed.n_qubits();
        let n_coils = seed.n_coils();
        for obs in observations {
            if obs.qubit_index >= n_qubits {
                return Err(Error::DimensionMismatch(format!(
                    "observation for qubit {} but model has {n_qubits}",
                    obs.qubit_index
                )));
            }
            if obs.coil_currents.len() != n_coils {
                return Err(Error::DimensionMismatch(format!(
                    "observation has {} coil currents, model has {n_coils} coils",
                    obs.coil_currents.len()
                )));
            }
            if !(obs.frequency.is_finite() && obs.frequency > 0.0 && obs.weight > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "observation frequency {} / weight {} must be positive",
                    obs.frequency, obs.weight
                )));
            }
        }
        Ok(Self {
            observations,
            charging: seed.params.iter().map(|p| p.e_c).collect(),
            frozen_e_j: freeze_e_j_max.then(|| seed.params.iter().map(|p| p.e_j_max).collect()),
            n_coils,
            squared: false,
        })
    }

    /// Compares `(f + e_c)²` with `e_j_max * e_c * |cos(πΦ)|` instead of
    /// frequencies. The square-root cusp at half-integer flux disappears, which
    /// keeps a rough seed from locking onto the wrong side of it.
    pub fn squared(mut self) -> Self {
        self.squared = true;
        self
    }

    fn block(&self) -> usize {
        self.n_coils + if self.frozen_e_j.is_some() { 1 } else { 2 }
    }

    fn n_qubits(&self) -> usize {
        self.charging.len()
    }

    /// Free-parameter vector for a calibration.
    pub fn pack(&self, cal: &CalibrationResult) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.parameter_count());
        for (i, p) in cal.params.iter().enumerate() {
            if self.frozen_e_j.is_none() {
                x.push(p.e_j_max);
            }
            x.push(cal.flux_map.offsets[i]);
            x.extend_from_slice(&cal.flux_map.mutuals[i]);
        }
        x
    }

    fn e_j(&self, x: &[f64], qubit: usize) -> f64 {
        match &self.frozen_e_j {
            Some(values) => values[qubit],
            None => x[qubit * self.block()],
        }
    }

    /// Offset index and mutual-row start of `qubit` within the free vector.
    fn flux_slots(&self, qubit: usize) -> (usize, usize) {
        let start = qubit * self.block() + usize::from(self.frozen_e_j.is_none());
        (start, start + 1)
    }

    /// Calibration described by a free-parameter vector.
    pub fn unpack(&self, x: &[f64]) -> Result<CalibrationResult> {
        let mut mutuals = Vec::with_capacity(self.n_qubits());
        let mut offsets = Vec::with_capacity(self.n_qubits());
        let mut params = Vec::with_capacity(self.n_qubits());
        for q in 0..self.n_qubits() {
            let (o, m) = self.flux_slots(q);
            offsets.push(x[o]);
            mutuals.push(x[m..m + self.n_coils].to_vec());
            params.push(TransmonParams::new(self.e_j(x, q), self.charging[q])?);
        }
        CalibrationResult::seed(FluxMap::new(mutuals, offsets)?, params)
    }

    fn flux(&self, x: &[f64], obs: &PeakObservation) -> f64 {
        let (o, m) = self.flux_slots(obs.qubit_index);
        x[o] + x[m..m + self.n_coils]
            .iter()
            .zip(obs.coil_currents.currents())
            .map(|(a, b)| a * b)
            .sum::<f64>()
    }

    fn model(&self, x: &[f64], obs: &PeakObservation) -> (f64, f64) {
        let q = obs.qubit_index;
        let e_j = self.e_j(x, q);
        let e_c = self.charging[q];
        let flux = self.flux(x, obs);
        let f = (e_j * (std::f64::consts::PI * flux).cos().abs() * e_c).sqrt() - e_c;
        let mut weight = obs.weight;
        if (f + e_c).abs() < HALF_FLUX_BAND_GHZ {
            weight *= HALF_FLUX_WEIGHT;
        }
        (f, weight.sqrt())
    }

    /// Unweighted RMS frequency error.
    pub fn rms(&self, x: &[f64]) -> f64 {
        if self.observations.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .observations
            .iter()
            .map(|o| (self.model(x, o).0 - o.frequency).powi(2))
            .sum();
        (sum / self.observations.len() as f64).sqrt()
    }
}

impl LeastSquaresProblem for ArcProblem<'_> {
    fn parameter_count(&self) -> usize {
        self.n_qubits() * self.block()
    }

    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.observations
            .par_iter()
            .map(|obs| {
                let (f, sw) = self.model(x, obs);
                if self.squared {
                    let e_c = self.charging[obs.qubit_index];
                    sw * ((f + e_c).powi(2) - (obs.frequency + e_c).powi(2))
                } else {
                    sw * (f - obs.frequency)
                }
            })
            .collect()
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.parameter_count();
        let rows: Vec<Vec<(usize, f64)>> = self
            .observations
            .par_iter()
            .map(|obs| {
                let q = obs.qubit_index;
                let (_, sw) = self.model(x, obs);
                let params = TransmonParams { e_j_max: self.e_j(x, q), e_c: self.charging[q] };
                let flux = self.flux(x, obs);
                let (sin, cos) = (std::f64::consts::PI * flux).sin_cos();
                let (slope, d_e_j) = if self.squared {
                    let slope = -params.e_j_max * params.e_c * std::f64::consts::PI * sin * cos.signum();
                    (slope, params.e_c * cos.abs())
                } else {
                    let root = (params.e_j_max * cos.abs() * params.e_c).sqrt();
                    let d_e_j = if root > 0.0 { 0.5 * cos.abs() * params.e_c / root } else { 0.0 };
                    (transmon_frequency_slope(&params, flux), d_e_j)
                };
                let (o, m) = self.flux_slots(q);
                let mut row = Vec::with_capacity(self.block());
                if self.frozen_e_j.is_none() {
                    row.push((q * self.block(), sw * d_e_j));
                }
                row.push((o, sw * slope));
                for (k, current) in obs.coil_currents.currents().iter().enumerate() {
                    row.push((m + k, sw * slope * current));
                }
                row
            })
            .collect();
        let mut jac = DMatrix::zeros(rows.len(), n);
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                jac[(i, j)] = v;
            }
        }
        jac
    }
}

/// Wraps offsets into `[-0.5, 0.5)` and flips qubit rows so diagonal mutuals are non-negative.
pub fn fix_gauge(cal: &mut CalibrationResult) {
    let n_coils = cal.n_coils();
    for (i, (row, offset)) in cal
        .flux_map
        .mutuals
        .iter_mut()
        .zip(cal.flux_map.offsets.iter_mut())
        .enumerate()
    {
        *offset -= (*offset + 0.5).floor();
        if i < n_coils && row[i] < 0.0 {
            *offset = -*offset;
            row.iter_mut().for_each(|m| *m = -*m);
            if *offset >= 0.5 {
                *offset -= 1.0;
            }
        }
    }
}

fn check_coverage(observations: &[PeakObservation], seed: &CalibrationResult) -> Result<()> {
    for q in 0..seed.n_qubits() {
        for c in 0..seed.n_coils() {
            let (lo, hi) = observations
                .iter()
                .filter(|o| o.qubit_index == q)
                .map(|o| o.coil_currents.currents()[c])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| (lo.min(i), hi.max(i)));
            let span = seed.flux_map.mutual(q, c).abs() * (hi - lo);
            if !(span >= 0.5) {
                return Err(Error::InsufficientData(format!(
                    "qubit {q} / coil {c} covers {:.3} flux periods, need 0.5",
                    span.max(0.0)
                )));
            }
        }
    }
    Ok(())
}

/// Fits transmon arcs to peak observations, starting from `seed`.
///
/// Warm-up fits run over nested windows of coil current (innermost first) on
/// the squared-frequency objective, so that a seed that is only roughly right
/// does not lock onto a neighbouring period. The final fit minimizes the
/// weighted squared frequency error over every observation.
pub fn fit_arcs(
    observations: &[PeakObservation],
    seed: &CalibrationResult,
    options: &FitOptions,
) -> Result<CalibrationResult> {
    if observations.is_empty() {
        return Err(Error::InsufficientData("no observations".into()));
    }
    let full = ArcProblem::new(observations, seed, options.freeze_e_j_max)?;
    if !options.allow_underdetermined {
        check_coverage(observations, seed)?;
    }

    let reach = |o: &PeakObservation| o.coil_currents.currents().iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let max_reach = observations.iter().map(reach).fold(0.0, f64::max);
    let stages = options.continuation_stages;

    let mut current = seed.clone();
    for stage in 1..=stages {
        let limit = max_reach * stage as f64 / stages as f64;
        let subset: Vec<PeakObservation> =
            observations.iter().filter(|o| reach(o) <= limit).cloned().collect();
        let problem = ArcProblem::new(&subset, &current, options.freeze_e_j_max)?.squared();
        // Early windows may be too narrow to pin every parameter; the next window takes over.
        if let Ok(report) = minimize(&problem, &problem.pack(&current), &options.lm) {
            if let Ok(mut next) = problem.unpack(&report.params) {
                fix_gauge(&mut next);
                current = next;
            }
        }
    }

    let report = minimize(&full, &full.pack(&current), &options.lm)?;
    let mut result = full.unpack(&report.params)?;
    result.residual_rms = full.rms(&report.params);
    result.covariance_diagonal = expand_covariance(&report.covariance_diagonal(), &full);
    fix_gauge(&mut result);
    Ok(result)
}

fn expand_covariance(free: &[f64], problem: &ArcProblem<'_>) -> Vec<f64> {
    if problem.frozen_e_j.is_none() {
        return free.to_vec();
    }
    free.chunks(problem.block()).flat_map(|chunk| std::iter::once(0.0).chain(chunk.iter().copied())).collect()
}

/// Re-fits offsets and mutuals (and optionally `e_j_max`) from fresh data
/// near a working point, seeded at a previous calibration.
pub fn refine_map(
    previous: &CalibrationResult,
    new_observations: &[PeakObservation],
    freeze_e_j_max: bool,
) -> Result<CalibrationResult> {
    let options = FitOptions {
        continuation_stages: 0,
        freeze_e_j_max,
        allow_underdetermined: true,
        ..FitOptions::default()
    };
    fit_arcs(new_observations, previous, &options)
}

/// Observations within `k` robust sigmas of the calibration's prediction.
///
/// Sigma is the scaled median absolute residual of each qubit separately; the
/// cut never comes closer than `floor` GHz.
pub fn reject_outliers(
    observations: &[PeakObservation],
    result: &CalibrationResult,
    k: f64,
    floor: f64,
) -> Result<Vec<PeakObservation>> {
    let residuals = observations
        .iter()
        .map(|o| Ok((o.frequency - result.predict(o.qubit_index, &o.coil_currents)?).abs()))
        .collect::<Result<Vec<f64>>>()?;
    let cuts: Vec<f64> = (0..result.n_qubits())
        .map(|q| {
            let mut own: Vec<f64> = observations
                .iter()
                .zip(&residuals)
                .filter(|(o, _)| o.qubit_index == q)
                .map(|(_, &r)| r)
                .collect();
            own.sort_by(f64::total_cmp);
            let mad = own.get(own.len() / 2).copied().unwrap_or(0.0);
            (k * 1.4826 * mad).max(floor)
        })
        .collect();
    Ok(observations
        .iter()
        .zip(&residuals)
        .filter(|(o, &r)| r <= cuts[o.qubit_index])
        .map(|(o, _)| o.clone())
        .collect())
}

/// Coil current that advances qubit `qubit`'s flux by one period.
pub fn flux_period_in_current(result: &CalibrationResult, qubit: usize, coil: usize) -> Result<f64> {
    if qubit >= result.n_qubits() || coil >= result.n_coils() {
        return Err(Error::DimensionMismatch(format!(
            "no mutual for qubit {qubit}, coil {coil}"
        )));
    }
    let m = result.flux_map.mutual(qubit, coil);
    if m == 0.0 {
        return Err(Error::ZeroMutual { qubit, coil });
    }
    Ok(1.0 / m)
}

/// Maps tracked ridges onto model qubits.
///
/// Observations arrive labelled by track. Each track is given to the qubit
/// whose seed prediction has the smallest RMS distance from it.
pub fn assign_tracks_to_qubits(
    tracks: &[PeakObservation],
    seed: &CalibrationResult,
) -> Result<Vec<PeakObservation>> {
    let n_tracks = tracks.iter().map(|o| o.qubit_index + 1).max().unwrap_or(0);
    let mut sums = vec![vec![0.0; seed.n_qubits()]; n_tracks];
    for obs in tracks {
        for (q, sum) in sums[obs.qubit_index].iter_mut().enumerate() {
            *sum += (seed.predict(q, &obs.coil_currents)? - obs.frequency).powi(2);
        }
    }
    let labels: Vec<usize> = sums
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map_or(0, |(q, _)| q)
        })
        .collect();
    Ok(tracks
        .iter()
        .map(|o| PeakObservation { qubit_index: labels[o.qubit_index], ..o.clone() })
        .collect())
}
