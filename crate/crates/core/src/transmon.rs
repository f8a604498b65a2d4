//! Flux-tunable transmon frequencies and the linear coil-to-flux crosstalk map.
//!
//! Units throughout: energies and frequencies in GHz (h = 1), flux in units of
//! the flux quantum Φ0, coil currents in mA, mutual inductances in Φ0/mA.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Charging energy fixed by the capacitor-pad geometry, in GHz.
pub const DEFAULT_CHARGING_ENERGY_GHZ: f64 = 0.130;

/// Condition number above which the crosstalk matrix is treated as singular.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

/// Energy scales of one transmon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransmonParams")]
pub struct TransmonParams {
    /// Maximum Josephson energy of the SQUID at zero flux (GHz).
    pub e_j_max: f64,
    /// Charging energy (GHz).
    pub e_c: f64,
}

#[derive(Deserialize)]
struct RawTransmonParams {
    e_j_max: f64,
    e_c: f64,
}

impl TryFrom<RawTransmonParams> for TransmonParams {
    type Error = Error;

    fn try_from(raw: RawTransmonParams) -> Result<Self> {
        TransmonParams::new(raw.e_j_max, raw.e_c)
    }
}

impl TransmonParams {
    pub fn new(e_j_max: f64, e_c: f64) -> Result<Self> {
        if !(e_c.is_finite() && e_c > 0.0) {
            return Err(Error::InvalidParameter(format!("e_c must be positive, got {e_c}")));
        }
        if !(e_j_max.is_finite() && e_j_max > e_c) {
            return Err(Error::InvalidParameter(format!(
                "e_j_max must exceed e_c ({e_c}), got {e_j_max}"
            )));
        }
        Ok(Self { e_j_max, e_c })
    }

    /// Parameters whose zero-flux frequency is `f_max` for the given charging energy.
    pub fn with_max_frequency(f_max: f64, e_c: f64) -> Result<Self> {
        let e_j_max = (f_max + e_c).powi(2) / e_c;
        Self::new(e_j_max, e_c)
    }

    /// Frequency at zero flux, the top of the tuning arc.
    pub fn max_frequency(&self) -> f64 {
        (self.e_j_max * self.e_c).sqrt() - self.e_c
    }

    pub fn min_frequency(&self) -> f64 {
        -self.e_c
    }
}

/// Qubit transition frequency at the given flux.
///
/// Evaluates `sqrt(e_j_max * |cos(pi * flux)| * e_c) - e_c`. Near half-integer
/// flux the result goes non-positive and is returned as is.
pub fn transmon_frequency(params: &TransmonParams, flux: f64) -> f64 {
    (params.e_j_max * (PI * flux).cos().abs() * params.e_c).sqrt() - params.e_c
}

/// Derivative of [`transmon_frequency`] with respect to flux.
///
/// Zero exactly at half-integer flux, where the one-sided derivatives diverge.
pub fn transmon_frequency_slope(params: &TransmonParams, flux: f64) -> f64 {
    let (s, c) = (PI * flux).sin_cos();
    let root = (params.e_j_max * c.abs() * params.e_c).sqrt();
    if root == 0.0 {
        return 0.0;
    }
    -0.5 * params.e_j_max * params.e_c * PI * s * c.signum() / root
}

/// Principal-branch flux in `[0, 0.5]` that puts the qubit at frequency `f`.
pub fn flux_for_frequency(params: &TransmonParams, f: f64) -> Result<f64> {
    let (min, max) = (params.min_frequency(), params.max_frequency());
    if !(f >= min && f <= max) {
        return Err(Error::TargetUnreachable { qubit: None, target: f, min, max });
    }
    let ratio = (f + params.e_c).powi(2) / (params.e_j_max * params.e_c);
    Ok(ratio.min(1.0).acos() / PI)
}

/// Coil currents (mA), one entry per coil.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BiasPoint {
    currents: Vec<f64>,
}

impl TryFrom<Vec<f64>> for BiasPoint {
    type Error = Error;

    fn try_from(currents: Vec<f64>) -> Result<Self> {
        BiasPoint::new(currents)
    }
}

impl From<BiasPoint> for Vec<f64> {
    fn from(bias: BiasPoint) -> Self {
        bias.currents
    }
}

impl BiasPoint {
    pub fn new(currents: Vec<f64>) -> Result<Self> {
        if let Some(bad) = currents.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite coil current {bad}")));
        }
        Ok(Self { currents })
    }

    pub fn zeros(n_coils: usize) -> Self {
        Self { currents: vec![0.0; n_coils] }
    }

    /// All coils at zero except `coil`, which carries `current`.
    pub fn single_coil(n_coils: usize, coil: usize, current: f64) -> Self {
        let mut bias = Self::zeros(n_coils);
        bias.currents[coil] = current;
        bias
    }

    pub fn currents(&self) -> &[f64] {
        &self.currents
    }

    pub fn len(&self) -> usize {
        self.currents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.currents.is_empty()
    }
}

/// Linear crosstalk map from coil currents to qubit fluxes:
/// `flux_i = offsets[i] + sum_j mutuals[i][j] * current_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFluxMap")]
pub struct FluxMap {
    /// Row `i` holds the mutuals of qubit `i` to every coil (Φ0/mA).
    pub mutuals: Vec<Vec<f64>>,
    /// Flux offset of each qubit at zero current (Φ0).
    pub offsets: Vec<f64>,
}

#[derive(Deserialize)]
struct RawFluxMap {
    mutuals: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

impl TryFrom<RawFluxMap> for FluxMap {
    type Error = Error;

    fn try_from(raw: RawFluxMap) -> Result<Self> {
        FluxMap::new(raw.mutuals, raw.offsets)
    }
}

impl FluxMap {
    pub fn new(mutuals: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if mutuals.len() != offsets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} mutual rows but {} offsets",
                mutuals.len(),
                offsets.len()
            )));
        }
        let n_coils = mutuals.first().map_or(0, Vec::len);
        if mutuals.iter().any(|row| row.len() != n_coils) {
            return Err(Error::DimensionMismatch("ragged mutual-inductance matrix".into()));
        }
        if mutuals.iter().flatten().chain(&offsets).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite flux map entry".into()));
        }
        Ok(Self { mutuals, offsets })
    }

    /// Identity crosstalk with zero offsets.
    pub fn identity(n: usize) -> Self {
        let mutuals = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { mutuals, offsets: vec![0.0; n] }
    }

    pub fn n_qubits(&self) -> usize {
        self.offsets.len()
    }

    pub fn n_coils(&self) -> usize {
        self.mutuals.first().map_or(0, Vec::len)
    }

    pub fn mutual(&self, qubit: usize, coil: usize) -> f64 {
        self.mutuals[qubit][coil]
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_qubits(), self.n_coils(), |i, j| self.mutuals[i][j])
    }

    /// Ratio of largest to smallest singular value; infinite when rank-deficient.
    pub fn condition_number(&self) -> f64 {
        let m = self.matrix();
        if m.is_empty() {
            return f64::INFINITY;
        }
        let sv = m.singular_values();
        let max = sv.max();
        let min = sv.min();
        if max == 0.0 || min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Flux through every qubit loop at the given bias.
pub fn fluxes_from_currents(map: &FluxMap, bias: &BiasPoint) -> Result<Vec<f64>> {
    if bias.len() != map.n_coils() {
        return Err(Error::DimensionMismatch(format!(
            "bias has {} currents, flux map has {} coils",
            bias.len(),
            map.n_coils()
        )));
    }
    Ok(map
        .mutuals
        .iter()
        .zip(&map.offsets)
        .map(|(row, offset)| {
            offset + row.iter().zip(bias.currents()).map(|(m, i)| m * i).sum::<f64>()
        })
        .collect())
}

/// Bare qubit frequencies at a bias point.
pub fn qubit_frequencies(
    map: &FluxMap,
    params: &[TransmonParams],
    bias: &BiasPoint,
) -> Result<Vec<f64>> {
    if params.len() != map.n_qubits() {
        return Err(Error::DimensionMismatch(format!(
            "{} transmons for a {}-qubit flux map",
            params.len(),
            map.n_qubits()
        )));
    }
    let fluxes = fluxes_from_currents(map, bias)?;
    Ok(params.iter().zip(fluxes).map(|(p, phi)| transmon_frequency(p, phi)).collect())
}

/// Coil currents that place every qubit at its target frequency.
///
/// Each qubit uses the principal-branch flux, with the sign picked so the
/// flux stays closest to that qubit's offset (ties go positive). The
/// resulting fluxes are mapped back to currents by solving the square
/// crosstalk system.
pub fn currents_for_targets(
    map: &FluxMap,
    params: &[TransmonParams],
    targets: &[f64],
) -> Result<BiasPoint> {
    let n = map.n_qubits();
    if map.n_coils() != n {
        return Err(Error::DimensionMismatch(format!(
            "planning needs a square flux map, got {n} qubits x {} coils",
            map.n_coils()
        )));
    }
    if params.len() != n || targets.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} qubits but {} transmons and {} targets",
            params.len(),
            targets.len()
        )));
    }

    let mut rhs = DVector::zeros(n);
    for (i, ((p, &target), &offset)) in params.iter().zip(targets).zip(&map.offsets).enumerate() {
        // Negative frequencies are formula artefacts, not operating points.
        let principal = if target < 0.0 {
            Err(Error::TargetUnreachable {
                qubit: None,
                target,
                min: 0.0,
                max: p.max_frequency(),
            })
        } else {
            flux_for_frequency(p, target)
        }
        .map_err(|e| match e {
            Error::TargetUnreachable { target, min, max, .. } => {
                Error::TargetUnreachable { qubit: Some(i), target, min: min.max(0.0), max }
            }
            other => other,
        })?;
        let flux = if (principal - offset).abs() <= (-principal - offset).abs() {
            principal
        } else {
            -principal
        };
        rhs[i] = flux - offset;
    }

    let condition = map.condition_number();
    if !(condition <= MAX_CONDITION_NUMBER) {
        return Err(Error::SingularMatrix { condition });
    }
    let solution = map
        .matrix()
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularMatrix { condition })?;
    BiasPoint::new(solution.iter().copied().collect())
}
