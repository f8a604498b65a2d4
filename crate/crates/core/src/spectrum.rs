//! Tavis-Cummings spectra in the single-excitation manifold.
//!
//! The basis is ordered (cavity photon, qubit 1 excited, ..., qubit N excited).
//! Qubits couple to the cavity with strengths `g_i` and to each other through
//! an optional direct exchange matrix. Two-tone spectroscopy is modelled as a
//! drive that is uniform over the qubit components; a line's visibility is its
//! squared overlap with that drive.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{eigh, HermitianMatrix, MAX_DIMENSION};
use crate::map::{ProbeRange, SpectroscopyMap, Sweep};
use crate::transmon::{qubit_frequencies, BiasPoint, FluxMap, TransmonParams};

/// Qubit-cavity coupling used when a model does not specify one (GHz).
pub const DEFAULT_COUPLING_GHZ: f64 = 0.05;
/// Qubit linewidth used when a model does not specify one (GHz).
pub const DEFAULT_QUBIT_LINEWIDTH_GHZ: f64 = 0.01;

/// Eigenstates with more than this total qubit probability count as qubit lines.
const QUBIT_LIKE_THRESHOLD: f64 = 0.5;

/// The cavity's fundamental mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityMode {
    /// Resonance frequency (GHz).
    pub f_r: f64,
    #[serde(default)]
    pub kappa_int: f64,
    #[serde(default)]
    pub kappa_ext: f64,
}

impl CavityMode {
    pub fn new(f_r: f64, kappa_int: f64, kappa_ext: f64) -> Result<Self> {
        let mode = Self { f_r, kappa_int, kappa_ext };
        mode.validate()?;
        Ok(mode)
    }

    fn validate(&self) -> Result<()> {
        if !(self.f_r.is_finite() && self.f_r > 0.0) {
            return Err(Error::InvalidParameter(format!("cavity frequency {} must be positive", self.f_r)));
        }
        if !(self.kappa_int >= 0.0 && self.kappa_ext >= 0.0) {
            return Err(Error::InvalidParameter("cavity linewidths must be non-negative".into()));
        }
        Ok(())
    }
}

/// Cavity, qubits, crosstalk map and the couplings between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystemModel")]
pub struct SystemModel {
    pub cavity: CavityMode,
    pub qubits: Vec<TransmonParams>,
    pub flux_map: FluxMap,
    /// Qubit-cavity couplings `g_i` (GHz).
    pub couplings: Vec<f64>,
    /// Symmetric qubit-qubit exchange (GHz), zero diagonal.
    pub direct_j: Vec<Vec<f64>>,
    /// Qubit linewidths (FWHM, GHz).
    pub qubit_linewidths: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSystemModel {
    cavity: CavityMode,
    qubits: Vec<TransmonParams>,
    flux_map: FluxMap,
    #[serde(default)]
    couplings: Option<Vec<f64>>,
    #[serde(default)]
    direct_j: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    qubit_linewidths: Option<Vec<f64>>,
}

impl TryFrom<RawSystemModel> for SystemModel {
    type Error = Error;

    fn try_from(raw: RawSystemModel) -> Result<Self> {
        let n = raw.qubits.len();
        let model = SystemModel {
            cavity: raw.cavity,
            qubits: raw.qubits,
            flux_map: raw.flux_map,
            couplings: raw.couplings.unwrap_or_else(|| vec![DEFAULT_COUPLING_GHZ; n]),
            direct_j: raw.direct_j.unwrap_or_else(|| vec![vec![0.0; n]; n]),
            qubit_linewidths: raw
                .qubit_linewidths
                .unwrap_or_else(|| vec![DEFAULT_QUBIT_LINEWIDTH_GHZ; n]),
        };
        model.validate()?;
        Ok(model)
    }
}

impl SystemModel {
    /// Model with default couplings, no direct exchange and default linewidths.
    pub fn new(cavity: CavityMode, qubits: Vec<TransmonParams>, flux_map: FluxMap) -> Result<Self> {
        let n = qubits.len();
        let model = Self {
            cavity,
            qubits,
            flux_map,
            couplings: vec![DEFAULT_COUPLING_GHZ; n],
            direct_j: vec![vec![0.0; n]; n],
            qubit_linewidths: vec![DEFAULT_QUBIT_LINEWIDTH_GHZ; n],
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_couplings(mut self, couplings: Vec<f64>) -> Result<Self> {
        self.couplings = couplings;
        self.validate()?;
        Ok(self)
    }

    pub fn with_direct_j(mut self, direct_j: Vec<Vec<f64>>) -> Result<Self> {
        self.direct_j = direct_j;
        self.validate()?;
        Ok(self)
    }

    pub fn with_linewidths(mut self, linewidths: Vec<f64>) -> Result<Self> {
        self.qubit_linewidths = linewidths;
        self.validate()?;
        Ok(self)
    }

    pub fn n_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn n_coils(&self) -> usize {
        self.flux_map.n_coils()
    }

    pub fn validate(&self) -> Result<()> {
        self.cavity.validate()?;
        let n = self.qubits.len();
        if n + 1 > MAX_DIMENSION {
            return Err(Error::DimensionMismatch(format!("at most {} qubits supported", MAX_DIMENSION - 1)));
        }
        if self.flux_map.n_qubits() != n
            || self.couplings.len() != n
            || self.qubit_linewidths.len() != n
            || self.direct_j.len() != n
            || self.direct_j.iter().any(|row| row.len() != n)
        {
            return Err(Error::DimensionMismatch(format!(
                "model lists disagree on qubit count {n}"
            )));
        }
        if self.couplings.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidParameter("couplings must be finite and non-negative".into()));
        }
        if self.qubit_linewidths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParameter("qubit linewidths must be positive".into()));
        }
        for i in 0..n {
            if self.direct_j[i][i] != 0.0 {
                return Err(Error::InvalidParameter("direct exchange must have zero diagonal".into()));
            }
            for j in 0..i {
                if !self.direct_j[i][j].is_finite() || self.direct_j[i][j] != self.direct_j[j][i] {
                    return Err(Error::InvalidParameter("direct exchange must be symmetric".into()));
                }
            }
        }
        Ok(())
    }

    /// Bare (uncoupled) qubit frequencies at a bias point.
    pub fn bare_frequencies(&self, bias: &BiasPoint) -> Result<Vec<f64>> {
        qubit_frequencies(&self.flux_map, &self.qubits, bias)
    }
}

/// Single-excitation Hamiltonian from explicit frequencies and couplings.
pub fn single_excitation_hamiltonian(
    f_r: f64,
    qubit_frequencies: &[f64],
    couplings: &[f64],
    direct_j: &[Vec<f64>],
) -> Result<HermitianMatrix> {
    let n = qubit_frequencies.len();
    if couplings.len() != n || direct_j.len() != n || direct_j.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "{n} qubit frequencies with {} couplings",
            couplings.len()
        )));
    }
    let mut h = HermitianMatrix::zeros(n + 1)?;
    h.set_real(0, 0, f_r);
    for i in 0..n {
        h.set_real(i + 1, i + 1, qubit_frequencies[i]);
        h.set_real(0, i + 1, couplings[i]);
        for j in 0..i {
            h.set_real(i + 1, j + 1, direct_j[i][j]);
        }
    }
    Ok(h)
}

/// Single-excitation Tavis-Cummings Hamiltonian of the model at a bias point.
pub fn build_single_excitation_hamiltonian(
    model: &SystemModel,
    bias: &BiasPoint,
) -> Result<HermitianMatrix> {
    let freqs = model.bare_frequencies(bias)?;
    single_excitation_hamiltonian(model.cavity.f_r, &freqs, &model.couplings, &model.direct_j)
}

/// Second-order dispersive shift `g² / detuning`.
pub fn dispersive_shift(g: f64, detuning: f64) -> Result<f64> {
    if detuning == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    Ok(g * g / detuning)
}

/// Spectroscopic lines visible at one bias point.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSlice {
    /// Qubit-like eigenfrequencies, ascending (GHz).
    pub line_frequencies: Vec<f64>,
    /// Squared overlap of each line with the symmetric qubit drive.
    pub line_weights: Vec<f64>,
    /// Population-weighted qubit linewidth of each line (GHz).
    pub line_linewidths: Vec<f64>,
    /// Eigenfrequency of the state with the largest photon content (GHz).
    pub cavity_frequency_dressed: f64,
}

/// Diagonalizes the single-excitation Hamiltonian and classifies its eigenstates.
pub fn spectrum_slice(model: &SystemModel, bias: &BiasPoint) -> Result<SpectrumSlice> {
    let h = build_single_excitation_hamiltonian(model, bias)?;
    slice_from_hamiltonian(&h, &model.qubit_linewidths)
}

fn slice_from_hamiltonian(h: &HermitianMatrix, linewidths: &[f64]) -> Result<SpectrumSlice> {
    let n = h.dim() - 1;
    let eig = eigh(h)?;
    let drive_norm = 1.0 / (n as f64).sqrt();

    let mut cavity_index = 0;
    let mut best_photon = f64::NEG_INFINITY;
    for (k, v) in eig.vectors.iter().enumerate() {
        let photon = v[0].norm_sqr();
        if photon > best_photon {
            best_photon = photon;
            cavity_index = k;
        }
    }

    let mut slice = SpectrumSlice {
        line_frequencies: Vec::with_capacity(n),
        line_weights: Vec::with_capacity(n),
        line_linewidths: Vec::with_capacity(n),
        cavity_frequency_dressed: eig.values[cavity_index],
    };
    for (k, v) in eig.vectors.iter().enumerate() {
        let qubit_weight: f64 = v[1..].iter().map(Complex64::norm_sqr).sum();
        if k == cavity_index || qubit_weight <= QUBIT_LIKE_THRESHOLD {
            continue;
        }
        let overlap: Complex64 = v[1..].iter().sum::<Complex64>() * drive_norm;
        let width = v[1..]
            .iter()
            .zip(linewidths)
            .map(|(c, w)| c.norm_sqr() * w)
            .sum::<f64>()
            / qubit_weight;
        slice.line_frequencies.push(eig.values[k]);
        slice.line_weights.push(overlap.norm_sqr());
        slice.line_linewidths.push(width);
    }
    Ok(slice)
}

/// Peak-normalized Lorentzian with full width at half maximum `fwhm`.
pub fn lorentzian(f: f64, center: f64, fwhm: f64) -> f64 {
    let half = 0.5 * fwhm;
    half * half / ((f - center).powi(2) + half * half)
}

impl SpectrumSlice {
    /// Summed Lorentzian response at probe frequency `f`.
    pub fn response(&self, f: f64) -> f64 {
        self.line_frequencies
            .iter()
            .zip(&self.line_weights)
            .zip(&self.line_linewidths)
            .map(|((&center, &w), &width)| w * lorentzian(f, center, width))
            .sum()
    }
}

/// Noiseless two-tone spectroscopy map over a single-coil current sweep.
///
/// Bias rows are computed in parallel; each row depends only on its own
/// current, so the output does not depend on the thread schedule.
pub fn simulate_map(model: &SystemModel, sweep: &Sweep, probe: &ProbeRange) -> Result<SpectroscopyMap> {
    sweep.validate()?;
    probe.validate()?;
    model.validate()?;
    let n_coils = model.n_coils();
    if sweep.coil >= n_coils {
        return Err(Error::DimensionMismatch(format!(
            "swept coil {} out of range for {n_coils} coils",
            sweep.coil
        )));
    }
    let currents = sweep.currents();
    let probes = probe.frequencies();

    let rows = currents
        .par_iter()
        .map(|&current| {
            let bias = BiasPoint::single_coil(n_coils, sweep.coil, current);
            let slice = spectrum_slice(model, &bias)?;
            Ok(probes.iter().map(|&f| slice.response(f)).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;

    SpectroscopyMap::new(sweep.coil, n_coils, currents, probes, rows.concat())
}

/// Minimum line separation at a two-qubit avoided crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingGap {
    /// Smallest separation between the two qubit-like lines (GHz).
    pub splitting: f64,
    /// Bare frequency of the scanned qubit where the minimum occurs (GHz).
    pub scanned_frequency: f64,
}

/// Tunes the first of two qubits through the second (held at `f_fixed`) and
/// locates the minimum splitting of the two qubit-like lines.
///
/// Coarse scan over `f_fixed ± window`, refined by golden-section search.
pub fn crossing_gap(
    f_r: f64,
    f_fixed: f64,
    couplings: [f64; 2],
    direct: f64,
    window: f64,
) -> Result<CrossingGap> {
    let direct_j = vec![vec![0.0, direct], vec![direct, 0.0]];
    let widths = [1.0, 1.0];
    let splitting = |f_scan: f64| -> Result<f64> {
        let h = single_excitation_hamiltonian(f_r, &[f_scan, f_fixed], &couplings, &direct_j)?;
        let slice = slice_from_hamiltonian(&h, &widths)?;
        match slice.line_frequencies.as_slice() {
            [lo, hi] => Ok(hi - lo),
            other => Err(Error::InvalidParameter(format!(
                "expected two qubit-like lines, found {}",
                other.len()
            ))),
        }
    };

    const COARSE: usize = 401;
    let grid = crate::map::linspace(f_fixed - window, f_fixed + window, COARSE);
    let mut best = (f64::INFINITY, 0usize);
    for (k, &f) in grid.iter().enumerate() {
        let s = splitting(f)?;
        if s < best.0 {
            best = (s, k);
        }
    }
    let lo_idx = best.1.saturating_sub(1);
    let hi_idx = (best.1 + 1).min(COARSE - 1);
    let (mut a, mut b) = (grid[lo_idx], grid[hi_idx]);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = splitting(c)?;
    let mut fd = splitting(d)?;
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 * f_fixed.abs().max(1.0) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = splitting(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = splitting(d)?;
        }
    }
    let (scanned_frequency, s) = if fc < fd { (c, fc) } else { (d, fd) };
    let (scanned_frequency, splitting) =
        if best.0 < s { (grid[best.1], best.0) } else { (scanned_frequency, s) };
    Ok(CrossingGap { splitting, scanned_frequency })
}
