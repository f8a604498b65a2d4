//! Fixtures shared by the criterion benches.

use cavflux::calibration::{CalibrationResult, PeakObservation};
use cavflux::hermitian::HermitianMatrix;
use cavflux::spectrum::{CavityMode, SystemModel};
use cavflux::synth::{coil_sweep_biases, gen_peak_observations, NoiseSpec};
use cavflux::transmon::{FluxMap, TransmonParams};
use num_complex::Complex64;

const E_C: f64 = 0.13;
const F_MAX: [f64; 3] = [6.45, 6.30, 5.85];
const MUTUALS: [[f64; 3]; 3] = [[0.20, 0.06, 0.05], [0.07, 0.16, 0.06], [0.05, 0.08, 0.18]];
const OFFSETS: [f64; 3] = [0.12, -0.08, 0.17];

pub fn three_qubit_model() -> SystemModel {
    let params = F_MAX.iter().map(|&f| TransmonParams::with_max_frequency(f, E_C).unwrap()).collect();
    let map = FluxMap::new(MUTUALS.iter().map(|r| r.to_vec()).collect(), OFFSETS.to_vec()).unwrap();
    SystemModel::new(CavityMode::new(7.295, 0.0, 0.0).unwrap(), params, map).unwrap()
}

/// Truth with every mutual scaled by 1.1 and offsets shifted by 0.02.
pub fn perturbed_seed() -> CalibrationResult {
    let m = three_qubit_model();
    let mutuals = m.flux_map.mutuals.iter().map(|r| r.iter().map(|x| 1.1 * x).collect()).collect();
    let offsets = m.flux_map.offsets.iter().map(|o| o + 0.02).collect();
    CalibrationResult::seed(FluxMap::new(mutuals, offsets).unwrap(), m.qubits).unwrap()
}

pub fn arc_observations(points: usize) -> Vec<PeakObservation> {
    let noise = NoiseSpec::new(7, 1e-4, 0.0).unwrap();
    gen_peak_observations(&three_qubit_model(), &coil_sweep_biases(3, -6.0, 6.0, points), &noise).unwrap()
}

/// Deterministic dense Hermitian matrix with a spread diagonal.
pub fn hermitian(n: usize) -> HermitianMatrix {
    let mut h = HermitianMatrix::zeros(n).unwrap();
    for i in 0..n {
        h.set_real(i, i, 5.0 + 0.1 * i as f64);
        for j in 0..i {
            let phase = (i * 7 + j * 3) as f64;
            h.set(i, j, Complex64::from_polar(0.05 / (1 + i - j) as f64, phase));
        }
    }
    h
}
