#![allow(dead_code, clippy::needless_range_loop)]

use cavflux::calibration::CalibrationResult;
use cavflux::hermitian::HermitianMatrix;
use cavflux::spectrum::{CavityMode, SystemModel};
use cavflux::transmon::{FluxMap, TransmonParams};
use num_complex::Complex64;
use rand::Rng;

pub const E_C: f64 = 0.130;
pub const F_R: f64 = 7.295;
pub const F_MAX: [f64; 3] = [6.45, 6.30, 5.85];
pub const MUTUALS: [[f64; 3]; 3] = [[0.20, 0.06, 0.05], [0.07, 0.16, 0.06], [0.05, 0.08, 0.18]];
pub const OFFSETS: [f64; 3] = [0.12, -0.08, 0.17];

/// Relative perturbation of each seed mutual, all within 20%.
const SEED_SCALE: [[f64; 3]; 3] = [[1.15, 0.9, 1.1], [0.88, 1.12, 0.92], [1.08, 0.85, 0.9]];

pub fn truth() -> CalibrationResult {
    let params = F_MAX.iter().map(|&f| TransmonParams::with_max_frequency(f, E_C).unwrap()).collect();
    let map = FluxMap::new(MUTUALS.iter().map(|r| r.to_vec()).collect(), OFFSETS.to_vec()).unwrap();
    CalibrationResult::seed(map, params).unwrap()
}

pub fn seed() -> CalibrationResult {
    let t = truth();
    let mutuals = MUTUALS
        .iter()
        .zip(SEED_SCALE)
        .map(|(row, scale)| row.iter().zip(scale).map(|(m, s)| m * s).collect())
        .collect();
    let offsets = OFFSETS.iter().zip([0.04, -0.03, 0.05]).map(|(o, d)| o + d).collect();
    let params = t
        .params
        .iter()
        .zip([0.9, 1.1, 0.92])
        .map(|(p, s)| TransmonParams::new(p.e_j_max * s, E_C).unwrap())
        .collect();
    CalibrationResult::seed(FluxMap::new(mutuals, offsets).unwrap(), params).unwrap()
}

/// Ground truth as a spectroscopy model with cavity couplings `g`.
pub fn truth_model(g: f64) -> SystemModel {
    let t = truth();
    SystemModel::new(CavityMode::new(F_R, 0.0, 0.0).unwrap(), t.params, t.flux_map)
        .unwrap()
        .with_couplings(vec![g; 3])
        .unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> HermitianMatrix {
    let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        entries[i * n + i] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
        for j in i + 1..n {
            let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            entries[i * n + j] = z;
            entries[j * n + i] = z.conj();
        }
    }
    HermitianMatrix::from_row_major(n, entries).unwrap()
}

/// Number of eigenvalues below `x`: negative pivots of the LDLᴴ factorisation
/// of `H - xI` (Sylvester inertia).
fn count_below(h: &HermitianMatrix, x: f64) -> usize {
    let n = h.dim();
    let mut a: Vec<Vec<Complex64>> = (0..n).map(|i| (0..n).map(|j| h.get(i, j)).collect()).collect();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] -= x;
    }
    let mut negatives = 0;
    for k in 0..n {
        let mut pivot = a[k][k].re;
        if pivot == 0.0 {
            pivot = -f64::EPSILON * (1.0 + x.abs());
        }
        if pivot < 0.0 {
            negatives += 1;
        }
        for i in k + 1..n {
            let factor = a[i][k] / pivot;
            for j in k + 1..n {
                let update = factor * a[k][j];
                a[i][j] -= update;
            }
        }
    }
    negatives
}

/// Eigenvalues located by bisection on the inertia count, ascending.
pub fn bisection_eigenvalues(h: &HermitianMatrix) -> Vec<f64> {
    let n = h.dim();
    let bound = (0..n)
        .map(|i| (0..n).map(|j| h.get(i, j).norm()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (-bound, bound);
            while hi - lo > 1e-14 * bound {
                let mid = 0.5 * (lo + hi);
                if count_below(h, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// Closed-form spectrum of a 2x2 Hermitian matrix, ascending.
pub fn analytic_2x2(h: &HermitianMatrix) -> [f64; 2] {
    let (a, d, b) = (h.get(0, 0).re, h.get(1, 1).re, h.get(0, 1));
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt();
    [mean - r, mean + r]
}

/// Trigonometric closed form for a 3x3 Hermitian matrix, ascending.
pub fn analytic_3x3(h: &HermitianMatrix) -> [f64; 3] {
    let q = h.trace() / 3.0;
    let off = h.get(0, 1).norm_sqr() + h.get(0, 2).norm_sqr() + h.get(1, 2).norm_sqr();
    if off == 0.0 {
        let mut d = [h.get(0, 0).re, h.get(1, 1).re, h.get(2, 2).re];
        d.sort_by(f64::total_cmp);
        return d;
    }
    let p2 = (0..3).map(|i| (h.get(i, i).re - q).powi(2)).sum::<f64>() + 2.0 * off;
    let p = (p2 / 6.0).sqrt();
    let b = |i: usize, j: usize| (h.get(i, j) - if i == j { q } else { 0.0 }) / p;
    let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
        + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    let r = (0.5 * det.re).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [lo, 3.0 * q - hi - lo, hi]
}
