//! Seeded synthetic data: spectroscopy maps, reflection traces and peak lists.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded with
//! `seed_from_u64(seed)`. Every independent unit of output (a map row, a bias
//! point, a trace) draws from its own ChaCha stream selected with
//! `set_stream(index)`, so results do not depend on how work is split across
//! threads. The generator identity is part of the output contract.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::PeakObservation;
use crate::error::{Error, Result};
use crate::map::{linspace, ProbeRange, SpectroscopyMap, Sweep};
use crate::resonator::{model_s11, ReflectionTrace};
use crate::spectrum::{simulate_map, SystemModel};
use crate::transmon::BiasPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub seed: u64,
    /// Standard deviation of Gaussian jitter on peak frequencies (GHz).
    pub frequency_jitter_sigma: f64,
    /// Standard deviation of additive Gaussian amplitude noise. For complex
    /// traces it applies to each quadrature separately.
    pub amplitude_noise_sigma: f64,
}

impl NoiseSpec {
    pub fn new(seed: u64, frequency_jitter_sigma: f64, amplitude_noise_sigma: f64) -> Result<Self> {
        let spec = Self { seed, frequency_jitter_sigma, amplitude_noise_sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn noiseless() -> Self {
        Self { seed: 0, frequency_jitter_sigma: 0.0, amplitude_noise_sigma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s >= 0.0;
        if !(ok(self.frequency_jitter_sigma) && ok(self.amplitude_noise_sigma)) {
            return Err(Error::InvalidParameter("noise sigmas must be finite and non-negative".into()));
        }
        Ok(())
    }

    fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// [`simulate_map`] plus independent Gaussian amplitude noise on every pixel.
pub fn gen_spectroscopy_map(
    model: &SystemModel,
    sweep: &Sweep,
    probe: &ProbeRange,
    noise: &NoiseSpec,
) -> Result<SpectroscopyMap> {
    noise.validate()?;
    let mut map = simulate_map(model, sweep, probe)?;
    let sigma = noise.amplitude_noise_sigma;
    if sigma > 0.0 {
        let n_probe = map.n_probe();
        map.amplitudes
            .par_chunks_mut(n_probe)
            .enumerate()
            .for_each(|(row, values)| {
                let mut rng = noise.stream(row as u64);
                for v in values {
                    *v += sigma * gaussian(&mut rng);
                }
            });
    }
    Ok(map)
}

/// Reflection trace of an ideal resonator on a uniform grid centred at `f0`.
pub fn gen_reflection_trace(
    f0: f64,
    q_int: f64,
    q_ext: f64,
    span: f64,
    points: usize,
    noise: &NoiseSpec,
) -> Result<ReflectionTrace> {
    noise.validate()?;
    if !(f0 > 0.0 && q_int > 0.0 && q_ext > 0.0 && span > 0.0) {
        return Err(Error::InvalidParameter("resonator parameters and span must be positive".into()));
    }
    let freqs = linspace(f0 - 0.5 * span, f0 + 0.5 * span, points);
    let sigma = noise.amplitude_noise_sigma;
    let mut rng = noise.stream(0);
    let s11 = freqs
        .iter()
        .map(|&f| {
            let clean = model_s11(f0, q_int, q_ext, f);
            if sigma > 0.0 {
                let re = gaussian(&mut rng);
                let im = gaussian(&mut rng);
                clean + Complex64::new(re, im) * sigma
            } else {
                clean
            }
        })
        .collect();
    ReflectionTrace::new(freqs, s11)
}

/// Bare qubit frequencies at each bias point, with optional Gaussian jitter.
///
/// Points whose frequency is not positive (near half-integer flux) are skipped.
pub fn gen_peak_observations(
    model: &SystemModel,
    biases: &[BiasPoint],
    noise: &NoiseSpec,
) -> Result<Vec<PeakObservation>> {
    noise.validate()?;
    model.validate()?;
    let sigma = noise.frequency_jitter_sigma;
    let per_bias = biases
        .par_iter()
        .enumerate()
        .map(|(k, bias)| {
            let freqs = model.bare_frequencies(bias)?;
            let mut rng = noise.stream(k as u64);
            Ok(freqs
                .into_iter()
                .enumerate()
                .filter_map(|(q, f)| {
                    let jitter = if sigma > 0.0 { sigma * gaussian(&mut rng) } else { 0.0 };
                    let f = f + jitter;
                    (f > 0.0).then(|| PeakObservation::new(bias.clone(), q, f))
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_bias.concat())
}

/// One single-coil sweep per coil, concatenated in coil order.
pub fn coil_sweep_biases(n_coils: usize, start: f64, stop: f64, points: usize) -> Vec<BiasPoint> {
    let currents = linspace(start, stop, points);
    (0..n_coils)
        .flat_map(|coil| currents.iter().map(move |&c| BiasPoint::single_coil(n_coils, coil, c)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::CavityMode;
    use crate::transmon::{FluxMap, TransmonParams};

    fn model() -> SystemModel {
        let qubits = vec![TransmonParams::with_max_frequency(6.3, 0.13).unwrap()];
        let map = FluxMap::new(vec![vec![0.2]], vec![0.1]).unwrap();
        SystemModel::new(CavityMode::new(7.295, 0.0, 0.0).unwrap(), qubits, map).unwrap()
    }

    #[test]
    fn zero_noise_matches_simulation() {
        let sweep = Sweep { coil: 0, start: -1.0, stop: 1.0, points: 9 };
        let probe = ProbeRange { start: 5.0, stop: 7.0, points: 50 };
        let noisy = gen_spectroscopy_map(&model(), &sweep, &probe, &NoiseSpec::noiseless()).unwrap();
        assert_eq!(noisy, simulate_map(&model(), &sweep, &probe).unwrap());
    }

    #[test]
    fn same_seed_same_trace() {
        let noise = NoiseSpec::new(42, 0.0, 0.01).unwrap();
        let a = gen_reflection_trace(7.5905, 1e5, 1e5, 0.003, 101, &noise).unwrap();
        let b = gen_reflection_trace(7.5905, 1e5, 1e5, 0.003, 101, &noise).unwrap();
        assert_eq!(a, b);
        let other = NoiseSpec { seed: 43, ..noise };
        assert_ne!(a, gen_reflection_trace(7.5905, 1e5, 1e5, 0.003, 101, &other).unwrap());
    }

    #[test]
    fn empty_bias_list() {
        assert!(gen_peak_observations(&model(), &[], &NoiseSpec::noiseless()).unwrap().is_empty());
    }

    #[test]
    fn rejects_negative_sigma() {
        assert!(NoiseSpec::new(1, -1.0, 0.0).is_err());
        assert!(gen_reflection_trace(7.0, -1.0, 1.0, 0.01, 100, &NoiseSpec::noiseless()).is_err());
    }

    #[test]
    fn sweep_biases_layout() {
        let biases = coil_sweep_biases(3, -1.0, 1.0, 5);
        assert_eq!(biases.len(), 15);
        assert_eq!(biases[7].currents(), &[0.0, 0.0, 0.0]);
        assert_eq!(biases[14].currents(), &[0.0, 0.0, 1.0]);
    }
}
