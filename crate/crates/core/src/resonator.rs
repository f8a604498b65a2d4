//! Internal and external quality factors from single-port reflection traces.
//!
//! The resonance is modelled as
//! `S11(f) = 1 - (2/q_ext) / (1/q_int + 1/q_ext + 2i(f - f0)/f0)`
//! seen through a background `a · exp(i(α - 2π(f - f_ref)τ))` with `f_ref` the
//! centre of the trace (τ in ns for f in GHz).

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::optimize::{minimize, LeastSquaresProblem, LmOptions};

/// Minimum number of samples in a trace.
pub const MIN_TRACE_POINTS: usize = 16;

/// Complex reflection samples on a strictly increasing frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionTrace {
    frequencies: Vec<f64>,
    s11: Vec<Complex64>,
}

impl ReflectionTrace {
    pub fn new(frequencies: Vec<f64>, s11: Vec<Complex64>) -> Result<Self> {
        if frequencies.len() != s11.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frequencies but {} S11 samples",
                frequencies.len(),
                s11.len()
            )));
        }
        if frequencies.len() < MIN_TRACE_POINTS {
            return Err(Error::InvalidParameter(format!(
                "trace needs at least {MIN_TRACE_POINTS} points, got {}",
                frequencies.len()
            )));
        }
        if frequencies.iter().any(|f| !f.is_finite()) || s11.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("non-finite trace value".into()));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidRange("trace frequencies must strictly increase".into()));
        }
        Ok(Self { frequencies, s11 })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn s11(&self) -> &[Complex64] {
        &self.s11
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    fn center(&self) -> f64 {
        0.5 * (self.frequencies[0] + self.frequencies[self.len() - 1])
    }
}

/// Complex scale and linear phase delay multiplying the resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub scale: f64,
    /// Phase at `reference_ghz` (rad).
    pub phase: f64,
    /// Electrical delay (ns).
    pub delay_ns: f64,
    pub reference_ghz: f64,
}

impl Background {
    pub fn at(&self, f: f64) -> Complex64 {
        Complex64::from_polar(self.scale, self.phase - 2.0 * PI * (f - self.reference_ghz) * self.delay_ns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorFitResult {
    /// Resonance frequency (GHz).
    pub f0: f64,
    pub q_int: f64,
    pub q_ext: f64,
    /// RMS magnitude of the complex fit residual.
    pub residual_rms: f64,
    pub background: Background,
}

impl ResonatorFitResult {
    pub fn loaded_q(&self) -> f64 {
        loaded_q(self.q_int, self.q_ext)
    }
}

/// Parallel combination `1 / (1/q_int + 1/q_ext)`.
pub fn loaded_q(q_int: f64, q_ext: f64) -> f64 {
    1.0 / (1.0 / q_int + 1.0 / q_ext)
}

/// Ideal single-port reflection of a resonator, dipping at `f0`.
pub fn model_s11(f0: f64, q_int: f64, q_ext: f64, f: f64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    one - (2.0 / q_ext) / denominator(f0, q_int, q_ext, f)
}

fn denominator(f0: f64, q_int: f64, q_ext: f64, f: f64) -> Complex64 {
    Complex64::new(1.0 / q_int + 1.0 / q_ext, 2.0 * (f - f0) / f0)
}

/// Parameters: `[f0, ln q_int, ln q_ext, scale, phase, delay_ns]`.
struct ReflectionProblem<'a> {
    trace: &'a ReflectionTrace,
    reference: f64,
}

impl ReflectionProblem<'_> {
    fn background(&self, x: &[f64], f: f64) -> Complex64 {
        Complex64::from_polar(x[3], x[4] - 2.0 * PI * (f - self.reference) * x[5])
    }

    fn model(&self, x: &[f64], f: f64) -> Complex64 {
        self.background(x, f) * model_s11(x[0], x[1].exp(), x[2].exp(), f)
    }
}

impl LeastSquaresProblem for ReflectionProblem<'_> {
    fn parameter_count(&self) -> usize {
        6
    }

    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.trace.len());
        for (&f, &s) in self.trace.frequencies.iter().zip(&self.trace.s11) {
            let d = self.model(x, f) - s;
            out.push(d.re);
            out.push(d.im);
        }
        out
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (f0, qi, qe) = (x[0], x[1].exp(), x[2].exp());
        let u = 2.0 / qe;
        let i = Complex64::i();
        let mut jac = DMatrix::zeros(2 * self.trace.len(), 6);
        for (k, &f) in self.trace.frequencies.iter().enumerate() {
            let bg = self.background(x, f);
            let d = denominator(f0, qi, qe, f);
            let d2 = d * d;
            let s = Complex64::new(1.0, 0.0) - u / d;
            let total = bg * s;
            let partials = [
                bg * u * Complex64::new(0.0, -2.0 * f / (f0 * f0)) / d2,
                bg * (-u / qi) / d2,
                bg * (u / d - (u / qe) / d2),
                total / x[3],
                i * total,
                i * total * (-2.0 * PI * (f - self.reference)),
            ];
            for (j, p) in partials.iter().enumerate() {
                jac[(2 * k, j)] = p.re;
                jac[(2 * k + 1, j)] = p.im;
            }
        }
        jac
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Starting point from the deepest dip, its 3 dB width and the trace edges.
fn initial_guess(trace: &ReflectionTrace) -> Result<Vec<f64>> {
    let n = trace.len();
    let mags: Vec<f64> = trace.s11.iter().map(|s| s.norm()).collect();
    let smoothed: Vec<f64> = (0..n)
        .map(|k| {
            let lo = k.saturating_sub(2);
            let hi = (k + 3).min(n);
            mags[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let med = median(&mut mags.clone());
    let (dip, dip_mag) = smoothed
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("trace is non-empty");
    if !(dip_mag < 0.99 * med) {
        return Err(Error::NoResonanceFound);
    }

    let edge = (n / 20).max(2);
    let edges = trace.s11[..edge].iter().chain(&trace.s11[n - edge..]);
    let scale = trace.s11[..edge].iter().chain(&trace.s11[n - edge..]).map(|s| s.norm()).sum::<f64>()
        / (2 * edge) as f64;
    let phase = edges.map(|s| s / s.norm()).sum::<Complex64>().arg();
    let bg = Complex64::from_polar(scale, phase);

    let depth: Vec<f64> = trace.s11.iter().map(|s| 1.0 - (s / bg).norm_sqr()).collect();
    let smoothed_depth: Vec<f64> = (0..n)
        .map(|k| {
            let lo = k.saturating_sub(2);
            let hi = (k + 3).min(n);
            depth[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let peak = smoothed_depth[dip];
    let half = 0.5 * peak;
    let freqs = &trace.frequencies;
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = dip;
        for k in range {
            if smoothed_depth[k] < half {
                let (a, b) = (smoothed_depth[prev], smoothed_depth[k]);
                let t = if a != b { (a - half) / (a - b) } else { 0.5 };
                return Some(freqs[prev] + t * (freqs[k] - freqs[prev]));
            }
            prev = k;
        }
        None
    };
    let left = crossing(&mut (0..dip).rev());
    let right = crossing(&mut (dip + 1..n));
    let f0 = freqs[dip];
    let span = freqs[n - 1] - freqs[0];
    let width = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (f0 - l),
        (None, Some(r)) => 2.0 * (r - f0),
        (None, None) => span / 10.0,
    }
    .max(span / n as f64);
    let q_loaded = f0 / width;

    let at_dip = trace.s11[dip] / bg;
    let coupling = ((1.0 - at_dip.re) / 2.0).clamp(0.02, 0.98);
    let q_ext = q_loaded / coupling;
    let q_int = q_loaded / (1.0 - coupling);
    Ok(vec![f0, q_int.ln(), q_ext.ln(), scale, phase, 0.0])
}

/// Fits resonance frequency, quality factors and background to a reflection trace.
pub fn fit_reflection(trace: &ReflectionTrace) -> Result<ResonatorFitResult> {
    let x0 = initial_guess(trace)?;
    let problem = ReflectionProblem { trace, reference: trace.center() };
    let options = LmOptions { relative_tolerance: 1e-14, ..LmOptions::default() };
    let report = minimize(&problem, &x0, &options)?;
    let x = &report.params;

    let (lo, hi) = (trace.frequencies[0], trace.frequencies[trace.len() - 1]);
    if !(x[0] >= lo && x[0] <= hi) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence { iterations: report.iterations });
    }
    let (mut scale, mut phase) = (x[3], x[4]);
    if scale < 0.0 {
        scale = -scale;
        phase += PI;
    }
    phase = phase.sin().atan2(phase.cos());
    Ok(ResonatorFitResult {
        f0: x[0],
        q_int: x[1].exp(),
        q_ext: x[2].exp(),
        residual_rms: (2.0 * report.cost / trace.len() as f64).sqrt(),
        background: Background { scale, phase, delay_ns: x[5], reference_ghz: problem.reference },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoupled_resonator_reflects_fully() {
        for f in [7.58, 7.5905, 7.6] {
            let s = model_s11(7.5905, 1e5, 1e300, f);
            assert!((s - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn critical_coupling_dips_to_zero() {
        assert!(model_s11(7.5905, 102_000.0, 102_000.0, 7.5905).norm() < 1e-15);
    }

    #[test]
    fn far_off_resonance_reflects() {
        let s = model_s11(7.5905, 102_000.0, 100_000.0, 7.7);
        assert!((s.norm() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn passive_magnitude_bound() {
        for k in 0..200 {
            let f = 7.59 + 1e-5 * k as f64;
            assert!(model_s11(7.5905, 5e4, 4e3, f).norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn loaded_q_examples() {
        assert!((loaded_q(102_000.0, 102_000.0) - 51_000.0).abs() < 1e-9);
        assert!((loaded_q(f64::INFINITY, 4000.0) - 4000.0).abs() < 1e-12);
        assert!((loaded_q(102_000.0, 4000.0) - 3_849.056_603_773_585).abs() < 1e-6);
    }

    #[test]
    fn flat_trace_has_no_resonance() {
        let freqs: Vec<f64> = (0..64).map(|k| 7.59 + 1e-5 * k as f64).collect();
        let s = vec![Complex64::new(1.0, 0.0); 64];
        let trace = ReflectionTrace::new(freqs, s).unwrap();
        assert!(matches!(fit_reflection(&trace), Err(Error::NoResonanceFound)));
    }

    #[test]
    fn trace_validation() {
        let freqs: Vec<f64> = (0..8).map(|k| k as f64).collect();
        assert!(ReflectionTrace::new(freqs, vec![Complex64::new(1.0, 0.0); 8]).is_err());
        let mut freqs: Vec<f64> = (0..20).map(|k| k as f64).collect();
        freqs[5] = 4.0;
        assert!(ReflectionTrace::new(freqs, vec![Complex64::new(1.0, 0.0); 20]).is_err());
    }
}
