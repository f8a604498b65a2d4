mod common;

use cavflux::calibration::{fix_gauge, CalibrationResult};
use cavflux::hermitian::{eigh, HermitianMatrix};
use cavflux::io::{read_trace_csv, write_trace_csv};
use cavflux::resonator::{model_s11, ReflectionTrace};
use cavflux::transmon::{
    currents_for_targets, flux_for_frequency, qubit_frequencies, transmon_frequency, FluxMap, TransmonParams,
};
use common::random_hermitian;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params() -> impl Strategy<Value = TransmonParams> {
    (4.0..8.0f64, 0.1..0.35f64).prop_map(|(f, e_c)| TransmonParams::with_max_frequency(f, e_c).unwrap())
}

fn unitary(seed: u64, n: usize) -> Vec<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eigh(&random_hermitian(&mut rng, n)).unwrap().vectors
}

/// U H Uᴴ where the rows of `u` are orthonormal vectors.
fn conjugate(h: &HermitianMatrix, u: &[Vec<Complex64>]) -> HermitianMatrix {
    let n = h.dim();
    let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    acc += u[a][i] * h.get(a, b) * u[b][j].conj();
                }
            }
            entries[i * n + j] = acc;
        }
    }
    // Rounding leaves asymmetry around 1e-16; average it out before validation.
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (entries[i * n + j] + entries[j * n + i].conj());
            entries[i * n + j] = avg;
            entries[j * n + i] = avg.conj();
        }
    }
    HermitianMatrix::from_row_major(n, entries).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn frequency_is_periodic(p in params(), flux in -3.0..3.0f64) {
        let a = transmon_frequency(&p, flux);
        let b = transmon_frequency(&p, flux + 1.0);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn frequency_is_even(p in params(), flux in -3.0..3.0f64) {
        prop_assert_eq!(transmon_frequency(&p, flux), transmon_frequency(&p, -flux));
    }

    #[test]
    fn frequency_non_increasing_to_half_flux(p in params(), a in 0.0..0.5f64, b in 0.0..0.5f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(transmon_frequency(&p, hi) <= transmon_frequency(&p, lo));
    }

    #[test]
    fn inverse_round_trip(p in params(), t in 0.0..1.0f64) {
        let f = -p.e_c + t * (p.max_frequency() + p.e_c);
        let flux = flux_for_frequency(&p, f).unwrap();
        prop_assert!((0.0..=0.5).contains(&flux));
        prop_assert!((transmon_frequency(&p, flux) - f).abs() < 1e-9);
    }

    #[test]
    fn planner_round_trip(
        ps in prop::collection::vec(params(), 3),
        diag in prop::collection::vec(0.1..0.3f64, 3),
        off in prop::collection::vec(-0.05..0.05f64, 9),
        offsets in prop::collection::vec(-0.5..0.5f64, 3),
        fractions in prop::collection::vec(0.05..0.95f64, 3),
    ) {
        let mutuals: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { diag[i] } else { off[3 * i + j] }).collect())
            .collect();
        let map = FluxMap::new(mutuals, offsets).unwrap();
        let targets: Vec<f64> = ps
            .iter()
            .zip(&fractions)
            .map(|(p, t)| p.min_frequency().max(0.0) + t * (p.max_frequency() - p.min_frequency().max(0.0)))
            .collect();
        let bias = currents_for_targets(&map, &ps, &targets).unwrap();
        let back = qubit_frequencies(&map, &ps, &bias).unwrap();
        for (f, t) in back.iter().zip(&targets) {
            prop_assert!((f - t).abs() < 1e-6, "{} vs {}", f, t);
        }
    }

    #[test]
    fn eigh_trace_and_unitary_invariance(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(&mut rng, n);
        let e = eigh(&h).unwrap();
        let norm = h.frobenius_norm();
        let sum: f64 = e.values.iter().sum();
        prop_assert!((sum - h.trace()).abs() <= 1e-10 * norm);
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));

        for (lambda, v) in e.values.iter().zip(&e.vectors) {
            let hv = h.apply(v);
            let residual: f64 = hv.iter().zip(v).map(|(a, b)| (a - b * lambda).norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(residual < 1e-10 * norm);
        }
        for i in 0..n {
            for j in 0..n {
                let dot: Complex64 = e.vectors[i].iter().zip(&e.vectors[j]).map(|(a, b)| a.conj() * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).norm() < 1e-10);
            }
        }

        let rotated = eigh(&conjugate(&h, &unitary(seed.wrapping_add(1), n))).unwrap();
        for (a, b) in e.values.iter().zip(&rotated.values) {
            prop_assert!((a - b).abs() < 1e-10 * norm.max(1.0));
        }
    }

    #[test]
    fn reflection_is_passive(f0 in 4.0..9.0f64, qi in 1e3..1e6f64, qe in 1e3..1e6f64, x in -1e-3..1e-3f64) {
        prop_assert!(model_s11(f0, qi, qe, f0 * (1.0 + x)).norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn gauge_pins_diagonal_non_negative(
        m in prop::collection::vec(-0.3..0.3f64, 4),
        offsets in prop::collection::vec(-3.0..3.0f64, 2),
    ) {
        let map = FluxMap::new(vec![m[..2].to_vec(), m[2..].to_vec()], offsets).unwrap();
        let params = vec![TransmonParams::with_max_frequency(6.0, 0.13).unwrap(); 2];
        let mut cal = CalibrationResult::seed(map, params).unwrap();
        let before = cal.clone();
        fix_gauge(&mut cal);
        prop_assert!(cal.flux_map.mutual(0, 0) >= 0.0 && cal.flux_map.mutual(1, 1) >= 0.0);
        prop_assert!(cal.flux_map.offsets.iter().all(|o| (-0.5..0.5).contains(o)));
        // Same predictions everywhere.
        for i in -5..=5 {
            let bias = cavflux::transmon::BiasPoint::new(vec![0.7 * i as f64, -0.3 * i as f64]).unwrap();
            for q in 0..2 {
                prop_assert!((cal.predict(q, &bias).unwrap() - before.predict(q, &bias).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn trace_csv_is_lossless(values in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 16..40)) {
        let freqs: Vec<f64> = (0..values.len()).map(|k| 7.0 + 1e-5 * k as f64).collect();
        let s11: Vec<Complex64> = values.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
        let trace = ReflectionTrace::new(freqs, s11).unwrap();
        let mut first = Vec::new();
        write_trace_csv(&trace, &mut first).unwrap();
        let back = read_trace_csv(first.as_slice()).unwrap();
        prop_assert_eq!(&back, &trace);
        let mut second = Vec::new();
        write_trace_csv(&back, &mut second).unwrap();
        prop_assert_eq!(first, second);
    }
}
