//! Ridge extraction from spectroscopy maps and continuation tracking across bias.

use rayon::prelude::*;

use crate::calibration::PeakObservation;
use crate::error::{Error, Result};
use crate::map::SpectroscopyMap;
use crate::transmon::BiasPoint;

pub const DEFAULT_THRESHOLD: f64 = 0.3;
pub const DEFAULT_MIN_SEPARATION_GHZ: f64 = 0.020;
pub const DEFAULT_MAX_JUMP_STEPS: f64 = 5.0;

/// A local maximum of one bias row, not yet attributed to a qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgePeak {
    pub bias_index: usize,
    pub coil_currents: BiasPoint,
    /// Parabolically refined peak frequency (GHz).
    pub frequency: f64,
    pub amplitude: f64,
}

/// Local maxima of each bias row above `threshold` times that row's maximum
/// and above the row's noise floor.
///
/// Within a row, peaks closer than `min_separation` keep only the stronger one.
/// Output is ordered by bias row, then frequency.
pub fn extract_peaks(map: &SpectroscopyMap, threshold: f64, min_separation: f64) -> Result<Vec<RidgePeak>> {
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    let probes = &map.probes;
    let rows: Vec<Vec<RidgePeak>> = (0..map.n_bias())
        .into_par_iter()
        .map(|b| {
            let row = map.row(b);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(max > 0.0) {
                return Vec::new();
            }
            let floor = (threshold * max).max(noise_floor(row));
            let mut candidates: Vec<(f64, f64)> = (1..row.len().saturating_sub(1))
                .filter(|&k| row[k] > row[k - 1] && row[k] >= row[k + 1] && row[k] >= floor)
                .map(|k| {
                    let (a, c, e) = (row[k - 1], row[k], row[k + 1]);
                    // 1/L is an exact parabola for a Lorentzian line.
                    let (a, m, e) = if a > 0.0 && e > 0.0 { (1.0 / a, 1.0 / c, 1.0 / e) } else { (-a, -c, -e) };
                    let curvature = a - 2.0 * m + e;
                    let shift = if curvature > 0.0 { (0.5 * (a - e) / curvature).clamp(-0.5, 0.5) } else { 0.0 };
                    let step = 0.5 * (probes[k + 1] - probes[k - 1]);
                    (probes[k] + shift * step, c)
                })
                .collect();
            candidates.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.total_cmp(&y.0)));
            let mut kept: Vec<(f64, f64)> = Vec::new();
            for (f, a) in candidates {
                if kept.iter().all(|(g, _)| (f - g).abs() >= min_separation) {
                    kept.push((f, a));
                }
            }
            kept.sort_by(|x, y| x.0.total_cmp(&y.0));
            let bias = map.bias(b);
            kept.into_iter()
                .map(|(frequency, amplitude)| RidgePeak {
                    bias_index: b,
                    coil_currents: bias.clone(),
                    frequency,
                    amplitude,
                })
                .collect()
        })
        .collect();
    Ok(rows.concat())
}

/// Rows made only of noise would otherwise yield peaks at any relative
/// threshold, so peaks must also clear the row median by five robust sigmas.
fn noise_floor(row: &[f64]) -> f64 {
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
    };
    let mut values = row.to_vec();
    let center = median(&mut values);
    let mut deviations: Vec<f64> = row.iter().map(|v| (v - center).abs()).collect();
    center + 5.0 * 1.4826 * median(&mut deviations)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingOptions {
    /// Largest allowed distance between a track's prediction and its next peak (GHz).
    pub max_jump: f64,
    /// Tracks shorter than this are discarded.
    pub min_length: usize,
}

impl TrackingOptions {
    /// Default tolerances for a map: a jump of five probe-grid steps.
    pub fn for_map(map: &SpectroscopyMap) -> Self {
        Self { max_jump: DEFAULT_MAX_JUMP_STEPS * map.probe_step(), min_length: 3 }
    }
}

/// Labelled peaks plus how many peaks were dropped as contested.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingOutcome {
    pub observations: Vec<PeakObservation>,
    /// Peaks claimed by more than one track; the claiming tracks were ended there.
    pub ambiguous: usize,
    pub n_tracks: usize,
}

impl TrackingOutcome {
    /// Fails if any peak was contested.
    pub fn strict(self) -> Result<Vec<PeakObservation>> {
        if self.ambiguous > 0 {
            return Err(Error::AmbiguousTracking { count: self.ambiguous });
        }
        Ok(self.observations)
    }
}

struct Track {
    points: Vec<usize>,
    open: bool,
}

/// Links peaks across bias rows by nearest-neighbour continuation.
///
/// Each open track predicts its next frequency by linear extrapolation of its
/// last two points (tolerating one missing row) and claims the nearest peak
/// within `max_jump`. A peak claimed by two or more tracks ends all of them and
/// is dropped, so tracks stop at avoided crossings instead of swapping
/// identities. Unclaimed peaks start new tracks. Labels run `0..K` in order of
/// descending mean frequency.
///
/// This only catches gaps narrower than `max_jump`. At a wider gap one branch
/// goes dark before the lines come close, and the surviving track follows the
/// bright branch from one qubit onto the other.
pub fn assign_tracks(peaks: &[RidgePeak], options: &TrackingOptions) -> Result<TrackingOutcome> {
    if peaks.windows(2).any(|w| w[1].bias_index < w[0].bias_index) {
        return Err(Error::InvalidParameter("peaks must be sorted by bias".into()));
    }
    let mut tracks: Vec<Track> = Vec::new();
    let mut ambiguous = 0;

    let mut start = 0;
    while start < peaks.len() {
        let column = peaks[start].bias_index;
        let end = start + peaks[start..].iter().take_while(|p| p.bias_index == column).count();

        let mut claims: Vec<Vec<usize>> = vec![Vec::new(); end - start];
        for (t, track) in tracks.iter_mut().enumerate() {
            if !track.open {
                continue;
            }
            let last = &peaks[*track.points.last().expect("tracks are never empty")];
            let gap = column - last.bias_index;
            if gap > 2 {
                track.open = false;
                continue;
            }
            let slope = match track.points.len() {
                0 | 1 => 0.0,
                n => {
                    let prev = &peaks[track.points[n - 2]];
                    (last.frequency - prev.frequency) / (last.bias_index - prev.bias_index) as f64
                }
            };
            let predicted = last.frequency + slope * gap as f64;
            let nearest = (start..end)
                .map(|k| (k, (peaks[k].frequency - predicted).abs()))
                .filter(|&(_, d)| d <= options.max_jump)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((k, _)) = nearest {
                claims[k - start].push(t);
            }
        }

        for (offset, claimants) in claims.iter().enumerate() {
            match claimants.as_slice() {
                [] => tracks.push(Track { points: vec![start + offset], open: true }),
                [t] => tracks[*t].points.push(start + offset),
                many => {
                    ambiguous += 1;
                    for &t in many {
                        tracks[t].open = false;
                    }
                }
            }
        }
        start = end;
    }

    let mut kept: Vec<(f64, Vec<usize>)> = tracks
        .into_iter()
        .filter(|t| t.points.len() >= options.min_length.max(1))
        .map(|t| {
            let mean = t.points.iter().map(|&k| peaks[k].frequency).sum::<f64>() / t.points.len() as f64;
            (mean, t.points)
        })
        .collect();
    kept.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut labelled: Vec<(usize, usize)> = kept
        .iter()
        .enumerate()
        .flat_map(|(label, (_, points))| points.iter().map(move |&k| (k, label)))
        .collect();
    labelled.sort_by_key(|&(k, label)| (peaks[k].bias_index, label));
    let observations = labelled
        .into_iter()
        .map(|(k, label)| PeakObservation::new(peaks[k].coil_currents.clone(), label, peaks[k].frequency))
        .collect();
    Ok(TrackingOutcome { observations, ambiguous, n_tracks: kept.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::linspace;
    use crate::spectrum::lorentzian;

    fn map_with_lines(lines: &dyn Fn(usize) -> Vec<f64>, n_bias: usize) -> SpectroscopyMap {
        let probes = linspace(5.0, 7.0, 401);
        let currents = linspace(-1.0, 1.0, n_bias);
        let amplitudes = (0..n_bias)
            .flat_map(|b| {
                let centers = lines(b);
                probes
                    .iter()
                    .map(|&f| centers.iter().map(|&c| lorentzian(f, c, 0.01)).sum::<f64>())
                    .collect::<Vec<_>>()
            })
            .collect();
        SpectroscopyMap::new(0, 1, currents, probes, amplitudes).unwrap()
    }

    #[test]
    fn single_lorentzian_per_row() {
        let map = map_with_lines(&|b| vec![5.8 + 0.0013 * b as f64], 20);
        let peaks = extract_peaks(&map, 0.3, 0.02).unwrap();
        assert_eq!(peaks.len(), 20);
        for p in &peaks {
            let want = 5.8 + 0.0013 * p.bias_index as f64;
            assert!((p.frequency - want).abs() < 0.1 * map.probe_step(), "{} vs {want}", p.frequency);
        }
    }

    #[test]
    fn noise_only_row_has_no_peaks() {
        let probes = linspace(5.0, 7.0, 401);
        let amplitudes: Vec<f64> = (0..401).map(|k| 0.01 * ((k * 7919 % 13) as f64 / 13.0 - 0.5)).collect();
        let map = SpectroscopyMap::new(0, 1, vec![0.0], probes, amplitudes).unwrap();
        assert!(extract_peaks(&map, 0.3, 0.02).unwrap().is_empty());
    }

    #[test]
    fn zero_map_has_no_peaks() {
        let map = SpectroscopyMap::new(0, 1, vec![0.0, 1.0], vec![5.0, 5.1, 5.2], vec![0.0; 6]).unwrap();
        assert!(extract_peaks(&map, 0.3, 0.02).unwrap().is_empty());
        let empty = SpectroscopyMap::new(0, 1, vec![], vec![], vec![]).unwrap();
        assert!(matches!(extract_peaks(&empty, 0.3, 0.02), Err(Error::EmptyMap)));
    }

    #[test]
    fn single_ridge_single_track() {
        let map = map_with_lines(&|b| vec![6.0 + 0.002 * b as f64], 30);
        let peaks = extract_peaks(&map, 0.3, 0.02).unwrap();
        let outcome = assign_tracks(&peaks, &TrackingOptions::for_map(&map)).unwrap();
        assert_eq!(outcome.n_tracks, 1);
        assert_eq!(outcome.ambiguous, 0);
        assert!(outcome.observations.iter().all(|o| o.qubit_index == 0));
    }

    #[test]
    fn labels_descend_with_frequency() {
        let map = map_with_lines(&|b| vec![5.5, 6.0 + 0.001 * b as f64, 6.6], 30);
        let peaks = extract_peaks(&map, 0.3, 0.02).unwrap();
        let outcome = assign_tracks(&peaks, &TrackingOptions::for_map(&map)).unwrap();
        assert_eq!(outcome.n_tracks, 3);
        for o in &outcome.observations {
            let expected = if o.frequency > 6.5 { 0 } else if o.frequency > 5.9 { 1 } else { 2 };
            assert_eq!(o.qubit_index, expected);
        }
        assert_eq!(outcome.strict().unwrap().len(), 90);
    }

    #[test]
    fn unsorted_input_rejected() {
        let map = map_with_lines(&|_| vec![6.0], 3);
        let mut peaks = extract_peaks(&map, 0.3, 0.02).unwrap();
        peaks.reverse();
        assert!(assign_tracks(&peaks, &TrackingOptions::for_map(&map)).is_err());
    }
}
