//! CSV and JSON file formats.
//!
//! CSV files use `.` decimals, LF line endings and the shortest decimal form
//! that reads back to the identical `f64`. JSON roots always carry a
//! `version` field.
//!
//! | file         | header / root                                          |
//! |--------------|--------------------------------------------------------|
//! | map CSV      | `coil,current_0..current_{n-1},probe_ghz,amplitude`    |
//! | peaks CSV    | `qubit,current_0..current_{n-1},frequency_ghz,weight`  |
//! | trace CSV    | `frequency_ghz,s11_real,s11_imag`                      |
//! | model JSON   | `{version, model}`                                     |
//! | calibration  | `{version, flux_map, params, residual_rms, covariance_diagonal}` |
//! | currents     | `{version, currents, targets}`                         |
//! | resonator    | `{version, f0, q_int, q_ext, q_loaded, residual_rms, background}` |

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationResult, PeakObservation};
use crate::error::{Error, Result};
use crate::map::SpectroscopyMap;
use crate::resonator::{Background, ReflectionTrace, ResonatorFitResult};
use crate::spectrum::SystemModel;
use crate::transmon::BiasPoint;

/// Current schema version of every JSON document.
pub const FORMAT_VERSION: u32 = 1;

/// Shortest round-trip decimal form of a finite `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad {what} value {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::Format(format!("non-finite {what} value {field:?}")));
    }
    Ok(v)
}

fn current_headers(n: usize) -> impl Iterator<Item = String> {
    (0..n).map(|k| format!("current_{k}"))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(r)
}

fn count_currents(headers: &csv::StringRecord, first: &str, tail: [&str; 2]) -> Result<usize> {
    let n = headers.len().checked_sub(3).ok_or_else(|| Error::Format("too few CSV columns".into()))?;
    let expected: Vec<String> = std::iter::once(first.to_string())
        .chain(current_headers(n))
        .chain(tail.iter().map(|s| s.to_string()))
        .collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Format(format!(
            "unexpected CSV header {:?}, expected {:?}",
            headers.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    Ok(n)
}

pub fn write_map_csv<W: Write>(map: &SpectroscopyMap, out: W) -> Result<()> {
    let mut w = writer(out);
    let header: Vec<String> = std::iter::once("coil".to_string())
        .chain(current_headers(map.n_coils))
        .chain(["probe_ghz".to_string(), "amplitude".to_string()])
        .collect();
    w.write_record(&header)?;
    for b in 0..map.n_bias() {
        let bias = map.bias(b);
        for (p, &f) in map.probes.iter().enumerate() {
            let record: Vec<String> = std::iter::once(map.coil.to_string())
                .chain(bias.currents().iter().map(|&c| format_f64(c)))
                .chain([format_f64(f), format_f64(map.row(b)[p])])
                .collect();
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a map written by [`write_map_csv`]; rows must be bias-major with a
/// repeating probe grid.
pub fn read_map_csv<R: Read>(input: R) -> Result<SpectroscopyMap> {
    let mut r = reader(input);
    let n_coils = count_currents(r.headers()?, "coil", ["probe_ghz", "amplitude"])?;
    let mut coil: Option<usize> = None;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for record in r.records() {
        let record = record?;
        let c: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad coil index {:?}", &record[0])))?;
        if *coil.get_or_insert(c) != c {
            return Err(Error::Format("map mixes several swept coils".into()));
        }
        let bias: Vec<f64> = (0..n_coils)
            .map(|k| parse_f64(&record[1 + k], "current"))
            .collect::<Result<_>>()?;
        if c >= n_coils {
            return Err(Error::Format(format!("swept coil {c} out of range")));
        }
        if bias.iter().enumerate().any(|(k, &v)| k != c && v != 0.0) {
            return Err(Error::Format("unswept coils must carry zero current".into()));
        }
        let probe = parse_f64(&record[n_coils + 1], "probe")?;
        let amplitude = parse_f64(&record[n_coils + 2], "amplitude")?;
        rows.push((bias[c], probe, amplitude));
    }
    let coil = coil.ok_or(Error::EmptyMap)?;

    // The probe grid ends where its first value comes round again.
    let n_probe = rows.iter().skip(1).position(|r| r.1 == rows[0].1).map_or(rows.len(), |k| k + 1);
    if !rows.len().is_multiple_of(n_probe) {
        return Err(Error::Format("ragged probe grid".into()));
    }
    let probes: Vec<f64> = rows[..n_probe].iter().map(|r| r.1).collect();
    let mut currents = Vec::with_capacity(rows.len() / n_probe);
    for block in rows.chunks(n_probe) {
        if block.iter().zip(&probes).any(|(r, &p)| r.1 != p) {
            return Err(Error::Format("probe grid differs between bias rows".into()));
        }
        if block.iter().any(|r| r.0 != block[0].0) {
            return Err(Error::Format("current changes within a bias row".into()));
        }
        currents.push(block[0].0);
    }
    let amplitudes = rows.iter().map(|r| r.2).collect();
    SpectroscopyMap::new(coil, n_coils, currents, probes, amplitudes)
}

pub fn write_peaks_csv<W: Write>(peaks: &[PeakObservation], out: W) -> Result<()> {
    let n_coils = peaks.first().map_or(0, |p| p.coil_currents.len());
    if peaks.iter().any(|p| p.coil_currents.len() != n_coils) {
        return Err(Error::DimensionMismatch("peaks disagree on coil count".into()));
    }
    let mut w = writer(out);
    let header: Vec<String> = std::iter::once("qubit".to_string())
        .chain(current_headers(n_coils))
        .chain(["frequency_ghz".to_string(), "weight".to_string()])
        .collect();
    w.write_record(&header)?;
    for p in peaks {
        let record: Vec<String> = std::iter::once(p.qubit_index.to_string())
            .chain(p.coil_currents.currents().iter().map(|&c| format_f64(c)))
            .chain([format_f64(p.frequency), format_f64(p.weight)])
            .collect();
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_peaks_csv<R: Read>(input: R) -> Result<Vec<PeakObservation>> {
    let mut r = reader(input);
    let n_coils = count_currents(r.headers()?, "qubit", ["frequency_ghz", "weight"])?;
    r.records()
        .map(|record| {
            let record = record?;
            let qubit_index = record[0]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad qubit index {:?}", &record[0])))?;
            let currents = (0..n_coils)
                .map(|k| parse_f64(&record[1 + k], "current"))
                .collect::<Result<Vec<_>>>()?;
            Ok(PeakObservation {
                coil_currents: BiasPoint::new(currents)?,
                qubit_index,
                frequency: parse_f64(&record[n_coils + 1], "frequency")?,
                weight: parse_f64(&record[n_coils + 2], "weight")?,
            })
        })
        .collect()
}

pub fn write_trace_csv<W: Write>(trace: &ReflectionTrace, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["frequency_ghz", "s11_real", "s11_imag"])?;
    for (&f, s) in trace.frequencies().iter().zip(trace.s11()) {
        w.write_record([format_f64(f), format_f64(s.re), format_f64(s.im)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<ReflectionTrace> {
    let mut r = reader(input);
    let headers = r.headers()?;
    if headers.iter().ne(["frequency_ghz", "s11_real", "s11_imag"]) {
        return Err(Error::Format(format!("unexpected trace header {headers:?}")));
    }
    let mut freqs = Vec::new();
    let mut s11 = Vec::new();
    for record in r.records() {
        let record = record?;
        freqs.push(parse_f64(&record[0], "frequency")?);
        s11.push(Complex64::new(parse_f64(&record[1], "s11_real")?, parse_f64(&record[2], "s11_imag")?));
    }
    ReflectionTrace::new(freqs, s11)
}

/// Any JSON body wrapped with a `version` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Self { version: FORMAT_VERSION, body }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBody {
    pub model: SystemModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentsBody {
    pub currents: BiasPoint,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorBody {
    pub f0: f64,
    pub q_int: f64,
    pub q_ext: f64,
    pub q_loaded: f64,
    pub residual_rms: f64,
    pub background: Background,
}

impl From<&ResonatorFitResult> for ResonatorBody {
    fn from(fit: &ResonatorFitResult) -> Self {
        Self {
            f0: fit.f0,
            q_int: fit.q_int,
            q_ext: fit.q_ext,
            q_loaded: fit.loaded_q(),
            residual_rms: fit.residual_rms,
            background: fit.background,
        }
    }
}

pub type ModelDocument = Versioned<ModelBody>;
pub type CalibrationDocument = Versioned<CalibrationResult>;
pub type CurrentsDocument = Versioned<CurrentsBody>;
pub type ResonatorDocument = Versioned<ResonatorBody>;

/// Parses a versioned JSON document, rejecting unknown versions.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<Versioned<T>> {
    #[derive(Deserialize)]
    struct Probe {
        version: Option<u32>,
    }
    match serde_json::from_str::<Probe>(text)?.version {
        Some(FORMAT_VERSION) => Ok(serde_json::from_str(text)?),
        Some(v) => Err(Error::Format(format!("unsupported document version {v}"))),
        None => Err(Error::Format("document has no version field".into())),
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize>(doc: &Versioned<T>) -> Result<String> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    Ok(text)
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<Versioned<T>> {
    from_json(&std::fs::read_to_string(path)?)
}

pub fn write_json_file<T: Serialize>(path: &Path, doc: &Versioned<T>) -> Result<()> {
    std::fs::write(path, to_json(doc)?)?;
    Ok(())
}
