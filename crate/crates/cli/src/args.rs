//! Parsers for the compound command-line values.

use cavflux::map::{ProbeRange, Sweep};
use cavflux::synth::NoiseSpec;

fn numbers(text: &str, expected: usize, what: &str) -> Result<Vec<f64>, String> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad number {s:?} in {what}")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != expected {
        return Err(format!("{what} needs {expected} comma-separated values, got {}", values.len()));
    }
    Ok(values)
}

fn count(x: f64, what: &str) -> Result<usize, String> {
    if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
        Ok(x as usize)
    } else {
        Err(format!("{what} must be a non-negative integer, got {x}"))
    }
}

/// `coil=J,start,stop,n`
pub fn sweep(text: &str) -> Result<Sweep, String> {
    let rest = text.strip_prefix("coil=").ok_or("sweep must look like coil=J,start,stop,n")?;
    let v = numbers(rest, 4, "sweep")?;
    Ok(Sweep { coil: count(v[0], "coil")?, start: v[1], stop: v[2], points: count(v[3], "sweep points")? })
}

/// `start,stop,n`
pub fn probe(text: &str) -> Result<ProbeRange, String> {
    let v = numbers(text, 3, "probe")?;
    Ok(ProbeRange { start: v[0], stop: v[1], points: count(v[2], "probe points")? })
}

/// `seed,sigma_f,sigma_a`
pub fn noise(text: &str) -> Result<NoiseSpec, String> {
    let mut parts = text.splitn(2, ',');
    let seed = parts
        .next()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .ok_or("noise seed must be an unsigned integer")?;
    let v = numbers(parts.next().unwrap_or(""), 2, "noise sigmas")?;
    NoiseSpec::new(seed, v[0], v[1]).map_err(|e| e.to_string())
}

/// Parameters of a generated reflection trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSpec {
    pub f0: f64,
    pub q_int: f64,
    pub q_ext: f64,
    pub span: f64,
    pub points: usize,
}

/// `f0,q_int,q_ext,span,points`
pub fn trace(text: &str) -> Result<TraceSpec, String> {
    let v = numbers(text, 5, "trace")?;
    Ok(TraceSpec { f0: v[0], q_int: v[1], q_ext: v[2], span: v[3], points: count(v[4], "trace points")? })
}
