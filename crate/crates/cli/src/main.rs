use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use cavflux::calibration::{assign_tracks_to_qubits, fit_arcs, reject_outliers, CalibrationResult, FitOptions, PeakObservation};
use cavflux::io::{self, CalibrationDocument, CurrentsBody, CurrentsDocument, ModelBody, ResonatorBody, Versioned};
use cavflux::map::{linspace, ProbeRange, Sweep};
use cavflux::peaks::{
    assign_tracks, extract_peaks, TrackingOptions, DEFAULT_MAX_JUMP_STEPS, DEFAULT_MIN_SEPARATION_GHZ,
    DEFAULT_THRESHOLD,
};
use cavflux::resonator::fit_reflection;
use cavflux::spectrum::{simulate_map, SystemModel};
use cavflux::synth::{gen_peak_observations, gen_reflection_trace, gen_spectroscopy_map, NoiseSpec};
use cavflux::transmon::{currents_for_targets, qubit_frequencies, BiasPoint};
use cavflux::Error;

mod args;

const REJECT_FLOOR_GHZ: f64 = 1e-3;

#[derive(Parser)]
#[command(name = "cavflux", version, about = "Flux-tunable transmons in a 3D cavity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Noiseless two-tone spectroscopy map of one coil sweep.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// coil=J,start,stop,n (mA)
        #[arg(long, value_parser = args::sweep)]
        sweep: Sweep,
        /// start,stop,n (GHz)
        #[arg(long, value_parser = args::probe)]
        probe: ProbeRange,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded synthetic data. Writes a reflection trace with --trace, a map
    /// with --probe and one --sweep, otherwise peak observations for every
    /// --sweep.
    Gen {
        #[arg(long)]
        model: Option<PathBuf>,
        /// seed,sigma_f (GHz),sigma_a
        #[arg(long, value_parser = args::noise, default_value = "0,0,0")]
        noise: NoiseSpec,
        #[arg(long, value_parser = args::sweep)]
        sweep: Vec<Sweep>,
        #[arg(long, value_parser = args::probe)]
        probe: Option<ProbeRange>,
        /// f0,q_int,q_ext,span,points
        #[arg(long, value_parser = args::trace, conflicts_with_all = ["sweep", "probe"])]
        trace: Option<args::TraceSpec>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ridge peaks of a map, tracked across bias and labelled.
    Extract {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long = "min-sep", default_value_t = DEFAULT_MIN_SEPARATION_GHZ)]
        min_sep: f64,
        /// Largest step between neighbouring bias rows, in probe-grid steps.
        #[arg(long = "max-jump", default_value_t = DEFAULT_MAX_JUMP_STEPS)]
        max_jump: f64,
        /// Relabel tracks with the nearest qubit of this calibration.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Fail instead of truncating tracks that contest a peak.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the crosstalk map and transmon energies to peak observations.
    FitArcs {
        #[arg(long, required = true)]
        peaks: Vec<PathBuf>,
        #[arg(long)]
        init: PathBuf,
        #[arg(long = "max-iter", default_value_t = 200)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long = "freeze-ej")]
        freeze_ej: bool,
        #[arg(long = "allow-underdetermined")]
        allow_underdetermined: bool,
        /// Refit after dropping points this many robust sigmas from the fit; 0 disables.
        #[arg(long, default_value_t = 5.0)]
        reject: f64,
        /// Refit rounds used by --reject.
        #[arg(long = "reject-rounds", default_value_t = 3)]
        reject_rounds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Coil currents that put every qubit at its target frequency.
    Plan {
        #[arg(long)]
        calib: PathBuf,
        /// Comma-separated target frequencies (GHz), one per qubit.
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print predicted qubit frequencies at a set of currents.
    Verify {
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        currents: PathBuf,
    },
    /// Fit f0, internal and external Q to a reflection trace.
    FitResonator {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::TargetUnreachable { .. } => 3,
        Error::SingularMatrix { .. } => 4,
        Error::InsufficientData(_) => 5,
        Error::NoConvergence { .. } => 6,
        Error::NoResonanceFound => 7,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Format(_) => 8,
        _ => 1,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>, Error> {
    Ok(BufReader::new(File::open(path)?))
}

fn load_model(path: &Path) -> Result<SystemModel, Error> {
    Ok(io::read_json_file::<ModelBody>(path)?.body.model)
}

fn load_calibration(path: &Path) -> Result<CalibrationResult, Error> {
    Ok(io::read_json_file::<CalibrationResult>(path)?.body)
}

#[derive(Serialize)]
struct VerifyReport {
    frequencies: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_abs_error: Option<f64>,
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Simulate { model, sweep, probe, out } => {
            let map = simulate_map(&load_model(&model)?, &sweep, &probe)?;
            io::write_map_csv(&map, create(&out)?)
        }
        Command::Gen { model, noise, sweep, probe, trace, out } => {
            if let Some(t) = trace {
                let trace = gen_reflection_trace(t.f0, t.q_int, t.q_ext, t.span, t.points, &noise)?;
                return io::write_trace_csv(&trace, create(&out)?);
            }
            let model = model.ok_or_else(|| Error::InvalidParameter("--model is required for maps and peaks".into()))?;
            let model = load_model(&model)?;
            if sweep.is_empty() {
                return Err(Error::InvalidParameter("at least one --sweep is required".into()));
            }
            match probe {
                Some(probe) => {
                    let [sweep] = sweep.as_slice() else {
                        return Err(Error::InvalidParameter("a map takes exactly one --sweep".into()));
                    };
                    let map = gen_spectroscopy_map(&model, sweep, &probe, &noise)?;
                    io::write_map_csv(&map, create(&out)?)
                }
                None => {
                    let mut biases = Vec::new();
                    for s in &sweep {
                        s.validate()?;
                        if s.coil >= model.n_coils() {
                            return Err(Error::DimensionMismatch(format!("coil {} out of range", s.coil)));
                        }
                        biases.extend(
                            linspace(s.start, s.stop, s.points)
                                .into_iter()
                                .map(|c| BiasPoint::single_coil(model.n_coils(), s.coil, c)),
                        );
                    }
                    let peaks = gen_peak_observations(&model, &biases, &noise)?;
                    io::write_peaks_csv(&peaks, create(&out)?)
                }
            }
        }
        Command::Extract { map, threshold, min_sep, max_jump, init, strict, out } => {
            let map = io::read_map_csv(open(&map)?)?;
            let peaks = extract_peaks(&map, threshold, min_sep)?;
            let options = TrackingOptions { max_jump: max_jump * map.probe_step(), ..TrackingOptions::for_map(&map) };
            let outcome = assign_tracks(&peaks, &options)?;
            if outcome.ambiguous > 0 && !strict {
                eprintln!("{} contested peaks dropped, {} tracks kept", outcome.ambiguous, outcome.n_tracks);
            }
            let mut observations = if strict { outcome.strict()? } else { outcome.observations };
            if let Some(init) = init {
                observations = assign_tracks_to_qubits(&observations, &load_calibration(&init)?)?;
            }
            io::write_peaks_csv(&observations, create(&out)?)
        }
        Command::FitArcs { peaks, init, max_iter, tol, freeze_ej, allow_underdetermined, reject, reject_rounds, out } => {
            let mut observations: Vec<PeakObservation> = Vec::new();
            for path in &peaks {
                observations.extend(io::read_peaks_csv(open(path)?)?);
            }
            let mut options = FitOptions { freeze_e_j_max: freeze_ej, allow_underdetermined, ..FitOptions::default() };
            options.lm.max_iterations = max_iter;
            options.lm.relative_tolerance = tol;
            let mut result = fit_arcs(&observations, &load_calibration(&init)?, &options)?;
            if reject > 0.0 {
                for _ in 0..reject_rounds {
                    let kept = reject_outliers(&observations, &result, reject, REJECT_FLOOR_GHZ)?;
                    if kept.len() == observations.len() {
                        break;
                    }
                    eprintln!("refitting without {} outliers", observations.len() - kept.len());
                    observations = kept;
                    let warm = FitOptions { continuation_stages: 0, allow_underdetermined: true, ..options };
                    result = fit_arcs(&observations, &result, &warm)?;
                }
            }
            io::write_json_file(&out, &CalibrationDocument::new(result))
        }
        Command::Plan { calib, targets, out } => {
            let cal = load_calibration(&calib)?;
            let currents = currents_for_targets(&cal.flux_map, &cal.params, &targets)?;
            io::write_json_file(&out, &CurrentsDocument::new(CurrentsBody { currents, targets }))
        }
        Command::Verify { calib, currents } => {
            let cal = load_calibration(&calib)?;
            let doc = io::read_json_file::<CurrentsBody>(&currents)?.body;
            let frequencies = qubit_frequencies(&cal.flux_map, &cal.params, &doc.currents)?;
            let max_abs_error = (doc.targets.len() == frequencies.len()).then(|| {
                frequencies.iter().zip(&doc.targets).map(|(f, t)| (f - t).abs()).fold(0.0, f64::max)
            });
            let report = Versioned::new(VerifyReport { frequencies, max_abs_error });
            print!("{}", io::to_json(&report)?);
            Ok(())
        }
        Command::FitResonator { trace, out } => {
            let fit = fit_reflection(&io::read_trace_csv(open(&trace)?)?)?;
            io::write_json_file(&out, &Versioned::new(ResonatorBody::from(&fit)))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let report = serde_json::json!({ "error": err.kind(), "message": err.to_string() });
            eprintln!("{report}");
            ExitCode::from(exit_code(&err))
        }
    }
}
