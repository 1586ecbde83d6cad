//! Scan orchestration: steady-state capture, decoupling, per-axis
//! perturbation runs, spectrum extraction, and assembly of the identified
//! admittance/impedance matrices for every frame/strategy combination.

mod assemble;
mod grid;

pub use assemble::{
    assemble_0pn, assemble_abc_current, assemble_abc_voltage, assemble_dq0, BinReading,
    InjectionRun, SpectrumSet,
};
pub use grid::{snap_grid, FrequencyGridSpec, SnappedGrid};

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emt::{
    self, assemble as assemble_sim, capture_steady_state, decouple_and_rebuild,
    has_zero_sequence_path, relative_rms_delta, set_injection, synthesize_injection, Axis, Circuit,
    EmtError, InjectionSignal, InjectionSpec, ProbeSpec, RebuildInfo, ScanFrame, Side, StageTiming,
};
use crate::frames::{
    delta_spectrum, fortescue_forward_real, park_forward, ComplexWaveform, FrameError,
    ReferenceAngle, Spectrum, ThreePhase,
};
use crate::linalg::CMatrix;
use crate::signal::{schroeder_phases, MultiToneSpec, PrbsSpec, SignalError, ToneSpec, Waveform};

pub type Frame = ScanFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    SeriesVoltage,
    ParallelCurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Admittance,
    Impedance,
}

impl ResponseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ResponseKind::Admittance => "admittance",
            ResponseKind::Impedance => "impedance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalFamily {
    SingleTone,
    MultiTone,
    Prbs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrbsScanConfig {
    pub register_length: u32,
    pub chip_interval: f64,
}

fn default_convergence_tol() -> f64 {
    1e-6
}

fn default_equilibrium_tol() -> f64 {
    5e-3
}

fn default_amplitude_pct() -> f64 {
    2.0
}

fn default_seed() -> u32 {
    1
}

/// Full description of one identification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanConfig {
    pub frame: Frame,
    pub strategy: Strategy,
    pub side: Side,
    pub dt: f64,
    pub settle_time: f64,
    /// Measurement window length in seconds; spectral resolution is its
    /// reciprocal.
    pub window_s: f64,
    pub signal: SignalFamily,
    #[serde(default = "default_amplitude_pct")]
    pub amplitude_pct: f64,
    pub frequencies: FrequencyGridSpec,
    /// Injection axes; defaults per frame (abc: a/b/c, 0pn: p/n, dq0: d/q,
    /// sequence frames add the zero axis when the netlist offers a
    /// zero-sequence path).
    #[serde(default)]
    pub axes: Option<Vec<Axis>>,
    #[serde(default)]
    pub prbs: Option<PrbsScanConfig>,
    #[serde(default = "default_seed")]
    pub seed: u32,
    #[serde(default = "default_convergence_tol")]
    pub convergence_tol: f64,
    #[serde(default = "default_equilibrium_tol")]
    pub equilibrium_tol: f64,
    #[serde(default)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error(transparent)]
    Emt(#[from] EmtError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("at {f_hz} Hz: {source}")]
    AtFrequency { f_hz: f64, source: Box<ScanError> },
    #[error("excitation below floor at {f_hz} Hz, axis {axis}: |dV| = {magnitude:.3e} < {floor:.3e}")]
    ExcitationFloor {
        f_hz: f64,
        axis: String,
        magnitude: f64,
        floor: f64,
    },
    #[error("injection matrix ill-conditioned at {f_hz} Hz (cond {cond:.3e})")]
    IllConditioned { f_hz: f64, cond: f64 },
    #[error("mirror bin for {f_hz} Hz lies at {mirror_hz} Hz, outside the measurable band (limit {limit_hz} Hz)")]
    MirrorOutOfBand {
        f_hz: f64,
        mirror_hz: f64,
        limit_hz: f64,
    },
    #[error("excitation at {f_hz} Hz collides with the mirror of {other_hz} Hz; sequence-frame broadband scans cannot separate them")]
    MirrorCollision { f_hz: f64, other_hz: f64 },
    #[error("missing injection run for axis {0}")]
    MissingAxis(String),
    #[error("missing bin {0} in measured spectra")]
    MissingBin(i64),
}

/// Identified small-signal response: one complex matrix per frequency, plus
/// an optional zero-sequence scalar channel for sequence-frame scans.
#[derive(Debug, Clone)]
pub struct FrequencyResponse {
    pub frame: Frame,
    pub kind: ResponseKind,
    pub freqs: Vec<f64>,
    pub labels: Vec<String>,
    pub matrices: Vec<CMatrix>,
    pub zero_seq: Option<Vec<Complex64>>,
}

impl FrequencyResponse {
    pub fn validate(&self) -> Result<(), ScanError> {
        if self.freqs.len() != self.matrices.len() {
            return Err(ScanError::Config("grid/matrix length mismatch".into()));
        }
        if !self.freqs.windows(2).all(|w| w[0] < w[1]) {
            return Err(ScanError::Config(
                "frequency grid must be strictly increasing".into(),
            ));
        }
        for (f, m) in self.freqs.iter().zip(&self.matrices) {
            if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(ScanError::Config(format!(
                    "non-finite matrix entry at {f} Hz"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScanDiagnostics {
    pub snapped_grid: Vec<f64>,
    pub dropped_frequencies: Vec<(f64, String)>,
    pub warnings: Vec<String>,
    pub equilibrium_delta: f64,
    pub convergence_delta: f64,
    pub theta0: f64,
    pub nominal: f64,
    pub elapsed_s: f64,
}

#[derive(Debug)]
pub struct ScanOutcome {
    pub response: FrequencyResponse,
    pub diagnostics: ScanDiagnostics,
}

/// Frame channel labels in storage order.
#[cfg(test)]
fn frame_channels(frame: Frame) -> [&'static str; 3] {
    match frame {
        Frame::Abc => ["a", "b", "c"],
        Frame::Seq0pn => ["0", "p", "n"],
        Frame::Dq0 => ["d", "q", "0"],
    }
}

fn axis_channel(frame: Frame, axis: Axis) -> usize {
    match (frame, axis) {
        (Frame::Abc, Axis::A) => 0,
        (Frame::Abc, Axis::B) => 1,
        (Frame::Abc, Axis::C) => 2,
        (Frame::Seq0pn, Axis::Zero) => 0,
        (Frame::Seq0pn, Axis::P) => 1,
        (Frame::Seq0pn, Axis::N) => 2,
        (Frame::Dq0, Axis::D) => 0,
        (Frame::Dq0, Axis::Q) => 1,
        (Frame::Dq0, Axis::Zero) => 2,
        _ => usize::MAX,
    }
}

fn default_axes(frame: Frame, zero_path: bool) -> Vec<Axis> {
    match frame {
        Frame::Abc => vec![Axis::A, Axis::B, Axis::C],
        Frame::Seq0pn => {
            let mut v = vec![Axis::P, Axis::N];
            if zero_path {
                v.push(Axis::Zero);
            }
            v
        }
        Frame::Dq0 => {
            let mut v = vec![Axis::D, Axis::Q];
            if zero_path {
                v.push(Axis::Zero);
            }
            v
        }
    }
}

/// Transform full-record abc probe channels into the scan frame. Sample k
/// sits at absolute time k*dt, which fixes the rotating-frame angle.
fn to_frame_channels(
    frame: Frame,
    v_abc: [&[f64]; 3],
    i_abc: [&[f64]; 3],
    theta: &ReferenceAngle,
    dt: f64,
) -> [ComplexWaveform; 6] {
    let n = v_abc[0].len();
    let mut out: Vec<Vec<Complex64>> = vec![Vec::with_capacity(n); 6];
    for k in 0..n {
        let v = ThreePhase {
            a: v_abc[0][k],
            b: v_abc[1][k],
            c: v_abc[2][k],
        };
        let i = ThreePhase {
            a: i_abc[0][k],
            b: i_abc[1][k],
            c: i_abc[2][k],
        };
        match frame {
            Frame::Abc => {
                out[0].push(Complex64::new(v.a, 0.0));
                out[1].push(Complex64::new(v.b, 0.0));
                out[2].push(Complex64::new(v.c, 0.0));
                out[3].push(Complex64::new(i.a, 0.0));
                out[4].push(Complex64::new(i.b, 0.0));
                out[5].push(Complex64::new(i.c, 0.0));
            }
            Frame::Seq0pn => {
                let sv = fortescue_forward_real(v);
                let si = fortescue_forward_real(i);
                out[0].push(sv.zero);
                out[1].push(sv.pos);
                out[2].push(sv.neg);
                out[3].push(si.zero);
                out[4].push(si.pos);
                out[5].push(si.neg);
            }
            Frame::Dq0 => {
                let th = theta.at(k as f64 * dt);
                let dv = park_forward(v, th);
                let di = park_forward(i, th);
                out[0].push(Complex64::new(dv.d, 0.0));
                out[1].push(Complex64::new(dv.q, 0.0));
                out[2].push(Complex64::new(dv.zero, 0.0));
                out[3].push(Complex64::new(di.d, 0.0));
                out[4].push(Complex64::new(di.q, 0.0));
                out[5].push(Complex64::new(di.zero, 0.0));
            }
        }
    }
    let mk = |samples: Vec<Complex64>| ComplexWaveform { dt, samples };
    let mut it = out.into_iter().map(mk);
    [
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ]
}

struct RunChannels {
    v: [Spectrum; 3],
    i: [Spectrum; 3],
}

/// Run one injection simulation and return delta spectra of the six frame
/// channels against the zero-injection baseline.
#[allow(clippy::too_many_arguments)]
fn injection_run(
    rebuilt: &Circuit,
    info: &RebuildInfo,
    timing: &StageTiming,
    frame: Frame,
    theta: &ReferenceAngle,
    baseline: &[ComplexWaveform; 6],
    spec: &InjectionSpec,
    overflow_limit: f64,
) -> Result<RunChannels, ScanError> {
    let mut circuit = rebuilt.clone();
    let drives = synthesize_injection(spec, theta, timing.n_steps(), timing.dt)?;
    set_injection(&mut circuit, info, drives);
    let mut sim = assemble_sim(&circuit, timing.dt)?;
    sim.set_overflow_limit(overflow_limit);
    sim.init_from_phasors()?;
    let probes = ProbeSpec {
        nodes: info.pos.to_vec(),
        branches: vec![],
        ties: info.tie_terms.clone(),
    };
    let rec = sim.run(timing.n_steps(), &probes)?;
    let chans = to_frame_channels(
        frame,
        [&rec.node_v[0], &rec.node_v[1], &rec.node_v[2]],
        [&rec.tie_i[0], &rec.tie_i[1], &rec.tie_i[2]],
        theta,
        timing.dt,
    );
    let w = timing.window_spec();
    let spectrum = |m: &ComplexWaveform, b: &ComplexWaveform| delta_spectrum(m, b, &w);
    Ok(RunChannels {
        v: [
            spectrum(&chans[0], &baseline[0])?,
            spectrum(&chans[1], &baseline[1])?,
            spectrum(&chans[2], &baseline[2])?,
        ],
        i: [
            spectrum(&chans[3], &baseline[3])?,
            spectrum(&chans[4], &baseline[4])?,
            spectrum(&chans[5], &baseline[5])?,
        ],
    })
}

fn extract_bins(ch: &RunChannels, bins: &[i64]) -> BTreeMap<i64, BinReading> {
    let mut out = BTreeMap::new();
    for &b in bins {
        out.insert(
            b,
            BinReading {
                v: [ch.v[0].at(b), ch.v[1].at(b), ch.v[2].at(b)],
                i: [ch.i[0].at(b), ch.i[1].at(b), ch.i[2].at(b)],
            },
        );
    }
    out
}

/// Bins the assembler will read for a direct excitation bin `k` (plus the
/// sequence-frame mirror bins around `k0`, the fundamental bin).
fn needed_bins(frame: Frame, k: i64, k0: i64) -> Vec<i64> {
    match frame {
        Frame::Seq0pn => vec![k, k - 2 * k0, k + 2 * k0],
        _ => vec![k],
    }
}

/// Full identification pipeline for one configuration.
pub fn scan(circuit: &Circuit, cfg: &ScanConfig) -> Result<ScanOutcome, ScanError> {
    let started = std::time::Instant::now();
    validate_config(cfg)?;
    let timing = StageTiming {
        dt: cfg.dt,
        settle: cfg.settle_time,
        window: cfg.window_s,
    };
    let f0 = circuit
        .fundamental_f0()
        .ok_or(EmtError::NoFundamentalSource)?;
    let snapped = snap_grid(
        &cfg.frequencies,
        timing.f_res(),
        1.0 / cfg.dt,
        cfg.frame,
        f0,
        cfg.signal,
    )?;

    let mut diagnostics = ScanDiagnostics {
        snapped_grid: snapped.freqs.clone(),
        warnings: snapped.notices.clone(),
        ..Default::default()
    };

    // stage 1: operating point
    let ss = capture_steady_state(circuit, cfg.side, &timing, cfg.convergence_tol)?;
    diagnostics.convergence_delta = ss.convergence_delta;
    diagnostics.theta0 = ss.theta0;
    let theta = ss.reference_angle();
    let series_voltage = cfg.strategy == Strategy::SeriesVoltage;
    let nominal = if series_voltage {
        ss.nominal_v
    } else {
        ss.nominal_i
    };
    diagnostics.nominal = nominal;
    if !(nominal > 0.0) {
        return Err(ScanError::Config(
            "scanned operating point carries no fundamental signal for this strategy".into(),
        ));
    }
    let amplitude = cfg.amplitude_pct / 100.0 * nominal;
    if cfg.amplitude_pct > 10.0 {
        diagnostics.warnings.push(format!(
            "perturbation amplitude {}% of nominal exceeds the small-signal guideline (10%)",
            cfg.amplitude_pct
        ));
    }

    // stage 2: rebuilt circuit + zero-injection baseline
    let (rebuilt, info) = decouple_and_rebuild(circuit, &ss, cfg.side, series_voltage)?;
    let overflow_limit = 1e9 * nominal.max(ss.nominal_v).max(1.0);
    let baseline = {
        let mut sim = assemble_sim(&rebuilt, timing.dt)?;
        sim.set_overflow_limit(overflow_limit);
        sim.init_from_phasors()?;
        let probes = ProbeSpec {
            nodes: info.pos.to_vec(),
            branches: vec![],
            ties: info.tie_terms.clone(),
        };
        let rec = sim.run(timing.n_steps(), &probes)?;
        let (start, end) = timing
            .window_spec()
            .sample_range(timing.dt, rec.node_v[0].len())?;
        let vw: Vec<Waveform> = rec
            .node_v
            .iter()
            .map(|ch| Waveform {
                dt: timing.dt,
                samples: ch[start..end].to_vec(),
            })
            .collect();
        let delta = relative_rms_delta(
            &[vw[0].clone(), vw[1].clone(), vw[2].clone()],
            &ss.v_window,
            ss.nominal_v,
        );
        if delta > cfg.equilibrium_tol {
            return Err(EmtError::EquilibriumDrift {
                delta,
                tol: cfg.equilibrium_tol,
            }
            .into());
        }
        diagnostics.equilibrium_delta = delta;
        to_frame_channels(
            cfg.frame,
            [&rec.node_v[0], &rec.node_v[1], &rec.node_v[2]],
            [&rec.tie_i[0], &rec.tie_i[1], &rec.tie_i[2]],
            &theta,
            timing.dt,
        )
    };

    // axes
    let map = emt::classify_sides(circuit)?;
    let zero_path = has_zero_sequence_path(circuit, &map, cfg.side);
    let mut axes = cfg
        .axes
        .clone()
        .unwrap_or_else(|| default_axes(cfg.frame, zero_path));
    for a in &axes {
        if !a.belongs_to(cfg.frame) {
            return Err(ScanError::Config(format!(
                "axis {} does not belong to the configured frame",
                a.label()
            )));
        }
    }
    if axes.contains(&Axis::Zero) && !zero_path && cfg.frame != Frame::Abc {
        diagnostics.warnings.push(
            "zero-sequence axis requested but the scanned side has no zero-sequence path; reported as structurally absent"
                .into(),
        );
        axes.retain(|a| *a != Axis::Zero);
    }
    if axes.is_empty() {
        return Err(ScanError::Config("no injection axes".into()));
    }

    let k0 = (f0 / timing.f_res()).round() as i64;
    let f_res = timing.f_res();

    // build the per-(axis, job) signal specs
    let make_signal = |f_hz: f64| -> Result<InjectionSignal, ScanError> {
        Ok(InjectionSignal::Tone(ToneSpec::new(amplitude, f_hz, 0.0)?))
    };
    let broadband_signal = || -> Result<InjectionSignal, ScanError> {
        match cfg.signal {
            SignalFamily::MultiTone => {
                let phases = schroeder_phases(snapped.freqs.len());
                let per_tone = amplitude / (snapped.freqs.len() as f64).sqrt();
                let comps = snapped
                    .freqs
                    .iter()
                    .zip(phases)
                    .map(|(&f, ph)| ToneSpec::new(per_tone, f, ph))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(InjectionSignal::MultiTone(MultiToneSpec::new(comps)?))
            }
            SignalFamily::Prbs => {
                let p = cfg.prbs.as_ref().ok_or_else(|| {
                    ScanError::Config("prbs scan requires a [prbs] section".into())
                })?;
                let spec = PrbsSpec::standard(p.register_length, p.chip_interval, amplitude)?;
                Ok(InjectionSignal::Prbs {
                    spec,
                    seed: cfg.seed,
                })
            }
            SignalFamily::SingleTone => unreachable!(),
        }
    };

    // job list: single-tone fans out per (frequency, axis); broadband runs
    // once per axis
    enum Job {
        PerFreq { fi: usize, axis: Axis },
        Broadband { axis: Axis },
    }
    let jobs: Vec<Job> = match cfg.signal {
        SignalFamily::SingleTone => (0..snapped.freqs.len())
            .flat_map(|fi| axes.iter().map(move |&axis| Job::PerFreq { fi, axis }))
            .collect(),
        _ => axes.iter().map(|&axis| Job::Broadband { axis }).collect(),
    };

    if matches!(cfg.signal, SignalFamily::Prbs) {
        if let Some(p) = &cfg.prbs {
            let period = ((1u64 << p.register_length) - 1) as f64 * p.chip_interval;
            if ((cfg.window_s / period) - (cfg.window_s / period).round()).abs() > 1e-6 {
                diagnostics.warnings.push(format!(
                    "window ({} s) is not a whole number of PRBS periods ({period} s); broadband bins will leak",
                    cfg.window_s
                ));
            }
        }
    }

    let run_job = |job: &Job| -> Result<(usize, Axis, BTreeMap<i64, BinReading>), ScanError> {
        match job {
            Job::PerFreq { fi, axis } => {
                let f_hz = snapped.freqs[*fi];
                let spec = InjectionSpec {
                    frame: cfg.frame,
                    axis: *axis,
                    signal: make_signal(f_hz)?,
                };
                let ch = injection_run(
                    &rebuilt,
                    &info,
                    &timing,
                    cfg.frame,
                    &theta,
                    &baseline,
                    &spec,
                    overflow_limit,
                )
                .map_err(|e| ScanError::AtFrequency {
                    f_hz,
                    source: Box::new(e),
                })?;
                let k = (f_hz / f_res).round() as i64;
                Ok((*fi, *axis, extract_bins(&ch, &needed_bins(cfg.frame, k, k0))))
            }
            Job::Broadband { axis } => {
                let spec = InjectionSpec {
                    frame: cfg.frame,
                    axis: *axis,
                    signal: broadband_signal()?,
                };
                let ch = injection_run(
                    &rebuilt, &info, &timing, cfg.frame, &theta, &baseline, &spec,
                    overflow_limit,
                )?;
                let mut bins = Vec::new();
                for &f_hz in &snapped.freqs {
                    let k = (f_hz / f_res).round() as i64;
                    bins.extend(needed_bins(cfg.frame, k, k0));
                }
                bins.sort_unstable();
                bins.dedup();
                Ok((usize::MAX, *axis, extract_bins(&ch, &bins)))
            }
        }
    };

    let results: Result<Vec<_>, ScanError> = if let Some(jobs_n) = cfg.jobs {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs_n.max(1))
            .build()
            .map_err(|e| ScanError::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run_job).collect())
    } else {
        jobs.par_iter().map(run_job).collect()
    };
    let results = results?;

    // group runs per frequency index (usize::MAX = shared broadband run)
    let mut per_freq: BTreeMap<usize, Vec<InjectionRun>> = BTreeMap::new();
    for (fi, axis, bins) in results {
        per_freq
            .entry(fi)
            .or_default()
            .push(InjectionRun { axis, bins });
    }

    let kind = if series_voltage {
        ResponseKind::Admittance
    } else {
        ResponseKind::Impedance
    };
    let dim_labels: Vec<String> = match cfg.frame {
        Frame::Abc => vec!["a".into(), "b".into(), "c".into()],
        Frame::Seq0pn => vec!["p".into(), "n".into()],
        Frame::Dq0 => axes.iter().map(|a| a.label().to_string()).collect(),
    };
    let with_zero = axes.contains(&Axis::Zero) && cfg.frame == Frame::Seq0pn;

    let mut freqs_out = Vec::new();
    let mut mats = Vec::new();
    let mut zero_out: Vec<Complex64> = Vec::new();
    let floor = 1e-6 * amplitude;
    for (fi, &f_hz) in snapped.freqs.iter().enumerate() {
        let runs = match cfg.signal {
            SignalFamily::SingleTone => per_freq.get(&fi),
            _ => per_freq.get(&usize::MAX),
        }
        .ok_or_else(|| ScanError::Config("missing injection results".into()))?;
        let set = SpectrumSet {
            frame: cfg.frame,
            f_res,
            injected_amplitude: amplitude,
            runs: runs.clone(),
        };
        let k = (f_hz / f_res).round() as i64;
        let assembled: Result<(CMatrix, Option<Complex64>), ScanError> = match cfg.frame {
            Frame::Abc => {
                let m = if series_voltage {
                    assemble_abc_voltage(&set, k, floor)
                } else {
                    assemble_abc_current(&set, k)
                };
                m.map(|m| (m, None))
            }
            Frame::Dq0 => {
                assemble_dq0(&set, k, series_voltage, floor, &axes).map(|m| (m, None))
            }
            Frame::Seq0pn => assemble_0pn(&set, k, k0, series_voltage, floor, with_zero),
        };
        match assembled {
            Ok((m, z)) => {
                freqs_out.push(f_hz);
                mats.push(m);
                if let Some(z) = z {
                    zero_out.push(z);
                }
            }
            Err(ScanError::IllConditioned { cond, .. }) => {
                diagnostics.dropped_frequencies.push((
                    f_hz,
                    format!("injection matrix ill-conditioned (cond {cond:.3e})"),
                ));
            }
            Err(e) => {
                return Err(ScanError::AtFrequency {
                    f_hz,
                    source: Box::new(e),
                })
            }
        }
    }

    let response = FrequencyResponse {
        frame: cfg.frame,
        kind,
        freqs: freqs_out,
        labels: dim_labels,
        matrices: mats,
        zero_seq: if with_zero && !zero_out.is_empty() {
            Some(zero_out)
        } else {
            None
        },
    };
    response.validate()?;
    diagnostics.elapsed_s = started.elapsed().as_secs_f64();
    Ok(ScanOutcome {
        response,
        diagnostics,
    })
}

fn validate_config(cfg: &ScanConfig) -> Result<(), ScanError> {
    if !(cfg.dt > 0.0) {
        return Err(ScanError::Config("dt must be positive".into()));
    }
    if !(cfg.window_s > 0.0) {
        return Err(ScanError::Config("window must be positive".into()));
    }
    if cfg.settle_time < 0.0 {
        return Err(ScanError::Config("settle time must be >= 0".into()));
    }
    if !(cfg.amplitude_pct > 0.0) {
        return Err(ScanError::Config(
            "perturbation amplitude must be positive".into(),
        ));
    }
    let steps_per_window = cfg.window_s / cfg.dt;
    if (steps_per_window - steps_per_window.round()).abs() > 1e-6 {
        return Err(ScanError::Config(
            "window length must be a whole number of time steps".into(),
        ));
    }
    Ok(())
}

/// Intersection of two responses' grids (exact within 1e-9 relative).
pub fn shared_grid(a: &FrequencyResponse, b: &FrequencyResponse) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (i, &fa) in a.freqs.iter().enumerate() {
        for (j, &fb) in b.freqs.iter().enumerate() {
            if (fa - fb).abs() <= 1e-9 * fa.max(fb).max(1.0) {
                out.push((i, j, fa));
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_maps_are_consistent() {
        for frame in [Frame::Abc, Frame::Seq0pn, Frame::Dq0] {
            let labels = frame_channels(frame);
            for axis in default_axes(frame, true) {
                let idx = axis_channel(frame, axis);
                assert_eq!(labels[idx], axis.label());
            }
        }
    }
}
