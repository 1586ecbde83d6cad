//! Perturbation signal families: single-tone, multi-tone (Schroeder-phased),
//! and maximal-length PRBS, with their quality metrics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("amplitude must be > 0, got {0}")]
    NonPositiveAmplitude(f64),
    #[error("frequency must be > 0, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("frequency {f_hz} Hz exceeds the Nyquist limit {limit_hz} Hz of the sampling grid")]
    AboveNyquist { f_hz: f64, limit_hz: f64 },
    #[error("duplicate tone frequency {0} Hz")]
    DuplicateFrequency(f64),
    #[error("tone at {f_hz} Hz is not a multiple of the record resolution {f_res} Hz")]
    OffGridFrequency { f_hz: f64, f_res: f64 },
    #[error("multi-tone spec needs at least one component")]
    EmptyMultiTone,
    #[error("time grid needs dt > 0 and at least 2 samples")]
    BadTimeGrid,
    #[error("PRBS register length {0} out of supported range 2..=24")]
    BadRegisterLength(u32),
    #[error("PRBS tap position {0} outside register")]
    BadTap(u32),
    #[error("taps {taps:?} do not generate a maximal sequence: period {period} != {expected}")]
    NotMaximalLength {
        taps: Vec<u32>,
        period: u64,
        expected: u64,
    },
    #[error("no embedded tap set for register length {0}; supply taps explicitly")]
    NoEmbeddedTaps(u32),
    #[error("PRBS chip interval {chip}s shorter than the sample interval {dt}s")]
    ChipBelowDt { chip: f64, dt: f64 },
    #[error("PRBS seed must have a nonzero register state")]
    ZeroSeed,
    #[error("crest factor undefined for an all-zero signal")]
    ZeroSignal,
}

/// Uniform sampling grid: sample interval and record length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_samples: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_samples: usize) -> Result<Self, SignalError> {
        if !(dt > 0.0) || n_samples < 2 {
            return Err(SignalError::BadTimeGrid);
        }
        Ok(Self { dt, n_samples })
    }

    /// Sampling rate 1/dt in Hz.
    pub fn f_sampling(&self) -> f64 {
        1.0 / self.dt
    }

    /// Frequency resolution of the whole record, 1/(n*dt).
    pub fn f_resolution(&self) -> f64 {
        1.0 / (self.n_samples as f64 * self.dt)
    }

    pub fn duration(&self) -> f64 {
        self.n_samples as f64 * self.dt
    }
}

/// Single real-valued channel sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }
}

/// One cosine component: peak amplitude, frequency, initial phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneSpec {
    pub amplitude: f64,
    pub frequency_hz: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

impl ToneSpec {
    pub fn new(amplitude: f64, frequency_hz: f64, phase_rad: f64) -> Result<Self, SignalError> {
        if !(amplitude > 0.0) {
            return Err(SignalError::NonPositiveAmplitude(amplitude));
        }
        if !(frequency_hz > 0.0) {
            return Err(SignalError::NonPositiveFrequency(frequency_hz));
        }
        Ok(Self {
            amplitude,
            frequency_hz,
            phase_rad,
        })
    }
}

/// Superposition of distinct cosine components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiToneSpec {
    pub components: Vec<ToneSpec>,
}

impl MultiToneSpec {
    pub fn new(components: Vec<ToneSpec>) -> Result<Self, SignalError> {
        if components.is_empty() {
            return Err(SignalError::EmptyMultiTone);
        }
        for (i, c) in components.iter().enumerate() {
            for other in &components[i + 1..] {
                if c.frequency_hz == other.frequency_hz {
                    return Err(SignalError::DuplicateFrequency(c.frequency_hz));
                }
            }
        }
        Ok(Self { components })
    }

    /// Flat-amplitude comb at `k * f_base` for k in 1..=n with Schroeder phases.
    pub fn schroeder_comb(n: usize, f_base: f64, amplitude: f64) -> Result<Self, SignalError> {
        let phases = schroeder_phases(n);
        let components = (1..=n)
            .map(|k| ToneSpec::new(amplitude, k as f64 * f_base, phases[k - 1]))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(components)
    }
}

/// Maximal-length LFSR excitation held for `chip_interval` per symbol and
/// mapped to +/- amplitude (zero mean apart from the odd symbol count).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrbsSpec {
    pub register_length: u32,
    /// Feedback tap positions, 1-based from the newest bit, e.g. {4, 3}.
    pub taps: Vec<u32>,
    pub chip_interval: f64,
    pub amplitude: f64,
}

/// Embedded primitive-polynomial taps for n in 4..=16. Each set is verified
/// by period measurement at construction regardless.
const PRBS_TAPS: &[(u32, &[u32])] = &[
    (4, &[4, 3]),
    (5, &[5, 3]),
    (6, &[6, 5]),
    (7, &[7, 6]),
    (8, &[8, 6, 5, 4]),
    (9, &[9, 5]),
    (10, &[10, 7]),
    (11, &[11, 9]),
    (12, &[12, 11, 10, 4]),
    (13, &[13, 12, 11, 8]),
    (14, &[14, 13, 12, 2]),
    (15, &[15, 14]),
    (16, &[16, 15, 13, 4]),
];

impl PrbsSpec {
    pub fn new(
        register_length: u32,
        taps: Vec<u32>,
        chip_interval: f64,
        amplitude: f64,
    ) -> Result<Self, SignalError> {
        if !(amplitude > 0.0) {
            return Err(SignalError::NonPositiveAmplitude(amplitude));
        }
        if !(2..=24).contains(&register_length) {
            return Err(SignalError::BadRegisterLength(register_length));
        }
        if taps.iter().any(|&t| t == 0 || t > register_length) {
            return Err(SignalError::BadTap(
                *taps.iter().find(|&&t| t == 0 || t > register_length).unwrap(),
            ));
        }
        let spec = Self {
            register_length,
            taps,
            chip_interval,
            amplitude,
        };
        let expected = (1u64 << register_length) - 1;
        let period = spec.measure_period(1);
        if period != expected {
            return Err(SignalError::NotMaximalLength {
                taps: spec.taps,
                period,
                expected,
            });
        }
        Ok(spec)
    }

    /// Spec with the embedded tap table for the given register length.
    pub fn standard(
        register_length: u32,
        chip_interval: f64,
        amplitude: f64,
    ) -> Result<Self, SignalError> {
        let taps = PRBS_TAPS
            .iter()
            .find(|(n, _)| *n == register_length)
            .map(|(_, t)| t.to_vec())
            .ok_or(SignalError::NoEmbeddedTaps(register_length))?;
        Self::new(register_length, taps, chip_interval, amplitude)
    }

    pub fn period_chips(&self) -> u64 {
        (1u64 << self.register_length) - 1
    }

    /// Cycle length of the register state starting from `seed`.
    fn measure_period(&self, seed: u32) -> u64 {
        let mask = (1u32 << self.register_length) - 1;
        let start = seed & mask;
        let mut state = start;
        let mut count = 0u64;
        let limit = 1u64 << self.register_length;
        loop {
            state = self.advance(state);
            count += 1;
            if state == start || count > limit {
                return count;
            }
        }
    }

    /// One LFSR step: feedback bit is the mod-2 sum over tap positions.
    fn advance(&self, state: u32) -> u32 {
        let mask = (1u32 << self.register_length) - 1;
        let mut fb = 0u32;
        for &t in &self.taps {
            fb ^= (state >> (t - 1)) & 1;
        }
        ((state << 1) | fb) & mask
    }

    /// Binary symbol stream for `n_chips` chips from the given seed.
    pub fn symbols(&self, seed: u32, n_chips: usize) -> Result<Vec<u8>, SignalError> {
        let mask = (1u32 << self.register_length) - 1;
        let mut state = seed & mask;
        if state == 0 {
            return Err(SignalError::ZeroSeed);
        }
        let mut out = Vec::with_capacity(n_chips);
        for _ in 0..n_chips {
            state = self.advance(state);
            out.push((state & 1) as u8);
        }
        Ok(out)
    }
}

/// Sampled single tone: `amplitude * cos(2*pi*f*k*dt + phase)`.
pub fn single_tone(spec: &ToneSpec, grid: &TimeGrid) -> Result<Waveform, SignalError> {
    let limit = grid.f_sampling() / 2.0;
    if spec.frequency_hz > limit {
        return Err(SignalError::AboveNyquist {
            f_hz: spec.frequency_hz,
            limit_hz: limit,
        });
    }
    let w = 2.0 * PI * spec.frequency_hz;
    let samples = (0..grid.n_samples)
        .map(|k| spec.amplitude * (w * k as f64 * grid.dt + spec.phase_rad).cos())
        .collect();
    Ok(Waveform {
        dt: grid.dt,
        samples,
    })
}

/// Pointwise sum of the components. Every component must sit on the record's
/// own frequency grid so one full record holds an integer number of periods.
pub fn multi_tone(spec: &MultiToneSpec, grid: &TimeGrid) -> Result<Waveform, SignalError> {
    let f_res = grid.f_resolution();
    let limit = grid.f_sampling() / 2.0;
    for c in &spec.components {
        if c.frequency_hz > limit {
            return Err(SignalError::AboveNyquist {
                f_hz: c.frequency_hz,
                limit_hz: limit,
            });
        }
        let ratio = c.frequency_hz / f_res;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(SignalError::OffGridFrequency {
                f_hz: c.frequency_hz,
                f_res,
            });
        }
    }
    let mut samples = vec![0.0; grid.n_samples];
    for c in &spec.components {
        let w = 2.0 * PI * c.frequency_hz;
        for (k, s) in samples.iter_mut().enumerate() {
            *s += c.amplitude * (w * k as f64 * grid.dt + c.phase_rad).cos();
        }
    }
    Ok(Waveform {
        dt: grid.dt,
        samples,
    })
}

/// Schroeder phase rule for a flat n-component comb: phi_k = -pi*k*(k-1)/n.
pub fn schroeder_phases(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| -PI * (k as f64) * (k as f64 - 1.0) / n as f64)
        .collect()
}

/// PRBS waveform: symbols mapped {0,1} -> {-A,+A}, held for one chip interval
/// each, cycling with period 2^n - 1 chips.
pub fn prbs_waveform(spec: &PrbsSpec, grid: &TimeGrid, seed: u32) -> Result<Waveform, SignalError> {
    if spec.chip_interval < grid.dt {
        return Err(SignalError::ChipBelowDt {
            chip: spec.chip_interval,
            dt: grid.dt,
        });
    }
    let steps_per_chip = (spec.chip_interval / grid.dt).round() as usize;
    let n_chips = grid.n_samples / steps_per_chip + 2;
    let period = spec.period_chips() as usize;
    let one_period = spec.symbols(seed, period)?;
    let mut samples = Vec::with_capacity(grid.n_samples);
    for k in 0..grid.n_samples {
        let chip = (k / steps_per_chip) % period;
        let bit = one_period[chip];
        samples.push(if bit == 1 {
            spec.amplitude
        } else {
            -spec.amplitude
        });
    }
    let _ = n_chips;
    Ok(Waveform {
        dt: grid.dt,
        samples,
    })
}

/// Peak-to-RMS ratio.
pub fn crest_factor(w: &Waveform) -> Result<f64, SignalError> {
    let n = w.samples.len() as f64;
    let sumsq: f64 = w.samples.iter().map(|x| x * x).sum();
    if sumsq == 0.0 {
        return Err(SignalError::ZeroSignal);
    }
    let rms = (sumsq / n).sqrt();
    let peak = w.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(peak / rms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(dt: f64, n: usize) -> TimeGrid {
        TimeGrid::new(dt, n).unwrap()
    }

    #[test]
    fn tone_samples_match_cosine() {
        let spec = ToneSpec::new(1.0, 10.0, 0.0).unwrap();
        let g = grid(0.0025, 400);
        let w = single_tone(&spec, &g).unwrap();
        assert_relative_eq!(w.samples[0], 1.0);
        // t = 0.025 s is a quarter period of 10 Hz
        let k = (0.025 / g.dt).round() as usize;
        assert!(w.samples[k].abs() < 1e-12);
    }

    #[test]
    fn tone_rejects_above_nyquist() {
        let spec = ToneSpec::new(1.0, 60_000.0, 0.0).unwrap();
        let g = grid(1e-5, 100);
        assert!(matches!(
            single_tone(&spec, &g),
            Err(SignalError::AboveNyquist { .. })
        ));
    }

    #[test]
    fn two_percent_rule_of_nominal() {
        // 690 V system, 2% amplitude sits inside the 1-3% guidance band.
        let amp = 0.02 * 690.0;
        assert_relative_eq!(amp, 13.8);
        assert!(amp >= 0.01 * 690.0 && amp <= 0.03 * 690.0);
    }

    #[test]
    fn multi_tone_degenerates_to_single() {
        let g = grid(1e-3, 1000);
        let tone = ToneSpec::new(0.7, 5.0, 0.3).unwrap();
        let m = MultiToneSpec::new(vec![tone]).unwrap();
        let a = multi_tone(&m, &g).unwrap();
        let b = single_tone(&tone, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multi_tone_coherent_peak() {
        let g = grid(1e-3, 1000);
        let m = MultiToneSpec::new(vec![
            ToneSpec::new(1.5, 2.0, 0.0).unwrap(),
            ToneSpec::new(1.5, 4.0, 0.0).unwrap(),
        ])
        .unwrap();
        let w = multi_tone(&m, &g).unwrap();
        assert_relative_eq!(w.samples[0], 3.0);
    }

    #[test]
    fn multi_tone_rejects_duplicates_and_off_grid() {
        let g = grid(1e-3, 1000);
        let dup = MultiToneSpec::new(vec![
            ToneSpec::new(1.0, 2.0, 0.0).unwrap(),
            ToneSpec::new(0.5, 2.0, 0.1).unwrap(),
        ]);
        assert!(matches!(dup, Err(SignalError::DuplicateFrequency(_))));
        let off = MultiToneSpec::new(vec![ToneSpec::new(1.0, 2.5, 0.0).unwrap()]).unwrap();
        assert!(matches!(
            multi_tone(&off, &g),
            Err(SignalError::OffGridFrequency { .. })
        ));
    }

    #[test]
    fn schroeder_phase_values() {
        assert_eq!(schroeder_phases(1), vec![0.0]);
        let p2 = schroeder_phases(2);
        assert_relative_eq!(p2[0], 0.0);
        assert_relative_eq!(p2[1], -PI);
    }

    #[test]
    fn schroeder_crest_beats_zero_phase() {
        // Evaluate both phase choices over one full period of the comb.
        let g = grid(1e-4, 10_000); // 1 s record, f_base = 1 Hz
        for n in [8usize, 12, 16, 24] {
            let sch = MultiToneSpec::schroeder_comb(n, 1.0, 1.0).unwrap();
            let zero = MultiToneSpec::new(
                (1..=n)
                    .map(|k| ToneSpec::new(1.0, k as f64, 0.0).unwrap())
                    .collect(),
            )
            .unwrap();
            let c_sch = crest_factor(&multi_tone(&sch, &g).unwrap()).unwrap();
            let c_zero = crest_factor(&multi_tone(&zero, &g).unwrap()).unwrap();
            assert!(
                c_sch < c_zero,
                "n={n}: schroeder {c_sch} not below zero-phase {c_zero}"
            );
            if n == 16 {
                assert!(c_sch < 2.0_f64.sqrt() * 1.7);
            }
        }
    }

    #[test]
    fn prbs_period_and_balance() {
        let spec = PrbsSpec::new(4, vec![4, 3], 1e-3, 1.0).unwrap();
        assert_eq!(spec.period_chips(), 15);
        let syms = spec.symbols(1, 15).unwrap();
        let ones = syms.iter().filter(|&&b| b == 1).count();
        assert_eq!(ones, 8);
        assert_eq!(15 - ones, 7);
    }

    #[test]
    fn prbs_rejects_zero_seed_and_bad_taps() {
        let spec = PrbsSpec::new(4, vec![4, 3], 1e-3, 1.0).unwrap();
        assert_eq!(spec.symbols(0, 4), Err(SignalError::ZeroSeed));
        assert!(matches!(
            PrbsSpec::new(4, vec![4, 2], 1e-3, 1.0),
            Err(SignalError::NotMaximalLength { .. })
        ));
    }

    #[test]
    fn prbs_autocorrelation_first_lag() {
        let spec = PrbsSpec::new(10, vec![10, 7], 1e-3, 1.0).unwrap();
        assert_eq!(spec.period_chips(), 1023);
        let n = 1023usize;
        let syms = spec.symbols(1, n).unwrap();
        let x: Vec<f64> = syms
            .iter()
            .map(|&b| if b == 1 { 1.0 } else { -1.0 })
            .collect();
        // brute-force circular autocorrelation at lag 1
        let r1: f64 = (0..n).map(|k| x[k] * x[(k + 1) % n]).sum::<f64>() / n as f64;
        assert!(r1.abs() <= (1.0 / 1023.0) * (1.0 + 1e-9));
    }

    #[test]
    fn all_embedded_taps_are_maximal() {
        for n in 4..=16 {
            let spec = PrbsSpec::standard(n, 1e-3, 1.0).unwrap();
            assert_eq!(spec.period_chips(), (1u64 << n) - 1, "n={n}");
        }
    }

    #[test]
    fn crest_factor_reference_values() {
        let g = grid(1e-4, 10_000);
        let cosw = single_tone(&ToneSpec::new(2.0, 5.0, 0.0).unwrap(), &g).unwrap();
        assert_relative_eq!(crest_factor(&cosw).unwrap(), 2.0_f64.sqrt(), epsilon = 1e-6);
        let flat = Waveform {
            dt: 1.0,
            samples: vec![3.0; 16],
        };
        assert_relative_eq!(crest_factor(&flat).unwrap(), 1.0);
        let spec = PrbsSpec::new(4, vec![4, 3], 1e-3, 2.5).unwrap();
        let w = prbs_waveform(&spec, &grid(1e-3, 15), 1).unwrap();
        assert_relative_eq!(crest_factor(&w).unwrap(), 1.0, epsilon = 1e-12);
        let zero = Waveform {
            dt: 1.0,
            samples: vec![0.0; 8],
        };
        assert_eq!(crest_factor(&zero), Err(SignalError::ZeroSignal));
    }
}
