//! Reference-frame machinery: symmetrical-component (0pn) and rotating (dq0)
//! transforms, the scan reference angle, rectangular windowing, steady-state
//! subtracted spectra, and frequency-bin bookkeeping including the
//! mirror-frequency indices used by sequence-frame scans.
//!
//! Conventions, fixed once for the whole crate:
//! - positive sequence means phase order a-b-c (b lags a by 120 degrees), so
//!   the synthesis column for the p axis is [1, e^{-j2pi/3}, e^{j2pi/3}];
//! - the q axis leads d by 90 degrees, i.e. the dq0 synthesis rows are
//!   `[cos(th), -sin(th), 1]`, which makes a series RL scan read
//!   Z_dq = [[R+jwL, -w0*L], [w0*L, R+jwL]];
//! - spectra are two-sided; a real channel obeys X(-k) = conj(X(k)), while
//!   complex sequence channels carry independent content on both sides.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::signal::Waveform;

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("window [{t_start}, {t_end}] is empty or outside the record")]
    BadWindow { t_start: f64, t_end: f64 },
    #[error("records differ in sample interval or length")]
    GridMismatch,
    #[error("frequency {f_hz} Hz is not a multiple of the resolution {f_res} Hz")]
    NotOnGrid { f_hz: f64, f_res: f64 },
    #[error("frequency {f_hz} Hz violates the Nyquist limit {limit_hz} Hz")]
    NyquistViolation { f_hz: f64, limit_hz: f64 },
    #[error("frequency must be > 0, got {0} Hz")]
    NonPositiveFrequency(f64),
}

/// Rotation by 120 degrees, e^{j 2 pi / 3}.
pub const SEQ_ROT: Complex64 = Complex64::new(-0.5, 0.866_025_403_784_438_6);
/// Rotation by -120 degrees, e^{-j 2 pi / 3}.
pub const SEQ_ROT2: Complex64 = Complex64::new(-0.5, -0.866_025_403_784_438_6);

/// Instantaneous three-phase sample (real quantities).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreePhase {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Instantaneous zero/positive/negative-sequence sample. Complex-valued: for
/// real abc inputs `neg` is the conjugate of `pos` and `zero` is real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceSample {
    pub zero: Complex64,
    pub pos: Complex64,
    pub neg: Complex64,
}

/// Sequence-domain phasor set (magnitude and angle folded into complex values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequencePhasorSet {
    pub zero: Complex64,
    pub pos: Complex64,
    pub neg: Complex64,
}

/// Instantaneous dq0 sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dq0 {
    pub d: f64,
    pub q: f64,
    pub zero: f64,
}

/// Rotating-frame reference: theta(t) = 2 pi f0 t + theta0, unwrapped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceAngle {
    pub f0: f64,
    pub theta0: f64,
}

impl ReferenceAngle {
    pub fn new(f0: f64, theta0: f64) -> Result<Self, FrameError> {
        if !(f0 > 0.0) {
            return Err(FrameError::NonPositiveFrequency(f0));
        }
        Ok(Self { f0, theta0 })
    }

    /// Continuous (non-wrapped) angle at time t.
    pub fn at(&self, t: f64) -> f64 {
        2.0 * PI * self.f0 * t + self.theta0
    }
}

/// Sequence analysis of a complex abc triple: rows (1/3)[1 1 1; 1 a a^2; 1 a^2 a]
/// with a = e^{j2pi/3}; exact inverse of [`fortescue_inverse`].
pub fn fortescue_forward(abc: [Complex64; 3]) -> SequenceSample {
    let [xa, xb, xc] = abc;
    let third = 1.0 / 3.0;
    SequenceSample {
        zero: (xa + xb + xc) * third,
        pos: (xa + SEQ_ROT * xb + SEQ_ROT2 * xc) * third,
        neg: (xa + SEQ_ROT2 * xb + SEQ_ROT * xc) * third,
    }
}

/// Sequence analysis of a real instantaneous sample.
pub fn fortescue_forward_real(x: ThreePhase) -> SequenceSample {
    fortescue_forward([
        Complex64::new(x.a, 0.0),
        Complex64::new(x.b, 0.0),
        Complex64::new(x.c, 0.0),
    ])
}

/// Sequence synthesis: columns [1 1 1; 1 a^2 a; 1 a a^2], so a pure positive
/// phasor yields the phase order a-b-c. Complex output; take the real part
/// (with the e^{jwt} rotation applied) when building physical sources.
pub fn fortescue_inverse(s: &SequenceSample) -> [Complex64; 3] {
    [
        s.zero + s.pos + s.neg,
        s.zero + SEQ_ROT2 * s.pos + SEQ_ROT * s.neg,
        s.zero + SEQ_ROT * s.pos + SEQ_ROT2 * s.neg,
    ]
}

/// Sequence synthesis of a phasor set (same matrix as [`fortescue_inverse`]).
pub fn fortescue_inverse_phasors(s: &SequencePhasorSet) -> [Complex64; 3] {
    fortescue_inverse(&SequenceSample {
        zero: s.zero,
        pos: s.pos,
        neg: s.neg,
    })
}

/// dq0 synthesis with rows [cos th, -sin th, 1] (q leads d by 90 degrees).
pub fn park_inverse(x: Dq0, theta: f64) -> ThreePhase {
    let synth = |th: f64| x.d * th.cos() - x.q * th.sin() + x.zero;
    ThreePhase {
        a: synth(theta),
        b: synth(theta - 2.0 * PI / 3.0),
        c: synth(theta + 2.0 * PI / 3.0),
    }
}

/// Exact matrix inverse of [`park_inverse`]: amplitude-invariant 2/3 scaling
/// with a 1/3 zero row, so a balanced peak-V set aligned with theta reads
/// d = V, q = 0.
pub fn park_forward(x: ThreePhase, theta: f64) -> Dq0 {
    let tb = theta - 2.0 * PI / 3.0;
    let tc = theta + 2.0 * PI / 3.0;
    let two_thirds = 2.0 / 3.0;
    Dq0 {
        d: two_thirds * (x.a * theta.cos() + x.b * tb.cos() + x.c * tc.cos()),
        q: -two_thirds * (x.a * theta.sin() + x.b * tb.sin() + x.c * tc.sin()),
        zero: (x.a + x.b + x.c) / 3.0,
    }
}

/// Rectangular analysis window in record time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub t_start: f64,
    pub t_end: f64,
}

impl WindowSpec {
    pub fn new(t_start: f64, t_end: f64) -> Result<Self, FrameError> {
        if !(t_end > t_start) || t_start < 0.0 {
            return Err(FrameError::BadWindow { t_start, t_end });
        }
        Ok(Self { t_start, t_end })
    }

    /// Spectral resolution of the window, 1/(t_end - t_start).
    pub fn f_res(&self) -> f64 {
        1.0 / (self.t_end - self.t_start)
    }

    /// Half-open sample-index range [start, end) for a record with step dt,
    /// so the window holds exactly (t_end - t_start)/dt samples.
    pub fn sample_range(&self, dt: f64, n_samples: usize) -> Result<(usize, usize), FrameError> {
        let start = (self.t_start / dt).round() as usize;
        let end = (self.t_end / dt).round() as usize;
        if start >= end || end > n_samples {
            return Err(FrameError::BadWindow {
                t_start: self.t_start,
                t_end: self.t_end,
            });
        }
        Ok((start, end))
    }
}

/// Samples outside the window dropped; dt preserved.
pub fn apply_window(rec: &Waveform, w: &WindowSpec) -> Result<Waveform, FrameError> {
    let (start, end) = w.sample_range(rec.dt, rec.samples.len())?;
    Ok(Waveform {
        dt: rec.dt,
        samples: rec.samples[start..end].to_vec(),
    })
}

/// Complex-valued channel on a uniform grid (sequence-frame measurements).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexWaveform {
    pub dt: f64,
    pub samples: Vec<Complex64>,
}

impl ComplexWaveform {
    pub fn from_real(w: &Waveform) -> Self {
        Self {
            dt: w.dt,
            samples: w.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }
}

/// Two-sided spectrum with peak-amplitude normalization: a unit cosine on a
/// real channel reads 1.0 at its bin pair; the DC bin carries the mean.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub f_res: f64,
    bins: Vec<Complex64>,
}

impl Spectrum {
    /// Value at a signed bin index (bin k holds the e^{+j 2 pi k f_res t}
    /// component; negative k wraps to the top half).
    pub fn at(&self, bin: i64) -> Complex64 {
        let n = self.bins.len() as i64;
        self.bins[bin.rem_euclid(n) as usize]
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Largest magnitude over all bins except the listed ones.
    pub fn max_excluding(&self, exclude: &[i64]) -> f64 {
        let n = self.bins.len() as i64;
        let excl: Vec<usize> = exclude.iter().map(|b| b.rem_euclid(n) as usize).collect();
        self.bins
            .iter()
            .enumerate()
            .filter(|(i, _)| !excl.contains(i))
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }
}

/// Windowed DFT of (measurement - steady state). Both records must share the
/// grid. Negative-frequency bins of complex channels stay independently
/// addressable; real channels obey conjugate symmetry.
pub fn delta_spectrum(
    meas: &ComplexWaveform,
    ss: &ComplexWaveform,
    w: &WindowSpec,
) -> Result<Spectrum, FrameError> {
    if meas.dt != ss.dt || meas.samples.len() != ss.samples.len() {
        return Err(FrameError::GridMismatch);
    }
    let (start, end) = w.sample_range(meas.dt, meas.samples.len())?;
    let mut buf: Vec<Complex64> = meas.samples[start..end]
        .iter()
        .zip(&ss.samples[start..end])
        .map(|(m, s)| m - s)
        .collect();
    let n = buf.len();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 2.0 / n as f64;
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= if k == 0 { 0.5 * scale } else { scale };
    }
    Ok(Spectrum {
        f_res: 1.0 / (n as f64 * meas.dt),
        bins: buf,
    })
}

/// Convenience for real-valued records.
pub fn delta_spectrum_real(
    meas: &Waveform,
    ss: &Waveform,
    w: &WindowSpec,
) -> Result<Spectrum, FrameError> {
    delta_spectrum(
        &ComplexWaveform::from_real(meas),
        &ComplexWaveform::from_real(ss),
        w,
    )
}

/// Validated direct-excitation bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinIndex {
    pub index: u64,
    pub f_res: f64,
    /// Set when f_d exceeds f_sampling/4, the recommended industrial limit
    /// for adequate signal-to-noise ratio.
    pub snr_warning: bool,
}

/// Bin of a perturbation frequency: f_d/f_res as an exact integer, checked
/// against the Nyquist limit of the sampling grid.
pub fn bin_index(f_d: f64, f_res: f64, f_sampling: f64) -> Result<BinIndex, FrameError> {
    if !(f_d > 0.0) {
        return Err(FrameError::NonPositiveFrequency(f_d));
    }
    if f_d > f_sampling / 2.0 {
        return Err(FrameError::NyquistViolation {
            f_hz: f_d,
            limit_hz: f_sampling / 2.0,
        });
    }
    let ratio = f_d / f_res;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
        return Err(FrameError::NotOnGrid { f_hz: f_d, f_res });
    }
    Ok(BinIndex {
        index: ratio.round() as u64,
        f_res,
        snr_warning: f_d > f_sampling / 4.0,
    })
}

/// Mirror bins for sequence-frame scanning around the fundamental.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorBins {
    /// Signed (2 f0 - f_d)/f_res; negative once f_d >= 2 f0, where the
    /// mirror is addressed on the negative-frequency side.
    pub omega_dp: i64,
    /// (f_d + 2 f0)/f_res, always positive.
    pub omega_dn: i64,
    /// Set when f_d = 2 f0 lands the mirror on the DC bin.
    pub dp_degenerate: bool,
}

/// Mirror-frequency indices (2f0 - f_d)/f_res and (f_d + 2f0)/f_res.
pub fn mirror_bins(f0: f64, f_d: f64, f_res: f64) -> Result<MirrorBins, FrameError> {
    if !(f_d > 0.0) {
        return Err(FrameError::NonPositiveFrequency(f_d));
    }
    if !(f0 > 0.0) {
        return Err(FrameError::NonPositiveFrequency(f0));
    }
    let check = |f: f64| -> Result<i64, FrameError> {
        let ratio = f / f_res;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.abs().max(1.0) {
            return Err(FrameError::NotOnGrid { f_hz: f, f_res });
        }
        Ok(ratio.round() as i64)
    };
    let omega_dp = check(2.0 * f0 - f_d)?;
    let omega_dn = check(f_d + 2.0 * f0)?;
    Ok(MirrorBins {
        omega_dp,
        omega_dn,
        dp_degenerate: omega_dp == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn fortescue_zero_sequence_column() {
        let s = SequenceSample {
            zero: c(1.0, 0.0),
            pos: c(0.0, 0.0),
            neg: c(0.0, 0.0),
        };
        let abc = fortescue_inverse(&s);
        for x in abc {
            assert!(close(x, c(1.0, 0.0), 1e-15));
        }
        let back = fortescue_forward([c(1.0, 0.0); 3]);
        assert!(close(back.zero, c(1.0, 0.0), 1e-15));
        assert!(back.pos.norm() < 1e-15 && back.neg.norm() < 1e-15);
    }

    #[test]
    fn fortescue_positive_column_gives_abc_order() {
        let s = SequenceSample {
            zero: c(0.0, 0.0),
            pos: c(1.0, 0.0),
            neg: c(0.0, 0.0),
        };
        let abc = fortescue_inverse(&s);
        // phase b lags a by 120 degrees: phasor e^{-j2pi/3}
        assert!(close(abc[0], c(1.0, 0.0), 1e-15));
        assert!(close(abc[1], SEQ_ROT2, 1e-15));
        assert!(close(abc[2], SEQ_ROT, 1e-15));
        // and the forward transform recovers a pure positive sample
        let seq = fortescue_forward(abc);
        assert!(close(seq.pos, c(1.0, 0.0), 1e-14));
        assert!(seq.zero.norm() < 1e-15 && seq.neg.norm() < 1e-15);
    }

    #[test]
    fn fortescue_forward_of_positive_phasor_set() {
        // (1, a^2, a) with a = e^{j2pi/3} is the a-b-c ordered set
        let seq = fortescue_forward([c(1.0, 0.0), SEQ_ROT2, SEQ_ROT]);
        assert!(close(seq.pos, c(1.0, 0.0), 1e-14));
        assert!(seq.zero.norm() < 1e-14 && seq.neg.norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn fortescue_round_trip(re in proptest::collection::vec(-10.0f64..10.0, 6)) {
            let abc = [c(re[0], re[1]), c(re[2], re[3]), c(re[4], re[5])];
            let seq = fortescue_forward(abc);
            let back = fortescue_inverse(&seq);
            for (x, y) in back.iter().zip(abc.iter()) {
                prop_assert!((x - y).norm() <= 1e-12 * (1.0 + y.norm()));
            }
        }

        #[test]
        fn park_round_trip(v in proptest::collection::vec(-10.0f64..10.0, 3), theta in -10.0f64..10.0) {
            let x = ThreePhase { a: v[0], b: v[1], c: v[2] };
            let dq0 = park_forward(x, theta);
            let back = park_inverse(dq0, theta);
            prop_assert!((back.a - x.a).abs() <= 1e-12 * (1.0 + x.a.abs()));
            prop_assert!((back.b - x.b).abs() <= 1e-12 * (1.0 + x.b.abs()));
            prop_assert!((back.c - x.c).abs() <= 1e-12 * (1.0 + x.c.abs()));
        }
    }

    #[test]
    fn park_inverse_columns() {
        let abc = park_inverse(
            Dq0 {
                d: 1.0,
                q: 0.0,
                zero: 0.0,
            },
            0.0,
        );
        assert_relative_eq!(abc.a, 1.0);
        let common = park_inverse(
            Dq0 {
                d: 0.0,
                q: 0.0,
                zero: 1.0,
            },
            0.7,
        );
        assert_relative_eq!(common.a, 1.0);
        assert_relative_eq!(common.b, 1.0);
        assert_relative_eq!(common.c, 1.0);
    }

    #[test]
    fn park_forward_aligned_cosine_set() {
        let theta: f64 = 0.9;
        let x = park_inverse(
            Dq0 {
                d: 1.0,
                q: 0.0,
                zero: 0.0,
            },
            theta,
        );
        let dq0 = park_forward(x, theta);
        assert_relative_eq!(dq0.d, 1.0, epsilon = 1e-12);
        assert_relative_eq!(dq0.q, 0.0, epsilon = 1e-12);
        assert_relative_eq!(dq0.zero, 0.0, epsilon = 1e-12);
        let m = park_forward(
            ThreePhase {
                a: 1.0,
                b: 1.0,
                c: 1.0,
            },
            theta,
        );
        assert_relative_eq!(m.d, 0.0, epsilon = 1e-12);
        assert_relative_eq!(m.q, 0.0, epsilon = 1e-12);
        assert_relative_eq!(m.zero, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_angle_values() {
        let r = ReferenceAngle::new(50.0, 0.0).unwrap();
        assert_relative_eq!(r.at(0.02), 2.0 * PI, epsilon = 1e-12);
        let r2 = ReferenceAngle::new(50.0, PI / 6.0).unwrap();
        assert_relative_eq!(r2.at(0.0), PI / 6.0);
        let r3 = ReferenceAngle::new(60.0, 0.0).unwrap();
        assert_relative_eq!(r3.at(1.0 / 240.0), PI / 2.0, epsilon = 1e-12);
        // affine in t
        let t1 = 0.31;
        let t2 = 1.7;
        assert_relative_eq!(
            r.at(t1 + t2) - r.at(t2),
            2.0 * PI * 50.0 * t1,
            epsilon = 1e-9
        );
    }

    #[test]
    fn window_resolution() {
        for (len, f_res) in [(1.0, 1.0), (2.0, 0.5), (0.25, 4.0)] {
            let w = WindowSpec::new(0.0, len).unwrap();
            assert_relative_eq!(w.f_res(), f_res);
        }
        assert!(WindowSpec::new(1.0, 1.0).is_err());
    }

    #[test]
    fn window_drops_outside_samples() {
        let rec = Waveform {
            dt: 0.25,
            samples: (0..8).map(|i| i as f64).collect(),
        };
        let w = WindowSpec::new(0.5, 1.5).unwrap();
        let out = apply_window(&rec, &w).unwrap();
        assert_eq!(out.samples, vec![2.0, 3.0, 4.0, 5.0]);
        let bad = WindowSpec::new(1.9, 2.6).unwrap();
        assert!(apply_window(&rec, &bad).is_err());
    }

    fn tone_record(n: usize, dt: f64, f: f64, amp: f64) -> Waveform {
        Waveform {
            dt,
            samples: (0..n)
                .map(|k| amp * (2.0 * PI * f * k as f64 * dt).cos())
                .collect(),
        }
    }

    #[test]
    fn delta_spectrum_cancels_identical_records() {
        let a = tone_record(1000, 1e-3, 10.0, 1.0);
        let w = WindowSpec::new(0.0, 1.0).unwrap();
        let s = delta_spectrum_real(&a, &a, &w).unwrap();
        assert!(s.max_excluding(&[]) < 1e-14);
    }

    #[test]
    fn delta_spectrum_reads_unit_tone() {
        let ss = tone_record(1000, 1e-3, 3.0, 0.5);
        let mut meas = ss.clone();
        for (k, m) in meas.samples.iter_mut().enumerate() {
            *m += (2.0 * PI * 10.0 * k as f64 * 1e-3).cos();
        }
        let w = WindowSpec::new(0.0, 1.0).unwrap();
        let s = delta_spectrum_real(&meas, &ss, &w).unwrap();
        assert!(close(s.at(10), c(1.0, 0.0), 1e-10));
        assert!(close(s.at(-10), c(1.0, 0.0), 1e-10));
        assert!(s.max_excluding(&[10, -10]) < 1e-10);
    }

    #[test]
    fn delta_spectrum_two_tones_linear() {
        let ss = tone_record(2000, 5e-4, 0.0, 0.0);
        let mut meas = ss.clone();
        for (k, m) in meas.samples.iter_mut().enumerate() {
            let t = k as f64 * 5e-4;
            *m += 2.0 * (2.0 * PI * 7.0 * t).cos() + 0.5 * (2.0 * PI * 19.0 * t).cos();
        }
        let w = WindowSpec::new(0.0, 1.0).unwrap();
        let s = delta_spectrum_real(&meas, &ss, &w).unwrap();
        assert!(close(s.at(7), c(2.0, 0.0), 1e-10));
        assert!(close(s.at(19), c(0.5, 0.0), 1e-10));
        assert!(s.max_excluding(&[7, -7, 19, -19]) < 1e-9);
    }

    #[test]
    fn delta_spectrum_rejects_grid_mismatch() {
        let a = tone_record(1000, 1e-3, 10.0, 1.0);
        let b = tone_record(999, 1e-3, 10.0, 1.0);
        let w = WindowSpec::new(0.0, 0.9).unwrap();
        assert_eq!(
            delta_spectrum_real(&a, &b, &w).unwrap_err(),
            FrameError::GridMismatch
        );
    }

    proptest! {
        #[test]
        fn delta_spectrum_is_linear(
            x in proptest::collection::vec(-1.0f64..1.0, 64),
            y in proptest::collection::vec(-1.0f64..1.0, 64),
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
        ) {
            let dt = 1e-3;
            let zero = Waveform { dt, samples: vec![0.0; 64] };
            let wx = Waveform { dt, samples: x.clone() };
            let wy = Waveform { dt, samples: y.clone() };
            let combo = Waveform {
                dt,
                samples: x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect(),
            };
            let w = WindowSpec::new(0.0, 64.0 * dt).unwrap();
            let sx = delta_spectrum_real(&wx, &zero, &w).unwrap();
            let sy = delta_spectrum_real(&wy, &zero, &w).unwrap();
            let sc = delta_spectrum_real(&combo, &zero, &w).unwrap();
            let scale = 1.0 + sx.max_excluding(&[]).max(sy.max_excluding(&[]));
            for k in 0..64i64 {
                let expect = alpha * sx.at(k) + beta * sy.at(k);
                prop_assert!((sc.at(k) - expect).norm() <= 1e-10 * scale);
            }
        }

        #[test]
        fn real_channel_conjugate_symmetry(x in proptest::collection::vec(-1.0f64..1.0, 50)) {
            let dt = 1e-2;
            let zero = Waveform { dt, samples: vec![0.0; 50] };
            let wx = Waveform { dt, samples: x };
            let w = WindowSpec::new(0.0, 0.5).unwrap();
            let s = delta_spectrum_real(&wx, &zero, &w).unwrap();
            for k in 1..25i64 {
                prop_assert!((s.at(-k) - s.at(k).conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn bin_index_cases() {
        let b = bin_index(10.0, 0.5, 1e5).unwrap();
        assert_eq!(b.index, 20);
        assert!(!b.snr_warning);
        assert!(matches!(
            bin_index(10.3, 1.0, 1e5),
            Err(FrameError::NotOnGrid { .. })
        ));
        // dt = 10 us -> f_sampling = 100 kHz
        assert!(matches!(
            bin_index(60_000.0, 1.0, 1e5),
            Err(FrameError::NyquistViolation { .. })
        ));
        let warn = bin_index(30_000.0, 1.0, 1e5).unwrap();
        assert!(warn.snr_warning);
    }

    #[test]
    fn mirror_bin_cases() {
        let m = mirror_bins(50.0, 30.0, 1.0).unwrap();
        assert_eq!((m.omega_dp, m.omega_dn), (70, 130));
        assert!(!m.dp_degenerate);
        let m2 = mirror_bins(50.0, 120.0, 1.0).unwrap();
        assert_eq!((m2.omega_dp, m2.omega_dn), (-20, 220));
        let m3 = mirror_bins(50.0, 100.0, 1.0).unwrap();
        assert_eq!(m3.omega_dp, 0);
        assert!(m3.dp_degenerate);
        assert!(matches!(
            mirror_bins(50.0, 30.25, 1.0),
            Err(FrameError::NotOnGrid { .. })
        ));
    }
}
