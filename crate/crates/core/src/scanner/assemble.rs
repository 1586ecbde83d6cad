//! Matrix assembly from measured small-signal spectra, one routine per
//! frame/strategy combination.
//!
//! Sequence-frame coupling entries live at mirror bins: injecting the p axis
//! at f_d drives the rotating frame at f_d - f0, and any dq asymmetry
//! reflects a counter-rotating component that lands in the n channel at the
//! signed frequency f_d - 2 f0 (the paper's positive mirror |2 f0 - f_d| for
//! f_d < 2 f0, the negative-side bin beyond). The n-axis mirror lands in the
//! p channel at f_d + 2 f0.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::emt::Axis;
use crate::linalg::{condition_estimate, inverse, CMatrix};

use super::{axis_channel, Frame, ScanError};

/// Spectra of all measured channels at one bin, for one injection run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinReading {
    /// Frame channels in storage order (abc: a/b/c, 0pn: 0/p/n, dq0: d/q/0).
    pub v: [Complex64; 3],
    pub i: [Complex64; 3],
}

#[derive(Debug, Clone)]
pub struct InjectionRun {
    pub axis: Axis,
    pub bins: BTreeMap<i64, BinReading>,
}

/// Small-signal voltage and current spectra for every injection axis of one
/// assembly problem.
#[derive(Debug, Clone)]
pub struct SpectrumSet {
    pub frame: Frame,
    pub f_res: f64,
    pub injected_amplitude: f64,
    pub runs: Vec<InjectionRun>,
}

impl SpectrumSet {
    fn run(&self, axis: Axis) -> Result<&InjectionRun, ScanError> {
        self.runs
            .iter()
            .find(|r| r.axis == axis)
            .ok_or_else(|| ScanError::MissingAxis(axis.label().to_string()))
    }

    fn reading(&self, axis: Axis, bin: i64) -> Result<BinReading, ScanError> {
        self.run(axis)?
            .bins
            .get(&bin)
            .copied()
            .ok_or(ScanError::MissingBin(bin))
    }
}

/// Column-wise admittance assembly: injection on phase y fills column y with
/// dI_x / dV_y at the excitation bin.
pub fn assemble_abc_voltage(
    set: &SpectrumSet,
    bin: i64,
    floor: f64,
) -> Result<CMatrix, ScanError> {
    let mut m = CMatrix::zeros(3, 3);
    for (col, axis) in [Axis::A, Axis::B, Axis::C].into_iter().enumerate() {
        let r = set.reading(axis, bin)?;
        let vy = r.v[axis_channel(set.frame, axis)];
        if vy.norm() < floor {
            return Err(ScanError::ExcitationFloor {
                f_hz: bin as f64 * set.f_res,
                axis: axis.label().to_string(),
                magnitude: vy.norm(),
                floor,
            });
        }
        for row in 0..3 {
            m[(row, col)] = r.i[row] / vy;
        }
    }
    Ok(m)
}

/// Impedance assembly from three current injections: Z = dV * dI^{-1}.
pub fn assemble_abc_current(set: &SpectrumSet, bin: i64) -> Result<CMatrix, ScanError> {
    let mut dv = CMatrix::zeros(3, 3);
    let mut di = CMatrix::zeros(3, 3);
    for (col, axis) in [Axis::A, Axis::B, Axis::C].into_iter().enumerate() {
        let r = set.reading(axis, bin)?;
        for row in 0..3 {
            dv[(row, col)] = r.v[row];
            di[(row, col)] = r.i[row];
        }
    }
    let cond = condition_estimate(&di);
    if cond > 1e8 {
        return Err(ScanError::IllConditioned {
            f_hz: bin as f64 * set.f_res,
            cond,
        });
    }
    let di_inv = inverse(&di).map_err(|_| ScanError::IllConditioned {
        f_hz: bin as f64 * set.f_res,
        cond: f64::INFINITY,
    })?;
    Ok(dv * di_inv)
}

/// dq0 assembly: column-wise division under voltage perturbation, dV * dI^{-1}
/// under current perturbation. `axes` fixes the matrix dimension and order.
pub fn assemble_dq0(
    set: &SpectrumSet,
    bin: i64,
    voltage_strategy: bool,
    floor: f64,
    axes: &[Axis],
) -> Result<CMatrix, ScanError> {
    let n = axes.len();
    if voltage_strategy {
        let mut m = CMatrix::zeros(n, n);
        for (col, &axis) in axes.iter().enumerate() {
            let r = set.reading(axis, bin)?;
            let vy = r.v[axis_channel(set.frame, axis)];
            if vy.norm() < floor {
                return Err(ScanError::ExcitationFloor {
                    f_hz: bin as f64 * set.f_res,
                    axis: axis.label().to_string(),
                    magnitude: vy.norm(),
                    floor,
                });
            }
            for (row, &meas) in axes.iter().enumerate() {
                m[(row, col)] = r.i[axis_channel(set.frame, meas)] / vy;
            }
        }
        Ok(m)
    } else {
        let mut dv = CMatrix::zeros(n, n);
        let mut di = CMatrix::zeros(n, n);
        for (col, &axis) in axes.iter().enumerate() {
            let r = set.reading(axis, bin)?;
            for (row, &meas) in axes.iter().enumerate() {
                dv[(row, col)] = r.v[axis_channel(set.frame, meas)];
                di[(row, col)] = r.i[axis_channel(set.frame, meas)];
            }
        }
        let cond = condition_estimate(&di);
        if cond > 1e8 {
            return Err(ScanError::IllConditioned {
                f_hz: bin as f64 * set.f_res,
                cond,
            });
        }
        let di_inv = inverse(&di).map_err(|_| ScanError::IllConditioned {
            f_hz: bin as f64 * set.f_res,
            cond: f64::INFINITY,
        })?;
        Ok(dv * di_inv)
    }
}

/// Sequence-frame pn block (rows/cols ordered [p, n]) plus the optional
/// zero-sequence scalar. Direct entries read the excitation bin; coupling
/// entries read the mirror bins (p-injection mirror in the n channel at the
/// signed bin k - 2 k0, n-injection mirror in the p channel at k + 2 k0).
/// At k = 2 k0 the p mirror degenerates onto DC and the coupling entries are
/// left at zero.
pub fn assemble_0pn(
    set: &SpectrumSet,
    bin: i64,
    k0: i64,
    voltage_strategy: bool,
    floor: f64,
    with_zero: bool,
) -> Result<(CMatrix, Option<Complex64>), ScanError> {
    const P: usize = 1; // channel storage order is [0, p, n]
    const N: usize = 2;
    let np_mirror = bin - 2 * k0; // signed; negative below 2 f0
    let pn_mirror = bin + 2 * k0;
    let degenerate = np_mirror == 0;

    let rp = set.reading(Axis::P, bin)?;
    let rp_mirror = set.reading(Axis::P, np_mirror)?;
    let rn = set.reading(Axis::N, bin)?;
    let rn_mirror = set.reading(Axis::N, pn_mirror)?;

    let check = |v: Complex64, axis: &str| -> Result<Complex64, ScanError> {
        if v.norm() < floor {
            Err(ScanError::ExcitationFloor {
                f_hz: bin as f64 * set.f_res,
                axis: axis.to_string(),
                magnitude: v.norm(),
                floor,
            })
        } else {
            Ok(v)
        }
    };

    let mut m = CMatrix::zeros(2, 2);
    if voltage_strategy {
        let vp = check(rp.v[P], "p")?;
        let vn = check(rn.v[N], "n")?;
        m[(0, 0)] = rp.i[P] / vp;
        m[(1, 1)] = rn.i[N] / vn;
        if !degenerate {
            m[(1, 0)] = rp_mirror.i[N] / vp;
            m[(0, 1)] = rn_mirror.i[P] / vn;
        }
    } else {
        // current strategy: assemble the coupled dV/dI blocks and invert
        let mut dv = CMatrix::zeros(2, 2);
        let mut di = CMatrix::zeros(2, 2);
        dv[(0, 0)] = rp.v[P];
        di[(0, 0)] = rp.i[P];
        dv[(1, 1)] = rn.v[N];
        di[(1, 1)] = rn.i[N];
        if !degenerate {
            dv[(1, 0)] = rp_mirror.v[N];
            di[(1, 0)] = rp_mirror.i[N];
            dv[(0, 1)] = rn_mirror.v[P];
            di[(0, 1)] = rn_mirror.i[P];
        }
        let cond = condition_estimate(&di);
        if cond > 1e8 {
            return Err(ScanError::IllConditioned {
                f_hz: bin as f64 * set.f_res,
                cond,
            });
        }
        let di_inv = inverse(&di).map_err(|_| ScanError::IllConditioned {
            f_hz: bin as f64 * set.f_res,
            cond: f64::INFINITY,
        })?;
        m = dv * di_inv;
    }

    let zero = if with_zero {
        let rz = set.reading(Axis::Zero, bin)?;
        let z = if voltage_strategy {
            let vz = check(rz.v[0], "0")?;
            rz.i[0] / vz
        } else {
            let iz = check(rz.i[0], "0")?;
            rz.v[0] / iz
        };
        Some(z)
    } else {
        None
    };
    Ok((m, zero))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn reading(v: [Complex64; 3], i: [Complex64; 3]) -> BinReading {
        BinReading { v, i }
    }

    /// Ideal per-phase resistor bank: injection on one phase answers on the
    /// same phase only.
    fn resistor_bank_set(r: f64, amp: f64, bin: i64) -> SpectrumSet {
        let mut runs = Vec::new();
        for (ch, axis) in [Axis::A, Axis::B, Axis::C].into_iter().enumerate() {
            let mut v = [c(0.0, 0.0); 3];
            let mut i = [c(0.0, 0.0); 3];
            v[ch] = c(amp, 0.0);
            i[ch] = c(amp / r, 0.0);
            let mut bins = BTreeMap::new();
            bins.insert(bin, reading(v, i));
            runs.push(InjectionRun { axis, bins });
        }
        SpectrumSet {
            frame: Frame::Abc,
            f_res: 1.0,
            injected_amplitude: amp,
            runs,
        }
    }

    #[test]
    fn voltage_assembly_of_resistor_bank() {
        let set = resistor_bank_set(4.0, 2.0, 10);
        let y = assemble_abc_voltage(&set, 10, 1e-6 * 2.0).unwrap();
        for r in 0..3 {
            for col in 0..3 {
                let want = if r == col { 0.25 } else { 0.0 };
                assert!((y[(r, col)] - c(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn current_assembly_inverts_injection_matrix() {
        // resistor bank under current injection: Z = R I
        let r = 4.0;
        let mut runs = Vec::new();
        for (ch, axis) in [Axis::A, Axis::B, Axis::C].into_iter().enumerate() {
            let mut v = [c(0.0, 0.0); 3];
            let mut i = [c(0.0, 0.0); 3];
            i[ch] = c(1.0, 0.0);
            v[ch] = c(r, 0.0);
            let mut bins = BTreeMap::new();
            bins.insert(7, reading(v, i));
            runs.push(InjectionRun { axis, bins });
        }
        let set = SpectrumSet {
            frame: Frame::Abc,
            f_res: 1.0,
            injected_amplitude: 1.0,
            runs,
        };
        let z = assemble_abc_current(&set, 7).unwrap();
        for row in 0..3 {
            assert!((z[(row, row)] - c(r, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn excitation_floor_guard_fires() {
        let mut set = resistor_bank_set(4.0, 2.0, 10);
        // zero out the a-phase excitation
        if let Some(run) = set.runs.first_mut() {
            let mut r = *run.bins.get(&10).unwrap();
            r.v[0] = c(0.0, 0.0);
            run.bins.insert(10, r);
        }
        assert!(matches!(
            assemble_abc_voltage(&set, 10, 1e-6 * 2.0),
            Err(ScanError::ExcitationFloor { .. })
        ));
    }

    #[test]
    fn ill_conditioned_current_injection_flagged() {
        // two injections proportional to each other -> singular dI
        let mut runs = Vec::new();
        for axis in [Axis::A, Axis::B, Axis::C] {
            let v = [c(1.0, 0.0); 3];
            let i = [c(1.0, 0.0); 3];
            let mut bins = BTreeMap::new();
            bins.insert(3, reading(v, i));
            runs.push(InjectionRun { axis, bins });
        }
        let set = SpectrumSet {
            frame: Frame::Abc,
            f_res: 1.0,
            injected_amplitude: 1.0,
            runs,
        };
        assert!(matches!(
            assemble_abc_current(&set, 3),
            Err(ScanError::IllConditioned { .. })
        ));
    }

    #[test]
    fn sequence_block_reads_table_cells() {
        // synthetic decoupled measurement: direct entries only
        let amp = 1.0;
        let (bin, k0) = (30i64, 50i64);
        let mk_run = |axis: Axis, direct_ch: usize, y: Complex64| {
            let mut bins = BTreeMap::new();
            let mut v = [c(0.0, 0.0); 3];
            let mut i = [c(0.0, 0.0); 3];
            v[direct_ch] = c(amp, 0.0);
            i[direct_ch] = y * amp;
            bins.insert(bin, reading(v, i));
            bins.insert(bin - 2 * k0, reading([c(0.0, 0.0); 3], [c(0.0, 0.0); 3]));
            bins.insert(bin + 2 * k0, reading([c(0.0, 0.0); 3], [c(0.0, 0.0); 3]));
            InjectionRun { axis, bins }
        };
        let set = SpectrumSet {
            frame: Frame::Seq0pn,
            f_res: 1.0,
            injected_amplitude: amp,
            runs: vec![
                mk_run(Axis::P, 1, c(0.5, -0.1)),
                mk_run(Axis::N, 2, c(0.5, 0.1)),
            ],
        };
        let (m, zero) = assemble_0pn(&set, bin, k0, true, 1e-6, false).unwrap();
        assert!(zero.is_none());
        assert!((m[(0, 0)] - c(0.5, -0.1)).norm() < 1e-14);
        assert!((m[(1, 1)] - c(0.5, 0.1)).norm() < 1e-14);
        assert!(m[(0, 1)].norm() < 1e-14 && m[(1, 0)].norm() < 1e-14);
    }

    #[test]
    fn degenerate_mirror_leaves_coupling_empty() {
        let amp = 1.0;
        let (bin, k0) = (100i64, 50i64); // f_d = 2 f0
        let mut bins_p = BTreeMap::new();
        let mut v = [c(0.0, 0.0); 3];
        let mut i = [c(0.0, 0.0); 3];
        v[1] = c(amp, 0.0);
        i[1] = c(0.3, 0.0);
        // mirror bin would be DC; give it junk that must be ignored
        bins_p.insert(bin, reading(v, i));
        bins_p.insert(0, reading([c(9.0, 0.0); 3], [c(9.0, 0.0); 3]));
        bins_p.insert(bin + 2 * k0, reading([c(0.0, 0.0); 3], [c(0.0, 0.0); 3]));
        let mut bins_n = BTreeMap::new();
        let mut vn = [c(0.0, 0.0); 3];
        let mut input = [c(0.0, 0.0); 3];
        vn[2] = c(amp, 0.0);
        input[2] = c(0.3, 0.0);
        bins_n.insert(bin, reading(vn, input));
        bins_n.insert(0, reading([c(9.0, 0.0); 3], [c(9.0, 0.0); 3]));
        bins_n.insert(bin + 2 * k0, reading([c(0.0, 0.0); 3], [c(0.0, 0.0); 3]));
        let set = SpectrumSet {
            frame: Frame::Seq0pn,
            f_res: 1.0,
            injected_amplitude: amp,
            runs: vec![
                InjectionRun {
                    axis: Axis::P,
                    bins: bins_p,
                },
                InjectionRun {
                    axis: Axis::N,
                    bins: bins_n,
                },
            ],
        };
        let (m, _) = assemble_0pn(&set, bin, k0, true, 1e-6, false).unwrap();
        assert!(m[(1, 0)].norm() == 0.0 && m[(0, 1)].norm() == 0.0);
    }
}
