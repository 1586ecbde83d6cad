//! Frequency-grid preparation: log/list specs snapped to exact multiples of
//! the window resolution, Nyquist screening, and sequence-frame mirror
//! feasibility checks.

use serde::{Deserialize, Serialize};

use crate::emt::ScanFrame;
use crate::frames::bin_index;

use super::{ScanError, SignalFamily};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum FrequencyGridSpec {
    /// Logarithmically spaced endpoints, inclusive.
    Log { f_min: f64, f_max: f64, points: usize },
    /// Explicit list in Hz.
    List { values: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct SnappedGrid {
    pub freqs: Vec<f64>,
    pub notices: Vec<String>,
}

/// Snap requested frequencies to the nearest bin (duplicates removed), check
/// the Nyquist limit, and for sequence-frame scans verify the mirror bins are
/// measurable and collision-free for broadband signals.
pub fn snap_grid(
    spec: &FrequencyGridSpec,
    f_res: f64,
    f_sampling: f64,
    frame: ScanFrame,
    f0: f64,
    signal: SignalFamily,
) -> Result<SnappedGrid, ScanError> {
    let raw: Vec<f64> = match spec {
        FrequencyGridSpec::Log {
            f_min,
            f_max,
            points,
        } => {
            if !(f_min > &0.0) || f_max <= f_min || *points < 1 {
                return Err(ScanError::Config(
                    "log grid needs 0 < f_min < f_max and at least one point".into(),
                ));
            }
            let (l0, l1) = (f_min.log10(), f_max.log10());
            (0..*points)
                .map(|i| {
                    let t = if *points == 1 {
                        0.0
                    } else {
                        i as f64 / (*points as f64 - 1.0)
                    };
                    10f64.powf(l0 + t * (l1 - l0))
                })
                .collect()
        }
        FrequencyGridSpec::List { values } => values.clone(),
    };

    let mut notices = Vec::new();
    let mut snapped: Vec<f64> = Vec::new();
    let mut any_snapped = false;
    let mut snr_flagged = false;
    for f in raw {
        if !(f > 0.0) {
            return Err(ScanError::Config(format!("frequency {f} Hz must be > 0")));
        }
        let k = (f / f_res).round().max(1.0);
        let f_snap = k * f_res;
        if (f_snap - f).abs() > 1e-9 * f {
            any_snapped = true;
        }
        let checked = bin_index(f_snap, f_res, f_sampling)?;
        if checked.snr_warning {
            snr_flagged = true;
        }
        if !snapped.iter().any(|&g| (g - f_snap).abs() < 1e-9 * f_snap) {
            snapped.push(f_snap);
        }
    }
    snapped.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if snapped.is_empty() {
        return Err(ScanError::Config("empty frequency grid".into()));
    }
    if any_snapped {
        notices.push(format!(
            "frequencies snapped to multiples of the window resolution {f_res} Hz; {} distinct points",
            snapped.len()
        ));
    }
    if snr_flagged {
        notices.push(format!(
            "some frequencies exceed f_sampling/4 = {} Hz; signal-to-noise degrades above that limit",
            f_sampling / 4.0
        ));
    }

    if frame == ScanFrame::Seq0pn {
        let limit = f_sampling / 2.0;
        for &f in &snapped {
            let mirror = f + 2.0 * f0;
            if mirror > limit {
                return Err(ScanError::MirrorOutOfBand {
                    f_hz: f,
                    mirror_hz: mirror,
                    limit_hz: limit,
                });
            }
            if (f - 2.0 * f0).abs() < 1e-9 * f {
                notices.push(format!(
                    "{f} Hz equals twice the fundamental: its mirror lands on the DC bin; coupling entries omitted there"
                ));
            }
        }
        if signal != SignalFamily::SingleTone {
            // broadband sequence scans: excitation bins must not collide
            // with any mirror bin of another excited frequency
            for &f in &snapped {
                for &g in &snapped {
                    for mirror in [2.0 * f0 - g, g + 2.0 * f0, g - 2.0 * f0] {
                        if (f - mirror).abs() < 1e-9 * f.max(1.0) {
                            return Err(ScanError::MirrorCollision { f_hz: f, other_hz: g });
                        }
                    }
                }
            }
        }
    }

    Ok(SnappedGrid {
        freqs: snapped,
        notices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_snaps_and_dedupes() {
        let spec = FrequencyGridSpec::Log {
            f_min: 1.0,
            f_max: 600.0,
            points: 50,
        };
        let g = snap_grid(&spec, 1.0, 1e5, ScanFrame::Abc, 50.0, SignalFamily::SingleTone).unwrap();
        assert!(g.freqs.len() < 50 && g.freqs.len() > 30);
        assert!(g.freqs.windows(2).all(|w| w[0] < w[1]));
        for f in &g.freqs {
            assert!((f - f.round()).abs() < 1e-9, "{f} not on 1 Hz grid");
        }
        assert_eq!(*g.freqs.first().unwrap(), 1.0);
        assert_eq!(*g.freqs.last().unwrap(), 600.0);
    }

    #[test]
    fn nyquist_and_mirror_screening() {
        let spec = FrequencyGridSpec::List {
            values: vec![60_000.0],
        };
        assert!(snap_grid(&spec, 1.0, 1e5, ScanFrame::Abc, 50.0, SignalFamily::SingleTone).is_err());

        // mirror above Nyquist for a sequence scan
        let spec = FrequencyGridSpec::List {
            values: vec![49_950.0],
        };
        let err = snap_grid(
            &spec,
            1.0,
            1e5,
            ScanFrame::Seq0pn,
            50.0,
            SignalFamily::SingleTone,
        )
        .unwrap_err();
        assert!(matches!(err, ScanError::MirrorOutOfBand { .. }));
    }

    #[test]
    fn broadband_sequence_collisions_detected() {
        // 30 Hz and 130 Hz: 130 = 30 + 2*50 collides
        let spec = FrequencyGridSpec::List {
            values: vec![30.0, 130.0],
        };
        let err = snap_grid(
            &spec,
            1.0,
            1e5,
            ScanFrame::Seq0pn,
            50.0,
            SignalFamily::MultiTone,
        )
        .unwrap_err();
        assert!(matches!(err, ScanError::MirrorCollision { .. }));
        // same list is fine single-tone (separate runs)
        assert!(snap_grid(
            &spec,
            1.0,
            1e5,
            ScanFrame::Seq0pn,
            50.0,
            SignalFamily::SingleTone
        )
        .is_ok());
    }
}
