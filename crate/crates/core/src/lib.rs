//! Frequency-domain identification of impedance/admittance matrices for
//! simulated three-phase networks, plus the stability analyses that consume
//! them.
//!
//! The pipeline: build a [`emt::Circuit`], run the two-stage
//! [`scanner::scan`] (steady-state capture, decoupling, per-axis perturbation
//! runs), and feed the resulting [`scanner::FrequencyResponse`] pair into the
//! [`stability`] suite (generalized Nyquist, modal impedance, phase margins,
//! passivity). [`oracle`] holds the closed-form references used to validate
//! the scans.

pub mod emt;
pub mod frames;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod scanner;
pub mod signal;
pub mod stability;

pub use frames::{ReferenceAngle, WindowSpec};
pub use scanner::{Frame, FrequencyResponse, ResponseKind, ScanConfig, Strategy};
pub use signal::{MultiToneSpec, PrbsSpec, TimeGrid, ToneSpec, Waveform};
pub use stability::{StabilityReport, SystemPair};
