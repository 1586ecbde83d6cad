//! Desk-scale electromagnetic-transient simulation: trapezoidal
//! companion-model nodal analysis over netlists of R/L/C, switches,
//! three-phase sources, synthetic dq-frame devices, and injection ports,
//! plus the two-stage steady-state/decoupled-scan choreography.

mod circuit;
mod device;
mod solver;
mod stage;

pub use circuit::{
    Circuit, Drive, Element, FundamentalSource, NodeId, PhasorComponent, SourceKind, GROUND,
};
pub use device::{DeviceModel, RationalTf};
pub use solver::{assemble, BranchRef, ProbeSpec, RunRecord, Sim, TieTerm, SWITCH_G_OFF, SWITCH_G_ON};
pub use stage::{
    capture_steady_state, classify_sides, decouple_and_rebuild, has_zero_sequence_path,
    relative_rms_delta, set_injection, synthesize_injection, Axis, InjectionSignal, InjectionSpec,
    RebuildInfo, ScanFrame, Side, SideMap, StageTiming, SteadyState, FUND_SOURCE_PREFIX,
    INJECTOR_PREFIX,
};

use thiserror::Error;

use crate::frames::FrameError;
use crate::signal::SignalError;

#[derive(Debug, Error)]
pub enum EmtError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("element {element}: value must be positive, got {value}")]
    NonPositiveValue { element: String, value: f64 },
    #[error("duplicate element name {0}")]
    DuplicateElement(String),
    #[error("unknown element {0}")]
    UnknownElement(String),
    #[error("floating subnetwork: nodes {nodes:?} have no path to ground")]
    FloatingNodes { nodes: Vec<String> },
    #[error("singular nodal matrix")]
    Singular,
    #[error("simulation diverged at t = {t:.6} s (|x| reached {max_abs:.3e})")]
    Divergence { t: f64, max_abs: f64 },
    #[error("not at steady state: period-to-period delta {delta:.3e} exceeds {tol:.1e}")]
    NotSteady { delta: f64, tol: f64 },
    #[error("circuit has no point of scanning (POS directive)")]
    NoPos,
    #[error("circuit has no fundamental three-phase source")]
    NoFundamentalSource,
    #[error("element {element} connects the point of scanning to ground; attach it one node away so the side split is unambiguous")]
    AmbiguousPosBranch { element: String },
    #[error("element {element} spans two point-of-scanning nodes")]
    PosSpanningBranch { element: String },
    #[error("scanned side has no elements")]
    EmptyScanSide,
    #[error("device entry {entry} invalid: {reason}")]
    ImproperDevice { entry: String, reason: String },
    #[error("unsupported injection: {0}")]
    UnsupportedInjection(String),
    #[error("rebuilt circuit drifts from the captured operating point: relative RMS {delta:.3e} exceeds {tol:.1e}")]
    EquilibriumDrift { delta: f64, tol: f64 },
}
