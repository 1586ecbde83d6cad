//! Netlist-level circuit model: named nodes, lumped branches, three-phase
//! sources, synthetic devices, and the Point of Scanning designation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::frames::{fortescue_inverse_phasors, ReferenceAngle, SequencePhasorSet};

use super::device::DeviceModel;
use super::EmtError;

/// Node handle; index 0 is always ground ("0").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

pub const GROUND: NodeId = NodeId(0);

/// One cosine component of a source value; `freq_hz = 0` means a constant
/// `amplitude * cos(phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasorComponent {
    pub amplitude: f64,
    pub freq_hz: f64,
    pub phase_rad: f64,
}

impl PhasorComponent {
    pub fn value_at(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.freq_hz * t + self.phase_rad).cos()
    }

    pub fn phasor(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase_rad)
    }
}

/// Time-domain value of an ideal source.
#[derive(Debug, Clone)]
pub enum Drive {
    /// Sum of cosine components; supports exact phasor initialization.
    Phasors(Vec<PhasorComponent>),
    /// Arbitrary sampled waveform, one value per simulation step.
    Samples(Arc<Vec<f64>>),
}

impl Drive {
    pub fn zero() -> Self {
        Drive::Phasors(Vec::new())
    }

    pub fn single(amplitude: f64, freq_hz: f64, phase_rad: f64) -> Self {
        Drive::Phasors(vec![PhasorComponent {
            amplitude,
            freq_hz,
            phase_rad,
        }])
    }

    pub fn value(&self, step: usize, dt: f64) -> f64 {
        match self {
            Drive::Phasors(comps) => {
                let t = step as f64 * dt;
                comps.iter().map(|c| c.value_at(t)).sum()
            }
            Drive::Samples(s) => s.get(step).copied().unwrap_or(0.0),
        }
    }
}

/// Fundamental three-phase source description.
#[derive(Debug, Clone, PartialEq)]
pub enum FundamentalSource {
    /// Peak value with per-phase offsets on the standard a-b-c pattern.
    Balanced {
        peak: f64,
        f0: f64,
        phase_a: f64,
        phase_b: f64,
        phase_c: f64,
    },
    /// Sequence-domain phasor set synthesized through the inverse
    /// symmetrical-component transform.
    Unbalanced { f0: f64, set: SequencePhasorSet },
    /// Constant dq0 values rotated out with the given reference angle.
    Dq0 {
        d: f64,
        q: f64,
        zero: f64,
        angle: ReferenceAngle,
    },
}

impl FundamentalSource {
    /// Per-phase drives (a, b, c).
    pub fn phase_drives(&self) -> [Drive; 3] {
        match self {
            FundamentalSource::Balanced {
                peak,
                f0,
                phase_a,
                phase_b,
                phase_c,
            } => [
                Drive::single(*peak, *f0, *phase_a),
                Drive::single(*peak, *f0, *phase_b - 2.0 * PI / 3.0),
                Drive::single(*peak, *f0, *phase_c + 2.0 * PI / 3.0),
            ],
            FundamentalSource::Unbalanced { f0, set } => {
                let abc = fortescue_inverse_phasors(set);
                let mk = |p: Complex64| Drive::single(p.norm(), *f0, p.arg());
                [mk(abc[0]), mk(abc[1]), mk(abc[2])]
            }
            FundamentalSource::Dq0 { d, q, zero, angle } => {
                // d cos(th) - q sin(th) + zero = M cos(th + phi) + zero
                let m = (d * d + q * q).sqrt();
                let phi = q.atan2(*d);
                let mk = |delta: f64| {
                    let mut comps = Vec::new();
                    if m != 0.0 {
                        comps.push(PhasorComponent {
                            amplitude: m,
                            freq_hz: angle.f0,
                            phase_rad: angle.theta0 - delta + phi,
                        });
                    }
                    if *zero != 0.0 {
                        comps.push(PhasorComponent {
                            amplitude: *zero,
                            freq_hz: 0.0,
                            phase_rad: 0.0,
                        });
                    }
                    Drive::Phasors(comps)
                };
                [mk(0.0), mk(2.0 * PI / 3.0), mk(-2.0 * PI / 3.0)]
            }
        }
    }

    pub fn f0(&self) -> f64 {
        match self {
            FundamentalSource::Balanced { f0, .. } => *f0,
            FundamentalSource::Unbalanced { f0, .. } => *f0,
            FundamentalSource::Dq0 { angle, .. } => angle.f0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Voltage,
    Current,
}

/// Circuit element. Three-phase sources expand to per-phase ideal sources at
/// assembly; `PhaseSource` is the already-expanded form used by the scan
/// rebuild stage for ideal replacement sources and injection ports.
#[derive(Debug, Clone)]
pub enum Element {
    Resistor {
        name: String,
        a: NodeId,
        b: NodeId,
        ohms: f64,
    },
    Inductor {
        name: String,
        a: NodeId,
        b: NodeId,
        henries: f64,
        ic_amps: f64,
    },
    Capacitor {
        name: String,
        a: NodeId,
        b: NodeId,
        farads: f64,
        ic_volts: f64,
    },
    Switch {
        name: String,
        a: NodeId,
        b: NodeId,
        closed: bool,
    },
    SourceTriple {
        name: String,
        kind: SourceKind,
        nodes: [NodeId; 3],
        source: FundamentalSource,
    },
    PhaseSource {
        name: String,
        kind: SourceKind,
        a: NodeId,
        b: NodeId,
        drive: Drive,
    },
    Device {
        name: String,
        nodes: [NodeId; 3],
        model: DeviceModel,
    },
}

impl Element {
    pub fn name(&self) -> &str {
        match self {
            Element::Resistor { name, .. }
            | Element::Inductor { name, .. }
            | Element::Capacitor { name, .. }
            | Element::Switch { name, .. }
            | Element::SourceTriple { name, .. }
            | Element::PhaseSource { name, .. }
            | Element::Device { name, .. } => name,
        }
    }

    /// Nodes this element touches.
    pub fn nodes(&self) -> Vec<NodeId> {
        match self {
            Element::Resistor { a, b, .. }
            | Element::Inductor { a, b, .. }
            | Element::Capacitor { a, b, .. }
            | Element::Switch { a, b, .. }
            | Element::PhaseSource { a, b, .. } => vec![*a, *b],
            Element::SourceTriple { nodes, .. } | Element::Device { nodes, .. } => nodes.to_vec(),
        }
    }

    pub fn is_source(&self) -> bool {
        matches!(
            self,
            Element::SourceTriple { .. } | Element::PhaseSource { .. }
        )
    }
}

/// Node/branch netlist with an optional Point of Scanning.
#[derive(Debug, Clone, Default)]
pub struct Circuit {
    node_names: Vec<String>,
    pub elements: Vec<Element>,
    pub pos: Option<[NodeId; 3]>,
}

impl Circuit {
    pub fn new() -> Self {
        Self {
            node_names: vec!["0".to_string()],
            elements: Vec::new(),
            pos: None,
        }
    }

    /// Intern a node name; "0" (or "gnd") is ground.
    pub fn node(&mut self, name: &str) -> NodeId {
        let canonical = if name.eq_ignore_ascii_case("gnd") {
            "0"
        } else {
            name
        };
        if let Some(idx) = self.node_names.iter().position(|n| n == canonical) {
            NodeId(idx)
        } else {
            self.node_names.push(canonical.to_string());
            NodeId(self.node_names.len() - 1)
        }
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.node_names[id.0]
    }

    pub fn n_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn element_index(&self, name: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.name() == name)
    }

    pub fn add(&mut self, e: Element) -> Result<usize, EmtError> {
        if self.element_index(e.name()).is_some() {
            return Err(EmtError::DuplicateElement(e.name().to_string()));
        }
        match &e {
            Element::Resistor { name, ohms, .. } if !(*ohms > 0.0) => {
                return Err(EmtError::NonPositiveValue {
                    element: name.clone(),
                    value: *ohms,
                })
            }
            Element::Inductor { name, henries, .. } if !(*henries > 0.0) => {
                return Err(EmtError::NonPositiveValue {
                    element: name.clone(),
                    value: *henries,
                })
            }
            Element::Capacitor { name, farads, .. } if !(*farads > 0.0) => {
                return Err(EmtError::NonPositiveValue {
                    element: name.clone(),
                    value: *farads,
                })
            }
            Element::Device { model, .. } => model.validate()?,
            _ => {}
        }
        self.elements.push(e);
        Ok(self.elements.len() - 1)
    }

    /// Fundamental frequency of the first three-phase source.
    pub fn fundamental_f0(&self) -> Option<f64> {
        self.elements.iter().find_map(|e| match e {
            Element::SourceTriple { source, .. } => Some(source.f0()),
            _ => None,
        })
    }

    pub fn has_devices(&self) -> bool {
        self.elements
            .iter()
            .any(|e| matches!(e, Element::Device { .. }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn balanced_source_phase_pattern() {
        let src = FundamentalSource::Balanced {
            peak: 100.0,
            f0: 50.0,
            phase_a: 0.0,
            phase_b: 0.0,
            phase_c: 0.0,
        };
        let drives = src.phase_drives();
        // at t = 0: a = peak, b = peak cos(-120deg), c = peak cos(+120deg)
        assert_relative_eq!(drives[0].value(0, 1e-5), 100.0);
        assert_relative_eq!(drives[1].value(0, 1e-5), -50.0, epsilon = 1e-9);
        assert_relative_eq!(drives[2].value(0, 1e-5), -50.0, epsilon = 1e-9);
        // quarter period: b should lag a
        let quarter = (0.005 / 1e-5) as usize;
        assert!(drives[1].value(quarter, 1e-5) > drives[2].value(quarter, 1e-5));
    }

    #[test]
    fn dq0_source_aligned_with_angle() {
        let src = FundamentalSource::Dq0 {
            d: 80.0,
            q: 0.0,
            zero: 0.0,
            angle: ReferenceAngle {
                f0: 50.0,
                theta0: 0.0,
            },
        };
        let drives = src.phase_drives();
        assert_relative_eq!(drives[0].value(0, 1e-5), 80.0, epsilon = 1e-9);
        // matches the balanced pattern at a later time as well
        let bal = FundamentalSource::Balanced {
            peak: 80.0,
            f0: 50.0,
            phase_a: 0.0,
            phase_b: 0.0,
            phase_c: 0.0,
        };
        let bd = bal.phase_drives();
        for phase in 0..3 {
            for step in [0usize, 137, 731] {
                assert_relative_eq!(
                    drives[phase].value(step, 1e-5),
                    bd[phase].value(step, 1e-5),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn node_interning_and_duplicates() {
        let mut c = Circuit::new();
        let n1 = c.node("n1");
        assert_eq!(c.node("n1"), n1);
        assert_eq!(c.node("0"), GROUND);
        assert_eq!(c.node("GND"), GROUND);
        c.add(Element::Resistor {
            name: "r1".into(),
            a: n1,
            b: GROUND,
            ohms: 2.0,
        })
        .unwrap();
        let dup = c.add(Element::Resistor {
            name: "r1".into(),
            a: n1,
            b: GROUND,
            ohms: 3.0,
        });
        assert!(matches!(dup, Err(EmtError::DuplicateElement(_))));
        let neg = c.add(Element::Resistor {
            name: "r2".into(),
            a: n1,
            b: GROUND,
            ohms: -5.0,
        });
        assert!(matches!(neg, Err(EmtError::NonPositiveValue { .. })));
    }
}
