//! Two-stage scan choreography: capture the operating point at the Point of
//! Scanning, split the network there, rebuild the removed side as an ideal
//! fundamental source plus injection ports, and synthesize frame-specific
//! perturbation drives.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::frames::{ReferenceAngle, WindowSpec};
use crate::signal::{prbs_waveform, MultiToneSpec, PrbsSpec, TimeGrid, ToneSpec, Waveform};

use super::circuit::{Circuit, Drive, Element, NodeId, PhasorComponent, SourceKind, GROUND};
use super::solver::{assemble, ProbeSpec, TieTerm};
use super::EmtError;

pub const FUND_SOURCE_PREFIX: &str = "__fund_";
pub const INJECTOR_PREFIX: &str = "__inj_";

/// Which subsystem a scan identifies, named relative to the fundamental
/// source: `Source` is the side holding the (first) three-phase source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Load,
}

/// Reference frame a scan works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanFrame {
    #[serde(rename = "abc")]
    Abc,
    #[serde(rename = "0pn")]
    Seq0pn,
    #[serde(rename = "dq0")]
    Dq0,
}

/// Injection axis; must belong to the scan frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    A,
    B,
    C,
    P,
    N,
    D,
    Q,
    #[serde(rename = "0")]
    Zero,
}

impl Axis {
    pub fn label(&self) -> &'static str {
        match self {
            Axis::A => "a",
            Axis::B => "b",
            Axis::C => "c",
            Axis::P => "p",
            Axis::N => "n",
            Axis::D => "d",
            Axis::Q => "q",
            Axis::Zero => "0",
        }
    }

    pub fn belongs_to(&self, frame: ScanFrame) -> bool {
        match frame {
            ScanFrame::Abc => matches!(self, Axis::A | Axis::B | Axis::C),
            ScanFrame::Seq0pn => matches!(self, Axis::P | Axis::N | Axis::Zero),
            ScanFrame::Dq0 => matches!(self, Axis::D | Axis::Q | Axis::Zero),
        }
    }
}

/// Perturbation signal attached to an injection.
#[derive(Debug, Clone)]
pub enum InjectionSignal {
    Tone(ToneSpec),
    MultiTone(MultiToneSpec),
    Prbs { spec: PrbsSpec, seed: u32 },
}

#[derive(Debug, Clone)]
pub struct InjectionSpec {
    pub frame: ScanFrame,
    pub axis: Axis,
    pub signal: InjectionSignal,
}

/// Per-element side assignment relative to the Point of Scanning.
#[derive(Debug, Clone)]
pub struct SideMap {
    pub tags: Vec<Side>,
}

/// Split the netlist at the PoS: connectivity is computed with the PoS nodes
/// and ground removed, and each component inherits `Source` when it anchors a
/// fundamental source. Elements living entirely on PoS/ground nodes are
/// sources (source side) or devices (load side); passive shunts there are
/// rejected as ambiguous.
pub fn classify_sides(c: &Circuit) -> Result<SideMap, EmtError> {
    let pos = c.pos.ok_or(EmtError::NoPos)?;
    let is_pos = |n: NodeId| pos.contains(&n);
    let n = c.n_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    // anchors: element nodes that are neither PoS nor ground
    let anchors: Vec<Vec<usize>> = c
        .elements
        .iter()
        .map(|e| {
            e.nodes()
                .into_iter()
                .filter(|nd| !is_pos(*nd) && *nd != GROUND)
                .map(|nd| nd.0)
                .collect()
        })
        .collect();
    for anchor in &anchors {
        for w in anchor.windows(2) {
            let (ra, rb) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }
    // components that anchor a fundamental source
    let mut source_roots = Vec::new();
    for (e, anchor) in c.elements.iter().zip(&anchors) {
        if e.is_source() {
            for &a in anchor {
                let r = find(&mut parent, a);
                if !source_roots.contains(&r) {
                    source_roots.push(r);
                }
            }
        }
    }
    let mut tags = Vec::with_capacity(c.elements.len());
    for (e, anchor) in c.elements.iter().zip(&anchors) {
        if anchor.is_empty() {
            let tag = match e {
                Element::SourceTriple { .. } | Element::PhaseSource { .. } => Side::Source,
                Element::Device { .. } => Side::Load,
                other => {
                    let nodes = other.nodes();
                    if nodes.iter().all(|nd| is_pos(*nd)) {
                        return Err(EmtError::PosSpanningBranch {
                            element: other.name().to_string(),
                        });
                    }
                    return Err(EmtError::AmbiguousPosBranch {
                        element: other.name().to_string(),
                    });
                }
            };
            tags.push(tag);
        } else {
            let root = find(&mut parent, anchor[0]);
            tags.push(if source_roots.contains(&root) {
                Side::Source
            } else {
                Side::Load
            });
        }
    }
    if !tags.contains(&Side::Source) {
        return Err(EmtError::NoFundamentalSource);
    }
    Ok(SideMap { tags })
}

/// True when the given side offers a common-mode (zero-sequence) current path
/// from the PoS to ground: reachability over R/L/C, closed-or-open switches,
/// and ideal voltage sources. Devices and current sources do not conduct
/// zero-sequence current.
pub fn has_zero_sequence_path(c: &Circuit, map: &SideMap, side: Side) -> bool {
    let Some(pos) = c.pos else { return false };
    let n = c.n_nodes();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, tag) in c.elements.iter().zip(&map.tags) {
        if *tag != side {
            continue;
        }
        let conducts = match e {
            Element::Resistor { .. }
            | Element::Inductor { .. }
            | Element::Capacitor { .. }
            | Element::Switch { .. } => true,
            Element::PhaseSource { kind, .. } | Element::SourceTriple { kind, .. } => {
                *kind == SourceKind::Voltage
            }
            Element::Device { .. } => false,
        };
        if !conducts {
            continue;
        }
        match e {
            Element::SourceTriple { nodes, .. } => {
                for nd in nodes {
                    adj[nd.0].push(GROUND.0);
                    adj[GROUND.0].push(nd.0);
                }
            }
            _ => {
                let nodes = e.nodes();
                for w in nodes.windows(2) {
                    adj[w[0].0].push(w[1].0);
                    adj[w[1].0].push(w[0].0);
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = pos.iter().map(|p| p.0).collect();
    for s in &stack {
        seen[*s] = true;
    }
    while let Some(v) = stack.pop() {
        if v == GROUND.0 {
            return true;
        }
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    false
}

/// Durations of one simulation stage: settle, then a measurement window of
/// `window` seconds, giving a spectral resolution of 1/window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTiming {
    pub dt: f64,
    pub settle: f64,
    pub window: f64,
}

impl StageTiming {
    pub fn n_steps(&self) -> usize {
        ((self.settle + self.window) / self.dt).round() as usize
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            t_start: self.settle,
            t_end: self.settle + self.window,
        }
    }

    pub fn f_res(&self) -> f64 {
        1.0 / self.window
    }
}

/// Captured operating point: fundamental phasors, the reference angle, and
/// the windowed PoS records used for the equilibrium-preservation check.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub f0: f64,
    /// Angle of the positive-sequence PoS voltage phasor.
    pub theta0: f64,
    pub v_phasors: [Complex64; 3],
    /// Tie-current phasors, flowing into the scanned side.
    pub i_phasors: [Complex64; 3],
    pub v_window: [Waveform; 3],
    pub i_window: [Waveform; 3],
    /// Worst period-to-period relative RMS delta observed in the window.
    pub convergence_delta: f64,
    pub nominal_v: f64,
    pub nominal_i: f64,
}

impl SteadyState {
    pub fn reference_angle(&self) -> ReferenceAngle {
        ReferenceAngle {
            f0: self.f0,
            theta0: self.theta0,
        }
    }
}

/// Tie-current probe terms: scanned-side branch currents leaving each PoS
/// node. Summed per phase they give the current into the scanned side.
fn tie_terms_for_side(c: &Circuit, map: &SideMap, side: Side) -> Result<Vec<Vec<TieTerm>>, EmtError> {
    let pos = c.pos.ok_or(EmtError::NoPos)?;
    let mut ties: Vec<Vec<TieTerm>> = vec![Vec::new(); 3];
    for (e, tag) in c.elements.iter().zip(&map.tags) {
        if *tag != side {
            continue;
        }
        match e {
            Element::Resistor { name, a, b, .. }
            | Element::Inductor { name, a, b, .. }
            | Element::Capacitor { name, a, b, .. }
            | Element::Switch { name, a, b, .. }
            | Element::PhaseSource { name, a, b, .. } => {
                for (ph, p) in pos.iter().enumerate() {
                    if a == p {
                        ties[ph].push(TieTerm {
                            element: name.clone(),
                            phase: 0,
                            sign: 1.0,
                        });
                    }
                    if b == p {
                        ties[ph].push(TieTerm {
                            element: name.clone(),
                            phase: 0,
                            sign: -1.0,
                        });
                    }
                }
            }
            Element::SourceTriple { name, nodes, .. } => {
                for (sph, nd) in nodes.iter().enumerate() {
                    for (ph, p) in pos.iter().enumerate() {
                        if nd == p {
                            // per-phase source branch current flows node -> ground
                            ties[ph].push(TieTerm {
                                element: name.clone(),
                                phase: sph,
                                sign: 1.0,
                            });
                        }
                    }
                }
            }
            Element::Device { name, nodes, .. } => {
                for (dph, nd) in nodes.iter().enumerate() {
                    for (ph, p) in pos.iter().enumerate() {
                        if nd == p {
                            ties[ph].push(TieTerm {
                                element: name.clone(),
                                phase: dph,
                                sign: 1.0,
                            });
                        }
                    }
                }
            }
        }
    }
    if ties.iter().all(|t| t.is_empty()) {
        return Err(EmtError::EmptyScanSide);
    }
    Ok(ties)
}

/// Single-bin DFT of the fundamental over the largest whole number of
/// periods inside the window, phase-referenced to absolute t = 0.
fn fundamental_phasor(samples: &[f64], dt: f64, start_idx: usize, f0: f64) -> Complex64 {
    let per_samples = (1.0 / (f0 * dt)).round() as usize;
    let periods = (samples.len() / per_samples).max(1);
    let k_total = (periods * per_samples).min(samples.len());
    let w0 = 2.0 * PI * f0;
    let mut acc = Complex64::default();
    for (k, &v) in samples.iter().take(k_total).enumerate() {
        let t = (start_idx + k) as f64 * dt;
        acc += v * Complex64::from_polar(1.0, -w0 * t);
    }
    acc * 2.0 / k_total as f64
}

/// Worst period-to-period relative RMS delta over the final two fundamental
/// periods of each channel.
fn convergence_delta(channels: &[&[f64]], dt: f64, f0: f64, scale: f64) -> f64 {
    let per = (1.0 / (f0 * dt)).round() as usize;
    let mut worst = 0.0f64;
    for ch in channels {
        if ch.len() < 2 * per {
            continue;
        }
        let tail = &ch[ch.len() - per..];
        let prev = &ch[ch.len() - 2 * per..ch.len() - per];
        let ms: f64 = tail
            .iter()
            .zip(prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / per as f64;
        worst = worst.max(ms.sqrt() / scale.max(1e-12));
    }
    worst
}

/// Stage 1: run the intact circuit to steady state and record the operating
/// point at the PoS for the side about to be scanned.
pub fn capture_steady_state(
    c: &Circuit,
    scan_side: Side,
    timing: &StageTiming,
    convergence_tol: f64,
) -> Result<SteadyState, EmtError> {
    let pos = c.pos.ok_or(EmtError::NoPos)?;
    let f0 = c.fundamental_f0().ok_or(EmtError::NoFundamentalSource)?;
    let map = classify_sides(c)?;
    let ties = tie_terms_for_side(c, &map, scan_side)?;
    let mut sim = assemble(c, timing.dt)?;
    sim.init_from_phasors()?;
    let probes = ProbeSpec {
        nodes: pos.to_vec(),
        branches: vec![],
        ties,
    };
    let rec = sim.run(timing.n_steps(), &probes)?;
    let (start, end) = timing
        .window_spec()
        .sample_range(timing.dt, rec.node_v[0].len())?;
    let vw: Vec<Vec<f64>> = rec.node_v.iter().map(|ch| ch[start..end].to_vec()).collect();
    let iw: Vec<Vec<f64>> = rec.tie_i.iter().map(|ch| ch[start..end].to_vec()).collect();
    let v_phasors = [
        fundamental_phasor(&vw[0], timing.dt, start, f0),
        fundamental_phasor(&vw[1], timing.dt, start, f0),
        fundamental_phasor(&vw[2], timing.dt, start, f0),
    ];
    let i_phasors = [
        fundamental_phasor(&iw[0], timing.dt, start, f0),
        fundamental_phasor(&iw[1], timing.dt, start, f0),
        fundamental_phasor(&iw[2], timing.dt, start, f0),
    ];
    let nominal_v = v_phasors.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let nominal_i = i_phasors.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let v_refs: Vec<&[f64]> = vw.iter().map(|v| v.as_slice()).collect();
    let i_refs: Vec<&[f64]> = iw.iter().map(|v| v.as_slice()).collect();
    let delta_v = convergence_delta(&v_refs, timing.dt, f0, nominal_v);
    let delta_i = convergence_delta(&i_refs, timing.dt, f0, nominal_i);
    let delta = delta_v.max(delta_i);
    if delta > convergence_tol {
        return Err(EmtError::NotSteady {
            delta,
            tol: convergence_tol,
        });
    }
    // positive-sequence voltage phasor sets the scan reference angle
    let pos_seq = (v_phasors[0]
        + Complex64::from_polar(1.0, 2.0 * PI / 3.0) * v_phasors[1]
        + Complex64::from_polar(1.0, -2.0 * PI / 3.0) * v_phasors[2])
        / 3.0;
    let mk = |chs: Vec<Vec<f64>>| -> [Waveform; 3] {
        let mut it = chs.into_iter().map(|samples| Waveform {
            dt: timing.dt,
            samples,
        });
        [
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
        ]
    };
    Ok(SteadyState {
        f0,
        theta0: pos_seq.arg(),
        v_phasors,
        i_phasors,
        v_window: mk(vw),
        i_window: mk(iw),
        convergence_delta: delta,
        nominal_v,
        nominal_i,
    })
}

/// Everything the scanner needs to drive a rebuilt circuit.
#[derive(Debug, Clone)]
pub struct RebuildInfo {
    pub injector_names: [String; 3],
    pub fund_names: [String; 3],
    pub tie_terms: Vec<Vec<TieTerm>>,
    pub pos: [NodeId; 3],
    pub strategy_is_voltage: bool,
}

/// Stage 2 construction: keep the scanned side, replace the other side with
/// ideal per-phase fundamental sources replicating the captured phasors, and
/// insert zero-valued injection ports (series voltage or shunt current).
pub fn decouple_and_rebuild(
    c: &Circuit,
    ss: &SteadyState,
    scan_side: Side,
    series_voltage: bool,
) -> Result<(Circuit, RebuildInfo), EmtError> {
    let pos_old = c.pos.ok_or(EmtError::NoPos)?;
    let map = classify_sides(c)?;
    if !map
        .tags
        .iter()
        .any(|t| *t == scan_side)
    {
        return Err(EmtError::EmptyScanSide);
    }
    let mut out = Circuit::new();
    // preserve node names for kept elements
    let mut remap = vec![None::<NodeId>; c.n_nodes()];
    let map_node = |out: &mut Circuit, remap: &mut Vec<Option<NodeId>>, old: NodeId| -> NodeId {
        if let Some(n) = remap[old.0] {
            n
        } else {
            let n = out.node(c.node_name(old));
            remap[old.0] = Some(n);
            n
        }
    };
    let pos_new = [
        map_node(&mut out, &mut remap, pos_old[0]),
        map_node(&mut out, &mut remap, pos_old[1]),
        map_node(&mut out, &mut remap, pos_old[2]),
    ];
    out.pos = Some(pos_new);
    for (e, tag) in c.elements.iter().zip(&map.tags) {
        if *tag != scan_side {
            continue;
        }
        let mut e = e.clone();
        match &mut e {
            Element::Resistor { a, b, .. }
            | Element::Inductor { a, b, .. }
            | Element::Capacitor { a, b, .. }
            | Element::Switch { a, b, .. }
            | Element::PhaseSource { a, b, .. } => {
                *a = map_node(&mut out, &mut remap, *a);
                *b = map_node(&mut out, &mut remap, *b);
            }
            Element::SourceTriple { nodes, .. } | Element::Device { nodes, .. } => {
                for nd in nodes.iter_mut() {
                    *nd = map_node(&mut out, &mut remap, *nd);
                }
            }
        }
        out.add(e)?;
    }

    let mut injector_names = [String::new(), String::new(), String::new()];
    let mut fund_names = [String::new(), String::new(), String::new()];
    for ph in 0..3 {
        let label = ["a", "b", "c"][ph];
        let fund = format!("{FUND_SOURCE_PREFIX}{label}");
        let inj = format!("{INJECTOR_PREFIX}{label}");
        if series_voltage {
            let src_node = out.node(&format!("__src_{label}"));
            let vp = ss.v_phasors[ph];
            out.add(Element::PhaseSource {
                name: fund.clone(),
                kind: SourceKind::Voltage,
                a: src_node,
                b: GROUND,
                drive: Drive::single(vp.norm(), ss.f0, vp.arg()),
            })?;
            out.add(Element::PhaseSource {
                name: inj.clone(),
                kind: SourceKind::Voltage,
                a: pos_new[ph],
                b: src_node,
                drive: Drive::zero(),
            })?;
        } else {
            let ip = ss.i_phasors[ph];
            out.add(Element::PhaseSource {
                name: fund.clone(),
                kind: SourceKind::Current,
                a: GROUND,
                b: pos_new[ph],
                drive: Drive::single(ip.norm(), ss.f0, ip.arg()),
            })?;
            out.add(Element::PhaseSource {
                name: inj.clone(),
                kind: SourceKind::Current,
                a: GROUND,
                b: pos_new[ph],
                drive: Drive::zero(),
            })?;
        }
        fund_names[ph] = fund;
        injector_names[ph] = inj;
    }

    // tie probes: scanned-side branches at the (remapped) PoS
    let mut sub_map_tags = Vec::new();
    for (e, tag) in c.elements.iter().zip(&map.tags) {
        let _ = e;
        if *tag == scan_side {
            sub_map_tags.push(scan_side);
        }
    }
    let sub_map = SideMap { tags: sub_map_tags };
    // the rebuilt circuit's leading elements are exactly the kept ones
    let mut kept = Circuit::new();
    kept.pos = Some(pos_new);
    let tie_terms = {
        // reuse tie_terms_for_side on the rebuilt circuit, ignoring the
        // ideal sources and ports added above
        let mut probe_circuit = out.clone();
        probe_circuit.elements.truncate(sub_map.tags.len());
        tie_terms_for_side(&probe_circuit, &sub_map, scan_side)?
    };
    Ok((
        out,
        RebuildInfo {
            injector_names,
            fund_names,
            tie_terms,
            pos: pos_new,
            strategy_is_voltage: series_voltage,
        },
    ))
}

/// Install perturbation drives on the three injection ports.
pub fn set_injection(c: &mut Circuit, info: &RebuildInfo, drives: [Drive; 3]) {
    for (name, drive) in info.injector_names.iter().zip(drives) {
        if let Some(idx) = c.element_index(name) {
            if let Element::PhaseSource { drive: d, .. } = &mut c.elements[idx] {
                *d = drive;
            }
        }
    }
}

fn normalize_comp(amplitude: f64, freq_hz: f64, phase_rad: f64) -> PhasorComponent {
    if freq_hz < 0.0 {
        PhasorComponent {
            amplitude,
            freq_hz: -freq_hz,
            phase_rad: -phase_rad,
        }
    } else {
        PhasorComponent {
            amplitude,
            freq_hz,
            phase_rad,
        }
    }
}

const PHASE_DELTAS: [f64; 3] = [0.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0];

fn tone_comps_for_axis(
    frame: ScanFrame,
    axis: Axis,
    amp: f64,
    f_d: f64,
    phase: f64,
    theta: &ReferenceAngle,
) -> [Vec<PhasorComponent>; 3] {
    let mut out: [Vec<PhasorComponent>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    match frame {
        ScanFrame::Abc => {
            let ph = match axis {
                Axis::A => 0,
                Axis::B => 1,
                _ => 2,
            };
            out[ph].push(normalize_comp(amp, f_d, phase));
        }
        ScanFrame::Seq0pn => {
            for (x, delta) in PHASE_DELTAS.iter().enumerate() {
                let shift = match axis {
                    Axis::P => -delta,
                    Axis::N => *delta,
                    _ => 0.0,
                };
                out[x].push(normalize_comp(amp, f_d, phase + shift));
            }
        }
        ScanFrame::Dq0 => {
            if axis == Axis::Zero {
                for item in out.iter_mut() {
                    item.push(normalize_comp(amp, f_d, phase));
                }
            } else {
                // modulation: s(t) on the d (or q) axis splits into
                // components at f0 +/- f_d in the stationary frame
                let q_shift = if axis == Axis::Q { PI / 2.0 } else { 0.0 };
                for (x, delta) in PHASE_DELTAS.iter().enumerate() {
                    let base = theta.theta0 - delta + q_shift;
                    out[x].push(normalize_comp(
                        amp / 2.0,
                        theta.f0 + f_d,
                        base + phase,
                    ));
                    out[x].push(normalize_comp(
                        amp / 2.0,
                        theta.f0 - f_d,
                        base - phase,
                    ));
                }
            }
        }
    }
    out
}

/// Build the three per-phase drives realizing a frame-specific perturbation.
/// Sequence-frame axes synthesize rotating sets through the inverse
/// symmetrical-component columns; dq axes rotate the scalar signal out with
/// the running reference angle (components at f0 +/- f_d).
pub fn synthesize_injection(
    spec: &InjectionSpec,
    theta: &ReferenceAngle,
    n_steps: usize,
    dt: f64,
) -> Result<[Drive; 3], EmtError> {
    if !spec.axis.belongs_to(spec.frame) {
        return Err(EmtError::UnsupportedInjection(format!(
            "axis {} not in scan frame",
            spec.axis.label()
        )));
    }
    match &spec.signal {
        InjectionSignal::Tone(t) => {
            let comps = tone_comps_for_axis(
                spec.frame,
                spec.axis,
                t.amplitude,
                t.frequency_hz,
                t.phase_rad,
                theta,
            );
            Ok(comps.map(Drive::Phasors))
        }
        InjectionSignal::MultiTone(m) => {
            let mut all: [Vec<PhasorComponent>; 3] = [Vec::new(), Vec::new(), Vec::new()];
            for tone in &m.components {
                let comps = tone_comps_for_axis(
                    spec.frame,
                    spec.axis,
                    tone.amplitude,
                    tone.frequency_hz,
                    tone.phase_rad,
                    theta,
                );
                for (dst, src) in all.iter_mut().zip(comps) {
                    dst.extend(src);
                }
            }
            Ok(all.map(Drive::Phasors))
        }
        InjectionSignal::Prbs { spec: prbs, seed } => {
            let grid = TimeGrid::new(dt, n_steps + 1)?;
            let w = prbs_waveform(prbs, &grid, *seed)?;
            match spec.frame {
                ScanFrame::Abc => {
                    let ph = match spec.axis {
                        Axis::A => 0,
                        Axis::B => 1,
                        _ => 2,
                    };
                    let mut out = [Drive::zero(), Drive::zero(), Drive::zero()];
                    out[ph] = Drive::Samples(Arc::new(w.samples));
                    Ok(out)
                }
                ScanFrame::Seq0pn => Err(EmtError::UnsupportedInjection(
                    "a broadband binary sequence cannot carry the per-frequency phase shifts a rotating sequence axis requires; use single-tone or multi-tone in the 0pn frame"
                        .into(),
                )),
                ScanFrame::Dq0 => {
                    let mut out_samples: [Vec<f64>; 3] =
                        [Vec::new(), Vec::new(), Vec::new()];
                    for (x, delta) in PHASE_DELTAS.iter().enumerate() {
                        let mut v = Vec::with_capacity(n_steps + 1);
                        for (k, s) in w.samples.iter().enumerate() {
                            let th = theta.at(k as f64 * dt) - delta;
                            let val = match spec.axis {
                                Axis::D => s * th.cos(),
                                Axis::Q => -s * th.sin(),
                                _ => *s,
                            };
                            v.push(val);
                        }
                        out_samples[x] = v;
                    }
                    Ok(out_samples.map(|v| Drive::Samples(Arc::new(v))))
                }
            }
        }
    }
}

/// Relative RMS deviation between two windowed three-channel records.
pub fn relative_rms_delta(a: &[Waveform; 3], b: &[Waveform; 3], scale: f64) -> f64 {
    let mut worst = 0.0f64;
    for (wa, wb) in a.iter().zip(b) {
        let n = wa.samples.len().min(wb.samples.len());
        if n == 0 {
            continue;
        }
        let ms: f64 = wa
            .samples
            .iter()
            .zip(&wb.samples)
            .take(n)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n as f64;
        worst = worst.max(ms.sqrt() / scale.max(1e-12));
    }
    worst
}
