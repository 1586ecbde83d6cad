//! Fixed-step trapezoidal companion-model nodal solver (MNA form: node
//! voltages plus ideal-voltage-source currents). Storage elements become
//! Norton companions updated each step; switches are conductance swaps;
//! synthetic devices stamp a rotating 3x3 conductance block, so the matrix
//! is refactored per step only when devices are present.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::circuit::{Circuit, Drive, Element, NodeId, SourceKind, GROUND};
use super::device::DeviceState;
use super::EmtError;

pub const SWITCH_G_ON: f64 = 1e6;
pub const SWITCH_G_OFF: f64 = 1e-9;

/// Dense LU with partial pivoting on a preallocated buffer.
struct Lu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    fn new(n: usize) -> Self {
        Self {
            n,
            a: vec![0.0; n * n],
            piv: vec![0; n],
        }
    }

    fn factor(&mut self, src: &[f64]) -> Result<(), ()> {
        let n = self.n;
        self.a.copy_from_slice(src);
        for k in 0..n {
            let mut p = k;
            let mut best = self.a[k * n + k].abs();
            for r in k + 1..n {
                let v = self.a[r * n + k].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best < 1e-300 {
                return Err(());
            }
            self.piv[k] = p;
            if p != k {
                for c in 0..n {
                    self.a.swap(k * n + c, p * n + c);
                }
            }
            let pivot = self.a[k * n + k];
            for r in k + 1..n {
                let f = self.a[r * n + k] / pivot;
                self.a[r * n + k] = f;
                for c in k + 1..n {
                    self.a[r * n + c] -= f * self.a[k * n + c];
                }
            }
        }
        Ok(())
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = self.n;
        // factors sit in their final row positions, so the interchanges must
        // all be applied to the right-hand side before the triangular sweeps
        for k in 0..n {
            rhs.swap(k, self.piv[k]);
        }
        for k in 0..n {
            let xk = rhs[k];
            for r in k + 1..n {
                rhs[r] -= self.a[r * n + k] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut v = rhs[k];
            for c in k + 1..n {
                v -= self.a[k * n + c] * rhs[c];
            }
            rhs[k] = v / self.a[k * n + k];
        }
    }
}

type Unk = Option<usize>; // None = ground

#[derive(Debug, Clone, Copy, PartialEq)]
enum StorageKind {
    Inductor,
    Capacitor,
}

enum Lowered {
    Cond {
        a: Unk,
        b: Unk,
        g: f64,
    },
    Storage {
        a: Unk,
        b: Unk,
        kind: StorageKind,
        g: f64,
        hist: f64,
        v_prev: f64,
        i_prev: f64,
        i_now: f64,
        value: f64,
    },
    Vsrc {
        a: Unk,
        b: Unk,
        row: usize,
        drive: Drive,
        scale: f64,
    },
    Isrc {
        a: Unk,
        b: Unk,
        drive: Drive,
        scale: f64,
        i_now: f64,
    },
}

struct DeviceSlot {
    state: DeviceState,
    nodes: [Unk; 3],
    i_abc: [f64; 3],
}

/// Reference to a lowered single-phase primitive for probing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchRef {
    Lowered(usize),
    DevicePhase(usize, usize),
}

/// One term of a tie-current probe: branch current (from node `a` to `b`)
/// weighted by `sign` and summed.
#[derive(Debug, Clone)]
pub struct TieTerm {
    pub element: String,
    pub phase: usize,
    pub sign: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ProbeSpec {
    pub nodes: Vec<NodeId>,
    pub branches: Vec<(String, usize)>,
    pub ties: Vec<Vec<TieTerm>>,
}

/// Sampled outputs; index k corresponds to t = k*dt, index 0 holds the
/// initial state.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub dt: f64,
    pub node_v: Vec<Vec<f64>>,
    pub branch_i: Vec<Vec<f64>>,
    pub tie_i: Vec<Vec<f64>>,
}

struct Event {
    step: usize,
    element: String,
    factor: f64,
}

/// Assembled simulator state for one circuit.
pub struct Sim {
    dt: f64,
    n_unknowns: usize,
    n_nodes: usize,
    base: Vec<f64>,
    lu: Lu,
    needs_refactor_each_step: bool,
    lowered: Vec<Lowered>,
    devices: Vec<DeviceSlot>,
    branch_map: Vec<(String, usize, BranchRef)>,
    node_of: Vec<Unk>,
    init_node_v: Vec<f64>,
    overflow_limit: f64,
    events: Vec<Event>,
    x: Vec<f64>,
    rhs: Vec<f64>,
    work: Vec<f64>,
}

/// Build the nodal system: conductance stamps, companion models, source rows.
/// Fails with the offending node names when a subnetwork floats.
pub fn assemble(circuit: &Circuit, dt: f64) -> Result<Sim, EmtError> {
    if !(dt > 0.0) {
        return Err(EmtError::NonPositiveValue {
            element: "dt".into(),
            value: dt,
        });
    }
    check_floating(circuit)?;

    let n_nodes = circuit.n_nodes() - 1; // excluding ground
    let node_of: Vec<Unk> = (0..circuit.n_nodes())
        .map(|i| if i == 0 { None } else { Some(i - 1) })
        .collect();
    let unk = |n: NodeId| node_of[n.0];

    let mut lowered = Vec::new();
    let mut devices = Vec::new();
    let mut branch_map = Vec::new();
    let mut n_vsrc = 0usize;

    for e in &circuit.elements {
        match e {
            Element::Resistor { name, a, b, ohms } => {
                branch_map.push((name.clone(), 0, BranchRef::Lowered(lowered.len())));
                lowered.push(Lowered::Cond {
                    a: unk(*a),
                    b: unk(*b),
                    g: 1.0 / ohms,
                });
            }
            Element::Switch { name, a, b, closed } => {
                branch_map.push((name.clone(), 0, BranchRef::Lowered(lowered.len())));
                lowered.push(Lowered::Cond {
                    a: unk(*a),
                    b: unk(*b),
                    g: if *closed { SWITCH_G_ON } else { SWITCH_G_OFF },
                });
            }
            Element::Inductor {
                name,
                a,
                b,
                henries,
                ic_amps,
            } => {
                branch_map.push((name.clone(), 0, BranchRef::Lowered(lowered.len())));
                lowered.push(Lowered::Storage {
                    a: unk(*a),
                    b: unk(*b),
                    kind: StorageKind::Inductor,
                    g: dt / (2.0 * henries),
                    hist: 0.0,
                    v_prev: 0.0,
                    i_prev: *ic_amps,
                    i_now: *ic_amps,
                    value: *henries,
                });
            }
            Element::Capacitor {
                name,
                a,
                b,
                farads,
                ic_volts,
            } => {
                branch_map.push((name.clone(), 0, BranchRef::Lowered(lowered.len())));
                lowered.push(Lowered::Storage {
                    a: unk(*a),
                    b: unk(*b),
                    kind: StorageKind::Capacitor,
                    g: 2.0 * farads / dt,
                    hist: 0.0,
                    v_prev: *ic_volts,
                    i_prev: 0.0,
                    i_now: 0.0,
                    value: *farads,
                });
            }
            Element::SourceTriple {
                name,
                kind,
                nodes,
                source,
            } => {
                let drives = source.phase_drives();
                for (ph, drive) in drives.into_iter().enumerate() {
                    branch_map.push((name.clone(), ph, BranchRef::Lowered(lowered.len())));
                    match kind {
                        SourceKind::Voltage => {
                            lowered.push(Lowered::Vsrc {
                                a: unk(nodes[ph]),
                                b: None,
                                row: n_vsrc,
                                drive,
                                scale: 1.0,
                            });
                            n_vsrc += 1;
                        }
                        SourceKind::Current => {
                            // drive value = current flowing from ground into the node
                            lowered.push(Lowered::Isrc {
                                a: None,
                                b: unk(nodes[ph]),
                                drive,
                                scale: 1.0,
                                i_now: 0.0,
                            });
                        }
                    }
                }
            }
            Element::PhaseSource {
                name,
                kind,
                a,
                b,
                drive,
            } => {
                branch_map.push((name.clone(), 0, BranchRef::Lowered(lowered.len())));
                match kind {
                    SourceKind::Voltage => {
                        lowered.push(Lowered::Vsrc {
                            a: unk(*a),
                            b: unk(*b),
                            row: n_vsrc,
                            drive: drive.clone(),
                            scale: 1.0,
                        });
                        n_vsrc += 1;
                    }
                    SourceKind::Current => {
                        lowered.push(Lowered::Isrc {
                            a: unk(*a),
                            b: unk(*b),
                            drive: drive.clone(),
                            scale: 1.0,
                            i_now: 0.0,
                        });
                    }
                }
            }
            Element::Device { name, nodes, model } => {
                let state = DeviceState::new(model, dt)?;
                for ph in 0..3 {
                    branch_map.push((name.clone(), ph, BranchRef::DevicePhase(devices.len(), ph)));
                }
                devices.push(DeviceSlot {
                    state,
                    nodes: [unk(nodes[0]), unk(nodes[1]), unk(nodes[2])],
                    i_abc: [0.0; 3],
                });
            }
        }
    }

    let n_unknowns = n_nodes + n_vsrc;
    let mut base = vec![0.0; n_unknowns * n_unknowns];
    {
        let n = n_unknowns;
        let mut stamp_g = |a: Unk, b: Unk, g: f64| {
            if let Some(i) = a {
                base[i * n + i] += g;
            }
            if let Some(j) = b {
                base[j * n + j] += g;
            }
            if let (Some(i), Some(j)) = (a, b) {
                base[i * n + j] -= g;
                base[j * n + i] -= g;
            }
        };
        for l in &lowered {
            match l {
                Lowered::Cond { a, b, g } | Lowered::Storage { a, b, g, .. } => {
                    stamp_g(*a, *b, *g)
                }
                _ => {}
            }
        }
        for l in &lowered {
            if let Lowered::Vsrc { a, b, row, .. } = l {
                let r = n_nodes + row;
                if let Some(i) = a {
                    base[i * n + r] += 1.0;
                    base[r * n + i] += 1.0;
                }
                if let Some(j) = b {
                    base[j * n + r] -= 1.0;
                    base[r * n + j] -= 1.0;
                }
            }
        }
    }

    let mut sim = Sim {
        dt,
        n_unknowns,
        n_nodes,
        lu: Lu::new(n_unknowns),
        needs_refactor_each_step: !devices.is_empty(),
        base,
        lowered,
        devices,
        branch_map,
        node_of,
        init_node_v: vec![0.0; n_nodes],
        overflow_limit: 1e9,
        events: Vec::new(),
        x: vec![0.0; n_unknowns],
        rhs: vec![0.0; n_unknowns],
        work: vec![0.0; n_unknowns * n_unknowns],
    };
    if !sim.needs_refactor_each_step {
        sim.lu.factor(&sim.base).map_err(|_| EmtError::Singular)?;
    }
    Ok(sim)
}

/// Union-find floating-subnetwork check: every node must reach ground
/// through conductive branches or ideal voltage sources.
fn check_floating(circuit: &Circuit) -> Result<(), EmtError> {
    let n = circuit.n_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut i = i;
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let union = |parent: &mut Vec<usize>, a: usize, b: usize| {
        let ra = find(parent, a);
        let rb = find(parent, b);
        if ra != rb {
            parent[ra] = rb;
        }
    };
    for e in &circuit.elements {
        match e {
            Element::Resistor { a, b, .. }
            | Element::Inductor { a, b, .. }
            | Element::Capacitor { a, b, .. }
            | Element::Switch { a, b, .. } => union(&mut parent, a.0, b.0),
            Element::PhaseSource { kind, a, b, .. } => {
                if *kind == SourceKind::Voltage {
                    union(&mut parent, a.0, b.0);
                }
            }
            Element::SourceTriple { kind, nodes, .. } => {
                if *kind == SourceKind::Voltage {
                    for nd in nodes {
                        union(&mut parent, nd.0, GROUND.0);
                    }
                }
            }
            Element::Device { .. } => {}
        }
    }
    let ground_root = find(&mut parent, GROUND.0);
    let floating: Vec<String> = (1..n)
        .filter(|&i| find(&mut parent, i) != ground_root)
        .map(|i| circuit.node_name(NodeId(i)).to_string())
        .collect();
    if floating.is_empty() {
        Ok(())
    } else {
        Err(EmtError::FloatingNodes { nodes: floating })
    }
}

impl Sim {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn set_overflow_limit(&mut self, limit: f64) {
        self.overflow_limit = limit;
    }

    /// Scale an element's source drive by `factor` from time `t` onward.
    pub fn add_event(&mut self, t: f64, element: &str, factor: f64) {
        self.events.push(Event {
            step: (t / self.dt).round() as usize,
            element: element.to_string(),
            factor,
        });
    }

    fn resolve(&self, element: &str, phase: usize) -> Result<BranchRef, EmtError> {
        self.branch_map
            .iter()
            .find(|(n, p, _)| n == element && *p == phase)
            .map(|(_, _, r)| *r)
            .ok_or_else(|| EmtError::UnknownElement(element.to_string()))
    }

    /// Steady-state initialization from complex nodal solutions at each
    /// distinct source frequency. Applies only to device-free circuits
    /// (returns false otherwise); constant (DC) components settle in time.
    pub fn init_from_phasors(&mut self) -> Result<bool, EmtError> {
        if !self.devices.is_empty() {
            return Ok(false);
        }
        let mut freqs: Vec<f64> = Vec::new();
        for l in &self.lowered {
            let drive = match l {
                Lowered::Vsrc { drive, .. } | Lowered::Isrc { drive, .. } => drive,
                _ => continue,
            };
            if let Drive::Phasors(comps) = drive {
                for c in comps {
                    if c.freq_hz > 0.0
                        && !freqs
                            .iter()
                            .any(|&f| (f - c.freq_hz).abs() < 1e-9 * f.max(1.0))
                    {
                        freqs.push(c.freq_hz);
                    }
                }
            }
        }
        let n = self.n_unknowns;
        let mut node_init = vec![0.0; self.n_nodes];
        let mut storage_v = vec![0.0; self.lowered.len()];
        let mut storage_i = vec![0.0; self.lowered.len()];
        for &f in &freqs {
            // companion models realize the bilinear map s -> (2/dt) tan(w dt/2);
            // solving with the warped frequency lands exactly on the discrete
            // system's periodic orbit, so no transient survives even for
            // lightly damped resonances
            let w = (2.0 / self.dt) * (std::f64::consts::PI * f * self.dt).tan();
            let mut a = DMatrix::<Complex64>::zeros(n, n);
            let mut b = nalgebra::DVector::<Complex64>::zeros(n);
            let stamp_y = |a: &mut DMatrix<Complex64>, na: Unk, nb: Unk, y: Complex64| {
                if let Some(i) = na {
                    a[(i, i)] += y;
                }
                if let Some(j) = nb {
                    a[(j, j)] += y;
                }
                if let (Some(i), Some(j)) = (na, nb) {
                    a[(i, j)] -= y;
                    a[(j, i)] -= y;
                }
            };
            for l in &self.lowered {
                match l {
                    Lowered::Cond { a: na, b: nb, g } => {
                        stamp_y(&mut a, *na, *nb, Complex64::new(*g, 0.0))
                    }
                    Lowered::Storage {
                        a: na,
                        b: nb,
                        kind,
                        value,
                        ..
                    } => {
                        let y = match kind {
                            StorageKind::Inductor => Complex64::new(0.0, -1.0 / (w * value)),
                            StorageKind::Capacitor => Complex64::new(0.0, w * value),
                        };
                        stamp_y(&mut a, *na, *nb, y);
                    }
                    Lowered::Vsrc {
                        a: na,
                        b: nb,
                        row,
                        drive,
                        scale,
                    } => {
                        let r = self.n_nodes + row;
                        if let Some(i) = *na {
                            a[(i, r)] += Complex64::new(1.0, 0.0);
                            a[(r, i)] += Complex64::new(1.0, 0.0);
                        }
                        if let Some(j) = *nb {
                            a[(j, r)] -= Complex64::new(1.0, 0.0);
                            a[(r, j)] -= Complex64::new(1.0, 0.0);
                        }
                        b[r] = drive_phasor(drive, f) * *scale;
                    }
                    Lowered::Isrc {
                        a: na,
                        b: nb,
                        drive,
                        scale,
                        ..
                    } => {
                        let j_ph = drive_phasor(drive, f) * *scale;
                        if let Some(i) = *na {
                            b[i] -= j_ph;
                        }
                        if let Some(j) = *nb {
                            b[j] += j_ph;
                        }
                    }
                }
            }
            let lu = a.lu();
            let sol = lu.solve(&b).ok_or(EmtError::Singular)?;
            for i in 0..self.n_nodes {
                node_init[i] += sol[i].re;
            }
            for (idx, l) in self.lowered.iter().enumerate() {
                if let Lowered::Storage {
                    a: na,
                    b: nb,
                    kind,
                    value,
                    ..
                } = l
                {
                    let va = na.map_or(Complex64::default(), |i| sol[i]);
                    let vb = nb.map_or(Complex64::default(), |j| sol[j]);
                    let vd = va - vb;
                    let y = match kind {
                        StorageKind::Inductor => Complex64::new(0.0, -1.0 / (w * value)),
                        StorageKind::Capacitor => Complex64::new(0.0, w * value),
                    };
                    let i_ph = vd * y;
                    storage_v[idx] += vd.re;
                    storage_i[idx] += i_ph.re;
                }
            }
        }
        for (idx, l) in self.lowered.iter_mut().enumerate() {
            if let Lowered::Storage {
                v_prev,
                i_prev,
                i_now,
                ..
            } = l
            {
                *v_prev += storage_v[idx];
                *i_prev += storage_i[idx];
                *i_now = *i_prev;
            }
        }
        self.init_node_v = node_init;
        Ok(true)
    }

    /// March `n_steps` fixed steps, recording the requested probes.
    pub fn run(&mut self, n_steps: usize, probes: &ProbeSpec) -> Result<RunRecord, EmtError> {
        let node_idx: Vec<Unk> = probes.nodes.iter().map(|n| self.node_of[n.0]).collect();
        let branch_refs: Vec<BranchRef> = probes
            .branches
            .iter()
            .map(|(name, ph)| self.resolve(name, *ph))
            .collect::<Result<_, _>>()?;
        let tie_refs: Vec<Vec<(BranchRef, f64)>> = probes
            .ties
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| self.resolve(&t.element, t.phase).map(|r| (r, t.sign)))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;

        let mut rec = RunRecord {
            dt: self.dt,
            node_v: vec![Vec::with_capacity(n_steps + 1); node_idx.len()],
            branch_i: vec![Vec::with_capacity(n_steps + 1); branch_refs.len()],
            tie_i: vec![Vec::with_capacity(n_steps + 1); tie_refs.len()],
        };

        // initial sample (t = 0)
        for (out, unk) in rec.node_v.iter_mut().zip(&node_idx) {
            out.push(unk.map_or(0.0, |i| self.init_node_v[i]));
        }
        for (out, r) in rec.branch_i.iter_mut().zip(&branch_refs) {
            out.push(self.initial_branch_current(*r));
        }
        for (out, terms) in rec.tie_i.iter_mut().zip(&tie_refs) {
            out.push(
                terms
                    .iter()
                    .map(|(r, s)| s * self.initial_branch_current(*r))
                    .sum(),
            );
        }

        // update histories from the (possibly phasor-initialized) state
        self.refresh_histories();

        for k in 1..=n_steps {

            self.apply_events(k);
            self.advance_one_step(k)?;
            for (out, unk) in rec.node_v.iter_mut().zip(&node_idx) {
                out.push(unk.map_or(0.0, |i| self.x[i]));
            }
            for (out, r) in rec.branch_i.iter_mut().zip(&branch_refs) {
                out.push(self.branch_current(*r));
            }
            for (out, terms) in rec.tie_i.iter_mut().zip(&tie_refs) {
                out.push(terms.iter().map(|(r, s)| s * self.branch_current(*r)).sum());
            }
        }
        Ok(rec)
    }

    fn apply_events(&mut self, step: usize) {
        for ev_idx in 0..self.events.len() {
            if self.events[ev_idx].step == step {
                let name = self.events[ev_idx].element.clone();
                let factor = self.events[ev_idx].factor;
                for (bname, _, bref) in &self.branch_map {
                    if *bname == name {
                        if let BranchRef::Lowered(i) = bref {
                            match &mut self.lowered[*i] {
                                Lowered::Vsrc { scale, .. } | Lowered::Isrc { scale, .. } => {
                                    *scale *= factor;
                                }
                                _ => {}
                            }
                        }
                    }
                }
            }
        }
    }

    fn refresh_histories(&mut self) {
        for l in self.lowered.iter_mut() {
            if let Lowered::Storage {
                kind,
                g,
                hist,
                v_prev,
                i_prev,
                ..
            } = l
            {
                *hist = match kind {
                    StorageKind::Inductor => *i_prev + *g * *v_prev,
                    StorageKind::Capacitor => -(*g * *v_prev + *i_prev),
                };
            }
        }
    }

    fn advance_one_step(&mut self, k: usize) -> Result<(), EmtError> {
        let t = k as f64 * self.dt;
        let n = self.n_unknowns;

        if self.needs_refactor_each_step {
            self.work.copy_from_slice(&self.base);
            for dev in &self.devices {
                let (s, f) = park_mats(dev.state.angle.at(t));
                // G_abc = S * G_dq * F
                for r in 0..3 {
                    for c in 0..3 {
                        let mut g = 0.0;
                        for i in 0..2 {
                            for j in 0..2 {
                                g += s[r][i] * dev.state.g_dq[i][j] * f[j][c];
                            }
                        }
                        if let (Some(ri), Some(ci)) = (dev.nodes[r], dev.nodes[c]) {
                            self.work[ri * n + ci] += g;
                        }
                    }
                }
            }
            self.lu.factor(&self.work).map_err(|_| EmtError::Singular)?;
        }

        self.rhs.iter_mut().for_each(|v| *v = 0.0);
        for l in &self.lowered {
            match l {
                Lowered::Storage { a, b, hist, .. } => {
                    if let Some(i) = a {
                        self.rhs[*i] -= hist;
                    }
                    if let Some(j) = b {
                        self.rhs[*j] += hist;
                    }
                }
                Lowered::Vsrc {
                    row, drive, scale, ..
                } => {
                    self.rhs[self.n_nodes + row] = drive.value(k, self.dt) * scale;
                }
                Lowered::Isrc {
                    a, b, drive, scale, ..
                } => {
                    let jv = drive.value(k, self.dt) * scale;
                    if let Some(i) = a {
                        self.rhs[*i] -= jv;
                    }
                    if let Some(j) = b {
                        self.rhs[*j] += jv;
                    }
                }
                Lowered::Cond { .. } => {}
            }
        }
        for dev in &self.devices {
            let (s, _) = park_mats(dev.state.angle.at(t));
            let h = dev.state.history_dq();
            for r in 0..3 {
                if let Some(ri) = dev.nodes[r] {
                    let h_abc = s[r][0] * h[0] + s[r][1] * h[1];
                    self.rhs[ri] -= h_abc;
                }
            }
        }

        self.x.copy_from_slice(&self.rhs);
        self.lu.solve(&mut self.x);

        let mut max_abs = 0.0f64;
        for v in &self.x {
            max_abs = max_abs.max(v.abs());
        }
        if !max_abs.is_finite() || max_abs > self.overflow_limit {
            return Err(EmtError::Divergence { t, max_abs });
        }

        // state updates
        let x = &self.x;
        let volt = |u: Unk| u.map_or(0.0, |i| x[i]);
        for l in self.lowered.iter_mut() {
            match l {
                Lowered::Storage {
                    a,
                    b,
                    kind,
                    g,
                    hist,
                    v_prev,
                    i_prev,
                    i_now,
                    ..
                } => {
                    let vd = volt(*a) - volt(*b);
                    let i = *g * vd + *hist;
                    *v_prev = vd;
                    *i_prev = i;
                    *i_now = i;
                    *hist = match kind {
                        StorageKind::Inductor => i + *g * vd,
                        StorageKind::Capacitor => -(*g * vd + i),
                    };
                }
                Lowered::Isrc {
                    drive,
                    scale,
                    i_now,
                    ..
                } => {
                    *i_now = drive.value(k, self.dt) * *scale;
                }
                _ => {}
            }
        }
        for dev in self.devices.iter_mut() {
            let theta = dev.state.angle.at(t);
            let (s, f) = park_mats(theta);
            let v_abc = [volt(dev.nodes[0]), volt(dev.nodes[1]), volt(dev.nodes[2])];
            let mut v_dq = [0.0; 2];
            for (i, row) in f.iter().enumerate() {
                v_dq[i] = row[0] * v_abc[0] + row[1] * v_abc[1] + row[2] * v_abc[2];
            }
            let h = dev.state.history_dq();
            let i_dq = [
                dev.state.g_dq[0][0] * v_dq[0] + dev.state.g_dq[0][1] * v_dq[1] + h[0],
                dev.state.g_dq[1][0] * v_dq[0] + dev.state.g_dq[1][1] * v_dq[1] + h[1],
            ];
            for r in 0..3 {
                dev.i_abc[r] = s[r][0] * i_dq[0] + s[r][1] * i_dq[1];
            }
            dev.state.advance(v_dq);
        }
        Ok(())
    }

    fn initial_branch_current(&self, r: BranchRef) -> f64 {
        match r {
            BranchRef::Lowered(i) => match &self.lowered[i] {
                Lowered::Storage { i_now, .. } => *i_now,
                _ => 0.0,
            },
            BranchRef::DevicePhase(..) => 0.0,
        }
    }

    /// Current through a branch from its `a` node to its `b` node at the
    /// last solved step. Voltage-source current is the MNA unknown; device
    /// phase current flows from the node into the device.
    fn branch_current(&self, r: BranchRef) -> f64 {
        match r {
            BranchRef::Lowered(i) => match &self.lowered[i] {
                Lowered::Cond { a, b, g } => {
                    let volt = |u: &Unk| u.map_or(0.0, |i| self.x[i]);
                    g * (volt(a) - volt(b))
                }
                Lowered::Storage { i_now, .. } => *i_now,
                Lowered::Vsrc { row, .. } => self.x[self.n_nodes + row],
                Lowered::Isrc { i_now, .. } => *i_now,
            },
            BranchRef::DevicePhase(d, ph) => self.devices[d].i_abc[ph],
        }
    }

    /// Dump of the constant part of the nodal matrix (debug helper).
    pub fn debug_base(&self) -> (usize, Vec<f64>) {
        (self.n_unknowns, self.base.clone())
    }

    /// Worst Kirchhoff current residual over nodes at the last solved step,
    /// relative to the largest branch current magnitude.
    pub fn kcl_residual(&self) -> f64 {
        let mut node_sum = vec![0.0f64; self.n_nodes];
        let mut max_i = 0.0f64;
        let add = |u: Unk, v: f64, node_sum: &mut Vec<f64>| {
            if let Some(i) = u {
                node_sum[i] += v;
            }
        };
        for (idx, l) in self.lowered.iter().enumerate() {
            let i = self.branch_current(BranchRef::Lowered(idx));
            max_i = max_i.max(i.abs());
            match l {
                Lowered::Cond { a, b, .. }
                | Lowered::Storage { a, b, .. }
                | Lowered::Vsrc { a, b, .. }
                | Lowered::Isrc { a, b, .. } => {
                    add(*a, i, &mut node_sum);
                    add(*b, -i, &mut node_sum);
                }
            }
        }
        for (d, dev) in self.devices.iter().enumerate() {
            for ph in 0..3 {
                let i = self.branch_current(BranchRef::DevicePhase(d, ph));
                max_i = max_i.max(i.abs());
                add(dev.nodes[ph], i, &mut node_sum);
            }
        }
        let worst = node_sum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_i > 0.0 {
            worst / max_i
        } else {
            worst
        }
    }
}

fn drive_phasor(drive: &Drive, f: f64) -> Complex64 {
    match drive {
        Drive::Phasors(comps) => comps
            .iter()
            .filter(|c| (c.freq_hz - f).abs() < 1e-9 * f.max(1.0))
            .map(|c| c.phasor())
            .sum(),
        Drive::Samples(_) => Complex64::default(),
    }
}

/// Synthesis (3x2, rows [cos th, -sin th]) and analysis (2x3, the exact
/// 2/3-scaled inverse rows) Park blocks at a given angle.
fn park_mats(theta: f64) -> ([[f64; 2]; 3], [[f64; 3]; 2]) {
    let mut s = [[0.0; 2]; 3];
    let mut f = [[0.0; 3]; 2];
    for (ph, delta) in [0.0, 2.0 * std::f64::consts::PI / 3.0, -2.0 * std::f64::consts::PI / 3.0]
        .iter()
        .enumerate()
    {
        let th = theta - delta;
        s[ph] = [th.cos(), -th.sin()];
        f[0][ph] = 2.0 / 3.0 * th.cos();
        f[1][ph] = -2.0 / 3.0 * th.sin();
    }
    (s, f)
}

#[cfg(test)]
mod lu_tests {
    use super::Lu;

    #[test]
    fn lu_solves_graded_system() {
        let a = [
            10.0, -10.0, 0.0,
            -10.0, 10.00005, -5e-5,
            0.0, -5e-5, 20.00005,
        ];
        let mut lu = Lu::new(3);
        lu.factor(&a).unwrap();
        let mut rhs = [9.544, -9.548, 1900.51];
        lu.solve(&mut rhs);
        // residual check against the original matrix
        let x = rhs;
        let b = [9.544, -9.548, 1900.51];
        for r in 0..3 {
            let mut acc = 0.0;
            for c in 0..3 {
                acc += a[r * 3 + c] * x[c];
            }
            assert!((acc - b[r]).abs() < 1e-9 * (1.0 + b[r].abs()), "row {r}: {acc} vs {}", b[r]);
        }
        assert!((x[2] - 95.025).abs() < 0.01, "x = {x:?}");
        assert!((x[1] - 15.0).abs() < 0.1, "x = {x:?}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emt::circuit::{Circuit, Element, FundamentalSource, SourceKind};
    use approx::assert_relative_eq;

    fn v_probe(c: &mut Circuit, names: &[&str]) -> ProbeSpec {
        ProbeSpec {
            nodes: names.iter().map(|n| c.node(n)).collect(),
            branches: vec![],
            ties: vec![],
        }
    }

    #[test]
    fn resistor_divider_reaches_ohms_law_in_one_step() {
        let mut c = Circuit::new();
        let n1 = c.node("n1");
        c.add(Element::PhaseSource {
            name: "v".into(),
            kind: SourceKind::Voltage,
            a: n1,
            b: GROUND,
            drive: Drive::single(1.0, 0.0, 0.0),
        })
        .unwrap();
        c.add(Element::Resistor {
            name: "r".into(),
            a: n1,
            b: GROUND,
            ohms: 2.0,
        })
        .unwrap();
        let mut sim = assemble(&c, 1e-5).unwrap();
        let probes = ProbeSpec {
            nodes: vec![n1],
            branches: vec![("r".into(), 0)],
            ties: vec![],
        };
        let rec = sim.run(1, &probes).unwrap();
        assert_relative_eq!(rec.node_v[0][1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(rec.branch_i[0][1], 0.5, epsilon = 1e-12);
        assert!(sim.kcl_residual() < 1e-9);
    }

    #[test]
    fn rl_step_response_matches_closed_form() {
        let mut c = Circuit::new();
        let n1 = c.node("n1");
        let n2 = c.node("n2");
        c.add(Element::PhaseSource {
            name: "v".into(),
            kind: SourceKind::Voltage,
            a: n1,
            b: GROUND,
            drive: Drive::single(1.0, 0.0, 0.0),
        })
        .unwrap();
        c.add(Element::Resistor {
            name: "r".into(),
            a: n1,
            b: n2,
            ohms: 1.0,
        })
        .unwrap();
        c.add(Element::Inductor {
            name: "l".into(),
            a: n2,
            b: GROUND,
            henries: 1.0,
            ic_amps: 0.0,
        })
        .unwrap();
        let dt = 1e-5;
        let mut sim = assemble(&c, dt).unwrap();
        let probes = ProbeSpec {
            nodes: vec![],
            branches: vec![("l".into(), 0)],
            ties: vec![],
        };
        let steps = (1.0 / dt) as usize;
        let rec = sim.run(steps, &probes).unwrap();
        let want = 1.0 - (-1.0f64).exp();
        let got = rec.branch_i[0][steps];
        assert!(
            (got - want).abs() / want < 1e-3,
            "i(1s) = {got}, want {want}"
        );
    }

    #[test]
    fn lc_oscillator_conserves_energy() {
        let mut c = Circuit::new();
        let n1 = c.node("n1");
        c.add(Element::Capacitor {
            name: "c".into(),
            a: n1,
            b: GROUND,
            farads: 1e-3,
            ic_volts: 1.0,
        })
        .unwrap();
        c.add(Element::Inductor {
            name: "l".into(),
            a: n1,
            b: GROUND,
            henries: 1e-3,
            ic_amps: 0.0,
        })
        .unwrap();
        let dt = 1e-6;
        let mut sim = assemble(&c, dt).unwrap();
        let probes = ProbeSpec {
            nodes: vec![n1],
            branches: vec![("l".into(), 0)],
            ties: vec![],
        };
        // 10 cycles of w = 1/sqrt(LC) = 1000 rad/s
        let t_total = 10.0 * 2.0 * std::f64::consts::PI / 1000.0;
        let steps = (t_total / dt) as usize;
        let rec = sim.run(steps, &probes).unwrap();
        let e0 = 0.5 * 1e-3 * 1.0;
        // sample 0 predates the first solve; start at the first recorded step
        for k in (0..=steps).step_by(997).skip(1) {
            let v = rec.node_v[0][k];
            let i = rec.branch_i[0][k];
            let e = 0.5 * 1e-3 * v * v + 0.5 * 1e-3 * i * i;
            assert!(
                ((e - e0) / e0).abs() < 1e-4,
                "energy drift {} at sample {k}",
                (e - e0) / e0
            );
        }
    }

    #[test]
    fn zero_source_circuit_stays_zero() {
        let mut c = Circuit::new();
        let n1 = c.node("n1");
        c.add(Element::Resistor {
            name: "r".into(),
            a: n1,
            b: GROUND,
            ohms: 5.0,
        })
        .unwrap();
        c.add(Element::Capacitor {
            name: "c".into(),
            a: n1,
            b: GROUND,
            farads: 1e-6,
            ic_volts: 0.0,
        })
        .unwrap();
        let mut sim = assemble(&c, 1e-5).unwrap();
        let probes = v_probe(&mut c, &["n1"]);
        let rec = sim.run(100, &probes).unwrap();
        assert!(rec.node_v[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn floating_node_diagnostic_names_the_node() {
        let mut c = Circuit::new();
        let n1 = c.node("n1");
        let orphan = c.node("orphan");
        c.add(Element::PhaseSource {
            name: "v".into(),
            kind: SourceKind::Voltage,
            a: n1,
            b: GROUND,
            drive: Drive::single(1.0, 0.0, 0.0),
        })
        .unwrap();
        c.add(Element::Resistor {
            name: "r".into(),
            a: n1,
            b: GROUND,
            ohms: 1.0,
        })
        .unwrap();
        c.add(Element::Resistor {
            name: "r2".into(),
            a: orphan,
            b: orphan,
            ohms: 1.0,
        })
        .unwrap();
        match assemble(&c, 1e-5) {
            Err(EmtError::FloatingNodes { nodes }) => assert_eq!(nodes, vec!["orphan"]),
            Err(other) => panic!("expected floating-node error, got {other:?}"),
            Ok(_) => panic!("expected floating-node error, got Ok"),
        }
    }

    #[test]
    fn balanced_source_into_balanced_load_is_symmetric() {
        let mut c = Circuit::new();
        let pa = c.node("pa");
        let pb = c.node("pb");
        let pc = c.node("pc");
        c.add(Element::SourceTriple {
            name: "vs".into(),
            kind: SourceKind::Voltage,
            nodes: [pa, pb, pc],
            source: FundamentalSource::Balanced {
                peak: 100.0,
                f0: 50.0,
                phase_a: 0.0,
                phase_b: 0.0,
                phase_c: 0.0,
            },
        })
        .unwrap();
        for (ph, node) in [(0, pa), (1, pb), (2, pc)] {
            c.add(Element::Resistor {
                name: format!("r{ph}"),
                a: node,
                b: GROUND,
                ohms: 10.0,
            })
            .unwrap();
        }
        let dt = 1.0 / 150_000.0; // fundamental period = 3000 samples
        let mut sim = assemble(&c, dt).unwrap();
        let probes = ProbeSpec {
            nodes: vec![],
            branches: vec![("r0".into(), 0), ("r1".into(), 0), ("r2".into(), 0)],
            ties: vec![],
        };
        let period = 3000usize;
        let rec = sim.run(2 * period, &probes).unwrap();
        // phase currents equal up to 120 degree shifts
        let third = period / 3;
        for k in period..period + 200 {
            let ia = rec.branch_i[0][k];
            let ib = rec.branch_i[1][k + third];
            assert_relative_eq!(ia, ib, epsilon = 1e-9 * 10.0);
        }
        assert!(sim.kcl_residual() < 1e-9);
    }

    #[test]
    fn phasor_init_lands_on_steady_state() {
        // series RLC driven at resonance: amplitude V/R only after settling;
        // phasor init must land there immediately.
        let (r, l, cap): (f64, f64, f64) = (0.1, 0.1, 100e-6);
        let f_r = 1.0 / (2.0 * std::f64::consts::PI * (l * cap).sqrt());
        let mut c = Circuit::new();
        let n1 = c.node("n1");
        let n2 = c.node("n2");
        let n3 = c.node("n3");
        c.add(Element::PhaseSource {
            name: "v".into(),
            kind: SourceKind::Voltage,
            a: n1,
            b: GROUND,
            drive: Drive::single(10.0, f_r, 0.0),
        })
        .unwrap();
        c.add(Element::Resistor {
            name: "r".into(),
            a: n1,
            b: n2,
            ohms: r,
        })
        .unwrap();
        c.add(Element::Inductor {
            name: "l".into(),
            a: n2,
            b: n3,
            henries: l,
            ic_amps: 0.0,
        })
        .unwrap();
        c.add(Element::Capacitor {
            name: "c".into(),
            a: n3,
            b: GROUND,
            farads: cap,
            ic_volts: 0.0,
        })
        .unwrap();
        let dt = 1e-5;
        let mut sim = assemble(&c, dt).unwrap();
        assert!(sim.init_from_phasors().unwrap());
        let probes = ProbeSpec {
            nodes: vec![],
            branches: vec![("l".into(), 0)],
            ties: vec![],
        };
        let steps = (0.2 / dt) as usize;
        let rec = sim.run(steps, &probes).unwrap();
        let skip = steps / 2;
        let peak = rec.branch_i[0][skip..]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let want = 10.0 / r;
        assert!(
            ((peak - want) / want).abs() < 5e-3,
            "resonant amplitude {peak} vs {want}"
        );
    }

    #[test]
    fn divergence_reports_first_offending_time() {
        let mut c = Circuit::new();
        let n1 = c.node("n1");
        c.add(Element::PhaseSource {
            name: "v".into(),
            kind: SourceKind::Voltage,
            a: n1,
            b: GROUND,
            drive: Drive::single(10.0, 50.0, 0.0),
        })
        .unwrap();
        c.add(Element::Resistor {
            name: "r".into(),
            a: n1,
            b: GROUND,
            ohms: 1.0,
        })
        .unwrap();
        let mut sim = assemble(&c, 1e-5).unwrap();
        sim.set_overflow_limit(5.0);
        let err = sim.run(10_000, &ProbeSpec::default()).unwrap_err();
        assert!(matches!(err, EmtError::Divergence { .. }));
    }
}
