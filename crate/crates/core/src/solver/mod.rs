//! Fixed-step nodal solver with trapezoidal companion models.
//!
//! Every branch is reduced to `i = G v + J` for the coming step, where `J`
//! depends only on past values. The nodal matrix is constant between
//! topology changes (gap flashover), so it is factorized once per change.
//! Arresters are kept out of the matrix and solved by compensation: the
//! linear network seen from the arrester ports is the Thevenin pair
//! `(v_oc, Zth)`, after which the scalar port equations are solved exactly.

mod steady_state;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::components::arrester::ArresterCharacteristic;
use crate::components::gap::GapModel;
use crate::config::{InitMode, Quantity, SimulationConfig};
use crate::error::{Error, Result};
use crate::line::{CpLineModel, CpLineState};
use crate::netlist::{BranchKind, Circuit, NodeRef, SourceFn};
use crate::waveform::{Unit, Waveform};

pub use steady_state::{steady_state, SteadyState};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Ground,
    Unknown(usize),
    Fixed(usize),
}

#[derive(Debug, Clone)]
enum Elem {
    Resistor { a: NodeRef, b: NodeRef, g: f64 },
    Inductor { a: NodeRef, b: NodeRef, l: f64, i: f64, v: f64, j: f64 },
    Capacitor { a: NodeRef, b: NodeRef, c: f64, i: f64, v: f64, j: f64 },
    Switch { a: NodeRef, b: NodeRef, closed: bool, g_on: f64 },
    Gap { a: NodeRef, b: NodeRef, model: GapModel, g_on: f64 },
    CoupledRl {
        from: Vec<NodeRef>,
        to: Vec<NodeRef>,
        r: DMatrix<f64>,
        l: DMatrix<f64>,
        g: DMatrix<f64>,
        i: DVector<f64>,
        v: DVector<f64>,
        j: DVector<f64>,
    },
    Winding { nodes: [NodeRef; 4], gamma: Matrix2<f64>, leakage: f64, i: Vector2<f64>, v: Vector2<f64>, j: Vector2<f64> },
    Line {
        send: Vec<NodeRef>,
        recv: Vec<NodeRef>,
        model: Arc<CpLineModel>,
        state: CpLineState,
        i_s: DVector<f64>,
        i_r: DVector<f64>,
        j_s: DVector<f64>,
        j_r: DVector<f64>,
    },
    Arrester { a: NodeRef, b: NodeRef, ch: Arc<ArresterCharacteristic>, i: f64 },
    CurrentSource { from: NodeRef, to: NodeRef, src: SourceFn, value: f64 },
    VoltageSource { node: NodeRef, src: SourceFn },
}

/// Linear system restricted to the unknown (non-ground, non-prescribed) nodes.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub matrix: DMatrix<f64>,
    pub unknowns: Vec<NodeRef>,
    pub prescribed: Vec<NodeRef>,
}

struct Factorization {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    g_up: DMatrix<f64>,
    /// `G_uu^-1 A` for the arrester incidence columns.
    w: DMatrix<f64>,
    zth: DMatrix<f64>,
    /// `zth^-1` when several arresters are present and it exists.
    yth: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub steps: usize,
    pub factorizations: usize,
    /// Nonlinear iterations of the last step.
    pub last_iterations: usize,
    pub max_iterations: usize,
    pub total_iterations: usize,
}

#[derive(Debug, Clone, Copy)]
enum ProbeRef {
    Node(NodeRef),
    BranchVoltage(usize, usize),
    BranchCurrent(usize, usize),
}

pub struct Solver {
    names: Vec<String>,
    labels: Vec<String>,
    slots: Vec<Slot>,
    unknowns: Vec<NodeRef>,
    fixed: Vec<NodeRef>,
    elems: Vec<Elem>,
    arresters: Vec<usize>,
    dt: f64,
    tol: f64,
    max_iter: usize,
    step_index: usize,
    backward_euler: bool,
    fact: Option<Factorization>,
    v: DVector<f64>,
    diag: Diagnostics,
}

fn stamp2(g: &mut DMatrix<f64>, a: NodeRef, b: NodeRef, x: f64) {
    let (a, b) = (a.index(), b.index());
    g[(a, a)] += x;
    g[(b, b)] += x;
    g[(a, b)] -= x;
    g[(b, a)] -= x;
}

/// Stamps a port conductance matrix; port `p` spans `ports[p].0 -> ports[p].1`.
fn stamp_ports(g: &mut DMatrix<f64>, ports: &[(NodeRef, NodeRef)], m: &DMatrix<f64>) {
    for (p, &(xp, yp)) in ports.iter().enumerate() {
        for (q, &(xq, yq)) in ports.iter().enumerate() {
            let val = m[(p, q)];
            g[(xp.index(), xq.index())] += val;
            g[(xp.index(), yq.index())] -= val;
            g[(yp.index(), xq.index())] -= val;
            g[(yp.index(), yq.index())] += val;
        }
    }
}

fn inject(b: &mut DVector<f64>, a: NodeRef, bn: NodeRef, j: f64) {
    // branch current a -> b of value j leaves a and enters b
    b[a.index()] -= j;
    b[bn.index()] += j;
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

impl Elem {
    fn from_branch(kind: &BranchKind, dt: f64) -> Result<Elem> {
        Ok(match kind {
            BranchKind::Resistor { a, b, ohms } => Elem::Resistor { a: *a, b: *b, g: 1.0 / ohms },
            BranchKind::Inductor { a, b, henries, initial_current } => {
                Elem::Inductor { a: *a, b: *b, l: *henries, i: *initial_current, v: 0.0, j: 0.0 }
            }
            BranchKind::Capacitor { a, b, farads, initial_voltage } => {
                Elem::Capacitor { a: *a, b: *b, c: *farads, i: 0.0, v: *initial_voltage, j: 0.0 }
            }
            BranchKind::Switch { a, b, closed, on_resistance } => {
                Elem::Switch { a: *a, b: *b, closed: *closed, g_on: 1.0 / on_resistance }
            }
            BranchKind::Gap { a, b, params, on_resistance } => {
                Elem::Gap { a: *a, b: *b, model: GapModel::new(*params), g_on: 1.0 / on_resistance }
            }
            BranchKind::CoupledRl { from, to, resistance, inductance } => {
                let n = from.len();
                Elem::CoupledRl {
                    from: from.clone(),
                    to: to.clone(),
                    r: resistance.clone(),
                    l: inductance.clone(),
                    g: DMatrix::zeros(n, n),
                    i: DVector::zeros(n),
                    v: DVector::zeros(n),
                    j: DVector::zeros(n),
                }
            }
            BranchKind::CoupledWinding(w) => {
                let l = w.leakage_henries();
                let n = w.ratio;
                let gamma = Matrix2::new(1.0, -n, -n, n * n) / l;
                Elem::Winding {
                    nodes: [w.primary.0, w.primary.1, w.secondary.0, w.secondary.1],
                    gamma,
                    leakage: l,
                    i: Vector2::zeros(),
                    v: Vector2::zeros(),
                    j: Vector2::zeros(),
                }
            }
            BranchKind::CpLine { sending, receiving, model } => {
                let n = model.conductors();
                Elem::Line {
                    send: sending.clone(),
                    recv: receiving.clone(),
                    model: model.clone(),
                    state: CpLineState::new(model, dt)?,
                    i_s: DVector::zeros(n),
                    i_r: DVector::zeros(n),
                    j_s: DVector::zeros(n),
                    j_r: DVector::zeros(n),
                }
            }
            BranchKind::NonlinearResistor { a, b, characteristic } => {
                Elem::Arrester { a: *a, b: *b, ch: characteristic.clone(), i: 0.0 }
            }
            BranchKind::CurrentSource { from, to, source } => {
                Elem::CurrentSource { from: *from, to: *to, src: source.clone(), value: 0.0 }
            }
            BranchKind::VoltageSource { node, source } => Elem::VoltageSource { node: *node, src: source.clone() },
        })
    }

    /// Whether the branch connects its terminals in the nodal matrix.
    fn conducts(&self) -> bool {
        match self {
            Elem::Switch { closed, .. } => *closed,
            Elem::Gap { model, .. } => model.is_flashed(),
            Elem::Arrester { .. } | Elem::CurrentSource { .. } | Elem::VoltageSource { .. } => false,
            _ => true,
        }
    }

    fn stamp(&self, g: &mut DMatrix<f64>, h: f64, be: bool) {
        let k = if be { 1.0 } else { 2.0 };
        match self {
            Elem::Resistor { a, b, g: x } => stamp2(g, *a, *b, *x),
            Elem::Inductor { a, b, l, .. } => stamp2(g, *a, *b, h / (k * l)),
            Elem::Capacitor { a, b, c, .. } => stamp2(g, *a, *b, k * c / h),
            Elem::Switch { a, b, closed, g_on } => {
                if *closed {
                    stamp2(g, *a, *b, *g_on)
                }
            }
            Elem::Gap { a, b, model, g_on } => {
                if model.is_flashed() {
                    stamp2(g, *a, *b, *g_on)
                }
            }
            Elem::CoupledRl { from, to, r, l, .. } => {
                let ports: Vec<_> = from.iter().copied().zip(to.iter().copied()).collect();
                let m = (r + l * (k / h)).try_inverse().expect("validated coupled RL");
                stamp_ports(g, &ports, &m);
            }
            Elem::Winding { nodes, gamma, .. } => {
                let m = gamma * (h / k);
                let m = DMatrix::from_fn(2, 2, |i, j| m[(i, j)]);
                stamp_ports(g, &[(nodes[0], nodes[1]), (nodes[2], nodes[3])], &m);
            }
            Elem::Line { send, recv, model, .. } => {
                let gl = model.conductance();
                let ps: Vec<_> = send.iter().map(|&n| (n, NodeRef::GROUND)).collect();
                let pr: Vec<_> = recv.iter().map(|&n| (n, NodeRef::GROUND)).collect();
                stamp_ports(g, &ps, gl);
                stamp_ports(g, &pr, gl);
            }
            Elem::Arrester { .. } | Elem::CurrentSource { .. } | Elem::VoltageSource { .. } => {}
        }
    }

    /// Computes the history terms for a step of size `h` ending at `t` and
    /// adds them to `b`.
    fn history(&mut self, b: &mut DVector<f64>, h: f64, be: bool, t: f64) {
        match self {
            Elem::Inductor { a, b: bn, l, i, v, j } => {
                *j = if be { *i } else { *i + h / (2.0 * *l) * *v };
                inject(b, *a, *bn, *j);
            }
            Elem::Capacitor { a, b: bn, c, i, v, j } => {
                *j = if be { -*c / h * *v } else { -2.0 * *c / h * *v - *i };
                inject(b, *a, *bn, *j);
            }
            Elem::CoupledRl { from, to, r, l, g, i, v, j } => {
                let k = if be { 1.0 } else { 2.0 };
                *g = (&*r + &*l * (k / h)).try_inverse().expect("validated coupled RL");
                *j = if be { &*g * (&*l * (1.0 / h) * &*i) } else { &*g * (&*v + (&*l * (2.0 / h) - &*r) * &*i) };
                for (p, (&x, &y)) in from.iter().zip(to.iter()).enumerate() {
                    inject(b, x, y, j[p]);
                }
            }
            Elem::Winding { nodes, gamma, i, v, j, .. } => {
                *j = if be { *i } else { *i + *gamma * (h / 2.0) * *v };
                inject(b, nodes[0], nodes[1], j[0]);
                inject(b, nodes[2], nodes[3], j[1]);
            }
            Elem::Line { send, recv, model, state, j_s, j_r, .. } => {
                let (js, jr) = state.history(model);
                for (k, &n) in send.iter().enumerate() {
                    inject(b, n, NodeRef::GROUND, js[k]);
                }
                for (k, &n) in recv.iter().enumerate() {
                    inject(b, n, NodeRef::GROUND, jr[k]);
                }
                *j_s = js;
                *j_r = jr;
            }
            Elem::CurrentSource { from, to, src, value } => {
                *value = src.value(t);
                inject(b, *from, *to, *value);
            }
            _ => {}
        }
    }

    /// Accepts the solved node voltages `v` at the end of the step.
    fn accept(&mut self, v: &DVector<f64>, h: f64, be: bool) {
        let vd = |a: NodeRef, b: NodeRef| v[a.index()] - v[b.index()];
        let k = if be { 1.0 } else { 2.0 };
        match self {
            Elem::Inductor { a, b, l, i, v: vp, j } => {
                *vp = vd(*a, *b);
                *i = h / (k * *l) * *vp + *j;
            }
            Elem::Capacitor { a, b, c, i, v: vp, j } => {
                *vp = vd(*a, *b);
                *i = k * *c / h * *vp + *j;
            }
            Elem::CoupledRl { from, to, g, i, v: vp, j, .. } => {
                *vp = DVector::from_iterator(from.len(), from.iter().zip(to.iter()).map(|(&x, &y)| vd(x, y)));
                *i = &*g * &*vp + &*j;
            }
            Elem::Winding { nodes, gamma, i, v: vp, j, .. } => {
                *vp = Vector2::new(vd(nodes[0], nodes[1]), vd(nodes[2], nodes[3]));
                *i = *gamma * (h / k) * *vp + *j;
            }
            Elem::Line { send, recv, model, state, i_s, i_r, j_s, j_r } => {
                let vs = DVector::from_iterator(send.len(), send.iter().map(|n| v[n.index()]));
                let vr = DVector::from_iterator(recv.len(), recv.iter().map(|n| v[n.index()]));
                *i_s = model.conductance() * &vs + &*j_s;
                *i_r = model.conductance() * &vr + &*j_r;
                state.advance(model, &vs, &vr);
            }
            _ => {}
        }
    }

    fn port_voltage(&self, v: &DVector<f64>, port: usize) -> Option<f64> {
        let vd = |a: NodeRef, b: NodeRef| v[a.index()] - v[b.index()];
        match self {
            Elem::Resistor { a, b, .. }
            | Elem::Inductor { a, b, .. }
            | Elem::Capacitor { a, b, .. }
            | Elem::Switch { a, b, .. }
            | Elem::Gap { a, b, .. }
            | Elem::Arrester { a, b, .. } => (port == 0).then(|| vd(*a, *b)),
            Elem::CurrentSource { from, to, .. } => (port == 0).then(|| vd(*from, *to)),
            Elem::VoltageSource { node, .. } => (port == 0).then(|| v[node.index()]),
            Elem::CoupledRl { from, to, .. } => (port < from.len()).then(|| vd(from[port], to[port])),
            Elem::Winding { nodes, .. } => (port < 2).then(|| vd(nodes[2 * port], nodes[2 * port + 1])),
            Elem::Line { send, recv, .. } => {
                let n = send.len();
                if port < n {
                    Some(v[send[port].index()])
                } else if port < 2 * n {
                    Some(v[recv[port - n].index()])
                } else {
                    None
                }
            }
        }
    }

    fn port_current(&self, v: &DVector<f64>, port: usize) -> Option<f64> {
        match self {
            Elem::Resistor { g, .. } => (port == 0).then(|| g * self.port_voltage(v, 0).unwrap()),
            Elem::Inductor { i, .. } | Elem::Capacitor { i, .. } | Elem::Arrester { i, .. } => (port == 0).then_some(*i),
            Elem::Switch { closed, g_on, .. } => {
                (port == 0).then(|| if *closed { g_on * self.port_voltage(v, 0).unwrap() } else { 0.0 })
            }
            Elem::Gap { model, g_on, .. } => (port == 0)
                .then(|| if model.is_flashed() { g_on * self.port_voltage(v, 0).unwrap() } else { 0.0 }),
            Elem::CoupledRl { i, .. } => i.get(port).copied(),
            Elem::Winding { i, .. } => (port < 2).then(|| i[port]),
            Elem::Line { i_s, i_r, .. } => {
                let n = i_s.len();
                if port < n {
                    Some(i_s[port])
                } else {
                    i_r.get(port - n).copied()
                }
            }
            Elem::CurrentSource { value, .. } => (port == 0).then_some(*value),
            Elem::VoltageSource { .. } => None,
        }
    }

    fn energy(&self) -> f64 {
        match self {
            Elem::Inductor { l, i, .. } => 0.5 * l * i * i,
            Elem::Capacitor { c, v, .. } => 0.5 * c * v * v,
            Elem::CoupledRl { l, i, .. } => 0.5 * (i.transpose() * l * i)[(0, 0)],
            Elem::Winding { leakage, i, .. } => 0.5 * leakage * i[0] * i[0],
            _ => 0.0,
        }
    }
}

impl Solver {
    pub fn new(circuit: &Circuit, config: &SimulationConfig) -> Result<Solver> {
        config.validate()?;
        let n = circuit.node_count();
        let mut slots = vec![Slot::Ground; n];
        let mut fixed = Vec::new();
        for br in circuit.branches() {
            if let BranchKind::VoltageSource { node, .. } = &br.kind {
                slots[node.index()] = Slot::Fixed(fixed.len());
                fixed.push(*node);
            }
        }
        let mut unknowns = Vec::new();
        for (k, slot) in slots.iter_mut().enumerate().skip(1) {
            if *slot == Slot::Ground {
                *slot = Slot::Unknown(unknowns.len());
                unknowns.push(NodeRef(k));
            }
        }
        let mut elems = Vec::with_capacity(circuit.branch_count());
        let mut arresters = Vec::new();
        for (k, br) in circuit.branches().iter().enumerate() {
            if let BranchKind::CpLine { model, .. } = &br.kind {
                model.check_time_step(&br.label, config.dt)?;
            }
            let e = Elem::from_branch(&br.kind, config.dt)?;
            if matches!(e, Elem::Arrester { .. }) {
                arresters.push(k);
            }
            elems.push(e);
        }
        let mut s = Solver {
            names: (0..n).map(|k| circuit.node_name(NodeRef(k)).to_string()).collect(),
            labels: circuit.branches().iter().map(|b| b.label.clone()).collect(),
            slots,
            unknowns,
            fixed,
            elems,
            arresters,
            dt: config.dt,
            tol: config.newton_tol,
            max_iter: config.newton_max_iter,
            step_index: 0,
            backward_euler: true,
            fact: None,
            v: DVector::zeros(n),
            diag: Diagnostics::default(),
        };
        s.check_connectivity()?;
        let has_ic = s.elems.iter().any(|e| match e {
            Elem::Inductor { i, .. } => *i != 0.0,
            Elem::Capacitor { v, .. } => *v != 0.0,
            _ => false,
        });
        let sine = s.elems.iter().find_map(|e| match e {
            Elem::VoltageSource { src, .. } | Elem::CurrentSource { src, .. } => src.sine_frequency(),
            _ => None,
        });
        let mode = match (config.init, sine) {
            (InitMode::Auto, Some(_)) if !has_ic => InitMode::SteadyState,
            (InitMode::SteadyState, None) => {
                return Err(Error::InvalidConfig("steady-state initialization needs a sinusoidal source".into()))
            }
            (InitMode::Auto, _) => InitMode::InitialConditions,
            (m, _) => m,
        };
        match mode {
            InitMode::SteadyState => s.init_steady_state(circuit, sine.unwrap())?,
            _ => s.init_snapshot()?,
        }
        Ok(s)
    }

    fn check_connectivity(&self) -> Result<()> {
        let n = self.names.len();
        let mut parent: Vec<usize> = (0..n).collect();
        let union = |p: &mut Vec<usize>, a: usize, b: usize| {
            let (ra, rb) = (find(p, a), find(p, b));
            if ra != rb {
                p[ra] = rb;
            }
        };
        for &f in &self.fixed {
            union(&mut parent, f.index(), 0);
        }
        for e in &self.elems {
            if !e.conducts() {
                continue;
            }
            match e {
                Elem::Line { send, recv, .. } => {
                    for &x in send.iter().chain(recv.iter()) {
                        union(&mut parent, x.index(), 0);
                    }
                }
                Elem::Winding { nodes, .. } => {
                    union(&mut parent, nodes[0].index(), nodes[1].index());
                    union(&mut parent, nodes[2].index(), nodes[3].index());
                }
                Elem::CoupledRl { from, to, .. } => {
                    for (&x, &y) in from.iter().zip(to.iter()) {
                        union(&mut parent, x.index(), y.index());
                    }
                }
                Elem::Resistor { a, b, .. }
                | Elem::Inductor { a, b, .. }
                | Elem::Capacitor { a, b, .. }
                | Elem::Switch { a, b, .. }
                | Elem::Gap { a, b, .. } => union(&mut parent, a.index(), b.index()),
                _ => {}
            }
        }
        let root = find(&mut parent, 0);
        for &u in &self.unknowns {
            if find(&mut parent, u.index()) != root {
                return Err(Error::SingularMatrix { node: self.names[u.index()].clone() });
            }
        }
        Ok(())
    }

    fn full_matrix(&self, h: f64, be: bool) -> DMatrix<f64> {
        let n = self.names.len();
        let mut g = DMatrix::zeros(n, n);
        for e in &self.elems {
            e.stamp(&mut g, h, be);
        }
        g
    }

    fn factorize(&mut self, h: f64, be: bool) -> Result<()> {
        self.check_connectivity()?;
        let g = self.full_matrix(h, be);
        let nu = self.unknowns.len();
        let g_uu = DMatrix::from_fn(nu, nu, |i, j| g[(self.unknowns[i].index(), self.unknowns[j].index())]);
        let g_up = DMatrix::from_fn(nu, self.fixed.len(), |i, j| g[(self.unknowns[i].index(), self.fixed[j].index())]);
        let lu = g_uu.lu();
        let na = self.arresters.len();
        let mut a = DMatrix::zeros(nu, na);
        for (k, &e) in self.arresters.iter().enumerate() {
            if let Elem::Arrester { a: x, b: y, .. } = &self.elems[e] {
                if let Slot::Unknown(u) = self.slots[x.index()] {
                    a[(u, k)] += 1.0;
                }
                if let Slot::Unknown(u) = self.slots[y.index()] {
                    a[(u, k)] -= 1.0;
                }
            }
        }
        let singular = || Error::SingularMatrix {
            node: self.unknowns.first().map_or("?".to_string(), |n| self.names[n.index()].clone()),
        };
        if nu > 0 && !lu.is_invertible() {
            return Err(singular());
        }
        let w = if na > 0 && nu > 0 { lu.solve(&a).ok_or_else(singular)? } else { DMatrix::zeros(nu, na) };
        let zth = a.transpose() * &w;
        let yth = if na > 1 { zth.clone().try_inverse() } else { None };
        self.fact = Some(Factorization { lu, g_up, w, zth, yth });
        self.diag.factorizations += 1;
        Ok(())
    }

    /// Solves one step of size `h` ending at time `t`. States are not
    /// updated; the full node voltage vector is returned.
    fn solve_at(&mut self, h: f64, be: bool, t: f64) -> Result<DVector<f64>> {
        let n = self.names.len();
        let mut b = DVector::zeros(n);
        for e in &mut self.elems {
            e.history(&mut b, h, be, t);
        }
        let mut v = DVector::zeros(n);
        let mut vp = DVector::zeros(self.fixed.len());
        for e in &self.elems {
            if let Elem::VoltageSource { node, src } = e {
                if let Slot::Fixed(k) = self.slots[node.index()] {
                    vp[k] = src.value(t);
                    v[node.index()] = vp[k];
                }
            }
        }
        let fact = self.fact.as_ref().expect("factorized");
        let nu = self.unknowns.len();
        let mut rhs = DVector::from_fn(nu, |i, _| b[self.unknowns[i].index()]);
        if !self.fixed.is_empty() {
            rhs -= &fact.g_up * &vp;
        }
        let mut vu = if nu > 0 { fact.lu.solve(&rhs).expect("invertible") } else { rhs };
        let iterations = if self.arresters.is_empty() {
            1
        } else {
            for (k, &u) in self.unknowns.iter().enumerate() {
                v[u.index()] = vu[k];
            }
            let currents = self.solve_arresters(&v, t)?;
            vu -= &self.fact.as_ref().expect("factorized").w * &currents.0;
            currents.1
        };
        for (k, &u) in self.unknowns.iter().enumerate() {
            v[u.index()] = vu[k];
        }
        self.diag.last_iterations = iterations;
        self.diag.max_iterations = self.diag.max_iterations.max(iterations);
        self.diag.total_iterations += iterations;
        Ok(v)
    }

    /// Arrester currents for the present step. One port is solved exactly
    /// in ln|i|; several ports go to a joint Newton solve.
    fn solve_arresters(&mut self, v_lin: &DVector<f64>, t: f64) -> Result<(DVector<f64>, usize)> {
        let fact = self.fact.as_ref().expect("factorized");
        let na = self.arresters.len();
        let mut v_oc = DVector::zeros(na);
        let mut cur = DVector::zeros(na);
        let mut chars = Vec::with_capacity(na);
        for (k, &e) in self.arresters.iter().enumerate() {
            if let Elem::Arrester { a, b, ch, i } = &self.elems[e] {
                v_oc[k] = v_lin[a.index()] - v_lin[b.index()];
                cur[k] = *i;
                chars.push(ch.clone());
            }
        }
        let (cur, iters) = match &fact.yth {
            Some(yth) => self.solve_ports_joint(&v_oc, &cur, &chars, &fact.zth, yth, t)?,
            None => self.solve_ports_sweep(&v_oc, cur, &chars, &fact.zth, t)?,
        };
        for (k, &e) in self.arresters.iter().enumerate() {
            if let Elem::Arrester { i, .. } = &mut self.elems[e] {
                *i = cur[k];
            }
        }
        Ok((cur, iters))
    }

    /// Newton on the port voltages `u`, minimizing the convex potential
    /// `(u - v_oc)' Y (u - v_oc) / 2 + sum_k int_0^u_k I_k`, whose stationary
    /// point is `u = v_oc - Zth I(u)`. Backtracking keeps every step a
    /// descent step, so the solve converges from any warm start.
    fn solve_ports_joint(
        &self,
        v_oc: &DVector<f64>,
        warm: &DVector<f64>,
        chars: &[Arc<ArresterCharacteristic>],
        zth: &DMatrix<f64>,
        yth: &DMatrix<f64>,
        t: f64,
    ) -> Result<(DVector<f64>, usize)> {
        let na = v_oc.len();
        let potential = |u: &DVector<f64>| {
            let d = u - v_oc;
            let q = 0.5 * d.dot(&(yth * &d));
            q + (0..na).map(|k| chars[k].current_integral(u[k])).sum::<f64>()
        };
        let mut u = v_oc - zth * warm;
        let mut phi = potential(&u);
        for it in 1..=self.max_iter {
            let mut i = DVector::zeros(na);
            let mut h = yth.clone();
            for k in 0..na {
                let (ik, dk) = chars[k].current_and_slope(u[k]);
                i[k] = ik;
                h[(k, k)] += dk;
            }
            let g = yth * (&u - v_oc) + &i;
            let step = h.lu().solve(&(-&g)).ok_or_else(|| Error::NewtonDivergence {
                time: t,
                branch: self.labels[self.arresters[0]].clone(),
                residual: g.amax(),
            })?;
            let slope = g.dot(&step);
            let mut s = 1.0;
            let mut next = &u + &step;
            let mut phi_next = potential(&next);
            for _ in 0..60 {
                if phi_next <= phi + 1e-4 * s * slope || (phi_next - phi).abs() <= 1e-14 * phi.abs() {
                    break;
                }
                s *= 0.5;
                next = &u + s * &step;
                phi_next = potential(&next);
            }
            let done = (0..na).all(|k| (s * step[k]).abs() <= self.tol * next[k].abs().max(1.0));
            u = next;
            phi = phi_next;
            if done {
                let cur = DVector::from_fn(na, |k, _| chars[k].current(u[k]));
                return Ok((cur, it));
            }
        }
        let i = DVector::from_fn(na, |k, _| chars[k].current(u[k]));
        let r = (yth * (&u - v_oc) + &i).amax();
        Err(Error::NewtonDivergence { time: t, branch: self.labels[self.arresters[0]].clone(), residual: r })
    }

    /// Gauss-Seidel sweeps with an exact scalar solve per port, used when
    /// the port impedance matrix is singular. A single arrester converges
    /// in one sweep.
    fn solve_ports_sweep(
        &self,
        v_oc: &DVector<f64>,
        mut cur: DVector<f64>,
        chars: &[Arc<ArresterCharacteristic>],
        zth: &DMatrix<f64>,
        t: f64,
    ) -> Result<(DVector<f64>, usize)> {
        let na = v_oc.len();
        let mut total = 0;
        let mut last_u = DVector::from_element(na, f64::NAN);
        for sweep in 1..=self.max_iter {
            for k in 0..na {
                let coupled: f64 = (0..na).filter(|&j| j != k).map(|j| zth[(k, j)] * cur[j]).sum();
                let drive = v_oc[k] - coupled;
                let (i, it) = chars[k]
                    .solve_port(drive, zth[(k, k)].max(0.0), Some(cur[k]), self.tol, self.max_iter)
                    .ok_or_else(|| Error::NewtonDivergence {
                        time: t,
                        branch: self.labels[self.arresters[k]].clone(),
                        residual: drive,
                    })?;
                cur[k] = i;
                total = total.max(it);
            }
            let u = v_oc - zth * &cur;
            let converged = (0..na).all(|k| (u[k] - last_u[k]).abs() <= self.tol * u[k].abs().max(1.0));
            if na == 1 || converged {
                return Ok((cur, if na == 1 { total } else { sweep }));
            }
            last_u = u;
        }
        let u = v_oc - zth * &cur;
        let (k, r) = (0..na)
            .map(|k| (k, (u[k] - chars[k].voltage(cur[k])).abs()))
            .fold((0, 0.0), |m, x| if x.1 > m.1 { x } else { m });
        Err(Error::NewtonDivergence { time: t, branch: self.labels[self.arresters[k]].clone(), residual: r })
    }

    /// `t = 0` state from element initial conditions: a vanishing
    /// backward-Euler step pins capacitor voltages and inductor currents
    /// while resolving the resistive network around them.
    fn init_snapshot(&mut self) -> Result<()> {
        let h = self.dt * 1e-6;
        self.factorize(h, true)?;
        let saved: Vec<Elem> = self.elems.clone();
        let v = self.solve_at(h, true, 0.0)?;
        // keep reactive states at their initial values, advance only the lines
        for (e, old) in self.elems.iter_mut().zip(saved) {
            match e {
                Elem::Line { .. } => e.accept(&v, h, true),
                Elem::Arrester { .. } | Elem::CurrentSource { .. } => {}
                _ => *e = old,
            }
        }
        self.v = v;
        self.backward_euler = true;
        self.fact = None;
        self.diag = Diagnostics { factorizations: self.diag.factorizations, ..Diagnostics::default() };
        Ok(())
    }

    fn init_steady_state(&mut self, circuit: &Circuit, frequency: f64) -> Result<()> {
        let ss = steady_state(circuit, frequency)?;
        let w = 2.0 * std::f64::consts::PI * frequency;
        let vfull = &ss.voltages;
        let re = |a: NodeRef, b: NodeRef| vfull[a.index()] - vfull[b.index()];
        let dt = self.dt;
        for e in &mut self.elems {
            match e {
                Elem::Inductor { a, b, l, i, v, .. } => {
                    let vab = re(*a, *b);
                    *v = vab.re;
                    *i = (vab / num_complex::Complex64::new(0.0, w * *l)).re;
                }
                Elem::Capacitor { a, b, c, i, v, .. } => {
                    let vab = re(*a, *b);
                    *v = vab.re;
                    *i = (vab * num_complex::Complex64::new(0.0, w * *c)).re;
                }
                Elem::CoupledRl { from, to, r, l, i, v, .. } => {
                    let vc = nalgebra::DVector::from_iterator(from.len(), from.iter().zip(to.iter()).map(|(&x, &y)| re(x, y)));
                    let z = DMatrix::from_fn(r.nrows(), r.ncols(), |p, q| num_complex::Complex64::new(r[(p, q)], w * l[(p, q)]));
                    let ic = z.try_inverse().expect("validated coupled RL") * &vc;
                    *v = vc.map(|x| x.re);
                    *i = ic.map(|x| x.re);
                }
                Elem::Winding { nodes, gamma, i, v, .. } => {
                    let vc = [re(nodes[0], nodes[1]), re(nodes[2], nodes[3])];
                    let jw = num_complex::Complex64::new(0.0, w);
                    let i0 = (vc[0] * gamma[(0, 0)] + vc[1] * gamma[(0, 1)]) / jw;
                    let i1 = (vc[0] * gamma[(1, 0)] + vc[1] * gamma[(1, 1)]) / jw;
                    *v = Vector2::new(vc[0].re, vc[1].re);
                    *i = Vector2::new(i0.re, i1.re);
                }
                Elem::Line { send, recv, model, state, i_s, i_r, .. } => {
                    let vs = DVector::from_iterator(send.len(), send.iter().map(|n| vfull[n.index()]));
                    let vr = DVector::from_iterator(recv.len(), recv.iter().map(|n| vfull[n.index()]));
                    state.init_sinusoidal(model, w, dt, &vs, &vr);
                    let (yss, ysr) = model.phasor_admittance(w);
                    *i_s = (&yss * &vs + &ysr * &vr).map(|x| x.re);
                    *i_r = (&ysr * &vs + &yss * &vr).map(|x| x.re);
                }
                Elem::CurrentSource { src, value, .. } => *value = src.value(0.0),
                _ => {}
            }
        }
        self.v = vfull.map(|x| x.re);
        self.backward_euler = false;
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diag
    }

    pub fn node_voltage(&self, n: NodeRef) -> f64 {
        self.v[n.index()]
    }

    pub fn voltages(&self) -> &DVector<f64> {
        &self.v
    }

    /// Magnetic and electric energy held in lumped elements (J).
    pub fn stored_energy(&self) -> f64 {
        self.elems.iter().map(Elem::energy).sum()
    }

    /// Advances the solution by one time step.
    pub fn step(&mut self) -> Result<()> {
        let be = self.backward_euler;
        if self.fact.is_none() {
            self.factorize(self.dt, be)?;
        }
        let t = (self.step_index + 1) as f64 * self.dt;
        let v = self.solve_at(self.dt, be, t)?;
        let mut topology_changed = false;
        for e in &mut self.elems {
            e.accept(&v, self.dt, be);
            if let Elem::Gap { a, b, model, .. } = e {
                if !model.is_flashed() && model.update(v[a.index()] - v[b.index()], self.dt) {
                    topology_changed = true;
                }
            }
        }
        self.v = v;
        self.step_index += 1;
        self.diag.steps += 1;
        if be || topology_changed {
            self.backward_euler = false;
            self.fact = None;
        }
        Ok(())
    }

    fn resolve_probe(&self, circuit: &Circuit, p: &crate::config::Probe) -> Result<ProbeRef> {
        let bad = |m: &str| Error::InvalidConfig(format!("probe '{}': {m}", p.name));
        if let Some(k) = circuit.branch_index(&p.target) {
            let e = &self.elems[k];
            return match p.quantity {
                Quantity::Voltage => {
                    e.port_voltage(&self.v, p.port).ok_or_else(|| bad("no such port"))?;
                    Ok(ProbeRef::BranchVoltage(k, p.port))
                }
                Quantity::Current => {
                    e.port_current(&self.v, p.port).ok_or_else(|| bad("current not available"))?;
                    Ok(ProbeRef::BranchCurrent(k, p.port))
                }
            };
        }
        match (circuit.node(&p.target), p.quantity) {
            (Some(n), Quantity::Voltage) => Ok(ProbeRef::Node(n)),
            (Some(_), Quantity::Current) => Err(bad("node current is undefined")),
            (None, _) => Err(bad(&format!("unknown target '{}'", p.target))),
        }
    }

    fn read(&self, p: ProbeRef) -> f64 {
        match p {
            ProbeRef::Node(n) => self.v[n.index()],
            ProbeRef::BranchVoltage(k, port) => self.elems[k].port_voltage(&self.v, port).unwrap_or(0.0),
            ProbeRef::BranchCurrent(k, port) => self.elems[k].port_current(&self.v, port).unwrap_or(0.0),
        }
    }

    /// State of gap `label`: `(flashed, flash time)` is tracked by callers via probes.
    pub fn gap_flashed(&self, circuit: &Circuit, label: &str) -> Option<bool> {
        let k = circuit.branch_index(label)?;
        match &self.elems[k] {
            Elem::Gap { model, .. } => Some(model.is_flashed()),
            _ => None,
        }
    }

    /// Labels of all gaps that have flashed over.
    pub fn flashed_gaps(&self) -> Vec<String> {
        self.elems
            .iter()
            .zip(&self.labels)
            .filter(|(e, _)| matches!(e, Elem::Gap { model, .. } if model.is_flashed()))
            .map(|(_, l)| l.clone())
            .collect()
    }
}

/// Builds the nodal matrix for the trapezoidal step `dt` with ground and
/// prescribed nodes eliminated.
pub fn assemble(circuit: &Circuit, dt: f64) -> Result<Assembly> {
    let cfg = SimulationConfig { dt, t_end: dt, init: InitMode::InitialConditions, ..SimulationConfig::default() };
    let s = Solver::new(circuit, &cfg)?;
    let g = s.full_matrix(dt, false);
    let nu = s.unknowns.len();
    let matrix = DMatrix::from_fn(nu, nu, |i, j| g[(s.unknowns[i].index(), s.unknowns[j].index())]);
    if nu > 0 && !matrix.clone().lu().is_invertible() {
        return Err(Error::SingularMatrix { node: s.names[s.unknowns[0].index()].clone() });
    }
    Ok(Assembly { matrix, unknowns: s.unknowns, prescribed: s.fixed })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub waveforms: Vec<(String, Waveform)>,
    pub diagnostics: Diagnostics,
    /// `(gap label, time of flashover)`.
    pub flashovers: Vec<(String, f64)>,
}

impl RunResult {
    pub fn get(&self, name: &str) -> Option<&Waveform> {
        self.waveforms.iter().find(|(n, _)| n == name).map(|(_, w)| w)
    }
}

/// Runs the circuit to `config.t_end`, sampling every probe at every step.
pub fn run(circuit: &Circuit, config: &SimulationConfig) -> Result<RunResult> {
    let mut s = Solver::new(circuit, config)?;
    let probes: Vec<ProbeRef> = config.probes.iter().map(|p| s.resolve_probe(circuit, p)).collect::<Result<_>>()?;
    let n = config.samples();
    let mut data: Vec<Vec<f64>> = probes.iter().map(|_| Vec::with_capacity(n)).collect();
    let record = |s: &Solver, data: &mut Vec<Vec<f64>>| {
        for (d, &p) in data.iter_mut().zip(&probes) {
            d.push(s.read(p));
        }
    };
    record(&s, &mut data);
    let mut flashovers: Vec<(String, f64)> = Vec::new();
    for _ in 1..n {
        s.step()?;
        record(&s, &mut data);
        for l in s.flashed_gaps() {
            if !flashovers.iter().any(|(x, _)| *x == l) {
                flashovers.push((l, s.time()));
            }
        }
    }
    let waveforms = config
        .probes
        .iter()
        .zip(data)
        .map(|(p, d)| {
            let unit = match p.quantity {
                Quantity::Voltage => Unit::Volt,
                Quantity::Current => Unit::Ampere,
            };
            Ok((p.name.clone(), Waveform::new(config.dt, 0.0, d, unit)?))
        })
        .collect::<Result<_>>()?;
    Ok(RunResult { waveforms, diagnostics: s.diagnostics(), flashovers })
}
