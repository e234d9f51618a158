//! Circuit description: nodes, branches and sources.
//!
//! Node 0 is ground. Every other node voltage is measured against it.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::components::arrester::ArresterCharacteristic;
use crate::components::gap::GapParams;
use crate::error::{Error, Result};
use crate::line::CpLineModel;
use crate::waveform::Waveform;

pub const GROUND_NAME: &str = "gnd";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef(pub usize);

impl NodeRef {
    pub const GROUND: NodeRef = NodeRef(0);

    pub fn is_ground(self) -> bool {
        self.0 == 0
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// Time function driving a source.
#[derive(Debug, Clone)]
pub enum SourceFn {
    Dc(f64),
    /// `amplitude * cos(2*pi*frequency*t + phase)`
    Sine { amplitude: f64, frequency: f64, phase: f64 },
    /// Linearly interpolated samples, held constant outside the record.
    Sampled(Arc<Waveform>),
}

impl SourceFn {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            SourceFn::Dc(v) => *v,
            SourceFn::Sine { amplitude, frequency, phase } => {
                amplitude * (2.0 * PI * frequency * t + phase).cos()
            }
            SourceFn::Sampled(w) => w.value_at(t),
        }
    }

    /// Phasor at `frequency` for the power-frequency initialization.
    /// Only sinusoids of that exact frequency contribute.
    pub fn phasor(&self, frequency: f64) -> Complex64 {
        match self {
            SourceFn::Sine { amplitude, frequency: f, phase } if (*f - frequency).abs() < 1e-9 => {
                Complex64::from_polar(*amplitude, *phase)
            }
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn sine_frequency(&self) -> Option<f64> {
        match self {
            SourceFn::Sine { frequency, .. } => Some(*frequency),
            _ => None,
        }
    }
}

/// Two-winding leakage transformer, one per phase.
///
/// Winding 1 sits between `primary.0` and `primary.1`, winding 2 between
/// `secondary.0` and `secondary.1`. The magnetizing branch is ignored, so
/// `i2 = -ratio * i1` and `v1 - ratio * v2 = L_leak * di1/dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledWinding {
    pub primary: (NodeRef, NodeRef),
    pub secondary: (NodeRef, NodeRef),
    /// Leakage reactance on the transformer rating.
    pub x_pu: f64,
    pub base_mva: f64,
    /// Line-to-line voltage of the primary side, used for the impedance base.
    pub base_kv: f64,
    /// Winding voltage ratio `V1 / V2`.
    pub ratio: f64,
    pub frequency: f64,
    pub connection: String,
}

impl CoupledWinding {
    pub fn leakage_ohms(&self) -> f64 {
        self.x_pu * self.base_kv * self.base_kv / self.base_mva
    }

    pub fn leakage_henries(&self) -> f64 {
        self.leakage_ohms() / (2.0 * PI * self.frequency)
    }
}

#[derive(Debug, Clone)]
pub enum BranchKind {
    Resistor { a: NodeRef, b: NodeRef, ohms: f64 },
    Inductor { a: NodeRef, b: NodeRef, henries: f64, initial_current: f64 },
    Capacitor { a: NodeRef, b: NodeRef, farads: f64, initial_voltage: f64 },
    /// Series multiport `v_from - v_to = R i + L di/dt`.
    CoupledRl { from: Vec<NodeRef>, to: Vec<NodeRef>, resistance: DMatrix<f64>, inductance: DMatrix<f64> },
    /// Metal-oxide arrester given by its U-I characteristic.
    NonlinearResistor { a: NodeRef, b: NodeRef, characteristic: Arc<ArresterCharacteristic> },
    /// Air gap following the equal-area flashover criterion.
    Gap { a: NodeRef, b: NodeRef, params: GapParams, on_resistance: f64 },
    Switch { a: NodeRef, b: NodeRef, closed: bool, on_resistance: f64 },
    /// Multiconductor constant-parameter line between two node sets.
    CpLine { sending: Vec<NodeRef>, receiving: Vec<NodeRef>, model: Arc<CpLineModel> },
    CoupledWinding(CoupledWinding),
    /// Current flowing out of `from` and into `to`.
    CurrentSource { from: NodeRef, to: NodeRef, source: SourceFn },
    /// Prescribed node-to-ground voltage.
    VoltageSource { node: NodeRef, source: SourceFn },
}

impl BranchKind {
    pub fn nodes(&self) -> Vec<NodeRef> {
        use BranchKind::*;
        match self {
            Resistor { a, b, .. }
            | Inductor { a, b, .. }
            | Capacitor { a, b, .. }
            | NonlinearResistor { a, b, .. }
            | Gap { a, b, .. }
            | Switch { a, b, .. } => vec![*a, *b],
            CoupledRl { from, to, .. } => from.iter().chain(to.iter()).copied().collect(),
            CpLine { sending, receiving, .. } => sending.iter().chain(receiving.iter()).copied().collect(),
            CoupledWinding(w) => vec![w.primary.0, w.primary.1, w.secondary.0, w.secondary.1],
            CurrentSource { from, to, .. } => vec![*from, *to],
            VoltageSource { node, .. } => vec![*node],
        }
    }

    pub fn type_name(&self) -> &'static str {
        use BranchKind::*;
        match self {
            Resistor { .. } => "resistor",
            Inductor { .. } => "inductor",
            Capacitor { .. } => "capacitor",
            CoupledRl { .. } => "coupled-rl",
            NonlinearResistor { .. } => "nonlinear-resistor",
            Gap { .. } => "gap",
            Switch { .. } => "switch",
            CpLine { .. } => "cp-line",
            CoupledWinding(_) => "coupled-winding",
            CurrentSource { .. } => "current-source",
            VoltageSource { .. } => "voltage-source",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub label: String,
    pub kind: BranchKind,
}

/// A validated netlist. Construct through [`CircuitBuilder`] or [`build_circuit`].
#[derive(Debug, Clone)]
pub struct Circuit {
    node_names: Vec<String>,
    branches: Vec<Branch>,
}

impl Circuit {
    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn node_name(&self, n: NodeRef) -> &str {
        &self.node_names[n.0]
    }

    pub fn node(&self, name: &str) -> Option<NodeRef> {
        if name == GROUND_NAME || name == "0" {
            return Some(NodeRef::GROUND);
        }
        self.node_names.iter().position(|n| n == name).map(NodeRef)
    }

    pub fn branch(&self, label: &str) -> Option<&Branch> {
        self.branches.iter().find(|b| b.label == label)
    }

    pub fn branch_index(&self, label: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.label == label)
    }
}

#[derive(Debug, Default)]
pub struct CircuitBuilder {
    names: Vec<String>,
    lookup: HashMap<String, NodeRef>,
    branches: Vec<Branch>,
}

impl CircuitBuilder {
    pub fn new() -> Self {
        let mut b = CircuitBuilder::default();
        b.names.push(GROUND_NAME.to_string());
        b.lookup.insert(GROUND_NAME.to_string(), NodeRef::GROUND);
        b
    }

    /// Returns the node with this name, declaring it on first use.
    pub fn node(&mut self, name: &str) -> NodeRef {
        if name == "0" {
            return NodeRef::GROUND;
        }
        if let Some(&n) = self.lookup.get(name) {
            return n;
        }
        let n = NodeRef(self.names.len());
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), n);
        n
    }

    pub fn add(&mut self, label: impl Into<String>, kind: BranchKind) -> &mut Self {
        self.branches.push(Branch { label: label.into(), kind });
        self
    }

    pub fn resistor(&mut self, label: &str, a: NodeRef, b: NodeRef, ohms: f64) -> &mut Self {
        self.add(label, BranchKind::Resistor { a, b, ohms })
    }

    pub fn inductor(&mut self, label: &str, a: NodeRef, b: NodeRef, henries: f64) -> &mut Self {
        self.add(label, BranchKind::Inductor { a, b, henries, initial_current: 0.0 })
    }

    pub fn capacitor(&mut self, label: &str, a: NodeRef, b: NodeRef, farads: f64) -> &mut Self {
        self.add(label, BranchKind::Capacitor { a, b, farads, initial_voltage: 0.0 })
    }

    pub fn build(self) -> Result<Circuit> {
        let circuit = Circuit { node_names: self.names, branches: self.branches };
        validate(&circuit)?;
        Ok(circuit)
    }
}

fn positive(branch: &str, what: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveValue { branch: branch.to_string(), what, value })
    }
}

fn validate(c: &Circuit) -> Result<()> {
    let mut labels = HashSet::new();
    let mut driven = HashSet::new();
    for br in &c.branches {
        if !labels.insert(br.label.as_str()) {
            return Err(Error::DuplicateLabel(br.label.clone()));
        }
        for n in br.kind.nodes() {
            if n.0 >= c.node_names.len() {
                return Err(Error::DanglingNode { branch: br.label.clone(), node: format!("#{}", n.0) });
            }
        }
        let l = br.label.as_str();
        match &br.kind {
            BranchKind::Resistor { ohms, .. } => positive(l, "resistance", *ohms)?,
            BranchKind::Inductor { henries, .. } => positive(l, "inductance", *henries)?,
            BranchKind::Capacitor { farads, .. } => positive(l, "capacitance", *farads)?,
            BranchKind::Gap { on_resistance, params, .. } => {
                positive(l, "arc resistance", *on_resistance)?;
                params.validate().map_err(|e| Error::InvalidCircuit(format!("{l}: {e}")))?;
            }
            BranchKind::Switch { on_resistance, .. } => positive(l, "on resistance", *on_resistance)?,
            BranchKind::CoupledRl { from, to, resistance, inductance } => {
                let n = from.len();
                if to.len() != n
                    || resistance.shape() != (n, n)
                    || inductance.shape() != (n, n)
                    || n == 0
                {
                    return Err(Error::InvalidCircuit(format!("{l}: coupled RL dimensions disagree")));
                }
                if (0..n).any(|k| resistance[(k, k)] < 0.0 || inductance[(k, k)] < 0.0) {
                    return Err(Error::NonPositiveValue {
                        branch: l.to_string(),
                        what: "coupled RL diagonal",
                        value: -1.0,
                    });
                }
                let tangent = resistance + inductance;
                if tangent.clone().try_inverse().is_none() {
                    return Err(Error::InvalidCircuit(format!("{l}: coupled RL matrix is singular")));
                }
            }
            BranchKind::CpLine { sending, receiving, model } => {
                if sending.len() != model.conductors() || receiving.len() != model.conductors() {
                    return Err(Error::InvalidCircuit(format!(
                        "{l}: line has {} conductors but {}/{} terminals",
                        model.conductors(),
                        sending.len(),
                        receiving.len()
                    )));
                }
            }
            BranchKind::CoupledWinding(w) => {
                positive(l, "winding ratio", w.ratio)?;
                positive(l, "leakage reactance", w.x_pu)?;
                positive(l, "base MVA", w.base_mva)?;
                positive(l, "base kV", w.base_kv)?;
                positive(l, "frequency", w.frequency)?;
            }
            BranchKind::VoltageSource { node, .. } => {
                if node.is_ground() {
                    return Err(Error::InvalidCircuit(format!("{l}: voltage source on ground node")));
                }
                if !driven.insert(*node) {
                    return Err(Error::InvalidCircuit(format!(
                        "{l}: node '{}' already driven by another voltage source",
                        c.node_names[node.0]
                    )));
                }
            }
            BranchKind::NonlinearResistor { .. } | BranchKind::CurrentSource { .. } => {}
        }
    }
    Ok(())
}

/// Textual element description used by configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElementSpec {
    Resistor { label: String, nodes: [String; 2], ohms: f64 },
    Inductor { label: String, nodes: [String; 2], henries: f64 },
    Capacitor { label: String, nodes: [String; 2], farads: f64 },
    Switch { label: String, nodes: [String; 2], closed: bool },
    CurrentSource { label: String, nodes: [String; 2], dc: Option<f64>, amplitude: Option<f64>, frequency: Option<f64> },
    VoltageSource { label: String, node: String, dc: Option<f64>, amplitude: Option<f64>, frequency: Option<f64> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub nodes: Vec<String>,
    pub elements: Vec<ElementSpec>,
}

fn source_from(dc: Option<f64>, amplitude: Option<f64>, frequency: Option<f64>) -> SourceFn {
    match (amplitude, frequency) {
        (Some(amplitude), Some(frequency)) => SourceFn::Sine { amplitude, frequency, phase: 0.0 },
        _ => SourceFn::Dc(dc.unwrap_or(0.0)),
    }
}

/// Resolves a named netlist into a validated [`Circuit`].
pub fn build_circuit(spec: &CircuitSpec) -> Result<Circuit> {
    let mut b = CircuitBuilder::new();
    let mut declared = HashSet::new();
    for n in &spec.nodes {
        b.node(n);
        declared.insert(n.as_str());
    }
    let resolve = |b: &mut CircuitBuilder, label: &str, name: &str| -> Result<NodeRef> {
        if name == GROUND_NAME || name == "0" {
            return Ok(NodeRef::GROUND);
        }
        if !declared.contains(name) {
            return Err(Error::DanglingNode { branch: label.to_string(), node: name.to_string() });
        }
        Ok(b.node(name))
    };
    for e in &spec.elements {
        let (label, kind) = match e {
            ElementSpec::Resistor { label, nodes, ohms } => {
                let (a, bb) = (resolve(&mut b, label, &nodes[0])?, resolve(&mut b, label, &nodes[1])?);
                (label, BranchKind::Resistor { a, b: bb, ohms: *ohms })
            }
            ElementSpec::Inductor { label, nodes, henries } => {
                let (a, bb) = (resolve(&mut b, label, &nodes[0])?, resolve(&mut b, label, &nodes[1])?);
                (label, BranchKind::Inductor { a, b: bb, henries: *henries, initial_current: 0.0 })
            }
            ElementSpec::Capacitor { label, nodes, farads } => {
                let (a, bb) = (resolve(&mut b, label, &nodes[0])?, resolve(&mut b, label, &nodes[1])?);
                (label, BranchKind::Capacitor { a, b: bb, farads: *farads, initial_voltage: 0.0 })
            }
            ElementSpec::Switch { label, nodes, closed } => {
                let (a, bb) = (resolve(&mut b, label, &nodes[0])?, resolve(&mut b, label, &nodes[1])?);
                (label, BranchKind::Switch { a, b: bb, closed: *closed, on_resistance: 1e-3 })
            }
            ElementSpec::CurrentSource { label, nodes, dc, amplitude, frequency } => {
                let (from, to) = (resolve(&mut b, label, &nodes[0])?, resolve(&mut b, label, &nodes[1])?);
                (label, BranchKind::CurrentSource { from, to, source: source_from(*dc, *amplitude, *frequency) })
            }
            ElementSpec::VoltageSource { label, node, dc, amplitude, frequency } => {
                let node = resolve(&mut b, label, node)?;
                (label, BranchKind::VoltageSource { node, source: source_from(*dc, *amplitude, *frequency) })
            }
        };
        b.add(label.clone(), kind);
    }
    b.build()
}
