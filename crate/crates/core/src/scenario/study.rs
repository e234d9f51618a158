//! Netlist of the study system: plant bus, line with towers, far-end network.
//!
//! The plant HV bus sits at distance 0. Towers stand every `span` metres out
//! to `study_length`; the line between consecutive structures is one CP
//! section, and the section holding the strike point is split there. Past
//! the last tower the line is closed by its characteristic impedance in
//! series with the Thevenin equivalent of the remaining network.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::components::{
    build_plant, cigre_waveform, thevenin_from_sc, ArresterCharacteristic, GapParams, LightningSpec, PlantSpec,
    TheveninInput, TowerModel, TowerShape,
};
use crate::components::tower::{build_tower, Crossarm, ARM_INDUCTANCE_PER_M, DEFAULT_FOOTING_OHMS};
use crate::error::{Error, Result};
use crate::line::geometry::{line_parameters, ConductorGeometry, ConductorRole, DEFAULT_LINE_FREQUENCY};
use crate::line::modal::{modal_decompose, ModalDecomposition};
use crate::line::CpLineModel;
use crate::netlist::{BranchKind, Circuit, CircuitBuilder, NodeRef, SourceFn};

pub const PHASES: [&str; 3] = ["a", "b", "c"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrikeTarget {
    PhaseA,
    PhaseB,
    PhaseC,
    Shield,
    TowerTop,
}

impl StrikeTarget {
    fn phase_index(self) -> Option<usize> {
        match self {
            StrikeTarget::PhaseA => Some(0),
            StrikeTarget::PhaseB => Some(1),
            StrikeTarget::PhaseC => Some(2),
            _ => None,
        }
    }
}

/// Physical layout and component data shared by every scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyLayout {
    pub geometry: ConductorGeometry,
    /// Frequency at which line constants are evaluated (Hz).
    pub line_frequency: f64,
    /// Distance from the plant bus to the last modelled tower (m).
    pub study_length: f64,
    /// Distance from the plant bus to the first tower (m); towers then
    /// follow every span.
    pub first_tower: f64,
    pub tower_height: f64,
    pub tower_shape: TowerShape,
    pub footing_ohms: f64,
    /// Grounding rope run per tower (m), 1 uH/m.
    pub rope_length: f64,
    pub gap: GapParams,
    pub gap_on_resistance: f64,
    /// Terminal gantry with insulators at the plant bus.
    pub gantry: bool,
    /// Grounding resistance of the plant substation (ohm).
    pub substation_ground_ohms: f64,
    /// Length of the overhead connection from the gantry to the plant bus (m);
    /// zero puts the bus directly at the gantry.
    pub bus_connection: f64,
    pub plant: PlantSpec,
    pub thevenin: TheveninInput,
    pub power_frequency: f64,
    pub arrester: ArresterCharacteristic,
    /// With arresters on, also fit one across every tower insulator.
    pub line_arresters: bool,
    pub line_arrester: ArresterCharacteristic,
    /// Lead length between bus and arrester (m), 1 uH/m.
    pub arrester_lead_length: f64,
}

impl Default for StudyLayout {
    fn default() -> Self {
        StudyLayout {
            geometry: ConductorGeometry::study_line(),
            line_frequency: DEFAULT_LINE_FREQUENCY,
            study_length: 2950.0,
            first_tower: 250.0,
            tower_height: 26.5,
            tower_shape: TowerShape::Conical { base_radius: 3.0 },
            footing_ohms: DEFAULT_FOOTING_OHMS,
            rope_length: 0.0,
            gap: GapParams::from_cfo(crate::components::gap::DEFAULT_CFO_KV),
            gap_on_resistance: 1.0,
            gantry: true,
            substation_ground_ohms: 1.0,
            bus_connection: 0.0,
            plant: PlantSpec { hv_capacitance: DEFAULT_BUS_CAPACITANCE, ..PlantSpec::default() },
            thevenin: TheveninInput::default(),
            power_frequency: 50.0,
            arrester: ArresterCharacteristic::default_108kv(),
            line_arresters: true,
            line_arrester: ArresterCharacteristic::default_108kv(),
            arrester_lead_length: 5.0,
        }
    }
}

/// Lumped HV capacitance per phase at the plant bus (transformer bushings,
/// bus work, instrument transformers).
pub const DEFAULT_BUS_CAPACITANCE: f64 = 2e-9;

impl StudyLayout {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let span = self.geometry.span;
        if !(span > 0.0) || !(self.first_tower > 0.0 && self.first_tower <= span) {
            return Err(Error::InvalidComponent(format!(
                "first tower at {} m must lie within one span of {} m from the bus",
                self.first_tower, span
            )));
        }
        let n = (self.study_length - self.first_tower) / span;
        if !(n >= 0.0) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::InvalidComponent(format!(
                "study length {} m is not the first tower at {} m plus whole {} m spans",
                self.study_length, self.first_tower, span
            )));
        }
        for (what, v) in [
            ("footing resistance", self.footing_ohms),
            ("gap arc resistance", self.gap_on_resistance),
            ("substation ground", self.substation_ground_ohms),
            ("power frequency", self.power_frequency),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidComponent(format!("{what} must be positive, got {v}")));
            }
        }
        if !(self.rope_length >= 0.0 && self.arrester_lead_length >= 0.0 && self.bus_connection >= 0.0) {
            return Err(Error::InvalidComponent("rope and lead lengths must be non-negative".into()));
        }
        self.gap.validate().map_err(Error::InvalidComponent)?;
        Ok(())
    }

    pub fn tower_positions(&self) -> Vec<f64> {
        let n = ((self.study_length - self.first_tower) / self.geometry.span).round() as usize;
        (0..=n).map(|k| self.first_tower + k as f64 * self.geometry.span).collect()
    }

    fn phase_order(&self) -> Result<[usize; 3]> {
        let find = |r| {
            self.geometry
                .index_of(r)
                .ok_or_else(|| Error::InvalidGeometry(format!("geometry lacks conductor {r:?}")))
        };
        Ok([find(ConductorRole::PhaseA)?, find(ConductorRole::PhaseB)?, find(ConductorRole::PhaseC)?])
    }

    pub fn tower(&self) -> Result<TowerModel> {
        let order = self.phase_order()?;
        let arms: Vec<Crossarm> = order
            .iter()
            .map(|&k| {
                let c = &self.geometry.conductors[k];
                Crossarm { height: c.y_tower, length: c.x.abs() }
            })
            .collect();
        let mut t = build_tower(self.tower_height, &arms, self.tower_shape)?;
        t.footing_ohms = self.footing_ohms;
        t.rope_length = self.rope_length;
        Ok(t)
    }
}

/// What one simulation injects and where.
#[derive(Debug, Clone, PartialEq)]
pub struct Strike {
    pub lightning: LightningSpec,
    pub target: StrikeTarget,
    /// Distance from the plant bus (m).
    pub distance: f64,
    /// Optional lightning channel resistance in parallel with the source.
    pub channel_resistance: Option<f64>,
}

/// Netlist plus the names needed to probe it.
#[derive(Debug, Clone)]
pub struct StudyCircuit {
    pub circuit: Circuit,
    pub bus_nodes: [String; 3],
    /// Arrester branch labels, phase a..c, when arresters are fitted.
    pub arresters: Option<[String; 3]>,
    pub arrester_nodes: Option<[String; 3]>,
    pub strike_node: String,
}

fn node_tag(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("x{s}")
}

struct Point {
    x: f64,
    /// Conductor nodes in geometry order.
    nodes: Vec<NodeRef>,
}

/// Assembles the study netlist for one strike.
///
/// `point_on_wave` is the phase-a source angle (rad) at the stroke start:
/// zero puts the stroke on the positive crest of phase a.
pub fn build_study(
    layout: &StudyLayout,
    strike: &Strike,
    with_arrester: bool,
    point_on_wave: f64,
    dt: f64,
    t_end: f64,
) -> Result<StudyCircuit> {
    layout.validate()?;
    let towers = layout.tower_positions();
    let d = strike.distance;
    if !(d > 0.0 && d < layout.study_length) {
        return Err(Error::InvalidComponent(format!(
            "strike distance {d} m must lie inside (0, {}) m",
            layout.study_length
        )));
    }
    let on_tower = towers.iter().any(|&x| (x - d).abs() < 1e-6);
    if strike.target == StrikeTarget::TowerTop && !on_tower {
        return Err(Error::InvalidComponent(format!("no tower at {d} m for a tower-top strike")));
    }

    let geom = &layout.geometry;
    let order = layout.phase_order()?;
    let shield = geom.index_of(ConductorRole::Shield);
    let modal: ModalDecomposition = modal_decompose(&line_parameters(geom, layout.line_frequency)?)?;
    let tower = layout.tower()?;

    let mut xs: Vec<f64> = std::iter::once(0.0).chain(towers.iter().copied()).collect();
    if !on_tower {
        xs.push(d);
    }
    xs.sort_by(f64::total_cmp);

    let mut b = CircuitBuilder::new();
    let bus: [NodeRef; 3] = std::array::from_fn(|k| b.node(&format!("bus_{}", PHASES[k])));
    let points: Vec<Point> = xs
        .iter()
        .map(|&x| {
            let nodes = (0..geom.len())
                .map(|c| {
                    if x == 0.0 && layout.bus_connection == 0.0 {
                        if let Some(p) = order.iter().position(|&o| o == c) {
                            return bus[p];
                        }
                    }
                    let role = match geom.conductors[c].role {
                        ConductorRole::PhaseA => "a",
                        ConductorRole::PhaseB => "b",
                        ConductorRole::PhaseC => "c",
                        ConductorRole::Shield => "sw",
                    };
                    let name = format!("{}.{role}{}", node_tag(x), if role == "sw" { c.to_string() } else { String::new() });
                    b.node(&name)
                })
                .collect();
            Point { x, nodes }
        })
        .collect();

    // line sections, reusing models of equal length
    let mut models: BTreeMap<u64, Arc<CpLineModel>> = BTreeMap::new();
    for w in points.windows(2) {
        let len = w[1].x - w[0].x;
        let key = (len * 1e6).round() as u64;
        let model = match models.get(&key) {
            Some(m) => m.clone(),
            None => {
                let m = Arc::new(CpLineModel::from_modal(&modal, len)?);
                models.insert(key, m.clone());
                m
            }
        };
        let label = format!("line.{}-{}", node_tag(w[0].x), node_tag(w[1].x));
        model.check_time_step(&label, dt)?;
        b.add(label, BranchKind::CpLine { sending: w[0].nodes.clone(), receiving: w[1].nodes.clone(), model });
    }

    // towers and the plant-side gantry
    let phase_nodes = |p: &Point| -> Vec<NodeRef> { order.iter().map(|&k| p.nodes[k]).collect() };
    let on_resistance = layout.gap_on_resistance;
    let characteristic = Arc::new(layout.arrester.clone());
    let line_characteristic = Arc::new(layout.line_arrester.clone());
    for p in &points {
        let is_tower = towers.iter().any(|&x| (x - p.x).abs() < 1e-6);
        if is_tower {
            let top = match shield {
                Some(s) => p.nodes[s],
                None => b.node(&format!("{}.top", node_tag(p.x))),
            };
            let prefix = format!("tw.{}", node_tag(p.x));
            let phases = phase_nodes(p);
            let tips = tower.attach(&mut b, &prefix, top, &phases, &layout.gap, on_resistance)?;
            if with_arrester && layout.line_arresters {
                for (k, (&ph, &tip)) in phases.iter().zip(&tips).enumerate() {
                    b.add(
                        format!("{prefix}.arrester_{}", PHASES[k]),
                        BranchKind::NonlinearResistor { a: ph, b: tip, characteristic: line_characteristic.clone() },
                    );
                }
            }
        }
    }
    let origin = &points[0];
    if layout.bus_connection > 0.0 {
        let mut ends: Vec<NodeRef> = Vec::with_capacity(geom.len());
        for c in 0..geom.len() {
            match order.iter().position(|&o| o == c) {
                Some(p) => ends.push(bus[p]),
                None => {
                    let sw = b.node(&format!("bus.sw{c}"));
                    b.resistor(&format!("bus.ground{c}"), sw, NodeRef::GROUND, layout.substation_ground_ohms);
                    ends.push(sw);
                }
            }
        }
        let model = Arc::new(CpLineModel::from_modal(&modal, layout.bus_connection)?);
        model.check_time_step("bus.connection", dt)?;
        b.add("bus.connection", BranchKind::CpLine { sending: ends, receiving: origin.nodes.clone(), model });
    }
    if layout.gantry {
        let mut gantry = tower.clone();
        gantry.footing_ohms = layout.substation_ground_ohms;
        let top = match shield {
            Some(s) => origin.nodes[s],
            None => b.node("gantry.top"),
        };
        gantry.attach(&mut b, "gantry", top, &phase_nodes(origin), &layout.gap, on_resistance)?;
    } else if let Some(s) = shield {
        b.resistor("substation.ground", origin.nodes[s], NodeRef::GROUND, layout.substation_ground_ohms);
    }

    // far-end network
    let th = thevenin_from_sc(&layout.thevenin)?;
    let (r_th, l_th) = th.phase_matrices(layout.power_frequency);
    let last = points.last().expect("at least two points");
    let far = last.x;
    let zc = modal.characteristic_admittance().try_inverse().ok_or_else(|| {
        Error::ModalDecomposition("characteristic admittance is singular".into())
    })?;
    let n = geom.len();
    let mut r = zc;
    let mut l = DMatrix::zeros(n, n);
    let mut to = vec![NodeRef::GROUND; n];
    let src: [NodeRef; 3] = std::array::from_fn(|k| b.node(&format!("network.{}", PHASES[k])));
    for (i, &ci) in order.iter().enumerate() {
        to[ci] = src[i];
        for (j, &cj) in order.iter().enumerate() {
            r[(ci, cj)] += r_th[(i, j)];
            l[(ci, cj)] = l_th[(i, j)];
        }
    }
    b.add(
        format!("network.termination@{}", node_tag(far)),
        BranchKind::CoupledRl { from: last.nodes.clone(), to, resistance: r, inductance: l },
    );
    let peak = th.phase_peak();
    let w = 2.0 * PI * layout.power_frequency;
    let angle = point_on_wave - w * strike.lightning.start;
    for k in 0..3 {
        b.add(
            format!("network.V_{}", PHASES[k]),
            BranchKind::VoltageSource {
                node: src[k],
                source: SourceFn::Sine {
                    amplitude: peak,
                    frequency: layout.power_frequency,
                    phase: angle - 2.0 * PI / 3.0 * k as f64,
                },
            },
        );
    }
    build_plant(&mut b, &layout.plant, &bus, peak, angle)?;

    // arresters at the plant bus
    let (arresters, arrester_nodes) = if with_arrester {
        let ch = characteristic;
        let mut labels: [String; 3] = Default::default();
        let mut nodes: [String; 3] = Default::default();
        for k in 0..3 {
            let a = if layout.arrester_lead_length > 0.0 {
                let name = format!("arrester_{}.top", PHASES[k]);
                let t = b.node(&name);
                b.inductor(
                    &format!("arrester_{}.lead", PHASES[k]),
                    bus[k],
                    t,
                    ARM_INDUCTANCE_PER_M * layout.arrester_lead_length,
                );
                nodes[k] = name;
                t
            } else {
                nodes[k] = format!("bus_{}", PHASES[k]);
                bus[k]
            };
            labels[k] = format!("arrester_{}", PHASES[k]);
            b.add(labels[k].clone(), BranchKind::NonlinearResistor { a, b: NodeRef::GROUND, characteristic: ch.clone() });
        }
        (Some(labels), Some(nodes))
    } else {
        (None, None)
    };

    // lightning stroke
    let strike_point = points.iter().find(|p| (p.x - d).abs() < 1e-6).expect("strike point is a breakpoint");
    let target = match strike.target.phase_index() {
        Some(k) => strike_point.nodes[order[k]],
        None => {
            let s = shield.ok_or_else(|| Error::InvalidComponent("shield strike on a line without shield wire".into()))?;
            strike_point.nodes[s]
        }
    };
    let stroke = cigre_waveform(&strike.lightning, dt, t_end)?;
    b.add(
        "lightning",
        BranchKind::CurrentSource { from: NodeRef::GROUND, to: target, source: SourceFn::Sampled(Arc::new(stroke)) },
    );
    if let Some(rc) = strike.channel_resistance {
        b.resistor("lightning.channel", target, NodeRef::GROUND, rc);
    }

    let circuit = b.build()?;
    let strike_node = circuit.node_name(target).to_string();
    Ok(StudyCircuit {
        bus_nodes: std::array::from_fn(|k| format!("bus_{}", PHASES[k])),
        arresters,
        arrester_nodes,
        strike_node,
        circuit,
    })
}
