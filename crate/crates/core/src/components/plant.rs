//! Solar plant seen from the HV bus: step-up transformer, collector PI
//! section, aggregated inverter transformers and inverter-side sources.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netlist::{BranchKind, CircuitBuilder, CoupledWinding, NodeRef, SourceFn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerData {
    pub connection: String,
    pub rated_mva: f64,
    pub frequency: f64,
    /// Line-to-line voltage of the low-voltage (delta) side, kV.
    pub lv_kv: f64,
    /// Line-to-line voltage of the high-voltage (star) side, kV.
    pub hv_kv: f64,
    pub r_pu: f64,
    pub x_pu: f64,
    /// Share of the leakage impedance assigned to winding 1. With purely
    /// reactive windings it does not change the terminal behaviour.
    pub impedance_ratio: f64,
    /// Number of identical units in parallel.
    pub units: u32,
}

impl TransformerData {
    /// 70 MVA Yd5 110/20 kV step-up transformer.
    pub fn plant_step_up() -> Self {
        TransformerData {
            connection: "Yd5".into(),
            rated_mva: 70.0,
            frequency: 50.0,
            lv_kv: 20.0,
            hv_kv: 110.0,
            r_pu: 0.0,
            x_pu: 0.11,
            impedance_ratio: 0.968,
            units: 1,
        }
    }

    /// 3.5 MVA Yd5 20/0.575 kV inverter transformer, 20 units aggregated.
    pub fn inverter() -> Self {
        TransformerData {
            connection: "Yd5".into(),
            rated_mva: 3.5,
            frequency: 50.0,
            lv_kv: 0.575,
            hv_kv: 20.0,
            r_pu: 0.0,
            x_pu: 0.06,
            impedance_ratio: 0.998,
            units: 20,
        }
    }

    pub fn total_mva(&self) -> f64 {
        self.rated_mva * self.units as f64
    }

    /// Leakage reactance referred to the HV side (ohm).
    pub fn leakage_ohms(&self) -> f64 {
        self.x_pu * self.hv_kv * self.hv_kv / self.total_mva()
    }

    /// Star winding phase voltage over delta winding voltage.
    pub fn winding_ratio(&self) -> f64 {
        self.hv_kv / 3f64.sqrt() / self.lv_kv
    }

    pub fn validate(&self) -> Result<()> {
        if self.connection != "Yd5" {
            return Err(Error::InvalidComponent(format!("unsupported connection '{}'", self.connection)));
        }
        if !(self.x_pu > 0.0) {
            return Err(Error::NonPositiveValue { branch: "transformer".into(), what: "reactance", value: self.x_pu });
        }
        if self.r_pu != 0.0 {
            return Err(Error::InvalidComponent("winding resistance is not modelled".into()));
        }
        if !(self.rated_mva > 0.0 && self.lv_kv > 0.0 && self.hv_kv > self.lv_kv && self.units > 0) {
            return Err(Error::InvalidComponent("transformer ratings must be positive with hv > lv".into()));
        }
        if !(self.impedance_ratio > 0.0 && self.impedance_ratio <= 1.0) {
            return Err(Error::InvalidComponent("impedance ratio must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// Adds three single-phase windings. Star side `hv` to grounded neutral;
    /// delta winding of phase k spans `lv[k-1] -> lv[k]`, which gives the
    /// 150 degree lag of the Yd5 vector group.
    fn attach(&self, b: &mut CircuitBuilder, prefix: &str, hv: &[NodeRef; 3], lv: &[NodeRef; 3]) {
        for k in 0..3 {
            let w = CoupledWinding {
                primary: (hv[k], NodeRef::GROUND),
                secondary: (lv[(k + 2) % 3], lv[k]),
                x_pu: self.x_pu,
                base_mva: self.total_mva(),
                base_kv: self.hv_kv,
                ratio: self.winding_ratio(),
                frequency: self.frequency,
                connection: self.connection.clone(),
            };
            b.add(format!("{prefix}.{}", ["a", "b", "c"][k]), BranchKind::CoupledWinding(w));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiSection {
    /// Series resistance per phase (ohm).
    pub r: f64,
    /// Series inductance per phase (H).
    pub l: f64,
    /// Total shunt capacitance per phase (F), split between both ends.
    pub c: f64,
}

impl Default for PiSection {
    fn default() -> Self {
        PiSection { r: 0.5, l: 1.5e-3, c: 2e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub step_up: TransformerData,
    pub inverter: TransformerData,
    pub collector: PiSection,
    /// Lumped HV capacitance to ground per phase at the plant bus (F).
    pub hv_capacitance: f64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            step_up: TransformerData::plant_step_up(),
            inverter: TransformerData::inverter(),
            collector: PiSection::default(),
            hv_capacitance: 10e-9,
        }
    }
}

/// Inverter-side voltage phasor for an HV phase-a phasor `(peak, angle)`:
/// two Yd5 stages shift by -300 degrees in total.
pub fn inverter_source_phasor(spec: &PlantSpec, hv_peak: f64, hv_angle: f64) -> (f64, f64) {
    let ratio = spec.inverter.lv_kv / spec.step_up.hv_kv * (spec.step_up.lv_kv / spec.inverter.hv_kv);
    (hv_peak * ratio, hv_angle - 2.0 * 150f64.to_radians())
}

/// Adds the plant behind `hv` (phase a, b, c bus nodes). The inverter
/// sources hold the no-load voltage for a phase-a HV phasor `(peak, angle)`
/// at `frequency`.
pub fn build_plant(
    b: &mut CircuitBuilder,
    spec: &PlantSpec,
    hv: &[NodeRef; 3],
    hv_peak: f64,
    hv_angle: f64,
) -> Result<()> {
    spec.step_up.validate()?;
    spec.inverter.validate()?;
    if (spec.step_up.lv_kv - spec.inverter.hv_kv).abs() > 1e-9 {
        return Err(Error::InvalidComponent("collector voltage differs between transformers".into()));
    }
    let pi = &spec.collector;
    if !(pi.r >= 0.0 && pi.l > 0.0 && pi.c > 0.0 && spec.hv_capacitance > 0.0) {
        return Err(Error::InvalidComponent("collector and bus values must be positive".into()));
    }
    let names = ["a", "b", "c"];
    let mv1: [NodeRef; 3] = std::array::from_fn(|k| b.node(&format!("plant.mv1_{}", names[k])));
    let mv2: [NodeRef; 3] = std::array::from_fn(|k| b.node(&format!("plant.mv2_{}", names[k])));
    let lv: [NodeRef; 3] = std::array::from_fn(|k| b.node(&format!("plant.inv_{}", names[k])));
    for k in 0..3 {
        b.capacitor(&format!("plant.Cbus_{}", names[k]), hv[k], NodeRef::GROUND, spec.hv_capacitance);
    }
    spec.step_up.attach(b, "plant.T1", hv, &mv1);
    for k in 0..3 {
        b.capacitor(&format!("plant.Cpi1_{}", names[k]), mv1[k], NodeRef::GROUND, pi.c / 2.0);
        b.capacitor(&format!("plant.Cpi2_{}", names[k]), mv2[k], NodeRef::GROUND, pi.c / 2.0);
    }
    b.add(
        "plant.collector",
        BranchKind::CoupledRl {
            from: mv1.to_vec(),
            to: mv2.to_vec(),
            resistance: DMatrix::from_diagonal_element(3, 3, pi.r),
            inductance: DMatrix::from_diagonal_element(3, 3, pi.l),
        },
    );
    spec.inverter.attach(b, "plant.T2", &mv2, &lv);
    let (peak, angle) = inverter_source_phasor(spec, hv_peak, hv_angle);
    for k in 0..3 {
        b.add(
            format!("plant.Vinv_{}", names[k]),
            BranchKind::VoltageSource {
                node: lv[k],
                source: SourceFn::Sine {
                    amplitude: peak,
                    frequency: spec.step_up.frequency,
                    phase: angle - 2.0 * PI / 3.0 * k as f64,
                },
            },
        );
    }
    Ok(())
}
