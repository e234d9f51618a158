//! Multistory tower: inductive upper sections, a traveling-wave bottom
//! section, crossarm inductances and a constant footing resistance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::gap::GapParams;
use crate::error::{Error, Result};
use crate::line::geometry::C_LIGHT;
use crate::line::CpLineModel;
use crate::netlist::{BranchKind, CircuitBuilder, NodeRef};

/// Inductance per metre of crossarms and grounding ropes (H/m).
pub const ARM_INDUCTANCE_PER_M: f64 = 1e-6;
pub const DEFAULT_FOOTING_OHMS: f64 = 20.0;
pub const DEFAULT_VELOCITY_FACTOR: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum TowerShape {
    Conical { base_radius: f64 },
    Cylindrical { radius: f64 },
}

impl TowerShape {
    /// Surge impedance (ohm) for a tower of height `h`.
    pub fn surge_impedance(self, h: f64) -> f64 {
        match self {
            TowerShape::Conical { base_radius } => 60.0 * (2f64.sqrt() * 2.0 * h / base_radius).ln(),
            TowerShape::Cylindrical { radius } => 60.0 * (2f64.sqrt() * 2.0 * h / radius).ln() - 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossarm {
    /// Attachment height (m).
    pub height: f64,
    /// Arm length (m).
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerSection {
    pub top: f64,
    pub bottom: f64,
    pub inductance: f64,
}

impl TowerSection {
    pub fn length(&self) -> f64 {
        self.top - self.bottom
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerModel {
    pub height: f64,
    pub surge_impedance: f64,
    pub velocity: f64,
    /// Top to first crossarm, then between consecutive crossarms.
    pub upper: Vec<TowerSection>,
    /// Length of the traveling-wave section from the lowest crossarm to ground.
    pub bottom_length: f64,
    pub crossarms: Vec<Crossarm>,
    pub crossarm_inductances: Vec<f64>,
    pub footing_ohms: f64,
    /// Grounding rope run length (m).
    pub rope_length: f64,
}

pub fn build_tower(height: f64, crossarms: &[Crossarm], shape: TowerShape) -> Result<TowerModel> {
    if !(height > 0.0) {
        return Err(Error::InvalidComponent("tower height must be positive".into()));
    }
    let mut arms = crossarms.to_vec();
    arms.sort_by(|a, b| b.height.total_cmp(&a.height));
    if arms.is_empty() {
        return Err(Error::InvalidComponent("tower needs at least one crossarm".into()));
    }
    for a in &arms {
        if a.height > height {
            return Err(Error::InvalidComponent(format!(
                "crossarm at {} m is above the tower top ({height} m)",
                a.height
            )));
        }
        if !(a.height > 0.0 && a.length >= 0.0) {
            return Err(Error::InvalidComponent("crossarm height must be positive".into()));
        }
    }
    let z = shape.surge_impedance(height);
    let v = DEFAULT_VELOCITY_FACTOR * C_LIGHT;
    let mut upper = Vec::new();
    let mut top = height;
    for a in &arms {
        upper.push(TowerSection { top, bottom: a.height, inductance: z * (top - a.height) / v });
        top = a.height;
    }
    Ok(TowerModel {
        height,
        surge_impedance: z,
        velocity: v,
        upper,
        bottom_length: top,
        crossarm_inductances: arms.iter().map(|a| ARM_INDUCTANCE_PER_M * a.length).collect(),
        crossarms: arms,
        footing_ohms: DEFAULT_FOOTING_OHMS,
        rope_length: 0.0,
    })
}

impl TowerModel {
    /// Tower carrying the study line: top at 26.5 m, arms at the phase heights.
    pub fn study_tower(phase_x: &[f64; 3], phase_y: &[f64; 3]) -> Result<Self> {
        let arms: Vec<Crossarm> =
            phase_x.iter().zip(phase_y).map(|(&x, &y)| Crossarm { height: y, length: x.abs() }).collect();
        build_tower(26.5, &arms, TowerShape::Conical { base_radius: 3.0 })
    }

    pub fn total_length(&self) -> f64 {
        self.upper.iter().map(TowerSection::length).sum::<f64>() + self.bottom_length
    }

    /// Adds the tower to `b`. `top` is the shield attachment node and
    /// `phases[k]` the line node hung from crossarm `k` (ordered as given
    /// to [`build_tower`], i.e. by descending height). Returns the
    /// crossarm-tip nodes.
    pub fn attach(
        &self,
        b: &mut CircuitBuilder,
        prefix: &str,
        top: NodeRef,
        phases: &[NodeRef],
        gap: &GapParams,
        gap_on_resistance: f64,
    ) -> Result<Vec<NodeRef>> {
        if phases.len() != self.crossarms.len() {
            return Err(Error::InvalidComponent(format!(
                "{prefix}: {} phase nodes for {} crossarms",
                phases.len(),
                self.crossarms.len()
            )));
        }
        let mut upper_node = top;
        let mut junctions = Vec::new();
        for (k, s) in self.upper.iter().enumerate() {
            if s.inductance > 0.0 {
                let n = b.node(&format!("{prefix}.j{k}"));
                b.inductor(&format!("{prefix}.Lsec{k}"), upper_node, n, s.inductance);
                upper_node = n;
            }
            junctions.push(upper_node);
        }
        let base = b.node(&format!("{prefix}.base"));
        let bottom = CpLineModel::single(self.surge_impedance, self.velocity, self.bottom_length, 0.0)?;
        b.add(
            format!("{prefix}.bottom"),
            BranchKind::CpLine { sending: vec![upper_node], receiving: vec![base], model: Arc::new(bottom) },
        );
        let foot = if self.rope_length > 0.0 {
            let f = b.node(&format!("{prefix}.foot"));
            b.inductor(&format!("{prefix}.rope"), base, f, ARM_INDUCTANCE_PER_M * self.rope_length);
            f
        } else {
            base
        };
        b.resistor(&format!("{prefix}.Rf"), foot, NodeRef::GROUND, self.footing_ohms);
        let mut tips = Vec::new();
        for (k, (&j, &l)) in junctions.iter().zip(&self.crossarm_inductances).enumerate() {
            let tip = if l > 0.0 {
                let t = b.node(&format!("{prefix}.arm{k}"));
                b.inductor(&format!("{prefix}.Larm{k}"), j, t, l);
                t
            } else {
                j
            };
            b.add(
                format!("{prefix}.gap{k}"),
                BranchKind::Gap { a: tip, b: phases[k], params: *gap, on_resistance: gap_on_resistance },
            );
            tips.push(tip);
        }
        Ok(tips)
    }
}
