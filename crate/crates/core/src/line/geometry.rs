//! Per-unit-length series impedance and shunt capacitance of an overhead line.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MU0: f64 = 4.0e-7 * PI;
pub const EPS0: f64 = 8.854_187_812_8e-12;
pub const C_LIGHT: f64 = 2.997_924_58e8;

/// Default frequency at which constant line parameters are evaluated.
pub const DEFAULT_LINE_FREQUENCY: f64 = 400e3;
pub const DEFAULT_GROUND_RESISTIVITY: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConductorRole {
    PhaseA,
    PhaseB,
    PhaseC,
    Shield,
}

impl ConductorRole {
    pub fn is_phase(self) -> bool {
        !matches!(self, ConductorRole::Shield)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conductor {
    pub role: ConductorRole,
    /// Horizontal position (m).
    pub x: f64,
    /// Height at the tower attachment (m).
    pub y_tower: f64,
    /// Height at midspan, including sag (m).
    pub y_midspan: f64,
    /// Outer radius (m).
    pub radius: f64,
    /// DC resistance (ohm/km).
    pub r_dc: f64,
}

impl Conductor {
    /// Sag-weighted average height used for line constants.
    pub fn average_height(&self) -> f64 {
        self.y_midspan + (self.y_tower - self.y_midspan) / 3.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductorGeometry {
    pub conductors: Vec<Conductor>,
    /// Ground resistivity (ohm m).
    pub ground_resistivity: f64,
    /// Distance between towers (m).
    pub span: f64,
}

pub const PHASE_RADIUS: f64 = 0.01708 / 2.0;
pub const PHASE_R_DC: f64 = 0.1444;

impl ConductorGeometry {
    /// Three phases of the 110 kV study line plus one shield wire.
    pub fn study_line() -> Self {
        let phase = |role, x, y_tower, y_midspan| Conductor {
            role,
            x,
            y_tower,
            y_midspan,
            radius: PHASE_RADIUS,
            r_dc: PHASE_R_DC,
        };
        ConductorGeometry {
            conductors: vec![
                phase(ConductorRole::PhaseA, 2.5, 22.7, 14.1),
                phase(ConductorRole::PhaseB, -3.0, 20.5, 11.9),
                phase(ConductorRole::PhaseC, 3.5, 18.3, 9.7),
                Conductor {
                    role: ConductorRole::Shield,
                    x: 0.0,
                    y_tower: 26.5,
                    y_midspan: 19.0,
                    radius: 0.005,
                    r_dc: 0.3,
                },
            ],
            ground_resistivity: DEFAULT_GROUND_RESISTIVITY,
            span: 300.0,
        }
    }

    pub fn len(&self) -> usize {
        self.conductors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conductors.is_empty()
    }

    pub fn index_of(&self, role: ConductorRole) -> Option<usize> {
        self.conductors.iter().position(|c| c.role == role)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conductors.is_empty() {
            return Err(Error::InvalidGeometry("no conductors".into()));
        }
        if !(self.ground_resistivity >= 0.0) {
            return Err(Error::InvalidGeometry("ground resistivity must be non-negative".into()));
        }
        if !(self.span > 0.0) {
            return Err(Error::InvalidGeometry("span must be positive".into()));
        }
        for (k, c) in self.conductors.iter().enumerate() {
            if !(c.radius > 0.0) {
                return Err(Error::InvalidGeometry(format!("conductor {k}: radius must be positive")));
            }
            if !(c.y_midspan > c.radius) || !(c.y_tower > c.radius) {
                return Err(Error::InvalidGeometry(format!("conductor {k} is below ground")));
            }
            if c.y_midspan > c.y_tower {
                return Err(Error::InvalidGeometry(format!("conductor {k}: midspan height above tower height")));
            }
            if c.r_dc < 0.0 {
                return Err(Error::InvalidGeometry(format!("conductor {k}: negative resistance")));
            }
        }
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let (a, b) = (&self.conductors[i], &self.conductors[j]);
                let d = (a.x - b.x).hypot(a.average_height() - b.average_height());
                if d <= a.radius + b.radius {
                    return Err(Error::InvalidGeometry(format!("conductors {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }
}

/// Per-metre line constants at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct LineParameters {
    /// Series impedance (ohm/m).
    pub z: DMatrix<Complex64>,
    /// Shunt capacitance (F/m).
    pub c: DMatrix<f64>,
    pub frequency: f64,
}

impl LineParameters {
    pub fn resistance(&self) -> DMatrix<f64> {
        self.z.map(|z| z.re)
    }

    pub fn inductance(&self) -> DMatrix<f64> {
        let w = 2.0 * PI * self.frequency;
        self.z.map(|z| z.im / w)
    }
}

/// Series impedance with a complex-depth ground return and capacitance from
/// perfect-ground images, both at the sag-averaged heights.
pub fn line_parameters(geom: &ConductorGeometry, f: f64) -> Result<LineParameters> {
    geom.validate()?;
    if !(f > 0.0) {
        return Err(Error::InvalidGeometry(format!("frequency {f} must be positive")));
    }
    let n = geom.len();
    let w = 2.0 * PI * f;
    let jw = Complex64::new(0.0, w);
    // complex penetration depth
    let p = (Complex64::new(geom.ground_resistivity, 0.0) / (jw * MU0)).sqrt();
    let k = jw * MU0 / (2.0 * PI);

    let mut z = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut pot = DMatrix::zeros(n, n);
    for i in 0..n {
        let ci = &geom.conductors[i];
        let hi = ci.average_height();
        for j in 0..n {
            let cj = &geom.conductors[j];
            let hj = cj.average_height();
            if i == j {
                z[(i, i)] = Complex64::new(ci.r_dc * 1e-3, 0.0) + k * ((2.0 * (hi + p)) / ci.radius).ln();
                pot[(i, i)] = (2.0 * hi / ci.radius).ln();
            } else {
                let dx = ci.x - cj.x;
                let d = dx.hypot(hi - hj);
                let image = ((hi + hj + 2.0 * p) * (hi + hj + 2.0 * p) + dx * dx).sqrt();
                z[(i, j)] = k * (image / d).ln();
                pot[(i, j)] = (dx.hypot(hi + hj) / d).ln();
            }
        }
    }
    pot /= 2.0 * PI * EPS0;
    let c = pot
        .try_inverse()
        .ok_or_else(|| Error::InvalidGeometry("potential coefficient matrix is singular".into()))?;
    let c = 0.5 * (&c + c.transpose());
    Ok(LineParameters { z, c, frequency: f })
}
