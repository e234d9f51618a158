//! Network equivalent from short-circuit data.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Short-circuit level, given either as power (MVA) or current (kA).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortCircuit {
    PowerMva(f64),
    CurrentKa(f64),
}

impl ShortCircuit {
    /// Equivalent power in VA at line voltage `u` (V).
    fn power(self, u: f64) -> f64 {
        match self {
            ShortCircuit::PowerMva(s) => s * 1e6,
            ShortCircuit::CurrentKa(i) => 3f64.sqrt() * u * i * 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheveninInput {
    /// Maximum line-to-line voltage (kV).
    pub u_max_kv: f64,
    pub three_phase: ShortCircuit,
    pub single_phase: ShortCircuit,
    /// X/R ratio.
    pub alpha: f64,
}

impl Default for TheveninInput {
    fn default() -> Self {
        TheveninInput {
            u_max_kv: 123.0,
            three_phase: ShortCircuit::PowerMva(2000.0),
            single_phase: ShortCircuit::PowerMva(1500.0),
            alpha: 10.0,
        }
    }
}

/// Sequence impedances in ohms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheveninSpec {
    pub u_max_kv: f64,
    pub s_tpsc_mva: f64,
    pub s_spsc_mva: f64,
    pub alpha: f64,
    pub z_d: f64,
    pub z_0: f64,
    pub r_d: f64,
    pub x_d: f64,
    pub r_0: f64,
    pub x_0: f64,
}

pub fn thevenin_from_sc(input: &TheveninInput) -> Result<TheveninSpec> {
    let u = input.u_max_kv * 1e3;
    let s3 = input.three_phase.power(u);
    let s1 = input.single_phase.power(u);
    if !(u > 0.0 && s3 > 0.0 && s1 > 0.0 && input.alpha > 0.0) {
        return Err(Error::InvalidComponent("short-circuit inputs must be positive".into()));
    }
    let z_d = u * u / s3;
    let z_0 = u * u * (3.0 / s1 - 2.0 / s3);
    if !(z_0 > 0.0) {
        return Err(Error::InconsistentShortCircuit { z0: z_0 });
    }
    let k = (1.0 + input.alpha * input.alpha).sqrt();
    let r_d = z_d / k;
    let r_0 = z_0 / k;
    Ok(TheveninSpec {
        u_max_kv: input.u_max_kv,
        s_tpsc_mva: s3 * 1e-6,
        s_spsc_mva: s1 * 1e-6,
        alpha: input.alpha,
        z_d,
        z_0,
        r_d,
        x_d: input.alpha * r_d,
        r_0,
        x_0: input.alpha * r_0,
    })
}

impl TheveninSpec {
    /// Phase-domain `(R, L)` matrices of the equivalent at `frequency`.
    pub fn phase_matrices(&self, frequency: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let w = 2.0 * PI * frequency;
        let self_mutual = |d: f64, z: f64| ((z + 2.0 * d) / 3.0, (z - d) / 3.0);
        let (rs, rm) = self_mutual(self.r_d, self.r_0);
        let (xs, xm) = self_mutual(self.x_d, self.x_0);
        let r = DMatrix::from_fn(3, 3, |i, j| if i == j { rs } else { rm });
        let l = DMatrix::from_fn(3, 3, |i, j| if i == j { xs / w } else { xm / w });
        (r, l)
    }

    /// Peak phase-to-ground source voltage (V).
    pub fn phase_peak(&self) -> f64 {
        self.u_max_kv * 1e3 * (2.0f64 / 3.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn positive_sequence_impedance() {
        let t = thevenin_from_sc(&TheveninInput::default()).unwrap();
        assert!(rel(t.z_d, 123.0 * 123.0 / 2000.0) < 1e-12);
        assert!(rel(t.z_d, 7.5645) < 1e-12);
    }

    #[test]
    fn zero_sequence_impedance() {
        let t = thevenin_from_sc(&TheveninInput::default()).unwrap();
        assert!(rel(t.z_0, 15129.0 * (3.0 / 1500.0 - 2.0 / 2000.0)) < 1e-12);
        assert!(rel(t.z_0, 15.129) < 1e-12);
    }

    #[test]
    fn resistance_reactance_split() {
        let t = thevenin_from_sc(&TheveninInput::default()).unwrap();
        assert!(rel(t.r_d, 7.5645 / 101f64.sqrt()) < 1e-12);
        assert!(rel(t.x_d, 10.0 * 7.5645 / 101f64.sqrt()) < 1e-12);
        assert!((t.r_d - 0.7527).abs() < 1e-4);
        assert!((t.x_d - 7.527).abs() < 1e-3);
        for (r, x, z) in [(t.r_d, t.x_d, t.z_d), (t.r_0, t.x_0, t.z_0)] {
            assert!(rel(r.hypot(x), z) < 1e-12);
            assert!(rel(x / r, 10.0) < 1e-12);
        }
    }

    #[test]
    fn current_input_matches_power_input() {
        let u = 123e3;
        let i3 = 2000e6 / (3f64.sqrt() * u) * 1e-3;
        let i1 = 1500e6 / (3f64.sqrt() * u) * 1e-3;
        let a = thevenin_from_sc(&TheveninInput {
            three_phase: ShortCircuit::CurrentKa(i3),
            single_phase: ShortCircuit::CurrentKa(i1),
            ..TheveninInput::default()
        })
        .unwrap();
        assert!(rel(a.z_d, u / (3f64.sqrt() * i3 * 1e3)) < 1e-12);
        assert!(rel(a.z_0, u / 3f64.sqrt() * (3.0 / (i1 * 1e3) - 2.0 / (i3 * 1e3))) < 1e-12);
    }

    #[test]
    fn inconsistent_data_is_rejected() {
        let r = thevenin_from_sc(&TheveninInput {
            single_phase: ShortCircuit::PowerMva(4000.0),
            ..TheveninInput::default()
        });
        assert!(matches!(r, Err(Error::InconsistentShortCircuit { .. })));
    }

    #[test]
    fn phase_matrices_reproduce_sequences() {
        let t = thevenin_from_sc(&TheveninInput::default()).unwrap();
        let (r, _) = t.phase_matrices(50.0);
        assert!(rel(r[(0, 0)] - r[(0, 1)], t.r_d) < 1e-12);
        assert!(rel(r[(0, 0)] + 2.0 * r[(0, 1)], t.r_0) < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn magnitude_and_ratio_hold(u in 10.0f64..800.0, s3 in 100.0f64..50_000.0, k in 0.7f64..1.4, alpha in 0.5f64..40.0) {
            let input = TheveninInput {
                u_max_kv: u,
                three_phase: ShortCircuit::PowerMva(s3),
                single_phase: ShortCircuit::PowerMva(s3 * k),
                alpha,
            };
            let t = thevenin_from_sc(&input).unwrap();
            proptest::prop_assert!(rel(t.r_d.hypot(t.x_d), t.z_d) < 1e-12);
            proptest::prop_assert!(rel(t.x_0 / t.r_0, alpha) < 1e-12);
        }
    }
}
