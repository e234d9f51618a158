//! Modal decomposition of a multiconductor line.
//!
//! With `S = C^(1/2)` the symmetric matrix `S L S` has orthonormal
//! eigenvectors `Q` and eigenvalues `1/v^2`. Phase currents are
//! `i = Ti i_mode` with `Ti = S Q` (columns normalized), and phase
//! voltages `v = Tv v_mode` with `Tv = Ti^-T`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::geometry::{LineParameters, C_LIGHT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModalDecomposition {
    /// Current transformation, `i_phase = ti * i_mode`.
    pub ti: DMatrix<f64>,
    /// Voltage transformation, `v_phase = tv * v_mode`.
    pub tv: DMatrix<f64>,
    /// Modal surge impedances (ohm).
    pub impedances: Vec<f64>,
    /// Modal velocities (m/s).
    pub velocities: Vec<f64>,
    /// Modal series resistance (ohm/m).
    pub resistances: Vec<f64>,
    /// 2-norm condition number of `tv`.
    pub condition: f64,
}

impl ModalDecomposition {
    pub fn modes(&self) -> usize {
        self.impedances.len()
    }

    /// Phase-domain characteristic admittance `Ti diag(1/Z) Ti^T`.
    pub fn characteristic_admittance(&self) -> DMatrix<f64> {
        let n = self.modes();
        let d = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / self.impedances[i] } else { 0.0 });
        &self.ti * d * self.ti.transpose()
    }
}

fn sym_sqrt(c: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(c.clone());
    if eig.eigenvalues.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::ModalDecomposition(format!(
            "capacitance matrix is not positive definite: eigenvalues {:?}",
            eig.eigenvalues.as_slice()
        )));
    }
    let q = &eig.eigenvectors;
    let s = q * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * q.transpose();
    let s_inv = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x.sqrt())) * q.transpose();
    Ok((s, s_inv))
}

/// Diagonalizes `L C` using the inductive part of `Z`.
pub fn modal_decompose(params: &LineParameters) -> Result<ModalDecomposition> {
    let l = params.inductance();
    let r = params.resistance();
    let c = &params.c;
    let n = l.nrows();
    let (s, s_inv) = sym_sqrt(c)?;
    let mut sls = &s * &l * &s;
    sls = 0.5 * (&sls + sls.transpose());
    let eig = SymmetricEigen::new(sls);
    // order modes by descending eigenvalue: the slow ground mode first
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut ti = DMatrix::zeros(n, n);
    let mut tv = DMatrix::zeros(n, n);
    let mut impedances = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    for (m, &k) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[k];
        if !(lambda > 0.0) {
            return Err(Error::ModalDecomposition(format!(
                "non-positive modal eigenvalue {lambda:e}; L = {l:?}, C = {c:?}"
            )));
        }
        let q = eig.eigenvectors.column(k);
        let mut ti_col = &s * q;
        let d = ti_col.norm();
        ti_col /= d;
        let tv_col = (&s_inv * q) * d;
        ti.set_column(m, &ti_col);
        tv.set_column(m, &tv_col);
        impedances.push(lambda.sqrt() / (d * d));
        let v = 1.0 / lambda.sqrt();
        if v > C_LIGHT * (1.0 + 1e-6) {
            return Err(Error::ModalDecomposition(format!("modal velocity {v:e} exceeds c")));
        }
        velocities.push(v.min(C_LIGHT));
    }
    let resistances = (0..n).map(|m| (ti.column(m).transpose() * &r * ti.column(m))[(0, 0)]).collect();
    let sv = tv.clone().svd(false, false).singular_values;
    let condition = sv.max() / sv.min();
    if !condition.is_finite() {
        return Err(Error::ModalDecomposition("voltage transformation is singular".into()));
    }
    Ok(ModalDecomposition { ti, tv, impedances, velocities, resistances, condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::line::geometry::{line_parameters, ConductorGeometry, EPS0, MU0};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn params_from(l: DMatrix<f64>, c: DMatrix<f64>) -> LineParameters {
        let w = 2.0 * PI * 400e3;
        LineParameters { z: l.map(|x| Complex64::new(0.0, w * x)), c, frequency: 400e3 }
    }

    fn reconstruction_error(m: &ModalDecomposition, l: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
        let n = m.modes();
        let lambda = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / (m.velocities[i] * m.velocities[i]) } else { 0.0 });
        let lc = l * c;
        let rebuilt = &m.tv * lambda * m.tv.clone().try_inverse().unwrap();
        (rebuilt - &lc).norm() / lc.norm()
    }

    #[test]
    fn single_conductor_is_scalar() {
        let l = DMatrix::from_element(1, 1, 1.5e-6);
        let c = DMatrix::from_element(1, 1, 8e-12);
        let m = modal_decompose(&params_from(l, c)).unwrap();
        assert_eq!(m.modes(), 1);
        assert!((m.velocities[0] - 1.0 / (1.5e-6f64 * 8e-12).sqrt()).abs() < 1.0);
        assert!((m.impedances[0] - (1.5e-6f64 / 8e-12).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn transposed_line_gives_clarke_like_modes() {
        // equal off-diagonals: ground mode (1,1,1) and two degenerate aerial modes
        let (ls, lm) = (1.6e-6, 0.6e-6);
        let (cs, cm) = (12e-12, -1.5e-12);
        let l = DMatrix::from_fn(3, 3, |i, j| if i == j { ls } else { lm });
        let c = DMatrix::from_fn(3, 3, |i, j| if i == j { cs } else { cm });
        let m = modal_decompose(&params_from(l.clone(), c.clone())).unwrap();
        let v_ground = 1.0 / ((ls + 2.0 * lm) * (cs + 2.0 * cm)).sqrt();
        let v_aerial = 1.0 / ((ls - lm) * (cs - cm)).sqrt();
        assert!((m.velocities[0] - v_ground).abs() / v_ground < 1e-10);
        assert!((m.velocities[1] - v_aerial).abs() / v_aerial < 1e-10);
        assert!((m.velocities[2] - v_aerial).abs() / v_aerial < 1e-10);
        assert!(m.velocities[0] < m.velocities[1]);
        // ground-mode current vector is proportional to (1,1,1)
        let g = m.ti.column(0);
        assert!((g[0] - g[1]).abs() < 1e-10 && (g[1] - g[2]).abs() < 1e-10);
        assert!(reconstruction_error(&m, &l, &c) < 1e-8);
    }

    #[test]
    fn study_geometry_modes() {
        let p = line_parameters(&ConductorGeometry::study_line(), 400e3).unwrap();
        let m = modal_decompose(&p).unwrap();
        assert_eq!(m.modes(), 4);
        for &v in &m.velocities {
            assert!(v > 1e8 && v < 3e8, "velocity {v}");
        }
        for &z in &m.impedances {
            assert!(z > 0.0);
        }
        assert!(reconstruction_error(&m, &p.inductance(), &p.c) < 1e-8);
        // transforms are mutually inverse-transposed
        let ident = m.tv.transpose() * &m.ti;
        assert!((ident - DMatrix::identity(4, 4)).norm() < 1e-9);
        assert!(m.condition.is_finite() && m.condition >= 1.0);
    }

    #[test]
    fn single_conductor_impedance_matches_closed_form() {
        let h: f64 = 10.0;
        let r: f64 = 0.01;
        let l = DMatrix::from_element(1, 1, MU0 / (2.0 * PI) * (2.0 * h / r).ln());
        let c = DMatrix::from_element(1, 1, 2.0 * PI * EPS0 / (2.0 * h / r).ln());
        let m = modal_decompose(&params_from(l, c)).unwrap();
        let oracle = (MU0 / EPS0).sqrt() / (2.0 * PI) * (2.0 * h / r).ln();
        assert!((m.impedances[0] - oracle).abs() < 1e-9 * oracle);
    }
}
