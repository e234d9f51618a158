//! Constant-parameter (Bergeron) traveling-wave line with lumped losses.
//!
//! Each mode is a lossless line of surge impedance `Z` and travel time `tau`
//! with its total resistance `R` lumped as `R/4`, `R/2`, `R/4`. The two halves
//! combine into the usual closed form with `Zeff = Z + R/4` and
//! `h = (Z - R/4) / (Z + R/4)`. Currents are taken positive into the line.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::geometry::{line_parameters, ConductorGeometry, LineParameters};
use super::modal::{modal_decompose, ModalDecomposition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub impedance: f64,
    pub velocity: f64,
    pub travel_time: f64,
    /// Total series resistance of the section (ohm).
    pub resistance: f64,
}

impl Mode {
    pub fn z_eff(&self) -> f64 {
        self.impedance + 0.25 * self.resistance
    }

    pub fn h(&self) -> f64 {
        (self.impedance - 0.25 * self.resistance) / (self.impedance + 0.25 * self.resistance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpLineModel {
    length: f64,
    modes: Vec<Mode>,
    ti: DMatrix<f64>,
    /// `Ti^-1 = Tv^T`.
    ti_inv: DMatrix<f64>,
    /// `Tv^-1 = Ti^T`.
    tv_inv: DMatrix<f64>,
    /// Phase-domain conductance seen at either end.
    conductance: DMatrix<f64>,
    condition: f64,
}

impl CpLineModel {
    pub fn from_modal(modal: &ModalDecomposition, length: f64) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::InvalidGeometry(format!("line length {length} must be positive")));
        }
        let modes: Vec<Mode> = (0..modal.modes())
            .map(|k| Mode {
                impedance: modal.impedances[k],
                velocity: modal.velocities[k],
                travel_time: length / modal.velocities[k],
                resistance: modal.resistances[k] * length,
            })
            .collect();
        Ok(Self::assemble(length, modes, modal.ti.clone(), modal.tv.transpose(), modal.condition))
    }

    pub fn from_parameters(params: &LineParameters, length: f64) -> Result<Self> {
        Self::from_modal(&modal_decompose(params)?, length)
    }

    pub fn from_geometry(geom: &ConductorGeometry, frequency: f64, length: f64) -> Result<Self> {
        Self::from_parameters(&line_parameters(geom, frequency)?, length)
    }

    /// Single-conductor line (tower sections, test fixtures).
    pub fn single(impedance: f64, velocity: f64, length: f64, resistance: f64) -> Result<Self> {
        if !(impedance > 0.0 && velocity > 0.0 && length > 0.0 && resistance >= 0.0) {
            return Err(Error::InvalidComponent(format!(
                "single line needs Z > 0, v > 0, length > 0, R >= 0 (got {impedance}, {velocity}, {length}, {resistance})"
            )));
        }
        let mode = Mode { impedance, velocity, travel_time: length / velocity, resistance };
        let one = DMatrix::identity(1, 1);
        Ok(Self::assemble(length, vec![mode], one.clone(), one, 1.0))
    }

    fn assemble(length: f64, modes: Vec<Mode>, ti: DMatrix<f64>, ti_inv: DMatrix<f64>, condition: f64) -> Self {
        let n = modes.len();
        let d = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / modes[i].z_eff() } else { 0.0 });
        let conductance = &ti * d * ti.transpose();
        let conductance = 0.5 * (&conductance + conductance.transpose());
        let tv_inv = ti.transpose();
        CpLineModel { length, modes, ti, ti_inv, tv_inv, conductance, condition }
    }

    pub fn conductors(&self) -> usize {
        self.modes.len()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn conductance(&self) -> &DMatrix<f64> {
        &self.conductance
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    pub fn min_travel_time(&self) -> f64 {
        self.modes.iter().map(|m| m.travel_time).fold(f64::INFINITY, f64::min)
    }

    /// A line shorter than one time step cannot be represented.
    pub fn check_time_step(&self, label: &str, dt: f64) -> Result<()> {
        let tau = self.min_travel_time();
        if tau < dt {
            return Err(Error::LineTooShort { label: label.to_string(), travel_time: tau, dt });
        }
        Ok(())
    }

    /// Two-port phasor admittance of the discrete model at angular frequency
    /// `w`: `[I_s; I_r] = Y [V_s; V_r]` with blocks `(Yss, Ysr)`.
    pub fn phasor_admittance(&self, w: f64) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        let n = self.conductors();
        let mut ys = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        let mut ym = ys.clone();
        let ti = self.ti.map(|x| Complex64::new(x, 0.0));
        for (k, mode) in self.modes.iter().enumerate() {
            let (yss, ysr) = mode_phasor_admittance(mode, w);
            ys[(k, k)] = yss;
            ym[(k, k)] = ysr;
        }
        (&ti * ys * ti.transpose(), &ti * ym * ti.transpose())
    }
}

/// Self and transfer admittance of one lossy Bergeron mode in steady state.
fn mode_phasor_admittance(mode: &Mode, w: f64) -> (Complex64, Complex64) {
    let y = 1.0 / mode.z_eff();
    let h = mode.h();
    let a = Complex64::from_polar(1.0, -w * mode.travel_time);
    let p = (1.0 + h) / 2.0 * a;
    let q = (1.0 - h) / 2.0 * a;
    // i_k (1 + q h) + i_m (p h) = y v_k (1 - q) - y p v_m, and the mirror image
    let d1 = 1.0 + q * h;
    let d2 = p * h;
    let det = d1 * d1 - d2 * d2;
    let rk = y * (1.0 - q);
    let rm = -y * p;
    ((d1 * rk - d2 * rm) / det, (d1 * rm - d2 * rk) / det)
}

/// Delay line of combined history quantities for one mode and one end.
#[derive(Debug, Clone)]
struct Ring {
    data: Vec<f64>,
    head: usize,
}

impl Ring {
    fn new(len: usize) -> Self {
        Ring { data: vec![0.0; len], head: 0 }
    }

    fn push(&mut self, x: f64) {
        self.head = (self.head + 1) % self.data.len();
        self.data[self.head] = x;
    }

    /// Value pushed `lag` pushes ago (`lag = 0` is the latest).
    fn get(&self, lag: usize) -> f64 {
        let n = self.data.len();
        self.data[(self.head + n - lag % n) % n]
    }
}

/// Per-simulation history state of a [`CpLineModel`].
#[derive(Debug, Clone)]
pub struct CpLineState {
    delay_steps: Vec<usize>,
    delay_frac: Vec<f64>,
    sending: Vec<Ring>,
    receiving: Vec<Ring>,
    /// Modal history currents for the step being solved.
    hist_s: DVector<f64>,
    hist_r: DVector<f64>,
}

impl CpLineState {
    pub fn new(model: &CpLineModel, dt: f64) -> Result<Self> {
        model.check_time_step("line", dt)?;
        let mut delay_steps = Vec::new();
        let mut delay_frac = Vec::new();
        let mut sending = Vec::new();
        for m in &model.modes {
            let x = m.travel_time / dt;
            let n = x.floor() as usize;
            let frac = x - n as f64;
            delay_steps.push(n);
            delay_frac.push(frac);
            sending.push(Ring::new(n + 2));
        }
        let receiving = sending.clone();
        let k = model.conductors();
        let mut s = CpLineState {
            delay_steps,
            delay_frac,
            sending,
            receiving,
            hist_s: DVector::zeros(k),
            hist_r: DVector::zeros(k),
        };
        s.refresh(model);
        Ok(s)
    }

    /// Fills the delay lines with a sinusoidal steady state given the end
    /// voltage phasors (`v(t) = Re(V e^{jwt})`). `t_now` is the time of the
    /// latest history sample.
    pub fn init_sinusoidal(
        &mut self,
        model: &CpLineModel,
        w: f64,
        dt: f64,
        v_s: &DVector<Complex64>,
        v_r: &DVector<Complex64>,
    ) {
        let tv_inv = model.tv_inv.map(|x| Complex64::new(x, 0.0));
        let ti_inv = model.ti_inv.map(|x| Complex64::new(x, 0.0));
        let (yss, ysr) = model.phasor_admittance(w);
        let i_s = &yss * v_s + &ysr * v_r;
        let i_r = &ysr * v_s + &yss * v_r;
        let (vm_s, vm_r) = (&tv_inv * v_s, &tv_inv * v_r);
        let (im_s, im_r) = (&ti_inv * i_s, &ti_inv * i_r);
        for (k, mode) in model.modes.iter().enumerate() {
            let y = 1.0 / mode.z_eff();
            let h = mode.h();
            let qs = vm_s[k] * y + im_s[k] * h;
            let qr = vm_r[k] * y + im_r[k] * h;
            let len = self.sending[k].data.len();
            for lag in (0..len).rev() {
                let rot = Complex64::from_polar(1.0, -w * lag as f64 * dt);
                self.sending[k].push((qs * rot).re);
                self.receiving[k].push((qr * rot).re);
            }
        }
        self.refresh(model);
    }

    fn delayed(&self, ring: &Ring, k: usize) -> f64 {
        // sample at t - tau where the latest entry is at t - dt
        let n = self.delay_steps[k];
        let f = self.delay_frac[k];
        (1.0 - f) * ring.get(n - 1) + f * ring.get(n)
    }

    fn refresh(&mut self, model: &CpLineModel) {
        for (k, mode) in model.modes.iter().enumerate() {
            let h = mode.h();
            let qs = self.delayed(&self.sending[k], k);
            let qr = self.delayed(&self.receiving[k], k);
            self.hist_s[k] = -(1.0 + h) / 2.0 * qr - (1.0 - h) / 2.0 * qs;
            self.hist_r[k] = -(1.0 + h) / 2.0 * qs - (1.0 - h) / 2.0 * qr;
        }
    }

    /// Phase-domain history currents `(J_s, J_r)` for the coming step;
    /// the end currents into the line are `G v + J`.
    pub fn history(&self, model: &CpLineModel) -> (DVector<f64>, DVector<f64>) {
        (&model.ti * &self.hist_s, &model.ti * &self.hist_r)
    }

    /// Records the solved end voltages and prepares the next step's history.
    pub fn advance(&mut self, model: &CpLineModel, v_s: &DVector<f64>, v_r: &DVector<f64>) {
        let vm_s = &model.tv_inv * v_s;
        let vm_r = &model.tv_inv * v_r;
        for (k, mode) in model.modes.iter().enumerate() {
            let y = 1.0 / mode.z_eff();
            let h = mode.h();
            let is = vm_s[k] * y + self.hist_s[k];
            let ir = vm_r[k] * y + self.hist_r[k];
            self.sending[k].push(vm_s[k] * y + h * is);
            self.receiving[k].push(vm_r[k] * y + h * ir);
        }
        self.refresh(model);
    }

    /// End currents into the line for the given solved voltages.
    pub fn currents(&self, model: &CpLineModel, v_s: &DVector<f64>, v_r: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (js, jr) = self.history(model);
        (model.conductance() * v_s + js, model.conductance() * v_r + jr)
    }
}

/// Stateless form of one line step: given the current state and solved end
/// voltages, returns the history injections for the next step.
pub fn cp_line_step(
    model: &CpLineModel,
    state: &mut CpLineState,
    v_s: &DVector<f64>,
    v_r: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    state.advance(model, v_s, v_r);
    state.history(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Drives the sending end from `v_src` behind `r_src`, receiving end
    /// loaded by `r_load` (None = open). Returns (v_s, v_r) per step.
    fn drive(model: &CpLineModel, dt: f64, steps: usize, r_src: f64, r_load: Option<f64>, v_src: f64) -> (Vec<f64>, Vec<f64>) {
        let mut st = CpLineState::new(model, dt).unwrap();
        let g = model.conductance()[(0, 0)];
        let (mut vs, mut vr) = (Vec::new(), Vec::new());
        for _ in 0..steps {
            let (js, jr) = st.history(model);
            // node s: (v - vsrc)/r_src + g v + js = 0
            let v_s = (v_src / r_src - js[0]) / (1.0 / r_src + g);
            let gl = r_load.map_or(0.0, |r| 1.0 / r);
            let v_r = -jr[0] / (gl + g);
            st.advance(model, &DVector::from_element(1, v_s), &DVector::from_element(1, v_r));
            vs.push(v_s);
            vr.push(v_r);
        }
        (vs, vr)
    }

    #[test]
    fn matched_line_has_no_reflection() {
        let m = CpLineModel::single(400.0, 3e8, 300.0, 0.0).unwrap();
        let (vs, vr) = drive(&m, 10e-9, 1000, 400.0, Some(400.0), 2.0);
        // incident wave is 1 V; sending end never changes, receiving end equals incident
        for &v in &vs {
            assert!((v - 1.0).abs() < 1e-9);
        }
        for &v in &vr[200..] {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn open_end_doubles() {
        let m = CpLineModel::single(400.0, 3e8, 300.0, 0.0).unwrap();
        let (_, vr) = drive(&m, 10e-9, 150, 400.0, None, 2.0);
        assert!(vr[..98].iter().all(|&v| v.abs() < 1e-12));
        assert!((vr[110] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn arrival_sample_follows_travel_time() {
        let m = CpLineModel::single(400.0, 2.95e8, 300.0, 0.0).unwrap();
        let tau: f64 = 300.0 / 2.95e8;
        assert!((tau - 1.0169e-6).abs() < 1e-9);
        let (_, vr) = drive(&m, 10e-9, 200, 400.0, Some(400.0), 2.0);
        // step k of the loop is time (k+1) dt
        let first = vr.iter().position(|&v| v.abs() > 1e-12).unwrap() + 1;
        let expected = (tau / 10e-9).round() as usize;
        assert!((first as i64 - expected as i64).abs() <= 1, "first {first} expected {expected}");
        assert!((expected as i64 - 102).abs() <= 1);
    }

    #[test]
    fn rejects_line_shorter_than_step() {
        let m = CpLineModel::single(400.0, 3e8, 2.0, 0.0).unwrap();
        assert!(matches!(CpLineState::new(&m, 10e-9), Err(Error::LineTooShort { .. })));
    }

    #[test]
    fn lossy_line_dc_drop_matches_resistance() {
        // after many transits the line settles to its series resistance
        let r = 20.0;
        let m = CpLineModel::single(400.0, 3e8, 300.0, r).unwrap();
        let (vs, vr) = drive(&m, 10e-9, 60_000, 100.0, Some(100.0), 1.0);
        let i = vr.last().unwrap() / 100.0;
        let drop = vs.last().unwrap() - vr.last().unwrap();
        assert!((drop / i - r).abs() < 1e-3 * r, "drop/i = {}", drop / i);
    }

    #[test]
    fn phasor_admittance_matches_lossless_formula() {
        let m = CpLineModel::single(400.0, 3e8, 3000.0, 0.0).unwrap();
        let w = 2.0 * std::f64::consts::PI * 50.0;
        let (yss, ysr) = m.phasor_admittance(w);
        let bl = w * 1e-5;
        // lossless: Yss = -j cot(bl)/Z, Ysr = j/(Z sin(bl))
        let yss_ref = Complex64::new(0.0, -1.0 / (400.0 * bl.tan()));
        let ysr_ref = Complex64::new(0.0, 1.0 / (400.0 * bl.sin()));
        assert!((yss[(0, 0)] - yss_ref).norm() < 1e-9 * yss_ref.norm());
        assert!((ysr[(0, 0)] - ysr_ref).norm() < 1e-9 * ysr_ref.norm());
    }
}
