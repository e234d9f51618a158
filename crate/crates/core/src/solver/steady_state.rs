//! Power-frequency phasor solution used to start a run in steady state.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::netlist::{BranchKind, Circuit, NodeRef};

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub frequency: f64,
    /// Node voltage phasors, ground included (`v(t) = Re(V e^{jwt})`).
    pub voltages: DVector<Complex64>,
}

fn add2(y: &mut DMatrix<Complex64>, a: NodeRef, b: NodeRef, x: Complex64) {
    let (a, b) = (a.index(), b.index());
    y[(a, a)] += x;
    y[(b, b)] += x;
    y[(a, b)] -= x;
    y[(b, a)] -= x;
}

fn add_ports(y: &mut DMatrix<Complex64>, ports: &[(NodeRef, NodeRef)], m: &DMatrix<Complex64>) {
    for (p, &(xp, yp)) in ports.iter().enumerate() {
        for (q, &(xq, yq)) in ports.iter().enumerate() {
            let v = m[(p, q)];
            y[(xp.index(), xq.index())] += v;
            y[(xp.index(), yq.index())] -= v;
            y[(yp.index(), xq.index())] -= v;
            y[(yp.index(), yq.index())] += v;
        }
    }
}

/// Solves the linear network at `frequency`. Open gaps and arresters are
/// treated as open circuits; only sources at this frequency contribute.
pub fn steady_state(circuit: &Circuit, frequency: f64) -> Result<SteadyState> {
    let n = circuit.node_count();
    let w = 2.0 * PI * frequency;
    let jw = Complex64::new(0.0, w);
    let zero = Complex64::new(0.0, 0.0);
    let mut y = DMatrix::from_element(n, n, zero);
    let mut inj = DVector::from_element(n, zero);
    let mut fixed: Vec<Option<Complex64>> = vec![None; n];
    for br in circuit.branches() {
        match &br.kind {
            BranchKind::Resistor { a, b, ohms } => add2(&mut y, *a, *b, Complex64::new(1.0 / ohms, 0.0)),
            BranchKind::Inductor { a, b, henries, .. } => add2(&mut y, *a, *b, 1.0 / (jw * *henries)),
            BranchKind::Capacitor { a, b, farads, .. } => add2(&mut y, *a, *b, jw * *farads),
            BranchKind::Switch { a, b, closed: true, on_resistance } => {
                add2(&mut y, *a, *b, Complex64::new(1.0 / on_resistance, 0.0))
            }
            BranchKind::CoupledRl { from, to, resistance, inductance } => {
                let z = DMatrix::from_fn(from.len(), from.len(), |p, q| {
                    Complex64::new(resistance[(p, q)], w * inductance[(p, q)])
                });
                let m = z.try_inverse().ok_or_else(|| Error::InvalidCircuit(format!("{}: singular", br.label)))?;
                let ports: Vec<_> = from.iter().copied().zip(to.iter().copied()).collect();
                add_ports(&mut y, &ports, &m);
            }
            BranchKind::CoupledWinding(cw) => {
                let l = cw.leakage_henries();
                let r = cw.ratio;
                let m = DMatrix::from_row_slice(2, 2, &[1.0, -r, -r, r * r]).map(|x| Complex64::new(x, 0.0) / (jw * l));
                add_ports(&mut y, &[cw.primary, cw.secondary], &m);
            }
            BranchKind::CpLine { sending, receiving, model } => {
                let (yss, ysr) = model.phasor_admittance(w);
                let k = sending.len();
                for p in 0..k {
                    for q in 0..k {
                        let (sp, sq, rp, rq) =
                            (sending[p].index(), sending[q].index(), receiving[p].index(), receiving[q].index());
                        y[(sp, sq)] += yss[(p, q)];
                        y[(rp, rq)] += yss[(p, q)];
                        y[(sp, rq)] += ysr[(p, q)];
                        y[(rp, sq)] += ysr[(p, q)];
                    }
                }
            }
            BranchKind::CurrentSource { from, to, source } => {
                let i = source.phasor(frequency);
                inj[from.index()] -= i;
                inj[to.index()] += i;
            }
            BranchKind::VoltageSource { node, source } => fixed[node.index()] = Some(source.phasor(frequency)),
            BranchKind::Switch { .. } | BranchKind::Gap { .. } | BranchKind::NonlinearResistor { .. } => {}
        }
    }
    let unknown: Vec<usize> = (1..n).filter(|&k| fixed[k].is_none()).collect();
    let known: Vec<usize> = (1..n).filter(|&k| fixed[k].is_some()).collect();
    let mut v = DVector::from_element(n, zero);
    for &k in &known {
        v[k] = fixed[k].unwrap();
    }
    let nu = unknown.len();
    if nu > 0 {
        let a = DMatrix::from_fn(nu, nu, |i, j| y[(unknown[i], unknown[j])]);
        let rhs = DVector::from_fn(nu, |i, _| {
            inj[unknown[i]] - known.iter().map(|&k| y[(unknown[i], k)] * v[k]).sum::<Complex64>()
        });
        let sol = a.lu().solve(&rhs).ok_or_else(|| Error::SingularMatrix {
            node: circuit.node_name(NodeRef(unknown[0])).to_string(),
        })?;
        for (i, &k) in unknown.iter().enumerate() {
            v[k] = sol[i];
        }
    }
    Ok(SteadyState { frequency, voltages: v })
}
