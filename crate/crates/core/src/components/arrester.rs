//! Metal-oxide surge arrester described by a manufacturer-style U-I table.
//!
//! Between knots the characteristic is a power law (straight line on log-log
//! axes). Outside the table the first and last segments are extended, and
//! negative currents mirror the positive branch: `U(-i) = -U(i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArresterRating {
    pub rated_kv_rms: f64,
    pub mcov_kv_rms: f64,
    pub nominal_discharge_ka: f64,
    pub iec_class: String,
}

impl Default for ArresterRating {
    fn default() -> Self {
        ArresterRating {
            rated_kv_rms: 108.0,
            mcov_kv_rms: 86.0,
            nominal_discharge_ka: 10.0,
            iec_class: "II".to_string(),
        }
    }
}

/// Residual voltage at 10 kA of the default characteristic, in kV.
pub const DEFAULT_RESIDUAL_10KA_KV: f64 = 280.0;

/// 8/20 us residual voltages relative to the 10 kA value.
const DEFAULT_SHAPE: [(f64, f64); 8] = [
    (100.0, 0.790),
    (500.0, 0.845),
    (1_000.0, 0.870),
    (2_000.0, 0.905),
    (5_000.0, 0.955),
    (10_000.0, 1.000),
    (20_000.0, 1.080),
    (40_000.0, 1.200),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArresterCharacteristic {
    /// `(current A, voltage V)` knots, strictly increasing in both.
    points: Vec<(f64, f64)>,
    pub rating: ArresterRating,
}

impl ArresterCharacteristic {
    pub fn new(points: Vec<(f64, f64)>, rating: ArresterRating) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidComponent("arrester table needs at least two points".into()));
        }
        for w in points.windows(2) {
            let ((i0, u0), (i1, u1)) = (w[0], w[1]);
            if !(i0 > 0.0 && u0 > 0.0 && i1 > i0 && u1 > u0) {
                return Err(Error::InvalidComponent(format!(
                    "arrester table must be strictly increasing and positive: ({i0}, {u0}) -> ({i1}, {u1})"
                )));
            }
        }
        Ok(ArresterCharacteristic { points, rating })
    }

    /// Default table for a 108 kV rated, class II station arrester.
    pub fn default_108kv() -> Self {
        Self::scaled(DEFAULT_RESIDUAL_10KA_KV * 1e3)
    }

    /// Default shape scaled to a given 10 kA residual voltage (V).
    pub fn scaled(u_10ka: f64) -> Self {
        let points = DEFAULT_SHAPE.iter().map(|&(i, r)| (i, r * u_10ka)).collect();
        ArresterCharacteristic::new(points, ArresterRating::default()).expect("default table is valid")
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn segment(&self, i: f64) -> usize {
        let n = self.points.len();
        match self.points.iter().position(|&(ik, _)| i < ik) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => n - 2,
        }
        .min(n - 2)
    }

    fn exponent(&self, seg: usize) -> f64 {
        let (i0, u0) = self.points[seg];
        let (i1, u1) = self.points[seg + 1];
        (u1 / u0).ln() / (i1 / i0).ln()
    }

    /// Residual voltage at current `i` (A).
    pub fn voltage(&self, i: f64) -> f64 {
        self.voltage_and_slope(i).0
    }

    /// `(U, dU/dI)` at `i`. The slope is infinite at `i = 0`.
    pub fn voltage_and_slope(&self, i: f64) -> (f64, f64) {
        let a = i.abs();
        if a == 0.0 {
            return (0.0, f64::INFINITY);
        }
        let seg = self.segment(a);
        let alpha = self.exponent(seg);
        let (ik, uk) = self.points[seg];
        let u = uk * (a / ik).powf(alpha);
        (u.copysign(i), alpha * u / a)
    }

    /// Inverse characteristic: current drawn at voltage `v`.
    pub fn current(&self, v: f64) -> f64 {
        self.current_and_slope(v).0
    }

    fn voltage_segment(&self, a: f64) -> usize {
        let n = self.points.len();
        match self.points.iter().position(|&(_, uk)| a < uk) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => n - 2,
        }
        .min(n - 2)
    }

    /// `(I, dI/dU)` at voltage `v`.
    pub fn current_and_slope(&self, v: f64) -> (f64, f64) {
        let a = v.abs();
        if a == 0.0 {
            return (0.0, 0.0);
        }
        let seg = self.voltage_segment(a);
        let p = 1.0 / self.exponent(seg);
        let (ik, uk) = self.points[seg];
        let i = ik * (a / uk).powf(p);
        (i.copysign(v), p * i / a)
    }

    /// `int_0^|v| I(u) du`, the co-energy of the characteristic.
    pub fn current_integral(&self, v: f64) -> f64 {
        let a = v.abs();
        let seg = self.voltage_segment(a);
        let part = |s: usize, from: f64, to: f64| {
            let p = 1.0 / self.exponent(s);
            let (ik, uk) = self.points[s];
            ik * uk / (p + 1.0) * ((to / uk).powf(p + 1.0) - (from / uk).powf(p + 1.0))
        };
        let mut total = 0.0;
        let mut from = 0.0;
        for s in 0..seg {
            let to = self.points[s + 1].1;
            total += part(s, from, to);
            from = to;
        }
        total + part(seg, from, a)
    }

    /// Operating point of the arrester fed from `v_oc` behind `r_th` ohms,
    /// i.e. the root of `U(i) + r_th * i = v_oc`. Returns `(i, iterations)`.
    pub fn operating_point(&self, v_oc: f64, r_th: f64, tol: f64, max_iter: usize) -> Option<(f64, usize)> {
        self.solve_port(v_oc, r_th, None, tol, max_iter)
    }

    /// Newton iteration on `ln|i|` with a bisection safeguard. On each
    /// table segment the residual is convex in `ln|i|`, so the bracket
    /// shrinks every iteration. `warm` is an initial current guess.
    pub fn solve_port(&self, v_oc: f64, r_th: f64, warm: Option<f64>, tol: f64, max_iter: usize) -> Option<(f64, usize)> {
        if v_oc == 0.0 || !v_oc.is_finite() {
            return v_oc.is_finite().then_some((0.0, 1));
        }
        let s = v_oc.signum();
        let v = v_oc.abs();
        let f = |x: f64| {
            let i = x.exp();
            let (u, du) = self.voltage_and_slope(i);
            (u + r_th * i - v, du * i + r_th * i)
        };
        let mut lo = LN_I_MIN;
        let mut hi = if r_th > 0.0 { (v / r_th).ln() } else { self.current(v).ln() + 1.0 };
        if f(lo).0 >= 0.0 {
            // below the table's reach: the arrester is effectively open
            return Some((s * self.current(v).min(LN_I_MIN.exp()), 1));
        }
        if hi <= lo {
            return Some((s * hi.exp(), 1));
        }
        let guess = warm.filter(|w| w * s > 0.0).map(|w| w.abs()).unwrap_or_else(|| self.current(v));
        let mut x = guess.ln().clamp(lo, hi);
        for it in 1..=max_iter {
            let (fx, dfx) = f(x);
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - fx / dfx;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - x).abs();
            x = next;
            if step <= tol || hi - lo <= tol {
                return Some((s * x.exp(), it));
            }
        }
        None
    }
}

/// Smallest current magnitude the port solver resolves (natural log of A).
const LN_I_MIN: f64 = -69.0;

impl Default for ArresterCharacteristic {
    fn default() -> Self {
        Self::default_108kv()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn current_integral_matches_quadrature() {
        let a = ArresterCharacteristic::default_108kv();
        for v in [50e3, 200e3, 262e3, 300e3, 345e3, 400e3] {
            let n = 200_000;
            let h = v / n as f64;
            let q: f64 = (0..n).map(|k| a.current((k as f64 + 0.5) * h) * h).sum();
            let got = a.current_integral(v);
            assert!((got - q).abs() <= 1e-6 * q.max(1e-30), "v={v}: {got} vs {q}");
            assert_eq!(a.current_integral(-v), got);
        }
    }

    #[test]
    fn current_slope_matches_finite_difference() {
        let a = ArresterCharacteristic::default_108kv();
        for v in [120e3, 250e3, 290e3, 330e3] {
            let h = v * 1e-7;
            let fd = (a.current(v + h) - a.current(v - h)) / (2.0 * h);
            let (_, d) = a.current_and_slope(v);
            assert!((d - fd).abs() <= 1e-4 * fd, "v={v}: {d} vs {fd}");
        }
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn knots_are_exact() {
        let a = ArresterCharacteristic::default();
        for &(i, u) in a.points() {
            assert!((a.voltage(i) - u).abs() <= 1e-9 * u);
        }
        assert!((a.voltage(10e3) - 280e3).abs() < 1e-6);
    }

    #[test]
    fn zero_current_zero_voltage() {
        let a = ArresterCharacteristic::default();
        assert_eq!(a.voltage(0.0), 0.0);
        assert_eq!(a.current(0.0), 0.0);
    }

    #[test]
    fn low_current_extrapolates_below_mcov_peak() {
        let a = ArresterCharacteristic::default();
        let mcov_peak = a.rating.mcov_kv_rms * 1e3 * 2f64.sqrt();
        assert!(a.voltage(1e-6) < a.voltage(100.0));
        assert!(a.current(mcov_peak) < 1e-3, "leakage at MCOV peak {} A", a.current(mcov_peak));
    }

    #[test]
    fn thevenin_operating_point_matches_bisection() {
        let a = ArresterCharacteristic::default();
        let (i, _) = a.operating_point(600e3, 10.0, 1e-10, 100).unwrap();
        let oracle = bisect(|x| a.voltage(x) + 10.0 * x - 600e3, 0.0, 600e3 / 10.0);
        assert!(((i - oracle) / oracle).abs() < 1e-4, "newton {i} vs bisection {oracle}");
    }

    #[test]
    fn converges_for_extreme_drive() {
        let a = ArresterCharacteristic::default();
        for &(v, r) in &[(5e6, 1.0), (1e3, 1.0), (5e6, 1e4), (150e3, 400.0), (-3e6, 5.0)] {
            let (i, it) = a.operating_point(v, r, 1e-6, 50).expect("converges");
            assert!(it <= 50);
            let resid = a.voltage(i) + r * i - v;
            assert!(resid.abs() <= 1e-5 * v.abs(), "v={v} r={r} residual {resid}");
        }
    }

    #[test]
    fn rejects_non_monotone_table() {
        let r = ArresterCharacteristic::new(vec![(1.0, 2.0), (2.0, 1.0)], ArresterRating::default());
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn odd_and_monotone(i in 1e-3f64..1e5, di in 1e-3f64..1e4) {
            let a = ArresterCharacteristic::default();
            prop_assert_eq!(a.voltage(-i), -a.voltage(i));
            prop_assert!(a.voltage(i + di) > a.voltage(i));
            let (_, slope) = a.voltage_and_slope(i);
            prop_assert!(slope > 0.0);
        }

        #[test]
        fn slope_matches_finite_difference(i in 1.0f64..5e4) {
            let a = ArresterCharacteristic::default();
            // stay off the knots where the slope is discontinuous
            prop_assume!(a.points().iter().all(|&(k, _)| (i / k - 1.0).abs() > 1e-3));
            let h = i * 1e-6;
            let fd = (a.voltage(i + h) - a.voltage(i - h)) / (2.0 * h);
            let (_, slope) = a.voltage_and_slope(i);
            prop_assert!(((slope - fd) / fd).abs() < 1e-3);
        }

        #[test]
        fn inverse_round_trip(i in 1e-2f64..1e5) {
            let a = ArresterCharacteristic::default();
            let back = a.current(a.voltage(i));
            prop_assert!(((back - i) / i).abs() < 1e-8);
        }
    }
}
