//! CIGRE concave-front lightning current.
//!
//! Front (`t <= tn`): `i = A t + B t^n`.
//! Tail (`t >= tn`): `i = I1 exp(-(t-tn)/t1) - I2 exp(-(t-tn)/t2)`.
//! The closed-form shape parameters are refined so that the emitted waveform
//! meets its own 30/90 % front time, time to half value and peak.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{Unit, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }
}

/// Lightning stroke parameters in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightningSpec {
    /// Peak current (A).
    pub peak: f64,
    /// 30/90 % front time (s).
    pub front: f64,
    /// Time to half value on the tail (s).
    pub tail: f64,
    pub polarity: Polarity,
    /// Maximum steepness (A/s); `None` selects the median value for the peak.
    pub steepness: Option<f64>,
    /// Stroke inception time (s).
    pub start: f64,
}

impl LightningSpec {
    pub fn from_ka_us(peak_ka: f64, front_us: f64, tail_us: f64) -> Self {
        LightningSpec {
            peak: peak_ka * 1e3,
            front: front_us * 1e-6,
            tail: tail_us * 1e-6,
            polarity: Polarity::Positive,
            steepness: None,
            start: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak > 0.0 && self.front > 0.0 && self.tail > self.front) {
            return Err(Error::InvalidComponent(format!(
                "lightning spec needs I > 0 and 0 < t_f < t_r (I={} A, t_f={} s, t_r={} s)",
                self.peak, self.front, self.tail
            )));
        }
        if let Some(s) = self.steepness {
            if !(s > 0.0) {
                return Err(Error::InvalidComponent("steepness must be positive".into()));
            }
        }
        Ok(())
    }

    /// Steepness used for the shape, in A/s.
    pub fn effective_steepness(&self) -> f64 {
        let s = self.steepness.unwrap_or_else(|| median_steepness(self.peak));
        // the concave front needs S_N = S t_f / I > 1
        s.max(MIN_NORMALIZED_STEEPNESS * self.peak / self.front)
    }
}

const MIN_NORMALIZED_STEEPNESS: f64 = 1.05;

/// Median maximum steepness conditional on the peak current (A/s).
pub fn median_steepness(peak: f64) -> f64 {
    let i_ka = peak * 1e-3;
    let s_ka_us = if i_ka <= 20.0 { 12.0 * i_ka.powf(0.171) } else { 6.5 * i_ka.powf(0.376) };
    s_ka_us * 1e9
}

/// Closed-form shape for given internal front and half-value times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CigreShape {
    pub a: f64,
    pub b: f64,
    pub n: f64,
    pub tn: f64,
    pub i1: f64,
    pub i2: f64,
    pub t1: f64,
    pub t2: f64,
    /// Multiplier applied so that the peak equals the requested value.
    pub scale: f64,
    pub steepness: f64,
}

impl CigreShape {
    fn closed_form(peak: f64, tf: f64, th: f64, sm: f64) -> Option<Self> {
        let sn = sm * tf / peak;
        if !(sn > 1.0) {
            return None;
        }
        let n = 1.0 + 2.0 * (sn - 1.0) * (2.0 + 1.0 / sn);
        let tn = 0.6 * tf * (3.0 * sn * sn / (1.0 + sn * sn));
        let a = (0.9 * n * peak / tn - sm) / (n - 1.0);
        let b = (sm * tn - 0.9 * peak) / (tn.powf(n) * (n - 1.0));
        let t1 = (th - tn) / std::f64::consts::LN_2;
        let t2 = 0.1 * peak / sm;
        if !(t1 > t2 && t2 > 0.0) {
            return None;
        }
        let k = t1 * t2 / (t1 - t2);
        let i1 = k * (sm + 0.9 * peak / t2);
        let i2 = k * (sm + 0.9 * peak / t1);
        Some(CigreShape { a, b, n, tn, i1, i2, t1, t2, scale: 1.0, steepness: sm })
    }

    /// Current at `t` seconds after inception (positive polarity).
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let raw = if t <= self.tn {
            self.a * t + self.b * t.powf(self.n)
        } else {
            let s = t - self.tn;
            self.i1 * (-s / self.t1).exp() - self.i2 * (-s / self.t2).exp()
        };
        self.scale * raw
    }

    /// Time of the maximum, found on the tail where `di/dt = 0`.
    pub fn peak_time(&self) -> f64 {
        // I1/t1 e^{-s/t1} = I2/t2 e^{-s/t2}
        let s = (self.i2 * self.t1 / (self.i1 * self.t2)).ln() / (1.0 / self.t2 - 1.0 / self.t1);
        self.tn + s.max(0.0)
    }

    pub fn peak(&self) -> f64 {
        self.eval(self.peak_time())
    }

    /// Rising-front crossing of `level` (absolute current).
    fn rising_crossing(&self, level: f64) -> f64 {
        bisect(|t| self.eval(t) - level, 0.0, self.peak_time())
    }

    /// Tail crossing of `level` after the peak.
    fn falling_crossing(&self, level: f64) -> f64 {
        let tp = self.peak_time();
        let mut hi = tp + self.t1.max(1e-9);
        while self.eval(hi) > level {
            hi += 2.0 * self.t1;
        }
        bisect(|t| level - self.eval(t), tp, hi)
    }

    /// `(t90 - t30) / 0.6`.
    pub fn measured_front(&self) -> f64 {
        let p = self.peak();
        (self.rising_crossing(0.9 * p) - self.rising_crossing(0.3 * p)) / 0.6
    }

    pub fn measured_half_time(&self) -> f64 {
        self.falling_crossing(0.5 * self.peak())
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1e-12) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Fits a shape meeting the spec's front, tail and peak on the continuous waveform.
pub fn fit_shape(spec: &LightningSpec) -> Result<CigreShape> {
    spec.validate()?;
    let sm = spec.effective_steepness();
    let (mut tf, mut th) = (spec.front, spec.tail);
    let mut residual = f64::INFINITY;
    for _ in 0..200 {
        let shape = CigreShape::closed_form(spec.peak, tf, th, sm).ok_or_else(|| Error::WaveformFit {
            reason: format!("no valid shape for internal t_f={tf:.3e} s, t_h={th:.3e} s"),
            residual,
        })?;
        let (mf, mh) = (shape.measured_front(), shape.measured_half_time());
        residual = ((mf - spec.front) / spec.front).abs().max(((mh - spec.tail) / spec.tail).abs());
        if residual < 1e-9 {
            let mut shape = shape;
            shape.scale = spec.peak / shape.peak();
            return Ok(shape);
        }
        let ratio = |want: f64, got: f64| if got > 0.0 && got.is_finite() { (want / got).clamp(0.5, 2.0) } else { 0.5 };
        tf *= ratio(spec.front, mf);
        th *= ratio(spec.tail, mh);
    }
    Err(Error::WaveformFit { reason: "front/tail iteration did not converge".into(), residual })
}

/// Samples the stroke current on `0, dt, ..., t_end`.
pub fn cigre_waveform(spec: &LightningSpec, dt: f64, t_end: f64) -> Result<Waveform> {
    let shape = fit_shape(spec)?;
    let n = (t_end / dt).round() as usize + 1;
    let sign = spec.polarity.sign();
    Waveform::from_fn(dt, 0.0, n, Unit::Ampere, |t| sign * shape.eval(t - spec.start))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crossing_time(w: &Waveform, level: f64, rising: bool) -> f64 {
        let s = w.samples();
        let k_peak = w.argmax_abs();
        let range: Vec<usize> = if rising { (1..=k_peak).collect() } else { (k_peak + 1..s.len()).collect() };
        for k in range {
            let (a, b) = (s[k - 1], s[k]);
            if (rising && a < level && b >= level) || (!rising && a > level && b <= level) {
                return w.time(k - 1) + (level - a) / (b - a) * w.dt();
            }
        }
        f64::NAN
    }

    #[test]
    fn set3_stroke_meets_peak_front_and_tail() {
        let spec = LightningSpec::from_ka_us(50.4, 3.0, 75.0);
        let w = cigre_waveform(&spec, 10e-9, 200e-6).unwrap();
        let peak = w.max();
        assert!((peak - 50.4e3).abs() <= 0.005 * 50.4e3, "peak {peak}");
        let th = crossing_time(&w, 0.5 * peak, false);
        assert!((th - 75e-6).abs() <= 0.02 * 75e-6, "half time {th}");
        let front = (crossing_time(&w, 0.9 * peak, true) - crossing_time(&w, 0.3 * peak, true)) / 0.6;
        assert!((front - 3e-6).abs() <= 0.02 * 3e-6, "front {front}");
    }

    #[test]
    fn starts_at_zero() {
        let w = cigre_waveform(&LightningSpec::from_ka_us(31.0, 3.0, 75.0), 10e-9, 10e-6).unwrap();
        assert_eq!(w.samples()[0], 0.0);
    }

    #[test]
    fn shape_is_c1_at_junction() {
        let spec = LightningSpec::from_ka_us(31.0, 3.0, 75.0);
        let s = CigreShape::closed_form(spec.peak, spec.front, spec.tail, spec.effective_steepness()).unwrap();
        let left = s.a * s.tn + s.b * s.tn.powf(s.n);
        let right = s.i1 - s.i2;
        assert!((left - right).abs() < 1e-9 * right);
        let dl = s.a + s.n * s.b * s.tn.powf(s.n - 1.0);
        let dr = -s.i1 / s.t1 + s.i2 / s.t2;
        assert!((dl - dr).abs() < 1e-9 * dl.abs());
        // the front reaches maximum steepness at tn
        assert!((dl - s.steepness).abs() < 1e-6 * s.steepness);
    }

    #[test]
    fn negative_polarity_mirrors() {
        let mut spec = LightningSpec::from_ka_us(10.0, 3.0, 75.0);
        let pos = cigre_waveform(&spec, 10e-9, 50e-6).unwrap();
        spec.polarity = Polarity::Negative;
        let neg = cigre_waveform(&spec, 10e-9, 50e-6).unwrap();
        for (a, b) in pos.samples().iter().zip(neg.samples()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn rejects_front_longer_than_tail() {
        assert!(fit_shape(&LightningSpec::from_ka_us(10.0, 80.0, 75.0)).is_err());
    }

    #[test]
    fn sensitivity_grid_fits() {
        for &(tf, tr) in &[(2.0, 75.0), (5.0, 75.0), (8.0, 75.0), (3.0, 150.0), (3.0, 300.0), (3.0, 500.0)] {
            for &i in &[10.0, 31.0, 50.4] {
                let spec = LightningSpec::from_ka_us(i, tf, tr);
                let s = fit_shape(&spec).unwrap();
                assert!((s.peak() - spec.peak).abs() < 1e-6 * spec.peak);
                assert!((s.measured_front() - spec.front).abs() < 1e-6 * spec.front);
                assert!((s.measured_half_time() - spec.tail).abs() < 1e-6 * spec.tail);
            }
        }
    }

    #[test]
    fn steepness_far_above_mean_rate_is_rejected() {
        // 5 kA over an 8 us front with ~16 kA/us median steepness has no valid shape
        let spec = LightningSpec::from_ka_us(5.0, 8.0, 75.0);
        assert!(matches!(fit_shape(&spec), Err(Error::WaveformFit { .. })));
    }

    proptest::proptest! {
        #[test]
        fn nonnegative_with_single_maximum(i in 5.0f64..100.0, tf in 1.0f64..8.0, tr in 40.0f64..300.0) {
            let spec = LightningSpec::from_ka_us(i, tf, tr);
            proptest::prop_assume!(spec.effective_steepness() * spec.front / spec.peak <= 15.0);
            let w = cigre_waveform(&spec, 20e-9, 2.0 * tr * 1e-6).unwrap();
            let s = w.samples();
            let kp = w.argmax_abs();
            proptest::prop_assert!(s.iter().all(|&x| x >= 0.0));
            proptest::prop_assert!(s[..=kp].windows(2).all(|p| p[1] >= p[0]));
            proptest::prop_assert!(s[kp..].windows(2).all(|p| p[1] <= p[0]));
        }
    }
}
