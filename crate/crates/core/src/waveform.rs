//! Uniformly sampled time series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "V")]
    Volt,
    #[serde(rename = "A")]
    Ampere,
    #[serde(rename = "other")]
    Other,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Volt => "V",
            Unit::Ampere => "A",
            Unit::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Unit> {
        match s {
            "V" => Some(Unit::Volt),
            "A" => Some(Unit::Ampere),
            "other" => Some(Unit::Other),
            _ => None,
        }
    }
}

/// Samples `x[k]` taken at `t0 + k * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    dt: f64,
    t0: f64,
    samples: Vec<f64>,
    unit: Unit,
}

impl Waveform {
    pub fn new(dt: f64, t0: f64, samples: Vec<f64>, unit: Unit) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidWaveform(format!("time step {dt} must be positive")));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidWaveform(format!(
                "waveform needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(k) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidWaveform(format!("sample {k} is not finite")));
        }
        Ok(Waveform { dt, t0, samples, unit })
    }

    /// Samples a function on `t0 + k*dt` for `k in 0..n`.
    pub fn from_fn(dt: f64, t0: f64, n: usize, unit: Unit, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = (0..n).map(|k| f(t0 + k as f64 * dt)).collect();
        Waveform::new(dt, t0, samples, unit)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| self.time(k))
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.samples.len() - 1)
    }

    /// Largest absolute sample.
    pub fn peak_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Index of the largest absolute sample (first one on ties).
    pub fn argmax_abs(&self) -> usize {
        let mut best = 0;
        for (k, x) in self.samples.iter().enumerate() {
            if x.abs() > self.samples[best].abs() {
                best = k;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear interpolation; clamps outside the sampled range.
    pub fn value_at(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.dt;
        if x <= 0.0 {
            return self.samples[0];
        }
        let k = x.floor() as usize;
        if k + 1 >= self.samples.len() {
            return *self.samples.last().unwrap();
        }
        let frac = x - k as f64;
        self.samples[k] * (1.0 - frac) + self.samples[k + 1] * frac
    }

    /// Sub-range `[start, end)` as a new waveform with shifted `t0`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Waveform> {
        let end = end.min(self.samples.len());
        if start >= end {
            return Err(Error::InvalidWaveform(format!("empty slice {start}..{end}")));
        }
        Waveform::new(self.dt, self.time(start), self.samples[start..end].to_vec(), self.unit)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Waveform> {
        Waveform::new(self.dt, self.t0, self.samples.iter().map(|&x| f(x)).collect(), self.unit)
    }

    /// Trapezoidal integral of `f(sample)` over the record.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let s = &self.samples;
        let mut acc = 0.0;
        for k in 1..s.len() {
            acc += 0.5 * (f(s[k - 1]) + f(s[k]));
        }
        acc * self.dt
    }
}

/// Keeps every `new_dt / dt`-th sample.
pub fn resample(w: &Waveform, new_dt: f64) -> Result<Waveform> {
    let ratio = new_dt / w.dt;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::NonIntegerResample { from: w.dt, to: new_dt });
    }
    let m = m as usize;
    let n = (w.samples.len() - 1) / m + 1;
    let samples = (0..n).map(|k| w.samples[k * m]).collect();
    Waveform::new(w.dt * m as f64, w.t0, samples, w.unit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn resample_identity() {
        let w = Waveform::from_fn(10e-9, 0.0, 50, Unit::Volt, |t| t * 1e6).unwrap();
        assert_eq!(resample(&w, 10e-9).unwrap(), w);
    }

    #[test]
    fn resample_halves_length() {
        let w = Waveform::from_fn(10e-9, 0.0, 1001, Unit::Volt, |t| t).unwrap();
        let r = resample(&w, 20e-9).unwrap();
        assert_eq!(r.len(), 501);
        assert_eq!(r.t0(), w.t0());
        assert_eq!(r.unit(), Unit::Volt);
        assert!((r.dt() - 20e-9).abs() < 1e-20);
    }

    #[test]
    fn resample_keeps_sine_peak() {
        // 1 kHz sine sampled at 1 MHz; decimating 10x still lands on the crest at 250 us.
        let w = Waveform::from_fn(1e-6, 0.0, 2001, Unit::Volt, |t| (2.0 * PI * 1e3 * t).sin()).unwrap();
        let r = resample(&w, 1e-5).unwrap();
        assert!((w.peak_abs() - 1.0).abs() < 1e-6);
        assert!((r.peak_abs() - 1.0).abs() < 1e-6);
        assert!((r.peak_abs() - w.peak_abs()).abs() < 1e-6);
    }

    #[test]
    fn resample_rejects_non_integer_ratio() {
        let w = Waveform::from_fn(10e-9, 0.0, 10, Unit::Volt, |_| 0.0).unwrap();
        assert!(matches!(resample(&w, 15e-9), Err(Error::NonIntegerResample { .. })));
        assert!(resample(&w, 5e-9).is_err());
    }

    #[test]
    fn rejects_short_or_non_finite() {
        assert!(Waveform::new(1.0, 0.0, vec![1.0], Unit::Volt).is_err());
        assert!(Waveform::new(1.0, 0.0, vec![1.0, f64::NAN], Unit::Volt).is_err());
        assert!(Waveform::new(0.0, 0.0, vec![1.0, 2.0], Unit::Volt).is_err());
    }
}
