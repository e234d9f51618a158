//! Analytic signal and Hilbert marginal spectrum.
//!
//! For every IMF sample the instantaneous amplitude `|z|` is added to the
//! bin containing its instantaneous frequency, so a bin holds the sum of
//! amplitudes over all samples spent at that frequency (source units).

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use super::emd::Imf;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarginalOptions {
    pub bin_width: f64,
    pub f_max: f64,
}

impl Default for MarginalOptions {
    fn default() -> Self {
        MarginalOptions { bin_width: 1e3, f_max: 1e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpectrum {
    pub bin_width: f64,
    /// Accumulated amplitude per bin; bin `k` covers `[k w, (k+1) w)`.
    pub amplitude: Vec<f64>,
    /// Samples whose instantaneous frequency fell outside `(0, Nyquist)`.
    pub dropped: usize,
    /// Samples inside `(0, Nyquist)` but above the last bin.
    pub above_range: usize,
}

impl MarginalSpectrum {
    pub fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.bin_width
    }

    /// `(bin index, amplitude)` of the largest bin, or `None` if empty.
    pub fn peak(&self) -> Option<(usize, f64)> {
        let (k, v) = self.amplitude.iter().enumerate().fold((0, 0.0), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
        (v > 0.0).then_some((k, v))
    }

    pub fn total(&self) -> f64 {
        self.amplitude.iter().sum()
    }
}

/// `x + j H{x}` via the one-sided spectrum.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let g = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *z *= g / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

fn unwrap_phase(z: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    let mut offset = 0.0;
    let mut prev = 0.0;
    for (k, v) in z.iter().enumerate() {
        let p = v.arg();
        if k > 0 {
            let d = p - prev;
            if d > std::f64::consts::PI {
                offset -= 2.0 * std::f64::consts::PI;
            } else if d < -std::f64::consts::PI {
                offset += 2.0 * std::f64::consts::PI;
            }
        }
        prev = p;
        out.push(p + offset);
    }
    out
}

/// Instantaneous frequency (Hz) by central differences of the unwrapped phase.
pub fn instantaneous_frequency(z: &[Complex64], dt: f64) -> Vec<f64> {
    let phi = unwrap_phase(z);
    let n = phi.len();
    let tau = 2.0 * std::f64::consts::PI;
    (0..n)
        .map(|k| {
            let d = if k == 0 {
                phi[1] - phi[0]
            } else if k == n - 1 {
                phi[n - 1] - phi[n - 2]
            } else {
                0.5 * (phi[k + 1] - phi[k - 1])
            };
            d / (tau * dt)
        })
        .collect()
}

pub fn hilbert_marginal(imfs: &[Imf], dt: f64, opts: &MarginalOptions) -> Result<MarginalSpectrum> {
    if !(opts.bin_width > 0.0 && opts.f_max > opts.bin_width) || !(dt > 0.0) {
        return Err(Error::Analysis(format!(
            "invalid marginal binning: width {} Hz, f_max {} Hz, dt {dt}",
            opts.bin_width, opts.f_max
        )));
    }
    let bins = (opts.f_max / opts.bin_width).round() as usize;
    let nyquist = 0.5 / dt;
    let mut out = MarginalSpectrum { bin_width: opts.bin_width, amplitude: vec![0.0; bins], dropped: 0, above_range: 0 };
    for imf in imfs {
        if imf.samples.len() < 3 {
            continue;
        }
        let z = analytic_signal(&imf.samples);
        let freq = instantaneous_frequency(&z, dt);
        for (zk, &f) in z.iter().zip(&freq) {
            let a = zk.norm();
            if a == 0.0 {
                continue;
            }
            if !(f > 0.0 && f < nyquist) {
                out.dropped += 1;
                continue;
            }
            let k = (f / opts.bin_width) as usize;
            if k < bins {
                out.amplitude[k] += a;
            } else {
                out.above_range += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn imf(samples: Vec<f64>) -> Imf {
        Imf { index: 0, samples, converged: true }
    }

    #[test]
    fn analytic_signal_of_cosine_is_complex_exponential() {
        let n = 1000;
        let x: Vec<f64> = (0..n).map(|k| (2.0 * PI * 10.0 * k as f64 / n as f64).cos()).collect();
        let z = analytic_signal(&x);
        for (k, v) in z.iter().enumerate() {
            let s = (2.0 * PI * 10.0 * k as f64 / n as f64).sin();
            assert!((v.re - x[k]).abs() < 1e-12 && (v.im - s).abs() < 1e-12);
        }
    }

    #[test]
    fn tone_mass_sits_near_its_frequency() {
        let (dt, f, a) = (1e-8, 55e3, 3.0);
        let n = 200_000;
        let x: Vec<f64> = (0..n).map(|k| a * (2.0 * PI * f * k as f64 * dt).sin()).collect();
        let m = hilbert_marginal(&[imf(x)], dt, &MarginalOptions::default()).unwrap();
        let k0 = (f / m.bin_width) as usize;
        let near: f64 = m.amplitude[k0 - 2..=k0 + 2].iter().sum();
        assert!(near >= 0.999 * m.total());
        assert!((m.total() - a * n as f64).abs() < 1e-6 * a * n as f64);
    }

    #[test]
    fn zero_signal_gives_empty_spectrum() {
        let m = hilbert_marginal(&[imf(vec![0.0; 256])], 1e-8, &MarginalOptions::default()).unwrap();
        assert_eq!(m.total(), 0.0);
        assert!(m.peak().is_none());
        let m = hilbert_marginal(&[], 1e-8, &MarginalOptions::default()).unwrap();
        assert!(m.peak().is_none());
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(48))]
        #[test]
        fn marginal_is_non_negative(xs in proptest::collection::vec(-10.0f64..10.0, 16..300)) {
            let m = hilbert_marginal(&[imf(xs)], 1e-8, &MarginalOptions::default()).unwrap();
            proptest::prop_assert!(m.amplitude.iter().all(|&v| v >= 0.0));
        }
    }
}
