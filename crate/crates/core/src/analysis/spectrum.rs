//! Single-sided magnitude spectra and the with/without-arrester filter view.

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    None,
    Hann,
}

/// Magnitude `dt * |X_k|` on the grid `k / (N dt)`, `k = 0..=N/2`.
///
/// The DC bin is therefore `mean * N * dt`, the signal integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub df: f64,
    pub magnitude: Vec<f64>,
    /// Number of time samples the spectrum was computed from.
    pub n: usize,
    pub sample_rate: f64,
    pub source: String,
}

impl Spectrum {
    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.df
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.magnitude.len()).map(|k| self.frequency(k))
    }

    pub fn nyquist(&self) -> f64 {
        0.5 * self.sample_rate
    }

    /// Signal energy from the single-sided spectrum, `sum x^2 dt`.
    pub fn energy(&self) -> f64 {
        let m = &self.magnitude;
        let last = m.len() - 1;
        let mut acc = m[0] * m[0];
        for (k, x) in m.iter().enumerate().skip(1) {
            let w = if self.n.is_multiple_of(2) && k == last { 1.0 } else { 2.0 };
            acc += w * x * x;
        }
        acc * self.df
    }

    /// Largest local maximum above DC, as `(frequency, magnitude)`.
    pub fn dominant_peak(&self) -> Option<(f64, f64)> {
        self.dominant_peak_in(self.df * 0.5, f64::INFINITY)
    }

    /// Largest local maximum with frequency in `[lo, hi]`.
    pub fn dominant_peak_in(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let m = &self.magnitude;
        let mut best: Option<(usize, f64)> = None;
        for k in 1..m.len().saturating_sub(1) {
            let f = self.frequency(k);
            if f < lo || f > hi {
                continue;
            }
            if m[k] > m[k - 1] && m[k] >= m[k + 1] && best.is_none_or(|(_, v)| m[k] > v) {
                best = Some((k, m[k]));
            }
        }
        best.map(|(k, v)| (self.frequency(k), v))
    }

    fn same_grid(&self, other: &Spectrum) -> bool {
        self.magnitude.len() == other.magnitude.len() && (self.df - other.df).abs() <= 1e-9 * self.df
    }
}

pub fn fft_magnitude(w: &Waveform) -> Result<Spectrum> {
    fft_magnitude_with(w, Window::None, "")
}

pub fn fft_magnitude_with(w: &Waveform, window: Window, source: &str) -> Result<Spectrum> {
    let n = w.len();
    if n < 16 {
        return Err(Error::Analysis(format!("spectrum needs at least 16 samples, got {n}")));
    }
    let mut buf: Vec<Complex64> = w
        .samples()
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let g = match window {
                Window::None => 1.0,
                Window::Hann => 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos(),
            };
            Complex64::new(x * g, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let dt = w.dt();
    let magnitude = buf[..=n / 2].iter().map(|z| dt * z.norm()).collect();
    Ok(Spectrum { df: 1.0 / (n as f64 * dt), magnitude, n, sample_rate: 1.0 / dt, source: source.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResponse {
    pub df: f64,
    /// `20 log10(|Y| / |X|)` per bin (dB).
    pub ratio_db: Vec<f64>,
    /// Ratio after a centered moving average of `smoothing` bins.
    pub smoothed_db: Vec<f64>,
    /// First frequency where the smoothed ratio is 3 dB below its DC value.
    pub bandwidth_hz: Option<f64>,
    /// `sum |X|^2 / sum |Y|^2`.
    pub power_ratio: f64,
}

/// Default moving-average width of the ratio curve (bins).
pub const DEFAULT_SMOOTHING_BINS: usize = 5;

/// Treats `y` as the output of a filter driven by `x`.
pub fn filter_characterize(x: &Spectrum, y: &Spectrum) -> Result<FilterResponse> {
    filter_characterize_with(x, y, DEFAULT_SMOOTHING_BINS)
}

pub fn filter_characterize_with(x: &Spectrum, y: &Spectrum, smoothing: usize) -> Result<FilterResponse> {
    if !x.same_grid(y) {
        return Err(Error::GridMismatch(format!(
            "{} bins at {} Hz vs {} bins at {} Hz",
            x.magnitude.len(),
            x.df,
            y.magnitude.len(),
            y.df
        )));
    }
    let floor = 1e-12 * x.magnitude.iter().fold(0.0_f64, |m, &v| m.max(v)).max(f64::MIN_POSITIVE);
    let ratio_db: Vec<f64> = x
        .magnitude
        .iter()
        .zip(&y.magnitude)
        .map(|(&a, &b)| 20.0 * (b.max(floor) / a.max(floor)).log10())
        .collect();
    let half = smoothing.max(1) / 2;
    let n = ratio_db.len();
    let smoothed_db: Vec<f64> = (0..n)
        .map(|k| {
            let (lo, hi) = (k.saturating_sub(half), (k + half).min(n - 1));
            ratio_db[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let reference = smoothed_db[0];
    let bandwidth_hz = smoothed_db.iter().position(|&r| r <= reference - 3.0).map(|k| {
        // interpolate the crossing between bins k-1 and k
        if k == 0 {
            return 0.0;
        }
        let (a, b) = (smoothed_db[k - 1], smoothed_db[k]);
        let target = reference - 3.0;
        let frac = if a != b { (a - target) / (a - b) } else { 1.0 };
        x.df * (k as f64 - 1.0 + frac)
    });
    let px: f64 = x.magnitude.iter().map(|v| v * v).sum();
    let py: f64 = y.magnitude.iter().map(|v| v * v).sum();
    let power_ratio = if px == py { 1.0 } else { px / py };
    Ok(FilterResponse { df: x.df, ratio_db, smoothed_db, bandwidth_hz, power_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::Unit;
    use std::f64::consts::PI;

    fn tone(f: f64, n: usize, dt: f64) -> Waveform {
        Waveform::from_fn(dt, 0.0, n, Unit::Volt, |t| (2.0 * PI * f * t).sin()).unwrap()
    }

    #[test]
    fn single_tone_lands_in_one_bin() {
        // 110 periods of 55 kHz span exactly 200 000 samples at 100 MHz
        let w = tone(55e3, 200_000, 10e-9);
        let s = fft_magnitude(&w).unwrap();
        let (f, _) = s.dominant_peak().unwrap();
        assert!((f - 55e3).abs() < 0.5 * s.df);
        let k = (55e3 / s.df).round() as usize;
        let rest: f64 = s.magnitude.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &v)| v).fold(0.0, f64::max);
        assert!(rest < 1e-9 * s.magnitude[k]);
    }

    #[test]
    fn dc_only_energy_in_bin_zero() {
        let w = Waveform::new(1e-6, 0.0, vec![3.0; 64], Unit::Volt).unwrap();
        let s = fft_magnitude(&w).unwrap();
        assert!((s.magnitude[0] - 3.0 * 64.0 * 1e-6).abs() < 1e-15);
        assert!(s.magnitude[1..].iter().all(|&v| v < 1e-18));
    }

    #[test]
    fn rejects_short_input() {
        let w = Waveform::new(1e-6, 0.0, vec![0.0; 15], Unit::Volt).unwrap();
        assert!(fft_magnitude(&w).is_err());
    }

    #[test]
    fn identity_filter_is_flat_zero() {
        let w = Waveform::from_fn(1e-8, 0.0, 1000, Unit::Volt, |t| (-t / 1e-6).exp() * (2.0 * PI * 5e5 * t).cos()).unwrap();
        let s = fft_magnitude(&w).unwrap();
        let r = filter_characterize(&s, &s).unwrap();
        assert!(r.ratio_db.iter().all(|&v| v == 0.0));
        assert_eq!(r.power_ratio, 1.0);
        assert_eq!(r.bandwidth_hz, None);
    }

    #[test]
    fn half_amplitude_is_minus_six_db() {
        let w = Waveform::from_fn(1e-8, 0.0, 512, Unit::Volt, |t| 1.0 + (2.0 * PI * 1e6 * t).sin()).unwrap();
        let x = fft_magnitude(&w).unwrap();
        let y = fft_magnitude(&w.map(|v| 0.5 * v).unwrap()).unwrap();
        let r = filter_characterize(&x, &y).unwrap();
        let expected = 20.0 * 0.5f64.log10();
        assert!((expected + 6.0206).abs() < 1e-4);
        for (k, &v) in r.ratio_db.iter().enumerate() {
            if x.magnitude[k] > 1e-9 * x.magnitude[0] {
                assert!((v - expected).abs() < 1e-9);
            }
        }
        assert!((r.power_ratio - 4.0).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = fft_magnitude(&tone(1e3, 100, 1e-5)).unwrap();
        let b = fft_magnitude(&tone(1e3, 120, 1e-5)).unwrap();
        assert!(matches!(filter_characterize(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn first_order_lowpass_bandwidth() {
        // y = x through an RC filter with 20 kHz corner: the ratio of spectra
        // is the filter gain, which is 3 dB down at the corner.
        let dt = 1e-7;
        let n = 20_000;
        let x: Vec<f64> = (0..n).map(|k| if k == 0 { 1.0 / dt } else { 0.0 }).collect();
        let tau = 1.0 / (2.0 * PI * 20e3);
        let y: Vec<f64> = (0..n).map(|k| (-(k as f64) * dt / tau).exp() / tau).collect();
        let xs = fft_magnitude(&Waveform::new(dt, 0.0, x, Unit::Volt).unwrap()).unwrap();
        let ys = fft_magnitude(&Waveform::new(dt, 0.0, y, Unit::Volt).unwrap()).unwrap();
        let r = filter_characterize_with(&xs, &ys, 1).unwrap();
        let bw = r.bandwidth_hz.unwrap();
        assert!((bw - 20e3).abs() < 0.05 * 20e3, "bandwidth {bw}");
    }

    proptest::proptest! {
        #[test]
        fn parseval_holds(xs in proptest::collection::vec(-1e3f64..1e3, 16..600), dt in 1e-9f64..1e-3) {
            let w = Waveform::new(dt, 0.0, xs.clone(), Unit::Volt).unwrap();
            let s = fft_magnitude(&w).unwrap();
            let time_energy: f64 = xs.iter().map(|x| x * x).sum::<f64>() * dt;
            let freq_energy = s.energy();
            let scale = time_energy.max(1e-300);
            proptest::prop_assert!((time_energy - freq_energy).abs() <= 1e-9 * scale);
            proptest::prop_assert!(s.magnitude.iter().all(|&m| m >= 0.0));
        }
    }
}
