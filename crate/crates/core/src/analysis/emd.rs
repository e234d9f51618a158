//! Empirical mode decomposition by envelope-mean sifting.
//!
//! Envelopes are natural cubic splines through the local extrema, with the
//! two extrema nearest each end mirrored about the end samples. Sifting
//! stops when the standard-deviation criterion drops below `sd_threshold`
//! or after `max_sifts` passes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmdOptions {
    pub sd_threshold: f64,
    pub max_sifts: usize,
    pub max_imfs: usize,
}

impl Default for EmdOptions {
    fn default() -> Self {
        EmdOptions { sd_threshold: 0.3, max_sifts: 10, max_imfs: 16 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Imf {
    pub index: usize,
    pub samples: Vec<f64>,
    /// Whether sifting met the SD criterion before the sift cap.
    pub converged: bool,
}

impl Imf {
    pub fn extrema_count(&self) -> usize {
        let (mx, mn) = extrema(&self.samples);
        mx.len() + mn.len()
    }

    pub fn zero_crossings(&self) -> usize {
        self.samples.windows(2).filter(|p| (p[0] < 0.0 && p[1] >= 0.0) || (p[0] >= 0.0 && p[1] < 0.0)).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emd {
    pub dt: f64,
    pub imfs: Vec<Imf>,
    pub residue: Vec<f64>,
    /// False when any IMF hit the sift cap.
    pub converged: bool,
}

impl Emd {
    /// Sum of all IMFs and the residue.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residue.clone();
        for imf in &self.imfs {
            for (o, v) in out.iter_mut().zip(&imf.samples) {
                *o += v;
            }
        }
        out
    }
}

/// Indices of strict local maxima and minima (plateaus count once, at their start).
fn extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let (mut maxima, mut minima) = (Vec::new(), Vec::new());
    let n = x.len();
    let mut k = 1;
    while k + 1 < n {
        // skip across a plateau to find the next differing sample
        let mut j = k;
        while j + 1 < n && x[j + 1] == x[k] {
            j += 1;
        }
        if j + 1 >= n {
            break;
        }
        if x[k] > x[k - 1] && x[k] > x[j + 1] {
            maxima.push(k);
        } else if x[k] < x[k - 1] && x[k] < x[j + 1] {
            minima.push(k);
        }
        k = j + 1;
    }
    (maxima, minima)
}

/// Natural cubic spline through `(xs, ys)` evaluated at `0..n`.
fn spline(xs: &[f64], ys: &[f64], n: usize) -> Vec<f64> {
    let m = xs.len();
    if m == 2 {
        let slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        return (0..n).map(|t| ys[0] + slope * (t as f64 - xs[0])).collect();
    }
    // second derivatives by the tridiagonal system (Thomas algorithm)
    let h: Vec<f64> = xs.windows(2).map(|p| p[1] - p[0]).collect();
    let mut diag = vec![1.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let mut lower = vec![0.0; m];
    for i in 1..m - 1 {
        lower[i] = h[i - 1];
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        upper[i] = h[i];
        rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
    }
    for i in 1..m {
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut sd = vec![0.0; m];
    sd[m - 1] = rhs[m - 1] / diag[m - 1];
    for i in (0..m - 1).rev() {
        sd[i] = (rhs[i] - upper[i] * sd[i + 1]) / diag[i];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for t in 0..n {
        let t = t as f64;
        while seg + 2 < m && t > xs[seg + 1] {
            seg += 1;
        }
        let (x0, x1, hh) = (xs[seg], xs[seg + 1], h[seg]);
        let (a, b) = ((x1 - t) / hh, (t - x0) / hh);
        out.push(
            a * ys[seg] + b * ys[seg + 1] + ((a * a * a - a) * sd[seg] + (b * b * b - b) * sd[seg + 1]) * hh * hh / 6.0,
        );
    }
    out
}

/// Knots for one envelope with two mirrored extrema beyond each end.
fn envelope_knots(x: &[f64], idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let last = (x.len() - 1) as f64;
    let take = idx.len().min(2);
    let mut xs = Vec::with_capacity(idx.len() + 4);
    let mut ys = Vec::with_capacity(idx.len() + 4);
    for &k in idx[..take].iter().rev() {
        xs.push(-(k as f64));
        ys.push(x[k]);
    }
    for &k in idx {
        xs.push(k as f64);
        ys.push(x[k]);
    }
    for &k in idx[idx.len() - take..].iter().rev() {
        xs.push(2.0 * last - k as f64);
        ys.push(x[k]);
    }
    // mirrored knots coincide with originals when an extremum sits on an end sample
    let mut kx = Vec::with_capacity(xs.len());
    let mut ky = Vec::with_capacity(xs.len());
    for (a, b) in xs.into_iter().zip(ys) {
        if kx.last().is_none_or(|&p| a > p) {
            kx.push(a);
            ky.push(b);
        }
    }
    (kx, ky)
}

/// Envelope mean, or `None` when there are too few extrema to sift.
fn envelope_mean(x: &[f64]) -> Option<Vec<f64>> {
    let (maxima, minima) = extrema(x);
    if maxima.len() + minima.len() < 3 || maxima.is_empty() || minima.is_empty() {
        return None;
    }
    let (ux, uy) = envelope_knots(x, &maxima);
    let (lx, ly) = envelope_knots(x, &minima);
    if ux.len() < 2 || lx.len() < 2 {
        return None;
    }
    let upper = spline(&ux, &uy, x.len());
    let lower = spline(&lx, &ly, x.len());
    Some(upper.iter().zip(&lower).map(|(u, l)| 0.5 * (u + l)).collect())
}

pub fn emd(w: &Waveform, opts: &EmdOptions) -> Result<Emd> {
    let x = w.samples();
    if x.len() < 64 {
        return Err(Error::Analysis(format!("EMD needs at least 64 samples, got {}", x.len())));
    }
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut residue = x.to_vec();
    let mut imfs = Vec::new();
    let mut converged = true;
    while imfs.len() < opts.max_imfs {
        let (mx, mn) = extrema(&residue);
        if mx.len() + mn.len() <= 2 || residue.iter().all(|v| v.abs() <= 1e-12 * scale) {
            break;
        }
        let mut h = residue.clone();
        let mut ok = false;
        for _ in 0..opts.max_sifts {
            let Some(mean) = envelope_mean(&h) else { break };
            let mut num = 0.0;
            let mut den = 0.0;
            for (hv, mv) in h.iter_mut().zip(&mean) {
                num += mv * mv;
                den += *hv * *hv;
                *hv -= mv;
            }
            let sd = if den > 0.0 { num / den } else { 0.0 };
            if sd < opts.sd_threshold {
                ok = true;
                break;
            }
        }
        converged &= ok;
        for (r, hv) in residue.iter_mut().zip(&h) {
            *r -= hv;
        }
        imfs.push(Imf { index: imfs.len(), samples: h, converged: ok });
    }
    Ok(Emd { dt: w.dt(), imfs, residue, converged })
}
