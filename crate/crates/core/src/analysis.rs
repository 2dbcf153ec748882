//! Ripple and ageing metrics on sampled module currents.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::topology::StringState;
use crate::{Error, Result};

/// Default cut-off set of the ageing metric in hertz: lower bound, marker,
/// upper bound.
pub const DEFAULT_CUTOFFS: [f64; 3] = [5.0, 50.0, 100.0];

fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

fn checked_mean(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::TooShort(0));
    }
    let m = mean(samples);
    let ms = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
    if m == 0.0 || m.abs() <= 1e-12 * libm::sqrt(ms) {
        return Err(Error::ZeroMean);
    }
    Ok((m, ms))
}

/// RMS of the deviation from the mean, over the absolute mean.
pub fn ripple_ratio(samples: &[f64]) -> Result<f64> {
    let (m, _) = checked_mean(samples)?;
    let var = samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / samples.len() as f64;
    Ok(libm::sqrt(var) / m.abs())
}

/// Total RMS over the absolute mean.
pub fn rms_avg_ratio(samples: &[f64]) -> Result<f64> {
    let (m, ms) = checked_mean(samples)?;
    Ok(libm::sqrt(ms) / m.abs())
}

/// First-order low-pass with unity DC gain and corner `f_c`, discretized
/// step-invariantly: `y[k+1] = a*y[k] + (1-a)*x[k]`, `a = exp(-2 pi f_c / f_s)`.
///
/// It stands for the faradaic branch of the electrode: current above the
/// corner is shunted by the double-layer capacitance. The state starts at
/// the signal mean so that a record covering whole periods is analysed in
/// its periodic steady state.
pub fn degradation_filter(samples: &[f64], f_c: f64, f_s: f64) -> Result<Vec<f64>> {
    if !(f_c > 0.0 && f_s > 0.0 && f_c < f_s / 2.0) {
        return Err(Error::Parameter("cut-off must satisfy 0 < f_c < f_s / 2"));
    }
    if samples.is_empty() {
        return Err(Error::TooShort(0));
    }
    let a = libm::exp(-2.0 * PI * f_c / f_s);
    let mut y = mean(samples);
    Ok(samples
        .iter()
        .map(|&x| {
            let out = y;
            y = a * y + (1.0 - a) * x;
            out
        })
        .collect())
}

/// Ripple ratio behind the degradation filter for several cut-offs.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeingReport {
    /// `(cut-off in Hz, ripple ratio)` in the order requested.
    pub entries: Vec<(f64, f64)>,
    /// Total RMS over mean of the unfiltered signal.
    pub raw_rms_avg: f64,
    /// Ripple ratio of the unfiltered signal.
    pub raw_ripple: f64,
}

impl AgeingReport {
    /// Ratio at cut-off `f_c`, if it was evaluated.
    pub fn at(&self, f_c: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|(f, _)| (f - f_c).abs() < 1e-9)
            .map(|e| e.1)
    }

    /// Ratio at the highest cut-off (upper error bar).
    pub fn upper(&self) -> Option<f64> {
        self.entries
            .iter()
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|e| e.1)
    }

    /// Ratio at the lowest cut-off (lower error bar).
    pub fn lower(&self) -> Option<f64> {
        self.entries
            .iter()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|e| e.1)
    }
}

/// Runs [`degradation_filter`] and [`ripple_ratio`] for every cut-off.
pub fn ageing_metric(samples: &[f64], cutoffs: &[f64], f_s: f64) -> Result<AgeingReport> {
    if cutoffs.is_empty() {
        return Err(Error::Parameter("at least one cut-off required"));
    }
    let entries = cutoffs
        .iter()
        .map(|&fc| Ok((fc, ripple_ratio(&degradation_filter(samples, fc, f_s)?)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AgeingReport {
        entries,
        raw_rms_avg: rms_avg_ratio(samples)?,
        raw_ripple: ripple_ratio(samples)?,
    })
}

/// Parameters of the Randles cell model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandlesParams {
    /// Electrolyte resistance in ohms.
    pub r0: f64,
    /// Charge-transfer resistance in ohms.
    pub rct: f64,
    /// Double-layer capacitance in farads.
    pub cdl: f64,
    /// Warburg coefficient in ohm / sqrt(s).
    pub sigma_w: f64,
}

impl Default for RandlesParams {
    /// Illustrative LiFePO4-scale values; not fitted to any cell.
    fn default() -> Self {
        Self {
            r0: 25e-3,
            rct: 15e-3,
            cdl: 1.0,
            sigma_w: 5e-3,
        }
    }
}

/// Cell impedance `R0 + 1 / (1 / (Rct + Zw) + j w Cdl)` with
/// `Zw = sigma_w * w^(-1/2) * (1 - j)`.
pub fn randles_impedance(f: f64, p: &RandlesParams) -> Result<Complex64> {
    if !(f > 0.0) {
        return Err(Error::Parameter("frequency must be positive"));
    }
    if !(p.r0 > 0.0 && p.rct > 0.0 && p.cdl > 0.0 && p.sigma_w > 0.0) {
        return Err(Error::Parameter("Randles parameters must be positive"));
    }
    let w = 2.0 * PI * f;
    let zw = Complex64::new(1.0, -1.0) * (p.sigma_w / libm::sqrt(w));
    let faradaic = Complex64::new(p.rct, 0.0) + zw;
    let y = faradaic.inv() + Complex64::new(0.0, w * p.cdl);
    Ok(Complex64::new(p.r0, 0.0) + y.inv())
}

/// Per-module switching rate in hertz: ticks at which either connection
/// element adjacent to `module` changes, times `f_s / len`, halved because a
/// full switching event (on and off) spans two such changes.
pub fn module_switch_rate(trace: &[StringState], f_s: f64, module: usize) -> Result<f64> {
    if trace.len() < 2 {
        return Err(Error::TooShort(trace.len()));
    }
    let n = trace[0].len();
    if module >= n {
        return Err(Error::Parameter("module index out of range"));
    }
    let [a, b] = trace[0].adjacent_elements(module);
    let changes = trace
        .windows(2)
        .filter(|w| w[0].get(a) != w[1].get(a) || w[0].get(b) != w[1].get(b))
        .count();
    Ok(changes as f64 * f_s / trace.len() as f64 / 2.0)
}

/// Effective per-module switching frequency predicted from the tick rate,
/// module count and modulation index: `f_rate / N * (1 - m)`.
pub fn predicted_module_rate(f_rate: f64, n: usize, m: f64) -> f64 {
    f_rate / n as f64 * (1.0 - m)
}
