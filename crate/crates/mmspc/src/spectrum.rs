//! Amplitude spectra and the switching-pattern metric.

use mmspc_core::Error as CoreError;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::Result;

/// One-sided amplitude spectrum, rectangular window.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Bin spacing in hertz.
    pub resolution: f64,
    /// Amplitude per bin, starting at DC.
    pub amplitudes: Vec<f64>,
}

impl Spectrum {
    /// Frequency of bin `k`.
    pub fn freq(&self, k: usize) -> f64 {
        k as f64 * self.resolution
    }

    /// Bin closest to `f` hertz.
    pub fn bin(&self, f: f64) -> usize {
        (f / self.resolution).round() as usize
    }

    /// Amplitude at the bin closest to `f`.
    pub fn at(&self, f: f64) -> f64 {
        self.amplitudes.get(self.bin(f)).copied().unwrap_or(0.0)
    }

    /// DC amplitude (the signal mean, unsigned).
    pub fn dc(&self) -> f64 {
        self.amplitudes[0]
    }

    /// `(frequency, amplitude)` pairs.
    pub fn bins(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(k, &a)| (self.freq(k), a))
    }

    /// Mean square of the signal reconstructed from the amplitudes.
    pub fn mean_square(&self, even_length: bool) -> f64 {
        let last = self.amplitudes.len() - 1;
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(k, a)| {
                if k == 0 || (even_length && k == last) {
                    a * a
                } else {
                    a * a / 2.0
                }
            })
            .sum()
    }
}

/// DC bin = |mean|, other bins = 2|X_k|/L; the Nyquist bin of an even-length
/// signal is |X_k|/L since it has no mirror image.
pub fn amplitude_spectrum(samples: &[f64], f_s: f64) -> Result<Spectrum> {
    let len = samples.len();
    if len < 2 {
        return Err(CoreError::TooShort(len).into());
    }
    if !(f_s > 0.0) {
        return Err(CoreError::Parameter("sampling rate must be positive").into());
    }
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    let l = len as f64;
    let amplitudes = (0..=half)
        .map(|k| {
            let a = buf[k].norm() / l;
            if k == 0 || (len.is_multiple_of(2) && k == half) {
                a
            } else {
                2.0 * a
            }
        })
        .collect();
    Ok(Spectrum {
        resolution: f_s / l,
        amplitudes,
    })
}

/// Biased autocorrelation `r[lag] = sum x[k] x[k + lag]` for lags
/// `0..=max_lag`, by zero-padded FFT.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let size = (2 * n).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for b in &mut buf {
        *b = Complex64::new(b.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf.iter()
        .take(max_lag.min(n - 1) + 1)
        .map(|c| c.re / size as f64)
        .collect()
}

/// Strength of slow repeating motifs in a module current.
///
/// The period-synchronous average (the part that repeats every `period`
/// samples) is removed first, so the steady 100 Hz load shape does not count
/// as a pattern. Returns the largest normalized autocorrelation of the
/// remainder over lags `lag_lo..=lag_hi` samples; 0 for a remainder without
/// energy.
pub fn pattern_metric(samples: &[f64], period: usize, lag_lo: usize, lag_hi: usize) -> Result<f64> {
    if period == 0 || samples.len() < 2 * period {
        return Err(CoreError::TooShort(samples.len()).into());
    }
    if lag_lo > lag_hi || lag_hi >= samples.len() {
        return Err(CoreError::Parameter("lag window outside the signal").into());
    }
    let periods = samples.len() / period;
    let used = &samples[..periods * period];
    let mut avg = vec![0.0; period];
    for (k, &x) in used.iter().enumerate() {
        avg[k % period] += x;
    }
    for a in &mut avg {
        *a /= periods as f64;
    }
    let residual: Vec<f64> = used
        .iter()
        .enumerate()
        .map(|(k, &x)| x - avg[k % period])
        .collect();
    let r = autocorrelation(&residual, lag_hi);
    if !(r[0] > 1e-12 * used.iter().map(|x| x * x).sum::<f64>()) {
        return Ok(0.0);
    }
    Ok(r[lag_lo..=lag_hi.min(r.len() - 1)]
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
        / r[0])
}
