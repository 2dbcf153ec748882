//! Reference waveform, slew-limited sigma-delta level modulator and the
//! prescribed phase current.

use core::f64::consts::PI;

use crate::{Error, Result};

/// Load waveform and modulator rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformSpec {
    /// Load frequency in hertz.
    pub f_out: f64,
    /// Modulator tick rate in hertz.
    pub f_rate: f64,
    /// Modulation index in `[0, 1]`.
    pub m: f64,
    /// Phase current amplitude in amperes.
    pub i_pk: f64,
    /// Current phase lag in radians.
    pub phi: f64,
}

impl Default for WaveformSpec {
    fn default() -> Self {
        Self {
            f_out: 50.0,
            f_rate: 20_000.0,
            m: 0.7,
            i_pk: 25.0,
            phi: 0.0,
        }
    }
}

impl WaveformSpec {
    /// Checks sampling adequacy and the modulation index range.
    pub fn validate(&self) -> Result<()> {
        if !(self.f_out > 0.0) {
            return Err(Error::Parameter("f_out must be positive"));
        }
        if !(self.f_rate >= 100.0 * self.f_out) {
            return Err(Error::Parameter("f_rate must be at least 100 * f_out"));
        }
        if !(0.0..=1.0).contains(&self.m) {
            return Err(Error::Parameter("modulation index must lie in [0, 1]"));
        }
        if !(self.i_pk >= 0.0) || !self.phi.is_finite() {
            return Err(Error::Parameter(
                "current amplitude and phase must be finite",
            ));
        }
        Ok(())
    }

    /// Ticks per fundamental period, if integral.
    pub fn ticks_per_period(&self) -> Option<usize> {
        let p = self.f_rate / self.f_out;
        let r = libm::round(p);
        ((p - r).abs() < 1e-9 * p).then_some(r as usize)
    }

    /// Time of tick `k`.
    pub fn tick_time(&self, k: usize) -> f64 {
        k as f64 / self.f_rate
    }
}

/// Continuous reference in level units: `N * m * sin(2 pi f_out t)`.
pub fn reference_level(t: f64, spec: &WaveformSpec, n: usize) -> f64 {
    n as f64 * spec.m * libm::sin(2.0 * PI * spec.f_out * t)
}

/// Prescribed phase current `i_pk * sin(2 pi f_out t - phi)`.
pub fn phase_current(t: f64, spec: &WaveformSpec) -> f64 {
    spec.i_pk * libm::sin(2.0 * PI * spec.f_out * t - spec.phi)
}

/// One step of the first-order modulator.
///
/// `acc` is the running sum of `reference - level`. The next level moves one
/// step from `prev_level` towards `acc + reference` when that target is at
/// least half a level away. `acc` stays bounded for references slewing well
/// below one level per tick (below 1 for slews up to 0.2 level per tick).
/// Output is clamped to `[-n, n]`.
pub fn sigma_delta_step(reference: f64, prev_level: i32, acc: f64, n: usize) -> (i32, f64) {
    let target = acc + reference;
    let diff = target - prev_level as f64;
    let mut level = prev_level;
    if diff.abs() >= 0.5 {
        level += if diff > 0.0 { 1 } else { -1 };
    }
    let level = level.clamp(-(n as i32), n as i32);
    (level, target - level as f64)
}

/// Stateful wrapper around [`sigma_delta_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaDelta {
    level: i32,
    acc: f64,
    n: usize,
}

impl SigmaDelta {
    /// Modulator for an `n`-module string, starting at level 0.
    pub fn new(n: usize) -> Self {
        Self {
            level: 0,
            acc: 0.0,
            n,
        }
    }

    /// Feeds one reference sample and returns the emitted level.
    pub fn step(&mut self, reference: f64) -> i32 {
        let (level, acc) = sigma_delta_step(reference, self.level, self.acc, self.n);
        self.level = level;
        self.acc = acc;
        level
    }

    /// Last emitted level.
    pub fn level(&self) -> i32 {
        self.level
    }

    /// Accumulated tracking error.
    pub fn accumulator(&self) -> f64 {
        self.acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn reference_examples() {
        let spec = WaveformSpec {
            m: 1.0,
            ..Default::default()
        };
        assert_eq!(reference_level(0.0, &spec, 5), 0.0);
        assert!((reference_level(0.005, &spec, 5) - 5.0).abs() < 1e-12);
        assert!((reference_level(0.015, &spec, 5) + 5.0).abs() < 1e-12);
        let spec = WaveformSpec::default();
        assert!((reference_level(0.005, &spec, 5) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn phase_current_examples() {
        let spec = WaveformSpec::default();
        assert_eq!(phase_current(0.0, &spec), 0.0);
        assert!((phase_current(0.005, &spec) - 25.0).abs() < 1e-12);
        let flipped = WaveformSpec { phi: PI, ..spec };
        for k in 0..400 {
            let t = spec.tick_time(k);
            assert!((phase_current(t, &flipped) + phase_current(t, &spec)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_reference_holds_zero() {
        let mut sd = SigmaDelta::new(5);
        for _ in 0..1000 {
            assert_eq!(sd.step(0.0), 0);
        }
    }

    #[test]
    fn constant_reference_long_run_mean() {
        let mut sd = SigmaDelta::new(5);
        let ticks = 20_000;
        let sum: i64 = (0..ticks).map(|_| sd.step(2.5) as i64).sum();
        let mean = sum as f64 / ticks as f64;
        // Sum of (ref - level) telescopes into the accumulator, which stays
        // bounded after the initial slew.
        assert!((mean - 2.5).abs() <= 4.0 / ticks as f64, "{mean}");
    }

    #[test]
    fn period_means_track_reference() {
        let spec = WaveformSpec::default();
        let p = spec.ticks_per_period().unwrap();
        let mut sd = SigmaDelta::new(5);
        let mut levels = Vec::new();
        let mut refs = Vec::new();
        for k in 0..10 * p {
            let r = reference_level(spec.tick_time(k), &spec, 5);
            refs.push(r);
            levels.push(sd.step(r) as f64);
            assert!(sd.accumulator().abs() <= 0.5 + 1e-12);
        }
        for (l, r) in levels.chunks(p).zip(refs.chunks(p)) {
            let diff = (l.iter().sum::<f64>() - r.iter().sum::<f64>()) / p as f64;
            assert!(diff.abs() <= 1.0 / p as f64 + 1e-12, "{diff}");
        }
    }

    #[test]
    fn slew_and_clamp() {
        let mut sd = SigmaDelta::new(5);
        let mut prev = 0;
        for k in 0..2000 {
            let r = if (k / 100) % 2 == 0 { 9.0 } else { -9.0 };
            let l = sd.step(r);
            assert!((l - prev).abs() <= 1);
            assert!(l.abs() <= 5);
            prev = l;
        }
    }

    #[test]
    fn full_modulation_covers_eleven_levels() {
        let spec = WaveformSpec {
            m: 1.0,
            ..Default::default()
        };
        let mut sd = SigmaDelta::new(5);
        let mut seen = [false; 11];
        for k in 0..spec.ticks_per_period().unwrap() {
            let l = sd.step(reference_level(spec.tick_time(k), &spec, 5));
            seen[(l + 5) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn validation() {
        assert!(WaveformSpec::default().validate().is_ok());
        let bad = WaveformSpec {
            f_rate: 1000.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = WaveformSpec {
            m: 1.2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
