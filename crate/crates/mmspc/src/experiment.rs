//! Method comparison and modulation-index sweeps.
//!
//! Scenarios run concurrently on scoped threads; results are stored by
//! scenario index so the output never depends on scheduling.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use mmspc_core::analysis::{
    ageing_metric, module_switch_rate, predicted_module_rate, ripple_ratio, rms_avg_ratio,
    AgeingReport,
};
use mmspc_core::sim::{run_scenario, Method, ScenarioConfig, Trace};

use crate::spectrum::{amplitude_spectrum, pattern_metric, Spectrum};
use crate::{Error, Result};

/// Feedback delay and list update period of the reference method in
/// comparisons, in seconds.
pub const REFERENCE_PERIOD: f64 = 0.1;

/// Lag window of the pattern metric in seconds.
pub const PATTERN_WINDOW: (f64, f64) = (0.02, 0.5);

/// Modulation indexes of the default sweep.
pub const DEFAULT_SWEEP: [f64; 8] = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Figures of merit of one module current.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub method: Method,
    pub module: usize,
    pub spectrum: Spectrum,
    pub ageing: AgeingReport,
    pub rms_avg: f64,
    pub ripple: f64,
    pub pattern: f64,
    pub switch_rate: f64,
    pub mean_switch_rate: f64,
}

/// Computes every figure of merit for `module` of a finished run.
pub fn analyze(cfg: &ScenarioConfig, trace: &Trace, module: usize) -> Result<RunSummary> {
    if module >= trace.n_modules {
        return Err(mmspc_core::Error::Parameter("module index out of range").into());
    }
    let f_s = trace.f_rate;
    let current = trace.module_current(module);
    let states = trace.states();
    let period = cfg
        .waveform
        .ticks_per_period()
        .ok_or(mmspc_core::Error::Parameter(
            "tick rate must be a multiple of the load frequency",
        ))?;
    let lag = |s: f64| (s * f_s).round() as usize;
    let lag_hi = lag(PATTERN_WINDOW.1).min(current.len().saturating_sub(1));
    let mean_switch_rate = (0..trace.n_modules)
        .map(|m| module_switch_rate(&states, f_s, m))
        .sum::<mmspc_core::Result<f64>>()?
        / trace.n_modules as f64;
    Ok(RunSummary {
        method: cfg.method,
        module,
        spectrum: amplitude_spectrum(&current, f_s)?,
        ageing: ageing_metric(&current, &cfg.cutoffs, f_s)?,
        rms_avg: rms_avg_ratio(&current)?,
        ripple: ripple_ratio(&current)?,
        pattern: pattern_metric(&current, period, lag(PATTERN_WINDOW.0), lag_hi)?,
        switch_rate: module_switch_rate(&states, f_s, module)?,
        mean_switch_rate,
    })
}

/// One simulated and analysed scenario.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub config: ScenarioConfig,
    pub trace: Trace,
    pub summary: RunSummary,
}

/// Runs `jobs` on up to `available_parallelism` threads. The result vector
/// is in job order.
pub fn run_parallel<T, R, F>(jobs: &[T], work: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len())
        .max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(k) else { break };
                let r = work(job);
                slots.lock().unwrap()[k] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

fn simulate(cfg: &ScenarioConfig, module: usize) -> Result<MethodRun> {
    let trace = run_scenario(cfg)?;
    let summary = analyze(cfg, &trace, module)?;
    Ok(MethodRun {
        config: cfg.clone(),
        trace,
        summary,
    })
}

/// The two configurations a comparison runs: the proposed scheduler without
/// feedback delay (sensorless if `base` asks for it) and the reference
/// scheduler with 100 ms feedback and list updates.
pub fn comparison_configs(base: &ScenarioConfig) -> [ScenarioConfig; 2] {
    let mut proposed = base.clone();
    proposed.method = match base.method {
        Method::ProposedSensorless => Method::ProposedSensorless,
        _ => Method::Proposed,
    };
    proposed.feedback_delay = 0.0;
    let mut reference = base.clone();
    reference.method = Method::Reference;
    reference.feedback_delay = REFERENCE_PERIOD;
    reference.update_period = REFERENCE_PERIOD;
    [proposed, reference]
}

/// Paired runs on identical waveforms.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub proposed: MethodRun,
    pub reference: MethodRun,
}

impl Comparison {
    /// Both runs, proposed first.
    pub fn runs(&self) -> [&MethodRun; 2] {
        [&self.proposed, &self.reference]
    }
}

/// Runs and analyses both methods for `module`.
pub fn compare_methods(base: &ScenarioConfig, module: usize) -> Result<Comparison> {
    let configs = comparison_configs(base);
    let mut runs = run_parallel(&configs, |c| simulate(c, module)).into_iter();
    let proposed = runs.next().expect("two runs")?;
    let reference = runs.next().expect("two runs")?;
    Ok(Comparison {
        proposed,
        reference,
    })
}

/// One method at one modulation index.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub m: f64,
    pub method: Method,
    pub ageing: AgeingReport,
    pub rms_avg: f64,
    pub switch_rate: f64,
    pub mean_switch_rate: f64,
    pub predicted_rate: f64,
}

/// Sweep results ordered by `m`, then proposed before reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub module: usize,
    pub points: Vec<SweepPoint>,
}

impl Sweep {
    /// Points of one method in sweep order.
    pub fn method(&self, method: Method) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(move |p| p.method == method)
    }
}

/// Compares both methods over `m_values`.
pub fn sweep_modulation(base: &ScenarioConfig, m_values: &[f64], module: usize) -> Result<Sweep> {
    if let Some(m) = m_values.iter().find(|m| !(0.0..=1.0).contains(*m)) {
        return Err(Error::Config(format!(
            "modulation index {m} outside [0, 1]"
        )));
    }
    let configs: Vec<ScenarioConfig> = m_values
        .iter()
        .flat_map(|&m| {
            let mut b = base.clone();
            b.waveform.m = m;
            comparison_configs(&b)
        })
        .collect();
    let n = base.n_modules();
    let points = run_parallel(&configs, |cfg| -> Result<SweepPoint> {
        let trace = run_scenario(cfg)?;
        let current = trace.module_current(module);
        let states = trace.states();
        let rates = (0..n)
            .map(|k| module_switch_rate(&states, trace.f_rate, k))
            .collect::<mmspc_core::Result<Vec<f64>>>()?;
        Ok(SweepPoint {
            m: cfg.waveform.m,
            method: cfg.method,
            ageing: ageing_metric(&current, &cfg.cutoffs, trace.f_rate)?,
            rms_avg: rms_avg_ratio(&current)?,
            switch_rate: rates[module],
            mean_switch_rate: rates.iter().sum::<f64>() / n as f64,
            predicted_rate: predicted_module_rate(cfg.waveform.f_rate, n, cfg.waveform.m),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Sweep { module, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::new(5).unwrap();
        cfg.duration = 0.4;
        cfg
    }

    #[test]
    fn parallel_results_keep_job_order() {
        let jobs: Vec<u64> = (0..50).collect();
        let out = run_parallel(&jobs, |j| j * j);
        assert_eq!(out, jobs.iter().map(|j| j * j).collect::<Vec<_>>());
    }

    #[test]
    fn comparison_setup() {
        let [p, r] = comparison_configs(&base());
        assert_eq!(p.method, Method::Proposed);
        assert_eq!(p.feedback_delay, 0.0);
        assert_eq!(r.method, Method::Reference);
        assert_eq!((r.feedback_delay, r.update_period), (0.1, 0.1));
        assert_eq!(p.waveform, r.waveform);
    }

    #[test]
    fn compare_reports_both_methods() {
        let c = compare_methods(&base(), 4).unwrap();
        assert_eq!(c.proposed.summary.method, Method::Proposed);
        assert_eq!(c.reference.summary.method, Method::Reference);
        for run in c.runs() {
            let s = &run.summary;
            assert_eq!(run.trace.records.len(), 8000);
            assert!(s.rms_avg >= 1.0);
            assert!((s.rms_avg * s.rms_avg - 1.0 - s.ripple * s.ripple).abs() < 1e-9);
            assert_eq!(s.ageing.entries.len(), 3);
        }
    }

    #[test]
    fn sweep_layout() {
        let mut b = base();
        b.duration = 0.1;
        let s = sweep_modulation(&b, &[0.3, 0.8], 4).unwrap();
        assert_eq!(s.points.len(), 4);
        let ms: Vec<(f64, Method)> = s.points.iter().map(|p| (p.m, p.method)).collect();
        assert_eq!(
            ms,
            [
                (0.3, Method::Proposed),
                (0.3, Method::Reference),
                (0.8, Method::Proposed),
                (0.8, Method::Reference)
            ]
        );
        assert!(sweep_modulation(&b, &[1.2], 4).is_err());
    }
}
