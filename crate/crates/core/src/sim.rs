//! Fixed-step simulation of one phase string.
//!
//! Each tick: the modulator turns the sinusoidal reference into an integer
//! level, the scheduler picks a string state realizing it, every inserted
//! group is solved for its battery currents, and the batteries are
//! coulomb-counted. The loop is deterministic: identical configurations give
//! identical traces.

use alloc::vec::Vec;

use crate::analysis::DEFAULT_CUTOFFS;
use crate::control::{
    demand_generator, observer_estimate, select_state, ControllerState, DelayLine, DemandMode,
    Gains, LutPolicy, Observer,
};
use crate::electrical::{
    string_currents, BatteryModule, DistributionVector, InterconnectResistances, DEFAULT_R_LINK,
};
use crate::modulation::{phase_current, reference_level, SigmaDelta, WaveformSpec};
use crate::reference::{reference_select, OptimizedStateList};
use crate::topology::{decompose_groups, enumerate_transitions, StringState};
use crate::{Error, Result, MAX_MODULES};

/// Scheduling method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// High-bandwidth scheduler fed by the phase current.
    Proposed,
    /// High-bandwidth scheduler fed by the sign of the voltage reference.
    ProposedSensorless,
    /// Slow list-based scheduler.
    Reference,
}

impl Method {
    /// Name used in files and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::ProposedSensorless => "proposed-sensorless",
            Method::Reference => "reference",
        }
    }

    /// Parses [`Method::name`].
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "proposed" => Some(Method::Proposed),
            "proposed-sensorless" => Some(Method::ProposedSensorless),
            "reference" => Some(Method::Reference),
            _ => None,
        }
    }
}

/// Everything one simulation run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Reference and phase current.
    pub waveform: WaveformSpec,
    /// Scheduler.
    pub method: Method,
    /// Feedback delay in seconds. For the proposed methods it delays the
    /// observer feedback; for the reference method it is the acquisition
    /// period of the held state-of-charge samples used by list rebuilds.
    pub feedback_delay: f64,
    /// Reference-method list rebuild period in seconds.
    pub update_period: f64,
    /// Maximum connection elements changed per tick (proposed methods).
    pub toggle_limit: usize,
    /// Whether the proposed methods may reconfigure on ticks where the
    /// level does not change.
    pub reselect_idle: bool,
    /// Controller gains; `None` picks the per-method default.
    pub gains: Option<Gains>,
    /// Bound on the integral term; `None` picks twice the rated module
    /// load (`2 * i_pk` sensored, `2` sensorless).
    pub windup_limit: Option<f64>,
    /// Demand source.
    pub demand_mode: DemandMode,
    /// Observer table policy.
    pub lut_policy: LutPolicy,
    /// Phase shift in radians applied to the sign feed in sensorless mode.
    pub sensorless_phase_shift: f64,
    /// Initial module states.
    pub modules: Vec<BatteryModule>,
    /// Link resistances.
    pub resistances: InterconnectResistances,
    /// Simulated time in seconds, a whole number of load periods.
    pub duration: f64,
    /// Degradation-filter cut-offs in hertz.
    pub cutoffs: Vec<f64>,
}

impl ScenarioConfig {
    /// Defaults for an `n`-module string at half charge.
    pub fn new(n: usize) -> Result<Self> {
        let modules = (0..n)
            .map(|_| BatteryModule::with_soc(0.5))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            waveform: WaveformSpec::default(),
            method: Method::Proposed,
            feedback_delay: 0.0,
            update_period: 0.1,
            toggle_limit: 2,
            reselect_idle: true,
            gains: None,
            windup_limit: None,
            demand_mode: DemandMode::EqualShare,
            lut_policy: LutPolicy::Constant,
            sensorless_phase_shift: 0.0,
            modules,
            resistances: InterconnectResistances::uniform(n, DEFAULT_R_LINK, DEFAULT_R_LINK)?,
            duration: 2.0,
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
        })
    }

    /// Module count.
    pub fn n_modules(&self) -> usize {
        self.modules.len()
    }

    /// Number of ticks simulated.
    pub fn ticks(&self) -> usize {
        libm::round(self.duration * self.waveform.f_rate) as usize
    }

    /// Effective controller gains.
    pub fn effective_gains(&self) -> Gains {
        match (self.gains, self.method) {
            (Some(g), Method::ProposedSensorless) => Gains { kp: 0.0, ki: g.ki },
            (Some(g), _) => g,
            (None, Method::ProposedSensorless) => Gains::SENSORLESS,
            (None, _) => Gains::SENSORED,
        }
    }

    /// Effective anti-windup bound.
    pub fn effective_windup_limit(&self) -> f64 {
        self.windup_limit.unwrap_or(match self.method {
            Method::ProposedSensorless => 2.0,
            _ => 2.0 * self.waveform.i_pk,
        })
    }

    /// Checks all invariants of the configuration.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_modules();
        if !(2..=MAX_MODULES).contains(&n) {
            return Err(Error::ModuleCount(n));
        }
        self.waveform.validate()?;
        if self.resistances.links() != n - 1 {
            return Err(Error::LengthMismatch {
                expected: n - 1,
                found: self.resistances.links(),
            });
        }
        let periods = self.duration * self.waveform.f_out;
        if !(self.duration > 0.0)
            || (periods - libm::round(periods)).abs() > 1e-9 * periods.max(1.0)
        {
            return Err(Error::Parameter(
                "duration must be a positive whole number of load periods",
            ));
        }
        let ticks = self.duration * self.waveform.f_rate;
        if (ticks - libm::round(ticks)).abs() > 1e-6 {
            return Err(Error::Parameter("duration must be a whole number of ticks"));
        }
        if self.toggle_limit == 0 {
            return Err(Error::Parameter("toggle limit must be at least 1"));
        }
        if !(self.update_period > 0.0) {
            return Err(Error::Parameter("update period must be positive"));
        }
        if !(self.feedback_delay >= 0.0) {
            return Err(Error::Parameter("feedback delay must be non-negative"));
        }
        let g = self.effective_gains();
        if !(g.kp >= 0.0 && g.ki >= 0.0) {
            return Err(Error::Parameter("controller gains must be non-negative"));
        }
        if !(self.effective_windup_limit() >= 0.0) {
            return Err(Error::Parameter("windup limit must be non-negative"));
        }
        if let DemandMode::SocProportional { beta } = self.demand_mode {
            if !beta.is_finite() {
                return Err(Error::Parameter("demand beta must be finite"));
            }
        }
        if let LutPolicy::Refresh { threshold } = self.lut_policy {
            if !(threshold > 0.0) {
                return Err(Error::Parameter("LUT refresh threshold must be positive"));
            }
        }
        if self.cutoffs.is_empty()
            || self
                .cutoffs
                .iter()
                .any(|&f| !(f > 0.0 && f < self.waveform.f_rate / 2.0))
        {
            return Err(Error::Parameter("cut-offs must lie in (0, f_rate / 2)"));
        }
        Ok(())
    }
}

/// One simulated tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    /// Time in seconds.
    pub t: f64,
    /// Level emitted by the modulator (and realized by `state`).
    pub level: i32,
    /// Phase current in amperes.
    pub i_l: f64,
    /// Battery current per module, positive discharging.
    pub i_b: Vec<f64>,
    /// State of charge per module at the end of the tick.
    pub soc: Vec<f64>,
    /// Applied string state.
    pub state: StringState,
}

/// Result of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Tick rate in hertz.
    pub f_rate: f64,
    /// Module count.
    pub n_modules: usize,
    /// Initial states of charge.
    pub initial_soc: Vec<f64>,
    /// One record per tick.
    pub records: Vec<TickRecord>,
}

impl Trace {
    /// Battery current of `module` over time.
    pub fn module_current(&self, module: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.i_b[module]).collect()
    }

    /// State sequence.
    pub fn states(&self) -> Vec<StringState> {
        self.records.iter().map(|r| r.state).collect()
    }

    /// Emitted levels.
    pub fn levels(&self) -> Vec<i32> {
        self.records.iter().map(|r| r.level).collect()
    }

    /// Final states of charge.
    pub fn final_soc(&self) -> &[f64] {
        self.records
            .last()
            .map_or(&self.initial_soc[..], |r| &r.soc[..])
    }
}

/// Max minus min of a set of states of charge.
pub fn soc_spread(socs: &[f64]) -> f64 {
    let hi = socs.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lo = socs.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    hi - lo
}

#[derive(Clone, Copy)]
struct TickInput {
    tick: usize,
    t: f64,
    level: i32,
    reference: f64,
    i_l: f64,
}

struct ProposedScheduler {
    observer: Observer,
    controller: ControllerState,
    delay: DelayLine,
    demand_mode: DemandMode,
    toggle_limit: usize,
    reselect_idle: bool,
    sensorless: bool,
    phase_shift: f64,
    f_out: f64,
    j_star: DistributionVector,
    dt: f64,
}

impl ProposedScheduler {
    fn phase_signal(&self, input: &TickInput) -> f64 {
        if self.sensorless {
            let v = if self.phase_shift == 0.0 {
                input.reference
            } else {
                libm::sin(2.0 * core::f64::consts::PI * self.f_out * input.t - self.phase_shift)
            };
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        } else {
            input.i_l
        }
    }

    fn select(&mut self, input: &TickInput, current: StringState) -> Result<StringState> {
        let s = self.phase_signal(input);
        let delta = input.level - current.level();
        if delta == 0 && !self.reselect_idle {
            return Ok(current);
        }
        let candidates = enumerate_transitions(current, delta, self.toggle_limit);
        if candidates.is_empty() {
            return Err(Error::DeadEnd {
                tick: input.tick,
                level: input.level,
            });
        }
        select_state(&candidates, &self.j_star, self.observer.lut(), s, current)
    }

    fn observe(
        &mut self,
        input: &TickInput,
        applied: StringState,
        modules: &[BatteryModule],
        res: &InterconnectResistances,
    ) -> Result<()> {
        let s = self.phase_signal(input);
        let estimate = observer_estimate(applied, self.observer.lut(), s)?;
        let feedback = self.delay.push(estimate, input.t);
        let socs: Vec<f64> = modules.iter().map(|m| m.soc).collect();
        let demand = demand_generator(&socs, feedback.mean(), self.demand_mode);
        self.j_star = self.controller.step(&demand, &feedback, self.dt)?;
        self.observer.refresh(modules, res)?;
        Ok(())
    }
}

struct ReferenceScheduler {
    list: OptimizedStateList,
    acquisition: f64,
    held: Vec<f64>,
    next_sample: f64,
}

impl ReferenceScheduler {
    fn select(&mut self, input: &TickInput, modules: &[BatteryModule]) -> Result<StringState> {
        if self.acquisition == 0.0 || input.t >= self.next_sample - 1e-9 {
            self.held.clear();
            self.held.extend(modules.iter().map(|m| m.soc));
            if self.acquisition > 0.0 {
                while self.next_sample <= input.t + 1e-9 {
                    self.next_sample += self.acquisition;
                }
            }
        }
        if self.list.due(input.t) {
            self.list.rebuild(&self.held, input.t)?;
        }
        reference_select(&self.list, input.level)
    }
}

enum Scheduler {
    Proposed(ProposedScheduler),
    Reference(ReferenceScheduler),
}

/// Runs one scenario and returns its trace.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Trace> {
    cfg.validate()?;
    let n = cfg.n_modules();
    let f_rate = cfg.waveform.f_rate;
    let dt = 1.0 / f_rate;
    let ticks = cfg.ticks();
    let mut modules = cfg.modules.clone();
    let initial_soc: Vec<f64> = modules.iter().map(|m| m.soc).collect();

    let mut scheduler = match cfg.method {
        Method::Reference => Scheduler::Reference(ReferenceScheduler {
            list: OptimizedStateList::build(&initial_soc, 0.0, cfg.update_period)?,
            acquisition: cfg.feedback_delay,
            held: initial_soc.clone(),
            next_sample: 0.0,
        }),
        Method::Proposed | Method::ProposedSensorless => {
            let sensorless = cfg.method == Method::ProposedSensorless;
            Scheduler::Proposed(ProposedScheduler {
                observer: Observer::new(cfg.lut_policy, &modules, &cfg.resistances)?,
                controller: ControllerState::new(
                    n,
                    cfg.effective_gains(),
                    cfg.effective_windup_limit(),
                ),
                delay: DelayLine::new(cfg.feedback_delay),
                demand_mode: cfg.demand_mode,
                toggle_limit: cfg.toggle_limit,
                reselect_idle: cfg.reselect_idle,
                sensorless,
                phase_shift: cfg.sensorless_phase_shift,
                f_out: cfg.waveform.f_out,
                j_star: DistributionVector::zeros(n),
                dt,
            })
        }
    };

    let mut modulator = SigmaDelta::new(n);
    let mut state = StringState::rest(n)?;
    let mut records = Vec::with_capacity(ticks);
    for tick in 0..ticks {
        let t = cfg.waveform.tick_time(tick);
        let reference = reference_level(t, &cfg.waveform, n);
        let i_l = phase_current(t, &cfg.waveform);
        let level = modulator.step(reference);
        let input = TickInput {
            tick,
            t,
            level,
            reference,
            i_l,
        };
        let next = match &mut scheduler {
            Scheduler::Proposed(p) => p.select(&input, state)?,
            Scheduler::Reference(r) => r.select(&input, &modules)?,
        };
        if next.level() != level {
            return Err(Error::DeadEnd { tick, level });
        }
        state = next;

        let layout = decompose_groups(state);
        let i_b = string_currents(&layout, &modules, &cfg.resistances, i_l)?;
        for (m, &i) in modules.iter_mut().zip(&i_b) {
            m.apply_current(i, dt);
        }
        if let Scheduler::Proposed(p) = &mut scheduler {
            p.observe(&input, state, &modules, &cfg.resistances)?;
        }
        records.push(TickRecord {
            t,
            level,
            i_l,
            i_b,
            soc: modules.iter().map(|m| m.soc).collect(),
            state,
        });
    }
    Ok(Trace {
        f_rate,
        n_modules: n,
        initial_soc,
        records,
    })
}
