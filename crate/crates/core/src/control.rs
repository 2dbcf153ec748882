//! High-bandwidth module-current scheduling.
//!
//! Every tick the scheduler picks, among the states reachable from the
//! present one, the state whose expected current distribution is closest
//! (least squares) to what the per-module current controllers ask for. The
//! controllers are closed through an observer that looks up the expected
//! share of each module in a per-state table instead of waiting for measured
//! module currents.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::electrical::{
    assemble_system, ideal_share, solve_distribution, BatteryModule, DistributionVector,
    InterconnectResistances,
};
use crate::topology::{all_states, decompose_groups, StringState};
use crate::{Error, Result, MAX_MODULES};

/// Expected distribution for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LutEntry {
    /// Share of the phase current carried by each module (non-negative).
    pub shares: [f64; MAX_MODULES],
    /// Insertion polarity seen by each module.
    pub polarity: [i8; MAX_MODULES],
    /// Output level of the state.
    pub level: i32,
}

impl LutEntry {
    /// Expected battery-frame load of module `i` for phase signal `s`.
    #[inline]
    pub fn load(&self, i: usize, s: f64) -> f64 {
        self.shares[i] * self.polarity[i] as f64 * s
    }
}

/// Per-state table of expected current shares, indexed by
/// [`StringState::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverLut {
    n: usize,
    entries: Vec<LutEntry>,
}

impl ObserverLut {
    /// Table of ideal shares (`1/k` inside an inserted group of `k`).
    pub fn ideal(n: usize) -> Result<Self> {
        Self::build(n, |state| Ok(ideal_share(&decompose_groups(state))))
    }

    /// Table of shares solved from the group equations at the modules'
    /// present voltages. Only the part proportional to the load current is
    /// kept; circulating currents between unequal modules are not a share
    /// of the phase current.
    pub fn solved(modules: &[BatteryModule], res: &InterconnectResistances) -> Result<Self> {
        let n = modules.len();
        Self::build(n, |state| {
            let layout = decompose_groups(state);
            let mut shares = DistributionVector::zeros(n);
            for g in layout.active_groups() {
                if g.len == 1 {
                    shares[g.start] = 1.0;
                    continue;
                }
                let unit = solve_distribution(&assemble_system(g.members(), modules, res, 1.0)?)?;
                let idle = solve_distribution(&assemble_system(g.members(), modules, res, 0.0)?)?;
                for (k, m) in g.members().enumerate() {
                    shares[m] = unit[k] - idle[k];
                }
            }
            Ok(shares)
        })
    }

    fn build(
        n: usize,
        mut shares_of: impl FnMut(StringState) -> Result<DistributionVector>,
    ) -> Result<Self> {
        let entries = all_states(n)?
            .map(|state| {
                let layout = decompose_groups(state);
                let shares = shares_of(state)?;
                let mut entry = LutEntry {
                    shares: [0.0; MAX_MODULES],
                    polarity: [0; MAX_MODULES],
                    level: layout.level(),
                };
                entry.shares[..n].copy_from_slice(&shares);
                for (p, q) in entry.polarity.iter_mut().zip(layout.module_polarity()) {
                    *p = q;
                }
                Ok(entry)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n, entries })
    }

    /// Module count the table was built for.
    pub fn modules(&self) -> usize {
        self.n
    }

    /// Entry for `state`.
    #[inline]
    pub fn entry(&self, state: StringState) -> Result<&LutEntry> {
        if state.len() != self.n {
            return Err(Error::MissingLutEntry);
        }
        self.entries
            .get(state.index())
            .ok_or(Error::MissingLutEntry)
    }

    /// Shares stored for `state`.
    pub fn shares(&self, state: StringState) -> Result<&[f64]> {
        Ok(&self.entry(state)?.shares[..self.n])
    }
}

/// How the observer table follows the module voltages.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LutPolicy {
    /// Ideal shares, never updated.
    #[default]
    Constant,
    /// Re-solved from the group equations whenever some module voltage has
    /// moved more than `threshold` volts since the last update.
    Refresh {
        /// Voltage change that triggers an update.
        threshold: f64,
    },
}

/// Observer table together with its update policy.
#[derive(Debug, Clone)]
pub struct Observer {
    lut: ObserverLut,
    policy: LutPolicy,
    v_at_update: Vec<f64>,
}

impl Observer {
    /// Observer for the given modules.
    pub fn new(
        policy: LutPolicy,
        modules: &[BatteryModule],
        res: &InterconnectResistances,
    ) -> Result<Self> {
        let lut = match policy {
            LutPolicy::Constant => ObserverLut::ideal(modules.len())?,
            LutPolicy::Refresh { .. } => ObserverLut::solved(modules, res)?,
        };
        Ok(Self {
            lut,
            policy,
            v_at_update: modules.iter().map(|m| m.v_b).collect(),
        })
    }

    /// Current table.
    pub fn lut(&self) -> &ObserverLut {
        &self.lut
    }

    /// Applies the update policy; returns whether the table was rebuilt.
    pub fn refresh(
        &mut self,
        modules: &[BatteryModule],
        res: &InterconnectResistances,
    ) -> Result<bool> {
        let LutPolicy::Refresh { threshold } = self.policy else {
            return Ok(false);
        };
        let moved = modules
            .iter()
            .zip(&self.v_at_update)
            .any(|(m, v)| (m.v_b - v).abs() > threshold);
        if moved {
            self.lut = ObserverLut::solved(modules, res)?;
            self.v_at_update = modules.iter().map(|m| m.v_b).collect();
        }
        Ok(moved)
    }
}

/// Expected battery-frame load of every module in `state`:
/// `share * polarity * phase_signal`.
///
/// `phase_signal` is the phase current in amperes (sensored) or the sign of
/// the voltage reference (sensorless, giving utilization).
pub fn observer_estimate(
    state: StringState,
    lut: &ObserverLut,
    phase_signal: f64,
) -> Result<DistributionVector> {
    let e = lut.entry(state)?;
    Ok((0..lut.n)
        .map(|i| e.load(i, phase_signal))
        .collect::<Vec<_>>()
        .into())
}

/// Controller gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    /// Proportional gain.
    pub kp: f64,
    /// Integral gain in 1/s.
    pub ki: f64,
}

impl Gains {
    /// Sensored default (PI).
    pub const SENSORED: Gains = Gains { kp: 0.5, ki: 50.0 };
    /// Sensorless default (pure integrator).
    pub const SENSORLESS: Gains = Gains { kp: 0.0, ki: 10.0 };
}

/// Bank of per-module PI controllers with clamped integrators.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    integ: Vec<f64>,
    gains: Gains,
    limit: f64,
}

impl ControllerState {
    /// `n` controllers; `limit` bounds the magnitude of the integral term
    /// `ki * integral`.
    pub fn new(n: usize, gains: Gains, limit: f64) -> Self {
        Self {
            integ: alloc::vec![0.0; n],
            gains,
            limit,
        }
    }

    /// Pure integrators, as used without current sensors.
    pub fn integrating(n: usize, ki: f64, limit: f64) -> Self {
        Self::new(n, Gains { kp: 0.0, ki }, limit)
    }

    /// Gains in use.
    pub fn gains(&self) -> Gains {
        self.gains
    }

    /// Integrator contents (error integrated over time).
    pub fn integrators(&self) -> &[f64] {
        &self.integ
    }

    /// Advances all controllers by `dt` and returns the demanded loads
    /// `kp * e + ki * integral(e)`, `e = demand - feedback`.
    pub fn step(
        &mut self,
        demand: &[f64],
        feedback: &[f64],
        dt: f64,
    ) -> Result<DistributionVector> {
        let n = self.integ.len();
        for len in [demand.len(), feedback.len()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        let Gains { kp, ki } = self.gains;
        let bound = if ki > 0.0 {
            self.limit / ki
        } else {
            f64::INFINITY
        };
        let out = (0..n)
            .map(|i| {
                let e = demand[i] - feedback[i];
                self.integ[i] = (self.integ[i] + e * dt).clamp(-bound, bound);
                kp * e + ki * self.integ[i]
            })
            .collect::<Vec<_>>();
        Ok(out.into())
    }
}

/// Functional form of [`ControllerState::step`].
pub fn controller_step(
    demand: &DistributionVector,
    feedback: &DistributionVector,
    cs: &ControllerState,
    dt: f64,
) -> Result<(DistributionVector, ControllerState)> {
    let mut next = cs.clone();
    let j = next.step(demand, feedback, dt)?;
    Ok((j, next))
}

/// Source of the per-module load demands.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DemandMode {
    /// Every module is asked for the mean utilization.
    #[default]
    EqualShare,
    /// Modules above the mean state of charge are asked for more, scaled by
    /// `1 + beta * (soc - soc_mean)` and renormalized to keep the mean.
    SocProportional {
        /// Weight of the state-of-charge deviation.
        beta: f64,
    },
}

/// Per-module demand with the given mean utilization.
pub fn demand_generator(
    socs: &[f64],
    mean_utilization: f64,
    mode: DemandMode,
) -> DistributionVector {
    let n = socs.len();
    match mode {
        DemandMode::EqualShare => alloc::vec![mean_utilization; n].into(),
        DemandMode::SocProportional { beta } => {
            let soc_mean = socs.iter().sum::<f64>() / n as f64;
            let weights: Vec<f64> = socs
                .iter()
                .map(|s| (1.0 + beta * (s - soc_mean)).max(0.0))
                .collect();
            let w_mean = weights.iter().sum::<f64>() / n as f64;
            if w_mean <= 0.0 {
                return alloc::vec![mean_utilization; n].into();
            }
            weights
                .iter()
                .map(|w| mean_utilization * w / w_mean)
                .collect::<Vec<_>>()
                .into()
        }
    }
}

/// Least-squares distance between demanded and expected loads.
pub fn state_cost(j_star: &[f64], j_m: &[f64]) -> f64 {
    j_star.iter().zip(j_m).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn lut_cost(entry: &LutEntry, j_star: &[f64], s: f64) -> f64 {
    j_star
        .iter()
        .enumerate()
        .map(|(i, j)| {
            let d = j - entry.load(i, s);
            d * d
        })
        .sum()
}

/// Picks the candidate minimizing [`state_cost`] between `j_star` and the
/// observer's expectation at `phase_signal`. Ties go to the fewest toggles
/// from `current`, then to the canonically smallest state.
pub fn select_state(
    candidates: &[StringState],
    j_star: &[f64],
    lut: &ObserverLut,
    phase_signal: f64,
    current: StringState,
) -> Result<StringState> {
    let mut best: Option<(f64, usize, StringState)> = None;
    for &c in candidates {
        let cost = lut_cost(lut.entry(c)?, j_star, phase_signal);
        let toggles = c.toggles_from(current);
        let better = match best {
            None => true,
            Some((bc, bt, bs)) => {
                let tol = 1e-12 * bc.abs().max(cost.abs()).max(1e-300);
                if cost < bc - tol {
                    true
                } else if cost <= bc + tol {
                    (toggles, c) < (bt, bs)
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((cost, toggles, c));
        }
    }
    best.map(|(_, _, s)| s).ok_or(Error::NoCandidates)
}

/// Fixed-delay feedback path with zero-order hold.
#[derive(Debug, Clone)]
pub struct DelayLine {
    delay: f64,
    buf: VecDeque<(f64, DistributionVector)>,
}

impl DelayLine {
    /// Delay of `delay` seconds (0 passes samples straight through).
    pub fn new(delay: f64) -> Self {
        Self {
            delay: delay.max(0.0),
            buf: VecDeque::new(),
        }
    }

    /// Configured delay.
    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// Stores `sample` taken at `t` and returns the newest sample taken no
    /// later than `t - delay`. Until such a sample exists the first sample
    /// is held. `t` must be nondecreasing.
    pub fn push(&mut self, sample: DistributionVector, t: f64) -> DistributionVector {
        self.buf.push_back((t, sample));
        let due = t - self.delay + 1e-9;
        while self.buf.len() > 1 && self.buf[1].0 <= due {
            self.buf.pop_front();
        }
        self.buf[0].1.clone()
    }
}

/// Functional form of [`DelayLine::push`].
pub fn delay_feedback(
    dl: &mut DelayLine,
    sample: DistributionVector,
    t: f64,
) -> DistributionVector {
    dl.push(sample, t)
}
