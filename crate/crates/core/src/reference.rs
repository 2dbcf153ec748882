//! Baseline scheduler: a slow loop ranks the states of every level by a
//! state-of-charge weighted cost and a fast loop plays the top entry of the
//! requested level until the next rebuild.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::control::ObserverLut;
use crate::topology::{all_states, StringState};
use crate::{Error, Result};

/// Cost of `state` given module states of charge:
/// `sum_i J_i * (soc_i - soc_mean) + J_i^2`.
///
/// `J_i` is the ideal share of module `i` signed in the charging direction
/// for the state's own level (a positive level with in-phase current
/// discharges its positively inserted modules, so their `J_i` is negative).
/// Minimizing therefore steers load towards modules above the mean state of
/// charge while the square term prefers evenly spread load.
pub fn reference_cost(state: StringState, socs: &[f64], lut: &ObserverLut) -> Result<f64> {
    let n = lut.modules();
    if socs.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: socs.len(),
        });
    }
    let e = lut.entry(state)?;
    let dir = -(e.level.signum() as f64);
    let mean = socs.iter().sum::<f64>() / n as f64;
    Ok((0..n)
        .map(|i| {
            let j = e.shares[i] * e.polarity[i] as f64 * dir;
            j * (socs[i] - mean) + e.shares[i] * e.shares[i]
        })
        .sum())
}

/// Ranked states per level, valid for one update period.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedStateList {
    n: usize,
    ranked: Vec<Vec<StringState>>,
    epoch: f64,
    update_period: f64,
    lut: Arc<ObserverLut>,
}

impl OptimizedStateList {
    /// Ranks every level with the given states of charge; the list is
    /// stamped with epoch `t`.
    pub fn build(socs: &[f64], t: f64, update_period: f64) -> Result<Self> {
        if !(update_period > 0.0) {
            return Err(Error::Parameter("update period must be positive"));
        }
        let lut = Arc::new(ObserverLut::ideal(socs.len())?);
        let mut list = Self {
            n: socs.len(),
            ranked: Vec::new(),
            epoch: t,
            update_period,
            lut,
        };
        list.rank(socs)?;
        Ok(list)
    }

    fn rank(&mut self, socs: &[f64]) -> Result<()> {
        let n = self.n as i32;
        let mut scored: Vec<Vec<(f64, StringState)>> = (-n..=n).map(|_| Vec::new()).collect();
        for s in all_states(self.n)? {
            let c = reference_cost(s, socs, &self.lut)?;
            scored[(s.level() + n) as usize].push((c, s));
        }
        self.ranked = scored
            .into_iter()
            .map(|mut v| {
                v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                v.into_iter().map(|(_, s)| s).collect()
            })
            .collect();
        Ok(())
    }

    /// Time at which the current ranking was computed.
    pub fn epoch(&self) -> f64 {
        self.epoch
    }

    /// Rebuild period in seconds.
    pub fn update_period(&self) -> f64 {
        self.update_period
    }

    /// Ranked states of `level`, best first.
    pub fn ranking(&self, level: i32) -> Result<&[StringState]> {
        if level.unsigned_abs() as usize > self.n {
            return Err(Error::LevelOutOfRange {
                level,
                modules: self.n,
            });
        }
        Ok(&self.ranked[(level + self.n as i32) as usize])
    }

    /// Whether a rebuild is due at time `t`.
    pub fn due(&self, t: f64) -> bool {
        t - self.epoch >= self.update_period - 1e-9
    }

    /// Re-ranks with `socs` when a full period has passed since the last
    /// epoch; the new epoch is the latest period boundary not after `t`.
    /// Returns whether the list changed epoch.
    pub fn rebuild(&mut self, socs: &[f64], t: f64) -> Result<bool> {
        if !self.due(t) {
            return Ok(false);
        }
        let periods = libm::floor((t - self.epoch + 1e-9) / self.update_period);
        self.epoch += periods * self.update_period;
        self.rank(socs)?;
        Ok(true)
    }
}

/// Functional form of [`OptimizedStateList::rebuild`].
pub fn slow_loop_rebuild(
    socs: &[f64],
    t: f64,
    list: &OptimizedStateList,
) -> Result<OptimizedStateList> {
    let mut next = list.clone();
    next.rebuild(socs, t)?;
    Ok(next)
}

/// Top-ranked state of `level`.
pub fn reference_select(list: &OptimizedStateList, level: i32) -> Result<StringState> {
    list.ranking(level)?
        .first()
        .copied()
        .ok_or(Error::NoCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::all_states_for_level;

    fn st(s: &str) -> StringState {
        s.parse().unwrap()
    }

    #[test]
    fn cost_examples() {
        let lut = ObserverLut::ideal(5).unwrap();
        let eq = [0.5; 5];
        let c = reference_cost(st("PPS+PS+"), &eq, &lut).unwrap();
        assert!((c - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(reference_cost(st("PPPPB"), &eq, &lut).unwrap(), 0.0);
        // Equal SoCs: only the square term remains.
        for s in all_states(5).unwrap() {
            let sq: f64 = lut.shares(s).unwrap().iter().map(|j| j * j).sum();
            assert!((reference_cost(s, &eq, &lut).unwrap() - sq).abs() < 1e-12);
        }
    }

    #[test]
    fn list_is_constant_within_period() {
        let mut list = OptimizedStateList::build(&[0.5; 5], 0.0, 0.1).unwrap();
        let before = list.clone();
        let socs = [0.6, 0.55, 0.5, 0.45, 0.4];
        assert!(!list.rebuild(&socs, 0.05).unwrap());
        assert_eq!(list, before);
        assert_eq!(slow_loop_rebuild(&socs, 0.0999, &list).unwrap(), before);
        for _ in 0..10 {
            assert_eq!(
                reference_select(&list, 2).unwrap(),
                reference_select(&before, 2).unwrap()
            );
        }
        assert!(list.rebuild(&socs, 0.1).unwrap());
        assert!((list.epoch() - 0.1).abs() < 1e-12);
        assert!(list.rebuild(&socs, 0.35).unwrap());
        assert!((list.epoch() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn equal_socs_rank_by_square_term() {
        let list = OptimizedStateList::build(&[0.5; 5], 0.0, 0.1).unwrap();
        assert_eq!(reference_select(&list, 0).unwrap(), st("PPPPP"));
        assert_eq!(reference_select(&list, 1).unwrap(), st("PPPPS+"));
        assert_eq!(reference_select(&list, -1).unwrap(), st("PPPPS-"));
        assert_eq!(reference_select(&list, 5).unwrap(), st("S+S+S+S+S+"));
        let lut = ObserverLut::ideal(5).unwrap();
        for level in -5..=5 {
            let r = list.ranking(level).unwrap();
            for w in r.windows(2) {
                assert!(
                    reference_cost(w[0], &[0.5; 5], &lut).unwrap()
                        <= reference_cost(w[1], &[0.5; 5], &lut).unwrap()
                );
            }
        }
    }

    #[test]
    fn soc_spread_loads_high_soc_modules() {
        let socs = [0.6, 0.55, 0.5, 0.45, 0.4];
        let list = OptimizedStateList::build(&socs, 0.0, 0.1).unwrap();
        let lut = ObserverLut::ideal(5).unwrap();
        for level in -5..=5 {
            let top = reference_select(&list, level).unwrap();
            let best = all_states_for_level(5, level)
                .unwrap()
                .into_iter()
                .map(|s| reference_cost(s, &socs, &lut).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert_eq!(reference_cost(top, &socs, &lut).unwrap(), best);
        }
        // Level 2: the pair-group goes to the two fullest modules.
        assert_eq!(reference_select(&list, 2).unwrap(), st("PS+PPS+"));
        assert_eq!(reference_select(&list, -2).unwrap(), st("PS-PPS-"));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(OptimizedStateList::build(&[0.5; 5], 0.0, 0.0).is_err());
        let list = OptimizedStateList::build(&[0.5; 5], 0.0, 0.1).unwrap();
        assert!(reference_select(&list, 6).is_err());
        let lut = ObserverLut::ideal(5).unwrap();
        assert!(reference_cost(st("PPS+PS+"), &[0.5; 4], &lut).is_err());
    }
}
