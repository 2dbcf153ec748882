//! Battery modules and the distribution of the phase current inside a
//! parallel group.
//!
//! Inside a group of `n` paralleled modules, module `j` is linked to module
//! `j+1` by a high-side path `R_SH` and a low-side path `R_SL`. The load
//! current enters the low rail at the first module of the group and leaves
//! the high rail at the last one. Writing one loop equation per pair of
//! neighbours plus the node equation gives an `n x n` system in the battery
//! currents ([`assemble_system`]); [`nodal_oracle`] solves the same network
//! by node voltages and is kept as an independent check.
//!
//! Battery currents are positive when the module discharges.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut, Range};

use crate::linalg::solve_dense;
use crate::topology::GroupLayout;
use crate::{Error, Result};

/// Default open-circuit voltage at zero state of charge (6s LiFePO4).
pub const DEFAULT_V_MIN: f64 = 20.0;
/// Default open-circuit voltage at full charge.
pub const DEFAULT_V_MAX: f64 = 25.2;
/// Default module capacity in ampere-hours.
pub const DEFAULT_CAPACITY_AH: f64 = 6.2;
/// Default battery path resistance in ohms (six cells of about 5 mOhm).
pub const DEFAULT_R_B: f64 = 30e-3;
/// Default high-side and low-side link resistance in ohms.
pub const DEFAULT_R_LINK: f64 = 0.75e-3;

/// Per-module values: fractional shares of the phase current, or amperes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistributionVector(pub Vec<f64>);

impl DistributionVector {
    /// All-zero vector of length `n`.
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Entry-wise product with a scalar.
    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0.iter().map(|v| v * k).collect())
    }

    /// Sum of all entries.
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Arithmetic mean (0 for an empty vector).
    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.sum() / self.0.len() as f64
        }
    }
}

impl Deref for DistributionVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DistributionVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for DistributionVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Open-circuit voltage as a function of state of charge.
#[derive(Debug, Clone, PartialEq)]
pub enum OcvMap {
    /// `v_min + soc * (v_max - v_min)`.
    Affine {
        /// Voltage at soc = 0.
        v_min: f64,
        /// Voltage at soc = 1.
        v_max: f64,
    },
    /// Piecewise-linear curve through `(soc, volts)` points sorted by soc.
    /// Clamped outside the tabulated range.
    Table(Vec<(f64, f64)>),
}

impl Default for OcvMap {
    fn default() -> Self {
        OcvMap::Affine {
            v_min: DEFAULT_V_MIN,
            v_max: DEFAULT_V_MAX,
        }
    }
}

impl OcvMap {
    /// Voltage at `soc`.
    pub fn voltage(&self, soc: f64) -> f64 {
        match self {
            OcvMap::Affine { v_min, v_max } => v_min + soc * (v_max - v_min),
            OcvMap::Table(points) => {
                let Some(&(s0, v0)) = points.first() else {
                    return 0.0;
                };
                if soc <= s0 {
                    return v0;
                }
                for w in points.windows(2) {
                    let ((sa, va), (sb, vb)) = (w[0], w[1]);
                    if soc <= sb {
                        return va + (soc - sa) / (sb - sa) * (vb - va);
                    }
                }
                points[points.len() - 1].1
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            OcvMap::Affine { v_min, v_max } if v_max > v_min => Ok(()),
            OcvMap::Table(p)
                if p.len() >= 2 && p.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1) =>
            {
                Ok(())
            }
            _ => Err(Error::Parameter("ocv map must be strictly increasing")),
        }
    }
}

/// Open-circuit voltage under the default affine map.
pub fn ocv(soc: f64) -> f64 {
    OcvMap::default().voltage(soc)
}

/// Electrical state of one battery module.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryModule {
    /// State of charge in `[0, 1]`.
    pub soc: f64,
    /// Capacity in ampere-hours.
    pub capacity_ah: f64,
    /// Battery path resistance in ohms.
    pub r_b: f64,
    /// Source voltage, kept in sync with `soc` through `ocv`.
    pub v_b: f64,
    ocv: OcvMap,
}

impl BatteryModule {
    /// Creates a module; the voltage follows from `soc` and `ocv`.
    pub fn new(soc: f64, capacity_ah: f64, r_b: f64, ocv: OcvMap) -> Result<Self> {
        if !(capacity_ah > 0.0) {
            return Err(Error::Parameter("capacity must be positive"));
        }
        if !(r_b > 0.0) {
            return Err(Error::Parameter("battery resistance must be positive"));
        }
        if !(0.0..=1.0).contains(&soc) {
            return Err(Error::Parameter("soc must lie in [0, 1]"));
        }
        ocv.validate()?;
        let v_b = ocv.voltage(soc);
        Ok(Self {
            soc,
            capacity_ah,
            r_b,
            v_b,
            ocv,
        })
    }

    /// Module with the default capacity, resistance and OCV map.
    pub fn with_soc(soc: f64) -> Result<Self> {
        Self::new(soc, DEFAULT_CAPACITY_AH, DEFAULT_R_B, OcvMap::default())
    }

    /// Coulomb counting in place; positive current discharges.
    pub fn apply_current(&mut self, i_b: f64, dt: f64) {
        self.soc = (self.soc - i_b * dt / (3600.0 * self.capacity_ah)).clamp(0.0, 1.0);
        self.v_b = self.ocv.voltage(self.soc);
    }

    /// The module's OCV map.
    pub fn ocv_map(&self) -> &OcvMap {
        &self.ocv
    }
}

/// Advances one module by `dt` seconds of current `i_b`.
pub fn step_battery(module: &BatteryModule, i_b: f64, dt: f64) -> BatteryModule {
    debug_assert!(dt > 0.0);
    let mut next = module.clone();
    next.apply_current(i_b, dt);
    next
}

/// Link resistances between neighbouring modules. Entry `j` joins module
/// `j` and `j+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterconnectResistances {
    r_sh: Vec<f64>,
    r_sl: Vec<f64>,
}

impl InterconnectResistances {
    /// Per-link resistances; both slices have length `N-1`.
    pub fn new(r_sh: Vec<f64>, r_sl: Vec<f64>) -> Result<Self> {
        if r_sh.len() != r_sl.len() {
            return Err(Error::LengthMismatch {
                expected: r_sh.len(),
                found: r_sl.len(),
            });
        }
        if r_sh
            .iter()
            .chain(&r_sl)
            .any(|r| !(*r > 0.0) || !r.is_finite())
        {
            return Err(Error::Parameter("link resistances must be positive"));
        }
        Ok(Self { r_sh, r_sl })
    }

    /// Equal resistances on all `n-1` links of an `n`-module string.
    pub fn uniform(n: usize, r_sh: f64, r_sl: f64) -> Result<Self> {
        let links = n.saturating_sub(1);
        Self::new(vec![r_sh; links], vec![r_sl; links])
    }

    /// High-side resistance of link `j`.
    pub fn r_sh(&self, j: usize) -> f64 {
        self.r_sh[j]
    }

    /// Low-side resistance of link `j`.
    pub fn r_sl(&self, j: usize) -> f64 {
        self.r_sl[j]
    }

    /// Number of links.
    pub fn links(&self) -> usize {
        self.r_sh.len()
    }
}

/// Loop-equation system for one parallel group.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceSystem {
    n: usize,
    matrix: Vec<f64>,
    rhs: Vec<f64>,
}

impl ImpedanceSystem {
    /// Dimension (group size).
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Row-major coefficient matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Right-hand side.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Coefficient at `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.n + col]
    }
}

/// Ideal load share: `1/k` for each module of an inserted group of size
/// `k`, zero for bypassed modules.
pub fn ideal_share(layout: &GroupLayout) -> DistributionVector {
    let mut out = vec![0.0; layout.modules()];
    for g in layout.active_groups() {
        let share = 1.0 / g.len as f64;
        for m in g.members() {
            out[m] = share;
        }
    }
    DistributionVector(out)
}

fn check_group(
    members: &Range<usize>,
    modules: &[BatteryModule],
    res: &InterconnectResistances,
) -> Result<()> {
    if members.is_empty() || members.end > modules.len() {
        return Err(Error::Parameter("group members out of range"));
    }
    if members.end - 1 > res.links() {
        return Err(Error::LengthMismatch {
            expected: members.end - 1,
            found: res.links(),
        });
    }
    Ok(())
}

/// Builds the loop equations of the group `members` carrying load current
/// `i_l` (battery frame: positive discharges the group).
///
/// Row `j < n-1` is the loop through modules `j` and `j+1`:
/// `R_L_j * sum(i_0..i_{j-1}) + R_D_j * i_j + R_U_{j+1} * i_{j+1} = B_j`
/// with `R_D_j = -(R_B_j + R_SL_j + R_SH_j)`, `R_L_j = -(R_SH_j + R_SL_j)`,
/// `R_U_{j+1} = R_B_{j+1}` and `B_j = V_B_{j+1} - V_B_j - R_SL_j * I_L`.
/// The last row is the node equation `sum(i) = I_L`.
pub fn assemble_system(
    members: Range<usize>,
    modules: &[BatteryModule],
    res: &InterconnectResistances,
    i_l: f64,
) -> Result<ImpedanceSystem> {
    check_group(&members, modules, res)?;
    let n = members.len();
    let base = members.start;
    let mut matrix = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for j in 0..n - 1 {
        let link = base + j;
        let (a, b) = (&modules[base + j], &modules[base + j + 1]);
        let r_l = -(res.r_sh(link) + res.r_sl(link));
        for k in 0..j {
            matrix[j * n + k] = r_l;
        }
        matrix[j * n + j] = -(a.r_b + res.r_sl(link) + res.r_sh(link));
        matrix[j * n + j + 1] = b.r_b;
        rhs[j] = b.v_b - a.v_b - res.r_sl(link) * i_l;
    }
    for k in 0..n {
        matrix[(n - 1) * n + k] = 1.0;
    }
    rhs[n - 1] = i_l;
    Ok(ImpedanceSystem { n, matrix, rhs })
}

/// Solves an assembled group system for the battery currents.
pub fn solve_distribution(system: &ImpedanceSystem) -> Result<DistributionVector> {
    solve_dense(system.matrix.clone(), system.rhs.clone()).map(DistributionVector)
}

/// Battery currents of a group by nodal analysis of the full resistive
/// ladder. Node order: high rail `H_0..H_{n-1}`, then low rail
/// `L_1..L_{n-1}`; `L_0` is ground.
pub fn nodal_oracle(
    members: Range<usize>,
    modules: &[BatteryModule],
    res: &InterconnectResistances,
    i_l: f64,
) -> Result<DistributionVector> {
    check_group(&members, modules, res)?;
    let n = members.len();
    let base = members.start;
    let dim = 2 * n - 1;
    let h = |k: usize| k;
    let l = |k: usize| if k == 0 { None } else { Some(n + k - 1) };

    let mut g = vec![0.0; dim * dim];
    let mut inj = vec![0.0; dim];
    let mut stamp = |a: Option<usize>, b: Option<usize>, cond: f64| {
        if let Some(a) = a {
            g[a * dim + a] += cond;
        }
        if let Some(b) = b {
            g[b * dim + b] += cond;
        }
        if let (Some(a), Some(b)) = (a, b) {
            g[a * dim + b] -= cond;
            g[b * dim + a] -= cond;
        }
    };
    for k in 0..n {
        stamp(Some(h(k)), l(k), 1.0 / modules[base + k].r_b);
    }
    for j in 0..n - 1 {
        stamp(Some(h(j)), Some(h(j + 1)), 1.0 / res.r_sh(base + j));
        stamp(l(j), l(j + 1), 1.0 / res.r_sl(base + j));
    }
    // Battery EMF as a Norton source pushing V_B/R_B from L_k into H_k.
    for k in 0..n {
        let m = &modules[base + k];
        inj[h(k)] += m.v_b / m.r_b;
        if let Some(lk) = l(k) {
            inj[lk] -= m.v_b / m.r_b;
        }
    }
    // Load current leaves at H_{n-1}; it enters at the grounded L_0.
    inj[h(n - 1)] -= i_l;

    let v = solve_dense(g, inj)?;
    let volts = |node: Option<usize>| node.map_or(0.0, |i| v[i]);
    Ok(DistributionVector(
        (0..n)
            .map(|k| {
                let m = &modules[base + k];
                (m.v_b - (volts(Some(h(k))) - volts(l(k)))) / m.r_b
            })
            .collect(),
    ))
}

/// Battery current of every module for a string configuration carrying
/// phase current `i_l`. Each inserted group is solved exactly with load
/// `polarity * i_l`; bypassed modules carry nothing.
pub fn string_currents(
    layout: &GroupLayout,
    modules: &[BatteryModule],
    res: &InterconnectResistances,
    i_l: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; modules.len()];
    for g in layout.active_groups() {
        let load = g.polarity as f64 * i_l;
        if g.len == 1 {
            out[g.start] = load;
            continue;
        }
        let sys = assemble_system(g.members(), modules, res, load)?;
        let x = solve_distribution(&sys)?;
        out[g.members()].copy_from_slice(&x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{decompose_groups, StringState};

    fn module(v_b: f64, r_b: f64) -> BatteryModule {
        let mut m = BatteryModule::with_soc(0.5).unwrap();
        m.v_b = v_b;
        m.r_b = r_b;
        m
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn ideal_share_worked_example() {
        let layout = decompose_groups("PPS+PS+".parse().unwrap());
        assert_eq!(
            ideal_share(&layout).0,
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.5, 0.5]
        );
        let all = decompose_groups("S+S+S+S+S+".parse().unwrap());
        assert_eq!(ideal_share(&all).0, vec![1.0; 5]);
        let off = decompose_groups("PPPPB".parse().unwrap());
        assert_eq!(ideal_share(&off).0, vec![0.0; 5]);
    }

    #[test]
    fn lone_module_carries_everything() {
        let mods = [module(22.5, 1.5e-3)];
        let res = InterconnectResistances::uniform(1, 1e-3, 1e-3).unwrap();
        let sys = assemble_system(0..1, &mods, &res, 7.0).unwrap();
        assert_eq!(sys.matrix(), &[1.0]);
        assert_eq!(sys.rhs(), &[7.0]);
        assert_eq!(solve_distribution(&sys).unwrap().0, vec![7.0]);
    }

    #[test]
    fn symmetric_groups_split_evenly() {
        let mods: Vec<_> = (0..5).map(|_| module(22.5, 1.5e-3)).collect();
        let res = InterconnectResistances::uniform(5, 0.75e-3, 0.75e-3).unwrap();
        let x = solve_distribution(&assemble_system(0..2, &mods, &res, 10.0).unwrap()).unwrap();
        assert!(close(x[0], 5.0, 1e-12) && close(x[1], 5.0, 1e-12));

        // Five equal modules only share equally when the links vanish.
        let stiff = InterconnectResistances::uniform(5, 1e-12, 1e-12).unwrap();
        let x = solve_distribution(&assemble_system(0..5, &mods, &stiff, 25.0).unwrap()).unwrap();
        for k in 0..5 {
            assert!((x[k] - 5.0).abs() < 1e-6, "{x:?}");
        }
    }

    #[test]
    fn finite_links_favour_group_ends() {
        // Entry and exit sit at opposite corners of the ladder, so the split
        // is mirror symmetric and the end modules carry the most.
        let mods: Vec<_> = (0..5).map(|_| module(22.5, 1.5e-3)).collect();
        let res = InterconnectResistances::uniform(5, 0.75e-3, 0.75e-3).unwrap();
        let x = solve_distribution(&assemble_system(0..5, &mods, &res, 25.0).unwrap()).unwrap();
        let o = nodal_oracle(0..5, &mods, &res, 25.0).unwrap();
        assert!(close(x.sum(), 25.0, 1e-12));
        for k in 0..5 {
            assert!(close(x[k], x[4 - k], 1e-12));
            assert!(close(x[k], o[k], 1e-9));
        }
        assert!(x[0] > x[1] && x[1] > x[2]);
        // A stiff battery path relative to the links brings the split within
        // a few percent of the ideal share.
        let stiff: Vec<_> = (0..5).map(|_| module(22.5, 30e-3)).collect();
        let x = solve_distribution(&assemble_system(0..5, &stiff, &res, 25.0).unwrap()).unwrap();
        for k in 0..5 {
            assert!((x[k] / 5.0 - 1.0).abs() < 0.05, "{x:?}");
        }
    }

    #[test]
    fn matrix_pattern_n3() {
        let mods = [module(22.0, 1.0), module(22.1, 2.0), module(22.3, 3.0)];
        let res = InterconnectResistances::new(vec![0.1, 0.2], vec![0.01, 0.02]).unwrap();
        let s = assemble_system(0..3, &mods, &res, 4.0).unwrap();
        let expected = [
            -(1.0 + 0.01 + 0.1),
            2.0,
            0.0, //
            -(0.2 + 0.02),
            -(2.0 + 0.02 + 0.2),
            3.0, //
            1.0,
            1.0,
            1.0,
        ];
        for (a, b) in s.matrix().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((s.rhs()[0] - (0.1 - 0.01 * 4.0)).abs() < 1e-12);
        assert!((s.rhs()[1] - (0.2 - 0.02 * 4.0)).abs() < 1e-12);
        assert_eq!(s.rhs()[2], 4.0);
    }

    #[test]
    fn unequal_pair_frozen_by_oracle() {
        // Two modules 10 mV apart, r_b 1.5 mOhm, links 0.5 mOhm, 10 A load.
        // Loop through both modules: -0.01 - 2e-3*i1 + 1.5e-3*(10 - i1)
        // - 0.5e-3*(i1 - 10) = 0, so i1 = 0.01 / 4e-3 = 2.5 A and i2 = 7.5 A.
        let mods = [module(22.50, 1.5e-3), module(22.51, 1.5e-3)];
        let res = InterconnectResistances::uniform(2, 0.5e-3, 0.5e-3).unwrap();
        let oracle = nodal_oracle(0..2, &mods, &res, 10.0).unwrap();
        let solved =
            solve_distribution(&assemble_system(0..2, &mods, &res, 10.0).unwrap()).unwrap();
        for k in 0..2 {
            assert!(close(solved[k], oracle[k], 1e-9));
        }
        assert!(close(oracle[0], 2.5, 1e-9), "{:?}", oracle);
        assert!(close(oracle[1], 7.5, 1e-9), "{:?}", oracle);
        assert!(oracle[1] > oracle[0]);
    }

    #[test]
    fn low_link_resistance_limit_is_a_divider() {
        // With negligible links the modules share two common nodes: each
        // current is (V_k - V_node) / R_k with sum I_L.
        let mods = [module(22.50, 2e-3), module(22.52, 1e-3)];
        let res = InterconnectResistances::uniform(2, 1e-9, 1e-9).unwrap();
        let g: f64 = 1.0 / 2e-3 + 1.0 / 1e-3;
        let v_node = (22.50 / 2e-3 + 22.52 / 1e-3 - 6.0) / g;
        let want = [(22.50 - v_node) / 2e-3, (22.52 - v_node) / 1e-3];
        let got = nodal_oracle(0..2, &mods, &res, 6.0).unwrap();
        let solved = solve_distribution(&assemble_system(0..2, &mods, &res, 6.0).unwrap()).unwrap();
        for k in 0..2 {
            assert!((got[k] - want[k]).abs() < 1e-4, "{got:?} {want:?}");
            assert!((solved[k] - want[k]).abs() < 1e-4, "{solved:?} {want:?}");
        }
    }

    #[test]
    fn string_currents_follow_polarity() {
        let mods: Vec<_> = (0..5).map(|_| module(22.5, 1.5e-3)).collect();
        let res = InterconnectResistances::uniform(5, 0.75e-3, 0.75e-3).unwrap();
        let layout = decompose_groups("S-PBS+S+".parse::<StringState>().unwrap());
        let i = string_currents(&layout, &mods, &res, 10.0).unwrap();
        // Groups: {0} +1 (terminal), {1,2} -1, {3} bypassed, {4} +1.
        assert_eq!(layout.module_polarity(), vec![1, -1, -1, 0, 1]);
        for g in layout.groups() {
            let sum: f64 = i[g.members()].iter().sum();
            assert!(close(sum, g.polarity as f64 * 10.0, 1e-12));
        }
    }

    #[test]
    fn coulomb_counting() {
        let m = BatteryModule::with_soc(0.5).unwrap();
        assert_eq!(step_battery(&m, 0.0, 1.0).soc, 0.5);
        let full = BatteryModule::with_soc(1.0).unwrap();
        let drained = step_battery(&full, 6.2, 3600.0);
        assert!(drained.soc.abs() < 1e-12);
        assert_eq!(step_battery(&m, 6.2, 3600.0).soc, 0.0);
        assert_eq!(drained.v_b, DEFAULT_V_MIN);
    }

    #[test]
    fn zero_mean_current_keeps_soc() {
        let mut m = BatteryModule::with_soc(0.5).unwrap();
        let dt = 1.0 / 20_000.0;
        for k in 0..40_000 {
            let t = k as f64 * dt;
            m.apply_current(25.0 * libm::sin(2.0 * core::f64::consts::PI * 50.0 * t), dt);
        }
        assert!((m.soc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ocv_endpoints() {
        assert_eq!(ocv(0.0), 20.0);
        assert!((ocv(1.0) - 25.2).abs() < 1e-12);
        // 22.5 V nominal sits at (22.5 - 20) / 5.2.
        assert!((ocv(2.5 / 5.2) - 22.5).abs() < 1e-12);
        let table = OcvMap::Table(vec![(0.0, 20.0), (0.5, 22.0), (1.0, 25.0)]);
        assert_eq!(table.voltage(0.25), 21.0);
        assert_eq!(table.voltage(1.5), 25.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(BatteryModule::new(0.5, 0.0, 1e-3, OcvMap::default()).is_err());
        assert!(BatteryModule::new(0.5, 1.0, -1e-3, OcvMap::default()).is_err());
        assert!(InterconnectResistances::uniform(3, 0.0, 1e-3).is_err());
    }
}
