use mmspc_core::analysis::{degradation_filter, ripple_ratio, rms_avg_ratio};
use mmspc_core::control::{select_state, state_cost, ObserverLut};
use mmspc_core::electrical::{
    assemble_system, ideal_share, nodal_oracle, solve_distribution, string_currents, BatteryModule,
    InterconnectResistances, OcvMap,
};
use mmspc_core::modulation::sigma_delta_step;
use mmspc_core::topology::{
    all_states_for_level, decompose_groups, enumerate_transitions, ConnectionElement, StringState,
};
use proptest::prelude::*;

fn element() -> impl Strategy<Value = ConnectionElement> {
    prop::sample::select(ConnectionElement::ALL.to_vec())
}

fn state(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = StringState> {
    prop::collection::vec(element(), n).prop_map(|e| StringState::new(&e).unwrap())
}

fn module() -> impl Strategy<Value = BatteryModule> {
    (0.05f64..0.95, 5e-3f64..80e-3)
        .prop_map(|(soc, r_b)| BatteryModule::new(soc, 6.2, r_b, OcvMap::default()).unwrap())
}

fn string(
    n: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = (Vec<BatteryModule>, InterconnectResistances)> {
    prop::collection::vec(module(), n).prop_flat_map(|mods| {
        let links = mods.len() - 1;
        (
            Just(mods),
            prop::collection::vec(0.1e-3f64..5e-3, links),
            prop::collection::vec(0.1e-3f64..5e-3, links),
        )
            .prop_map(|(m, sh, sl)| (m, InterconnectResistances::new(sh, sl).unwrap()))
    })
}

proptest! {
    #[test]
    fn groups_partition_the_string(s in state(2..=8)) {
        let layout = decompose_groups(s);
        let n = s.len();
        let mut next = 0;
        for g in layout.groups() {
            prop_assert_eq!(g.members().start, next);
            prop_assert!(!g.members().is_empty());
            next = g.members().end;
        }
        prop_assert_eq!(next, n);
        prop_assert!(s.level().unsigned_abs() as usize <= n);
        prop_assert_eq!(layout.level(), s.level());
        prop_assert_eq!(s.mirrored().level(), -s.level());
        prop_assert_eq!(s.mirrored().mirrored(), s);
        let shares = ideal_share(&layout);
        for g in layout.active_groups() {
            let sum: f64 = shares.0[g.members()].iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transitions_are_sound(s in state(2..=6), delta in -1i32..=1, limit in 1usize..=3) {
        let out = enumerate_transitions(s, delta, limit);
        for t in &out {
            prop_assert_eq!(t.level(), s.level() + delta);
            prop_assert!(t.toggles_from(s) <= limit);
        }
        prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
        if (s.level() + delta).unsigned_abs() as usize <= s.len() {
            prop_assert!(!out.is_empty());
        }
    }

    #[test]
    fn selection_is_optimal_and_scale_covariant(
        n in 2usize..=5,
        level in -5i32..=5,
        demand in prop::collection::vec(-2.0f64..2.0, 5),
        s in -3.0f64..3.0,
        k in 0.1f64..10.0,
    ) {
        prop_assume!(level.unsigned_abs() as usize <= n);
        let lut = ObserverLut::ideal(n).unwrap();
        let candidates = all_states_for_level(n, level).unwrap();
        let current = candidates[0];
        let j_star = &demand[..n];
        let cost = |c: StringState| {
            let e = lut.entry(c).unwrap();
            let j_m: Vec<f64> = (0..n).map(|i| e.load(i, s)).collect();
            state_cost(j_star, &j_m)
        };
        let best = select_state(&candidates, j_star, &lut, s, current).unwrap();
        for &c in &candidates {
            prop_assert!(cost(best) <= cost(c) + 1e-12);
        }
        let scaled: Vec<f64> = j_star.iter().map(|j| k * j).collect();
        let best_scaled = select_state(&candidates, &scaled, &lut, k * s, current).unwrap();
        prop_assert!((cost(best_scaled) - cost(best)).abs() <= 1e-9 * (1.0 + cost(best)));
    }

    #[test]
    fn loop_equations_match_nodal_analysis((mods, res) in string(2..=5), i_l in -60.0f64..60.0) {
        let n = mods.len();
        let a = solve_distribution(&assemble_system(0..n, &mods, &res, i_l).unwrap()).unwrap();
        let b = nodal_oracle(0..n, &mods, &res, i_l).unwrap();
        let scale = b.0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.0.iter().zip(&b.0) {
            prop_assert!((x - y).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn group_currents_obey_kcl((mods, res) in string(2..=6), seed in any::<u32>(), i_l in -60.0f64..60.0) {
        let n = mods.len();
        let elems: Vec<ConnectionElement> =
            (0..n).map(|i| ConnectionElement::ALL[((seed >> (2 * i)) & 3) as usize]).collect();
        let layout = decompose_groups(StringState::new(&elems).unwrap());
        let currents = string_currents(&layout, &mods, &res, i_l).unwrap();
        for g in layout.groups() {
            let sum: f64 = currents[g.members()].iter().sum();
            let want = if g.polarity == 0 { 0.0 } else { g.polarity as f64 * i_l };
            prop_assert!((sum - want).abs() <= 1e-9 * (1.0 + i_l.abs()));
        }
    }

    #[test]
    fn filtering_is_monotonic_in_cutoff(
        a1 in 0.0f64..1.0,
        a3 in 0.0f64..0.5,
        f_lo in 2.0f64..200.0,
        ratio in 1.05f64..5.0,
    ) {
        let f_s = 10_000.0;
        let x: Vec<f64> = (0..10_000)
            .map(|k| {
                let w = 2.0 * std::f64::consts::PI * 50.0 * k as f64 / f_s;
                1.0 + a1 * w.sin() + a3 * (3.0 * w).sin()
            })
            .collect();
        let lo = ripple_ratio(&degradation_filter(&x, f_lo, f_s).unwrap()).unwrap();
        let hi = ripple_ratio(&degradation_filter(&x, f_lo * ratio, f_s).unwrap()).unwrap();
        prop_assert!(lo <= hi + 1e-12);
        let rms = rms_avg_ratio(&x).unwrap();
        let rr = ripple_ratio(&x).unwrap();
        prop_assert!((rms * rms - 1.0 - rr * rr).abs() < 1e-9);
    }

    #[test]
    fn modulator_stays_bounded(
        n in 2usize..=8,
        steps in prop::collection::vec(-0.2f64..0.2, 1..2000),
    ) {
        let (mut level, mut acc, mut reference) = (0, 0.0, 0.0);
        for d in steps {
            reference = (reference + d).clamp(-(n as f64), n as f64);
            let (next, next_acc) = sigma_delta_step(reference, level, acc, n);
            prop_assert!((next - level).abs() <= 1);
            prop_assert!(next.unsigned_abs() as usize <= n);
            prop_assert!(next_acc.abs() < 1.0);
            level = next;
            acc = next_acc;
        }
    }
}
