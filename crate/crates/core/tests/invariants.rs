use blpp::estimators::{fit_exponent, wilson_interval};
use blpp::geometry::{precedes_weak, staircase_join, staircase_meet};
use blpp::lpp::*;
use blpp::scaled::{scale_point, unscale_point};
use blpp::{Env, GridSpec, LppError};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn table(lines: i64, cells: usize) -> impl Strategy<Value = Env> {
    let points = cells + 1;
    prop::collection::vec(-3.0f64..3.0, lines as usize * points).prop_map(move |v| {
        Env::from_values(0, lines - 1, GridSpec::new(0.0, 1.0, cells, 0).unwrap(), v).unwrap()
    })
}

fn sorted(k: usize, hi: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..=hi, k).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

fn staircase_pair(lines: i64, cells: usize) -> impl Strategy<Value = (usize, usize, Vec<usize>, Vec<usize>)> {
    (0..=cells / 2, cells / 2..=cells).prop_flat_map(move |(x, y)| {
        let jumps = (lines - 1) as usize;
        let one = prop::collection::vec(x..=y, jumps).prop_map(|mut v| {
            v.sort_unstable();
            v
        });
        (Just(x), Just(y), one.clone(), one)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn program_matches_enumeration(
        (env, xs, ys) in (1i64..=3, 3usize..=6, 1usize..=3).prop_flat_map(|(lines, cells, k)| {
            (table(lines, cells), sorted(k, cells / 2), sorted(k, cells))
        })
    ) {
        let j = env.line_max();
        let ys: Vec<usize> = {
            let mut v: Vec<usize> = ys.iter().zip(&xs).map(|(&y, &x)| y.max(x)).collect();
            v.sort_unstable();
            v
        };
        match (brute_force_multi(&env, &xs, 0, &ys, j), multi_last_passage(&env, &xs, 0, &ys, j)) {
            (Ok(b), Ok(d)) => prop_assert!((b - d).abs() <= TOL * b.abs().max(1.0), "{} vs {}", b, d),
            (Err(LppError::Infeasible(_)), Err(LppError::Infeasible(_))) => {}
            (b, d) => prop_assert!(false, "feasibility differs: {:?} vs {:?}", b, d),
        }
    }

    #[test]
    fn multi_paths_are_subadditive(
        (env, xs, ys) in (2usize..=3).prop_flat_map(|k| (table(4, 8), sorted(k, 3), sorted(k, 4)))
    ) {
        let ys: Vec<usize> = ys.iter().map(|y| y + 4).collect();
        if let Ok(mk) = multi_last_passage(&env, &xs, 0, &ys, 3) {
            let sum: f64 = xs.iter().zip(&ys)
                .map(|(&x, &y)| last_passage(&env, LatticePoint::new(x, 0), LatticePoint::new(y, 3)).unwrap())
                .sum();
            prop_assert!(mk <= sum + TOL * sum.abs().max(1.0));
        }
    }

    #[test]
    fn meet_and_join_exchange_energy(env in table(5, 10), (x, y, z1, z2) in staircase_pair(5, 10)) {
        let (a, b) = (LatticePoint::new(x, 0), LatticePoint::new(y, 4));
        let s1 = Staircase::new(a, b, z1).unwrap();
        let s2 = Staircase::new(a, b, z2).unwrap();
        let meet = staircase_meet(&s1, &s2).unwrap();
        let join = staircase_join(&s1, &s2).unwrap();
        let e = |s: &Staircase| staircase_energy(&env, s).unwrap();
        let (lhs, rhs) = (e(&meet) + e(&join), e(&s1) + e(&s2));
        prop_assert!((lhs - rhs).abs() <= TOL * rhs.abs().max(1.0));
        for s in [&s1, &s2] {
            prop_assert!(precedes_weak(&meet, s).unwrap().holds);
            prop_assert!(precedes_weak(s, &join).unwrap().holds);
        }
    }

    #[test]
    fn line_shifts_leave_energies_unchanged(
        env in table(4, 8),
        shifts in prop::collection::vec(-5.0f64..5.0, 4),
        (x, y, z, _) in staircase_pair(4, 8)
    ) {
        let shifted = Env::from_fn(0, 3, *env.grid(), |k, p| env.value(k, env.grid().snap(p).unwrap()).unwrap() + shifts[k as usize]).unwrap();
        let s = Staircase::new(LatticePoint::new(x, 0), LatticePoint::new(y, 3), z).unwrap();
        let (e1, e2) = (staircase_energy(&env, &s).unwrap(), staircase_energy(&shifted, &s).unwrap());
        prop_assert!((e1 - e2).abs() <= 1e-9);
    }

    #[test]
    fn geodesics_attain_the_passage_value_and_sandwich(env in table(4, 7), x in 0usize..=3, dy in 0usize..=4) {
        let (a, b) = (LatticePoint::new(x, 0), LatticePoint::new(x + dy, 3));
        let m = last_passage(&env, a, b).unwrap();
        let l = geodesic(&env, a, b, TieRule::Leftmost).unwrap();
        let r = geodesic(&env, a, b, TieRule::Rightmost).unwrap();
        prop_assert!((staircase_energy(&env, &l).unwrap() - m).abs() <= TOL * m.abs().max(1.0));
        prop_assert!((staircase_energy(&env, &r).unwrap() - m).abs() <= TOL * m.abs().max(1.0));
        prop_assert!(precedes_weak(&l, &r).unwrap().holds);
    }

    #[test]
    fn scaling_map_round_trips(n in 1u64..5000, x in -1e4f64..1e4, t in -1e4f64..1e4) {
        let back = unscale_point(n, scale_point(n, (x, t)));
        prop_assert!((back.0 - x).abs() <= 1e-9 * x.abs().max(1.0));
        prop_assert!((back.1 - t).abs() <= 1e-9 * t.abs().max(1.0));
    }

    #[test]
    fn seeded_cells_do_not_depend_on_the_window(seed in any::<u64>(), lo in -20i64..0, extra in 1usize..50) {
        let small = Env::generate(seed, 0, 1, GridSpec::new(0.0, 0.5, 8, 0).unwrap()).unwrap();
        let big = Env::generate(seed, lo, 2, GridSpec::new(-0.5 * extra as f64, 0.5, 8 + 2 * extra, extra).unwrap()).unwrap();
        for line in 0..=1 {
            prop_assert_eq!(small.row(line), &big.row(line)[extra..extra + 9]);
        }
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(trials in 1usize..100_000, frac in 0.0f64..=1.0) {
        let k = ((trials as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(k, trials);
        let p = k as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }

    #[test]
    fn power_laws_are_recovered(c in 0.01f64..100.0, b in -3.0f64..3.0, s0 in 0.1f64..10.0) {
        let pairs: Vec<(f64, f64)> = (0..5).map(|i| {
            let s = s0 * 2f64.powi(i);
            (s, c * s.powf(b))
        }).collect();
        let f = fit_exponent(&pairs, true).unwrap();
        prop_assert!((f.slope - b).abs() < 1e-9);
        prop_assert!((f.intercept - c.ln()).abs() < 1e-8);
    }
}
