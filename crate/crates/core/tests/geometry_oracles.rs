use blpp::geometry::*;
use blpp::lpp::{geodesic, multi_geodesic, staircase_energy, LatticePoint, Staircase, TieRule};
use blpp::scaled::{multi_polymer_weight, polymer, snap};
use blpp::{CompatibleTriple, Env, GridSpec, LppError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::HashSet;

fn st(x: usize, i: i64, y: usize, j: i64, z: &[usize]) -> Staircase {
    Staircase::new(LatticePoint::new(x, i), LatticePoint::new(y, j), z.to_vec()).unwrap()
}

fn random_staircase(rng: &mut ChaCha20Rng, x: usize, i: i64, y: usize, j: i64) -> Staircase {
    let mut z: Vec<usize> = (i..j).map(|_| rng.gen_range(x..=y)).collect();
    z.sort_unstable();
    st(x, i, y, j, &z)
}

// unit horizontal segments (line, left end) covered by the path
fn segments(s: &Staircase) -> HashSet<(i64, usize)> {
    let mut out = HashSet::new();
    for m in s.line_range() {
        let (a, b) = s.interval(m);
        for c in a..b {
            out.insert((m, c));
        }
    }
    out
}

// points of the path at doubled heights: 2m on line m, 2m + 1 on the vertical above it
fn points(s: &Staircase) -> Vec<(i64, usize)> {
    let mut out = Vec::new();
    for m in s.line_range() {
        let (a, b) = s.interval(m);
        for g in a..=b {
            out.push((2 * m, g));
        }
        if m < s.end().line {
            out.push((2 * m + 1, b));
        }
    }
    out
}

fn strict_by_sets(s1: &Staircase, s2: &Staircase) -> bool {
    s1.start().g <= s2.start().g && s1.end().g <= s2.end().g && segments(s1).is_disjoint(&segments(s2))
}

fn weak_by_rays(s1: &Staircase, s2: &Staircase) -> bool {
    let p1 = points(s1);
    points(s2).iter().all(|&(h, g)| p1.iter().any(|&(h1, g1)| h1 == h && g1 <= g))
}

fn energy(env: &Env, s: &Staircase) -> f64 {
    staircase_energy(env, s).unwrap()
}

#[test]
fn relation_examples() {
    let a = st(0, 0, 4, 2, &[1, 3]);
    assert!(!precedes_strict(&a, &a).unwrap().holds);
    assert!(precedes_weak(&a, &a).unwrap().holds);
    let right = st(2, 0, 7, 2, &[4, 6]);
    assert!(precedes_strict(&a, &right).unwrap().holds);
    // touching along a vertical only
    let b = st(0, 0, 3, 2, &[3, 3]);
    let c = st(3, 0, 6, 2, &[3, 5]);
    assert!(precedes_strict(&b, &c).unwrap().holds);
    // shared start forces a pinch: still strict, hence weak
    let d = st(0, 0, 4, 2, &[0, 2]);
    let e = st(0, 0, 6, 2, &[3, 4]);
    assert!(precedes_strict(&d, &e).unwrap().holds);
    assert!(precedes_weak(&d, &e).unwrap().holds);
    // a crossing pair reports where it fails
    let f = st(0, 0, 6, 2, &[4, 4]);
    let g = st(1, 0, 6, 2, &[2, 5]);
    let w = precedes_weak(&f, &g).unwrap();
    assert!(!w.holds && w.violation.is_some());
    assert!(matches!(precedes_strict(&a, &st(0, 0, 4, 3, &[1, 2, 3])), Err(LppError::Parameter(_))));
}

#[test]
fn relations_agree_with_point_set_definitions() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for _ in 0..3000 {
        let lines = rng.gen_range(1..5);
        let x1 = rng.gen_range(0..5);
        let x2 = rng.gen_range(0..5);
        let y1 = rng.gen_range(x1..10);
        let y2 = rng.gen_range(x2..10);
        let s1 = random_staircase(&mut rng, x1, 0, y1, lines);
        let s2 = random_staircase(&mut rng, x2, 0, y2, lines);
        assert_eq!(precedes_strict(&s1, &s2).unwrap().holds, strict_by_sets(&s1, &s2), "{s1:?} {s2:?}");
        let w = precedes_weak(&s1, &s2).unwrap();
        assert_eq!(w.holds, weak_by_rays(&s1, &s2), "{s1:?} {s2:?}");
        assert_eq!(w.holds, w.violation.is_none());
    }
}

fn polymers(env: &Env, triple: &CompatibleTriple, rng: &mut ChaCha20Rng) -> Staircase {
    let x = rng.gen_range(-0.5..0.5);
    let y = rng.gen_range(-0.5..0.5);
    polymer(env, triple, x, y, TieRule::Leftmost).unwrap().staircase
}

#[test]
fn strict_implies_weak_and_composes_with_weak() {
    let n = 16u64;
    let triple = CompatibleTriple::from_lines(n, 0, 16).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let (mut strict_pairs, mut composed) = (0, 0);
    for seed in 0..200 {
        let env = Env::generate(seed, 0, 16, GridSpec::covering(-20.0, 40.0, 0.25).unwrap()).unwrap();
        let zs: Vec<Staircase> = (0..4).map(|_| polymers(&env, &triple, &mut rng)).collect();
        for a in &zs {
            for b in &zs {
                if precedes_strict(a, b).unwrap().holds {
                    strict_pairs += 1;
                    assert!(precedes_weak(a, b).unwrap().holds);
                    for c in &zs {
                        if precedes_weak(b, c).unwrap().holds {
                            composed += 1;
                            assert!(precedes_strict(a, c).unwrap().holds);
                        }
                    }
                }
            }
        }
    }
    assert!(strict_pairs > 50 && composed > 50);
}

#[test]
fn meet_and_join_exchange_energy() {
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let env = Env::generate(3, 0, 6, GridSpec::new(0.0, 0.5, 24, 0).unwrap()).unwrap();
    let mut crossing = 0;
    for _ in 0..1000 {
        let x1 = rng.gen_range(0..6);
        let x2 = rng.gen_range(0..6);
        let (y1, y2) = (rng.gen_range(x1.max(x2)..24), rng.gen_range(x1.max(x2)..24));
        let s1 = random_staircase(&mut rng, x1, 0, y1, 5);
        let s2 = random_staircase(&mut rng, x2, 0, y2, 5);
        let lo = staircase_meet(&s1, &s2).unwrap();
        let hi = staircase_join(&s1, &s2).unwrap();
        let lhs = energy(&env, &lo) + energy(&env, &hi);
        let rhs = energy(&env, &s1) + energy(&env, &s2);
        assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
        for s in [&s1, &s2] {
            assert!(precedes_weak(&lo, s).unwrap().holds);
            assert!(precedes_weak(s, &hi).unwrap().holds);
        }
        assert_eq!(lo.start().g, s1.start().g.min(s2.start().g));
        assert_eq!(hi.end().g, s1.end().g.max(s2.end().g));
        if !precedes_weak(&s1, &s2).unwrap().holds && !precedes_weak(&s2, &s1).unwrap().holds {
            crossing += 1;
        }
    }
    assert!(crossing > 100);
    let a = st(0, 0, 4, 2, &[1, 3]);
    assert_eq!(staircase_meet(&a, &a).unwrap(), a);
    let b = st(2, 0, 7, 2, &[4, 6]);
    assert_eq!(staircase_meet(&a, &b).unwrap(), a);
    assert_eq!(staircase_join(&a, &b).unwrap(), b);
}

#[test]
fn concatenation_rejects_mismatched_ends() {
    let env = Env::generate(1, 0, 8, GridSpec::covering(-10.0, 20.0, 0.5).unwrap()).unwrap();
    let triple = CompatibleTriple::from_lines(8, 0, 8).unwrap();
    let (p, q) = split_polymer(&env, &triple, 0.0, 0.1, 0.5).unwrap();
    assert!(concatenate(&q, &p).is_err());
    assert!(matches!(split_polymer(&env, &triple, 0.0, 0.1, 0.3), Err(LppError::Parameter(_))));
    assert!(split_polymer(&env, &triple, 0.0, 0.1, 1.0).is_err());
}

#[test]
fn coupling_examples() {
    let env = Env::generate(2, 0, 5, GridSpec::new(0.0, 0.5, 14, 0).unwrap()).unwrap();
    let w = monotone_coupling_check(&env, 2, 0, 5, (&[1, 2], &[8, 9]), (&[1, 2], &[8, 9])).unwrap();
    assert!(w.holds);
    let ident = Env::identity(0, 5, GridSpec::new(0.0, 0.5, 14, 0).unwrap()).unwrap();
    for (u, v) in [(0, 3), (2, 2), (1, 4)] {
        let w = monotone_coupling_check(&ident, 1, 0, 5, (&[u], &[8]), (&[v.max(u)], &[11])).unwrap();
        assert!(w.holds);
        // leftmost geodesics in a tied environment wait at their start
        let g = geodesic(&ident, LatticePoint::new(u, 0), LatticePoint::new(8, 5), TieRule::Leftmost).unwrap();
        assert!(g.jumps().iter().all(|&z| z == u));
    }
    assert!(matches!(
        monotone_coupling_check(&env, 1, 0, 5, (&[3], &[8]), (&[2], &[9])),
        Err(LppError::Parameter(_))
    ));
}

#[test]
fn coupling_has_no_violations() {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    for r in 0..300u64 {
        let env = Env::generate(r, 0, 4, GridSpec::new(0.0, 0.5, 12, 0).unwrap()).unwrap();
        let k = rng.gen_range(1..=3);
        let mut u: Vec<usize> = (0..k).map(|_| rng.gen_range(0..4)).collect();
        let mut x: Vec<usize> = (0..k).map(|_| rng.gen_range(6..9)).collect();
        u.sort_unstable();
        x.sort_unstable();
        // a common shift keeps both tuples sorted and dominating
        let du = rng.gen_range(0..=2);
        let dx = rng.gen_range(0..=3);
        let v: Vec<usize> = u.iter().map(|a| a + du).collect();
        let y: Vec<usize> = x.iter().map(|a| a + dx).collect();
        match monotone_coupling_check(&env, k, 0, 4, (&u, &x), (&v, &y)) {
            Ok(w) => assert!(w.holds, "{u:?}->{x:?} vs {v:?}->{y:?}: {w:?}"),
            Err(LppError::Infeasible(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn diagonal_bouquet_examples() {
    let n = 16u64;
    let triple = CompatibleTriple::from_lines(n, 0, 16).unwrap();
    let env = Env::generate(7, 0, 16, GridSpec::covering(-20.0, 40.0, 0.25).unwrap()).unwrap();
    let d = diagonal_bouquet(&env, &triple, 1, 0.0, &[0.2]).unwrap();
    let p = polymer(&env, &triple, 0.0, 0.2, TieRule::Leftmost).unwrap();
    assert_eq!(d.components[0].staircase, p.staircase);
    assert!(d.separate && d.witnesses.is_empty());

    let d = diagonal_bouquet(&env, &triple, 3, 0.0, &[0.1, 0.1, 0.1]).unwrap();
    let a = snap(&env, n, 0.0, 0).unwrap().g;
    let b = snap(&env, n, 0.1, 16).unwrap().g;
    let mg = multi_geodesic(&env, &[a; 3], 0, &[b; 3], 16, TieRule::Leftmost).unwrap();
    for (c, p) in d.components.iter().zip(mg.paths()) {
        assert_eq!(&c.staircase, p);
    }
    assert!(d.separate);
    assert!((d.total_weight - d.bouquet_weight).abs() < 1e-9);
}

#[test]
fn diagonal_bouquet_is_separate_and_below_the_bouquet() {
    let n = 16u64;
    let triple = CompatibleTriple::from_lines(n, 0, 16).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    for seed in 0..60u64 {
        let env = Env::generate(seed, 0, 16, GridSpec::covering(-20.0, 40.0, 0.5).unwrap()).unwrap();
        let k = if seed % 3 == 0 { 3 } else { 2 };
        let x = rng.gen_range(-0.2..0.2);
        let mut us: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.6..0.6)).collect();
        us.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = diagonal_bouquet(&env, &triple, k, x, &us).unwrap();
        assert!(d.separate, "seed {seed}: {:?}", d.witnesses);
        assert!(d.bouquet_weight >= d.total_weight - 1e-9, "seed {seed}");
        let xs = vec![snap(&env, n, x, 0).unwrap().x; k];
        let direct = multi_polymer_weight(&env, &triple, k, &xs, &us).unwrap();
        assert!((direct - d.bouquet_weight).abs() < 1e-9);
    }
}

#[test]
fn watermelon_component_weights_respect_curve_bounds() {
    let n = 16u64;
    let triple = CompatibleTriple::from_lines(n, 0, 16).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(41);
    for seed in 0..60u64 {
        let env = Env::generate(seed, 0, 16, GridSpec::covering(-20.0, 40.0, 0.5).unwrap()).unwrap();
        let k = rng.gen_range(2..=4);
        let y = rng.gen_range(-0.5..0.5);
        let w = watermelon_components(&env, &triple, k, 0.0, y).unwrap();
        assert!(w.bound_violation() <= 1e-9, "seed {seed}: {:?} vs {:?}", w.weights, w.bounds());
        let total: f64 = w.weights.iter().sum();
        let curves: f64 = w.curves.iter().sum();
        assert!((total - curves).abs() < 1e-9);
    }
}
