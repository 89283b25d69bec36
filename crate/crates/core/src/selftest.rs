//! Quick oracle suite run by the `selftest` command.

use crate::ensembles;
use crate::environment::{Environment, GridSpec};
use crate::error::{LppError, Result};
use crate::geometry;
use crate::lpp::{self, LatticePoint, Staircase, TieRule};
use crate::scaled::{self, CompatibleTriple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub instances: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

const TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * a.abs().max(b.abs()).max(1.0)
}

fn small_env(seed: u64, lines: i64, cells: usize) -> Result<Environment<f64>> {
    Environment::generate(seed, 0, lines - 1, GridSpec::new(0.0, 0.5, cells, 0)?)
}

fn sorted_tuple(rng: &mut ChaCha8Rng, k: usize, lo: usize, hi: usize) -> Vec<usize> {
    let mut t: Vec<usize> = (0..k).map(|_| rng.gen_range(lo..=hi)).collect();
    t.sort_unstable();
    t
}

fn check(name: &str, instances: usize, f: impl FnOnce() -> Result<Option<String>>) -> Check {
    match f() {
        Ok(None) => Check { name: name.into(), passed: true, instances, detail: String::new() },
        Ok(Some(d)) => Check { name: name.into(), passed: false, instances, detail: d },
        Err(e) => Check { name: name.into(), passed: false, instances, detail: e.to_string() },
    }
}

fn dp_vs_enumeration(seed: u64, instances: usize) -> Result<Option<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    let mut attempt = 0u64;
    while done < instances {
        attempt += 1;
        let k = rng.gen_range(1..=3);
        let lines = rng.gen_range(1..=3);
        let cells = rng.gen_range(3..=8);
        let env = small_env(seed ^ attempt, lines, cells)?;
        let xs = sorted_tuple(&mut rng, k, 0, cells / 2);
        let mut ys: Vec<usize> = sorted_tuple(&mut rng, k, 0, cells).iter().zip(&xs).map(|(&y, &x)| y.max(x)).collect();
        ys.sort_unstable();
        let j = lines - 1;
        match (lpp::brute_force_multi(&env, &xs, 0, &ys, j), lpp::multi_last_passage(&env, &xs, 0, &ys, j)) {
            (Ok(b), Ok(d)) => {
                if !close(b, d) {
                    return Ok(Some(format!("{xs:?} -> {ys:?}: enumeration {b}, program {d}")));
                }
                done += 1;
            }
            (Err(LppError::Infeasible(_)), Err(LppError::Infeasible(_))) => {}
            (b, d) => return Ok(Some(format!("feasibility differs: {b:?} vs {d:?}"))),
        }
    }
    Ok(None)
}

fn subadditivity(seed: u64, instances: usize) -> Result<Option<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    let mut attempt = 0u64;
    while done < instances {
        attempt += 1;
        let k = rng.gen_range(2..=3);
        let env = small_env(seed ^ (attempt << 8), 5, 12)?;
        let xs = sorted_tuple(&mut rng, k, 0, 5);
        let ys: Vec<usize> = sorted_tuple(&mut rng, k, 6, 12);
        let mk = match lpp::multi_last_passage(&env, &xs, 0, &ys, 4) {
            Ok(v) => v,
            Err(LppError::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        };
        let mut sum = 0.0;
        for (&x, &y) in xs.iter().zip(&ys) {
            sum += lpp::last_passage(&env, LatticePoint::new(x, 0), LatticePoint::new(y, 4))?;
        }
        if mk > sum + TOL * sum.abs().max(1.0) {
            return Ok(Some(format!("{xs:?} -> {ys:?}: M^k {mk} > sum {sum}")));
        }
        done += 1;
    }
    Ok(None)
}

fn coupling(seed: u64, instances: usize) -> Result<Option<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in 0..instances {
        let env = small_env(seed ^ r as u64, 6, 14)?;
        let k = rng.gen_range(1..=2);
        let u = sorted_tuple(&mut rng, k, 0, 4);
        let x = sorted_tuple(&mut rng, k, 8, 11);
        let du = rng.gen_range(0..=2);
        let dx = rng.gen_range(0..=3);
        let v: Vec<usize> = u.iter().map(|a| a + du).collect();
        let y: Vec<usize> = x.iter().map(|a| a + dx).collect();
        let w = geometry::monotone_coupling_check(&env, k, 0, 5, (&u, &x), (&v, &y))?;
        if !w.holds {
            return Ok(Some(format!("{u:?}->{x:?} vs {v:?}->{y:?}: {:?}", w.failure)));
        }
    }
    Ok(None)
}

fn sandwich(seed: u64, instances: usize) -> Result<Option<String>> {
    for r in 0..instances {
        let raw = small_env(seed ^ r as u64, 4, 6)?;
        // integer values make ties common
        let env = Environment::from_fn(0, 3, *raw.grid(), |k, x| {
            (raw.value(k, raw.grid().snap(x).unwrap()).unwrap() * 2.0).round()
        })?;
        let (a, b) = (LatticePoint::new(0, 0), LatticePoint::new(6, 3));
        let m = lpp::last_passage(&env, a, b)?;
        let l = lpp::geodesic(&env, a, b, TieRule::Leftmost)?;
        let rr = lpp::geodesic(&env, a, b, TieRule::Rightmost)?;
        let mut bad = None;
        lpp::enumerate_jump_sequences(0, 6, 3, &mut |z| {
            if bad.is_some() {
                return;
            }
            let s = Staircase::new(a, b, z.to_vec()).unwrap();
            if lpp::staircase_energy(&env, &s).unwrap() == m
                && !(geometry::precedes_weak(&l, &s).unwrap().holds && geometry::precedes_weak(&s, &rr).unwrap().holds)
            {
                bad = Some(format!("maximizer {z:?} escapes the sandwich"));
            }
        });
        if bad.is_some() {
            return Ok(bad);
        }
    }
    Ok(None)
}

fn meet_join(seed: u64, instances: usize) -> Result<Option<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = small_env(seed, 6, 20)?;
    for _ in 0..instances {
        let x = rng.gen_range(0..=8);
        let y = rng.gen_range(x + 4..=20);
        let mut z1 = sorted_tuple(&mut rng, 5, x, y);
        let mut z2 = sorted_tuple(&mut rng, 5, x, y);
        z1.sort_unstable();
        z2.sort_unstable();
        let (a, b) = (LatticePoint::new(x, 0), LatticePoint::new(y, 5));
        let s1 = Staircase::new(a, b, z1)?;
        let s2 = Staircase::new(a, b, z2)?;
        let e = |s: &Staircase| lpp::staircase_energy(&env, s);
        let lhs = e(&geometry::staircase_meet(&s1, &s2)?)? + e(&geometry::staircase_join(&s1, &s2)?)?;
        let rhs = e(&s1)? + e(&s2)?;
        if !close(lhs, rhs) {
            return Ok(Some(format!("meet + join {lhs} vs {rhs}")));
        }
    }
    Ok(None)
}

fn splitting(seed: u64, instances: usize) -> Result<Option<String>> {
    let n = 8;
    let env = Environment::generate(seed, 0, 8, GridSpec::covering(-12.0, 20.0, 0.25)?)?;
    let triple = CompatibleTriple::from_lines(n, 0, 8)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let x = rng.gen_range(-0.4..0.4);
        let y = rng.gen_range(-0.4..0.4);
        let t = rng.gen_range(1..=7) as f64 / 8.0;
        let whole = scaled::polymer(&env, &triple, x, y, TieRule::Leftmost)?;
        let (p, q) = geometry::split_polymer(&env, &triple, x, y, t)?;
        if !close(p.weight + q.weight, whole.weight) {
            return Ok(Some(format!("split weights {} + {} vs {}", p.weight, q.weight, whole.weight)));
        }
        let joined = geometry::concatenate(&p, &q)?;
        if joined.staircase != whole.staircase {
            return Ok(Some("concatenation does not restore the polymer".into()));
        }
    }
    Ok(None)
}

fn ensemble_identity(seed: u64, instances: usize) -> Result<Option<String>> {
    let n = 8;
    let triple = CompatibleTriple::from_lines(n, 0, 8)?;
    let ys: Vec<f64> = (0..9).map(|i| -0.8 + 0.2 * i as f64).collect();
    for r in 0..instances {
        let env = Environment::generate(seed ^ r as u64, 0, 8, GridSpec::covering(-8.0, 16.0, 0.5)?)?;
        let l = ensembles::forward_ensemble(&env, &triple, 0.0, 3, &ys)?;
        if l.ordering_violation() > 1e-9 {
            return Ok(Some(format!("ordering violated by {}", l.ordering_violation())));
        }
        for (s, &y) in l.domain.iter().enumerate() {
            for k in 1..=3 {
                let direct = scaled::multi_polymer_weight(&env, &triple, k, &vec![l.root.x; k], &vec![y; k])?;
                if !close(l.partial_sum(k, s), direct) {
                    return Ok(Some(format!("partial sum {k} at {y}: {} vs {direct}", l.partial_sum(k, s))));
                }
            }
        }
    }
    Ok(None)
}

fn environment_stability(seed: u64) -> Result<Option<String>> {
    let small = Environment::<f64>::generate(seed, 0, 2, GridSpec::covering(-2.0, 2.0, 0.25)?)?;
    let big = Environment::<f64>::generate(seed, -1, 4, GridSpec::covering(-2.0, 6.0, 0.25)?)?;
    for line in 0..=2 {
        for g in 0..=small.grid().num_cells {
            let pos = small.grid().position(g);
            let h = big.grid().snap(pos).unwrap();
            if small.value(line, g)? != big.value(line, h)? {
                return Ok(Some(format!("line {line} index {g} changed under extension")));
            }
        }
    }
    Ok(None)
}

/// Runs every check; never panics.
pub fn run(seed: u64) -> SelftestReport {
    SelftestReport {
        checks: vec![
            check("multi-path program vs enumeration", 100, || dp_vs_enumeration(seed, 100)),
            check("subadditivity", 200, || subadditivity(seed, 200)),
            check("monotone coupling", 100, || coupling(seed, 100)),
            check("sandwich", 100, || sandwich(seed, 100)),
            check("meet/join energy exchange", 200, || meet_join(seed, 200)),
            check("splitting and concatenation", 50, || splitting(seed, 50)),
            check("ensemble sum identity and ordering", 5, || ensemble_identity(seed, 5)),
            check("environment extension stability", 1, || environment_stability(seed)),
        ],
    }
}
