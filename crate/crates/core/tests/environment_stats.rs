use blpp::environment::{standard_normal_at, standard_normals};
use blpp::io::{read_environment, save_environment, load_environment, write_environment};
use blpp::{Env, EnvF32, GridSpec, LppError};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn increments(env: &Env, line: i64) -> Vec<f64> {
    env.row(line).windows(2).map(|w| w[1] - w[0]).collect()
}

#[test]
fn increment_variance_within_three_standard_errors() {
    let delta = 1e-2;
    let env = Env::generate(7, 0, 0, GridSpec::new(0.0, delta, 100_000, 0).unwrap()).unwrap();
    let inc = increments(&env, 0);
    let m = inc.len() as f64;
    let mean = inc.iter().sum::<f64>() / m;
    let var = inc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let se = delta * (2.0 / (m - 1.0)).sqrt();
    assert!((var - delta).abs() < 3.0 * se, "variance {var} vs {delta} (se {se})");
}

#[test]
fn kolmogorov_smirnov_against_standard_normal() {
    let delta = 0.04;
    let env = Env::generate(2024, 0, 9, GridSpec::new(-2000.0, delta, 100_000, 50_000).unwrap()).unwrap();
    let mut z: Vec<f64> = (0..10).flat_map(|k| increments(&env, k)).map(|v| v / delta.sqrt()).collect();
    assert_eq!(z.len(), 1_000_000);
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let normal = Normal::new(0.0, 1.0).unwrap();
    let m = z.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in z.iter().enumerate() {
        let f = normal.cdf(v);
        d = d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m);
    }
    // asymptotic critical value at level 1e-3
    let crit = (-(1e-3f64 / 2.0).ln() / 2.0).sqrt() / m.sqrt();
    assert!(d < crit, "KS distance {d} >= {crit}");
}

#[test]
fn chi_square_on_equiprobable_bins() {
    let bins = 20;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let edges: Vec<f64> = (1..bins).map(|i| normal.inverse_cdf(i as f64 / bins as f64)).collect();
    let z = standard_normals(99, 3, -50_000, 200_000);
    let mut counts = vec![0usize; bins];
    for v in &z {
        counts[edges.partition_point(|e| e < v)] += 1;
    }
    let expect = z.len() as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi-square {stat}, p = {p}");
}

#[test]
fn lines_are_uncorrelated() {
    let a = standard_normals(5, 0, 0, 100_000);
    let b = standard_normals(5, 1, 0, 100_000);
    let c: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64;
    // sd of the sample correlation is about 1/sqrt(m)
    assert!(c.abs() < 4.0 / (a.len() as f64).sqrt(), "correlation {c}");
}

#[test]
fn batch_and_single_cell_streams_agree() {
    let batch = standard_normals(11, -4, -17, 40);
    for (i, v) in batch.iter().enumerate() {
        assert_eq!(*v, standard_normal_at(11, -4, -17 + i as i64));
    }
}

#[test]
fn enlarging_the_window_keeps_values() {
    let small = Env::generate(7, 0, 0, GridSpec::new(0.0, 0.25, 4, 0).unwrap()).unwrap();
    let again = Env::generate(7, 0, 0, GridSpec::new(0.0, 0.25, 4, 0).unwrap()).unwrap();
    assert_eq!(small, again);
    assert_eq!(small.value(0, 0).unwrap(), 0.0);
    let two = Env::generate(7, 0, 1, GridSpec::new(0.0, 0.25, 4, 0).unwrap()).unwrap();
    assert_eq!(small.row(0), two.row(0));
    let wide = Env::generate(7, -3, 5, GridSpec::new(0.0, 0.25, 400, 0).unwrap()).unwrap();
    assert_eq!(small.row(0), &wide.row(0)[..5]);
}

#[test]
fn anchor_is_pinned_on_every_line() {
    let grid = GridSpec::new(-3.0, 0.5, 12, 6).unwrap();
    let env = Env::generate(1, -2, 2, grid).unwrap();
    for k in -2..=2 {
        assert_eq!(env.value(k, 6).unwrap(), 0.0);
    }
    // increments do not depend on the anchor choice
    let other = Env::generate(1, -2, 2, GridSpec::new(-3.0, 0.5, 12, 0).unwrap()).unwrap();
    for k in -2..=2 {
        for g in 0..12 {
            let a = env.value(k, g + 1).unwrap() - env.value(k, g).unwrap();
            let b = other.value(k, g + 1).unwrap() - other.value(k, g).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn out_of_range_access_is_a_domain_error() {
    let env = Env::generate(1, 0, 1, GridSpec::new(0.0, 1.0, 3, 0).unwrap()).unwrap();
    assert!(matches!(env.value(2, 0), Err(LppError::Domain(_))));
    assert!(matches!(env.value(0, 4), Err(LppError::Domain(_))));
    assert!(matches!(GridSpec::new(0.0, 0.0, 3, 0), Err(LppError::Parameter(_))));
    assert!(matches!(GridSpec::new(0.0, 1.0, 0, 0), Err(LppError::Parameter(_))));
}

#[test]
fn binary_round_trip_is_bit_exact() {
    let env = Env::generate(31, -1, 3, GridSpec::new(-1.5, 0.125, 64, 12).unwrap()).unwrap();
    let mut buf = Vec::new();
    write_environment(&env, &mut buf).unwrap();
    let back: Env = read_environment(buf.as_slice()).unwrap();
    assert_eq!(back, env);
    assert_eq!(back.seed(), Some(31));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.bin");
    save_environment(&env, &path).unwrap();
    let loaded: Env = load_environment(&path).unwrap();
    assert!(loaded.values().iter().zip(env.values()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let short = &buf[..buf.len() - 3];
    assert!(read_environment::<f64, _>(short).is_err());
}

#[test]
fn single_precision_table_tracks_double() {
    let grid = GridSpec::new(0.0, 0.5, 40, 0).unwrap();
    let d = Env::generate(3, 0, 2, grid).unwrap();
    let f = EnvF32::generate(3, 0, 2, grid).unwrap();
    for (a, b) in d.values().iter().zip(f.values()) {
        assert!((a - *b as f64).abs() < 1e-5 * a.abs().max(1.0));
    }
}
