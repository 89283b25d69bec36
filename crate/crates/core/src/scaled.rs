//! Scaled coordinates, zigzag weights and polymer weights.
//!
//! The scaling map sends the unscaled point `(v1, v2)` to
//! `((v1 - v2) / (2 n^{2/3}), v2 / n)`. Weights are centered energies
//! `2^{-1/2} n^{-1/3} (E - 2 n t12 - 2 n^{2/3} (y - x))`, which in unscaled terms
//! equals `2^{-1/2} n^{-1/3} (E - (j - i) - (Y - X))`.

use crate::environment::Environment;
use crate::error::{domain, infeasible, param, LppError, Result};
use crate::lpp::{self, LatticePoint, MultiTable, PassageTable, Staircase, TieRule};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// `n^{1/3}`, exact for perfect cubes.
#[inline]
pub fn n_third(n: u64) -> f64 {
    (n as f64).cbrt()
}

/// `n^{2/3}`.
#[inline]
pub fn n_two_thirds(n: u64) -> f64 {
    let c = n_third(n);
    c * c
}

/// `2^{-1/2} n^{-1/3}`.
#[inline]
pub fn weight_factor(n: u64) -> f64 {
    std::f64::consts::FRAC_1_SQRT_2 / n_third(n)
}

fn integral(v: f64) -> Option<i64> {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        Some(r as i64)
    } else {
        None
    }
}

/// `(n, t1, t2)` with `n t1, n t2` integers and `t1 < t2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompatibleTriple {
    n: u64,
    line1: i64,
    line2: i64,
}

impl CompatibleTriple {
    pub fn new(n: u64, t1: f64, t2: f64) -> Result<Self> {
        if n == 0 {
            return param("n must be at least 1");
        }
        if !(t1 < t2) {
            return param(format!("need t1 < t2, got {t1}, {t2}"));
        }
        let l1 = integral(n as f64 * t1)
            .ok_or_else(|| LppError::Parameter(format!("n*t1 = {} is not an integer", n as f64 * t1)))?;
        let l2 = integral(n as f64 * t2)
            .ok_or_else(|| LppError::Parameter(format!("n*t2 = {} is not an integer", n as f64 * t2)))?;
        Self::from_lines(n, l1, l2)
    }

    pub fn from_lines(n: u64, line1: i64, line2: i64) -> Result<Self> {
        if n == 0 {
            return param("n must be at least 1");
        }
        if line1 >= line2 {
            return param(format!("need line1 < line2, got {line1}, {line2}"));
        }
        Ok(CompatibleTriple { n, line1, line2 })
    }

    pub fn n(&self) -> u64 {
        self.n
    }
    pub fn line1(&self) -> i64 {
        self.line1
    }
    pub fn line2(&self) -> i64 {
        self.line2
    }
    pub fn t1(&self) -> f64 {
        self.line1 as f64 / self.n as f64
    }
    pub fn t2(&self) -> f64 {
        self.line2 as f64 / self.n as f64
    }
    /// `t2 - t1`.
    pub fn t12(&self) -> f64 {
        (self.line2 - self.line1) as f64 / self.n as f64
    }
    /// `n t12`.
    pub fn lines(&self) -> i64 {
        self.line2 - self.line1
    }

    /// Line `n t` for a time inside the lifetime.
    pub fn line_at(&self, t: f64) -> Result<i64> {
        let l = integral(self.n as f64 * t)
            .ok_or_else(|| LppError::Parameter(format!("n*t = {} is not an integer", self.n as f64 * t)))?;
        if l < self.line1 || l > self.line2 {
            return domain(format!("time {t} outside [{}, {}]", self.t1(), self.t2()));
        }
        Ok(l)
    }

    /// Smallest allowed end location: `x - 2^{-1} n^{1/3} t12`.
    pub fn min_end(&self, x: f64) -> f64 {
        x - 0.5 * n_third(self.n) * self.t12()
    }
}

/// A point `(x, t)` in scaled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledPoint {
    pub x: f64,
    pub t: f64,
}

impl ScaledPoint {
    pub fn new(x: f64, t: f64) -> Self {
        ScaledPoint { x, t }
    }
}

/// Image of the unscaled point `v` under the scaling map.
pub fn scale_point(n: u64, v: (f64, f64)) -> ScaledPoint {
    ScaledPoint { x: (v.0 - v.1) / (2.0 * n_two_thirds(n)), t: v.1 / n as f64 }
}

/// Unscaled preimage `(n t + 2 n^{2/3} x, n t)`.
pub fn unscale_point(n: u64, p: ScaledPoint) -> (f64, f64) {
    let v2 = p.t * n as f64;
    (v2 + 2.0 * n_two_thirds(n) * p.x, v2)
}

/// Scaled spatial coordinate of the unscaled position `pos` on `line`.
pub fn scaled_x(n: u64, pos: f64, line: i64) -> f64 {
    (pos - line as f64) / (2.0 * n_two_thirds(n))
}

/// Unscaled position of scaled `x` on `line`.
pub fn unscaled_x(n: u64, x: f64, line: i64) -> f64 {
    line as f64 + 2.0 * n_two_thirds(n) * x
}

/// `t12^{-1} ((t2 - t) x + (t - t1) y)`.
pub fn interpolant(x: f64, t1: f64, y: f64, t2: f64, t: f64) -> f64 {
    ((t2 - t) * x + (t - t1) * y) / (t2 - t1)
}

/// A scaled location snapped to the environment grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapped {
    /// Requested scaled coordinate.
    pub requested: f64,
    /// Scaled coordinate actually used.
    pub x: f64,
    pub g: usize,
    pub line: i64,
}

/// Snaps scaled `x` on `line` to the nearest grid point (ties toward `-inf`).
pub fn snap<T: Scalar>(env: &Environment<T>, n: u64, x: f64, line: i64) -> Result<Snapped> {
    let pos = unscaled_x(n, x, line);
    let g = env.grid().snap(pos).ok_or_else(|| {
        LppError::Domain(format!(
            "scaled x = {x} on line {line} (unscaled {pos}) outside grid [{}, {}]",
            env.grid().x0,
            env.grid().right_edge()
        ))
    })?;
    Ok(Snapped { requested: x, x: scaled_x(n, env.grid().position(g), line), g, line })
}

fn snap_tuple<T: Scalar>(env: &Environment<T>, n: u64, xs: &[f64], line: i64) -> Result<Vec<Snapped>> {
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return param(format!("tuple {xs:?} is not nondecreasing"));
    }
    xs.iter().map(|&x| snap(env, n, x, line)).collect()
}

/// `2^{-1/2} n^{-1/3} (energy - k (j - i) - sum (Y_p - X_p))`.
pub fn centered_weight<T: Scalar>(n: u64, energy: T, k: usize, lines: i64, displacement: f64) -> T {
    let c = k as f64 * lines as f64 + displacement;
    T::from_f64_lossy(weight_factor(n)) * (energy - T::from_f64_lossy(c))
}

/// Weight of the zigzag whose unscaled preimage is `s`.
pub fn zigzag_weight<T: Scalar>(env: &Environment<T>, n: u64, s: &Staircase) -> Result<T> {
    if n == 0 {
        return param("n must be at least 1");
    }
    let e = lpp::staircase_energy(env, s)?;
    let grid = env.grid();
    let disp = grid.position(s.end().g) - grid.position(s.start().g);
    Ok(centered_weight(n, e, 1, s.end().line - s.start().line, disp))
}

/// An n-zigzag: a staircase with its cached weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zigzag<T> {
    pub n: u64,
    pub staircase: Staircase,
    pub weight: T,
}

impl<T: Scalar> Zigzag<T> {
    pub fn new(env: &Environment<T>, n: u64, staircase: Staircase) -> Result<Self> {
        let weight = zigzag_weight(env, n, &staircase)?;
        Ok(Zigzag { n, staircase, weight })
    }

    /// Scaled start point.
    pub fn start<U: Scalar>(&self, env: &Environment<U>) -> ScaledPoint {
        let s = self.staircase.start();
        ScaledPoint::new(scaled_x(self.n, env.grid().position(s.g), s.line), s.line as f64 / self.n as f64)
    }

    /// Scaled end point.
    pub fn end<U: Scalar>(&self, env: &Environment<U>) -> ScaledPoint {
        let s = self.staircase.end();
        ScaledPoint::new(scaled_x(self.n, env.grid().position(s.g), s.line), s.line as f64 / self.n as f64)
    }

    /// Scaled horizontal interval at time `line / n`.
    pub fn interval_at<U: Scalar>(&self, env: &Environment<U>, line: i64) -> Result<(f64, f64)> {
        if !self.staircase.contains_line(line) {
            return domain(format!("line {line} outside the zigzag's lifetime"));
        }
        let (a, b) = self.staircase.interval(line);
        let g = env.grid();
        Ok((scaled_x(self.n, g.position(a), line), scaled_x(self.n, g.position(b), line)))
    }
}

fn check_lines<T: Scalar>(env: &Environment<T>, triple: &CompatibleTriple) -> Result<()> {
    if !env.has_line(triple.line1()) || !env.has_line(triple.line2()) {
        return domain(format!(
            "lines {}..={} outside environment [{}, {}]",
            triple.line1(),
            triple.line2(),
            env.line_min(),
            env.line_max()
        ));
    }
    Ok(())
}

/// Snapped endpoints of a single polymer, checked for feasibility.
pub fn polymer_endpoints<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    x: f64,
    y: f64,
) -> Result<(Snapped, Snapped)> {
    check_lines(env, triple)?;
    let a = snap(env, triple.n(), x, triple.line1())?;
    let b = snap(env, triple.n(), y, triple.line2())?;
    if b.g < a.g {
        return infeasible(format!(
            "end ({y}, {}) is not northeast of start ({x}, {}) in unscaled terms",
            triple.t2(),
            triple.t1()
        ));
    }
    Ok((a, b))
}

/// `Wgt_{n;(x,t1)}^{(y,t2)}`.
pub fn polymer_weight<T: Scalar>(env: &Environment<T>, triple: &CompatibleTriple, x: f64, y: f64) -> Result<T> {
    let (a, b) = polymer_endpoints(env, triple, x, y)?;
    let m = lpp::last_passage(env, LatticePoint::new(a.g, a.line), LatticePoint::new(b.g, b.line))?;
    let disp = env.grid().position(b.g) - env.grid().position(a.g);
    Ok(centered_weight(triple.n(), m, 1, triple.lines(), disp))
}

/// The polymer from `(x, t1)` to `(y, t2)` as a zigzag, ties broken by `tie`.
pub fn polymer<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    x: f64,
    y: f64,
    tie: TieRule,
) -> Result<Zigzag<T>> {
    let (a, b) = polymer_endpoints(env, triple, x, y)?;
    let s = lpp::geodesic(env, LatticePoint::new(a.g, a.line), LatticePoint::new(b.g, b.line), tie)?;
    Zigzag::new(env, triple.n(), s)
}

/// Weights `Wgt_{n;(x,t1)}^{(y,t2)}` from one start to many ends, sharing one sweep.
#[derive(Debug, Clone)]
pub struct WeightProfile<T> {
    n: u64,
    triple: CompatibleTriple,
    start: Snapped,
    table: PassageTable<T>,
    start_pos: f64,
}

impl<T: Scalar> WeightProfile<T> {
    /// Sweep from `(x, t1)` covering end locations up to scaled `y_max` at `t2`.
    pub fn new(env: &Environment<T>, triple: &CompatibleTriple, x: f64, y_max: f64) -> Result<Self> {
        check_lines(env, triple)?;
        let start = snap(env, triple.n(), x, triple.line1())?;
        let hi_pos = unscaled_x(triple.n(), y_max, triple.line2());
        let hi = env
            .grid()
            .snap(hi_pos)
            .unwrap_or(if hi_pos > env.grid().right_edge() { env.grid().num_cells } else { 0 });
        if hi < start.g {
            return infeasible(format!("no feasible end location up to {y_max}"));
        }
        let table = PassageTable::compute(env, LatticePoint::new(start.g, start.line), triple.line2(), hi)?;
        Ok(WeightProfile { n: triple.n(), triple: *triple, start, table, start_pos: env.grid().position(start.g) })
    }

    pub fn start(&self) -> Snapped {
        self.start
    }

    pub fn table(&self) -> &PassageTable<T> {
        &self.table
    }

    /// Weight to the grid index `g` on the final line.
    pub fn weight_at_index(&self, env: &Environment<T>, g: usize) -> Result<T> {
        let m = self.table.value(g)?;
        Ok(centered_weight(self.n, m, 1, self.triple.lines(), env.grid().position(g) - self.start_pos))
    }

    /// Weight to scaled `y` at `t2`, with the snapped location.
    pub fn weight(&self, env: &Environment<T>, y: f64) -> Result<(T, Snapped)> {
        let b = snap(env, self.n, y, self.triple.line2())?;
        if b.g < self.start.g {
            return infeasible(format!("end {y} not northeast of the start"));
        }
        Ok((self.weight_at_index(env, b.g)?, b))
    }

    /// Polymer to grid index `g` on the final line.
    pub fn polymer_to(&self, env: &Environment<T>, g: usize, tie: TieRule) -> Result<Zigzag<T>> {
        let s = self.table.geodesic_to(g, self.triple.line2(), tie)?;
        Zigzag::new(env, self.n, s)
    }
}

fn multi_weight_lines<T: Scalar>(
    env: &Environment<T>,
    n: u64,
    k: usize,
    i: i64,
    xs: &[usize],
    j: i64,
    ys: &[usize],
) -> Result<T> {
    let m = if xs.len() == k {
        lpp::multi_last_passage(env, xs, i, ys, j)?
    } else {
        return param("tuple length mismatch");
    };
    let g = env.grid();
    let disp: f64 = xs.iter().zip(ys).map(|(&a, &b)| g.position(b) - g.position(a)).sum();
    Ok(centered_weight(n, m, k, j - i, disp))
}

fn check_k(k: usize, xs: &[f64], ys: &[f64]) -> Result<()> {
    if k == 0 || xs.len() != k || ys.len() != k {
        return param(format!("expected {k} start and end locations, got {} and {}", xs.len(), ys.len()));
    }
    Ok(())
}

/// `Wgt_{n,k;(x̄,t1)}^{(ȳ,t2)}`.
pub fn multi_polymer_weight<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    k: usize,
    xs: &[f64],
    ys: &[f64],
) -> Result<T> {
    check_k(k, xs, ys)?;
    check_lines(env, triple)?;
    let a = snap_tuple(env, triple.n(), xs, triple.line1())?;
    let b = snap_tuple(env, triple.n(), ys, triple.line2())?;
    let ga: Vec<usize> = a.iter().map(|s| s.g).collect();
    let gb: Vec<usize> = b.iter().map(|s| s.g).collect();
    multi_weight_lines(env, triple.n(), k, triple.line1(), &ga, triple.line2(), &gb)
}

fn check_proper(triple: &CompatibleTriple) -> Result<()> {
    if triple.lines() < 2 {
        return infeasible(format!(
            "proper weights need n t12 >= 2, got {}",
            triple.lines()
        ));
    }
    Ok(())
}

/// Forward proper weight from `(x, t1)` to the ends `ū` at `t2`: the k-watermelon
/// weight to `ū + 2^{-1} n^{-2/3}` at time `t2 - 1/n`.
pub fn proper_multi_weight_forward<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    k: usize,
    x: f64,
    us: &[f64],
) -> Result<T> {
    check_proper(triple)?;
    check_k(k, &vec![x; k], us)?;
    check_lines(env, triple)?;
    let a = snap(env, triple.n(), x, triple.line1())?;
    let b = snap_tuple(env, triple.n(), us, triple.line2())?;
    let gb: Vec<usize> = b.iter().map(|s| s.g).collect();
    multi_weight_lines(env, triple.n(), k, triple.line1(), &vec![a.g; k], triple.line2() - 1, &gb)
}

/// Backward proper weight from the starts `v̄` at `t1` to `(y, t2)`: the
/// k-watermelon weight from `v̄ - 2^{-1} n^{-2/3}` at time `t1 + 1/n`.
pub fn proper_multi_weight_backward<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    k: usize,
    vs: &[f64],
    y: f64,
) -> Result<T> {
    check_proper(triple)?;
    check_k(k, vs, &vec![y; k])?;
    check_lines(env, triple)?;
    let a = snap_tuple(env, triple.n(), vs, triple.line1())?;
    let b = snap(env, triple.n(), y, triple.line2())?;
    let ga: Vec<usize> = a.iter().map(|s| s.g).collect();
    multi_weight_lines(env, triple.n(), k, triple.line1() + 1, &ga, triple.line2(), &vec![b.g; k])
}

/// Forward proper weights from one start to many end tuples, sharing one sweep.
/// Ends are confined to grid indices at most `hi`.
#[derive(Debug, Clone)]
pub struct ProperForwardTable<T> {
    triple: CompatibleTriple,
    start: Snapped,
    table: MultiTable<T>,
    start_pos: f64,
}

impl<T: Scalar> ProperForwardTable<T> {
    pub fn new(env: &Environment<T>, triple: &CompatibleTriple, k: usize, x: f64, hi: usize) -> Result<Self> {
        check_proper(triple)?;
        check_lines(env, triple)?;
        let start = snap(env, triple.n(), x, triple.line1())?;
        if hi < start.g {
            return infeasible("end window left of the start");
        }
        let table = MultiTable::compute(env, triple.line1(), &vec![start.g; k], triple.line2() - 1, &vec![hi; k], false)?;
        Ok(ProperForwardTable { triple: *triple, start, table, start_pos: env.grid().position(start.g) })
    }

    pub fn start(&self) -> Snapped {
        self.start
    }

    /// Proper weight to the end grid indices `gs`.
    pub fn weight(&self, env: &Environment<T>, gs: &[usize]) -> Result<T> {
        let m = self.table.value(gs)?;
        let disp: f64 = gs.iter().map(|&g| env.grid().position(g) - self.start_pos).sum();
        Ok(centered_weight(self.triple.n(), m, gs.len(), self.triple.lines() - 1, disp))
    }
}

/// `ρ(t)`: the endpoint of the polymer's horizontal interval at time `t`
/// farthest from the interpolating segment, ties resolved toward the side
/// `ρ(t) >= ℓ(t)`. At `t = t1` and `t = t2` the polymer's own endpoints are
/// returned.
pub fn polymer_at_time<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    x: f64,
    y: f64,
    t: f64,
    tie: TieRule,
) -> Result<f64> {
    let line = triple.line_at(t)?;
    let z = polymer(env, triple, x, y, tie)?;
    zigzag_at_time(env, &z, line)
}

/// `ρ(t)` for a given zigzag at `t = line / n`.
pub fn zigzag_at_time<T: Scalar, U: Scalar>(env: &Environment<U>, z: &Zigzag<T>, line: i64) -> Result<f64> {
    let s = z.start(env);
    let e = z.end(env);
    if line == z.staircase.start().line {
        return Ok(s.x);
    }
    if line == z.staircase.end().line {
        return Ok(e.x);
    }
    let (a, b) = z.interval_at(env, line)?;
    let t = line as f64 / z.n as f64;
    let l = interpolant(s.x, s.t, e.x, e.t, t);
    Ok(farthest(a, b, l))
}

/// Endpoint of `[a, b]` farthest from `l`; ties go to the one `>= l`.
pub fn farthest(a: f64, b: f64, l: f64) -> f64 {
    let (da, db) = ((a - l).abs(), (b - l).abs());
    if da > db {
        a
    } else if db > da {
        b
    } else if b >= l {
        b
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::GridSpec;

    #[test]
    fn scaling_map() {
        let p = scale_point(1, (2.0, 1.0));
        assert_eq!((p.x, p.t), (0.5, 1.0));
        for v in [(3.25, 2.0), (-1.5, 7.0), (0.125, -3.0)] {
            let q = unscale_point(8, scale_point(8, v));
            assert_eq!(q, v);
        }
        assert_eq!(scale_point(5, (1.0, 3.0)).t, scale_point(5, (9.0, 3.0)).t);
    }

    #[test]
    fn interpolant_values() {
        assert_eq!(interpolant(1.0, 0.0, 3.0, 2.0, 0.0), 1.0);
        assert_eq!(interpolant(1.0, 0.0, 3.0, 2.0, 1.0), 2.0);
        assert_eq!(interpolant(4.0, 0.5, 4.0, 1.5, 0.9), 4.0);
    }

    #[test]
    fn triple_validation() {
        assert!(CompatibleTriple::new(4, 0.25, 1.0).is_ok());
        assert!(CompatibleTriple::new(4, 0.1, 1.0).is_err());
        assert!(CompatibleTriple::new(4, 1.0, 1.0).is_err());
        let t = CompatibleTriple::new(10, 0.2, 0.7).unwrap();
        assert_eq!(t.lines(), 5);
        assert_eq!(t.line_at(0.5).unwrap(), 5);
        assert!(t.line_at(0.55).is_err());
        assert!(t.line_at(0.8).is_err());
    }

    #[test]
    fn zero_env_weights() {
        let g = GridSpec::new(-10.0, 1.0, 60, 0).unwrap();
        let env = Environment::<f64>::zero(0, 8, g).unwrap();
        let tr = CompatibleTriple::new(8, 0.0, 1.0).unwrap();
        let w = polymer_weight(&env, &tr, 0.0, 0.5).unwrap();
        let want = -weight_factor(8) * (2.0 * 8.0 + 2.0 * 4.0 * 0.5);
        assert!((w - want).abs() < 1e-12);
        let w2 = multi_polymer_weight(&env, &tr, 2, &[0.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((w2 - 2.0 * want).abs() < 1e-12);
    }

    #[test]
    fn farthest_rule() {
        assert_eq!(farthest(0.0, 1.0, 0.2), 1.0);
        assert_eq!(farthest(0.0, 1.0, 0.8), 0.0);
        assert_eq!(farthest(0.0, 1.0, 0.5), 1.0);
        assert_eq!(farthest(-1.0, 1.0, 0.0), 1.0);
    }
}
