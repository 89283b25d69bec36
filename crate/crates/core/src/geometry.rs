//! Order relations and path surgery. All relations are evaluated on the
//! unscaled grid representation.

use crate::environment::Environment;
use crate::error::{param, LppError, Result};
use crate::lpp::{self, LatticePoint, Staircase, TieRule};
use crate::scaled::{self, CompatibleTriple, Zigzag};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Strict,
    Weak,
}

/// Outcome of an order test with the first failing `(line, grid index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderWitness {
    pub relation: Relation,
    pub holds: bool,
    pub violation: Option<(i64, usize)>,
}

impl OrderWitness {
    fn pass(relation: Relation) -> Self {
        OrderWitness { relation, holds: true, violation: None }
    }
    fn fail(relation: Relation, line: i64, g: usize) -> Self {
        OrderWitness { relation, holds: false, violation: Some((line, g)) }
    }
}

fn same_lifetime(s1: &Staircase, s2: &Staircase) -> Result<()> {
    if s1.start().line != s2.start().line || s1.end().line != s2.end().line {
        return param(format!(
            "lifetimes differ: {:?} vs {:?}",
            s1.line_range(),
            s2.line_range()
        ));
    }
    Ok(())
}

/// `s1 ≺ s2`: ordered endpoints and no shared horizontal segment of positive length.
pub fn precedes_strict(s1: &Staircase, s2: &Staircase) -> Result<OrderWitness> {
    same_lifetime(s1, s2)?;
    if s1.start().g > s2.start().g {
        return Ok(OrderWitness::fail(Relation::Strict, s2.start().line, s2.start().g));
    }
    for m in s1.line_range() {
        let (a1, b1) = s1.interval(m);
        let (a2, b2) = s2.interval(m);
        let lo = a1.max(a2);
        if b1.min(b2) > lo {
            return Ok(OrderWitness::fail(Relation::Strict, m, lo));
        }
    }
    if s1.end().g > s2.end().g {
        return Ok(OrderWitness::fail(Relation::Strict, s2.end().line, s2.end().g));
    }
    Ok(OrderWitness::pass(Relation::Strict))
}

/// `s1 ⪯ s2`: `s2` lies in the union of closed rightward rays from `s1`.
pub fn precedes_weak(s1: &Staircase, s2: &Staircase) -> Result<OrderWitness> {
    same_lifetime(s1, s2)?;
    for m in s1.line_range() {
        if s2.entry(m) < s1.entry(m) {
            return Ok(OrderWitness::fail(Relation::Weak, m, s2.entry(m)));
        }
    }
    Ok(OrderWitness::pass(Relation::Weak))
}

fn boundary(s: &Staircase) -> Vec<usize> {
    let mut v = Vec::with_capacity(s.jumps().len() + 2);
    v.push(s.start().g);
    v.extend_from_slice(s.jumps());
    v.push(s.end().g);
    v
}

fn from_boundary(i: i64, j: i64, b: &[usize]) -> Result<Staircase> {
    Staircase::new(LatticePoint::new(b[0], i), LatticePoint::new(b[b.len() - 1], j), b[1..b.len() - 1].to_vec())
}

fn combine(s1: &Staircase, s2: &Staircase, f: fn(usize, usize) -> usize) -> Result<Staircase> {
    same_lifetime(s1, s2)?;
    let (b1, b2) = (boundary(s1), boundary(s2));
    let b: Vec<usize> = b1.iter().zip(&b2).map(|(&a, &b)| f(a, b)).collect();
    from_boundary(s1.start().line, s1.end().line, &b)
}

/// Pointwise leftmost path through the union of the two.
pub fn staircase_meet(s1: &Staircase, s2: &Staircase) -> Result<Staircase> {
    combine(s1, s2, usize::min)
}

/// Pointwise rightmost path through the union of the two.
pub fn staircase_join(s1: &Staircase, s2: &Staircase) -> Result<Staircase> {
    combine(s1, s2, usize::max)
}

/// Splits the leftmost polymer from `(x, t1)` to `(y, t2)` at `(ρ(t), t)`.
pub fn split_polymer<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    x: f64,
    y: f64,
    t: f64,
) -> Result<(Zigzag<T>, Zigzag<T>)> {
    let line = triple.line_at(t)?;
    if line == triple.line1() || line == triple.line2() {
        return param(format!("split time {t} must lie strictly inside the lifetime"));
    }
    let z = scaled::polymer(env, triple, x, y, TieRule::Leftmost)?;
    split_zigzag(env, &z, line)
}

/// Splits a zigzag at its `ρ` point on `line`.
pub fn split_zigzag<T: Scalar>(env: &Environment<T>, z: &Zigzag<T>, line: i64) -> Result<(Zigzag<T>, Zigzag<T>)> {
    let rho = scaled::zigzag_at_time(env, z, line)?;
    let (a, b) = z.staircase.interval(line);
    let xa = scaled::scaled_x(z.n, env.grid().position(a), line);
    let g = if rho == xa { a } else { b };
    let (s1, s2) = z.staircase.split_at(line, g)?;
    Ok((Zigzag::new(env, z.n, s1)?, Zigzag::new(env, z.n, s2)?))
}

/// Union of two zigzags with the first ending where the second starts.
pub fn concatenate<T: Scalar>(z1: &Zigzag<T>, z2: &Zigzag<T>) -> Result<Zigzag<T>> {
    if z1.n != z2.n {
        return param("zigzags use different scaling parameters");
    }
    let staircase = z1.staircase.concat(&z2.staircase).map_err(|e| LppError::Parameter(e.to_string()))?;
    Ok(Zigzag { n: z1.n, staircase, weight: z1.weight + z2.weight })
}

/// Result of comparing two multi-geodesics component by component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingWitness {
    pub holds: bool,
    /// First component failing `lower_p ⪯ upper_p`, with its witness.
    pub failure: Option<(usize, OrderWitness)>,
}

/// Computes the leftmost multi-geodesics `u → x` and `v → y` (lines `i → j`)
/// and checks `lower_p ⪯ upper_p` for every component.
pub fn monotone_coupling_check<T: Scalar>(
    env: &Environment<T>,
    k: usize,
    i: i64,
    j: i64,
    lower: (&[usize], &[usize]),
    upper: (&[usize], &[usize]),
) -> Result<CouplingWitness> {
    for t in [lower.0, lower.1, upper.0, upper.1] {
        if t.len() != k {
            return param(format!("expected tuples of length {k}"));
        }
    }
    if lower.0.iter().zip(upper.0).any(|(a, b)| a > b) || lower.1.iter().zip(upper.1).any(|(a, b)| a > b) {
        return param("endpoints are not componentwise ordered");
    }
    let lo = lpp::multi_geodesic(env, lower.0, i, lower.1, j, TieRule::Leftmost)?;
    let hi = lpp::multi_geodesic(env, upper.0, i, upper.1, j, TieRule::Leftmost)?;
    for (p, (a, b)) in lo.paths().iter().zip(hi.paths()).enumerate() {
        let w = precedes_weak(a, b)?;
        if !w.holds {
            return Ok(CouplingWitness { holds: false, failure: Some((p, w)) });
        }
    }
    Ok(CouplingWitness { holds: true, failure: None })
}

/// The diagonal construction: component `i` of the watermelon to `u_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalBouquet<T> {
    pub components: Vec<Zigzag<T>>,
    /// `components[i] ≺ components[i+1]` for each consecutive pair.
    pub witnesses: Vec<OrderWitness>,
    pub separate: bool,
    /// Sum of component weights.
    pub total_weight: T,
    /// `Wgt_{n,k;(x 1, t1)}^{(ū, t2)}`.
    pub bouquet_weight: T,
}

pub fn diagonal_bouquet<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    k: usize,
    x: f64,
    us: &[f64],
) -> Result<DiagonalBouquet<T>> {
    if k == 0 || us.len() != k {
        return param(format!("expected {k} end locations"));
    }
    let n = triple.n();
    let a = scaled::snap(env, n, x, triple.line1())?;
    let ends: Vec<scaled::Snapped> = us.iter().map(|&u| scaled::snap(env, n, u, triple.line2())).collect::<Result<_>>()?;
    if ends.windows(2).any(|w| w[1].g < w[0].g) {
        return param("end locations are not nondecreasing");
    }
    let mut components = Vec::with_capacity(k);
    for (i, e) in ends.iter().enumerate() {
        let mg = lpp::multi_geodesic(env, &vec![a.g; k], triple.line1(), &vec![e.g; k], triple.line2(), TieRule::Leftmost)?;
        components.push(Zigzag::new(env, n, mg.paths()[i].clone())?);
    }
    let mut witnesses = Vec::with_capacity(k.saturating_sub(1));
    for w in components.windows(2) {
        witnesses.push(precedes_strict(&w[0].staircase, &w[1].staircase)?);
    }
    let separate = witnesses.iter().all(|w| w.holds);
    let total_weight = components.iter().fold(T::zero(), |acc, z| acc + z.weight);
    let gs: Vec<f64> = ends.iter().map(|e| e.x).collect();
    let bouquet_weight = scaled::multi_polymer_weight(env, triple, k, &vec![a.x; k], &gs)?;
    Ok(DiagonalBouquet { components, witnesses, separate, total_weight, bouquet_weight })
}

/// Component weights of the leftmost k-watermelon from `(x, t1)` to `(y, t2)`
/// together with the ensemble curves at `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatermelonComponents<T> {
    pub weights: Vec<T>,
    /// Forward ensemble curves `L(1..=k, y)`.
    pub curves: Vec<T>,
}

impl<T: Scalar> WatermelonComponents<T> {
    /// Interval `[L(1) - sum_{j>=2} (L(1) - L(j)), L(1)]` containing every component weight.
    pub fn bounds(&self) -> (T, T) {
        let l1 = self.curves[0];
        let spread = self.curves[1..].iter().fold(T::zero(), |acc, &l| acc + (l1 - l));
        (l1 - spread, l1)
    }

    /// Largest excursion of a component weight outside `bounds()`.
    pub fn bound_violation(&self) -> T {
        let (lo, hi) = self.bounds();
        self.weights
            .iter()
            .fold(T::zero(), |acc, &w| acc.max(lo - w).max(w - hi))
    }
}

pub fn watermelon_components<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    k: usize,
    x: f64,
    y: f64,
) -> Result<WatermelonComponents<T>> {
    let n = triple.n();
    let a = scaled::snap(env, n, x, triple.line1())?;
    let b = scaled::snap(env, n, y, triple.line2())?;
    let mg = lpp::multi_geodesic(env, &vec![a.g; k], triple.line1(), &vec![b.g; k], triple.line2(), TieRule::Leftmost)?;
    let weights = mg
        .paths()
        .iter()
        .map(|p| scaled::zigzag_weight(env, n, p))
        .collect::<Result<Vec<T>>>()?;
    let ens = crate::ensembles::forward_ensemble(env, triple, a.x, k, &[b.x])?;
    let curves = (1..=k).map(|i| ens.value(i, 0)).collect();
    Ok(WatermelonComponents { weights, curves })
}
