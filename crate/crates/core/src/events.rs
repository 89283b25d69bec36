//! Indicators of the polymer events.
//!
//! Intervals are closed and discretized by `endpoint_grid` equally spaced
//! points (snapped to the environment grid, duplicates removed).

use crate::environment::Environment;
use crate::error::{param, LppError, Result};
use crate::lpp::{self, MultiTable, PassageTable, Staircase, TieRule};
use crate::scaled::{self, CompatibleTriple, Snapped, WeightProfile};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::ops::Bound;

/// Default number of discretization points per interval.
pub const DEFAULT_ENDPOINT_GRID: usize = 5;
/// Default relative tolerance of the disjointness certificate.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Closed scaled interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub fn new(lo: f64, hi: f64) -> Self {
        Span { lo, hi }
    }
    pub fn point(x: f64) -> Self {
        Span { lo: x, hi: x }
    }
    /// `[c - h, c + h]`.
    pub fn centered(c: f64, h: f64) -> Self {
        Span { lo: c - h, hi: c + h }
    }
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Snapped discretization of `span` on `line`, sorted by grid index.
pub fn discretize<T: Scalar>(
    env: &Environment<T>,
    n: u64,
    span: Span,
    line: i64,
    points: usize,
) -> Result<Vec<Snapped>> {
    if !(span.lo <= span.hi) {
        return param(format!("empty interval [{}, {}]", span.lo, span.hi));
    }
    if points == 0 {
        return param("endpoint grid needs at least one point");
    }
    let raw: Vec<f64> = if span.lo == span.hi || points == 1 {
        vec![span.lo]
    } else {
        (0..points).map(|q| span.lo + span.len() * q as f64 / (points - 1) as f64).collect()
    };
    let mut out: Vec<Snapped> = Vec::with_capacity(raw.len());
    for x in raw {
        let s = scaled::snap(env, n, x, line)?;
        if out.last().map_or(true, |l| l.g != s.g) {
            out.push(s);
        }
    }
    Ok(out)
}

/// How `max_disjoint` searches for certificates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateSearch {
    /// Every tuple pair is tested against `M^k >= sum M^1 - tol`.
    Exhaustive,
    /// A tuple pair is certified when the leftmost geodesics of the first
    /// `k - 1` paths and the rightmost geodesic of the last are separate. Sound for every `k`;
    /// complete for `k = 2` up to ties within the tolerance, which it ignores.
    #[default]
    GeodesicPruned,
}

/// Largest certified count and the lexicographically minimal certificate for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjointOutcome {
    pub k: usize,
    /// Grid indices `(ū, v̄)` certifying `k` when `k >= 2`.
    pub certificate: Option<(Vec<usize>, Vec<usize>)>,
}

fn tuples(points: &[usize], k: usize, f: &mut dyn FnMut(&[usize]) -> bool) {
    fn rec(points: &[usize], from: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for q in from..points.len() {
            cur.push(points[q]);
            let stop = rec(points, q, k, cur, f);
            cur.pop();
            if stop {
                return true;
            }
        }
        false
    }
    let mut cur = Vec::with_capacity(k);
    rec(points, 0, k, &mut cur, f);
}

fn ordered_apart(left: &Staircase, right: &Staircase) -> bool {
    left.line_range().all(|m| left.exit(m) <= right.entry(m))
}

/// Precomputed passage data for repeated certificate searches between two
/// discretized intervals.
pub struct DisjointSearch<'a, T> {
    env: &'a Environment<T>,
    triple: CompatibleTriple,
    us: Vec<usize>,
    vs: Vec<usize>,
    hi: usize,
    tables: Vec<PassageTable<T>>,
    extremes: Option<HashMap<(usize, usize), (Staircase, Staircase)>>,
    search: CertificateSearch,
}

impl<'a, T: Scalar> DisjointSearch<'a, T> {
    pub fn new(
        env: &'a Environment<T>,
        triple: &CompatibleTriple,
        i_span: Span,
        j_span: Span,
        endpoint_grid: usize,
        search: CertificateSearch,
    ) -> Result<Self> {
        let n = triple.n();
        let us: Vec<usize> = discretize(env, n, i_span, triple.line1(), endpoint_grid)?.iter().map(|s| s.g).collect();
        let vs: Vec<usize> = discretize(env, n, j_span, triple.line2(), endpoint_grid)?.iter().map(|s| s.g).collect();
        let hi = *vs.last().unwrap();
        if hi < us[0] {
            return Err(LppError::Infeasible("no polymer from I to J".into()));
        }
        let us: Vec<usize> = us.into_iter().filter(|&u| u <= hi).collect();
        let tables = us
            .iter()
            .map(|&u| PassageTable::compute(env, lpp::LatticePoint::new(u, triple.line1()), triple.line2(), hi))
            .collect::<Result<Vec<_>>>()?;
        let extremes = if search == CertificateSearch::GeodesicPruned {
            let mut m = HashMap::new();
            for (qi, &u) in us.iter().enumerate() {
                for &v in vs.iter().filter(|&&v| v >= u) {
                    let l = tables[qi].geodesic_to(v, triple.line2(), TieRule::Leftmost)?;
                    let r = tables[qi].geodesic_to(v, triple.line2(), TieRule::Rightmost)?;
                    m.insert((u, v), (l, r));
                }
            }
            Some(m)
        } else {
            None
        };
        Ok(DisjointSearch { env, triple: *triple, us, vs, hi, tables, extremes, search })
    }

    /// Grid indices of the discretized start and end sets.
    pub fn endpoints(&self) -> (&[usize], &[usize]) {
        (&self.us, &self.vs)
    }

    /// `M^1` between grid indices on the two end lines.
    pub fn single(&self, u: usize, v: usize) -> Option<T> {
        let qi = self.us.iter().position(|&x| x == u)?;
        if v < u {
            return None;
        }
        self.tables[qi].value(v).ok()
    }

    fn certifies(&self, us: &[usize], vs: &[usize], mk: T, tol: f64) -> bool {
        let mut sum = T::zero();
        for (&u, &v) in us.iter().zip(vs) {
            match self.single(u, v) {
                Some(m) => sum = sum + m,
                None => return false,
            }
        }
        let slack = tol * (1.0 + mk.to_f64_lossy().abs());
        mk.to_f64_lossy() >= sum.to_f64_lossy() - slack
    }

    /// Lexicographically minimal certificate `(ū, v̄)` for `k` paths.
    pub fn certificate(&self, k: usize, tol: f64) -> Result<Option<(Vec<usize>, Vec<usize>)>> {
        if k == 0 {
            return param("k must be at least 1");
        }
        if !(tol >= 0.0) {
            return param("tolerance must be nonnegative");
        }
        let mut found: Option<(Vec<usize>, Vec<usize>)> = None;
        let mut err: Option<LppError> = None;
        let (env, triple) = (self.env, self.triple);
        match (&self.extremes, self.search) {
            (Some(ext), CertificateSearch::GeodesicPruned) => {
                tuples(&self.us, k, &mut |ut| {
                    tuples(&self.vs, k, &mut |vt| {
                        if vt.iter().zip(ut).any(|(v, u)| v < u) {
                            return false;
                        }
                        // witness: leftmost geodesics, except the last path rightmost
                        let pick = |p: usize| {
                            let (l, r) = &ext[&(ut[p], vt[p])];
                            if p + 1 == k {
                                r
                            } else {
                                l
                            }
                        };
                        for p in 0..k - 1 {
                            if !ordered_apart(pick(p), pick(p + 1)) {
                                return false;
                            }
                        }
                        // the extreme geodesics themselves form a separate
                        // system attaining the sum
                        found = Some((ut.to_vec(), vt.to_vec()));
                        true
                    });
                    found.is_some() || err.is_some()
                });
            }
            _ => {
                tuples(&self.us, k, &mut |ut| {
                    let tab = match MultiTable::compute(env, triple.line1(), ut, triple.line2(), &vec![self.hi; k], false) {
                        Ok(t) => t,
                        Err(LppError::Infeasible(_)) => return false,
                        Err(e) => {
                            err = Some(e);
                            return true;
                        }
                    };
                    tuples(&self.vs, k, &mut |vt| {
                        if vt.iter().zip(ut).any(|(v, u)| v < u) {
                            return false;
                        }
                        if let Ok(mk) = tab.value(vt) {
                            if self.certifies(ut, vt, mk, tol) {
                                found = Some((ut.to_vec(), vt.to_vec()));
                                return true;
                            }
                        }
                        false
                    });
                    found.is_some() || err.is_some()
                });
            }
        }
        match err {
            Some(e) => Err(e),
            None => Ok(found),
        }
    }

    /// Largest certified `k <= k_max` with its certificate.
    pub fn max_disjoint(&self, k_max: usize, tol: f64) -> Result<DisjointOutcome> {
        if k_max == 0 {
            return param("k_max must be at least 1");
        }
        let mut best = DisjointOutcome { k: 1, certificate: None };
        for k in 2..=k_max {
            match self.certificate(k, tol)? {
                Some(c) => best = DisjointOutcome { k, certificate: Some(c) },
                None => break,
            }
        }
        Ok(best)
    }
}

/// Maximal number `k <= k_max` of horizontally separate polymers from `I` at
/// `t1` to `J` at `t2`, certified on the discretized endpoint sets.
pub fn max_disjoint<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    i_span: Span,
    j_span: Span,
    k_max: usize,
    endpoint_grid: usize,
    tol: f64,
    search: CertificateSearch,
) -> Result<DisjointOutcome> {
    if k_max == 0 {
        return param("k_max must be at least 1");
    }
    if !(tol >= 0.0) {
        return param("tolerance must be nonnegative");
    }
    let s = DisjointSearch::new(env, triple, i_span, j_span, endpoint_grid, search)?;
    s.max_disjoint(k_max, tol)
}

/// `(k Wgt - Wgt_{n,k}) / t12^{1/3}` for the watermelon `x 1 → y 1`;
/// `NearPoly(η)` holds iff this is at most `η`.
pub fn near_poly_gap<T: Scalar>(env: &Environment<T>, triple: &CompatibleTriple, k: usize, x: f64, y: f64) -> Result<f64> {
    if k == 0 {
        return param("k must be at least 1");
    }
    if k == 1 {
        scaled::polymer_weight(env, triple, x, y)?;
        return Ok(0.0);
    }
    let w1 = scaled::polymer_weight(env, triple, x, y)?.to_f64_lossy();
    let wk = scaled::multi_polymer_weight(env, triple, k, &vec![x; k], &vec![y; k])?.to_f64_lossy();
    Ok((k as f64 * w1 - wk) / triple.t12().cbrt())
}

/// `Wgt_{n,k}(x 1 → y 1) >= k Wgt(x → y) - t12^{1/3} η`.
pub fn near_poly<T: Scalar>(env: &Environment<T>, triple: &CompatibleTriple, k: usize, x: f64, y: f64, eta: f64) -> Result<bool> {
    if !(eta >= 0.0) {
        return param("eta must be nonnegative");
    }
    Ok(near_poly_gap(env, triple, k, x, y)? <= eta)
}

fn mesh_line(triple: &CompatibleTriple, a: f64) -> Result<i64> {
    if !(0.0..=1.0).contains(&a) {
        return param(format!("a = {a} outside [0, 1]"));
    }
    let v = a * triple.lines() as f64;
    let r = v.round();
    if (v - r).abs() > 1e-9 * r.abs().max(1.0) {
        return param(format!("a n t12 = {v} is not an integer"));
    }
    Ok(triple.line1() + r as i64)
}

/// Normalized deviation `X = t12^{-2/3} (a ∧ (1-a))^{-2/3} (ρ(t) - ℓ(t))` at
/// `t = (1-a) t1 + a t2`, for the polymer selected by `tie`.
pub fn deviation_stat<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    x: f64,
    y: f64,
    a: f64,
    tie: TieRule,
) -> Result<f64> {
    let line = mesh_line(triple, a)?;
    let m = a.min(1.0 - a);
    if m <= 0.0 {
        return param("a must lie strictly between 0 and 1");
    }
    let z = scaled::polymer(env, triple, x, y, tie)?;
    Ok(zigzag_deviation(env, &z, line, triple, m))
}

fn zigzag_deviation<T: Scalar>(env: &Environment<T>, z: &scaled::Zigzag<T>, line: i64, triple: &CompatibleTriple, m: f64) -> f64 {
    let rho = scaled::zigzag_at_time(env, z, line).expect("line inside lifetime");
    let s = z.start(env);
    let e = z.end(env);
    let l = scaled::interpolant(s.x, s.t, e.x, e.t, line as f64 / triple.n() as f64);
    (rho - l) / (triple.t12().powf(2.0 / 3.0) * m.powf(2.0 / 3.0))
}

/// Largest `|X|` over the discretized endpoint pairs and both extreme polymers.
pub fn max_abs_deviation<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    i_span: Span,
    j_span: Span,
    a: f64,
    endpoint_grid: usize,
) -> Result<f64> {
    let line = mesh_line(triple, a)?;
    let m = a.min(1.0 - a);
    if m <= 0.0 {
        return param("a must lie strictly between 0 and 1");
    }
    let n = triple.n();
    let us = discretize(env, n, i_span, triple.line1(), endpoint_grid)?;
    let vs = discretize(env, n, j_span, triple.line2(), endpoint_grid)?;
    let mut worst: f64 = 0.0;
    for u in &us {
        let prof = WeightProfile::new(env, triple, u.x, vs.last().unwrap().x)?;
        for v in vs.iter().filter(|v| v.g >= u.g) {
            for tie in [TieRule::Leftmost, TieRule::Rightmost] {
                let z = prof.polymer_to(env, v.g, tie)?;
                worst = worst.max(zigzag_deviation(env, &z, line, triple, m).abs());
            }
        }
    }
    Ok(worst)
}

/// `PolyDevReg(a, r)` over the discretized rectangle `I × J`.
pub fn poly_dev_reg<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    i_span: Span,
    j_span: Span,
    a: f64,
    r: f64,
    endpoint_grid: usize,
) -> Result<bool> {
    Ok(max_abs_deviation(env, triple, i_span, j_span, a, endpoint_grid)? <= r)
}

/// A real interval with open, closed or infinite ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealInterval {
    pub lo: Bound<f64>,
    pub hi: Bound<f64>,
}

impl RealInterval {
    pub fn all() -> Self {
        RealInterval { lo: Bound::Unbounded, hi: Bound::Unbounded }
    }
    pub fn empty() -> Self {
        RealInterval { lo: Bound::Excluded(0.0), hi: Bound::Excluded(0.0) }
    }
    pub fn contains(&self, v: f64) -> bool {
        let lo = match self.lo {
            Bound::Included(a) => v >= a,
            Bound::Excluded(a) => v > a,
            Bound::Unbounded => true,
        };
        let hi = match self.hi {
            Bound::Included(b) => v <= b,
            Bound::Excluded(b) => v < b,
            Bound::Unbounded => true,
        };
        lo && hi
    }
}

/// `X ∈ K` for the leftmost polymer.
pub fn fluc<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    x: f64,
    y: f64,
    a: f64,
    k: RealInterval,
) -> Result<bool> {
    Ok(k.contains(deviation_stat(env, triple, x, y, a, TieRule::Leftmost)?))
}

/// Values `t12^{-1/3} Wgt(u, v) + 2^{-1/2} t12^{-4/3} (v - u)^2` over the
/// discretized rectangle.
pub fn normalized_weights<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    i_span: Span,
    j_span: Span,
    endpoint_grid: usize,
) -> Result<Vec<f64>> {
    let n = triple.n();
    let us = discretize(env, n, i_span, triple.line1(), endpoint_grid)?;
    let vs = discretize(env, n, j_span, triple.line2(), endpoint_grid)?;
    let t12 = triple.t12();
    let mut out = Vec::new();
    for u in &us {
        let prof = WeightProfile::new(env, triple, u.x, vs.last().unwrap().x)?;
        for v in &vs {
            if v.g < u.g {
                return Err(LppError::Infeasible(format!("end {} not reachable from {}", v.x, u.x)));
            }
            let w = prof.weight_at_index(env, v.g)?.to_f64_lossy();
            out.push(w / t12.cbrt() + std::f64::consts::FRAC_1_SQRT_2 * (v.x - u.x).powi(2) / t12.powf(4.0 / 3.0));
        }
    }
    Ok(out)
}

/// `PolyWgtReg(r)` over the discretized rectangle. An unreachable pair has
/// weight `-inf`, so the event fails.
pub fn poly_wgt_reg<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    i_span: Span,
    j_span: Span,
    r: f64,
    endpoint_grid: usize,
) -> Result<bool> {
    match normalized_weights(env, triple, i_span, j_span, endpoint_grid) {
        Ok(ws) => Ok(ws.iter().all(|v| v.abs() <= r)),
        Err(LppError::Infeasible(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// `sup |Wgt(x2, y2) - Wgt(x1, y1)|` over the discretized `I × J`, lifetime `[0, 1]`.
pub fn weight_spread<T: Scalar>(
    env: &Environment<T>,
    n: u64,
    i_span: Span,
    j_span: Span,
    endpoint_grid: usize,
) -> Result<f64> {
    let triple = CompatibleTriple::from_lines(n, 0, n as i64)?;
    let us = discretize(env, n, i_span, 0, endpoint_grid)?;
    let vs = discretize(env, n, j_span, n as i64, endpoint_grid)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for u in &us {
        let prof = WeightProfile::new(env, &triple, u.x, vs.last().unwrap().x)?;
        for v in &vs {
            if v.g < u.g {
                return Err(LppError::Infeasible(format!("end {} not reachable from {}", v.x, u.x)));
            }
            let w = prof.weight_at_index(env, v.g)?.to_f64_lossy();
            lo = lo.min(w);
            hi = hi.max(w);
        }
    }
    Ok(hi - lo)
}

/// `LocWgtReg(ε, r)` on lifetime `[0, 1]`; both intervals must have length `ε`.
pub fn loc_wgt_reg<T: Scalar>(
    env: &Environment<T>,
    n: u64,
    i_span: Span,
    j_span: Span,
    epsilon: f64,
    r: f64,
    endpoint_grid: usize,
) -> Result<bool> {
    if !(epsilon >= 0.0) {
        return param("epsilon must be nonnegative");
    }
    for s in [i_span, j_span] {
        if (s.len() - epsilon).abs() > 1e-9 * epsilon.max(1.0) {
            return param(format!("interval length {} differs from epsilon {epsilon}", s.len()));
        }
    }
    spread_within(weight_spread(env, n, i_span, j_span, endpoint_grid), r * epsilon.sqrt())
}

// an unreachable pair makes the spread infinite
fn spread_within(spread: Result<f64>, bound: f64) -> Result<bool> {
    match spread {
        Ok(s) => Ok(s <= bound),
        Err(LppError::Infeasible(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Normalized proper bouquet weight plus its parabolic sum; the bouquet
/// regularity event holds iff its absolute value is at most `r`.
pub fn bouquet_statistic<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    k: usize,
    direction: Direction,
    anchor: f64,
    tuple: &[f64],
) -> Result<f64> {
    let n = triple.n();
    let d = triple.t12() - 1.0 / n as f64;
    let half = 0.5 / scaled::n_two_thirds(n);
    let (w, parab) = match direction {
        Direction::Forward => {
            let a = scaled::snap(env, n, anchor, triple.line1())?;
            let us: Vec<f64> = tuple
                .iter()
                .map(|&u| scaled::snap(env, n, u, triple.line2()).map(|s| s.x))
                .collect::<Result<_>>()?;
            let w = scaled::proper_multi_weight_forward(env, triple, k, a.x, &us)?;
            (w, us.iter().map(|u| (u + half - a.x).powi(2)).sum::<f64>())
        }
        Direction::Backward => {
            let b = scaled::snap(env, n, anchor, triple.line2())?;
            let vs: Vec<f64> = tuple
                .iter()
                .map(|&v| scaled::snap(env, n, v, triple.line1()).map(|s| s.x))
                .collect::<Result<_>>()?;
            let w = scaled::proper_multi_weight_backward(env, triple, k, &vs, b.x)?;
            (w, vs.iter().map(|v| (v - half - b.x).powi(2)).sum::<f64>())
        }
    };
    Ok(w.to_f64_lossy() / d.cbrt() + std::f64::consts::FRAC_1_SQRT_2 * parab / d.powf(4.0 / 3.0))
}

/// `ForBouqReg(r)` or `BackBouqReg(r)`; false when the tuple is unreachable.
pub fn bouquet_reg<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    k: usize,
    direction: Direction,
    anchor: f64,
    tuple: &[f64],
    r: f64,
) -> Result<bool> {
    match bouquet_statistic(env, triple, k, direction, anchor, tuple) {
        Ok(v) => Ok(v.abs() <= r),
        Err(LppError::Infeasible(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// The six constituents of the favourable surgical conditions event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FavSurConOutcome {
    pub holds: bool,
    pub loc_wgt_reg: bool,
    pub poly_dev_reg: bool,
    pub for_bouq_reg: bool,
    pub back_bouq_reg: bool,
    pub poly_wgt_reg_start: bool,
    pub poly_wgt_reg_end: bool,
    /// Grid indices of `Ū` (line 0) and `V̄` (line n) used.
    pub u_bar: Vec<usize>,
    pub v_bar: Vec<usize>,
    /// Whether `Ū, V̄` came from a disjointness certificate.
    pub certified: bool,
}

/// Lines of the bouquet lifetime `n ε^{3/2}`.
pub fn bouquet_lines(n: u64, epsilon: f64) -> Result<i64> {
    let h = n as f64 * epsilon.powf(1.5);
    let r = h.round();
    if (h - r).abs() > 1e-9 * r.max(1.0) || r < 1.0 {
        return param(format!("n eps^(3/2) = {h} is not a positive integer"));
    }
    Ok(r as i64)
}

/// `FavSurCon(k; Ū, V̄; ε, r)` around `I = [x-ε, x+ε]`, `J = [y-ε, y+ε]`.
pub fn fav_sur_con<T: Scalar>(
    env: &Environment<T>,
    n: u64,
    k: usize,
    x: f64,
    y: f64,
    epsilon: f64,
    r: f64,
    endpoint_grid: usize,
) -> Result<FavSurConOutcome> {
    if !(epsilon > 0.0) || !(r >= 0.0) {
        return param("need epsilon > 0 and r >= 0");
    }
    let h = bouquet_lines(n, epsilon)?;
    let ni = n as i64;
    let main = CompatibleTriple::from_lines(n, 0, ni)?;
    let i_span = Span::centered(x, epsilon);
    let j_span = Span::centered(y, epsilon);
    let wide = (r + 1.0) * epsilon;
    let i_plus = Span::centered(x, wide);
    let j_plus = Span::centered(y, wide);

    let dis = max_disjoint(env, &main, i_span, j_span, k, endpoint_grid, DEFAULT_TOL, CertificateSearch::GeodesicPruned)?;
    let (u_bar, v_bar, certified) = match (&dis.certificate, dis.k >= k) {
        (Some((u, v)), true) => (u.clone(), v.clone(), true),
        _ if k == 1 => {
            let u = scaled::snap(env, n, x, 0)?.g;
            let v = scaled::snap(env, n, y, ni)?.g;
            (vec![u], vec![v], dis.k >= 1)
        }
        _ => {
            let u = scaled::snap(env, n, i_span.lo, 0)?.g;
            let v = scaled::snap(env, n, j_span.lo, ni)?.g;
            (vec![u; k], vec![v; k], false)
        }
    };
    let to_scaled = |g: usize, line: i64| scaled::scaled_x(n, env.grid().position(g), line);
    let us: Vec<f64> = u_bar.iter().map(|&g| to_scaled(g, 0)).collect();
    let vs: Vec<f64> = v_bar.iter().map(|&g| to_scaled(g, ni)).collect();

    let loc = spread_within(weight_spread(env, n, i_plus, j_plus, endpoint_grid), r * (2.0 * wide).sqrt())?;

    let long = CompatibleTriple::from_lines(n, -h, ni + h)?;
    let bound = r * epsilon;
    let dev = {
        let z = scaled::polymer(env, &long, x, y, TieRule::Leftmost)?;
        let zr = scaled::polymer(env, &long, x, y, TieRule::Rightmost)?;
        let mut ok = true;
        for zz in [&z, &zr] {
            let s = zz.start(env);
            let e = zz.end(env);
            for line in [0, ni] {
                let rho = scaled::zigzag_at_time(env, zz, line)?;
                let l = scaled::interpolant(s.x, s.t, e.x, e.t, line as f64 / n as f64);
                ok &= (rho - l).abs() <= bound;
            }
        }
        ok
    };

    let fwd = CompatibleTriple::from_lines(n, -h, 0)?;
    let bwd = CompatibleTriple::from_lines(n, ni, ni + h)?;
    let for_b = bouquet_reg(env, &fwd, k, Direction::Forward, x, &us, r)?;
    let back_b = bouquet_reg(env, &bwd, k, Direction::Backward, y, &vs, r)?;
    let pw_start = poly_wgt_reg(env, &fwd, Span::point(x), i_plus, r * r, endpoint_grid)?;
    let pw_end = poly_wgt_reg(env, &bwd, j_plus, Span::point(y), r * r, endpoint_grid)?;
    Ok(FavSurConOutcome {
        holds: loc && dev && for_b && back_b && pw_start && pw_end,
        loc_wgt_reg: loc,
        poly_dev_reg: dev,
        for_bouq_reg: for_b,
        back_bouq_reg: back_b,
        poly_wgt_reg_start: pw_start,
        poly_wgt_reg_end: pw_end,
        u_bar,
        v_bar,
        certified,
    })
}

/// Declarative description of one event, used for batch evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSpec {
    MaxDisjtPoly {
        n: u64,
        t1: f64,
        t2: f64,
        i: [f64; 2],
        j: [f64; 2],
        k: usize,
        #[serde(default = "default_grid")]
        endpoint_grid: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    NearPoly { n: u64, t1: f64, t2: f64, k: usize, x: f64, y: f64, eta: f64 },
    PolyDevReg {
        n: u64,
        t1: f64,
        t2: f64,
        i: [f64; 2],
        j: [f64; 2],
        a: f64,
        r: f64,
        #[serde(default = "default_grid")]
        endpoint_grid: usize,
    },
    PolyWgtReg {
        n: u64,
        t1: f64,
        t2: f64,
        i: [f64; 2],
        j: [f64; 2],
        r: f64,
        #[serde(default = "default_grid")]
        endpoint_grid: usize,
    },
    LocWgtReg {
        n: u64,
        i: [f64; 2],
        j: [f64; 2],
        epsilon: f64,
        r: f64,
        #[serde(default = "default_grid")]
        endpoint_grid: usize,
    },
    ForBouqReg { n: u64, t1: f64, t2: f64, k: usize, x: f64, u: Vec<f64>, r: f64 },
    BackBouqReg { n: u64, t1: f64, t2: f64, k: usize, v: Vec<f64>, y: f64, r: f64 },
    FavSurCon {
        n: u64,
        k: usize,
        x: f64,
        y: f64,
        epsilon: f64,
        r: f64,
        #[serde(default = "default_grid")]
        endpoint_grid: usize,
    },
    Fluc {
        n: u64,
        t1: f64,
        t2: f64,
        x: f64,
        y: f64,
        a: f64,
        /// Lower end; absent means `-inf`.
        lo: Option<f64>,
        /// Upper end; absent means `+inf`.
        hi: Option<f64>,
        #[serde(default)]
        lo_open: bool,
        #[serde(default)]
        hi_open: bool,
    },
}

fn default_grid() -> usize {
    DEFAULT_ENDPOINT_GRID
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

/// Scaled points an environment must contain, with the line range.
#[derive(Debug, Clone, PartialEq)]
pub struct Extent {
    pub n: u64,
    pub line_min: i64,
    pub line_max: i64,
    /// `(scaled x, line)` pairs, including interval ends.
    pub points: Vec<(f64, i64)>,
}

impl Extent {
    /// Unscaled horizontal range covering every point.
    pub fn unscaled_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(x, line) in &self.points {
            let p = scaled::unscaled_x(self.n, x, line);
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }
}

fn triple_of(n: u64, t1: f64, t2: f64) -> Result<CompatibleTriple> {
    CompatibleTriple::new(n, t1, t2)
}

impl EventSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EventSpec::MaxDisjtPoly { .. } => "MaxDisjtPoly",
            EventSpec::NearPoly { .. } => "NearPoly",
            EventSpec::PolyDevReg { .. } => "PolyDevReg",
            EventSpec::PolyWgtReg { .. } => "PolyWgtReg",
            EventSpec::LocWgtReg { .. } => "LocWgtReg",
            EventSpec::ForBouqReg { .. } => "ForBouqReg",
            EventSpec::BackBouqReg { .. } => "BackBouqReg",
            EventSpec::FavSurCon { .. } => "FavSurCon",
            EventSpec::Fluc { .. } => "Fluc",
        }
    }

    /// Region the environment must cover to evaluate the event.
    pub fn extent(&self) -> Result<Extent> {
        let rect = |n: u64, t: CompatibleTriple, i: [f64; 2], j: [f64; 2]| Extent {
            n,
            line_min: t.line1(),
            line_max: t.line2(),
            points: vec![(i[0], t.line1()), (i[1], t.line1()), (j[0], t.line2()), (j[1], t.line2())],
        };
        Ok(match self {
            EventSpec::MaxDisjtPoly { n, t1, t2, i, j, .. }
            | EventSpec::PolyDevReg { n, t1, t2, i, j, .. }
            | EventSpec::PolyWgtReg { n, t1, t2, i, j, .. } => rect(*n, triple_of(*n, *t1, *t2)?, *i, *j),
            EventSpec::LocWgtReg { n, i, j, .. } => rect(*n, CompatibleTriple::from_lines(*n, 0, *n as i64)?, *i, *j),
            EventSpec::NearPoly { n, t1, t2, x, y, .. } | EventSpec::Fluc { n, t1, t2, x, y, .. } => {
                rect(*n, triple_of(*n, *t1, *t2)?, [*x, *x], [*y, *y])
            }
            EventSpec::ForBouqReg { n, t1, t2, x, u, .. } => {
                let t = triple_of(*n, *t1, *t2)?;
                let mut e = rect(*n, t, [*x, *x], [*x, *x]);
                e.points.truncate(2);
                e.points.extend(u.iter().map(|&v| (v, t.line2())));
                e
            }
            EventSpec::BackBouqReg { n, t1, t2, v, y, .. } => {
                let t = triple_of(*n, *t1, *t2)?;
                let mut e = rect(*n, t, [*y, *y], [*y, *y]);
                e.points.drain(..2);
                e.points.extend(v.iter().map(|&w| (w, t.line1())));
                e
            }
            EventSpec::FavSurCon { n, x, y, epsilon, r, .. } => {
                let h = bouquet_lines(*n, *epsilon)?;
                let ni = *n as i64;
                let w = (r + 1.0) * epsilon;
                Extent {
                    n: *n,
                    line_min: -h,
                    line_max: ni + h,
                    points: vec![
                        (*x, -h),
                        (x - w, 0),
                        (x + w, 0),
                        (y - w, ni),
                        (y + w, ni),
                        (*y, ni + h),
                    ],
                }
            }
        })
    }

    /// Indicator of the event on `env`.
    pub fn evaluate<T: Scalar>(&self, env: &Environment<T>) -> Result<bool> {
        match self {
            EventSpec::MaxDisjtPoly { n, t1, t2, i, j, k, endpoint_grid, tol } => {
                let t = triple_of(*n, *t1, *t2)?;
                let o = max_disjoint(
                    env,
                    &t,
                    Span::new(i[0], i[1]),
                    Span::new(j[0], j[1]),
                    *k,
                    *endpoint_grid,
                    *tol,
                    CertificateSearch::GeodesicPruned,
                )?;
                Ok(o.k >= *k)
            }
            EventSpec::NearPoly { n, t1, t2, k, x, y, eta } => near_poly(env, &triple_of(*n, *t1, *t2)?, *k, *x, *y, *eta),
            EventSpec::PolyDevReg { n, t1, t2, i, j, a, r, endpoint_grid } => poly_dev_reg(
                env,
                &triple_of(*n, *t1, *t2)?,
                Span::new(i[0], i[1]),
                Span::new(j[0], j[1]),
                *a,
                *r,
                *endpoint_grid,
            ),
            EventSpec::PolyWgtReg { n, t1, t2, i, j, r, endpoint_grid } => poly_wgt_reg(
                env,
                &triple_of(*n, *t1, *t2)?,
                Span::new(i[0], i[1]),
                Span::new(j[0], j[1]),
                *r,
                *endpoint_grid,
            ),
            EventSpec::LocWgtReg { n, i, j, epsilon, r, endpoint_grid } => {
                loc_wgt_reg(env, *n, Span::new(i[0], i[1]), Span::new(j[0], j[1]), *epsilon, *r, *endpoint_grid)
            }
            EventSpec::ForBouqReg { n, t1, t2, k, x, u, r } => {
                bouquet_reg(env, &triple_of(*n, *t1, *t2)?, *k, Direction::Forward, *x, u, *r)
            }
            EventSpec::BackBouqReg { n, t1, t2, k, v, y, r } => {
                bouquet_reg(env, &triple_of(*n, *t1, *t2)?, *k, Direction::Backward, *y, v, *r)
            }
            EventSpec::FavSurCon { n, k, x, y, epsilon, r, endpoint_grid } => {
                Ok(fav_sur_con(env, *n, *k, *x, *y, *epsilon, *r, *endpoint_grid)?.holds)
            }
            EventSpec::Fluc { n, t1, t2, x, y, a, lo, hi, lo_open, hi_open } => {
                let b = |v: &Option<f64>, open: bool| match v {
                    None => Bound::Unbounded,
                    Some(v) if open => Bound::Excluded(*v),
                    Some(v) => Bound::Included(*v),
                };
                fluc(env, &triple_of(*n, *t1, *t2)?, *x, *y, *a, RealInterval { lo: b(lo, *lo_open), hi: b(hi, *hi_open) })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_membership() {
        assert!(RealInterval::all().contains(1e300));
        assert!(!RealInterval::empty().contains(0.0));
        let k = RealInterval { lo: Bound::Included(1.0), hi: Bound::Excluded(2.0) };
        assert!(k.contains(1.0) && !k.contains(2.0));
    }

    #[test]
    fn tuple_enumeration_is_lexicographic() {
        let mut seen = Vec::new();
        tuples(&[1, 3, 5], 2, &mut |t| {
            seen.push(t.to_vec());
            false
        });
        assert_eq!(seen, vec![vec![1, 1], vec![1, 3], vec![1, 5], vec![3, 3], vec![3, 5], vec![5, 5]]);
    }

    #[test]
    fn bouquet_lifetime_mesh() {
        assert_eq!(bouquet_lines(1000, 0.01).unwrap(), 1);
        assert!(bouquet_lines(100, 0.1).is_err());
        assert_eq!(bouquet_lines(125, 0.16).unwrap(), 8);
    }
}
