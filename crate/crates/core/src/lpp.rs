//! Unscaled last passage percolation on a discretized environment.
//!
//! A staircase from `(x, i)` to `(y, j)` walks right along line `i` from `x`,
//! jumps up at `z_{i+1}`, walks right along line `i+1`, and so on until it ends
//! at `y` on line `j`. All positions are grid indices.

use crate::environment::Environment;
use crate::error::{infeasible, LppError, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// A grid point on a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub g: usize,
    pub line: i64,
}

impl LatticePoint {
    pub fn new(g: usize, line: i64) -> Self {
        LatticePoint { g, line }
    }
}

/// Tie-breaking rule used when backtracking a maximizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    #[default]
    Leftmost,
    Rightmost,
}

/// A single unscaled path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Staircase {
    start: LatticePoint,
    end: LatticePoint,
    jumps: Vec<usize>,
}

impl Staircase {
    /// `jumps[m - i - 1]` is the position where the path moves from line
    /// `m - 1` to line `m`.
    pub fn new(start: LatticePoint, end: LatticePoint, jumps: Vec<usize>) -> Result<Self> {
        if end.line < start.line {
            return Err(LppError::Validation(format!(
                "end line {} before start line {}",
                end.line, start.line
            )));
        }
        if end.g < start.g {
            return Err(LppError::Validation(format!(
                "end position {} left of start {}",
                end.g, start.g
            )));
        }
        if jumps.len() as i64 != end.line - start.line {
            return Err(LppError::Validation(format!(
                "expected {} jumps, got {}",
                end.line - start.line,
                jumps.len()
            )));
        }
        let mut prev = start.g;
        for &z in jumps.iter().chain(std::iter::once(&end.g)) {
            if z < prev {
                return Err(LppError::Validation(format!("jump positions not monotone: {jumps:?}")));
            }
            prev = z;
        }
        Ok(Staircase { start, end, jumps })
    }

    pub fn start(&self) -> LatticePoint {
        self.start
    }

    pub fn end(&self) -> LatticePoint {
        self.end
    }

    pub fn jumps(&self) -> &[usize] {
        &self.jumps
    }

    pub fn line_range(&self) -> std::ops::RangeInclusive<i64> {
        self.start.line..=self.end.line
    }

    pub fn contains_line(&self, line: i64) -> bool {
        line >= self.start.line && line <= self.end.line
    }

    /// Left end of the path's interval on `line`.
    pub fn entry(&self, line: i64) -> usize {
        debug_assert!(self.contains_line(line));
        if line == self.start.line {
            self.start.g
        } else {
            self.jumps[(line - self.start.line - 1) as usize]
        }
    }

    /// Right end of the path's interval on `line`.
    pub fn exit(&self, line: i64) -> usize {
        debug_assert!(self.contains_line(line));
        if line == self.end.line {
            self.end.g
        } else {
            self.jumps[(line - self.start.line) as usize]
        }
    }

    /// Closed horizontal interval `[entry, exit]` on `line`.
    pub fn interval(&self, line: i64) -> (usize, usize) {
        (self.entry(line), self.exit(line))
    }

    /// Splits at grid point `g` of `line`, which must lie on the path.
    pub fn split_at(&self, line: i64, g: usize) -> Result<(Staircase, Staircase)> {
        if !self.contains_line(line) {
            return Err(LppError::Domain(format!("line {line} not on the staircase")));
        }
        let (a, b) = self.interval(line);
        if g < a || g > b {
            return Err(LppError::Domain(format!("point ({g}, {line}) not on the staircase")));
        }
        let cut = (line - self.start.line) as usize;
        let mid = LatticePoint::new(g, line);
        let first = Staircase { start: self.start, end: mid, jumps: self.jumps[..cut].to_vec() };
        let second = Staircase { start: mid, end: self.end, jumps: self.jumps[cut..].to_vec() };
        Ok((first, second))
    }

    /// Concatenation; the first path must end where the second starts.
    pub fn concat(&self, other: &Staircase) -> Result<Staircase> {
        if self.end != other.start {
            return Err(LppError::Validation(format!(
                "cannot concatenate: {:?} != {:?}",
                self.end, other.start
            )));
        }
        let mut jumps = self.jumps.clone();
        jumps.extend_from_slice(&other.jumps);
        Ok(Staircase { start: self.start, end: other.end, jumps })
    }

    /// True if some line carries a horizontal interval of positive length.
    pub fn is_nondegenerate(&self) -> bool {
        self.line_range().any(|m| {
            let (a, b) = self.interval(m);
            b > a
        })
    }

    fn check_env<T: Scalar>(&self, env: &Environment<T>) -> Result<()> {
        if !env.has_line(self.start.line) || !env.has_line(self.end.line) {
            return Err(LppError::Domain(format!(
                "lines {}..={} outside environment",
                self.start.line, self.end.line
            )));
        }
        if self.end.g > env.grid().num_cells {
            return Err(LppError::Domain(format!("grid index {} outside window", self.end.g)));
        }
        Ok(())
    }
}

/// Ordered k-tuple of pairwise horizontally separate staircases on a common
/// line range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiStaircase {
    paths: Vec<Staircase>,
}

impl MultiStaircase {
    pub fn new(paths: Vec<Staircase>) -> Result<Self> {
        if paths.is_empty() {
            return Err(LppError::Validation("empty multi-staircase".into()));
        }
        let (i, j) = (paths[0].start.line, paths[0].end.line);
        for p in &paths {
            if p.start.line != i || p.end.line != j {
                return Err(LppError::Validation("paths do not share a line range".into()));
            }
        }
        for w in paths.windows(2) {
            for m in i..=j {
                if w[0].exit(m) > w[1].entry(m) {
                    return Err(LppError::Validation(format!(
                        "paths overlap or are out of order on line {m}"
                    )));
                }
            }
        }
        Ok(MultiStaircase { paths })
    }

    pub fn k(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[Staircase] {
        &self.paths
    }

    pub fn into_paths(self) -> Vec<Staircase> {
        self.paths
    }
}

/// Energy `sum_m B(m, exit) - B(m, entry)` of a staircase.
pub fn staircase_energy<T: Scalar>(env: &Environment<T>, s: &Staircase) -> Result<T> {
    s.check_env(env)?;
    let mut e = T::zero();
    for m in s.line_range() {
        let row = env.row(m);
        let (a, b) = s.interval(m);
        e = e + (row[b] - row[a]);
    }
    Ok(e)
}

/// Sum of the component energies.
pub fn multi_energy<T: Scalar>(env: &Environment<T>, s: &MultiStaircase) -> Result<T> {
    let mut e = T::zero();
    for p in s.paths() {
        e = e + staircase_energy(env, p)?;
    }
    Ok(e)
}

fn check_endpoints<T: Scalar>(env: &Environment<T>, start: LatticePoint, end: LatticePoint) -> Result<()> {
    if end.line < start.line || end.g < start.g {
        return infeasible(format!("no staircase from {start:?} to {end:?}"));
    }
    if !env.has_line(start.line) || !env.has_line(end.line) {
        return Err(LppError::Domain(format!(
            "lines {}..={} outside environment [{}, {}]",
            start.line,
            end.line,
            env.line_min(),
            env.line_max()
        )));
    }
    if end.g > env.grid().num_cells {
        return Err(LppError::Domain(format!("grid index {} outside window", end.g)));
    }
    Ok(())
}

/// Single-source last passage values to every grid point of every line, from
/// a fixed start up to `end_line`, restricted to positions `start.g..=hi`.
#[derive(Debug, Clone)]
pub struct PassageTable<T> {
    start: LatticePoint,
    end_line: i64,
    hi: usize,
    rows: Vec<Vec<T>>,
    // leftmost / rightmost maximizing predecessor offsets, one row per line after the first
    arg_left: Vec<Vec<u32>>,
    arg_right: Vec<Vec<u32>>,
}

impl<T: Scalar> PassageTable<T> {
    pub fn compute(env: &Environment<T>, start: LatticePoint, end_line: i64, hi: usize) -> Result<Self> {
        check_endpoints(env, start, LatticePoint::new(hi, end_line))?;
        let lo = start.g;
        let width = hi - lo + 1;
        let lines = (end_line - start.line + 1) as usize;
        let mut rows = Vec::with_capacity(lines);
        let mut arg_left = Vec::with_capacity(lines - 1);
        let mut arg_right = Vec::with_capacity(lines - 1);
        let r0 = &env.row(start.line)[lo..=hi];
        rows.push(r0.iter().map(|&v| v - r0[0]).collect::<Vec<T>>());
        for m in start.line + 1..=end_line {
            let b = &env.row(m)[lo..=hi];
            let prev: &Vec<T> = rows.last().unwrap();
            let mut cur = vec![T::zero(); width];
            let mut al = vec![0u32; width];
            let mut ar = vec![0u32; width];
            let mut run = T::neg_infinity();
            let (mut l, mut r) = (0u32, 0u32);
            for (g, ((((&p, &bg), c), al), ar)) in
                prev.iter().zip(b).zip(cur.iter_mut()).zip(al.iter_mut()).zip(ar.iter_mut()).enumerate()
            {
                let cand = p - bg;
                let gt = cand > run;
                let ge = cand >= run;
                l = if gt { g as u32 } else { l };
                r = if ge { g as u32 } else { r };
                run = if gt { cand } else { run };
                *c = run + bg;
                *al = l;
                *ar = r;
            }
            rows.push(cur);
            arg_left.push(al);
            arg_right.push(ar);
        }
        Ok(PassageTable { start, end_line, hi, rows, arg_left, arg_right })
    }

    pub fn start(&self) -> LatticePoint {
        self.start
    }

    pub fn end_line(&self) -> i64 {
        self.end_line
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    /// `M^1` from the start to `(g, line)`.
    pub fn value_at(&self, g: usize, line: i64) -> Result<T> {
        if line < self.start.line || line > self.end_line || g < self.start.g || g > self.hi {
            return Err(LppError::Domain(format!("({g}, {line}) outside the table")));
        }
        Ok(self.rows[(line - self.start.line) as usize][g - self.start.g])
    }

    /// `M^1` from the start to `(g, end_line)`.
    pub fn value(&self, g: usize) -> Result<T> {
        self.value_at(g, self.end_line)
    }

    /// Values on the last line, indexed from `start.g`.
    pub fn last_row(&self) -> &[T] {
        self.rows.last().unwrap()
    }

    /// A maximizing staircase to `(g, line)`.
    pub fn geodesic_to(&self, g: usize, line: i64, tie: TieRule) -> Result<Staircase> {
        self.value_at(g, line)?;
        let lo = self.start.g;
        let i = self.start.line;
        let mut jumps = vec![0usize; (line - i) as usize];
        let args = match tie {
            TieRule::Leftmost => &self.arg_left,
            TieRule::Rightmost => &self.arg_right,
        };
        let mut e = g;
        for m in (i + 1..=line).rev() {
            let arg = args[(m - i - 1) as usize][e - lo] as usize + lo;
            jumps[(m - i - 1) as usize] = arg;
            e = arg;
        }
        Staircase::new(self.start, LatticePoint::new(g, line), jumps)
    }
}

/// Maximum energy `M^1` over staircases from `start` to `end`.
pub fn last_passage<T: Scalar>(env: &Environment<T>, start: LatticePoint, end: LatticePoint) -> Result<T> {
    check_endpoints(env, start, end)?;
    PassageTable::compute(env, start, end.line, end.g)?.value(end.g)
}

/// A staircase attaining `M^1`, with ties broken by `tie`.
pub fn geodesic<T: Scalar>(
    env: &Environment<T>,
    start: LatticePoint,
    end: LatticePoint,
    tie: TieRule,
) -> Result<Staircase> {
    check_endpoints(env, start, end)?;
    PassageTable::compute(env, start, end.line, end.g)?.geodesic_to(end.g, end.line, tie)
}

/// Upper bound on the number of states of a k-path table.
pub const MAX_MULTI_STATES: usize = 1 << 25;
/// Upper bound on the stored entries when backtracking k paths.
pub const MAX_MULTI_STORED: usize = 1 << 27;

/// Dynamic program for k non-overlapping paths from a fixed start tuple.
///
/// The state after line `m` is the tuple of positions where the paths leave
/// line `m`. Positions range over the window `lo..=hi`.
#[derive(Debug, Clone)]
pub struct MultiTable<T> {
    k: usize,
    lo: usize,
    width: usize,
    start_line: i64,
    end_line: i64,
    starts: Vec<usize>,
    upper: Vec<usize>,
    strides: Vec<usize>,
    rows: Vec<Vec<T>>,
    keep_all: bool,
}

#[cfg(test)]
thread_local! {
    pub(crate) static FORCE_GENERAL: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

#[inline]
fn force_general() -> bool {
    #[cfg(test)]
    {
        FORCE_GENERAL.with(|f| f.get())
    }
    #[cfg(not(test))]
    {
        false
    }
}

fn check_tuple(t: &[usize], what: &str) -> Result<()> {
    if t.windows(2).any(|w| w[1] < w[0]) {
        return Err(LppError::Parameter(format!("{what} tuple {t:?} is not nondecreasing")));
    }
    Ok(())
}

impl<T: Scalar> MultiTable<T> {
    /// Runs the program from `starts` on `start_line` to `end_line`. Path `p`
    /// is confined to positions `starts[p]..=upper[p]`. With `keep_all` every
    /// line's table is kept for backtracking.
    pub fn compute(
        env: &Environment<T>,
        start_line: i64,
        starts: &[usize],
        end_line: i64,
        upper: &[usize],
        keep_all: bool,
    ) -> Result<Self> {
        let k = starts.len();
        if k == 0 || upper.len() != k {
            return Err(LppError::Parameter("start and upper tuples must have equal positive length".into()));
        }
        check_tuple(starts, "start")?;
        check_tuple(upper, "upper")?;
        if end_line < start_line {
            return infeasible(format!("end line {end_line} before start line {start_line}"));
        }
        for p in 0..k {
            if upper[p] < starts[p] {
                return infeasible(format!("path {p}: end {} left of start {}", upper[p], starts[p]));
            }
        }
        check_endpoints(
            env,
            LatticePoint::new(starts[0], start_line),
            LatticePoint::new(*upper.iter().max().unwrap(), end_line),
        )?;
        let lo = starts[0];
        let hi = upper[k - 1];
        let width = hi - lo + 1;
        let states = width
            .checked_pow(k as u32)
            .filter(|&s| s <= MAX_MULTI_STATES)
            .ok_or_else(|| LppError::Size(format!("{width}^{k} states exceed {MAX_MULTI_STATES}")))?;
        let lines = (end_line - start_line + 1) as usize;
        if keep_all && states.saturating_mul(lines) > MAX_MULTI_STORED {
            return Err(LppError::Size(format!(
                "{states} states over {lines} lines exceed {MAX_MULTI_STORED}"
            )));
        }
        let mut strides = vec![1usize; k];
        for p in 1..k {
            strides[p] = strides[p - 1] * width;
        }
        let mut tab = MultiTable {
            k,
            lo,
            width,
            start_line,
            end_line,
            starts: starts.to_vec(),
            upper: upper.to_vec(),
            strides,
            rows: Vec::new(),
            keep_all,
        };

        // virtual state before the first line: all paths about to enter at `starts`
        let mut v = vec![T::neg_infinity(); states];
        let s_idx = tab.flat(starts);
        if k == 2 && !force_general() {
            v[s_idx] = T::zero();
            tab.step2(&mut v, env, start_line);
            for m in start_line + 1..=end_line {
                if keep_all {
                    tab.rows.push(v.clone());
                }
                tab.step2(&mut v, env, m);
            }
        } else {
            let mut sb = vec![T::zero(); states];
            tab.line_sums_into(env, start_line, &mut sb);
            v[s_idx] = -sb[s_idx];
            tab.box_max(&mut v);
            v.iter_mut().zip(&sb).for_each(|(x, &b)| *x = *x + b);
            let mut next = vec![T::zero(); states];
            for m in start_line + 1..=end_line {
                tab.line_sums_into(env, m, &mut sb);
                next.iter_mut().zip(&v).zip(&sb).for_each(|((n, &a), &b)| *n = a - b);
                tab.box_max(&mut next);
                next.iter_mut().zip(&sb).for_each(|(x, &b)| *x = *x + b);
                if keep_all {
                    tab.rows.push(std::mem::replace(&mut v, next.clone()));
                } else {
                    std::mem::swap(&mut v, &mut next);
                }
            }
        }
        // positions only move right, so lower bounds hold automatically and
        // an upper bound, once exceeded, stays exceeded
        tab.mask_upper(&mut v);
        tab.rows.push(v);
        Ok(tab)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    fn flat(&self, e: &[usize]) -> usize {
        e.iter().zip(&self.strides).map(|(&x, &s)| (x - self.lo) * s).sum()
    }

    fn unflat(&self, mut idx: usize) -> Vec<usize> {
        let mut e = vec![0; self.k];
        for p in 0..self.k {
            e[p] = idx % self.width + self.lo;
            idx /= self.width;
        }
        e
    }

    /// `sum_p B(m, e_p)` for every state, summed in path order.
    fn line_sums(&self, env: &Environment<T>, m: i64) -> Vec<T> {
        let mut out = vec![T::zero(); self.width.pow(self.k as u32)];
        self.line_sums_into(env, m, &mut out);
        out
    }

    fn line_sums_into(&self, env: &Environment<T>, m: i64, out: &mut [T]) {
        let b = &env.row(m)[self.lo..self.lo + self.width];
        let c = self.width;
        out[..c].copy_from_slice(b);
        let mut len = c;
        for _ in 1..self.k {
            // block e of the extended table is the previous table plus b[e],
            // filled from the last block down so the source stays intact
            for e in (0..c).rev() {
                let bv = b[e];
                for q in (0..len).rev() {
                    out[e * len + q] = out[q] + bv;
                }
            }
            len *= c;
        }
    }

    /// One line of the two-path program, fused over the triangle `e_1 <= e_2`.
    /// Produces the same values as the general step.
    fn step2(&self, v: &mut [T], env: &Environment<T>, m: i64) {
        let c = self.width;
        let b = &env.row(m)[self.lo..self.lo + c];
        let ninf = T::neg_infinity();
        let mut run = vec![ninf; c];
        for e2 in 0..c {
            let row = &mut v[e2 * c..e2 * c + e2 + 1];
            let b2 = b[e2];
            let mut pre = ninf;
            for ((x, r), &b1) in row.iter_mut().zip(run.iter_mut()).zip(b) {
                let sb = b1 + b2;
                let cand = *x - sb;
                pre = if cand > pre { cand } else { pre };
                *r = if pre > *r { pre } else { *r };
                *x = *r + sb;
            }
        }
    }

    /// In place: `out(e') = max { in(e) : e_1 <= e'_1, e'_{p-1} <= e_p <= e'_p }`.
    fn box_max(&self, a: &mut [T]) {
        let c = self.width;
        let ninf = T::neg_infinity();
        for block in a.chunks_mut(c) {
            let mut run = ninf;
            for x in block.iter_mut() {
                if *x > run {
                    run = *x;
                }
                *x = run;
            }
        }
        let mut run = Vec::new();
        for axis in 1..self.k {
            let inner = self.strides[axis];
            let ps = self.strides[axis - 1];
            run.clear();
            run.resize(inner, ninf);
            for slab in a.chunks_mut(inner * c) {
                run.iter_mut().for_each(|r| *r = ninf);
                for (e, row) in slab.chunks_mut(inner).enumerate() {
                    // coordinate `axis - 1` of the chunk is `prev`
                    for (prev, (chunk, rchunk)) in row.chunks_mut(ps).zip(run.chunks_mut(ps)).enumerate() {
                        if e < prev {
                            chunk.iter_mut().for_each(|x| *x = ninf);
                        } else {
                            for (x, r) in chunk.iter_mut().zip(rchunk.iter_mut()) {
                                if *x > *r {
                                    *r = *x;
                                }
                                *x = *r;
                            }
                        }
                    }
                }
            }
        }
    }

    fn mask_upper(&self, v: &mut [T]) {
        let hi = self.lo + self.width - 1;
        if self.upper.iter().all(|&u| u == hi) {
            return;
        }
        for (idx, x) in v.iter_mut().enumerate() {
            let mut rem = idx;
            for p in 0..self.k {
                if rem % self.width + self.lo > self.upper[p] {
                    *x = T::neg_infinity();
                    break;
                }
                rem /= self.width;
            }
        }
    }

    /// `M^k` from the start tuple to `ends` on the last line.
    pub fn value(&self, ends: &[usize]) -> Result<T> {
        self.check_ends(ends)?;
        let v = self.rows.last().unwrap()[self.flat(ends)];
        if v == T::neg_infinity() {
            return infeasible(format!(
                "no {} separate paths from {:?} to {:?}",
                self.k, self.starts, ends
            ));
        }
        Ok(v)
    }

    fn check_ends(&self, ends: &[usize]) -> Result<()> {
        if ends.len() != self.k {
            return Err(LppError::Parameter(format!("expected {} end positions", self.k)));
        }
        check_tuple(ends, "end")?;
        for p in 0..self.k {
            if ends[p] < self.starts[p] || ends[p] > self.upper[p] {
                return infeasible(format!("end {ends:?} outside the table bounds"));
            }
        }
        Ok(())
    }

    /// `M^k` to `(y, ..., y)` for every `y` of the window (`None` if infeasible).
    pub fn diagonal(&self) -> Vec<(usize, Option<T>)> {
        let last = self.rows.last().unwrap();
        let diag: usize = self.strides.iter().sum();
        (0..self.width)
            .map(|d| {
                let v = last[d * diag];
                (d + self.lo, if v == T::neg_infinity() { None } else { Some(v) })
            })
            .collect()
    }

    /// A maximizing k-tuple of paths ending at `ends`.
    pub fn backtrack(&self, env: &Environment<T>, ends: &[usize], tie: TieRule) -> Result<MultiStaircase> {
        if !self.keep_all {
            return Err(LppError::Parameter("table was computed without backtracking data".into()));
        }
        self.value(ends)?;
        let lines = (self.end_line - self.start_line) as usize;
        let mut jumps = vec![vec![0usize; lines]; self.k];
        let mut ex = ends.to_vec();
        for m in (self.start_line + 1..=self.end_line).rev() {
            let prev = &self.rows[(m - 1 - self.start_line) as usize];
            let sb = self.line_sums(env, m);
            let mut best = T::neg_infinity();
            let mut arg: Option<Vec<usize>> = None;
            let mut cur = vec![0usize; self.k];
            self.scan_box(&ex, 0, &mut cur, &mut |e: &[usize]| {
                let idx = self.flat(e);
                let cand = prev[idx] - sb[idx];
                let better = match tie {
                    TieRule::Leftmost => cand > best,
                    TieRule::Rightmost => cand >= best && cand > T::neg_infinity(),
                };
                if better {
                    best = cand;
                    arg = Some(e.to_vec());
                }
            });
            let e = arg.ok_or_else(|| LppError::Infeasible("backtracking found no predecessor".into()))?;
            for p in 0..self.k {
                jumps[p][(m - self.start_line - 1) as usize] = e[p];
            }
            ex = e;
        }
        let paths = (0..self.k)
            .map(|p| {
                Staircase::new(
                    LatticePoint::new(self.starts[p], self.start_line),
                    LatticePoint::new(ends[p], self.end_line),
                    std::mem::take(&mut jumps[p]),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        MultiStaircase::new(paths)
    }

    /// Visits the predecessor box of `ex` in lexicographic order.
    fn scan_box(&self, ex: &[usize], p: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if p == self.k {
            f(cur);
            return;
        }
        let lo = if p == 0 { self.starts[0] } else { ex[p - 1].max(self.starts[p]) };
        let hi = ex[p];
        for e in lo..=hi {
            cur[p] = e;
            self.scan_box(ex, p + 1, cur, f);
        }
    }

    #[doc(hidden)]
    pub fn state_of(&self, idx: usize) -> Vec<usize> {
        self.unflat(idx)
    }
}

fn multi_endpoints<T: Scalar>(
    env: &Environment<T>,
    start: &[usize],
    i: i64,
    end: &[usize],
    j: i64,
) -> Result<()> {
    if start.is_empty() || start.len() != end.len() {
        return Err(LppError::Parameter("endpoint tuples must have equal positive length".into()));
    }
    check_tuple(start, "start")?;
    check_tuple(end, "end")?;
    if j < i {
        return infeasible(format!("end line {j} before start line {i}"));
    }
    for p in 0..start.len() {
        if end[p] < start[p] {
            return infeasible(format!("path {p}: end {} left of start {}", end[p], start[p]));
        }
    }
    check_endpoints(env, LatticePoint::new(start[0], i), LatticePoint::new(end[end.len() - 1], j))
}

/// Maximum total energy `M^k` of k separate paths from `(start_p, i)` to `(end_p, j)`.
pub fn multi_last_passage<T: Scalar>(
    env: &Environment<T>,
    start: &[usize],
    i: i64,
    end: &[usize],
    j: i64,
) -> Result<T> {
    multi_endpoints(env, start, i, end, j)?;
    MultiTable::compute(env, i, start, j, end, false)?.value(end)
}

/// A k-tuple attaining `M^k`.
pub fn multi_geodesic<T: Scalar>(
    env: &Environment<T>,
    start: &[usize],
    i: i64,
    end: &[usize],
    j: i64,
    tie: TieRule,
) -> Result<MultiStaircase> {
    multi_endpoints(env, start, i, end, j)?;
    MultiTable::compute(env, i, start, j, end, true)?.backtrack(env, end, tie)
}

/// Exhaustive enumeration of all nondecreasing jump sequences from `x` on
/// line `i` to `y` on line `j`.
pub fn enumerate_jump_sequences(x: usize, y: usize, jumps: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(lo: usize, y: usize, left: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if left == 0 {
            f(cur);
            return;
        }
        for z in lo..=y {
            cur.push(z);
            rec(z, y, left - 1, cur, f);
            cur.pop();
        }
    }
    let mut cur = Vec::with_capacity(jumps);
    rec(x, y, jumps, &mut cur, f);
}

/// Brute-force `M^k` over all feasible jump matrices.
pub fn brute_force_multi<T: Scalar>(
    env: &Environment<T>,
    start: &[usize],
    i: i64,
    end: &[usize],
    j: i64,
) -> Result<T> {
    multi_endpoints(env, start, i, end, j)?;
    let k = start.len();
    if j - i > 3 || env.grid().num_cells > 8 || k > 3 {
        return Err(LppError::Size(format!(
            "brute force limited to 3 line steps, 8 cells, 3 paths (got {}, {}, {k})",
            j - i,
            env.grid().num_cells
        )));
    }
    let lines = (j - i) as usize;
    // per path: every staircase with its energy
    let mut per_path: Vec<Vec<(Staircase, T)>> = Vec::with_capacity(k);
    for p in 0..k {
        let mut list = Vec::new();
        let (s, e) = (LatticePoint::new(start[p], i), LatticePoint::new(end[p], j));
        enumerate_jump_sequences(start[p], end[p], lines, &mut |z| {
            let st = Staircase::new(s, e, z.to_vec()).expect("enumerated staircase is valid");
            let mut en = T::zero();
            for m in i..=j {
                let (a, b) = st.interval(m);
                en = en + (env.row(m)[b] - env.row(m)[a]);
            }
            list.push((st, en));
        });
        per_path.push(list);
    }
    fn rec<T: Scalar>(
        per_path: &[Vec<(Staircase, T)>],
        p: usize,
        prev: Option<&Staircase>,
        acc: T,
        best: &mut Option<T>,
    ) {
        if p == per_path.len() {
            if best.map_or(true, |b| acc > b) {
                *best = Some(acc);
            }
            return;
        }
        for (s, e) in &per_path[p] {
            if let Some(q) = prev {
                if q.line_range().any(|m| q.exit(m) > s.entry(m)) {
                    continue;
                }
            }
            rec(per_path, p + 1, Some(s), acc + *e, best);
        }
    }
    let mut best = None;
    rec(&per_path, 0, None, T::zero(), &mut best);
    best.ok_or_else(|| {
        LppError::Infeasible(format!("no {k} separate paths from {start:?} to {end:?}"))
    })
}
