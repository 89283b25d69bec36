//! Scaled line ensembles and regularity audits.
//!
//! The forward ensemble rooted at `(x, t1)` has curves whose partial sums are
//! the watermelon weights `Wgt_{n,k;(x 1,t1)}^{(y 1,t2)}` as functions of `y`.

use crate::environment::Environment;
use crate::error::{param, LppError, Result};
use crate::lpp::MultiTable;
use crate::scaled::{self, centered_weight, CompatibleTriple, ScaledPoint};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Forward,
    Backward,
    NormalizedForward,
    NormalizedBackward,
}

impl EnsembleKind {
    pub fn is_normalized(self) -> bool {
        matches!(self, EnsembleKind::NormalizedForward | EnsembleKind::NormalizedBackward)
    }
}

/// Curves `values[i][s]` over the sample locations `domain[s]`, curve 1 on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineEnsemble<T> {
    pub kind: EnsembleKind,
    pub triple: CompatibleTriple,
    /// Snapped root location.
    pub root: ScaledPoint,
    pub domain: Vec<f64>,
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> LineEnsemble<T> {
    pub fn curve_count(&self) -> usize {
        self.values.len()
    }

    /// Curve `i` (1-based) at sample `s`.
    pub fn value(&self, i: usize, s: usize) -> T {
        self.values[i - 1][s]
    }

    /// Largest violation of `values(i, s) >= values(i+1, s)`, or zero.
    pub fn ordering_violation(&self) -> T {
        let mut worst = T::zero();
        for w in self.values.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                worst = worst.max(*b - *a);
            }
        }
        worst
    }

    /// Partial sums `sum_{i <= k} values(i, s)`.
    pub fn partial_sum(&self, k: usize, s: usize) -> T {
        (0..k).fold(T::zero(), |acc, i| acc + self.values[i][s])
    }
}

/// Unscaled watermelon maxima `M^k` from `(gx, line1)` to `(g, line2)`, for
/// `k = 1..=k_max` and each `g` in `gs`.
pub fn watermelon_maxima<T: Scalar>(
    env: &Environment<T>,
    line1: i64,
    gx: usize,
    line2: i64,
    gs: &[usize],
    k_max: usize,
) -> Result<Vec<Vec<T>>> {
    if gs.is_empty() {
        return param("no sample locations");
    }
    if k_max == 0 || k_max as i64 > line2 - line1 + 1 {
        return param(format!(
            "k_max = {k_max} outside [1, {}]",
            line2 - line1 + 1
        ));
    }
    let hi = *gs.iter().max().unwrap();
    if gs.iter().any(|&g| g < gx) {
        return Err(LppError::Infeasible("sample location west of the root".into()));
    }
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let tab = MultiTable::compute(env, line1, &vec![gx; k], line2, &vec![hi; k], false)?;
        let diag = tab.diagonal();
        let row = gs
            .iter()
            .map(|&g| {
                diag[g - gx].1.ok_or_else(|| LppError::Infeasible(format!("{k}-watermelon to {g} infeasible")))
            })
            .collect::<Result<Vec<T>>>()?;
        out.push(row);
    }
    Ok(out)
}

/// Unscaled ensemble: successive differences of the watermelon maxima.
pub fn unscaled_curves<T: Scalar>(maxima: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out = Vec::with_capacity(maxima.len());
    for k in 0..maxima.len() {
        if k == 0 {
            out.push(maxima[0].clone());
        } else {
            out.push(maxima[k].iter().zip(&maxima[k - 1]).map(|(&a, &b)| a - b).collect());
        }
    }
    out
}

/// Scaled curve value from an unscaled curve value at displacement `dy = Y - X`.
pub fn scale_curve_value<T: Scalar>(n: u64, lines: i64, unscaled: T, dy: f64) -> T {
    centered_weight(n, unscaled, 1, lines, dy)
}

fn snap_samples<T: Scalar>(env: &Environment<T>, n: u64, samples: &[f64], line: i64) -> Result<Vec<scaled::Snapped>> {
    samples.iter().map(|&y| scaled::snap(env, n, y, line)).collect()
}

fn build_forward<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    x: f64,
    k_max: usize,
    samples: &[f64],
) -> Result<(scaled::Snapped, Vec<scaled::Snapped>, Vec<Vec<T>>)> {
    if !env.has_line(triple.line1()) || !env.has_line(triple.line2()) {
        return Err(LppError::Domain("triple lines outside environment".into()));
    }
    if k_max == 0 || k_max as i64 > triple.lines() + 1 {
        return param(format!("k_max = {k_max} outside [1, {}]", triple.lines() + 1));
    }
    let root = scaled::snap(env, triple.n(), x, triple.line1())?;
    let ys = snap_samples(env, triple.n(), samples, triple.line2())?;
    let gs: Vec<usize> = ys.iter().map(|s| s.g).collect();
    let maxima = watermelon_maxima(env, triple.line1(), root.g, triple.line2(), &gs, k_max)?;
    let grid = env.grid();
    let x_pos = grid.position(root.g);
    let mut weights: Vec<Vec<T>> = Vec::with_capacity(k_max);
    for (k, row) in maxima.iter().enumerate() {
        weights.push(
            row.iter()
                .zip(&gs)
                .map(|(&m, &g)| centered_weight(triple.n(), m, k + 1, triple.lines(), (k + 1) as f64 * (grid.position(g) - x_pos)))
                .collect(),
        );
    }
    let mut curves = Vec::with_capacity(k_max);
    for k in 0..k_max {
        if k == 0 {
            curves.push(weights[0].clone());
        } else {
            curves.push(weights[k].iter().zip(&weights[k - 1]).map(|(&a, &b)| a - b).collect());
        }
    }
    Ok((root, ys, curves))
}

/// Forward ensemble rooted at `(x, t1)`, sampled at `y_samples` at time `t2`.
pub fn forward_ensemble<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    x: f64,
    k_max: usize,
    y_samples: &[f64],
) -> Result<LineEnsemble<T>> {
    let (root, ys, curves) = build_forward(env, triple, x, k_max, y_samples)?;
    Ok(LineEnsemble {
        kind: EnsembleKind::Forward,
        triple: *triple,
        root: ScaledPoint::new(root.x, triple.t1()),
        domain: ys.iter().map(|s| s.x).collect(),
        values: curves,
    })
}

/// Backward ensemble rooted at `(y, t2)`, sampled at `x_samples` at time `t1`.
/// Computed as the forward ensemble of the half-turn reflected environment.
pub fn backward_ensemble<T: Scalar>(
    env: &Environment<T>,
    triple: &CompatibleTriple,
    y: f64,
    k_max: usize,
    x_samples: &[f64],
) -> Result<LineEnsemble<T>> {
    let n = triple.n();
    let root = scaled::snap(env, n, y, triple.line2())?;
    let xs = snap_samples(env, n, x_samples, triple.line1())?;
    let refl = env.reflected();
    let rt = CompatibleTriple::from_lines(n, -triple.line2(), -triple.line1())?;
    let cells = env.grid().num_cells;
    // exact grid locations in the reflected frame
    let rx = scaled::scaled_x(n, refl.grid().position(cells - root.g), rt.line1());
    let rys: Vec<f64> = xs
        .iter()
        .map(|s| scaled::scaled_x(n, refl.grid().position(cells - s.g), rt.line2()))
        .collect();
    let (_, _, curves) = build_forward(&refl, &rt, rx, k_max, &rys)?;
    Ok(LineEnsemble {
        kind: EnsembleKind::Backward,
        triple: *triple,
        root: ScaledPoint::new(root.x, triple.t2()),
        domain: xs.iter().map(|s| s.x).collect(),
        values: curves,
    })
}

/// Normalized ensemble `NrL(k, z) = t12^{-1/3} L(k, root + t12^{2/3} z)`.
pub fn normalize_ensemble<T: Scalar>(l: &LineEnsemble<T>) -> Result<LineEnsemble<T>> {
    let kind = match l.kind {
        EnsembleKind::Forward => EnsembleKind::NormalizedForward,
        EnsembleKind::Backward => EnsembleKind::NormalizedBackward,
        _ => return param("ensemble is already normalized"),
    };
    let t12 = l.triple.t12();
    let (a, b) = (t12.powf(2.0 / 3.0), t12.powf(-1.0 / 3.0));
    let f = T::from_f64_lossy(b);
    Ok(LineEnsemble {
        kind,
        triple: l.triple,
        root: l.root,
        domain: l.domain.iter().map(|&y| (y - l.root.x) / a).collect(),
        values: l
            .values
            .iter()
            .map(|c| c.iter().map(|&v| v * f).collect())
            .collect(),
    })
}

/// `Q(z) = 2^{-1/2} z^2`.
pub fn parabola(z: f64) -> f64 {
    std::f64::consts::FRAC_1_SQRT_2 * z * z
}

/// Envelope of the collapse-near-infinity condition: even, affine on
/// `[0, inf)` with slope `-5 2^{-3/2} eta N^{1/9}`, and equal to
/// `(-2^{-1/2} + 2^{-5/2}) eta^2 N^{2/9}` at `eta N^{1/9}`.
pub fn collapse_envelope(eta: f64, curves: usize, z: f64) -> f64 {
    let n19 = (curves as f64).powf(1.0 / 9.0);
    let z0 = eta * n19;
    let v0 = (-(0.5f64).sqrt() + 2f64.powf(-2.5)) * eta * eta * n19 * n19;
    let slope = -5.0 * 2f64.powf(-1.5) * eta * n19;
    v0 + slope * (z.abs() - z0)
}

/// Explicit `(C_k, c_k)` in terms of `(C, c)`.
pub fn curve_constants(k: usize, c_big: f64, c: f64) -> (f64, f64) {
    let q = 3.0 - 2f64.powf(1.5);
    let c1 = (2f64.powf(-2.5) * c).min(0.125);
    let ck = (q.powf(1.5) * 0.5 * 5f64.powf(-1.5)).powi(k as i32 - 1) * c1;
    let cbk = if k == 1 {
        140.0 * c_big
    } else {
        let kf = k as f64;
        let v = 10.0 * 20f64.powf(kf - 1.0) * 5f64.powf(kf / 2.0) * (10.0 / q).powf(kf * (kf - 1.0) / 2.0) * c_big;
        v.max((c / 2.0).exp())
    };
    (cbk, ck)
}

/// One row of a tail table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub curve: usize,
    pub z: f64,
    pub s: f64,
    pub frequency: f64,
    pub count: usize,
    pub bound: f64,
    pub within_bound: bool,
}

/// Interval statistic row (infimum or supremum over the audit window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub curve: usize,
    pub s: f64,
    pub frequency: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub eta: f64,
    pub frequency: f64,
    /// Samples that had domain points outside `[-eta N^{1/9}, eta N^{1/9}]`.
    pub count: usize,
}

/// Empirical audit of the regular-ensemble tail conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub c_audit: f64,
    pub big_c_audit: f64,
    pub samples: usize,
    pub z_window: (f64, f64),
    pub s_grid: Vec<f64>,
    /// `P(NrL(1,z) + Q(z) <= -s)`.
    pub lower_tail: Vec<TailRow>,
    /// `P(NrL(1,z) + Q(z) >= s)`.
    pub upper_tail: Vec<TailRow>,
    /// `P(NrL(k,z) + Q(z) <= -s)` for `k >= 2`, against `C_k exp(-c_k s^{3/2})`.
    pub curve_lower: Vec<TailRow>,
    /// `P(inf_window NrL(k,.) + Q <= -s)`.
    pub window_infimum: Vec<WindowRow>,
    /// `P(sup_window NrL(1,.) + Q >= s)`.
    pub window_supremum: Vec<WindowRow>,
    pub envelope: EnvelopeRow,
    /// All one-point rows with `s >= 1` are within `C exp(-c s^{3/2})`.
    pub one_point_dominated: bool,
}

fn tail_bound(c_big: f64, c: f64, s: f64) -> f64 {
    c_big * (-c * s.max(0.0).powf(1.5)).exp()
}

/// Tail frequencies of a batch of normalized ensembles sharing one domain.
pub fn regularity_report(
    samples: &[LineEnsemble<f64>],
    c_audit: f64,
    big_c_audit: f64,
    z_window: (f64, f64),
    s_grid: &[f64],
) -> Result<RegularityReport> {
    if samples.len() < 30 {
        return Err(LppError::Statistics(format!("need at least 30 samples, got {}", samples.len())));
    }
    if s_grid.is_empty() {
        return param("empty s grid");
    }
    if !(z_window.0 <= z_window.1) {
        return param("empty z window");
    }
    let first = &samples[0];
    for l in samples {
        if !l.kind.is_normalized() {
            return param("regularity audits take normalized ensembles");
        }
        if l.domain.len() != first.domain.len()
            || l.domain.iter().zip(&first.domain).any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return param("ensembles do not share a sample domain");
        }
    }
    let curves = samples.iter().map(|l| l.curve_count()).min().unwrap();
    let in_window: Vec<usize> =
        (0..first.domain.len()).filter(|&s| first.domain[s] >= z_window.0 && first.domain[s] <= z_window.1).collect();
    if in_window.is_empty() {
        return param("no sample location inside the z window");
    }
    let count = samples.len();
    let freq = |pred: &dyn Fn(&LineEnsemble<f64>) -> bool| {
        samples.iter().filter(|l| pred(l)).count() as f64 / count as f64
    };
    let mut lower_tail = Vec::new();
    let mut upper_tail = Vec::new();
    let mut curve_lower = Vec::new();
    let mut dominated = true;
    for &s in s_grid {
        let bound = tail_bound(big_c_audit, c_audit, s);
        for &zi in &in_window {
            let z = first.domain[zi];
            let q = parabola(z);
            let lo = freq(&|l| l.value(1, zi) + q <= -s);
            let hi = freq(&|l| l.value(1, zi) + q >= s);
            if s >= 1.0 && (lo > bound || hi > bound) {
                dominated = false;
            }
            lower_tail.push(TailRow { curve: 1, z, s, frequency: lo, count, bound, within_bound: lo <= bound });
            upper_tail.push(TailRow { curve: 1, z, s, frequency: hi, count, bound, within_bound: hi <= bound });
            for k in 2..=curves {
                let (ck_big, ck) = curve_constants(k, big_c_audit, c_audit);
                let b = tail_bound(ck_big, ck, s);
                let f = freq(&|l| l.value(k, zi) + q <= -s);
                curve_lower.push(TailRow { curve: k, z, s, frequency: f, count, bound: b, within_bound: f <= b });
            }
        }
    }
    let mut window_infimum = Vec::new();
    let mut window_supremum = Vec::new();
    for &s in s_grid {
        for k in 1..=curves {
            let f = freq(&|l| in_window.iter().any(|&zi| l.value(k, zi) + parabola(l.domain[zi]) <= -s));
            window_infimum.push(WindowRow { curve: k, s, frequency: f, count });
        }
        let f = freq(&|l| in_window.iter().any(|&zi| l.value(1, zi) + parabola(l.domain[zi]) >= s));
        window_supremum.push(WindowRow { curve: 1, s, frequency: f, count });
    }
    let eta = c_audit;
    let mut env_count = 0;
    let mut env_hits = 0;
    for l in samples {
        let big_n = (l.triple.lines() + 1) as usize;
        let cut = eta * (big_n as f64).powf(1.0 / 9.0);
        let outside: Vec<usize> = (0..l.domain.len()).filter(|&s| l.domain[s].abs() > cut).collect();
        if outside.is_empty() {
            continue;
        }
        env_count += 1;
        if outside.iter().any(|&s| l.value(1, s) > collapse_envelope(eta, big_n, l.domain[s])) {
            env_hits += 1;
        }
    }
    let envelope = EnvelopeRow {
        eta,
        frequency: if env_count == 0 { 0.0 } else { env_hits as f64 / env_count as f64 },
        count: env_count,
    };
    Ok(RegularityReport {
        c_audit,
        big_c_audit,
        samples: count,
        z_window,
        s_grid: s_grid.to_vec(),
        lower_tail,
        upper_tail,
        curve_lower,
        window_infimum,
        window_supremum,
        envelope,
        one_point_dominated: dominated,
    })
}

/// Default audit lattice of `(c, C)` pairs.
pub fn default_audit_lattice() -> Vec<(f64, f64)> {
    let mut v = Vec::new();
    for &c in &[0.05, 0.1, 0.2, 0.5, 1.0] {
        for &cb in &[1.0, 5.0, 10.0, 50.0] {
            v.push((c, cb));
        }
    }
    v
}

/// First lattice pair (by decreasing strength: larger `c`, then smaller `C`)
/// whose bound dominates the one-point tails at the given `z` for `s` in
/// `s_grid` with `s >= 1`.
pub fn dominating_pair(
    samples: &[LineEnsemble<f64>],
    lattice: &[(f64, f64)],
    z: f64,
    s_grid: &[f64],
) -> Result<Option<(f64, f64)>> {
    let mut pairs = lattice.to_vec();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    let first = samples.first().ok_or_else(|| LppError::Statistics("no samples".into()))?;
    let zi = (0..first.domain.len())
        .min_by(|&a, &b| (first.domain[a] - z).abs().partial_cmp(&(first.domain[b] - z).abs()).unwrap())
        .ok_or_else(|| LppError::Parameter("empty domain".into()))?;
    let zz = first.domain[zi];
    for (c, cb) in pairs {
        let rep = regularity_report(samples, c, cb, (zz, zz), s_grid)?;
        if rep.one_point_dominated {
            return Ok(Some((c, cb)));
        }
    }
    Ok(None)
}
