//! Cadlag step paths, the Skorokhod J1 distance for step paths, and a
//! certified upper bound on the exclusion-set metric
//!
//! `d(x, y) = inf_{A, f} max( sup_A |x - y o f|, ||Id - f||,
//!                            leb([0,T] \ A), |x(T) - y(T)| )`
//!
//! where f ranges over strictly increasing continuous time changes fixing
//! 0 and T, and A over finite unions of half-open intervals.
//!
//! Exact global minimization over (A, f) jointly is a combinatorial
//! problem this module does not attempt; instead it searches a restricted
//! but witness-certified family: for each candidate time change the
//! optimal exclusion set is computed exactly by a level sweep (to push
//! the on-A supremum below a threshold c one must exclude exactly the
//! region where the difference exceeds c, so the sweep over difference
//! levels is optimal for fixed f). Every result is an upper bound and
//! carries the achieving (A, f).

use crate::error::{Error, Result};
use serde::Serialize;

/// Piecewise-constant cadlag path on [0, T] with finitely many jumps.
/// `values[i]` holds on `[times[i], times[i+1])` and `values.last()` up
/// to and including T. Adjacent equal values are coalesced on
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPath {
    horizon: f64,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepPath {
    pub fn new(horizon: f64, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidPath(format!("bad horizon {horizon}")));
        }
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::InvalidPath("times/values mismatch or empty".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPath("first time must be 0".into()));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidPath("jump times must strictly increase".into()));
            }
        }
        if *times.last().unwrap() > horizon {
            return Err(Error::InvalidPath("jump time past the horizon".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("non-finite value".into()));
        }
        // canonical form: drop non-jumps
        let mut ct = Vec::with_capacity(times.len());
        let mut cv = Vec::with_capacity(values.len());
        for (t, v) in times.into_iter().zip(values) {
            if cv.last() == Some(&v) {
                continue;
            }
            ct.push(t);
            cv.push(v);
        }
        Ok(Self {
            horizon,
            times: ct,
            values: cv,
        })
    }

    pub fn constant(horizon: f64, value: f64) -> Result<Self> {
        Self::new(horizon, vec![0.0], vec![value])
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_jumps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn value_at(&self, t: f64) -> f64 {
        debug_assert!((0.0..=self.horizon).contains(&t));
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => self.values[i],
            Err(i) => self.values[i - 1],
        }
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// (start, end, value) triples covering [0, T].
    pub fn segments(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.times.len());
        for i in 0..self.times.len() {
            let end = if i + 1 < self.times.len() {
                self.times[i + 1]
            } else {
                self.horizon
            };
            out.push((self.times[i], end, self.values[i]));
        }
        out
    }

    pub fn uniform_distance(&self, other: &Self) -> Result<f64> {
        if self.horizon != other.horizon {
            return Err(Error::InvalidPath("horizon mismatch".into()));
        }
        let mut sup = 0.0f64;
        for (s, _e, _v) in merged_breakpoints(self, other) {
            sup = sup.max((self.value_at(s) - other.value_at(s)).abs());
        }
        Ok(sup.max((self.final_value() - other.final_value()).abs()))
    }

    /// Two-column CSV with the horizon carried in a comment header:
    /// `# horizon: T` then `time,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# horizon: {}\ntime,value\n", self.horizon);
        for (t, v) in self.times.iter().zip(&self.values) {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut horizon = None;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(h) = rest.strip_prefix("horizon:") {
                    horizon = Some(h.trim().parse::<f64>().map_err(|e| {
                        Error::Parse(format!("line {}: bad horizon: {e}", lineno + 1))
                    })?);
                }
                continue;
            }
            if line == "time,value" {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected time,value", lineno + 1)))?;
            times.push(
                a.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: bad time: {e}", lineno + 1)))?,
            );
            values.push(
                b.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: bad value: {e}", lineno + 1)))?,
            );
        }
        let horizon = horizon.ok_or_else(|| Error::Parse("missing '# horizon:' header".into()))?;
        Self::new(horizon, times, values)
    }
}

/// Strictly increasing piecewise-linear time change on [0, T] with
/// f(0) = 0 and f(T) = T.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SrtMap {
    horizon: f64,
    /// interior knots (t, f(t)), strictly increasing in both coordinates
    knots: Vec<(f64, f64)>,
}

impl SrtMap {
    pub fn identity(horizon: f64) -> Self {
        Self {
            horizon,
            knots: Vec::new(),
        }
    }

    pub fn from_knots(horizon: f64, knots: Vec<(f64, f64)>) -> Result<Self> {
        let mut prev = (0.0f64, 0.0f64);
        for &(t, ft) in &knots {
            if !(t > prev.0 && ft > prev.1) {
                return Err(Error::InvalidPath(format!(
                    "knots must strictly increase in both coordinates: {:?} then ({t}, {ft})",
                    prev
                )));
            }
            if t >= horizon || ft >= horizon {
                return Err(Error::InvalidPath("interior knot at or past the horizon".into()));
            }
            prev = (t, ft);
        }
        Ok(Self { horizon, knots })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn is_identity(&self) -> bool {
        self.knots.iter().all(|&(t, ft)| t == ft)
    }

    fn segment_endpoints(&self) -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(self.knots.len() + 2);
        pts.push((0.0, 0.0));
        pts.extend_from_slice(&self.knots);
        pts.push((self.horizon, self.horizon));
        pts
    }

    pub fn apply(&self, t: f64) -> f64 {
        let pts = self.segment_endpoints();
        for w in pts.windows(2) {
            let (t0, f0) = w[0];
            let (t1, f1) = w[1];
            if t <= t1 {
                if t1 == t0 {
                    return f1;
                }
                return (f0 + (t - t0) / (t1 - t0) * (f1 - f0)).clamp(f0, f1);
            }
        }
        self.horizon
    }

    /// The inverse time change (swap coordinates).
    pub fn inverse(&self) -> Self {
        Self {
            horizon: self.horizon,
            knots: self.knots.iter().map(|&(t, ft)| (ft, t)).collect(),
        }
    }

    /// sup |f(t) - t|; attained at a knot for piecewise-linear f.
    pub fn sup_dist_to_identity(&self) -> f64 {
        self.knots
            .iter()
            .map(|&(t, ft)| (ft - t).abs())
            .fold(0.0, f64::max)
    }
}

/// Finite union of disjoint half-open intervals [a, b) inside [0, T].
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ExclusionSet {
    intervals: Vec<(f64, f64)>,
}

impl ExclusionSet {
    pub fn from_intervals(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        intervals.retain(|&(a, b)| b > a);
        intervals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for w in intervals.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::InvalidPath("overlapping intervals".into()));
            }
        }
        if intervals.iter().any(|&(a, b)| !(a.is_finite() && b.is_finite()) || a < 0.0) {
            return Err(Error::InvalidPath("bad interval bounds".into()));
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|&(a, b)| b - a).sum()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= t && t < b)
    }
}

// ---------------------------------------------------------------------------
// J1 alignment
// ---------------------------------------------------------------------------

/// Result of the J1 computation. `exact` is set when the full alignment
/// program ran (no band restriction); a banded run still yields a valid
/// upper bound together with its time change.
#[derive(Debug, Clone)]
pub struct J1Result {
    pub value: f64,
    pub exact: bool,
    pub srt: SrtMap,
}

/// Skorokhod J1 distance between step paths on a common horizon, by a
/// min-max dynamic program over monotone alignments of the two jump
/// sequences (matched jumps, unmatched-x jumps, and unmatched-y jumps
/// relocated into the enclosing segment). For step paths every time
/// change induces such an alignment, so the unrestricted program is
/// exact; above `budget` cells a diagonal band is used instead and the
/// result is flagged as an upper bound.
pub fn j1_distance(x: &StepPath, y: &StepPath, budget: usize) -> Result<J1Result> {
    if x.horizon() != y.horizon() {
        return Err(Error::InvalidPath("horizon mismatch".into()));
    }
    let forward = j1_alignment(x, y, budget);
    let backward = j1_alignment(y, x, budget);
    Ok(if backward.value < forward.value {
        J1Result {
            value: backward.value,
            exact: backward.exact,
            srt: backward.srt.inverse(),
        }
    } else {
        forward
    })
}

fn j1_alignment(x: &StepPath, y: &StepPath, budget: usize) -> J1Result {
    let t_end = x.horizon();
    let a = x.values();
    let b = y.values();
    let xt = x.times(); // xt[p] = time of x's p-th jump (p >= 1)
    let yt = y.times();
    let m = a.len() - 1;
    let l = b.len() - 1;
    let cells = (m + 1) * (l + 1);
    let band = if cells > budget.max(256) {
        Some(((budget.max(256) / (m.max(l) + 1)) / 2).max(1))
    } else {
        None
    };
    let exact = band.is_none();

    let x_seg_end = |p: usize| if p + 1 <= m { xt[p + 1] } else { t_end };
    let inf = f64::INFINITY;
    let mut dp = vec![inf; cells];
    let mut parent = vec![0u8; cells]; // 1 = from left (y jump), 2 = from up (x jump), 3 = diagonal
    let idx = |p: usize, q: usize| p * (l + 1) + q;

    let in_band = |p: usize, q: usize| -> bool {
        match band {
            None => true,
            Some(w) => {
                let diag = if m == 0 { 0.0 } else { p as f64 * l as f64 / m as f64 };
                (q as f64 - diag).abs() <= w as f64
            }
        }
    };

    dp[idx(0, 0)] = (a[0] - b[0]).abs();
    for p in 0..=m {
        for q in 0..=l {
            if (p, q) == (0, 0) || !in_band(p, q) {
                continue;
            }
            let val_cost = (a[p] - b[q]).abs();
            let mut best = inf;
            let mut par = 0u8;
            if q >= 1 && dp[idx(p, q - 1)] < inf {
                // y's q-th jump relocated into x's segment p
                let w_lo = xt[p];
                let w_hi = x_seg_end(p);
                let reloc = if yt[q] < w_lo {
                    w_lo - yt[q]
                } else if yt[q] > w_hi {
                    yt[q] - w_hi
                } else {
                    0.0
                };
                let c = dp[idx(p, q - 1)].max(reloc);
                if c < best {
                    best = c;
                    par = 1;
                }
            }
            if p >= 1 && dp[idx(p - 1, q)] < inf {
                let c = dp[idx(p - 1, q)];
                if c < best {
                    best = c;
                    par = 2;
                }
            }
            if p >= 1 && q >= 1 && dp[idx(p - 1, q - 1)] < inf {
                let c = dp[idx(p - 1, q - 1)].max((xt[p] - yt[q]).abs());
                if c < best {
                    best = c;
                    par = 3;
                }
            }
            dp[idx(p, q)] = best.max(val_cost);
            parent[idx(p, q)] = par;
        }
    }

    // reconstruct the alignment and build the time change
    let mut moves = Vec::new();
    let (mut p, mut q) = (m, l);
    while (p, q) != (0, 0) {
        let par = parent[idx(p, q)];
        moves.push(par);
        match par {
            1 => q -= 1,
            2 => p -= 1,
            3 => {
                p -= 1;
                q -= 1;
            }
            _ => break, // unreachable for feasible tables
        }
    }
    moves.reverse();

    let mut knots: Vec<(f64, f64)> = Vec::new();
    let (mut p, mut q) = (0usize, 0usize);
    let mut prev_t = 0.0f64;
    for mv in moves {
        match mv {
            2 => {
                p += 1;
            }
            3 => {
                p += 1;
                q += 1;
                if xt[p] < t_end && yt[q] < t_end {
                    knots.push((xt[p], yt[q]));
                    prev_t = xt[p];
                }
            }
            1 => {
                q += 1;
                // place y's jump strictly inside (max(seg start, prev), seg end)
                let w_lo = xt[p].max(prev_t);
                let w_hi = x_seg_end(p);
                let margin = (w_hi - w_lo).max(1e-308) * 1e-6;
                let tau = yt[q].clamp(w_lo + margin, (w_hi - margin).max(w_lo + margin));
                if tau > prev_t && tau < t_end && yt[q] < t_end {
                    knots.push((tau, yt[q]));
                    prev_t = tau;
                }
            }
            _ => {}
        }
    }
    // knots placed in cramped windows can collide after f64 rounding;
    // bump by ulps (or drop, in degenerate ties) to restore strictness.
    // The value reported is the program optimum; the map is the witness
    // and is evaluated exactly wherever it is used.
    let mut cleaned: Vec<(f64, f64)> = Vec::with_capacity(knots.len());
    for (t, ft) in knots {
        let mut t = t;
        if let Some(&(pt, pf)) = cleaned.last() {
            if ft <= pf {
                continue;
            }
            if t <= pt {
                t = next_after_up(pt);
            }
        }
        if t >= t_end || ft >= t_end {
            continue;
        }
        cleaned.push((t, ft));
    }
    let srt = SrtMap::from_knots(t_end, cleaned).unwrap_or_else(|_| SrtMap::identity(t_end));
    J1Result {
        value: dp[idx(m, l)],
        exact,
        srt,
    }
}

// ---------------------------------------------------------------------------
// d_lambda upper bound
// ---------------------------------------------------------------------------

/// The four quantities entering the metric's max, for a given (A, f).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WitnessTerms {
    pub sup_on_kept: f64,
    pub srt_displacement: f64,
    pub excluded_measure: f64,
    pub final_value_gap: f64,
}

impl WitnessTerms {
    pub fn max(&self) -> f64 {
        self.sup_on_kept
            .max(self.srt_displacement)
            .max(self.excluded_measure)
            .max(self.final_value_gap)
    }
}

/// Achieving pair for the reported bound. When `swapped` is set, the
/// time change applies to x in the comparison (the search ran on (y, x));
/// the bound is valid either way by symmetry of the metric.
#[derive(Debug, Clone, Serialize)]
pub struct DLambdaWitness {
    pub swapped: bool,
    pub srt: SrtMap,
    pub kept: ExclusionSet,
}

#[derive(Debug, Clone)]
pub struct DLambdaBound {
    pub value: f64,
    pub terms: WitnessTerms,
    pub witness: DLambdaWitness,
}

/// Certified upper bound on the exclusion-set metric: searches the
/// identity and the J1-optimal time change in both orientations, with
/// the exclusion set optimized exactly per candidate by a level sweep.
pub fn d_lambda_upper(x: &StepPath, y: &StepPath, budget: usize) -> Result<DLambdaBound> {
    d_lambda_upper_with(x, y, budget, &[])
}

/// Same as [`d_lambda_upper`] with extra caller-provided time-change
/// candidates (e.g. the bottleneck-collapse schedule), each applied to y.
pub fn d_lambda_upper_with(
    x: &StepPath,
    y: &StepPath,
    budget: usize,
    extra: &[SrtMap],
) -> Result<DLambdaBound> {
    if x.horizon() != y.horizon() {
        return Err(Error::InvalidPath("horizon mismatch".into()));
    }
    let mut best: Option<DLambdaBound> = None;
    for swapped in [false, true] {
        let (u, v) = if swapped { (y, x) } else { (x, y) };
        let mut candidates = vec![SrtMap::identity(u.horizon())];
        candidates.push(j1_alignment(u, v, budget).srt);
        if !swapped {
            candidates.extend(extra.iter().cloned());
        } else {
            candidates.extend(extra.iter().map(|f| f.inverse()));
        }
        for srt in candidates {
            if srt.horizon() != u.horizon() {
                return Err(Error::InvalidPath("candidate time change horizon mismatch".into()));
            }
            let (terms, kept) = best_exclusion_for(u, v, &srt);
            let bound = DLambdaBound {
                value: terms.max(),
                terms,
                witness: DLambdaWitness {
                    swapped,
                    srt: srt.clone(),
                    kept,
                },
            };
            if best.as_ref().map_or(true, |b| bound.value < b.value) {
                best = Some(bound);
            }
        }
    }
    Ok(best.expect("at least the identity candidate ran"))
}

// difference path pieces (start, end, |u - v o f|) over [0, T)
fn difference_pieces(u: &StepPath, v: &StepPath, f: &SrtMap) -> Vec<(f64, f64, f64)> {
    let t_end = u.horizon();
    let mut breaks: Vec<f64> = u.times().to_vec();
    let f_inv = f.inverse();
    for &s in v.times().iter().skip(1) {
        let t = f_inv.apply(s);
        if t > 0.0 && t < t_end {
            breaks.push(t);
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    let mut pieces = Vec::with_capacity(breaks.len());
    for (i, &s) in breaks.iter().enumerate() {
        let e = if i + 1 < breaks.len() { breaks[i + 1] } else { t_end };
        if e <= s {
            continue;
        }
        // sample strictly inside to dodge boundary rounding from f_inv
        let mid = 0.5 * (s + e);
        let d = (u.value_at(mid) - v.value_at(f.apply(mid).clamp(0.0, t_end))).abs();
        pieces.push((s, e, d));
    }
    pieces
}

// Exact optimization of the exclusion set for a fixed time change: sweep
// thresholds over the difference levels; to keep the sup at or below a
// level one must exclude exactly the pieces above it.
fn best_exclusion_for(u: &StepPath, v: &StepPath, f: &SrtMap) -> (WitnessTerms, ExclusionSet) {
    let pieces = difference_pieces(u, v, f);
    let srt_disp = f.sup_dist_to_identity();
    let final_gap = (u.final_value() - v.final_value()).abs();
    let mut levels: Vec<f64> = pieces.iter().map(|&(_, _, d)| d).collect();
    levels.push(0.0);
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup();
    let mut best_terms: Option<WitnessTerms> = None;
    let mut best_level = 0.0f64;
    for &c in &levels {
        let mut sup_keep = 0.0f64;
        let mut excluded = 0.0f64;
        for &(s, e, d) in &pieces {
            if d <= c {
                sup_keep = sup_keep.max(d);
            } else {
                excluded += e - s;
            }
        }
        let terms = WitnessTerms {
            sup_on_kept: sup_keep,
            srt_displacement: srt_disp,
            excluded_measure: excluded,
            final_value_gap: final_gap,
        };
        if best_terms.as_ref().map_or(true, |b| terms.max() < b.max()) {
            best_terms = Some(terms);
            best_level = c;
        }
    }
    let kept: Vec<(f64, f64)> = merge_adjacent(
        pieces
            .iter()
            .filter(|&&(_, _, d)| d <= best_level)
            .map(|&(s, e, _)| (s, e))
            .collect(),
    );
    (
        best_terms.expect("levels nonempty"),
        ExclusionSet::from_intervals(kept).expect("disjoint by construction"),
    )
}

fn next_after_up(x: f64) -> f64 {
    // smallest f64 strictly above x (x finite, non-negative here)
    f64::from_bits(x.to_bits() + 1)
}

fn merge_adjacent(mut intervals: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    intervals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (s, e) in intervals {
        if let Some(last) = out.last_mut() {
            if s <= last.1 {
                last.1 = last.1.max(e);
                continue;
            }
        }
        out.push((s, e));
    }
    out
}

/// Recompute the four metric terms for a stored witness; the max must
/// reproduce the reported bound.
pub fn evaluate_witness(x: &StepPath, y: &StepPath, w: &DLambdaWitness) -> Result<WitnessTerms> {
    if x.horizon() != y.horizon() {
        return Err(Error::InvalidPath("horizon mismatch".into()));
    }
    let (u, v) = if w.swapped { (y, x) } else { (x, y) };
    let pieces = difference_pieces(u, v, &w.srt);
    let mut sup_keep = 0.0f64;
    let mut excluded = 0.0f64;
    for &(s, e, d) in &pieces {
        // a piece may straddle the kept set; split on the kept intervals
        let mut covered = 0.0;
        for &(a, b) in w.kept.intervals() {
            let lo = s.max(a);
            let hi = e.min(b);
            if hi > lo {
                covered += hi - lo;
                sup_keep = sup_keep.max(d);
            }
        }
        excluded += (e - s) - covered;
    }
    Ok(WitnessTerms {
        sup_on_kept: sup_keep,
        srt_displacement: w.srt.sup_dist_to_identity(),
        excluded_measure: excluded,
        final_value_gap: (u.final_value() - v.final_value()).abs(),
    })
}

fn merged_breakpoints(x: &StepPath, y: &StepPath) -> Vec<(f64, f64, f64)> {
    let mut breaks: Vec<f64> = x.times().iter().chain(y.times().iter()).copied().collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    let t_end = x.horizon();
    let mut out = Vec::with_capacity(breaks.len());
    for (i, &s) in breaks.iter().enumerate() {
        let e = if i + 1 < breaks.len() { breaks[i + 1] } else { t_end };
        if e > s {
            out.push((s, e, 0.0));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Convergence-in-measure diagnostics
// ---------------------------------------------------------------------------

/// Bounded continuous test functions with closed-form segment integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TestFunction {
    /// s^i v^j with i + j <= 3
    Monomial { i: u32, j: u32 },
    /// clip(v, -1, 1) * sin(omega s + phase)
    Sinusoid { omega: f64, phase: f64 },
}

impl TestFunction {
    /// integral over [t0, t1) of g(s, v) ds for constant v.
    fn segment_integral(&self, t0: f64, t1: f64, v: f64) -> f64 {
        match *self {
            TestFunction::Monomial { i, j } => {
                let p = i as i32 + 1;
                v.powi(j as i32) * (t1.powi(p) - t0.powi(p)) / p as f64
            }
            TestFunction::Sinusoid { omega, phase } => {
                let vc = v.clamp(-1.0, 1.0);
                vc * ((omega * t0 + phase).cos() - (omega * t1 + phase).cos()) / omega
            }
        }
    }
}

/// The built-in library: all monomials of degree at most 3 plus two
/// sinusoids.
pub fn standard_test_functions() -> Vec<TestFunction> {
    let mut fns = Vec::new();
    for i in 0..=3u32 {
        for j in 0..=(3 - i) {
            fns.push(TestFunction::Monomial { i, j });
        }
    }
    fns.push(TestFunction::Sinusoid {
        omega: std::f64::consts::PI,
        phase: 0.0,
    });
    fns.push(TestFunction::Sinusoid {
        omega: 2.0 * std::f64::consts::PI,
        phase: 0.5,
    });
    fns
}

/// Per-function gaps |int g(s, x(s)) ds - int g(s, y(s)) ds| plus the
/// final-value gap: the statistics whose joint vanishing characterizes
/// convergence in measure on the path space.
#[derive(Debug, Clone, Serialize)]
pub struct CimStats {
    pub per_function: Vec<f64>,
    pub final_value_gap: f64,
}

impl CimStats {
    pub fn max_gap(&self) -> f64 {
        self.per_function
            .iter()
            .copied()
            .fold(self.final_value_gap, f64::max)
    }
}

pub fn convergence_in_measure_stat(
    x: &StepPath,
    y: &StepPath,
    fns: &[TestFunction],
) -> Result<CimStats> {
    if x.horizon() != y.horizon() {
        return Err(Error::InvalidPath("horizon mismatch".into()));
    }
    let mut per = Vec::with_capacity(fns.len());
    for g in fns {
        let ix: f64 = x.segments().iter().map(|&(s, e, v)| g.segment_integral(s, e, v)).sum();
        let iy: f64 = y.segments().iter().map(|&(s, e, v)| g.segment_integral(s, e, v)).sum();
        per.push((ix - iy).abs());
    }
    Ok(CimStats {
        per_function: per,
        final_value_gap: (x.final_value() - y.final_value()).abs(),
    })
}
