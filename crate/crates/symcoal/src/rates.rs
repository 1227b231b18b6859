//! Exact transition-rate machinery for symmetric coalescents: occupancy
//! distributions for the paintbox construction, collision rates, the
//! block-counting generator, arrangement counts and total coalescence
//! rates with certified tail bounds for power-law bodies.
//!
//! Power-law tails are never truncated ad hoc. The falling factorial in
//! every rate expands exactly as
//! `k_(r) / k^b = sum_j (-1)^j e_j(0..r-1) k^{r-b-j}`
//! with elementary symmetric coefficients, so tails reduce to zeta tails
//! `sum_{k>K} k^{-s}` evaluated with Euler-Maclaurin remainder bounds.

use crate::error::{Error, Result};
use crate::measures::{CoagulationMeasure, MeasureBody};
use crate::numeric::{
    choose2, ln_falling, scaled_elementary_symmetric, zeta_range, zeta_tail, Bounded,
    CompensatedSum,
};

/// A [b, (k_1, ..., k_r)]-collision: b blocks merging into r groups with
/// the given sizes. Parts are kept sorted non-increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionSignature {
    b: u64,
    parts: Vec<u64>,
}

impl CollisionSignature {
    pub fn new(b: u64, parts: &[u64]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidSignature("no parts".into()));
        }
        if parts.iter().any(|&p| p == 0) {
            return Err(Error::InvalidSignature("zero-sized part".into()));
        }
        let sum: u64 = parts.iter().sum();
        if sum != b {
            return Err(Error::InvalidSignature(format!(
                "parts sum to {sum}, expected b = {b}"
            )));
        }
        let mut parts = parts.to_vec();
        parts.sort_unstable_by(|x, y| y.cmp(x));
        Ok(Self { b, parts })
    }

    pub fn b(&self) -> u64 {
        self.b
    }

    pub fn r(&self) -> u64 {
        self.parts.len() as u64
    }

    pub fn parts(&self) -> &[u64] {
        &self.parts
    }

    /// True for the signature whose only merger is a single pair.
    pub fn is_kingman_pair(&self) -> bool {
        self.r() == self.b - 1 && self.parts[0] == 2
    }
}

/// Lower-triangular generator of a block-counting chain on {1, ..., n}.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    n: usize,
    q: Vec<f64>,
}

impl GeneratorMatrix {
    /// Build from off-diagonal entries; the diagonal is set to minus the
    /// row sum so rows sum to zero by construction.
    pub fn from_off_diagonal(n: usize, mut off: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("generator needs n >= 1".into()));
        }
        let mut q = vec![0.0f64; n * n];
        for i in 2..=n {
            let mut row = CompensatedSum::new();
            for j in 1..i {
                let v = off(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "generator entry q[{i},{j}] = {v}"
                    )));
                }
                q[(i - 1) * n + (j - 1)] = v;
                row.add(v);
            }
            q[(i - 1) * n + (i - 1)] = -row.value();
        }
        Ok(Self { n, q })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry q_{ij}, 1-based indices.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        assert!(i >= 1 && i <= self.n && j >= 1 && j <= self.n);
        self.q[(i - 1) * self.n + (j - 1)]
    }

    /// Total exit rate from state i (= -q_ii).
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.entry(i, i)
    }

    /// Largest exit rate, used as the uniformization constant.
    pub fn uniformization_rate(&self) -> f64 {
        (1..=self.n).map(|i| self.exit_rate(i)).fold(0.0, f64::max)
    }

    /// Max |row sum| over all rows; zero up to rounding for a generator.
    pub fn max_row_sum_defect(&self) -> f64 {
        (1..=self.n)
            .map(|i| {
                let mut acc = CompensatedSum::new();
                for j in 1..=self.n {
                    acc.add(self.entry(i, j));
                }
                acc.value().abs()
            })
            .fold(0.0, f64::max)
    }
}

/// P(W^{k,i} = j) for j = 1..=min(k,i): the law of the number of occupied
/// boxes when i balls are thrown uniformly into k boxes.
///
/// Computed with the ball-by-ball recurrence
/// `p_{i}(j) = p_{i-1}(j) j/k + p_{i-1}(j-1) (k-j+1)/k`,
/// which has non-negative coefficients and is therefore stable for any
/// (k, i); it evaluates the same distribution as the inclusion-exclusion
/// display (see [`occupancy_pmf_alternating`]), whose alternating terms
/// cancel catastrophically in f64 once i grows past a few dozen.
pub fn occupancy_pmf(k: u64, i: u64) -> Vec<f64> {
    assert!(k >= 1 && i >= 1);
    let jmax = k.min(i) as usize;
    let kf = k as f64;
    let mut p = vec![0.0f64; jmax + 1];
    p[1] = 1.0;
    for _ball in 2..=i {
        for j in (1..=jmax).rev() {
            let stay = p[j] * (j as f64 / kf);
            let grow = if j >= 2 {
                p[j - 1] * ((k as f64 - (j as f64 - 1.0)) / kf)
            } else {
                0.0
            };
            p[j] = stay + grow;
        }
    }
    p.remove(0);
    p
}

/// The inclusion-exclusion form of the occupancy law,
/// `C(k,j) (j/k)^i sum_r (-1)^r C(j,r) (1 - r/j)^i`,
/// evaluated in log space with compensated alternating summation.
/// Kept as an independent route for cross-checking [`occupancy_pmf`];
/// accurate to ~1e-10 absolute for i up to a few dozen.
pub fn occupancy_pmf_alternating(k: u64, i: u64) -> Vec<f64> {
    assert!(k >= 1 && i >= 1);
    let jmax = k.min(i);
    let mut out = Vec::with_capacity(jmax as usize);
    for j in 1..=jmax {
        let base = crate::numeric::ln_choose(k, j) - i as f64 * (k as f64).ln();
        let mut exps = Vec::with_capacity(j as usize);
        for r in 0..j {
            // term r: sign (-1)^r, magnitude C(j,r) (j-r)^i / k^i * C(k,j)
            let e = base + crate::numeric::ln_choose(j, r) + i as f64 * ((j - r) as f64).ln();
            exps.push((r % 2 == 0, e));
        }
        let m = exps.iter().map(|&(_, e)| e).fold(f64::NEG_INFINITY, f64::max);
        let mut acc = CompensatedSum::new();
        for (pos, e) in exps {
            let t = (e - m).exp();
            acc.add(if pos { t } else { -t });
        }
        out.push((acc.value() * m.exp()).clamp(0.0, 1.0));
    }
    out
}

/// P(C^k_n): probability that at least two of n balls thrown uniformly
/// into k boxes share a box. Equals 1 for n > k, otherwise
/// `1 - exp(lgamma(k+1) - lgamma(k-n+1) - n ln k)`, clamped to [0, 1].
pub fn collision_prob(k: u64, n: u64) -> f64 {
    assert!(k >= 1 && n >= 1);
    if n > k {
        return 1.0;
    }
    // log prod_{i=2..n} (k+1-i)/k; the ln_1p route is bit-accurate for
    // moderate n, the log-gamma route avoids the O(n) loop for huge n
    let log_no_collision = if n <= 256 {
        let kf = k as f64;
        let mut acc = CompensatedSum::new();
        for i in 1..n {
            acc.add((-(i as f64) / kf).ln_1p());
        }
        acc.value()
    } else {
        ln_falling(k, n) - n as f64 * (k as f64).ln()
    };
    (-log_no_collision.exp_m1()).clamp(0.0, 1.0)
}

// k (k-1) ... (k-r+1) / k^b, exactly in f64 whenever k^b stays inside the
// integer-exact range (so small-case rates are bit-exact), otherwise via
// logs.
fn falling_over_power(k: u64, r: u64, b: u64) -> f64 {
    debug_assert!(r <= k);
    if b as f64 * (k as f64).ln() < 36.0 {
        let mut num = 1.0f64;
        for t in 0..r {
            num *= (k - t) as f64;
        }
        num / (k as f64).powi(b as i32)
    } else {
        (ln_falling(k, r) - b as f64 * (k as f64).ln()).exp()
    }
}

// Exact tail sum_{k > kcut} k^{-beta} k_(r) / k^b for a power-law body,
// restricted to k <= cap when `cap` is finite. Uses the exact polynomial
// expansion of the falling factorial; error comes only from the
// Euler-Maclaurin remainders of the zeta tails.
fn power_law_falling_tail(beta: f64, b: u64, r: u64, kcut: u64, cap: Option<u64>) -> Bounded {
    let e = scaled_elementary_symmetric(r, 1.0, (r as usize).saturating_sub(1));
    let mut val = CompensatedSum::new();
    let mut err = 0.0;
    for (j, &ej) in e.iter().enumerate() {
        if ej == 0.0 {
            continue;
        }
        let s = beta + (b - r) as f64 + j as f64;
        let mut z = zeta_tail(s, kcut + 1);
        if let Some(cap) = cap {
            let beyond = zeta_tail(s, cap + 1);
            z.value -= beyond.value;
            z.error_bound += beyond.error_bound;
        }
        let signed = if j % 2 == 0 { ej } else { -ej };
        val.add(signed * z.value);
        err += ej.abs() * z.error_bound;
    }
    Bounded {
        value: val.value(),
        error_bound: err,
    }
}

/// Rate of one specific [b, (k_1, ..., k_r)]-collision:
/// `a 1{r=b-1, k_1=2} + sum_{k>=r} F(k) k!/(k-r)! k^{-b}`.
///
/// The all-singleton signature (r = b) is not a merger and is rejected.
pub fn collision_rate(f: &CoagulationMeasure, sig: &CollisionSignature) -> Result<f64> {
    if sig.r() == sig.b() {
        return Err(Error::InvalidSignature(
            "r = b leaves every block alone; not a coalescence event".into(),
        ));
    }
    let b = sig.b();
    let r = sig.r();
    let kingman = if sig.is_kingman_pair() {
        f.kingman_atom()
    } else {
        0.0
    };
    let body = match f.body() {
        MeasureBody::Explicit { masses } => {
            let mut acc = CompensatedSum::new();
            for &(k, m) in masses {
                if k >= r {
                    acc.add(m * falling_over_power(k, r, b));
                }
            }
            acc.value()
        }
        MeasureBody::PowerLaw { beta, truncation } => {
            // direct terms while the falling factorial still cancels
            let kcut = (4 * r * r).max(64).max(r);
            let kcut = truncation.map_or(kcut, |cap| kcut.min(cap));
            let mut acc = CompensatedSum::new();
            for k in r..=kcut {
                acc.add((k as f64).powf(-beta) * falling_over_power(k, r, b));
            }
            if truncation.map_or(true, |cap| cap > kcut) {
                let tail = power_law_falling_tail(*beta, b, r, kcut, *truncation);
                acc.add(tail.value);
            }
            acc.value()
        }
    };
    Ok(kingman + body)
}

/// Number of set partitions of [n] with block sizes (k_1, ..., k_r):
/// `n! / (prod k_i! * prod_m mult_m!)`. Exact in u128.
pub fn arrangements_count(n: u64, parts: &[u64]) -> Result<u128> {
    let sum: u64 = parts.iter().sum();
    if sum != n {
        return Err(Error::InvalidParameter(format!(
            "parts sum to {sum}, expected {n}"
        )));
    }
    if parts.iter().any(|&p| p == 0) {
        return Err(Error::InvalidParameter("zero-sized part".into()));
    }
    let mut sorted = parts.to_vec();
    sorted.sort_unstable_by(|x, y| y.cmp(x));
    let mut count: u128 = 1;
    let mut remaining = n;
    let mut idx = 0;
    while idx < sorted.len() {
        let size = sorted[idx];
        let mut copy = 0u128;
        while idx < sorted.len() && sorted[idx] == size {
            copy += 1;
            count = count
                .checked_mul(binomial_u128(remaining, size))
                .ok_or_else(|| Error::InvalidParameter("arrangement count overflow".into()))?;
            // dividing by copy! incrementally keeps every intermediate an
            // integer (unordered choices of `copy` equal-size blocks)
            count /= copy;
            remaining -= size;
            idx += 1;
        }
    }
    Ok(count)
}

// Exact: after step t the accumulator equals C(n, t+1), an integer.
fn binomial_u128(n: u64, k: u64) -> u128 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    let mut num: u128 = 1;
    for t in 0..k {
        num = num * (n - t) as u128 / (t + 1) as u128;
    }
    num
}

/// All partitions of n into positive parts, each sorted non-increasing.
/// Refused above n = 40 (partition counts explode).
pub fn integer_partitions(n: u64) -> Result<Vec<Vec<u64>>> {
    if n == 0 || n > 40 {
        return Err(Error::InvalidParameter(format!(
            "partition enumeration supports 1 <= n <= 40, got {n}"
        )));
    }
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn rec(remaining: u64, max_part: u64, current: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if remaining == 0 {
            out.push(current.clone());
            return;
        }
        let top = remaining.min(max_part);
        for part in (1..=top).rev() {
            current.push(part);
            rec(remaining - part, part, current, out);
            current.pop();
        }
    }
    rec(n, n, &mut current, &mut out);
    Ok(out)
}

// Stirling numbers of the second kind S(i, j) for i, j <= n, as f64.
// Overflows f64 past n ~ 165; callers gate on that.
fn stirling2_table(n: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0f64; n + 1]; n + 1];
    s[0][0] = 1.0;
    for i in 1..=n {
        for j in 1..=i {
            s[i][j] = s[i - 1][j - 1] + j as f64 * s[i - 1][j];
        }
    }
    s
}

/// Generator of the block-counting chain on {1, ..., n}:
/// `q_ij = a C(i,2) 1{j=i-1} + sum_k F(k) P(W^{k,i} = j)`.
pub fn block_counting_generator(f: &CoagulationMeasure, n: usize) -> Result<GeneratorMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter("generator needs n >= 2".into()));
    }
    let a = f.kingman_atom();
    // body[i][j] accumulates sum_k F(k) P(W^{k,i} = j)
    let mut body = vec![vec![0.0f64; n + 1]; n + 1];
    match f.body() {
        MeasureBody::Explicit { masses } => {
            for &(k, m) in masses {
                for i in 2..=n {
                    let pmf = occupancy_pmf(k, i as u64);
                    for (j0, &p) in pmf.iter().enumerate() {
                        body[i][j0 + 1] += m * p;
                    }
                }
            }
        }
        MeasureBody::PowerLaw { beta, truncation } => {
            if n > 150 {
                return Err(Error::Unsupported(
                    "power-law generator limited to n <= 150 (f64 Stirling overflow)".into(),
                ));
            }
            let kcut = ((4 * n * n) as u64).max(64);
            let kcut = truncation.map_or(kcut, |cap| cap.min(kcut));
            for k in 1..=kcut {
                let m = (k as f64).powf(-beta);
                for i in 2..=n {
                    let pmf = occupancy_pmf(k, i as u64);
                    for (j0, &p) in pmf.iter().enumerate() {
                        body[i][j0 + 1] += m * p;
                    }
                }
            }
            if truncation.map_or(true, |cap| cap > kcut) {
                // tail: P(W^{k,i} = j) = S2(i,j) k_(j) / k^i
                let s2 = stirling2_table(n);
                for i in 2..=n {
                    for j in 1..i {
                        let tail =
                            power_law_falling_tail(*beta, i as u64, j as u64, kcut, *truncation);
                        body[i][j] += s2[i][j] * tail.value;
                    }
                }
            }
        }
    }
    GeneratorMatrix::from_off_diagonal(n, |i, j| {
        let kingman = if j == i - 1 { a * choose2(i as u64) } else { 0.0 };
        kingman + body[i][j]
    })
}

/// Which summation route `total_rate` should take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TotalRateMethod {
    /// Enumerate integer partitions of n and sum N(n, parts) * rate.
    PartitionSum,
    /// a C(n,2) + sum_k F(k) P(C^k_n), with certified analytic tails.
    CollisionProbSum,
}

/// Total coalescence rate plus a bound on the numerical error of the
/// analytic tail (zero for finite-support bodies).
#[derive(Debug, Clone, Copy)]
pub struct TotalRate {
    pub value: f64,
    pub error_bound: f64,
}

/// Options for the collision-probability route on untruncated power laws.
#[derive(Debug, Clone, Copy)]
pub struct TotalRateOptions {
    /// The analytic tail takes over at K0 = max(2n, ceil(crossover * n^2)).
    /// The tail expansion is exact up to Euler-Maclaurin remainders, so a
    /// small crossover only sharpens the reported bound; 1/16 keeps the
    /// direct region feasible at n = 10^4.
    pub tail_crossover: f64,
}

impl Default for TotalRateOptions {
    fn default() -> Self {
        Self {
            tail_crossover: 1.0 / 16.0,
        }
    }
}

/// Total coalescence rate lambda_n for n lineages.
pub fn total_rate(
    f: &CoagulationMeasure,
    n: u64,
    method: TotalRateMethod,
    options: &TotalRateOptions,
) -> Result<TotalRate> {
    if n < 2 {
        return Err(Error::InvalidParameter("total rate needs n >= 2".into()));
    }
    match method {
        TotalRateMethod::PartitionSum => {
            if n > 40 {
                return Err(Error::InvalidParameter(
                    "partition_sum is capped at n = 40; use collision_prob_sum".into(),
                ));
            }
            let mut acc = CompensatedSum::new();
            for parts in integer_partitions(n)? {
                if parts.len() as u64 == n {
                    continue; // all singletons: not an event
                }
                let sig = CollisionSignature::new(n, &parts)?;
                let rate = collision_rate(f, &sig)?;
                let count = arrangements_count(n, &parts)? as f64;
                acc.add(count * rate);
            }
            Ok(TotalRate {
                value: acc.value(),
                error_bound: 1e-12 * acc.value().abs(),
            })
        }
        TotalRateMethod::CollisionProbSum => {
            let kingman = f.kingman_atom() * choose2(n);
            let (body, err) = match f.body() {
                MeasureBody::Explicit { masses } => {
                    let mut acc = CompensatedSum::new();
                    for &(k, m) in masses {
                        acc.add(m * collision_prob(k, n));
                    }
                    (acc.value(), 0.0)
                }
                MeasureBody::PowerLaw { beta, truncation } => {
                    power_law_collision_sum(*beta, *truncation, n, options)
                }
            };
            Ok(TotalRate {
                value: kingman + body,
                error_bound: err,
            })
        }
    }
}

// sum_k F(k) P(C^k_n) for F(k) = k^{-beta} (k <= cap when truncated).
fn power_law_collision_sum(
    beta: f64,
    cap: Option<u64>,
    n: u64,
    options: &TotalRateOptions,
) -> (f64, f64) {
    let mu = choose2(n);
    let crossover = ((options.tail_crossover * n as f64 * n as f64).ceil() as u64).max(2 * n);
    let crossover = cap.map_or(crossover, |c| c.min(crossover));

    let mut acc = CompensatedSum::new();
    // k < n: a collision is certain
    let head_top = (n - 1).min(crossover);
    acc.add(zeta_range(beta, 1, head_top));
    // n <= k <= crossover: exact collision probabilities
    for k in n..=crossover {
        let log_no = ln_falling(k, n) - n as f64 * (k as f64).ln();
        acc.add((k as f64).powf(-beta) * (-log_no.exp_m1()));
    }
    let mut err = 5e-14 * acc.value().abs();
    if cap.map_or(true, |c| c > crossover) {
        // analytic region: 1 - k_(n)/k^n = sum_{j>=1} (-1)^{j+1} e_j k^{-j}
        // with e_j the elementary symmetric polynomials of {0, ..., n-1},
        // scaled by the crossover to stay inside f64 range.
        let a = crossover as f64;
        let jmax = 80usize;
        let es = scaled_elementary_symmetric(n, a, jmax);
        let mut scale = 1.0f64; // a^j, folded in incrementally
        let mut tail = CompensatedSum::new();
        let mut truncated_at = jmax;
        for j in 1..=jmax {
            scale *= a;
            if es[j] == 0.0 {
                truncated_at = j;
                break;
            }
            let s = beta + j as f64;
            let mut z = zeta_tail(s, crossover + 1);
            if let Some(c) = cap {
                let beyond = zeta_tail(s, c + 1);
                z.value -= beyond.value;
                z.error_bound += beyond.error_bound;
            }
            let term = es[j] * scale * z.value;
            tail.add(if j % 2 == 1 { term } else { -term });
            err += es[j] * scale * z.error_bound;
            if term.abs() < 1e-16 * (acc.value() + tail.value()).abs() && j > 4 {
                truncated_at = j;
                break;
            }
        }
        // bound the dropped part of the alternating series by the next term,
        // using e_j <= mu^j / j!
        if truncated_at < jmax {
            let j = truncated_at + 1;
            let mut bound = (beta + j as f64 - 1.0).recip() * (crossover as f64).powf(1.0 - beta);
            for t in 1..=j {
                bound *= mu / (t as f64 * crossover as f64);
            }
            err += bound.abs();
        }
        acc.add(tail.value());
    }
    (acc.value(), err)
}

/// Predicted total rate from the limit theorems for the (beta, S) family:
/// `2^{beta-1} Gamma(beta) / (1-beta) * n^{2(1-beta)}` for beta < 1 and
/// `2 ln n` for beta = 1.
pub fn total_rate_asymptotic(beta: f64, n: u64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "asymptotic rate needs beta in (0, 1], got {beta}"
        )));
    }
    if (beta - 1.0).abs() < 1e-12 {
        return Ok(2.0 * (n as f64).ln());
    }
    let constant = (beta - 1.0).exp2() * statrs::function::gamma::gamma(beta) / (1.0 - beta);
    Ok(constant * (n as f64).powf(2.0 * (1.0 - beta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::CoagulationMeasure;

    // Enumeration oracle: distribution of the number of occupied boxes over
    // all k^i allocations.
    fn occupancy_enum(k: u64, i: u64) -> Vec<f64> {
        let jmax = k.min(i) as usize;
        let mut counts = vec![0u64; jmax + 1];
        let total = (k as u128).pow(i as u32);
        let mut alloc = vec![0u64; i as usize];
        loop {
            let mut seen = std::collections::HashSet::new();
            for &a in &alloc {
                seen.insert(a);
            }
            counts[seen.len()] += 1;
            // odometer
            let mut pos = 0;
            loop {
                if pos == alloc.len() {
                    let probs: Vec<f64> = counts[1..]
                        .iter()
                        .map(|&c| c as f64 / total as f64)
                        .collect();
                    return probs;
                }
                alloc[pos] += 1;
                if alloc[pos] == k {
                    alloc[pos] = 0;
                    pos += 1;
                } else {
                    break;
                }
            }
        }
    }

    #[test]
    fn occupancy_matches_enumeration_exactly() {
        for k in 1..=6u64 {
            for i in 1..=6u64 {
                let fast = occupancy_pmf(k, i);
                let brute = occupancy_enum(k, i);
                assert_eq!(fast.len(), brute.len());
                for (a, b) in fast.iter().zip(brute.iter()) {
                    assert!((a - b).abs() < 1e-14, "k={k} i={i}: {fast:?} vs {brute:?}");
                }
            }
        }
    }

    #[test]
    fn occupancy_spec_examples() {
        let p = occupancy_pmf(2, 2);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        let p = occupancy_pmf(1, 7);
        assert_eq!(p, vec![1.0]);
        let p = occupancy_pmf(3, 2);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn occupancy_alternating_agrees_with_recurrence() {
        for k in [2u64, 5, 9, 17] {
            for i in [2u64, 7, 15, 24] {
                let a = occupancy_pmf(k, i);
                let b = occupancy_pmf_alternating(k, i);
                for (x, y) in a.iter().zip(b.iter()) {
                    assert!((x - y).abs() < 5e-10, "k={k} i={i}");
                }
            }
        }
    }

    #[test]
    fn occupancy_rows_sum_to_one() {
        for (k, i) in [(7u64, 200u64), (100, 50), (1000, 400), (3, 1000)] {
            let total: f64 = occupancy_pmf(k, i).iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "k={k} i={i}: {total}");
        }
    }

    #[test]
    fn collision_prob_values() {
        assert!((collision_prob(2, 2) - 0.5).abs() < 1e-15);
        assert_eq!(collision_prob(3, 4), 1.0);
        assert!((collision_prob(4, 3) - 0.625).abs() < 1e-15);
        assert_eq!(collision_prob(10, 1), 0.0);
    }

    // Enumeration oracle for a specific collision: probability that the
    // co-box partition of [b] equals the canonical partition with the given
    // part sizes, when throwing b balls into k boxes.
    fn collision_enum(k: u64, parts: &[u64]) -> f64 {
        let b: u64 = parts.iter().sum();
        // canonical partition: first part = labels 0..parts[0], etc.
        let mut owner = vec![0usize; b as usize];
        let mut idx = 0usize;
        for (p, &size) in parts.iter().enumerate() {
            for _ in 0..size {
                owner[idx] = p;
                idx += 1;
            }
        }
        let total = (k as u128).pow(b as u32);
        let mut hits = 0u64;
        let mut alloc = vec![0u64; b as usize];
        'outer: loop {
            // does the allocation induce exactly the canonical partition?
            let mut part_box = vec![u64::MAX; parts.len()];
            let mut ok = true;
            for (ball, &a) in alloc.iter().enumerate() {
                let p = owner[ball];
                if part_box[p] == u64::MAX {
                    part_box[p] = a;
                } else if part_box[p] != a {
                    ok = false;
                    break;
                }
            }
            if ok {
                // distinct boxes across parts
                let mut sorted = part_box.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() == parts.len() {
                    hits += 1;
                }
            }
            let mut pos = 0;
            loop {
                if pos == alloc.len() {
                    break 'outer;
                }
                alloc[pos] += 1;
                if alloc[pos] == k {
                    alloc[pos] = 0;
                    pos += 1;
                } else {
                    break;
                }
            }
        }
        hits as f64 / total as f64
    }

    #[test]
    fn collision_rate_spec_examples() {
        let kingman = CoagulationMeasure::kingman(1.0);
        let sig = CollisionSignature::new(2, &[2]).unwrap();
        assert!((collision_rate(&kingman, &sig).unwrap() - 1.0).abs() < 1e-15);

        let star = CoagulationMeasure::explicit(0.0, &[(1, 1.0)]).unwrap();
        let all3 = CollisionSignature::new(3, &[3]).unwrap();
        assert!((collision_rate(&star, &all3).unwrap() - 1.0).abs() < 1e-15);
        let pair = CollisionSignature::new(3, &[2, 1]).unwrap();
        assert_eq!(collision_rate(&star, &pair).unwrap(), 0.0);

        let two = CoagulationMeasure::explicit(0.0, &[(2, 1.0)]).unwrap();
        let v = collision_rate(&two, &pair).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        assert!((v - collision_enum(2, &[2, 1])).abs() < 1e-15);
    }

    #[test]
    fn collision_rate_rejects_non_event() {
        let f = CoagulationMeasure::kingman(1.0);
        let sig = CollisionSignature::new(3, &[1, 1, 1]).unwrap();
        assert!(collision_rate(&f, &sig).is_err());
    }

    #[test]
    fn collision_rate_matches_enumeration_for_point_masses() {
        for k in 1..=5u64 {
            let f = CoagulationMeasure::explicit(0.0, &[(k, 1.0)]).unwrap();
            for b in 2..=6u64 {
                for parts in integer_partitions(b).unwrap() {
                    if parts.len() as u64 == b {
                        continue;
                    }
                    let sig = CollisionSignature::new(b, &parts).unwrap();
                    let rate = collision_rate(&f, &sig).unwrap();
                    let brute = collision_enum(k, &parts);
                    assert!(
                        (rate - brute).abs() < 1e-12,
                        "k={k} b={b} parts={parts:?}: {rate} vs {brute}"
                    );
                }
            }
        }
    }

    #[test]
    fn collision_rate_power_law_tail_against_direct_sum() {
        // independent slow route: direct sum until the remainder bound is tiny
        let f = CoagulationMeasure::power_law(0.0, 0.7, None).unwrap();
        let sig = CollisionSignature::new(4, &[2, 1, 1]).unwrap();
        let fast = collision_rate(&f, &sig).unwrap();
        let (b, r) = (4u64, 3u64);
        let mut direct = 0.0;
        for k in r..3_000_000u64 {
            direct += (k as f64).powf(-0.7) * (ln_falling(k, r) - b as f64 * (k as f64).ln()).exp();
        }
        // remainder < sum_{k>K} k^{-0.7} k^{r-b} = Z(1.7, K)
        let rem = zeta_tail(1.7, 3_000_000).value;
        assert!(
            (fast - direct).abs() < rem + 1e-12 * direct,
            "{fast} vs {direct} (+{rem})"
        );
    }

    #[test]
    fn signature_symmetry_rate_depends_only_on_b_and_r() {
        let pl = CoagulationMeasure::power_law(0.0, 0.7, None).unwrap();
        let ex = CoagulationMeasure::explicit(0.0, &[(2, 1.0), (3, 2.0)]).unwrap();
        for f in [&pl, &ex] {
            for b in 2..=8u64 {
                let mut by_r: std::collections::HashMap<u64, Vec<f64>> = Default::default();
                for parts in integer_partitions(b).unwrap() {
                    let r = parts.len() as u64;
                    if r == b {
                        continue;
                    }
                    // skip the Kingman indicator case mixing: include it, the
                    // indicator only fires for (2,1,...,1) which is the sole
                    // partition with r = b-1, so within-r comparison is safe.
                    let sig = CollisionSignature::new(b, &parts).unwrap();
                    by_r.entry(r).or_default().push(collision_rate(f, &sig).unwrap());
                }
                for (r, rates) in by_r {
                    for w in rates.windows(2) {
                        let rel = (w[0] - w[1]).abs() / w[0].abs().max(1e-300);
                        assert!(rel < 1e-12, "b={b} r={r}: {rates:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn arrangements_examples() {
        assert_eq!(arrangements_count(4, &[2, 2]).unwrap(), 3);
        assert_eq!(arrangements_count(3, &[2, 1]).unwrap(), 3);
        assert_eq!(arrangements_count(7, &[7]).unwrap(), 1);
        assert_eq!(arrangements_count(4, &[1, 1, 1, 1]).unwrap(), 1);
        // 6 into three pairs: 6!/(2^3 3!) = 15
        assert_eq!(arrangements_count(6, &[2, 2, 2]).unwrap(), 15);
        assert!(arrangements_count(5, &[2, 2]).is_err());
    }

    #[test]
    fn arrangements_sum_is_bell_number() {
        // sum over all partitions of n of N(n, parts) = Bell(n)
        let bell = [1u128, 1, 2, 5, 15, 52, 203, 877, 4140, 21147, 115975];
        for n in 1..=10u64 {
            let total: u128 = integer_partitions(n)
                .unwrap()
                .iter()
                .map(|p| arrangements_count(n, p).unwrap())
                .sum();
            assert_eq!(total, bell[n as usize], "n={n}");
        }
    }

    #[test]
    fn binomial_u128_pascal() {
        for n in 1..60u64 {
            for k in 1..=n {
                assert_eq!(
                    binomial_u128(n, k),
                    binomial_u128(n - 1, k - 1) + if k < n { binomial_u128(n - 1, k) } else { 0 }
                );
            }
        }
    }

    #[test]
    fn generator_spec_examples() {
        let kingman = CoagulationMeasure::kingman(1.0);
        let g = block_counting_generator(&kingman, 3).unwrap();
        assert!((g.entry(3, 2) - 3.0).abs() < 1e-12);
        assert!((g.entry(2, 1) - 1.0).abs() < 1e-12);
        assert!(g.entry(3, 1).abs() < 1e-12);

        let two = CoagulationMeasure::explicit(0.0, &[(2, 1.0)]).unwrap();
        let g = block_counting_generator(&two, 2).unwrap();
        assert!((g.entry(2, 1) - 0.5).abs() < 1e-15);

        let star = CoagulationMeasure::explicit(0.0, &[(1, 1.0)]).unwrap();
        let g = block_counting_generator(&star, 5).unwrap();
        assert!((g.entry(5, 1) - 1.0).abs() < 1e-15);
        for j in 2..5 {
            assert_eq!(g.entry(5, j), 0.0);
        }
    }

    #[test]
    fn generator_row_sum_identity() {
        // sum_{j<i} q_ij = a C(i,2) + sum_k F(k) P(C^k_i)
        let cases = vec![
            CoagulationMeasure::explicit(1.0, &[(2, 1.0), (3, 2.0), (7, 0.5)]).unwrap(),
            CoagulationMeasure::power_law(0.5, 0.7, None).unwrap(),
            CoagulationMeasure::power_law(0.0, 1.0, Some(1000)).unwrap(),
        ];
        for f in cases {
            let n = 20;
            let g = block_counting_generator(&f, n).unwrap();
            for i in 2..=n {
                let row: f64 = (1..i).map(|j| g.entry(i, j)).sum();
                let expected = f.kingman_atom() * choose2(i as u64)
                    + match f.body() {
                        MeasureBody::Explicit { masses } => masses
                            .iter()
                            .map(|&(k, m)| m * collision_prob(k, i as u64))
                            .sum::<f64>(),
                        MeasureBody::PowerLaw { .. } => {
                            total_rate(
                                &CoagulationMeasure::new(0.0, f.body().clone()).unwrap(),
                                i as u64,
                                TotalRateMethod::CollisionProbSum,
                                &TotalRateOptions::default(),
                            )
                            .unwrap()
                            .value
                        }
                    };
                assert!(
                    (row - expected).abs() < 1e-10 * expected.max(1.0),
                    "i={i}: {row} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn total_rate_examples() {
        let kingman = CoagulationMeasure::kingman(1.0);
        let opts = TotalRateOptions::default();
        let v = total_rate(&kingman, 4, TotalRateMethod::CollisionProbSum, &opts).unwrap();
        assert!((v.value - 6.0).abs() < 1e-12);
        let two = CoagulationMeasure::explicit(0.0, &[(2, 1.0)]).unwrap();
        let v = total_rate(&two, 2, TotalRateMethod::CollisionProbSum, &opts).unwrap();
        assert!((v.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn total_rate_methods_agree() {
        let opts = TotalRateOptions::default();
        let cases = vec![
            CoagulationMeasure::explicit(1.0, &[(2, 1.0), (5, 0.25)]).unwrap(),
            CoagulationMeasure::explicit(0.0, &[(1, 0.5), (3, 1.5)]).unwrap(),
            CoagulationMeasure::power_law(0.5, 0.7, Some(500)).unwrap(),
        ];
        for f in cases {
            for n in 2..=20u64 {
                let a = total_rate(&f, n, TotalRateMethod::PartitionSum, &opts).unwrap();
                let b = total_rate(&f, n, TotalRateMethod::CollisionProbSum, &opts).unwrap();
                let rel = (a.value - b.value).abs() / b.value.abs();
                assert!(rel < 1e-9, "n={n}: {} vs {}", a.value, b.value);
            }
        }
    }

    #[test]
    fn total_rate_partition_sum_refuses_large_n() {
        let f = CoagulationMeasure::kingman(1.0);
        assert!(total_rate(&f, 41, TotalRateMethod::PartitionSum, &TotalRateOptions::default())
            .is_err());
    }

    #[test]
    fn total_rate_power_law_against_slow_sum() {
        // slow oracle: direct summation with an interval bound on the rest
        let opts = TotalRateOptions::default();
        for &(beta, n) in &[(0.5f64, 100u64), (0.9, 60), (1.0, 100)] {
            let f = CoagulationMeasure::power_law(0.0, beta, None).unwrap();
            let fast = total_rate(&f, n, TotalRateMethod::CollisionProbSum, &opts).unwrap();
            let mut direct = CompensatedSum::new();
            let cutoff = 8_000_000u64;
            for k in 1..n {
                direct.add((k as f64).powf(-beta));
            }
            for k in n..=cutoff {
                let log_no = ln_falling(k, n) - n as f64 * (k as f64).ln();
                direct.add((k as f64).powf(-beta) * (-log_no.exp_m1()));
            }
            // 1 - prod <= mu/k, so the rest is below mu * Z(1+beta, cutoff)
            let rem = choose2(n) * zeta_tail(1.0 + beta, cutoff + 1).value;
            assert!(
                fast.value >= direct.value() - 1e-9 * direct.value()
                    && fast.value <= direct.value() + rem + 1e-9 * direct.value(),
                "beta={beta} n={n}: fast {} direct {} rem {rem}",
                fast.value,
                direct.value()
            );
        }
    }

    #[test]
    fn asymptotic_examples() {
        let v = total_rate_asymptotic(0.5, 10_000).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt() * 1e4).abs() < 1.0);
        let n = (10.0f64).exp();
        let v = total_rate_asymptotic(1.0, n.round() as u64).unwrap();
        assert!((v - 20.0).abs() < 1e-3);
        assert!(total_rate_asymptotic(1.5, 10).is_err());
        assert!(total_rate_asymptotic(0.0, 10).is_err());
        // beta -> 0: the predicted growth exponent 2(1-beta) approaches 2,
        // the Kingman order
        let v1 = total_rate_asymptotic(1e-6, 100).unwrap();
        let v2 = total_rate_asymptotic(1e-6, 1000).unwrap();
        let exponent = (v2 / v1).ln() / (10.0f64).ln();
        assert!((exponent - 2.0).abs() < 0.01, "{exponent}");
    }
}
