//! Shared numerical kernels: compensated summation, log-factorials,
//! partial-zeta sums with Euler-Maclaurin remainders, and scaled
//! elementary symmetric polynomials for falling-factorial expansions.

pub use statrs::function::gamma::ln_gamma;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// ln C(n, k) for integer arguments.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma((n + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64)
}

/// C(n, 2) as f64.
pub fn choose2(n: u64) -> f64 {
    0.5 * n as f64 * (n as f64 - 1.0)
}

/// ln of the falling factorial k (k-1) ... (k-r+1).
pub fn ln_falling(k: u64, r: u64) -> f64 {
    if r > k {
        return f64::NEG_INFINITY;
    }
    if r <= 64 {
        // direct product log: avoids the cancellation of two large
        // log-gamma values when k is big and r is small
        let mut acc = CompensatedSum::new();
        for t in 0..r {
            acc.add(((k - t) as f64).ln());
        }
        acc.value()
    } else {
        ln_gamma((k + 1) as f64) - ln_gamma((k - r + 1) as f64)
    }
}

/// A sum together with a rigorous bound on its absolute error.
#[derive(Debug, Clone, Copy)]
pub struct Bounded {
    pub value: f64,
    pub error_bound: f64,
}

// Euler-Maclaurin for sum_{k>=a} k^{-s} is an asymptotic expansion in
// (s/a)^2; it is only trusted once a >= EM_SAFETY * s^2.
const EM_SAFETY: f64 = 40.0;
const EM_MIN_A: f64 = 64.0;

fn em_tail_raw(s: f64, a: f64) -> Bounded {
    // Z(s,a) = a^{1-s}/(s-1) + a^{-s}/2 + s a^{-s-1}/12
    //          - s(s+1)(s+2) a^{-s-3}/720 + (s)_5 a^{-s-5}/30240 + R
    let lead = a.powf(1.0 - s) / (s - 1.0);
    let t0 = 0.5 * a.powf(-s);
    let t1 = s * a.powf(-s - 1.0) / 12.0;
    let t2 = s * (s + 1.0) * (s + 2.0) * a.powf(-s - 3.0) / 720.0;
    let t3 = s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * a.powf(-s - 5.0) / 30240.0;
    // Remainder is bounded by the first omitted Bernoulli term.
    let rem = s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * (s + 5.0) * (s + 6.0)
        * a.powf(-s - 7.0)
        / 1209600.0;
    Bounded {
        value: lead + t0 + t1 - t2 + t3,
        error_bound: rem.abs() + 4.0 * f64::EPSILON * lead.abs(),
    }
}

/// Tail of the zeta sum: Z(s, a) = sum_{k >= a} k^{-s}, for s > 1 and
/// integer a >= 1. Sums directly until Euler-Maclaurin is trustworthy.
pub fn zeta_tail(s: f64, a: u64) -> Bounded {
    assert!(s > 1.0, "zeta_tail requires s > 1");
    let mut k = a.max(1);
    let safe = (EM_SAFETY * s * s).max(EM_MIN_A);
    let mut acc = CompensatedSum::new();
    while (k as f64) < safe {
        let term = (k as f64).powf(-s);
        // Once the remaining tail is negligible, stop early.
        if term * (k as f64) / (s - 1.0) < 1e-300 {
            return Bounded {
                value: acc.value(),
                error_bound: term * (k as f64) / (s - 1.0) + f64::EPSILON * acc.value().abs(),
            };
        }
        acc.add(term);
        k += 1;
    }
    let em = em_tail_raw(s, k as f64);
    Bounded {
        value: acc.value() + em.value,
        error_bound: em.error_bound + f64::EPSILON * acc.value().abs(),
    }
}

/// Partial zeta sum: sum_{k=1}^{m} k^{-s}, valid for any s > 0 (s may be
/// below 1, including s = 1).
pub fn partial_zeta(s: f64, m: u64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    // Direct below the Euler-Maclaurin safety point, analytic difference above.
    let safe = ((EM_SAFETY * s * s).max(EM_MIN_A)) as u64;
    if m <= safe.saturating_mul(2) {
        let mut acc = CompensatedSum::new();
        for k in 1..=m {
            acc.add((k as f64).powf(-s));
        }
        return acc.value();
    }
    let mut acc = CompensatedSum::new();
    for k in 1..=safe {
        acc.add((k as f64).powf(-s));
    }
    acc.add(zeta_range_em(s, safe + 1, m));
    acc.value()
}

// sum_{k=lo}^{hi} k^{-s} via the difference of Euler-Maclaurin antiderivatives;
// requires lo large enough for the expansion.
fn zeta_range_em(s: f64, lo: u64, hi: u64) -> f64 {
    em_prefix(s, hi as f64) - em_prefix(s, (lo - 1) as f64)
}

// "Antiderivative" F(m) ~ sum_{k<=m} k^{-s} up to an m-independent constant:
// F(m) = m^{1-s}/(1-s) + m^{-s}/2 - s m^{-s-1}/12 + s(s+1)(s+2) m^{-s-3}/720 - ...
// (for s = 1 the leading term becomes ln m).
fn em_prefix(s: f64, m: f64) -> f64 {
    let lead = if (s - 1.0).abs() < 1e-12 {
        m.ln()
    } else {
        m.powf(1.0 - s) / (1.0 - s)
    };
    lead + 0.5 * m.powf(-s) - s * m.powf(-s - 1.0) / 12.0
        + s * (s + 1.0) * (s + 2.0) * m.powf(-s - 3.0) / 720.0
}

/// sum_{k=lo}^{hi} k^{-s} for any s > 0, inclusive bounds.
pub fn zeta_range(s: f64, lo: u64, hi: u64) -> f64 {
    if lo > hi {
        return 0.0;
    }
    let safe = ((EM_SAFETY * s * s).max(EM_MIN_A)) as u64;
    if hi <= safe.saturating_mul(2) || hi - lo < 4096 {
        let mut acc = CompensatedSum::new();
        for k in lo..=hi {
            acc.add((k as f64).powf(-s));
        }
        return acc.value();
    }
    let mid = safe.max(lo);
    let mut acc = CompensatedSum::new();
    for k in lo..=mid {
        acc.add((k as f64).powf(-s));
    }
    acc.add(zeta_range_em(s, mid + 1, hi));
    acc.value()
}

/// Scaled elementary symmetric polynomials e_j(0/A, 1/A, ..., (n-1)/A) for
/// j = 0..=jmax. These are the coefficients of the expansion
///   k_(n) / k^n = prod_{t<n} (1 - t/k) = sum_j (-1)^j e_j A^j k^{-j}.
pub fn scaled_elementary_symmetric(n: u64, scale: f64, jmax: usize) -> Vec<f64> {
    let mut e = vec![0.0f64; jmax + 1];
    e[0] = 1.0;
    for i in 0..n {
        let x = i as f64 / scale;
        if x == 0.0 {
            continue;
        }
        let top = jmax.min(i as usize + 1);
        for j in (1..=top).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn zeta_tail_matches_direct() {
        for &(s, a) in &[(1.5, 10u64), (2.3, 3), (1.1, 100), (12.0, 5), (41.3, 2)] {
            let mut direct = 0.0;
            let mut k = a;
            let remainder = loop {
                let t = (k as f64).powf(-s);
                direct += t;
                // integral bound on what the truncated oracle is missing
                let rem = (k as f64).powf(1.0 - s) / (s - 1.0);
                if rem < 1e-15 * direct || k > a + 3_000_000 {
                    break rem;
                }
                k += 1;
            };
            let z = zeta_tail(s, a);
            assert!(
                (z.value - direct).abs() < remainder + 1e-11 * direct + z.error_bound,
                "s={s} a={a}: {} vs {direct} (+{remainder})",
                z.value
            );
        }
    }

    #[test]
    fn partial_zeta_matches_direct() {
        for &(s, m) in &[(0.5, 100_000u64), (1.0, 250_000), (0.3, 1_000_000), (1.7, 99_999)] {
            let mut acc = CompensatedSum::new();
            for k in 1..=m {
                acc.add((k as f64).powf(-s));
            }
            let direct = acc.value();
            let fast = partial_zeta(s, m);
            assert!(
                ((fast - direct) / direct).abs() < 1e-12,
                "s={s} m={m}: {fast} vs {direct}"
            );
        }
    }

    #[test]
    fn zeta_range_matches_direct() {
        let direct: f64 = (500u64..=2_000_000).map(|k| (k as f64).powf(-0.7)).sum();
        let fast = zeta_range(0.7, 500, 2_000_000);
        assert!(((fast - direct) / direct).abs() < 1e-10);
    }

    #[test]
    fn elementary_symmetric_small_case() {
        // e_j(0,1,2,3) over {0,1,2,3}: e_0=1, e_1=6, e_2=11, e_3=6, e_4=0
        let e = scaled_elementary_symmetric(4, 1.0, 4);
        assert_eq!(e, vec![1.0, 6.0, 11.0, 6.0, 0.0]);
    }

    #[test]
    fn ln_choose_values() {
        assert!((ln_choose(10, 3) - (120.0f64).ln()).abs() < 1e-12);
        assert_eq!(ln_choose(3, 10), f64::NEG_INFINITY);
    }
}
