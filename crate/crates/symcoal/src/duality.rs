//! Exact moments of block-counting chains via uniformization, the
//! bottleneck-coalescent generators, and the Monte-Carlo moment-duality
//! harness.
//!
//! Each duality check compares E[X_t^n | X_0 = x] estimated from the
//! jump-diffusion ensemble against E[x^{N_t} | N_0 = n] computed exactly
//! on the finite triangular state space {1, ..., n}, so the Monte-Carlo
//! error is one-sided. The Euler discretization of the diffusion part
//! contributes a documented bias allowance of 5 dt (zero when the
//! diffusion is off), calibrated by dt vs dt/2 comparison runs.

use crate::coalescent::ancestral_count_matrix;
use crate::error::{Error, Result};
use crate::measures::{CoagulationMeasure, DiscreteLaw, PositiveLaw};
use crate::numeric::{choose2, CompensatedSum};
use crate::rates::{block_counting_generator, occupancy_pmf, GeneratorMatrix};
use crate::sde::{moment_estimate, JumpDiffusionSpec, JumpKernel, SdeContext, SdePath};
use rand::Rng;
use serde::Serialize;

/// Euler bias allowance per unit dt (the allowance is `5 dt` at the
/// default dt = 1e-3, halving when dt halves).
pub const DT_BIAS_PER_UNIT: f64 = 5.0;

/// E[x^{N_t} | N_0 = n] for a lower-triangular generator on {1, ..., n},
/// by uniformization with reported truncation error below 1e-10.
pub fn exact_chain_moment(q: &GeneratorMatrix, n: usize, x: f64, t: f64) -> Result<ChainMoment> {
    if n < 1 || n > q.n() {
        return Err(Error::InvalidParameter(format!(
            "start state {n} outside 1..={}",
            q.n()
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("x = {x} outside [0, 1]")));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be >= 0")));
    }
    if q.max_row_sum_defect() > 1e-8 {
        return Err(Error::InvalidParameter("not a generator: rows do not sum to 0".into()));
    }
    let dim = q.n();
    // v_j = x^j on {1..dim}
    let mut v: Vec<f64> = (1..=dim).map(|j| x.powi(j as i32)).collect();
    let lambda = q.uniformization_rate();
    if lambda == 0.0 || t == 0.0 {
        return Ok(ChainMoment {
            value: v[n - 1],
            truncation_error: 0.0,
        });
    }
    // P = I + Q/lambda is stochastic; e^{tQ} v = sum_m pois(m; lambda t) P^m v
    let lt = lambda * t;
    let mut weight = (-lt).exp();
    let mut acc = vec![0.0f64; dim];
    let mut consumed = weight;
    for j in 0..dim {
        acc[j] = weight * v[j];
    }
    let mut m = 0u64;
    let tol = 1e-12;
    while 1.0 - consumed > tol {
        // w <- P w
        let mut next = vec![0.0f64; dim];
        for i in 0..dim {
            let mut row = CompensatedSum::new();
            row.add(v[i]);
            for j in 0..=i {
                row.add(q.entry(i + 1, j + 1) / lambda * v[j]);
            }
            next[i] = row.value();
        }
        v = next;
        m += 1;
        weight *= lt / m as f64;
        consumed += weight;
        for j in 0..dim {
            acc[j] += weight * v[j];
        }
        if m > 1_000_000 {
            return Err(Error::InvalidParameter(
                "uniformization failed to converge".into(),
            ));
        }
    }
    // remaining Poisson mass times sup|v| <= 1 bounds the truncation error
    Ok(ChainMoment {
        value: acc[n - 1].clamp(0.0, 1.0),
        truncation_error: (1.0 - consumed).max(0.0),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChainMoment {
    pub value: f64,
    pub truncation_error: f64,
}

/// Generator of the drastic-bottleneck block-counting chain on {1..n}:
/// `q_ij = a C(i,2) 1{j=i-1}
///         + eta sum_k F0(k) sum_g L(g) P(K^{k,g-1,W^{k,i}} = j)`,
/// with the bottleneck law computed exactly: the occupancy distribution
/// of W^{k,i} composed with g-1 steps of the ancestral-count matrix.
pub fn drastic_generator(
    f0: &DiscreteLaw,
    l: &DiscreteLaw,
    eta: f64,
    a: f64,
    n: usize,
) -> Result<GeneratorMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter("need n >= 2".into()));
    }
    if !(eta >= 0.0 && a >= 0.0) {
        return Err(Error::InvalidParameter("need eta, a >= 0".into()));
    }
    // body[i][j] = sum_k F0(k) sum_g L(g) P(... = j)
    let mut body = vec![vec![0.0f64; n + 1]; n + 1];
    for &(k, w_k) in f0.support() {
        let step = ancestral_count_matrix(k, n)?;
        for i in 2..=n {
            // dist over block counts after the initial paintbox
            let mut dist = vec![0.0f64; n + 1];
            for (j0, &p) in occupancy_pmf(k, i as u64).iter().enumerate() {
                dist[j0 + 1] = p;
            }
            let mut g_now = 1u64;
            for &(g, w_g) in l.support() {
                // advance the chain to g-1 ancestral steps
                while g_now < g {
                    let mut next = vec![0.0f64; n + 1];
                    for (from, &p) in dist.iter().enumerate().skip(1) {
                        if p == 0.0 {
                            continue;
                        }
                        for (to0, &q) in step[from - 1].iter().enumerate() {
                            if q > 0.0 {
                                next[to0 + 1] += p * q;
                            }
                        }
                    }
                    dist = next;
                    g_now += 1;
                }
                for j in 1..i {
                    body[i][j] += w_k * w_g * dist[j];
                }
            }
        }
    }
    GeneratorMatrix::from_off_diagonal(n, |i, j| {
        let kingman = if j == i - 1 { a * choose2(i as u64) } else { 0.0 };
        kingman + eta * body[i][j]
    })
}

/// Generator of the subordinated-Kingman block-counting chain on {1..n}:
/// `q_ij = a C(i,2) 1{j=i-1} + eta sum_sigma L_gamma(sigma) p_i(sigma, j)`
/// where p_i(sigma, j) is the probability that a Kingman pure-death chain
/// started at i sits at j after time sigma (computed by uniformization).
pub fn soft_generator(
    l_gamma: &PositiveLaw,
    eta: f64,
    a: f64,
    n: usize,
) -> Result<GeneratorMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter("need n >= 2".into()));
    }
    let atoms = l_gamma
        .atoms()
        .ok_or_else(|| Error::Unsupported("soft generator needs a finite-atom duration law".into()))?;
    // Kingman pure-death generator on {1..n}
    let kingman_death = GeneratorMatrix::from_off_diagonal(n, |i, j| {
        if j == i - 1 {
            choose2(i as u64)
        } else {
            0.0
        }
    })?;
    let mut body = vec![vec![0.0f64; n + 1]; n + 1];
    for &(sigma, w) in &atoms {
        for i in 2..=n {
            let dist = death_chain_distribution(&kingman_death, i, sigma)?;
            for j in 1..i {
                body[i][j] += w * dist[j - 1];
            }
        }
    }
    GeneratorMatrix::from_off_diagonal(n, |i, j| {
        let kingman = if j == i - 1 { a * choose2(i as u64) } else { 0.0 };
        kingman + eta * body[i][j]
    })
}

// distribution over {1..n} of the chain started at `start` after time t,
// by uniformization (transposed iteration on the indicator vector)
fn death_chain_distribution(q: &GeneratorMatrix, start: usize, t: f64) -> Result<Vec<f64>> {
    let dim = q.n();
    let lambda = q.uniformization_rate();
    let mut dist = vec![0.0f64; dim];
    dist[start - 1] = 1.0;
    if lambda == 0.0 || t == 0.0 {
        return Ok(dist);
    }
    let lt = lambda * t;
    let mut weight = (-lt).exp();
    let mut consumed = weight;
    let mut acc: Vec<f64> = dist.iter().map(|&p| weight * p).collect();
    let mut m = 0u64;
    while 1.0 - consumed > 1e-12 {
        // dist <- dist P with P = I + Q/lambda (row-stochastic)
        let mut next = vec![0.0f64; dim];
        for (from, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            next[from] += p * (1.0 + q.entry(from + 1, from + 1) / lambda);
            for to in 0..from {
                let rate = q.entry(from + 1, to + 1);
                if rate > 0.0 {
                    next[to] += p * rate / lambda;
                }
            }
        }
        dist = next;
        m += 1;
        weight *= lt / m as f64;
        consumed += weight;
        for j in 0..dim {
            acc[j] += weight * dist[j];
        }
        if m > 1_000_000 {
            return Err(Error::InvalidParameter("uniformization failed to converge".into()));
        }
    }
    Ok(acc)
}

/// Which duality theorem a check exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DualityModel {
    ShortDrastic,
    LongDrastic,
    LongSoft,
}

/// Parameters shared by the diffusion side and the dual chain side.
#[derive(Debug, Clone)]
pub enum DualityParams {
    /// F = 1{alpha=1} delta_0 + F0 against the short-drastic diffusion.
    ShortDrastic { f0: DiscreteLaw, alpha: f64 },
    /// Drastic-bottleneck chain against the family-size diffusion;
    /// a = 1{alpha=1}.
    LongDrastic {
        f0: DiscreteLaw,
        l: DiscreteLaw,
        eta: f64,
        alpha: f64,
    },
    /// Subordinated-Kingman chain against the Dirichlet-kernel diffusion.
    LongSoft {
        l_gamma: PositiveLaw,
        eta: f64,
        alpha: f64,
    },
}

impl DualityParams {
    pub fn model(&self) -> DualityModel {
        match self {
            DualityParams::ShortDrastic { .. } => DualityModel::ShortDrastic,
            DualityParams::LongDrastic { .. } => DualityModel::LongDrastic,
            DualityParams::LongSoft { .. } => DualityModel::LongSoft,
        }
    }

    fn kingman_atom(&self) -> f64 {
        let alpha = match self {
            DualityParams::ShortDrastic { alpha, .. }
            | DualityParams::LongDrastic { alpha, .. }
            | DualityParams::LongSoft { alpha, .. } => *alpha,
        };
        if (alpha - 1.0).abs() < 1e-12 {
            1.0
        } else {
            0.0
        }
    }

    /// The generator of the dual block-counting chain on {1..n}.
    pub fn generator(&self, n: usize) -> Result<GeneratorMatrix> {
        let a = self.kingman_atom();
        match self {
            DualityParams::ShortDrastic { f0, .. } => {
                let f = CoagulationMeasure::explicit(a, f0.support())?;
                block_counting_generator(&f, n)
            }
            DualityParams::LongDrastic { f0, l, eta, .. } => drastic_generator(f0, l, *eta, a, n),
            DualityParams::LongSoft { l_gamma, eta, .. } => soft_generator(l_gamma, *eta, a, n),
        }
    }

    /// The matching jump-diffusion specification.
    pub fn sde_spec(&self, x0: f64, horizon: f64, dt: f64) -> JumpDiffusionSpec {
        let kernel = match self {
            DualityParams::ShortDrastic { f0, .. } => JumpKernel::ShortDrastic { f0: f0.clone() },
            DualityParams::LongDrastic { f0, l, eta, .. } => JumpKernel::LongDrastic {
                f0: f0.clone(),
                l: l.clone(),
                eta: *eta,
            },
            DualityParams::LongSoft { l_gamma, eta, .. } => JumpKernel::LongSoft {
                l_gamma: l_gamma.clone(),
                eta: *eta,
            },
        };
        let alpha = match self {
            DualityParams::ShortDrastic { alpha, .. }
            | DualityParams::LongDrastic { alpha, .. }
            | DualityParams::LongSoft { alpha, .. } => *alpha,
        };
        JumpDiffusionSpec {
            kernel,
            alpha,
            x0,
            horizon,
            dt,
            dt_out: 0.0,
        }
    }
}

/// One moment-duality comparison.
#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub model: DualityModel,
    pub x: f64,
    pub n: u32,
    pub t: f64,
    /// Monte-Carlo moment of the diffusion side.
    pub lhs: f64,
    pub lhs_se: f64,
    /// Exact chain moment (uniformization), with its truncation bound.
    pub rhs: f64,
    pub rhs_error_bound: f64,
    /// |lhs - rhs| / lhs_se (the rhs standard error is zero: it is exact).
    pub z_score: f64,
    /// Euler bias allowance subtracted before the pass test.
    pub bias_allowance: f64,
    /// max(0, |lhs - rhs| - allowance) / lhs_se
    pub z_adjusted: f64,
    pub pass: bool,
    pub replicates: usize,
}

/// Run one duality check: simulate `reps` diffusion paths to time t,
/// compare the n-th moment against the exact dual-chain moment.
/// Passing means the adjusted z-score is at most 3.
pub fn duality_check<R: Rng + ?Sized>(
    params: &DualityParams,
    x: f64,
    n: u32,
    t: f64,
    reps: usize,
    dt: f64,
    rng: &mut R,
) -> Result<DualityReport> {
    if n < 1 {
        return Err(Error::InvalidParameter("moment order n must be >= 1".into()));
    }
    let spec = params.sde_spec(x, t, dt);
    let ctx = SdeContext::new(spec)?;
    let paths: Vec<SdePath> = (0..reps)
        .map(|_| ctx.simulate(rng))
        .collect::<Result<_>>()?;
    let lhs = moment_estimate(&paths, n, t)?;
    let q = params.generator(n.max(2) as usize)?;
    let rhs = exact_chain_moment(&q, n as usize, x, t)?;
    let bias_allowance = if ctx.spec().diffusion_active() {
        DT_BIAS_PER_UNIT * dt
    } else {
        0.0
    };
    let gap = (lhs.mean - rhs.value).abs();
    let z_score = gap / lhs.se;
    let z_adjusted = (gap - bias_allowance).max(0.0) / lhs.se;
    Ok(DualityReport {
        model: params.model(),
        x,
        n,
        t,
        lhs: lhs.mean,
        lhs_se: lhs.se,
        rhs: rhs.value,
        rhs_error_bound: rhs.truncation_error,
        z_score,
        bias_allowance,
        z_adjusted,
        pass: z_adjusted <= 3.0,
        replicates: reps,
    })
}

/// Richardson-style bias calibration: the moment gap at dt and dt/2.
/// Used once per model to justify the 5 dt allowance.
pub fn calibrate_dt_bias<R: Rng + ?Sized>(
    params: &DualityParams,
    x: f64,
    n: u32,
    t: f64,
    reps: usize,
    dt: f64,
    rng: &mut R,
) -> Result<(DualityReport, DualityReport)> {
    let at_dt = duality_check(params, x, n, t, reps, dt, rng)?;
    let at_half = duality_check(params, x, n, t, reps, dt / 2.0, rng)?;
    Ok((at_dt, at_half))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replicate_rng;

    fn star_generator(n: usize) -> GeneratorMatrix {
        // q_{n1} = 1 only
        GeneratorMatrix::from_off_diagonal(n, |i, j| {
            if i == n && j == 1 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn chain_moment_absorbing_state() {
        let q = star_generator(3);
        for t in [0.0, 0.5, 2.0] {
            let m = exact_chain_moment(&q, 1, 0.7, t).unwrap();
            assert!((m.value - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_moment_star_closed_form() {
        // e^{-t} x^n + (1 - e^{-t}) x
        let n = 5;
        let q = star_generator(n);
        for t in [0.1f64, 0.7, 3.0] {
            for x in [0.2f64, 0.5, 0.9] {
                let expected = (-t).exp() * x.powi(n as i32) + (1.0 - (-t).exp()) * x;
                let m = exact_chain_moment(&q, n, x, t).unwrap();
                assert!(
                    (m.value - expected).abs() < 1e-10 + m.truncation_error,
                    "t={t} x={x}: {} vs {expected}",
                    m.value
                );
            }
        }
    }

    #[test]
    fn chain_moment_at_zero_time() {
        let q = star_generator(4);
        let m = exact_chain_moment(&q, 4, 0.3, 0.0).unwrap();
        assert_eq!(m.value, 0.3f64.powi(4));
    }

    #[test]
    fn chain_moment_monotone_in_x_and_boundary() {
        let f = CoagulationMeasure::explicit(1.0, &[(2, 1.0), (3, 0.5)]).unwrap();
        let q = block_counting_generator(&f, 6).unwrap();
        let mut prev = 0.0;
        for x in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
            let m = exact_chain_moment(&q, 6, x, 0.8).unwrap();
            assert!(m.value >= prev);
            prev = m.value;
        }
        let one = exact_chain_moment(&q, 6, 1.0, 0.8).unwrap();
        assert!((one.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn drastic_generator_reduces_to_symmetric_for_unit_length() {
        // L = delta_1: entrywise equality with the symmetric generator of
        // F = a delta_0 + eta F0
        let f0 = DiscreteLaw::new(vec![(2, 0.5), (3, 0.5)]).unwrap();
        let l = DiscreteLaw::point_mass(1);
        for (eta, a) in [(1.0, 0.0), (2.0, 1.0)] {
            let n = 7;
            let drastic = drastic_generator(&f0, &l, eta, a, n).unwrap();
            let f = CoagulationMeasure::explicit(a, &[(2, eta * 0.5), (3, eta * 0.5)]).unwrap();
            let symmetric = block_counting_generator(&f, n).unwrap();
            for i in 1..=n {
                for j in 1..=n {
                    assert!(
                        (drastic.entry(i, j) - symmetric.entry(i, j)).abs() < 1e-12,
                        "({i},{j}): {} vs {}",
                        drastic.entry(i, j),
                        symmetric.entry(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn drastic_generator_total_collapse() {
        // F0 = delta_1: q_i1 = eta for every i >= 2
        let f0 = DiscreteLaw::point_mass(1);
        let l = DiscreteLaw::point_mass(4);
        let g = drastic_generator(&f0, &l, 1.5, 0.0, 6).unwrap();
        for i in 2..=6 {
            assert!((g.entry(i, 1) - 1.5).abs() < 1e-12);
            for j in 2..i {
                assert!(g.entry(i, j).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn drastic_generator_two_stage_example() {
        // F0 = delta_2, L = delta_2, eta = 1, n = 2: q_21 = a + 3/4
        for a in [0.0, 1.0] {
            let g = drastic_generator(
                &DiscreteLaw::point_mass(2),
                &DiscreteLaw::point_mass(2),
                1.0,
                a,
                2,
            )
            .unwrap();
            assert!((g.entry(2, 1) - (a + 0.75)).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_generator_pair_rate() {
        // i = 2: q_21 = a + eta (1 - e^{-sigma})
        for (a, eta, sigma) in [(0.0, 1.0, 0.5), (1.0, 2.0, 0.25)] {
            let g = soft_generator(&PositiveLaw::PointMass { sigma }, eta, a, 4).unwrap();
            let expected = a + eta * (-(-sigma).exp_m1());
            assert!(
                (g.entry(2, 1) - expected).abs() < 1e-10,
                "{} vs {expected}",
                g.entry(2, 1)
            );
        }
    }

    #[test]
    fn soft_generator_vanishes_with_duration() {
        // sigma -> 0: the non-Kingman part goes to zero entrywise
        let g_small = soft_generator(&PositiveLaw::PointMass { sigma: 1e-9 }, 1.0, 0.0, 5).unwrap();
        for i in 2..=5 {
            for j in 1..i {
                assert!(g_small.entry(i, j) < 1e-7, "({i},{j})");
            }
        }
    }

    #[test]
    fn generators_have_zero_row_sums_and_nonnegative_rates() {
        let gens = vec![
            drastic_generator(
                &DiscreteLaw::new(vec![(2, 0.25), (5, 0.75)]).unwrap(),
                &DiscreteLaw::new(vec![(1, 0.5), (3, 0.5)]).unwrap(),
                1.7,
                1.0,
                9,
            )
            .unwrap(),
            soft_generator(
                &PositiveLaw::Explicit {
                    atoms: vec![(0.25, 0.5), (1.0, 0.5)],
                },
                0.8,
                1.0,
                9,
            )
            .unwrap(),
        ];
        for g in gens {
            assert!(g.max_row_sum_defect() < 1e-10);
            for i in 1..=9 {
                for j in 1..i {
                    assert!(g.entry(i, j) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn duality_trivial_martingale_case() {
        // n = 1: both sides equal x
        let params = DualityParams::ShortDrastic {
            f0: DiscreteLaw::point_mass(2),
            alpha: 0.5,
        };
        let mut rng = replicate_rng(30, 0);
        let rep = duality_check(&params, 0.4, 1, 0.5, 20_000, 1e-3, &mut rng).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!((rep.rhs - 0.4).abs() < 1e-10);
    }

    #[test]
    fn duality_short_drastic_two_state_example() {
        // F0 = delta_2, alpha < 1, x=0.3, n=2, t=0.5:
        // rhs = e^{-q t} 0.09 + (1 - e^{-q t}) 0.3 with q = 1/2
        let params = DualityParams::ShortDrastic {
            f0: DiscreteLaw::point_mass(2),
            alpha: 0.5,
        };
        let q = params.generator(2).unwrap();
        assert!((q.entry(2, 1) - 0.5).abs() < 1e-14);
        let rhs = exact_chain_moment(&q, 2, 0.3, 0.5).unwrap();
        let expected = (-0.25f64).exp() * 0.09 + (1.0 - (-0.25f64).exp()) * 0.3;
        assert!((rhs.value - expected).abs() < 1e-10);
        let mut rng = replicate_rng(30, 1);
        let rep = duality_check(&params, 0.3, 2, 0.5, 30_000, 1e-3, &mut rng).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn duality_long_soft_exact_pair() {
        // L_gamma = delta_{1/2}, eta = 1, a = 0: q_21 = 1 - e^{-1/2}
        let params = DualityParams::LongSoft {
            l_gamma: PositiveLaw::PointMass { sigma: 0.5 },
            eta: 1.0,
            alpha: 0.5,
        };
        let mut rng = replicate_rng(30, 2);
        let rep = duality_check(&params, 0.5, 2, 1.0, 30_000, 1e-3, &mut rng).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn duality_rejects_bad_order() {
        let params = DualityParams::ShortDrastic {
            f0: DiscreteLaw::point_mass(2),
            alpha: 0.5,
        };
        let mut rng = replicate_rng(30, 3);
        assert!(duality_check(&params, 0.3, 0, 0.5, 100, 1e-3, &mut rng).is_err());
    }
}
