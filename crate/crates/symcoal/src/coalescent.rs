//! Backward-in-time simulators for the three coalescent families and the
//! discrete Wright-Fisher ancestral machinery.
//!
//! The symmetric coalescent is simulated by effective-event thinning:
//! paintbox events are generated at the collision-inclusive rate
//! `sum_k F(k) P(C^k_b)` (finite even when `sum_k F(k)` diverges), with
//! the box count k drawn proportional to `F(k) P(C^k_b)` and the
//! allocation sampled conditioned on at least one collision. Silent
//! events therefore never occur.

use crate::error::{Error, Result};
use crate::measures::{CoagulationMeasure, DiscreteLaw, MeasureBody, PositiveLaw};
use crate::numeric::{choose2, CompensatedSum};
use crate::rates::{collision_prob, total_rate, TotalRateMethod, TotalRateOptions};
use rand::Rng;
use serde::Serialize;
use std::collections::HashMap;

/// A partition of the sample labels {1, ..., n} into disjoint blocks,
/// kept canonical: blocks ordered by least element, elements sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabeledPartition {
    blocks: Vec<Vec<u32>>,
}

impl LabeledPartition {
    /// The partition of {1, ..., n} into singletons.
    pub fn singletons(n: u32) -> Self {
        Self {
            blocks: (1..=n).map(|i| vec![i]).collect(),
        }
    }

    pub fn from_blocks(mut blocks: Vec<Vec<u32>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut max = 0u32;
        for b in &mut blocks {
            if b.is_empty() {
                return Err(Error::InvalidParameter("empty block".into()));
            }
            b.sort_unstable();
            for &x in b.iter() {
                if x == 0 || !seen.insert(x) {
                    return Err(Error::InvalidParameter(format!("bad or repeated label {x}")));
                }
                max = max.max(x);
            }
        }
        if seen.len() as u32 != max {
            return Err(Error::InvalidParameter(
                "labels must cover 1..=n with no gaps".into(),
            ));
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Self { blocks })
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<u32>] {
        &self.blocks
    }

    /// Sorted multiset of block sizes.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.blocks.iter().map(|b| b.len()).collect();
        s.sort_unstable();
        s
    }

    /// Merge the groups of block indices given in `groups`; indices not
    /// mentioned keep their blocks. Group lists must be disjoint.
    fn merge_groups(&self, groups: &[Vec<usize>]) -> Self {
        let mut absorbed = vec![false; self.blocks.len()];
        let mut new_blocks: Vec<Vec<u32>> = Vec::with_capacity(self.blocks.len());
        for g in groups {
            if g.len() < 2 {
                continue;
            }
            let mut merged = Vec::new();
            for &idx in g {
                merged.extend_from_slice(&self.blocks[idx]);
                absorbed[idx] = true;
            }
            merged.sort_unstable();
            new_blocks.push(merged);
        }
        for (idx, b) in self.blocks.iter().enumerate() {
            if !absorbed[idx] {
                new_blocks.push(b.clone());
            }
        }
        new_blocks.sort_by_key(|b| b[0]);
        Self { blocks: new_blocks }
    }

    /// Merge exactly two blocks by index.
    fn merge_pair(&self, i: usize, j: usize) -> Self {
        self.merge_groups(&[vec![i, j]])
    }
}

/// What happened at a coalescence event.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    KingmanPair,
    Symmetric { k: u64 },
    Drastic { k: u64, g: u64 },
    Soft { sigma: f64 },
}

/// One recorded coalescence event.
#[derive(Debug, Clone, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub partition_after: LabeledPartition,
}

/// Summary statistics of one simulated genealogy.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TreeStats {
    /// Total branch length: sum over inter-event intervals of
    /// (interval length x block count).
    pub length: f64,
    pub tmrca: f64,
    pub n_events: usize,
}

/// Throw each block into one of k uniform boxes; blocks sharing a box
/// merge. Returns the merged partition and, when requested, the box
/// occupancy counts of the occupied boxes.
pub fn paintbox_merge<R: Rng + ?Sized>(
    p: &LabeledPartition,
    k: u64,
    rng: &mut R,
) -> (LabeledPartition, Vec<u64>) {
    assert!(k >= 1);
    let mut boxes: HashMap<u64, Vec<usize>> = HashMap::new();
    for idx in 0..p.num_blocks() {
        let b = rng.gen_range(0..k);
        boxes.entry(b).or_default().push(idx);
    }
    let occupancies: Vec<u64> = boxes.values().map(|v| v.len() as u64).collect();
    let groups: Vec<Vec<usize>> = boxes.into_values().collect();
    (p.merge_groups(&groups), occupancies)
}

/// One backward generation of a Wright-Fisher model with population size
/// k: each block picks a uniform parent and blocks sharing a parent merge.
/// Mechanically identical to [`paintbox_merge`]; provided under the
/// ancestral-process name used by the bottleneck constructions.
pub fn wf_ancestral_step<R: Rng + ?Sized>(
    p: &LabeledPartition,
    k: u64,
    rng: &mut R,
) -> LabeledPartition {
    paintbox_merge(p, k, rng).0
}

/// One-generation transition matrix of the ancestor-count chain in a
/// Wright-Fisher population of size k:
/// `P(j -> i) = S2(j, i) * k (k-1) ... (k-i+1) / k^j`
/// for 1 <= i <= min(j, k), as a stochastic matrix over {1, ..., n}.
///
/// Supported for n <= 150 (f64 Stirling-number range).
pub fn ancestral_count_matrix(k: u64, n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 || n > 150 {
        return Err(Error::InvalidParameter(
            "ancestral_count_matrix supports 1 <= n <= 150".into(),
        ));
    }
    // Stirling numbers of the second kind
    let mut s2 = vec![vec![0.0f64; n + 1]; n + 1];
    s2[0][0] = 1.0;
    for i in 1..=n {
        for j in 1..=i {
            s2[i][j] = s2[i - 1][j - 1] + j as f64 * s2[i - 1][j];
        }
    }
    let ln_k = (k as f64).ln();
    let mut m = vec![vec![0.0f64; n]; n];
    for j in 1..=n {
        let top = (j as u64).min(k) as usize;
        for i in 1..=top {
            let ln_p = crate::numeric::ln_falling(k, i as u64) - j as f64 * ln_k;
            m[j - 1][i - 1] = (s2[j][i].ln() + ln_p).exp().clamp(0.0, 1.0);
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Symmetric coalescent
// ---------------------------------------------------------------------------

/// Reusable per-(F, n) simulation state: cached effective event rates and
/// the box-count sampler. Immutable after construction; share freely
/// across replicates.
pub struct SymCoalescentContext {
    f: CoagulationMeasure,
    n: u32,
    /// sym_rate[b] = sum_k F(k) P(C^k_b) for b = 0..=n (entries < 2 unused)
    sym_rate: Vec<f64>,
}

impl SymCoalescentContext {
    pub fn new(f: &CoagulationMeasure, n: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter("need a sample of size >= 2".into()));
        }
        if f.kingman_atom() == 0.0 && f.body_is_empty() {
            return Err(Error::InvalidMeasure(
                "zero measure: absorption is never reached".into(),
            ));
        }
        let opts = TotalRateOptions::default();
        let body_only = CoagulationMeasure::new(0.0, f.body().clone())?;
        let mut sym_rate = vec![0.0f64; n as usize + 1];
        if !f.body_is_empty() {
            for b in 2..=n as u64 {
                sym_rate[b as usize] =
                    total_rate(&body_only, b, TotalRateMethod::CollisionProbSum, &opts)?.value;
            }
        }
        Ok(Self {
            f: f.clone(),
            n,
            sym_rate,
        })
    }

    pub fn measure(&self) -> &CoagulationMeasure {
        &self.f
    }

    /// Total effective (non-silent) paintbox rate with b blocks.
    pub fn symmetric_event_rate(&self, b: u32) -> f64 {
        self.sym_rate[b as usize]
    }

    /// Draw the box count of an effective event, proportional to
    /// F(k) P(C^k_b).
    fn sample_k<R: Rng + ?Sized>(&self, b: u32, rng: &mut R) -> u64 {
        match self.f.body() {
            MeasureBody::Explicit { masses } => {
                let total = self.sym_rate[b as usize];
                let mut u: f64 = rng.gen::<f64>() * total;
                for &(k, m) in masses {
                    let w = m * collision_prob(k, b as u64);
                    if u < w {
                        return k;
                    }
                    u -= w;
                }
                masses.last().map(|&(k, _)| k).unwrap_or(1)
            }
            MeasureBody::PowerLaw { beta, truncation } => {
                sample_power_law_k(*beta, *truncation, b as u64, rng)
            }
        }
    }

    /// Tree statistics only, on the autonomous block-count chain (the
    /// count process of the symmetric coalescent is Markov on its own:
    /// rates and post-event counts depend only on the current count, so
    /// label bookkeeping can be skipped entirely).
    pub fn simulate_count_chain<R: Rng + ?Sized>(&self, rng: &mut R) -> TreeStats {
        let mut b = self.n;
        let mut t = 0.0f64;
        let mut length = CompensatedSum::new();
        let mut n_events = 0usize;
        let a = self.f.kingman_atom();
        while b > 1 {
            let kingman_rate = a * choose2(b as u64);
            let sym = self.symmetric_event_rate(b);
            let total = kingman_rate + sym;
            let wait = exp_sample(total, rng);
            length.add(wait * b as f64);
            t += wait;
            if rng.gen::<f64>() * total < kingman_rate {
                b -= 1;
            } else {
                let k = self.sample_k(b, rng);
                let groups = conditional_allocation(k, b as usize, rng);
                b = groups.len() as u32;
            }
            n_events += 1;
        }
        TreeStats {
            length: length.value(),
            tmrca: t,
            n_events,
        }
    }

    /// Run one genealogy to the most recent common ancestor.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R, record_events: bool) -> SCoalescentRun {
        let mut partition = LabeledPartition::singletons(self.n);
        let mut t = 0.0f64;
        let mut length = CompensatedSum::new();
        let mut events = Vec::new();
        let mut n_events = 0usize;
        let a = self.f.kingman_atom();
        while partition.num_blocks() > 1 {
            let b = partition.num_blocks() as u32;
            let kingman_rate = a * choose2(b as u64);
            let sym = self.symmetric_event_rate(b);
            let total = kingman_rate + sym;
            debug_assert!(total > 0.0);
            let wait = exp_sample(total, rng);
            length.add(wait * b as f64);
            t += wait;
            let new_partition = if rng.gen::<f64>() * total < kingman_rate {
                let (i, j) = uniform_pair(b as usize, rng);
                let p = partition.merge_pair(i, j);
                if record_events {
                    events.push(EventRecord {
                        time: t,
                        kind: EventKind::KingmanPair,
                        partition_after: p.clone(),
                    });
                }
                p
            } else {
                let k = self.sample_k(b, rng);
                let groups = conditional_allocation(k, b as usize, rng);
                let p = partition.merge_groups(&groups);
                debug_assert!(p.num_blocks() < partition.num_blocks());
                if record_events {
                    events.push(EventRecord {
                        time: t,
                        kind: EventKind::Symmetric { k },
                        partition_after: p.clone(),
                    });
                }
                p
            };
            n_events += 1;
            partition = new_partition;
        }
        SCoalescentRun {
            events,
            stats: TreeStats {
                length: length.value(),
                tmrca: t,
                n_events,
            },
        }
    }
}

/// Result of one symmetric-coalescent simulation.
#[derive(Debug, Clone)]
pub struct SCoalescentRun {
    pub events: Vec<EventRecord>,
    pub stats: TreeStats,
}

/// Simulate a symmetric coalescent from n singleton lineages to the MRCA,
/// recording every event.
pub fn simulate_s_coalescent<R: Rng + ?Sized>(
    f: &CoagulationMeasure,
    n: u32,
    rng: &mut R,
) -> Result<SCoalescentRun> {
    Ok(SymCoalescentContext::new(f, n)?.simulate(rng, true))
}

fn exp_sample<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    // inverse-CDF exponential
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

fn uniform_pair<R: Rng + ?Sized>(b: usize, rng: &mut R) -> (usize, usize) {
    debug_assert!(b >= 2);
    let i = rng.gen_range(0..b);
    let mut j = rng.gen_range(0..b - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

// Draw k proportional to k^{-beta} P(C^k_b) over k >= 1 (k <= cap when
// truncated) by rejection from the cell-wise dominating envelope
//   h(x) = x^{-beta} min(1, mu/x),   mu = C(b,2),
// plus an atom at k = 1. P(C^k_b) <= min(1, mu/k) (union bound) and h is
// decreasing, so every discrete weight is below its envelope cell mass.
fn sample_power_law_k<R: Rng + ?Sized>(beta: f64, cap: Option<u64>, b: u64, rng: &mut R) -> u64 {
    let mu = choose2(b).max(1.0);
    let cap_f = cap.map(|c| c as f64);
    // piece 1: atom at k=1 with envelope weight 1 (P(C^1_b) = 1)
    // piece 2: x in (1, mu]: h = x^{-beta}
    // piece 3: x in (max(1,mu), inf): h = mu x^{-1-beta}
    let hi2 = cap_f.map_or(mu, |c| c.min(mu)).max(1.0);
    let m2 = power_integral(-beta, 1.0, hi2);
    let lo3 = hi2;
    let m3 = match cap_f {
        Some(c) if c <= lo3 => 0.0,
        Some(c) => mu * power_integral(-1.0 - beta, lo3, c),
        None => mu * lo3.powf(-beta) / beta,
    };
    loop {
        let u: f64 = rng.gen::<f64>() * (1.0 + m2 + m3);
        let (k, envelope_cell) = if u < 1.0 {
            (1u64, 1.0)
        } else if u < 1.0 + m2 {
            let x = power_integral_inverse(-beta, 1.0, u - 1.0);
            let k = x.ceil().max(2.0) as u64;
            let cell = envelope_cell_mass(beta, mu, k, cap);
            (k, cell)
        } else {
            let v = (u - 1.0 - m2) / mu;
            let x = match cap_f {
                Some(_) | None if beta > 0.0 => {
                    // inverse of int_{lo3}^x t^{-1-beta} dt = v
                    let base = lo3.powf(-beta) - beta * v;
                    base.powf(-1.0 / beta)
                }
                _ => unreachable!(),
            };
            if !x.is_finite() {
                continue;
            }
            let k = x.ceil().max(lo3.floor() + 1.0) as u64;
            if let Some(c) = cap {
                if k > c {
                    continue;
                }
            }
            let cell = envelope_cell_mass(beta, mu, k, cap);
            (k, cell)
        };
        if envelope_cell <= 0.0 {
            continue;
        }
        let w = (k as f64).powf(-beta) * collision_prob(k, b);
        debug_assert!(w <= envelope_cell * (1.0 + 1e-9));
        if rng.gen::<f64>() * envelope_cell < w {
            return k;
        }
    }
}

// int_{lo}^{hi} x^p dx for p != -1 handled too
fn power_integral(p: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if (p + 1.0).abs() < 1e-12 {
        (hi / lo).ln()
    } else {
        (hi.powf(p + 1.0) - lo.powf(p + 1.0)) / (p + 1.0)
    }
}

// solve int_{lo}^{x} t^p dt = v for x
fn power_integral_inverse(p: f64, lo: f64, v: f64) -> f64 {
    if (p + 1.0).abs() < 1e-12 {
        lo * v.exp()
    } else {
        (lo.powf(p + 1.0) + (p + 1.0) * v).powf(1.0 / (p + 1.0))
    }
}

// Envelope mass of the cell (k-1, k]: int over the cell of h, with h as in
// sample_power_law_k. k >= 2.
fn envelope_cell_mass(beta: f64, mu: f64, k: u64, cap: Option<u64>) -> f64 {
    if let Some(c) = cap {
        if k > c {
            return 0.0;
        }
    }
    let lo = (k - 1) as f64;
    let hi = k as f64;
    if hi <= mu {
        power_integral(-beta, lo.max(1.0), hi)
    } else if lo >= mu {
        mu * power_integral(-1.0 - beta, lo, hi)
    } else {
        power_integral(-beta, lo.max(1.0), mu) + mu * power_integral(-1.0 - beta, mu, hi)
    }
}

// Sample the allocation of b blocks into k boxes conditioned on at least
// one collision, as groups of block indices per occupied box.
//
// Two exact regimes:
//  - plain rejection while P(C^k_b) is not too small (retry cap 10^4);
//  - planted-pair proposal beyond: pick a uniform pair and a uniform box
//    for it, allocate the rest uniformly. The proposal density of an
//    allocation A is q(A) = cp(A) / (C(b,2) k^{b-1}) with
//    cp(A) = sum_boxes C(occupancy, 2), while the target (uniform given a
//    collision) is constant on the support, so accepting with probability
//    1/cp(A) <= 1 makes the draw exact, not just approximately corrected.
fn conditional_allocation<R: Rng + ?Sized>(k: u64, b: usize, rng: &mut R) -> Vec<Vec<usize>> {
    debug_assert!(b >= 2);
    if k == 1 {
        return vec![(0..b).collect()];
    }
    let p_collision = collision_prob(k, b as u64);
    let mut boxes: HashMap<u64, Vec<usize>> = HashMap::new();
    if p_collision >= 0.02 {
        for _attempt in 0..10_000 {
            boxes.clear();
            let mut collided = false;
            for idx in 0..b {
                let bx = rng.gen_range(0..k);
                let entry = boxes.entry(bx).or_default();
                entry.push(idx);
                collided |= entry.len() >= 2;
            }
            if collided {
                return boxes.into_values().collect();
            }
        }
    }
    loop {
        boxes.clear();
        let (i, j) = uniform_pair(b, rng);
        let planted = rng.gen_range(0..k);
        boxes.insert(planted, vec![i, j]);
        for idx in 0..b {
            if idx == i || idx == j {
                continue;
            }
            boxes.entry(rng.gen_range(0..k)).or_default().push(idx);
        }
        let colliding_pairs: f64 = boxes
            .values()
            .map(|v| choose2(v.len() as u64))
            .sum();
        if rng.gen::<f64>() * colliding_pairs < 1.0 {
            return boxes.into_values().collect();
        }
    }
}

// ---------------------------------------------------------------------------
// Drastic bottleneck coalescent
// ---------------------------------------------------------------------------

/// Simulate the drastic-bottleneck coalescent: Kingman pairs at rate `a`
/// per pair; at rate `eta` a bottleneck of size k ~ F0 and length g ~ L,
/// realized as one paintbox step into k boxes followed by g-1 ancestral
/// Wright-Fisher generations at size k, all collapsed into one instant.
/// Bottleneck draws that merge nothing advance time but are not recorded.
pub fn simulate_drastic_bottleneck_coalescent<R: Rng + ?Sized>(
    f0: &DiscreteLaw,
    l: &DiscreteLaw,
    eta: f64,
    a: f64,
    n: u32,
    rng: &mut R,
) -> Result<SCoalescentRun> {
    if n < 2 {
        return Err(Error::InvalidParameter("need a sample of size >= 2".into()));
    }
    if !(eta >= 0.0) || !(a >= 0.0) || eta + a == 0.0 {
        return Err(Error::InvalidParameter(
            "need eta >= 0, a >= 0, eta + a > 0".into(),
        ));
    }
    let mut partition = LabeledPartition::singletons(n);
    let mut t = 0.0f64;
    let mut length = CompensatedSum::new();
    let mut events = Vec::new();
    while partition.num_blocks() > 1 {
        let b = partition.num_blocks() as u64;
        let kingman_rate = a * choose2(b);
        let total = kingman_rate + eta;
        let wait = exp_sample(total, rng);
        length.add(wait * b as f64);
        t += wait;
        if rng.gen::<f64>() * total < kingman_rate {
            let (i, j) = uniform_pair(b as usize, rng);
            partition = partition.merge_pair(i, j);
            events.push(EventRecord {
                time: t,
                kind: EventKind::KingmanPair,
                partition_after: partition.clone(),
            });
        } else {
            let k = f0.sample(rng);
            let g = l.sample(rng);
            let mut p = paintbox_merge(&partition, k, rng).0;
            for _ in 1..g {
                p = wf_ancestral_step(&p, k, rng);
            }
            if p.num_blocks() < partition.num_blocks() {
                partition = p;
                events.push(EventRecord {
                    time: t,
                    kind: EventKind::Drastic { k, g },
                    partition_after: partition.clone(),
                });
            }
        }
    }
    let n_events = events.len();
    Ok(SCoalescentRun {
        events,
        stats: TreeStats {
            length: length.value(),
            tmrca: t,
            n_events,
        },
    })
}

// ---------------------------------------------------------------------------
// Subordinated Kingman coalescent
// ---------------------------------------------------------------------------

/// Simulate the subordinated Kingman coalescent: Kingman dynamics at rate
/// `a` per pair between jumps of the subordinator; at rate `eta` the
/// random clock jumps by sigma ~ L_gamma and the current blocks undergo
/// an instantaneous Kingman run of duration sigma (a pure-death chain
/// with pair-merger rate C(b,2)). Jumps that merge nothing are silent.
pub fn simulate_subordinated_kingman<R: Rng + ?Sized>(
    l_gamma: &PositiveLaw,
    eta: f64,
    a: f64,
    n: u32,
    rng: &mut R,
) -> Result<SCoalescentRun> {
    if n < 2 {
        return Err(Error::InvalidParameter("need a sample of size >= 2".into()));
    }
    l_gamma.validate()?;
    if !(eta >= 0.0) || !(a >= 0.0) || eta + a == 0.0 {
        return Err(Error::InvalidParameter(
            "need eta >= 0, a >= 0, eta + a > 0".into(),
        ));
    }
    let mut partition = LabeledPartition::singletons(n);
    let mut t = 0.0f64;
    let mut length = CompensatedSum::new();
    let mut events = Vec::new();
    while partition.num_blocks() > 1 {
        let b = partition.num_blocks() as u64;
        let kingman_rate = a * choose2(b);
        let total = kingman_rate + eta;
        let wait = exp_sample(total, rng);
        length.add(wait * b as f64);
        t += wait;
        if rng.gen::<f64>() * total < kingman_rate {
            let (i, j) = uniform_pair(b as usize, rng);
            partition = partition.merge_pair(i, j);
            events.push(EventRecord {
                time: t,
                kind: EventKind::KingmanPair,
                partition_after: partition.clone(),
            });
        } else {
            let sigma = l_gamma.sample(rng);
            // instantaneous Kingman run of duration sigma
            let mut p = partition.clone();
            let mut local = 0.0f64;
            while p.num_blocks() > 1 {
                let rate = choose2(p.num_blocks() as u64);
                local += exp_sample(rate, rng);
                if local > sigma {
                    break;
                }
                let (i, j) = uniform_pair(p.num_blocks(), rng);
                p = p.merge_pair(i, j);
            }
            if p.num_blocks() < partition.num_blocks() {
                partition = p;
                events.push(EventRecord {
                    time: t,
                    kind: EventKind::Soft { sigma },
                    partition_after: partition.clone(),
                });
            }
        }
    }
    let n_events = events.len();
    Ok(SCoalescentRun {
        events,
        stats: TreeStats {
            length: length.value(),
            tmrca: t,
            n_events,
        },
    })
}

/// Monte-Carlo mean and standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub reps: usize,
}

pub fn mean_se(samples: &[f64]) -> MeanSe {
    let n = samples.len();
    assert!(n >= 2, "need at least two samples");
    let mut acc = CompensatedSum::new();
    for &x in samples {
        acc.add(x);
    }
    let mean = acc.value() / n as f64;
    let mut var = CompensatedSum::new();
    for &x in samples {
        var.add((x - mean) * (x - mean));
    }
    let se = (var.value() / (n as f64 - 1.0) / n as f64).sqrt();
    MeanSe { mean, se, reps: n }
}

/// Monte-Carlo estimate of the expected total tree length of the
/// symmetric coalescent started from n lineages.
pub fn estimate_tree_length<R: Rng + ?Sized>(
    f: &CoagulationMeasure,
    n: u32,
    reps: usize,
    rng: &mut R,
) -> Result<MeanSe> {
    if reps < 2 {
        return Err(Error::InvalidParameter("need reps >= 2".into()));
    }
    let ctx = SymCoalescentContext::new(f, n)?;
    let lengths: Vec<f64> = (0..reps)
        .map(|_| ctx.simulate_count_chain(rng).length)
        .collect();
    Ok(mean_se(&lengths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replicate_rng;

    #[test]
    fn partition_basics() {
        let p = LabeledPartition::singletons(4);
        assert_eq!(p.num_blocks(), 4);
        let q = p.merge_groups(&[vec![0, 2], vec![1, 3]]);
        assert_eq!(q.num_blocks(), 2);
        assert_eq!(q.blocks()[0], vec![1, 3]);
        assert_eq!(q.blocks()[1], vec![2, 4]);
        assert!(LabeledPartition::from_blocks(vec![vec![1, 2], vec![2]]).is_err());
        assert!(LabeledPartition::from_blocks(vec![vec![1], vec![3]]).is_err());
    }

    #[test]
    fn paintbox_one_box_merges_all() {
        let mut rng = replicate_rng(1, 0);
        let p = LabeledPartition::singletons(6);
        let (q, occ) = paintbox_merge(&p, 1, &mut rng);
        assert_eq!(q.num_blocks(), 1);
        assert_eq!(occ, vec![6]);
    }

    #[test]
    fn paintbox_single_block_unchanged() {
        let mut rng = replicate_rng(1, 1);
        let p = LabeledPartition::from_blocks(vec![vec![1, 2, 3]]).unwrap();
        let (q, _) = paintbox_merge(&p, 5, &mut rng);
        assert_eq!(q, p);
    }

    #[test]
    fn paintbox_two_blocks_two_boxes_merge_half_the_time() {
        let mut rng = replicate_rng(1, 2);
        let p = LabeledPartition::singletons(2);
        let reps = 100_000;
        let mut merged = 0u32;
        for _ in 0..reps {
            if paintbox_merge(&p, 2, &mut rng).0.num_blocks() == 1 {
                merged += 1;
            }
        }
        // 4 sigma band around p = 1/2
        let se = (0.25f64 / reps as f64).sqrt();
        let freq = merged as f64 / reps as f64;
        assert!((freq - 0.5).abs() < 4.0 * se, "{freq}");
    }

    #[test]
    fn ancestral_count_matrix_examples() {
        let m = ancestral_count_matrix(2, 2).unwrap();
        assert!((m[1][0] - 0.5).abs() < 1e-14 && (m[1][1] - 0.5).abs() < 1e-14);
        assert!((m[0][0] - 1.0).abs() < 1e-14);
        let m = ancestral_count_matrix(3, 3).unwrap();
        assert!((m[2][0] - 1.0 / 9.0).abs() < 1e-14);
        assert!((m[2][1] - 6.0 / 9.0).abs() < 1e-14);
        assert!((m[2][2] - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn ancestral_count_matrix_rows_are_stochastic_and_match_occupancy() {
        for k in [1u64, 2, 7, 100, 10_000] {
            let n = 40;
            let m = ancestral_count_matrix(k, n).unwrap();
            for j in 1..=n {
                let row_sum: f64 = m[j - 1].iter().sum();
                assert!((row_sum - 1.0).abs() < 1e-12, "k={k} j={j}: {row_sum}");
                // independent route
                let occ = crate::rates::occupancy_pmf(k, j as u64);
                for (i0, &p) in occ.iter().enumerate() {
                    assert!((m[j - 1][i0] - p).abs() < 1e-11, "k={k} j={j} i={}", i0 + 1);
                }
            }
        }
    }

    #[test]
    fn star_coalescent_single_event() {
        let f = CoagulationMeasure::explicit(0.0, &[(1, 1.0)]).unwrap();
        let mut rng = replicate_rng(2, 0);
        let reps = 20_000;
        let mut tmrcas = Vec::with_capacity(reps);
        for _ in 0..reps {
            let run = simulate_s_coalescent(&f, 10, &mut rng).unwrap();
            assert_eq!(run.stats.n_events, 1);
            assert_eq!(run.events.len(), 1);
            assert!((run.stats.length - 10.0 * run.stats.tmrca).abs() < 1e-12);
            tmrcas.push(run.stats.tmrca);
        }
        // tmrca ~ Exp(1)
        let ms = mean_se(&tmrcas);
        assert!((ms.mean - 1.0).abs() < 4.0 * ms.se, "{ms:?}");
    }

    #[test]
    fn kingman_three_lineages_mean_tmrca() {
        let f = CoagulationMeasure::kingman(1.0);
        let mut rng = replicate_rng(2, 1);
        let reps = 40_000;
        let mut tmrcas = Vec::with_capacity(reps);
        for _ in 0..reps {
            tmrcas.push(simulate_s_coalescent(&f, 3, &mut rng).unwrap().stats.tmrca);
        }
        let ms = mean_se(&tmrcas);
        assert!((ms.mean - 4.0 / 3.0).abs() < 4.0 * ms.se, "{ms:?}");
    }

    #[test]
    fn pair_rate_matches_generator() {
        // F = delta_2 body: q_21 = 0.5, so tmrca for n=2 is Exp(1/2)
        let f = CoagulationMeasure::explicit(0.0, &[(2, 1.0)]).unwrap();
        let mut rng = replicate_rng(2, 2);
        let reps = 40_000;
        let mut tmrcas = Vec::with_capacity(reps);
        for _ in 0..reps {
            tmrcas.push(simulate_s_coalescent(&f, 2, &mut rng).unwrap().stats.tmrca);
        }
        let ms = mean_se(&tmrcas);
        assert!((ms.mean - 2.0).abs() < 4.0 * ms.se, "{ms:?}");
    }

    #[test]
    fn block_count_monotone_and_absorbing() {
        let f = CoagulationMeasure::power_law(1.0, 0.5, None).unwrap();
        let mut rng = replicate_rng(2, 3);
        for _ in 0..50 {
            let run = simulate_s_coalescent(&f, 30, &mut rng).unwrap();
            let mut prev = 30usize;
            for ev in &run.events {
                let b = ev.partition_after.num_blocks();
                assert!(b < prev || matches!(ev.kind, EventKind::KingmanPair) && b == prev - 1);
                assert!(b <= prev);
                prev = b;
            }
            assert_eq!(prev, 1);
        }
    }

    #[test]
    fn zero_measure_is_rejected() {
        let f = CoagulationMeasure::kingman(0.0);
        let mut rng = replicate_rng(2, 4);
        assert!(simulate_s_coalescent(&f, 5, &mut rng).is_err());
    }

    #[test]
    fn power_law_k_sampler_matches_weights() {
        // chi-square against exact weights, binned over small k plus a tail bin
        let beta = 0.7;
        let b = 6u64;
        let mut rng = replicate_rng(3, 0);
        let reps = 200_000usize;
        let kmax = 40u64;
        let mut counts = vec![0u64; kmax as usize + 2];
        for _ in 0..reps {
            let k = sample_power_law_k(beta, None, b, &mut rng);
            if k <= kmax {
                counts[k as usize] += 1;
            } else {
                counts[kmax as usize + 1] += 1;
            }
        }
        let total_rate = SymCoalescentContext::new(
            &CoagulationMeasure::power_law(0.0, beta, None).unwrap(),
            b as u32,
        )
        .unwrap()
        .symmetric_event_rate(b as u32);
        let mut chi2 = 0.0;
        let mut tail_p = 1.0;
        for k in 1..=kmax {
            let p = (k as f64).powf(-beta) * collision_prob(k, b) / total_rate;
            tail_p -= p;
            let expected = p * reps as f64;
            chi2 += (counts[k as usize] as f64 - expected).powi(2) / expected;
        }
        let expected_tail = tail_p * reps as f64;
        chi2 += (counts[kmax as usize + 1] as f64 - expected_tail).powi(2) / expected_tail;
        // 41 bins -> df = 40; 4 sigma is roughly df + 4 sqrt(2 df) ~ 76
        assert!(chi2 < 76.0, "chi2 = {chi2}, tail count {}", counts[kmax as usize + 1]);
    }

    #[test]
    fn conditional_allocation_always_collides() {
        let mut rng = replicate_rng(3, 1);
        for &(k, b) in &[(2u64, 4usize), (10, 3), (1_000_000, 5), (1, 7)] {
            for _ in 0..200 {
                let groups = conditional_allocation(k, b, &mut rng);
                let sizes: usize = groups.iter().map(|g| g.len()).sum();
                assert_eq!(sizes, b);
                assert!(groups.iter().any(|g| g.len() >= 2), "k={k} b={b}");
            }
        }
    }

    #[test]
    fn conditional_allocation_planted_regime_unbiased() {
        // k large: conditioned on a collision, the merged pair is uniform
        // among C(b,2) pairs and triple collisions are rare; check the
        // pair-marginal is uniform via chi-square.
        let mut rng = replicate_rng(3, 2);
        let (k, b) = (1_000_000u64, 5usize);
        let reps = 60_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..reps {
            let groups = conditional_allocation(k, b, &mut rng);
            for g in groups.iter().filter(|g| g.len() == 2) {
                let key = (g[0].min(g[1]), g[0].max(g[1]));
                *counts.entry(key).or_insert(0u64) += 1;
            }
        }
        let total: u64 = counts.values().sum();
        let pairs = choose2(b as u64);
        let expected = total as f64 / pairs;
        let mut chi2 = 0.0;
        for (_, &c) in counts.iter() {
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        // df = 9, 4 sigma ~ 9 + 4 sqrt(18) ~ 26
        assert!(counts.len() == pairs as usize && chi2 < 26.0, "chi2={chi2}");
    }

    #[test]
    fn drastic_point_mass_collapses() {
        // F0 = delta_1: every bottleneck collapses everything
        let f0 = DiscreteLaw::point_mass(1);
        let l = DiscreteLaw::point_mass(3);
        let mut rng = replicate_rng(4, 0);
        let run = simulate_drastic_bottleneck_coalescent(&f0, &l, 1.0, 0.0, 12, &mut rng).unwrap();
        assert_eq!(run.stats.n_events, 1);
        assert_eq!(run.events[0].partition_after.num_blocks(), 1);
    }

    #[test]
    fn drastic_two_stage_merge_probability() {
        // F0 = delta_2, L = delta_2, eta = 1, n = 2: merge prob per event
        // = P(W=1) + P(W=2) * 1/2 = 3/4, so tmrca ~ Exp(3/4)
        let f0 = DiscreteLaw::point_mass(2);
        let l = DiscreteLaw::point_mass(2);
        let mut rng = replicate_rng(4, 1);
        let reps = 40_000;
        let mut tm = Vec::with_capacity(reps);
        for _ in 0..reps {
            tm.push(
                simulate_drastic_bottleneck_coalescent(&f0, &l, 1.0, 0.0, 2, &mut rng)
                    .unwrap()
                    .stats
                    .tmrca,
            );
        }
        let ms = mean_se(&tm);
        assert!((ms.mean - 4.0 / 3.0).abs() < 4.0 * ms.se, "{ms:?}");
    }

    #[test]
    fn drastic_g1_reduces_to_symmetric() {
        // L = delta_1: same law as the S-coalescent with F = a d0 + eta F0;
        // compare mean tmrca at n = 3
        let f0 = DiscreteLaw::new(vec![(2, 0.5), (3, 0.5)]).unwrap();
        let l = DiscreteLaw::point_mass(1);
        let f = CoagulationMeasure::explicit(1.0, &[(2, 0.5), (3, 0.5)]).unwrap();
        let mut rng = replicate_rng(4, 2);
        let reps = 30_000;
        let mut a_tm = Vec::with_capacity(reps);
        let mut b_tm = Vec::with_capacity(reps);
        for _ in 0..reps {
            a_tm.push(
                simulate_drastic_bottleneck_coalescent(&f0, &l, 1.0, 1.0, 3, &mut rng)
                    .unwrap()
                    .stats
                    .tmrca,
            );
            b_tm.push(simulate_s_coalescent(&f, 3, &mut rng).unwrap().stats.tmrca);
        }
        let (a, b) = (mean_se(&a_tm), mean_se(&b_tm));
        let se = (a.se * a.se + b.se * b.se).sqrt();
        assert!((a.mean - b.mean).abs() < 4.0 * se, "{a:?} vs {b:?}");
    }

    #[test]
    fn soft_kingman_only() {
        let lg = PositiveLaw::PointMass { sigma: 0.5 };
        let mut rng = replicate_rng(5, 0);
        let reps = 40_000;
        let mut tm = Vec::with_capacity(reps);
        for _ in 0..reps {
            tm.push(
                simulate_subordinated_kingman(&lg, 0.0, 1.0, 2, &mut rng)
                    .unwrap()
                    .stats
                    .tmrca,
            );
        }
        let ms = mean_se(&tm);
        assert!((ms.mean - 1.0).abs() < 4.0 * ms.se, "{ms:?}");
    }

    #[test]
    fn soft_jump_merge_probability() {
        // a=0, eta=1, sigma=0.5, n=2: merge per event w.p. 1 - e^{-1/2}
        let lg = PositiveLaw::PointMass { sigma: 0.5 };
        let mut rng = replicate_rng(5, 1);
        let reps = 40_000;
        let mut tm = Vec::with_capacity(reps);
        for _ in 0..reps {
            tm.push(
                simulate_subordinated_kingman(&lg, 1.0, 0.0, 2, &mut rng)
                    .unwrap()
                    .stats
                    .tmrca,
            );
        }
        let p = -(-0.5f64).exp_m1();
        let ms = mean_se(&tm);
        assert!((ms.mean - 1.0 / p).abs() < 4.0 * ms.se, "{ms:?} expected {}", 1.0 / p);
    }

    #[test]
    fn soft_huge_sigma_collapses() {
        let lg = PositiveLaw::PointMass { sigma: 1e9 };
        let mut rng = replicate_rng(5, 2);
        let run = simulate_subordinated_kingman(&lg, 1.0, 0.0, 20, &mut rng).unwrap();
        assert_eq!(run.stats.n_events, 1);
    }

    #[test]
    fn tree_length_star() {
        let f = CoagulationMeasure::explicit(0.0, &[(1, 1.0)]).unwrap();
        let mut rng = replicate_rng(6, 0);
        let est = estimate_tree_length(&f, 10, 20_000, &mut rng).unwrap();
        assert!((est.mean - 10.0).abs() < 4.0 * est.se, "{est:?}");
    }

    #[test]
    fn tree_length_kingman_harmonic() {
        let f = CoagulationMeasure::kingman(1.0);
        let mut rng = replicate_rng(6, 1);
        let n = 100u32;
        let expected: f64 = 2.0 * (1..n).map(|k| 1.0 / k as f64).sum::<f64>();
        let est = estimate_tree_length(&f, n, 20_000, &mut rng).unwrap();
        assert!((est.mean - expected).abs() < 4.0 * est.se, "{est:?} vs {expected}");
    }

    #[test]
    fn exchangeability_under_relabeling() {
        // label-occupancy of the first merged block should be uniform
        // across labels; chi-square over labels
        let f = CoagulationMeasure::explicit(0.0, &[(3, 1.0)]).unwrap();
        let mut rng = replicate_rng(6, 2);
        let n = 6u32;
        let reps = 30_000;
        let mut label_counts = vec![0u64; n as usize];
        let mut total = 0u64;
        for _ in 0..reps {
            let run = simulate_s_coalescent(&f, n, &mut rng).unwrap();
            let first = &run.events[0].partition_after;
            for block in first.blocks().iter().filter(|b| b.len() >= 2) {
                for &lbl in block.iter() {
                    label_counts[(lbl - 1) as usize] += 1;
                    total += 1;
                }
            }
        }
        let expected = total as f64 / n as f64;
        let chi2: f64 = label_counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // df = 5; 4 sigma ~ 5 + 4 sqrt(10) ~ 17.6
        assert!(chi2 < 17.6, "chi2 = {chi2}, counts {label_counts:?}");
    }
}
