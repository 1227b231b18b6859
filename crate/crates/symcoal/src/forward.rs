//! Forward-in-time Wright-Fisher simulators for the four bottleneck
//! demographies, bottleneck collapse, time rescaling to step paths,
//! sampled-ancestry extraction, and the coefficients of the
//! time-rescaled-Kingman limit criterion.

use crate::error::{Error, Result};
use crate::measures::{CoagulationMeasure, DiscreteLaw, MeasureBody, PositiveLaw};
use crate::metric::StepPath;
use crate::numeric::CompensatedSum;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

/// Bottleneck-size input for the short-drastic demography: either a raw
/// coagulation-measure body (truncated to k <= N^gamma and normalized, as
/// in the scaling theorem) or directly a probability law.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShortDrasticSizes {
    MeasureBody { body: MeasureBody },
    Law { law: DiscreteLaw },
}

/// Deterministic bottleneck-intensity family for the long-soft demography:
/// b_N = N^{-exponent}, which satisfies b -> 0 and N b -> infinity for
/// exponent in (0, 1). The default is 1/2.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntensityDecay {
    pub exponent: f64,
}

impl Default for IntensityDecay {
    fn default() -> Self {
        Self { exponent: 0.5 }
    }
}

/// A law on [0, 1) for i.i.d. relative population sizes; discretized as
/// R^N = floor(N r) + 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UnitLaw {
    Uniform01,
    Uniform { lo: f64, hi: f64 },
    PointMass { value: f64 },
}

impl UnitLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            UnitLaw::Uniform01 => Ok(()),
            UnitLaw::Uniform { lo, hi } => {
                if !(0.0 <= *lo && lo < hi && *hi <= 1.0) {
                    Err(Error::InvalidLaw(format!("uniform [{lo}, {hi}) not inside [0, 1)")))
                } else {
                    Ok(())
                }
            }
            UnitLaw::PointMass { value } => {
                if !(0.0 <= *value && *value < 1.0) {
                    Err(Error::InvalidLaw(format!("point mass {value} outside [0, 1)")))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            UnitLaw::Uniform01 => rng.gen::<f64>(),
            UnitLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
            UnitLaw::PointMass { value } => *value,
        }
    }

    /// P(floor(N r) + 1 = i) for i = 1..=N, as (i, p) pairs with p > 0.
    pub fn discretize(&self, n: u64) -> Vec<(u64, f64)> {
        match self {
            UnitLaw::Uniform01 => (1..=n).map(|i| (i, 1.0 / n as f64)).collect(),
            UnitLaw::Uniform { lo, hi } => {
                let mut out = Vec::new();
                for i in 1..=n {
                    let cell_lo = (i - 1) as f64 / n as f64;
                    let cell_hi = i as f64 / n as f64;
                    let overlap = (cell_hi.min(*hi) - cell_lo.max(*lo)).max(0.0);
                    if overlap > 0.0 {
                        out.push((i, overlap / (hi - lo)));
                    }
                }
                out
            }
            UnitLaw::PointMass { value } => vec![((n as f64 * value).floor() as u64 + 1, 1.0)],
        }
    }
}

/// The four bottleneck regimes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Demography {
    /// One-generation bottlenecks of size min(N, F) at per-generation
    /// probability k_N / N^alpha, where k_N = sum_{k <= N^gamma} F0(k).
    ShortDrastic {
        alpha: f64,
        gamma: f64,
        sizes: ShortDrasticSizes,
    },
    /// Bottlenecks of size min(F, N), F ~ F0, lasting L generations, with
    /// geometric spacing of mean N^alpha / eta.
    LongDrastic {
        alpha: f64,
        eta: f64,
        f0: DiscreteLaw,
        l: DiscreteLaw,
    },
    /// Bottlenecks of size ~ b N with b = N^{-e} -> 0, N b -> infinity,
    /// lasting l = round(gamma N b) generations with gamma ~ L_gamma.
    LongSoft {
        alpha: f64,
        eta: f64,
        #[serde(default)]
        intensity: IntensityDecay,
        l_gamma: PositiveLaw,
    },
    /// Independent sizes every generation: R^N_g = floor(N r_g) + 1.
    IidSizes { r: UnitLaw },
}

impl Demography {
    pub fn validate(&self) -> Result<()> {
        match self {
            Demography::ShortDrastic { alpha, gamma, .. } => {
                if !(0.0 < *alpha && *alpha <= 1.0) {
                    return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1]")));
                }
                if !(0.0 < *gamma && *gamma < alpha / 2.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma {gamma} outside (0, alpha/2)"
                    )));
                }
                Ok(())
            }
            Demography::LongDrastic { alpha, eta, .. } => {
                if !(0.0 < *alpha && *alpha <= 1.0) {
                    return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1]")));
                }
                if !(*eta > 0.0) {
                    return Err(Error::InvalidParameter(format!("eta {eta} must be > 0")));
                }
                Ok(())
            }
            Demography::LongSoft {
                alpha,
                eta,
                intensity,
                l_gamma,
            } => {
                if !(0.0 < *alpha && *alpha <= 1.0) {
                    return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1]")));
                }
                if !(*eta > 0.0) {
                    return Err(Error::InvalidParameter(format!("eta {eta} must be > 0")));
                }
                if !(0.0 < intensity.exponent && intensity.exponent < 1.0) {
                    return Err(Error::InvalidParameter(
                        "intensity decay exponent must lie in (0, 1)".into(),
                    ));
                }
                l_gamma.validate()
            }
            Demography::IidSizes { r } => r.validate(),
        }
    }
}

// Truncated-normalized bottleneck size machinery for the short-drastic
// demography: k_N = sum_{k <= N^gamma} F0(k) and sizes drawn from the
// normalized truncation.
struct ShortDrasticDraw {
    k_n: f64,
    // cumulative (k, cum_mass) over the truncated support
    cdf: Vec<(u64, f64)>,
}

impl ShortDrasticDraw {
    fn build(sizes: &ShortDrasticSizes, n: u64, gamma: f64) -> Result<Self> {
        let cutoff = ((n as f64).powf(gamma).floor() as u64).max(1);
        let masses: Vec<(u64, f64)> = match sizes {
            ShortDrasticSizes::MeasureBody { body } => {
                let m = CoagulationMeasure::new(0.0, body.clone())?;
                match body {
                    MeasureBody::Explicit { masses } => masses
                        .iter()
                        .copied()
                        .filter(|&(k, _)| k <= cutoff)
                        .collect(),
                    MeasureBody::PowerLaw { .. } => {
                        (1..=cutoff).map(|k| (k, m.mass(k))).filter(|&(_, w)| w > 0.0).collect()
                    }
                }
            }
            ShortDrasticSizes::Law { law } => law
                .support()
                .iter()
                .copied()
                .filter(|&(k, _)| k <= cutoff)
                .collect(),
        };
        if masses.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no bottleneck size mass at or below N^gamma = {cutoff}"
            )));
        }
        let mut cdf = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for (k, w) in masses {
            acc += w;
            cdf.push((k, acc));
        }
        Ok(Self { k_n: acc, cdf })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen::<f64>() * self.k_n;
        for &(k, c) in &self.cdf {
            if u < c {
                return k;
            }
        }
        self.cdf.last().unwrap().0
    }
}

/// Per-generation record of a forward simulation.
#[derive(Debug, Clone)]
pub struct ForwardTrajectory {
    pub n: u64,
    /// population size per generation
    pub sizes: Vec<u32>,
    /// count of type-1 individuals per generation
    pub counts: Vec<u32>,
    /// bottleneck membership flags
    pub bottleneck: Vec<bool>,
}

impl ForwardTrajectory {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Type-1 frequency per generation.
    pub fn frequencies(&self) -> Vec<f64> {
        self.sizes
            .iter()
            .zip(&self.counts)
            .map(|(&r, &c)| c as f64 / r as f64)
            .collect()
    }

    /// Columnar CSV: generation,size,count,in_bottleneck
    pub fn to_csv(&self) -> String {
        let mut out = String::from("generation,size,count,in_bottleneck\n");
        for g in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                g, self.sizes[g], self.counts[g], self.bottleneck[g] as u8
            ));
        }
        out
    }
}

// exact binomial sampling (rand_distr uses inversion for small n*p and the
// BTPE exact-rejection algorithm otherwise; no normal approximation)
fn binomial_draw<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Simulate `generations` steps of the Wright-Fisher model under the
/// given demography: every individual of generation g+1 picks a uniform
/// parent in generation g, so the type-1 count follows
/// Binomial(R_{g+1}, X_g).
pub fn simulate_forward<R: Rng + ?Sized>(
    demography: &Demography,
    n: u64,
    x0: f64,
    generations: usize,
    rng: &mut R,
) -> Result<ForwardTrajectory> {
    demography.validate()?;
    if n < 2 {
        return Err(Error::InvalidParameter("population size N must be >= 2".into()));
    }
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::InvalidParameter(format!("x0 = {x0} outside [0, 1]")));
    }
    let mut sizes = Vec::with_capacity(generations + 1);
    let mut counts = Vec::with_capacity(generations + 1);
    let mut flags = Vec::with_capacity(generations + 1);

    // per-demography size generator state
    let mut short = None;
    let mut schedule = BottleneckSchedule::default();
    let first_size = match demography {
        Demography::ShortDrastic { gamma, sizes: s, .. } => {
            short = Some(ShortDrasticDraw::build(s, n, *gamma)?);
            n
        }
        Demography::LongDrastic { .. } | Demography::LongSoft { .. } => n,
        Demography::IidSizes { r } => (n as f64 * r.sample(rng)).floor() as u64 + 1,
    };
    sizes.push(first_size as u32);
    counts.push((x0 * first_size as f64).round() as u32);
    flags.push(false);

    for _g in 0..generations {
        let (next_size, in_bottleneck) = match demography {
            Demography::ShortDrastic { alpha, .. } => {
                let draw = short.as_ref().unwrap();
                let p_bot = (draw.k_n / (n as f64).powf(*alpha)).min(1.0);
                if rng.gen::<f64>() < p_bot {
                    (draw.sample(rng).min(n), true)
                } else {
                    (n, false)
                }
            }
            Demography::LongDrastic { alpha, eta, f0, l } => schedule.next_size(
                n,
                rng,
                (eta / (n as f64).powf(*alpha)).min(1.0),
                |rng| {
                    let size = f0.sample(rng).min(n);
                    let len = l.sample(rng);
                    (size, len)
                },
            ),
            Demography::LongSoft {
                alpha,
                eta,
                intensity,
                l_gamma,
            } => schedule.next_size(
                n,
                rng,
                (eta / (n as f64).powf(*alpha)).min(1.0),
                |rng| {
                    let b = (n as f64).powf(-intensity.exponent);
                    let size = ((b * n as f64).round() as u64).clamp(1, n);
                    let gamma_draw = l_gamma.sample(rng);
                    let len = ((gamma_draw * n as f64 * b).round() as u64).max(1);
                    (size, len)
                },
            ),
            Demography::IidSizes { r } => ((n as f64 * r.sample(rng)).floor() as u64 + 1, false),
        };
        let x = *counts.last().unwrap() as f64 / *sizes.last().unwrap() as f64;
        let next_count = binomial_draw(next_size, x, rng);
        sizes.push(next_size as u32);
        counts.push(next_count as u32);
        flags.push(in_bottleneck);
    }
    Ok(ForwardTrajectory {
        n,
        sizes,
        counts,
        bottleneck: flags,
    })
}

// Geometric spacing + bottleneck-length state machine shared by the two
// long-bottleneck demographies. Spacing is geometric on {1, 2, ...} with
// success probability p (mean 1/p), so after a bottleneck ends at least
// one normal generation passes before the next can begin.
#[derive(Default)]
struct BottleneckSchedule {
    remaining_bottleneck: u64,
    bottleneck_size: u64,
    cooldown: bool,
}

impl BottleneckSchedule {
    fn next_size<R: Rng + ?Sized>(
        &mut self,
        n: u64,
        rng: &mut R,
        p_start: f64,
        mut draw_bottleneck: impl FnMut(&mut R) -> (u64, u64),
    ) -> (u64, bool) {
        if self.remaining_bottleneck > 0 {
            self.remaining_bottleneck -= 1;
            if self.remaining_bottleneck == 0 {
                self.cooldown = true;
            }
            return (self.bottleneck_size, true);
        }
        if self.cooldown {
            self.cooldown = false;
            return (n, false);
        }
        if rng.gen::<f64>() < p_start {
            let (size, len) = draw_bottleneck(rng);
            debug_assert!(len >= 1);
            self.bottleneck_size = size;
            self.remaining_bottleneck = len - 1;
            if len == 1 {
                self.cooldown = true;
            }
            (size, true)
        } else {
            (n, false)
        }
    }
}

/// A trajectory with bottleneck generations removed, plus the time-change
/// and exclusion-set witnesses used to compare it with the raw trajectory.
#[derive(Debug, Clone)]
pub struct CollapsedTrajectory {
    pub n: u64,
    pub sizes: Vec<u32>,
    pub counts: Vec<u32>,
    /// knots (collapsed generation, original generation) of the piecewise
    /// linear time change that maps collapsed time onto original time
    pub srt_knots: Vec<(u64, u64)>,
    /// original-generation bottleneck intervals [start, end)
    pub excluded: Vec<(u64, u64)>,
}

impl CollapsedTrajectory {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.sizes
            .iter()
            .zip(&self.counts)
            .map(|(&r, &c)| c as f64 / r as f64)
            .collect()
    }
}

/// Drop every bottleneck generation: entry i of the output is the state
/// at the i-th non-bottleneck generation of the input.
///
/// The knots are (collapsed index, original index) pairs of the natural
/// correspondence, emitted at each bottleneck boundary; linearly
/// interpolated they form a strictly increasing time change that maps
/// the collapsed clock onto the original one (slope 1 outside
/// bottlenecks). The excluded intervals are the original-generation
/// bottleneck runs [start, end); both witness how close the collapsed
/// path stays to the original outside the bottleneck set.
pub fn collapse_bottlenecks(t: &ForwardTrajectory) -> CollapsedTrajectory {
    let mut sizes = Vec::new();
    let mut counts = Vec::new();
    let mut knots: Vec<(u64, u64)> = Vec::new();
    let mut excluded = Vec::new();
    let mut bot_start: Option<u64> = None;
    for g in 0..t.len() {
        if t.bottleneck[g] {
            if bot_start.is_none() {
                bot_start = Some(g as u64);
                // last non-bottleneck generation before the run
                if g > 0 {
                    let knot = (sizes.len() as u64 - 1, g as u64 - 1);
                    if knots.last() != Some(&knot) {
                        knots.push(knot);
                    }
                }
            }
        } else {
            if let Some(s) = bot_start.take() {
                excluded.push((s, g as u64));
                knots.push((sizes.len() as u64, g as u64));
            }
            sizes.push(t.sizes[g]);
            counts.push(t.counts[g]);
        }
    }
    if let Some(s) = bot_start {
        excluded.push((s, t.len() as u64));
    }
    CollapsedTrajectory {
        n: t.n,
        sizes,
        counts,
        srt_knots: knots,
        excluded,
    }
}

/// Rescale a frequency sequence to the step path t -> X_{floor(s t)} on
/// [0, horizon], where s = N^alpha generations per unit time.
pub fn rescale_time(freqs: &[f64], time_scale: f64, horizon: f64) -> Result<StepPath> {
    if !(time_scale > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidParameter(
            "time scale and horizon must be positive".into(),
        ));
    }
    let needed = (time_scale * horizon).floor() as usize;
    if freqs.len() <= needed {
        return Err(Error::InvalidPath(format!(
            "trajectory has {} generations, needs more than {needed} for horizon {horizon}",
            freqs.len()
        )));
    }
    let mut times = vec![0.0f64];
    let mut values = vec![freqs[0]];
    for (g, &x) in freqs.iter().enumerate().take(needed + 1).skip(1) {
        if x != *values.last().unwrap() {
            let t = g as f64 / time_scale;
            if t > horizon {
                break;
            }
            times.push(t);
            values.push(x);
        }
    }
    StepPath::new(horizon, times, values)
}

/// Backward block-count path of a uniform sample from the last
/// generation: entry j is the number of ancestral lineages at generation
/// len-1-j (so entry 0 is the sample size, and the path is taken
/// backwards in generation order).
pub fn sample_ancestry<R: Rng + ?Sized>(
    t: &ForwardTrajectory,
    sample_size: u32,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let last = *t.sizes.last().ok_or_else(|| Error::InvalidPath("empty trajectory".into()))?;
    if sample_size == 0 || sample_size > last {
        return Err(Error::InvalidParameter(format!(
            "sample size {sample_size} outside 1..={last}"
        )));
    }
    // distinct uniform individuals of the final generation
    let mut lineages: Vec<u32> = Vec::with_capacity(sample_size as usize);
    while lineages.len() < sample_size as usize {
        let candidate = rng.gen_range(0..last);
        if !lineages.contains(&candidate) {
            lineages.push(candidate);
        }
    }
    let mut counts = vec![sample_size];
    for g in (0..t.len() - 1).rev() {
        let parents_available = t.sizes[g];
        let mut parents: Vec<u32> = lineages
            .iter()
            .map(|_| rng.gen_range(0..parents_available))
            .collect();
        parents.sort_unstable();
        parents.dedup();
        lineages = parents;
        counts.push(lineages.len() as u32);
    }
    Ok(counts)
}

/// The two coefficients of the time-rescaled-Kingman criterion for i.i.d.
/// population sizes: C_N = sum 1/i P(R = i) and D_N = sum 1/i^2 P(R = i).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MohleCoefficients {
    pub c_n: f64,
    pub d_n: f64,
    pub ratio: f64,
}

/// Exact sums over a discretized size law on {1, ..., N}.
pub fn mohle_coefficients(pmf: impl IntoIterator<Item = (u64, f64)>) -> MohleCoefficients {
    let mut c = CompensatedSum::new();
    let mut d = CompensatedSum::new();
    for (i, p) in pmf {
        debug_assert!(i >= 1);
        c.add(p / i as f64);
        d.add(p / (i as f64 * i as f64));
    }
    let c_n = c.value();
    let d_n = d.value();
    MohleCoefficients {
        c_n,
        d_n,
        ratio: d_n / c_n,
    }
}
