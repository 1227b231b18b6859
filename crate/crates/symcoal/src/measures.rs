//! Characterizing measures for symmetric coalescents and the auxiliary
//! bottleneck laws.
//!
//! A symmetric coalescent is characterized by a measure `F` on the
//! non-negative integers with a Kingman atom `a = F(0)` and a body on
//! `{1, 2, ...}`, subject to the finiteness condition
//! `F(0) < inf` and `sum_{k>=1} F(k)/k < inf`.
//! The equivalent simplex measure `S` puts mass `F(k)/k` on the uniform
//! partition into `k` parts (and `F(0)` on the Kingman point).

use crate::error::{Error, Result};
use crate::numeric::{zeta_tail, CompensatedSum};
use serde::{Deserialize, Serialize};

/// Body of a coagulation measure on the positive integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MeasureBody {
    /// Finite support: list of (k, mass) pairs, k >= 1, sorted by k.
    Explicit { masses: Vec<(u64, f64)> },
    /// F(k) = k^{-beta}, optionally truncated to k <= truncation.
    #[serde(rename = "powerlaw")]
    PowerLaw {
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truncation: Option<u64>,
    },
}

/// The measure `F = a delta_0 + F^0` characterizing a symmetric coalescent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct CoagulationMeasure {
    kingman_atom: f64,
    body: MeasureBody,
}

#[derive(Serialize, Deserialize)]
struct RawMeasure {
    a: f64,
    body: MeasureBody,
}

impl TryFrom<RawMeasure> for CoagulationMeasure {
    type Error = Error;
    fn try_from(raw: RawMeasure) -> Result<Self> {
        CoagulationMeasure::new(raw.a, raw.body)
    }
}

impl From<CoagulationMeasure> for RawMeasure {
    fn from(m: CoagulationMeasure) -> Self {
        RawMeasure {
            a: m.kingman_atom,
            body: m.body,
        }
    }
}

/// Outcome of checking the measure invariants.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub kingman_atom: f64,
    /// sum_{k>=1} F(k)/k, when computable (always finite for valid bodies).
    pub sum_f_over_k: Option<f64>,
    pub issues: Vec<String>,
}

impl CoagulationMeasure {
    /// Build a measure, rejecting anything that violates the invariants.
    pub fn new(kingman_atom: f64, body: MeasureBody) -> Result<Self> {
        let report = Self::validate_parts(kingman_atom, &body);
        if !report.pass {
            return Err(Error::InvalidMeasure(report.issues.join("; ")));
        }
        let body = match body {
            MeasureBody::Explicit { mut masses } => {
                masses.sort_by_key(|&(k, _)| k);
                masses.retain(|&(_, m)| m > 0.0);
                MeasureBody::Explicit { masses }
            }
            other => other,
        };
        Ok(Self { kingman_atom, body })
    }

    /// Pure Kingman measure: F = a delta_0.
    pub fn kingman(a: f64) -> Self {
        Self::new(a, MeasureBody::Explicit { masses: vec![] }).expect("valid")
    }

    /// Explicit body plus Kingman atom.
    pub fn explicit(a: f64, masses: &[(u64, f64)]) -> Result<Self> {
        Self::new(
            a,
            MeasureBody::Explicit {
                masses: masses.to_vec(),
            },
        )
    }

    /// The (beta, S) family: F(k) = k^{-beta}.
    pub fn power_law(a: f64, beta: f64, truncation: Option<u64>) -> Result<Self> {
        Self::new(a, MeasureBody::PowerLaw { beta, truncation })
    }

    /// Check invariants without constructing; failures land in the report.
    pub fn validate_parts(kingman_atom: f64, body: &MeasureBody) -> ValidationReport {
        let mut issues = Vec::new();
        if !kingman_atom.is_finite() || kingman_atom < 0.0 {
            issues.push(format!(
                "kingman atom must be finite and >= 0, got {kingman_atom}"
            ));
        }
        let sum_f_over_k = match body {
            MeasureBody::Explicit { masses } => {
                let mut seen = std::collections::HashSet::new();
                let mut acc = CompensatedSum::new();
                for &(k, m) in masses {
                    if k == 0 {
                        issues.push("explicit body must not carry mass at k = 0".into());
                    }
                    if !m.is_finite() || m < 0.0 {
                        issues.push(format!("mass at k = {k} must be finite and >= 0, got {m}"));
                    }
                    if !seen.insert(k) {
                        issues.push(format!("duplicate support point k = {k}"));
                    }
                    if k > 0 && m.is_finite() {
                        acc.add(m / k as f64);
                    }
                }
                Some(acc.value())
            }
            MeasureBody::PowerLaw { beta, truncation } => {
                if !beta.is_finite() || *beta <= 0.0 {
                    issues.push(format!("power-law exponent must be > 0, got {beta}"));
                    None
                } else if let Some(cap) = truncation {
                    if *cap == 0 {
                        issues.push("power-law truncation must be >= 1".into());
                        None
                    } else {
                        let mut acc = CompensatedSum::new();
                        if *cap <= 10_000_000 {
                            for k in 1..=*cap {
                                acc.add((k as f64).powf(-beta - 1.0));
                            }
                        } else {
                            acc.add(zeta_tail(beta + 1.0, 1).value);
                            acc.add(-zeta_tail(beta + 1.0, cap + 1).value);
                        }
                        Some(acc.value())
                    }
                } else {
                    // sum k^{-(beta+1)} = zeta(beta+1), finite for beta > 0
                    Some(zeta_tail(beta + 1.0, 1).value)
                }
            }
        };
        ValidationReport {
            pass: issues.is_empty(),
            kingman_atom,
            sum_f_over_k,
            issues,
        }
    }

    /// Validation report for this (already valid) measure.
    pub fn validate(&self) -> ValidationReport {
        Self::validate_parts(self.kingman_atom, &self.body)
    }

    pub fn kingman_atom(&self) -> f64 {
        self.kingman_atom
    }

    pub fn body(&self) -> &MeasureBody {
        &self.body
    }

    /// F(k) for k >= 1.
    pub fn mass(&self, k: u64) -> f64 {
        debug_assert!(k >= 1);
        match &self.body {
            MeasureBody::Explicit { masses } => masses
                .iter()
                .find(|&&(kk, _)| kk == k)
                .map(|&(_, m)| m)
                .unwrap_or(0.0),
            MeasureBody::PowerLaw { beta, truncation } => {
                if truncation.map_or(true, |cap| k <= cap) {
                    (k as f64).powf(-beta)
                } else {
                    0.0
                }
            }
        }
    }

    /// True when the body has no mass anywhere.
    pub fn body_is_empty(&self) -> bool {
        match &self.body {
            MeasureBody::Explicit { masses } => masses.is_empty(),
            MeasureBody::PowerLaw { .. } => false,
        }
    }

    /// Largest support point of the body, when the support is finite.
    pub fn body_support_max(&self) -> Option<u64> {
        match &self.body {
            MeasureBody::Explicit { masses } => masses.last().map(|&(k, _)| k),
            MeasureBody::PowerLaw { truncation, .. } => *truncation,
        }
    }

    /// The simplex view: S(xi^0) = F(0) when the atom is positive, and
    /// S(xi^k) = F(k)/k on the body support. Power-law bodies without a
    /// truncation are listed up to `max_terms` points.
    pub fn s_view(&self, max_terms: usize) -> Vec<(u64, f64)> {
        let mut out = Vec::new();
        if self.kingman_atom > 0.0 {
            out.push((0, self.kingman_atom));
        }
        match &self.body {
            MeasureBody::Explicit { masses } => {
                for &(k, m) in masses {
                    out.push((k, m / k as f64));
                }
            }
            MeasureBody::PowerLaw { beta, truncation } => {
                let cap = truncation
                    .map(|c| c.min(max_terms as u64))
                    .unwrap_or(max_terms as u64);
                for k in 1..=cap {
                    out.push((k, (k as f64).powf(-beta - 1.0)));
                }
            }
        }
        out
    }

    /// Comes-down-from-infinity criterion: F(0) > 0 or sum_k F(k) = inf.
    /// Divergence is decided symbolically for untruncated power laws
    /// (beta <= 1); explicit and truncated bodies always have finite sum.
    pub fn cdi_check(&self) -> bool {
        if self.kingman_atom > 0.0 {
            return true;
        }
        match &self.body {
            MeasureBody::Explicit { .. } => false,
            MeasureBody::PowerLaw { beta, truncation } => truncation.is_none() && *beta <= 1.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("measure json: {e}")))
    }
}

/// A finitely supported probability law on the positive integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u64, f64)>", into = "Vec<(u64, f64)>")]
pub struct DiscreteLaw {
    support: Vec<(u64, f64)>,
}

impl TryFrom<Vec<(u64, f64)>> for DiscreteLaw {
    type Error = Error;
    fn try_from(v: Vec<(u64, f64)>) -> Result<Self> {
        DiscreteLaw::new(v)
    }
}

impl From<DiscreteLaw> for Vec<(u64, f64)> {
    fn from(l: DiscreteLaw) -> Self {
        l.support
    }
}

impl DiscreteLaw {
    pub fn new(mut support: Vec<(u64, f64)>) -> Result<Self> {
        support.sort_by_key(|&(k, _)| k);
        let mut total = CompensatedSum::new();
        let mut prev = 0u64;
        for &(k, p) in &support {
            if k == 0 {
                return Err(Error::InvalidLaw("support values must be >= 1".into()));
            }
            if k == prev {
                return Err(Error::InvalidLaw(format!("duplicate support value {k}")));
            }
            prev = k;
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidLaw(format!("probability at {k} is {p}")));
            }
            total.add(p);
        }
        if (total.value() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidLaw(format!(
                "probabilities sum to {}, expected 1",
                total.value()
            )));
        }
        support.retain(|&(_, p)| p > 0.0);
        Ok(Self { support })
    }

    pub fn point_mass(k: u64) -> Self {
        Self::new(vec![(k, 1.0)]).expect("valid")
    }

    pub fn support(&self) -> &[(u64, f64)] {
        &self.support
    }

    pub fn max_value(&self) -> u64 {
        self.support.last().map(|&(k, _)| k).unwrap_or(0)
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(k, p) in &self.support {
            acc += p;
            if u < acc {
                return k;
            }
        }
        self.support.last().map(|&(k, _)| k).unwrap_or(1)
    }
}

/// A probability law on (0, infinity) for bottleneck durations in the
/// subordinated-Kingman regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PositiveLaw {
    PointMass { sigma: f64 },
    Exponential { mean: f64 },
    Explicit { atoms: Vec<(f64, f64)> },
}

impl PositiveLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            PositiveLaw::PointMass { sigma } => {
                if !sigma.is_finite() || *sigma <= 0.0 {
                    return Err(Error::InvalidLaw(format!("point mass at {sigma}")));
                }
            }
            PositiveLaw::Exponential { mean } => {
                if !mean.is_finite() || *mean <= 0.0 {
                    return Err(Error::InvalidLaw(format!("exponential mean {mean}")));
                }
            }
            PositiveLaw::Explicit { atoms } => {
                let mut total = 0.0;
                for &(x, p) in atoms {
                    if !x.is_finite() || x <= 0.0 {
                        return Err(Error::InvalidLaw(format!("atom at {x} outside (0, inf)")));
                    }
                    if !p.is_finite() || p < 0.0 {
                        return Err(Error::InvalidLaw(format!("atom weight {p}")));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidLaw(format!("atom weights sum to {total}")));
                }
            }
        }
        Ok(())
    }

    /// Finite list of (value, probability) atoms, when the law is atomic.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            PositiveLaw::PointMass { sigma } => Some(vec![(*sigma, 1.0)]),
            PositiveLaw::Explicit { atoms } => Some(atoms.clone()),
            PositiveLaw::Exponential { .. } => None,
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PositiveLaw::PointMass { sigma } => *sigma,
            PositiveLaw::Exponential { mean } => {
                let u: f64 = rng.gen();
                -mean * (1.0 - u).ln()
            }
            PositiveLaw::Explicit { atoms } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for &(x, p) in atoms {
                    acc += p;
                    if u < acc {
                        return x;
                    }
                }
                atoms.last().map(|&(x, _)| x).unwrap_or(1.0)
            }
        }
    }
}
