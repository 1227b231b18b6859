//! Run configuration: a single JSON document selecting a command and its
//! parameters, plus the seed / replicate / worker / output envelope.
//! Command-line flags override the envelope keys.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use symcoal::forward::{Demography, UnitLaw};
use symcoal::measures::{CoagulationMeasure, DiscreteLaw, PositiveLaw};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(flatten)]
    pub command: CommandSpec,
}

fn default_replicates() -> usize {
    10_000
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "kebab-case")]
pub enum CommandSpec {
    Rates(RatesParams),
    SimulateCoalescent(SimulateCoalescentParams),
    SimulateForward(SimulateForwardParams),
    SimulateSde(SimulateSdeParams),
    Duality(DualityCommandParams),
    Metric(MetricParams),
    Asymptotics(AsymptoticsParams),
    Mohle(MohleParams),
}

impl CommandSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CommandSpec::Rates(_) => "rates",
            CommandSpec::SimulateCoalescent(_) => "simulate-coalescent",
            CommandSpec::SimulateForward(_) => "simulate-forward",
            CommandSpec::SimulateSde(_) => "simulate-sde",
            CommandSpec::Duality(_) => "duality",
            CommandSpec::Metric(_) => "metric",
            CommandSpec::Asymptotics(_) => "asymptotics",
            CommandSpec::Mohle(_) => "mohle",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatesParams {
    pub measure: CoagulationMeasure,
    pub n: u64,
    /// Specific part lists; all partitions of n when omitted (n <= 40).
    #[serde(default)]
    pub signatures: Option<Vec<Vec<u64>>>,
    /// Also emit the block-counting generator entries.
    #[serde(default)]
    pub generator: bool,
    /// Also emit total rates by both methods.
    #[serde(default)]
    pub total_rate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CoalescentModel {
    Symmetric {
        measure: CoagulationMeasure,
    },
    DrasticBottleneck {
        f0: DiscreteLaw,
        l: DiscreteLaw,
        eta: f64,
        a: f64,
    },
    SubordinatedKingman {
        l_gamma: PositiveLaw,
        eta: f64,
        a: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateCoalescentParams {
    #[serde(flatten)]
    pub model: CoalescentModel,
    pub n: u32,
    /// Write events.jsonl with one record per coalescence event.
    #[serde(default)]
    pub emit_events: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateForwardParams {
    pub demography: Demography,
    #[serde(rename = "N")]
    pub n: u64,
    pub x0: f64,
    pub generations: usize,
    /// Write the full trajectory CSV (generation,size,count,in_bottleneck).
    #[serde(default = "default_true")]
    pub emit_trajectory: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateSdeParams {
    #[serde(flatten)]
    pub spec: symcoal::sde::JumpDiffusionSpec,
    /// Moment orders to estimate at each checkpoint.
    #[serde(default = "default_moments")]
    pub moments: Vec<u32>,
    /// Times at which moments are reported (horizon when empty).
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    /// Write up to this many paths to paths.jsonl (0 = none).
    #[serde(default)]
    pub emit_paths: usize,
}

fn default_moments() -> Vec<u32> {
    vec![1, 2, 3]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DualityModelParams {
    ShortDrastic {
        f0: DiscreteLaw,
        alpha: f64,
    },
    LongDrastic {
        f0: DiscreteLaw,
        l: DiscreteLaw,
        eta: f64,
        alpha: f64,
    },
    LongSoft {
        l_gamma: PositiveLaw,
        eta: f64,
        alpha: f64,
    },
}

impl DualityModelParams {
    pub fn to_params(&self) -> symcoal::duality::DualityParams {
        match self {
            DualityModelParams::ShortDrastic { f0, alpha } => {
                symcoal::duality::DualityParams::ShortDrastic {
                    f0: f0.clone(),
                    alpha: *alpha,
                }
            }
            DualityModelParams::LongDrastic { f0, l, eta, alpha } => {
                symcoal::duality::DualityParams::LongDrastic {
                    f0: f0.clone(),
                    l: l.clone(),
                    eta: *eta,
                    alpha: *alpha,
                }
            }
            DualityModelParams::LongSoft { l_gamma, eta, alpha } => {
                symcoal::duality::DualityParams::LongSoft {
                    l_gamma: l_gamma.clone(),
                    eta: *eta,
                    alpha: *alpha,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualityCommandParams {
    #[serde(flatten)]
    pub model: DualityModelParams,
    pub xs: Vec<f64>,
    pub ns: Vec<u32>,
    pub t: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Adjusted z-score threshold for the embedded pass/fail check.
    #[serde(default = "default_z")]
    pub z_threshold: f64,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_z() -> f64 {
    3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricParams {
    /// CSV files with a `# horizon:` header and time,value rows.
    pub path_a: String,
    pub path_b: String,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticsParams {
    pub beta: f64,
    pub ns: Vec<u64>,
    /// Crossover coefficient of the analytic tail (K0 = max(2n, c n^2)).
    #[serde(default)]
    pub tail_crossover: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MohleParams {
    pub law: UnitLaw,
    #[serde(rename = "Ns")]
    pub ns: Vec<u64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("config does not match schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.workers == 0 {
            bail!("workers must be >= 1");
        }
        match &self.command {
            CommandSpec::Rates(p) => {
                if p.n < 2 {
                    bail!("rates: n must be >= 2");
                }
                if p.signatures.is_none() && p.n > 40 {
                    bail!("rates: full signature enumeration is capped at n = 40");
                }
            }
            CommandSpec::SimulateCoalescent(p) => {
                if p.n < 2 {
                    bail!("simulate-coalescent: n must be >= 2");
                }
                if self.replicates < 1 {
                    bail!("simulate-coalescent: replicates must be >= 1");
                }
            }
            CommandSpec::SimulateForward(p) => {
                p.demography
                    .validate()
                    .map_err(|e| anyhow::anyhow!("simulate-forward: {e}"))?;
                if !(0.0..=1.0).contains(&p.x0) {
                    bail!("simulate-forward: x0 outside [0, 1]");
                }
            }
            CommandSpec::SimulateSde(p) => {
                p.spec
                    .validate()
                    .map_err(|e| anyhow::anyhow!("simulate-sde: {e}"))?;
                if p.moments.is_empty() || p.moments.iter().any(|&n| n == 0) {
                    bail!("simulate-sde: moment orders must be positive");
                }
                if p.checkpoints.iter().any(|&t| t < 0.0 || t > p.spec.horizon) {
                    bail!("simulate-sde: checkpoint outside [0, horizon]");
                }
            }
            CommandSpec::Duality(p) => {
                if p.xs.is_empty() || p.ns.is_empty() {
                    bail!("duality: need at least one x and one n");
                }
                if p.xs.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                    bail!("duality: x outside [0, 1]");
                }
                if p.ns.iter().any(|&n| n == 0) {
                    bail!("duality: n must be >= 1");
                }
                if !(p.dt > 0.0) || !(p.t > 0.0) {
                    bail!("duality: need dt > 0 and t > 0");
                }
            }
            CommandSpec::Metric(p) => {
                if p.budget == 0 {
                    bail!("metric: budget must be >= 1");
                }
            }
            CommandSpec::Asymptotics(p) => {
                if !(p.beta > 0.0 && p.beta <= 1.0) {
                    bail!("asymptotics: beta outside (0, 1]");
                }
                if p.ns.is_empty() || p.ns.iter().any(|&n| n < 2) {
                    bail!("asymptotics: need ns with every n >= 2");
                }
            }
            CommandSpec::Mohle(p) => {
                p.law
                    .validate()
                    .map_err(|e| anyhow::anyhow!("mohle: {e}"))?;
                if p.ns.is_empty() || p.ns.iter().any(|&n| n < 1) {
                    bail!("mohle: need Ns with every N >= 1");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_rates_config() {
        let cfg = RunConfig::from_json(
            r#"{
                "command": "rates",
                "seed": 7,
                "params": {
                    "measure": {"a": 0.0, "body": {"type": "explicit", "masses": [[2, 1.0]]}},
                    "n": 3
                }
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.command.name(), "rates");
    }

    #[test]
    fn rejects_unknown_command_and_bad_params() {
        assert!(RunConfig::from_json(r#"{"command": "fly", "params": {}}"#).is_err());
        assert!(RunConfig::from_json(
            r#"{"command": "asymptotics", "params": {"beta": 2.0, "ns": [100]}}"#
        )
        .is_err());
        assert!(RunConfig::from_json(
            r#"{"command": "duality", "params": {"model": "short_drastic",
                 "f0": [[2, 1.0]], "alpha": 0.5, "xs": [], "ns": [1], "t": 0.5}}"#
        )
        .is_err());
    }

    #[test]
    fn config_round_trip() {
        let cfg = RunConfig::from_json(
            r#"{
                "command": "mohle",
                "params": {"law": {"type": "uniform01"}, "Ns": [1000, 10000]}
            }"#,
        )
        .unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back.command.name(), "mohle");
    }
}
