//! Command dispatch: build the per-command results, schedule replicates
//! across the worker pool, and write the output files.
//!
//! Replicate r always draws from the ChaCha stream (seed, r), and
//! aggregation walks results in replicate order, so outputs are
//! byte-identical for any worker count.

use crate::config::*;
use crate::outputs::{write_outputs, ResultSink, WrittenOutputs};
use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde_json::json;
use std::path::PathBuf;
use symcoal::coalescent::{
    mean_se, simulate_drastic_bottleneck_coalescent, simulate_subordinated_kingman,
    SCoalescentRun, SymCoalescentContext,
};
use symcoal::duality::duality_check;
use symcoal::forward::{mohle_coefficients, simulate_forward};
use symcoal::metric::{
    convergence_in_measure_stat, d_lambda_upper, j1_distance, standard_test_functions, StepPath,
};
use symcoal::rates::{
    arrangements_count, block_counting_generator, collision_rate, integer_partitions,
    total_rate, total_rate_asymptotic, CollisionSignature, TotalRateMethod, TotalRateOptions,
};
use symcoal::rng::replicate_rng;
use symcoal::sde::{moment_estimate, SdeContext, SdePath};

pub struct RunOutcome {
    pub pass: bool,
    pub written: WrittenOutputs,
}

/// Execute a validated configuration. The output directory resolves from
/// the config, then the SYMCOAL_OUT environment variable, then "./out".
pub fn run(cfg: &RunConfig) -> anyhow::Result<RunOutcome> {
    let out_dir = cfg
        .out_dir
        .clone()
        .or_else(|| std::env::var("SYMCOAL_OUT").ok())
        .unwrap_or_else(|| "out".to_string());
    let out_dir = PathBuf::from(out_dir);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("building worker pool")?;

    let sink = pool.install(|| dispatch(cfg))?;
    let config_echo = serde_json::to_value(cfg)?;
    let written = write_outputs(&out_dir, &config_echo, cfg.seed, &sink)?;
    Ok(RunOutcome {
        pass: sink.pass,
        written,
    })
}

fn dispatch(cfg: &RunConfig) -> anyhow::Result<ResultSink> {
    match &cfg.command {
        CommandSpec::Rates(p) => run_rates(p),
        CommandSpec::SimulateCoalescent(p) => run_simulate_coalescent(cfg, p),
        CommandSpec::SimulateForward(p) => run_simulate_forward(cfg, p),
        CommandSpec::SimulateSde(p) => run_simulate_sde(cfg, p),
        CommandSpec::Duality(p) => run_duality(cfg, p),
        CommandSpec::Metric(p) => run_metric(p),
        CommandSpec::Asymptotics(p) => run_asymptotics(p),
        CommandSpec::Mohle(p) => run_mohle(p),
    }
}

fn run_rates(p: &RatesParams) -> anyhow::Result<ResultSink> {
    let mut sink = ResultSink::new("b,parts,rate");
    let signatures: Vec<Vec<u64>> = match &p.signatures {
        Some(s) => s.clone(),
        None => integer_partitions(p.n)?
            .into_iter()
            .filter(|parts| (parts.len() as u64) < p.n)
            .collect(),
    };
    let mut rows = Vec::new();
    for parts in &signatures {
        let sig = CollisionSignature::new(p.n, parts)?;
        let rate = collision_rate(&p.measure, &sig)?;
        let count = arrangements_count(p.n, sig.parts())?;
        let parts_str = format!(
            "({})",
            sig.parts().iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
        );
        sink.push_row(format!("{},\"{}\",{}", p.n, parts_str, rate));
        rows.push(json!({
            "b": p.n,
            "parts": sig.parts(),
            "rate": rate,
            "arrangements": count.to_string(),
        }));
    }
    let mut out = json!({ "collision_rates": rows });
    if p.generator {
        let g = block_counting_generator(&p.measure, p.n as usize)?;
        let mut entries = Vec::new();
        for i in 2..=p.n as usize {
            for j in 1..i {
                let q = g.entry(i, j);
                if q != 0.0 {
                    entries.push(json!({"i": i, "j": j, "q": q}));
                }
            }
        }
        out["generator"] = json!(entries);
    }
    if p.total_rate {
        let opts = TotalRateOptions::default();
        let collision = total_rate(&p.measure, p.n, TotalRateMethod::CollisionProbSum, &opts)?;
        let mut tr = json!({
            "collision_prob_sum": collision.value,
            "collision_prob_sum_error_bound": collision.error_bound,
        });
        if p.n <= 40 {
            let partition = total_rate(&p.measure, p.n, TotalRateMethod::PartitionSum, &opts)?;
            tr["partition_sum"] = json!(partition.value);
        }
        out["total_rate"] = tr;
    }
    sink.json = out;
    Ok(sink)
}

fn run_simulate_coalescent(
    cfg: &RunConfig,
    p: &SimulateCoalescentParams,
) -> anyhow::Result<ResultSink> {
    let mut sink = ResultSink::new("replicate,tmrca,length,n_events");
    // shared immutable context for the symmetric model
    let sym_ctx = match &p.model {
        CoalescentModel::Symmetric { measure } => Some(SymCoalescentContext::new(measure, p.n)?),
        _ => None,
    };
    let runs: Vec<SCoalescentRun> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> anyhow::Result<SCoalescentRun> {
            let mut rng = replicate_rng(cfg.seed, r as u64);
            Ok(match &p.model {
                CoalescentModel::Symmetric { .. } => {
                    sym_ctx.as_ref().unwrap().simulate(&mut rng, p.emit_events)
                }
                CoalescentModel::DrasticBottleneck { f0, l, eta, a } => {
                    simulate_drastic_bottleneck_coalescent(f0, l, *eta, *a, p.n, &mut rng)?
                }
                CoalescentModel::SubordinatedKingman { l_gamma, eta, a } => {
                    simulate_subordinated_kingman(l_gamma, *eta, *a, p.n, &mut rng)?
                }
            })
        })
        .collect::<anyhow::Result<_>>()?;
    for (r, run) in runs.iter().enumerate() {
        sink.push_row(format!(
            "{},{},{},{}",
            r, run.stats.tmrca, run.stats.length, run.stats.n_events
        ));
    }
    let tmrcas: Vec<f64> = runs.iter().map(|r| r.stats.tmrca).collect();
    let lengths: Vec<f64> = runs.iter().map(|r| r.stats.length).collect();
    let summary = if runs.len() >= 2 {
        json!({
            "tmrca": mean_se(&tmrcas),
            "length": mean_se(&lengths),
        })
    } else {
        json!({"tmrca": tmrcas.first(), "length": lengths.first()})
    };
    sink.json = json!({
        "replicates": runs.len(),
        "n": p.n,
        "summary": summary,
    });
    if p.emit_events {
        let mut lines = String::new();
        for (r, run) in runs.iter().enumerate() {
            for ev in &run.events {
                let record = json!({
                    "replicate": r,
                    "t": ev.time,
                    "kind": ev.kind,
                    "blocks": ev.partition_after.blocks(),
                });
                lines.push_str(&serde_json::to_string(&record)?);
                lines.push('\n');
            }
        }
        sink.extra_files.push(("events.jsonl".to_string(), lines));
    }
    Ok(sink)
}

fn run_simulate_forward(cfg: &RunConfig, p: &SimulateForwardParams) -> anyhow::Result<ResultSink> {
    let mut rng = replicate_rng(cfg.seed, 0);
    let t = simulate_forward(&p.demography, p.n, p.x0, p.generations, &mut rng)?;
    let mut sink = ResultSink::new("generation,size,count,in_bottleneck");
    for g in 0..t.len() {
        sink.push_row(format!(
            "{},{},{},{}",
            g, t.sizes[g], t.counts[g], t.bottleneck[g] as u8
        ));
    }
    let bottleneck_generations = t.bottleneck.iter().filter(|&&b| b).count();
    sink.json = json!({
        "N": p.n,
        "generations": p.generations,
        "final_frequency": t.frequencies().last(),
        "bottleneck_generations": bottleneck_generations,
        "absorbed": t.counts.last() == Some(&0)
            || t.counts.last() == Some(t.sizes.last().unwrap()),
    });
    if p.emit_trajectory {
        sink.extra_files.push(("trajectory.csv".to_string(), t.to_csv()));
    }
    Ok(sink)
}

fn run_simulate_sde(cfg: &RunConfig, p: &SimulateSdeParams) -> anyhow::Result<ResultSink> {
    let ctx = SdeContext::new(p.spec.clone())?;
    let paths: Vec<SdePath> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(cfg.seed, r as u64);
            ctx.simulate(&mut rng).map_err(|e| anyhow!("{e}"))
        })
        .collect::<anyhow::Result<_>>()?;
    let checkpoints = if p.checkpoints.is_empty() {
        vec![p.spec.horizon]
    } else {
        p.checkpoints.clone()
    };
    let mut sink = ResultSink::new("t,n,mean,se");
    let mut rows = Vec::new();
    for &t in &checkpoints {
        for &n in &p.moments {
            let est = moment_estimate(&paths, n, t)?;
            sink.push_row(format!("{},{},{},{}", t, n, est.mean, est.se));
            rows.push(json!({"t": t, "n": n, "mean": est.mean, "se": est.se}));
        }
    }
    sink.json = json!({
        "replicates": paths.len(),
        "moments": rows,
    });
    if p.emit_paths > 0 {
        let mut lines = String::new();
        for path in paths.iter().take(p.emit_paths) {
            lines.push_str(&path.to_json_lines());
        }
        sink.extra_files.push(("paths.jsonl".to_string(), lines));
    }
    Ok(sink)
}

fn run_duality(cfg: &RunConfig, p: &DualityCommandParams) -> anyhow::Result<ResultSink> {
    let params = p.model.to_params();
    let grid: Vec<(f64, u32)> = p
        .xs
        .iter()
        .flat_map(|&x| p.ns.iter().map(move |&n| (x, n)))
        .collect();
    let reports: Vec<symcoal::duality::DualityReport> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &(x, n))| {
            let mut rng = replicate_rng(cfg.seed, i as u64);
            duality_check(&params, x, n, p.t, cfg.replicates, p.dt, &mut rng)
                .map_err(|e| anyhow!("{e}"))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut sink = ResultSink::new("x,n,t,lhs,lhs_se,rhs,z,z_adjusted,bias_allowance,pass");
    let mut all_pass = true;
    for rep in &reports {
        let pass = rep.z_adjusted <= p.z_threshold;
        all_pass &= pass;
        sink.push_row(format!(
            "{},{},{},{},{},{},{},{},{},{}",
            rep.x,
            rep.n,
            rep.t,
            rep.lhs,
            rep.lhs_se,
            rep.rhs,
            rep.z_score,
            rep.z_adjusted,
            rep.bias_allowance,
            pass
        ));
    }
    sink.json = json!({
        "reports": reports,
        "z_threshold": p.z_threshold,
        "all_pass": all_pass,
    });
    sink.pass = all_pass;
    Ok(sink)
}

fn run_metric(p: &MetricParams) -> anyhow::Result<ResultSink> {
    let a_text = std::fs::read_to_string(&p.path_a)
        .with_context(|| format!("reading {}", p.path_a))?;
    let b_text = std::fs::read_to_string(&p.path_b)
        .with_context(|| format!("reading {}", p.path_b))?;
    let a = StepPath::from_csv(&a_text)?;
    let b = StepPath::from_csv(&b_text)?;
    let j1 = j1_distance(&a, &b, p.budget)?;
    let dl = d_lambda_upper(&a, &b, p.budget)?;
    let cim = convergence_in_measure_stat(&a, &b, &standard_test_functions())?;
    let uniform = a.uniform_distance(&b)?;
    let mut sink = ResultSink::new("statistic,value");
    sink.push_row(format!("uniform_distance,{uniform}"));
    sink.push_row(format!("j1_distance,{}", j1.value));
    sink.push_row(format!("j1_exact,{}", j1.exact));
    sink.push_row(format!("d_lambda_upper,{}", dl.value));
    sink.push_row(format!("cim_max_gap,{}", cim.max_gap()));
    sink.json = json!({
        "uniform_distance": uniform,
        "j1": {"value": j1.value, "exact": j1.exact},
        "d_lambda_upper": {
            "value": dl.value,
            "terms": dl.terms,
            "witness": dl.witness,
        },
        "convergence_in_measure": cim,
    });
    Ok(sink)
}

fn run_asymptotics(p: &AsymptoticsParams) -> anyhow::Result<ResultSink> {
    let opts = match p.tail_crossover {
        Some(c) => TotalRateOptions { tail_crossover: c },
        None => TotalRateOptions::default(),
    };
    let f = symcoal::measures::CoagulationMeasure::power_law(0.0, p.beta, None)?;
    let mut sink = ResultSink::new("n,lambda_n,error_bound,predicted,ratio");
    let mut rows = Vec::new();
    for &n in &p.ns {
        let lambda = total_rate(&f, n, TotalRateMethod::CollisionProbSum, &opts)?;
        let predicted = total_rate_asymptotic(p.beta, n)?;
        let ratio = lambda.value / predicted;
        sink.push_row(format!(
            "{},{},{},{},{}",
            n, lambda.value, lambda.error_bound, predicted, ratio
        ));
        rows.push(json!({
            "n": n,
            "lambda": lambda.value,
            "error_bound": lambda.error_bound,
            "predicted": predicted,
            "ratio": ratio,
        }));
    }
    sink.json = json!({"beta": p.beta, "rows": rows});
    Ok(sink)
}

fn run_mohle(p: &MohleParams) -> anyhow::Result<ResultSink> {
    let mut sink = ResultSink::new("N,C_N,D_N,D_over_C");
    let mut rows = Vec::new();
    for &n in &p.ns {
        let m = mohle_coefficients(p.law.discretize(n));
        sink.push_row(format!("{},{},{},{}", n, m.c_n, m.d_n, m.ratio));
        rows.push(json!({"N": n, "C_N": m.c_n, "D_N": m.d_n, "ratio": m.ratio}));
    }
    sink.json = json!({"law": p.law, "rows": rows});
    Ok(sink)
}
