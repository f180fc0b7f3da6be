use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use tailstdf::classification::{rate_experiment_classification, ClassificationConfig};
use tailstdf::concentration::{
    class_complexity_q, compare_bounds, relative_rademacher, remark1_bound, remark2_bound, theorem1_bound, BoundParams,
};
use tailstdf::deviation::{run_rate_experiment, theorem2_bound, ExperimentConfig};
use tailstdf::empirical::{build_ranks, lattice_index};
use tailstdf::report::{self, RademacherSummary};
use tailstdf::sample::{generate, read_csv_file, write_csv_file};
use tailstdf::{GeneratorSpec, GridPolicy, MarginSpec, ModelRegistry, ModelSpec, RectClassSpec};

use crate::config::{require_seed, typed};
use crate::CliError;

/// Written next to every output.
#[derive(Debug, Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    subcommand: String,
    seed: Option<u64>,
    config: Value,
    inputs: Vec<String>,
    out_dir: String,
    outputs: Vec<String>,
    duration_secs: f64,
}

struct Outcome {
    config: Value,
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Internal(e.to_string()))
}

pub fn dispatch(name: &str, map: Map<String, Value>, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let outcome = match name {
        "simulate" => simulate(map, out)?,
        "estimate" => estimate(map, out)?,
        "converge" => converge(map, out)?,
        "bound" => bound(map, out)?,
        "rademacher" => rademacher(map, out)?,
        "classify" => classify(map, out)?,
        other => return Err(CliError::Usage(format!("unknown subcommand {other}"))),
    };
    let manifest = RunManifest {
        tool: "tailstdf",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name.to_string(),
        seed: outcome.seed,
        config: outcome.config,
        inputs: outcome.inputs,
        out_dir: out.display().to_string(),
        outputs: outcome.outputs,
        duration_secs: started.elapsed().as_secs_f64(),
    };
    report::write_json_file(&manifest, &out.join(format!("{name}.manifest.json")))?;
    Ok(())
}

fn default_sample_file() -> String {
    "sample.csv".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    model: ModelSpec,
    n: usize,
    d: usize,
    #[serde(default)]
    margins: Vec<MarginSpec>,
    seed: u64,
    #[serde(default = "default_sample_file")]
    output: String,
}

fn simulate(map: Map<String, Value>, out: &Path) -> Result<Outcome, CliError> {
    let seed = require_seed(&map)?;
    let cfg: SimulateConfig = typed(map, "simulate")?;
    let spec = GeneratorSpec::new(cfg.model.clone(), cfg.n, cfg.d, cfg.seed).with_margins(cfg.margins.clone());
    let sample = generate(&spec)?;
    write_csv_file(&sample, &out.join(&cfg.output))?;
    Ok(Outcome {
        config: to_value(&cfg)?,
        seed: Some(seed),
        inputs: vec![],
        outputs: vec![cfg.output],
    })
}

fn default_surface_file() -> String {
    "surface.csv".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateConfig {
    data: PathBuf,
    k: usize,
    #[serde(rename = "T")]
    t_region: f64,
    #[serde(default)]
    grid: GridPolicy,
    #[serde(default = "default_surface_file")]
    output: String,
}

fn estimate(map: Map<String, Value>, out: &Path) -> Result<Outcome, CliError> {
    let cfg: EstimateConfig = typed(map, "estimate")?;
    let sample = read_csv_file(&cfg.data)?;
    let ranks = build_ranks(&sample)?;
    let (n, d, k) = (sample.n(), sample.d(), cfg.k);
    if k == 0 || k > n {
        return Err(tailstdf::Error::Domain(format!("k must satisfy 1 <= k <= n = {n} (got {k})")).into());
    }
    if !(cfg.t_region >= 0.0) || k as f64 * cfg.t_region > n as f64 {
        return Err(tailstdf::Error::Domain(format!("k T = {} exceeds n = {n}", k as f64 * cfg.t_region)).into());
    }
    let nodes: Vec<f64> = match cfg.grid {
        GridPolicy::Exact => (0..=lattice_index(k, cfg.t_region)).map(|m| m as f64 / k as f64).collect(),
        GridPolicy::Grid(h) => tailstdf::concentration::grid_nodes(cfg.t_region, h),
    };
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut idx = vec![0usize; d];
    'outer: loop {
        let x: Vec<f64> = idx.iter().map(|&i| nodes[i]).collect();
        let m: Vec<usize> = x.iter().map(|&v| lattice_index(k, v)).collect();
        let value = ranks.union_count(&m) as f64 / k as f64;
        let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        row.push(value.to_string());
        rows.push(row);
        for axis in (0..d).rev() {
            idx[axis] += 1;
            if idx[axis] < nodes.len() {
                continue 'outer;
            }
            idx[axis] = 0;
        }
        break;
    }
    let mut header: Vec<String> = (1..=d).map(|j| format!("x_{j}")).collect();
    header.push("l_n".into());
    rows.insert(0, header);
    report::write_rows_file(&rows, &out.join(&cfg.output))?;
    Ok(Outcome {
        inputs: vec![cfg.data.display().to_string()],
        config: to_value(&cfg)?,
        seed: None,
        outputs: vec![cfg.output],
    })
}

/// Report metadata persisted next to the CSVs.
#[derive(Debug, Serialize)]
struct ConvergeMeta<'a> {
    config: &'a ExperimentConfig,
    slope: Option<tailstdf::stats::LineFit>,
    aborted: &'a [tailstdf::deviation::AbortedTrial],
    columns_trials: &'static str,
    columns_summary: &'static str,
}

fn converge(map: Map<String, Value>, out: &Path) -> Result<Outcome, CliError> {
    let seed = require_seed(&map)?;
    let cfg: ExperimentConfig = typed(map, "converge")?;
    let rep = run_rate_experiment(&cfg)?;
    report::write_rows_file(&report::deviation_long_rows(&rep), &out.join("converge_trials.csv"))?;
    report::write_rows_file(&rep.levels, &out.join("converge_summary.csv"))?;
    let meta = ConvergeMeta {
        config: &cfg,
        slope: rep.slope,
        aborted: &rep.aborted,
        columns_trials: "trial_id,n,k,d,T,delta,statistic_name,value",
        columns_summary: "k,trials,median,upper_quantile,mean,std_error,bias_t,bias_2t,bound,bound_note",
    };
    report::write_json_file(&meta, &out.join("converge.json"))?;
    if let Some(s) = rep.slope {
        println!("slope {:.4} (stderr {:.4})", s.slope, s.slope_stderr);
    }
    for a in &rep.aborted {
        eprintln!("aborted k={} trial={}: {}", a.k, a.trial, a.reason);
    }
    Ok(Outcome {
        config: to_value(&cfg)?,
        seed: Some(seed),
        inputs: vec![],
        outputs: vec!["converge_trials.csv".into(), "converge_summary.csv".into(), "converge.json".into()],
    })
}

fn default_c() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum BoundConfig {
    Theorem1(BoundParams),
    Remark1(BoundParams),
    Remark2(BoundParams),
    Theorem2 {
        k: usize,
        d: usize,
        #[serde(rename = "T")]
        t_region: f64,
        delta: f64,
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default)]
        bias: f64,
    },
    Compare {
        ns: Vec<f64>,
        v: f64,
        p: f64,
        delta: f64,
        #[serde(default = "default_c")]
        c: f64,
    },
}

#[derive(Debug, Serialize)]
struct BoundRow {
    kind: &'static str,
    value: f64,
}

fn bound(map: Map<String, Value>, out: &Path) -> Result<Outcome, CliError> {
    let cfg: BoundConfig = typed(map, "bound")?;
    let path = out.join("bound.csv");
    let single = |kind: &'static str, value: f64| -> Result<(), CliError> {
        println!("{kind} {value}");
        report::write_rows_file(&[BoundRow { kind, value }], &path)?;
        Ok(())
    };
    match &cfg {
        BoundConfig::Theorem1(p) => single("theorem1", theorem1_bound(p)?)?,
        BoundConfig::Remark1(p) => single("remark1", remark1_bound(p)?)?,
        BoundConfig::Remark2(p) => single("remark2", remark2_bound(p)?)?,
        BoundConfig::Theorem2 { k, d, t_region, delta, c, bias } => {
            single("theorem2", theorem2_bound(*k, *d, *t_region, *delta, *c, *bias)?)?
        }
        BoundConfig::Compare { ns, v, p, delta, c } => {
            let template = BoundParams { n: 1.0, v: *v, p: *p, delta: *delta, c: *c };
            let rows = compare_bounds(ns, &template)?;
            for r in &rows {
                println!("n={} ratio={}", r.n, r.ratio);
            }
            report::write_rows_file(&rows, &path)?;
        }
    }
    Ok(Outcome {
        config: to_value(&cfg)?,
        seed: None,
        inputs: vec![],
        outputs: vec!["bound.csv".into()],
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RademacherConfig {
    model: ModelSpec,
    d: usize,
    /// One or more sample sizes.
    n: Vec<usize>,
    /// One `k` per sample size, or a single value for all.
    k: Vec<usize>,
    #[serde(rename = "T")]
    t_region: f64,
    trials: usize,
    seed: u64,
    #[serde(default)]
    grid: GridPolicy,
    /// Pairs for the class complexity estimate; skipped when absent.
    #[serde(default)]
    q_pairs: Option<usize>,
}

fn rademacher(map: Map<String, Value>, out: &Path) -> Result<Outcome, CliError> {
    let seed = require_seed(&map)?;
    let cfg: RademacherConfig = typed(map, "rademacher")?;
    let ks: Vec<usize> = match cfg.k.len() {
        1 => vec![cfg.k[0]; cfg.n.len()],
        l if l == cfg.n.len() => cfg.k.clone(),
        _ => return Err(CliError::Usage("rademacher config: `k` needs one entry or one per `n`".into())),
    };
    let model = ModelRegistry::builtin().build(&cfg.model, cfg.d)?;
    let mut long = Vec::new();
    let mut summary = Vec::new();
    for (i, (&n, &k)) in cfg.n.iter().zip(&ks).enumerate() {
        let class = RectClassSpec::new(cfg.d, k, n, cfg.t_region)?;
        let level_seed = tailstdf::rng::child_seed(cfg.seed, "rademacher/level", i as u64);
        let est = relative_rademacher(model.as_ref(), &class, cfg.trials, level_seed, cfg.grid)?;
        let q = match cfg.q_pairs {
            Some(pairs) => Some(class_complexity_q(model.as_ref(), &class, pairs, level_seed)?),
            None => None,
        };
        long.extend(report::rademacher_long_rows(&class, &est));
        let row = RademacherSummary::new(&class, &est, q.as_ref());
        println!("n={n} k={k} p={:.6} R={:.6} R*sqrt(np)={:.4}", row.p, row.mean, row.normalized);
        summary.push(row);
    }
    report::write_rows_file(&long, &out.join("rademacher_trials.csv"))?;
    report::write_rows_file(&summary, &out.join("rademacher_summary.csv"))?;
    Ok(Outcome {
        config: to_value(&cfg)?,
        seed: Some(seed),
        inputs: vec![],
        outputs: vec!["rademacher_trials.csv".into(), "rademacher_summary.csv".into()],
    })
}

fn classify(map: Map<String, Value>, out: &Path) -> Result<Outcome, CliError> {
    let seed = require_seed(&map)?;
    let cfg: ClassificationConfig = typed(map, "classify")?;
    let rep = rate_experiment_classification(&cfg)?;
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    report::write_rows_file(&report::classification_long_rows(&rep), &out.join("classify_trials.csv"))?;
    report::write_rows_file(&rep.levels, &out.join("classify_summary.csv"))?;
    report::write_json_file(
        &serde_json::json!({ "config": &cfg, "slope": rep.slope, "warnings": rep.warnings }),
        &out.join("classify.json"),
    )?;
    if let Some(s) = rep.slope {
        println!("slope {:.4} (stderr {:.4})", s.slope, s.slope_stderr);
    }
    Ok(Outcome {
        config: to_value(&cfg)?,
        seed: Some(seed),
        inputs: vec![],
        outputs: vec!["classify_trials.csv".into(), "classify_summary.csv".into(), "classify.json".into()],
    })
}
