//! Uniform error of the rank estimator over `[0, T]^d` and the events used
//! to control it.
//!
//! `l_n` is constant on the cells `[m/k, (m+1)/k)` of the `1/k` lattice and
//! `l` is continuous and non-decreasing in every coordinate, so for `d <= 2`
//! the supremum of `|l_n - l|` is read off the two extreme corners of every
//! cell (clipped to `T`). For `d >= 3` a declared grid is used.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concentration::{for_each_grid_point, grid_nodes, GridPolicy, RectClassSpec};
use crate::empirical::{build_ranks, empirical_tilde_f_count, lattice_index, standardize, PseudoUniformSample, RankState};
use crate::error::{Error, Result};
use crate::margins::{MarginRef, MarginRegistry, MarginSpec};
use crate::model::{DependenceModel, ModelRegistry, ModelSpec};
use crate::oracles::sup_bias;
use crate::rng::{child_seed, derive_stream};
use crate::sample::{draw, Provenance, Sample};
use crate::stats::{self, LineFit};

pub use crate::concentration::SupDeviation;

fn default_bias_points() -> usize {
    21
}

fn default_constant() -> f64 {
    1.0
}

/// One run of the estimation-error experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub k_schedule: Vec<usize>,
    pub d: usize,
    #[serde(rename = "T")]
    pub t_region: f64,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub grid: GridPolicy,
    #[serde(default)]
    pub margins: Vec<MarginSpec>,
    /// Constant used for the reported bound column.
    #[serde(default = "default_constant")]
    pub constant: f64,
    /// Nodes per axis for the bias grid.
    #[serde(default = "default_bias_points")]
    pub bias_grid_points: usize,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, n: usize, k_schedule: Vec<usize>, d: usize, t_region: f64, trials: usize, seed: u64) -> Self {
        ExperimentConfig {
            model,
            n,
            k_schedule,
            d,
            t_region,
            delta: 0.05,
            trials,
            seed,
            grid: GridPolicy::Exact,
            margins: Vec::new(),
            constant: 1.0,
            bias_grid_points: 21,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 || self.trials == 0 {
            return Err(Error::config("n, d and trials must be positive"));
        }
        if self.k_schedule.is_empty() {
            return Err(Error::config("k_schedule is empty"));
        }
        if self.k_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(format!(
                "k_schedule must be strictly increasing (got {:?})",
                self.k_schedule
            )));
        }
        let k_max = *self.k_schedule.last().unwrap();
        if self.k_schedule[0] == 0 || k_max * 10 > self.n {
            return Err(Error::config(format!(
                "k_schedule must lie in [1, n/10] = [1, {}] (got max {k_max})",
                self.n / 10
            )));
        }
        if !(self.t_region > 0.0) || !self.t_region.is_finite() {
            return Err(Error::config(format!("T must be positive (got {})", self.t_region)));
        }
        if k_max as f64 * self.t_region > self.n as f64 {
            return Err(Error::domain(format!(
                "k T = {} exceeds n = {}",
                k_max as f64 * self.t_region,
                self.n
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1) (got {})", self.delta)));
        }
        if self.bias_grid_points < 2 {
            return Err(Error::config("bias_grid_points must be at least 2"));
        }
        self.grid.check(self.d)
    }
}

fn check_region(k: usize, n: usize, t_region: f64) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::domain(format!("k must satisfy 1 <= k <= n = {n} (got {k})")));
    }
    if !(t_region >= 0.0) || k as f64 * t_region > n as f64 {
        return Err(Error::domain(format!(
            "k T = {} exceeds n = {n} (k = {k}, T = {t_region})",
            k as f64 * t_region
        )));
    }
    Ok(())
}

/// `sup_{0 <= x <= T} |l_n(x) - l(x)|` on a tie-free sample.
pub fn sup_stdf_deviation(
    sample: &Sample,
    k: usize,
    model: &dyn DependenceModel,
    t_region: f64,
    grid: GridPolicy,
) -> Result<SupDeviation> {
    check_region(k, sample.n(), t_region)?;
    let ranks = build_ranks(sample)?;
    sup_stdf_deviation_ranks(&ranks, k, model, t_region, grid)
}

/// As [`sup_stdf_deviation`], reusing precomputed ranks.
pub fn sup_stdf_deviation_ranks(
    ranks: &RankState,
    k: usize,
    model: &dyn DependenceModel,
    t_region: f64,
    grid: GridPolicy,
) -> Result<SupDeviation> {
    let (n, d) = (ranks.n(), ranks.d());
    check_region(k, n, t_region)?;
    if model.dim() != d {
        return Err(Error::config(format!("model dimension {} != sample dimension {d}", model.dim())));
    }
    grid.check(d)?;
    let kf = k as f64;
    match grid {
        GridPolicy::Exact => {
            let top = lattice_index(k, t_region);
            let hi = |m: usize| ((m + 1) as f64 / kf).min(t_region);
            let mut best = 0.0f64;
            let mut visit = |m1: usize, row: &[i64]| {
                for (m2, &count) in row.iter().enumerate() {
                    let c = count as f64 / kf;
                    let (lo, up) = if d == 1 {
                        (model.stdf(&[m1 as f64 / kf]), model.stdf(&[hi(m1)]))
                    } else {
                        (
                            model.stdf(&[m1 as f64 / kf, m2 as f64 / kf]),
                            model.stdf(&[hi(m1), hi(m2)]),
                        )
                    };
                    best = best.max((c - lo).abs()).max((c - up).abs());
                }
            };
            ranks.for_each_lattice_count([top, top], &mut visit)?;
            Ok(SupDeviation {
                value: best,
                discretization_bound: 0.0,
            })
        }
        GridPolicy::Grid(h) => {
            let nodes = grid_nodes(t_region, h);
            // l_n only changes from one lattice cell to the next
            let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
            let mut best = 0.0f64;
            for_each_grid_point(&nodes, d, |x| {
                let m: Vec<usize> = x.iter().map(|&v| lattice_index(k, v)).collect();
                let count = *counts.entry(m).or_insert_with_key(|m| ranks.union_count(m));
                best = best.max((count as f64 / kf - model.stdf(x)).abs());
            });
            Ok(SupDeviation {
                value: best,
                discretization_bound: d as f64 * h,
            })
        }
    }
}

/// `C d sqrt((T/k) log((d+3)/delta)) + bias`.
pub fn theorem2_bound(k: usize, d: usize, t_region: f64, delta: f64, c: f64, bias: f64) -> Result<f64> {
    if k == 0 || d == 0 {
        return Err(Error::domain("k and d must be positive"));
    }
    let kf = k as f64;
    let required = 3.5 * ((d as f64).ln() / kf + 1.0);
    if !(t_region >= required) {
        return Err(Error::Precondition(format!(
            "T ≥ 7/2((log d)/k + 1) violated: T={t_region:?}, required ≥ {required:?}"
        )));
    }
    if !(delta < 1.0) {
        return Err(Error::Precondition(format!("δ < 1 violated: δ={delta:?}")));
    }
    let floor = (-kf).exp();
    if !(delta >= floor) || delta <= 0.0 {
        return Err(Error::Precondition(format!(
            "δ ≥ e^(-k) violated: δ={delta:?}, required ≥ {floor:?}"
        )));
    }
    Ok(c * d as f64 * (t_region / kf * ((d as f64 + 3.0) / delta).ln()).sqrt() + bias)
}

/// Whether `(n/k) U^j_([kT]) <= 2T` holds in every column.
pub fn check_order_stat_event(u: &PseudoUniformSample, k: usize, t_region: f64) -> Result<bool> {
    let n = u.n();
    if k == 0 {
        return Err(Error::domain("k must be positive"));
    }
    let m = lattice_index(k, t_region);
    if m == 0 {
        return Err(Error::domain(format!("[k T] = 0 (k = {k}, T = {t_region}); the event is vacuous")));
    }
    if m > n {
        return Err(Error::domain(format!("[k T] = {m} exceeds n = {n}")));
    }
    let scale = n as f64 / k as f64;
    Ok((0..u.d()).all(|j| scale * u.order_statistic(j, m) <= 2.0 * t_region))
}

/// `sup_{0 <= x <= T} (n/k) |F~_n((k/n) x) - F~((k/n) x)|`.
pub fn check_lemma2(
    u: &PseudoUniformSample,
    k: usize,
    t_region: f64,
    model: &dyn DependenceModel,
    grid: GridPolicy,
) -> Result<SupDeviation> {
    let class = RectClassSpec::new(u.d(), k, u.n(), t_region)?;
    let scale = u.n() as f64 / k as f64;
    // F~ uses "<=" while the class uses "<"; both sets differ by a null set
    // and the cell scan already takes suprema over both cell boundaries.
    let dev = crate::concentration::sup_empirical_deviation(u, &class, model, grid)?;
    Ok(SupDeviation {
        value: scale * dev.value,
        discretization_bound: scale * dev.discretization_bound,
    })
}

/// The three pieces of the uniform error, each computed as a supremum over `[0, T]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionTerms {
    /// `sup |l_n - l|`.
    pub total: f64,
    /// Sampling term `sup (n/k) |F~_n(U_([kx])) - F~(U_([kx]))|`.
    pub lambda: f64,
    /// Bias term `sup |(n/k) F~(U_([kx])) - l((n/k) U_([kx]))|`.
    pub xi: f64,
    /// `sup |l((n/k) U_([kx])) - l(x)|`.
    pub upsilon: f64,
    /// `sup |l((n/k) U_([kx])) - l([kx]/k)|`.
    pub upsilon1: f64,
    /// `sup sum_j |[k x_j]/k - x_j|`.
    pub upsilon2: f64,
}

/// Largest lattice-rounding gap `sup_{0 <= x <= T} (x - [kx]/k)`.
pub fn lattice_gap(k: usize, t_region: f64) -> f64 {
    (1.0 / k as f64).min(t_region)
}

/// `sup_{0 <= x <= T} sum_j |[k x_j]/k - x_j| = d * lattice_gap`.
pub fn upsilon2(k: usize, d: usize, t_region: f64) -> f64 {
    d as f64 * lattice_gap(k, t_region)
}

/// Computes the decomposition on a sample whose true margins are known.
pub fn decomposition_terms(
    sample: &Sample,
    margins: &[MarginRef],
    k: usize,
    t_region: f64,
    model: &dyn DependenceModel,
) -> Result<DecompositionTerms> {
    let (n, d) = (sample.n(), sample.d());
    check_region(k, n, t_region)?;
    let ranks = build_ranks(sample)?;
    let total = sup_stdf_deviation_ranks(&ranks, k, model, t_region, GridPolicy::Exact)?.value;
    let u = standardize(sample, margins)?;
    let (kf, scale) = (k as f64, n as f64 / k as f64);
    let top = lattice_index(k, t_region);
    let indices: Vec<f64> = (0..=top).map(|m| m as f64).collect();
    let mut terms = DecompositionTerms {
        total,
        lambda: 0.0,
        xi: 0.0,
        upsilon: 0.0,
        upsilon1: 0.0,
        upsilon2: upsilon2(k, d, t_region),
    };
    let mut s = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    let mut failure = None;
    for_each_grid_point(&indices, d, |m| {
        for j in 0..d {
            let mj = m[j] as usize;
            s[j] = u.order_statistic(j, mj);
            y[j] = scale * s[j];
            lo[j] = mj as f64 / kf;
            hi[j] = ((mj + 1) as f64 / kf).min(t_region);
        }
        let count = match empirical_tilde_f_count(&u, &s) {
            Ok(c) => c,
            Err(e) => {
                failure.get_or_insert(e);
                return;
            }
        };
        let f_n = count as f64 / kf;
        let f = scale * model.tail_mass(&s);
        let l_y = model.stdf(&y);
        let (l_lo, l_hi) = (model.stdf(&lo), model.stdf(&hi));
        terms.lambda = terms.lambda.max((f_n - f).abs());
        terms.xi = terms.xi.max((f - l_y).abs());
        terms.upsilon = terms.upsilon.max((l_y - l_lo).abs()).max((l_y - l_hi).abs());
        terms.upsilon1 = terms.upsilon1.max((l_y - l_lo).abs());
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(terms),
    }
}

/// One `(k, trial)` cell of the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub k: usize,
    pub trial: usize,
    pub deviation: f64,
    pub discretization_bound: f64,
}

/// Per-`k` summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub k: usize,
    pub trials: usize,
    pub median: f64,
    /// Empirical `(1 - delta)`-quantile.
    pub upper_quantile: f64,
    pub mean: f64,
    pub std_error: f64,
    /// Grid bias `sup |(n/k) F~((k/n) x) - l(x)|` over `[0, T]^d`.
    pub bias_t: f64,
    /// Same over `[0, 2T]^d`; absent when `2 k T > n`.
    pub bias_2t: Option<f64>,
    /// Deviation bound with the configured constant and `bias_2t`.
    pub bound: Option<f64>,
    /// Why `bound` is absent.
    pub bound_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedTrial {
    pub k: usize,
    pub trial: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRecord>,
    pub levels: Vec<LevelSummary>,
    /// Least-squares fit of `ln median` on `ln k`; absent with fewer than two usable levels.
    pub slope: Option<LineFit>,
    pub aborted: Vec<AbortedTrial>,
}

impl DeviationReport {
    pub fn deviations(&self, k: usize) -> Vec<f64> {
        self.trials.iter().filter(|r| r.k == k).map(|r| r.deviation).collect()
    }
}

/// Stream seed for level `ki` of the schedule.
pub fn level_seed(seed: u64, k: usize) -> u64 {
    child_seed(seed, "deviation/k", k as u64)
}

/// Draws the sample used by trial `trial` at level `k`.
pub fn trial_sample(config: &ExperimentConfig, model: &dyn DependenceModel, margins: &[MarginRef], k: usize, trial: usize) -> Result<Sample> {
    let mut rng = derive_stream(level_seed(config.seed, k), trial as u64, "deviation/sample");
    let values = draw(model, margins, config.n, &mut rng);
    Sample::from_flat(config.n, config.d, values, Provenance::Derived(format!("{} k={k} trial={trial}", config.model)))
}

pub fn run_rate_experiment(config: &ExperimentConfig) -> Result<DeviationReport> {
    run_rate_experiment_with(config, &ModelRegistry::builtin(), &MarginRegistry::builtin())
}

pub fn run_rate_experiment_with(
    config: &ExperimentConfig,
    models: &ModelRegistry,
    margin_registry: &MarginRegistry,
) -> Result<DeviationReport> {
    config.validate()?;
    let model = models.build(&config.model, config.d)?;
    let margins = margin_registry.build_all(&config.margins, config.d)?;
    let pairs: Vec<(usize, usize)> = config
        .k_schedule
        .iter()
        .flat_map(|&k| (0..config.trials).map(move |t| (k, t)))
        .collect();
    let outcomes: Vec<Result<TrialRecord>> = pairs
        .par_iter()
        .map(|&(k, trial)| {
            let sample = trial_sample(config, model.as_ref(), &margins, k, trial)?;
            let dev = sup_stdf_deviation(&sample, k, model.as_ref(), config.t_region, config.grid)?;
            Ok(TrialRecord {
                k,
                trial,
                deviation: dev.value,
                discretization_bound: dev.discretization_bound,
            })
        })
        .collect();

    let mut trials = Vec::with_capacity(pairs.len());
    let mut aborted = Vec::new();
    for (&(k, trial), outcome) in pairs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => trials.push(r),
            Err(e) if e.is_data() => aborted.push(AbortedTrial {
                k,
                trial,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }

    let mut levels = Vec::with_capacity(config.k_schedule.len());
    for &k in &config.k_schedule {
        let devs: Vec<f64> = trials.iter().filter(|r| r.k == k).map(|r| r.deviation).collect();
        let t = k as f64 / config.n as f64;
        let bias_t = sup_bias(model.as_ref(), t, config.t_region, config.bias_grid_points)?;
        let bias_2t = if 2.0 * config.t_region * t <= 1.0 {
            Some(sup_bias(model.as_ref(), t, 2.0 * config.t_region, config.bias_grid_points)?)
        } else {
            None
        };
        let (bound, bound_note) = match bias_2t {
            None => (None, Some("bias over [0, 2T] leaves the unit cube".to_string())),
            Some(b) => match theorem2_bound(k, config.d, config.t_region, config.delta, config.constant, b) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            },
        };
        levels.push(LevelSummary {
            k,
            trials: devs.len(),
            median: stats::median(&devs),
            upper_quantile: stats::quantile(&devs, 1.0 - config.delta),
            mean: stats::mean(&devs),
            std_error: stats::std_error(&devs),
            bias_t,
            bias_2t,
            bound,
            bound_note,
        });
    }

    let usable: Vec<&LevelSummary> = levels.iter().filter(|l| l.median > 0.0 && l.median.is_finite()).collect();
    let slope = (usable.len() >= 2).then(|| {
        let ks: Vec<f64> = usable.iter().map(|l| l.k as f64).collect();
        let meds: Vec<f64> = usable.iter().map(|l| l.median).collect();
        stats::fit_log_log(&ks, &meds)
    });

    Ok(DeviationReport {
        config: config.clone(),
        trials,
        levels,
        slope,
        aborted,
    })
}

/// Scale-free part of the deviation bound, `d sqrt((T/k) log((d+3)/delta))`.
pub fn bound_scale(k: usize, d: usize, t_region: f64, delta: f64) -> f64 {
    d as f64 * (t_region / k as f64 * ((d as f64 + 3.0) / delta).ln()).sqrt()
}

/// Smallest constant for which every pilot trial satisfies the bound, with
/// the bias over `[0, 2T]^d` subtracted first.
pub fn calibrate_constant(pilot: &DeviationReport) -> Result<f64> {
    let cfg = &pilot.config;
    let mut c = 0.0f64;
    for level in &pilot.levels {
        let bias = level
            .bias_2t
            .ok_or_else(|| Error::domain(format!("k = {}: bias over [0, 2T] unavailable", level.k)))?;
        let scale = bound_scale(level.k, cfg.d, cfg.t_region, cfg.delta);
        for dev in pilot.deviations(level.k) {
            c = c.max((dev - bias) / scale);
        }
    }
    Ok(c)
}

/// Fraction of trials whose deviation stays below the bound with constant `c`.
pub fn coverage(report: &DeviationReport, c: f64) -> Result<f64> {
    let cfg = &report.config;
    let mut hits = 0usize;
    let mut total = 0usize;
    for level in &report.levels {
        let bias = level
            .bias_2t
            .ok_or_else(|| Error::domain(format!("k = {}: bias over [0, 2T] unavailable", level.k)))?;
        theorem2_bound(level.k, cfg.d, cfg.t_region, cfg.delta, c, bias)?;
        let scale = bound_scale(level.k, cfg.d, cfg.t_region, cfg.delta);
        for dev in report.deviations(level.k) {
            total += 1;
            // same arithmetic as the calibration, so the trial that set `c` is covered
            hits += usize::from((dev - bias) / scale <= c);
        }
    }
    Ok(hits as f64 / total.max(1) as f64)
}
