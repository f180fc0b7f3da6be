//! Maximal deviations over the rectangle-complement class.
//!
//! The class is `{ A_s : 0 <= s_j <= s_max }` with
//! `A_s = { z : z_1 < s_1 or ... or z_d < s_d }` and `s_max = (k/n) T`.
//! Its union has mass `p = P(exists j : U^j < s_max)` and its VC dimension is `d`.
//!
//! For `d <= 2` the supremum over the continuum is computed exactly: the
//! empirical measure of `A_s` only changes when some `s_j` crosses a data
//! coordinate, and the true mass is continuous and non-decreasing in every
//! `s_j`, so on each constant-count cell the supremum sits at one of the two
//! extreme corners. Higher dimensions use an explicit grid and report the
//! `l1` discretization slack separately.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::PseudoUniformSample;
use crate::error::{Error, Result};
use crate::lattice::{union_sweep, AxisPoint, OUT};
use crate::model::{parse_tag, DependenceModel};
use crate::rng::derive_stream;
use crate::stats;

/// How a supremum over `[0, T]^d` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GridPolicy {
    /// Exact cell scan; available for `d <= 2`.
    Exact,
    /// Regular grid with the given step, in units of `x` (not `s`).
    Grid(f64),
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy::Exact
    }
}

impl FromStr for GridPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match parse_tag(s)? {
            (name, None) if name == "exact" => Ok(GridPolicy::Exact),
            (name, Some(step)) if name == "grid" => {
                if !(step > 0.0) || !step.is_finite() {
                    return Err(Error::config(format!("grid step must be positive (got {step})")));
                }
                Ok(GridPolicy::Grid(step))
            }
            _ => Err(Error::config(format!("grid policy `{s}`: expected `exact` or `grid(STEP)`"))),
        }
    }
}

impl TryFrom<String> for GridPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GridPolicy> for String {
    fn from(g: GridPolicy) -> String {
        g.to_string()
    }
}

impl fmt::Display for GridPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridPolicy::Exact => f.write_str("exact"),
            GridPolicy::Grid(h) => write!(f, "grid({h})"),
        }
    }
}

impl GridPolicy {
    /// Rejects `Exact` where it is not available.
    pub fn check(&self, d: usize) -> Result<()> {
        if d >= 3 && *self == GridPolicy::Exact {
            return Err(Error::config(format!(
                "d = {d}: the exact supremum is only available for d <= 2; set an explicit grid, e.g. grid(0.05)"
            )));
        }
        Ok(())
    }
}

/// The class `{ [(k/n) x, inf)^c : 0 <= x_j <= T }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectClassSpec {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    #[serde(rename = "T")]
    pub t_region: f64,
}

impl RectClassSpec {
    pub fn new(d: usize, k: usize, n: usize, t_region: f64) -> Result<Self> {
        let spec = RectClassSpec { d, k, n, t_region };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 || self.k == 0 {
            return Err(Error::config("class needs d, k, n >= 1"));
        }
        if !(self.t_region >= 0.0) || !self.t_region.is_finite() {
            return Err(Error::config(format!("T must be finite and >= 0 (got {})", self.t_region)));
        }
        if self.s_max() > 1.0 {
            return Err(Error::domain(format!(
                "(k/n) T = {} exceeds 1; the class leaves the unit cube",
                self.s_max()
            )));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    /// Largest threshold `(k/n) T`.
    pub fn s_max(&self) -> f64 {
        self.scale() * self.t_region
    }

    pub fn vc_dimension(&self) -> usize {
        self.d
    }
}

/// `p = P(U in union of the class)`, exact under the model.
pub fn union_mass(class: &RectClassSpec, model: &dyn DependenceModel) -> Result<f64> {
    class.validate()?;
    check_model_dim(class.d, model)?;
    Ok(model.tail_mass(&vec![class.s_max(); class.d]))
}

fn check_model_dim(d: usize, model: &dyn DependenceModel) -> Result<()> {
    if model.dim() != d {
        return Err(Error::config(format!(
            "model `{}` has dimension {}, class has {d}",
            model.tag(),
            model.dim()
        )));
    }
    Ok(())
}

/// A supremum together with the slack of the grid it was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupDeviation {
    pub value: f64,
    /// Zero for exact scans; `d * h` (in the units of the statistic) on a grid of step `h`.
    pub discretization_bound: f64,
}

/// Points of the union region, with per-axis positions among the sorted
/// coordinates that fall below `s_max`.
pub(crate) struct RegionPoints {
    pub points: Vec<AxisPoint>,
    /// Sorted coordinates below the threshold, per axis.
    pub axes: Vec<Vec<f64>>,
}

pub(crate) fn region_points<'a>(rows: impl Iterator<Item = &'a [f64]>, d: usize, s_max: f64) -> RegionPoints {
    debug_assert!(d <= 2);
    let mut kept: Vec<[f64; 2]> = Vec::new();
    for r in rows {
        if r.iter().any(|v| *v < s_max) {
            kept.push([r[0], if d == 2 { r[1] } else { f64::INFINITY }]);
        }
    }
    let mut points = vec![AxisPoint { a: OUT, b: OUT, w: 1 }; kept.len()];
    let mut axes = Vec::with_capacity(d);
    for j in 0..d {
        let mut idx: Vec<usize> = (0..kept.len()).filter(|&p| kept[p][j] < s_max).collect();
        idx.sort_unstable_by(|a, b| kept[*a][j].total_cmp(&kept[*b][j]));
        for (pos, &p) in idx.iter().enumerate() {
            if j == 0 {
                points[p].a = pos as u32 + 1;
            } else {
                points[p].b = pos as u32 + 1;
            }
        }
        axes.push(idx.iter().map(|&p| kept[p][j]).collect());
    }
    RegionPoints { points, axes }
}

/// Cell breakpoints `0 = z_0 < z_1 < ... < z_M < z_{M+1} = s_max`.
fn breakpoints(axis: &[f64], s_max: f64) -> Vec<f64> {
    let mut z = Vec::with_capacity(axis.len() + 2);
    z.push(0.0);
    z.extend_from_slice(axis);
    z.push(s_max);
    z
}

/// Exact `sup_s |P(A_s) - W(s)/n|` for `d <= 2`, `W` the union count.
pub(crate) fn exact_cell_sup(u: &PseudoUniformSample, s_max: f64, mass: &dyn Fn(&[f64]) -> f64) -> f64 {
    let d = u.d();
    let n = u.n() as f64;
    let region = region_points(u.rows(), d, s_max);
    let z1 = breakpoints(&region.axes[0], s_max);
    let m1_max = region.axes[0].len();
    if d == 1 {
        return (0..=m1_max)
            .map(|m| {
                let c = m as f64 / n;
                (c - mass(&[z1[m]])).abs().max((c - mass(&[z1[m + 1]])).abs())
            })
            .fold(0.0, f64::max);
    }
    let z2 = breakpoints(&region.axes[1], s_max);
    let m2_max = region.axes[1].len();
    let row_mass = |s1: f64| -> Vec<f64> { z2.iter().map(|&s2| mass(&[s1, s2])).collect() };
    let mut lower = row_mass(z1[0]);
    let mut best = 0.0f64;
    union_sweep(&region.points, m1_max, m2_max, |m1, counts| {
        let upper = row_mass(z1[m1 + 1]);
        for (m2, &c) in counts.iter().enumerate() {
            let c = c as f64 / n;
            let dev = (c - lower[m2]).abs().max((c - upper[m2 + 1]).abs());
            best = best.max(dev);
        }
        lower = upper;
    });
    best
}

/// Grid nodes `0, h, 2h, ...` below `upper`, plus `upper` itself.
pub fn grid_nodes(upper: f64, step: f64) -> Vec<f64> {
    let mut nodes = Vec::new();
    let mut i = 0usize;
    loop {
        let v = i as f64 * step;
        if v >= upper {
            break;
        }
        nodes.push(v);
        i += 1;
    }
    nodes.push(upper);
    nodes
}

/// Iterates over the Cartesian power `nodes^d`.
pub fn for_each_grid_point(nodes: &[f64], d: usize, mut visit: impl FnMut(&[f64])) {
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    loop {
        for (xj, ij) in x.iter_mut().zip(&idx) {
            *xj = nodes[*ij];
        }
        visit(&x);
        let mut axis = 0;
        loop {
            if axis == d {
                return;
            }
            idx[axis] += 1;
            if idx[axis] < nodes.len() {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

fn grid_sup(u: &PseudoUniformSample, s_max: f64, s_step: f64, mass: &dyn Fn(&[f64]) -> f64) -> f64 {
    let d = u.d();
    let n = u.n() as f64;
    let candidates: Vec<&[f64]> = u.rows().filter(|r| r.iter().any(|v| *v < s_max)).collect();
    let nodes = grid_nodes(s_max, s_step);
    let mut best = 0.0f64;
    for_each_grid_point(&nodes, d, |s| {
        let count = candidates
            .iter()
            .filter(|r| r.iter().zip(s).any(|(v, t)| v < t))
            .count();
        best = best.max((count as f64 / n - mass(s)).abs());
    });
    best
}

/// `sup_{A in class} |P(U in A) - (1/n) #{ i : U_i in A }|` with the exact law of `model`.
pub fn sup_empirical_deviation(
    u: &PseudoUniformSample,
    class: &RectClassSpec,
    model: &dyn DependenceModel,
    grid: GridPolicy,
) -> Result<SupDeviation> {
    class.validate()?;
    check_model_dim(class.d, model)?;
    if u.d() != class.d {
        return Err(Error::data(format!("sample has {} columns, class has d = {}", u.d(), class.d)));
    }
    if u.n() != class.n {
        return Err(Error::data(format!("sample has {} rows, class has n = {}", u.n(), class.n)));
    }
    grid.check(class.d)?;
    let mass = |s: &[f64]| model.tail_mass(s);
    match grid {
        GridPolicy::Exact => Ok(SupDeviation {
            value: exact_cell_sup(u, class.s_max(), &mass),
            discretization_bound: 0.0,
        }),
        GridPolicy::Grid(h) => {
            let s_step = class.scale() * h;
            Ok(SupDeviation {
                value: grid_sup(u, class.s_max(), s_step, &mass),
                discretization_bound: class.d as f64 * s_step,
            })
        }
    }
}

/// Inputs of the closed-form deviation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub n: f64,
    /// VC dimension of the class.
    pub v: f64,
    /// Mass of the union of the class.
    pub p: f64,
    pub delta: f64,
    /// Stand-in for the unspecified absolute constant.
    #[serde(default = "one")]
    pub c: f64,
}

fn one() -> f64 {
    1.0
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::domain(format!("delta must lie in (0, 1) (got {})", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::domain(format!("p must lie in [0, 1] (got {})", self.p)));
        }
        if !(self.n >= 1.0) || !(self.v > 0.0) {
            return Err(Error::domain(format!(
                "need n >= 1 and V > 0 (got n = {}, V = {})",
                self.n, self.v
            )));
        }
        Ok(())
    }
}

/// `C [ sqrt(p) sqrt((V/n) log(1/delta)) + (1/n) log(1/delta) ]`.
pub fn theorem1_bound(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    let log_term = (1.0 / params.delta).ln();
    Ok(params.c * (params.p.sqrt() * (params.v / params.n * log_term).sqrt() + log_term / params.n))
}

/// `C sqrt(p) sqrt((V/n) log(1/delta))`, valid when `delta >= exp(-n p)`.
pub fn remark2_bound(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    let floor = (-params.n * params.p).exp();
    if params.delta < floor {
        return Err(Error::Precondition(format!(
            "delta >= e^(-np) violated: delta={}, required >= {floor}",
            params.delta
        )));
    }
    let log_term = (1.0 / params.delta).ln();
    Ok(params.c * params.p.sqrt() * (params.v / params.n * log_term).sqrt())
}

/// Renormalized VC bound after Sauer's lemma:
/// `2 sqrt(p) sqrt((V log(2 e n / V) + log(4/delta)) / n)`.
pub fn remark1_bound(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    if params.n < params.v {
        return Err(Error::domain(format!(
            "Sauer's bound needs n >= V (got n = {}, V = {})",
            params.n, params.v
        )));
    }
    let growth = params.v * (2.0 * std::f64::consts::E * params.n / params.v).ln();
    let conf = (4.0 / params.delta).ln();
    Ok(2.0 * params.p.sqrt() * ((growth + conf) / params.n).sqrt())
}

/// The Sauer-lemma bound next to the sharper bound at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundComparison {
    pub n: f64,
    pub theorem1: f64,
    pub remark1: f64,
    pub ratio: f64,
}

/// Evaluates both bounds along `ns` with the other inputs held fixed.
pub fn compare_bounds(ns: &[f64], template: &BoundParams) -> Result<Vec<BoundComparison>> {
    ns.iter()
        .map(|&n| {
            let params = BoundParams { n, ..*template };
            let theorem1 = theorem1_bound(&params)?;
            let remark1 = remark1_bound(&params)?;
            Ok(BoundComparison {
                n,
                theorem1,
                remark1,
                ratio: remark1 / theorem1,
            })
        })
        .collect()
}

/// Monte Carlo estimate of the relative Rademacher average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
    pub n: usize,
    pub p: f64,
    /// Per-trial values of `sup_A (1/(np)) |sum sigma_i 1{X_i in A}|`.
    pub values: Vec<f64>,
}

impl RademacherEstimate {
    /// `R_{n,p} * sqrt(n p)`, expected to stay of order `sqrt(V)`.
    pub fn normalized(&self) -> f64 {
        self.mean * (self.n as f64 * self.p).sqrt()
    }
}

fn draw_uniforms(model: &dyn DependenceModel, n: usize, rng: &mut crate::rng::StreamRng) -> Vec<f64> {
    let d = model.dim();
    let mut values = vec![0.0; n * d];
    for row in values.chunks_exact_mut(d) {
        model.sample_row(rng, row);
        for v in row.iter_mut() {
            *v = 1.0 - *v;
        }
    }
    values
}

fn signed_sup(u: &PseudoUniformSample, s_max: f64, grid: GridPolicy, s_step: f64, seed: u64, trial: u64) -> i64 {
    let d = u.d();
    let mut signs_rng = derive_stream(seed, trial, "rademacher/signs");
    match grid {
        GridPolicy::Exact => {
            let mut region = region_points(u.rows(), d, s_max);
            for p in region.points.iter_mut() {
                p.w = if signs_rng.random::<bool>() { 1 } else { -1 };
            }
            let m1_max = region.axes[0].len();
            let m2_max = if d == 2 { region.axes[1].len() } else { 0 };
            let mut best = 0i64;
            union_sweep(&region.points, m1_max, m2_max, |_, row| {
                for v in row {
                    best = best.max(v.abs());
                }
            });
            best
        }
        GridPolicy::Grid(_) => {
            let candidates: Vec<(&[f64], i64)> = u
                .rows()
                .filter(|r| r.iter().any(|v| *v < s_max))
                .map(|r| (r, if signs_rng.random::<bool>() { 1 } else { -1 }))
                .collect();
            let nodes = grid_nodes(s_max, s_step);
            let mut best = 0i64;
            for_each_grid_point(&nodes, d, |s| {
                let sum: i64 = candidates
                    .iter()
                    .filter(|(r, _)| r.iter().zip(s).any(|(v, t)| v < t))
                    .map(|(_, w)| w)
                    .sum();
                best = best.max(sum.abs());
            });
            best
        }
    }
}

/// `R_{n,p} = E sup_A (1/(np)) |sum_i sigma_i 1{X_i in A}|`, averaged over
/// `trials` fresh samples and fresh sign vectors.
pub fn relative_rademacher(
    model: &dyn DependenceModel,
    class: &RectClassSpec,
    trials: usize,
    seed: u64,
    grid: GridPolicy,
) -> Result<RademacherEstimate> {
    if trials < 2 {
        return Err(Error::config(format!("need at least 2 trials (got {trials})")));
    }
    let p = union_mass(class, model)?;
    grid.check(class.d)?;
    let (n, d, s_max) = (class.n, class.d, class.s_max());
    let s_step = match grid {
        GridPolicy::Grid(h) => class.scale() * h,
        GridPolicy::Exact => 0.0,
    };
    let values: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            if p == 0.0 {
                return 0.0;
            }
            let mut rng = derive_stream(seed, trial, "rademacher/sample");
            let u = PseudoUniformSample::from_flat(n, d, draw_uniforms(model, n, &mut rng))
                .expect("model draws lie in the unit cube");
            let sup = signed_sup(&u, s_max, grid, s_step, seed, trial);
            sup as f64 / (n as f64 * p)
        })
        .collect();
    Ok(RademacherEstimate {
        mean: stats::mean(&values),
        std_error: stats::std_error(&values),
        trials,
        n,
        p,
        values,
    })
}

/// Whether some set of the class contains exactly one of `x`, `y`.
///
/// A set `A_s` holds `x` but not `y` iff some coordinate has
/// `x_j < s_j <= min(y_j, s_max)`, which is possible iff `x_j < min(y_j, s_max)`.
pub fn separates(x: &[f64], y: &[f64], s_max: f64) -> bool {
    x.iter()
        .zip(y)
        .any(|(a, b)| (a < b && *a < s_max) || (b < a && *b < s_max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub pairs: usize,
    pub p: f64,
}

const PAIRS_PER_STREAM: usize = 1000;

/// Monte Carlo estimate of `q = E sup_A |1{X' in A} - 1{X in A}|` over independent pairs.
pub fn class_complexity_q(
    model: &dyn DependenceModel,
    class: &RectClassSpec,
    pairs: usize,
    seed: u64,
) -> Result<ComplexityEstimate> {
    class_complexity_q_with(model, class, pairs, seed, false)
}

/// As [`class_complexity_q`]; with `coupled` set the second draw is a copy
/// of the first, a degenerate coupling for which `q = 0`.
pub fn class_complexity_q_with(
    model: &dyn DependenceModel,
    class: &RectClassSpec,
    pairs: usize,
    seed: u64,
    coupled: bool,
) -> Result<ComplexityEstimate> {
    if pairs < 2 {
        return Err(Error::config(format!("need at least 2 pairs (got {pairs})")));
    }
    let p = union_mass(class, model)?;
    let (d, s_max) = (class.d, class.s_max());
    let chunks = pairs.div_ceil(PAIRS_PER_STREAM);
    let hits: Vec<u64> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = derive_stream(seed, chunk as u64, "q/pairs");
            let len = PAIRS_PER_STREAM.min(pairs - chunk * PAIRS_PER_STREAM);
            let mut x = vec![0.0; d];
            let mut y = vec![0.0; d];
            let mut count = 0u64;
            for _ in 0..len {
                model.sample_row(&mut rng, &mut x);
                if coupled {
                    y.copy_from_slice(&x);
                } else {
                    model.sample_row(&mut rng, &mut y);
                }
                x.iter_mut().chain(y.iter_mut()).for_each(|v| *v = 1.0 - *v);
                count += u64::from(separates(&x, &y, s_max));
            }
            count
        })
        .collect();
    let total: u64 = hits.iter().sum();
    let mean = total as f64 / pairs as f64;
    let std_error = (mean * (1.0 - mean) / (pairs as f64 - 1.0)).sqrt();
    Ok(ComplexityEstimate {
        mean,
        std_error,
        pairs,
        p,
    })
}
