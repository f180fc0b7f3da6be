//! Classification on extreme regions.
//!
//! The conditional risk of a labeler `g` on the tail region `{ ||X|| > t_alpha }`
//! is `L_alpha(g) = P(Y != g(X), ||X|| > t_alpha) / alpha`, and its empirical
//! version replaces `t_alpha` by the `[n alpha]`-th largest observed norm:
//!
//! ```text
//! L_{alpha,n}(g) = (1/(n alpha)) #{ i : Y_i != g(X_i), ||X_i|| > ||X||_([n alpha]) }
//! ```
//!
//! with norms sorted in decreasing order. Points whose norm equals the
//! threshold are excluded; tied norms are rejected.
//!
//! Synthetic data: independent unit-exponential features and the label
//! `Y = +1` iff `X_c > tau`, flipped with probability `eta`. For axis
//! threshold labelers and box-complement regions the true risk is a finite
//! sum of products of marginal interval probabilities.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::lattice_index;
use crate::error::{Error, Result};
use crate::margins::{Exponential, Margin, MarginRef};
use crate::model::Independence;
use crate::rng::{child_seed, derive_stream, StreamRng};
use crate::sample::{draw, Provenance, Sample};
use crate::stats::{self, LineFit};

/// Features with labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    features: Sample,
    labels: Vec<i8>,
}

impl LabeledSample {
    pub fn new(features: Sample, labels: Vec<i8>) -> Result<Self> {
        if labels.len() != features.n() {
            return Err(Error::data(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.n()
            )));
        }
        if let Some(pos) = labels.iter().position(|y| *y != 1 && *y != -1) {
            return Err(Error::data(format!("label in row {} is {}, expected -1 or +1", pos + 1, labels[pos])));
        }
        Ok(LabeledSample { features, labels })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.features.d()
    }

    pub fn features(&self) -> &Sample {
        &self.features
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }
}

/// A deterministic labeler `R^d -> {-1, +1}`.
pub trait Classifier: Send + Sync + fmt::Debug {
    fn predict(&self, x: &[f64]) -> i8;

    /// Axis-threshold form, when the labeler has one; enables exact risks.
    fn as_axis(&self) -> Option<AxisThreshold> {
        None
    }
}

/// `g(x) = sign` if `x[coordinate] > threshold`, else `-sign`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisThreshold {
    pub coordinate: usize,
    pub threshold: f64,
    pub sign: i8,
}

impl Classifier for AxisThreshold {
    fn predict(&self, x: &[f64]) -> i8 {
        if x[self.coordinate] > self.threshold {
            self.sign
        } else {
            -self.sign
        }
    }

    fn as_axis(&self) -> Option<AxisThreshold> {
        Some(*self)
    }
}

/// Always answers the same label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantLabel(pub i8);

impl Classifier for ConstantLabel {
    fn predict(&self, _x: &[f64]) -> i8 {
        self.0
    }
}

/// A finite class of labelers with a declared VC dimension.
#[derive(Debug, Clone)]
pub struct ClassifierFamily {
    members: Vec<Arc<dyn Classifier>>,
    vc_dim: usize,
}

impl ClassifierFamily {
    pub fn new(members: Vec<Arc<dyn Classifier>>, vc_dim: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::config("classifier family is empty"));
        }
        Ok(ClassifierFamily { members, vc_dim })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn vc_dim(&self) -> usize {
        self.vc_dim
    }

    pub fn members(&self) -> &[Arc<dyn Classifier>] {
        &self.members
    }

    pub fn get(&self, i: usize) -> &dyn Classifier {
        self.members[i].as_ref()
    }
}

/// Serializable list of axis-threshold labelers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisFamily {
    pub members: Vec<AxisThreshold>,
    pub vc_dim: usize,
}

impl AxisFamily {
    /// Every `(coordinate, threshold, sign)` combination, signs `+1` then `-1`.
    pub fn grid(coordinates: &[usize], thresholds: &[f64], vc_dim: usize) -> Self {
        let mut members = Vec::new();
        for &coordinate in coordinates {
            for &threshold in thresholds {
                for sign in [1i8, -1] {
                    members.push(AxisThreshold {
                        coordinate,
                        threshold,
                        sign,
                    });
                }
            }
        }
        AxisFamily { members, vc_dim }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::config("classifier family is empty"));
        }
        for g in &self.members {
            if g.coordinate >= d || (g.sign != 1 && g.sign != -1) || !g.threshold.is_finite() {
                return Err(Error::config(format!("invalid labeler {g:?} for d = {d}")));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<ClassifierFamily> {
        let members = self
            .members
            .iter()
            .map(|g| Arc::new(*g) as Arc<dyn Classifier>)
            .collect();
        ClassifierFamily::new(members, self.vc_dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormTag {
    L1,
    #[default]
    L2,
    Linf,
}

impl NormTag {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            NormTag::L1 => x.iter().map(|v| v.abs()).sum(),
            NormTag::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            NormTag::Linf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

/// Where the risk is conditioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TailRegionSpec {
    /// `{ ||x|| > t_alpha }`, `t_alpha` the `(1 - alpha)`-quantile of `||X||`.
    Quantile {
        #[serde(default)]
        norm: NormTag,
        alpha: f64,
    },
    /// `Q = { exists j : x_j > c_j }` with known mass `q`.
    Explicit { thresholds: Vec<f64>, q: f64 },
}

impl TailRegionSpec {
    pub fn quantile(norm: NormTag, alpha: f64) -> Self {
        TailRegionSpec::Quantile { norm, alpha }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TailRegionSpec::Quantile { alpha, .. } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::config(format!("alpha must lie in (0, 1) (got {alpha})")));
                }
            }
            TailRegionSpec::Explicit { q, thresholds } => {
                if !(*q > 0.0 && *q <= 1.0) {
                    return Err(Error::config(format!("q must lie in (0, 1] (got {q})")));
                }
                if thresholds.iter().any(|c| c.is_nan()) {
                    return Err(Error::config("region thresholds must not be NaN"));
                }
            }
        }
        Ok(())
    }

    /// `alpha` or `q`.
    pub fn mass(&self) -> f64 {
        match self {
            TailRegionSpec::Quantile { alpha, .. } => *alpha,
            TailRegionSpec::Explicit { q, .. } => *q,
        }
    }
}

/// Rows selected by a region and the normalizer of the empirical risk.
#[derive(Debug, Clone, PartialEq)]
pub struct TailSelection {
    pub rows: Vec<usize>,
    /// `n alpha` or `n q`.
    pub normalizer: f64,
}

fn tied_norm_error(rows: (usize, usize), value: f64) -> Error {
    Error::data(format!(
        "tied norms: rows {} and {} share ||x|| = {value}",
        rows.0.min(rows.1) + 1,
        rows.0.max(rows.1) + 1
    ))
}

/// Rows entering the empirical conditional risk.
pub fn select_tail(data: &LabeledSample, region: &TailRegionSpec) -> Result<TailSelection> {
    region.validate()?;
    let n = data.n();
    match region {
        TailRegionSpec::Quantile { norm, alpha } => {
            let m = lattice_index(n, *alpha);
            if m == 0 {
                return Err(Error::domain(format!("[n alpha] = 0 (n = {n}, alpha = {alpha})")));
            }
            let norms: Vec<f64> = data.features.rows().map(|x| norm.eval(x)).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_unstable_by(|a, b| norms[*b].total_cmp(&norms[*a]));
            if let Some(w) = order.windows(2).find(|w| norms[w[0]] == norms[w[1]]) {
                return Err(tied_norm_error((w[0], w[1]), norms[w[0]]));
            }
            let threshold = norms[order[m - 1]];
            let rows = (0..n).filter(|&i| norms[i] > threshold).collect();
            Ok(TailSelection {
                rows,
                normalizer: n as f64 * alpha,
            })
        }
        TailRegionSpec::Explicit { thresholds, q } => {
            if thresholds.len() != data.d() {
                return Err(Error::config(format!(
                    "region has {} thresholds, data has {} columns",
                    thresholds.len(),
                    data.d()
                )));
            }
            let rows = (0..n)
                .filter(|&i| data.features.row(i).iter().zip(thresholds).any(|(x, c)| x > c))
                .collect();
            Ok(TailSelection {
                rows,
                normalizer: n as f64 * q,
            })
        }
    }
}

fn selection_risk(data: &LabeledSample, g: &dyn Classifier, sel: &TailSelection) -> f64 {
    let errors = sel
        .rows
        .iter()
        .filter(|&&i| g.predict(data.features.row(i)) != data.labels[i])
        .count();
    errors as f64 / sel.normalizer
}

/// Empirical conditional risk of `g` on the region.
pub fn empirical_conditional_risk(data: &LabeledSample, g: &dyn Classifier, region: &TailRegionSpec) -> Result<f64> {
    let sel = select_tail(data, region)?;
    Ok(selection_risk(data, g, &sel))
}

/// Empirical risks of every member, in order.
pub fn empirical_risks(data: &LabeledSample, family: &ClassifierFamily, region: &TailRegionSpec) -> Result<Vec<f64>> {
    let sel = select_tail(data, region)?;
    Ok(family.members.iter().map(|g| selection_risk(data, g.as_ref(), &sel)).collect())
}

/// Index of the empirical risk minimizer; ties go to the lowest index.
pub fn erm(data: &LabeledSample, family: &ClassifierFamily, region: &TailRegionSpec) -> Result<usize> {
    let risks = empirical_risks(data, family, region)?;
    let mut best = 0;
    for (i, r) in risks.iter().enumerate() {
        if *r < risks[best] {
            best = i;
        }
    }
    Ok(best)
}

fn default_reference_draws() -> usize {
    10_000_000
}

/// Independent unit-exponential features with a noisy threshold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledGenerator {
    pub d: usize,
    /// Coordinate driving the label.
    pub label_coordinate: usize,
    pub tau: f64,
    /// Label flip probability.
    pub eta: f64,
    /// Draws for Monte Carlo reference risks (norms without a closed-form quantile).
    #[serde(default = "default_reference_draws")]
    pub reference_draws: usize,
}

impl LabeledGenerator {
    pub fn new(d: usize, label_coordinate: usize, tau: f64, eta: f64) -> Result<Self> {
        let g = LabeledGenerator {
            d,
            label_coordinate,
            tau,
            eta,
            reference_draws: default_reference_draws(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.label_coordinate >= self.d {
            return Err(Error::config(format!(
                "label coordinate {} out of range for d = {}",
                self.label_coordinate, self.d
            )));
        }
        if !(0.0..=1.0).contains(&self.eta) || !self.tau.is_finite() {
            return Err(Error::config(format!("need finite tau and eta in [0, 1] (got {}, {})", self.tau, self.eta)));
        }
        Ok(())
    }

    fn clean_label(&self, x: &[f64]) -> i8 {
        if x[self.label_coordinate] > self.tau {
            1
        } else {
            -1
        }
    }

    /// The noiseless labeler, which is also the Bayes rule when `eta < 1/2`.
    pub fn bayes_rule(&self) -> AxisThreshold {
        AxisThreshold {
            coordinate: self.label_coordinate,
            threshold: self.tau,
            sign: 1,
        }
    }

    fn draw_rows(&self, n: usize, rng: &mut StreamRng) -> Vec<f64> {
        let model = Independence::new(self.d).expect("d >= 1 checked");
        let margins: Vec<MarginRef> = vec![Arc::new(Exponential); self.d];
        draw(&model, &margins, n, rng)
    }

    /// `n` labeled draws from stream `(seed, trial)`.
    pub fn sample(&self, n: usize, seed: u64, trial: u64) -> Result<LabeledSample> {
        self.validate()?;
        let mut rng = derive_stream(seed, trial, "classification/features");
        let values = self.draw_rows(n, &mut rng);
        let mut flips = derive_stream(seed, trial, "classification/labels");
        let labels = values
            .chunks_exact(self.d)
            .map(|x| {
                let y = self.clean_label(x);
                if flips.random::<f64>() < self.eta {
                    -y
                } else {
                    y
                }
            })
            .collect();
        let features = Sample::from_flat(n, self.d, values, Provenance::Derived(format!("labeled seed={seed} trial={trial}")))?;
        LabeledSample::new(features, labels)
    }

    /// `Q = { exists j : x_j > c_j }` with its exact mass.
    pub fn explicit_region(&self, thresholds: Vec<f64>) -> Result<TailRegionSpec> {
        if thresholds.len() != self.d {
            return Err(Error::config(format!("need {} thresholds (got {})", self.d, thresholds.len())));
        }
        let inside: f64 = thresholds.iter().map(|c| Exponential.cdf(*c)).product();
        let region = TailRegionSpec::Explicit {
            thresholds,
            q: 1.0 - inside,
        };
        region.validate()?;
        Ok(region)
    }

    /// Exact `(1 - alpha)`-quantile of the sup-norm: `(1 - e^{-t})^d = 1 - alpha`.
    pub fn linf_quantile(&self, alpha: f64) -> f64 {
        -(-(1.0 - alpha).powf(1.0 / self.d as f64)).ln_1p()
    }
}

/// A true conditional risk, exact or Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueRisk {
    pub value: f64,
    /// Zero for exact values.
    pub std_error: f64,
    /// Joint probability `P(Y != g(X), X in region)`.
    pub joint: f64,
    pub exact: bool,
}

/// Per-coordinate upper corners `b` of the complement box `{ x <= b }` of the region.
fn complement_box(generator: &LabeledGenerator, region: &TailRegionSpec) -> Option<Vec<f64>> {
    match region {
        TailRegionSpec::Quantile { norm: NormTag::Linf, alpha } => Some(vec![generator.linf_quantile(*alpha); generator.d]),
        TailRegionSpec::Quantile { .. } => None,
        TailRegionSpec::Explicit { thresholds, .. } => Some(thresholds.clone()),
    }
}

/// `P(Y_0 != g(X), X not <= b)` for the clean label `Y_0`, by summing over
/// the cells cut out by every threshold on the relevant coordinates.
fn axis_disagreement_outside_box(generator: &LabeledGenerator, g: &AxisThreshold, b: &[f64]) -> f64 {
    let cdf = |x: f64| Exponential.cdf(x);
    let mut coords = vec![generator.label_coordinate];
    if g.coordinate != generator.label_coordinate {
        coords.push(g.coordinate);
    }
    let cuts: Vec<Vec<f64>> = coords
        .iter()
        .map(|&j| {
            let mut c = vec![b[j]];
            if j == generator.label_coordinate {
                c.push(generator.tau);
            }
            if j == g.coordinate {
                c.push(g.threshold);
            }
            c.retain(|v| v.is_finite());
            c.sort_by(f64::total_cmp);
            c.dedup();
            c
        })
        .collect();
    // intervals (lo, hi] per coordinate
    let intervals: Vec<Vec<(f64, f64)>> = cuts
        .iter()
        .map(|c| {
            let mut edges = vec![f64::NEG_INFINITY];
            edges.extend_from_slice(c);
            edges.push(f64::INFINITY);
            edges.windows(2).map(|w| (w[0], w[1])).collect()
        })
        .collect();
    let others: f64 = (0..generator.d)
        .filter(|j| !coords.contains(j))
        .map(|j| cdf(b[j]))
        .product();
    let representative = |(lo, hi): (f64, f64)| if hi.is_finite() { hi } else { lo + 1.0 };
    let mut x = vec![0.0; generator.d];
    let mut total = 0.0;
    let mut visit = |cells: &[(f64, f64)]| {
        for (&j, &cell) in coords.iter().zip(cells) {
            x[j] = representative(cell);
        }
        if generator.clean_label(&x) == g.predict(&x) {
            return;
        }
        let mut all = 1.0;
        let mut inside = others;
        for (&j, &(lo, hi)) in coords.iter().zip(cells) {
            all *= cdf(hi) - cdf(lo);
            inside *= if hi <= b[j] { cdf(hi) - cdf(lo) } else { 0.0 };
        }
        total += all - inside;
    };
    for &c0 in &intervals[0] {
        if coords.len() == 1 {
            visit(&[c0]);
        } else {
            for &c1 in &intervals[1] {
                visit(&[c0, c1]);
            }
        }
    }
    total
}

fn exact_risk(generator: &LabeledGenerator, g: &AxisThreshold, b: &[f64]) -> TrueRisk {
    let mass = 1.0 - b.iter().map(|c| Exponential.cdf(*c)).product::<f64>();
    let disagree = axis_disagreement_outside_box(generator, g, b);
    let joint = generator.eta * mass + (1.0 - 2.0 * generator.eta) * disagree;
    TrueRisk {
        value: joint / mass,
        std_error: 0.0,
        joint,
        exact: true,
    }
}

const REFERENCE_CHUNK: usize = 100_000;

/// Monte Carlo reference: threshold from the empirical quantile of the
/// reference norms (or the region itself), then expected errors given `X`.
fn reference_risks(
    generator: &LabeledGenerator,
    family: &ClassifierFamily,
    region: &TailRegionSpec,
    seed: u64,
) -> Result<Vec<TrueRisk>> {
    let draws = generator.reference_draws;
    if draws < 2 {
        return Err(Error::config("reference_draws must be at least 2"));
    }
    let chunks = draws.div_ceil(REFERENCE_CHUNK);
    let chunk_rows = |c: usize| -> Vec<f64> {
        let len = REFERENCE_CHUNK.min(draws - c * REFERENCE_CHUNK);
        let mut rng = derive_stream(seed, c as u64, "classification/reference");
        generator.draw_rows(len, &mut rng)
    };
    let d = generator.d;
    let inside: Box<dyn Fn(&[f64]) -> bool + Sync> = match region {
        TailRegionSpec::Quantile { norm, alpha } => {
            let norm = *norm;
            let t = match complement_box(generator, region) {
                Some(b) => b[0],
                None => {
                    let mut norms: Vec<f64> = (0..chunks)
                        .into_par_iter()
                        .flat_map_iter(|c| chunk_rows(c).chunks_exact(d).map(|x| norm.eval(x)).collect::<Vec<_>>())
                        .collect();
                    stats::quantile_in_place(&mut norms, 1.0 - alpha)
                }
            };
            Box::new(move |x| norm.eval(x) > t)
        }
        TailRegionSpec::Explicit { thresholds, .. } => {
            let c = thresholds.clone();
            Box::new(move |x| x.iter().zip(&c).any(|(v, t)| v > t))
        }
    };
    let mass = region.mass();
    let m = family.len();
    // per member: sum and sum of squares of the expected error indicator
    let sums: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = vec![0.0; m];
            let mut s2 = vec![0.0; m];
            for x in chunk_rows(c).chunks_exact(d) {
                if !inside(x) {
                    continue;
                }
                let y = generator.clean_label(x);
                for (i, g) in family.members.iter().enumerate() {
                    let e = if g.predict(x) == y { generator.eta } else { 1.0 - generator.eta };
                    s[i] += e;
                    s2[i] += e * e;
                }
            }
            (s, s2)
        })
        .collect();
    let nf = draws as f64;
    Ok((0..m)
        .map(|i| {
            let s: f64 = sums.iter().map(|(a, _)| a[i]).sum();
            let s2: f64 = sums.iter().map(|(_, b)| b[i]).sum();
            let joint = s / nf;
            let var = (s2 / nf - joint * joint).max(0.0) * nf / (nf - 1.0);
            TrueRisk {
                value: joint / mass,
                std_error: (var / nf).sqrt() / mass,
                joint,
                exact: false,
            }
        })
        .collect())
}

/// True conditional risks of every member; exact where possible.
pub fn true_risks(
    generator: &LabeledGenerator,
    family: &ClassifierFamily,
    region: &TailRegionSpec,
    reference_seed: u64,
) -> Result<Vec<TrueRisk>> {
    generator.validate()?;
    region.validate()?;
    if let TailRegionSpec::Explicit { thresholds, .. } = region {
        if thresholds.len() != generator.d {
            return Err(Error::config("region and generator dimensions differ"));
        }
    }
    let boxed = complement_box(generator, region);
    let all_axis = family.members.iter().all(|g| g.as_axis().is_some());
    match boxed {
        Some(b) if all_axis => Ok(family
            .members
            .iter()
            .map(|g| exact_risk(generator, &g.as_axis().unwrap(), &b))
            .collect()),
        _ => reference_risks(generator, family, region, reference_seed),
    }
}

/// True conditional risk of a single labeler.
pub fn true_conditional_risk(
    g: Arc<dyn Classifier>,
    region: &TailRegionSpec,
    generator: &LabeledGenerator,
    reference_seed: u64,
) -> Result<TrueRisk> {
    let family = ClassifierFamily::new(vec![g], 1)?;
    Ok(true_risks(generator, &family, region, reference_seed)?[0])
}

/// `sup_g |L_{alpha,n}(g) - L_alpha(g)|`.
pub fn sup_risk_deviation(data: &LabeledSample, family: &ClassifierFamily, region: &TailRegionSpec, truth: &[TrueRisk]) -> Result<f64> {
    let emp = empirical_risks(data, family, region)?;
    Ok(emp.iter().zip(truth).map(|(e, t)| (e - t.value).abs()).fold(0.0, f64::max))
}

/// Both sides of the risk decomposition for quantile regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    /// `sup_g |L_{alpha,n}(g) - L_alpha(g)|`.
    pub lhs: f64,
    /// `sup_g |P(err, ||X|| > t) - P_n(err, ||X|| > t)|`.
    pub joint_deviation: f64,
    /// `|P(||X|| > t) - P_n(||X|| > t)|`.
    pub marginal_deviation: f64,
    /// `(joint + marginal + 1/n) / alpha`.
    pub rhs: f64,
    /// Allowance for Monte Carlo reference error (zero when exact).
    pub tolerance: f64,
    pub holds: bool,
}

/// Checks `sup_g |L_{alpha,n} - L_alpha| <= (1/alpha)[sup_g |joint dev| + |tail dev| + 1/n]`.
///
/// With the true threshold `t_alpha`, the two tail sets differ by at most
/// `|N - n alpha| + 1` points when `n alpha` is an integer; otherwise the
/// rounding of `[n alpha]` can add up to one more point.
pub fn decomposition_check(
    data: &LabeledSample,
    family: &ClassifierFamily,
    region: &TailRegionSpec,
    generator: &LabeledGenerator,
    reference_seed: u64,
) -> Result<DecompositionCheck> {
    let (norm, alpha) = match region {
        TailRegionSpec::Quantile { norm, alpha } => (*norm, *alpha),
        TailRegionSpec::Explicit { .. } => {
            return Err(Error::config("the decomposition check applies to quantile regions"));
        }
    };
    let truth = true_risks(generator, family, region, reference_seed)?;
    let t_alpha = match complement_box(generator, region) {
        Some(b) => b[0],
        None => {
            return Err(Error::config(format!(
                "no exact threshold for norm {norm:?}; use linf for the decomposition check"
            )))
        }
    };
    let n = data.n() as f64;
    let tail: Vec<usize> = (0..data.n())
        .filter(|&i| norm.eval(data.features.row(i)) > t_alpha)
        .collect();
    let marginal_deviation = (alpha - tail.len() as f64 / n).abs();
    let joint_deviation = family
        .members
        .iter()
        .zip(&truth)
        .map(|(g, t)| {
            let errs = tail.iter().filter(|&&i| g.predict(data.features.row(i)) != data.labels[i]).count();
            (t.joint - errs as f64 / n).abs()
        })
        .fold(0.0, f64::max);
    let lhs = sup_risk_deviation(data, family, region, &truth)?;
    let rhs = (joint_deviation + marginal_deviation + 1.0 / n) / alpha;
    let tolerance = 3.0 * truth.iter().map(|t| t.std_error).fold(0.0, f64::max) + 1e-12;
    Ok(DecompositionCheck {
        lhs,
        joint_deviation,
        marginal_deviation,
        rhs,
        tolerance,
        holds: lhs <= rhs + tolerance,
    })
}

/// One `(n, alpha)` point of the rate experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatePoint {
    pub n: usize,
    pub alpha: f64,
}

impl RatePoint {
    pub fn effective(&self) -> f64 {
        self.n as f64 * self.alpha
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationConfig {
    pub generator: LabeledGenerator,
    pub family: AxisFamily,
    #[serde(default)]
    pub norm: NormTag,
    pub points: Vec<RatePoint>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    0.05
}

impl ClassificationConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.family.validate(self.generator.d)?;
        if self.points.is_empty() || self.trials == 0 {
            return Err(Error::config("need at least one point and one trial"));
        }
        for p in &self.points {
            TailRegionSpec::quantile(self.norm, p.alpha).validate()?;
            if lattice_index(p.n, p.alpha) == 0 {
                return Err(Error::domain(format!("[n alpha] = 0 at n = {}, alpha = {}", p.n, p.alpha)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskTrialRecord {
    pub point: usize,
    pub n: usize,
    pub alpha: f64,
    pub trial: usize,
    pub sup_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskLevelSummary {
    pub n: usize,
    pub alpha: f64,
    pub n_alpha: f64,
    pub trials: usize,
    pub median: f64,
    pub upper_quantile: f64,
    pub mean: f64,
    pub std_error: f64,
    /// Largest standard error among the reference risks (zero when exact).
    pub reference_error: f64,
    /// `n alpha < 10`.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub config: ClassificationConfig,
    pub trials: Vec<RiskTrialRecord>,
    pub levels: Vec<RiskLevelSummary>,
    /// Fit of `ln median` on `ln(n alpha)`.
    pub slope: Option<LineFit>,
    pub warnings: Vec<String>,
}

/// `sup_g |L_{alpha,n}(g) - L_alpha(g)|` across a schedule of `(n, alpha)`.
pub fn rate_experiment_classification(config: &ClassificationConfig) -> Result<ClassificationReport> {
    config.validate()?;
    let family = config.family.build()?;
    let mut warnings = Vec::new();
    let mut truths = Vec::with_capacity(config.points.len());
    for (idx, p) in config.points.iter().enumerate() {
        if p.effective() < 10.0 {
            warnings.push(format!("n alpha = {} < 10 at n = {}, alpha = {}", p.effective(), p.n, p.alpha));
        }
        let region = TailRegionSpec::quantile(config.norm, p.alpha);
        truths.push(true_risks(
            &config.generator,
            &family,
            &region,
            child_seed(config.seed, "classification/reference", idx as u64),
        )?);
    }
    let jobs: Vec<(usize, usize)> = (0..config.points.len())
        .flat_map(|p| (0..config.trials).map(move |t| (p, t)))
        .collect();
    let trials: Vec<RiskTrialRecord> = jobs
        .par_iter()
        .map(|&(pi, trial)| {
            let p = config.points[pi];
            let data = config.generator.sample(
                p.n,
                child_seed(config.seed, "classification/point", pi as u64),
                trial as u64,
            )?;
            let region = TailRegionSpec::quantile(config.norm, p.alpha);
            Ok(RiskTrialRecord {
                point: pi,
                n: p.n,
                alpha: p.alpha,
                trial,
                sup_deviation: sup_risk_deviation(&data, &family, &region, &truths[pi])?,
            })
        })
        .collect::<Result<_>>()?;
    let levels: Vec<RiskLevelSummary> = config
        .points
        .iter()
        .enumerate()
        .map(|(pi, p)| {
            let devs: Vec<f64> = trials.iter().filter(|r| r.point == pi).map(|r| r.sup_deviation).collect();
            RiskLevelSummary {
                n: p.n,
                alpha: p.alpha,
                n_alpha: p.effective(),
                trials: devs.len(),
                median: stats::median(&devs),
                upper_quantile: stats::quantile(&devs, 1.0 - config.delta),
                mean: stats::mean(&devs),
                std_error: stats::std_error(&devs),
                reference_error: truths[pi].iter().map(|t| t.std_error).fold(0.0, f64::max),
                flagged: p.effective() < 10.0,
            }
        })
        .collect();
    let usable: Vec<&RiskLevelSummary> = levels.iter().filter(|l| l.median > 0.0).collect();
    let slope = (usable.len() >= 2).then(|| {
        let xs: Vec<f64> = usable.iter().map(|l| l.n_alpha).collect();
        let ys: Vec<f64> = usable.iter().map(|l| l.median).collect();
        stats::fit_log_log(&xs, &ys)
    });
    Ok(ClassificationReport {
        config: config.clone(),
        trials,
        levels,
        slope,
        warnings,
    })
}
