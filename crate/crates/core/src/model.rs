//! Dependence models with a closed-form stable tail dependence function.
//!
//! Each model is a [`DependenceModel`] trait object. Models are looked up by
//! name in a [`ModelRegistry`], so configuration files and the command line
//! can select them with a tag such as `comonotone` or `logistic(2.5)`.
//!
//! All models work on the copula scale: [`DependenceModel::sample_row`]
//! returns a vector `V` with uniform margins, large values being extreme.
//! The standardized variables are `U = 1 - V`, and
//! [`DependenceModel::tail_mass`] is `P(U^1 <= s_1 or ... or U^d <= s_d)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::Open01;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multivariate law with uniform margins and a known tail dependence function.
pub trait DependenceModel: Send + Sync + fmt::Debug {
    /// Registry name of the family.
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    /// Tag that rebuilds this model through the registry.
    fn tag(&self) -> ModelSpec;

    /// The limit `l(x)`; `x` is componentwise non-negative and has `dim()` entries.
    fn stdf(&self, x: &[f64]) -> f64;

    /// `P(exists j: U^j <= s_j)` for `s` in `[0, 1]^d`.
    fn tail_mass(&self, s: &[f64]) -> f64;

    /// `t^{-1} * tail_mass(t x)`, the pre-limit version of `l` at level `t`.
    fn pre_limit_tail(&self, t: f64, x: &[f64]) -> f64 {
        let scaled: Vec<f64> = x.iter().map(|v| (t * v).min(1.0)).collect();
        self.tail_mass(&scaled) / t
    }

    /// Draws one vector with uniform margins into `row`.
    fn sample_row(&self, rng: &mut dyn RngCore, row: &mut [f64]);
}

pub type Model = Arc<dyn DependenceModel>;

/// Textual model tag: a registry name plus an optional numeric parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelSpec {
    pub name: String,
    pub param: Option<f64>,
}

impl ModelSpec {
    pub fn new(name: &str) -> Self {
        ModelSpec {
            name: name.to_string(),
            param: None,
        }
    }

    pub fn with_param(name: &str, param: f64) -> Self {
        ModelSpec {
            name: name.to_string(),
            param: Some(param),
        }
    }

    pub fn independence() -> Self {
        Self::new("independence")
    }

    pub fn comonotone() -> Self {
        Self::new("comonotone")
    }

    pub fn logistic(theta: f64) -> Self {
        Self::with_param("logistic", theta)
    }
}

/// Splits `name(param)` into its parts; shared by model and margin tags.
pub(crate) fn parse_tag(raw: &str) -> Result<(String, Option<f64>)> {
    let s = raw.trim();
    match s.find('(') {
        None => {
            if s.is_empty() {
                return Err(Error::config("empty tag"));
            }
            Ok((s.to_ascii_lowercase(), None))
        }
        Some(open) => {
            if !s.ends_with(')') {
                return Err(Error::config(format!("malformed tag `{raw}`")));
            }
            let name = s[..open].trim().to_ascii_lowercase();
            let inner = s[open + 1..s.len() - 1].trim();
            let value: f64 = inner
                .parse()
                .map_err(|_| Error::config(format!("tag `{raw}`: `{inner}` is not a number")))?;
            Ok((name, Some(value)))
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = parse_tag(s)?;
        Ok(ModelSpec { name, param })
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(spec: ModelSpec) -> String {
        spec.to_string()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.param {
            Some(p) => write!(f, "{}({})", self.name, p),
            None => f.write_str(&self.name),
        }
    }
}

pub type ModelFactory = fn(Option<f64>, usize) -> Result<Model>;

/// Name -> constructor table for dependence models.
#[derive(Clone)]
pub struct ModelRegistry {
    factories: BTreeMap<String, ModelFactory>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// Registry holding `independence`, `comonotone` and `logistic`.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("independence", |param, d| {
            no_param("independence", param)?;
            Ok(Arc::new(Independence::new(d)?) as Model)
        });
        reg.register("comonotone", |param, d| {
            no_param("comonotone", param)?;
            Ok(Arc::new(Comonotone::new(d)?) as Model)
        });
        reg.register("logistic", |param, d| {
            let theta =
                param.ok_or_else(|| Error::config("logistic model needs a parameter, e.g. logistic(2)"))?;
            Ok(Arc::new(Logistic::new(d, theta)?) as Model)
        });
        reg
    }

    pub fn register(&mut self, name: &str, factory: ModelFactory) {
        self.factories.insert(name.to_ascii_lowercase(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, spec: &ModelSpec, d: usize) -> Result<Model> {
        let factory = self.factories.get(&spec.name).ok_or_else(|| {
            let known: Vec<&str> = self.names().collect();
            Error::config(format!(
                "unknown model `{}` (known: {})",
                spec.name,
                known.join(", ")
            ))
        })?;
        factory(spec.param, d)
    }
}

fn no_param(name: &str, param: Option<f64>) -> Result<()> {
    match param {
        None => Ok(()),
        Some(p) => Err(Error::config(format!("model `{name}` takes no parameter (got {p})"))),
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::config("dimension d must be at least 1"));
    }
    Ok(())
}

/// Mutually independent coordinates: `l(x) = x_1 + ... + x_d`.
#[derive(Debug, Clone)]
pub struct Independence {
    d: usize,
}

impl Independence {
    pub fn new(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Independence { d })
    }
}

impl DependenceModel for Independence {
    fn name(&self) -> &'static str {
        "independence"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn tag(&self) -> ModelSpec {
        ModelSpec::independence()
    }

    fn stdf(&self, x: &[f64]) -> f64 {
        x.iter().sum()
    }

    fn tail_mass(&self, s: &[f64]) -> f64 {
        // 1 - prod(1 - s_j), kept accurate for small s
        let log_all_above: f64 = s.iter().map(|v| (-v.min(1.0)).ln_1p()).sum();
        -log_all_above.exp_m1()
    }

    fn sample_row(&self, rng: &mut dyn RngCore, row: &mut [f64]) {
        for v in row.iter_mut() {
            *v = rng.random::<f64>();
        }
    }
}

/// One uniform copied to every coordinate: `l(x) = max_j x_j`.
#[derive(Debug, Clone)]
pub struct Comonotone {
    d: usize,
}

impl Comonotone {
    pub fn new(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Comonotone { d })
    }
}

impl DependenceModel for Comonotone {
    fn name(&self) -> &'static str {
        "comonotone"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn tag(&self) -> ModelSpec {
        ModelSpec::comonotone()
    }

    fn stdf(&self, x: &[f64]) -> f64 {
        x.iter().copied().fold(0.0, f64::max)
    }

    fn tail_mass(&self, s: &[f64]) -> f64 {
        s.iter().copied().fold(0.0, f64::max).min(1.0)
    }

    // exact for every t with t * max(x) <= 1
    fn pre_limit_tail(&self, _t: f64, x: &[f64]) -> f64 {
        self.stdf(x)
    }

    fn sample_row(&self, rng: &mut dyn RngCore, row: &mut [f64]) {
        let u = rng.random::<f64>();
        row.fill(u);
    }
}

/// Gumbel copula with parameter `theta >= 1`: `l(x) = (sum_j x_j^theta)^(1/theta)`.
///
/// Sampling uses the Marshall-Olkin frailty construction: a positive stable
/// variable `S` with Laplace transform `exp(-s^(1/theta))` (Kanter's
/// representation) and iid unit exponentials `E_j` give
/// `V_j = exp(-(E_j / S)^(1/theta))`.
#[derive(Debug, Clone)]
pub struct Logistic {
    d: usize,
    theta: f64,
}

impl Logistic {
    pub fn new(d: usize, theta: f64) -> Result<Self> {
        check_dim(d)?;
        if !(theta >= 1.0) || !theta.is_finite() {
            return Err(Error::config(format!(
                "logistic parameter must satisfy theta >= 1 (got {theta})"
            )));
        }
        Ok(Logistic { d, theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `(sum_j a_j^theta)^(1/theta)`, scaled by the largest entry to avoid overflow.
    fn power_norm(&self, a: impl Iterator<Item = f64> + Clone) -> f64 {
        let max = a.clone().fold(0.0, f64::max);
        if max == 0.0 || max.is_infinite() {
            return max;
        }
        let sum: f64 = a.map(|v| (v / max).powf(self.theta)).sum();
        max * sum.powf(1.0 / self.theta)
    }

    fn positive_stable(&self, rng: &mut dyn RngCore) -> f64 {
        let alpha = 1.0 / self.theta;
        if alpha == 1.0 {
            return 1.0;
        }
        let w = PI * rng.sample::<f64, _>(Open01);
        let e = -rng.sample::<f64, _>(Open01).ln();
        let left = (alpha * w).sin() / w.sin().powf(1.0 / alpha);
        let right = (((1.0 - alpha) * w).sin() / e).powf((1.0 - alpha) / alpha);
        left * right
    }
}

impl DependenceModel for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn tag(&self) -> ModelSpec {
        ModelSpec::logistic(self.theta)
    }

    fn stdf(&self, x: &[f64]) -> f64 {
        self.power_norm(x.iter().copied())
    }

    fn tail_mass(&self, s: &[f64]) -> f64 {
        // 1 - C(1 - s) with C(u) = exp(-(sum (-ln u_j)^theta)^(1/theta))
        let a = self.power_norm(s.iter().map(|v| -(-v.min(1.0)).ln_1p()));
        -(-a).exp_m1()
    }

    fn sample_row(&self, rng: &mut dyn RngCore, row: &mut [f64]) {
        let s = self.positive_stable(rng);
        let inv_theta = 1.0 / self.theta;
        for v in row.iter_mut() {
            let e = -rng.sample::<f64, _>(Open01).ln();
            *v = (-(e / s).powf(inv_theta)).exp();
        }
    }
}
