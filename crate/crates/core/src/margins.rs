//! Strictly increasing marginal transforms.
//!
//! A margin maps a uniform draw `v` in `[0, 1)` to an observation
//! `x = quantile(v)` and back through its distribution function
//! `cdf(x) = v`. Rank-based estimators never see the margin; it only
//! matters for standardization `U = 1 - F(X)` and for realism.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::parse_tag;

pub trait Margin: Send + Sync + fmt::Debug {
    fn tag(&self) -> MarginSpec;

    /// Inverse distribution function on `[0, 1)`; strictly increasing.
    fn quantile(&self, v: f64) -> f64;

    /// Distribution function; inverse of `quantile`.
    fn cdf(&self, x: f64) -> f64;

    /// Upper-tail probability `1 - cdf(x)`. Override when it can be computed
    /// without cancellation.
    fn survival(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }
}

pub type MarginRef = Arc<dyn Margin>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MarginSpec {
    pub name: String,
    pub param: Option<f64>,
}

impl MarginSpec {
    pub fn uniform() -> Self {
        MarginSpec {
            name: "uniform".into(),
            param: None,
        }
    }

    pub fn exponential() -> Self {
        MarginSpec {
            name: "exponential".into(),
            param: None,
        }
    }

    pub fn pareto(a: f64) -> Self {
        MarginSpec {
            name: "pareto".into(),
            param: Some(a),
        }
    }
}

impl FromStr for MarginSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = parse_tag(s)?;
        Ok(MarginSpec { name, param })
    }
}

impl TryFrom<String> for MarginSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MarginSpec> for String {
    fn from(spec: MarginSpec) -> String {
        spec.to_string()
    }
}

impl fmt::Display for MarginSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.param {
            Some(p) => write!(f, "{}({})", self.name, p),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Uniform;

impl Margin for Uniform {
    fn tag(&self) -> MarginSpec {
        MarginSpec::uniform()
    }

    fn quantile(&self, v: f64) -> f64 {
        v
    }

    fn cdf(&self, x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }
}

/// Unit exponential: `x = -ln(1 - v)`.
#[derive(Debug, Clone, Copy)]
pub struct Exponential;

impl Margin for Exponential {
    fn tag(&self) -> MarginSpec {
        MarginSpec::exponential()
    }

    fn quantile(&self, v: f64) -> f64 {
        -(-v).ln_1p()
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-x).exp_m1()
        }
    }

    fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            (-x).exp()
        }
    }
}

/// Pareto with unit scale and tail index `a > 0`: `x = (1 - v)^(-1/a)`.
#[derive(Debug, Clone, Copy)]
pub struct Pareto {
    a: f64,
}

impl Pareto {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::config(format!(
                "pareto tail index must be positive and finite (got {a}); the transform would not be increasing"
            )));
        }
        Ok(Pareto { a })
    }
}

impl Margin for Pareto {
    fn tag(&self) -> MarginSpec {
        MarginSpec::pareto(self.a)
    }

    fn quantile(&self, v: f64) -> f64 {
        (1.0 - v).powf(-1.0 / self.a)
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 1.0 {
            0.0
        } else {
            1.0 - x.powf(-self.a)
        }
    }

    fn survival(&self, x: f64) -> f64 {
        if x <= 1.0 {
            1.0
        } else {
            x.powf(-self.a)
        }
    }
}

/// User-supplied monotone transform. Construction probes the pair of
/// functions on a grid and refuses anything that is not strictly increasing.
#[derive(Clone)]
pub struct CustomMargin {
    name: String,
    quantile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    cdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomMargin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMargin").field("name", &self.name).finish()
    }
}

const PROBE_POINTS: usize = 1024;

impl CustomMargin {
    pub fn new(
        name: &str,
        quantile: impl Fn(f64) -> f64 + Send + Sync + 'static,
        cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..PROBE_POINTS {
            let v = (i as f64 + 0.5) / PROBE_POINTS as f64;
            let x = quantile(v);
            if !x.is_finite() || x <= prev {
                return Err(Error::config(format!(
                    "custom margin `{name}` is not strictly increasing near v = {v}"
                )));
            }
            prev = x;
        }
        Ok(CustomMargin {
            name: name.to_string(),
            quantile: Arc::new(quantile),
            cdf: Arc::new(cdf),
        })
    }
}

impl Margin for CustomMargin {
    fn tag(&self) -> MarginSpec {
        MarginSpec {
            name: self.name.clone(),
            param: None,
        }
    }

    fn quantile(&self, v: f64) -> f64 {
        (self.quantile)(v)
    }

    fn cdf(&self, x: f64) -> f64 {
        (self.cdf)(x)
    }
}

pub type MarginFactory = Arc<dyn Fn(Option<f64>) -> Result<MarginRef> + Send + Sync>;

#[derive(Clone)]
pub struct MarginRegistry {
    factories: BTreeMap<String, MarginFactory>,
}

impl Default for MarginRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl MarginRegistry {
    pub fn builtin() -> Self {
        let mut reg = MarginRegistry {
            factories: BTreeMap::new(),
        };
        reg.register("uniform", |p| {
            no_param("uniform", p)?;
            Ok(Arc::new(Uniform) as MarginRef)
        });
        reg.register("exponential", |p| {
            no_param("exponential", p)?;
            Ok(Arc::new(Exponential) as MarginRef)
        });
        reg.register("pareto", |p| {
            let a = p.ok_or_else(|| Error::config("pareto margin needs a tail index, e.g. pareto(2)"))?;
            Ok(Arc::new(Pareto::new(a)?) as MarginRef)
        });
        reg
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(Option<f64>) -> Result<MarginRef> + Send + Sync + 'static,
    ) {
        self.factories
            .insert(name.to_ascii_lowercase(), Arc::new(factory));
    }

    /// Registers a fixed custom margin under its own name.
    pub fn register_custom(&mut self, margin: CustomMargin) {
        let name = margin.name.clone();
        let margin: MarginRef = Arc::new(margin);
        self.register(&name, move |_| Ok(margin.clone()));
    }

    pub fn build(&self, spec: &MarginSpec) -> Result<MarginRef> {
        let factory = self.factories.get(&spec.name).ok_or_else(|| {
            let known: Vec<&str> = self.factories.keys().map(String::as_str).collect();
            Error::config(format!(
                "unknown margin `{}` (known: {})",
                spec.name,
                known.join(", ")
            ))
        })?;
        factory(spec.param)
    }

    /// Resolves one spec per coordinate; a single spec is broadcast to all `d`.
    pub fn build_all(&self, specs: &[MarginSpec], d: usize) -> Result<Vec<MarginRef>> {
        match specs.len() {
            0 => Ok(vec![Arc::new(Uniform) as MarginRef; d]),
            1 => {
                let m = self.build(&specs[0])?;
                Ok(vec![m; d])
            }
            len if len == d => specs.iter().map(|s| self.build(s)).collect(),
            len => Err(Error::config(format!(
                "{len} margins given for dimension {d}; give one or exactly d"
            ))),
        }
    }
}

fn no_param(name: &str, p: Option<f64>) -> Result<()> {
    match p {
        None => Ok(()),
        Some(v) => Err(Error::config(format!("margin `{name}` takes no parameter (got {v})"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_and_cdf_invert() {
        let margins: Vec<MarginRef> = vec![
            Arc::new(Uniform),
            Arc::new(Exponential),
            Arc::new(Pareto::new(2.0).unwrap()),
        ];
        for m in &margins {
            for v in [0.0, 0.1, 0.5, 0.9, 0.999] {
                let back = m.cdf(m.quantile(v));
                assert!((back - v).abs() < 1e-12, "{:?} at {v}: {back}", m.tag());
            }
        }
    }

    #[test]
    fn bad_margins_are_configuration_errors() {
        let reg = MarginRegistry::builtin();
        assert!(matches!(reg.build(&"pareto(-1)".parse().unwrap()), Err(Error::Config(_))));
        assert!(matches!(reg.build(&"pareto".parse().unwrap()), Err(Error::Config(_))));
        assert!(matches!(reg.build(&"lognormal".parse().unwrap()), Err(Error::Config(_))));
        assert!(CustomMargin::new("flip", |v| -v, |x| -x).is_err());
        assert!(reg.build_all(&[MarginSpec::uniform(), MarginSpec::uniform()], 3).is_err());
    }

    #[test]
    fn custom_margins_register_by_name() {
        let mut reg = MarginRegistry::builtin();
        reg.register_custom(CustomMargin::new("cube", |v| v * v * v, |x| x.cbrt()).unwrap());
        let m = reg.build(&"cube".parse().unwrap()).unwrap();
        assert_eq!(m.quantile(0.5), 0.125);
    }
}
