//! Checked evaluation of the closed-form tail dependence functions.

use crate::error::{Error, Result};
use crate::model::DependenceModel;

fn check_point(model: &dyn DependenceModel, x: &[f64]) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::domain(format!(
            "point has {} coordinates, model `{}` has dimension {}",
            x.len(),
            model.tag(),
            model.dim()
        )));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::domain(format!("l is defined on [0, inf)^d (got coordinate {v})")));
    }
    Ok(())
}

/// `l(x)`.
pub fn eval_stdf(model: &dyn DependenceModel, x: &[f64]) -> Result<f64> {
    check_point(model, x)?;
    Ok(model.stdf(x))
}

/// `t^{-1} P(U^1 <= t x_1 or ... or U^d <= t x_d)` under the model's exact law.
pub fn pre_limit_tail(model: &dyn DependenceModel, t: f64, x: &[f64]) -> Result<f64> {
    check_point(model, x)?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain(format!("level t must lie in (0, 1] (got {t})")));
    }
    if let Some(v) = x.iter().find(|v| t * **v > 1.0) {
        return Err(Error::domain(format!("t * x_j must not exceed 1 (t = {t}, x_j = {v})")));
    }
    Ok(model.pre_limit_tail(t, x))
}

/// `|pre_limit_tail(t, x) - l(x)|`.
pub fn bias_term(model: &dyn DependenceModel, t: f64, x: &[f64]) -> Result<f64> {
    let pre = pre_limit_tail(model, t, x)?;
    Ok((pre - model.stdf(x)).abs())
}

/// Largest bias over a regular grid of `[0, upper]^d` with `points` nodes per axis.
pub fn sup_bias(model: &dyn DependenceModel, t: f64, upper: f64, points: usize) -> Result<f64> {
    let d = model.dim();
    if points < 2 {
        return Err(Error::config("bias grid needs at least two points per axis"));
    }
    if t * upper > 1.0 {
        return Err(Error::domain(format!(
            "bias region [0, {upper}]^d at level t = {t} leaves the unit cube"
        )));
    }
    let step = upper / (points - 1) as f64;
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut best = 0.0f64;
    loop {
        for (xj, ij) in x.iter_mut().zip(&idx) {
            *xj = *ij as f64 * step;
        }
        best = best.max(bias_term(model, t, &x)?);
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(best);
            }
            idx[axis] += 1;
            if idx[axis] < points {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Comonotone, Independence, Logistic};

    #[test]
    fn closed_form_values() {
        let lg1 = Logistic::new(3, 1.0).unwrap();
        let x = [0.2, 1.5, 0.7];
        assert!((eval_stdf(&lg1, &x).unwrap() - 2.4).abs() < 1e-12);
        let lg2 = Logistic::new(2, 2.0).unwrap();
        assert!((eval_stdf(&lg2, &[1.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let co = Comonotone::new(3).unwrap();
        assert_eq!(eval_stdf(&co, &[0.3, 0.7, 0.2]).unwrap(), 0.7);
        assert!(eval_stdf(&co, &[0.3, -0.7, 0.2]).unwrap_err().is_precondition());
    }

    #[test]
    fn pre_limit_values() {
        let co = Comonotone::new(2).unwrap();
        for t in [0.5, 0.1, 1e-4] {
            assert_eq!(pre_limit_tail(&co, t, &[1.0, 2.0]).unwrap(), 2.0);
            assert_eq!(bias_term(&co, t, &[1.0, 2.0]).unwrap(), 0.0);
        }
        let ind = Independence::new(2).unwrap();
        assert!((pre_limit_tail(&ind, 0.5, &[1.0, 1.0]).unwrap() - 1.5).abs() < 1e-15);
        assert!((bias_term(&ind, 0.5, &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        // bias is t * x1 * x2 for d = 2
        assert!((bias_term(&ind, 1e-3, &[1.0, 1.0]).unwrap() - 1e-3).abs() < 1e-12);
        assert!(bias_term(&ind, 1e-3, &[1.0, 1.0]).unwrap() <= 1e-3 + 1e-15);
        assert!(pre_limit_tail(&ind, 0.5, &[3.0, 1.0]).unwrap_err().is_precondition());
        assert!(pre_limit_tail(&ind, 0.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn logistic_pre_limit_close_to_limit() {
        let lg = Logistic::new(2, 2.0).unwrap();
        let v = pre_limit_tail(&lg, 0.01, &[1.0, 1.0]).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-2, "{v}");
    }

    #[test]
    fn sup_bias_on_grid() {
        let ind = Independence::new(2).unwrap();
        // sup over [0,2]^2 of t x1 x2 at t = 0.01 is reached at the corner: 0.04 up to O(t^2)
        let b = sup_bias(&ind, 0.01, 2.0, 21).unwrap();
        assert!((b - 0.04).abs() < 1e-3, "{b}");
        assert_eq!(sup_bias(&Comonotone::new(2).unwrap(), 0.01, 2.0, 11).unwrap(), 0.0);
    }
}
