//! Central-difference gradient oracle.
//!
//! Independent of the tape: it only evaluates the function at perturbed
//! points and compares against whatever analytic gradient the caller hands
//! back.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::nn::ParameterStore;

/// Floor on the denominator of the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(Error::Config(format!(
            "finite-difference epsilon {epsilon} outside [1e-7, 1e-4]"
        )));
    }
    Ok(())
}

/// Max over coordinates of `|analytic − central| / max(|analytic|, |central|, 1e-8)`.
///
/// `f` returns the scalar value and its analytic gradient at a point.
pub fn finite_difference_check<F>(f: F, point: &Tensor, epsilon: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    check_epsilon(epsilon)?;
    let (_, analytic) = f(point)?;
    if analytic.shape() != point.shape() {
        return Err(Error::shape(
            "finite_difference_check",
            format!("gradient {:?} vs point {:?}", analytic.shape(), point.shape()),
        ));
    }
    analytic.ensure_finite("finite_difference_check")?;
    let mut probe = point.clone();
    let mut worst: f64 = 0.0;
    for k in 0..point.len() {
        let x = point.data()[k];
        probe.data_mut()[k] = x + epsilon;
        let (plus, _) = f(&probe)?;
        probe.data_mut()[k] = x - epsilon;
        let (minus, _) = f(&probe)?;
        probe.data_mut()[k] = x;
        let numeric = (plus - minus) / (2.0 * epsilon);
        if !numeric.is_finite() {
            return Err(Error::numeric("finite_difference_check", "non-finite difference"));
        }
        worst = worst.max(relative_error(analytic.data()[k], numeric));
    }
    Ok(worst)
}

/// Per-parameter outcome of [`check_parameters`].
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_relative_error: f64,
    pub coordinates: usize,
}

/// Runs the central-difference oracle over every coordinate of the named
/// parameters of `store`. `f` evaluates the loss and its parameter gradients.
pub fn check_parameters<F>(
    store: &ParameterStore,
    names: &[String],
    epsilon: f64,
    f: F,
) -> Result<Vec<ParamCheck>>
where
    F: Fn(&ParameterStore) -> Result<(f64, BTreeMap<String, Tensor>)>,
{
    check_epsilon(epsilon)?;
    let (_, analytic) = f(store)?;
    let mut probe = store.clone();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let base = store
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))?
            .clone();
        let grad = analytic.get(name).cloned().unwrap_or_else(|| base.zeros_like());
        grad.ensure_finite("check_parameters")?;
        let mut worst: f64 = 0.0;
        for k in 0..base.len() {
            let x = base.data()[k];
            probe.get_mut(name).unwrap().data_mut()[k] = x + epsilon;
            let (plus, _) = f(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[k] = x - epsilon;
            let (minus, _) = f(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[k] = x;
            let numeric = (plus - minus) / (2.0 * epsilon);
            if !numeric.is_finite() {
                return Err(Error::numeric("check_parameters", "non-finite difference"));
            }
            worst = worst.max(relative_error(grad.data()[k], numeric));
        }
        out.push(ParamCheck {
            name: name.clone(),
            max_relative_error: worst,
            coordinates: base.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_of_squares(t: &Tensor) -> Result<(f64, Tensor)> {
        let v = t.data().iter().map(|x| x * x).sum();
        let g = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| 2.0 * x).collect())?;
        Ok((v, g))
    }

    #[test]
    fn quadratic_is_exact() {
        let p = Tensor::matrix(2, 3, vec![0.5, -1.5, 2.0, 3.0, -0.25, 1.0]).unwrap();
        let err = finite_difference_check(sum_of_squares, &p, 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let p = Tensor::row(vec![0.5, -1.5, 2.0]);
        let err = finite_difference_check(
            |t| {
                let (v, g) = sum_of_squares(t)?;
                let flipped = g.data().iter().map(|x| -x).collect();
                Ok((v, Tensor::new(g.shape().to_vec(), flipped)?))
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err > 1e-2);
    }

    #[test]
    fn epsilon_range_enforced() {
        let p = Tensor::row(vec![1.0]);
        assert!(finite_difference_check(sum_of_squares, &p, 1e-2).is_err());
        assert!(finite_difference_check(sum_of_squares, &p, 1e-9).is_err());
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let p = Tensor::row(vec![1.0]);
        let err = finite_difference_check(|_| Ok((1.0, Tensor::row(vec![f64::NAN]))), &p, 1e-5)
            .unwrap_err();
        assert!(matches!(err, Error::NumericDomain { .. }));
    }
}
