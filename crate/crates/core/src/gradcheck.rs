//! Central finite-difference checks for hand-written gradients.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `max |analytic − numeric| / max(1, |analytic| + |numeric|)`.
    pub max_relative_error: f64,
    /// Parameter index attaining the maximum.
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares the analytic gradient of `f` at `params` with central
/// differences over every coordinate.
///
/// `f` returns the loss and its analytic gradient; only the loss is used at
/// the perturbed points.
pub fn grad_check<F>(f: F, params: &[f64], probe_eps: f64) -> Result<GradCheck>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let indices: Vec<usize> = (0..params.len()).collect();
    grad_check_indices(f, params, &indices, probe_eps)
}

/// As [`grad_check`], restricted to the given coordinates.
pub fn grad_check_indices<F>(
    mut f: F,
    params: &[f64],
    indices: &[usize],
    probe_eps: f64,
) -> Result<GradCheck>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    if !(1e-7..=1e-3).contains(&probe_eps) {
        return Err(Error::Precondition(alloc::format!(
            "probe epsilon {probe_eps} outside [1e-7, 1e-3]"
        )));
    }
    let (value, analytic) = f(params);
    if !value.is_finite() {
        return Err(Error::NumericFailure("gradient check probe point"));
    }
    if analytic.len() != params.len() {
        return Err(Error::shape(
            "grad_check",
            format_args!("{} gradient entries", params.len()),
            format_args!("{}", analytic.len()),
        ));
    }
    let mut probe = params.to_vec();
    let mut report = GradCheck {
        max_relative_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    for &i in indices {
        let orig = probe[i];
        probe[i] = orig + probe_eps;
        let plus = f(&probe).0;
        probe[i] = orig - probe_eps;
        let minus = f(&probe).0;
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NumericFailure("gradient check perturbation"));
        }
        let numeric = (plus - minus) / (2.0 * probe_eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1.0);
        if err > report.max_relative_error || report.checked == 0 {
            report.max_relative_error = err;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn linear_function() {
        let r = grad_check(|w| (3.0 * w[0], vec![3.0]), &[2.0], 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-10);
    }

    #[test]
    fn quadratic_and_sign_flip() {
        let f = |w: &[f64]| {
            let v = w.iter().map(|x| x * x).sum::<f64>();
            (v, w.iter().map(|x| 2.0 * x).collect())
        };
        let p = [0.5, -1.5, 2.0];
        assert!(grad_check(f, &p, 1e-5).unwrap().max_relative_error < 1e-8);
        let bad = |w: &[f64]| {
            let (v, g) = f(w);
            (v, g.into_iter().map(|x| -x).collect())
        };
        assert!(grad_check(bad, &p, 1e-5).unwrap().max_relative_error > 0.1);
    }

    #[test]
    fn non_finite_probe_fails() {
        let r = grad_check(|_| (f64::NAN, vec![0.0]), &[1.0], 1e-5);
        assert!(matches!(r, Err(Error::NumericFailure(_))));
        assert!(grad_check(|w| (w[0], vec![1.0]), &[1.0], 1e-1).is_err());
    }
}
