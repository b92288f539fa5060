use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of comparing an analytic gradient to central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Worst relative error per named parameter group.
    pub per_param_errors: Vec<(String, f64)>,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks `analytic_grad(point)` against `(f(x + h e_i) - f(x - h e_i)) / 2h`
/// for every coordinate, reporting one entry per coordinate.
pub fn finite_diff_check<F, G>(f: F, analytic_grad: G, point: &[f64], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let names: Vec<String> = (0..point.len()).map(|i| format!("x[{i}]")).collect();
    let groups: Vec<(&str, usize)> = names.iter().map(|n| (n.as_str(), 1)).collect();
    finite_diff_check_grouped(f, analytic_grad, point, &groups, h, tol)
}

/// Like [`finite_diff_check`], but coordinates are partitioned into consecutive
/// named groups `(name, len)` and the report keeps the worst error per group.
pub fn finite_diff_check_grouped<F, G>(
    f: F,
    analytic_grad: G,
    point: &[f64],
    groups: &[(&str, usize)],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::param(format!("step h must be positive, got {h}")));
    }
    let total: usize = groups.iter().map(|g| g.1).sum();
    if total != point.len() {
        return Err(Error::shape(format!("groups cover {total} coordinates, point has {}", point.len())));
    }
    let analytic = analytic_grad(point);
    if analytic.len() != point.len() {
        return Err(Error::shape(format!(
            "analytic gradient has length {}, point has {}",
            analytic.len(),
            point.len()
        )));
    }

    let mut x = point.to_vec();
    let mut per_param_errors = Vec::with_capacity(groups.len());
    let mut max_rel_error = 0.0f64;
    let mut i = 0;
    for &(name, len) in groups {
        let mut worst = 0.0f64;
        for _ in 0..len {
            let orig = x[i];
            x[i] = orig + h;
            let plus = f(&x);
            x[i] = orig - h;
            let minus = f(&x);
            x[i] = orig;
            for v in [plus, minus] {
                if !v.is_finite() {
                    return Err(Error::Evaluation { coordinate: i, value: v });
                }
            }
            let numeric = (plus - minus) / (2.0 * h);
            let err = if analytic[i].is_finite() { relative_error(analytic[i], numeric) } else { f64::INFINITY };
            worst = worst.max(err);
            i += 1;
        }
        max_rel_error = max_rel_error.max(worst);
        per_param_errors.push((name.to_string(), worst));
    }

    Ok(GradCheckReport { max_rel_error, per_param_errors, tolerance: tol, passed: max_rel_error < tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{softmax_temp, softmax_temp_vjp};

    fn sq_norm(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn quadratic_passes() {
        let r = finite_diff_check(sq_norm, |x| x.iter().map(|v| 2.0 * v).collect(), &[1.0, 2.0], 1e-5, 1e-7).unwrap();
        assert!(r.passed);
        assert!(r.max_rel_error < 1e-7);
        assert_eq!(r.per_param_errors.len(), 2);
        assert_eq!(r.per_param_errors[1].0, "x[1]");
    }

    #[test]
    fn softmax_component_passes() {
        let point = [0.3, -0.8, 1.1, 0.05];
        let f = |x: &[f64]| softmax_temp(x, 1.0).unwrap()[0];
        let g = |x: &[f64]| {
            let p = softmax_temp(x, 1.0).unwrap();
            let mut up = vec![0.0; x.len()];
            up[0] = 1.0;
            softmax_temp_vjp(&p, 1.0, &up)
        };
        let r = finite_diff_check(f, g, &point, 1e-5, 1e-5).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn doubled_gradient_fails() {
        let r = finite_diff_check(sq_norm, |x| x.iter().map(|v| 4.0 * v).collect(), &[1.0, 2.0], 1e-5, 1e-4).unwrap();
        assert!(!r.passed);
        assert!((r.max_rel_error - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_evaluation_names_coordinate() {
        let f = |x: &[f64]| if x[1] > 2.0 { f64::NAN } else { x[0] };
        let err = finite_diff_check(f, |_| vec![1.0, 0.0], &[0.0, 2.0], 1e-5, 1e-4).unwrap_err();
        assert!(matches!(err, Error::Evaluation { coordinate: 1, .. }));
    }

    #[test]
    fn grouped_report_keeps_worst_per_group() {
        let r = finite_diff_check_grouped(
            sq_norm,
            |x| vec![2.0 * x[0], 2.0 * x[1], 3.0 * x[2]],
            &[1.0, 1.0, 1.0],
            &[("a", 2), ("b", 1)],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert_eq!(r.per_param_errors[0].0, "a");
        assert!(r.per_param_errors[0].1 < 1e-8);
        assert!(r.per_param_errors[1].1 > 0.1);
        assert!(!r.passed);
    }

    #[test]
    fn rejects_bad_step() {
        assert!(finite_diff_check(sq_norm, |x| x.to_vec(), &[1.0], 0.0, 1e-4).is_err());
    }
}
