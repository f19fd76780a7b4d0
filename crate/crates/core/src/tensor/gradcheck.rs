//! Central finite-difference gradient checking.
//!
//! Intended for `f64` graphs: with a step of `1e-5` the truncation error is
//! around `1e-10` while 32-bit rounding would swamp the difference quotient.

use super::Tensor;

/// Comparison of analytic gradients against central differences.
#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// `(tensor index, element index, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        if other.max_rel_err > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
            if other.worst.is_some() && other.max_rel_err >= self.max_rel_err {
                self.worst = other.worst;
            }
        }
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
///
/// The floor keeps entries whose true gradient is zero from dividing
/// rounding noise by zero.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences `(f(x + h) - f(x - h)) / 2h` for every element of
/// every input tensor.
pub fn central_difference<F>(mut f: F, inputs: &[Tensor<f64>], step: f64) -> Vec<Vec<f64>>
where
    F: FnMut(&[Tensor<f64>]) -> f64,
{
    let mut point = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let mut grads = Vec::with_capacity(inputs[t].len());
        for e in 0..inputs[t].len() {
            let orig = inputs[t].data()[e];
            point[t].data_mut()[e] = orig + step;
            let plus = f(&point);
            point[t].data_mut()[e] = orig - step;
            let minus = f(&point);
            point[t].data_mut()[e] = orig;
            grads.push((plus - minus) / (2.0 * step));
        }
        out.push(grads);
    }
    out
}

pub fn compare(analytic: &[Vec<f64>], numeric: &[Vec<f64>], floor: f64) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient tensor counts differ");
    let mut report = GradCheckReport::default();
    for (t, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        assert_eq!(a.len(), n.len(), "gradient lengths differ for tensor {t}");
        for (e, (&av, &nv)) in a.iter().zip(n).enumerate() {
            let rel = relative_error(av, nv, floor);
            report.checked += 1;
            report.max_abs_err = report.max_abs_err.max((av - nv).abs());
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(rel);
                report.worst = Some((t, e, av, nv));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_matches_analytic() {
        let x = Tensor::<f64>::from_f64(&[3], &[1.0, -2.0, 0.5]).unwrap();
        let num = central_difference(|p| p[0].data().iter().map(|v| v * v * v).sum(), &[x.clone()], 1e-5);
        let ana: Vec<f64> = x.data().iter().map(|v| 3.0 * v * v).collect();
        let report = compare(&[ana], &num, 1e-8);
        assert_eq!(report.checked, 3);
        assert!(report.passed(1e-8), "{report:?}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let x = Tensor::<f64>::from_f64(&[2], &[1.0, 2.0]).unwrap();
        let num = central_difference(|p| p[0].data().iter().map(|v| v * v).sum(), &[x], 1e-5);
        let report = compare(&[vec![2.0, 4.4]], &num, 1e-8);
        assert!(!report.passed(1e-4));
        assert_eq!(report.worst.unwrap().1, 1);
    }
}
