//! Finite-difference checks of the analytic gradients.

use ndarray::{Array1, Array2, Array4, ArrayView4};
use rand::seq::index;

use super::net::{SmallNet, Widths, PARAMETER_NAMES};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Fraction of checked parameters that must be within tolerance.
    pub required_pass_fraction: f64,
    /// Parameters sampled per tensor; `None` checks every parameter.
    pub samples_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-4, tolerance: 1e-3, required_pass_fraction: 0.99, samples_per_tensor: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstParameter {
    pub parameter: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub within_tolerance: usize,
    pub max_rel_error: f64,
    pub worst: Option<WorstParameter>,
    /// Checked parameters of each tensor, with their largest error.
    pub per_tensor: Vec<(String, usize, f64)>,
}

/// `|a − n| / max(|a|, |n|, 1e-6)`; the floor keeps gradients that are
/// both numerically zero from counting as failures.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compare the analytic gradient of the cross-entropy for one sample with
/// central differences. Fails with the worst parameter when fewer than the
/// required fraction agree.
pub fn gradient_check(
    net: &SmallNet<f64>,
    x: ArrayView4<f64>,
    label: usize,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let labels = [label];
    let (_, grad, _) = net.loss_and_grad(x, &labels)?;
    let analytic = grad.tensors().map(|t| t.to_vec());
    let mut probe = net.clone();
    let mut report =
        GradCheckReport { checked: 0, within_tolerance: 0, max_rel_error: 0.0, worst: None, per_tensor: vec![] };
    for (t, name) in PARAMETER_NAMES.iter().enumerate() {
        let len = analytic[t].len();
        let indices: Vec<usize> = match opts.samples_per_tensor {
            Some(k) if k < len => {
                let mut r = rng::rng_from(opts.seed, &[rng::tag("gradcheck"), t as u64]);
                let mut v = index::sample(&mut r, len, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        };
        let mut tensor_max = 0.0f64;
        for &i in &indices {
            let original = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = original + opts.step;
            let plus = probe.loss(x, &labels)?;
            probe.tensors_mut()[t][i] = original - opts.step;
            let minus = probe.loss(x, &labels)?;
            probe.tensors_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[t][i];
            if !a.is_finite() || !numeric.is_finite() {
                return Err(Error::GradientCheck {
                    parameter: format!("{name}[{i}]"),
                    analytic: a,
                    numeric,
                    rel_error: f64::INFINITY,
                });
            }
            let rel = relative_error(a, numeric);
            report.checked += 1;
            report.within_tolerance += usize::from(rel <= opts.tolerance);
            tensor_max = tensor_max.max(rel);
            if report.worst.as_ref().is_none_or(|w| rel > w.rel_error) {
                report.worst =
                    Some(WorstParameter { parameter: format!("{name}[{i}]"), analytic: a, numeric, rel_error: rel });
            }
        }
        report.max_rel_error = report.max_rel_error.max(tensor_max);
        report.per_tensor.push((name.to_string(), indices.len(), tensor_max));
    }
    let fraction = report.within_tolerance as f64 / report.checked.max(1) as f64;
    if fraction < opts.required_pass_fraction {
        let w = report.worst.clone().expect("at least one parameter checked");
        return Err(Error::GradientCheck {
            parameter: w.parameter,
            analytic: w.analytic,
            numeric: w.numeric,
            rel_error: w.rel_error,
        });
    }
    Ok(report)
}

/// Widths of the reduced instance used for exhaustive checks (under 10⁴
/// parameters on 8×8 input).
pub const CHECK_WIDTHS: Widths = Widths { conv1: 4, conv2: 8, hidden: 16 };

/// Check every parameter of a seeded 8×8 reduced SmallNet on a fixed
/// input, or on an all-zero input.
pub fn reference_check(seed: u64, zero_input: bool) -> Result<GradCheckReport> {
    let net = SmallNet::<f64>::new(8, 3, CHECK_WIDTHS, seed)?;
    let x = if zero_input {
        Array4::zeros((1, 8, 8, 1))
    } else {
        Array4::from_shape_fn((1, 8, 8, 1), |(_, y, x, _)| ((y * 8 + x) as f64 * 0.37).sin().abs())
    };
    gradient_check(&net, x.view(), 1, &GradCheckOptions { seed, ..Default::default() })
}

/// `y = W x + b` with loss `½‖y − t‖²`: the analytic reference case.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearNet {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl LinearNet {
    pub fn loss(&self, x: &Array1<f64>, target: &Array1<f64>) -> f64 {
        let r = self.w.dot(x) + &self.b - target;
        0.5 * r.dot(&r)
    }

    pub fn gradients(&self, x: &Array1<f64>, target: &Array1<f64>) -> (Array2<f64>, Array1<f64>) {
        let r = self.w.dot(x) + &self.b - target;
        let gw = Array2::from_shape_fn(self.w.dim(), |(i, j)| r[i] * x[j]);
        (gw, r)
    }

    /// Largest relative error over every weight and bias.
    pub fn gradient_check(&self, x: &Array1<f64>, target: &Array1<f64>, step: f64) -> f64 {
        let (gw, gb) = self.gradients(x, target);
        let mut probe = self.clone();
        let mut worst = 0.0f64;
        for idx in 0..self.w.len() {
            let (i, j) = (idx / self.w.ncols(), idx % self.w.ncols());
            let orig = probe.w[[i, j]];
            probe.w[[i, j]] = orig + step;
            let plus = probe.loss(x, target);
            probe.w[[i, j]] = orig - step;
            let minus = probe.loss(x, target);
            probe.w[[i, j]] = orig;
            worst = worst.max(relative_error(gw[[i, j]], (plus - minus) / (2.0 * step)));
        }
        for i in 0..self.b.len() {
            let orig = probe.b[i];
            probe.b[i] = orig + step;
            let plus = probe.loss(x, target);
            probe.b[i] = orig - step;
            let minus = probe.loss(x, target);
            probe.b[i] = orig;
            worst = worst.max(relative_error(gb[i], (plus - minus) / (2.0 * step)));
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};

    fn check_instance() -> SmallNet<f64> {
        SmallNet::new(8, 3, CHECK_WIDTHS, 11).unwrap()
    }

    fn sample_input() -> Array4<f64> {
        Array::from_shape_fn((1, 8, 8, 1), |(_, y, x, _)| ((y * 8 + x) as f64 * 0.37).sin().abs())
    }

    #[test]
    fn linear_quadratic_case_is_exact() {
        let net = LinearNet { w: array![[0.5, -1.0, 2.0], [0.25, 0.0, -0.75]], b: array![0.1, -0.2] };
        let err = net.gradient_check(&array![1.0, 2.0, -0.5], &array![0.3, 0.7], 1e-4);
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn small_instance_every_parameter() {
        let net = check_instance();
        assert!(net.parameter_count() <= 10_000);
        let report = gradient_check(&net, sample_input().view(), 1, &GradCheckOptions::default()).unwrap();
        assert_eq!(report.checked, net.parameter_count());
        assert!(report.within_tolerance as f64 >= 0.99 * report.checked as f64);
    }

    #[test]
    fn zero_input_checks_first_conv_bias() {
        let net = check_instance();
        let x = Array4::<f64>::zeros((1, 8, 8, 1));
        let report = gradient_check(&net, x.view(), 0, &GradCheckOptions::default()).unwrap();
        let (name, n, err) = &report.per_tensor[1];
        assert_eq!(name, "conv1.b");
        assert_eq!(*n, 4);
        assert!(err.is_finite() && *err <= 1e-3, "{err}");
    }

    #[test]
    fn wrong_gradients_are_reported() {
        let net = check_instance();
        let opts = GradCheckOptions { step: 1e-1, tolerance: 1e-12, ..Default::default() };
        let err = gradient_check(&net, sample_input().view(), 1, &opts).unwrap_err();
        assert!(err.to_string().contains("gradient check"), "{err}");
    }
}
