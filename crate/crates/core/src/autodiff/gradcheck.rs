//! Central finite-difference verification of analytic gradients.

use super::{Network, ParamStore, Tensor};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Anything exposing one or more parameter stores to perturb.
pub trait Parameterized {
    fn param_stores(&self) -> Vec<&ParamStore>;
    fn param_stores_mut(&mut self) -> Vec<&mut ParamStore>;
}

impl Parameterized for Network {
    fn param_stores(&self) -> Vec<&ParamStore> {
        vec![self.params()]
    }

    fn param_stores_mut(&mut self) -> Vec<&mut ParamStore> {
        vec![self.params_mut()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `analytic` gradients (one `Vec<Tensor>` per store, in store
/// order) against central differences of `loss`.
pub fn compare_with_finite_differences<M, F>(
    model: &mut M,
    analytic: &[Vec<Tensor>],
    mut loss: F,
    step: f64,
    tolerance: f64,
) -> GradCheckReport
where
    M: Parameterized + ?Sized,
    F: FnMut(&mut M) -> f64,
{
    let layout: Vec<Vec<(String, usize)>> = model
        .param_stores()
        .iter()
        .map(|s| s.entries().iter().map(|e| (e.name().to_string(), e.value().len())).collect())
        .collect();
    let mut max_rel_error: f64 = 0.0;
    let mut worst = None;
    let mut checked = 0;
    for (si, entries) in layout.iter().enumerate() {
        for (ei, (name, len)) in entries.iter().enumerate() {
            for k in 0..*len {
                let original = model.param_stores()[si].entry(ei).value().data()[k];
                set_value(model, si, ei, k, original + step);
                let plus = loss(model);
                set_value(model, si, ei, k, original - step);
                let minus = loss(model);
                set_value(model, si, ei, k, original);
                let numeric = (plus - minus) / (2.0 * step);
                let a = analytic[si][ei].data()[k];
                let err = relative_error(a, numeric);
                checked += 1;
                if !(err <= max_rel_error) {
                    max_rel_error = err;
                    worst = Some((name.clone(), k));
                }
            }
        }
    }
    GradCheckReport { max_rel_error, worst, checked, tolerance, passed: max_rel_error < tolerance }
}

fn set_value<M: Parameterized + ?Sized>(model: &mut M, si: usize, ei: usize, k: usize, v: f64) {
    model.param_stores_mut()[si].entry_mut(ei).value_mut().data_mut()[k] = v;
}

/// Checks a network's backward pass for `loss(output) -> (value, d value / d output)`
/// at `input`. Existing gradient slots are cleared.
pub fn grad_check<F>(net: &mut Network, input: &Tensor, loss: F, tolerance: f64) -> GradCheckReport
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    net.params_mut().zero_grad();
    let analytic = match net.forward(input, true) {
        Ok(out) => {
            let (_, g) = loss(&out);
            match net.backward(&g) {
                Ok(_) => net.params().gradients(),
                Err(_) => return failed_report(tolerance),
            }
        }
        Err(_) => return failed_report(tolerance),
    };
    net.params_mut().zero_grad();
    net.clear_tape();
    compare_with_finite_differences(
        net,
        &[analytic],
        |n| n.predict(input).map(|o| loss(&o).0).unwrap_or(f64::NAN),
        FD_STEP,
        tolerance,
    )
}

fn failed_report(tolerance: f64) -> GradCheckReport {
    GradCheckReport { max_rel_error: f64::INFINITY, worst: None, checked: 0, tolerance, passed: false }
}

/// `0.5·Σ (out - target)²` and its gradient.
pub fn squared_error_loss(target: &Tensor) -> impl Fn(&Tensor) -> (f64, Tensor) + '_ {
    move |out: &Tensor| {
        let diff: Vec<f64> = out.data().iter().zip(target.data()).map(|(o, t)| o - t).collect();
        let value = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
        (value, Tensor::new(out.shape().to_vec(), diff).expect("same shape"))
    }
}

/// `Σ w ⊙ out` for fixed random weights; exercises every output coordinate.
pub fn weighted_sum_loss(weights: &Tensor) -> impl Fn(&Tensor) -> (f64, Tensor) + '_ {
    move |out: &Tensor| {
        let value = out.data().iter().zip(weights.data()).map(|(o, w)| o * w).sum();
        (value, weights.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, GradFault, LayerSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_net_quadratic_loss_is_nearly_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Network::new(4, &[LayerSpec::new(3, Activation::Identity)], &mut rng).unwrap();
        let x = random_matrix(&mut rng, 5, 4);
        let target = random_matrix(&mut rng, 5, 3);
        let report = grad_check(&mut net, &x, squared_error_loss(&target), 1e-7);
        assert!(report.passed, "{report:?}");
        assert_eq!(report.checked, 15);
    }

    #[test]
    fn sigmoid_mlp_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Network::new(
            6,
            &[LayerSpec::new(5, Activation::Sigmoid), LayerSpec::new(4, Activation::Sigmoid)],
            &mut rng,
        )
        .unwrap();
        let x = random_matrix(&mut rng, 3, 6);
        let w = random_matrix(&mut rng, 3, 4);
        let report = grad_check(&mut net, &x, weighted_sum_loss(&w), 1e-4);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn every_activation_passes() {
        for act in Activation::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut net =
                Network::new(4, &[LayerSpec::new(5, Activation::Tanh), LayerSpec::new(3, act)], &mut rng).unwrap();
            let x = random_matrix(&mut rng, 4, 4);
            let w = random_matrix(&mut rng, 4, 3);
            let report = grad_check(&mut net, &x, weighted_sum_loss(&w), 1e-4);
            assert!(report.passed, "{}: {report:?}", act.name());
        }
    }

    #[test]
    fn corrupted_backward_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Network::new(3, &[LayerSpec::new(2, Activation::Sigmoid)], &mut rng).unwrap();
        net.set_fault(Some(GradFault::ScaleFirstWeightGrad(1.5)));
        let x = random_matrix(&mut rng, 2, 3);
        let w = random_matrix(&mut rng, 2, 2);
        let report = grad_check(&mut net, &x, weighted_sum_loss(&w), 1e-4);
        assert!(!report.passed);
        assert!(report.max_rel_error > 0.1);
        assert!(report.worst.unwrap().0.contains("weight"));
    }
}
