use super::{AutodiffError, ParamStore};

/// Adam with bias-corrected moments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    ///
    /// A non-finite gradient anywhere rejects the whole step before any
    /// weight is touched.
    pub fn step(&self, store: &mut ParamStore) -> Result<(), AutodiffError> {
        if let Some(bad) = store.entries().iter().find(|e| !e.grad().is_finite()) {
            return Err(AutodiffError::NonFiniteGradient(bad.name().to_string()));
        }
        store.steps += 1;
        let t = store.steps as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        for entry in store.entries_mut() {
            let grad = entry.grad.data().to_vec();
            let values = entry.value.data_mut();
            for (i, g) in grad.into_iter().enumerate() {
                let m = &mut entry.first_moment[i];
                let v = &mut entry.second_moment[i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        store.zero_grad();
        Ok(())
    }
}
