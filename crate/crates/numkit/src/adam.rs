use crate::params::{flatten, unflatten, Parameters};
use crate::{check_len, NumError, Result};

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_params<P: Parameters + ?Sized>(p: &P, lr: f64) -> Self {
        Self::new(crate::num_params(p), lr)
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_len("adam params", self.m.len(), params.len())?;
        check_len("adam grads", self.m.len(), grads.len())?;
        if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NumError::NonFinite(format!(
                "gradient entry {k} is {} at adam step {}",
                grads[k],
                self.step + 1
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[k] / c1;
            let vhat = self.v[k] / c2;
            params[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }

    /// Apply one update to a structured parameter set using a gradient
    /// buffer of the same shape.
    pub fn apply<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let mut flat = flatten(params);
        self.step(&mut flat, &flatten(grads))?;
        unflatten(params, &flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 3.5];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [0.3, -7.0, 1e-3] {
            let mut adam = AdamState::new(1, 0.01);
            let mut p = vec![0.0];
            adam.step(&mut p, &[g]).unwrap();
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-12);
            assert!((p[0] + 0.01 * g.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn opposite_gradients_partially_cancel() {
        let mut adam = AdamState::new(1, 0.01);
        let mut p = vec![0.0];
        adam.step(&mut p, &[2.0]).unwrap();
        adam.step(&mut p, &[-2.0]).unwrap();
        // step 2: m = 0.9*0.2 - 0.2 = -0.02, mhat = -0.02/0.19; vhat = 4 -> update +0.01*0.0526
        let second = 0.01 * (0.02 / 0.19) / (2.0 + 1e-8);
        assert!((p[0] - (-0.01 + second)).abs() < 1e-9);
        assert!(p[0].abs() < 0.01);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut adam = AdamState::new(2, 0.01);
        let mut p = vec![0.0, 0.0];
        let err = adam.step(&mut p, &[1.0, f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("entry 1"));
        assert_eq!(p, vec![0.0, 0.0]);
        assert_eq!(adam.step, 0);
    }
}
