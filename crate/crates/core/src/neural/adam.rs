use super::mlp::{Mlp, MlpGrads};
use crate::error::{Error, Result};

/// Adaptive-moment optimizer with bias correction. Moments are kept flat,
/// in the parameter order of the network it was created for.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    pub fn for_mlp(net: &Mlp, lr: f64) -> Self {
        Self::new(net.num_params(), lr)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Descends along `grads`. Rejects non-finite gradients without touching
    /// the parameters.
    pub fn step_mlp(&mut self, net: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        if self.m.len() != net.num_params() {
            return Err(Error::LengthMismatch { expected: self.m.len(), found: net.num_params() });
        }
        self.step += 1;
        let (c1, c2) = self.corrections();
        let mut offset = 0;
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let (m, v) = (&mut self.m, &mut self.v);
        net.for_each_param_mut(grads, |params, g| {
            for i in 0..params.len() {
                let j = offset + i;
                m[j] = b1 * m[j] + (1.0 - b1) * g[i];
                v[j] = b2 * v[j] + (1.0 - b2) * g[i] * g[i];
                params[i] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            }
            offset += params.len();
        });
        Ok(())
    }

    /// Same update on a plain parameter slice.
    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch { expected: self.m.len(), found: params.len() });
        }
        self.step += 1;
        let (c1, c2) = self.corrections();
        for j in 0..params.len() {
            self.m[j] = self.beta1 * self.m[j] + (1.0 - self.beta1) * grads[j];
            self.v[j] = self.beta2 * self.v[j] + (1.0 - self.beta2) * grads[j] * grads[j];
            params[j] -= self.lr * (self.m[j] / c1) / ((self.v[j] / c2).sqrt() + self.eps);
        }
        Ok(())
    }

    fn corrections(&self) -> (f64, f64) {
        let t = self.step as i32;
        (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut adam = Adam::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step_slice(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr_against_the_sign() {
        // after bias correction m/c1 = g and v/c2 = g^2, so the step is
        // lr * g / (|g| + eps)
        let mut adam = Adam::new(3, 1e-2);
        let mut p = vec![0.0; 3];
        let g = [3.0, -0.001, 250.0];
        adam.step_slice(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expected = -1e-2 * gi / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-12, "{pi} vs {expected}");
        }
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut adam = Adam::new(1, 1e-3);
        let mut p = [5.0];
        let mut last = p[0];
        for _ in 0..500 {
            adam.step_slice(&mut p, &[0.7]).unwrap();
            assert!(p[0] < last);
            last = p[0];
        }
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut adam = Adam::new(2, 1e-3);
        let mut p = vec![1.0, 1.0];
        assert!(matches!(adam.step_slice(&mut p, &[f64::NAN, 0.0]), Err(Error::NonFinite(_))));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(adam.steps(), 0);
    }
}
