//! Adam optimizer.

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::Real;

/// Moment estimates and hyperparameters for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    /// Zeroed moments for `params` with `beta1 = 0.9, beta2 = 0.999, eps = 1e-8`.
    pub fn new(params: &ParamSet<T>, lr: T) -> Self {
        let zeros: Vec<Vec<T>> = params
            .tensors()
            .iter()
            .map(|t| vec![T::zero(); t.numel()])
            .collect();
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &[T] {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &[T] {
        &self.v[index]
    }
}

/// One bias-corrected Adam update of every parameter in `params`.
///
/// `grads[i]` is the gradient of parameter `i`. Nothing is modified when any
/// gradient is non-finite.
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &[Vec<T>],
    state: &mut AdamState<T>,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if g.len() != p.numel() {
            return Err(Error::shape(format!(
                "adam: gradient for `{name}` has {} elements, parameter has {}",
                g.len(),
                p.numel()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient {
                param: name.to_string(),
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let (lr, eps) = (state.lr, state.eps);
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(&grads[i]).zip(m).zip(v) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *x -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(value: f64) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(value)).unwrap();
        p
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = single(0.0);
        let mut s = AdamState::new(&p, 0.001);
        adam_step(&mut p, &[vec![1.0]], &mut s).unwrap();
        let expected = -0.001 * 1.0 / (1.0 + 1e-8);
        assert!((p.tensors()[0].data()[0] - expected).abs() < 1e-15);
        assert!((p.tensors()[0].data()[0] + 0.000999999).abs() < 1e-9);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = single(0.3);
        let mut s = AdamState::new(&p, 0.001);
        adam_step(&mut p, &[vec![0.0]], &mut s).unwrap();
        assert_eq!(p.tensors()[0].data(), &[0.3]);
        assert_eq!(s.first_moment(0), &[0.0]);
        assert_eq!(s.second_moment(0), &[0.0]);
    }

    #[test]
    fn two_steps_match_hand_recursion() {
        let (lr, b1, b2, eps, g) = (0.01_f64, 0.9_f64, 0.999_f64, 1e-8_f64, 0.5_f64);
        let mut p = single(1.0);
        let mut s = AdamState::new(&p, lr);
        adam_step(&mut p, &[vec![g]], &mut s).unwrap();
        adam_step(&mut p, &[vec![g]], &mut s).unwrap();

        let (mut x, mut m, mut v) = (1.0_f64, 0.0_f64, 0.0_f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t));
            let vhat = v / (1.0 - b2.powi(t));
            x -= lr * mhat / (vhat.sqrt() + eps);
        }
        assert!((p.tensors()[0].data()[0] - x).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = single(0.0);
        let mut s = AdamState::new(&p, 0.001);
        let err = adam_step(&mut p, &[vec![f64::NAN]], &mut s).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref param } if param == "w"));
        assert_eq!(s.step_count(), 0);
    }
}
