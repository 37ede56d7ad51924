use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Maximize: move along the gradient.
    Ascent,
    /// Minimize: move against the gradient.
    Descent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment estimates for each parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step_count: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { v: m.clone(), m, step_count: 0 }
    }
}

/// One bias-corrected Adam step applied in place.
pub fn adam_update<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
    direction: Direction,
    cfg: AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::arg(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[k].shape() {
            return Err(Error::arg(format!("parameter {k}: shape {:?} vs gradient {:?}", p.shape(), g.shape())));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let c1 = T::one() - T::of(cfg.beta1.powi(t));
    let c2 = T::one() - T::of(cfg.beta2.powi(t));
    let sign = match direction {
        Direction::Ascent => T::one(),
        Direction::Descent => -T::one(),
    };
    let step = sign * T::of(lr);
    let eps = T::of(cfg.epsilon);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (state.m[k].data_mut(), state.v[k].data_mut());
        for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *pi += step * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Vec<Tensor<f64>>, AdamState<f64>) {
        let p = vec![Tensor::vector(vec![1.0, -2.0, 0.5])];
        let s = AdamState::new(&p);
        (p, s)
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let (mut p, mut s) = setup();
        let before = p.clone();
        adam_update(&mut p, &[Tensor::zeros(&[3])], &mut s, 0.1, Direction::Descent, AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        let (mut p, mut s) = setup();
        let before = p[0].clone();
        let g = Tensor::vector(vec![0.5, 2.0, 0.03]);
        let lr = 0.028;
        adam_update(&mut p, &[g], &mut s, lr, Direction::Ascent, AdamConfig::default()).unwrap();
        for (a, b) in p[0].data().iter().zip(before.data()) {
            let step = a - b;
            assert!(step > 0.0);
            assert!((step / lr - 1.0).abs() < 1e-6, "{step}");
        }
    }

    #[test]
    fn zero_rate_leaves_params() {
        let (mut p, mut s) = setup();
        let before = p.clone();
        adam_update(&mut p, &[Tensor::full(&[3], 1.0)], &mut s, 0.0, Direction::Ascent, AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn shape_mismatch() {
        let (mut p, mut s) = setup();
        let r = adam_update(&mut p, &[Tensor::zeros(&[2])], &mut s, 0.1, Direction::Ascent, AdamConfig::default());
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn descends_a_quadratic() {
        let mut p = vec![Tensor::vector(vec![3.0f64])];
        let mut s = AdamState::new(&p);
        for _ in 0..2000 {
            let g = vec![p[0].map(|x| 2.0 * (x - 1.0))];
            adam_update(&mut p, &g, &mut s, 0.01, Direction::Descent, AdamConfig::default()).unwrap();
        }
        assert!((p[0].item() - 1.0).abs() < 1e-3);
        assert!(s.v[0].data().iter().all(|&v| v >= 0.0));
    }
}
