use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], t: 0 }
    }
}

/// One bias-corrected Adam update of `theta` in place. The step counter is
/// advanced before it is used, so the first update uses `t = 1`.
pub fn adam_step<T: Real>(theta: &mut [T], grad: &[T], state: &mut AdamState<T>, hyper: &AdamHyper) -> Result<()> {
    if theta.len() != grad.len() || theta.len() != state.m.len() || theta.len() != state.v.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} parameters, {} gradients, {} moments",
            theta.len(),
            grad.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let (b1, b2) = (T::of(hyper.beta1), T::of(hyper.beta2));
    let c1 = T::one() - T::of(hyper.beta1.powi(state.t.min(i32::MAX as u64) as i32));
    let c2 = T::one() - T::of(hyper.beta2.powi(state.t.min(i32::MAX as u64) as i32));
    let (lr, eps) = (T::of(hyper.lr), T::of(hyper.eps));
    for i in 0..theta.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over an ordered list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub hyper: AdamHyper,
    states: Vec<AdamState<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(hyper: AdamHyper, sizes: &[usize]) -> Self {
        Self { hyper, states: sizes.iter().map(|&n| AdamState::new(n)).collect() }
    }

    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, |s| s.t)
    }

    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam tracks {} tensors, got {} parameters and {} gradients",
                self.states.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.states) {
            adam_step(p, g, s, &self.hyper)?;
        }
        Ok(())
    }
}
