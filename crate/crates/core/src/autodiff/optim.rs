use crate::error::{contract, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> AdamState {
        let zeros: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if !(cfg.lr > 0.0) {
        return Err(contract(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(contract(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first_moment[i].shape() {
            return Err(contract(format!(
                "adam: parameter {i} shape {:?} vs gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut().zip(state.second_moment.iter_mut()))
    {
        let pd = p.data_mut();
        for (j, &gj) in g.data().iter().enumerate() {
            let mj = &mut m.data_mut()[j];
            *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
            let mhat = *mj / bc1;
            let vj = &mut v.data_mut()[j];
            *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
            let vhat = *vj / bc2;
            pd[j] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::vector(vec![1.0, -2.0]);
        let mut st = AdamState::new([&p]);
        let g = Tensor::zeros(&[2]);
        adam_step(&mut [&mut p], &[g], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = Tensor::vector(vec![0.0, 0.0, 0.0]);
        let mut st = AdamState::new([&p]);
        let g = Tensor::vector(vec![3.0, -0.01, 250.0]);
        let cfg = AdamConfig::with_lr(0.1);
        adam_step(&mut [&mut p], &[g], &mut st, &cfg).unwrap();
        let want = [-0.1, 0.1, -0.1];
        for (a, b) in p.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn converges_on_squared_norm() {
        let mut x = Tensor::vector(vec![5.0, -5.0]);
        let mut st = AdamState::new([&x]);
        let cfg = AdamConfig::with_lr(0.1);
        for _ in 0..200 {
            let g = x.map(|v| 2.0 * v);
            adam_step(&mut [&mut x], &[g], &mut st, &cfg).unwrap();
        }
        assert!(x.sq_norm().sqrt() < 0.1, "{:?}", x.data());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = Tensor::vector(vec![0.0, 0.0]);
        let mut st = AdamState::new([&p]);
        let g = Tensor::zeros(&[3]);
        let err = adam_step(&mut [&mut p], &[g], &mut st, &AdamConfig::default());
        assert!(err.is_err());
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![Tensor::vector(vec![3.0, 4.0]), Tensor::vector(vec![12.0])];
        let before = clip_global_norm(&mut g, 5.0);
        assert!((before - 13.0).abs() < 1e-12);
        let after: f64 = g.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
        assert!((after - 5.0).abs() < 1e-12);
    }
}
