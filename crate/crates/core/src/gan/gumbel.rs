use rand::Rng;

use crate::autodiff::{softmax_tensor, Graph, Var};
use crate::error::{contract, Result};
use crate::tensor::Tensor;

const CLAMP: f64 = 1e-12;

/// `-ln(-ln u)` for a uniform `u` kept inside `[1e-12, 1 - 1e-12]`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(CLAMP, 1.0 - CLAMP);
    -(-u.ln()).ln()
}

pub fn gumbel_noise(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| gumbel_from_uniform(rng.random())).collect()
}

/// A relaxed one-hot sample: `softmax((logits + g) / tau)`.
pub fn gumbel_softmax(logits: &[f64], tau: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(contract(format!("temperature must be positive, got {tau}")));
    }
    let g = gumbel_noise(logits.len(), rng);
    let z: Vec<f64> = logits.iter().zip(&g).map(|(l, g)| (l + g) / tau).collect();
    Ok(softmax_tensor(&Tensor::vector(z), 0).into_data())
}

/// Row-wise one-hot of the argmax in the forward pass, with the gradient of
/// the soft sample `relaxed` in the backward pass.
pub fn straight_through(g: &mut Graph, relaxed: Var) -> Result<Var> {
    let soft = g.value(relaxed);
    let mut shift = Tensor::zeros(soft.shape());
    let cols = soft.cols();
    for r in 0..soft.rows() {
        let row = soft.row(r);
        let k = argmax(row);
        for (c, &v) in row.iter().enumerate() {
            shift.data_mut()[r * cols + c] = if c == k { 1.0 - v } else { -v };
        }
    }
    let shift = g.constant(shift);
    g.add(relaxed, shift)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn straight_through_is_hard_forward_soft_backward() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_rows(&[vec![0.2, 1.0, -0.5], vec![2.0, 0.0, 0.1]]).unwrap());
        let soft = g.softmax(x, 1).unwrap();
        let hard = straight_through(&mut g, soft).unwrap();
        assert_eq!(g.value(hard).data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let w = g.constant(Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 2.0]]).unwrap());
        let a = g.mul(hard, w).unwrap();
        let la = g.sum(a, None).unwrap();
        let b = g.mul(soft, w).unwrap();
        let lb = g.sum(b, None).unwrap();
        let ga = g.backward(la).unwrap().wrt(x);
        let gb = g.backward(lb).unwrap().wrt(x);
        assert_eq!(ga, gb);
    }

    #[test]
    fn inverse_e_maps_to_zero() {
        let u = (-1.0f64).exp();
        assert!(gumbel_from_uniform(u).abs() < 1e-15);
    }

    #[test]
    fn clamped_extremes_are_finite() {
        for u in [0.0, 1.0, -3.0, 2.0, 1e-300] {
            assert!(gumbel_from_uniform(u).is_finite());
        }
    }

    #[test]
    fn mean_is_euler_mascheroni() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mean = gumbel_noise(n, &mut rng).iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5772).abs() < 0.01, "{mean}");
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gumbel_softmax(&[0.0, 1.0], 0.0, &mut rng).is_err());
        assert!(gumbel_softmax(&[0.0, 1.0], -1.0, &mut rng).is_err());
    }

    #[test]
    fn low_temperature_is_nearly_one_hot() {
        let logits = [0.3, -1.2, 2.0, 0.0];
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let y = gumbel_softmax(&logits, 1e-3, &mut a).unwrap();
        let g = gumbel_noise(4, &mut b);
        let perturbed: Vec<f64> = logits.iter().zip(&g).map(|(l, g)| l + g).collect();
        let k = argmax(&perturbed);
        assert!(y[k] > 0.999, "{y:?}");
    }

    #[test]
    fn uniform_logits_give_uniform_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut counts = [0usize; 4];
        let n = 40_000;
        for _ in 0..n {
            counts[argmax(&gumbel_softmax(&[0.5; 4], 1.0, &mut rng).unwrap())] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.02, "{counts:?}");
        }
    }
}
