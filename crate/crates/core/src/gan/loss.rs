use crate::autodiff::{Graph, Var};
use crate::error::Result;

/// `log(1 + e^z)`, evaluated without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Discriminator loss `-log σ(c_real - c_fake)`.
pub fn rsgan_d_loss(c_real: f64, c_fake: f64) -> f64 {
    softplus(c_fake - c_real)
}

/// Generator loss `-log σ(c_fake - c_real)`.
pub fn rsgan_g_loss(c_real: f64, c_fake: f64) -> f64 {
    softplus(c_real - c_fake)
}

/// Batch mean of [`rsgan_d_loss`] over paired `[batch, 1]` critic scores.
pub fn rsgan_d_loss_node(g: &mut Graph, c_real: Var, c_fake: Var) -> Result<Var> {
    let diff = g.sub(c_fake, c_real)?;
    let sp = g.softplus(diff)?;
    g.mean(sp, None)
}

/// Batch mean of [`rsgan_g_loss`] over paired `[batch, 1]` critic scores.
pub fn rsgan_g_loss_node(g: &mut Graph, c_real: Var, c_fake: Var) -> Result<Var> {
    let diff = g.sub(c_real, c_fake)?;
    let sp = g.softplus(diff)?;
    g.mean(sp, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use std::f64::consts::LN_2;

    #[test]
    fn equal_scores_give_ln_two() {
        for c in [-3.0, 0.0, 0.7, 1e6] {
            assert!((rsgan_d_loss(c, c) - LN_2).abs() < 1e-12);
            assert!((rsgan_g_loss(c, c) - LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn large_margin_asymptotes() {
        assert!(rsgan_d_loss(20.0, 0.0) < 3e-9);
        assert!((rsgan_g_loss(20.0, 0.0) - 20.0).abs() < 3e-9);
        assert!(rsgan_g_loss(1e5, -1e5).is_finite());
    }

    #[test]
    fn generator_loss_is_swapped_discriminator_loss() {
        for (a, b) in [(0.3, -1.1), (12.0, 4.5), (-7.25, 2.0)] {
            assert_eq!(rsgan_g_loss(a, b), rsgan_d_loss(b, a));
        }
    }

    #[test]
    fn node_form_matches_scalar_form() {
        let mut g = Graph::new();
        let r = g.constant(Tensor::new(vec![2, 1], vec![1.5, -2.0]).unwrap());
        let f = g.constant(Tensor::new(vec![2, 1], vec![0.5, 3.0]).unwrap());
        let d = rsgan_d_loss_node(&mut g, r, f).unwrap();
        let gl = rsgan_g_loss_node(&mut g, r, f).unwrap();
        let want_d = (rsgan_d_loss(1.5, 0.5) + rsgan_d_loss(-2.0, 3.0)) / 2.0;
        let want_g = (rsgan_g_loss(1.5, 0.5) + rsgan_g_loss(-2.0, 3.0)) / 2.0;
        assert!((g.value(d).item() - want_d).abs() < 1e-12);
        assert!((g.value(gl).item() - want_g).abs() < 1e-12);
    }
}
