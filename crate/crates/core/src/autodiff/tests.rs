use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::Tensor;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Compares backward against central differences for a scalar function of
/// one tensor input.
fn grad_error(x: &Tensor, build: impl Fn(&mut Graph, Var) -> Var) -> f64 {
    let mut g = Graph::new();
    let v = g.param(x.clone());
    let loss = build(&mut g, v);
    let analytic = g.backward(loss).unwrap().wrt(v);
    let numeric = finite_diff_grad(
        |t| {
            let mut g = Graph::new();
            let v = g.constant(t.clone());
            let loss = build(&mut g, v);
            g.value(loss).item()
        },
        x,
        1e-5,
    )
    .unwrap();
    max_relative_error(&analytic, &numeric, 1e-7)
}

/// A fixed random weighting so every output entry matters to the loss.
fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(g.shape(y), &mut rng);
    let w = g.constant(w);
    let p = g.mul(y, w).unwrap();
    g.sum(p, None).unwrap()
}

#[test]
fn matmul_identity_and_hand_case() {
    let mut g = Graph::new();
    let i = g.constant(Tensor::identity(2));
    let b = g.constant(Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap());
    let r = g.matmul(i, b).unwrap();
    assert_eq!(g.value(r).data(), &[3.0, 4.0, 5.0, 6.0]);

    let a = g.constant(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
    let c = g.constant(Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap());
    let r = g.matmul(a, c).unwrap();
    assert_eq!(g.value(r).data(), &[11.0]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    let err = g.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("[2, 3] vs [2, 3]"), "{err}");
}

#[test]
fn matmul_gradient_both_sides() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[3, 3], &mut rng);
    let b = random(&[3, 3], &mut rng);
    let bb = b.clone();
    let err = grad_error(&a, move |g, v| {
        let c = g.constant(bb.clone());
        let m = g.matmul(v, c).unwrap();
        g.sum(m, None).unwrap()
    });
    assert!(err < 1e-4, "{err}");
    let err = grad_error(&b, move |g, v| {
        let c = g.constant(a.clone());
        let m = g.matmul(c, v).unwrap();
        weighted_sum(g, m, 9)
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn softmax_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![0.0, 0.0]));
    let s = g.softmax(x, 0).unwrap();
    assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    let x = g.constant(Tensor::vector(vec![1000.0, 0.0]));
    let s = g.softmax(x, 0).unwrap();
    let v = g.value(s).data();
    assert!(v.iter().all(|p| p.is_finite()));
    assert!((v[0] - 1.0).abs() < 1e-12 && v[1] < 1e-300);
}

#[test]
fn softmax_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[5], &mut rng);
    let err = grad_error(&x, |g, v| {
        let s = g.softmax(v, 0).unwrap();
        weighted_sum(g, s, 3)
    });
    assert!(err < 1e-4, "{err}");
    let x = random(&[3, 4], &mut rng);
    for axis in 0..2 {
        let err = grad_error(&x, |g, v| {
            let s = g.softmax(v, axis).unwrap();
            weighted_sum(g, s, 4)
        });
        assert!(err < 1e-4, "axis {axis}: {err}");
    }
}

#[test]
fn every_primitive_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[3, 4], &mut rng);
    let positive = x.map(|v| v.abs() + 0.5);
    let other = random(&[3, 4], &mut rng);
    let row = random(&[1, 4], &mut rng);

    type Build = Box<dyn Fn(&mut Graph, Var) -> Var>;
    let o1 = other.clone();
    let o2 = other.clone();
    let r1 = row.clone();
    let cases: Vec<(&str, Tensor, Build)> = vec![
        (
            "add",
            x.clone(),
            Box::new(move |g, v| {
                let c = g.constant(o1.clone());
                let y = g.add(v, c).unwrap();
                weighted_sum(g, y, 10)
            }),
        ),
        (
            "add-broadcast",
            x.clone(),
            Box::new(move |g, v| {
                let c = g.constant(r1.clone());
                let y = g.add(v, c).unwrap();
                weighted_sum(g, y, 11)
            }),
        ),
        (
            "add-broadcast-rhs",
            row.clone(),
            Box::new(move |g, v| {
                let c = g.constant(o2.clone());
                let y = g.add(c, v).unwrap();
                weighted_sum(g, y, 12)
            }),
        ),
        (
            "mul",
            x.clone(),
            Box::new(move |g, v| {
                let c = g.constant(other.clone());
                let y = g.mul(v, c).unwrap();
                weighted_sum(g, y, 13)
            }),
        ),
        (
            "concat",
            x.clone(),
            Box::new(|g, v| {
                let y = g.concat(&[v, v], 1).unwrap();
                weighted_sum(g, y, 14)
            }),
        ),
        (
            "slice",
            x.clone(),
            Box::new(|g, v| {
                let y = g.slice(v, 1, 1, 2).unwrap();
                weighted_sum(g, y, 15)
            }),
        ),
        (
            "sigmoid",
            x.clone(),
            Box::new(|g, v| {
                let y = g.sigmoid(v);
                weighted_sum(g, y, 16)
            }),
        ),
        (
            "tanh",
            x.clone(),
            Box::new(|g, v| {
                let y = g.tanh(v);
                weighted_sum(g, y, 17)
            }),
        ),
        (
            "log",
            positive,
            Box::new(|g, v| {
                let y = g.log(v);
                weighted_sum(g, y, 18)
            }),
        ),
        (
            "exp",
            x.clone(),
            Box::new(|g, v| {
                let y = g.exp(v);
                weighted_sum(g, y, 19)
            }),
        ),
        (
            "mean",
            x.clone(),
            Box::new(|g, v| {
                let y = g.mean(v, Some(0)).unwrap();
                weighted_sum(g, y, 20)
            }),
        ),
        (
            "sum-axis",
            x.clone(),
            Box::new(|g, v| {
                let y = g.sum(v, Some(1)).unwrap();
                weighted_sum(g, y, 21)
            }),
        ),
        (
            "gather",
            x.clone(),
            Box::new(|g, v| {
                let y = g.gather(v, &[2, 0, 2]).unwrap();
                weighted_sum(g, y, 22)
            }),
        ),
        (
            "softplus",
            x.map(|v| 5.0 * v),
            Box::new(|g, v| {
                let y = g.softplus(v).unwrap();
                weighted_sum(g, y, 23)
            }),
        ),
    ];
    for (name, input, build) in cases {
        let err = grad_error(&input, build);
        assert!(err < 1e-4, "{name}: {err}");
    }
}

#[test]
fn backward_examples() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let s = g.sum(x, None).unwrap();
    assert_eq!(g.backward(s).unwrap().wrt(x).data(), &[1.0, 1.0, 1.0]);

    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq, None).unwrap();
    assert_eq!(g.backward(s).unwrap().wrt(x).data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0]));
    assert!(g.backward(x).is_err());
}

#[test]
fn untouched_parameters_get_zero_gradient() {
    let mut g = Graph::new();
    let used = g.param(Tensor::vector(vec![1.0, 2.0]));
    let unused = g.param(Tensor::zeros(&[2, 2]));
    let s = g.sum(used, None).unwrap();
    let grads = g.backward(s).unwrap().params();
    assert_eq!(grads.len(), 2);
    assert_eq!(grads[&unused.id()], Tensor::zeros(&[2, 2]));
}

fn two_layer(g: &mut Graph, params: &[Var], x: Var) -> Var {
    let h = g.matmul(x, params[0]).unwrap();
    let h = g.add(h, params[1]).unwrap();
    let h = g.tanh(h);
    let y = g.matmul(h, params[2]).unwrap();
    let y = g.add(y, params[3]).unwrap();
    let y = g.tanh(y);
    let sq = g.square(y).unwrap();
    g.mean(sq, None).unwrap()
}

#[test]
fn two_layer_tanh_network_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let input = random(&[4, 3], &mut rng);
    let params = [
        random(&[3, 5], &mut rng),
        random(&[1, 5], &mut rng),
        random(&[5, 2], &mut rng),
        random(&[1, 2], &mut rng),
    ];
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let x = g.constant(input.clone());
    let loss = two_layer(&mut g, &vars, x);
    let grads = g.backward(loss).unwrap();

    for k in 0..params.len() {
        let numeric = finite_diff_grad(
            |t| {
                let mut g = Graph::new();
                let vars: Vec<Var> = params
                    .iter()
                    .enumerate()
                    .map(|(j, p)| g.constant(if j == k { t.clone() } else { p.clone() }))
                    .collect();
                let x = g.constant(input.clone());
                let loss = two_layer(&mut g, &vars, x);
                g.value(loss).item()
            },
            &params[k],
            1e-5,
        )
        .unwrap();
        let err = max_relative_error(&grads.wrt(vars[k]), &numeric, 1e-7);
        assert!(err < 1e-4, "param {k}: {err}");
    }
}

#[test]
fn reused_input_accumulates() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[2, 2], &mut rng);
    let err = grad_error(&x, |g, v| {
        let a = g.matmul(v, v).unwrap();
        let b = g.mul(a, v).unwrap();
        let c = g.tanh(v);
        let d = g.add(b, c).unwrap();
        weighted_sum(g, d, 6)
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random(&[3, 3], &mut rng);
        let mut g = Graph::new();
        let v = g.param(x);
        let s = g.softmax(v, 1).unwrap();
        let l = g.log(s);
        let loss = weighted_sum(&mut g, l, 7);
        (g.value(loss).clone(), g.backward(loss).unwrap().wrt(v))
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert_eq!(a.data()[0].to_bits(), b.data()[0].to_bits());
    assert!(ga.data().iter().zip(gb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn softplus_is_stable_at_extremes() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::vector(vec![-800.0, 0.0, 800.0]));
    let s = g.softplus(z).unwrap();
    let v = g.value(s).data();
    assert!(v[0] >= 0.0 && v[0] < 1e-300);
    assert!((v[1] - std::f64::consts::LN_2).abs() < 1e-15);
    assert_eq!(v[2], 800.0);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_slices_sum_to_one(vals in prop::collection::vec(-15.0f64..15.0, 2..24)) {
            let n = vals.len();
            let x = Tensor::vector(vals);
            let s = softmax_tensor(&x, 0);
            prop_assert!((s.sum() - 1.0).abs() < 1e-9);
            prop_assert!(s.data().iter().all(|&p| p > 0.0 && p < 1.0 || n == 1));
        }

        #[test]
        fn tanh_sigmoid_gradients(vals in prop::collection::vec(-3.0f64..3.0, 1..8)) {
            let x = Tensor::vector(vals);
            let e1 = grad_error(&x, |g, v| { let y = g.tanh(v); weighted_sum(g, y, 30) });
            let e2 = grad_error(&x, |g, v| { let y = g.sigmoid(v); weighted_sum(g, y, 31) });
            prop_assert!(e1 < 1e-4 && e2 < 1e-4);
        }
    }
}
