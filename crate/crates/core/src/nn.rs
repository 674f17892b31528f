//! Dense and LSTM layers expressed on the autodiff graph.

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// A set of trainable tensors with a fixed enumeration order.
pub trait Module {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

pub(crate) fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape from caller")
}

/// `y = x W + b`, `W: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    weight: Var,
    bias: Option<Var>,
}

impl Linear {
    pub fn new(input: usize, output: usize, bias: bool, rng: &mut impl Rng) -> Linear {
        let bound = 1.0 / (input as f64).sqrt();
        Linear {
            weight: uniform(&[input, output], bound, rng),
            bias: bias.then(|| uniform(&[1, output], bound, rng)),
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn bind(&self, g: &mut Graph, vars: &mut Vec<Var>) -> BoundLinear {
        let weight = g.param(self.weight.clone());
        vars.push(weight);
        let bias = self.bias.as_ref().map(|b| {
            let v = g.param(b.clone());
            vars.push(v);
            v
        });
        BoundLinear { weight, bias }
    }
}

impl Module for Linear {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.weight];
        v.extend(self.bias.as_ref());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.weight];
        v.extend(self.bias.as_mut());
        v
    }
}

impl BoundLinear {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let y = g.matmul(x, self.weight)?;
        match self.bias {
            Some(b) => g.add(y, b),
            None => Ok(y),
        }
    }
}

/// One LSTM layer; gates packed as `[input, forget, cell, output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w_input: Tensor,
    pub w_hidden: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLstm {
    w_input: Var,
    w_hidden: Var,
    bias: Var,
    hidden: usize,
}

/// Hidden and cell state, `[batch, hidden]` each.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Lstm {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut bias = uniform(&[1, 4 * hidden], bound, rng);
        // forget gate starts open
        for v in &mut bias.data_mut()[hidden..2 * hidden] {
            *v += 1.0;
        }
        Lstm {
            w_input: uniform(&[input, 4 * hidden], bound, rng),
            w_hidden: uniform(&[hidden, 4 * hidden], bound, rng),
            bias,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.rows()
    }

    pub fn bind(&self, g: &mut Graph, vars: &mut Vec<Var>) -> BoundLstm {
        let w_input = g.param(self.w_input.clone());
        let w_hidden = g.param(self.w_hidden.clone());
        let bias = g.param(self.bias.clone());
        vars.extend([w_input, w_hidden, bias]);
        BoundLstm {
            w_input,
            w_hidden,
            bias,
            hidden: self.hidden(),
        }
    }
}

impl Module for Lstm {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w_input, &self.w_hidden, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}

impl BoundLstm {
    pub fn zero_state(&self, g: &mut Graph, batch: usize) -> LstmState {
        let h = g.constant(Tensor::zeros(&[batch, self.hidden]));
        let c = g.constant(Tensor::zeros(&[batch, self.hidden]));
        LstmState { h, c }
    }

    pub fn step(&self, g: &mut Graph, x: Var, state: LstmState) -> Result<LstmState> {
        let n = self.hidden;
        let zx = g.matmul(x, self.w_input)?;
        let zh = g.matmul(state.h, self.w_hidden)?;
        let z = g.add(zx, zh)?;
        let z = g.add(z, self.bias)?;
        let i = g.slice(z, 1, 0, n)?;
        let i = g.sigmoid(i);
        let f = g.slice(z, 1, n, n)?;
        let f = g.sigmoid(f);
        let cand = g.slice(z, 1, 2 * n, n)?;
        let cand = g.tanh(cand);
        let o = g.slice(z, 1, 3 * n, n)?;
        let o = g.sigmoid(o);
        let keep = g.mul(f, state.c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok(LstmState { h, c })
    }
}
