//! One-hidden-layer tanh perceptron with hand-written backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GridError, Result};

/// Dense `input -> hidden (tanh) -> output` network.
///
/// Weights are row-major: `w1[j * input + i]` connects input `i` to hidden
/// unit `j`, `w2[k * hidden + j]` hidden unit `j` to output `k`. The same
/// type doubles as a gradient buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

impl Mlp {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            input,
            hidden,
            output,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; output * hidden],
            b2: vec![0.0; output],
        }
    }

    /// Uniform initialization in +-1/sqrt(fan_in) per layer.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let mut m = Mlp::zeros(input, hidden, output);
        let a1 = 1.0 / (input.max(1) as f64).sqrt();
        let a2 = 1.0 / (hidden.max(1) as f64).sqrt();
        m.w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        m.b1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        m.w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
        m.b2.iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
        m
    }

    pub fn zeros_like(&self) -> Self {
        Mlp::zeros(self.input, self.hidden, self.output)
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        if x.len() != self.input {
            return Err(GridError::Shape {
                expected: self.input,
                got: x.len(),
            });
        }
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.input..(j + 1) * self.input];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
                z.tanh()
            })
            .collect();
        let out = (0..self.output)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + self.b2[k]
            })
            .collect();
        Ok(Forward { hidden, out })
    }

    /// Accumulate `d(loss)/d(params)` into `grad` given `d(loss)/d(out)`.
    pub fn backward(&self, x: &[f64], fwd: &Forward, d_out: &[f64], grad: &mut Mlp) {
        debug_assert_eq!(d_out.len(), self.output);
        let mut d_hidden = vec![0.0; self.hidden];
        for (k, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b2[k] += g;
            let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
            let grow = &mut grad.w2[k * self.hidden..(k + 1) * self.hidden];
            for j in 0..self.hidden {
                grow[j] += g * fwd.hidden[j];
                d_hidden[j] += g * row[j];
            }
        }
        for j in 0..self.hidden {
            let dz = d_hidden[j] * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
            if dz == 0.0 {
                continue;
            }
            grad.b1[j] += dz;
            let grow = &mut grad.w1[j * self.input..(j + 1) * self.input];
            for (gw, xi) in grow.iter_mut().zip(x) {
                *gw += dz * xi;
            }
        }
    }

    fn slices(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn slices_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// All parameters as one vector, in `w1, b1, w2, b2` order.
    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(GridError::Shape {
                expected: self.n_params(),
                got: flat.len(),
            });
        }
        let mut rest = flat;
        for s in self.slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Mlp) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}
