//! Dense feed-forward network with hand-written reverse-mode gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to this floor inside the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
    Softmax,
}

impl Activation {
    fn apply(self, z: &[f64]) -> Vec<f64> {
        match self {
            Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
            Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
            Activation::Identity => z.to_vec(),
            Activation::Softmax => softmax(z),
        }
    }

    /// Pulls `grad` (w.r.t. the output `a`) back to the pre-activation `z`.
    fn backward(self, z: &[f64], a: &[f64], grad: &[f64]) -> Vec<f64> {
        match self {
            Activation::Tanh => grad.iter().zip(a).map(|(g, a)| g * (1.0 - a * a)).collect(),
            Activation::Relu => grad.iter().zip(z).map(|(g, z)| if *z > 0.0 { *g } else { 0.0 }).collect(),
            Activation::Identity => grad.to_vec(),
            Activation::Softmax => {
                let dot: f64 = grad.iter().zip(a).map(|(g, p)| g * p).sum();
                grad.iter().zip(a).map(|(g, p)| p * (g - dot)).collect()
            }
        }
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Mse,
    Ce,
}

/// How raw outputs become class probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputMap {
    /// Outputs already are probabilities (softmax head).
    Direct,
    /// `q = normalize((1 + y) / 2)` for a tanh head.
    ShiftedTanh,
}

impl OutputMap {
    pub fn probabilities(self, y: &[f64]) -> Vec<f64> {
        match self {
            OutputMap::Direct => y.to_vec(),
            OutputMap::ShiftedTanh => {
                let shifted: Vec<f64> = y.iter().map(|v| (1.0 + v) / 2.0).collect();
                let sum: f64 = shifted.iter().sum();
                if sum > 0.0 {
                    shifted.into_iter().map(|s| s / sum).collect()
                } else {
                    vec![1.0 / y.len() as f64; y.len()]
                }
            }
        }
    }

    /// Gradient w.r.t. the raw outputs `y` given the gradient w.r.t. `q`.
    fn backward(self, y: &[f64], q: &[f64], grad_q: &[f64]) -> Vec<f64> {
        match self {
            OutputMap::Direct => grad_q.to_vec(),
            OutputMap::ShiftedTanh => {
                let sum: f64 = y.iter().map(|v| (1.0 + v) / 2.0).sum();
                if sum <= 0.0 {
                    return vec![0.0; y.len()];
                }
                let dot: f64 = grad_q.iter().zip(q).map(|(g, q)| g * q).sum();
                grad_q.iter().map(|g| 0.5 * (g - dot) / sum).collect()
            }
        }
    }
}

pub fn loss_mse(target: &[f64], pred: &[f64]) -> Result<f64> {
    if target.len() != pred.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), actual: pred.len() });
    }
    if target.is_empty() {
        return Ok(0.0);
    }
    Ok(target.iter().zip(pred).map(|(t, p)| (p - t).powi(2)).sum::<f64>() / target.len() as f64)
}

pub fn loss_ce(target: &[f64], prob: &[f64]) -> Result<f64> {
    if target.len() != prob.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), actual: prob.len() });
    }
    Ok(-target.iter().zip(prob).map(|(p, q)| p * q.max(PROB_FLOOR).ln()).sum::<f64>())
}

fn loss_grad(loss: Loss, target: &[f64], q: &[f64]) -> Vec<f64> {
    match loss {
        Loss::Mse => {
            let n = target.len() as f64;
            q.iter().zip(target).map(|(q, t)| 2.0 * (q - t) / n).collect()
        }
        Loss::Ce => q
            .iter()
            .zip(target)
            .map(|(q, t)| if *q > PROB_FLOOR { -t / q } else { 0.0 })
            .collect(),
    }
}

/// A fully connected layer; `weights` is row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Glorot-uniform weights and zero bias.
    pub fn init(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-limit..=limit)).collect();
        Self { inputs, outputs, weights, bias: vec![0.0; outputs], activation }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs], activation }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Parameter gradients laid out like the layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn scale(&mut self, factor: f64) {
        for v in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Index of the first layer holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<usize> {
        (0..self.weights.len())
            .find(|&i| self.weights[i].iter().chain(&self.bias[i]).any(|g| !g.is_finite()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Dense>,
}

struct Trace {
    /// Input to layer i is `inputs[i]`; `inputs[len]` is the network output.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Network {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: x.len() });
        }
        Ok(self
            .layers
            .iter()
            .fold(x.to_vec(), |a, layer| layer.activation.apply(&layer.affine(&a))))
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = layer.affine(inputs.last().expect("nonempty"));
            inputs.push(layer.activation.apply(&z));
            pre.push(z);
        }
        Trace { inputs, pre }
    }

    /// Mean loss over a batch and its gradient.
    pub fn loss_and_gradients(
        &self,
        xs: &[&[f64]],
        targets: &[&[f64]],
        loss: Loss,
        map: OutputMap,
    ) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(self);
        let mut total = 0.0;
        for (x, t) in xs.iter().zip(targets) {
            if x.len() != self.input_dim() {
                return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: x.len() });
            }
            let trace = self.trace(x);
            let y = trace.inputs.last().expect("output");
            let q = map.probabilities(y);
            total += match loss {
                Loss::Mse => loss_mse(t, &q)?,
                Loss::Ce => loss_ce(t, &q)?,
            };
            let mut grad = map.backward(y, &q, &loss_grad(loss, t, &q));
            for (i, layer) in self.layers.iter().enumerate().rev() {
                let dz = layer.activation.backward(&trace.pre[i], &trace.inputs[i + 1], &grad);
                let input = &trace.inputs[i];
                for (o, dzo) in dz.iter().enumerate() {
                    grads.bias[i][o] += dzo;
                    let row = &mut grads.weights[i][o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(g, x)| *g += dzo * x);
                }
                if i > 0 {
                    grad = (0..layer.inputs)
                        .map(|j| dz.iter().enumerate().map(|(o, d)| d * layer.weights[o * layer.inputs + j]).sum())
                        .collect();
                }
            }
        }
        let n = xs.len().max(1) as f64;
        grads.scale(1.0 / n);
        Ok((total / n, grads))
    }

    /// Mean loss over a batch without gradients.
    pub fn loss(&self, xs: &[&[f64]], targets: &[&[f64]], loss: Loss, map: OutputMap) -> Result<f64> {
        let mut total = 0.0;
        for (x, t) in xs.iter().zip(targets) {
            let q = map.probabilities(&self.forward(x)?);
            total += match loss {
                Loss::Mse => loss_mse(t, &q)?,
                Loss::Ce => loss_ce(t, &q)?,
            };
        }
        Ok(total / xs.len().max(1) as f64)
    }
}

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Network, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let params = [(&mut layer.weights, &grads.weights[i], &mut self.m.weights[i], &mut self.v.weights[i]),
                (&mut layer.bias, &grads.bias[i], &mut self.m.bias[i], &mut self.v.bias[i])];
            for (p, g, m, v) in params {
                for j in 0..p.len() {
                    m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                    v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                    let m_hat = m[j] / c1;
                    let v_hat = v[j] / c2;
                    p[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_uniform_softmax_and_zero_tanh() {
        let soft = Network { layers: vec![Dense::zeros(4, 6, Activation::Softmax)] };
        let out = soft.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert!(out.iter().all(|&p| (p - 1.0 / 6.0).abs() < 1e-15));
        let tanh = Network { layers: vec![Dense::zeros(4, 6, Activation::Tanh)] };
        assert_eq!(tanh.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 6]);
        assert!(tanh.forward(&[1.0]).is_err());
    }

    #[test]
    fn softmax_is_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network {
            layers: vec![
                Dense::init(3, 8, Activation::Tanh, &mut rng),
                Dense::init(8, 8, Activation::Identity, &mut rng),
                Dense::init(8, 6, Activation::Softmax, &mut rng),
            ],
        };
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let p = net.forward(&x).unwrap();
            assert!(p.iter().all(|&v| v > 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_examples() {
        assert_eq!(loss_mse(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(loss_mse(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let third = 1.0 / 3.0;
        assert!((loss_mse(&[1.0, 0.0, 0.0], &[third; 3]).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        assert!(loss_mse(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn ce_examples() {
        let mut target = vec![0.0; 6];
        target[2] = 1.0;
        assert!((loss_ce(&target, &[1.0 / 6.0; 6]).unwrap() - 6f64.ln()).abs() < 1e-12);
        assert!(loss_ce(&target, &target).unwrap().abs() < 1e-12);
        let mut q = vec![0.2; 6];
        q[2] = 1e-12;
        assert!((loss_ce(&target, &q).unwrap() - 27.631021115928547).abs() < 1e-9);
        q[2] = 0.0;
        assert!((loss_ce(&target, &q).unwrap() - 27.631021115928547).abs() < 1e-9);
    }

    #[test]
    fn shifted_tanh_is_a_distribution() {
        let q = OutputMap::ShiftedTanh.probabilities(&[0.2, -0.9, 0.99, 0.0]);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(q.iter().all(|&v| v >= 0.0));
        assert_eq!(OutputMap::ShiftedTanh.probabilities(&[-1.0, -1.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn adam_step_reduces_quadratic() {
        // One identity unit with a single bias: loss (b - 1)^2.
        let mut net = Network { layers: vec![Dense::zeros(1, 1, Activation::Identity)] };
        let mut adam = Adam::new(&net, 0.1);
        let x: &[f64] = &[0.0];
        let t: &[f64] = &[1.0];
        let before = net.loss(&[x], &[t], Loss::Mse, OutputMap::Direct).unwrap();
        let (_, g) = net.loss_and_gradients(&[x], &[t], Loss::Mse, OutputMap::Direct).unwrap();
        adam.step(&mut net, &g);
        let after = net.loss(&[x], &[t], Loss::Mse, OutputMap::Direct).unwrap();
        assert!(after < before);
    }
}
