//! Multi-layer perceptron regressor: ReLU hidden layers, inverted dropout,
//! mini-batch Adam on mean squared error.
//!
//! Inputs and targets are standardized with training statistics instead of
//! batch normalization, so inference never depends on batch composition.
//! Everything runs single-threaded in a fixed order: a seed determines the
//! final weights exactly.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::rng::{Purpose, Split, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpHyper {
    pub hidden: [usize; 3],
    pub dropout: f64,
    pub step_size: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Coefficient on the squared norm of the weight matrices.
    pub l2: f64,
    pub seed: u64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        MlpHyper { hidden: [64, 32, 16], dropout: 0.3, step_size: 5e-5, epochs: 100, batch_size: 512, l2: 0.0, seed: 0 }
    }
}

/// Fully connected network with a scalar linear output.
///
/// `params` stores, layer by layer, the `out x in` weight matrix (row-major)
/// followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Network {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

struct Layer {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
}

impl Network {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layers(&self) -> Vec<Layer> {
        let mut offset = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let layer = Layer { w: offset, b: offset + w[0] * w[1], n_in: w[0], n_out: w[1] };
                offset += w[0] * w[1] + w[1];
                layer
            })
            .collect()
    }

    /// He-normal hidden layers and a down-scaled output layer; zero biases.
    pub fn initialize(sizes: Vec<usize>, rng: &mut StreamRng) -> Self {
        let mut params = vec![0.0; Self::param_count(&sizes)];
        let mut net = Network { sizes, params: Vec::new() };
        let layers = net.layers();
        let last = layers.len() - 1;
        for (l, layer) in layers.iter().enumerate() {
            let sd = if l == last {
                0.1 * math::sqrt(1.0 / layer.n_in as f64)
            } else {
                math::sqrt(2.0 / layer.n_in as f64)
            };
            for p in &mut params[layer.w..layer.b] {
                *p = sd * rng.normal();
            }
        }
        net.params = params;
        net
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut act = x.to_vec();
        for (l, layer) in layers.iter().enumerate() {
            let mut next = vec![0.0; layer.n_out];
            for (o, out) in next.iter_mut().enumerate() {
                let row = &self.params[layer.w + o * layer.n_in..layer.w + (o + 1) * layer.n_in];
                let z = self.params[layer.b + o] + row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>();
                *out = if l == last { z } else { z.max(0.0) };
            }
            act = next;
        }
        act[0]
    }

    /// Mean squared error over the batch and its gradient. With `dropout`
    /// set, each hidden unit is zeroed with the given probability and the
    /// survivors are scaled by `1 / (1 - p)`.
    pub fn loss_and_gradient<R: AsRef<[f64]>>(
        &self,
        xs: &[R],
        ys: &[f64],
        mut dropout: Option<(f64, &mut StreamRng)>,
    ) -> (f64, Vec<f64>) {
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let scale = 1.0 / xs.len() as f64;
        // acts[l] is the input to layer l; pre[l] its pre-activation
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        let mut masks: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        for (x, &y) in xs.iter().zip(ys) {
            acts.clear();
            pre.clear();
            masks.clear();
            acts.push(x.as_ref().to_vec());
            for (l, layer) in layers.iter().enumerate() {
                let input = &acts[l];
                let mut z = vec![0.0; layer.n_out];
                for (o, zo) in z.iter_mut().enumerate() {
                    let row = &self.params[layer.w + o * layer.n_in..layer.w + (o + 1) * layer.n_in];
                    *zo = self.params[layer.b + o] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
                }
                if l < last {
                    let mask: Vec<f64> = match dropout.as_mut() {
                        Some((p, rng)) => (0..layer.n_out)
                            .map(|_| if rng.uniform() < *p { 0.0 } else { 1.0 / (1.0 - *p) })
                            .collect(),
                        None => vec![1.0; layer.n_out],
                    };
                    let h: Vec<f64> = z.iter().zip(&mask).map(|(v, m)| v.max(0.0) * m).collect();
                    masks.push(mask);
                    pre.push(z);
                    acts.push(h);
                } else {
                    pre.push(z);
                }
            }
            let pred = pre[last][0];
            let err = pred - y;
            loss += err * err * scale;

            let mut delta = vec![2.0 * err * scale];
            for l in (0..layers.len()).rev() {
                let layer = &layers[l];
                let input = &acts[l];
                for (o, d) in delta.iter().enumerate() {
                    grad[layer.b + o] += d;
                    let row = &mut grad[layer.w + o * layer.n_in..layer.w + (o + 1) * layer.n_in];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if l == 0 {
                    break;
                }
                let mut back = vec![0.0; layer.n_in];
                for (o, d) in delta.iter().enumerate() {
                    let row = &self.params[layer.w + o * layer.n_in..layer.w + (o + 1) * layer.n_in];
                    for (b, w) in back.iter_mut().zip(row) {
                        *b += d * w;
                    }
                }
                for (i, b) in back.iter_mut().enumerate() {
                    let active = if pre[l - 1][i] > 0.0 { 1.0 } else { 0.0 };
                    *b *= active * masks[l - 1][i];
                }
                delta = back;
            }
        }
        (loss, grad)
    }

    fn add_l2(&self, l2: f64, loss: &mut f64, grad: &mut [f64]) {
        if l2 == 0.0 {
            return;
        }
        for layer in self.layers() {
            for k in layer.w..layer.b {
                *loss += l2 * self.params[k] * self.params[k];
                grad[k] += 2.0 * l2 * self.params[k];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpRegressor {
    pub network: Network,
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
    pub hyper: MlpHyper,
    /// Training mean squared error in target units, dropout disabled.
    pub final_loss: f64,
    /// Step size actually used after any divergence restarts.
    pub step_size_used: f64,
}

impl MlpRegressor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> =
            x.iter().zip(&self.x_mean).zip(&self.x_scale).map(|((v, m), s)| (v - m) / s).collect();
        self.y_mean + self.y_scale * self.network.forward(&z)
    }
}

fn standardize_columns<R: AsRef<[f64]>>(xs: &[R]) -> (Vec<f64>, Vec<f64>) {
    let d = xs[0].as_ref().len();
    let n = xs.len() as f64;
    let mut mean = vec![0.0; d];
    for x in xs {
        for (m, v) in mean.iter_mut().zip(x.as_ref()) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for x in xs {
        for ((s, v), m) in var.iter_mut().zip(x.as_ref()).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let scale = var.into_iter().map(|v| if v > 1e-24 { math::sqrt(v) } else { 1.0 }).collect();
    (mean, scale)
}

const MAX_RESTARTS: usize = 2;

pub fn fit_mlp<R: AsRef<[f64]>>(xs: &[R], ys: &[f64], hyper: &MlpHyper) -> Result<MlpRegressor> {
    let n = xs.len();
    if ys.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: ys.len() });
    }
    if hyper.batch_size == 0 || n < hyper.batch_size {
        return Err(Error::InvalidInput(alloc::format!(
            "MLP needs at least batch_size = {} rows, got {n}",
            hyper.batch_size
        )));
    }
    if !(0.0..1.0).contains(&hyper.dropout) || !(hyper.step_size > 0.0) {
        return Err(Error::InvalidInput("dropout must lie in [0, 1) and step_size be positive".into()));
    }
    if xs.iter().any(|x| x.as_ref().iter().any(|v| !v.is_finite())) || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("training data"));
    }
    let (x_mean, x_scale) = standardize_columns(xs);
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let y_var = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum::<f64>() / n as f64;
    let y_scale = if y_var > 1e-24 { math::sqrt(y_var) } else { 1.0 };
    let zs: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| x.as_ref().iter().zip(&x_mean).zip(&x_scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let ts: Vec<f64> = ys.iter().map(|y| (y - y_mean) / y_scale).collect();

    let mut sizes = vec![zs[0].len()];
    sizes.extend(hyper.hidden.iter().copied().filter(|h| *h > 0));
    sizes.push(1);

    let mut step = hyper.step_size;
    for _ in 0..=MAX_RESTARTS {
        if let Some(network) = train(&zs, &ts, sizes.clone(), hyper, step) {
            let mut model = MlpRegressor {
                network,
                x_mean: x_mean.clone(),
                x_scale: x_scale.clone(),
                y_mean,
                y_scale,
                hyper: hyper.clone(),
                final_loss: 0.0,
                step_size_used: step,
            };
            model.final_loss = xs
                .iter()
                .zip(ys)
                .map(|(x, y)| {
                    let e = model.predict(x.as_ref()) - y;
                    e * e
                })
                .sum::<f64>()
                / n as f64;
            if model.final_loss.is_finite() {
                return Ok(model);
            }
        }
        step *= 0.5;
    }
    Err(Error::Diverged(alloc::format!("loss stayed non-finite after {MAX_RESTARTS} step-size halvings")))
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

fn train(zs: &[Vec<f64>], ts: &[f64], sizes: Vec<usize>, hyper: &MlpHyper, step: f64) -> Option<Network> {
    let mut init_rng = StreamRng::new(hyper.seed, Purpose::Init, Split::Train);
    let mut shuffle_rng = StreamRng::new(hyper.seed, Purpose::Shuffle, Split::Train);
    let mut dropout_rng = StreamRng::new(hyper.seed, Purpose::Dropout, Split::Train);
    let mut net = Network::initialize(sizes, &mut init_rng);
    let mut m = vec![0.0; net.params.len()];
    let mut v = vec![0.0; net.params.len()];
    let mut order: Vec<usize> = (0..zs.len()).collect();
    let mut t = 0i32;
    let mut bx: Vec<&[f64]> = Vec::with_capacity(hyper.batch_size);
    let mut by: Vec<f64> = Vec::with_capacity(hyper.batch_size);
    for _ in 0..hyper.epochs {
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(hyper.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.push(&zs[i]);
                by.push(ts[i]);
            }
            let dropout = (hyper.dropout > 0.0).then_some((hyper.dropout, &mut dropout_rng));
            let (mut loss, mut grad) = net.loss_and_gradient(&bx, &by, dropout);
            net.add_l2(hyper.l2, &mut loss, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return None;
            }
            t += 1;
            let c1 = 1.0 - libm::pow(BETA1, t as f64);
            let c2 = 1.0 - libm::pow(BETA2, t as f64);
            for k in 0..net.params.len() {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * grad[k];
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * grad[k] * grad[k];
                net.params[k] -= step * (m[k] / c1) / (math::sqrt(v[k] / c2) + EPS);
            }
        }
    }
    Some(net)
}
