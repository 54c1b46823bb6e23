//! Dense layers, the Mixer block, losses, reverse-mode gradients and Adam,
//! for the fixed `input projection -> Mixer stack` network.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("backward called before any forward pass")]
    NoForwardCache,
    #[error("network needs at least one Mixer block")]
    ZeroDepth,
    #[error("non-finite parameter in {0}")]
    NonFinite(String),
    #[error("unknown or missing tensor {0:?}")]
    MissingTensor(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(NnError::ShapeMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

/// `y = W x + b` with `W` stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearLayer {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        check_len("linear weights", in_dim * out_dim, weights.len())?;
        check_len("linear bias", out_dim, bias.len())?;
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("linear layer".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Weights and bias drawn from `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn uniform<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        let weights = draw(in_dim * out_dim);
        let bias = draw(out_dim);
        Self {
            in_dim,
            out_dim,
            weights,
            bias,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("linear input", self.in_dim, x.len())?;
        Ok(self
            .weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v))
            .collect())
    }

    /// Gradient of `<g, W x + b>`: returns `(dW, db)` packed as a layer,
    /// and `W^T g`.
    pub fn backward(&self, x: &[f64], g: &[f64]) -> Result<(LinearLayer, Vec<f64>)> {
        check_len("linear input", self.in_dim, x.len())?;
        check_len("linear upstream", self.out_dim, g.len())?;
        let mut grad = LinearLayer::zeros(self.in_dim, self.out_dim);
        let gx = self.backward_into(x, g, &mut grad);
        Ok((grad, gx))
    }

    /// Accumulates `dW += g x^T`, `db += g` into `grad` and returns `W^T g`.
    fn backward_into(&self, x: &[f64], g: &[f64], grad: &mut LinearLayer) -> Vec<f64> {
        let mut gx = vec![0.0; self.in_dim];
        for (o, &go) in g.iter().enumerate() {
            grad.bias[o] += go;
            if go == 0.0 {
                continue;
            }
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.weights[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += go * x[i];
                gx[i] += go * row[i];
            }
        }
        gx
    }
}

pub fn linear_forward(layer: &LinearLayer, x: &[f64]) -> Result<Vec<f64>> {
    layer.forward(x)
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// `second(relu(first(x)))`, both layers square of width `O`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixerBlock {
    pub first: LinearLayer,
    pub second: LinearLayer,
}

impl MixerBlock {
    pub fn new(first: LinearLayer, second: LinearLayer) -> Result<Self> {
        let d = first.out_dim;
        for layer in [&first, &second] {
            check_len("mixer layer input", d, layer.in_dim)?;
            check_len("mixer layer output", d, layer.out_dim)?;
        }
        Ok(Self { first, second })
    }

    pub fn dim(&self) -> usize {
        self.first.out_dim
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h: Vec<f64> = self.first.forward(x)?.into_iter().map(relu).collect();
        self.second.forward(&h)
    }
}

pub fn mixer_forward(block: &MixerBlock, x: &[f64]) -> Result<Vec<f64>> {
    block.forward(x)
}

/// Input projection `I -> O` followed by `depth` Mixer blocks. The same type
/// doubles as the gradient and optimizer-moment container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub input_proj: LinearLayer,
    pub mixers: Vec<MixerBlock>,
}

impl ModelParams {
    pub fn new(input_proj: LinearLayer, mixers: Vec<MixerBlock>) -> Result<Self> {
        if mixers.is_empty() {
            return Err(NnError::ZeroDepth);
        }
        for m in &mixers {
            check_len("mixer width", input_proj.out_dim, m.dim())?;
        }
        Ok(Self { input_proj, mixers })
    }

    /// Projection and every Mixer's first layer uniform; every Mixer's
    /// second layer zero, so the network outputs exactly zero until trained.
    pub fn init<R: Rng + ?Sized>(
        input_len: usize,
        output_len: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(NnError::ZeroDepth);
        }
        let input_proj = LinearLayer::uniform(input_len, output_len, rng);
        let mixers = (0..depth)
            .map(|_| MixerBlock {
                first: LinearLayer::uniform(output_len, output_len, rng),
                second: LinearLayer::zeros(output_len, output_len),
            })
            .collect();
        Ok(Self { input_proj, mixers })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |l: &LinearLayer| LinearLayer::zeros(l.in_dim, l.out_dim);
        Self {
            input_proj: z(&self.input_proj),
            mixers: self
                .mixers
                .iter()
                .map(|m| MixerBlock {
                    first: z(&m.first),
                    second: z(&m.second),
                })
                .collect(),
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_proj.in_dim
    }

    pub fn output_len(&self) -> usize {
        self.input_proj.out_dim
    }

    pub fn depth(&self) -> usize {
        self.mixers.len()
    }

    pub fn param_count(&self) -> usize {
        self.input_proj.param_count()
            + self
                .mixers
                .iter()
                .map(|m| m.first.param_count() + m.second.param_count())
                .sum::<usize>()
    }

    fn layers(&self) -> impl Iterator<Item = (String, &LinearLayer)> {
        std::iter::once(("input_proj".to_string(), &self.input_proj)).chain(
            self.mixers.iter().enumerate().flat_map(|(i, m)| {
                [
                    (format!("mixers.{i}.first"), &m.first),
                    (format!("mixers.{i}.second"), &m.second),
                ]
            }),
        )
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut LinearLayer> {
        std::iter::once(&mut self.input_proj).chain(
            self.mixers
                .iter_mut()
                .flat_map(|m| [&mut m.first, &mut m.second]),
        )
    }

    /// Every tensor as `(name, shape, values)` in a fixed order.
    pub fn named_tensors(&self) -> Vec<NamedTensor> {
        self.layers()
            .flat_map(|(name, l)| {
                [
                    NamedTensor {
                        name: format!("{name}.weight"),
                        shape: vec![l.out_dim, l.in_dim],
                        data: l.weights.clone(),
                    },
                    NamedTensor {
                        name: format!("{name}.bias"),
                        shape: vec![l.out_dim],
                        data: l.bias.clone(),
                    },
                ]
            })
            .collect()
    }

    /// Inverse of [`named_tensors`](Self::named_tensors).
    pub fn from_named_tensors(
        input_len: usize,
        output_len: usize,
        depth: usize,
        tensors: &[NamedTensor],
    ) -> Result<Self> {
        let mut params = Self {
            input_proj: LinearLayer::zeros(input_len, output_len),
            mixers: vec![
                MixerBlock {
                    first: LinearLayer::zeros(output_len, output_len),
                    second: LinearLayer::zeros(output_len, output_len),
                };
                depth
            ],
        };
        if depth == 0 {
            return Err(NnError::ZeroDepth);
        }
        let expected = params.named_tensors();
        if tensors.len() != expected.len() {
            return Err(NnError::ShapeMismatch {
                context: "tensor count",
                expected: expected.len(),
                found: tensors.len(),
            });
        }
        for (slot, want) in params.flat_slices_mut().into_iter().zip(&expected) {
            let t = tensors
                .iter()
                .find(|t| t.name == want.name)
                .ok_or_else(|| NnError::MissingTensor(want.name.clone()))?;
            if t.shape != want.shape || t.data.len() != slot.len() {
                return Err(NnError::ShapeMismatch {
                    context: "tensor shape",
                    expected: slot.len(),
                    found: t.data.len(),
                });
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(t.name.clone()));
            }
            slot.copy_from_slice(&t.data);
        }
        Ok(params)
    }

    /// Mutable views of every tensor, in [`named_tensors`](Self::named_tensors) order.
    pub fn flat_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn flat_slices(&self) -> Vec<&[f64]> {
        std::iter::once(&self.input_proj)
            .chain(self.mixers.iter().flat_map(|m| [&m.first, &m.second]))
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        check_len("depth", self.depth(), other.depth())?;
        let a = self.flat_slices();
        let b = other.flat_slices();
        for (x, y) in a.iter().zip(&b) {
            check_len("tensor", x.len(), y.len())?;
        }
        Ok(())
    }

    /// Scales every entry in place.
    pub fn scale(&mut self, factor: f64) {
        for s in self.flat_slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Adds `other` entrywise.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.flat_slices_mut().into_iter().zip(other.flat_slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = self.input_proj.forward(x)?;
        for m in &self.mixers {
            h = m.forward(&h)?;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    blocks: Vec<BlockCache>,
}

/// Records the intermediate activations of the most recent forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    cache: Option<ForwardCache>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = params.input_proj.forward(x)?;
        let mut blocks = Vec::with_capacity(params.depth());
        for m in &params.mixers {
            let pre = m.first.forward(&h)?;
            let act: Vec<f64> = pre.iter().copied().map(relu).collect();
            let out = m.second.forward(&act)?;
            blocks.push(BlockCache {
                input: std::mem::replace(&mut h, out),
                pre,
                act,
            });
        }
        self.cache = Some(ForwardCache {
            input: x.to_vec(),
            blocks,
        });
        Ok(h)
    }

    /// Gradients of `<upstream, output>` for every parameter, plus the
    /// gradient with respect to the network input.
    pub fn backward(
        &self,
        params: &ModelParams,
        upstream: &[f64],
    ) -> Result<(ModelParams, Vec<f64>)> {
        let mut grads = params.zeros_like();
        let gx = self.backward_into(params, upstream, &mut grads)?;
        Ok((grads, gx))
    }

    /// Like [`backward`](Self::backward) but accumulates into `grads`.
    pub fn backward_into(
        &self,
        params: &ModelParams,
        upstream: &[f64],
        grads: &mut ModelParams,
    ) -> Result<Vec<f64>> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache)?;
        check_len("upstream gradient", params.output_len(), upstream.len())?;
        check_len("cached depth", params.depth(), cache.blocks.len())?;
        check_len("cached input", params.input_len(), cache.input.len())?;
        params.same_shape(grads)?;
        let mut g = upstream.to_vec();
        for ((m, bc), gm) in params
            .mixers
            .iter()
            .zip(&cache.blocks)
            .zip(grads.mixers.iter_mut())
            .rev()
        {
            let g_act = m.second.backward_into(&bc.act, &g, &mut gm.second);
            // relu'(0) = 0
            let g_pre: Vec<f64> = g_act
                .iter()
                .zip(&bc.pre)
                .map(|(ga, p)| if *p > 0.0 { *ga } else { 0.0 })
                .collect();
            g = m.first.backward_into(&bc.input, &g_pre, &mut gm.first);
        }
        Ok(params
            .input_proj
            .backward_into(&cache.input, &g, &mut grads.input_proj))
    }
}

fn check_pair(pred: &[f64], target: &[f64]) -> Result<()> {
    check_len("loss target", pred.len(), target.len())?;
    if pred.is_empty() {
        return Err(NnError::ShapeMismatch {
            context: "loss input",
            expected: 1,
            found: 0,
        });
    }
    Ok(())
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / pred.len() as f64)
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

/// Gradient of [`mse`] with respect to `pred`.
pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_pair(pred, target)?;
    let scale = 2.0 / pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| scale * (p - t))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: ModelParams,
    pub second_moment: ModelParams,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
) -> Result<()> {
    params.same_shape(grads)?;
    params.same_shape(&state.first_moment)?;
    state.step_count += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step_count as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let m_all = state.first_moment.flat_slices_mut();
    let v_all = state.second_moment.flat_slices_mut();
    for (((p, g), m), v) in params
        .flat_slices_mut()
        .into_iter()
        .zip(grads.flat_slices())
        .zip(m_all)
        .zip(v_all)
    {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
