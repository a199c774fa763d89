use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::RngHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z` whose activated value is `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::format("relu|tanh|identity", other)),
        }
    }
}

/// One affine layer followed by an elementwise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// Row-major `[output_dim x input_dim]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    input_dim: usize,
    output_dim: usize,
}

impl DenseLayer {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::shape("layer dimensions must be positive"));
        }
        if weight.len() != input_dim * output_dim || bias.len() != output_dim {
            return Err(Error::shape(format!(
                "layer {input_dim}->{output_dim} expects {} weights and {output_dim} biases, got {} and {}",
                input_dim * output_dim,
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite layer parameter".into()));
        }
        Ok(Self {
            weight,
            bias,
            activation,
            input_dim,
            output_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.weight[i * self.input_dim..(i + 1) * self.input_dim]
    }

    fn affine_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        // four rows at a time gives the CPU independent accumulator chains;
        // each row is still summed exactly as `dot` would
        let quads = self.output_dim / 4;
        for q in 0..quads {
            let i = 4 * q;
            let d = dot4([self.row(i), self.row(i + 1), self.row(i + 2), self.row(i + 3)], x);
            for (k, v) in d.iter().enumerate() {
                out.push(self.bias[i + k] + v);
            }
        }
        for i in 4 * quads..self.output_dim {
            out.push(self.bias[i] + dot(self.row(i), x));
        }
    }
}

/// Fixed-order dot product with four partial sums; the grouping is part of
/// the numeric contract so results are reproducible bit-for-bit.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.as_chunks::<4>(), b.as_chunks::<4>());
    for (x, y) in ca.0.iter().zip(cb.0) {
        mac4(&mut acc, x, y);
    }
    finish(acc, ca.1, cb.1)
}

/// `acc[k] += x[k] * y[k]` lane by lane.
#[inline(always)]
fn mac4(acc: &mut [f64; 4], x: &[f64; 4], y: &[f64; 4]) {
    for k in 0..4 {
        acc[k] += x[k] * y[k];
    }
}

#[inline(always)]
fn finish(acc: [f64; 4], tail_a: &[f64], tail_b: &[f64]) -> f64 {
    let mut tail = 0.0;
    for (x, y) in tail_a.iter().zip(tail_b) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Four [`dot`] products against the same vector, bit-identical to
/// calling `dot` on each row.
#[inline]
fn dot4(rows: [&[f64]; 4], b: &[f64]) -> [f64; 4] {
    let (cb, tb) = b.as_chunks::<4>();
    let split = rows.map(|r| r[..b.len()].as_chunks::<4>());
    let mut acc = [[0.0f64; 4]; 4];
    for (c, y) in cb.iter().enumerate() {
        for r in 0..4 {
            mac4(&mut acc[r], &split[r].0[c], y);
        }
    }
    let mut out = [0.0; 4];
    for r in 0..4 {
        out[r] = finish(acc[r], split[r].1, tb);
    }
    out
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Multi-layer perceptron with per-layer activations.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
}

/// Pre- and post-activation values recorded by [`DenseNet::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub output: Vec<f64>,
    pub cache: ForwardCache,
}

/// Parameter gradients laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl DenseGrads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weight: net.layers.iter().map(|l| vec![0.0; l.weight.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.weight.iter_mut().chain(self.bias.iter_mut()).for_each(|v| v.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        self.weight
            .iter_mut()
            .chain(self.bias.iter_mut())
            .flat_map(|v| v.iter_mut())
            .for_each(|g| *g *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.weight
            .iter()
            .chain(&self.bias)
            .all(|v| v.iter().all(|g| g.is_finite()))
    }

    /// Slices in the canonical parameter order: per layer, weights then bias.
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.weight
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
    }
}

#[derive(Debug, Clone)]
pub struct Backprop {
    pub param_grads: DenseGrads,
    pub input_grad: Vec<f64>,
}

impl DenseNet {
    /// Builds a network with Glorot-uniform weights, drawn from
    /// `[-sqrt(6/(fan_in+fan_out)), sqrt(6/(fan_in+fan_out))]`, and zero biases.
    pub fn new(input_dim: usize, layers: &[(usize, Activation)], rng: &mut RngHandle) -> Result<Self> {
        let mut built = Vec::with_capacity(layers.len());
        let mut fan_in = input_dim;
        for &(out, act) in layers {
            let bound = (6.0 / (fan_in + out).max(1) as f64).sqrt();
            let weight = (0..fan_in * out)
                .map(|_| rng.uniform_range(-bound, bound))
                .collect();
            built.push(DenseLayer::new(fan_in, out, weight, vec![0.0; out], act)?);
            fan_in = out;
        }
        Self::from_layers(built)
    }

    pub fn zeros(input_dim: usize, layers: &[(usize, Activation)]) -> Result<Self> {
        let mut built = Vec::with_capacity(layers.len());
        let mut fan_in = input_dim;
        for &(out, act) in layers {
            built.push(DenseLayer::new(fan_in, out, vec![0.0; fan_in * out], vec![0.0; out], act)?);
            fan_in = out;
        }
        Self::from_layers(built)
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim != pair[1].input_dim {
                return Err(Error::shape(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].output_dim, pair[1].input_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// `(output_dim, activation)` per layer.
    pub fn architecture(&self) -> Vec<(usize, Activation)> {
        self.layers.iter().map(|l| (l.output_dim, l.activation)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "network expects input of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut z = Vec::with_capacity(layer.output_dim);
            layer.affine_into(activations.last().unwrap(), &mut z);
            let a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            activations.push(a);
        }
        let output = activations.last().unwrap().clone();
        Ok(ForwardPass {
            output,
            cache: ForwardCache { activations, pre },
        })
    }

    /// Forward pass without recording a cache.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.affine_into(&cur, &mut next);
            next.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let matches = cache.pre.len() == self.layers.len()
            && cache.activations.len() == self.layers.len() + 1
            && cache.activations[0].len() == self.input_dim()
            && self
                .layers
                .iter()
                .zip(&cache.pre)
                .all(|(l, z)| z.len() == l.output_dim);
        if matches {
            Ok(())
        } else {
            Err(Error::Contract("forward cache was not produced by this network".into()))
        }
    }

    /// Gradients of `<upstream, output>` with respect to parameters and input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Backprop> {
        let mut param_grads = DenseGrads::zeros_like(self);
        let input_grad = self.backward_accumulate(cache, upstream, &mut param_grads)?;
        Ok(Backprop {
            param_grads,
            input_grad,
        })
    }

    /// Like [`backward`](Self::backward) but adds parameter gradients into
    /// `grads`, so a batch can be accumulated without reallocating.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut DenseGrads,
    ) -> Result<Vec<f64>> {
        self.check_cache(cache)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::shape(format!(
                "upstream gradient has length {}, network output is {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if grads.weight.len() != self.layers.len() {
            return Err(Error::shape("gradient buffer does not match network"));
        }
        Ok(self.backprop(cache, upstream, Some(grads)))
    }

    /// Reverse pass shared by parameter and input gradients; parameter
    /// accumulation is skipped when `grads` is `None`.
    fn backprop(&self, cache: &ForwardCache, upstream: &[f64], mut grads: Option<&mut DenseGrads>) -> Vec<f64> {
        let mut delta: Vec<f64> = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[l];
            let a = &cache.activations[l + 1];
            for (d, (&zi, &ai)) in delta.iter_mut().zip(z.iter().zip(a)) {
                *d *= layer.activation.derivative(zi, ai);
            }
            let input = &cache.activations[l];
            let mut prev = vec![0.0; layer.input_dim];
            for (i, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                if let Some(g) = grads.as_deref_mut() {
                    g.bias[l][i] += d;
                    axpy(d, input, &mut g.weight[l][i * layer.input_dim..(i + 1) * layer.input_dim]);
                }
                axpy(d, layer.row(i), &mut prev);
            }
            delta = prev;
        }
        delta
    }

    /// Gradient of `<upstream, output>` with respect to the input only.
    pub fn input_gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let pass = self.forward(x)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::shape(format!(
                "upstream gradient has length {}, network output is {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        Ok(self.backprop(&pass.cache, upstream, None))
    }

    /// `self <- tau * source + (1 - tau) * self`, per parameter.
    pub fn soft_update_from(&mut self, source: &DenseNet, tau: f64) -> Result<()> {
        if self.architecture() != source.architecture() || self.input_dim() != source.input_dim() {
            return Err(Error::shape("soft update between different architectures"));
        }
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            for (t, &o) in dst
                .weight
                .iter_mut()
                .chain(dst.bias.iter_mut())
                .zip(src.weight.iter().chain(&src.bias))
            {
                *t = tau * o + (1.0 - tau) * *t;
            }
        }
        Ok(())
    }

    /// Mutable parameter slices in canonical order (per layer, weights then bias).
    pub fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn param_slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(weight: Vec<f64>, bias: Vec<f64>, inp: usize, out: usize, act: Activation) -> DenseNet {
        DenseNet::from_layers(vec![DenseLayer::new(inp, out, weight, bias, act).unwrap()]).unwrap()
    }

    #[test]
    fn identity_relu_clamps() {
        let net = single(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, 2, Activation::Relu);
        assert_eq!(net.predict(&[1.0, -2.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(net.forward(&[1.0, -2.0]).unwrap().output, vec![1.0, 0.0]);
    }

    #[test]
    fn affine_scalar() {
        let net = single(vec![2.0], vec![1.0], 1, 1, Activation::Identity);
        assert_eq!(net.predict(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn linear_input_gradient_is_weight() {
        let w = vec![0.3, -1.5, 2.0];
        let net = single(w.clone(), vec![0.0], 3, 1, Activation::Identity);
        let g = net.input_gradient(&[0.1, 0.2, 0.3], &[1.0]).unwrap();
        assert_eq!(g, w);
    }

    #[test]
    fn relu_dead_unit_blocks_gradient() {
        // unit 0 pre-activation = x0 - 5 < 0, unit 1 = x1
        let l1 = DenseLayer::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![-5.0, 0.0], Activation::Relu).unwrap();
        let l2 = DenseLayer::new(2, 1, vec![1.0, 1.0], vec![0.0], Activation::Identity).unwrap();
        let net = DenseNet::from_layers(vec![l1, l2]).unwrap();
        let g = net.input_gradient(&[1.0, 2.0], &[1.0]).unwrap();
        assert_eq!(g, vec![0.0, 1.0]);
    }

    #[test]
    fn shape_errors() {
        let net = single(vec![2.0], vec![1.0], 1, 1, Activation::Identity);
        assert!(matches!(net.predict(&[1.0, 2.0]), Err(Error::Shape(_))));
        let pass = net.forward(&[1.0]).unwrap();
        assert!(matches!(net.backward(&pass.cache, &[1.0, 1.0]), Err(Error::Shape(_))));
        assert!(DenseLayer::new(2, 1, vec![1.0], vec![0.0], Activation::Relu).is_err());
        let l1 = DenseLayer::new(2, 3, vec![0.0; 6], vec![0.0; 3], Activation::Relu).unwrap();
        let l2 = DenseLayer::new(2, 1, vec![0.0; 2], vec![0.0], Activation::Relu).unwrap();
        assert!(DenseNet::from_layers(vec![l1, l2]).is_err());
    }

    #[test]
    fn mismatched_cache_is_contract_error() {
        let mut rng = RngHandle::new(1);
        let a = DenseNet::new(3, &[(4, Activation::Relu), (2, Activation::Identity)], &mut rng).unwrap();
        let b = DenseNet::new(3, &[(5, Activation::Relu), (2, Activation::Identity)], &mut rng).unwrap();
        let pass = b.forward(&[0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(a.backward(&pass.cache, &[1.0, 0.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn init_respects_glorot_bound() {
        let mut rng = RngHandle::new(3);
        let net = DenseNet::new(16, &[(8, Activation::Relu), (2, Activation::Identity)], &mut rng).unwrap();
        let b0 = 0.25f64.sqrt();
        assert!(net.layers()[0].weight.iter().all(|w| w.abs() <= b0));
        assert!(net.layers()[0].weight.iter().any(|w| w.abs() > 0.8 * b0));
        let b1 = 0.6f64.sqrt();
        assert!(net.layers()[1].weight.iter().all(|w| w.abs() <= b1));
        assert!(net.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn soft_update_endpoints() {
        let mut rng = RngHandle::new(9);
        let arch = [(4, Activation::Relu), (2, Activation::Identity)];
        let online = DenseNet::new(3, &arch, &mut rng).unwrap();
        let target0 = DenseNet::new(3, &arch, &mut rng).unwrap();
        let mut t = target0.clone();
        t.soft_update_from(&online, 0.0).unwrap();
        assert_eq!(t, target0);
        t.soft_update_from(&online, 1.0).unwrap();
        assert_eq!(t, online);
    }
}
