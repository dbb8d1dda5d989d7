//! Trainable feed-forward engine for patch classification.
//!
//! Supports the six built-in architectures (and any explicit layer string)
//! in 2D, 2.5D and 3D, with PReLU activations, MSRA initialisation, inverted
//! dropout on hidden dense layers, softmax cross-entropy, and SGD with
//! momentum and weight decay. Backpropagation covers every parameter
//! including the PReLU slopes and is verified against central finite
//! differences in the 64-bit mirror path.

pub mod arch;
pub mod conv;
mod io;
pub mod tensor;

pub use arch::{named_archs, parse_arch, parse_arch_for_mode, ArchSpec, LayerSpec};
pub use conv::{conv_forward, conv_forward_direct, ConvShape};
pub use io::{load_weights, save_weights};
pub use tensor::{BatchTensor, Scalar};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::patch::{Mode, Patch, TrainingSet};
use crate::{Error, Result};

/// Parameters (or gradients, or momentum buffers) of one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<T> {
    Conv {
        shape: ConvShape,
        /// `[oc][ic][kz][ky][kx]`
        kernel: Vec<T>,
        bias: Vec<T>,
        /// PReLU slope per output channel.
        alpha: Vec<T>,
    },
    Pool {
        size: usize,
        stride: usize,
    },
    Dense {
        in_dim: usize,
        out_dim: usize,
        /// `[out][in]`
        weight: Vec<T>,
        bias: Vec<T>,
        /// PReLU slope per neuron; `None` on the classifier layer.
        alpha: Option<Vec<T>>,
    },
}

impl<T: Scalar> LayerParams<T> {
    fn zeros_like(&self) -> LayerParams<T> {
        match self {
            LayerParams::Conv { shape, kernel, bias, alpha } => LayerParams::Conv {
                shape: *shape,
                kernel: vec![T::zero(); kernel.len()],
                bias: vec![T::zero(); bias.len()],
                alpha: vec![T::zero(); alpha.len()],
            },
            LayerParams::Pool { size, stride } => {
                LayerParams::Pool { size: *size, stride: *stride }
            }
            LayerParams::Dense { in_dim, out_dim, weight, bias, alpha } => LayerParams::Dense {
                in_dim: *in_dim,
                out_dim: *out_dim,
                weight: vec![T::zero(); weight.len()],
                bias: vec![T::zero(); bias.len()],
                alpha: alpha.as_ref().map(|a| vec![T::zero(); a.len()]),
            },
        }
    }

    /// Parameter arrays of this layer paired with whether weight decay
    /// applies (PReLU slopes and biases are not decayed).
    pub fn arrays(&self) -> Vec<(&Vec<T>, bool)> {
        match self {
            LayerParams::Conv { kernel, bias, alpha, .. } => {
                vec![(kernel, true), (bias, false), (alpha, false)]
            }
            LayerParams::Pool { .. } => vec![],
            LayerParams::Dense { weight, bias, alpha, .. } => {
                let mut v = vec![(weight, true), (bias, false)];
                if let Some(a) = alpha {
                    v.push((a, false));
                }
                v
            }
        }
    }

    /// Mutable view of the parameter arrays, same order as [`Self::arrays`].
    pub fn arrays_mut(&mut self) -> Vec<(&mut Vec<T>, bool)> {
        match self {
            LayerParams::Conv { kernel, bias, alpha, .. } => {
                vec![(kernel, true), (bias, false), (alpha, false)]
            }
            LayerParams::Pool { .. } => vec![],
            LayerParams::Dense { weight, bias, alpha, .. } => {
                let mut v = vec![(weight, true), (bias, false)];
                if let Some(a) = alpha {
                    v.push((a, false));
                }
                v
            }
        }
    }
}

/// Per-layer gradients, shaped exactly like the parameters.
pub type Gradients<T> = Vec<LayerParams<T>>;

/// A network: parsed architecture plus parameters and momentum state.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar> {
    pub arch: ArchSpec,
    pub layers: Vec<LayerParams<T>>,
    momentum: Vec<LayerParams<T>>,
}

/// SGD hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_ratio: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
            epochs: 15,
            dropout_ratio: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_ratio) {
            return Err(Error::Config("dropout ratio must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardCache<T> {
    /// Input to each layer; `inputs[0]` is the batch itself.
    pub inputs: Vec<BatchTensor<T>>,
    /// Pre-activation output of each conv/dense layer.
    pub preacts: Vec<Option<BatchTensor<T>>>,
    pool_argmax: Vec<Option<Vec<u32>>>,
    dropout_masks: Vec<Option<Vec<T>>>,
    /// Raw classifier outputs, `[batch][num_classes]`.
    pub scores: Vec<T>,
    /// Second-last dense outputs, `[batch][d]`.
    pub features: Vec<T>,
    pub batch: usize,
}

fn pool_dims(rank: usize, size: usize, stride: usize) -> ([usize; 3], [usize; 3]) {
    if rank == 3 {
        ([size; 3], [stride; 3])
    } else {
        ([1, size, size], [1, stride, stride])
    }
}

fn prelu_forward<T: Scalar>(preact: &BatchTensor<T>, alpha: &[T], per_channel: usize) -> BatchTensor<T> {
    let mut out = preact.clone();
    let plane = preact.data.len() / (preact.batch * per_channel);
    for (i, v) in out.data.iter_mut().enumerate() {
        if *v < T::zero() {
            let c = (i / plane) % per_channel;
            *v = *v * alpha[c];
        }
    }
    out
}

/// dL/dpreact and the per-channel slope gradient contributions.
fn prelu_backward<T: Scalar>(
    preact: &BatchTensor<T>,
    grad_act: &BatchTensor<T>,
    alpha: &[T],
    per_channel: usize,
    grad_alpha: &mut [T],
) -> BatchTensor<T> {
    let mut grad_pre = grad_act.clone();
    let plane = preact.data.len() / (preact.batch * per_channel);
    for i in 0..preact.data.len() {
        let x = preact.data[i];
        if x < T::zero() {
            let c = (i / plane) % per_channel;
            grad_alpha[c] += x * grad_act.data[i];
            grad_pre.data[i] = grad_act.data[i] * alpha[c];
        }
    }
    grad_pre
}

fn dense_forward<T: Scalar>(
    x: &BatchTensor<T>,
    weight: &[T],
    bias: &[T],
    in_dim: usize,
    out_dim: usize,
) -> BatchTensor<T> {
    let b = x.batch;
    let mut out = BatchTensor::zeros(b, out_dim, [1, 1, 1]);
    T::gemm(
        b,
        in_dim,
        out_dim,
        T::one(),
        &x.data,
        in_dim as isize,
        1,
        weight,
        1,
        in_dim as isize,
        T::zero(),
        &mut out.data,
        out_dim as isize,
        1,
    );
    for s in 0..b {
        for (o, &bv) in bias.iter().enumerate() {
            out.data[s * out_dim + o] += bv;
        }
    }
    out
}

fn flatten<T: Scalar>(t: BatchTensor<T>) -> BatchTensor<T> {
    let dim = t.sample_len();
    BatchTensor { batch: t.batch, channels: dim, spatial: [1, 1, 1], data: t.data }
}

impl<T: Scalar> Network<T> {
    /// MSRA initialisation: weights `~ Normal(0, sqrt(2 / fan_in))`, biases
    /// zero, PReLU slopes 0.25. Reproducible by seed.
    pub fn init_msra(arch: &ArchSpec, seed: u64) -> Result<Network<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(arch.layers.len());
        let mut in_ch = arch.in_channels;
        let mut spatial = arch.input_spatial();
        let mut flat_dim: Option<usize> = None;
        let rank = arch.rank;

        for spec in &arch.layers {
            match *spec {
                LayerSpec::Conv { kernel, kernels } => {
                    let kdims =
                        if rank == 3 { [kernel; 3] } else { [1, kernel, kernel] };
                    let shape = ConvShape { in_ch, out_ch: kernels, kdims };
                    let fan_in = shape.col_width();
                    let std = (2.0 / fan_in as f64).sqrt();
                    let normal = Normal::new(0.0, std)
                        .map_err(|e| Error::Config(format!("bad init: {e}")))?;
                    let kernel_vals: Vec<T> = (0..kernels * fan_in)
                        .map(|_| T::from_f64(normal.sample(&mut rng)))
                        .collect();
                    layers.push(LayerParams::Conv {
                        shape,
                        kernel: kernel_vals,
                        bias: vec![T::zero(); kernels],
                        alpha: vec![T::from_f64(0.25); kernels],
                    });
                    spatial = shape.out_spatial(spatial);
                    in_ch = kernels;
                }
                LayerSpec::Pool { size, stride } => {
                    let (w, s) = pool_dims(rank, size, stride);
                    spatial = [
                        (spatial[0] - w[0]) / s[0] + 1,
                        (spatial[1] - w[1]) / s[1] + 1,
                        (spatial[2] - w[2]) / s[2] + 1,
                    ];
                    layers.push(LayerParams::Pool { size, stride });
                }
                LayerSpec::Dense { neurons } => {
                    let in_dim = flat_dim
                        .unwrap_or_else(|| in_ch * spatial[0] * spatial[1] * spatial[2]);
                    let std = (2.0 / in_dim as f64).sqrt();
                    let normal = Normal::new(0.0, std)
                        .map_err(|e| Error::Config(format!("bad init: {e}")))?;
                    let weight: Vec<T> = (0..neurons * in_dim)
                        .map(|_| T::from_f64(normal.sample(&mut rng)))
                        .collect();
                    layers.push(LayerParams::Dense {
                        in_dim,
                        out_dim: neurons,
                        weight,
                        bias: vec![T::zero(); neurons],
                        alpha: Some(vec![T::from_f64(0.25); neurons]),
                    });
                    flat_dim = Some(neurons);
                }
            }
        }
        // the classifier has no activation
        if let Some(LayerParams::Dense { alpha, .. }) = layers.last_mut() {
            *alpha = None;
        }
        let momentum = layers.iter().map(|l| l.zeros_like()).collect();
        Ok(Network { arch: arch.clone(), layers, momentum })
    }

    /// Convert parameters to another scalar type (f32 <-> f64 mirror).
    pub fn convert<U: Scalar>(&self) -> Network<U> {
        let conv_vec = |v: &Vec<T>| v.iter().map(|&x| U::from_f64(x.to_f64())).collect();
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerParams::Conv { shape, kernel, bias, alpha } => LayerParams::Conv {
                    shape: *shape,
                    kernel: conv_vec(kernel),
                    bias: conv_vec(bias),
                    alpha: conv_vec(alpha),
                },
                LayerParams::Pool { size, stride } => {
                    LayerParams::Pool { size: *size, stride: *stride }
                }
                LayerParams::Dense { in_dim, out_dim, weight, bias, alpha } => {
                    LayerParams::Dense {
                        in_dim: *in_dim,
                        out_dim: *out_dim,
                        weight: conv_vec(weight),
                        bias: conv_vec(bias),
                        alpha: alpha.as_ref().map(conv_vec),
                    }
                }
            })
            .collect::<Vec<_>>();
        let momentum = layers.iter().map(|l| l.zeros_like()).collect();
        Network { arch: self.arch.clone(), layers, momentum }
    }

    /// Index of the layer whose post-activation output is the feature vector.
    pub fn feature_layer(&self) -> usize {
        self.layers.len() - 2
    }

    /// Forward pass retaining everything backprop needs.
    pub fn forward_cached(
        &self,
        input: BatchTensor<T>,
        train_mode: bool,
        dropout_seed: u64,
        dropout_ratio: f64,
    ) -> ForwardCache<T> {
        let batch = input.batch;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut preacts: Vec<Option<BatchTensor<T>>> = vec![None; n];
        let mut pool_argmax: Vec<Option<Vec<u32>>> = vec![None; n];
        let mut dropout_masks: Vec<Option<Vec<T>>> = vec![None; n];
        let mut features = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        let feature_layer = self.feature_layer();

        let mut cur = input;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Conv { shape, kernel, bias, alpha } => {
                    inputs.push(cur);
                    let pre = conv_forward(inputs.last().unwrap(), kernel, bias, shape);
                    let act = prelu_forward(&pre, alpha, shape.out_ch);
                    preacts[i] = Some(pre);
                    cur = act;
                }
                LayerParams::Pool { size, stride } => {
                    inputs.push(cur);
                    let (w, s) = pool_dims(self.arch.rank, *size, *stride);
                    let pooled = conv::max_pool_forward(inputs.last().unwrap(), w, s);
                    pool_argmax[i] = Some(pooled.argmax);
                    cur = pooled.output;
                }
                LayerParams::Dense { in_dim, out_dim, weight, bias, alpha } => {
                    inputs.push(flatten(cur));
                    let pre = dense_forward(inputs.last().unwrap(), weight, bias, *in_dim, *out_dim);
                    let mut act = match alpha {
                        Some(a) => prelu_forward(&pre, a, *out_dim),
                        None => pre.clone(),
                    };
                    preacts[i] = Some(pre);
                    // inverted dropout on hidden dense outputs only
                    if alpha.is_some() && train_mode && dropout_ratio > 0.0 {
                        let keep = 1.0 - dropout_ratio;
                        let scale = T::from_f64(1.0 / keep);
                        let mask: Vec<T> = (0..act.data.len())
                            .map(|_| {
                                if rng.gen_range(0.0..1.0) < keep {
                                    scale
                                } else {
                                    T::zero()
                                }
                            })
                            .collect();
                        for (v, m) in act.data.iter_mut().zip(&mask) {
                            *v = *v * *m;
                        }
                        dropout_masks[i] = Some(mask);
                    }
                    if i == feature_layer {
                        features = act.data.clone();
                    }
                    cur = act;
                }
            }
        }
        let scores = cur.data;
        ForwardCache {
            inputs,
            preacts,
            pool_argmax,
            dropout_masks,
            scores,
            features,
            batch,
        }
    }

    /// Lean inference starting at `start_layer` (0 = the whole network).
    /// Returns raw classifier scores and, when requested, features.
    pub fn eval_from(
        &self,
        start_layer: usize,
        input: BatchTensor<T>,
        want_features: bool,
    ) -> (Vec<T>, Option<Vec<T>>) {
        let feature_layer = self.feature_layer();
        let mut features = None;
        let mut cur = input;
        for (i, layer) in self.layers.iter().enumerate().skip(start_layer) {
            match layer {
                LayerParams::Conv { shape, kernel, bias, alpha } => {
                    let pre = conv_forward(&cur, kernel, bias, shape);
                    cur = prelu_forward(&pre, alpha, shape.out_ch);
                }
                LayerParams::Pool { size, stride } => {
                    let (w, s) = pool_dims(self.arch.rank, *size, *stride);
                    cur = conv::max_pool_forward(&cur, w, s).output;
                }
                LayerParams::Dense { in_dim, out_dim, weight, bias, alpha } => {
                    let flat = flatten(cur);
                    let pre = dense_forward(&flat, weight, bias, *in_dim, *out_dim);
                    cur = match alpha {
                        Some(a) => prelu_forward(&pre, a, *out_dim),
                        None => pre,
                    };
                    if want_features && i == feature_layer {
                        features = Some(cur.data.clone());
                    }
                }
            }
        }
        (cur.data, features)
    }

    /// Classify a batch of patches.
    ///
    /// `class_scores` are the raw (pre-softmax) classifier outputs; the
    /// features come from the second-last dense layer. Dropout applies only
    /// in train mode.
    pub fn forward(
        &self,
        input: BatchTensor<T>,
        train_mode: bool,
        dropout_seed: u64,
        dropout_ratio: f64,
    ) -> (Vec<T>, Vec<T>) {
        if train_mode && dropout_ratio > 0.0 {
            let cache = self.forward_cached(input, true, dropout_seed, dropout_ratio);
            (cache.scores, cache.features)
        } else {
            let (scores, features) = self.eval_from(0, input, true);
            (scores, features.unwrap_or_default())
        }
    }

    /// Gradients for every parameter, including the PReLU slopes.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_scores: &[T]) -> Gradients<T> {
        let mut grads: Vec<LayerParams<T>> =
            self.layers.iter().map(|l| l.zeros_like()).collect();
        let mut g = BatchTensor {
            batch: cache.batch,
            channels: self.arch.num_classes,
            spatial: [1, 1, 1],
            data: grad_scores.to_vec(),
        };

        for i in (0..self.layers.len()).rev() {
            // reinterpret the incoming gradient as this layer's output shape
            // (a dense layer above may have flattened it)
            let out_shape = self.layer_output_shape(i, cache);
            g.channels = out_shape.0;
            g.spatial = out_shape.1;

            match (&self.layers[i], &mut grads[i]) {
                (
                    LayerParams::Dense { in_dim, out_dim, weight, alpha, .. },
                    LayerParams::Dense {
                        weight: gw, bias: gb, alpha: ga, ..
                    },
                ) => {
                    // dropout, then activation, then the affine map
                    if let Some(mask) = &cache.dropout_masks[i] {
                        for (v, m) in g.data.iter_mut().zip(mask) {
                            *v = *v * *m;
                        }
                    }
                    if let (Some(a), Some(ga)) = (alpha, ga.as_mut()) {
                        let pre = cache.preacts[i].as_ref().unwrap();
                        g = prelu_backward(pre, &g, a, *out_dim, ga);
                    }
                    let x = &cache.inputs[i];
                    let b = cache.batch;
                    // grad_W[o][i] += sum_b g[b][o] * x[b][i]
                    T::gemm(
                        *out_dim,
                        b,
                        *in_dim,
                        T::one(),
                        &g.data,
                        1,
                        *out_dim as isize,
                        &x.data,
                        *in_dim as isize,
                        1,
                        T::one(),
                        gw,
                        *in_dim as isize,
                        1,
                    );
                    for s in 0..b {
                        for o in 0..*out_dim {
                            gb[o] += g.data[s * *out_dim + o];
                        }
                    }
                    // grad_x[b][i] = sum_o g[b][o] * W[o][i]
                    let mut gx = BatchTensor::zeros(b, *in_dim, [1, 1, 1]);
                    T::gemm(
                        b,
                        *out_dim,
                        *in_dim,
                        T::one(),
                        &g.data,
                        *out_dim as isize,
                        1,
                        weight,
                        *in_dim as isize,
                        1,
                        T::zero(),
                        &mut gx.data,
                        *in_dim as isize,
                        1,
                    );
                    g = gx;
                }
                (LayerParams::Pool { .. }, _) => {
                    let below = &cache.inputs[i];
                    g = conv::max_pool_backward(
                        &g,
                        cache.pool_argmax[i].as_ref().unwrap(),
                        below.channels,
                        below.spatial,
                    );
                }
                (
                    LayerParams::Conv { shape, kernel, alpha, .. },
                    LayerParams::Conv { kernel: gk, bias: gb, alpha: ga, .. },
                ) => {
                    let pre = cache.preacts[i].as_ref().unwrap();
                    g = prelu_backward(pre, &g, alpha, shape.out_ch, ga);
                    let below = &cache.inputs[i];
                    let cg = conv::conv_backward(below, &g, kernel, shape);
                    for (dst, src) in gk.iter_mut().zip(&cg.kernel) {
                        *dst += *src;
                    }
                    for (dst, src) in gb.iter_mut().zip(&cg.bias) {
                        *dst += *src;
                    }
                    g = cg.input;
                }
                _ => unreachable!("gradient container mismatches layer"),
            }
        }
        grads
    }

    /// Channel count and spatial dims a layer's output had in this pass.
    fn layer_output_shape(&self, i: usize, cache: &ForwardCache<T>) -> (usize, [usize; 3]) {
        match &self.layers[i] {
            LayerParams::Conv { .. } | LayerParams::Dense { .. } => {
                let pre = cache.preacts[i].as_ref().unwrap();
                (pre.channels, pre.spatial)
            }
            LayerParams::Pool { size, stride } => {
                let below = &cache.inputs[i];
                let (w, s) = pool_dims(self.arch.rank, *size, *stride);
                (
                    below.channels,
                    [
                        (below.spatial[0] - w[0]) / s[0] + 1,
                        (below.spatial[1] - w[1]) / s[1] + 1,
                        (below.spatial[2] - w[2]) / s[2] + 1,
                    ],
                )
            }
        }
    }

    /// One SGD step: `buf = momentum*buf - lr*(grad + wd*param)`,
    /// `param += buf`. PReLU slopes and biases are excluded from decay.
    pub fn sgd_step(&mut self, grads: &Gradients<T>, cfg: &TrainConfig) {
        let lr = T::from_f64(cfg.learning_rate);
        let mom = T::from_f64(cfg.momentum);
        let wd = T::from_f64(cfg.weight_decay);
        for ((layer, grad), buf) in
            self.layers.iter_mut().zip(grads.iter()).zip(self.momentum.iter_mut())
        {
            let params = layer.arrays_mut();
            let gs = grad.arrays();
            let bufs = buf.arrays_mut();
            for (((p, decays), (g, _)), (b, _)) in
                params.into_iter().zip(gs.into_iter()).zip(bufs.into_iter())
            {
                let decay = if decays { wd } else { T::zero() };
                for i in 0..p.len() {
                    b[i] = mom * b[i] - lr * (g[i] + decay * p[i]);
                    p[i] += b[i];
                }
            }
        }
    }

    /// Reset momentum buffers to zero.
    pub fn reset_momentum(&mut self) {
        self.momentum = self.layers.iter().map(|l| l.zeros_like()).collect();
    }
}

/// Mean negative log softmax probability of the true class, with the
/// per-score gradient `(softmax - onehot) / batch`. Log-sum-exp stabilised.
pub fn loss_softmax_xent<T: Scalar>(
    scores: &[T],
    labels: &[usize],
    num_classes: usize,
) -> (f64, Vec<T>) {
    let batch = labels.len();
    assert_eq!(scores.len(), batch * num_classes);
    let mut grad = vec![T::zero(); scores.len()];
    let mut loss = 0.0f64;
    let inv_b = T::from_f64(1.0 / batch as f64);
    for s in 0..batch {
        let row = &scores[s * num_classes..(s + 1) * num_classes];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for &v in row {
            sum += (v - max).exp();
        }
        let lse = max + sum.ln();
        loss += (lse - row[labels[s]]).to_f64();
        for c in 0..num_classes {
            let p = (row[c] - lse).exp();
            let onehot = if c == labels[s] { T::one() } else { T::zero() };
            grad[s * num_classes + c] = (p - onehot) * inv_b;
        }
    }
    (loss / batch as f64, grad)
}

/// Per-epoch training statistics.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy accumulated from the training-mode batch outputs.
    pub train_accuracy: f64,
    /// Inference-mode accuracy on the validation set, when one is given.
    pub val_accuracy: Option<f64>,
}

/// Full training log.
#[derive(Debug, Clone)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    /// Inference-mode accuracy over the training set after the last epoch.
    pub final_train_accuracy: f64,
}

/// Assemble patches into a batch tensor in network layout.
pub fn patch_batch<'a, I>(mode: Mode, size: usize, patches: I) -> BatchTensor<f32>
where
    I: IntoIterator<Item = &'a Patch>,
{
    let spatial = match mode {
        Mode::ThreeD => [size, size, size],
        _ => [1, size, size],
    };
    let channels = mode.channels();
    let mut data = Vec::new();
    let mut batch = 0;
    for p in patches {
        debug_assert_eq!(p.mode, mode);
        debug_assert_eq!(p.size, size);
        data.extend_from_slice(&p.values);
        batch += 1;
    }
    BatchTensor { batch, channels, spatial, data }
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9E3779B97F4A7C15) ^ b.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Batch accuracy in inference mode over a full set, in fixed-size chunks.
pub fn evaluate_accuracy(net: &Network<f32>, ts: &TrainingSet) -> f64 {
    let nc = net.arch.num_classes;
    let mut correct = 0usize;
    for chunk in ts.patches.chunks(256) {
        let input = patch_batch(ts.mode, ts.size, chunk.iter());
        let (scores, _) = net.eval_from(0, input, false);
        for (s, p) in chunk.iter().enumerate() {
            let row = &scores[s * nc..(s + 1) * nc];
            let pred = argmax_row(row);
            if pred == p.label.unwrap_or(0) as usize {
                correct += 1;
            }
        }
    }
    correct as f64 / ts.patches.len() as f64
}

/// Lowest index among maximal entries.
pub fn argmax_row<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Epochs of shuffled mini-batch SGD. Deterministic given the config seed;
/// aborts with a diagnostic if the loss stops being finite.
pub fn train(
    net: &mut Network<f32>,
    ts: &TrainingSet,
    cfg: &TrainConfig,
    validation: Option<&TrainingSet>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if ts.patches.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let nc = net.arch.num_classes;
    for p in &ts.patches {
        let l = p.label.unwrap_or(0) as usize;
        if l >= nc {
            return Err(Error::Config(format!(
                "label {l} out of range for {nc} classes"
            )));
        }
    }

    let n = ts.patches.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x5368_7566, 0));
    let mut log = TrainLog { epochs: Vec::new(), final_train_accuracy: 0.0 };

    for epoch in 0..cfg.epochs {
        // Fisher-Yates reshuffle each epoch
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let input = patch_batch(ts.mode, ts.size, chunk.iter().map(|&i| &ts.patches[i]));
            let labels: Vec<usize> =
                chunk.iter().map(|&i| ts.patches[i].label.unwrap_or(0) as usize).collect();
            let dropout_seed = mix_seed(cfg.seed, epoch as u64 + 1, batch_idx as u64 + 1);
            let cache = net.forward_cached(input, true, dropout_seed, cfg.dropout_ratio);
            let (loss, grad) = loss_softmax_xent(&cache.scores, &labels, nc);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: batch_idx, loss });
            }
            epoch_loss += loss * chunk.len() as f64;
            for (s, &label) in labels.iter().enumerate() {
                if argmax_row(&cache.scores[s * nc..(s + 1) * nc]) == label {
                    correct += 1;
                }
            }
            let grads = net.backward(&cache, &grad);
            net.sgd_step(&grads, cfg);
        }
        let val_accuracy = validation.map(|v| evaluate_accuracy(net, v));
        log.epochs.push(EpochStats {
            epoch,
            mean_loss: epoch_loss / n as f64,
            train_accuracy: correct as f64 / n as f64,
            val_accuracy,
        });
    }
    log.final_train_accuracy = evaluate_accuracy(net, ts);
    Ok(log)
}
