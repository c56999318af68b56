//! Dense multilayer perceptron with hand-rolled backpropagation.
//!
//! Kept generic over the float type: training runs in f32 for gemm
//! throughput, while gradient verification runs the same code in f64
//! against central finite differences.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Float scalar the network code is generic over (f32 or f64).
pub trait Scalar:
    num_traits::Float
    + ndarray::LinalgScalar
    + num_traits::FromPrimitive
    + std::ops::AddAssign
    + std::fmt::Debug
{
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(&self, x: &mut Array2<T>) {
        match self {
            Activation::Relu => x.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() }),
            Activation::Tanh => x.mapv_inplace(|v| v.tanh()),
            Activation::Identity => {}
        }
    }

    fn apply_scalar<T: Scalar>(&self, v: T) -> T {
        match self {
            Activation::Relu => {
                if v > T::zero() {
                    v
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activated output, valid for all
    /// three choices here.
    fn derivative_from_output<T: Scalar>(&self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }
}

/// One dense layer, input-major weights: `y = x . w + b` with `x` of
/// shape (batch, fan_in) and `w` of shape (fan_in, fan_out).
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

#[derive(Clone, Debug)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
    hidden: Activation,
    output: Activation,
}

/// Per-parameter tensors mirroring a network's layout; used for both
/// gradients and optimizer moments.
#[derive(Clone, Debug)]
pub struct ParamTensors<T> {
    pub dw: Vec<Array2<T>>,
    pub db: Vec<Array1<T>>,
}

/// Forward-pass activations retained for backpropagation; `acts[0]` is
/// the input, `acts[i]` the activated output of layer i-1.
pub struct ForwardCache<T> {
    acts: Vec<Array2<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &Array2<T> {
        self.acts.last().expect("cache never empty")
    }
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform initialization, deterministic in `rng`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| {
                T::from_f64(rng.random_range(-limit..limit)).unwrap()
            });
            let b = Array1::zeros(fan_out);
            layers.push(Dense { w, b });
        }
        Mlp { layers, hidden, output }
    }

    /// Rebuilds a network from externally loaded layers (checkpoint
    /// restore); consecutive shapes must chain.
    pub fn from_layers(layers: Vec<Dense<T>>, hidden: Activation, output: Activation) -> Self {
        assert!(!layers.is_empty(), "need at least one layer");
        for pair in layers.windows(2) {
            assert_eq!(pair[0].w.ncols(), pair[1].w.nrows(), "layer shapes must chain");
        }
        for layer in &layers {
            assert_eq!(layer.w.ncols(), layer.b.len(), "bias length must match fan-out");
        }
        Mlp { layers, hidden, output }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(|l| l.w.nrows()).collect();
        s.push(self.layers.last().expect("nonempty").w.ncols());
        s
    }

    pub fn activations(&self) -> (Activation, Activation) {
        (self.hidden, self.output)
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        let mut cur = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = cur.dot(&layer.w);
            y += &layer.b;
            let act = if i == last { self.output } else { self.hidden };
            act.apply(&mut y);
            cur = y;
        }
        cur
    }

    /// Batch-1 forward pass. The gemm path pays per-call packing
    /// overhead that dominates single-row inference, so the rollout hot
    /// path uses this plain loop instead (axpy over contiguous weight
    /// rows; zero activations are skipped, which is exact).
    pub fn forward_row(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.layers[0].w.nrows(), "input width mismatch");
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.b.to_vec();
            for (k, &xv) in cur.iter().enumerate() {
                if xv == T::zero() {
                    continue;
                }
                let row = layer.w.row(k);
                let row = row.as_slice().expect("weights stay in standard layout");
                for (yj, &wv) in y.iter_mut().zip(row) {
                    *yj += xv * wv;
                }
            }
            let act = if i == last { self.output } else { self.hidden };
            for v in y.iter_mut() {
                *v = act.apply_scalar(*v);
            }
            cur = y;
        }
        cur
    }

    pub fn forward_cached(&self, x: &Array2<T>) -> ForwardCache<T> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = acts[i].dot(&layer.w);
            y += &layer.b;
            let act = if i == last { self.output } else { self.hidden };
            act.apply(&mut y);
            acts.push(y);
        }
        ForwardCache { acts }
    }

    /// Backpropagates `grad_out` = dLoss/d(output) through the cached
    /// forward pass; returns parameter gradients and dLoss/d(input).
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Array2<T>) -> (ParamTensors<T>, Array2<T>) {
        let n = self.layers.len();
        let mut dw = vec![Array2::zeros((0, 0)); n];
        let mut db = vec![Array1::zeros(0); n];
        let mut delta = grad_out.clone();
        for i in (0..n).rev() {
            let act = if i == n - 1 { self.output } else { self.hidden };
            let out = &cache.acts[i + 1];
            ndarray::Zip::from(&mut delta).and(out).for_each(|d, &y| {
                *d = *d * act.derivative_from_output(y);
            });
            dw[i] = cache.acts[i].t().dot(&delta);
            db[i] = delta.sum_axis(Axis(0));
            delta = delta.dot(&self.layers[i].w.t());
        }
        (ParamTensors { dw, db }, delta)
    }

    /// Elementwise `self = polyak * self + (1 - polyak) * online`.
    pub fn polyak_from(&mut self, online: &Mlp<T>, polyak: T) {
        let keep = polyak;
        let mix = T::one() - polyak;
        for (t, o) in self.layers.iter_mut().zip(online.layers.iter()) {
            ndarray::Zip::from(&mut t.w).and(&o.w).for_each(|a, &b| *a = keep * *a + mix * b);
            ndarray::Zip::from(&mut t.b).and(&o.b).for_each(|a, &b| *a = keep * *a + mix * b);
        }
    }

    pub fn zeros_like_params(&self) -> ParamTensors<T> {
        ParamTensors {
            dw: self.layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
            db: self.layers.iter().map(|l| Array1::zeros(l.b.raw_dim())).collect(),
        }
    }

    /// Smallest |pre-activation| across the hidden layers for the given
    /// batch; a gradient check near a ReLU kink (margin ~ the finite
    /// difference step) is unreliable, so callers screen inputs with
    /// this.
    pub fn preactivation_margin(&self, x: &Array2<T>) -> T {
        let mut cur = x.clone();
        let mut margin = T::infinity();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = cur.dot(&layer.w);
            y += &layer.b;
            for &v in y.iter() {
                margin = margin.min(v.abs());
            }
            let act = if i == last { self.output } else { self.hidden };
            act.apply(&mut y);
            cur = y;
        }
        margin
    }

    pub fn has_nan(&self) -> bool {
        self.layers
            .iter()
            .any(|l| l.w.iter().any(|v| !v.is_finite()) || l.b.iter().any(|v| !v.is_finite()))
    }
}

/// Adam with the standard bias correction (beta1 0.9, beta2 0.999,
/// eps 1e-8).
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: T,
    m: ParamTensors<T>,
    v: ParamTensors<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &Mlp<T>, lr: T) -> Self {
        Adam { lr, m: net.zeros_like_params(), v: net.zeros_like_params(), t: 0 }
    }

    pub fn step(&mut self, net: &mut Mlp<T>, grads: &ParamTensors<T>) {
        let b1 = T::from_f64(0.9).unwrap();
        let b2 = T::from_f64(0.999).unwrap();
        let eps = T::from_f64(1e-8).unwrap();
        self.t += 1;
        let bc1 = T::one() - b1.powi(self.t);
        let bc2 = T::one() - b2.powi(self.t);
        let lr = self.lr;
        let upd = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p = *p - lr * mhat / (vhat.sqrt() + eps);
        };
        for (i, layer) in net.layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.w)
                .and(&grads.dw[i])
                .and(&mut self.m.dw[i])
                .and(&mut self.v.dw[i])
                .for_each(|p, &g, m, v| upd(p, g, m, v));
            ndarray::Zip::from(&mut layer.b)
                .and(&grads.db[i])
                .and(&mut self.m.db[i])
                .and(&mut self.v.db[i])
                .for_each(|p, &g, m, v| upd(p, g, m, v));
        }
    }
}
