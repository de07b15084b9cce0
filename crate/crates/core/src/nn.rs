//! Neural-network building blocks over the autodiff tape: parameter store,
//! layer wrappers, weight normalizations and the Adam optimizer.
//!
//! Parameters are named with dotted paths ("gen.decoder.up0.w"); binding a
//! store onto a tape yields leaf nodes per name. All maps are ordered so
//! every run visits parameters in the same order.

use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::Rng;

use crate::autodiff::{Tape, TensorId};

/// Named f64 tensors: trainable parameters plus non-trainable buffers
/// (spectral-norm power-iteration state).
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: BTreeMap<String, ArrayD<f64>>,
    buffers: BTreeMap<String, ArrayD<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<f64>) {
        let name = name.into();
        assert!(
            self.params.insert(name.clone(), value).is_none(),
            "duplicate parameter {name}"
        );
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, value: ArrayD<f64>) {
        self.buffers.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<f64> {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn buffer(&self, name: &str) -> &ArrayD<f64> {
        self.buffers
            .get(name)
            .unwrap_or_else(|| panic!("missing buffer {name}"))
    }

    pub fn buffer_mut(&mut self, name: &str) -> &mut ArrayD<f64> {
        self.buffers
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing buffer {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn param_names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn iter_params(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.params.iter()
    }

    pub fn iter_buffers(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.buffers.iter()
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|v| v.len()).sum()
    }

    /// Bind every parameter under `prefix` as tape leaves.
    pub fn bind_prefix(&self, tape: &mut Tape, prefix: &str, trainable: bool, out: &mut Bound) {
        for (name, value) in &self.params {
            if name.starts_with(prefix) {
                let id = if trainable {
                    tape.param(value.clone())
                } else {
                    tape.constant(value.clone())
                };
                out.ids.insert(name.clone(), id);
            }
        }
    }

    pub fn bind_all(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let mut out = Bound::default();
        self.bind_prefix(tape, "", trainable, &mut out);
        out
    }
}

/// Mapping from parameter names to tape leaves for one forward pass.
#[derive(Debug, Default)]
pub struct Bound {
    ids: BTreeMap<String, TensorId>,
}

impl Bound {
    pub fn get(&self, name: &str) -> TensorId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &TensorId)> {
        self.ids.iter()
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init.
pub fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> ArrayD<f64> {
    let limit = 1.0 / (fan_in.max(1) as f64).sqrt();
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen_range(-limit..limit))
}

pub fn normal_init(shape: &[usize], std: f64, rng: &mut impl Rng) -> ArrayD<f64> {
    // Box-Muller; avoids pulling a distributions crate for one call site.
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}

/// How a convolution's weight is normalized at forward time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamNorm {
    None,
    /// w = g * v / ||v||, norms per output channel.
    Weight,
    /// w = w / sigma_max(w), sigma estimated by power iteration.
    Spectral,
}

/// Fully connected layer on `[T, in] -> [T, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize) -> Self {
        Linear {
            name: name.into(),
            in_dim,
            out_dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        store.insert(
            format!("{}.w", self.name),
            uniform_init(&[self.in_dim, self.out_dim], self.in_dim, rng),
        );
        store.insert(
            format!("{}.b", self.name),
            uniform_init(&[self.out_dim], self.in_dim, rng),
        );
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: TensorId) -> TensorId {
        let w = bound.get(&format!("{}.w", self.name));
        let b = bound.get(&format!("{}.b", self.name));
        let y = tape.matmul(x, w);
        tape.add_rowvec(y, b)
    }
}

/// 1-D convolution layer on `[B, Cin, T]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad: usize,
    pub norm: ParamNorm,
}

impl Conv1d {
    pub fn new(name: impl Into<String>, c_in: usize, c_out: usize, kernel: usize) -> Self {
        Conv1d {
            name: name.into(),
            c_in,
            c_out,
            kernel,
            stride: 1,
            dilation: 1,
            pad: 0,
            norm: ParamNorm::None,
        }
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn dilation(mut self, d: usize) -> Self {
        self.dilation = d;
        self
    }

    pub fn pad(mut self, p: usize) -> Self {
        self.pad = p;
        self
    }

    /// Padding that preserves length at stride 1.
    pub fn same_pad(mut self) -> Self {
        self.pad = self.dilation * (self.kernel - 1) / 2;
        self
    }

    pub fn norm(mut self, n: ParamNorm) -> Self {
        self.norm = n;
        self
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let fan_in = self.c_in * self.kernel;
        let w = uniform_init(&[self.c_out, self.c_in, self.kernel], fan_in, rng);
        match self.norm {
            ParamNorm::None => {
                store.insert(format!("{}.w", self.name), w);
            }
            ParamNorm::Weight => {
                // g starts at ||v|| per output channel so the initial
                // effective weight equals v.
                let mut g = ndarray::Array1::zeros(self.c_out);
                for (i, row) in w.axis_iter(ndarray::Axis(0)).enumerate() {
                    g[i] = row.mapv(|x| x * x).sum().sqrt();
                }
                store.insert(format!("{}.v", self.name), w);
                store.insert(format!("{}.g", self.name), g.into_dyn());
            }
            ParamNorm::Spectral => {
                store.insert(format!("{}.w", self.name), w);
                let u = normal_init(&[self.c_out], 1.0, rng);
                let v = normal_init(&[self.c_in * self.kernel], 1.0, rng);
                store.insert_buffer(format!("{}.sn_u", self.name), normalize_vec(u));
                store.insert_buffer(format!("{}.sn_v", self.name), normalize_vec(v));
            }
        }
        store.insert(
            format!("{}.b", self.name),
            uniform_init(&[self.c_out], fan_in, rng),
        );
    }

    /// One power-iteration update of the spectral-norm buffers. No-op for
    /// other normalizations.
    pub fn power_iterate(&self, store: &mut ParamStore) {
        if self.norm != ParamNorm::Spectral {
            return;
        }
        let w = store
            .get(&format!("{}.w", self.name))
            .clone()
            .into_shape((self.c_out, self.c_in * self.kernel))
            .expect("weight reshape");
        let v_name = format!("{}.sn_v", self.name);
        let u_name = format!("{}.sn_u", self.name);
        let u = store
            .buffer(&u_name)
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("1-d")
            .to_owned();
        // v <- normalize(W^T u); u <- normalize(W v)
        let v_new = normalize_vec(w.t().dot(&u).into_dyn());
        let v1 = v_new
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("1-d")
            .to_owned();
        let u_new = normalize_vec(w.dot(&v1).into_dyn());
        *store.buffer_mut(&v_name) = v_new;
        *store.buffer_mut(&u_name) = u_new;
    }

    /// Effective weight tensor `[Cout, Cin, K]` after normalization.
    fn weight(&self, tape: &mut Tape, bound: &Bound, store: &ParamStore) -> TensorId {
        match self.norm {
            ParamNorm::None => bound.get(&format!("{}.w", self.name)),
            ParamNorm::Weight => {
                let v = bound.get(&format!("{}.v", self.name));
                let g = bound.get(&format!("{}.g", self.name));
                let sq = tape.square(v);
                let norms_sq = tape.sum_chan0(sq);
                let norms = tape.sqrt_guarded(norms_sq);
                let inv = tape.recip(norms);
                let f = tape.mul(g, inv);
                tape.mul_chan0(v, f)
            }
            ParamNorm::Spectral => {
                let w = bound.get(&format!("{}.w", self.name));
                let u = store.buffer(&format!("{}.sn_u", self.name)).clone();
                let v = store.buffer(&format!("{}.sn_v", self.name)).clone();
                let flat = tape.reshape(w, &[self.c_out, self.c_in * self.kernel]);
                let u_row = tape.constant(
                    u.into_shape((1, self.c_out)).expect("u row").into_dyn(),
                );
                let v_col = tape.constant(
                    v.into_shape((self.c_in * self.kernel, 1))
                        .expect("v col")
                        .into_dyn(),
                );
                let wv = tape.matmul(flat, v_col);
                let sigma = tape.matmul(u_row, wv); // [1, 1]
                let sigma = tape.reshape(sigma, &[]);
                let inv = tape.recip(sigma);
                tape.mul_scalar_tensor(w, inv)
            }
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        store: &ParamStore,
        x: TensorId,
    ) -> TensorId {
        let w = self.weight(tape, bound, store);
        let y = tape.conv1d(x, w, self.stride, self.dilation, self.pad);
        let b = bound.get(&format!("{}.b", self.name));
        tape.add_chan(y, b)
    }
}

fn normalize_vec(v: ArrayD<f64>) -> ArrayD<f64> {
    let norm = v.mapv(|x| x * x).sum().sqrt().max(1e-12);
    v.mapv(|x| x / norm)
}

/// Depthwise convolution layer (stride 1) on `[B, C, T]`.
#[derive(Debug, Clone)]
pub struct DepthwiseConv1d {
    pub name: String,
    pub channels: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl DepthwiseConv1d {
    pub fn new(name: impl Into<String>, channels: usize, kernel: usize) -> Self {
        DepthwiseConv1d {
            name: name.into(),
            channels,
            kernel,
            pad: (kernel - 1) / 2,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        store.insert(
            format!("{}.w", self.name),
            uniform_init(&[self.channels, self.kernel], self.kernel, rng),
        );
        store.insert(
            format!("{}.b", self.name),
            uniform_init(&[self.channels], self.kernel, rng),
        );
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: TensorId) -> TensorId {
        let w = bound.get(&format!("{}.w", self.name));
        let y = tape.conv1d_depthwise(x, w, 1, self.pad);
        let b = bound.get(&format!("{}.b", self.name));
        tape.add_chan(y, b)
    }
}

/// Layer normalization with learned affine over the last axis of `[T, D]`.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        LayerNorm {
            name: name.into(),
            dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore, _rng: &mut impl Rng) {
        store.insert(
            format!("{}.gamma", self.name),
            ArrayD::ones(IxDyn(&[self.dim])),
        );
        store.insert(
            format!("{}.beta", self.name),
            ArrayD::zeros(IxDyn(&[self.dim])),
        );
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: TensorId) -> TensorId {
        let gamma = bound.get(&format!("{}.gamma", self.name));
        let beta = bound.get(&format!("{}.beta", self.name));
        tape.layer_norm(x, gamma, beta, 1e-5)
    }
}

/// Multi-head self-attention over `[T, D]` (full attention, no masking).
#[derive(Debug, Clone)]
pub struct MultiHeadSelfAttention {
    pub name: String,
    pub dim: usize,
    pub heads: usize,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
}

impl MultiHeadSelfAttention {
    pub fn new(name: impl Into<String>, dim: usize, heads: usize) -> Self {
        let name = name.into();
        assert_eq!(dim % heads, 0, "dim must divide evenly into heads");
        MultiHeadSelfAttention {
            wq: Linear::new(format!("{name}.wq"), dim, dim),
            wk: Linear::new(format!("{name}.wk"), dim, dim),
            wv: Linear::new(format!("{name}.wv"), dim, dim),
            wo: Linear::new(format!("{name}.wo"), dim, dim),
            name,
            dim,
            heads,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.wq.init(store, rng);
        self.wk.init(store, rng);
        self.wv.init(store, rng);
        self.wo.init(store, rng);
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: TensorId) -> TensorId {
        let dh = self.dim / self.heads;
        let q = self.wq.forward(tape, bound, x);
        let k = self.wk.forward(tape, bound, x);
        let v = self.wv.forward(tape, bound, x);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut head_outs: Option<TensorId> = None;
        for h in 0..self.heads {
            let qh = tape.slice_ax(q, 1, h * dh, dh);
            let kh = tape.slice_ax(k, 1, h * dh, dh);
            let vh = tape.slice_ax(v, 1, h * dh, dh);
            let kt = tape.transpose2(kh);
            let scores = tape.matmul(qh, kt);
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax_rows(scores);
            let oh = tape.matmul(attn, vh);
            head_outs = Some(match head_outs {
                None => oh,
                Some(acc) => tape.concat(1, acc, oh),
            });
        }
        self.wo
            .forward(tape, bound, head_outs.expect("at least one head"))
    }
}

/// Adam optimizer with bias correction; state keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, ArrayD<f64>>,
    v: BTreeMap<String, ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one update from named gradients.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, ArrayD<f64>>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in grads {
            let p = store.get_mut(name);
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let (beta1, beta2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }

    /// (name, m, v) triples for checkpointing.
    pub fn state(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>, &ArrayD<f64>)> {
        self.m
            .iter()
            .map(move |(k, m)| (k, m, self.v.get(k).expect("m/v in sync")))
    }

    pub fn restore_state(&mut self, t: u64, entries: Vec<(String, ArrayD<f64>, ArrayD<f64>)>) {
        self.t = t;
        self.m.clear();
        self.v.clear();
        for (k, m, v) in entries {
            self.m.insert(k.clone(), m);
            self.v.insert(k, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check::{finite_difference, relative_error};
    use ndarray::IxDyn;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_layer_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let lin = Linear::new("l", 3, 5);
        lin.init(&mut store, &mut rng);
        let x0 = ArrayD::from_shape_fn(IxDyn(&[4, 3]), |_| rng.gen_range(-1.0..1.0));
        let run = |x: &ArrayD<f64>, store: &ParamStore| {
            let mut t = Tape::new();
            let bound = store.bind_all(&mut t, true);
            let xi = t.param(x.clone());
            let y = lin.forward(&mut t, &bound, xi);
            let sq = t.square(y);
            let l = t.mean_all(sq);
            (t, xi, y, l)
        };
        let (t, xi, y, l) = run(&x0, &store);
        assert_eq!(t.shape(y), &[4, 5]);
        let grads = t.backward(l);
        let fx = finite_difference(
            |x| {
                let (t, _, _, l) = run(x, &store);
                t.scalar(l)
            },
            &x0,
            1e-6,
        );
        assert!(relative_error(grads.get(xi).unwrap(), &fx) < 1e-8);
    }

    #[test]
    fn weight_norm_conv_matches_plain_at_init() {
        // g is initialized to ||v||, so the effective weight equals v.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let conv = Conv1d::new("c", 2, 3, 3).same_pad().norm(ParamNorm::Weight);
        conv.init(&mut store, &mut rng);
        let x = ArrayD::from_shape_fn(IxDyn(&[1, 2, 8]), |_| rng.gen_range(-1.0..1.0));
        let mut t = Tape::no_grad();
        let bound = store.bind_all(&mut t, false);
        let xi = t.constant(x.clone());
        let y = conv.forward(&mut t, &bound, &store, xi);

        let mut t2 = Tape::no_grad();
        let xi2 = t2.constant(x);
        let v = t2.constant(store.get("c.v").clone());
        let y2 = t2.conv1d(xi2, v, 1, 1, 1);
        let b = t2.constant(store.get("c.b").clone());
        let y2 = t2.add_chan(y2, b);
        assert!(relative_error(t.value(y), t2.value(y2)) < 1e-12);
    }

    #[test]
    fn weight_norm_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let conv = Conv1d::new("c", 2, 2, 3).same_pad().norm(ParamNorm::Weight);
        conv.init(&mut store, &mut rng);
        let x = ArrayD::from_shape_fn(IxDyn(&[1, 2, 6]), |_| rng.gen_range(-1.0..1.0));
        let run = |store: &ParamStore| {
            let mut t = Tape::new();
            let bound = store.bind_all(&mut t, true);
            let xi = t.constant(x.clone());
            let y = conv.forward(&mut t, &bound, store, xi);
            let sq = t.square(y);
            let l = t.mean_all(sq);
            (t, bound, l)
        };
        let (t, bound, l) = run(&store);
        let grads = t.backward(l);
        let v0 = store.get("c.v").clone();
        let fv = finite_difference(
            |v| {
                let mut s2 = store.clone();
                *s2.get_mut("c.v") = v.clone();
                let (t, _, l) = run(&s2);
                t.scalar(l)
            },
            &v0,
            1e-6,
        );
        assert!(relative_error(grads.get(bound.get("c.v")).unwrap(), &fv) < 1e-7);
        let g0 = store.get("c.g").clone();
        let fg = finite_difference(
            |g| {
                let mut s2 = store.clone();
                *s2.get_mut("c.g") = g.clone();
                let (t, _, l) = run(&s2);
                t.scalar(l)
            },
            &g0,
            1e-6,
        );
        assert!(relative_error(grads.get(bound.get("c.g")).unwrap(), &fg) < 1e-7);
    }

    #[test]
    fn spectral_norm_bounds_gain_and_gradchecks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let conv = Conv1d::new("c", 3, 4, 3)
            .same_pad()
            .norm(ParamNorm::Spectral);
        conv.init(&mut store, &mut rng);
        for _ in 0..30 {
            conv.power_iterate(&mut store);
        }
        // After convergence u^T W v approximates the top singular value, so
        // the normalized weight maps v to a nearly unit-length vector.
        let w = store.get("c.w").clone().into_shape((4, 9)).unwrap();
        let u = store
            .buffer("c.sn_u")
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .unwrap()
            .to_owned();
        let v = store
            .buffer("c.sn_v")
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .unwrap()
            .to_owned();
        let sigma = u.dot(&w.dot(&v));
        assert!(sigma > 0.0);
        let wn = w.mapv(|x| x / sigma);
        let out_norm = wn.dot(&v).mapv(|x| x * x).sum().sqrt();
        assert!((out_norm - 1.0).abs() < 1e-6);

        // Gradcheck through the normalization with frozen buffers.
        let x = ArrayD::from_shape_fn(IxDyn(&[1, 3, 6]), |_| rng.gen_range(-1.0..1.0));
        let run = |store: &ParamStore| {
            let mut t = Tape::new();
            let bound = store.bind_all(&mut t, true);
            let xi = t.constant(x.clone());
            let y = conv.forward(&mut t, &bound, store, xi);
            let sq = t.square(y);
            let l = t.mean_all(sq);
            (t, bound, l)
        };
        let (t, bound, l) = run(&store);
        let grads = t.backward(l);
        let w0 = store.get("c.w").clone();
        let fw = finite_difference(
            |w| {
                let mut s2 = store.clone();
                *s2.get_mut("c.w") = w.clone();
                let (t, _, l) = run(&s2);
                t.scalar(l)
            },
            &w0,
            1e-6,
        );
        assert!(relative_error(grads.get(bound.get("c.w")).unwrap(), &fw) < 1e-6);
    }

    #[test]
    fn attention_shapes_and_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let attn = MultiHeadSelfAttention::new("a", 8, 2);
        attn.init(&mut store, &mut rng);
        let x0 = ArrayD::from_shape_fn(IxDyn(&[5, 8]), |_| rng.gen_range(-1.0..1.0));
        let run = |x: &ArrayD<f64>| {
            let mut t = Tape::new();
            let bound = store.bind_all(&mut t, true);
            let xi = t.param(x.clone());
            let y = attn.forward(&mut t, &bound, xi);
            let sq = t.square(y);
            let l = t.mean_all(sq);
            (t, xi, y, l)
        };
        let (t, xi, y, l) = run(&x0);
        assert_eq!(t.shape(y), &[5, 8]);
        let grads = t.backward(l);
        let fx = finite_difference(
            |x| {
                let (t, _, _, l) = run(x);
                t.scalar(l)
            },
            &x0,
            1e-6,
        );
        assert!(relative_error(grads.get(xi).unwrap(), &fx) < 1e-6);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut store = ParamStore::new();
        store.insert("x", ndarray::arr1(&[5.0, -3.0]).into_dyn());
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8);
        for _ in 0..500 {
            let mut t = Tape::new();
            let bound = store.bind_all(&mut t, true);
            let x = bound.get("x");
            let sq = t.square(x);
            let l = t.sum_all(sq);
            let grads = t.backward(l);
            let mut gmap = BTreeMap::new();
            gmap.insert("x".to_string(), grads.get(x).unwrap().clone());
            adam.step(&mut store, &gmap);
        }
        assert!(store.get("x").iter().all(|v| v.abs() < 1e-3));
    }
}
