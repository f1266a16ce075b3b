//! Convolutional dueling Q-network with hand-written backpropagation.
//!
//! Parameters live in one flat vector described by named [`ParamSlot`]s, which
//! keeps the optimizer, target-network syncs and checkpoints trivial.
//!
//! Activations inside the convolutional trunk are stored position-major,
//! `[sample][y][x][channel]`, which is exactly what `im2col(x) · Wᵀ` yields, so
//! no transposes happen between layers and every large product has its
//! streaming operand in natural row-major order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Architecture of a [`QNetwork`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetSpec {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub convs: Vec<ConvSpec>,
    pub hidden: usize,
    pub n_actions: usize,
}

impl Default for NetSpec {
    /// Three-layer DQN trunk over 16×64×64 inputs, 512 hidden units, 25 actions.
    fn default() -> Self {
        Self {
            in_channels: 16,
            height: 64,
            width: 64,
            convs: vec![
                ConvSpec { filters: 32, kernel: 8, stride: 4 },
                ConvSpec { filters: 64, kernel: 4, stride: 2 },
                ConvSpec { filters: 64, kernel: 3, stride: 1 },
            ],
            hidden: 512,
            n_actions: crate::env::ACTION_COUNT,
        }
    }
}

impl NetSpec {
    /// `(channels, height, width)` entering each conv layer, followed by the
    /// trunk output.
    pub fn feature_shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let mut shapes = vec![(self.in_channels, self.height, self.width)];
        for (i, conv) in self.convs.iter().enumerate() {
            let &(_, h, w) = shapes.last().unwrap();
            if conv.kernel == 0 || conv.stride == 0 || conv.filters == 0 || conv.kernel > h || conv.kernel > w {
                return Err(Error::Config(format!(
                    "conv layer {i} ({conv:?}) does not fit a {h}×{w} input"
                )));
            }
            shapes.push((conv.filters, (h - conv.kernel) / conv.stride + 1, (w - conv.kernel) / conv.stride + 1));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.hidden == 0 || self.n_actions == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        self.feature_shapes().map(|_| ())
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn flat_features(&self) -> usize {
        let &(c, h, w) = self.feature_shapes().expect("validated spec").last().unwrap();
        c * h * w
    }

    /// SHA-256 over the canonical JSON of the architecture.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Location of one named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

fn build_layout(spec: &NetSpec) -> Vec<ParamSlot> {
    let mut slots = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, shape: Vec<usize>| {
        let len = shape.iter().product();
        slots.push(ParamSlot { name, shape, offset, len });
        offset += len;
    };
    let mut in_c = spec.in_channels;
    for (i, conv) in spec.convs.iter().enumerate() {
        let shape = if i == 0 {
            vec![conv.filters, in_c, conv.kernel, conv.kernel]
        } else {
            vec![conv.filters, conv.kernel, conv.kernel, in_c]
        };
        push(format!("conv{i}.weight"), shape);
        push(format!("conv{i}.bias"), vec![conv.filters]);
        in_c = conv.filters;
    }
    let flat = spec.flat_features();
    push("hidden.weight".into(), vec![flat, spec.hidden]);
    push("hidden.bias".into(), vec![spec.hidden]);
    push("value.weight".into(), vec![spec.hidden, 1]);
    push("value.bias".into(), vec![1]);
    push("advantage.weight".into(), vec![spec.hidden, spec.n_actions]);
    push("advantage.bias".into(), vec![spec.n_actions]);
    slots
}

/// Dueling aggregation `Q_a = V + A_a − mean(A)` for one sample.
pub fn dueling_combine<T: Real>(value: T, advantage: &[T], q: &mut [T]) {
    let mean = advantage.iter().copied().sum::<T>() / T::from_usize_lossy(advantage.len());
    for (q, &a) in q.iter_mut().zip(advantage) {
        *q = value + (a - mean);
    }
}

/// Saved activations of one batched forward pass, reusable across calls.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    batch: usize,
    /// im2col matrix per conv layer, `[batch·positions][K]`. The first layer's
    /// is built one sample at a time (it dwarfs the rest) and recomputed
    /// during the backward pass, so only a single-sample buffer is kept.
    cols: Vec<Vec<T>>,
    /// Post-ReLU output per conv layer, `[batch][y][x][channel]`.
    acts: Vec<Vec<T>>,
    /// Post-ReLU hidden layer, `[batch][hidden]`.
    hidden: Vec<T>,
    value: Vec<T>,
    /// `[batch][actions]`.
    advantage: Vec<T>,
    /// `[batch][actions]`.
    q: Vec<T>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            batch: 0,
            cols: Vec::new(),
            acts: Vec::new(),
            hidden: Vec::new(),
            value: Vec::new(),
            advantage: Vec::new(),
            q: Vec::new(),
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Q-values of the last forward pass, `[batch][actions]`.
    pub fn q(&self) -> &[T] {
        &self.q
    }

    pub fn value(&self) -> &[T] {
        &self.value
    }
}

/// Sets the length of a buffer whose contents are about to be overwritten.
fn resize<T: Real>(buf: &mut Vec<T>, len: usize) {
    buf.resize(len, T::zero());
}

/// Geometry of one convolution: input `h×w×c`, output `ho×wo×f`.
#[derive(Clone, Copy)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn k_len(&self) -> usize {
        self.c * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }
}

/// im2col for planar input (`[b][c][y][x]`); columns ordered `(c, ky, kx)`.
fn im2col_planar<T: Real>(x: &[T], g: ConvGeom, batch: usize, cols: &mut [T]) {
    let k_len = g.k_len();
    let sample = g.c * g.h * g.w;
    for b in 0..batch {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let row = &mut cols[((b * g.ho + oy) * g.wo + ox) * k_len..][..k_len];
                for c in 0..g.c {
                    for ky in 0..g.k {
                        let src = b * sample + (c * g.h + oy * g.s + ky) * g.w + ox * g.s;
                        row[(c * g.k + ky) * g.k..][..g.k].copy_from_slice(&x[src..src + g.k]);
                    }
                }
            }
        }
    }
}

/// im2col for interleaved input (`[b][y][x][c]`); columns ordered `(ky, kx, c)`.
fn im2col_interleaved<T: Real>(x: &[T], g: ConvGeom, batch: usize, cols: &mut [T]) {
    let k_len = g.k_len();
    let run = g.k * g.c;
    for b in 0..batch {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let row = &mut cols[((b * g.ho + oy) * g.wo + ox) * k_len..][..k_len];
                for ky in 0..g.k {
                    let src = ((b * g.h + oy * g.s + ky) * g.w + ox * g.s) * g.c;
                    row[ky * run..][..run].copy_from_slice(&x[src..src + run]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col_interleaved`]: scatter-adds columns back into `dx`.
fn col2im_interleaved<T: Real>(cols: &[T], g: ConvGeom, batch: usize, dx: &mut [T]) {
    let k_len = g.k_len();
    let run = g.k * g.c;
    for b in 0..batch {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let row = &cols[((b * g.ho + oy) * g.wo + ox) * k_len..][..k_len];
                for ky in 0..g.k {
                    let dst = ((b * g.h + oy * g.s + ky) * g.w + ox * g.s) * g.c;
                    for (d, &v) in dx[dst..dst + run].iter_mut().zip(&row[ky * run..][..run]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

fn relu_inplace<T: Real>(v: &mut [T]) {
    for x in v.iter_mut() {
        if !(*x > T::zero()) {
            *x = T::zero();
        }
    }
}

fn relu_mask<T: Real>(grad: &mut [T], act: &[T]) {
    for (d, &y) in grad.iter_mut().zip(act) {
        if !(y > T::zero()) {
            *d = T::zero();
        }
    }
}

/// Adds `bias` to every row of a row-major `rows × bias.len()` matrix.
fn add_bias<T: Real>(m: &mut [T], bias: &[T]) {
    for row in m.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn accumulate_column_sums<T: Real>(m: &[T], out: &mut [T]) {
    for row in m.chunks_exact(out.len()) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Row-major matrix helpers over [`Real::gemm`]; `t` marks a transposed operand.
fn matmul<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    beta: T,
    c: &mut [T],
) {
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    T::gemm(m, k, n, T::one(), a, rsa, csa, b, rsb, csb, beta, c, n as isize, 1);
}

/// Dueling Q-network `f: [C×H×W] → ℝ^A`.
///
/// The first convolution reads planar input and stores weights as
/// `[filters, channels, k, k]`; later convolutions work on interleaved
/// activations with weights `[filters, k, k, channels]`. Dense weights are
/// stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork<T> {
    spec: NetSpec,
    layout: Vec<ParamSlot>,
    params: Vec<T>,
}

impl<T: Real> QNetwork<T> {
    /// Uniform `±1/√fan_in` initialization of every weight and bias.
    pub fn new(spec: NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let layout = build_layout(&spec);
        let total = layout.last().map(|s| s.offset + s.len).unwrap_or(0);
        let mut params = vec![T::zero(); total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = 1;
        for slot in &layout {
            if slot.name.ends_with(".weight") {
                fan_in = if slot.name.starts_with("conv") {
                    slot.shape[1..].iter().product::<usize>()
                } else {
                    slot.shape[0]
                };
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[slot.offset..slot.offset + slot.len] {
                *p = T::lit(rng.gen_range(-bound..bound));
            }
        }
        Ok(Self { spec, layout, params })
    }

    /// Rebuilds a network from raw parameters laid out as [`Self::layout`].
    pub fn from_params(spec: NetSpec, params: Vec<T>) -> Result<Self> {
        spec.validate()?;
        let layout = build_layout(&spec);
        let total = layout.last().map(|s| s.offset + s.len).unwrap_or(0);
        if params.len() != total {
            return Err(Error::Config(format!(
                "expected {total} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self { spec, layout, params })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn layout(&self) -> &[ParamSlot] {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn copy_params_from(&mut self, other: &Self) {
        assert_eq!(self.spec, other.spec, "architectures differ");
        self.params.copy_from_slice(&other.params);
    }

    fn slot(&self, name: &str) -> &ParamSlot {
        self.layout
            .iter()
            .find(|s| s.name == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    fn tensor(&self, name: &str) -> &[T] {
        let s = self.slot(name);
        &self.params[s.offset..s.offset + s.len]
    }

    fn conv_geoms(&self) -> Vec<ConvGeom> {
        let shapes = self.spec.feature_shapes().expect("validated spec");
        self.spec
            .convs
            .iter()
            .enumerate()
            .map(|(i, conv)| {
                let (c, h, w) = shapes[i];
                let (_, ho, wo) = shapes[i + 1];
                ConvGeom { c, h, w, k: conv.kernel, s: conv.stride, ho, wo }
            })
            .collect()
    }

    /// Batched forward pass. `input` holds `batch` samples, each
    /// `in_channels × height × width`, back to back. Q-values end up in
    /// `tape.q()` as `[batch][actions]`.
    pub fn forward(&self, input: &[T], batch: usize, tape: &mut Tape<T>) {
        let spec = &self.spec;
        assert_eq!(input.len(), batch * spec.input_len(), "input size mismatch");
        let geoms = self.conv_geoms();
        let n_conv = geoms.len();
        tape.batch = batch;
        tape.cols.resize_with(n_conv, Vec::new);
        tape.acts.resize_with(n_conv, Vec::new);

        for (i, g) in geoms.iter().enumerate() {
            let f = spec.convs[i].filters;
            let rows = batch * g.positions();
            let (prev, rest) = tape.acts.split_at_mut(i);
            let cols = &mut tape.cols[i];
            let out = &mut rest[0];
            resize(out, rows * f);
            let weight = self.tensor(&format!("conv{i}.weight"));
            if i == 0 {
                let per = g.positions();
                let sample = spec.input_len();
                resize(cols, per * g.k_len());
                for b in 0..batch {
                    im2col_planar(&input[b * sample..(b + 1) * sample], *g, 1, cols);
                    let dst = &mut out[b * per * f..(b + 1) * per * f];
                    matmul(per, g.k_len(), f, cols, false, weight, true, T::zero(), dst);
                }
            } else {
                resize(cols, rows * g.k_len());
                im2col_interleaved(&prev[i - 1], *g, batch, cols);
                matmul(rows, g.k_len(), f, cols, false, weight, true, T::zero(), out);
            }
            add_bias(out, self.tensor(&format!("conv{i}.bias")));
            relu_inplace(out);
        }

        let flat_len = spec.flat_features();
        let x: &[T] = if n_conv == 0 { input } else { &tape.acts[n_conv - 1] };
        let hdim = spec.hidden;
        let a = spec.n_actions;

        resize(&mut tape.hidden, batch * hdim);
        matmul(batch, flat_len, hdim, x, false, self.tensor("hidden.weight"), false, T::zero(), &mut tape.hidden);
        add_bias(&mut tape.hidden, self.tensor("hidden.bias"));
        relu_inplace(&mut tape.hidden);

        resize(&mut tape.value, batch);
        matmul(batch, hdim, 1, &tape.hidden, false, self.tensor("value.weight"), false, T::zero(), &mut tape.value);
        add_bias(&mut tape.value, self.tensor("value.bias"));

        resize(&mut tape.advantage, batch * a);
        matmul(batch, hdim, a, &tape.hidden, false, self.tensor("advantage.weight"), false, T::zero(), &mut tape.advantage);
        add_bias(&mut tape.advantage, self.tensor("advantage.bias"));

        resize(&mut tape.q, batch * a);
        for b in 0..batch {
            let range = b * a..(b + 1) * a;
            dueling_combine(tape.value[b], &tape.advantage[range.clone()], &mut tape.q[range]);
        }
    }

    /// Q-values for a single input.
    pub fn q_values(&self, input: &[T]) -> Vec<T> {
        let mut tape = Tape::new();
        self.forward(input, 1, &mut tape);
        tape.q
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂Q` (`[batch][actions]`)
    /// for the forward pass recorded in `tape`. `input` must be the batch
    /// that produced `tape`.
    pub fn backward(&self, input: &[T], tape: &Tape<T>, d_q: &[T], grads: &mut [T]) {
        let spec = &self.spec;
        let batch = tape.batch;
        let a = spec.n_actions;
        let hdim = spec.hidden;
        assert_eq!(d_q.len(), batch * a, "dQ size mismatch");
        assert_eq!(grads.len(), self.params.len(), "gradient size mismatch");
        let grad_range = |name: &str| {
            let s = self.slot(name);
            s.offset..s.offset + s.len
        };

        // Dueling head: dV = Σ_a dQ, dA_a = dQ_a − mean(dQ).
        let inv_a = T::one() / T::from_usize_lossy(a);
        let mut d_value = vec![T::zero(); batch];
        let mut d_adv = vec![T::zero(); batch * a];
        for b in 0..batch {
            let row = &d_q[b * a..(b + 1) * a];
            let sum: T = row.iter().copied().sum();
            d_value[b] = sum;
            for (d, &g) in d_adv[b * a..(b + 1) * a].iter_mut().zip(row) {
                *d = g - sum * inv_a;
            }
        }

        matmul(hdim, batch, 1, &tape.hidden, true, &d_value, false, T::one(), &mut grads[grad_range("value.weight")]);
        accumulate_column_sums(&d_value, &mut grads[grad_range("value.bias")]);
        matmul(hdim, batch, a, &tape.hidden, true, &d_adv, false, T::one(), &mut grads[grad_range("advantage.weight")]);
        accumulate_column_sums(&d_adv, &mut grads[grad_range("advantage.bias")]);

        let mut d_hidden = vec![T::zero(); batch * hdim];
        matmul(batch, 1, hdim, &d_value, false, self.tensor("value.weight"), true, T::zero(), &mut d_hidden);
        matmul(batch, a, hdim, &d_adv, false, self.tensor("advantage.weight"), true, T::one(), &mut d_hidden);
        relu_mask(&mut d_hidden, &tape.hidden);

        let n_conv = spec.convs.len();
        let flat_len = spec.flat_features();
        let x: &[T] = if n_conv == 0 { input } else { &tape.acts[n_conv - 1] };
        matmul(flat_len, batch, hdim, x, true, &d_hidden, false, T::one(), &mut grads[grad_range("hidden.weight")]);
        accumulate_column_sums(&d_hidden, &mut grads[grad_range("hidden.bias")]);
        if n_conv == 0 {
            return;
        }

        let mut d_act = vec![T::zero(); batch * flat_len];
        matmul(batch, hdim, flat_len, &d_hidden, false, self.tensor("hidden.weight"), true, T::zero(), &mut d_act);

        let geoms = self.conv_geoms();
        let mut d_cols = Vec::new();
        for i in (0..n_conv).rev() {
            let g = geoms[i];
            let f = spec.convs[i].filters;
            let rows = batch * g.positions();
            relu_mask(&mut d_act, &tape.acts[i]);
            accumulate_column_sums(&d_act, &mut grads[grad_range(&format!("conv{i}.bias"))]);
            let d_weight = &mut grads[grad_range(&format!("conv{i}.weight"))];
            if i == 0 {
                let per = g.positions();
                let sample = spec.input_len();
                let mut cols = vec![T::zero(); per * g.k_len()];
                for b in 0..batch {
                    im2col_planar(&input[b * sample..(b + 1) * sample], g, 1, &mut cols);
                    let dz = &d_act[b * per * f..(b + 1) * per * f];
                    matmul(f, per, g.k_len(), dz, true, &cols, false, T::one(), d_weight);
                }
                break;
            }
            matmul(f, rows, g.k_len(), &d_act, true, &tape.cols[i], false, T::one(), d_weight);
            resize(&mut d_cols, rows * g.k_len());
            matmul(rows, f, g.k_len(), &d_act, false, self.tensor(&format!("conv{i}.weight")), false, T::zero(), &mut d_cols);
            let mut d_prev = vec![T::zero(); batch * g.h * g.w * g.c];
            col2im_interleaved(&d_cols, g, batch, &mut d_prev);
            d_act = d_prev;
        }
    }
}
