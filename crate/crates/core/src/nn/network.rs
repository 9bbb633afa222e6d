//! Feed-forward network: shape-checked construction, batched forward pass,
//! and reverse-mode gradients for parameters and inputs.

use rayon::prelude::*;

use super::gemm::{gemm, gemm_a_bt, gemm_at_b};
use super::layer::{col2im, im2col, ConvGeom, LayerSpec};
use super::tensor::Tensor;
use super::NnError;
use crate::seed;
use rand::Rng;

/// Flat parameter vector for one [`Network`].
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    data: Vec<f32>,
}

impl Params {
    pub fn from_vec(data: Vec<f32>) -> Self {
        Params { data }
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug)]
enum Geom {
    None,
    Conv(ConvGeom),
    /// Virtual forward-conv geometry whose adjoint is this layer.
    ConvT(ConvGeom),
    /// Both inner convolutions share this geometry.
    Residual(ConvGeom),
}

#[derive(Clone, Copy, Debug)]
struct Slot {
    offset: usize,
    len: usize,
}

/// Shape-checked network: layer stack plus parameter layout.
#[derive(Clone, Debug)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    geoms: Vec<Geom>,
    slots: Vec<Slot>,
    param_count: usize,
}

/// Activations recorded by [`Network::forward_cached`] for the backward pass.
pub struct Cache {
    input: Tensor,
    outputs: Vec<Tensor>,
    residual_mid: Vec<Option<Tensor>>,
}

impl Cache {
    pub fn output(&self) -> &Tensor {
        self.outputs.last().unwrap_or(&self.input)
    }
}

impl Network {
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>) -> Result<Self, NnError> {
        let mut shapes = Vec::with_capacity(layers.len());
        let mut geoms = Vec::with_capacity(layers.len());
        let mut slots = Vec::with_capacity(layers.len());
        let mut offset = 0usize;
        let mut cur = input_shape.to_vec();

        for (idx, layer) in layers.iter().enumerate() {
            let shape_err = |msg: String| NnError::Shape { layer: idx, msg };
            let mut slot_len = 0usize;
            match layer {
                LayerSpec::Dense { units } => {
                    if cur.len() != 1 {
                        return Err(shape_err(format!(
                            "dense expects a flat input, got {cur:?} (insert Flatten)"
                        )));
                    }
                    if *units == 0 {
                        return Err(shape_err("dense with zero units".into()));
                    }
                    slot_len = cur[0] * units + units;
                    cur = vec![*units];
                    geoms.push(Geom::None);
                }
                LayerSpec::Conv2D { filters, kernel, stride } => {
                    let g = ConvGeom::forward(&cur, *filters, *kernel, *stride)
                        .map_err(shape_err)?;
                    slot_len = g.kernel_len() + g.filters;
                    cur = vec![g.out_h, g.out_w, g.filters];
                    geoms.push(Geom::Conv(g));
                }
                LayerSpec::ConvT2D { filters, kernel, stride } => {
                    let g = ConvGeom::transposed(&cur, *filters, *kernel, *stride)
                        .map_err(shape_err)?;
                    // Kernel in virtual-conv layout; bias over this layer's output channels.
                    slot_len = g.kernel_len() + g.in_c;
                    cur = vec![g.in_h, g.in_w, g.in_c];
                    geoms.push(Geom::ConvT(g));
                }
                LayerSpec::Residual { filters, kernel } => {
                    if cur.len() != 3 || cur[2] != *filters {
                        return Err(shape_err(format!(
                            "residual block with {filters} filters needs matching input channels, got {cur:?}"
                        )));
                    }
                    let g = ConvGeom::forward(&cur, *filters, (*kernel, 1), 1)
                        .map_err(shape_err)?;
                    slot_len = 2 * (g.kernel_len() + g.filters);
                    geoms.push(Geom::Residual(g));
                }
                LayerSpec::ReLU | LayerSpec::Sigmoid | LayerSpec::BatchNormFree => {
                    geoms.push(Geom::None);
                }
                LayerSpec::Softmax => {
                    if cur.is_empty() || *cur.last().unwrap() == 0 {
                        return Err(shape_err("softmax needs a non-empty last dim".into()));
                    }
                    geoms.push(Geom::None);
                }
                LayerSpec::Flatten => {
                    cur = vec![cur.iter().product()];
                    geoms.push(Geom::None);
                }
                LayerSpec::Reshape { shape } => {
                    if shape.iter().product::<usize>() != cur.iter().product::<usize>() {
                        return Err(shape_err(format!(
                            "cannot reshape {cur:?} into {shape:?}"
                        )));
                    }
                    cur = shape.clone();
                    geoms.push(Geom::None);
                }
            }
            slots.push(Slot { offset, len: slot_len });
            offset += slot_len;
            shapes.push(cur.clone());
        }

        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
            shapes,
            geoms,
            slots,
            param_count: offset,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map(|s| s.as_slice()).unwrap_or(&self.input_shape)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// FNV-1a hash of the architecture; guards parameter files against
    /// loading into a different layer stack.
    pub fn spec_hash(&self) -> u64 {
        let desc = serde_json::to_string(&(&self.input_shape, &self.layers))
            .expect("layer specs serialize");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in desc.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    /// Uniform fan-in init for weights, zero biases; deterministic in `seed`.
    /// Each layer draws from its own `(seed, layer index)` substream, so
    /// architectures that share a prefix share its initialization.
    pub fn init_params(&self, rng_seed: u64) -> Params {
        let mut data = vec![0.0f32; self.param_count];
        for (idx, (layer, (slot, geom))) in self
            .layers
            .iter()
            .zip(self.slots.iter().zip(&self.geoms))
            .enumerate()
        {
            let mut rng = seed::stream(rng_seed, 0x707a_7261_6d73 ^ (idx as u64) << 1);
            let rng = &mut rng;
            let buf = &mut data[slot.offset..slot.offset + slot.len];
            match (layer, geom) {
                (LayerSpec::Dense { units }, _) => {
                    let fan_in = (slot.len - units) / units;
                    fill_uniform(&mut buf[..slot.len - units], fan_in, rng);
                }
                (LayerSpec::Conv2D { .. }, Geom::Conv(g)) => {
                    fill_uniform(&mut buf[..g.kernel_len()], g.col_width(), rng);
                }
                (LayerSpec::ConvT2D { .. }, Geom::ConvT(g)) => {
                    // Fan-in of the transposed map: contributions per output cell.
                    let fan_in = (g.kh * g.kw * g.filters).div_ceil(g.stride);
                    fill_uniform(&mut buf[..g.kernel_len()], fan_in, rng);
                }
                (LayerSpec::Residual { .. }, Geom::Residual(g)) => {
                    let klen = g.kernel_len();
                    let fan_in = g.col_width();
                    let (first, second) = buf.split_at_mut(klen + g.filters);
                    fill_uniform(&mut first[..klen], fan_in, rng);
                    fill_uniform(&mut second[..klen], fan_in, rng);
                }
                _ => {}
            }
        }
        Params { data }
    }

    /// Batched forward pass; `input` is `(batch, per-sample dims...)`.
    pub fn forward(&self, params: &Params, input: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.forward_cached(params, input)?.output().clone())
    }

    pub fn forward_cached(&self, params: &Params, input: &Tensor) -> Result<Cache, NnError> {
        self.check_input(input)?;
        assert_eq!(params.len(), self.param_count, "parameter vector length");
        let batch = input.shape()[0];
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut residual_mid = vec![None; self.layers.len()];
        let mut cur = input.clone();

        for (idx, layer) in self.layers.iter().enumerate() {
            let slot = self.slots[idx];
            let p = &params.as_slice()[slot.offset..slot.offset + slot.len];
            let out = match (layer, &self.geoms[idx]) {
                (LayerSpec::Dense { units }, _) => dense_forward(&cur, p, *units, batch),
                (LayerSpec::Conv2D { .. }, Geom::Conv(g)) => conv_forward(&cur, p, g, batch),
                (LayerSpec::ConvT2D { .. }, Geom::ConvT(g)) => convt_forward(&cur, p, g, batch),
                (LayerSpec::Residual { .. }, Geom::Residual(g)) => {
                    let (out, mid) = residual_forward(&cur, p, g, batch);
                    residual_mid[idx] = Some(mid);
                    out
                }
                (LayerSpec::ReLU, _) => map_tensor(&cur, |v| v.max(0.0)),
                (LayerSpec::Sigmoid, _) => map_tensor(&cur, sigmoid),
                (LayerSpec::Softmax, _) => softmax_rows(&cur),
                (LayerSpec::Flatten, _) | (LayerSpec::Reshape { .. }, _) => {
                    let mut s = vec![batch];
                    s.extend_from_slice(&self.shapes[idx]);
                    cur.clone().reshaped(&s)
                }
                (LayerSpec::BatchNormFree, _) => cur.clone(),
                _ => unreachable!("geometry mismatch"),
            };
            outputs.push(out.clone());
            cur = out;
        }

        Ok(Cache { input: input.clone(), outputs, residual_mid })
    }

    /// Gradients of a scalar loss w.r.t. parameters and the network input,
    /// given `out_grad` = dLoss/dOutput.
    pub fn backward(
        &self,
        params: &Params,
        cache: &Cache,
        out_grad: &Tensor,
    ) -> (Vec<f32>, Tensor) {
        assert_eq!(
            out_grad.shape(),
            cache.output().shape(),
            "output gradient shape"
        );
        let batch = cache.input.shape()[0];
        let mut grads = vec![0.0f32; self.param_count];
        let mut g = out_grad.clone();

        for idx in (0..self.layers.len()).rev() {
            let slot = self.slots[idx];
            let p = &params.as_slice()[slot.offset..slot.offset + slot.len];
            let x = if idx == 0 { &cache.input } else { &cache.outputs[idx - 1] };
            let y = &cache.outputs[idx];
            let pg = &mut grads[slot.offset..slot.offset + slot.len];
            g = match (&self.layers[idx], &self.geoms[idx]) {
                (LayerSpec::Dense { units }, _) => dense_backward(x, p, &g, pg, *units, batch),
                (LayerSpec::Conv2D { .. }, Geom::Conv(geom)) => {
                    conv_backward(x, p, &g, pg, geom, batch)
                }
                (LayerSpec::ConvT2D { .. }, Geom::ConvT(geom)) => {
                    convt_backward(x, p, &g, pg, geom, batch)
                }
                (LayerSpec::Residual { .. }, Geom::Residual(geom)) => {
                    let mid = cache.residual_mid[idx].as_ref().expect("residual cache");
                    residual_backward(x, y, mid, p, &g, pg, geom, batch)
                }
                (LayerSpec::ReLU, _) => mask_grad(&g, y, |v| if v > 0.0 { 1.0 } else { 0.0 }),
                (LayerSpec::Sigmoid, _) => mask_grad(&g, y, |v| v * (1.0 - v)),
                (LayerSpec::Softmax, _) => softmax_backward(&g, y),
                (LayerSpec::Flatten, _) | (LayerSpec::Reshape { .. }, _) => {
                    g.clone().reshaped(x.shape())
                }
                (LayerSpec::BatchNormFree, _) => g,
                _ => unreachable!("geometry mismatch"),
            };
        }
        (grads, g)
    }

    fn check_input(&self, input: &Tensor) -> Result<(), NnError> {
        let s = input.shape();
        if s.len() != self.input_shape.len() + 1 || s[1..] != self.input_shape[..] {
            return Err(NnError::Shape {
                layer: 0,
                msg: format!(
                    "input {:?} does not match (batch, {:?})",
                    s, self.input_shape
                ),
            });
        }
        Ok(())
    }
}

fn fill_uniform(buf: &mut [f32], fan_in: usize, rng: &mut rand_chacha::ChaCha8Rng) {
    let limit = (1.0 / fan_in.max(1) as f64).sqrt() as f32;
    for v in buf.iter_mut() {
        *v = rng.gen_range(-limit..limit);
    }
}

fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

fn map_tensor(t: &Tensor, f: impl Fn(f32) -> f32 + Sync) -> Tensor {
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|v| *v = f(*v));
    out
}

fn mask_grad(g: &Tensor, y: &Tensor, df: impl Fn(f32) -> f32) -> Tensor {
    let mut out = g.clone();
    for (gv, &yv) in out.data_mut().iter_mut().zip(y.data()) {
        *gv *= df(yv);
    }
    out
}

fn softmax_rows(t: &Tensor) -> Tensor {
    let cols = *t.shape().last().unwrap();
    let mut out = t.clone();
    for row in out.data_mut().chunks_mut(cols) {
        let max = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        let mut denom = 0.0f64;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            denom += *v as f64;
        }
        for v in row.iter_mut() {
            *v = (*v as f64 / denom) as f32;
        }
    }
    out
}

fn softmax_backward(g: &Tensor, y: &Tensor) -> Tensor {
    let cols = *y.shape().last().unwrap();
    let mut out = g.clone();
    for (grow, yrow) in out.data_mut().chunks_mut(cols).zip(y.data().chunks(cols)) {
        let dot: f64 = grow
            .iter()
            .zip(yrow)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        for (gv, &yv) in grow.iter_mut().zip(yrow) {
            *gv = ((*gv as f64 - dot) * yv as f64) as f32;
        }
    }
    out
}

fn dense_forward(x: &Tensor, p: &[f32], units: usize, batch: usize) -> Tensor {
    let in_f = x.numel() / batch;
    let (w, b) = p.split_at(in_f * units);
    let mut out = Tensor::zeros(&[batch, units]);
    gemm(batch, in_f, units, x.data(), w, out.data_mut());
    for row in out.data_mut().chunks_mut(units) {
        for (v, &bv) in row.iter_mut().zip(b) {
            *v += bv;
        }
    }
    out
}

fn dense_backward(
    x: &Tensor,
    p: &[f32],
    g: &Tensor,
    pg: &mut [f32],
    units: usize,
    batch: usize,
) -> Tensor {
    let in_f = x.numel() / batch;
    let (w, _) = p.split_at(in_f * units);
    let (wg, bg) = pg.split_at_mut(in_f * units);
    gemm_at_b(in_f, batch, units, x.data(), g.data(), wg);
    for row in g.data().chunks(units) {
        for (bv, &gv) in bg.iter_mut().zip(row) {
            *bv += gv;
        }
    }
    let mut dx = Tensor::zeros(x.shape());
    gemm_a_bt(batch, units, in_f, g.data(), w, dx.data_mut());
    dx
}

/// Per-sample im2col + GEMM; parallel across the batch.
fn conv_forward(x: &Tensor, p: &[f32], g: &ConvGeom, batch: usize) -> Tensor {
    let (k, b) = p.split_at(g.kernel_len());
    let in_n = g.in_numel();
    let out_n = g.out_numel();
    let positions = g.out_h * g.out_w;
    let width = g.col_width();
    let mut out = Tensor::zeros(&[batch, g.out_h, g.out_w, g.filters]);
    out.data_mut()
        .par_chunks_mut(out_n)
        .enumerate()
        .for_each_init(
            || vec![0.0f32; positions * width],
            |col, (s, dst)| {
                let xs = &x.data()[s * in_n..(s + 1) * in_n];
                im2col(g, xs, col);
                gemm(positions, width, g.filters, col, k, dst);
                for row in dst.chunks_mut(g.filters) {
                    for (v, &bv) in row.iter_mut().zip(b) {
                        *v += bv;
                    }
                }
            },
        );
    out
}

/// Size of the fixed batch chunks used when accumulating kernel gradients.
/// Chunks are processed in parallel but combined in order, so the reduction
/// sequence (and the result) is independent of thread count.
const GRAD_CHUNK: usize = 16;

fn conv_backward(
    x: &Tensor,
    p: &[f32],
    g_out: &Tensor,
    pg: &mut [f32],
    g: &ConvGeom,
    batch: usize,
) -> Tensor {
    let (k, _) = p.split_at(g.kernel_len());
    let in_n = g.in_numel();
    let out_n = g.out_numel();
    let positions = g.out_h * g.out_w;
    let width = g.col_width();

    // Input gradient: dcol = dy · Kᵀ, then scatter.
    let mut dx = Tensor::zeros(x.shape());
    dx.data_mut()
        .par_chunks_mut(in_n)
        .enumerate()
        .for_each_init(
            || vec![0.0f32; positions * width],
            |dcol, (s, dxs)| {
                let dys = &g_out.data()[s * out_n..(s + 1) * out_n];
                dcol.fill(0.0);
                gemm_a_bt(positions, g.filters, width, dys, k, dcol);
                col2im(g, dcol, dxs);
            },
        );

    // Kernel/bias gradients: fixed chunks, ordered combine.
    let chunks: Vec<(Vec<f32>, Vec<f32>)> = (0..batch.div_ceil(GRAD_CHUNK))
        .into_par_iter()
        .map(|ci| {
            let lo = ci * GRAD_CHUNK;
            let hi = (lo + GRAD_CHUNK).min(batch);
            let mut kg = vec![0.0f32; g.kernel_len()];
            let mut bg = vec![0.0f32; g.filters];
            let mut col = vec![0.0f32; positions * width];
            for s in lo..hi {
                let xs = &x.data()[s * in_n..(s + 1) * in_n];
                let dys = &g_out.data()[s * out_n..(s + 1) * out_n];
                im2col(g, xs, &mut col);
                gemm_at_b(width, positions, g.filters, &col, dys, &mut kg);
                for row in dys.chunks(g.filters) {
                    for (bv, &gv) in bg.iter_mut().zip(row) {
                        *bv += gv;
                    }
                }
            }
            (kg, bg)
        })
        .collect();
    let (kg_all, bg_all) = pg.split_at_mut(g.kernel_len());
    for (kg, bg) in &chunks {
        for (dst, v) in kg_all.iter_mut().zip(kg) {
            *dst += v;
        }
        for (dst, v) in bg_all.iter_mut().zip(bg) {
            *dst += v;
        }
    }
    dx
}

fn convt_forward(x: &Tensor, p: &[f32], g: &ConvGeom, batch: usize) -> Tensor {
    // x has the virtual conv's output shape; result has its input shape.
    let (k, b) = p.split_at(g.kernel_len());
    let in_n = g.out_numel();
    let out_n = g.in_numel();
    let positions = g.out_h * g.out_w;
    let width = g.col_width();
    let mut out = Tensor::zeros(&[batch, g.in_h, g.in_w, g.in_c]);
    out.data_mut()
        .par_chunks_mut(out_n)
        .enumerate()
        .for_each_init(
            || vec![0.0f32; positions * width],
            |dcol, (s, dst)| {
                let xs = &x.data()[s * in_n..(s + 1) * in_n];
                dcol.fill(0.0);
                gemm_a_bt(positions, g.filters, width, xs, k, dcol);
                col2im(g, dcol, dst);
                for row in dst.chunks_mut(g.in_c) {
                    for (v, &bv) in row.iter_mut().zip(b) {
                        *v += bv;
                    }
                }
            },
        );
    out
}

fn convt_backward(
    x: &Tensor,
    p: &[f32],
    g_out: &Tensor,
    pg: &mut [f32],
    g: &ConvGeom,
    batch: usize,
) -> Tensor {
    let (k, _) = p.split_at(g.kernel_len());
    let in_n = g.out_numel(); // layer input = virtual conv output
    let out_n = g.in_numel(); // layer output = virtual conv input
    let positions = g.out_h * g.out_w;
    let width = g.col_width();

    // Input gradient = virtual conv forward applied to the output gradient.
    let mut dx = Tensor::zeros(x.shape());
    dx.data_mut()
        .par_chunks_mut(in_n)
        .enumerate()
        .for_each_init(
            || vec![0.0f32; positions * width],
            |col, (s, dxs)| {
                let gys = &g_out.data()[s * out_n..(s + 1) * out_n];
                im2col(g, gys, col);
                gemm(positions, width, g.filters, col, k, dxs);
            },
        );

    let chunks: Vec<(Vec<f32>, Vec<f32>)> = (0..batch.div_ceil(GRAD_CHUNK))
        .into_par_iter()
        .map(|ci| {
            let lo = ci * GRAD_CHUNK;
            let hi = (lo + GRAD_CHUNK).min(batch);
            let mut kg = vec![0.0f32; g.kernel_len()];
            let mut bg = vec![0.0f32; g.in_c];
            let mut col = vec![0.0f32; positions * width];
            for s in lo..hi {
                let xs = &x.data()[s * in_n..(s + 1) * in_n];
                let gys = &g_out.data()[s * out_n..(s + 1) * out_n];
                im2col(g, gys, &mut col);
                gemm_at_b(width, positions, g.filters, &col, xs, &mut kg);
                for row in gys.chunks(g.in_c) {
                    for (bv, &gv) in bg.iter_mut().zip(row) {
                        *bv += gv;
                    }
                }
            }
            (kg, bg)
        })
        .collect();
    let (kg_all, bg_all) = pg.split_at_mut(g.kernel_len());
    for (kg, bg) in &chunks {
        for (dst, v) in kg_all.iter_mut().zip(kg) {
            *dst += v;
        }
        for (dst, v) in bg_all.iter_mut().zip(bg) {
            *dst += v;
        }
    }
    dx
}

fn residual_forward(x: &Tensor, p: &[f32], g: &ConvGeom, batch: usize) -> (Tensor, Tensor) {
    let half = g.kernel_len() + g.filters;
    let t1 = conv_forward(x, &p[..half], g, batch);
    let a1 = map_tensor(&t1, |v| v.max(0.0));
    let mut t2 = conv_forward(&a1, &p[half..], g, batch);
    for (v, &xv) in t2.data_mut().iter_mut().zip(x.data()) {
        *v = (*v + xv).max(0.0);
    }
    (t2, a1)
}

#[allow(clippy::too_many_arguments)]
fn residual_backward(
    x: &Tensor,
    y: &Tensor,
    a1: &Tensor,
    p: &[f32],
    g_out: &Tensor,
    pg: &mut [f32],
    g: &ConvGeom,
    batch: usize,
) -> Tensor {
    let half = g.kernel_len() + g.filters;
    let ds = mask_grad(g_out, y, |v| if v > 0.0 { 1.0 } else { 0.0 });
    let (pg1, pg2) = pg.split_at_mut(half);
    let da1 = conv_backward(a1, &p[half..], &ds, pg2, g, batch);
    let dt1 = mask_grad(&da1, a1, |v| if v > 0.0 { 1.0 } else { 0.0 });
    let mut dx = conv_backward(x, &p[..half], &dt1, pg1, g, batch);
    for (v, &sv) in dx.data_mut().iter_mut().zip(ds.data()) {
        *v += sv;
    }
    dx
}
