//! Shared gradient-check support: an independent f64 reference forward pass
//! and the finite-difference case runner. Central differences of the f64
//! reference are numerically clean; the production f32 path only has to
//! agree to f32 accuracy. Probe intervals that flip a ReLU activation are
//! skipped (the derivative is undefined across them).

use openrf_core::nn::{loss_grad, LayerSpec, LossKind, Network, Tensor};
use rand::Rng;

pub const H: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-3;

// ---------------------------------------------------------------------------
// f64 reference forward
// ---------------------------------------------------------------------------

struct RefConv {
    in_h: usize,
    in_w: usize,
    in_c: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    filters: usize,
}

impl RefConv {
    fn out_h(&self) -> usize {
        self.in_h.div_ceil(self.stride)
    }
    fn out_w(&self) -> usize {
        self.in_w - self.kw + 1
    }
    fn pad_top(&self) -> usize {
        ((self.out_h() - 1) * self.stride + self.kh).saturating_sub(self.in_h) / 2
    }
    fn kernel_len(&self) -> usize {
        self.kh * self.kw * self.in_c * self.filters
    }

    fn forward(&self, x: &[f64], k: &[f64], b: &[f64]) -> Vec<f64> {
        let (oh, ow) = (self.out_h(), self.out_w());
        let pad = self.pad_top() as isize;
        let mut y = vec![0.0; oh * ow * self.filters];
        for oy in 0..oh {
            for ox in 0..ow {
                for f in 0..self.filters {
                    let mut acc = b[f];
                    for ky in 0..self.kh {
                        let iy = (oy * self.stride + ky) as isize - pad;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for kx in 0..self.kw {
                            let ix = ox + kx;
                            for c in 0..self.in_c {
                                let kv = k[((ky * self.kw + kx) * self.in_c + c)
                                    * self.filters
                                    + f];
                                acc += x[(iy as usize * self.in_w + ix) * self.in_c + c] * kv;
                            }
                        }
                    }
                    y[(oy * ow + ox) * self.filters + f] = acc;
                }
            }
        }
        y
    }

    /// Adjoint map: scatter `x` (shaped like this conv's output) back through
    /// the kernel into a tensor shaped like this conv's input.
    fn adjoint(&self, x: &[f64], k: &[f64], bias_out: &[f64]) -> Vec<f64> {
        let (oh, ow) = (self.out_h(), self.out_w());
        let pad = self.pad_top() as isize;
        let mut y = vec![0.0; self.in_h * self.in_w * self.in_c];
        for (cell, chunk) in y.chunks_mut(self.in_c).enumerate() {
            let _ = cell;
            for (v, bv) in chunk.iter_mut().zip(bias_out) {
                *v = *bv;
            }
        }
        for oy in 0..oh {
            for ox in 0..ow {
                for f in 0..self.filters {
                    let xv = x[(oy * ow + ox) * self.filters + f];
                    for ky in 0..self.kh {
                        let iy = (oy * self.stride + ky) as isize - pad;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for kx in 0..self.kw {
                            let ix = ox + kx;
                            for c in 0..self.in_c {
                                let kv = k[((ky * self.kw + kx) * self.in_c + c)
                                    * self.filters
                                    + f];
                                y[(iy as usize * self.in_w + ix) * self.in_c + c] += xv * kv;
                            }
                        }
                    }
                }
            }
        }
        y
    }
}

fn shape3(s: &[usize]) -> (usize, usize, usize) {
    (s[0], s[1], s[2])
}

/// Runs the layer stack in f64 for one batch. `params` is the flat f32 layout
/// promoted to f64. Every ReLU decision is pushed onto `mask`: central
/// differences are only meaningful when the activation pattern is identical
/// at both probe points, so callers compare signatures and skip kink
/// crossings.
fn ref_forward(
    input_shape: &[usize],
    layers: &[LayerSpec],
    params: &[f64],
    input: &[f64],
    batch: usize,
    mask: &mut Vec<bool>,
) -> Vec<f64> {
    let per_sample: usize = input_shape.iter().product();
    let mut cur_shape = input_shape.to_vec();
    let mut cur: Vec<Vec<f64>> = (0..batch)
        .map(|s| input[s * per_sample..(s + 1) * per_sample].to_vec())
        .collect();
    let mut off = 0usize;

    for layer in layers {
        match layer {
            LayerSpec::Dense { units } => {
                let in_f = cur_shape[0];
                let w = &params[off..off + in_f * units];
                let b = &params[off + in_f * units..off + in_f * units + units];
                off += in_f * units + units;
                for row in cur.iter_mut() {
                    let mut y = b.to_vec();
                    for (i, &xv) in row.iter().enumerate() {
                        for (j, yv) in y.iter_mut().enumerate() {
                            *yv += xv * w[i * units + j];
                        }
                    }
                    *row = y;
                }
                cur_shape = vec![*units];
            }
            LayerSpec::Conv2D { filters, kernel, stride } => {
                let (h, w_, c) = shape3(&cur_shape);
                let conv = RefConv {
                    in_h: h,
                    in_w: w_,
                    in_c: c,
                    kh: kernel.0,
                    kw: kernel.1,
                    stride: *stride,
                    filters: *filters,
                };
                let k = &params[off..off + conv.kernel_len()];
                let b = &params[off + conv.kernel_len()..off + conv.kernel_len() + filters];
                off += conv.kernel_len() + filters;
                for row in cur.iter_mut() {
                    *row = conv.forward(row, k, b);
                }
                cur_shape = vec![conv.out_h(), conv.out_w(), *filters];
            }
            LayerSpec::ConvT2D { filters, kernel, stride } => {
                let (h, w_, c) = shape3(&cur_shape);
                let conv = RefConv {
                    in_h: h * stride,
                    in_w: w_ + kernel.1 - 1,
                    in_c: *filters,
                    kh: kernel.0,
                    kw: kernel.1,
                    stride: *stride,
                    filters: c,
                };
                let k = &params[off..off + conv.kernel_len()];
                let b = &params[off + conv.kernel_len()..off + conv.kernel_len() + conv.in_c];
                off += conv.kernel_len() + conv.in_c;
                for row in cur.iter_mut() {
                    *row = conv.adjoint(row, k, b);
                }
                cur_shape = vec![conv.in_h, conv.in_w, conv.in_c];
            }
            LayerSpec::Residual { filters, kernel } => {
                let (h, w_, c) = shape3(&cur_shape);
                assert_eq!(c, *filters);
                let conv = RefConv {
                    in_h: h,
                    in_w: w_,
                    in_c: c,
                    kh: *kernel,
                    kw: 1,
                    stride: 1,
                    filters: *filters,
                };
                let klen = conv.kernel_len();
                let k1 = &params[off..off + klen];
                let b1 = &params[off + klen..off + klen + filters];
                let k2 = &params[off + klen + filters..off + 2 * klen + filters];
                let b2 = &params[off + 2 * klen + filters..off + 2 * (klen + filters)];
                off += 2 * (klen + filters);
                for row in cur.iter_mut() {
                    let t1 = conv.forward(row, k1, b1);
                    mask.extend(t1.iter().map(|v| *v > 0.0));
                    let a1: Vec<f64> = t1.iter().map(|v| v.max(0.0)).collect();
                    let t2 = conv.forward(&a1, k2, b2);
                    let s: Vec<f64> = t2.iter().zip(row.iter()).map(|(a, b)| a + b).collect();
                    mask.extend(s.iter().map(|v| *v > 0.0));
                    *row = s.iter().map(|v| v.max(0.0)).collect();
                }
            }
            LayerSpec::ReLU => {
                for row in cur.iter_mut() {
                    for v in row.iter_mut() {
                        mask.push(*v > 0.0);
                        *v = v.max(0.0);
                    }
                }
            }
            LayerSpec::Sigmoid => {
                for row in cur.iter_mut() {
                    for v in row.iter_mut() {
                        *v = 1.0 / (1.0 + (-*v).exp());
                    }
                }
            }
            LayerSpec::Softmax => {
                let cols = *cur_shape.last().unwrap();
                for row in cur.iter_mut() {
                    for chunk in row.chunks_mut(cols) {
                        let max = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = chunk.iter().map(|v| (v - max).exp()).sum();
                        for v in chunk.iter_mut() {
                            *v = (*v - max).exp() / denom;
                        }
                    }
                }
            }
            LayerSpec::Flatten => {
                cur_shape = vec![cur_shape.iter().product()];
            }
            LayerSpec::Reshape { shape } => {
                cur_shape = shape.clone();
            }
            LayerSpec::BatchNormFree => {}
        }
    }
    cur.concat()
}

fn ref_loss(kind: LossKind, pred: &[f64], target: &[f64], rows: usize) -> f64 {
    let eps = 1e-7;
    match kind {
        LossKind::Mse => {
            pred.iter()
                .zip(target)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / pred.len() as f64
        }
        LossKind::Bce => {
            pred.iter()
                .zip(target)
                .map(|(p, t)| {
                    let p = p.clamp(eps, 1.0 - eps);
                    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / pred.len() as f64
        }
        LossKind::CrossEntropy => {
            pred.iter()
                .zip(target)
                .map(|(p, t)| -t * p.clamp(eps, 1.0 - eps).ln())
                .sum::<f64>()
                / rows as f64
        }
        LossKind::GaussianKl => {
            let cols = pred.len() / rows;
            let half = cols / 2;
            let mut total = 0.0;
            for row in pred.chunks(cols) {
                for d in 0..half {
                    let (mu, lv) = (row[d], row[half + d]);
                    total += (-0.5 * (1.0 + lv - mu * mu - lv.exp())).max(0.0);
                }
            }
            total / rows as f64
        }
    }
}

// ---------------------------------------------------------------------------
// the check itself
// ---------------------------------------------------------------------------

pub struct Case {
    pub name: &'static str,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub loss: LossKind,
    pub batch: usize,
    /// Builds a target for the reference output of the right length.
    pub target: fn(&[f64], usize) -> Vec<f64>,
}

pub fn random_target(out: &[f64], _rows: usize) -> Vec<f64> {
    out.iter()
        .enumerate()
        .map(|(i, _)| ((i as f64 * 0.773).sin() * 0.4) + 0.5)
        .collect()
}

pub fn onehot_target(out: &[f64], rows: usize) -> Vec<f64> {
    let cols = out.len() / rows;
    let mut t = vec![0.0; out.len()];
    for r in 0..rows {
        t[r * cols + (r * 3 + 1) % cols] = 1.0;
    }
    t
}

pub fn run_case(case: &Case) -> f64 {
    let net = Network::new(&case.input_shape, case.layers.clone()).expect(case.name);
    let mut rng = openrf_core::seed::stream(0xfd, case.name.len() as u64);
    let mut params = net.init_params(1234 + case.name.len() as u64);
    // keep biases away from zero so their gradients are exercised too
    for v in params.as_mut_slice().iter_mut() {
        if *v == 0.0 {
            *v = rng.gen_range(-0.1..0.1);
        }
    }
    let per_sample: usize = case.input_shape.iter().product();
    let input_data: Vec<f32> = (0..case.batch * per_sample)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let mut in_shape = vec![case.batch];
    in_shape.extend_from_slice(&case.input_shape);
    let input = Tensor::from_vec(&in_shape, input_data.clone());

    // analytic gradients through the production path
    let cache = net.forward_cached(&params, &input).unwrap();
    let out = cache.output().clone();
    let rows = case.batch;
    let target_f64 = (case.target)(
        &out.data().iter().map(|&v| v as f64).collect::<Vec<_>>(),
        rows,
    );
    let target = Tensor::from_vec(
        out.shape(),
        target_f64.iter().map(|&v| v as f32).collect(),
    );
    let (_, grad) = loss_grad(case.loss, &out, &target).unwrap();
    let (pgrads, igrad) = net.backward(&params, &cache, &grad);

    // reference loss as a function of (params, input)
    let p64: Vec<f64> = params.as_slice().iter().map(|&v| v as f64).collect();
    let x64: Vec<f64> = input_data.iter().map(|&v| v as f64).collect();
    let eval = |p: &[f64], x: &[f64]| -> (f64, Vec<bool>) {
        let mut mask = Vec::new();
        let out = ref_forward(&case.input_shape, &case.layers, p, x, case.batch, &mut mask);
        (ref_loss(case.loss, &out, &target_f64, rows), mask)
    };

    let mut max_rel: f64 = 0.0;
    let mut skipped = 0usize;
    let mut checked = 0usize;
    {
        let mut check = |analytic: f64, up: (f64, Vec<bool>), down: (f64, Vec<bool>)| {
            if up.1 != down.1 {
                // the probe interval crosses a ReLU kink; the derivative is
                // not defined across it, so the comparison is meaningless
                skipped += 1;
                return;
            }
            checked += 1;
            let numeric = (up.0 - down.0) / (2.0 * H);
            let denom = analytic.abs().max(numeric.abs()).max(1e-2);
            max_rel = max_rel.max((analytic - numeric).abs() / denom);
        };

        // every parameter
        let mut p_pert = p64.clone();
        for i in 0..p64.len() {
            p_pert[i] = p64[i] + H;
            let up = eval(&p_pert, &x64);
            p_pert[i] = p64[i] - H;
            let down = eval(&p_pert, &x64);
            p_pert[i] = p64[i];
            check(pgrads[i] as f64, up, down);
        }
        // every input coordinate
        let mut x_pert = x64.clone();
        for i in 0..x64.len() {
            x_pert[i] = x64[i] + H;
            let up = eval(&p64, &x_pert);
            x_pert[i] = x64[i] - H;
            let down = eval(&p64, &x_pert);
            x_pert[i] = x64[i];
            check(igrad.data()[i] as f64, up, down);
        }
    }
    assert!(
        skipped * 5 < checked,
        "{}: too many kink crossings ({skipped} of {})",
        case.name,
        skipped + checked
    );
    max_rel
}

pub fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "dense_mse",
            input_shape: vec![6],
            layers: vec![LayerSpec::Dense { units: 4 }, LayerSpec::Dense { units: 3 }],
            loss: LossKind::Mse,
            batch: 3,
            target: random_target,
        },
        Case {
            name: "dense_relu_sigmoid_bce",
            input_shape: vec![5],
            layers: vec![
                LayerSpec::Dense { units: 7 },
                LayerSpec::ReLU,
                LayerSpec::Dense { units: 4 },
                LayerSpec::Sigmoid,
            ],
            loss: LossKind::Bce,
            batch: 2,
            target: random_target,
        },
        Case {
            name: "conv_stride1_mse",
            input_shape: vec![7, 2, 1],
            layers: vec![
                LayerSpec::Conv2D { filters: 3, kernel: (3, 2), stride: 1 },
                LayerSpec::ReLU,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 4 },
            ],
            loss: LossKind::Mse,
            batch: 2,
            target: random_target,
        },
        Case {
            name: "conv_stride2_softmax_ce",
            input_shape: vec![8, 2, 1],
            layers: vec![
                LayerSpec::BatchNormFree,
                LayerSpec::Conv2D { filters: 4, kernel: (3, 2), stride: 2 },
                LayerSpec::ReLU,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 5 },
                LayerSpec::Softmax,
            ],
            loss: LossKind::CrossEntropy,
            batch: 3,
            target: onehot_target,
        },
        Case {
            name: "convt_stride2_mse",
            input_shape: vec![4, 1, 3],
            layers: vec![
                LayerSpec::ConvT2D { filters: 2, kernel: (3, 2), stride: 2 },
                LayerSpec::ReLU,
                LayerSpec::ConvT2D { filters: 1, kernel: (1, 1), stride: 1 },
            ],
            loss: LossKind::Mse,
            batch: 2,
            target: random_target,
        },
        Case {
            name: "residual_softmax_ce",
            input_shape: vec![6, 1, 3],
            layers: vec![
                LayerSpec::Conv2D { filters: 4, kernel: (3, 1), stride: 1 },
                LayerSpec::ReLU,
                LayerSpec::Residual { filters: 4, kernel: 3 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 3 },
                LayerSpec::Softmax,
            ],
            loss: LossKind::CrossEntropy,
            batch: 2,
            target: onehot_target,
        },
        Case {
            name: "dense_gaussian_kl",
            input_shape: vec![4],
            layers: vec![
                LayerSpec::Dense { units: 6 },
                LayerSpec::ReLU,
                LayerSpec::Dense { units: 8 },
            ],
            loss: LossKind::GaussianKl,
            batch: 3,
            target: |out, _| vec![0.0; out.len()],
        },
        Case {
            name: "reshape_pipeline_mse",
            input_shape: vec![6, 2, 1],
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 8 },
                LayerSpec::Reshape { shape: vec![4, 1, 2] },
                LayerSpec::Conv2D { filters: 2, kernel: (2, 1), stride: 1 },
            ],
            loss: LossKind::Mse,
            batch: 2,
            target: random_target,
        },
    ]
}

