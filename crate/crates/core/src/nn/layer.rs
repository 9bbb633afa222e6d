//! Layer descriptors and convolution geometry.
//!
//! Inputs to convolutional stacks are `(height, width, channels)` images; a
//! signal sample enters as 256×2×1 so convolution slides along time only.
//! Height uses "same"-style padding (`out_h = ceil(in_h / stride)`), width is
//! unpadded with stride fixed at 1 (`out_w = in_w - kw + 1`). Transposed
//! convolution is the exact adjoint of that map.

use serde::{Deserialize, Serialize};

/// One layer of a [`crate::nn::Network`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense { units: usize },
    /// 2-D convolution, stride `(stride, 1)`.
    Conv2D { filters: usize, kernel: (usize, usize), stride: usize },
    /// Transposed 2-D convolution, stride `(stride, 1)`.
    ConvT2D { filters: usize, kernel: (usize, usize), stride: usize },
    /// Two same-shape convolutions with a skip connection:
    /// relu(conv(relu(conv(x))) + x). Input channels must equal `filters`.
    Residual { filters: usize, kernel: usize },
    ReLU,
    Sigmoid,
    /// Row-wise softmax over the last dimension.
    Softmax,
    Flatten,
    Reshape { shape: Vec<usize> },
    /// No-op marker: this stack deliberately carries no normalization layers.
    BatchNormFree,
}

/// Resolved geometry of one convolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub filters: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
}

impl ConvGeom {
    /// Geometry for a forward convolution over `(in_h, in_w, in_c)`.
    pub fn forward(
        input: &[usize],
        filters: usize,
        kernel: (usize, usize),
        stride: usize,
    ) -> Result<Self, String> {
        let [in_h, in_w, in_c] = three(input)?;
        let (kh, kw) = kernel;
        if kh == 0 || kw == 0 || stride == 0 || filters == 0 {
            return Err("kernel, stride and filters must be positive".into());
        }
        if in_w < kw {
            return Err(format!("input width {in_w} smaller than kernel width {kw}"));
        }
        let out_h = in_h.div_ceil(stride);
        let out_w = in_w - kw + 1;
        let pad_total = ((out_h - 1) * stride + kh).saturating_sub(in_h);
        Ok(ConvGeom {
            in_h,
            in_w,
            in_c,
            kh,
            kw,
            stride,
            filters,
            out_h,
            out_w,
            pad_top: pad_total / 2,
        })
    }

    /// Geometry of the virtual convolution whose adjoint realizes a
    /// transposed convolution from `input` to `(in_h*stride, in_w+kw-1, filters)`.
    pub fn transposed(
        input: &[usize],
        filters: usize,
        kernel: (usize, usize),
        stride: usize,
    ) -> Result<Self, String> {
        let [h, w, c] = three(input)?;
        let (kh, kw) = kernel;
        let virt_in = [h * stride, w + kw - 1, filters];
        let geom = ConvGeom::forward(&virt_in, c, (kh, kw), stride)?;
        if geom.out_h != h || geom.out_w != w {
            return Err(format!(
                "transposed conv geometry does not invert: {:?} -> {:?}",
                virt_in,
                (geom.out_h, geom.out_w)
            ));
        }
        Ok(geom)
    }

    pub fn kernel_len(&self) -> usize {
        self.kh * self.kw * self.in_c * self.filters
    }

    pub fn col_width(&self) -> usize {
        self.kh * self.kw * self.in_c
    }

    pub fn out_numel(&self) -> usize {
        self.out_h * self.out_w * self.filters
    }

    pub fn in_numel(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }
}

fn three(shape: &[usize]) -> Result<[usize; 3], String> {
    match shape {
        [h, w, c] => Ok([*h, *w, *c]),
        other => Err(format!("expected (h, w, c) input, got {other:?}")),
    }
}

/// Unrolls one `(in_h, in_w, in_c)` sample into a `(out_h*out_w, kh*kw*in_c)`
/// patch matrix. Out-of-range rows read as zero (height padding).
pub fn im2col(g: &ConvGeom, x: &[f32], col: &mut [f32]) {
    debug_assert_eq!(x.len(), g.in_numel());
    debug_assert_eq!(col.len(), g.out_h * g.out_w * g.col_width());
    col.fill(0.0);
    let width = g.col_width();
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &mut col[(oy * g.out_w + ox) * width..(oy * g.out_w + ox + 1) * width];
            for ky in 0..g.kh {
                let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                if iy < 0 || iy >= g.in_h as isize {
                    continue;
                }
                let iy = iy as usize;
                for kx in 0..g.kw {
                    let ix = ox + kx;
                    let src = (iy * g.in_w + ix) * g.in_c;
                    let dst = (ky * g.kw + kx) * g.in_c;
                    row[dst..dst + g.in_c].copy_from_slice(&x[src..src + g.in_c]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds patch-matrix values back into an image.
pub fn col2im(g: &ConvGeom, col: &[f32], x: &mut [f32]) {
    debug_assert_eq!(x.len(), g.in_numel());
    debug_assert_eq!(col.len(), g.out_h * g.out_w * g.col_width());
    x.fill(0.0);
    let width = g.col_width();
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &col[(oy * g.out_w + ox) * width..(oy * g.out_w + ox + 1) * width];
            for ky in 0..g.kh {
                let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                if iy < 0 || iy >= g.in_h as isize {
                    continue;
                }
                let iy = iy as usize;
                for kx in 0..g.kw {
                    let ix = ox + kx;
                    let dst = (iy * g.in_w + ix) * g.in_c;
                    let src = (ky * g.kw + kx) * g.in_c;
                    for c in 0..g.in_c {
                        x[dst + c] += row[src + c];
                    }
                }
            }
        }
    }
}
