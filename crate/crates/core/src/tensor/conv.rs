//! Convolution (im2col/col2im) and 2x2 max pooling.
//!
//! `conv2d` is cross-correlation (no kernel flip), the deep-learning
//! convention. Forward lowers each image to a column matrix so the kernel
//! application becomes one matrix product; backward rebuilds the columns
//! and scatters gradients back with col2im.

use super::ops::{matmul_raw, transpose_raw};
use super::tape::{self, BackFn};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
struct ConvGeom {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

fn out_extent(extent: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = extent + 2 * padding;
    if padded < kernel || !(padded - kernel).is_multiple_of(stride) {
        return Err(Error::Dimension(format!(
            "conv2d output size is not integral: extent {extent}, kernel {kernel}, \
             stride {stride}, padding {padding}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Lowers one image (C,H,W slice) into a [C*kh*kw, outH*outW] column matrix.
fn im2col(image: &[f64], g: ConvGeom, cols: &mut [f64]) {
    let l = g.col_cols();
    debug_assert_eq!(cols.len(), g.col_rows() * l);
    cols.fill(0.0);
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let out_row = &mut cols[row * l..(row + 1) * l];
                for oh in 0..g.out_h {
                    let ih = (oh * g.stride + ki) as isize - g.padding as isize;
                    if ih < 0 || ih >= g.height as isize {
                        continue;
                    }
                    for ow in 0..g.out_w {
                        let iw = (ow * g.stride + kj) as isize - g.padding as isize;
                        if iw < 0 || iw >= g.width as isize {
                            continue;
                        }
                        out_row[oh * g.out_w + ow] = plane[ih as usize * g.width + iw as usize];
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column-matrix gradient back onto one image.
fn col2im(cols: &[f64], g: ConvGeom, image_grad: &mut [f64]) {
    let l = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut image_grad[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let col_row = &cols[row * l..(row + 1) * l];
                for oh in 0..g.out_h {
                    let ih = (oh * g.stride + ki) as isize - g.padding as isize;
                    if ih < 0 || ih >= g.height as isize {
                        continue;
                    }
                    for ow in 0..g.out_w {
                        let iw = (ow * g.stride + kj) as isize - g.padding as isize;
                        if iw < 0 || iw >= g.width as isize {
                            continue;
                        }
                        plane[ih as usize * g.width + iw as usize] += col_row[oh * g.out_w + ow];
                    }
                }
            }
        }
    }
}

impl Tensor {
    /// 2-D cross-correlation: input [N,C,H,W] with kernel [F,C,kh,kw].
    pub fn conv2d(&self, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
        if self.shape().len() != 4 || kernel.shape().len() != 4 {
            return Err(Error::Dimension(format!(
                "conv2d needs 4-D input and kernel, got {:?} and {:?}",
                self.shape(),
                kernel.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::Dimension("conv2d stride must be positive".into()));
        }
        let (n, c, h, w) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
        );
        let (f, kc, kh, kw) = (
            kernel.shape()[0],
            kernel.shape()[1],
            kernel.shape()[2],
            kernel.shape()[3],
        );
        if kc != c {
            return Err(Error::Dimension(format!(
                "conv2d channel mismatch: input has {c}, kernel expects {kc}"
            )));
        }
        let out_h = out_extent(h, kh, stride, padding)?;
        let out_w = out_extent(w, kw, stride, padding)?;
        let geom = ConvGeom {
            channels: c,
            height: h,
            width: w,
            kh,
            kw,
            stride,
            padding,
            out_h,
            out_w,
        };

        let img_len = c * h * w;
        let l = geom.col_cols();
        let ckk = geom.col_rows();
        let mut cols = vec![0.0; ckk * l];
        let mut data = vec![0.0; n * f * l];
        for img in 0..n {
            im2col(&self.data()[img * img_len..(img + 1) * img_len], geom, &mut cols);
            let out = matmul_raw(kernel.data(), &cols, f, ckk, l);
            data[img * f * l..(img + 1) * f * l].copy_from_slice(&out);
        }

        let input = self.clone();
        let kern = kernel.clone();
        let back: BackFn = Box::new(move |g, ctx| {
            let mut cols = vec![0.0; ckk * l];
            let mut d_kernel = if ctx.needs(1) {
                Some(vec![0.0; f * ckk])
            } else {
                None
            };
            let mut d_input = if ctx.needs(0) {
                Some(vec![0.0; n * img_len])
            } else {
                None
            };
            let kt = if d_input.is_some() {
                Some(transpose_raw(kern.data(), f, ckk))
            } else {
                None
            };
            for img in 0..n {
                let g_out = &g[img * f * l..(img + 1) * f * l];
                if let Some(dk) = d_kernel.as_mut() {
                    im2col(
                        &input.data()[img * img_len..(img + 1) * img_len],
                        geom,
                        &mut cols,
                    );
                    // dK += dOut . cols^T
                    let colst = transpose_raw(&cols, ckk, l);
                    let contrib = matmul_raw(g_out, &colst, f, l, ckk);
                    for (acc, v) in dk.iter_mut().zip(&contrib) {
                        *acc += v;
                    }
                }
                if let Some(di) = d_input.as_mut() {
                    // dCols = K^T . dOut, then scatter back
                    let dcols = matmul_raw(kt.as_ref().unwrap(), g_out, ckk, f, l);
                    col2im(&dcols, geom, &mut di[img * img_len..(img + 1) * img_len]);
                }
            }
            if let Some(di) = d_input {
                ctx.add(0, di);
            }
            if let Some(dk) = d_kernel {
                ctx.add(1, dk);
            }
        });

        let connected =
            tape::is_active() && (tape::is_connected(self) || tape::is_connected(kernel));
        let out = Tensor::derived(vec![n, f, out_h, out_w], data, connected);
        if connected {
            tape::record(&[self, kernel], &out, back);
        }
        Ok(out)
    }

    /// 2x2 max pooling with stride 2; spatial dims must be even.
    pub fn maxpool2x2(&self) -> Result<Tensor> {
        if self.shape().len() != 4 {
            return Err(Error::Dimension(format!(
                "maxpool2x2 needs a 4-D tensor, got {:?}",
                self.shape()
            )));
        }
        let (n, c, h, w) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
        );
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Dimension(format!(
                "maxpool2x2 needs even spatial dims, got {h}x{w}"
            )));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut data = vec![0.0; n * c * oh * ow];
        let mut argmax = vec![0usize; n * c * oh * ow];
        for img in 0..n {
            for ch in 0..c {
                let plane = &self.data()[(img * c + ch) * h * w..(img * c + ch + 1) * h * w];
                let out_base = (img * c + ch) * oh * ow;
                for i in 0..oh {
                    for j in 0..ow {
                        let mut best_idx = (2 * i) * w + 2 * j;
                        let mut best = plane[best_idx];
                        for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = (2 * i + di) * w + (2 * j + dj);
                            if plane[idx] > best {
                                best = plane[idx];
                                best_idx = idx;
                            }
                        }
                        data[out_base + i * ow + j] = best;
                        argmax[out_base + i * ow + j] = (img * c + ch) * h * w + best_idx;
                    }
                }
            }
        }
        let in_len = self.len();
        Ok(finish_pool(self, vec![n, c, oh, ow], data, argmax, in_len))
    }
}

fn finish_pool(
    input: &Tensor,
    shape: Vec<usize>,
    data: Vec<f64>,
    argmax: Vec<usize>,
    in_len: usize,
) -> Tensor {
    let back: BackFn = Box::new(move |g, ctx| {
        if ctx.needs(0) {
            let mut di = vec![0.0; in_len];
            for (grad, &src) in g.iter().zip(&argmax) {
                di[src] += grad;
            }
            ctx.add(0, di);
        }
    });
    let connected = tape::is_active() && tape::is_connected(input);
    let out = Tensor::derived(shape, data, connected);
    if connected {
        tape::record(&[input], &out, back);
    }
    out
}
