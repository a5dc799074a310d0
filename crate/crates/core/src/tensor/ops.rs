//! Differentiable tensor operations.
//!
//! Every op computes its value eagerly, then records a backward rule on
//! the active tape when an operand is connected to it. Forward values are
//! pure functions of the inputs: repeated calls are bit-identical.

use super::tape::{self, BackFn};
use super::Tensor;
use crate::error::{Error, Result};

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{op}: operand shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Wraps the output of an op: records `back` if the tape wants it and
/// flags the result as differentiable accordingly.
fn finish(parents: &[&Tensor], shape: Vec<usize>, data: Vec<f64>, back: BackFn) -> Tensor {
    let connected = tape::is_active() && parents.iter().any(|p| tape::is_connected(p));
    let out = Tensor::derived(shape, data, connected);
    if connected {
        tape::record(parents, &out, back);
    }
    out
}

impl Tensor {
    /// Elementwise a + b.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape(self, other, "add")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a + b)
            .collect();
        Ok(finish(
            &[self, other],
            self.shape().to_vec(),
            data,
            Box::new(|g, ctx| {
                if ctx.needs(0) {
                    ctx.add(0, g.to_vec());
                }
                if ctx.needs(1) {
                    ctx.add(1, g.to_vec());
                }
            }),
        ))
    }

    /// Elementwise a - b.
    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape(self, other, "sub")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a - b)
            .collect();
        Ok(finish(
            &[self, other],
            self.shape().to_vec(),
            data,
            Box::new(|g, ctx| {
                if ctx.needs(0) {
                    ctx.add(0, g.to_vec());
                }
                if ctx.needs(1) {
                    ctx.add(1, g.iter().map(|x| -x).collect());
                }
            }),
        ))
    }

    /// Elementwise a * b (Hadamard product).
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape(self, other, "mul")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a * b)
            .collect();
        let a = self.clone();
        let b = other.clone();
        Ok(finish(
            &[self, other],
            self.shape().to_vec(),
            data,
            Box::new(move |g, ctx| {
                if ctx.needs(0) {
                    ctx.add(0, g.iter().zip(b.data()).map(|(g, b)| g * b).collect());
                }
                if ctx.needs(1) {
                    ctx.add(1, g.iter().zip(a.data()).map(|(g, a)| g * a).collect());
                }
            }),
        ))
    }

    /// Elementwise negation.
    pub fn neg(&self) -> Tensor {
        let data = self.data().iter().map(|a| -a).collect();
        finish(
            &[self],
            self.shape().to_vec(),
            data,
            Box::new(|g, ctx| {
                if ctx.needs(0) {
                    ctx.add(0, g.iter().map(|x| -x).collect());
                }
            }),
        )
    }

    /// Multiplication by a scalar constant.
    pub fn scale(&self, factor: f64) -> Tensor {
        let data = self.data().iter().map(|a| a * factor).collect();
        finish(
            &[self],
            self.shape().to_vec(),
            data,
            Box::new(move |g, ctx| {
                if ctx.needs(0) {
                    ctx.add(0, g.iter().map(|x| x * factor).collect());
                }
            }),
        )
    }

    /// Addition of a scalar constant (the one supported broadcast).
    pub fn add_scalar(&self, value: f64) -> Tensor {
        let data = self.data().iter().map(|a| a + value).collect();
        finish(
            &[self],
            self.shape().to_vec(),
            data,
            Box::new(|g, ctx| {
                if ctx.needs(0) {
                    ctx.add(0, g.to_vec());
                }
            }),
        )
    }

    /// Elementwise max(0, a). Subgradient at 0 is taken as 0.
    pub fn relu(&self) -> Tensor {
        let data = self.data().iter().map(|a| a.max(0.0)).collect();
        let a = self.clone();
        finish(
            &[self],
            self.shape().to_vec(),
            data,
            Box::new(move |g, ctx| {
                if ctx.needs(0) {
                    ctx.add(
                        0,
                        g.iter()
                            .zip(a.data())
                            .map(|(g, a)| if *a > 0.0 { *g } else { 0.0 })
                            .collect(),
                    );
                }
            }),
        )
    }

    /// Elementwise exponential.
    pub fn exp(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|a| a.exp()).collect();
        let out_data = data.clone();
        finish(
            &[self],
            self.shape().to_vec(),
            data,
            Box::new(move |g, ctx| {
                if ctx.needs(0) {
                    ctx.add(0, g.iter().zip(&out_data).map(|(g, e)| g * e).collect());
                }
            }),
        )
    }

    /// Elementwise natural log; every element must be positive.
    pub fn log(&self) -> Result<Tensor> {
        if let Some(bad) = self.data().iter().find(|x| **x <= 0.0) {
            return Err(Error::Domain(format!("log of non-positive value {bad}")));
        }
        let data = self.data().iter().map(|a| a.ln()).collect();
        let a = self.clone();
        Ok(finish(
            &[self],
            self.shape().to_vec(),
            data,
            Box::new(move |g, ctx| {
                if ctx.needs(0) {
                    ctx.add(0, g.iter().zip(a.data()).map(|(g, a)| g / a).collect());
                }
            }),
        ))
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&self) -> Tensor {
        let total: f64 = self.data().iter().sum();
        let n = self.len();
        finish(
            &[self],
            vec![1],
            vec![total],
            Box::new(move |g, ctx| {
                if ctx.needs(0) {
                    ctx.add(0, vec![g[0]; n]);
                }
            }),
        )
    }

    /// Matrix product of 2-D tensors: [m,k] x [k,n] -> [m,n].
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (a_shape, b_shape) = (self.shape(), other.shape());
        if a_shape.len() != 2 || b_shape.len() != 2 {
            return Err(Error::Dimension(format!(
                "matmul needs 2-D operands, got {a_shape:?} and {b_shape:?}"
            )));
        }
        let (m, k) = (a_shape[0], a_shape[1]);
        let (k2, n) = (b_shape[0], b_shape[1]);
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner dimensions disagree: {a_shape:?} x {b_shape:?}"
            )));
        }
        let data = matmul_raw(self.data(), other.data(), m, k, n);
        let a = self.clone();
        let b = other.clone();
        Ok(finish(
            &[self, other],
            vec![m, n],
            data,
            Box::new(move |g, ctx| {
                if ctx.needs(0) {
                    // dA = dC . B^T
                    let bt = transpose_raw(b.data(), k, n);
                    ctx.add(0, matmul_raw(g, &bt, m, n, k));
                }
                if ctx.needs(1) {
                    // dB = A^T . dC
                    let at = transpose_raw(a.data(), m, k);
                    ctx.add(1, matmul_raw(&at, g, k, m, n));
                }
            }),
        ))
    }

    /// Adds a row vector to every row of a [m,n] matrix (bias add).
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        if self.shape().len() != 2 || row.shape() != [self.shape()[1]] {
            return Err(Error::Dimension(format!(
                "add_row: matrix {:?} incompatible with row {:?}",
                self.shape(),
                row.shape()
            )));
        }
        let (m, n) = (self.shape()[0], self.shape()[1]);
        let mut data = self.data().to_vec();
        for i in 0..m {
            for (j, r) in row.data().iter().enumerate() {
                data[i * n + j] += r;
            }
        }
        Ok(finish(
            &[self, row],
            vec![m, n],
            data,
            Box::new(move |g, ctx| {
                if ctx.needs(0) {
                    ctx.add(0, g.to_vec());
                }
                if ctx.needs(1) {
                    let mut col_sum = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            col_sum[j] += g[i * n + j];
                        }
                    }
                    ctx.add(1, col_sum);
                }
            }),
        ))
    }

    /// Adds bias[f] to every element of channel f in a [N,F,H,W] tensor.
    pub fn add_channel_bias(&self, bias: &Tensor) -> Result<Tensor> {
        if self.shape().len() != 4 || bias.shape() != [self.shape()[1]] {
            return Err(Error::Dimension(format!(
                "add_channel_bias: tensor {:?} incompatible with bias {:?}",
                self.shape(),
                bias.shape()
            )));
        }
        let (n, f, h, w) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
        );
        let plane = h * w;
        let mut data = self.data().to_vec();
        for img in 0..n {
            for ch in 0..f {
                let base = (img * f + ch) * plane;
                let b = bias.data()[ch];
                for v in &mut data[base..base + plane] {
                    *v += b;
                }
            }
        }
        Ok(finish(
            &[self, bias],
            self.shape().to_vec(),
            data,
            Box::new(move |g, ctx| {
                if ctx.needs(0) {
                    ctx.add(0, g.to_vec());
                }
                if ctx.needs(1) {
                    let mut db = vec![0.0; f];
                    for img in 0..n {
                        for (ch, acc) in db.iter_mut().enumerate() {
                            let base = (img * f + ch) * plane;
                            *acc += g[base..base + plane].iter().sum::<f64>();
                        }
                    }
                    ctx.add(1, db);
                }
            }),
        ))
    }

    /// Row-wise stable softmax of a [m,C] matrix. Rows sum to 1 and the
    /// argmax of each row is preserved (softmax is monotone).
    pub fn softmax_rows(&self) -> Result<Tensor> {
        if self.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "softmax_rows needs a 2-D tensor, got {:?}",
                self.shape()
            )));
        }
        let (m, c) = (self.shape()[0], self.shape()[1]);
        let mut data = vec![0.0; m * c];
        for i in 0..m {
            let row = &self.data()[i * c..(i + 1) * c];
            softmax_into(row, &mut data[i * c..(i + 1) * c]);
        }
        let probs = data.clone();
        Ok(finish(
            &[self],
            vec![m, c],
            data,
            Box::new(move |g, ctx| {
                if ctx.needs(0) {
                    // dz = y .* (g - (y . g)) per row
                    let mut dz = vec![0.0; m * c];
                    for i in 0..m {
                        let y = &probs[i * c..(i + 1) * c];
                        let gr = &g[i * c..(i + 1) * c];
                        let dot: f64 = y.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for j in 0..c {
                            dz[i * c + j] = y[j] * (gr[j] - dot);
                        }
                    }
                    ctx.add(0, dz);
                }
            }),
        ))
    }

    /// Mean cross-entropy of logits [m,C] against class indices, as a
    /// scalar. Fused log-sum-exp forward; backward is
    /// (softmax(z) - onehot(y)) / m.
    pub fn cross_entropy_mean(&self, labels: &[usize]) -> Result<Tensor> {
        if self.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "cross_entropy_mean needs [batch, classes] logits, got {:?}",
                self.shape()
            )));
        }
        let (m, c) = (self.shape()[0], self.shape()[1]);
        if labels.len() != m {
            return Err(Error::Contract(format!(
                "cross_entropy_mean: {m} logit rows but {} labels",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::Contract(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = &self.data()[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        let z = self.clone();
        let labels: Vec<usize> = labels.to_vec();
        Ok(finish(
            &[self],
            vec![1],
            vec![total / m as f64],
            Box::new(move |g, ctx| {
                if ctx.needs(0) {
                    let scale = g[0] / m as f64;
                    let mut dz = vec![0.0; m * c];
                    for (i, &y) in labels.iter().enumerate() {
                        let row = &z.data()[i * c..(i + 1) * c];
                        softmax_into(row, &mut dz[i * c..(i + 1) * c]);
                        dz[i * c + y] -= 1.0;
                        for v in &mut dz[i * c..(i + 1) * c] {
                            *v *= scale;
                        }
                    }
                    ctx.add(0, dz);
                }
            }),
        ))
    }
}

pub(super) fn reshape(t: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let numel: usize = shape.iter().product();
    if numel != t.len() {
        return Err(Error::Dimension(format!(
            "cannot reshape {:?} ({} elements) to {shape:?} ({numel})",
            t.shape(),
            t.len()
        )));
    }
    Ok(finish(
        &[t],
        shape.to_vec(),
        t.data().to_vec(),
        Box::new(|g, ctx| {
            if ctx.needs(0) {
                ctx.add(0, g.to_vec());
            }
        }),
    ))
}

/// Stable softmax of one row into an output slice.
pub(crate) fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, z) in out.iter_mut().zip(row) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// C = A(m,k) . B(k,n), row-major, ikj order for cache locality.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}
