//! Primitive tensor operations and their backward rules.

use super::{Tape, Value};
use crate::error::{Error, Result};
use crate::tensor::{matmul_raw, Tensor};

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    fn binary_elementwise(
        &self,
        op: &'static str,
        a: Value,
        b: Value,
        f: impl Fn(f64, f64) -> f64,
        backward: impl Fn(&Tensor, &Tensor, &Tensor) -> Vec<Tensor> + 'static,
    ) -> Result<Value> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data: Vec<f64> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.record(out, vec![a.id, b.id], move |g| backward(g, &ta, &tb)))
    }

    /// Elementwise sum.
    pub fn add(&self, a: Value, b: Value) -> Result<Value> {
        self.binary_elementwise("add", a, b, |x, y| x + y, |g, _, _| {
            vec![g.clone(), g.clone()]
        })
    }

    /// Elementwise difference a - b.
    pub fn sub(&self, a: Value, b: Value) -> Result<Value> {
        self.binary_elementwise("sub", a, b, |x, y| x - y, |g, _, _| {
            let neg = Tensor::new(
                g.shape().to_vec(),
                g.data().iter().map(|x| -x).collect(),
            )
            .unwrap();
            vec![g.clone(), neg]
        })
    }

    /// Hadamard product.
    pub fn mul(&self, a: Value, b: Value) -> Result<Value> {
        self.binary_elementwise("mul", a, b, |x, y| x * y, |g, ta, tb| {
            let da: Vec<f64> = g.data().iter().zip(tb.data()).map(|(&g, &y)| g * y).collect();
            let db: Vec<f64> = g.data().iter().zip(ta.data()).map(|(&g, &x)| g * x).collect();
            vec![
                Tensor::new(g.shape().to_vec(), da).unwrap(),
                Tensor::new(g.shape().to_vec(), db).unwrap(),
            ]
        })
    }

    /// Broadcast multiply by a compile-time constant.
    pub fn scale(&self, a: Value, k: f64) -> Result<Value> {
        let ta = self.value(a);
        let out = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|x| x * k).collect(),
        )?;
        Ok(self.record(out, vec![a.id], move |g| {
            vec![Tensor::new(
                g.shape().to_vec(),
                g.data().iter().map(|x| x * k).collect(),
            )
            .unwrap()]
        }))
    }

    /// Broadcast multiply by a rank-0 value on the tape.
    pub fn mul_by_scalar(&self, a: Value, s: Value) -> Result<Value> {
        let (ta, ts) = (self.value(a), self.value(s));
        if !ts.is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "mul_by_scalar",
                lhs: ta.shape().to_vec(),
                rhs: ts.shape().to_vec(),
            });
        }
        let k = ts.item();
        let out = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|x| x * k).collect(),
        )?;
        Ok(self.record(out, vec![a.id, s.id], move |g| {
            let da: Vec<f64> = g.data().iter().map(|x| x * k).collect();
            let ds: f64 = g.data().iter().zip(ta.data()).map(|(&g, &x)| g * x).sum();
            vec![
                Tensor::new(g.shape().to_vec(), da).unwrap(),
                Tensor::scalar(ds),
            ]
        }))
    }

    /// Broadcast divide by a rank-0 value, with the quotient defined as
    /// zero (and zero gradients) when the divisor is exactly zero.
    pub fn div_by_scalar_guarded(&self, a: Value, s: Value) -> Result<Value> {
        let (ta, ts) = (self.value(a), self.value(s));
        if !ts.is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "div_by_scalar",
                lhs: ta.shape().to_vec(),
                rhs: ts.shape().to_vec(),
            });
        }
        let k = ts.item();
        let out = if k == 0.0 {
            Tensor::zeros(ta.shape().to_vec())
        } else {
            Tensor::new(
                ta.shape().to_vec(),
                ta.data().iter().map(|x| x / k).collect(),
            )?
        };
        Ok(self.record(out, vec![a.id, s.id], move |g| {
            if k == 0.0 {
                return vec![Tensor::zeros(g.shape().to_vec()), Tensor::scalar(0.0)];
            }
            let da: Vec<f64> = g.data().iter().map(|x| x / k).collect();
            let ds: f64 = g
                .data()
                .iter()
                .zip(ta.data())
                .map(|(&g, &x)| -g * x / (k * k))
                .sum();
            vec![
                Tensor::new(g.shape().to_vec(), da).unwrap(),
                Tensor::scalar(ds),
            ]
        }))
    }

    /// Rank-2 matrix product (m,k)·(k,n) -> (m,n).
    pub fn matmul(&self, a: Value, b: Value) -> Result<Value> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows() {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let out = Tensor::new(vec![m, n], matmul_raw(ta.data(), tb.data(), m, k, n))?;
        Ok(self.record(out, vec![a.id, b.id], move |g| {
            // dA = G · Bᵀ, dB = Aᵀ · G
            let bt = transpose_raw(tb.data(), k, n);
            let at = transpose_raw(ta.data(), m, k);
            let da = matmul_raw(g.data(), &bt, m, n, k);
            let db = matmul_raw(&at, g.data(), k, m, n);
            vec![
                Tensor::new(vec![m, k], da).unwrap(),
                Tensor::new(vec![k, n], db).unwrap(),
            ]
        }))
    }

    /// Affine map: x·w + b with the bias broadcast across rows.
    pub fn linear(&self, x: Value, w: Value, b: Value) -> Result<Value> {
        let y = self.matmul(x, w)?;
        self.add_row_broadcast(y, b)
    }

    /// x·w without bias.
    pub fn linear_nb(&self, x: Value, w: Value) -> Result<Value> {
        self.matmul(x, w)
    }

    /// Add a rank-1 vector to every row of a rank-2 tensor.
    pub fn add_row_broadcast(&self, a: Value, b: Value) -> Result<Value> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 1 || ta.cols() != tb.len() {
            return Err(Error::ShapeMismatch {
                op: "add_row_broadcast",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (r, c) = (ta.rows(), ta.cols());
        let mut data = ta.data().to_vec();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += tb.data()[j];
            }
        }
        let out = Tensor::new(vec![r, c], data)?;
        Ok(self.record(out, vec![a.id, b.id], move |g| {
            let mut db = vec![0.0; c];
            for i in 0..r {
                for j in 0..c {
                    db[j] += g.data()[i * c + j];
                }
            }
            vec![g.clone(), Tensor::from_vec(db)]
        }))
    }

    pub fn transpose(&self, a: Value) -> Result<Value> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(Error::ShapeMismatch {
                op: "transpose",
                lhs: ta.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (r, c) = (ta.rows(), ta.cols());
        let out = Tensor::new(vec![c, r], transpose_raw(ta.data(), r, c))?;
        Ok(self.record(out, vec![a.id], move |g| {
            vec![Tensor::new(vec![r, c], transpose_raw(g.data(), c, r)).unwrap()]
        }))
    }

    /// Same storage under a new shape.
    pub fn reshape(&self, a: Value, shape: Vec<usize>) -> Result<Value> {
        let ta = self.value(a);
        let out = ta.reshaped(shape)?;
        let orig = ta.shape().to_vec();
        Ok(self.record(out, vec![a.id], move |g| {
            vec![g.reshaped(orig.clone()).unwrap()]
        }))
    }

    /// View a rank-1 vector as a single-row matrix.
    pub fn row(&self, a: Value) -> Result<Value> {
        let n = self.data(a, Tensor::len);
        self.reshape(a, vec![1, n])
    }

    /// Concatenate along the last axis. Rank-1 inputs chain into a longer
    /// vector; rank-2 inputs must share their row count.
    pub fn concat_cols(&self, parts: &[Value]) -> Result<Value> {
        assert!(!parts.is_empty(), "concat_cols needs at least one input");
        let tensors: Vec<Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let rank = tensors[0].rank();
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        if rank == 1 {
            let mut data = Vec::new();
            let mut widths = Vec::new();
            for t in &tensors {
                if t.rank() != 1 {
                    return Err(Error::ShapeMismatch {
                        op: "concat_cols",
                        lhs: tensors[0].shape().to_vec(),
                        rhs: t.shape().to_vec(),
                    });
                }
                widths.push(t.len());
                data.extend_from_slice(t.data());
            }
            let out = Tensor::from_vec(data);
            Ok(self.record(out, ids, move |g| {
                let mut grads = Vec::with_capacity(widths.len());
                let mut off = 0;
                for &w in &widths {
                    grads.push(Tensor::from_vec(g.data()[off..off + w].to_vec()));
                    off += w;
                }
                grads
            }))
        } else {
            let rows = tensors[0].rows();
            let mut widths = Vec::new();
            for t in &tensors {
                if t.rank() != 2 || t.rows() != rows {
                    return Err(Error::ShapeMismatch {
                        op: "concat_cols",
                        lhs: tensors[0].shape().to_vec(),
                        rhs: t.shape().to_vec(),
                    });
                }
                widths.push(t.cols());
            }
            let total: usize = widths.iter().sum();
            let mut data = vec![0.0; rows * total];
            let mut off = 0;
            for (t, &w) in tensors.iter().zip(&widths) {
                for i in 0..rows {
                    data[i * total + off..i * total + off + w]
                        .copy_from_slice(&t.data()[i * w..(i + 1) * w]);
                }
                off += w;
            }
            let out = Tensor::new(vec![rows, total], data)?;
            Ok(self.record(out, ids, move |g| {
                let mut grads = Vec::with_capacity(widths.len());
                let mut off = 0;
                for &w in &widths {
                    let mut part = vec![0.0; rows * w];
                    for i in 0..rows {
                        part[i * w..(i + 1) * w]
                            .copy_from_slice(&g.data()[i * total + off..i * total + off + w]);
                    }
                    grads.push(Tensor::new(vec![rows, w], part).unwrap());
                    off += w;
                }
                grads
            }))
        }
    }

    /// Stack rank-2 blocks on top of each other (shared column count).
    pub fn concat_rows(&self, parts: &[Value]) -> Result<Value> {
        assert!(!parts.is_empty(), "concat_rows needs at least one input");
        let tensors: Vec<Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let cols = tensors[0].cols();
        let mut heights = Vec::new();
        let mut data = Vec::new();
        for t in &tensors {
            if t.rank() != 2 || t.cols() != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs: tensors[0].shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            heights.push(t.rows());
            data.extend_from_slice(t.data());
        }
        let total: usize = heights.iter().sum();
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let out = Tensor::new(vec![total, cols], data)?;
        Ok(self.record(out, ids, move |g| {
            let mut grads = Vec::with_capacity(heights.len());
            let mut off = 0;
            for &h in &heights {
                grads.push(
                    Tensor::new(vec![h, cols], g.data()[off * cols..(off + h) * cols].to_vec())
                        .unwrap(),
                );
                off += h;
            }
            grads
        }))
    }

    /// Sum of all entries, yielding a rank-0 scalar.
    pub fn sum_all(&self, a: Value) -> Result<Value> {
        let ta = self.value(a);
        let shape = ta.shape().to_vec();
        let out = Tensor::scalar(ta.data().iter().sum());
        Ok(self.record(out, vec![a.id], move |g| {
            vec![Tensor::filled(shape.clone(), g.item())]
        }))
    }

    /// Sum over one axis of a rank-2 tensor: axis 0 collapses rows, axis 1
    /// collapses columns.
    pub fn sum_axis(&self, a: Value, axis: usize) -> Result<Value> {
        let ta = self.value(a);
        if ta.rank() != 2 || axis > 1 {
            return Err(Error::ShapeMismatch {
                op: "sum_axis",
                lhs: ta.shape().to_vec(),
                rhs: vec![axis],
            });
        }
        let (r, c) = (ta.rows(), ta.cols());
        let out = if axis == 0 {
            let mut data = vec![0.0; c];
            for i in 0..r {
                for j in 0..c {
                    data[j] += ta.data()[i * c + j];
                }
            }
            Tensor::from_vec(data)
        } else {
            let mut data = vec![0.0; r];
            for i in 0..r {
                data[i] = ta.row(i).iter().sum();
            }
            Tensor::from_vec(data)
        };
        Ok(self.record(out, vec![a.id], move |g| {
            let mut da = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    da[i * c + j] = if axis == 0 { g.data()[j] } else { g.data()[i] };
                }
            }
            vec![Tensor::new(vec![r, c], da).unwrap()]
        }))
    }

    /// Mean over one axis of a rank-2 tensor.
    pub fn mean_axis(&self, a: Value, axis: usize) -> Result<Value> {
        let extent = self.data(a, |t| t.shape()[axis]);
        let s = self.sum_axis(a, axis)?;
        self.scale(s, 1.0 / extent as f64)
    }

    /// Squared L2 norm over the last axis: rank-1 -> rank-0, rank-2 [r,c]
    /// -> [r,1].
    pub fn sq_norm_last(&self, a: Value) -> Result<Value> {
        let ta = self.value(a);
        match ta.rank() {
            1 => {
                let out = Tensor::scalar(ta.data().iter().map(|x| x * x).sum());
                Ok(self.record(out, vec![a.id], move |g| {
                    let k = 2.0 * g.item();
                    vec![Tensor::from_vec(
                        ta.data().iter().map(|x| k * x).collect(),
                    )]
                }))
            }
            2 => {
                let (r, c) = (ta.rows(), ta.cols());
                let data: Vec<f64> = (0..r)
                    .map(|i| ta.row(i).iter().map(|x| x * x).sum())
                    .collect();
                let out = Tensor::new(vec![r, 1], data)?;
                Ok(self.record(out, vec![a.id], move |g| {
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        let k = 2.0 * g.data()[i];
                        for j in 0..c {
                            da[i * c + j] = k * ta.data()[i * c + j];
                        }
                    }
                    vec![Tensor::new(vec![r, c], da).unwrap()]
                }))
            }
            _ => Err(Error::ShapeMismatch {
                op: "sq_norm_last",
                lhs: ta.shape().to_vec(),
                rhs: vec![],
            }),
        }
    }

    /// SiLU activation x·σ(x), elementwise.
    pub fn silu(&self, a: Value) -> Result<Value> {
        let ta = self.value(a);
        let out = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|&x| x * sigmoid(x)).collect(),
        )?;
        Ok(self.record(out, vec![a.id], move |g| {
            let da: Vec<f64> = g
                .data()
                .iter()
                .zip(ta.data())
                .map(|(&g, &x)| {
                    let s = sigmoid(x);
                    g * s * (1.0 + x * (1.0 - s))
                })
                .collect();
            vec![Tensor::new(g.shape().to_vec(), da).unwrap()]
        }))
    }

    /// Elementwise exponential.
    pub fn exp(&self, a: Value) -> Result<Value> {
        let ta = self.value(a);
        let out = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|x| x.exp()).collect(),
        )?;
        let out_copy = out.clone();
        Ok(self.record(out, vec![a.id], move |g| {
            let da: Vec<f64> = g
                .data()
                .iter()
                .zip(out_copy.data())
                .map(|(&g, &y)| g * y)
                .collect();
            vec![Tensor::new(g.shape().to_vec(), da).unwrap()]
        }))
    }

    /// Elementwise square root with the derivative pinned to zero at zero
    /// (keeps |z| -> 0 limits NaN-free).
    pub fn sqrt(&self, a: Value) -> Result<Value> {
        let ta = self.value(a);
        let out = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|x| x.sqrt()).collect(),
        )?;
        let out_copy = out.clone();
        Ok(self.record(out, vec![a.id], move |g| {
            let da: Vec<f64> = g
                .data()
                .iter()
                .zip(out_copy.data())
                .map(|(&g, &y)| if y == 0.0 { 0.0 } else { g / (2.0 * y) })
                .collect();
            vec![Tensor::new(g.shape().to_vec(), da).unwrap()]
        }))
    }

    /// Numerically stable softmax over a rank-1 vector.
    pub fn softmax_1d(&self, a: Value) -> Result<Value> {
        let ta = self.value(a);
        if ta.rank() != 1 {
            return Err(Error::ShapeMismatch {
                op: "softmax_1d",
                lhs: ta.shape().to_vec(),
                rhs: vec![],
            });
        }
        let max = ta.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = ta.data().iter().map(|x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let y: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let out = Tensor::from_vec(y.clone());
        Ok(self.record(out, vec![a.id], move |g| {
            let dot: f64 = y.iter().zip(g.data()).map(|(&yi, &gi)| yi * gi).sum();
            let da: Vec<f64> = y
                .iter()
                .zip(g.data())
                .map(|(&yi, &gi)| yi * (gi - dot))
                .collect();
            vec![Tensor::from_vec(da)]
        }))
    }

    /// Softmax over a masked index set of a rank-1 logit vector. Entries
    /// outside the mask never reach the tape; the output has one weight
    /// per mask index, in mask order.
    pub fn softmax_masked(&self, logits: Value, mask: &[usize]) -> Result<Value> {
        let picked = self.gather_idx(logits, mask)?;
        self.softmax_1d(picked)
    }

    /// Frobenius norm of the whole tensor, yielding rank-0. Gradient is
    /// a/‖a‖, pinned to zero when the norm vanishes.
    pub fn frobenius(&self, a: Value) -> Result<Value> {
        let ta = self.value(a);
        let norm = ta.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let out = Tensor::scalar(norm);
        Ok(self.record(out, vec![a.id], move |g| {
            if norm == 0.0 {
                return vec![Tensor::zeros(ta.shape().to_vec())];
            }
            let k = g.item() / norm;
            vec![Tensor::new(
                ta.shape().to_vec(),
                ta.data().iter().map(|x| k * x).collect(),
            )
            .unwrap()]
        }))
    }

    /// Select rows of a rank-2 tensor; indices may repeat.
    pub fn gather_rows(&self, a: Value, idx: &[usize]) -> Result<Value> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(Error::ShapeMismatch {
                op: "gather_rows",
                lhs: ta.shape().to_vec(),
                rhs: vec![idx.len()],
            });
        }
        let (r, c) = (ta.rows(), ta.cols());
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::IndexOutOfBounds {
                op: "gather_rows",
                index: bad,
                extent: r,
            });
        }
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(ta.row(i));
        }
        let out = Tensor::new(vec![idx.len(), c], data)?;
        let idx = idx.to_vec();
        Ok(self.record(out, vec![a.id], move |g| {
            let mut da = vec![0.0; r * c];
            for (k, &i) in idx.iter().enumerate() {
                for j in 0..c {
                    da[i * c + j] += g.data()[k * c + j];
                }
            }
            vec![Tensor::new(vec![r, c], da).unwrap()]
        }))
    }

    /// Scatter-add rows of a rank-2 tensor into `out_rows` destination
    /// rows; the adjoint of `gather_rows`.
    pub fn scatter_add_rows(&self, a: Value, idx: &[usize], out_rows: usize) -> Result<Value> {
        let ta = self.value(a);
        if ta.rank() != 2 || ta.rows() != idx.len() {
            return Err(Error::ShapeMismatch {
                op: "scatter_add_rows",
                lhs: ta.shape().to_vec(),
                rhs: vec![idx.len()],
            });
        }
        let c = ta.cols();
        if let Some(&bad) = idx.iter().find(|&&i| i >= out_rows) {
            return Err(Error::IndexOutOfBounds {
                op: "scatter_add_rows",
                index: bad,
                extent: out_rows,
            });
        }
        let mut data = vec![0.0; out_rows * c];
        for (k, &i) in idx.iter().enumerate() {
            for j in 0..c {
                data[i * c + j] += ta.data()[k * c + j];
            }
        }
        let out = Tensor::new(vec![out_rows, c], data)?;
        let idx = idx.to_vec();
        Ok(self.record(out, vec![a.id], move |g| {
            let mut da = Vec::with_capacity(idx.len() * c);
            for &i in &idx {
                da.extend_from_slice(&g.data()[i * c..(i + 1) * c]);
            }
            vec![Tensor::new(vec![idx.len(), c], da).unwrap()]
        }))
    }

    /// Select entries of a rank-1 vector; indices may repeat.
    pub fn gather_idx(&self, a: Value, idx: &[usize]) -> Result<Value> {
        let ta = self.value(a);
        if ta.rank() != 1 {
            return Err(Error::ShapeMismatch {
                op: "gather_idx",
                lhs: ta.shape().to_vec(),
                rhs: vec![idx.len()],
            });
        }
        let n = ta.len();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfBounds {
                op: "gather_idx",
                index: bad,
                extent: n,
            });
        }
        let data: Vec<f64> = idx.iter().map(|&i| ta.data()[i]).collect();
        let out = Tensor::from_vec(data);
        let idx = idx.to_vec();
        Ok(self.record(out, vec![a.id], move |g| {
            let mut da = vec![0.0; n];
            for (k, &i) in idx.iter().enumerate() {
                da[i] += g.data()[k];
            }
            vec![Tensor::from_vec(da)]
        }))
    }

    /// Contiguous slice of a rank-1 vector.
    pub fn slice_range(&self, a: Value, start: usize, len: usize) -> Result<Value> {
        let ta = self.value(a);
        if ta.rank() != 1 || start + len > ta.len() {
            return Err(Error::IndexOutOfBounds {
                op: "slice_range",
                index: start + len,
                extent: ta.len(),
            });
        }
        let n = ta.len();
        let out = Tensor::from_vec(ta.data()[start..start + len].to_vec());
        Ok(self.record(out, vec![a.id], move |g| {
            let mut da = vec![0.0; n];
            da[start..start + len].copy_from_slice(g.data());
            vec![Tensor::from_vec(da)]
        }))
    }

    /// One row of a rank-2 tensor as a rank-1 vector.
    pub fn slice_row(&self, a: Value, r: usize) -> Result<Value> {
        let ta = self.value(a);
        if ta.rank() != 2 || r >= ta.rows() {
            return Err(Error::IndexOutOfBounds {
                op: "slice_row",
                index: r,
                extent: if ta.rank() == 2 { ta.rows() } else { 0 },
            });
        }
        let (rows, c) = (ta.rows(), ta.cols());
        let out = Tensor::from_vec(ta.row(r).to_vec());
        Ok(self.record(out, vec![a.id], move |g| {
            let mut da = vec![0.0; rows * c];
            da[r * c..(r + 1) * c].copy_from_slice(g.data());
            vec![Tensor::new(vec![rows, c], da).unwrap()]
        }))
    }

    /// Contiguous column block of a rank-2 tensor.
    pub fn slice_cols(&self, a: Value, start: usize, len: usize) -> Result<Value> {
        let ta = self.value(a);
        if ta.rank() != 2 || start + len > ta.cols() {
            return Err(Error::IndexOutOfBounds {
                op: "slice_cols",
                index: start + len,
                extent: if ta.rank() == 2 { ta.cols() } else { 0 },
            });
        }
        let (r, c) = (ta.rows(), ta.cols());
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&ta.data()[i * c + start..i * c + start + len]);
        }
        let out = Tensor::new(vec![r, len], data)?;
        Ok(self.record(out, vec![a.id], move |g| {
            let mut da = vec![0.0; r * c];
            for i in 0..r {
                da[i * c + start..i * c + start + len]
                    .copy_from_slice(&g.data()[i * len..(i + 1) * len]);
            }
            vec![Tensor::new(vec![r, c], da).unwrap()]
        }))
    }

    /// Scale each row of a rank-2 tensor by the matching entry of a
    /// rank-1 vector (or [r,1] column).
    pub fn scale_rows(&self, a: Value, s: Value) -> Result<Value> {
        let (ta, ts) = (self.value(a), self.value(s));
        let r = if ta.rank() == 2 { ta.rows() } else { 0 };
        let s_len = ts.len();
        let s_ok = (ts.rank() == 1 && s_len == r) || (ts.rank() == 2 && ts.cols() == 1 && s_len == r);
        if ta.rank() != 2 || !s_ok {
            return Err(Error::ShapeMismatch {
                op: "scale_rows",
                lhs: ta.shape().to_vec(),
                rhs: ts.shape().to_vec(),
            });
        }
        let c = ta.cols();
        let mut data = ta.data().to_vec();
        for i in 0..r {
            let k = ts.data()[i];
            for x in &mut data[i * c..(i + 1) * c] {
                *x *= k;
            }
        }
        let out = Tensor::new(vec![r, c], data)?;
        let s_shape = ts.shape().to_vec();
        Ok(self.record(out, vec![a.id, s.id], move |g| {
            let mut da = vec![0.0; r * c];
            let mut ds = vec![0.0; r];
            for i in 0..r {
                let k = ts.data()[i];
                for j in 0..c {
                    let gv = g.data()[i * c + j];
                    da[i * c + j] = gv * k;
                    ds[i] += gv * ta.data()[i * c + j];
                }
            }
            vec![
                Tensor::new(vec![r, c], da).unwrap(),
                Tensor::new(s_shape.clone(), ds).unwrap(),
            ]
        }))
    }

    /// Single entry of a tensor (flat index) as a rank-0 scalar.
    pub fn at(&self, a: Value, flat: usize) -> Result<Value> {
        let ta = self.value(a);
        if flat >= ta.len() {
            return Err(Error::IndexOutOfBounds {
                op: "at",
                index: flat,
                extent: ta.len(),
            });
        }
        let shape = ta.shape().to_vec();
        let out = Tensor::scalar(ta.data()[flat]);
        Ok(self.record(out, vec![a.id], move |g| {
            let mut da = Tensor::zeros(shape.clone());
            da.data_mut()[flat] = g.item();
            vec![da]
        }))
    }
}
