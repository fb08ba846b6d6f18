//! Elementwise, matrix, reduction, and shape ops on [`Tensor`].

use super::Tensor;
use crate::error::{Error, Result};

/// Broadcast pattern for binary elementwise ops (rhs relative to lhs).
#[derive(Clone, Copy, PartialEq)]
enum Bcast {
    Same,
    Row,    // rhs is [1, m] against lhs [n, m]
    Col,    // rhs is [n, 1] against lhs [n, m]
    Scalar, // rhs is [1] or [1, 1]
}

fn bcast_of(a: &[usize], b: &[usize]) -> Option<Bcast> {
    if a == b {
        return Some(Bcast::Same);
    }
    if b == [1] || b == [1, 1] {
        return Some(Bcast::Scalar);
    }
    if a.len() == 2 && b.len() == 2 {
        let (n, m) = (a[0], a[1]);
        if b[0] == 1 && b[1] == m {
            return Some(Bcast::Row);
        }
        if b[0] == n && b[1] == 1 {
            return Some(Bcast::Col);
        }
    }
    None
}

fn rhs_index(i: usize, cols: usize, bc: Bcast) -> usize {
    match bc {
        Bcast::Same => i,
        Bcast::Row => i % cols,
        Bcast::Col => i / cols,
        Bcast::Scalar => 0,
    }
}

impl Tensor {
    fn binary_elementwise(
        &self,
        rhs: &Tensor,
        op_name: &str,
        fwd: impl Fn(f64, f64) -> f64,
        // (lhs_val, rhs_val, upstream) -> (d_lhs, d_rhs)
        bwd: impl Fn(f64, f64, f64) -> (f64, f64) + 'static,
    ) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), rhs.shape());
        let bc = bcast_of(&sa, &sb).ok_or_else(|| {
            Error::Shape(format!("{op_name}: cannot broadcast {sb:?} against {sa:?}"))
        })?;
        let cols = if sa.len() == 2 { sa[1] } else { 1 };
        let out = self.with_data(|a| {
            rhs.with_data(|b| {
                a.iter()
                    .enumerate()
                    .map(|(i, &x)| fwd(x, b[rhs_index(i, cols, bc)]))
                    .collect::<Vec<_>>()
            })
        });
        Ok(Tensor::from_op(
            sa.clone(),
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g, parents| {
                let (lhs, rhs) = (&parents[0], &parents[1]);
                let la = lhs.with_data(|d| d.to_vec());
                let rb = rhs.with_data(|d| d.to_vec());
                let mut gl = vec![0.0; la.len()];
                let mut gr = vec![0.0; rb.len()];
                for (i, &gi) in g.iter().enumerate() {
                    let j = rhs_index(i, cols, bc);
                    let (dl, dr) = bwd(la[i], rb[j], gi);
                    gl[i] += dl;
                    gr[j] += dr;
                }
                lhs.accumulate_grad(&gl);
                rhs.accumulate_grad(&gr);
            }),
        ))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary_elementwise(rhs, "add", |a, b| a + b, |_, _, g| (g, g))
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary_elementwise(rhs, "sub", |a, b| a - b, |_, _, g| (g, -g))
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary_elementwise(rhs, "mul", |a, b| a * b, |a, b, g| (g * b, g * a))
    }

    fn unary(
        &self,
        fwd: impl Fn(f64) -> f64,
        // (input, output, upstream) -> d_input
        bwd: impl Fn(f64, f64, f64) -> f64 + 'static,
    ) -> Tensor {
        let out: Vec<f64> = self.with_data(|d| d.iter().map(|&x| fwd(x)).collect());
        let saved = out.clone();
        Tensor::from_op(
            self.shape(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let p = &parents[0];
                let gx: Vec<f64> = p.with_data(|x| {
                    x.iter()
                        .zip(saved.iter())
                        .zip(g.iter())
                        .map(|((&xi, &yi), &gi)| bwd(xi, yi, gi))
                        .collect()
                });
                p.accumulate_grad(&gx);
            }),
        )
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.unary(|x| c * x, move |_, _, g| c * g)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.unary(|x| x + c, |_, _, g| g)
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn exp(&self) -> Tensor {
        self.unary(f64::exp, |_, y, g| y * g)
    }

    pub fn ln(&self) -> Tensor {
        self.unary(f64::ln, |x, _, g| g / x)
    }

    pub fn tanh(&self) -> Tensor {
        self.unary(f64::tanh, |_, y, g| (1.0 - y * y) * g)
    }

    pub fn relu(&self) -> Tensor {
        self.unary(|x| x.max(0.0), |x, _, g| if x > 0.0 { g } else { 0.0 })
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(|x| 1.0 / (1.0 + (-x).exp()), |_, y, g| y * (1.0 - y) * g)
    }

    pub fn sqrt(&self) -> Tensor {
        self.unary(f64::sqrt, |_, y, g| g / (2.0 * y))
    }

    pub fn recip(&self) -> Tensor {
        self.unary(|x| 1.0 / x, |_, y, g| -y * y * g)
    }

    pub fn square(&self) -> Tensor {
        self.unary(|x| x * x, |x, _, g| 2.0 * x * g)
    }

    /// Matrix product. Accepts 2-D operands, or 3-D batched operands where
    /// the leading dimension matches or one side is 2-D (broadcast).
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), rhs.shape());
        let err = || {
            Error::Shape(format!(
                "matmul: incompatible shapes {sa:?} and {sb:?}"
            ))
        };
        match (sa.len(), sb.len()) {
            (2, 2) => {
                let (m, k) = (sa[0], sa[1]);
                let (k2, n) = (sb[0], sb[1]);
                if k != k2 {
                    return Err(err());
                }
                let out = self.with_data(|a| rhs.with_data(|b| mm(a, b, m, k, n)));
                Ok(Tensor::from_op(
                    vec![m, n],
                    out,
                    vec![self.clone(), rhs.clone()],
                    Box::new(move |g, parents| {
                        let (a, b) = (&parents[0], &parents[1]);
                        // dA = G B^T ; dB = A^T G
                        let ga = b.with_data(|bd| mm_nt(g, bd, m, n, k));
                        let gb = a.with_data(|ad| mm_tn(ad, g, m, k, n));
                        a.accumulate_grad(&ga);
                        b.accumulate_grad(&gb);
                    }),
                ))
            }
            (3, 2) | (2, 3) | (3, 3) => {
                let (batch, m, k, k2, n, a_batched, b_batched) = match (sa.len(), sb.len()) {
                    (3, 2) => (sa[0], sa[1], sa[2], sb[0], sb[1], true, false),
                    (2, 3) => (sb[0], sa[0], sa[1], sb[1], sb[2], false, true),
                    _ => {
                        if sa[0] != sb[0] {
                            return Err(err());
                        }
                        (sa[0], sa[1], sa[2], sb[1], sb[2], true, true)
                    }
                };
                if k != k2 {
                    return Err(err());
                }
                let out = self.with_data(|a| {
                    rhs.with_data(|b| {
                        let mut out = Vec::with_capacity(batch * m * n);
                        for t in 0..batch {
                            let ab = if a_batched { &a[t * m * k..(t + 1) * m * k] } else { a };
                            let bb = if b_batched { &b[t * k * n..(t + 1) * k * n] } else { b };
                            out.extend(mm(ab, bb, m, k, n));
                        }
                        out
                    })
                });
                Ok(Tensor::from_op(
                    vec![batch, m, n],
                    out,
                    vec![self.clone(), rhs.clone()],
                    Box::new(move |g, parents| {
                        let (a, b) = (&parents[0], &parents[1]);
                        let mut ga = vec![0.0; a.numel()];
                        let mut gb = vec![0.0; b.numel()];
                        a.with_data(|ad| {
                            b.with_data(|bd| {
                                for t in 0..batch {
                                    let gt = &g[t * m * n..(t + 1) * m * n];
                                    let ab = if a_batched { &ad[t * m * k..(t + 1) * m * k] } else { ad };
                                    let bb = if b_batched { &bd[t * k * n..(t + 1) * k * n] } else { bd };
                                    let da = mm_nt(gt, bb, m, n, k);
                                    let db = mm_tn(ab, gt, m, k, n);
                                    let ga_off = if a_batched { t * m * k } else { 0 };
                                    let gb_off = if b_batched { t * k * n } else { 0 };
                                    for (i, v) in da.iter().enumerate() {
                                        ga[ga_off + i] += v;
                                    }
                                    for (i, v) in db.iter().enumerate() {
                                        gb[gb_off + i] += v;
                                    }
                                }
                            })
                        });
                        a.accumulate_grad(&ga);
                        b.accumulate_grad(&gb);
                    }),
                ))
            }
            _ => Err(err()),
        }
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::Shape(format!("transpose expects 2-D, got {s:?}")));
        }
        let (n, m) = (s[0], s[1]);
        let out = self.with_data(|d| transpose_raw(d, n, m));
        Ok(Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                parents[0].accumulate_grad(&transpose_raw(g, m, n));
            }),
        ))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::Shape(format!(
                "reshape: {:?} incompatible with {:?}",
                self.shape(),
                shape
            )));
        }
        Ok(Tensor::from_op(
            shape,
            self.data(),
            vec![self.clone()],
            Box::new(move |g, parents| parents[0].accumulate_grad(g)),
        ))
    }

    pub fn sum_all(&self) -> Tensor {
        let s: f64 = self.with_data(|d| d.iter().sum());
        let n = self.numel();
        Tensor::from_op(
            vec![1],
            vec![s],
            vec![self.clone()],
            Box::new(move |g, parents| {
                parents[0].accumulate_grad(&vec![g[0]; n]);
            }),
        )
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.numel() as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Sum over one axis of a 2-D tensor, keeping the axis with size 1.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 || axis > 1 {
            return Err(Error::Shape(format!(
                "sum_axis: expects 2-D tensor and axis 0/1, got {s:?} axis {axis}"
            )));
        }
        let (n, m) = (s[0], s[1]);
        let (out_shape, out) = self.with_data(|d| {
            if axis == 1 {
                let v: Vec<f64> = (0..n).map(|i| d[i * m..(i + 1) * m].iter().sum()).collect();
                (vec![n, 1], v)
            } else {
                let mut v = vec![0.0; m];
                for i in 0..n {
                    for j in 0..m {
                        v[j] += d[i * m + j];
                    }
                }
                (vec![1, m], v)
            }
        });
        Ok(Tensor::from_op(
            out_shape,
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = vec![0.0; n * m];
                for i in 0..n {
                    for j in 0..m {
                        gx[i * m + j] = if axis == 1 { g[i] } else { g[j] };
                    }
                }
                parents[0].accumulate_grad(&gx);
            }),
        ))
    }

    /// Row-wise max of a 2-D tensor: [n, m] -> [n, 1].
    pub fn max_axis1(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::Shape(format!("max_axis1 expects 2-D, got {s:?}")));
        }
        let (n, m) = (s[0], s[1]);
        let mut argmax = vec![0usize; n];
        let out: Vec<f64> = self.with_data(|d| {
            (0..n)
                .map(|i| {
                    let row = &d[i * m..(i + 1) * m];
                    let (j, v) = row
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |acc, (j, &x)| {
                            if x > acc.1 { (j, x) } else { acc }
                        });
                    argmax[i] = j;
                    v
                })
                .collect()
        });
        Ok(Tensor::from_op(
            vec![n, 1],
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = vec![0.0; n * m];
                for i in 0..n {
                    gx[i * m + argmax[i]] = g[i];
                }
                parents[0].accumulate_grad(&gx);
            }),
        ))
    }

    /// Numerically stable softmax along an axis of a 2-D tensor.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let lanes = self.lanes(axis, "softmax")?;
        let out = self.with_data(|d| {
            let mut out = vec![0.0; d.len()];
            for lane in &lanes {
                let max = lane.iter().map(|&i| d[i]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for &i in lane {
                    let e = (d[i] - max).exp();
                    out[i] = e;
                    z += e;
                }
                for &i in lane {
                    out[i] /= z;
                }
            }
            out
        });
        let saved = out.clone();
        Ok(Tensor::from_op(
            self.shape(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = vec![0.0; saved.len()];
                for lane in &lanes {
                    let dot: f64 = lane.iter().map(|&i| g[i] * saved[i]).sum();
                    for &i in lane {
                        gx[i] = saved[i] * (g[i] - dot);
                    }
                }
                parents[0].accumulate_grad(&gx);
            }),
        ))
    }

    /// Stable log-sum-exp along an axis of a 2-D tensor, keepdim.
    pub fn logsumexp(&self, axis: usize) -> Result<Tensor> {
        let lanes = self.lanes(axis, "logsumexp")?;
        let s = self.shape();
        let out_shape = if axis == 1 { vec![s[0], 1] } else { vec![1, s[1]] };
        let out: Vec<f64> = self.with_data(|d| {
            lanes
                .iter()
                .map(|lane| {
                    let max = lane.iter().map(|&i| d[i]).fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = lane.iter().map(|&i| (d[i] - max).exp()).sum();
                    max + z.ln()
                })
                .collect()
        });
        let saved = out.clone();
        let numel = self.numel();
        Ok(Tensor::from_op(
            out_shape,
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let p = &parents[0];
                let gx: Vec<f64> = p.with_data(|d| {
                    let mut gx = vec![0.0; numel];
                    for (l, lane) in lanes.iter().enumerate() {
                        for &i in lane {
                            gx[i] = (d[i] - saved[l]).exp() * g[l];
                        }
                    }
                    gx
                });
                p.accumulate_grad(&gx);
            }),
        ))
    }

    /// Unit-normalize lanes along an axis. Lanes with norm below `eps`
    /// map to zero instead of NaN.
    pub fn l2_normalize(&self, axis: usize, eps: f64) -> Result<Tensor> {
        let lanes = self.lanes(axis, "l2_normalize")?;
        let mut norms = vec![0.0; lanes.len()];
        let out = self.with_data(|d| {
            let mut out = vec![0.0; d.len()];
            for (l, lane) in lanes.iter().enumerate() {
                let norm = lane.iter().map(|&i| d[i] * d[i]).sum::<f64>().sqrt();
                norms[l] = norm;
                if norm > eps {
                    for &i in lane {
                        out[i] = d[i] / norm;
                    }
                }
            }
            out
        });
        let saved = out.clone();
        Ok(Tensor::from_op(
            self.shape(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = vec![0.0; saved.len()];
                for (l, lane) in lanes.iter().enumerate() {
                    if norms[l] <= eps {
                        continue;
                    }
                    let dot: f64 = lane.iter().map(|&i| g[i] * saved[i]).sum();
                    for &i in lane {
                        gx[i] = (g[i] - saved[i] * dot) / norms[l];
                    }
                }
                parents[0].accumulate_grad(&gx);
            }),
        ))
    }

    /// Diagonal of a square 2-D tensor as [n, 1].
    pub fn take_diag(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 || s[0] != s[1] {
            return Err(Error::Shape(format!("take_diag expects square 2-D, got {s:?}")));
        }
        let n = s[0];
        let out: Vec<f64> = self.with_data(|d| (0..n).map(|i| d[i * n + i]).collect());
        Ok(Tensor::from_op(
            vec![n, 1],
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = vec![0.0; n * n];
                for i in 0..n {
                    gx[i * n + i] = g[i];
                }
                parents[0].accumulate_grad(&gx);
            }),
        ))
    }

    /// Concatenate 2-D tensors along an axis.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::Shape("concat of zero tensors".into()));
        }
        let shapes: Vec<Vec<usize>> = parts.iter().map(|t| t.shape()).collect();
        for s in &shapes {
            if s.len() != 2 {
                return Err(Error::Shape(format!("concat expects 2-D parts, got {s:?}")));
            }
        }
        let other = 1 - axis;
        let fixed = shapes[0][other];
        if shapes.iter().any(|s| s[other] != fixed) || axis > 1 {
            return Err(Error::Shape(format!(
                "concat axis {axis}: incompatible shapes {shapes:?}"
            )));
        }
        let total: usize = shapes.iter().map(|s| s[axis]).sum();
        let (n, m) = if axis == 0 { (total, fixed) } else { (fixed, total) };
        let mut out = vec![0.0; n * m];
        if axis == 0 {
            let mut row = 0;
            for (t, s) in parts.iter().zip(&shapes) {
                t.with_data(|d| out[row * m..(row + s[0]) * m].copy_from_slice(d));
                row += s[0];
            }
        } else {
            let mut col = 0;
            for (t, s) in parts.iter().zip(&shapes) {
                t.with_data(|d| {
                    for i in 0..n {
                        out[i * m + col..i * m + col + s[1]]
                            .copy_from_slice(&d[i * s[1]..(i + 1) * s[1]]);
                    }
                });
                col += s[1];
            }
        }
        let sizes: Vec<usize> = shapes.iter().map(|s| s[axis]).collect();
        Ok(Tensor::from_op(
            vec![n, m],
            out,
            parts.to_vec(),
            Box::new(move |g, parents| {
                let mut offset = 0;
                for (p, &size) in parents.iter().zip(&sizes) {
                    let mut gp = Vec::new();
                    if axis == 0 {
                        gp.extend_from_slice(&g[offset * m..(offset + size) * m]);
                    } else {
                        for i in 0..n {
                            gp.extend_from_slice(&g[i * m + offset..i * m + offset + size]);
                        }
                    }
                    p.accumulate_grad(&gp);
                    offset += size;
                }
            }),
        ))
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor> {
        self.slice(0, start, len)
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Tensor> {
        self.slice(1, start, len)
    }

    fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 || start + len > s[axis] {
            return Err(Error::Shape(format!(
                "slice axis {axis} [{start}..{}] out of bounds for {s:?}",
                start + len
            )));
        }
        let (n, m) = (s[0], s[1]);
        let (out_shape, out) = self.with_data(|d| {
            if axis == 0 {
                (vec![len, m], d[start * m..(start + len) * m].to_vec())
            } else {
                let mut v = Vec::with_capacity(n * len);
                for i in 0..n {
                    v.extend_from_slice(&d[i * m + start..i * m + start + len]);
                }
                (vec![n, len], v)
            }
        });
        Ok(Tensor::from_op(
            out_shape,
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = vec![0.0; n * m];
                if axis == 0 {
                    gx[start * m..(start + len) * m].copy_from_slice(g);
                } else {
                    for i in 0..n {
                        gx[i * m + start..i * m + start + len]
                            .copy_from_slice(&g[i * len..(i + 1) * len]);
                    }
                }
                parents[0].accumulate_grad(&gx);
            }),
        ))
    }

    /// Cumulative sum down the rows of a 2-D tensor.
    pub fn cumsum_rows(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::Shape(format!("cumsum_rows expects 2-D, got {s:?}")));
        }
        let (n, m) = (s[0], s[1]);
        let out = self.with_data(|d| {
            let mut out = d.to_vec();
            for i in 1..n {
                for j in 0..m {
                    out[i * m + j] += out[(i - 1) * m + j];
                }
            }
            out
        });
        Ok(Tensor::from_op(
            vec![n, m],
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                // reverse cumulative sum of upstream gradient
                let mut gx = g.to_vec();
                for i in (0..n.saturating_sub(1)).rev() {
                    for j in 0..m {
                        gx[i * m + j] += gx[(i + 1) * m + j];
                    }
                }
                parents[0].accumulate_grad(&gx);
            }),
        ))
    }

    fn lanes(&self, axis: usize, op: &str) -> Result<Vec<Vec<usize>>> {
        let s = self.shape();
        match s.len() {
            1 => {
                if axis != 0 {
                    return Err(Error::Shape(format!("{op}: axis {axis} invalid for 1-D")));
                }
                Ok(vec![(0..s[0]).collect()])
            }
            2 => {
                let (n, m) = (s[0], s[1]);
                match axis {
                    1 => Ok((0..n).map(|i| (i * m..(i + 1) * m).collect()).collect()),
                    0 => Ok((0..m).map(|j| (0..n).map(|i| i * m + j).collect()).collect()),
                    _ => Err(Error::Shape(format!("{op}: axis {axis} invalid for 2-D"))),
                }
            }
            _ => Err(Error::Shape(format!("{op}: expects 1-D or 2-D, got {s:?}"))),
        }
    }
}

pub(crate) fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for l in 0..k {
            let av = a[i * k + l];
            if av == 0.0 {
                continue;
            }
            let (orow, brow) = (&mut out[i * n..(i + 1) * n], &b[l * n..(l + 1) * n]);
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// a [m,n] * b^T where b is [k,n] -> [m,k]
fn mm_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        for l in 0..k {
            let mut s = 0.0;
            for j in 0..n {
                s += a[i * n + j] * b[l * n + j];
            }
            out[i * k + l] = s;
        }
    }
    out
}

/// a^T * g where a is [m,k], g is [m,n] -> [k,n]
fn mm_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        for l in 0..k {
            let av = a[i * k + l];
            if av == 0.0 {
                continue;
            }
            let (orow, grow) = (&mut out[l * n..(l + 1) * n], &g[i * n..(i + 1) * n]);
            for j in 0..n {
                orow[j] += av * grow[j];
            }
        }
    }
    out
}

fn transpose_raw(d: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = d[i * m + j];
        }
    }
    out
}
