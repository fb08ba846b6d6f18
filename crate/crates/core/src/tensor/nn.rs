//! Layers and composite ops built on the tensor primitives.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Fully-connected layer, weight [in, out] and bias [1, out].
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub fn new(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let w = Tensor::new(vec![fan_in, fan_out], w).unwrap();
        w.set_requires_grad(true);
        let b = Tensor::zeros(vec![1, fan_out]);
        b.set_requires_grad(true);
        Linear { w, b }
    }

    /// Final layers of regression heads start at zero so untrained output is zero.
    pub fn new_zeroed(fan_in: usize, fan_out: usize) -> Self {
        let w = Tensor::zeros(vec![fan_in, fan_out]);
        w.set_requires_grad(true);
        let b = Tensor::zeros(vec![1, fan_out]);
        b.set_requires_grad(true);
        Linear { w, b }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.w)?.add(&self.b)
    }
}

/// Layer normalization over the last axis of a 2-D tensor, with learnable
/// gain and bias of shape [1, d].
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        let gain = Tensor::new(vec![1, d], vec![1.0; d]).unwrap();
        gain.set_requires_grad(true);
        let bias = Tensor::zeros(vec![1, d]);
        bias.set_requires_grad(true);
        LayerNorm { gain, bias, eps: 1e-6 }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let d = x.shape()[1] as f64;
        let mean = x.sum_axis(1)?.scale(1.0 / d); // [n,1]
        let centered = x.sub(&mean)?;
        let var = centered.square().sum_axis(1)?.scale(1.0 / d); // [n,1]
        let inv_std = var.add_scalar(self.eps).sqrt().recip();
        centered.mul(&inv_std)?.mul(&self.gain)?.add(&self.bias)
    }
}

/// Inverted dropout; identity when `p == 0` or `rng` is `None` (eval mode).
pub fn dropout(x: &Tensor, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
    let Some(rng) = rng else { return Ok(x.scale(1.0)) };
    if p <= 0.0 {
        return Ok(x.scale(1.0));
    }
    if p >= 1.0 {
        return Err(Error::Config(format!("dropout rate {p} must be < 1")));
    }
    let keep = 1.0 - p;
    let mask: Vec<f64> = (0..x.numel())
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mask = Tensor::new(x.shape(), mask)?;
    x.mul(&mask)
}

/// Multi-head scaled dot-product attention over pre-projected inputs.
///
/// `q`, `k`, `v` are [n_q, d], [n_k, d], [n_k, d] with d divisible by
/// `heads`. Positional encodings, when given, are added to q and k before
/// the head split. Dropout applies to the attention weights in train mode.
pub fn attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    heads: usize,
    dropout_p: f64,
    rng: Option<&mut ChaCha8Rng>,
    q_pos: Option<&Tensor>,
    k_pos: Option<&Tensor>,
) -> Result<Tensor> {
    let d = q.shape()[1];
    if k.shape()[1] != d || v.shape()[1] != d {
        return Err(Error::Shape(format!(
            "attention: feature dims differ: q {:?} k {:?} v {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    if k.shape()[0] != v.shape()[0] {
        return Err(Error::Shape(format!(
            "attention: key/value counts differ: {:?} vs {:?}",
            k.shape(),
            v.shape()
        )));
    }
    if d % heads != 0 {
        return Err(Error::Config(format!(
            "attention: feature dim {d} not divisible by {heads} heads"
        )));
    }
    if let Some(qp) = q_pos {
        if qp.shape() != q.shape() {
            return Err(Error::Shape(format!(
                "attention: q_pos shape {:?} must match q {:?}",
                qp.shape(),
                q.shape()
            )));
        }
    }
    if let Some(kp) = k_pos {
        if kp.shape() != k.shape() {
            return Err(Error::Shape(format!(
                "attention: k_pos shape {:?} must match k {:?}",
                kp.shape(),
                k.shape()
            )));
        }
    }
    let q = match q_pos {
        Some(p) => q.add(p)?,
        None => q.clone(),
    };
    let k = match k_pos {
        Some(p) => k.add(p)?,
        None => k.clone(),
    };
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut rng = rng;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.slice_cols(h * dh, dh)?;
        let kh = k.slice_cols(h * dh, dh)?;
        let vh = v.slice_cols(h * dh, dh)?;
        let scores = qh.matmul(&kh.transpose()?)?.scale(scale);
        let mut weights = scores.softmax(1)?;
        weights = dropout(&weights, dropout_p, rng.as_deref_mut())?;
        outs.push(weights.matmul(&vh)?);
    }
    Tensor::concat(&outs, 1)
}

/// Bilinear sampling of a fixed scalar field at 2-D points.
///
/// `field` is row-major [h, w] with `value(x, y)` looked up at continuous
/// cell coordinates (`x` along width, `y` along height); gradients flow to
/// the point coordinates. Points outside the field sample the clamped edge
/// (zero gradient in the clamped direction).
pub fn sample_field(points: &Tensor, field: &[f64], h: usize, w: usize) -> Result<Tensor> {
    let s = points.shape();
    if s.len() != 2 || s[1] != 2 {
        return Err(Error::Shape(format!("sample_field expects [n,2] points, got {s:?}")));
    }
    let n = s[0];
    let field = field.to_vec();
    let value = move |ix: i64, iy: i64| -> f64 {
        let ix = ix.clamp(0, w as i64 - 1) as usize;
        let iy = iy.clamp(0, h as i64 - 1) as usize;
        field[iy * w + ix]
    };
    let mut out = vec![0.0; n];
    let mut grads = vec![0.0; 2 * n];
    points.with_data(|d| {
        for i in 0..n {
            let (x, y) = (d[2 * i], d[2 * i + 1]);
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let (ix, iy) = (x0 as i64, y0 as i64);
            let v00 = value(ix, iy);
            let v10 = value(ix + 1, iy);
            let v01 = value(ix, iy + 1);
            let v11 = value(ix + 1, iy + 1);
            out[i] = v00 * (1.0 - fx) * (1.0 - fy)
                + v10 * fx * (1.0 - fy)
                + v01 * (1.0 - fx) * fy
                + v11 * fx * fy;
            grads[2 * i] = (v10 - v00) * (1.0 - fy) + (v11 - v01) * fy;
            grads[2 * i + 1] = (v01 - v00) * (1.0 - fx) + (v11 - v10) * fx;
        }
    });
    Ok(Tensor::from_op(
        vec![n, 1],
        out,
        vec![points.clone()],
        Box::new(move |g, parents| {
            let gx: Vec<f64> = (0..2 * n).map(|j| grads[j] * g[j / 2]).collect();
            parents[0].accumulate_grad(&gx);
        }),
    ))
}
