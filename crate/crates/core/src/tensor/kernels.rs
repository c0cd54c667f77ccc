//! Element-wise, pooling, resampling and layout kernels with their adjoints.

use super::Tensor;
use crate::error::{Error, Result};

fn broadcast_shape(a: [usize; 4], b: [usize; 4]) -> Result<[usize; 4]> {
    let mut out = [0; 4];
    for i in 0..4 {
        out[i] = match (a[i], b[i]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::Shape(format!(
                    "cannot broadcast {a:?} with {b:?}"
                )))
            }
        };
    }
    Ok(out)
}

fn strides(shape: [usize; 4], out: [usize; 4]) -> [usize; 4] {
    let dense = [
        shape[1] * shape[2] * shape[3],
        shape[2] * shape[3],
        shape[3],
        1,
    ];
    let mut s = [0; 4];
    for i in 0..4 {
        s[i] = if shape[i] == 1 && out[i] != 1 { 0 } else { dense[i] };
    }
    s
}

/// Element-wise `f(a, b)` with size-1 broadcasting on any axis.
pub fn broadcast_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let out = broadcast_shape(a.shape(), b.shape())?;
    let sa = strides(a.shape(), out);
    let sb = strides(b.shape(), out);
    let mut data = Vec::with_capacity(out.iter().product());
    for n in 0..out[0] {
        for c in 0..out[1] {
            for y in 0..out[2] {
                let ra = n * sa[0] + c * sa[1] + y * sa[2];
                let rb = n * sb[0] + c * sb[1] + y * sb[2];
                for x in 0..out[3] {
                    data.push(f(a.data()[ra + x * sa[3]], b.data()[rb + x * sb[3]]));
                }
            }
        }
    }
    Tensor::from_vec(out, data)
}

/// Sum `grad` over the axes on which `shape` was broadcast.
pub fn reduce_to_shape(grad: &Tensor, shape: [usize; 4]) -> Tensor {
    if grad.shape() == shape {
        return grad.clone();
    }
    let out = grad.shape();
    let s = strides(shape, out);
    let mut acc = Tensor::zeros(shape);
    let mut i = 0;
    for n in 0..out[0] {
        for c in 0..out[1] {
            for y in 0..out[2] {
                let r = n * s[0] + c * s[1] + y * s[2];
                for x in 0..out[3] {
                    acc.data_mut()[r + x * s[3]] += grad.data()[i];
                    i += 1;
                }
            }
        }
    }
    acc
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Mean over the spatial axes: `[N, C, H, W] -> [N, C, 1, 1]`.
pub fn mean_hw(x: &Tensor) -> Tensor {
    let [n, c, h, w] = x.shape();
    let inv = 1.0 / (h * w) as f64;
    Tensor::from_fn([n, c, 1, 1], |ni, ci, _, _| {
        x.plane(ni, ci).iter().sum::<f64>() * inv
    })
}

/// Spatial maximum and the flat in-plane index of each maximum.
pub fn max_hw(x: &Tensor) -> (Tensor, Vec<usize>) {
    let [n, c, _, _] = x.shape();
    let mut arg = Vec::with_capacity(n * c);
    let out = Tensor::from_fn([n, c, 1, 1], |ni, ci, _, _| {
        let (i, v) = argmax(x.plane(ni, ci));
        arg.push(i);
        v
    });
    (out, arg)
}

fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Mean over channels: `[N, C, H, W] -> [N, 1, H, W]`.
pub fn mean_c(x: &Tensor) -> Tensor {
    let [n, c, h, w] = x.shape();
    let mut out = Tensor::zeros([n, 1, h, w]);
    for ni in 0..n {
        let dst = out.plane_mut(ni, 0);
        for ci in 0..c {
            for (d, v) in dst.iter_mut().zip(x.plane(ni, ci)) {
                *d += v;
            }
        }
        dst.iter_mut().for_each(|d| *d /= c as f64);
    }
    out
}

/// Maximum over channels and the winning channel per pixel.
pub fn max_c(x: &Tensor) -> (Tensor, Vec<usize>) {
    let [n, c, h, w] = x.shape();
    let hw = h * w;
    let mut out = Tensor::full([n, 1, h, w], f64::NEG_INFINITY);
    let mut arg = vec![0usize; n * hw];
    for ni in 0..n {
        for ci in 0..c {
            let src = x.plane(ni, ci);
            let dst = out.plane_mut(ni, 0);
            for p in 0..hw {
                if src[p] > dst[p] {
                    dst[p] = src[p];
                    arg[ni * hw + p] = ci;
                }
            }
        }
    }
    (out, arg)
}

pub fn max_c_backward(grad: &Tensor, arg: &[usize], channels: usize) -> Tensor {
    let [n, _, h, w] = grad.shape();
    let hw = h * w;
    let mut gx = Tensor::zeros([n, channels, h, w]);
    for ni in 0..n {
        for p in 0..hw {
            let c = arg[ni * hw + p];
            let i = (ni * channels + c) * hw + p;
            gx.data_mut()[i] += grad.data()[ni * hw + p];
        }
    }
    gx
}

/// Non-overlapping `k x k` average pooling. Edge cells that only partly
/// overlap the input average their valid pixels.
pub fn avg_pool(x: &Tensor, k: usize) -> Tensor {
    let [n, c, h, w] = x.shape();
    let (ph, pw) = (h.div_ceil(k), w.div_ceil(k));
    let mut out = Tensor::zeros([n, c, ph, pw]);
    for ni in 0..n {
        for ci in 0..c {
            let src = x.plane(ni, ci);
            let dst = out.plane_mut(ni, ci);
            for py in 0..ph {
                let (y0, y1) = (py * k, ((py + 1) * k).min(h));
                for px in 0..pw {
                    let (x0, x1) = (px * k, ((px + 1) * k).min(w));
                    let mut s = 0.0;
                    for y in y0..y1 {
                        s += src[y * w + x0..y * w + x1].iter().sum::<f64>();
                    }
                    dst[py * pw + px] = s / ((y1 - y0) * (x1 - x0)) as f64;
                }
            }
        }
    }
    out
}

pub fn avg_pool_backward(grad: &Tensor, k: usize, input_shape: [usize; 4]) -> Tensor {
    let [n, c, h, w] = input_shape;
    let [_, _, ph, pw] = grad.shape();
    let mut gx = Tensor::zeros(input_shape);
    for ni in 0..n {
        for ci in 0..c {
            let g = grad.plane(ni, ci).to_vec();
            let dst = gx.plane_mut(ni, ci);
            for py in 0..ph {
                let (y0, y1) = (py * k, ((py + 1) * k).min(h));
                for px in 0..pw {
                    let (x0, x1) = (px * k, ((px + 1) * k).min(w));
                    let share = g[py * pw + px] / ((y1 - y0) * (x1 - x0)) as f64;
                    for y in y0..y1 {
                        dst[y * w + x0..y * w + x1]
                            .iter_mut()
                            .for_each(|d| *d += share);
                    }
                }
            }
        }
    }
    gx
}

/// Half-pixel-centred bilinear taps from a source axis of length `src` onto
/// a destination axis of length `dst`.
fn resample_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear resize of every plane to `out_h x out_w`.
pub fn upsample_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let [n, c, h, w] = x.shape();
    let ty = resample_taps(h, out_h);
    let tx = resample_taps(w, out_w);
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    for ni in 0..n {
        for ci in 0..c {
            let src = x.plane(ni, ci);
            let dst = out.plane_mut(ni, ci);
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                    let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                    dst[oy * out_w + ox] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
    }
    out
}

pub fn upsample_bilinear_backward(grad: &Tensor, input_shape: [usize; 4]) -> Tensor {
    let [n, c, h, w] = input_shape;
    let [_, _, out_h, out_w] = grad.shape();
    let ty = resample_taps(h, out_h);
    let tx = resample_taps(w, out_w);
    let mut gx = Tensor::zeros(input_shape);
    for ni in 0..n {
        for ci in 0..c {
            let g = grad.plane(ni, ci).to_vec();
            let dst = gx.plane_mut(ni, ci);
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let v = g[oy * out_w + ox];
                    dst[y0 * w + x0] += v * (1.0 - fy) * (1.0 - fx);
                    dst[y0 * w + x1] += v * (1.0 - fy) * fx;
                    dst[y1 * w + x0] += v * fy * (1.0 - fx);
                    dst[y1 * w + x1] += v * fy * fx;
                }
            }
        }
    }
    gx
}

/// Concatenate along the channel axis.
pub fn concat_c(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
    let [n, _, h, w] = first.shape();
    for p in parts {
        if p.n() != n || p.h() != h || p.w() != w {
            return Err(Error::Shape(format!(
                "concat: {:?} vs {:?}",
                p.shape(),
                first.shape()
            )));
        }
    }
    let c: usize = parts.iter().map(|p| p.c()).sum();
    let hw = h * w;
    let mut data = Vec::with_capacity(n * c * hw);
    for ni in 0..n {
        for p in parts {
            let stride = p.c() * hw;
            data.extend_from_slice(&p.data()[ni * stride..(ni + 1) * stride]);
        }
    }
    Tensor::from_vec([n, c, h, w], data)
}

/// Channels `start..start + len`.
pub fn slice_c(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let [n, c, h, w] = x.shape();
    if start + len > c {
        return Err(Error::Shape(format!(
            "slice {start}..{} of {c} channels",
            start + len
        )));
    }
    let hw = h * w;
    let mut data = Vec::with_capacity(n * len * hw);
    for ni in 0..n {
        let base = (ni * c + start) * hw;
        data.extend_from_slice(&x.data()[base..base + len * hw]);
    }
    Tensor::from_vec([n, len, h, w], data)
}

/// Scatter a channel-slice gradient back into a zero tensor of `shape`.
pub fn slice_c_backward(grad: &Tensor, start: usize, shape: [usize; 4]) -> Tensor {
    let [n, c, h, w] = shape;
    let hw = h * w;
    let len = grad.c();
    let mut gx = Tensor::zeros(shape);
    for ni in 0..n {
        let base = (ni * c + start) * hw;
        gx.data_mut()[base..base + len * hw]
            .copy_from_slice(&grad.data()[ni * len * hw..(ni + 1) * len * hw]);
    }
    gx
}

/// Quarter-turn of the spatial axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rotation {
    CounterClockwise,
    Clockwise,
}

impl Rotation {
    pub fn inverse(self) -> Self {
        match self {
            Rotation::CounterClockwise => Rotation::Clockwise,
            Rotation::Clockwise => Rotation::CounterClockwise,
        }
    }
}

pub fn rot90(x: &Tensor, rot: Rotation) -> Tensor {
    let [n, c, h, w] = x.shape();
    Tensor::from_fn([n, c, w, h], |ni, ci, y, xx| match rot {
        Rotation::CounterClockwise => x.at(ni, ci, xx, w - 1 - y),
        Rotation::Clockwise => x.at(ni, ci, h - 1 - xx, y),
    })
}

/// Mirror left-right.
pub fn flip_h(x: &Tensor) -> Tensor {
    let w = x.w();
    Tensor::from_fn(x.shape(), |n, c, y, xx| x.at(n, c, y, w - 1 - xx))
}

/// Mirror top-bottom.
pub fn flip_v(x: &Tensor) -> Tensor {
    let h = x.h();
    Tensor::from_fn(x.shape(), |n, c, y, xx| x.at(n, c, h - 1 - y, xx))
}

/// Horizontal forward difference `x[.., i + 1] - x[.., i]`; zero in the
/// last column.
pub fn diff_x(x: &Tensor) -> Tensor {
    let w = x.w();
    Tensor::from_fn(x.shape(), |n, c, y, xx| {
        if xx + 1 < w {
            x.at(n, c, y, xx + 1) - x.at(n, c, y, xx)
        } else {
            0.0
        }
    })
}

pub fn diff_x_backward(grad: &Tensor) -> Tensor {
    let w = grad.w();
    Tensor::from_fn(grad.shape(), |n, c, y, xx| {
        let mut g = 0.0;
        if xx + 1 < w {
            g -= grad.at(n, c, y, xx);
        }
        if xx > 0 {
            g += grad.at(n, c, y, xx - 1);
        }
        g
    })
}

/// Vertical forward difference; zero in the last row.
pub fn diff_y(x: &Tensor) -> Tensor {
    let h = x.h();
    Tensor::from_fn(x.shape(), |n, c, y, xx| {
        if y + 1 < h {
            x.at(n, c, y + 1, xx) - x.at(n, c, y, xx)
        } else {
            0.0
        }
    })
}

pub fn diff_y_backward(grad: &Tensor) -> Tensor {
    let h = grad.h();
    Tensor::from_fn(grad.shape(), |n, c, y, xx| {
        let mut g = 0.0;
        if y + 1 < h {
            g -= grad.at(n, c, y, xx);
        }
        if y > 0 {
            g += grad.at(n, c, y - 1, xx);
        }
        g
    })
}

/// Mean absolute difference.
pub fn l1_mean(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.expect_shape(b.shape())?;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(s / a.len() as f64)
}

/// Gradient of [`l1_mean`] with respect to `a`, scaled by `g`.
pub fn l1_mean_backward(a: &Tensor, b: &Tensor, g: f64) -> Tensor {
    let scale = g / a.len() as f64;
    Tensor {
        shape: a.shape(),
        data: a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| {
                let d = x - y;
                if d > 0.0 {
                    scale
                } else if d < 0.0 {
                    -scale
                } else {
                    0.0
                }
            })
            .collect(),
    }
}
