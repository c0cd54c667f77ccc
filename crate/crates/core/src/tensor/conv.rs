//! Stride-1 "same" 2D convolution with dilation, as im2col + GEMM.
//!
//! Zero padding of `dilation * (k - 1) / 2` keeps the spatial extent. Large
//! images are processed in horizontal bands so the column buffer stays small.

use super::Tensor;
use crate::error::{Error, Result};
use crate::parallel;

/// Upper bound on the im2col buffer, in elements.
const COLUMN_BUDGET: usize = 1 << 22;

struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    dilation: usize,
    pad: isize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn band_height(&self) -> usize {
        (COLUMN_BUDGET / (self.rows() * self.w).max(1)).clamp(1, self.h)
    }
}

fn check_shapes(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<()> {
    let [cout, cin, kh, kw] = weight.shape();
    if kh != kw || kh % 2 == 0 {
        return Err(Error::Shape(format!(
            "conv kernel must be square and odd, got {kh}x{kw}"
        )));
    }
    if x.c() != cin {
        return Err(Error::Shape(format!(
            "conv expects {cin} input channels, got {}",
            x.c()
        )));
    }
    if let Some(b) = bias {
        b.expect_shape([1, cout, 1, 1])?;
    }
    Ok(())
}

fn im2col_band(src: &[f64], g: &Geometry, y0: usize, y1: usize, cols: &mut [f64]) {
    let band = (y1 - y0) * g.w;
    let (h, w) = (g.h as isize, g.w as isize);
    for ci in 0..g.cin {
        let plane = &src[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let out = &mut cols[row * band..(row + 1) * band];
                let dy = (ky * g.dilation) as isize - g.pad;
                let dx = (kx * g.dilation) as isize - g.pad;
                let x_lo = (-dx).clamp(0, w) as usize;
                let x_hi = (w - dx).clamp(0, w) as usize;
                for (oy, y) in (y0..y1).enumerate() {
                    let dst = &mut out[oy * g.w..(oy + 1) * g.w];
                    let iy = y as isize + dy;
                    if iy < 0 || iy >= h || x_lo >= x_hi {
                        dst.fill(0.0);
                        continue;
                    }
                    let srow = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    dst[..x_lo].fill(0.0);
                    dst[x_hi..].fill(0.0);
                    let s0 = (x_lo as isize + dx) as usize;
                    dst[x_lo..x_hi].copy_from_slice(&srow[s0..s0 + (x_hi - x_lo)]);
                }
            }
        }
    }
}

fn col2im_band(cols: &[f64], g: &Geometry, y0: usize, y1: usize, dst: &mut [f64]) {
    let band = (y1 - y0) * g.w;
    let (h, w) = (g.h as isize, g.w as isize);
    for ci in 0..g.cin {
        let plane = &mut dst[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * band..(row + 1) * band];
                let dy = (ky * g.dilation) as isize - g.pad;
                let dx = (kx * g.dilation) as isize - g.pad;
                let x_lo = (-dx).clamp(0, w) as usize;
                let x_hi = (w - dx).clamp(0, w) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for (oy, y) in (y0..y1).enumerate() {
                    let iy = y as isize + dy;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let s = &src[oy * g.w + x_lo..oy * g.w + x_hi];
                    let d0 = iy as usize * g.w + (x_lo as isize + dx) as usize;
                    for (d, v) in plane[d0..d0 + s.len()].iter_mut().zip(s) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// `c = alpha * a * b + beta * c` on row-major matrices with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
    rsc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= (m - 1) * rsc as usize + n);
    // SAFETY: callers pass slices that cover every strided element of the
    // m x k, k x n and m x n operands.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            1,
        );
    }
}

pub fn conv2d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    dilation: usize,
) -> Result<Tensor> {
    check_shapes(x, weight, bias)?;
    let [n, cin, h, w] = x.shape();
    let [cout, _, k, _] = weight.shape();
    let g = Geometry {
        cin,
        h,
        w,
        k,
        dilation,
        pad: (dilation * (k - 1) / 2) as isize,
    };
    let hw = h * w;
    let rows = g.rows();
    let band_h = g.band_height();
    let mut out = Tensor::zeros([n, cout, h, w]);
    let in_stride = cin * hw;
    let wdata = weight.data();
    parallel::for_each_chunk_mut(out.data_mut(), cout * hw, |ni, dst| {
        let src = &x.data()[ni * in_stride..(ni + 1) * in_stride];
        let mut cols = vec![0.0; rows * band_h * w];
        let mut y0 = 0;
        while y0 < h {
            let y1 = (y0 + band_h).min(h);
            let band = (y1 - y0) * w;
            im2col_band(src, &g, y0, y1, &mut cols[..rows * band]);
            gemm(
                cout,
                rows,
                band,
                wdata,
                (rows as isize, 1),
                &cols,
                (band as isize, 1),
                0.0,
                &mut dst[y0 * w..],
                hw as isize,
            );
            y0 = y1;
        }
        if let Some(b) = bias {
            for (co, plane) in dst.chunks_mut(hw).enumerate() {
                let bv = b.data()[co];
                plane.iter_mut().for_each(|v| *v += bv);
            }
        }
    });
    Ok(out)
}

/// Gradients of a convolution with respect to its input (when
/// `need_input_grad`), weight and bias.
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    dilation: usize,
    grad_out: &Tensor,
    need_input_grad: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let [n, cin, h, w] = x.shape();
    let [cout, _, k, _] = weight.shape();
    let g = Geometry {
        cin,
        h,
        w,
        k,
        dilation,
        pad: (dilation * (k - 1) / 2) as isize,
    };
    let hw = h * w;
    let rows = g.rows();
    let band_h = g.band_height();
    let in_stride = cin * hw;
    let out_stride = cout * hw;
    let wdata = weight.data();

    let per_item = parallel::map_indices(n, |ni| {
        let src = &x.data()[ni * in_stride..(ni + 1) * in_stride];
        let gy = &grad_out.data()[ni * out_stride..(ni + 1) * out_stride];
        let mut gw = vec![0.0; cout * rows];
        let mut gb = vec![0.0; cout];
        let mut gx = if need_input_grad {
            vec![0.0; in_stride]
        } else {
            Vec::new()
        };
        let mut cols = vec![0.0; rows * band_h * w];
        let mut gcols = if need_input_grad {
            vec![0.0; rows * band_h * w]
        } else {
            Vec::new()
        };
        let mut y0 = 0;
        while y0 < h {
            let y1 = (y0 + band_h).min(h);
            let band = (y1 - y0) * w;
            im2col_band(src, &g, y0, y1, &mut cols[..rows * band]);
            // gw[cout, rows] += gy[cout, band] * cols[rows, band]^T
            gemm(
                cout,
                band,
                rows,
                &gy[y0 * w..],
                (hw as isize, 1),
                &cols,
                (1, band as isize),
                1.0,
                &mut gw,
                rows as isize,
            );
            if need_input_grad {
                // gcols[rows, band] = weight[cout, rows]^T * gy[cout, band]
                gemm(
                    rows,
                    cout,
                    band,
                    wdata,
                    (1, rows as isize),
                    &gy[y0 * w..],
                    (hw as isize, 1),
                    0.0,
                    &mut gcols[..rows * band],
                    band as isize,
                );
                col2im_band(&gcols[..rows * band], &g, y0, y1, &mut gx);
            }
            y0 = y1;
        }
        for (co, plane) in gy.chunks(hw).enumerate() {
            gb[co] = plane.iter().sum();
        }
        (gx, gw, gb)
    });

    let mut gw_total = vec![0.0; cout * rows];
    let mut gb_total = vec![0.0; cout];
    let mut gx_total = if need_input_grad {
        Vec::with_capacity(n * in_stride)
    } else {
        Vec::new()
    };
    for (gx, gw, gb) in per_item {
        gw_total.iter_mut().zip(&gw).for_each(|(a, b)| *a += b);
        gb_total.iter_mut().zip(&gb).for_each(|(a, b)| *a += b);
        gx_total.extend_from_slice(&gx);
    }
    let gx = need_input_grad.then(|| Tensor {
        shape: [n, cin, h, w],
        data: gx_total,
    });
    (
        gx,
        Tensor {
            shape: weight.shape(),
            data: gw_total,
        },
        Tensor {
            shape: [1, cout, 1, 1],
            data: gb_total,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
    }

    /// Direct nested-loop convolution.
    fn naive(x: &Tensor, w: &Tensor, b: &Tensor, d: usize) -> Tensor {
        let [n, cin, h, wd] = x.shape();
        let [cout, _, k, _] = w.shape();
        let pad = (d * (k - 1) / 2) as isize;
        Tensor::from_fn([n, cout, h, wd], |ni, co, y, xx| {
            let mut acc = b.data()[co];
            for ci in 0..cin {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = y as isize + (ky * d) as isize - pad;
                        let ix = xx as isize + (kx * d) as isize - pad;
                        if iy >= 0 && iy < h as isize && ix >= 0 && ix < wd as isize {
                            acc += w.at(co, ci, ky, kx) * x.at(ni, ci, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn matches_naive_loop_with_dilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(k, d) in &[(3, 1), (3, 2), (3, 4), (7, 1), (1, 1)] {
            let x = random([2, 3, 9, 11], &mut rng);
            let w = random([4, 3, k, k], &mut rng);
            let b = random([1, 4, 1, 1], &mut rng);
            let got = conv2d_forward(&x, &w, Some(&b), d).unwrap();
            let want = naive(&x, &w, &b, d);
            assert!(got.max_abs_diff(&want) < 1e-12, "k={k} d={d}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random([2, 2, 6, 5], &mut rng);
        let w = random([3, 2, 3, 3], &mut rng);
        let b = random([1, 3, 1, 1], &mut rng);
        let gy = random([2, 3, 6, 5], &mut rng);
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
            let y = conv2d_forward(x, w, Some(b), 2).unwrap();
            y.data().iter().zip(gy.data()).map(|(a, g)| a * g).sum()
        };
        let (gx, gw, gb) = conv2d_backward(&x, &w, 2, &gy, true);
        let gx = gx.unwrap();
        let eps = 1e-6;
        for i in 0..x.len() {
            let mut p = x.clone();
            p.data_mut()[i] += eps;
            let mut m = x.clone();
            m.data_mut()[i] -= eps;
            let fd = (loss(&p, &w, &b) - loss(&m, &w, &b)) / (2.0 * eps);
            assert!((fd - gx.data()[i]).abs() < 1e-7);
        }
        for i in 0..w.len() {
            let mut p = w.clone();
            p.data_mut()[i] += eps;
            let mut m = w.clone();
            m.data_mut()[i] -= eps;
            let fd = (loss(&x, &p, &b) - loss(&x, &m, &b)) / (2.0 * eps);
            assert!((fd - gw.data()[i]).abs() < 1e-7);
        }
        for i in 0..b.len() {
            let mut p = b.clone();
            p.data_mut()[i] += eps;
            let mut m = b.clone();
            m.data_mut()[i] -= eps;
            let fd = (loss(&x, &w, &p) - loss(&x, &w, &m)) / (2.0 * eps);
            assert!((fd - gb.data()[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn banded_path_matches_single_band() {
        // Tall enough that the column budget forces several bands.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random([1, 64, 80, 140], &mut rng);
        let w = random([2, 64, 3, 3], &mut rng);
        let b = Tensor::zeros([1, 2, 1, 1]);
        let g = Geometry {
            cin: 64,
            h: 80,
            w: 140,
            k: 3,
            dilation: 1,
            pad: 1,
        };
        assert!(g.band_height() < 80);
        let got = conv2d_forward(&x, &w, Some(&b), 1).unwrap();
        let want = naive(&x, &w, &b, 1);
        assert!(got.max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn rejects_channel_mismatch() {
        let x = Tensor::zeros([1, 2, 4, 4]);
        let w = Tensor::zeros([1, 3, 3, 3]);
        assert!(conv2d_forward(&x, &w, None, 1).is_err());
    }
}
