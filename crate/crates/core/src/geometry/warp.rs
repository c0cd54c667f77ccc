//! Differentiable backward warping with bilinear sampling and edge clamping.
//!
//! For a source view at angular offset `(du, dv)` from the target,
//! `out(x, y) = src(x + du * D(x, y), y + dv * D(x, y))`.

use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::Tensor;

#[derive(Clone, Copy)]
struct Tap {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    fx: f64,
    fy: f64,
    /// 1 when the x (resp. y) coordinate was inside the frame, else 0.
    mx: f64,
    my: f64,
}

fn clamp_axis(s: f64, len: usize) -> (usize, usize, f64, f64) {
    let hi = (len - 1) as f64;
    let (c, m) = if s < 0.0 {
        (0.0, 0.0)
    } else if s > hi {
        (hi, 0.0)
    } else {
        (s, 1.0)
    };
    let i0 = (c.floor() as usize).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, c - i0 as f64, m)
}

fn taps(disp: &[f64], h: usize, w: usize, (du, dv): (f64, f64)) -> Vec<Tap> {
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let d = disp[y * w + x];
            let (x0, x1, fx, mx) = clamp_axis(x as f64 + du * d, w);
            let (y0, y1, fy, my) = clamp_axis(y as f64 + dv * d, h);
            out.push(Tap {
                x0,
                x1,
                y0,
                y1,
                fx,
                fy,
                mx,
                my,
            });
        }
    }
    out
}

fn check(img: &Tensor, disp: &Tensor, offsets: &[(f64, f64)]) -> Result<()> {
    let [n, _, h, w] = img.shape();
    if disp.shape() != [n, 1, h, w] {
        return Err(Error::Shape(format!(
            "warp: disparity {:?} does not match view {:?}",
            disp.shape(),
            img.shape()
        )));
    }
    if offsets.len() != n {
        return Err(Error::Shape(format!(
            "warp: {} offsets for batch of {n}",
            offsets.len()
        )));
    }
    if h == 0 || w == 0 {
        return Err(Error::Shape("warp: empty view".into()));
    }
    Ok(())
}

/// Warp every batch item of `img` (`[N, C, H, W]`) with its disparity map
/// (`[N, 1, H, W]`) and angular offset.
pub fn warp_forward(img: &Tensor, disp: &Tensor, offsets: &[(f64, f64)]) -> Result<Tensor> {
    check(img, disp, offsets)?;
    let [n, c, h, w] = img.shape();
    let hw = h * w;
    let all_taps: Vec<Vec<Tap>> = (0..n)
        .map(|ni| taps(disp.plane(ni, 0), h, w, offsets[ni]))
        .collect();
    let mut out = Tensor::zeros([n, c, h, w]);
    parallel::for_each_chunk_mut(out.data_mut(), hw, |plane, dst| {
        let ni = plane / c;
        let src = img.plane(ni, plane % c);
        for (d, t) in dst.iter_mut().zip(&all_taps[ni]) {
            let top = src[t.y0 * w + t.x0] * (1.0 - t.fx) + src[t.y0 * w + t.x1] * t.fx;
            let bot = src[t.y1 * w + t.x0] * (1.0 - t.fx) + src[t.y1 * w + t.x1] * t.fx;
            *d = top * (1.0 - t.fy) + bot * t.fy;
        }
    });
    Ok(out)
}

/// Gradients with respect to the source image (when requested) and the
/// disparity map.
pub fn warp_backward(
    img: &Tensor,
    disp: &Tensor,
    offsets: &[(f64, f64)],
    grad_out: &Tensor,
    need_image_grad: bool,
) -> (Option<Tensor>, Tensor) {
    let [n, c, h, w] = img.shape();
    let hw = h * w;
    let per_item = parallel::map_indices(n, |ni| {
        let (du, dv) = offsets[ni];
        let tp = taps(disp.plane(ni, 0), h, w, (du, dv));
        let mut gd = vec![0.0; hw];
        let mut gi = if need_image_grad {
            vec![0.0; c * hw]
        } else {
            Vec::new()
        };
        for ci in 0..c {
            let src = img.plane(ni, ci);
            let g = grad_out.plane(ni, ci);
            for (p, t) in tp.iter().enumerate() {
                let gv = g[p];
                if gv == 0.0 {
                    continue;
                }
                let a = src[t.y0 * w + t.x0];
                let b = src[t.y0 * w + t.x1];
                let cc = src[t.y1 * w + t.x0];
                let d = src[t.y1 * w + t.x1];
                let dsx = (1.0 - t.fy) * (b - a) + t.fy * (d - cc);
                let dsy = (1.0 - t.fx) * (cc - a) + t.fx * (d - b);
                gd[p] += gv * (du * dsx * t.mx + dv * dsy * t.my);
                if need_image_grad {
                    let gplane = &mut gi[ci * hw..(ci + 1) * hw];
                    gplane[t.y0 * w + t.x0] += gv * (1.0 - t.fx) * (1.0 - t.fy);
                    gplane[t.y0 * w + t.x1] += gv * t.fx * (1.0 - t.fy);
                    gplane[t.y1 * w + t.x0] += gv * (1.0 - t.fx) * t.fy;
                    gplane[t.y1 * w + t.x1] += gv * t.fx * t.fy;
                }
            }
        }
        (gi, gd)
    });
    let mut gimg = Vec::with_capacity(if need_image_grad { n * c * hw } else { 0 });
    let mut gdisp = Vec::with_capacity(n * hw);
    for (gi, gd) in per_item {
        gimg.extend_from_slice(&gi);
        gdisp.extend_from_slice(&gd);
    }
    let gimg = need_image_grad.then(|| Tensor::from_vec([n, c, h, w], gimg).expect("shape"));
    (
        gimg,
        Tensor::from_vec([n, 1, h, w], gdisp).expect("shape"),
    )
}

/// Warp a single view (`[1, C, H, W]`) with its disparity map (`[1, 1, H, W]`)
/// from angular offset `(du, dv) = (u_src - u_target, v_src - v_target)`.
pub fn warp_view(view: &Tensor, disparity: &Tensor, offset: (f64, f64)) -> Result<Tensor> {
    if view.n() != 1 {
        return Err(Error::Shape(format!(
            "warp_view expects a single view, got batch {}",
            view.n()
        )));
    }
    warp_forward(view, disparity, &[offset])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_disparity_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = Tensor::from_fn([1, 3, 7, 9], |_, _, _, _| rng.gen());
        let d = Tensor::zeros([1, 1, 7, 9]);
        assert_eq!(warp_view(&v, &d, (0.7, -1.3)).unwrap(), v);
    }

    #[test]
    fn unit_disparity_shifts_one_pixel() {
        let v = Tensor::from_fn([1, 1, 4, 6], |_, _, y, x| (10 * y + x) as f64);
        let d = Tensor::full([1, 1, 4, 6], 1.0);
        let out = warp_view(&v, &d, (-1.0, 0.0)).unwrap();
        for y in 0..4 {
            for x in 1..6 {
                assert_eq!(out.at(0, 0, y, x), v.at(0, 0, y, x - 1));
            }
            // clamped at the left edge
            assert_eq!(out.at(0, 0, y, 0), v.at(0, 0, y, 0));
        }
    }

    #[test]
    fn rejects_extent_mismatch() {
        let v = Tensor::zeros([1, 3, 4, 4]);
        let d = Tensor::zeros([1, 1, 4, 5]);
        assert!(warp_view(&v, &d, (1.0, 1.0)).is_err());
    }

    #[test]
    fn disparity_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = Tensor::from_fn([2, 2, 8, 8], |_, _, _, _| rng.gen());
        let disp = Tensor::from_fn([2, 1, 8, 8], |_, _, _, _| rng.gen_range(-1.3..1.3));
        let gy = Tensor::from_fn([2, 2, 8, 8], |_, _, _, _| rng.gen_range(-1.0..1.0));
        let offs = [(0.8, -0.4), (-1.1, 0.6)];
        let f = |d: &Tensor| -> f64 {
            let o = warp_forward(&img, d, &offs).unwrap();
            o.data().iter().zip(gy.data()).map(|(a, b)| a * b).sum()
        };
        let (gi, gd) = warp_backward(&img, &disp, &offs, &gy, true);
        assert!(gi.is_some());
        let eps = 1e-7;
        for i in 0..disp.len() {
            let mut p = disp.clone();
            p.data_mut()[i] += eps;
            let mut m = disp.clone();
            m.data_mut()[i] -= eps;
            let fd = (f(&p) - f(&m)) / (2.0 * eps);
            assert!((fd - gd.data()[i]).abs() < 1e-5, "{fd} vs {}", gd.data()[i]);
        }
    }
}
