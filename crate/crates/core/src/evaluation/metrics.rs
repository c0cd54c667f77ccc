use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Reported value for identical images, for both PSNR and MS-SSIM (dB).
pub const DB_CAP: f64 = 100.0;

/// Standard five-scale MS-SSIM weights, finest scale first.
pub const MSSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// BT.601 luma of a `[1, 3, H, W]` image, as `[1, 1, H, W]`.
pub fn luma(rgb: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = rgb.shape();
    if n != 1 || c != 3 {
        return Err(Error::Shape(format!("expected one RGB image, got {:?}", rgb.shape())));
    }
    let (r, g, b) = (rgb.plane(0, 0), rgb.plane(0, 1), rgb.plane(0, 2));
    let y = (0..h * w)
        .map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i])
        .collect();
    Tensor::from_vec([1, 1, h, w], y)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        DB_CAP
    } else {
        (-10.0 * mse.log10()).min(DB_CAP)
    }
}

/// PSNR (peak 1) between the luma channels of two `[1, 3, H, W]` images.
pub fn psnr_y(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    pred.expect_shape(gt.shape())?;
    let (a, b) = (luma(pred)?, luma(gt)?);
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    Ok(psnr_from_mse(mse))
}

/// `-10 log10(1 - s)`, capped.
pub fn msssim_db(score: f64) -> f64 {
    if score >= 1.0 {
        DB_CAP
    } else {
        (-10.0 * (1.0 - score).log10()).min(DB_CAP)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MsSsim {
    pub score: f64,
    /// Scales actually used (5 unless the image is too small).
    pub scales: usize,
}

impl MsSsim {
    pub fn reduced(&self) -> bool {
        self.scales < MSSSIM_WEIGHTS.len()
    }

    pub fn db(&self) -> f64 {
        msssim_db(self.score)
    }
}

fn gaussian() -> [f64; WINDOW] {
    let mut g = [0.0; WINDOW];
    let mid = (WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Separable "valid" Gaussian filter of an `h x w` plane.
fn filter(x: &[f64], h: usize, w: usize, g: &[f64; WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - WINDOW, w + 1 - WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &x[y * w..(y + 1) * w];
        for (xo, r) in rows[y * ow..(y + 1) * ow].iter_mut().enumerate() {
            *r = g.iter().zip(&src[xo..xo + WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for yo in 0..oh {
        for xo in 0..ow {
            out[yo * ow + xo] = (0..WINDOW).map(|k| g[k] * rows[(yo + k) * ow + xo]).sum();
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term of two planes.
fn ssim_cs(a: &[f64], b: &[f64], h: usize, w: usize, g: &[f64; WINDOW]) -> (f64, f64) {
    let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu1 = filter(a, h, w, g);
    let mu2 = filter(b, h, w, g);
    let e11 = filter(&sq(a, a), h, w, g);
    let e22 = filter(&sq(b, b), h, w, g);
    let e12 = filter(&sq(a, b), h, w, g);
    let n = mu1.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu1.len() {
        let (m1, m2) = (mu1[i], mu2[i]);
        let s11 = e11[i] - m1 * m1;
        let s22 = e22[i] - m2 * m2;
        let s12 = e12[i] - m1 * m2;
        let c = (2.0 * s12 + C2) / (s11 + s22 + C2);
        cs += c;
        ssim += c * (2.0 * m1 * m2 + C1) / (m1 * m1 + m2 * m2 + C1);
    }
    (ssim / n, cs / n)
}

/// Number of scales whose coarsest level still fits the 11-tap window.
pub fn feasible_scales(h: usize, w: usize) -> usize {
    let (mut h, mut w, mut s) = (h, w, 0);
    while s < MSSSIM_WEIGHTS.len() && h >= WINDOW && w >= WINDOW {
        s += 1;
        h = h.div_ceil(2);
        w = w.div_ceil(2);
    }
    s
}

/// Multi-scale SSIM between the luma channels of two `[1, 3, H, W]` images.
/// Uses as many of the five scales as the extent allows, with the weights of
/// the used scales renormalized to sum to one.
pub fn ms_ssim(pred: &Tensor, gt: &Tensor) -> Result<MsSsim> {
    pred.expect_shape(gt.shape())?;
    let (mut a, mut b) = (luma(pred)?, luma(gt)?);
    let scales = feasible_scales(a.h(), a.w());
    if scales == 0 {
        return Err(Error::InvalidArgument(format!(
            "image {}x{} smaller than the {WINDOW}x{WINDOW} SSIM window",
            a.h(),
            a.w()
        )));
    }
    let g = gaussian();
    let wsum: f64 = MSSSIM_WEIGHTS[..scales].iter().sum();
    let mut score = 1.0;
    for s in 0..scales {
        let (ssim, cs) = ssim_cs(a.data(), b.data(), a.h(), a.w(), &g);
        let weight = MSSSIM_WEIGHTS[s] / wsum;
        let term = if s + 1 == scales { ssim } else { cs };
        score *= term.max(0.0).powf(weight);
        if s + 1 < scales {
            a = tensor::avg_pool(&a, 2);
            b = tensor::avg_pool(&b, 2);
        }
    }
    Ok(MsSsim { score, scales })
}
