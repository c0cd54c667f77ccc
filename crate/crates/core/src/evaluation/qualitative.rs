use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::AngularPos;
use crate::image_io::write_png;
use crate::lf_data::LightField;
use crate::networks::{synthesize, ModelParams};
use crate::tensor::Tensor;

/// Zoom region in normalized image coordinates with the origin at the
/// bottom-left corner: `x0 < x1`, `y0 < y1`, all in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl FromStr for CropBox {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidArgument(format!("crop box '{s}' is not x0,y0,x1,y1")))?;
        match v[..] {
            [x0, y0, x1, y1] => Ok(CropBox { x0, y0, x1, y1 }),
            _ => Err(Error::InvalidArgument(format!("crop box '{s}' needs four numbers"))),
        }
    }
}

impl CropBox {
    /// Pixel rectangle `(row0, col0, rows, cols)` in an `h x w` image.
    pub fn to_pixels(&self, h: usize, w: usize) -> Result<(usize, usize, usize, usize)> {
        let inside = |a: f64, b: f64| (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && a < b;
        if !inside(self.x0, self.x1) || !inside(self.y0, self.y1) {
            return Err(Error::InvalidArgument(format!("crop box {self:?} is outside the frame")));
        }
        // Snap values within rounding noise of an integer before floor/ceil.
        let lo = |v: f64| (v + 1e-9).floor() as usize;
        let hi = |v: f64| (v - 1e-9).ceil() as usize;
        let (wf, hf) = (w as f64, h as f64);
        let c0 = lo(self.x0 * wf).min(w - 1);
        let c1 = hi(self.x1 * wf).min(w);
        let r0 = lo((1.0 - self.y1) * hf).min(h - 1);
        let r1 = hi((1.0 - self.y0) * hf).min(h);
        Ok((r0, c0, r1.saturating_sub(r0).max(1), c1.saturating_sub(c0).max(1)))
    }
}

fn crop(t: &Tensor, (r0, c0, rows, cols): (usize, usize, usize, usize)) -> Tensor {
    Tensor::from_fn([1, t.c(), rows, cols], |_, c, y, x| t.at(0, c, r0 + y, c0 + x))
}

/// Per-pixel mean absolute RGB error, scaled by 4 and mapped through a
/// black-red-yellow-white ramp. An exact reconstruction is all black.
pub fn error_heatmap(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    pred.expect_shape(gt.shape())?;
    let [_, _, h, w] = gt.shape();
    Ok(Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
        let e = (0..3)
            .map(|k| (pred.at(0, k, y, x) - gt.at(0, k, y, x)).abs())
            .sum::<f64>()
            / 3.0;
        let t = (e * 4.0).min(1.0);
        (3.0 * t - c as f64).clamp(0.0, 1.0)
    }))
}

/// Write the synthesized view, ground truth, error heatmap and zoom crops of
/// each target. Crop boxes are validated before anything is written.
pub fn export_qualitative(
    model: &ModelParams,
    lf: &LightField,
    scene_id: &str,
    targets: &[AngularPos],
    crops: &[CropBox],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let (h, w) = lf.spatial_extent();
    let rects = crops
        .iter()
        .map(|c| c.to_pixels(h, w))
        .collect::<Result<Vec<_>>>()?;
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for &t in targets {
        let synth = synthesize(lf, t, model)?.image;
        let gt = lf.view_tensor(t);
        let heat = error_heatmap(&synth, &gt)?;
        let stem = format!("{scene_id}_v{}_u{}", t.v, t.u);
        for (kind, img) in [("synth", &synth), ("gt", &gt), ("error", &heat)] {
            let path = out_dir.join(format!("{stem}_{kind}.png"));
            write_png(img, &path)?;
            written.push(path);
            for (k, r) in rects.iter().enumerate() {
                let path = out_dir.join(format!("{stem}_{kind}_crop{k}.png"));
                write_png(&crop(img, *r), &path)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
