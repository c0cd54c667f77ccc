use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{choose_corners, AngularGrid, AngularPos, CornerChoice};
use crate::lf_data::LightField;
use crate::networks::to_model_range;
use crate::tensor::Tensor;

/// One training example in the model range and the normalized frame.
#[derive(Clone, Debug)]
pub struct TrainSample {
    /// L, R, B crops, `[1, 3, crop, crop]`.
    pub views: [Tensor; 3],
    pub gt: Tensor,
    pub choice: CornerChoice,
}

/// Crop window and gamma shared by every view of a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Augmentation {
    pub y0: usize,
    pub x0: usize,
    pub size: usize,
    pub gamma: f64,
}

/// Uniformly random interior (non-corner) position.
pub fn sample_target(grid: AngularGrid, rng: &mut impl Rng) -> AngularPos {
    let interior = grid.interior_positions();
    interior[rng.gen_range(0..interior.len())]
}

pub fn draw_augmentation(
    extent: (usize, usize),
    crop_size: usize,
    gamma_range: [f64; 2],
    rng: &mut impl Rng,
) -> Result<Augmentation> {
    let (h, w) = extent;
    if crop_size == 0 || crop_size > h || crop_size > w {
        return Err(Error::InvalidArgument(format!(
            "crop {crop_size} does not fit a {h}x{w} light field"
        )));
    }
    let [lo, hi] = gamma_range;
    let gamma = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
    Ok(Augmentation {
        y0: rng.gen_range(0..=h - crop_size),
        x0: rng.gen_range(0..=w - crop_size),
        size: crop_size,
        gamma,
    })
}

/// Crop, gamma-correct, mirror into the normalized frame and map to `[-1, 1]`.
pub fn apply_augmentation(
    lf: &LightField,
    target: AngularPos,
    aug: &Augmentation,
) -> Result<TrainSample> {
    let (h, w) = lf.spatial_extent();
    if aug.y0 + aug.size > h || aug.x0 + aug.size > w {
        return Err(Error::InvalidArgument(format!(
            "crop window {aug:?} outside {h}x{w}"
        )));
    }
    let choice = choose_corners(lf.grid(), target)?;
    let prep = |p: AngularPos| {
        let t = lf.view_window(p, aug.y0, aug.x0, aug.size, aug.size);
        let t = if aug.gamma == 1.0 { t } else { t.map(|v| v.powf(aug.gamma)) };
        to_model_range(&choice.apply_flips(&t))
    };
    Ok(TrainSample {
        views: choice.selected.map(prep),
        gt: prep(target),
        choice,
    })
}

/// Random target, crop and gamma for one light field.
pub fn augment(
    lf: &LightField,
    crop_size: usize,
    gamma_range: [f64; 2],
    rng: &mut impl Rng,
) -> Result<TrainSample> {
    let target = sample_target(lf.grid(), rng);
    let aug = draw_augmentation(lf.spatial_extent(), crop_size, gamma_range, rng)?;
    apply_augmentation(lf, target, &aug)
}
