use super::{extract_features, ModelParams, PairRole, Planes};
use crate::autograd::{Backend, Eval};
use crate::error::{Error, Result};
use crate::geometry::{choose_corners, make_planes, unflip, AngularPos, CornerChoice, ViewSelection};
use crate::lf_data::{CornerViews, LightField};
use crate::tensor::Tensor;

/// `[0, 1]` to `[-1, 1]`.
pub fn to_model_range(t: &Tensor) -> Tensor {
    t.map(|v| v * 2.0 - 1.0)
}

/// `[-1, 1]` to `[0, 1]`, without clamping.
pub fn from_model_range(t: &Tensor) -> Tensor {
    t.map(|v| (v + 1.0) * 0.5)
}

/// One batch of network inputs, all in the normalized (mirrored) frame.
#[derive(Clone, Debug)]
pub struct BatchInputs {
    /// L, R, B views, each `[N, 3, H, W]` in `[-1, 1]`.
    pub views: [Tensor; 3],
    /// Normalized `(u, v)` of each item's remapped target.
    pub targets: Vec<(f64, f64)>,
    /// Angular offsets `(du, dv)` of L, R and B for each item.
    pub offsets: [Vec<(f64, f64)>; 3],
}

impl BatchInputs {
    /// Stack per-item views (`[1, 3, H, W]`, already mirrored and in the model
    /// range) with their corner choices.
    pub fn from_parts(items: &[([Tensor; 3], CornerChoice)]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut views: [Vec<Tensor>; 3] = Default::default();
        let mut offsets: [Vec<(f64, f64)>; 3] = Default::default();
        let mut targets = Vec::with_capacity(items.len());
        for (vs, choice) in items {
            let off = choice.offsets();
            for r in 0..3 {
                views[r].push(vs[r].clone());
                offsets[r].push(off[r]);
            }
            targets.push(choice.target_normalized());
        }
        let [l, r, b] = views;
        Ok(BatchInputs {
            views: [Tensor::stack(&l)?, Tensor::stack(&r)?, Tensor::stack(&b)?],
            targets,
            offsets,
        })
    }

    pub fn from_selections(selections: &[ViewSelection]) -> Result<Self> {
        let items: Vec<_> = selections
            .iter()
            .map(|s| (s.views.each_ref().map(to_model_range), s.choice))
            .collect();
        Self::from_parts(&items)
    }

    pub fn batch_size(&self) -> usize {
        self.targets.len()
    }

    pub fn spatial_extent(&self) -> (usize, usize) {
        (self.views[0].h(), self.views[0].w())
    }
}

/// Every intermediate of one forward pass, in the model range and the
/// normalized frame.
pub struct ForwardOutputs<V> {
    /// `F_h`, `F_v`, `F_d`.
    pub features: [V; 3],
    /// `[N, 3, H, W]`: `D_L`, `D_R`, `D_B`.
    pub disparity: V,
    pub warped: [V; 3],
    pub average: V,
    pub residual: V,
    pub prediction: V,
}

/// Run the full network on a batch.
pub fn forward<B: Backend>(
    be: &mut B,
    model: &ModelParams,
    inputs: &BatchInputs,
) -> Result<ForwardOutputs<B::Value>> {
    let [n, c, h, w] = inputs.views[0].shape();
    if c != 3 || inputs.views.iter().any(|v| v.shape() != [n, 3, h, w]) {
        return Err(Error::Shape(format!(
            "views must share an [N, 3, H, W] shape, got {:?}",
            inputs.views.iter().map(|v| v.shape()).collect::<Vec<_>>()
        )));
    }
    if inputs.targets.len() != n || inputs.offsets.iter().any(|o| o.len() != n) {
        return Err(Error::Shape(format!(
            "batch of {n} views with {} targets",
            inputs.targets.len()
        )));
    }
    let planes = make_planes(&inputs.targets, (h, w));
    let [l, r, b] = inputs.views.clone().map(|t| be.constant(t));
    let u = be.constant(planes.u);
    let v = be.constant(planes.v);

    let f_h = extract_features(be, model, (&l, &r), Planes::U(&u), PairRole::Horz)?;
    let f_v = extract_features(be, model, (&l, &b), Planes::V(&v), PairRole::Vert)?;
    let f_d = extract_features(be, model, (&b, &r), Planes::UV(&u, &v), PairRole::Diag)?;
    let stacked = be.concat(&[&f_h, &f_v, &f_d, &u, &v])?;
    let disparity = model.fd.forward(be, &stacked)?;

    let views = [&l, &r, &b];
    let mut warped = Vec::with_capacity(3);
    for (i, view) in views.into_iter().enumerate() {
        let d = be.slice_c(&disparity, i, 1)?;
        warped.push(be.warp(view, &d, &inputs.offsets[i])?);
    }
    let warped: [B::Value; 3] = warped.try_into().ok().expect("three warped views");
    let all = be.concat(&[&warped[0], &warped[1], &warped[2]])?;
    let residual = model.refine.forward(be, &all)?;
    let sum = be.add(&warped[0], &warped[1])?;
    let sum = be.add(&sum, &warped[2])?;
    let average = be.scale(&sum, 1.0 / 3.0);
    let prediction = be.add(&residual, &average)?;
    Ok(ForwardOutputs {
        features: [f_h, f_v, f_d],
        disparity,
        warped,
        average,
        residual,
        prediction,
    })
}

/// A synthesized view in the original orientation.
#[derive(Clone, Debug)]
pub struct Synthesis {
    /// `[1, 3, H, W]` in `[0, 1]` (clamped).
    pub image: Tensor,
    pub choice: CornerChoice,
    /// `[1, 3, H, W]` disparity of L, R, B in normalized angular units.
    pub disparity: Tensor,
    /// Warped L, R, B views, `[1, 3, H, W]` each, in `[0, 1]`.
    pub warped: [Tensor; 3],
    /// Mean of the warped views, in `[0, 1]`.
    pub average: Tensor,
}

/// Synthesize the view at `target` from the three nearest corners of `lf`.
/// Only the four corner views of `lf` are read.
pub fn synthesize(lf: &LightField, target: AngularPos, model: &ModelParams) -> Result<Synthesis> {
    synthesize_from_corners(&CornerViews::from_lightfield(lf), target, model)
}

pub fn synthesize_from_corners(
    corners: &CornerViews,
    target: AngularPos,
    model: &ModelParams,
) -> Result<Synthesis> {
    let choice = choose_corners(corners.grid, target)?;
    let views = choice.selected.map(|p| {
        let v = corners.view(p).expect("selected positions are corners");
        choice.apply_flips(v)
    });
    let sel = ViewSelection { choice, views };
    let inputs = BatchInputs::from_selections(std::slice::from_ref(&sel))?;
    let mut be = Eval::new(&model.store);
    let out = forward(&mut be, model, &inputs)?;
    let back = |t: &Tensor| from_model_range(&unflip(t, &choice));
    Ok(Synthesis {
        image: back(&out.prediction).map(|v| v.clamp(0.0, 1.0)),
        choice,
        disparity: unflip(&out.disparity, &choice),
        warped: out.warped.map(|w| back(&w)),
        average: back(&out.average),
    })
}
