use serde::{Deserialize, Serialize};

use crate::autograd::Backend;
use crate::error::{Error, Result};

/// Weights of the gradient term of the final loss (`lambda1`) and of the
/// pixel and gradient terms of the warp loss (`lambda2`, `lambda3`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 0.5,
            lambda2: 0.25,
            lambda3: 0.125,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.lambda3];
        if all.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be nonnegative, got {all:?}")));
        }
        Ok(())
    }
}

/// Scalar loss values plus the graph node of the total.
pub struct LossTerms<V> {
    pub total: V,
    pub final_term: f64,
    pub warp_term: f64,
}

/// `mean|a - b| + lambda * (mean|dx a - dx b| + mean|dy a - dy b|)`.
fn l1_with_gradient<B: Backend>(
    be: &mut B,
    a: &B::Value,
    b: &B::Value,
    lambda: f64,
    lambda_pixel: f64,
) -> Result<B::Value> {
    let pix = be.l1(a, b)?;
    let pix = be.scale(&pix, lambda_pixel);
    let (ax, bx) = (be.diff_x(a), be.diff_x(b));
    let (ay, by) = (be.diff_y(a), be.diff_y(b));
    let gx = be.l1(&ax, &bx)?;
    let gy = be.l1(&ay, &by)?;
    let g = be.add(&gx, &gy)?;
    let g = be.scale(&g, lambda);
    be.add(&pix, &g)
}

/// Reconstruction loss of the final prediction.
pub fn loss_final<B: Backend>(
    be: &mut B,
    pred: &B::Value,
    gt: &B::Value,
    lambda1: f64,
) -> Result<B::Value> {
    l1_with_gradient(be, pred, gt, lambda1, 1.0)
}

/// Summed reconstruction loss of the three warped views.
pub fn loss_warp<B: Backend>(
    be: &mut B,
    warped: &[B::Value; 3],
    gt: &B::Value,
    lambda2: f64,
    lambda3: f64,
) -> Result<B::Value> {
    let mut total = l1_with_gradient(be, &warped[0], gt, lambda3, lambda2)?;
    for w in &warped[1..] {
        let t = l1_with_gradient(be, w, gt, lambda3, lambda2)?;
        total = be.add(&total, &t)?;
    }
    Ok(total)
}

pub fn total_loss<B: Backend>(
    be: &mut B,
    pred: &B::Value,
    warped: &[B::Value; 3],
    gt: &B::Value,
    weights: &LossWeights,
) -> Result<LossTerms<B::Value>> {
    let f = loss_final(be, pred, gt, weights.lambda1)?;
    let w = loss_warp(be, warped, gt, weights.lambda2, weights.lambda3)?;
    let final_term = be.value(&f).item();
    let warp_term = be.value(&w).item();
    let total = be.add(&f, &w)?;
    Ok(LossTerms {
        total,
        final_term,
        warp_term,
    })
}
