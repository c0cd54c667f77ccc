use rand_chacha::ChaCha8Rng;

use super::{Conv, ModelConfig, ModelParams};
use crate::autograd::{Backend, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Rotation;

/// Which stereo pair a feature volume comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairRole {
    /// `(I_L, I_R)` with the `U` plane.
    Horz,
    /// `(I_L, I_B)` with the `V` plane, processed rotated by a quarter turn.
    Vert,
    /// `(I_B, I_R)` with both planes.
    Diag,
}

/// Angular coordinate planes accompanying a stereo pair.
pub enum Planes<'a, V> {
    U(&'a V),
    V(&'a V),
    UV(&'a V, &'a V),
}

/// Six 3x3 convolutions around two average-pooling branches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureExtractor {
    pub in_channels: usize,
    pub trunk: Vec<Conv>,
    /// `(pool size, conv)` per branch.
    pub branches: Vec<(usize, Conv)>,
    pub merge: Vec<Conv>,
}

impl FeatureExtractor {
    pub(crate) fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        cfg: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = cfg.feature_width;
        let trunk = (0..cfg.pool_after)
            .map(|i| {
                let cin = if i == 0 { in_channels } else { w };
                Conv::new(store, &format!("{name}.trunk{i}"), cin, w, 3, 1, rng)
            })
            .collect();
        let branches = cfg
            .pool_sizes
            .iter()
            .map(|&k| (k, Conv::new(store, &format!("{name}.pool{k}"), w, w, 3, 1, rng)))
            .collect::<Vec<_>>();
        let merged_in = w * (1 + branches.len());
        let n_merge = 4 - cfg.pool_after;
        let merge = (0..n_merge)
            .map(|i| {
                let cin = if i == 0 { merged_in } else { w };
                let cout = if i + 1 == n_merge { cfg.feature_channels } else { w };
                Conv::new(store, &format!("{name}.merge{i}"), cin, cout, 3, 1, rng)
            })
            .collect();
        FeatureExtractor {
            in_channels,
            trunk,
            branches,
            merge,
        }
    }

    pub fn conv_count(&self) -> usize {
        self.trunk.len() + self.branches.len() + self.merge.len()
    }

    /// Map an `[N, in_channels, H, W]` stack to an `[N, feature_channels, H, W]`
    /// volume.
    pub fn forward<B: Backend>(&self, be: &mut B, x: &B::Value) -> Result<B::Value> {
        let [_, c, h, w] = be.value(x).shape();
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "feature extractor expects {} channels, got {c}",
                self.in_channels
            )));
        }
        let mut x = x.clone();
        for conv in &self.trunk {
            x = conv.forward_relu(be, &x)?;
        }
        let mut parts = vec![x.clone()];
        for (k, conv) in &self.branches {
            let p = be.avg_pool(&x, *k);
            let p = conv.forward_relu(be, &p)?;
            parts.push(be.upsample(&p, h, w));
        }
        let refs: Vec<&B::Value> = parts.iter().collect();
        let mut y = be.concat(&refs)?;
        for conv in &self.merge {
            y = conv.forward_relu(be, &y)?;
        }
        Ok(y)
    }
}

/// Stereo feature volume for one pair. The vertical pair (and its `V`
/// plane) is rotated a quarter turn counter-clockwise, passed through the
/// shared extractor, and the result rotated back clockwise.
pub fn extract_features<B: Backend>(
    be: &mut B,
    model: &ModelParams,
    pair: (&B::Value, &B::Value),
    planes: Planes<'_, B::Value>,
    role: PairRole,
) -> Result<B::Value> {
    match (role, planes) {
        (PairRole::Horz, Planes::U(u)) => {
            let x = be.concat(&[pair.0, pair.1, u])?;
            model.fe_shared.forward(be, &x)
        }
        (PairRole::Vert, Planes::V(v)) => {
            let ccw = Rotation::CounterClockwise;
            let a = be.rot90(pair.0, ccw);
            let b = be.rot90(pair.1, ccw);
            let v = be.rot90(v, ccw);
            let x = be.concat(&[&a, &b, &v])?;
            let y = model.fe_shared.forward(be, &x)?;
            Ok(be.rot90(&y, Rotation::Clockwise))
        }
        (PairRole::Diag, Planes::UV(u, v)) => {
            let x = be.concat(&[pair.0, pair.1, u, v])?;
            model.fe_diag.forward(be, &x)
        }
        (role, _) => Err(Error::InvalidArgument(format!(
            "wrong coordinate planes for {role:?} pair (horz takes U, vert takes V, diag takes U and V)"
        ))),
    }
}
