//! The three trainable sub-networks and the end-to-end synthesis pipeline.
//!
//! * [`FeatureExtractor`]: stereo features from an image pair plus angular
//!   coordinate planes. One instance is shared by the horizontal and
//!   (rotated) vertical pairs, a second one serves the diagonal pair.
//! * [`DisparityEstimator`]: one disparity map per selected input view.
//! * [`Refinement`]: residual CBAM groups applied to the warped views.

mod attention;
mod disparity;
mod feature;
mod pipeline;
mod refine;

pub use attention::{channel_attention, spatial_attention, AttentionMaps, ChannelAttention, SpatialAttention};
pub use disparity::DisparityEstimator;
pub use feature::{extract_features, FeatureExtractor, PairRole, Planes};
pub use pipeline::{
    forward, from_model_range, synthesize, synthesize_from_corners, to_model_range, BatchInputs, ForwardOutputs, Synthesis,
};
pub use refine::{Block, Refinement, ResGroup};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Backend, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Channels of each stereo feature volume.
    pub feature_channels: usize,
    /// Hidden width of the feature extractor.
    pub feature_width: usize,
    /// Hidden width of the disparity estimator.
    pub disparity_width: usize,
    /// Width of the refinement network.
    pub refine_width: usize,
    pub n_resgroups: usize,
    /// CBAM (or plain residual) blocks per group.
    pub n_cbam: usize,
    /// `false` replaces every CBAM with a plain residual block.
    pub attention: bool,
    /// Reduction ratio of the channel-attention bottleneck.
    pub ca_reduction: usize,
    /// Kernel sizes of the two average-pooling branches of the feature extractor.
    pub pool_sizes: [usize; 2],
    /// Number of feature-extractor convolutions before the pooling branches
    /// split off (1 to 3). The six convolutions are always: `pool_after`
    /// trunk layers, one per pooling branch, and `4 - pool_after` layers after
    /// the branches are merged.
    pub pool_after: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_channels: 32,
            feature_width: 32,
            disparity_width: 64,
            refine_width: 64,
            n_resgroups: 5,
            n_cbam: 3,
            attention: true,
            ca_reduction: 16,
            pool_sizes: [16, 8],
            pool_after: 3,
        }
    }
}

impl ModelConfig {
    /// Uniform width everywhere, for desk-scale runs.
    pub fn micro(width: usize, n_resgroups: usize, n_cbam: usize) -> Self {
        ModelConfig {
            feature_channels: width,
            feature_width: width,
            disparity_width: width,
            refine_width: width,
            n_resgroups,
            n_cbam,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.feature_channels,
            self.feature_width,
            self.disparity_width,
            self.refine_width,
            self.ca_reduction,
            self.pool_sizes[0],
            self.pool_sizes[1],
        ];
        if positive.contains(&0) {
            return Err(Error::Config("model widths and pool sizes must be positive".into()));
        }
        if !(1..=3).contains(&self.pool_after) {
            return Err(Error::Config(format!(
                "pool_after must be 1..=3, got {}",
                self.pool_after
            )));
        }
        Ok(())
    }

    /// Input channels of the disparity estimator: three feature volumes plus
    /// the `U` and `V` planes.
    pub fn disparity_inputs(&self) -> usize {
        3 * self.feature_channels + 2
    }
}

/// A 3x3 (or other odd-size) "same" convolution with bias.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub dilation: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        dilation: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weight = store.add_fan_in(format!("{name}.weight"), [cout, cin, k, k], cin * k * k, rng);
        let bias = store.add(
            format!("{name}.bias"),
            crate::tensor::Tensor::zeros([1, cout, 1, 1]),
        );
        Conv {
            weight,
            bias,
            dilation,
        }
    }

    pub fn forward<B: Backend>(&self, be: &mut B, x: &B::Value) -> Result<B::Value> {
        let w = be.param(self.weight);
        let b = be.param(self.bias);
        be.conv2d(x, &w, &b, self.dilation)
    }

    pub fn forward_relu<B: Backend>(&self, be: &mut B, x: &B::Value) -> Result<B::Value> {
        let y = self.forward(be, x)?;
        Ok(be.relu(&y))
    }
}

/// All trainable parameters plus the structure that addresses them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
    /// Feature extractor shared by the horizontal and vertical pairs.
    pub fe_shared: FeatureExtractor,
    pub fe_diag: FeatureExtractor,
    pub fd: DisparityEstimator,
    pub refine: Refinement,
}

impl ModelParams {
    /// Build and initialize a model with fan-in-scaled uniform weights and
    /// zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let fe_shared = FeatureExtractor::new(&mut store, "fe_shared", 7, &config, &mut rng);
        let fe_diag = FeatureExtractor::new(&mut store, "fe_diag", 8, &config, &mut rng);
        let fd = DisparityEstimator::new(&mut store, "fd", &config, &mut rng);
        let refine = Refinement::new(&mut store, "refine", &config, &mut rng);
        Ok(ModelParams {
            config,
            store,
            fe_shared,
            fe_diag,
            fd,
            refine,
        })
    }

    pub fn cbam_count(&self) -> usize {
        self.refine
            .groups
            .iter()
            .flat_map(|g| &g.blocks)
            .filter(|b| b.attention.is_some())
            .count()
    }

    /// Set the tail convolution of the refinement network to zero, making the
    /// predicted residual vanish.
    pub fn zero_tail(&mut self) {
        let tail = self.refine.tail.clone();
        self.store.get_mut(tail.weight).data_mut().fill(0.0);
        self.store.get_mut(tail.bias).data_mut().fill(0.0);
    }

    /// Parameter group (`fe_shared`, `fe_diag`, `fd`, `refine`) of a parameter.
    pub fn group_of(&self, id: ParamId) -> &str {
        let name = self.store.name(id);
        name.split('.').next().unwrap_or(name)
    }
}
