use rand_chacha::ChaCha8Rng;

use super::Conv;
use crate::autograd::{Backend, ParamStore};
use crate::error::Result;
use crate::tensor::Tensor;

/// Shared two-layer 1x1 bottleneck `C -> max(1, C/r) -> C`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelAttention {
    pub fc1: Conv,
    pub fc2: Conv,
}

impl ChannelAttention {
    pub(crate) fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        reduction: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let hidden = (channels / reduction).max(1);
        ChannelAttention {
            fc1: Conv::new(store, &format!("{name}.fc1"), channels, hidden, 1, 1, rng),
            fc2: Conv::new(store, &format!("{name}.fc2"), hidden, channels, 1, 1, rng),
        }
    }

    fn mlp<B: Backend>(&self, be: &mut B, x: &B::Value) -> Result<B::Value> {
        let h = self.fc1.forward_relu(be, x)?;
        self.fc2.forward(be, &h)
    }
}

/// 7x7 convolution over the channel-wise mean and max.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpatialAttention {
    pub conv: Conv,
}

impl SpatialAttention {
    pub(crate) fn new(store: &mut ParamStore, name: &str, rng: &mut ChaCha8Rng) -> Self {
        SpatialAttention {
            conv: Conv::new(store, &format!("{name}.conv"), 2, 1, 7, 1, rng),
        }
    }
}

/// Per-channel weights `sigmoid(MLP(avgpool(x)) + MLP(maxpool(x)))`, shape
/// `[N, C, 1, 1]`.
pub fn channel_attention<B: Backend>(
    be: &mut B,
    ca: &ChannelAttention,
    x: &B::Value,
) -> Result<B::Value> {
    let avg = be.mean_hw(x);
    let max = be.max_hw(x);
    let a = ca.mlp(be, &avg)?;
    let m = ca.mlp(be, &max)?;
    let s = be.add(&a, &m)?;
    Ok(be.sigmoid(&s))
}

/// Per-pixel weights `sigmoid(conv7x7([mean_c(x), max_c(x)]))`, shape
/// `[N, 1, H, W]`.
pub fn spatial_attention<B: Backend>(
    be: &mut B,
    sa: &SpatialAttention,
    x: &B::Value,
) -> Result<B::Value> {
    let mean = be.mean_c(x);
    let max = be.max_c(x);
    let stacked = be.concat(&[&mean, &max])?;
    let y = sa.conv.forward(be, &stacked)?;
    Ok(be.sigmoid(&y))
}

/// Attention maps captured during a refinement pass, in block order.
#[derive(Clone, Debug, Default)]
pub struct AttentionMaps {
    pub channel: Vec<Tensor>,
    pub spatial: Vec<Tensor>,
}
