use rand_chacha::ChaCha8Rng;

use super::attention::{channel_attention, spatial_attention};
use super::{AttentionMaps, ChannelAttention, Conv, ModelConfig, SpatialAttention};
use crate::autograd::{Backend, ParamStore};
use crate::error::{Error, Result};

/// Residual block: `x + SA(CA(conv2(relu(conv1(x)))))`, or `x + conv2(relu(conv1(x)))`
/// when attention is disabled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub conv1: Conv,
    pub conv2: Conv,
    pub attention: Option<(ChannelAttention, SpatialAttention)>,
}

/// A run of blocks closed by a convolution, with a skip around the group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResGroup {
    pub blocks: Vec<Block>,
    pub conv: Conv,
}

/// Head conv, residual groups, tail conv to a 3-channel residual image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Refinement {
    pub head: Conv,
    pub groups: Vec<ResGroup>,
    pub tail: Conv,
}

impl Block {
    fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let w = cfg.refine_width;
        let conv1 = Conv::new(store, &format!("{name}.conv1"), w, w, 3, 1, rng);
        let conv2 = Conv::new(store, &format!("{name}.conv2"), w, w, 3, 1, rng);
        let attention = cfg.attention.then(|| {
            (
                ChannelAttention::new(store, &format!("{name}.ca"), w, cfg.ca_reduction, rng),
                SpatialAttention::new(store, &format!("{name}.sa"), rng),
            )
        });
        Block {
            conv1,
            conv2,
            attention,
        }
    }

    fn forward<B: Backend>(
        &self,
        be: &mut B,
        x: &B::Value,
        mut maps: Option<&mut AttentionMaps>,
    ) -> Result<B::Value> {
        let h = self.conv1.forward_relu(be, x)?;
        let mut h = self.conv2.forward(be, &h)?;
        if let Some((ca, sa)) = &self.attention {
            let wc = channel_attention(be, ca, &h)?;
            h = be.mul(&h, &wc)?;
            let ws = spatial_attention(be, sa, &h)?;
            if let Some(maps) = maps.as_deref_mut() {
                maps.channel.push(be.value(&wc).clone());
                maps.spatial.push(be.value(&ws).clone());
            }
            h = be.mul(&h, &ws)?;
        }
        be.add(x, &h)
    }
}

impl Refinement {
    pub(crate) fn new(
        store: &mut ParamStore,
        name: &str,
        cfg: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = cfg.refine_width;
        let head = Conv::new(store, &format!("{name}.head"), 9, w, 3, 1, rng);
        let groups = (0..cfg.n_resgroups)
            .map(|g| {
                let blocks = (0..cfg.n_cbam)
                    .map(|b| Block::new(store, &format!("{name}.g{g}.b{b}"), cfg, rng))
                    .collect();
                let conv = Conv::new(store, &format!("{name}.g{g}.conv"), w, w, 3, 1, rng);
                ResGroup { blocks, conv }
            })
            .collect();
        let tail = Conv::new(store, &format!("{name}.tail"), w, 3, 3, 1, rng);
        Refinement { head, groups, tail }
    }

    /// Map the three warped views, stacked as `[N, 9, H, W]`, to the residual
    /// `[N, 3, H, W]`.
    pub fn forward<B: Backend>(&self, be: &mut B, warped: &B::Value) -> Result<B::Value> {
        self.forward_with_maps(be, warped, None)
    }

    /// As [`Refinement::forward`], optionally recording every attention map.
    pub fn forward_with_maps<B: Backend>(
        &self,
        be: &mut B,
        warped: &B::Value,
        mut maps: Option<&mut AttentionMaps>,
    ) -> Result<B::Value> {
        let c = be.value(warped).c();
        if c != 9 {
            return Err(Error::Shape(format!(
                "refinement expects 9 channels, got {c}"
            )));
        }
        let mut x = self.head.forward_relu(be, warped)?;
        for group in &self.groups {
            let mut h = x.clone();
            for block in &group.blocks {
                h = block.forward(be, &h, maps.as_deref_mut())?;
            }
            let h = group.conv.forward(be, &h)?;
            x = be.add(&x, &h)?;
        }
        self.tail.forward(be, &x)
    }
}
