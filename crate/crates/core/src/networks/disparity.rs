use rand_chacha::ChaCha8Rng;

use super::{Conv, ModelConfig};
use crate::autograd::{Backend, ParamStore};
use crate::error::{Error, Result};

/// Dilation of each disparity-estimator layer. All kernels are 3x3.
pub const DILATIONS: [usize; 7] = [2, 4, 8, 16, 1, 1, 1];

/// Seven dilated 3x3 convolutions mapping the three stereo feature volumes and
/// the `U`, `V` planes to one disparity map per selected corner view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DisparityEstimator {
    pub in_channels: usize,
    pub layers: Vec<Conv>,
}

impl DisparityEstimator {
    pub(crate) fn new(
        store: &mut ParamStore,
        name: &str,
        cfg: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = cfg.disparity_width;
        let in_channels = cfg.disparity_inputs();
        let layers = DILATIONS
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let cin = if i == 0 { in_channels } else { w };
                let cout = if i + 1 == DILATIONS.len() { 3 } else { w };
                Conv::new(store, &format!("{name}.conv{i}"), cin, cout, 3, d, rng)
            })
            .collect();
        DisparityEstimator { in_channels, layers }
    }

    /// Radius of the square receptive field, in pixels.
    pub fn receptive_radius(&self) -> usize {
        self.layers.iter().map(|c| c.dilation).sum()
    }

    /// `[N, 3F+2, H, W]` to `[N, 3, H, W]` (channels `D_L`, `D_R`, `D_B`).
    pub fn forward<B: Backend>(&self, be: &mut B, x: &B::Value) -> Result<B::Value> {
        let c = be.value(x).c();
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "disparity estimator expects {} channels, got {c}",
                self.in_channels
            )));
        }
        let last = self.layers.len() - 1;
        let mut y = x.clone();
        for (i, conv) in self.layers.iter().enumerate() {
            y = if i == last {
                conv.forward(be, &y)?
            } else {
                conv.forward_relu(be, &y)?
            };
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::super::ModelParams;
    use super::*;
    use crate::autograd::Eval;
    use crate::tensor::Tensor;

    #[test]
    fn dilations_and_radius() {
        let m = ModelParams::new(ModelConfig::micro(2, 1, 1), 0).unwrap();
        let d: Vec<usize> = m.fd.layers.iter().map(|c| c.dilation).collect();
        assert_eq!(d, DILATIONS);
        assert_eq!(m.fd.receptive_radius(), 33);
        assert_eq!(m.fd.in_channels, 3 * 2 + 2);
        let mut be = Eval::new(&m.store);
        let x = be.constant(Tensor::zeros([1, 8, 10, 12]));
        assert_eq!(m.fd.forward(&mut be, &x).unwrap().shape(), [1, 3, 10, 12]);
    }
}
