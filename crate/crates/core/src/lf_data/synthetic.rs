//! Layered synthetic light fields with exact per-view disparity.
//!
//! Each layer is a band-limited texture (a sum of sinusoids, so it is defined
//! at every real coordinate) on a disc-shaped support; the last layer is a
//! full-frame background. View `(v, u)` samples layer `k` at
//! `(x - s_u * d_k, y - s_v * d_k)`, where `(s_u, s_v)` is the view's grid
//! offset from the central view, and composites front to back.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LightField;
use crate::error::{Error, Result};
use crate::geometry::{AngularGrid, AngularPos};
use crate::parallel;
use crate::tensor::Tensor;

const WAVES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// Pixels of shift per angular grid step.
    pub disparity: f64,
    pub seed: u64,
}

/// One synthetic scene. `layers` are ordered front to back; the last one is
/// the background and covers the whole frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub layers: Vec<LayerSpec>,
    pub height: usize,
    pub width: usize,
    pub grid: AngularGrid,
}

impl SyntheticSceneSpec {
    /// Largest angular offset of any view from the central view, in steps.
    pub fn max_angular_offset(&self) -> f64 {
        (self.grid.n_v.max(self.grid.n_u) - 1) as f64 / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("synthetic scene needs at least one layer".into()));
        }
        if self.height == 0 || self.width == 0 || self.grid.n_v < 2 || self.grid.n_u < 2 {
            return Err(Error::Config("synthetic scene extents must be positive".into()));
        }
        let limit = self.height.min(self.width) as f64 / 4.0;
        for l in &self.layers {
            if !l.disparity.is_finite() {
                return Err(Error::Config(format!("non-finite disparity {}", l.disparity)));
            }
            if l.disparity.abs() * self.max_angular_offset() >= limit {
                return Err(Error::Config(format!(
                    "disparity {} times angular offset {} reaches {limit} pixels",
                    l.disparity,
                    self.max_angular_offset()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

#[derive(Clone, Debug)]
struct Layer {
    disparity: f64,
    base: [f64; 3],
    waves: Vec<Wave>,
    /// Disc `(cx, cy, r)`; `None` for the background.
    support: Option<(f64, f64, f64)>,
}

impl Layer {
    fn new(spec: &LayerSpec, background: bool, h: usize, w: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let base = [0; 3].map(|_| rng.gen_range(0.3..0.7));
        let mut waves: Vec<Wave> = (0..WAVES)
            .map(|_| {
                let f = rng.gen_range(0.02..0.12);
                let theta = rng.gen_range(0.0..TAU);
                Wave {
                    fx: f * theta.cos(),
                    fy: f * theta.sin(),
                    phase: rng.gen_range(0.0..TAU),
                    amp: [0; 3].map(|_| rng.gen_range(-1.0..1.0)),
                }
            })
            .collect();
        for c in 0..3 {
            let total: f64 = waves.iter().map(|wv| wv.amp[c].abs()).sum();
            let scale = 0.28 / total.max(1e-9);
            waves.iter_mut().for_each(|wv| wv.amp[c] *= scale);
        }
        let support = (!background).then(|| {
            let m = h.min(w) as f64;
            (
                rng.gen_range(0.3..0.7) * w as f64,
                rng.gen_range(0.3..0.7) * h as f64,
                rng.gen_range(0.12..0.25) * m,
            )
        });
        Layer {
            disparity: spec.disparity,
            base,
            waves,
            support,
        }
    }

    fn covers(&self, x: f64, y: f64) -> bool {
        match self.support {
            None => true,
            Some((cx, cy, r)) => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
        }
    }

    fn color(&self, x: f64, y: f64) -> [f64; 3] {
        let mut c = self.base;
        for wv in &self.waves {
            let s = (TAU * (wv.fx * x + wv.fy * y) + wv.phase).sin();
            for k in 0..3 {
                c[k] += wv.amp[k] * s;
            }
        }
        c
    }
}

fn build_layers(spec: &SyntheticSceneSpec) -> Vec<Layer> {
    let last = spec.layers.len() - 1;
    spec.layers
        .iter()
        .enumerate()
        .map(|(i, l)| Layer::new(l, i == last, spec.height, spec.width))
        .collect()
}

fn view_shift(grid: AngularGrid, p: AngularPos) -> (f64, f64) {
    (
        p.u as f64 - (grid.n_u - 1) as f64 / 2.0,
        p.v as f64 - (grid.n_v - 1) as f64 / 2.0,
    )
}

/// Rendered scene plus ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SyntheticSceneSpec,
    pub lf: LightField,
    /// Per-view disparity of the visible layer, `[1, 1, H, W]`, in pixels per
    /// angular grid step (row-major grid order).
    pub disparity: Vec<Tensor>,
    /// Per-view index of the visible layer at each pixel.
    pub visible: Vec<Vec<u8>>,
}

impl SyntheticScene {
    fn view_index(&self, p: AngularPos) -> usize {
        p.v * self.lf.grid().n_u + p.u
    }

    pub fn disparity_at(&self, p: AngularPos) -> &Tensor {
        &self.disparity[self.view_index(p)]
    }

    pub fn visible_at(&self, p: AngularPos) -> &[u8] {
        &self.visible[self.view_index(p)]
    }
}

/// Render one layer alone at view `p`: RGB values and support mask.
pub fn render_layer(spec: &SyntheticSceneSpec, layer: usize, p: AngularPos) -> (Tensor, Vec<bool>) {
    let layers = build_layers(spec);
    let l = &layers[layer];
    let (su, sv) = view_shift(spec.grid, p);
    let (h, w) = (spec.height, spec.width);
    let mut mask = Vec::with_capacity(h * w);
    let mut rgb = Tensor::zeros([1, 3, h, w]);
    for y in 0..h {
        for x in 0..w {
            let (lx, ly) = (x as f64 - su * l.disparity, y as f64 - sv * l.disparity);
            mask.push(l.covers(lx, ly));
            let c = l.color(lx, ly);
            for (k, v) in c.iter().enumerate() {
                rgb.set(0, k, y, x, *v);
            }
        }
    }
    (rgb, mask)
}

/// Render every view of a layered scene with its exact disparity maps.
pub fn generate_synthetic(spec: &SyntheticSceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let layers = build_layers(spec);
    let grid = spec.grid;
    let (h, w) = (spec.height, spec.width);
    let positions: Vec<AngularPos> = (0..grid.n_v)
        .flat_map(|v| (0..grid.n_u).map(move |u| AngularPos::new(v, u)))
        .collect();
    let rendered = parallel::map_indices(positions.len(), |i| {
        let (su, sv) = view_shift(grid, positions[i]);
        let mut rgb = vec![0.0f32; 3 * h * w];
        let mut disp = Tensor::zeros([1, 1, h, w]);
        let mut vis = vec![0u8; h * w];
        for y in 0..h {
            for x in 0..w {
                for (k, l) in layers.iter().enumerate() {
                    let (lx, ly) = (x as f64 - su * l.disparity, y as f64 - sv * l.disparity);
                    if l.covers(lx, ly) {
                        let c = l.color(lx, ly);
                        for ch in 0..3 {
                            rgb[(ch * h + y) * w + x] = c[ch].clamp(0.0, 1.0) as f32;
                        }
                        disp.set(0, 0, y, x, l.disparity);
                        vis[y * w + x] = k as u8;
                        break;
                    }
                }
            }
        }
        (rgb, disp, vis)
    });
    let mut data = Vec::with_capacity(positions.len() * 3 * h * w);
    let mut disparity = Vec::with_capacity(positions.len());
    let mut visible = Vec::with_capacity(positions.len());
    for (rgb, disp, vis) in rendered {
        data.extend_from_slice(&rgb);
        disparity.push(disp);
        visible.push(vis);
    }
    Ok(SyntheticScene {
        spec: spec.clone(),
        lf: LightField::new(grid, h, w, data)?,
        disparity,
        visible,
    })
}

fn default_layer_count() -> [usize; 2] {
    [1, 3]
}

fn default_disparity_range() -> [f64; 2] {
    [-2.0, 2.0]
}

/// Key-value description of a synthetic scene or family of scenes.
///
/// With explicit `layers` every scene uses those disparities (texture seeds
/// are offset by the scene index). Otherwise each scene draws a layer count
/// from `layer_count` and disparities uniformly from `disparity_range`,
/// ordered so nearer layers have larger disparity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub height: usize,
    pub width: usize,
    /// `[n_v, n_u]`.
    pub angular: [usize; 2],
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub layers: Vec<LayerSpec>,
    #[serde(default = "default_layer_count")]
    pub layer_count: [usize; 2],
    #[serde(default = "default_disparity_range")]
    pub disparity_range: [f64; 2],
    /// Round drawn disparities to integers.
    #[serde(default)]
    pub integer_disparity: bool,
}

impl SyntheticConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn grid(&self) -> AngularGrid {
        AngularGrid::new(self.angular[0], self.angular[1])
    }

    /// Scene `index` of the family described by this config.
    pub fn scene_spec(&self, index: usize) -> SyntheticSceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        let layers = if self.layers.is_empty() {
            let [lo, hi] = self.layer_count;
            let count = rng.gen_range(lo.max(1)..=hi.max(lo.max(1)));
            let [dlo, dhi] = self.disparity_range;
            let mut d: Vec<f64> = (0..count)
                .map(|_| {
                    let v = if dhi > dlo { rng.gen_range(dlo..=dhi) } else { dlo };
                    if self.integer_disparity {
                        v.round()
                    } else {
                        v
                    }
                })
                .collect();
            d.sort_by(|a, b| b.total_cmp(a));
            d.into_iter()
                .map(|disparity| LayerSpec {
                    disparity,
                    seed: rng.gen(),
                })
                .collect()
        } else {
            self.layers
                .iter()
                .map(|l| LayerSpec {
                    disparity: l.disparity,
                    seed: l.seed.wrapping_add(index as u64),
                })
                .collect()
        };
        SyntheticSceneSpec {
            layers,
            height: self.height,
            width: self.width,
            grid: self.grid(),
        }
    }
}
