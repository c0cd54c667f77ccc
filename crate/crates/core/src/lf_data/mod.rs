//! Light-field container, on-disk ingestion, train/test splitting and a
//! synthetic layered-scene generator.

mod synthetic;

pub use synthetic::{
    generate_synthetic, render_layer, LayerSpec, SyntheticConfig, SyntheticScene, SyntheticSceneSpec,
};

use std::borrow::Cow;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AngularGrid, AngularPos};
use crate::image_io;
use crate::parallel;
use crate::tensor::Tensor;

/// Sub-aperture views `(v, u, channel, y, x)` of RGB pixels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LightField {
    grid: AngularGrid,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl LightField {
    pub fn new(grid: AngularGrid, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let expected = grid.n_v * grid.n_u * 3 * height * width;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "light field {}x{} views of {height}x{width} needs {expected} values, got {}",
                grid.n_v,
                grid.n_u,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(LightField {
            grid,
            height,
            width,
            data,
        })
    }

    /// Assemble from per-view `[1, 3, H, W]` tensors in row-major grid order.
    pub fn from_views(grid: AngularGrid, views: &[Tensor]) -> Result<Self> {
        if views.len() != grid.n_v * grid.n_u {
            return Err(Error::Shape(format!(
                "{} views for a {}x{} grid",
                views.len(),
                grid.n_v,
                grid.n_u
            )));
        }
        let [_, _, h, w] = views[0].shape();
        let mut data = Vec::with_capacity(views.len() * 3 * h * w);
        for v in views {
            v.expect_shape([1, 3, h, w])?;
            data.extend(v.data().iter().map(|&x| x as f32));
        }
        LightField::new(grid, h, w, data)
    }

    pub fn grid(&self) -> AngularGrid {
        self.grid
    }

    /// `(height, width)` of every view.
    pub fn spatial_extent(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn view_len(&self) -> usize {
        3 * self.height * self.width
    }

    fn view_offset(&self, p: AngularPos) -> usize {
        assert!(self.grid.contains(p), "view {p:?} outside grid");
        (p.v * self.grid.n_u + p.u) * self.view_len()
    }

    /// Raw `(channel, y, x)` samples of one view.
    pub fn view_data(&self, p: AngularPos) -> &[f32] {
        let o = self.view_offset(p);
        &self.data[o..o + self.view_len()]
    }

    /// One view as a `[1, 3, H, W]` tensor.
    pub fn view_tensor(&self, p: AngularPos) -> Tensor {
        let data = self.view_data(p).iter().map(|&v| v as f64).collect();
        Tensor::from_vec([1, 3, self.height, self.width], data).expect("view shape")
    }

    /// Spatial window `[y0, y0 + h) x [x0, x0 + w)` of one view.
    pub fn view_window(&self, p: AngularPos, y0: usize, x0: usize, h: usize, w: usize) -> Tensor {
        let src = self.view_data(p);
        let (vh, vw) = (self.height, self.width);
        Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
            src[(c * vh + y0 + y) * vw + x0 + x] as f64
        })
    }

    /// Keep the angular sub-grid starting at `(v0, u0)` with extent `sub`.
    pub fn crop_angular(&self, v0: usize, u0: usize, sub: AngularGrid) -> Result<Self> {
        if v0 + sub.n_v > self.grid.n_v || u0 + sub.n_u > self.grid.n_u {
            return Err(Error::InvalidArgument(format!(
                "angular crop {}x{} at ({v0}, {u0}) exceeds {}x{}",
                sub.n_v, sub.n_u, self.grid.n_v, self.grid.n_u
            )));
        }
        let mut data = Vec::with_capacity(sub.n_v * sub.n_u * self.view_len());
        for v in 0..sub.n_v {
            for u in 0..sub.n_u {
                data.extend_from_slice(self.view_data(AngularPos::new(v0 + v, u0 + u)));
            }
        }
        Ok(LightField {
            grid: sub,
            height: self.height,
            width: self.width,
            data,
        })
    }

    /// Mirror every view left-right and reverse the `u` axis, describing the
    /// same scene seen through a horizontally mirrored camera array.
    pub fn mirrored_h(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        let (h, w) = (self.height, self.width);
        for v in 0..self.grid.n_v {
            for u in 0..self.grid.n_u {
                let src = self.view_data(AngularPos::new(v, self.grid.n_u - 1 - u));
                for c in 0..3 {
                    for y in 0..h {
                        for x in 0..w {
                            data.push(src[(c * h + y) * w + (w - 1 - x)]);
                        }
                    }
                }
            }
        }
        LightField {
            grid: self.grid,
            height: h,
            width: w,
            data,
        }
    }
}

/// The four corner views of a light field, in [`AngularGrid::corners`]
/// order, as `[1, 3, H, W]` tensors in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CornerViews {
    pub grid: AngularGrid,
    pub views: [Tensor; 4],
}

impl CornerViews {
    pub fn from_lightfield(lf: &LightField) -> Self {
        let grid = lf.grid();
        CornerViews {
            grid,
            views: grid.corners().map(|p| lf.view_tensor(p)),
        }
    }

    /// View at a corner position of the grid.
    pub fn view(&self, p: AngularPos) -> Option<&Tensor> {
        self.grid.corners().iter().position(|&c| c == p).map(|i| &self.views[i])
    }

    pub fn spatial_extent(&self) -> (usize, usize) {
        (self.views[0].h(), self.views[0].w())
    }
}

/// How scene files are laid out on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// One directory per scene holding `view_<v>_<u>.png`.
    PerView,
    /// One lenslet-interleaved PNG per scene (`<scene>.png`), where pixel
    /// `(y * n_v + v, x * n_u + u)` belongs to view `(v, u)`.
    Packed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub root: PathBuf,
    pub layout: Layout,
    /// Angular extent of the capture on disk.
    pub capture: AngularGrid,
    /// Central angular sub-grid to keep.
    pub central_crop: AngularGrid,
}

impl DatasetSpec {
    pub fn per_view(root: impl Into<PathBuf>, capture: AngularGrid) -> Self {
        DatasetSpec {
            root: root.into(),
            layout: Layout::PerView,
            capture,
            central_crop: capture,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.central_crop.n_v > self.capture.n_v
            || self.central_crop.n_u > self.capture.n_u
            || self.central_crop.n_v < 2
            || self.central_crop.n_u < 2
        {
            return Err(Error::Config(format!(
                "central crop {}x{} does not fit capture {}x{}",
                self.central_crop.n_v, self.central_crop.n_u, self.capture.n_v, self.capture.n_u
            )));
        }
        Ok(())
    }

    /// First retained capture index along `(v, u)`. The leftover is split
    /// with the larger half before the crop, so 14 -> 7 keeps 4..=10.
    pub fn crop_offset(&self) -> (usize, usize) {
        (
            (self.capture.n_v - self.central_crop.n_v).div_ceil(2),
            (self.capture.n_u - self.central_crop.n_u).div_ceil(2),
        )
    }

    pub fn scene_path(&self, scene_id: &str) -> PathBuf {
        match self.layout {
            Layout::PerView => self.root.join(scene_id),
            Layout::Packed => self.root.join(format!("{scene_id}.png")),
        }
    }
}

pub fn view_file_name(p: AngularPos) -> String {
    format!("view_{}_{}.png", p.v, p.u)
}

/// Scene identifiers present under the dataset root, sorted.
pub fn discover_scenes(spec: &DatasetSpec) -> Result<Vec<String>> {
    let entries = fs::read_dir(&spec.root).map_err(|e| Error::io(&spec.root, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&spec.root, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        match spec.layout {
            Layout::PerView if path.is_dir() => {
                if path.join(view_file_name(AngularPos::new(0, 0))).exists() {
                    ids.push(name);
                }
            }
            Layout::Packed if path.is_file() => {
                if let Some(stem) = name.strip_suffix(".png") {
                    ids.push(stem.to_string());
                }
            }
            _ => {}
        }
    }
    ids.sort();
    Ok(ids)
}

fn rgb_to_view(img: &image::RgbImage) -> Vec<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = vec![0.0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            out[(c * h + y as usize) * w + x as usize] = px.0[c] as f32 / 255.0;
        }
    }
    out
}

/// Load one scene and crop it to the central angular grid.
pub fn load_lightfield(spec: &DatasetSpec, scene_id: &str) -> Result<LightField> {
    spec.validate()?;
    let grid = spec.central_crop;
    let positions: Vec<AngularPos> = (0..grid.n_v)
        .flat_map(|v| (0..grid.n_u).map(move |u| AngularPos::new(v, u)))
        .collect();
    let (h, w, data) = load_views(spec, scene_id, &positions)?;
    LightField::new(grid, h, w, data)
}

/// Load only the four corner views of the central angular grid.
pub fn load_corners(spec: &DatasetSpec, scene_id: &str) -> Result<CornerViews> {
    spec.validate()?;
    let grid = spec.central_crop;
    let corners = grid.corners();
    let (h, w, data) = load_views(spec, scene_id, &corners)?;
    let len = 3 * h * w;
    let views = [0, 1, 2, 3].map(|i| {
        Tensor::from_vec(
            [1, 3, h, w],
            data[i * len..(i + 1) * len].iter().map(|&v| v as f64).collect(),
        )
        .expect("view length matches its shape")
    });
    Ok(CornerViews { grid, views })
}

/// Pixel data of `positions` (relative to the central crop), concatenated
/// in `(c, y, x)` order per view.
fn load_views(
    spec: &DatasetSpec,
    scene_id: &str,
    positions: &[AngularPos],
) -> Result<(usize, usize, Vec<f32>)> {
    let (v0, u0) = spec.crop_offset();
    let positions: Vec<AngularPos> = positions
        .iter()
        .map(|p| AngularPos::new(v0 + p.v, u0 + p.u))
        .collect();
    match spec.layout {
        Layout::PerView => {
            let dir = spec.scene_path(scene_id);
            let views = parallel::map_indices(positions.len(), |i| {
                let p = positions[i];
                let path = dir.join(view_file_name(p));
                if !path.is_file() {
                    return Err(Error::MissingView {
                        v: p.v,
                        u: p.u,
                        path,
                    });
                }
                let img = image_io::read_rgb8(&path)?;
                Ok((img.height() as usize, img.width() as usize, rgb_to_view(&img)))
            });
            let mut data = Vec::new();
            let mut dims = None;
            for (i, view) in views.into_iter().enumerate() {
                let (h, w, pixels) = view?;
                match dims {
                    None => dims = Some((h, w)),
                    Some(d) if d != (h, w) => {
                        let p = positions[i];
                        return Err(Error::InconsistentViews {
                            scene: scene_id.to_string(),
                            detail: format!(
                                "view (v={}, u={}) is {h}x{w}, expected {}x{}",
                                p.v, p.u, d.0, d.1
                            ),
                        });
                    }
                    _ => {}
                }
                data.extend_from_slice(&pixels);
            }
            let (h, w) = dims.unwrap_or((0, 0));
            Ok((h, w, data))
        }
        Layout::Packed => {
            let path = spec.scene_path(scene_id);
            if !path.is_file() {
                return Err(Error::io(
                    &path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "scene file not found"),
                ));
            }
            let img = image_io::read_rgb8(&path)?;
            let cap = spec.capture;
            let (h, w) = (
                img.height() as usize / cap.n_v,
                img.width() as usize / cap.n_u,
            );
            if h == 0 || w == 0 {
                return Err(Error::InconsistentViews {
                    scene: scene_id.to_string(),
                    detail: format!(
                        "{}x{} image too small for {}x{} lenslets",
                        img.height(),
                        img.width(),
                        cap.n_v,
                        cap.n_u
                    ),
                });
            }
            let mut data = Vec::with_capacity(positions.len() * 3 * h * w);
            for p in &positions {
                for c in 0..3 {
                    for y in 0..h {
                        for x in 0..w {
                            let px = img.get_pixel((x * cap.n_u + p.u) as u32, (y * cap.n_v + p.v) as u32);
                            data.push(px.0[c] as f32 / 255.0);
                        }
                    }
                }
            }
            Ok((h, w, data))
        }
    }
}

/// Write a light field in the per-view layout under `dir`.
pub fn write_lightfield(lf: &LightField, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let grid = lf.grid();
    let positions: Vec<AngularPos> = (0..grid.n_v)
        .flat_map(|v| (0..grid.n_u).map(move |u| AngularPos::new(v, u)))
        .collect();
    parallel::map_indices(positions.len(), |i| {
        let p = positions[i];
        image_io::write_png(&lf.view_tensor(p), &dir.join(view_file_name(p)))
    })
    .into_iter()
    .collect()
}

/// Train/test partition of scene identifiers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Random test subset of `test_count` scenes; deterministic for a seed.
/// Both partitions keep the input order.
pub fn split_dataset(scene_ids: &[String], test_count: usize, seed: u64) -> Result<Split> {
    if test_count > scene_ids.len() {
        return Err(Error::InvalidArgument(format!(
            "test count {test_count} exceeds {} scenes",
            scene_ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..scene_ids.len()).collect();
    order.shuffle(&mut rng);
    let mut is_test = vec![false; scene_ids.len()];
    for &i in &order[..test_count] {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (id, t) in scene_ids.iter().zip(is_test) {
        if t {
            test.push(id.clone());
        } else {
            train.push(id.clone());
        }
    }
    Ok(Split { train, test })
}

/// Plain-text manifest: one scene identifier per line.
pub fn write_manifest(ids: &[String], path: &Path) -> Result<()> {
    let mut body = ids.join("\n");
    if !ids.is_empty() {
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

/// Indexed access to scenes, either resident or loaded on demand.
pub trait SceneSource: Sync {
    fn len(&self) -> usize;
    fn scene_id(&self, index: usize) -> String;
    fn load(&self, index: usize) -> Result<Cow<'_, LightField>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scenes held in memory.
pub struct InMemoryScenes {
    pub ids: Vec<String>,
    pub fields: Vec<LightField>,
}

impl InMemoryScenes {
    pub fn new(fields: Vec<LightField>) -> Self {
        let ids = (0..fields.len()).map(|i| format!("scene_{i:04}")).collect();
        InMemoryScenes { ids, fields }
    }
}

impl SceneSource for InMemoryScenes {
    fn len(&self) -> usize {
        self.fields.len()
    }
    fn scene_id(&self, index: usize) -> String {
        self.ids[index].clone()
    }
    fn load(&self, index: usize) -> Result<Cow<'_, LightField>> {
        Ok(Cow::Borrowed(&self.fields[index]))
    }
}

/// Scenes read from disk at each access.
pub struct DiskScenes {
    pub spec: DatasetSpec,
    pub ids: Vec<String>,
}

impl SceneSource for DiskScenes {
    fn len(&self) -> usize {
        self.ids.len()
    }
    fn scene_id(&self, index: usize) -> String {
        self.ids[index].clone()
    }
    fn load(&self, index: usize) -> Result<Cow<'_, LightField>> {
        load_lightfield(&self.spec, &self.ids[index]).map(Cow::Owned)
    }
}
