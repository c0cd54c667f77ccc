//! Y-channel PSNR and MS-SSIM over every interior view, ablation tables and
//! qualitative exports.

mod metrics;
mod qualitative;

pub use metrics::{
    feasible_scales, luma, ms_ssim, msssim_db, psnr_from_mse, psnr_y, MsSsim, DB_CAP,
    MSSSIM_WEIGHTS,
};
pub use qualitative::{export_qualitative, CropBox};

use std::fmt::Write as _;
use std::path::Path;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::geometry::{choose_corners, AngularPos};
use crate::lf_data::{LightField, SceneSource};
use crate::networks::{synthesize, ModelParams};
use crate::parallel;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalEntry {
    pub scene: String,
    pub v: usize,
    pub u: usize,
    pub psnr_db: f64,
    pub msssim_db: f64,
    pub msssim_scales: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub checkpoint_id: String,
    pub dataset_id: String,
    pub entries: Vec<EvalEntry>,
}

/// Per-scene means, in order of first appearance.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneMean {
    pub scene: String,
    pub views: usize,
    pub psnr_db: f64,
    pub msssim_db: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl EvalReport {
    pub fn scene_means(&self) -> Vec<SceneMean> {
        let mut order: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !order.contains(&e.scene.as_str()) {
                order.push(&e.scene);
            }
        }
        order
            .into_iter()
            .map(|s| {
                let of = || self.entries.iter().filter(move |e| e.scene == s);
                SceneMean {
                    scene: s.to_string(),
                    views: of().count(),
                    psnr_db: mean(of().map(|e| e.psnr_db)),
                    msssim_db: mean(of().map(|e| e.msssim_db)),
                }
            })
            .collect()
    }

    /// Mean over views within each scene, then over scenes: `(PSNR, MS-SSIM dB)`.
    pub fn mean_per_scene(&self) -> (f64, f64) {
        let s = self.scene_means();
        (mean(s.iter().map(|m| m.psnr_db)), mean(s.iter().map(|m| m.msssim_db)))
    }

    /// Mean over all entries pooled together.
    pub fn mean_pooled(&self) -> (f64, f64) {
        (
            mean(self.entries.iter().map(|e| e.psnr_db)),
            mean(self.entries.iter().map(|e| e.msssim_db)),
        )
    }

    /// Whether any MS-SSIM value used fewer than five scales.
    pub fn reduced_scales(&self) -> bool {
        self.entries.iter().any(|e| e.msssim_scales < MSSSIM_WEIGHTS.len())
    }

    /// `scene,v,u,psnr_db,msssim_db` rows, then the two aggregate rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene,v,u,psnr_db,msssim_db\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{:.6},{:.6}", e.scene, e.v, e.u, e.psnr_db, e.msssim_db);
        }
        let (p, m) = self.mean_per_scene();
        let _ = writeln!(out, "mean_per_scene,,,{p:.6},{m:.6}");
        let (p, m) = self.mean_pooled();
        let _ = writeln!(out, "mean_pooled,,,{p:.6},{m:.6}");
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "checkpoint {}  dataset {}", self.checkpoint_id, self.dataset_id);
        let _ = writeln!(out, "{:<24} {:>6} {:>10} {:>14}", "scene", "views", "PSNR (dB)", "MS-SSIM (dB)");
        for s in self.scene_means() {
            let _ = writeln!(
                out,
                "{:<24} {:>6} {:>10.2} {:>14.2}",
                s.scene, s.views, s.psnr_db, s.msssim_db
            );
        }
        let (p, m) = self.mean_per_scene();
        let _ = writeln!(out, "{:<24} {:>6} {:>10.2} {:>14.2}", "mean (per scene)", "", p, m);
        let (p, m) = self.mean_pooled();
        let _ = writeln!(out, "{:<24} {:>6} {:>10.2} {:>14.2}", "mean (pooled)", "", p, m);
        if self.reduced_scales() {
            out.push_str("note: some views are too small for 5 MS-SSIM scales; fewer scales were used\n");
        }
        out
    }
}

/// Score one rendered view against its ground truth.
pub fn score(scene: &str, target: AngularPos, pred: &Tensor, gt: &Tensor) -> Result<EvalEntry> {
    let ms = ms_ssim(pred, gt)?;
    Ok(EvalEntry {
        scene: scene.to_string(),
        v: target.v,
        u: target.u,
        psnr_db: psnr_y(pred, gt)?,
        msssim_db: ms.db(),
        msssim_scales: ms.scales,
    })
}

/// Render every interior view of every scene with `render` and score it.
/// Targets within a scene are processed in parallel.
pub fn evaluate_with<F>(source: &dyn SceneSource, render: F) -> Result<Vec<EvalEntry>>
where
    F: Fn(&LightField, AngularPos) -> Result<Tensor> + Sync,
{
    let mut entries = Vec::new();
    for i in 0..source.len() {
        let lf = source.load(i)?;
        let id = source.scene_id(i);
        let targets = lf.grid().interior_positions();
        let scored = parallel::map_indices(targets.len(), |k| {
            let t = targets[k];
            let pred = render(&lf, t)?;
            score(&id, t, &pred, &lf.view_tensor(t))
        });
        for e in scored {
            entries.push(e?);
        }
    }
    Ok(entries)
}

/// Synthesize all interior views of every scene from its corners and score them.
pub fn evaluate(
    model: &ModelParams,
    source: &dyn SceneSource,
    checkpoint_id: &str,
    dataset_id: &str,
) -> Result<EvalReport> {
    let entries = evaluate_with(source, |lf, t| Ok(synthesize(lf, t, model)?.image))?;
    Ok(EvalReport {
        checkpoint_id: checkpoint_id.to_string(),
        dataset_id: dataset_id.to_string(),
        entries,
    })
}

/// Unwarped mean of the four corner views.
pub fn corner_average(lf: &LightField, _target: AngularPos) -> Result<Tensor> {
    let (h, w) = lf.spatial_extent();
    let mut acc = Tensor::zeros([1, 3, h, w]);
    for c in lf.grid().corners() {
        acc.add_assign(&lf.view_tensor(c));
    }
    Ok(acc.map(|v| v * 0.25))
}

/// Unwarped mean of the three corners the model would use for `target`.
pub fn selected_corner_average(lf: &LightField, target: AngularPos) -> Result<Tensor> {
    let choice = choose_corners(lf.grid(), target)?;
    let (h, w) = lf.spatial_extent();
    let mut acc = Tensor::zeros([1, 3, h, w]);
    for p in choice.selected {
        acc.add_assign(&lf.view_tensor(p));
    }
    Ok(acc.map(|v| v / 3.0))
}

/// Display name of an architecture variant.
pub fn variant_name(attention: bool) -> &'static str {
    if attention {
        "LFVS-AM"
    } else {
        "LFVS"
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub n_resgroups: usize,
    pub n_cbam: usize,
    pub attention: bool,
    pub psnr_db: f64,
    pub msssim_db: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationReport {
    pub dataset_id: String,
    pub rows: Vec<AblationRow>,
}

/// A checkpoint with the configuration it is claimed to have.
pub struct AblationEntry {
    pub n_resgroups: usize,
    pub n_cbam: usize,
    pub attention: bool,
    pub checkpoint: Checkpoint,
}

/// Evaluate each tagged checkpoint and collect one row per entry.
pub fn ablation_grid(
    entries: &[AblationEntry],
    source: &dyn SceneSource,
    dataset_id: &str,
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        let cfg = &e.checkpoint.model.config;
        if (cfg.n_resgroups, cfg.n_cbam, cfg.attention) != (e.n_resgroups, e.n_cbam, e.attention) {
            return Err(Error::Checkpoint(format!(
                "checkpoint has ({}, {}, attention {}), tagged as ({}, {}, attention {})",
                cfg.n_resgroups, cfg.n_cbam, cfg.attention, e.n_resgroups, e.n_cbam, e.attention
            )));
        }
        let report = evaluate(&e.checkpoint.model, source, &e.checkpoint.fingerprint(), dataset_id)?;
        let (psnr_db, msssim_db) = report.mean_per_scene();
        rows.push(AblationRow {
            name: variant_name(e.attention).to_string(),
            n_resgroups: e.n_resgroups,
            n_cbam: e.n_cbam,
            attention: e.attention,
            psnr_db,
            msssim_db,
        });
    }
    Ok(AblationReport {
        dataset_id: dataset_id.to_string(),
        rows,
    })
}

impl AblationReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset {}", self.dataset_id);
        let _ = writeln!(
            out,
            "{:<8} {:>11} {:>8} {:>10} {:>14}",
            "model", "# ResGroups", "# CBAMs", "PSNR (dB)", "MS-SSIM (dB)"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<8} {:>11} {:>8} {:>10.2} {:>14.2}",
                r.name, r.n_resgroups, r.n_cbam, r.psnr_db, r.msssim_db
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,n_resgroups,n_cbam,attention,psnr_db,msssim_db\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6}",
                r.name, r.n_resgroups, r.n_cbam, r.attention, r.psnr_db, r.msssim_db
            );
        }
        out
    }
}
