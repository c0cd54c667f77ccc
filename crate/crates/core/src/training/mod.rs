//! Losses, augmentation, Adam and the optimization loop.

mod adam;
mod augment;
mod loss;

pub use adam::{Adam, AdamConfig};
pub use augment::{
    apply_augmentation, augment, draw_augmentation, sample_target, Augmentation, TrainSample,
};
pub use loss::{loss_final, loss_warp, total_loss, LossTerms, LossWeights};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Backend, Gradients, Tape};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::evaluation::psnr_y;
use crate::geometry::AngularPos;
use crate::lf_data::SceneSource;
use crate::networks::{forward, synthesize, BatchInputs, ModelConfig, ModelParams};
use crate::parallel;

/// Training hyperparameters, read from a TOML file. Every key is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub crop_size: usize,
    pub gamma_range: [f64; 2],
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    /// Passes over the training scenes; ignored when `steps` is set.
    pub epochs: Option<u64>,
    /// Total optimizer steps.
    pub steps: Option<u64>,
    /// Write `latest.ckpt` (and validate) every this many steps.
    pub checkpoint_every: u64,
    /// Targets `[v, u]` scored during validation; empty means the grid centre.
    pub validation_targets: Vec<[usize; 2]>,
    pub loss: LossWeights,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            crop_size: 192,
            gamma_range: [0.4, 1.0],
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            adam_eps: 1e-8,
            batch_size: 8,
            epochs: None,
            steps: None,
            checkpoint_every: 1000,
            validation_targets: Vec::new(),
            loss: LossWeights::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.gamma_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("gamma_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
        }
        if self.crop_size == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config("crop_size, batch_size and checkpoint_every must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        let betas = [self.adam_beta1, self.adam_beta2];
        if betas.iter().any(|b| !(0.0..1.0).contains(b)) || self.adam_eps <= 0.0 {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps be positive".into()));
        }
        self.loss.validate()?;
        self.model.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Step budget: `steps` if given, else `epochs` passes over `n_scenes`.
    pub fn total_steps(&self, n_scenes: usize) -> Result<u64> {
        match (self.steps, self.epochs) {
            (Some(s), _) => Ok(s),
            (None, Some(e)) => Ok(e * (n_scenes as u64).div_ceil(self.batch_size as u64)),
            (None, None) => Err(Error::Config("set either `steps` or `epochs`".into())),
        }
    }
}

/// Losses of one optimizer step, averaged over the batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    /// 1-based step number.
    pub step: u64,
    pub total: f64,
    pub final_term: f64,
    pub warp_term: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Model, optimizer and step counter. Every random draw is a function of the
/// seed and the sample index, so an interrupted run resumes identically.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: ModelParams,
    pub adam: Adam,
    /// Completed steps.
    pub step: u64,
    perm: Option<(u64, Vec<usize>)>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = ModelParams::new(config.model.clone(), config.seed)?;
        let adam = Adam::new(config.adam(), &model.store);
        Ok(Trainer {
            config,
            model,
            adam,
            step: 0,
            perm: None,
        })
    }

    /// Continue from a checkpoint; its architecture must match `config.model`.
    pub fn resume(config: TrainConfig, ckpt: Checkpoint) -> Result<Self> {
        config.validate()?;
        if ckpt.model.config != config.model {
            return Err(Error::Checkpoint(format!(
                "checkpoint architecture {:?} differs from configured {:?}",
                ckpt.model.config, config.model
            )));
        }
        let adam = match ckpt.optimizer {
            Some(state) => Adam::with_state(config.adam(), state, &ckpt.model.store)?,
            None => Adam::new(config.adam(), &ckpt.model.store),
        };
        Ok(Trainer {
            config,
            model: ckpt.model,
            adam,
            step: ckpt.step,
            perm: None,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(self.model.clone(), self.step);
        c.optimizer = Some(self.adam.state.clone());
        c.meta.insert("seed".into(), self.config.seed.to_string());
        c
    }

    /// Scene index of global sample `idx`: scenes are visited in a fresh
    /// random order every epoch.
    fn scene_for(&mut self, idx: u64, n: usize) -> usize {
        let epoch = idx / n as u64;
        if self.perm.as_ref().map(|p| p.0) != Some(epoch) {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix(self.config.seed ^ splitmix(epoch)));
            order.shuffle(&mut rng);
            self.perm = Some((epoch, order));
        }
        self.perm.as_ref().expect("set above").1[(idx % n as u64) as usize]
    }

    /// Build the augmented sample for global sample index `idx`.
    pub fn sample(&mut self, source: &dyn SceneSource, idx: u64) -> Result<TrainSample> {
        let scene = self.scene_for(idx, source.len());
        let lf = source.load(scene)?;
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(!self.config.seed ^ splitmix(idx)));
        augment(&lf, self.config.crop_size, self.config.gamma_range, &mut rng)
    }

    /// Loss and parameter gradients of one sample.
    pub fn sample_gradients(&self, sample: &TrainSample) -> Result<(StepLog, Gradients)> {
        let inputs = BatchInputs::from_parts(&[(sample.views.clone(), sample.choice)])?;
        let mut tape = Tape::new(&self.model.store);
        let out = forward(&mut tape, &self.model, &inputs)?;
        let gt = tape.constant(sample.gt.clone());
        let terms = total_loss(&mut tape, &out.prediction, &out.warped, &gt, &self.config.loss)?;
        let total = tape.value(&terms.total).item();
        let grads = tape.backward(terms.total)?;
        Ok((
            StepLog {
                step: 0,
                total,
                final_term: terms.final_term,
                warp_term: terms.warp_term,
            },
            grads,
        ))
    }

    /// One optimizer step. Samples of the batch are prepared and
    /// differentiated in parallel; gradients are reduced in sample order.
    pub fn train_step(&mut self, source: &dyn SceneSource) -> Result<StepLog> {
        if source.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let b = self.config.batch_size;
        let first = self.step * b as u64;
        let samples = (0..b)
            .map(|j| self.sample(source, first + j as u64))
            .collect::<Result<Vec<_>>>()?;
        let results = parallel::map_indices(b, |j| self.sample_gradients(&samples[j]));
        let mut log = StepLog {
            step: self.step + 1,
            total: 0.0,
            final_term: 0.0,
            warp_term: 0.0,
        };
        let mut acc: Option<Gradients> = None;
        for r in results {
            let (l, g) = r?;
            log.total += l.total / b as f64;
            log.final_term += l.final_term / b as f64;
            log.warp_term += l.warp_term / b as f64;
            match acc.as_mut() {
                Some(a) => a.accumulate(g),
                None => acc = Some(g),
            }
        }
        if !log.total.is_finite() {
            return Err(Error::NonFiniteLoss { step: log.step });
        }
        let grads = acc.expect("batch is nonempty");
        self.adam.step(&mut self.model.store, &grads, 1.0 / b as f64);
        self.step += 1;
        Ok(log)
    }

    /// Mean Y-PSNR over the validation targets of every validation scene.
    pub fn validate(&self, source: &dyn SceneSource) -> Result<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..source.len() {
            let lf = source.load(i)?;
            let grid = lf.grid();
            let targets: Vec<AngularPos> = if self.config.validation_targets.is_empty() {
                vec![AngularPos::new(grid.n_v / 2, grid.n_u / 2)]
            } else {
                self.config
                    .validation_targets
                    .iter()
                    .map(|&[v, u]| AngularPos::new(v, u))
                    .collect()
            };
            for t in targets {
                let s = synthesize(&lf, t, &self.model)?;
                sum += psnr_y(&s.image, &lf.view_tensor(t))?;
                n += 1;
            }
        }
        Ok(if n == 0 { f64::NAN } else { sum / n as f64 })
    }
}

/// Files written by [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutputs {
    pub latest: PathBuf,
    pub best: Option<PathBuf>,
    pub loss_log: PathBuf,
    pub final_step: u64,
    pub best_val_psnr: Option<f64>,
    pub seconds: f64,
}

const LOSS_HEADER: &str = "step,total,final,warp";

/// Keep loss-log rows up to `step` (used when resuming).
fn truncated_log(path: &Path, step: u64) -> Result<String> {
    let mut out = format!("{LOSS_HEADER}\n");
    if let Ok(text) = std::fs::read_to_string(path) {
        for line in text.lines().skip(1) {
            let s = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
            if matches!(s, Some(s) if s <= step) {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// Run (or continue) training until the configured step budget, writing
/// `loss.csv`, `latest.ckpt`, and `best.ckpt` (by validation PSNR, when a
/// validation set is given) under `out_dir`. On a non-finite loss the
/// pre-step parameters are saved as `diagnostic.ckpt` and the error returned.
pub fn train(
    trainer: &mut Trainer,
    source: &dyn SceneSource,
    validation: Option<&dyn SceneSource>,
    out_dir: &Path,
    on_step: &mut dyn FnMut(&StepLog),
) -> Result<TrainOutputs> {
    if source.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let started = Instant::now();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let total_steps = trainer.config.total_steps(source.len())?;
    let loss_path = out_dir.join("loss.csv");
    let latest = out_dir.join("latest.ckpt");
    let best_path = out_dir.join("best.ckpt");
    let mut log = truncated_log(&loss_path, trainer.step)?;
    let mut best: Option<f64> = Checkpoint::load(&best_path)
        .ok()
        .and_then(|c| c.meta.get("val_psnr").and_then(|v| v.parse().ok()));
    let every = trainer.config.checkpoint_every;

    while trainer.step < total_steps {
        let entry = match trainer.train_step(source) {
            Ok(l) => l,
            Err(e @ Error::NonFiniteLoss { .. }) => {
                let mut c = trainer.checkpoint();
                c.meta.insert("reason".into(), e.to_string());
                c.save(&out_dir.join("diagnostic.ckpt"))?;
                std::fs::write(&loss_path, &log).map_err(|e| Error::io(&loss_path, e))?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let _ = writeln!(
            log,
            "{},{:.9},{:.9},{:.9}",
            entry.step, entry.total, entry.final_term, entry.warp_term
        );
        on_step(&entry);
        if trainer.step % every == 0 || trainer.step == total_steps {
            let mut ckpt = trainer.checkpoint();
            if let Some(val) = validation.filter(|v| !v.is_empty()) {
                let psnr = trainer.validate(val)?;
                ckpt.meta.insert("val_psnr".into(), format!("{psnr}"));
                if best.map_or(true, |b| psnr > b) {
                    best = Some(psnr);
                    ckpt.save(&best_path)?;
                }
            }
            ckpt.save(&latest)?;
            std::fs::write(&loss_path, &log).map_err(|e| Error::io(&loss_path, e))?;
        }
    }
    std::fs::write(&loss_path, &log).map_err(|e| Error::io(&loss_path, e))?;
    if !latest.exists() {
        trainer.checkpoint().save(&latest)?;
    }
    Ok(TrainOutputs {
        latest,
        best: best.map(|_| best_path),
        loss_log: loss_path,
        final_step: trainer.step,
        best_val_psnr: best,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Parse a loss log back into step records.
pub fn read_loss_log(path: &Path) -> Result<Vec<StepLog>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |i: usize| -> Result<f64> {
                f.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("bad loss log line '{l}'")))
            };
            Ok(StepLog {
                step: num(0)? as u64,
                total: num(1)?,
                final_term: num(2)?,
                warp_term: num(3)?,
            })
        })
        .collect()
}
