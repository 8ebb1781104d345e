//! Flat `key = value` configuration covering data generation, augmentation
//! and both training stages.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::schedule::PolySchedule;
use crate::augment::{AugmentationSpec, MorphMode};
use crate::data::SceneConfig;
use crate::error::{Result, TcnnError};
use crate::losses::LossWeights;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub scene: SceneConfig,
    pub train_videos: usize,
    pub val_videos: usize,
    pub test_videos: usize,
    pub augmentation: AugmentationSpec,

    pub ae_epochs: usize,
    pub ae_batch_size: usize,
    pub ae_schedule: PolySchedule,

    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: PolySchedule,
    pub momentum: f64,
    pub weights: LossWeights,
    pub margin: f64,
    pub temporal_module: bool,
    pub fps_stride: usize,
    pub ignore_classes: Vec<u8>,
    pub seed: u64,

    pub data_dir: PathBuf,
    pub ae_checkpoint: PathBuf,
    pub seg_checkpoint: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scene: SceneConfig::default(),
            train_videos: 40,
            val_videos: 10,
            test_videos: 10,
            augmentation: AugmentationSpec::default(),
            ae_epochs: 30,
            ae_batch_size: 4,
            ae_schedule: PolySchedule {
                initial_lr: 0.02,
                final_lr: 1e-5,
                power: 0.9,
            },
            epochs: 30,
            batch_size: 4,
            schedule: PolySchedule::default(),
            momentum: 0.9,
            weights: LossWeights::default(),
            margin: 0.0,
            temporal_module: true,
            fps_stride: 1,
            ignore_classes: Vec::new(),
            seed: 0,
            data_dir: PathBuf::from("data"),
            ae_checkpoint: PathBuf::from("ae.ckpt"),
            seg_checkpoint: PathBuf::from("seg.ckpt"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse {value:?} as a number"))
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got {value:?}")),
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_num)
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let aug = &mut self.augmentation;
        match key {
            "num_classes" => self.scene.num_classes = parse_num(value)?,
            "frame_height" => self.scene.frame_hw.0 = parse_num(value)?,
            "frame_width" => self.scene.frame_hw.1 = parse_num(value)?,
            "video_length" => self.scene.video_length = parse_num(value)?,
            "label_stride" => self.scene.label_stride = parse_num(value)?,
            "blob_drift" => self.scene.blob_drift = parse_num(value)?,
            "boundary_jitter" => self.scene.boundary_jitter = parse_num(value)?,
            "occluder_probability" => self.scene.occluder_probability = parse_num(value)?,
            "data_seed" => self.scene.seed = parse_num(value)?,
            "train_videos" => self.train_videos = parse_num(value)?,
            "val_videos" => self.val_videos = parse_num(value)?,
            "test_videos" => self.test_videos = parse_num(value)?,

            "rotation_range" => aug.rotation_range = parse_num(value)?,
            "scale_min" => aug.scale_range.0 = parse_num(value)?,
            "scale_max" => aug.scale_range.1 = parse_num(value)?,
            "morph_kernels" => aug.morph_kernels = parse_list(value)?,
            "morph_mode" => {
                aug.morph_mode = MorphMode::parse(value)
                    .ok_or_else(|| format!("morph_mode must be erode, dilate or both, got {value:?}"))?
            }
            "hull_probability" => aug.hull_probability = parse_num(value)?,
            "affine_probability" => aug.affine_probability = parse_num(value)?,
            "morph_probability" => aug.morph_probability = parse_num(value)?,

            "ae_epochs" => self.ae_epochs = parse_num(value)?,
            "ae_batch_size" => self.ae_batch_size = parse_num(value)?,
            "ae_initial_lr" => self.ae_schedule.initial_lr = parse_num(value)?,
            "ae_final_lr" => self.ae_schedule.final_lr = parse_num(value)?,
            "ae_poly_power" => self.ae_schedule.power = parse_num(value)?,

            "epochs" => self.epochs = parse_num(value)?,
            "batch_size" => self.batch_size = parse_num(value)?,
            "initial_lr" => self.schedule.initial_lr = parse_num(value)?,
            "final_lr" => self.schedule.final_lr = parse_num(value)?,
            "poly_power" => self.schedule.power = parse_num(value)?,
            "momentum" => self.momentum = parse_num(value)?,
            "lambda_g" => {
                self.weights = LossWeights::new(parse_num(value)?, self.weights.lambda_c())
                    .map_err(|e| e.to_string())?
            }
            "lambda_c" => {
                self.weights = LossWeights::new(self.weights.lambda_g(), parse_num(value)?)
                    .map_err(|e| e.to_string())?
            }
            "margin" => self.margin = parse_num(value)?,
            "temporal_module" => self.temporal_module = parse_bool(value)?,
            "fps_stride" => self.fps_stride = parse_num(value)?,
            "ignore_classes" => self.ignore_classes = parse_list(value)?,
            "seed" => self.seed = parse_num(value)?,

            "data_dir" => self.data_dir = PathBuf::from(value),
            "ae_checkpoint" => self.ae_checkpoint = PathBuf::from(value),
            "seg_checkpoint" => self.seg_checkpoint = PathBuf::from(value),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults. Every problem is reported
    /// with its 1-based line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| TcnnError::Config {
                line,
                message: format!("expected `key = value`, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(TcnnError::Config {
                    line,
                    message: format!("duplicate key {key:?}"),
                });
            }
            cfg.set(key, value)
                .map_err(|message| TcnnError::Config { line, message })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.augmentation.validate()?;
        self.schedule.validate()?;
        self.ae_schedule.validate()?;
        if self.epochs == 0 || self.ae_epochs == 0 {
            return Err(TcnnError::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 || self.ae_batch_size == 0 {
            return Err(TcnnError::invalid("batch sizes must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TcnnError::invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(TcnnError::invalid("margin must be finite and non-negative"));
        }
        if self.fps_stride == 0 {
            return Err(TcnnError::invalid("fps_stride must be at least 1"));
        }
        if self.train_videos == 0 || self.val_videos == 0 {
            return Err(TcnnError::invalid("train and validation splits need at least one video"));
        }
        if let Some(c) = self
            .ignore_classes
            .iter()
            .find(|&&c| c as usize >= self.scene.num_classes)
        {
            return Err(TcnnError::invalid(format!("ignored class {c} does not exist")));
        }
        Ok(())
    }

    /// Renders every key; [`TrainConfig::parse`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let s = &self.scene;
        let a = &self.augmentation;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("string write");
        kv("num_classes", s.num_classes.to_string());
        kv("frame_height", s.frame_hw.0.to_string());
        kv("frame_width", s.frame_hw.1.to_string());
        kv("video_length", s.video_length.to_string());
        kv("label_stride", s.label_stride.to_string());
        kv("blob_drift", s.blob_drift.to_string());
        kv("boundary_jitter", s.boundary_jitter.to_string());
        kv("occluder_probability", s.occluder_probability.to_string());
        kv("data_seed", s.seed.to_string());
        kv("train_videos", self.train_videos.to_string());
        kv("val_videos", self.val_videos.to_string());
        kv("test_videos", self.test_videos.to_string());
        kv("rotation_range", a.rotation_range.to_string());
        kv("scale_min", a.scale_range.0.to_string());
        kv("scale_max", a.scale_range.1.to_string());
        kv("morph_kernels", join(&a.morph_kernels));
        kv("morph_mode", a.morph_mode.as_str().to_owned());
        kv("hull_probability", a.hull_probability.to_string());
        kv("affine_probability", a.affine_probability.to_string());
        kv("morph_probability", a.morph_probability.to_string());
        kv("ae_epochs", self.ae_epochs.to_string());
        kv("ae_batch_size", self.ae_batch_size.to_string());
        kv("ae_initial_lr", self.ae_schedule.initial_lr.to_string());
        kv("ae_final_lr", self.ae_schedule.final_lr.to_string());
        kv("ae_poly_power", self.ae_schedule.power.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("initial_lr", self.schedule.initial_lr.to_string());
        kv("final_lr", self.schedule.final_lr.to_string());
        kv("poly_power", self.schedule.power.to_string());
        kv("momentum", self.momentum.to_string());
        kv("lambda_g", self.weights.lambda_g().to_string());
        kv("lambda_c", self.weights.lambda_c().to_string());
        kv("margin", self.margin.to_string());
        kv("temporal_module", self.temporal_module.to_string());
        kv("fps_stride", self.fps_stride.to_string());
        kv("ignore_classes", join(&self.ignore_classes));
        kv("seed", self.seed.to_string());
        kv("data_dir", self.data_dir.display().to_string());
        kv("ae_checkpoint", self.ae_checkpoint.display().to_string());
        kv("seg_checkpoint", self.seg_checkpoint.display().to_string());
        out
    }
}
