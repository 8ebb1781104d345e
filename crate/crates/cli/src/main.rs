use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tcnn::checkpoint::Checkpoint;
use tcnn::data::{self, netpbm, Split};
use tcnn::mask::ClassTable;
use tcnn::train::{self, TrainConfig};

#[derive(Parser)]
#[command(name = "tcnn", version, about = "Semi-supervised video segmentation with a frozen shape encoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic video corpus.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the mask autoencoder on the labeled training masks.
    TrainAe {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `ae_checkpoint` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the segmentation network against a frozen autoencoder.
    TrainSeg {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        /// Defaults to `seg_checkpoint` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a segmentation checkpoint on one split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
        /// Supplies `data_dir`, `fps_stride` and `ignore_classes`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's data directory.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Predict masks for a directory of `frame_<i>.ppm` files.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// A `classes.tsv`; the synthetic layout is assumed otherwise.
        #[arg(long)]
        classes: Option<PathBuf>,
    },
    /// Train and test all six component configurations over several seeds.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
        /// Reuse a trained autoencoder instead of training one.
        #[arg(long)]
        ae: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::from_file(p).with_context(|| format!("config {}", p.display())),
        None => Ok(TrainConfig::default()),
    }
}

fn load_data(cfg: &TrainConfig) -> Result<data::Dataset> {
    data::read_dataset(&cfg.data_dir)
        .with_context(|| format!("reading dataset under {}", cfg.data_dir.display()))
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::read(path).with_context(|| format!("checkpoint {}", path.display()))
}

fn load_frozen_ae(path: &Path, cfg: &TrainConfig, classes: &ClassTable) -> Result<tcnn::nn::Autoencoder> {
    let ckpt = read_checkpoint(path)?;
    train::load_autoencoder(&ckpt, classes.len(), cfg.scene.frame_hw)
        .with_context(|| format!("autoencoder checkpoint {}", path.display()))
}

/// `frame_<i>.ppm` files of a directory, ordered by `i`.
fn frame_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let index = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("frame_"))
            .and_then(|n| n.strip_suffix(".ppm"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(i) = index {
            frames.push((i, path));
        }
    }
    frames.sort();
    if frames.is_empty() {
        bail!("no frame_<i>.ppm files in {}", dir.display());
    }
    Ok(frames)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let ds = data::generate_dataset(&cfg.scene, (cfg.train_videos, cfg.val_videos, cfg.test_videos))?;
            data::write_dataset(&out, &ds).with_context(|| format!("writing {}", out.display()))?;
            log::info!("wrote {} videos to {}", cfg.train_videos + cfg.val_videos + cfg.test_videos, out.display());
        }
        Command::TrainAe { config, out } => {
            let cfg = load_config(Some(&config))?;
            let ds = load_data(&cfg)?;
            let trained = train::train_autoencoder(&cfg, &ds)?;
            let out = out.unwrap_or_else(|| cfg.ae_checkpoint.clone());
            trained.checkpoint.write(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("validation reconstruction accuracy {:.4}", trained.best_val_accuracy);
        }
        Command::TrainSeg { config, ae, out } => {
            let cfg = load_config(Some(&config))?;
            let ds = load_data(&cfg)?;
            let ae = load_frozen_ae(&ae, &cfg, &ds.classes)?;
            let trained = train::train_segmentation(&cfg, &ds.train, &ds.val, &ds.classes, Some(&ae))?;
            let out = out.unwrap_or_else(|| cfg.seg_checkpoint.clone());
            trained.checkpoint.write(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("best validation mIoU {:.4}", trained.best_val_miou);
        }
        Command::Eval { ckpt, split, out, config, data: data_dir } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(d) = data_dir {
                cfg.data_dir = d;
            }
            let split = Split::parse(&split).with_context(|| format!("unknown split {split:?}"))?;
            let classes = data::read_classes(&cfg.data_dir)?;
            let videos = data::read_split(&cfg.data_dir, split, &classes)?;
            let net = train::load_segnet(&read_checkpoint(&ckpt)?)?;
            let windows = train::windows_of(&videos, cfg.fps_stride)?;
            let report = train::evaluate_windows(&net, &windows, &classes, &cfg.ignore_classes)?.report()?;
            let names: Vec<String> = classes
                .kinds()
                .iter()
                .enumerate()
                .map(|(i, k)| format!("{i}:{}", k.as_str()))
                .collect();
            fs::write(&out, report.to_tsv(&names)).with_context(|| format!("writing {}", out.display()))?;
            println!("mean IoU {:.4}", report.mean_iou);
        }
        Command::Infer { ckpt, frames, out, classes } => {
            let ckpt = read_checkpoint(&ckpt)?;
            let files = frame_files(&frames)?;
            let images = files
                .iter()
                .map(|(_, p)| netpbm::read_image(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let classes = match classes {
                Some(p) => data::read_classes(p.parent().unwrap_or(Path::new(".")))?,
                None => {
                    let n = train::load_segnet(&ckpt)?.num_classes();
                    ClassTable::synthetic(n)?
                }
            };
            let masks = train::infer(&ckpt, &images, &classes)?;
            fs::create_dir_all(&out)?;
            for ((i, _), m) in files.iter().zip(&masks) {
                netpbm::write_mask(out.join(format!("mask_{i}.pgm")), m)?;
            }
            println!("wrote {} masks to {}", masks.len(), out.display());
        }
        Command::Ablate { config, seeds, out, ae } => {
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let cfg = load_config(Some(&config))?;
            let ds = load_data(&cfg)?;
            let ae = match ae {
                Some(p) => load_frozen_ae(&p, &cfg, &ds.classes)?,
                None => {
                    use tcnn::param::Module;
                    let mut ae = train::train_autoencoder(&cfg, &ds)?.autoencoder;
                    ae.freeze();
                    ae
                }
            };
            let seed_list: Vec<u64> = (0..seeds).map(|s| cfg.seed + s).collect();
            let table = train::run_ablation(&cfg, &ds, &ae, &seed_list)?;
            fs::write(&out, table.to_tsv()).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", table.to_tsv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
