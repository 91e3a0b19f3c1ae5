use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Args;
use dsanet_core::model::{DsaNet, ModelConfig, Variant};
use dsanet_core::phantom::{read_folds, FOLDS_FILE};
use dsanet_core::train::{train, InferConfig, RawSample, TrainConfig, Tta};
use dsanet_core::{Error, ParamStore, Result, Scalar};
use serde::{Deserialize, Serialize};

use crate::run_config::{create_dir, write_json};
use crate::Globals;

pub const LOG_FILE: &str = "train_log.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const MODEL_FILE: &str = "model.json";

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory containing sample folders and folds.json.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Fold held out for validation.
    #[arg(long)]
    fold: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    iters_per_epoch: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Network variant: full, minip-only or sequence-only.
    #[arg(long)]
    ablation: Option<Variant>,
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    base_channels: Option<usize>,
    /// Frames fed to the network; sequences are resampled to this count.
    #[arg(long)]
    frames: Option<usize>,
    /// Training and inference patch size.
    #[arg(long)]
    patch: Option<usize>,
    /// Sliding-window stride for validation.
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub data: PathBuf,
    pub fold: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub infer: InferConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let model = ModelConfig::desk();
        let infer = InferConfig { patch: model.patch, stride: model.patch / 2, tta: Tta::None };
        TrainSettings { data: PathBuf::new(), fold: 0, model, train: TrainConfig::default(), infer }
    }
}

fn resolve(a: TrainArgs, g: &Globals) -> Result<TrainSettings> {
    let mut s: TrainSettings = g.file.settings("train")?;
    if let Some(d) = a.data {
        s.data = d;
    }
    if s.data.as_os_str().is_empty() {
        crate::usage_exit("the following required argument was not provided: --data <DATA>");
    }
    if let Some(f) = a.fold {
        s.fold = f;
    }
    let t = &mut s.train;
    if let Some(e) = a.epochs {
        t.epochs = e;
    }
    if a.iters_per_epoch.is_some() {
        t.iters_per_epoch = a.iters_per_epoch;
    }
    if let Some(b) = a.batch_size {
        t.batch_size = b;
    }
    if let Some(lr) = a.lr {
        t.lr = lr;
    }
    if a.no_augment {
        t.augment = None;
    }
    let m = &mut s.model;
    if let Some(v) = a.ablation {
        m.variant = v;
    }
    if let Some(c) = a.base_channels {
        m.base_channels = c;
    }
    if let Some(f) = a.frames {
        m.frames = f;
    }
    if let Some(p) = a.patch {
        m.patch = p;
        s.infer.patch = p;
        s.infer.stride = p / 2;
    }
    if let Some(st) = a.stride {
        s.infer.stride = st;
    }
    if let Some(aug) = &mut s.train.augment {
        aug.crop = Some(s.model.patch);
    }
    s.model.validate()?;
    s.train.validate()?;
    Ok(s)
}

fn load_split(s: &TrainSettings) -> Result<(Vec<RawSample>, Vec<RawSample>)> {
    let folds = read_folds(&s.data.join(FOLDS_FILE))?;
    let key = s.fold.to_string();
    if !folds.contains_key(&key) {
        return Err(Error::Usage(format!("fold {} not in {} (have {:?})", s.fold, FOLDS_FILE, folds.keys().collect::<Vec<_>>())));
    }
    let load = |id: &String| RawSample::load(&s.data.join(id), s.model.frames);
    let mut train_set = Vec::new();
    let mut val_set = Vec::new();
    for (k, ids) in &folds {
        for id in ids {
            if *k == key {
                val_set.push(load(id)?);
            } else {
                train_set.push(load(id)?);
            }
        }
    }
    Ok((train_set, val_set))
}

fn run_typed<S: Scalar>(s: &TrainSettings, seed: u64, out: &Path) -> Result<()> {
    let (train_set, val_set) = load_split(s)?;
    eprintln!("training on {} samples, validating on {} (fold {})", train_set.len(), val_set.len(), s.fold);
    let mut store = ParamStore::<S>::new(seed);
    let net = DsaNet::new(&s.model, &mut store)?;
    let log_path = out.join(LOG_FILE);
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::Io { path: p, source: e }
    };
    let mut log = BufWriter::new(File::create(&log_path).map_err(io(&log_path))?);
    let best = out.join(BEST_CHECKPOINT);
    let outcome = train(&net, &mut store, &train_set, &val_set, &s.train, &s.infer, seed, |entry, store, improved| {
        let line = serde_json::to_string(entry).expect("log entry serializes");
        writeln!(log, "{line}").and_then(|_| log.flush()).map_err(io(&log_path))?;
        let dice = entry.val_dice.map_or("-".to_string(), |d| format!("{d:.4}"));
        eprintln!("epoch {:>3}  lr {:.5}  loss {:.4}  val dice {dice}", entry.epoch, entry.lr, entry.train_loss);
        if improved {
            store.save_checkpoint(&best)?;
        }
        Ok(())
    })?;
    store.save_checkpoint(&out.join(LAST_CHECKPOINT))?;
    if outcome.best_epoch.is_none() {
        store.save_checkpoint(&best)?;
    }
    match (outcome.best_epoch, outcome.best_val_dice) {
        (Some(e), Some(d)) => println!("best validation dice {d:.4} at epoch {e}; checkpoints in {}", out.display()),
        _ => println!("finished {} epochs; checkpoints in {}", s.train.epochs, out.display()),
    }
    Ok(())
}

pub fn run(a: TrainArgs, g: &Globals) -> Result<ExitCode> {
    let s = resolve(a, g)?;
    let out = g.require_out();
    create_dir(&out)?;
    g.run_config("train", &s).write(&out)?;
    write_json(&out.join(MODEL_FILE), &s.model)?;
    if g.use_f64 {
        run_typed::<f64>(&s, g.seed, &out)?;
    } else {
        run_typed::<f32>(&s, g.seed, &out)?;
    }
    Ok(ExitCode::SUCCESS)
}
