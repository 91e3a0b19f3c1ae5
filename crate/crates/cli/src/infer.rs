use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Args;
use dsanet_core::model::{DsaNet, ModelConfig};
use dsanet_core::pipeline::{save_image, save_label, Image, MANIFEST};
use dsanet_core::train::{predict, InferConfig, RawSample, Tta};
use dsanet_core::{Error, ParamStore, Result, Scalar};
use serde::{Deserialize, Serialize};

use crate::run_config::create_dir;
use crate::train::MODEL_FILE;
use crate::Globals;

pub const PRED_FILE: &str = "pred.pgm";
/// Grey level representing probability 1 in `prob_{k}.pgm`.
pub const PROB_SCALE: u16 = 65535;

pub fn prob_file(class: usize) -> String {
    format!("prob_{class}.pgm")
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Model configuration; defaults to model.json beside the checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sample directories, or dataset directories holding samples.
    #[arg(long, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Test-time augmentation: none or mirror.
    #[arg(long)]
    tta: Option<Tta>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Also write per-class probability maps.
    #[arg(long)]
    probs: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferSettings {
    pub checkpoint: PathBuf,
    pub model: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub patch: Option<usize>,
    pub stride: Option<usize>,
    pub tta: Tta,
    pub probs: bool,
}

fn sample_dirs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for dir in inputs {
        if dir.join(MANIFEST).is_file() {
            out.push(dir.clone());
            continue;
        }
        let entries = std::fs::read_dir(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(MANIFEST).is_file())
            .collect();
        if found.is_empty() {
            return Err(Error::Data(format!("{}: no {MANIFEST} here or in subdirectories", dir.display())));
        }
        found.sort();
        out.extend(found);
    }
    Ok(out)
}

fn run_typed<S: Scalar>(s: &InferSettings, cfg: &ModelConfig, out: &Path) -> Result<()> {
    let mut store = ParamStore::<S>::new(0);
    let net = DsaNet::new(cfg, &mut store)?;
    store.load_checkpoint(&s.checkpoint)?;
    let patch = s.patch.unwrap_or(cfg.patch);
    let infer = InferConfig { patch, stride: s.stride.unwrap_or(patch / 2), tta: s.tta };
    for dir in sample_dirs(&s.inputs)? {
        let sample = RawSample::load(&dir, cfg.frames)?;
        let (pred, probs) = predict(&net, &store, &sample.normalized(), &infer)?;
        let target = out.join(sample.id());
        create_dir(&target)?;
        save_label(&target.join(PRED_FILE), &pred)?;
        if s.probs {
            let n = pred.height * pred.width;
            for (k, plane) in probs.chunks(n).enumerate() {
                let data = plane.iter().map(|p| p * PROB_SCALE as f32).collect();
                save_image(&target.join(prob_file(k)), &Image { height: pred.height, width: pred.width, data }, PROB_SCALE)?;
            }
        }
        let counts: Vec<usize> = (0..cfg.num_classes as u8).map(|c| pred.classes.iter().filter(|&&v| v == c).count()).collect();
        println!("{}: pixels per class {:?}", sample.id(), counts);
    }
    Ok(())
}

pub fn run(a: InferArgs, g: &Globals) -> Result<ExitCode> {
    let mut s: InferSettings = g.file.settings("infer")?;
    if let Some(c) = a.checkpoint {
        s.checkpoint = c;
    }
    if a.model.is_some() {
        s.model = a.model;
    }
    if !a.input.is_empty() {
        s.inputs = a.input;
    }
    if a.patch.is_some() {
        s.patch = a.patch;
    }
    if a.stride.is_some() {
        s.stride = a.stride;
    }
    if let Some(t) = a.tta {
        s.tta = t;
    }
    s.probs |= a.probs;
    if s.checkpoint.as_os_str().is_empty() {
        crate::usage_exit("the following required argument was not provided: --checkpoint <CHECKPOINT>");
    }
    if s.inputs.is_empty() {
        crate::usage_exit("the following required argument was not provided: --input <INPUT>...");
    }
    let out = g.require_out();
    let model_path = s.model.clone().unwrap_or_else(|| s.checkpoint.with_file_name(MODEL_FILE));
    let cfg = ModelConfig::load(&model_path)?;
    create_dir(&out)?;
    g.run_config("infer", &s).write(&out)?;
    if g.use_f64 {
        run_typed::<f64>(&s, &cfg, &out)?;
    } else {
        run_typed::<f32>(&s, &cfg, &out)?;
    }
    Ok(ExitCode::SUCCESS)
}
