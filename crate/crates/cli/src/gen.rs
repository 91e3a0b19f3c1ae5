use std::process::ExitCode;

use clap::Args;
use dsanet_core::phantom::{emit_dataset, read_folds, PhantomSpec, FOLDS_FILE};
use dsanet_core::Result;
use serde::{Deserialize, Serialize};

use crate::Globals;

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Number of samples.
    #[arg(long)]
    n: Option<usize>,
    /// Square canvas side in pixels.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Branching levels below the trunk.
    #[arg(long)]
    depth: Option<usize>,
    /// Gaussian noise standard deviation (grey levels).
    #[arg(long)]
    noise: Option<f64>,
    /// Contrast-front advance in pixels per frame.
    #[arg(long)]
    speed: Option<f64>,
    /// Leave out the static skull band.
    #[arg(long)]
    no_skull: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSettings {
    pub n: usize,
    pub spec: PhantomSpec,
}

impl Default for GenSettings {
    fn default() -> Self {
        GenSettings { n: 32, spec: PhantomSpec::default() }
    }
}

pub fn run(a: GenArgs, g: &Globals) -> Result<ExitCode> {
    let mut s: GenSettings = g.file.settings("gen-phantom")?;
    let out = g.require_out();
    if let Some(n) = a.n {
        s.n = n;
    }
    if let Some(size) = a.size {
        s.spec.height = size;
        s.spec.width = size;
    }
    if let Some(t) = a.frames {
        s.spec.frames = t;
    }
    if let Some(d) = a.depth {
        s.spec.branch_depth = d;
    }
    if let Some(n) = a.noise {
        s.spec.noise_sigma = n;
    }
    if a.speed.is_some() {
        s.spec.contrast_speed = a.speed;
    }
    if a.no_skull {
        s.spec.skull = false;
    }
    s.spec.seed = g.seed;
    s.spec.validate()?;
    crate::run_config::create_dir(&out)?;
    g.run_config("gen-phantom", &s).write(&out)?;
    let ids = emit_dataset(s.n, &s.spec, &out)?;
    let folds = read_folds(&out.join(FOLDS_FILE))?;
    let sizes: Vec<String> = folds.iter().map(|(k, v)| format!("{k}:{}", v.len())).collect();
    println!("generated {} phantoms (seed {}) in {}; folds {}", ids.len(), g.seed, out.display(), sizes.join(" "));
    Ok(ExitCode::SUCCESS)
}
