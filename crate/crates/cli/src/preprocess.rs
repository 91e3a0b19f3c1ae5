use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use dsanet_core::pipeline::{load_minip, load_sequence, minip, resample_temporal, save_image, save_sequence, MINIP_FILE};
use dsanet_core::Result;
use serde::{Deserialize, Serialize};

use crate::run_config::create_dir;
use crate::Globals;

#[derive(Args, Debug)]
pub struct MinipArgs {
    /// Sequence directory.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinipSettings {
    pub input: PathBuf,
}

pub fn run_minip(a: MinipArgs, g: &Globals) -> Result<ExitCode> {
    let mut s: MinipSettings = g.file.settings("minip")?;
    if let Some(i) = a.input {
        s.input = i;
    }
    if s.input.as_os_str().is_empty() {
        crate::usage_exit("the following required argument was not provided: --input <INPUT>");
    }
    let out = g.require_out();
    let (seq, _) = load_sequence(&s.input)?;
    let m = minip(&seq);
    create_dir(&out)?;
    g.run_config("minip", &s).write(&out)?;
    let path = out.join(MINIP_FILE);
    save_image(&path, &m.image, seq.max_value)?;
    println!("{}: MinIP of {} frames written to {}", seq.id, seq.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Args, Debug)]
pub struct ResampleArgs {
    /// Sequence directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Target frame count.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleSettings {
    pub input: PathBuf,
    pub frames: usize,
}

impl Default for ResampleSettings {
    fn default() -> Self {
        ResampleSettings { input: PathBuf::new(), frames: 8 }
    }
}

/// Writes the resampled frames, the label if any, and the MinIP of the
/// original frames.
pub fn run_resample(a: ResampleArgs, g: &Globals) -> Result<ExitCode> {
    let mut s: ResampleSettings = g.file.settings("resample")?;
    if let Some(i) = a.input {
        s.input = i;
    }
    if let Some(t) = a.frames {
        s.frames = t;
    }
    if s.input.as_os_str().is_empty() {
        crate::usage_exit("the following required argument was not provided: --input <INPUT>");
    }
    let out = g.require_out();
    let (seq, label) = load_sequence(&s.input)?;
    let m = match load_minip(&s.input, &seq.id)? {
        Some(m) => m,
        None => minip(&seq),
    };
    let resampled = resample_temporal(&seq, s.frames)?;
    create_dir(&out)?;
    save_sequence(&out, &resampled, label.as_ref(), Some(&m))?;
    g.run_config("resample", &s).write(&out)?;
    println!("{}: {} frames resampled to {} in {}", seq.id, seq.len(), resampled.len(), out.display());
    Ok(ExitCode::SUCCESS)
}
