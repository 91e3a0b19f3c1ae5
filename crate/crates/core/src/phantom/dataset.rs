use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{generate, PhantomSpec};
use crate::error::{Error, Result};
use crate::pipeline::save_sequence;

pub const FOLDS_FILE: &str = "folds.json";
pub const FOLD_COUNT: usize = 5;

/// Seed of sample `index` under a master seed (SplitMix64 step).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_id(index: usize) -> String {
    format!("phantom_{index:04}")
}

/// Random assignment of ids to five folds of near-equal size.
pub fn assign_folds(ids: &[String], seed: u64) -> BTreeMap<String, Vec<String>> {
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds: BTreeMap<String, Vec<String>> = (0..FOLD_COUNT).map(|k| (k.to_string(), Vec::new())).collect();
    for (i, id) in shuffled.into_iter().enumerate() {
        folds.get_mut(&(i % FOLD_COUNT).to_string()).expect("fold exists").push(id);
    }
    for v in folds.values_mut() {
        v.sort();
    }
    folds
}

/// Writes `n` sample directories plus `folds.json` under `out`. `spec.seed`
/// is the master seed; each sample gets a derived seed.
pub fn emit_dataset(n: usize, spec: &PhantomSpec, out: &Path) -> Result<Vec<String>> {
    spec.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let id = sample_id(i);
        let sample_spec = PhantomSpec { seed: derive_seed(spec.seed, i as u64), ..spec.clone() };
        let s = generate(&id, &sample_spec)?;
        save_sequence(&out.join(&id), &s.sequence, Some(&s.label), Some(&s.minip))?;
        ids.push(id);
    }
    let folds = assign_folds(&ids, spec.seed);
    let path = out.join(FOLDS_FILE);
    let text = serde_json::to_string_pretty(&folds).expect("folds serialize");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(ids)
}

pub fn read_folds(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}
