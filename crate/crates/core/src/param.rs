//! Named, seeded parameters and the `DSAW` checkpoint container.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "DSAW"
//! version    u32      1
//! count      u32      number of parameters
//! repeated `count` times:
//!   name_len u32
//!   name     name_len bytes, UTF-8
//!   dtype    u8       0 = float32, 1 = float64
//!   rank     u32
//!   dims     rank x u64
//!   data     product(dims) scalars, little-endian
//! ```

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DType, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DSAW";
pub const CHECKPOINT_VERSION: u32 = 1;

pub type ParamId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// Uniform in `[-b, b]`, `b = sqrt(6 / fan_in)`.
    KaimingUniform { fan_in: usize },
    Zeros,
    Ones,
    Normal { std: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub init: Init,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Parameter<S> {
    name: String,
    value: Arc<Tensor<S>>,
    grad: Tensor<S>,
    init: InitSpec,
}

impl<S: Scalar> Parameter<S> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<S> {
        &self.value
    }

    pub fn grad(&self) -> &Tensor<S> {
        &self.grad
    }

    pub fn init(&self) -> InitSpec {
        self.init
    }
}

/// Stable 64-bit hash of a parameter name (FNV-1a followed by a splitmix finalizer).
fn name_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn initial_values<S: Scalar>(shape: &[usize], spec: InitSpec) -> Tensor<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.init {
        Init::Zeros => Tensor::zeros(shape.to_vec()),
        Init::Ones => Tensor::ones(shape.to_vec()),
        Init::KaimingUniform { fan_in } => {
            let bound = (6.0 / fan_in.max(1) as f64).sqrt();
            Tensor::from_fn(shape.to_vec(), |_| S::c(rng.random_range(-bound..bound)))
        }
        Init::Normal { std } => {
            let dist = Normal::new(0.0, std).expect("finite std");
            Tensor::from_fn(shape.to_vec(), |_| S::c(dist.sample(&mut rng)))
        }
    }
}

/// All learnable tensors of a model, addressed by [`ParamId`] or unique name.
#[derive(Clone, Debug)]
pub struct ParamStore<S> {
    params: Vec<Parameter<S>>,
    by_name: HashMap<String, ParamId>,
    seed: u64,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new(seed: u64) -> Self {
        ParamStore { params: Vec::new(), by_name: HashMap::new(), seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers a parameter. Its values depend only on the store seed and the name.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let spec = InitSpec { init, seed: self.seed ^ name_hash(&name) };
        let id = self.params.len();
        self.params.push(Parameter {
            value: Arc::new(initial_values(shape, spec)),
            grad: Tensor::zeros(shape.to_vec()),
            init: spec,
            name: name.clone(),
        });
        self.by_name.insert(name, id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalars over all parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<S> {
        &self.params[id]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<S>)> {
        self.params.iter().enumerate()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id].value
    }

    pub(crate) fn value_arc(&self, id: ParamId) -> Arc<Tensor<S>> {
        Arc::clone(&self.params[id].value)
    }

    /// Mutable access; copies the buffer first if a live tape still references it.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        Arc::make_mut(&mut self.params[id].value)
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id].grad
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = S::zero());
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &Tensor<S>) -> Result<()> {
        let p = &mut self.params[id];
        if p.grad.shape() != g.shape() {
            return Err(Error::Dimension(format!("gradient {:?} for parameter {} {:?}", g.shape(), p.name, p.grad.shape())));
        }
        p.grad.add_assign(g);
        Ok(())
    }

    /// Restores the initial values of one parameter.
    pub fn reinit(&mut self, id: ParamId) {
        let p = &mut self.params[id];
        p.value = Arc::new(initial_values(p.value.shape(), p.init));
    }

    /// Mutable views of every (value, gradient) pair, for optimizers.
    pub fn values_and_grads_mut(&mut self) -> impl Iterator<Item = (&mut Tensor<S>, &Tensor<S>)> {
        self.params.iter_mut().map(|p| (Arc::make_mut(&mut p.value), &p.grad))
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.push(S::DTYPE.tag());
            out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in p.value.data() {
                v.write_le(&mut out);
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Loads values by name. Every parameter must be present with its exact
    /// shape; all mismatches are reported together. Scalars are converted
    /// when the stored dtype differs.
    pub fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        let entries = read_checkpoint(path)?;
        let mut problems = Vec::new();
        let mut found: HashMap<&str, &CheckpointEntry> = HashMap::new();
        for e in &entries {
            match self.by_name.get(&e.name) {
                None => problems.push(format!("unexpected parameter {} {:?}", e.name, e.shape)),
                Some(&id) if self.params[id].value.shape() != e.shape.as_slice() => problems.push(format!(
                    "{}: checkpoint {:?} vs model {:?}",
                    e.name,
                    e.shape,
                    self.params[id].value.shape()
                )),
                Some(_) => {
                    found.insert(&e.name, e);
                }
            }
        }
        for p in &self.params {
            if !found.contains_key(p.name.as_str()) && !entries.iter().any(|e| e.name == p.name) {
                problems.push(format!("missing parameter {} {:?}", p.name, p.value.shape()));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Mismatch(problems));
        }
        for p in &mut self.params {
            let e = found[p.name.as_str()];
            let data = e.values.iter().map(|&v| S::c(v)).collect();
            p.value = Arc::new(Tensor::new(e.shape.clone(), data)?);
        }
        Ok(())
    }
}

/// One decoded checkpoint record; values widened to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<CheckpointEntry>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::format(path, msg.to_string());
    let mut cur = bytes.as_slice();
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(bad("truncated checkpoint"));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic, expected DSAW"));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let version = u32_at(take(4)?);
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let count = u32_at(take(4)?) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u32_at(take(4)?) as usize;
        let name = String::from_utf8(take(len)?.to_vec()).map_err(|_| bad("name is not UTF-8"))?;
        let dtype = DType::from_tag(take(1)?[0]).ok_or_else(|| bad("unknown dtype tag"))?;
        let rank = u32_at(take(4)?) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let raw = take(n * dtype.size())?;
        let values = match dtype {
            DType::F32 => raw.chunks_exact(4).map(|c| f32::read_le(c) as f64).collect(),
            DType::F64 => raw.chunks_exact(8).map(f64::read_le).collect(),
        };
        entries.push(CheckpointEntry { name, dtype, shape, values });
    }
    if !cur.is_empty() {
        return Err(bad("trailing bytes after last parameter"));
    }
    Ok(entries)
}
