//! Named parameter storage, deterministic initialization and the on-disk
//! manifest + blob format.
//!
//! A saved store is a directory holding two files:
//!
//! * `manifest.txt`: UTF-8 text. The first line is `refsr-weights <version>`.
//!   Every following non-empty line describes one tensor as four
//!   space-separated fields `name dtype shape offset`, where `dtype` is always
//!   `f32`, `shape` is the dimensions joined by `x` (e.g. `64x3x3x3`) and
//!   `offset` is the byte offset of the tensor inside the blob.
//! * `weights.bin`: the tensors' values as little-endian IEEE-754 `f32`,
//!   packed back to back in manifest order with no padding.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{BatchNormParams, ConvKernel};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const BLOB_FILE: &str = "weights.bin";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightStore {
    entries: BTreeMap<String, Param>,
    manifest_version: u32,
}

impl Default for WeightStore {
    fn default() -> Self {
        Self::new()
    }
}

impl WeightStore {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
            manifest_version: MANIFEST_VERSION,
        }
    }

    pub fn manifest_version(&self) -> u32 {
        self.manifest_version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.entries.values().map(|p| p.values.len()).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::WeightFormat(format!(
                "`{name}`: shape {shape:?} holds {} values, got {}",
                shape.iter().product::<usize>(),
                values.len()
            )));
        }
        if self.entries.contains_key(&name) {
            return Err(Error::WeightFormat(format!("duplicate parameter `{name}`")));
        }
        self.entries.insert(name, Param { shape, values });
        Ok(())
    }

    /// Replaces the values of an existing parameter, keeping its shape.
    pub fn set_values(&mut self, name: &str, values: Vec<f32>) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))?;
        if p.values.len() != values.len() {
            return Err(Error::ParameterShape {
                name: name.to_string(),
                expected: p.shape.clone(),
                found: vec![values.len()],
            });
        }
        p.values = values;
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Option<Param> {
        self.entries.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    /// Looks up a parameter and checks its shape.
    pub fn tensor(&self, name: &str, shape: &[usize]) -> Result<&[f32]> {
        let p = self
            .entries
            .get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))?;
        if p.shape != shape {
            return Err(Error::ParameterShape {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: p.shape.clone(),
            });
        }
        Ok(&p.values)
    }

    /// Loads `{prefix}.weight` and `{prefix}.bias` of a square-kernel convolution.
    pub fn conv(&self, prefix: &str, out_ch: usize, in_ch: usize, k: usize) -> Result<(ConvKernel, Vec<f32>)> {
        let w = self.tensor(&format!("{prefix}.weight"), &[out_ch, in_ch, k, k])?;
        let b = self.tensor(&format!("{prefix}.bias"), &[out_ch])?;
        Ok((ConvKernel::new(out_ch, in_ch, k, k, w.to_vec())?, b.to_vec()))
    }

    /// Loads `{prefix}.{mean,var,gamma,beta}` of a batch-norm layer.
    pub fn batchnorm(&self, prefix: &str, channels: usize) -> Result<BatchNormParams> {
        let get = |field: &str| -> Result<Vec<f32>> {
            Ok(self.tensor(&format!("{prefix}.{field}"), &[channels])?.to_vec())
        };
        Ok(BatchNormParams {
            mean: get("mean")?,
            var: get("var")?,
            gamma: get("gamma")?,
            beta: get("beta")?,
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut manifest = format!("refsr-weights {}\n", self.manifest_version);
        let mut blob = Vec::with_capacity(self.total_values() * 4);
        for (name, p) in &self.entries {
            let shape = p.shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x");
            manifest.push_str(&format!("{name} f32 {shape} {}\n", blob.len()));
            for v in &p.values {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(dir.join(MANIFEST_FILE), manifest)?;
        fs::write(dir.join(BLOB_FILE), blob)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let blob = fs::read(dir.join(BLOB_FILE))?;
        let mut lines = manifest.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::WeightFormat("empty manifest".into()))?;
        let version = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["refsr-weights", v] => v
                .parse::<u32>()
                .map_err(|_| Error::WeightFormat(format!("bad manifest version `{v}`")))?,
            _ => return Err(Error::WeightFormat(format!("bad manifest header `{header}`"))),
        };
        if version != MANIFEST_VERSION {
            return Err(Error::WeightFormat(format!("unsupported manifest version {version}")));
        }

        let mut store = WeightStore {
            entries: BTreeMap::new(),
            manifest_version: version,
        };
        let mut expected_offset = 0usize;
        for (lineno, line) in lines.enumerate().map(|(i, l)| (i + 2, l)) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [name, dtype, shape, offset] = fields[..] else {
                return Err(Error::WeightFormat(format!("line {lineno}: expected 4 fields")));
            };
            if dtype != "f32" {
                return Err(Error::WeightFormat(format!("`{name}`: unsupported dtype `{dtype}`")));
            }
            let shape: Vec<usize> = shape
                .split('x')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::WeightFormat(format!("`{name}`: bad shape `{shape}`")))?;
            let offset: usize = offset
                .parse()
                .map_err(|_| Error::WeightFormat(format!("`{name}`: bad offset `{offset}`")))?;
            if offset != expected_offset {
                return Err(Error::WeightFormat(format!(
                    "`{name}`: offset {offset} does not follow previous tensor (expected {expected_offset})"
                )));
            }
            let count: usize = shape.iter().product();
            let end = offset + count * 4;
            if end > blob.len() {
                return Err(Error::WeightFormat(format!(
                    "`{name}`: blob truncated ({} bytes, tensor ends at {end})",
                    blob.len()
                )));
            }
            let values = blob[offset..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            if store.entries.contains_key(name) {
                return Err(Error::WeightFormat(format!("duplicate parameter `{name}`")));
            }
            store.entries.insert(name.to_string(), Param { shape, values });
            expected_offset = end;
        }
        if expected_offset != blob.len() {
            return Err(Error::WeightFormat(format!(
                "blob has {} bytes but manifest describes {expected_offset}",
                blob.len()
            )));
        }
        Ok(store)
    }
}

/// How a parameter is filled by [`random_init`].
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    FanInUniform { fan_in: usize },
    Constant(f32),
    /// Repeats the pattern to fill the tensor.
    Pattern(Vec<f32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// The full list of parameters a model expects, in a fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArchitectureSpec {
    pub params: Vec<ParamSpec>,
}

impl ArchitectureSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, init: Init) {
        self.params.push(ParamSpec {
            name: name.into(),
            shape,
            init,
        });
    }

    pub fn conv(&mut self, prefix: &str, out_ch: usize, in_ch: usize, k: usize) {
        let fan_in = in_ch * k * k;
        self.push(format!("{prefix}.weight"), vec![out_ch, in_ch, k, k], Init::FanInUniform { fan_in });
        self.push(format!("{prefix}.bias"), vec![out_ch], Init::FanInUniform { fan_in });
    }

    pub fn batchnorm(&mut self, prefix: &str, channels: usize) {
        self.push(format!("{prefix}.mean"), vec![channels], Init::Constant(0.0));
        self.push(format!("{prefix}.var"), vec![channels], Init::Constant(1.0));
        self.push(format!("{prefix}.gamma"), vec![channels], Init::Constant(1.0));
        self.push(format!("{prefix}.beta"), vec![channels], Init::Constant(0.0));
    }

    pub fn extend(&mut self, other: ArchitectureSpec) {
        self.params.extend(other.params);
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.shape.iter().product::<usize>()).sum()
    }

    pub fn find(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

pub fn random_init(arch: &ArchitectureSpec, seed: u64) -> Result<WeightStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    for p in &arch.params {
        let count: usize = p.shape.iter().product();
        let values = match &p.init {
            Init::FanInUniform { fan_in } => {
                let bound = (6.0 / (*fan_in).max(1) as f64).sqrt() as f32;
                (0..count).map(|_| rng.gen_range(-bound..=bound)).collect()
            }
            Init::Constant(v) => vec![*v; count],
            Init::Pattern(pat) => pat.iter().copied().cycle().take(count).collect(),
        };
        store.insert(p.name.clone(), p.shape.clone(), values)?;
    }
    Ok(store)
}
