//! Self-describing checkpoints: named tensors in a safetensors container with
//! the architecture and provenance stored as string metadata.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{Device, Tensor};
use safetensors::SafeTensors;

use crate::arch::{ArchConfig, Mode, Stage};
use crate::bundle::ModelBundle;
use crate::error::{Error, Result};
use crate::params::ParamStore;

pub const FORMAT: &str = "dance-checkpoint";
/// Major version; readers accept any file with the same major version.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    /// `"bundle"` or `"detector"`.
    pub kind: String,
    pub arch: ArchConfig,
    pub mode: Option<Mode>,
    pub stages: Vec<Stage>,
    pub epoch: usize,
    pub seed: u64,
}

impl CheckpointMeta {
    fn to_map(&self) -> Result<HashMap<String, String>> {
        let mut m = HashMap::new();
        m.insert("format".into(), FORMAT.into());
        m.insert("format_version".into(), FORMAT_VERSION.to_string());
        m.insert("kind".into(), self.kind.clone());
        m.insert("arch".into(), serde_json::to_string(&self.arch)?);
        if let Some(mode) = self.mode {
            m.insert("mode".into(), mode.to_string());
        }
        let stages: Vec<&str> = self.stages.iter().map(|s| s.as_str()).collect();
        m.insert("stages".into(), stages.join(","));
        m.insert("epoch".into(), self.epoch.to_string());
        m.insert("seed".into(), self.seed.to_string());
        Ok(m)
    }

    fn from_map(m: &HashMap<String, String>) -> Result<Self> {
        let get = |k: &str| m.get(k).ok_or_else(|| Error::Checkpoint(format!("missing metadata key {k}")));
        if get("format")? != FORMAT {
            return Err(Error::Checkpoint("not a dance checkpoint".into()));
        }
        let version = get("format_version")?;
        let major = version.split('.').next().unwrap_or_default();
        if major != FORMAT_VERSION.to_string() {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let bad = |k: &str| Error::Checkpoint(format!("bad metadata value for {k}"));
        let stages = get("stages")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<Stage>().map_err(|_| bad("stages")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: get("kind")?.clone(),
            arch: serde_json::from_str(get("arch")?)?,
            mode: m.get("mode").map(|s| s.parse().map_err(|_| bad("mode"))).transpose()?,
            stages,
            epoch: get("epoch")?.parse().map_err(|_| bad("epoch"))?,
            seed: get("seed")?.parse().map_err(|_| bad("seed"))?,
        })
    }
}

pub fn write_store(path: impl AsRef<Path>, store: &ParamStore, meta: &CheckpointMeta) -> Result<()> {
    let tensors: Vec<(String, Tensor)> = store.iter().map(|(k, v)| (k.clone(), v.as_tensor().clone())).collect();
    let bytes = safetensors::serialize(tensors, Some(meta.to_map()?))
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    dance_core::atomic_write(path.as_ref(), &bytes)?;
    Ok(())
}

pub fn read_file(path: impl AsRef<Path>) -> Result<(CheckpointMeta, HashMap<String, Tensor>)> {
    let bytes = std::fs::read(path.as_ref())?;
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let meta = CheckpointMeta::from_map(
        header
            .metadata()
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("checkpoint has no metadata".into()))?,
    )?;
    let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?;
    Ok((meta, tensors))
}

/// Copies every tensor into `store`; names must match one to one.
pub fn fill_store(store: &ParamStore, tensors: &HashMap<String, Tensor>) -> Result<()> {
    if tensors.len() != store.iter().count() {
        return Err(Error::Checkpoint(format!(
            "{} tensors in file, {} parameters expected",
            tensors.len(),
            store.iter().count()
        )));
    }
    for (name, _) in store.iter() {
        let t = tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        store.assign(name, t)?;
    }
    Ok(())
}

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let meta = CheckpointMeta {
        kind: "bundle".into(),
        arch: bundle.arch.clone(),
        mode: Some(bundle.mode),
        stages: bundle.stages_done.clone(),
        epoch: bundle.epoch,
        seed: bundle.seed,
    };
    write_store(path, &bundle.store, &meta)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let (meta, tensors) = read_file(path)?;
    if meta.kind != "bundle" {
        return Err(Error::Checkpoint(format!("expected a bundle checkpoint, found {}", meta.kind)));
    }
    let mode = meta.mode.ok_or_else(|| Error::Checkpoint("bundle checkpoint without mode".into()))?;
    let mut bundle = ModelBundle::new(meta.arch, mode, meta.seed)?;
    fill_store(&bundle.store, &tensors)?;
    bundle.stages_done = meta.stages;
    bundle.epoch = meta.epoch;
    Ok(bundle)
}
