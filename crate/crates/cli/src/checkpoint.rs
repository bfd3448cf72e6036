//! Checkpoint files: the 8-byte magic `FSDGCKPT`, a little-endian u64
//! manifest length, the JSON manifest, then every tensor as little-endian
//! f32 values, row-major, in manifest order.

use std::io::Write;
use std::path::Path;

use fsdg_core::corpus::Vocabulary;
use fsdg_core::fsdg::{FsdgConfig, FsdgModel};
use fsdg_core::latent::{LaedConfig, LatentModel};
use fsdg_core::rng::Rng;
use fsdg_core::tensor::{ParamSet, Precision, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"FSDGCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
}

/// One model inside a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// `fsdg`, `di-vae`, `di-vst` or `vae`.
    pub role: String,
    pub config: serde_json::Value,
    pub vocab: Vec<String>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// `fsdg` or `latent`.
    pub kind: String,
    pub run_config: RunConfig,
    pub components: Vec<Component>,
}

/// Round parameters to the stored precision so the in-memory model equals
/// what a reload yields.
pub fn round_for_storage(params: &mut ParamSet) {
    params.round_to(Precision::F32);
}

fn add_component(
    role: &str,
    config: serde_json::Value,
    vocab: &Vocabulary,
    params: &ParamSet,
    blob: &mut Vec<u8>,
) -> Component {
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
        });
        for &v in t.data() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Component {
        role: role.to_string(),
        config,
        vocab: vocab.tokens().to_vec(),
        tensors,
    }
}

pub fn write(path: &Path, manifest: &Manifest, blob: &[u8]) -> CliResult<()> {
    let json = serde_json::to_vec(manifest)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&(json.len() as u64).to_le_bytes())?;
    f.write_all(&json)?;
    f.write_all(blob)?;
    f.flush()?;
    Ok(())
}

pub fn read(path: &Path) -> CliResult<(Manifest, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let bad = |m: &str| CliError::Data(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let end = 16usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[16..end]).map_err(|e| bad(&format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {}", manifest.format_version)));
    }
    let blob = bytes[end..].to_vec();
    let mut expected = 0u64;
    for c in &manifest.components {
        for t in &c.tensors {
            let size = 4 * t.shape.iter().product::<usize>() as u64;
            if t.offset != expected || t.offset + size > blob.len() as u64 {
                return Err(bad(&format!("tensor `{}` lies outside the blob", t.name)));
            }
            expected += size;
        }
    }
    if expected != blob.len() as u64 {
        return Err(bad("blob has trailing bytes"));
    }
    Ok((manifest, blob))
}

fn component_tensors(c: &Component, blob: &[u8]) -> Vec<(String, Tensor)> {
    c.tensors
        .iter()
        .map(|t| {
            let n: usize = t.shape.iter().product();
            let start = t.offset as usize;
            let data = blob[start..start + 4 * n]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            (t.name.clone(), Tensor::new(&t.shape, data).expect("shape checked"))
        })
        .collect()
}

fn load_params(params: &mut ParamSet, c: &Component, blob: &[u8]) -> CliResult<()> {
    let tensors = component_tensors(c, blob);
    params
        .load_values(tensors.iter().map(|(n, t)| (n.as_str(), t.clone())))
        .map_err(|e| CliError::Data(format!("component `{}`: {e}", c.role)))
}

fn latent_role(m: &LatentModel) -> String {
    serde_json::to_value(m.variant()).unwrap().as_str().unwrap().to_string()
}

fn latent_component(m: &LatentModel, blob: &mut Vec<u8>) -> Component {
    add_component(
        &latent_role(m),
        serde_json::to_value(&m.config).unwrap(),
        &m.vocab,
        &m.params,
        blob,
    )
}

fn build_latent(c: &Component, blob: &[u8]) -> CliResult<LatentModel> {
    let config: LaedConfig = serde_json::from_value(c.config.clone()).map_err(|e| CliError::Data(e.to_string()))?;
    let vocab = Vocabulary::from_tokens(c.vocab.clone())?;
    let mut m = LatentModel::new(config, vocab, &mut Rng::seed(0))?;
    if latent_role(&m) != c.role {
        return Err(CliError::Data(format!(
            "component role `{}` does not match its config",
            c.role
        )));
    }
    load_params(&mut m.params, c, blob)?;
    Ok(m)
}

pub fn save_latent(path: &Path, model: &LatentModel, run: &RunConfig) -> CliResult<()> {
    let mut blob = Vec::new();
    let c = latent_component(model, &mut blob);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: "latent".into(),
        run_config: run.clone(),
        components: vec![c],
    };
    write(path, &manifest, &blob)
}

pub fn load_latent(path: &Path) -> CliResult<(LatentModel, RunConfig)> {
    let (manifest, blob) = read(path)?;
    if manifest.kind != "latent" || manifest.components.len() != 1 {
        return Err(CliError::Data(format!(
            "{}: not a latent-model checkpoint",
            path.display()
        )));
    }
    Ok((build_latent(&manifest.components[0], &blob)?, manifest.run_config))
}

pub fn save_fsdg(path: &Path, model: &FsdgModel, run: &RunConfig) -> CliResult<()> {
    let mut blob = Vec::new();
    let mut components = vec![add_component(
        "fsdg",
        serde_json::to_value(&model.config).unwrap(),
        &model.vocab,
        &model.params,
        &mut blob,
    )];
    components.extend(model.aux.iter().map(|m| latent_component(m, &mut blob)));
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: "fsdg".into(),
        run_config: run.clone(),
        components,
    };
    write(path, &manifest, &blob)
}

pub fn load_fsdg(path: &Path) -> CliResult<(FsdgModel, RunConfig)> {
    let (manifest, blob) = read(path)?;
    let not_fsdg = || CliError::Data(format!("{}: not a response-generator checkpoint", path.display()));
    if manifest.kind != "fsdg" {
        return Err(not_fsdg());
    }
    let (main, aux) = manifest.components.split_first().ok_or_else(not_fsdg)?;
    if main.role != "fsdg" {
        return Err(not_fsdg());
    }
    let config: FsdgConfig = serde_json::from_value(main.config.clone()).map_err(|e| CliError::Data(e.to_string()))?;
    let aux = aux
        .iter()
        .map(|c| build_latent(c, &blob))
        .collect::<CliResult<Vec<_>>>()?;
    let vocab = Vocabulary::from_tokens(main.vocab.clone())?;
    let mut m = FsdgModel::new(config, vocab, aux, &mut Rng::seed(0)).map_err(|e| CliError::Data(e.to_string()))?;
    load_params(&mut m.params, main, &blob)?;
    Ok((m, manifest.run_config))
}
