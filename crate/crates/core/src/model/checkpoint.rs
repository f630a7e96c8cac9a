//! Checkpoints: one FWIT JSON index record followed by the tensors it names.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Layout, ModelParams, Norm, Param};
use super::preset::ModelPreset;
use crate::error::{Error, Result};
use crate::tensor::fwit::{self, Record};
use crate::tensor::{BatchNormState, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEntry {
    pub name: String,
    pub channels: usize,
    pub initialized: bool,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Index {
    format_version: u32,
    preset: ModelPreset,
    params: Vec<TensorEntry>,
    norms: Vec<NormEntry>,
    /// Extra caller data, e.g. training progress.
    #[serde(default)]
    extra: serde_json::Value,
}

/// Runs `body` against a temporary file next to `path`, then renames it into place.
pub(crate) fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let tmp = path.with_extension("part");
    let f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(f);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_params(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    save_with(params, &serde_json::Value::Null, path)
}

/// Like [`save_params`], storing `extra` in the index.
pub fn save_with(
    params: &ModelParams,
    extra: &serde_json::Value,
    path: impl AsRef<Path>,
) -> Result<()> {
    params.check_finite()?;
    let index = Index {
        format_version: CHECKPOINT_VERSION,
        preset: params.preset(),
        params: params
            .params()
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
        norms: params
            .norms()
            .iter()
            .map(|n| NormEntry {
                name: n.name.clone(),
                channels: n.state.channels(),
                initialized: n.state.initialized,
                eps: n.state.eps,
                momentum: n.state.momentum,
            })
            .collect(),
        extra: extra.clone(),
    };
    let json = serde_json::to_string(&index)?;
    write_atomic(path.as_ref(), |w| {
        fwit::write_json(w, &json)?;
        for p in params.params() {
            fwit::write_tensor(w, &p.value)?;
        }
        for n in params.norms() {
            let c = n.state.channels();
            fwit::write_tensor(
                w,
                &Tensor::new(vec![c], n.state.running_mean.clone()).expect("channels"),
            )?;
            fwit::write_tensor(
                w,
                &Tensor::new(vec![c], n.state.running_var.clone()).expect("channels"),
            )?;
        }
        Ok(())
    })
}

/// Reads a checkpoint of any preset.
pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams> {
    load_with(path).map(|(p, _)| p)
}

/// Reads a checkpoint and its extra index data.
pub fn load_with(path: impl AsRef<Path>) -> Result<(ModelParams, serde_json::Value)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let index: Index = match fwit::read_record(&mut r)? {
        Some(Record::Json(s)) => serde_json::from_str(&s)?,
        _ => {
            return Err(Error::Format(format!(
                "{} does not start with a checkpoint index",
                path.display()
            )))
        }
    };
    if index.format_version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {} (expected {CHECKPOINT_VERSION})",
            index.format_version
        )));
    }
    let layout = Layout::of(&index.preset);
    let expected: Vec<(&str, &[usize])> = layout
        .params
        .iter()
        .map(|(n, s, _)| (n.as_str(), s.as_slice()))
        .collect();
    let found: Vec<(&str, &[usize])> = index
        .params
        .iter()
        .map(|e| (e.name.as_str(), e.shape.as_slice()))
        .collect();
    let norms_match = layout
        .norms
        .iter()
        .map(|(n, c)| (n.as_str(), *c))
        .eq(index.norms.iter().map(|e| (e.name.as_str(), e.channels)));
    if expected != found || !norms_match {
        return Err(Error::Format(format!(
            "checkpoint registry does not match preset {}",
            index.preset
        )));
    }

    let mut next = |what: &str| -> Result<Tensor<f32>> {
        match fwit::read_record(&mut r)? {
            Some(Record::Tensor(t)) => Ok(t),
            _ => Err(Error::Format(format!(
                "checkpoint is missing tensor {what}"
            ))),
        }
    };
    let mut params = Vec::with_capacity(index.params.len());
    for e in &index.params {
        let value = next(&e.name)?;
        if value.shape() != e.shape.as_slice() {
            return Err(Error::Format(format!(
                "tensor {} has shape {:?}",
                e.name,
                value.shape()
            )));
        }
        params.push(Param {
            name: e.name.clone(),
            value,
        });
    }
    let mut norms = Vec::with_capacity(index.norms.len());
    for e in &index.norms {
        let mean = next(&e.name)?.into_data();
        let var = next(&e.name)?.into_data();
        if mean.len() != e.channels || var.len() != e.channels {
            return Err(Error::Format(format!(
                "running statistics of {} have wrong length",
                e.name
            )));
        }
        norms.push(Norm {
            name: e.name.clone(),
            state: BatchNormState {
                running_mean: mean,
                running_var: var,
                initialized: e.initialized,
                eps: e.eps,
                momentum: e.momentum,
            },
        });
    }
    if fwit::read_record(&mut r)?.is_some() {
        return Err(Error::Format(
            "trailing records after checkpoint tensors".into(),
        ));
    }
    let params = ModelParams::from_parts(index.preset, params, norms)?;
    params.check_finite()?;
    Ok((params, index.extra))
}

/// Reads a checkpoint and errors unless it was saved for `preset`.
pub fn load_for(path: impl AsRef<Path>, preset: ModelPreset) -> Result<ModelParams> {
    let params = load_params(path)?;
    if params.preset() != preset {
        return Err(Error::PresetMismatch {
            expected: preset.id(),
            found: params.preset().id(),
        });
    }
    Ok(params)
}
