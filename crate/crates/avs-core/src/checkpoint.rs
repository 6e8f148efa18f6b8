//! Checkpoint directories: one AVST tensor file per parameter plus a text
//! manifest listing the model kind, hyperparameters, and parameter shapes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{read_avst, write_avst, LoadedTensor, Scalar, Tensor};

pub struct Checkpoint {
    pub kind: String,
    pub hyper: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, LoadedTensor>,
}

impl Checkpoint {
    pub fn hyper_f64(&self, key: &str) -> Result<f64> {
        self.hyper
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format(format!("manifest missing numeric key {key}")))
    }

    pub fn hyper_usize(&self, key: &str) -> Result<usize> {
        self.hyper
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format(format!("manifest missing integer key {key}")))
    }

    pub fn hyper_bool(&self, key: &str) -> Result<bool> {
        self.hyper
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format(format!("manifest missing boolean key {key}")))
    }

    pub fn tensor<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        self.tensors
            .get(name)
            .map(|t| t.cast())
            .ok_or_else(|| Error::Format(format!("checkpoint missing tensor {name}")))
    }
}

pub fn save<T: Scalar>(
    dir: &Path,
    kind: &str,
    hyper: &[(String, String)],
    params: &[(String, &Tensor<T>)],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    manifest.push_str(&format!("kind = {kind}\n"));
    for (k, v) in hyper {
        manifest.push_str(&format!("{k} = {v}\n"));
    }
    manifest.push_str("[params]\n");
    for (name, t) in params {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!("{name} {}\n", dims.join(",")));
        write_avst(&dir.join(format!("{name}.avst")), t)?;
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Checkpoint> {
    let manifest = fs::read_to_string(dir.join("manifest.txt"))
        .map_err(|e| Error::Format(format!("cannot read {}/manifest.txt: {e}", dir.display())))?;
    let mut kind = String::new();
    let mut hyper = BTreeMap::new();
    let mut tensors = BTreeMap::new();
    let mut in_params = false;
    for line in manifest.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "[params]" {
            in_params = true;
            continue;
        }
        if in_params {
            let (name, dims) = line
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("bad manifest param line: {line}")))?;
            let loaded = read_avst(&dir.join(format!("{name}.avst")))?;
            let declared: Vec<usize> = dims
                .split(',')
                .map(|d| d.parse().map_err(|_| Error::Format(format!("bad dim in {line}"))))
                .collect::<Result<_>>()?;
            if loaded.shape() != declared.as_slice() {
                return Err(Error::Format(format!(
                    "tensor {name} shape {:?} does not match manifest {:?}",
                    loaded.shape(),
                    declared
                )));
            }
            tensors.insert(name.to_string(), loaded);
        } else if let Some((k, v)) = line.split_once('=') {
            let (k, v) = (k.trim(), v.trim());
            if k == "kind" {
                kind = v.to_string();
            } else {
                hyper.insert(k.to_string(), v.to_string());
            }
        }
    }
    if kind.is_empty() {
        return Err(Error::Format("manifest has no kind".into()));
    }
    Ok(Checkpoint { kind, hyper, tensors })
}
