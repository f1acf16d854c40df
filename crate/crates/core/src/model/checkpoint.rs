//! Checkpoints are a directory holding `manifest.txt` (configuration,
//! metadata and a tensor index) and `tensors.bin` (all tensors as
//! little-endian `f64`, concatenated in index order).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::autodiff::Tensor;

use super::{ModelConfig, ModelError, ModelParams};

const MAGIC: &str = "so3krates-checkpoint 1";
const MANIFEST: &str = "manifest.txt";
const BLOB: &str = "tensors.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    /// Additional tensors, e.g. optimizer moments.
    pub extra: Vec<(String, Tensor)>,
    /// Free-form `key = value` metadata.
    pub meta: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn extra(&self, name: &str) -> Option<&Tensor> {
        self.extra.iter().find(|(k, _)| k == name).map(|(_, t)| t)
    }
}

fn check_token(s: &str) -> Result<(), ModelError> {
    if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c == '=') {
        return Err(ModelError::Checkpoint(format!("invalid name {s:?}")));
    }
    Ok(())
}

pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<(), ModelError> {
    fs::create_dir_all(dir)?;
    let mut manifest = format!("{MAGIC}\n[config]\n");
    for (k, v) in ckpt.config.to_pairs() {
        manifest.push_str(&format!("{k} = {v}\n"));
    }
    manifest.push_str("[meta]\n");
    for (k, v) in &ckpt.meta {
        check_token(k)?;
        if v.contains('\n') {
            return Err(ModelError::Checkpoint(format!("metadata value for {k} spans lines")));
        }
        manifest.push_str(&format!("{k} = {v}\n"));
    }
    manifest.push_str("[tensors]\n");
    let mut blob = Vec::new();
    let tensors = ckpt
        .params
        .names()
        .iter()
        .zip(ckpt.params.tensors())
        .map(|(n, t)| ("param", n.as_str(), t.as_ref()))
        .chain(ckpt.extra.iter().map(|(n, t)| ("extra", n.as_str(), t)));
    for (kind, name, t) in tensors {
        check_token(name)?;
        let [rows, cols] = t.shape();
        manifest.push_str(&format!("{kind} {name} {rows} {cols} {}\n", blob.len()));
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::File::create(dir.join(BLOB))?.write_all(&blob)?;
    fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, ModelError> {
    let manifest = fs::read_to_string(dir.join(MANIFEST))?;
    let blob = fs::read(dir.join(BLOB))?;
    let bad = |line: usize, msg: &str| ModelError::Checkpoint(format!("manifest line {line}: {msg}"));
    let mut lines = manifest.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        _ => return Err(bad(1, "missing header")),
    }
    let mut section = "";
    let mut config_pairs = Vec::new();
    let mut meta = Vec::new();
    let mut params = Vec::new();
    let mut extra = Vec::new();
    for (k, line) in lines {
        let lineno = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[config]" => "config",
                "[meta]" => "meta",
                "[tensors]" => "tensors",
                _ => return Err(bad(lineno, "unknown section")),
            };
            continue;
        }
        match section {
            "config" | "meta" => {
                let (key, value) = line.split_once(" = ").ok_or_else(|| bad(lineno, "expected key = value"))?;
                let entry = (key.to_string(), value.to_string());
                if section == "config" {
                    config_pairs.push(entry);
                } else {
                    meta.push(entry);
                }
            }
            "tensors" => {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 5 {
                    return Err(bad(lineno, "expected kind name rows cols offset"));
                }
                let parse = |s: &str| s.parse::<usize>().map_err(|_| bad(lineno, "bad integer"));
                let (rows, cols, offset) = (parse(f[2])?, parse(f[3])?, parse(f[4])?);
                let end = offset + rows * cols * 8;
                if end > blob.len() {
                    return Err(bad(lineno, "tensor extends past the end of the blob"));
                }
                let data = blob[offset..end]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                let t = Tensor::new(rows, cols, data)?;
                match f[0] {
                    "param" => params.push((f[1].to_string(), t)),
                    "extra" => extra.push((f[1].to_string(), t)),
                    _ => return Err(bad(lineno, "unknown tensor kind")),
                }
            }
            _ => return Err(bad(lineno, "entry outside a section")),
        }
    }
    let config = ModelConfig::from_pairs(config_pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    let params = ModelParams::from_named(&config, params)?;
    Ok(Checkpoint {
        config,
        params,
        extra,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            features: 8,
            n_layers: 1,
            l_max: 2,
            n_rbf: 4,
            radial_hidden: 6,
            spherical_hidden: 5,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let config = small();
        let ckpt = Checkpoint {
            params: ModelParams::init(&config, 9).unwrap(),
            config,
            extra: vec![("adam.m.x".into(), Tensor::from_fn(2, 3, |r, c| r as f64 - c as f64 * 0.1))],
            meta: vec![("step".into(), "17".into())],
        };
        save_checkpoint(dir.path(), &ckpt).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.meta("step"), Some("17"));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let config = small();
        let ckpt = Checkpoint {
            params: ModelParams::init(&config, 9).unwrap(),
            config,
            extra: vec![],
            meta: vec![],
        };
        save_checkpoint(dir.path(), &ckpt).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&path).unwrap().replace("features = 8", "features = 4");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(ModelError::Checkpoint(_))));
    }
}
