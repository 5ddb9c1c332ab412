use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    #[default]
    OneHot,
    Similarity,
}

/// Goal description fed to the search and navigation encoders and the policy.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetCode {
    pub mode: TargetMode,
    pub class_id: usize,
    pub vector: Vec<f64>,
}

impl TargetCode {
    pub fn as_row(&self) -> Tensor {
        Tensor::row(self.vector.clone()).expect("target code is nonempty")
    }
}

/// One-hot indicator, or cosine similarity of every class embedding to the
/// target's.
pub fn make_target_code(class_id: usize, n_classes: usize, mode: TargetMode, embeddings: Option<&ClassEmbeddings>) -> Result<TargetCode> {
    if class_id >= n_classes {
        return Err(Error::Task(format!("target class {class_id} outside 0..{n_classes}")));
    }
    let vector = match mode {
        TargetMode::OneHot => {
            let mut v = vec![0.0; n_classes];
            v[class_id] = 1.0;
            v
        }
        TargetMode::Similarity => {
            let emb = embeddings.ok_or_else(|| Error::Config("similarity targets need class embeddings".into()))?;
            if emb.len() != n_classes {
                return Err(Error::Config(format!(
                    "{} class embeddings for {n_classes} classes",
                    emb.len()
                )));
            }
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let target = emb.vector(class_id);
            let tn = norm(target);
            (0..n_classes)
                .map(|j| {
                    if j == class_id {
                        return Ok(1.0);
                    }
                    let e = emb.vector(j);
                    let en = norm(e);
                    if tn == 0.0 || en == 0.0 {
                        return Err(Error::Config(format!(
                            "zero-norm embedding for class `{}`",
                            emb.names[if tn == 0.0 { class_id } else { j }]
                        )));
                    }
                    let dot: f64 = e.iter().zip(target).map(|(a, b)| a * b).sum();
                    Ok((dot / (en * tn)).clamp(-1.0, 1.0))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(TargetCode { mode, class_id, vector })
}

/// Named class vectors, one row per class in class-id order.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassEmbeddings {
    pub names: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl ClassEmbeddings {
    pub fn new(names: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != names.len() * dim {
            return Err(Error::Config(format!(
                "{} embedding values for {} classes of width {dim}",
                data.len(),
                names.len()
            )));
        }
        Ok(ClassEmbeddings { names, dim, data })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, class_id: usize) -> &[f64] {
        &self.data[class_id * self.dim..(class_id + 1) * self.dim]
    }

    /// Text table: one class per line, `name v1 v2 …`; `#` starts a comment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut names = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let name = fields.next().expect("nonempty line").to_string();
            let values = fields
                .map(|f| f.parse::<f64>().map_err(|_| Error::format(path, format!("line {}: bad number `{f}`", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::format(
                        path,
                        format!("line {}: {} values, expected {d}", i + 1, values.len()),
                    ))
                }
                _ => {}
            }
            names.push(name);
            data.extend(values);
        }
        let dim = dim.ok_or_else(|| Error::format(path, "no embeddings"))?;
        ClassEmbeddings::new(names, dim, data).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (k, name) in self.names.iter().enumerate() {
            out.push_str(name);
            for v in self.vector(k) {
                out.push(' ');
                out.push_str(&format!("{v:?}"));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
