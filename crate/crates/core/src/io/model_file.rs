//! Model interchange format.
//!
//! A model is a pretty-printed JSON manifest (`*.sxm`) next to one raw blob of
//! little-endian `f32` values. Every weight array in the manifest is a
//! `{"offset", "len"}` pair counted in `f32` elements from the start of the blob.
//! Matrices are stored row-major with an explicit `[rows, cols]` shape; conv kernels
//! are `[KH, KW, C_in, C_out]`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, FormatError, Result};
use crate::linalg::{ConvParams, Matrix, Tensor};
use crate::netgraph::{Concat, Conv2d, Dense, LayerSpec, NetworkModel, Pool, Residual};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub name: String,
    pub input_shape: Vec<usize>,
    pub dtype: String,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    /// Blob size in `f32` elements.
    pub blob_len: u64,
    /// Hex SHA-256 of the blob bytes.
    pub sha256: String,
    pub layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRef {
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub shape: [usize; 2],
    pub data: BlobRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerEntry {
    Dense {
        weight: MatrixEntry,
        bias: Option<BlobRef>,
        out_shape: Option<Vec<usize>>,
    },
    Conv2d {
        kernel_shape: [usize; 4],
        stride: [usize; 2],
        padding: [usize; 2],
        dilation: [usize; 2],
        kernel: BlobRef,
        bias: Option<BlobRef>,
    },
    AvgPool {
        window: [usize; 2],
        stride: [usize; 2],
    },
    MaxPool {
        window: [usize; 2],
        stride: [usize; 2],
    },
    Relu,
    Sigmoid,
    Tanh,
    Flatten,
    Residual {
        inner: Vec<LayerEntry>,
        skip: Option<MatrixEntry>,
    },
    Concat {
        branches: Vec<Vec<LayerEntry>>,
        combine: Vec<MatrixEntry>,
        bias: Option<BlobRef>,
        out_shape: Vec<usize>,
    },
}

struct BlobWriter {
    data: Vec<f32>,
}

impl BlobWriter {
    fn push(&mut self, values: &[f64]) -> BlobRef {
        let offset = self.data.len() as u64;
        self.data.extend(values.iter().map(|&v| v as f32));
        BlobRef {
            offset,
            len: values.len() as u64,
        }
    }

    fn matrix(&mut self, m: &Matrix) -> MatrixEntry {
        MatrixEntry {
            shape: [m.rows(), m.cols()],
            data: self.push(m.data()),
        }
    }

    fn layers(&mut self, layers: &[LayerSpec]) -> Vec<LayerEntry> {
        layers.iter().map(|l| self.layer(l)).collect()
    }

    fn layer(&mut self, layer: &LayerSpec) -> LayerEntry {
        match layer {
            LayerSpec::Dense(d) => LayerEntry::Dense {
                weight: self.matrix(&d.weight),
                bias: d.bias.as_deref().map(|b| self.push(b)),
                out_shape: d.out_shape.clone(),
            },
            LayerSpec::Conv2d(c) => {
                let s = c.kernel.shape();
                LayerEntry::Conv2d {
                    kernel_shape: [s[0], s[1], s[2], s[3]],
                    stride: c.params.stride,
                    padding: c.params.padding,
                    dilation: c.params.dilation,
                    kernel: self.push(c.kernel.data()),
                    bias: c.bias.as_deref().map(|b| self.push(b)),
                }
            }
            LayerSpec::AvgPool(p) => LayerEntry::AvgPool {
                window: p.window,
                stride: p.stride,
            },
            LayerSpec::MaxPool(p) => LayerEntry::MaxPool {
                window: p.window,
                stride: p.stride,
            },
            LayerSpec::Relu => LayerEntry::Relu,
            LayerSpec::Sigmoid => LayerEntry::Sigmoid,
            LayerSpec::Tanh => LayerEntry::Tanh,
            LayerSpec::Flatten => LayerEntry::Flatten,
            LayerSpec::Residual(r) => LayerEntry::Residual {
                inner: self.layers(&r.inner),
                skip: r.skip.as_ref().map(|m| self.matrix(m)),
            },
            LayerSpec::Concat(c) => LayerEntry::Concat {
                branches: c.branches.iter().map(|b| self.layers(b)).collect(),
                combine: c.combine.iter().map(|m| self.matrix(m)).collect(),
                bias: c.bias.as_deref().map(|b| self.push(b)),
                out_shape: c.out_shape.clone(),
            },
        }
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn blob_name(manifest_path: &Path) -> String {
    let stem = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    format!("{stem}.bin")
}

/// Manifest text and blob bytes for `model`, with the blob named `blob`.
pub fn model_to_files(model: &NetworkModel, blob: &str) -> (String, Vec<u8>) {
    let mut w = BlobWriter { data: Vec::new() };
    let layers = w.layers(model.layers());
    let bytes: Vec<u8> = w.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        name: model.name().to_string(),
        input_shape: model.input_shape().to_vec(),
        dtype: "f32".into(),
        blob: blob.to_string(),
        blob_len: w.data.len() as u64,
        sha256: hex_digest(&bytes),
        layers,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    (text, bytes)
}

/// Writes `path` (the manifest) and its blob next to it. Weights are rounded to `f32`.
pub fn save_model(model: &NetworkModel, path: &Path) -> Result<()> {
    let blob = blob_name(path);
    let (text, bytes) = model_to_files(model, &blob);
    let blob_path = path.with_file_name(&blob);
    fs::write(&blob_path, bytes).map_err(|e| Error::io(&blob_path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn manifest_err(msg: impl Into<String>) -> Error {
    FormatError::Manifest(msg.into()).into()
}

fn parse_manifest(text: &str) -> Result<Manifest> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| manifest_err(format!("not JSON: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| manifest_err("missing format_version"))?;
    if version != FORMAT_VERSION as u64 {
        return Err(FormatError::VersionMismatch {
            found: version.min(u32::MAX as u64) as u32,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let manifest: Manifest = serde_json::from_value(value).map_err(|e| manifest_err(e.to_string()))?;
    if manifest.dtype != "f32" {
        return Err(manifest_err(format!("unsupported dtype {}", manifest.dtype)));
    }
    Ok(manifest)
}

struct BlobReader {
    data: Vec<f64>,
}

impl BlobReader {
    fn slice(&self, r: &BlobRef, expected: usize, what: &str) -> Result<Vec<f64>> {
        let end = r.offset.checked_add(r.len).filter(|&e| e <= self.data.len() as u64);
        let Some(end) = end else {
            return Err(FormatError::CorruptBlob(format!(
                "{what}: range {}..{} outside blob of {} values",
                r.offset,
                r.offset.saturating_add(r.len),
                self.data.len()
            ))
            .into());
        };
        if r.len as usize != expected {
            return Err(manifest_err(format!(
                "{what}: {} values stored, shape needs {expected}",
                r.len
            )));
        }
        Ok(self.data[r.offset as usize..end as usize].to_vec())
    }

    fn matrix(&self, m: &MatrixEntry, what: &str) -> Result<Matrix> {
        let [r, c] = m.shape;
        let data = self.slice(&m.data, r * c, what)?;
        Matrix::new(r, c, data).map_err(|e| manifest_err(format!("{what}: {e}")))
    }

    fn layers(&self, entries: &[LayerEntry], path: &str) -> Result<Vec<LayerSpec>> {
        entries
            .iter()
            .enumerate()
            .map(|(i, e)| self.layer(e, &format!("{path}{i}")))
            .collect()
    }

    fn layer(&self, e: &LayerEntry, at: &str) -> Result<LayerSpec> {
        let pool = |window: [usize; 2], stride: [usize; 2]| Pool { window, stride };
        Ok(match e {
            LayerEntry::Dense {
                weight,
                bias,
                out_shape,
            } => {
                let w = self.matrix(weight, &format!("layer {at} weight"))?;
                let bias = match bias {
                    Some(b) => Some(self.slice(b, w.rows(), &format!("layer {at} bias"))?),
                    None => None,
                };
                LayerSpec::Dense(Dense {
                    weight: w,
                    bias,
                    out_shape: out_shape.clone(),
                })
            }
            LayerEntry::Conv2d {
                kernel_shape,
                stride,
                padding,
                dilation,
                kernel,
                bias,
            } => {
                let n: usize = kernel_shape.iter().product();
                let k = self.slice(kernel, n, &format!("layer {at} kernel"))?;
                let kernel = Tensor::new(kernel_shape.to_vec(), k).map_err(|e| manifest_err(e.to_string()))?;
                let bias = match bias {
                    Some(b) => Some(self.slice(b, kernel_shape[3], &format!("layer {at} bias"))?),
                    None => None,
                };
                LayerSpec::Conv2d(Conv2d {
                    kernel,
                    bias,
                    params: ConvParams {
                        stride: *stride,
                        padding: *padding,
                        dilation: *dilation,
                    },
                })
            }
            LayerEntry::AvgPool { window, stride } => LayerSpec::AvgPool(pool(*window, *stride)),
            LayerEntry::MaxPool { window, stride } => LayerSpec::MaxPool(pool(*window, *stride)),
            LayerEntry::Relu => LayerSpec::Relu,
            LayerEntry::Sigmoid => LayerSpec::Sigmoid,
            LayerEntry::Tanh => LayerSpec::Tanh,
            LayerEntry::Flatten => LayerSpec::Flatten,
            LayerEntry::Residual { inner, skip } => LayerSpec::Residual(Residual {
                inner: self.layers(inner, &format!("{at}.inner."))?,
                skip: match skip {
                    Some(m) => Some(self.matrix(m, &format!("layer {at} skip"))?),
                    None => None,
                },
            }),
            LayerEntry::Concat {
                branches,
                combine,
                bias,
                out_shape,
            } => {
                let n_out: usize = out_shape.iter().product();
                LayerSpec::Concat(Concat {
                    branches: branches
                        .iter()
                        .enumerate()
                        .map(|(b, layers)| self.layers(layers, &format!("{at}.branch{b}.")))
                        .collect::<Result<_>>()?,
                    combine: combine
                        .iter()
                        .map(|m| self.matrix(m, &format!("layer {at} combine")))
                        .collect::<Result<_>>()?,
                    bias: match bias {
                        Some(b) => Some(self.slice(b, n_out, &format!("layer {at} bias"))?),
                        None => None,
                    },
                    out_shape: out_shape.clone(),
                })
            }
        })
    }
}

fn blob_path(manifest_path: &Path, blob: &str) -> Result<PathBuf> {
    let name = Path::new(blob);
    if name.components().count() != 1 || name.is_absolute() {
        return Err(manifest_err(format!("blob must be a plain file name, got {blob:?}")));
    }
    Ok(manifest_path.with_file_name(name))
}

/// Reads and validates a model: version, blob length and checksum, weight ranges, and
/// the layer shape chain.
pub fn load_model(path: &Path) -> Result<NetworkModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = parse_manifest(&text)?;
    let bpath = blob_path(path, &manifest.blob)?;
    let bytes = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    if bytes.len() as u64 != manifest.blob_len.saturating_mul(4) {
        return Err(FormatError::CorruptBlob(format!(
            "{} has {} bytes, manifest declares {} values",
            bpath.display(),
            bytes.len(),
            manifest.blob_len
        ))
        .into());
    }
    let digest = hex_digest(&bytes);
    if digest != manifest.sha256.to_ascii_lowercase() {
        return Err(FormatError::CorruptBlob(format!("checksum mismatch for {}", bpath.display())).into());
    }
    let reader = BlobReader {
        data: bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    };
    let layers = reader.layers(&manifest.layers, "")?;
    NetworkModel::new(manifest.name, manifest.input_shape, layers).map_err(|e| match e {
        Error::Dimension(msg) => FormatError::InvalidShapeChain(msg).into(),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetworkModel {
        let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.25]]).unwrap();
        NetworkModel::new(
            "tiny",
            vec![2],
            vec![LayerSpec::Dense(Dense::new(w, Some(vec![0.5, -1.0]))), LayerSpec::Relu],
        )
        .unwrap()
    }

    #[test]
    fn manifest_lists_offsets() {
        let (text, bytes) = model_to_files(&tiny(), "tiny.bin");
        assert_eq!(bytes.len(), 6 * 4);
        let m = parse_manifest(&text).unwrap();
        match &m.layers[0] {
            LayerEntry::Dense { weight, bias, .. } => {
                assert_eq!(weight.data, BlobRef { offset: 0, len: 4 });
                assert_eq!(*bias, Some(BlobRef { offset: 4, len: 2 }));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(text.contains("\"kind\": \"relu\""));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let (text, _) = model_to_files(&tiny(), "tiny.bin");
        let text = text.replace("\"format_version\": 1", "\"format_version\": 9");
        let err = parse_manifest(&text).unwrap_err();
        assert!(matches!(
            err,
            Error::Format(FormatError::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn blob_must_stay_in_directory() {
        assert!(blob_path(Path::new("/a/m.sxm"), "../x.bin").is_err());
        assert_eq!(
            blob_path(Path::new("/a/m.sxm"), "x.bin").unwrap(),
            PathBuf::from("/a/x.bin")
        );
    }
}
