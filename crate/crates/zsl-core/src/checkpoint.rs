//! Parameter checkpoints: a single-line JSON header (model kind, dims, seed,
//! step, matrix shapes) followed by each matrix's little-endian f64 payload
//! in declaration order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{HeadParams, Model, ParamBlocks, ShallowParams};

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
struct MatrixMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: String,
    seed: u64,
    step: u64,
    matrices: Vec<MatrixMeta>,
}

fn matrix_metas<P: ParamBlocks>(params: &P) -> Vec<MatrixMeta> {
    (0..params.n_blocks())
        .map(|b| MatrixMeta {
            name: P::block_names()[b].to_string(),
            rows: params.block(b).rows(),
            cols: params.block(b).cols(),
        })
        .collect()
}

fn payload<P: ParamBlocks>(params: &P) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(params.param_count() * 8);
    for b in 0..params.n_blocks() {
        for &v in params.block(b).data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

pub fn save_checkpoint(model: &Model, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let (kind, matrices, body) = match model {
        Model::Head(p) => ("head", matrix_metas(p), payload(p)),
        Model::Shallow(p) => ("shallow", matrix_metas(p), payload(p)),
    };
    let header = Header {
        model: kind.to_string(),
        seed: meta.seed,
        step: meta.step,
        matrices,
    };
    let mut bytes = serde_json::to_string(&header)?.into_bytes();
    bytes.push(b'\n');
    bytes.extend_from_slice(&body);
    fs::write(path, bytes)?;
    Ok(())
}

fn read_matrices(
    path: &Path,
    metas: &[MatrixMeta],
    expected_names: &[&str],
    body: &[u8],
) -> Result<Vec<Mat>> {
    if metas.len() != expected_names.len() {
        return Err(Error::format(path, "unexpected matrix count"));
    }
    for (meta, &name) in metas.iter().zip(expected_names) {
        if meta.name != name {
            return Err(Error::format(
                path,
                format!("expected matrix {name:?}, found {:?}", meta.name),
            ));
        }
    }
    let total: usize = metas.iter().map(|m| m.rows * m.cols * 8).sum();
    if body.len() != total {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, header declares {total}", body.len()),
        ));
    }
    let mut offset = 0;
    let mut out = Vec::with_capacity(metas.len());
    for meta in metas {
        let count = meta.rows * meta.cols;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(f64::from_le_bytes(
                body[offset..offset + 8].try_into().unwrap(),
            ));
            offset += 8;
        }
        out.push(Mat::from_vec(meta.rows, meta.cols, data));
    }
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let bytes = fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "missing header line"))?;
    let header: Header = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    let body = &bytes[newline + 1..];
    let meta = CheckpointMeta {
        seed: header.seed,
        step: header.step,
    };
    let model = match header.model.as_str() {
        "head" => {
            let mut mats =
                read_matrices(path, &header.matrices, HeadParams::block_names(), body)?;
            let gate_weight = mats.pop().unwrap();
            let score_weight = mats.pop().unwrap();
            let attn_weight = mats.pop().unwrap();
            let attr_embed = mats.pop().unwrap();
            Model::Head(HeadParams {
                attr_embed,
                attn_weight,
                score_weight,
                gate_weight,
            })
        }
        "shallow" => {
            let mut mats =
                read_matrices(path, &header.matrices, ShallowParams::block_names(), body)?;
            let b2 = mats.pop().unwrap();
            let w2 = mats.pop().unwrap();
            let b1 = mats.pop().unwrap();
            let w1 = mats.pop().unwrap();
            Model::Shallow(ShallowParams { w1, b1, w2, b2 })
        }
        other => {
            return Err(Error::format(path, format!("unknown model kind {other:?}")));
        }
    };
    Ok((model, meta))
}
