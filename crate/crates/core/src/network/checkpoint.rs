//! Binary checkpoints for [`AttentionClassifier`].
//!
//! ```text
//! 0..4    magic "ACKP"
//! 4       version (1)
//! 5..8    zero padding
//! 8..12   header length N, u32 little-endian
//! 12..    N bytes of UTF-8 JSON naming each tensor's role and byte length
//! ...     the FMAP encodings of those tensors, concatenated in header order
//! ```
//!
//! Roles are `attention.kernel`, `attention.bias` (a length-1 vector) and
//! `head.<i>.weight` / `head.<i>.bias` for every dense layer including the
//! output layer.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::head::{Dense, MlpHead};
use super::model::AttentionClassifier;
use crate::attention::SpatialAttention;
use crate::data::fmap;
use crate::error::{DecodeError, Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"ACKP";
pub const VERSION: u8 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kernel_size: usize,
    input_dim: usize,
    hidden_widths: Vec<usize>,
    tensors: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    role: String,
    bytes: usize,
}

fn named_tensors(model: &AttentionClassifier) -> Vec<(String, Tensor)> {
    let att = model.attention();
    let mut out = vec![
        ("attention.kernel".to_string(), att.kernel().clone()),
        (
            "attention.bias".to_string(),
            Tensor::from_parts(vec![1], vec![att.bias()]),
        ),
    ];
    for (i, l) in model.head().layers().iter().enumerate() {
        out.push((format!("head.{i}.weight"), l.weights().clone()));
        out.push((format!("head.{i}.bias"), l.bias().clone()));
    }
    out
}

pub fn encode(model: &AttentionClassifier) -> Vec<u8> {
    let tensors = named_tensors(model);
    let blobs: Vec<Vec<u8>> = tensors.iter().map(|(_, t)| fmap::encode(t)).collect();
    let header = Header {
        kernel_size: model.attention().kernel_size(),
        input_dim: model.channels(),
        hidden_widths: model.head().architecture().widths().to_vec(),
        tensors: tensors
            .iter()
            .zip(&blobs)
            .map(|((role, _), b)| Entry {
                role: role.clone(),
                bytes: b.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + blobs.iter().map(Vec::len).sum::<usize>());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[VERSION, 0, 0, 0]);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for b in blobs {
        out.extend_from_slice(&b);
    }
    out
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::Decode(DecodeError::Checkpoint(msg.into()))
}

pub fn decode(bytes: &[u8]) -> Result<AttentionClassifier> {
    if bytes.len() < 12 {
        return Err(DecodeError::TruncatedHeader(bytes.len()).into());
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if magic != MAGIC {
        return Err(DecodeError::BadMagic(magic).into());
    }
    if bytes[4] != VERSION {
        return Err(DecodeError::UnsupportedVersion(bytes[4]).into());
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("length checked")) as usize;
    let body = bytes
        .get(12..12 + header_len)
        .ok_or(DecodeError::TruncatedHeader(bytes.len()))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| malformed(format!("header: {e}")))?;

    let mut rest = &bytes[12 + header_len..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        if rest.len() < entry.bytes {
            return Err(malformed(format!("tensor {} truncated", entry.role)));
        }
        let t = fmap::decode(&rest[..entry.bytes])?;
        tensors.push((entry.role.as_str(), t));
        rest = &rest[entry.bytes..];
    }
    if !rest.is_empty() {
        return Err(DecodeError::TrailingBytes { extra: rest.len() }.into());
    }

    let expected_roles = 2 + 2 * (header.hidden_widths.len() + 1);
    if tensors.len() != expected_roles {
        return Err(malformed(format!(
            "expected {expected_roles} tensors, found {}",
            tensors.len()
        )));
    }
    let mut it = tensors.into_iter();
    let mut take = |role: &str| -> Result<Tensor> {
        let (r, t) = it.next().expect("count checked");
        if r != role {
            return Err(malformed(format!("expected tensor {role}, found {r}")));
        }
        Ok(t)
    };
    let kernel = take("attention.kernel")?;
    let bias = take("attention.bias")?;
    if bias.shape() != [1] {
        return Err(malformed("attention.bias must hold one value"));
    }
    let attention = SpatialAttention::new(kernel, bias.data()[0])?;
    if attention.kernel_size() != header.kernel_size {
        return Err(malformed("kernel size disagrees with header"));
    }
    let mut layers = Vec::with_capacity(header.hidden_widths.len() + 1);
    for i in 0..=header.hidden_widths.len() {
        let w = take(&format!("head.{i}.weight"))?;
        let b = take(&format!("head.{i}.bias"))?;
        layers.push(Dense::new(w, b)?);
    }
    let head = MlpHead::new(layers)?;
    if head.input_dim() != header.input_dim
        || head.architecture().widths() != header.hidden_widths.as_slice()
    {
        return Err(malformed("head shape disagrees with header"));
    }
    Ok(AttentionClassifier::new(attention, head))
}

pub fn save(model: &AttentionClassifier, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<AttentionClassifier> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
