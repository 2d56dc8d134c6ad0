//! `CEGZ` checkpoints:
//!
//! ```text
//! "CEGZ" | u32 version | u32 header length | header JSON
//!        | sha256(header JSON ‖ payload) | payload
//! ```
//!
//! The payload holds, for G, D, E, H, F in that order, a `u32` parameter
//! count and per parameter its value and both Adam moments (gzb matrix
//! encoding) plus a `u64` step count; then the random stream position, and
//! an optional final classifier. Integers are little-endian.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::classify::{FeatureSpace, SoftmaxClassifier};
use super::config::TrainConfig;
use super::objective::NetBundle;
use crate::dataset::{read_matrix, write_matrix};
use crate::error::{Error, Result};
use crate::nn::{Param, ParamSet};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CEGZ";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    config_sha256: String,
    d_x: usize,
    d_a: usize,
    step: u64,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub nets: NetBundle,
    pub rng: crate::Rng,
    pub step: u64,
    pub classifier: Option<SoftmaxClassifier>,
}

pub fn config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex(&Sha256::digest(json))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    /// Fails with `HashMismatch` when `cfg` differs from the stored config.
    pub fn ensure_config(&self, cfg: &TrainConfig) -> Result<()> {
        let (stored, given) = (config_hash(&self.nets.config), config_hash(cfg));
        if stored != given {
            return Err(Error::HashMismatch(format!(
                "checkpoint config {stored} differs from requested config {given}"
            )));
        }
        Ok(())
    }
}

fn nets_in_order(nets: &NetBundle) -> [&dyn ParamSet<f32>; 5] {
    [&nets.g, &nets.d, &nets.e, &nets.h, &nets.f]
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(ck)?)?;
    Ok(())
}

/// The complete file image of `ck`.
pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let header = Header {
        config: ck.nets.config.clone(),
        config_sha256: config_hash(&ck.nets.config),
        d_x: ck.nets.feature_dim(),
        d_a: ck.nets.attr_dim(),
        step: ck.step,
    };
    let json = serde_json::to_vec(&header)?;
    let mut payload = Vec::new();
    for set in nets_in_order(&ck.nets) {
        let blocks = set.param_blocks();
        payload.write_all(&(blocks.len() as u32).to_le_bytes())?;
        for (_, p) in blocks {
            write_matrix(&mut payload, &p.value)?;
            write_matrix(&mut payload, &p.moment1)?;
            write_matrix(&mut payload, &p.moment2)?;
            payload.write_all(&p.step_count.to_le_bytes())?;
        }
    }
    payload.write_all(&ck.rng.get_seed())?;
    payload.write_all(&ck.rng.get_stream().to_le_bytes())?;
    payload.write_all(&ck.rng.get_word_pos().to_le_bytes())?;
    match &ck.classifier {
        None => payload.push(0),
        Some(c) => {
            payload.push(1);
            payload.push(match c.space {
                FeatureSpace::Raw => 0,
                FeatureSpace::Embedding => 1,
            });
            write_matrix(&mut payload, &c.weight)?;
            write_matrix(&mut payload, &c.bias)?;
        }
    }
    let mut digest = Sha256::new();
    digest.update(&json);
    digest.update(&payload);
    let mut out = Vec::with_capacity(json.len() + payload.len() + 48);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&digest.finalize());
    out.extend_from_slice(&payload);
    Ok(out)
}

fn take<'a>(buf: &'a [u8], at: &mut usize, n: usize, path: &Path) -> Result<&'a [u8]> {
    let end = at.checked_add(n).filter(|&e| e <= buf.len()).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        msg: "checkpoint is truncated".into(),
    })?;
    let s = &buf[*at..end];
    *at = end;
    Ok(s)
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?, path)
}

/// Parses a file image; `path` only labels errors.
pub fn decode_checkpoint(buf: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut at = 0;
    let magic = take(buf, &mut at, 4, path)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::MagicMismatch {
            path: path.to_path_buf(),
            expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = u32::from_le_bytes(take(buf, &mut at, 4, path)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: format!("unsupported checkpoint version {version}"),
        });
    }
    let len = u32::from_le_bytes(take(buf, &mut at, 4, path)?.try_into().expect("4 bytes")) as usize;
    let json = take(buf, &mut at, len, path)?;
    let stored_digest = take(buf, &mut at, 32, path)?;
    let payload = &buf[at..];
    let mut digest = Sha256::new();
    digest.update(json);
    digest.update(payload);
    if digest.finalize().as_slice() != stored_digest {
        return Err(Error::HashMismatch(format!("{}: content hash does not match", path.display())));
    }
    let header: Header = serde_json::from_slice(json).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if config_hash(&header.config) != header.config_sha256 {
        return Err(Error::HashMismatch(format!("{}: config hash does not match", path.display())));
    }

    let parse = |e: std::io::Error| Error::Parse {
        path: path.to_path_buf(),
        msg: format!("payload: {e}"),
    };
    // the architecture comes from the config; weights are overwritten below
    let mut nets = NetBundle::new(&header.config, header.d_x, header.d_a, &mut crate::rng_from_seed(0))?;
    let mut r = Cursor::new(payload);
    for set in [
        &mut nets.g as &mut dyn ParamSet<f32>,
        &mut nets.d,
        &mut nets.e,
        &mut nets.h,
        &mut nets.f,
    ] {
        let count = u32::from_le_bytes(read_array(&mut r).map_err(parse)?) as usize;
        let mut blocks = set.param_blocks_mut();
        if count != blocks.len() {
            return Err(Error::shape(format!(
                "checkpoint has {count} parameter blocks where the config implies {}",
                blocks.len()
            )));
        }
        for (name, p) in blocks.iter_mut() {
            let value = read_matrix(&mut r).map_err(parse)?;
            let moment1 = read_matrix(&mut r).map_err(parse)?;
            let moment2 = read_matrix(&mut r).map_err(parse)?;
            let step_count = u64::from_le_bytes(read_array(&mut r).map_err(parse)?);
            if value.shape() != p.value.shape() || moment1.shape() != value.shape() || moment2.shape() != value.shape()
            {
                return Err(Error::shape(format!("parameter {name} has shape {:?}", value.shape())));
            }
            **p = Param {
                grad: crate::nn::Mat::zeros(value.rows(), value.cols()),
                value,
                moment1,
                moment2,
                step_count,
            };
        }
    }
    let seed: [u8; 32] = read_array(&mut r).map_err(parse)?;
    let stream = u64::from_le_bytes(read_array(&mut r).map_err(parse)?);
    let word_pos = u128::from_le_bytes(read_array(&mut r).map_err(parse)?);
    let mut rng = crate::Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    let [flag] = read_array(&mut r).map_err(parse)?;
    let classifier = match flag {
        0 => None,
        1 => {
            let [space] = read_array(&mut r).map_err(parse)?;
            let space = match space {
                0 => FeatureSpace::Raw,
                1 => FeatureSpace::Embedding,
                s => return Err(parse(std::io::Error::other(format!("feature space tag {s}")))),
            };
            let weight = read_matrix(&mut r).map_err(parse)?;
            let bias = read_matrix(&mut r).map_err(parse)?;
            Some(SoftmaxClassifier { weight, bias, space })
        }
        f => return Err(parse(std::io::Error::other(format!("classifier flag {f}")))),
    };
    if (r.position() as usize) != payload.len() {
        return Err(parse(std::io::Error::other("trailing bytes")));
    }
    Ok(Checkpoint {
        nets,
        rng,
        step: header.step,
        classifier,
    })
}
