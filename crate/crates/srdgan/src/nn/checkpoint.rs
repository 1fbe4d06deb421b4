//! Checkpoint archive: one file holding a JSON metadata header plus named
//! f64 tensors, with a trailing SHA-256 so truncation is caught early.
//! Network checkpoints store the spec in the header; loading rebuilds the
//! layout from the spec and refuses mismatched tensors.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_network, NetworkSpec, NetworkState};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SRDGAR01";

pub struct Archive {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, ArrayD<f64>)>,
}

impl Archive {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        let meta = serde_json::to_vec(&self.meta).map_err(|e| Error::format(e.to_string()))?;
        buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        buf.extend_from_slice(&meta);
        buf.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, tensor) in &self.tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(tensor.ndim() as u32).to_le_bytes());
            for d in tensor.shape() {
                buf.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in tensor.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        let mut file = std::fs::File::create(path.as_ref())?;
        file.write_all(&buf)?;
        file.write_all(&digest)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Archive> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let mut raw = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut raw)?;
        if raw.len() < MAGIC.len() + 32 || &raw[..8] != MAGIC {
            return Err(Error::format(format!("{}: not a checkpoint archive", path.display())));
        }
        let (body, digest) = raw.split_at(raw.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::format(format!("{}: checksum mismatch", path.display())));
        }
        let mut cur = &body[8..];
        let meta_len = read_u64(&mut cur)? as usize;
        let meta: serde_json::Value = serde_json::from_slice(take(&mut cur, meta_len)?)
            .map_err(|e| Error::format(format!("{}: bad metadata: {e}", path.display())))?;
        let n_tensors = read_u64(&mut cur)? as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name_len = read_u32(&mut cur)? as usize;
            let name = String::from_utf8(take(&mut cur, name_len)?.to_vec())
                .map_err(|e| Error::format(e.to_string()))?;
            let ndim = read_u32(&mut cur)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut cur)? as usize);
            }
            let len: usize = shape.iter().product();
            let bytes = take(&mut cur, len * 8)?;
            let data: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let tensor = ArrayD::from_shape_vec(shape, data)
                .map_err(|e| Error::format(e.to_string()))?;
            tensors.push((name, tensor));
        }
        Ok(Archive { meta, tensors })
    }
}

fn take<'a>(cur: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if cur.len() < n {
        return Err(Error::format("archive truncated"));
    }
    let (head, rest) = cur.split_at(n);
    *cur = rest;
    Ok(head)
}

fn read_u64(cur: &mut &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(take(cur, 8)?.try_into().expect("8 bytes")))
}

fn read_u32(cur: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(cur, 4)?.try_into().expect("4 bytes")))
}

#[derive(Serialize, Deserialize)]
struct NetworkMeta {
    format: String,
    version: u32,
    spec: NetworkSpec,
    init_seed: u64,
}

pub fn save_network(state: &NetworkState, path: impl AsRef<Path>) -> Result<()> {
    let meta = serde_json::to_value(NetworkMeta {
        format: "srdgan-network".into(),
        version: 1,
        spec: state.spec,
        init_seed: state.init_seed,
    })
    .map_err(|e| Error::format(e.to_string()))?;
    let tensors = state
        .params
        .iter()
        .map(|e| (e.name.clone(), e.value.clone()))
        .collect();
    Archive { meta, tensors }.write(path)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkState> {
    let archive = Archive::read(path.as_ref())?;
    let meta: NetworkMeta = serde_json::from_value(archive.meta.clone())
        .map_err(|e| Error::format(format!("bad network metadata: {e}")))?;
    if meta.format != "srdgan-network" {
        return Err(Error::format(format!("not a network checkpoint: {}", meta.format)));
    }
    if meta.version != 1 {
        return Err(Error::format(format!("unsupported checkpoint version {}", meta.version)));
    }
    let mut state = build_network(&meta.spec, meta.init_seed)?;
    state.params.load_values(&archive.tensors)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkKind;

    #[test]
    fn network_checkpoint_roundtrips_bit_exactly() {
        let spec = NetworkSpec::h2l_default().with_base_channels(4).with_num_blocks(1);
        let state = build_network(&spec, 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_network(&state, &path).unwrap();
        let loaded = load_network(&path).unwrap();
        assert_eq!(loaded.param_hash(), state.param_hash());
        assert_eq!(loaded.spec, state.spec);
    }

    #[test]
    fn mismatched_spec_is_a_hard_error() {
        let spec = NetworkSpec::h2l_default().with_base_channels(4).with_num_blocks(1);
        let state = build_network(&spec, 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_network(&state, &path).unwrap();

        // tamper with the metadata: claim a different block count
        let mut archive = Archive::read(&path).unwrap();
        archive.meta["spec"]["num_blocks"] = serde_json::json!(2);
        let tampered = dir.path().join("tampered.ckpt");
        archive.write(&tampered).unwrap();
        assert!(matches!(load_network(&tampered), Err(Error::Spec(_))));
    }

    #[test]
    fn checkpoint_kind_is_checked_by_consumers() {
        let spec = NetworkSpec::h2l_default().with_base_channels(4).with_num_blocks(1);
        let state = build_network(&spec, 1).unwrap();
        assert!(state.expect_kind(NetworkKind::L2hGen).is_err());
        assert!(state.expect_kind(NetworkKind::H2lGen).is_ok());
    }
}
