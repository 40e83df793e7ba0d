//! Versioned little-endian binary checkpoints.
//!
//! Layout: magic `QLCK`, format version, config hash, architecture, progress
//! counters, observation statistics, parameters, Adam moments, and a trailing
//! SHA-256 of all preceding bytes.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::adam::{Adam, AdamConfig};
use super::net::ActorCritic;
use super::normalize::RunningMeanStd;
use super::train::TrainerState;

const MAGIC: &[u8; 4] = b"QLCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is corrupted (checksum mismatch)")]
    Checksum,
    #[error("malformed checkpoint: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// SHA-256 of the resolved configuration the run was started with.
    pub config_hash: [u8; 32],
    pub state: TrainerState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.state;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.write_u32::<LE>(FORMAT_VERSION).unwrap();
        buf.extend_from_slice(&self.config_hash);
        let hidden: Vec<usize> = s.net.actor.layers[..s.net.actor.layers.len() - 1].iter().map(|l| l.w.ncols()).collect();
        buf.write_u32::<LE>(s.net.obs_dim() as u32).unwrap();
        buf.write_u32::<LE>(s.net.act_dim() as u32).unwrap();
        buf.write_u32::<LE>(hidden.len() as u32).unwrap();
        for h in &hidden {
            buf.write_u32::<LE>(*h as u32).unwrap();
        }
        buf.write_u32::<LE>(s.stage as u32).unwrap();
        buf.write_u64::<LE>(s.iteration).unwrap();
        buf.write_u64::<LE>(s.env_steps).unwrap();
        buf.write_u64::<LE>(s.adam.t).unwrap();
        let AdamConfig { beta1, beta2, eps } = s.adam.cfg;
        for x in [beta1, beta2, eps, s.obs_norm.count, s.obs_norm.clip] {
            buf.write_f64::<LE>(x).unwrap();
        }
        write_f64s(&mut buf, &s.obs_norm.mean);
        write_f64s(&mut buf, &s.obs_norm.var);
        write_f64s(&mut buf, &s.net.flat());
        write_f64s(&mut buf, &s.adam.m.flat());
        write_f64s(&mut buf, &s.adam.v.flat());
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 4 + 32 || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut r = Cursor::new(body);
        r.set_position(4);
        let version = r.read_u32::<LE>()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(CheckpointError::Checksum);
        }
        let mut config_hash = [0u8; 32];
        r.read_exact(&mut config_hash)?;
        let obs_dim = r.read_u32::<LE>()? as usize;
        let act_dim = r.read_u32::<LE>()? as usize;
        let n_hidden = r.read_u32::<LE>()? as usize;
        if n_hidden == 0 || n_hidden > 64 {
            return Err(CheckpointError::Malformed("hidden layer count"));
        }
        let hidden = (0..n_hidden).map(|_| r.read_u32::<LE>().map(|h| h as usize)).collect::<Result<Vec<_>, _>>()?;
        let stage = r.read_u32::<LE>()? as usize;
        let iteration = r.read_u64::<LE>()?;
        let env_steps = r.read_u64::<LE>()?;
        let t = r.read_u64::<LE>()?;
        let mut head = [0.0; 5];
        for x in &mut head {
            *x = r.read_f64::<LE>()?;
        }
        let [beta1, beta2, eps, count, clip] = head;
        let mean = read_f64s(&mut r)?;
        let var = read_f64s(&mut r)?;
        if mean.len() != obs_dim || var.len() != obs_dim {
            return Err(CheckpointError::Malformed("observation statistics size"));
        }
        // Shape-only template; every value is overwritten below.
        let mut net = ActorCritic::new(obs_dim, act_dim, &hidden, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        let params = read_f64s(&mut r)?;
        let m = read_f64s(&mut r)?;
        let v = read_f64s(&mut r)?;
        let n = net.num_params();
        if params.len() != n || m.len() != n || v.len() != n {
            return Err(CheckpointError::Malformed("parameter count"));
        }
        if r.position() != body.len() as u64 {
            return Err(CheckpointError::Malformed("trailing bytes"));
        }
        net.set_flat(&params);
        let mut adam = Adam::new(&net, AdamConfig { beta1, beta2, eps });
        adam.m.set_flat(&m);
        adam.v.set_flat(&v);
        adam.t = t;
        let obs_norm = RunningMeanStd { mean, var, count, clip };
        Ok(Self { config_hash, state: TrainerState { net, adam, obs_norm, stage, iteration, env_steps } })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        drop(f);
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn write_f64s(buf: &mut Vec<u8>, xs: &[f64]) {
    buf.write_u64::<LE>(xs.len() as u64).unwrap();
    for &x in xs {
        buf.write_f64::<LE>(x).unwrap();
    }
}

fn read_f64s(r: &mut Cursor<&[u8]>) -> Result<Vec<f64>, CheckpointError> {
    let n = r.read_u64::<LE>()? as usize;
    let remaining = r.get_ref().len() as u64 - r.position();
    if (n as u64).saturating_mul(8) > remaining {
        return Err(CheckpointError::Malformed("array length"));
    }
    let mut out = vec![0.0; n];
    r.read_f64_into::<LE>(&mut out)?;
    Ok(out)
}
