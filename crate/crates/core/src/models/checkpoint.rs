//! Checkpoint files: magic, format version, model kind, architecture,
//! block layout, little-endian `f64` values and a SHA-256 trailer.

use std::path::Path;

use super::params::{BlockSpec, ParamSet};
use super::policy::{PolicyArch, PolicyParams};
use super::recon::{ReconArch, ReconParams};
use crate::binio::{atomic_write, Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KSRLCKPT";
const VERSION: u32 = 1;
const KIND_POLICY: u8 = 1;
const KIND_RECON: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Policy(PolicyParams),
    Recon(ReconParams),
}

impl From<PolicyParams> for Checkpoint {
    fn from(p: PolicyParams) -> Self {
        Checkpoint::Policy(p)
    }
}

impl From<ReconParams> for Checkpoint {
    fn from(r: ReconParams) -> Self {
        Checkpoint::Recon(r)
    }
}

impl Checkpoint {
    pub fn into_policy(self) -> Result<PolicyParams> {
        match self {
            Checkpoint::Policy(p) => Ok(p),
            Checkpoint::Recon(_) => Err(Error::Load("expected a policy checkpoint".into())),
        }
    }

    pub fn into_recon(self) -> Result<ReconParams> {
        match self {
            Checkpoint::Recon(r) => Ok(r),
            Checkpoint::Policy(_) => Err(Error::Load("expected a reconstructor checkpoint".into())),
        }
    }

    fn params(&self) -> &ParamSet {
        match self {
            Checkpoint::Policy(p) => &p.params,
            Checkpoint::Recon(r) => &r.params,
        }
    }
}

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    let arch: Vec<u64> = match ckpt {
        Checkpoint::Policy(p) => {
            w.u8(KIND_POLICY);
            let a = p.arch;
            vec![a.n as u64, a.channels as u64, a.kernel as u64, a.hidden as u64]
        }
        Checkpoint::Recon(r) => {
            w.u8(KIND_RECON);
            let a = r.arch;
            vec![a.n as u64, a.channels as u64, a.kernel as u64]
        }
    };
    w.u32(arch.len() as u32);
    arch.iter().for_each(|&v| w.u64(v));
    let params = ckpt.params();
    w.u32(params.specs().len() as u32);
    for s in params.specs() {
        w.str(&s.name);
        w.u32(s.shape.len() as u32);
        s.shape.iter().for_each(|&d| w.u64(d as u64));
    }
    w.u64(params.len() as u64);
    params.values().iter().for_each(|&v| w.f64(v));
    w.finish()
}

pub fn checkpoint_from_bytes(data: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::checked(data)?;
    if r.take(8)? != MAGIC {
        return Err(Error::Load("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Load(format!("unsupported checkpoint version {version}")));
    }
    let kind = r.u8()?;
    let arch_len = r.u32()? as usize;
    if arch_len > 16 {
        return Err(Error::Load("bad architecture descriptor".into()));
    }
    let arch: Vec<usize> = (0..arch_len).map(|_| r.usize()).collect::<Result<_>>()?;
    let nblocks = r.u32()? as usize;
    if nblocks > 64 {
        return Err(Error::Load("bad block count".into()));
    }
    let mut specs = Vec::with_capacity(nblocks);
    for _ in 0..nblocks {
        let name = r.str()?;
        let ndim = r.u32()? as usize;
        if ndim > 8 {
            return Err(Error::Load("bad block rank".into()));
        }
        let shape: Vec<usize> = (0..ndim).map(|_| r.usize()).collect::<Result<_>>()?;
        specs.push(BlockSpec { name, shape });
    }
    let count = r.usize()?;
    let raw = r.take(
        count
            .checked_mul(8)
            .ok_or_else(|| Error::Load("bad value count".into()))?,
    )?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    r.done()?;
    let params = ParamSet::from_values(specs, values).map_err(|e| Error::Load(e.to_string()))?;
    let bad = |e: Error| Error::Load(e.to_string());
    match (kind, arch.as_slice()) {
        (KIND_POLICY, &[n, channels, kernel, hidden]) => Ok(Checkpoint::Policy(
            PolicyParams::from_params(PolicyArch::new(n, channels, kernel, hidden), params).map_err(bad)?,
        )),
        (KIND_RECON, &[n, channels, kernel]) => Ok(Checkpoint::Recon(
            ReconParams::from_params(ReconArch::new(n, channels, kernel), params).map_err(bad)?,
        )),
        _ => Err(Error::Load("unknown model kind or architecture".into())),
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    atomic_write(path, &checkpoint_bytes(ckpt))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
