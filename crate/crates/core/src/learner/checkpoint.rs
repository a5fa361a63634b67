//! Binary checkpoint: header, little-endian f32 parameters, f64 observation
//! statistics, and an optional trainer-state tail for resuming.

use std::io::{self, Read, Write};

use super::nn::Mlp;
use super::normalize::ObsNormalizer;
use super::policy::Policy;

const MAGIC: &[u8; 8] = b"DXDRCKPT";
const VERSION: u32 = 1;

/// Progress needed to pick a run back up.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub iteration: u64,
    pub env_steps: u64,
    pub adam_t: u64,
    pub adam_m: Vec<Vec<f64>>,
    pub adam_v: Vec<Vec<f64>>,
}

fn put_u32<W: Write>(w: &mut W, x: u32) -> io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn put_u64<W: Write>(w: &mut W, x: u64) -> io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn put_f64s<W: Write>(w: &mut W, xs: &[f64]) -> io::Result<()> {
    put_u64(w, xs.len() as u64)?;
    xs.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))
}

fn get_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    Ok(f64::from_bits(get_u64(r)?))
}

fn get_f64s<R: Read>(r: &mut R) -> io::Result<Vec<f64>> {
    let n = get_u64(r)? as usize;
    if n > 1 << 28 {
        return Err(bad("vector length out of range"));
    }
    (0..n).map(|_| get_f64(r)).collect()
}

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

fn put_sizes<W: Write>(w: &mut W, sizes: &[usize]) -> io::Result<()> {
    put_u32(w, sizes.len() as u32)?;
    sizes.iter().try_for_each(|&s| put_u32(w, s as u32))
}

fn get_sizes<R: Read>(r: &mut R) -> io::Result<Vec<usize>> {
    let n = get_u32(r)? as usize;
    if !(2..=16).contains(&n) {
        return Err(bad("bad layer count"));
    }
    (0..n).map(|_| get_u32(r).map(|s| s as usize)).collect()
}

fn put_params<W: Write>(w: &mut W, ps: &[f32]) -> io::Result<()> {
    ps.iter().try_for_each(|p| w.write_all(&p.to_le_bytes()))
}

fn get_params<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn write_checkpoint<W: Write>(w: &mut W, policy: &Policy<f32>, trainer: Option<&TrainerState>) -> io::Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    put_sizes(w, &policy.pi.sizes)?;
    put_sizes(w, &policy.v.sizes)?;
    put_params(w, &policy.pi.params)?;
    put_params(w, &policy.log_std)?;
    put_params(w, &policy.v.params)?;
    let n = &policy.norm;
    w.write_all(&n.count.to_le_bytes())?;
    w.write_all(&n.clip.to_le_bytes())?;
    put_f64s(w, &n.mean)?;
    put_f64s(w, &n.m2)?;
    match trainer {
        None => w.write_all(&[0]),
        Some(t) => {
            w.write_all(&[1])?;
            put_u64(w, t.iteration)?;
            put_u64(w, t.env_steps)?;
            put_u64(w, t.adam_t)?;
            put_u32(w, t.adam_m.len() as u32)?;
            for (m, v) in t.adam_m.iter().zip(&t.adam_v) {
                put_f64s(w, m)?;
                put_f64s(w, v)?;
            }
            Ok(())
        }
    }
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> io::Result<(Policy<f32>, Option<TrainerState>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let pi_sizes = get_sizes(r)?;
    let v_sizes = get_sizes(r)?;
    if pi_sizes[0] != v_sizes[0] || *v_sizes.last().unwrap() != 1 {
        return Err(bad("inconsistent network shapes"));
    }
    let act_dim = *pi_sizes.last().unwrap();
    let pi = Mlp {
        params: get_params(r, super::nn::n_params(&pi_sizes))?,
        sizes: pi_sizes,
    };
    let log_std = get_params(r, act_dim)?;
    let v = Mlp {
        params: get_params(r, super::nn::n_params(&v_sizes))?,
        sizes: v_sizes,
    };
    let count = get_f64(r)?;
    let clip = get_f64(r)?;
    let mean = get_f64s(r)?;
    let m2 = get_f64s(r)?;
    if mean.len() != pi.sizes[0] || m2.len() != mean.len() {
        return Err(bad("normalizer size does not match the network"));
    }
    let policy = Policy {
        pi,
        log_std,
        v,
        norm: ObsNormalizer { count, mean, m2, clip },
    };
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let trainer = match flag[0] {
        0 => None,
        1 => {
            let iteration = get_u64(r)?;
            let env_steps = get_u64(r)?;
            let adam_t = get_u64(r)?;
            let groups = get_u32(r)? as usize;
            let mut adam_m = Vec::new();
            let mut adam_v = Vec::new();
            for _ in 0..groups.min(8) {
                adam_m.push(get_f64s(r)?);
                adam_v.push(get_f64s(r)?);
            }
            Some(TrainerState {
                iteration,
                env_steps,
                adam_t,
                adam_m,
                adam_v,
            })
        }
        _ => return Err(bad("bad trainer-state flag")),
    };
    Ok((policy, trainer))
}
