//! Versioned binary agent checkpoints.
//!
//! Layout (all little-endian):
//!   magic "RGCP", version u32,
//!   normalize_obs u8, learning_rate f64, bounds 6xf64, updates u64,
//!   normalizer (count u64, mean 21xf64, m2 21xf64, clip f64),
//!   four networks in order actor, critic, actor_target, critic_target:
//!     hidden_act u8, output_act u8, n_sizes u32, sizes n_sizes x u32,
//!     then per layer w (fan_in*fan_out f32, row-major) and b (fan_out f32).
//!
//! Weights are stored as raw f32 bits, so a load reproduces the saved
//! forward pass bit-exactly. Optimizer moments are deliberately not
//! stored.

use super::buffer::{ACTION_DIM, STATE_DIM};
use super::ddpg::Agent;
use super::mlp::{Activation, Dense, Mlp};
use super::normalizer::ObsNormalizer;
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: [u8; 4] = *b"RGCP";
const VERSION: u32 = 1;

fn act_to_byte(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
        Activation::Identity => 2,
    }
}

fn act_from_byte(b: u8) -> Result<Activation> {
    match b {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Tanh),
        2 => Ok(Activation::Identity),
        other => Err(Error::Checkpoint(format!("unknown activation code {other}"))),
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f32(w: &mut impl Write, v: f32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("file is truncated".into()))?;
    Ok(buf)
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    Ok(read_exact::<1>(r)?[0])
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    Ok(f32::from_le_bytes(read_exact::<4>(r)?))
}

fn write_net(w: &mut impl Write, net: &Mlp<f32>) -> Result<()> {
    let (hidden, output) = net.activations();
    w.write_all(&[act_to_byte(hidden), act_to_byte(output)])?;
    let sizes = net.layer_sizes();
    write_u32(w, sizes.len() as u32)?;
    for &s in &sizes {
        write_u32(w, s as u32)?;
    }
    for layer in net.layers() {
        for &v in layer.w.iter() {
            write_f32(w, v)?;
        }
        for &v in layer.b.iter() {
            write_f32(w, v)?;
        }
    }
    Ok(())
}

fn read_net(r: &mut impl Read) -> Result<Mlp<f32>> {
    let hidden = act_from_byte(read_u8(r)?)?;
    let output = act_from_byte(read_u8(r)?)?;
    let n_sizes = read_u32(r)? as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(Error::Checkpoint(format!("implausible layer count {n_sizes}")));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        let s = read_u32(r)? as usize;
        if s == 0 || s > 1 << 20 {
            return Err(Error::Checkpoint(format!("implausible layer size {s}")));
        }
        sizes.push(s);
    }
    let mut layers = Vec::with_capacity(n_sizes - 1);
    for pair in sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let mut wv = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in * fan_out {
            wv.push(read_f32(r)?);
        }
        let w = Array2::from_shape_vec((fan_in, fan_out), wv)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut bv = Vec::with_capacity(fan_out);
        for _ in 0..fan_out {
            bv.push(read_f32(r)?);
        }
        layers.push(Dense { w, b: Array1::from_vec(bv) });
    }
    Ok(Mlp::from_layers(layers, hidden, output))
}

pub fn save_checkpoint(path: &Path, agent: &Agent) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    write_u32(&mut w, VERSION)?;
    w.write_all(&[u8::from(agent.normalizes_obs())])?;
    write_f64(&mut w, agent.learning_rate())?;
    for &b in &agent.bounds {
        write_f64(&mut w, b)?;
    }
    write_u64(&mut w, agent.updates)?;
    let (count, mean, m2, clip) = agent.normalizer.raw_parts();
    write_u64(&mut w, count)?;
    for v in mean.iter().chain(m2.iter()) {
        write_f64(&mut w, *v)?;
    }
    write_f64(&mut w, clip)?;
    for net in [&agent.actor, &agent.critic, &agent.actor_target, &agent.critic_target] {
        write_net(&mut w, net)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Agent> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact::<4>(&mut r)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic (not an agent checkpoint)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let normalize_obs = read_u8(&mut r)? != 0;
    let lr = read_f64(&mut r)?;
    let mut bounds = [0.0; ACTION_DIM];
    for b in &mut bounds {
        *b = read_f64(&mut r)?;
    }
    let updates = read_u64(&mut r)?;
    let count = read_u64(&mut r)?;
    let mut mean = [0.0; STATE_DIM];
    for v in &mut mean {
        *v = read_f64(&mut r)?;
    }
    let mut m2 = [0.0; STATE_DIM];
    for v in &mut m2 {
        *v = read_f64(&mut r)?;
    }
    let clip = read_f64(&mut r)?;
    let normalizer = ObsNormalizer::from_raw_parts(count, mean, m2, clip);
    let actor = read_net(&mut r)?;
    let critic = read_net(&mut r)?;
    let actor_target = read_net(&mut r)?;
    let critic_target = read_net(&mut r)?;
    if actor.layer_sizes().first() != Some(&STATE_DIM)
        || actor.layer_sizes().last() != Some(&ACTION_DIM)
        || critic.layer_sizes().first() != Some(&(STATE_DIM + ACTION_DIM))
        || critic.layer_sizes().last() != Some(&1)
    {
        return Err(Error::Checkpoint("network shapes do not match the agent interface".into()));
    }
    Ok(Agent::from_parts(
        actor,
        critic,
        actor_target,
        critic_target,
        normalizer,
        bounds,
        updates,
        normalize_obs,
        lr,
    ))
}
