//! Model checkpoint container (`SPKC`, version 1).
//!
//! Weights and neuron parameters are stored as little-endian 32-bit
//! floats, masks bit-packed; saving a freshly loaded checkpoint
//! reproduces the file byte for byte.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, Array3};

use crate::error::{CoreError, Result};
use crate::frontend::AuditoryCnn;
use crate::io::*;
use crate::topology::{DaleSigns, NerveLayer, NetworkTopology, SnnLayer};
use crate::training::readout::{Dense, PoolMode, Readout, ReadoutConfig};
use crate::training::Model;

const MAGIC: &[u8; 4] = b"SPKC";
const VERSION: u32 = 1;

pub fn save_checkpoint(w: &mut impl Write, model: &Model, config_hash: u64) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u64(w, config_hash)?;
    write_f32(w, model.topology.dt_ms)?;
    w.write_all(&[u8::from(model.detach_reset)])?;

    match &model.cnn {
        Some(cnn) => {
            w.write_all(&[1u8])?;
            let (channels, _, _) = cnn.kernels.dim();
            let n_mels = cnn.n_bands() + 6;
            write_u32(w, channels as u32)?;
            write_u32(w, n_mels as u32)?;
            w.write_all(&[u8::from(cnn.norm_enabled)])?;
            write_f32(w, cnn.dropout)?;
            write_f32_slice(w, cnn.kernels.iter())?;
            write_f32_slice(w, cnn.bias.iter())?;
            write_f32_slice(w, cnn.ln_gain.iter())?;
            write_f32_slice(w, cnn.ln_bias.iter())?;
        }
        None => w.write_all(&[0u8])?,
    }

    let topo = &model.topology;
    write_u32(w, topo.n_fibers() as u32)?;
    write_f32_slice(w, topo.nerve.tau_u.iter())?;
    write_u32(w, topo.layers.len() as u32)?;
    for layer in &topo.layers {
        let (n_pre, n) = layer.w.dim();
        write_u32(w, n_pre as u32)?;
        write_u32(w, n as u32)?;
        w.write_all(&pack_bits(layer.mask_w.iter().map(|&m| m == 1)))?;
        w.write_all(&pack_bits(layer.mask_v.iter().map(|&m| m == 1)))?;
        write_f32_slice(w, layer.w.iter())?;
        write_f32_slice(w, layer.v.iter())?;
        write_f32_slice(w, layer.tau_u.iter())?;
        write_f32_slice(w, layer.tau_w.iter())?;
        write_f32_slice(w, layer.a.iter())?;
        write_f32_slice(w, layer.b.iter())?;
        w.write_all(&pack_bits(layer.sfa_mask.iter().map(|&m| m == 1.0)))?;
    }
    match &topo.dale {
        Some(dale) => {
            w.write_all(&[1u8])?;
            for signs in &dale.signs {
                for &s in signs {
                    w.write_all(&[s as u8])?;
                }
            }
        }
        None => w.write_all(&[0u8])?,
    }

    let r = &model.readout;
    match r.config.pool {
        PoolMode::Global => {
            w.write_all(&[0u8])?;
            write_u32(w, 0)?;
        }
        PoolMode::Fixed(p) => {
            w.write_all(&[1u8])?;
            write_u32(w, p as u32)?;
        }
    }
    write_u32(w, r.fc1.w.nrows() as u32)?;
    write_u32(w, r.config.n_phoneme_features as u32)?;
    write_u32(w, r.config.n_outputs as u32)?;
    for fc in [&r.fc1, &r.fc2, &r.fc3] {
        write_f32_slice(w, fc.w.iter())?;
        write_f32_slice(w, fc.b.iter())?;
    }
    Ok(())
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_array1(r: &mut impl Read, n: usize) -> Result<Array1<f64>> {
    Ok(Array1::from_vec(read_f32_vec(r, n)?))
}

fn read_array2(r: &mut impl Read, rows: usize, cols: usize) -> Result<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), read_f32_vec(r, rows * cols)?)
        .map_err(|e| CoreError::Format(e.to_string()))
}

fn read_packed(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut bytes = vec![0u8; n.div_ceil(8)];
    r.read_exact(&mut bytes)?;
    unpack_bits(&bytes, n)
}

pub fn load_checkpoint(r: &mut impl Read) -> Result<(Model, u64)> {
    check_magic(r, MAGIC)?;
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(CoreError::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let config_hash = read_u64(r)?;
    let dt_ms = read_f32(r)?;
    let detach_reset = read_u8(r)? != 0;

    let cnn = if read_u8(r)? == 1 {
        let channels = read_u32(r)? as usize;
        let n_mels = read_u32(r)? as usize;
        let norm_enabled = read_u8(r)? != 0;
        let dropout = read_f32(r)?;
        let n_features = channels * (n_mels - 6);
        let kernels = Array3::from_shape_vec((channels, 7, 7), read_f32_vec(r, channels * 49)?)
            .map_err(|e| CoreError::Format(e.to_string()))?;
        Some(AuditoryCnn {
            kernels,
            bias: read_array1(r, channels)?,
            ln_gain: read_array1(r, n_features)?,
            ln_bias: read_array1(r, n_features)?,
            norm_enabled,
            dropout,
        })
    } else {
        None
    };

    let n_fibers = read_u32(r)? as usize;
    let nerve = NerveLayer {
        tau_u: read_array1(r, n_fibers)?,
    };
    let n_layers = read_u32(r)? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let n_pre = read_u32(r)? as usize;
        let n = read_u32(r)? as usize;
        let mask_w = Array2::from_shape_vec((n_pre, n), read_packed(r, n_pre * n)?)
            .map_err(|e| CoreError::Format(e.to_string()))?;
        let mask_v = Array2::from_shape_vec((n, n), read_packed(r, n * n)?)
            .map_err(|e| CoreError::Format(e.to_string()))?;
        layers.push(SnnLayer {
            w: read_array2(r, n_pre, n)?,
            v: read_array2(r, n, n)?,
            mask_w,
            mask_v,
            tau_u: read_array1(r, n)?,
            tau_w: read_array1(r, n)?,
            a: read_array1(r, n)?,
            b: read_array1(r, n)?,
            sfa_mask: {
                let bits = read_packed(r, n)?;
                Array1::from_iter(bits.into_iter().map(f64::from))
            },
        });
    }
    let dale = if read_u8(r)? == 1 {
        let mut signs = Vec::with_capacity(n_layers + 1);
        let mut sizes = vec![n_fibers];
        sizes.extend(layers.iter().map(|l| l.n_neurons()));
        for size in sizes {
            let mut buf = vec![0u8; size];
            r.read_exact(&mut buf)?;
            signs.push(buf.into_iter().map(|b| b as i8).collect());
        }
        Some(DaleSigns { signs })
    } else {
        None
    };

    let pool = match read_u8(r)? {
        0 => {
            let _ = read_u32(r)?;
            PoolMode::Global
        }
        1 => PoolMode::Fixed(read_u32(r)? as usize),
        other => {
            return Err(CoreError::Format(format!("unknown pool mode {other}")));
        }
    };
    let n_in = read_u32(r)? as usize;
    let n_hidden = read_u32(r)? as usize;
    let n_out = read_u32(r)? as usize;
    let mut read_dense = |rows: usize, cols: usize| -> Result<Dense> {
        Ok(Dense {
            w: read_array2(r, rows, cols)?,
            b: read_array1(r, cols)?,
        })
    };
    let fc1 = read_dense(n_in, n_hidden)?;
    let fc2 = read_dense(n_hidden, n_hidden)?;
    let fc3 = read_dense(n_hidden, n_out)?;

    let model = Model {
        cnn,
        topology: NetworkTopology {
            dt_ms,
            nerve,
            layers,
            dale,
        },
        readout: Readout {
            config: ReadoutConfig {
                pool,
                n_phoneme_features: n_hidden,
                n_outputs: n_out,
            },
            fc1,
            fc2,
            fc3,
        },
        detach_reset,
    };
    Ok((model, config_hash))
}
