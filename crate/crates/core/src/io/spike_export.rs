//! Spike-export container (`SPKX`, version 1): bit-packed per-layer
//! rasters for a set of utterances, with the producing configuration
//! hash in the header.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::io::*;
use crate::topology::SpikeTensor;

const MAGIC: &[u8; 4] = b"SPKX";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExportUtterance {
    pub id: u32,
    /// One raster per layer, nerve first; identical step counts.
    pub layers: Vec<SpikeTensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeExport {
    pub config_hash: u64,
    pub dt_ms: f64,
    pub layer_sizes: Vec<usize>,
    pub utterances: Vec<ExportUtterance>,
}

impl SpikeExport {
    pub fn save(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u32(w, VERSION)?;
        write_u64(w, self.config_hash)?;
        write_f32(w, self.dt_ms)?;
        write_u32(w, self.layer_sizes.len() as u32)?;
        for &n in &self.layer_sizes {
            write_u32(w, n as u32)?;
        }
        write_u32(w, self.utterances.len() as u32)?;
        for utt in &self.utterances {
            write_u32(w, utt.id)?;
            let t_len = utt.layers.first().map_or(0, |l| l.n_steps());
            write_u32(w, t_len as u32)?;
            for (layer, &n) in utt.layers.iter().zip(&self.layer_sizes) {
                if layer.n_neurons() != n || layer.n_steps() != t_len {
                    return Err(CoreError::ShapeMismatch(format!(
                        "utterance {}: raster {}x{} does not match header",
                        utt.id,
                        layer.n_steps(),
                        layer.n_neurons()
                    )));
                }
                w.write_all(&pack_bits(layer.values.iter().map(|&s| s == 1)))?;
            }
        }
        Ok(())
    }

    pub fn load(r: &mut impl Read) -> Result<Self> {
        check_magic(r, MAGIC)?;
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(CoreError::Format(format!(
                "unsupported spike export version {version}"
            )));
        }
        let config_hash = read_u64(r)?;
        let dt_ms = read_f32(r)?;
        let n_layers = read_u32(r)? as usize;
        let mut layer_sizes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            layer_sizes.push(read_u32(r)? as usize);
        }
        let n_utts = read_u32(r)? as usize;
        let mut utterances = Vec::with_capacity(n_utts);
        for _ in 0..n_utts {
            let id = read_u32(r)?;
            let t_len = read_u32(r)? as usize;
            let mut layers = Vec::with_capacity(n_layers);
            for &n in &layer_sizes {
                let mut bytes = vec![0u8; (t_len * n).div_ceil(8)];
                r.read_exact(&mut bytes)?;
                let bits = unpack_bits(&bytes, t_len * n)?;
                layers.push(SpikeTensor {
                    values: Array2::from_shape_vec((t_len, n), bits)
                        .map_err(|e| CoreError::Format(e.to_string()))?,
                    dt_ms,
                });
            }
            utterances.push(ExportUtterance { id, layers });
        }
        Ok(Self {
            config_hash,
            dt_ms,
            layer_sizes,
            utterances,
        })
    }

    /// Total spikes across all utterances and layers.
    pub fn total_spikes(&self) -> u64 {
        self.utterances
            .iter()
            .flat_map(|u| u.layers.iter())
            .map(|l| l.values.iter().map(|&s| u64::from(s)).sum::<u64>())
            .sum()
    }
}
