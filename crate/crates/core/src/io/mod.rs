//! Versioned binary containers: model checkpoints and spike exports.
//! Layouts are documented in `docs/FORMATS.md`.

pub mod checkpoint;
pub mod spike_export;

use std::io::{Read, Write};

use crate::error::{CoreError, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use spike_export::{ExportUtterance, SpikeExport};

/// FNV-1a over a canonical byte string; used as the configuration hash
/// embedded in every artifact.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f32(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&(v as f32).to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f32(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f64::from(f32::from_le_bytes(b)))
}

pub(crate) fn write_f32_slice<'a>(
    w: &mut impl Write,
    values: impl Iterator<Item = &'a f64>,
) -> Result<()> {
    for &v in values {
        write_f32(w, v)?;
    }
    Ok(())
}

pub(crate) fn read_f32_vec(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(read_f32(r)?);
    }
    Ok(out)
}

/// Pack a bit per element, LSB first.
pub(crate) fn pack_bits(bits: impl Iterator<Item = bool>) -> Vec<u8> {
    let mut out = Vec::new();
    let mut current = 0u8;
    let mut filled = 0u8;
    for b in bits {
        if b {
            current |= 1 << filled;
        }
        filled += 1;
        if filled == 8 {
            out.push(current);
            current = 0;
            filled = 0;
        }
    }
    if filled > 0 {
        out.push(current);
    }
    out
}

pub(crate) fn unpack_bits(bytes: &[u8], n: usize) -> Result<Vec<u8>> {
    if bytes.len() != n.div_ceil(8) {
        return Err(CoreError::Format(format!(
            "expected {} packed bytes for {n} bits, got {}",
            n.div_ceil(8),
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push((bytes[i / 8] >> (i % 8)) & 1);
    }
    Ok(out)
}

pub(crate) fn check_magic(r: &mut impl Read, expected: &[u8; 4]) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != expected {
        return Err(CoreError::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, expected
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_packing_round_trip() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for n in [0usize, 1, 7, 8, 9, 63, 64, 100, 1001] {
            let bits: Vec<u8> = (0..n).map(|_| u8::from(rng.random_range(0.0..1.0) < 0.4)).collect();
            let packed = pack_bits(bits.iter().map(|&b| b == 1));
            let back = unpack_bits(&packed, n).unwrap();
            assert_eq!(bits, back);
        }
    }

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a_64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a_64(b"a"), 0xaf63dc4c8601ec8c);
        assert_ne!(fnv1a_64(b"config=1"), fnv1a_64(b"config=2"));
    }
}
