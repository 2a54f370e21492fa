//! Minimal 16-bit PCM RIFF/WAVE reader and writer. Stereo input is
//! averaged to mono.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::frontend::Waveform;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[allow(dead_code)]
fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

/// Read a mono or stereo 16-bit PCM WAV file.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"RIFF" {
        return Err(CoreError::Format("missing RIFF header".into()));
    }
    let _size = read_u32(&mut r)?;
    r.read_exact(&mut magic)?;
    if &magic != b"WAVE" {
        return Err(CoreError::Format("missing WAVE tag".into()));
    }

    let mut sample_rate = 0u32;
    let mut channels = 0u16;
    let mut data: Option<Vec<u8>> = None;
    loop {
        let mut id = [0u8; 4];
        match r.read_exact(&mut id) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let len = read_u32(&mut r)? as usize;
        match &id {
            b"fmt " => {
                let mut fmt = vec![0u8; len];
                r.read_exact(&mut fmt)?;
                let format = u16::from_le_bytes([fmt[0], fmt[1]]);
                channels = u16::from_le_bytes([fmt[2], fmt[3]]);
                sample_rate = u32::from_le_bytes([fmt[4], fmt[5], fmt[6], fmt[7]]);
                let bits = u16::from_le_bytes([fmt[14], fmt[15]]);
                if format != 1 || bits != 16 {
                    return Err(CoreError::Format(format!(
                        "only 16-bit PCM supported (format {format}, {bits} bits)"
                    )));
                }
            }
            b"data" => {
                let mut payload = vec![0u8; len];
                r.read_exact(&mut payload)?;
                data = Some(payload);
            }
            _ => {
                // skip unknown chunk (padded to even length)
                let skip = len + (len & 1);
                std::io::copy(&mut r.by_ref().take(skip as u64), &mut std::io::sink())?;
            }
        }
    }
    let data = data.ok_or_else(|| CoreError::Format("missing data chunk".into()))?;
    if channels == 0 || sample_rate == 0 {
        return Err(CoreError::Format("missing fmt chunk".into()));
    }
    let ch = channels as usize;
    let frames = data.len() / (2 * ch);
    let mut samples = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut acc = 0.0f64;
        for c in 0..ch {
            let off = 2 * (f * ch + c);
            let v = i16::from_le_bytes([data[off], data[off + 1]]);
            acc += v as f64 / 32768.0;
        }
        samples.push(acc / ch as f64);
    }
    Ok(Waveform {
        samples,
        sample_rate,
    })
}

/// Write a mono 16-bit PCM WAV file, clipping samples to [-1, 1].
pub fn write_wav(path: &Path, wav: &Waveform) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = wav.samples.len() as u32;
    let data_len = n * 2;
    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?; // PCM
    w.write_all(&1u16.to_le_bytes())?; // mono
    w.write_all(&wav.sample_rate.to_le_bytes())?;
    w.write_all(&(wav.sample_rate * 2).to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?;
    w.write_all(&16u16.to_le_bytes())?;
    w.write_all(b"data")?;
    w.write_all(&data_len.to_le_bytes())?;
    for &s in &wav.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_mono() {
        let dir = std::env::temp_dir().join("spikeosc_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tone.wav");
        let wav = Waveform {
            samples: (0..640)
                .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16000.0).sin())
                .collect(),
            sample_rate: 16000,
        };
        write_wav(&path, &wav).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.samples.len(), 640);
        for (a, b) in wav.samples.iter().zip(back.samples.iter()) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn stereo_is_averaged() {
        let dir = std::env::temp_dir().join("spikeosc_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("stereo.wav");
        // hand-build a 2-channel file with constant L=0.5, R=-0.5
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 40).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&(8000u32 * 4).to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&40u32.to_le_bytes());
        for _ in 0..10 {
            bytes.extend_from_slice(&(16384i16).to_le_bytes());
            bytes.extend_from_slice(&(-16384i16).to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let wav = read_wav(&path).unwrap();
        assert_eq!(wav.samples.len(), 10);
        assert!(wav.samples.iter().all(|&s| s.abs() < 1e-9));
        std::fs::remove_file(&path).ok();
    }
}
