//! Acoustic frontend: WAV ingestion, Mel filterbank features and the
//! single-layer convolutional stage that produces auditory-nerve stimuli.

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{CoreError, Result};

pub mod wav;

/// Raw audio.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Log-Mel features, time by filter.
#[derive(Debug, Clone)]
pub struct MelFeatures {
    pub values: Array2<f64>,
    /// Frames per second (1000 / hop_ms).
    pub frame_rate: f64,
}

impl MelFeatures {
    /// Debug dump, one frame per row.
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> Result<()> {
        let cols: Vec<String> = (0..self.values.ncols()).map(|m| format!("mel{m}")).collect();
        writeln!(w, "frame,{}", cols.join(","))?;
        for (t, row) in self.values.rows().into_iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{t},{}", vals.join(","))?;
        }
        Ok(())
    }
}

/// Real-valued stimuli for the auditory nerve fibers, time by fiber.
#[derive(Debug, Clone)]
pub struct NerveStimulus {
    pub values: Array2<f64>,
}

impl NerveStimulus {
    pub fn n_fibers(&self) -> usize {
        self.values.ncols()
    }
}

/// Log offset applied after the filterbank.
pub const LOG_EPS: f64 = 1e-10;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular Mel filterbank from 0 Hz to Nyquist, peak gain 1.
///
/// Returns `(filters, centers_hz)` with `filters` of shape
/// `n_mels x (n_fft/2 + 1)`.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64) -> (Array2<f64>, Vec<f64>) {
    let n_bins = n_fft / 2 + 1;
    let nyquist = sample_rate / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let points_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut filters = Array2::<f64>::zeros((n_mels, n_bins));
    let bin_hz = sample_rate / n_fft as f64;
    for m in 0..n_mels {
        let (lo, center, hi) = (points_hz[m], points_hz[m + 1], points_hz[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f >= lo && f <= center && center > lo {
                (f - lo) / (center - lo)
            } else if f > center && f <= hi && hi > center {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            filters[(m, k)] = w;
        }
    }
    let centers = points_hz[1..=n_mels].to_vec();
    (filters, centers)
}

fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| {
            0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        })
        .collect()
}

/// Magnitude STFT with a Hann window; frames start at sample 0 and no
/// padding is applied, so the frame count is `(len - win) / hop + 1`.
pub fn magnitude_stft(samples: &[f64], win: usize, hop: usize, n_fft: usize) -> Array2<f64> {
    let n_frames = if samples.len() >= win {
        (samples.len() - win) / hop + 1
    } else {
        0
    };
    let n_bins = n_fft / 2 + 1;
    let window = hann_window(win);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut out = Array2::<f64>::zeros((n_frames, n_bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for frame in 0..n_frames {
        let start = frame * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < win {
                Complex64::new(samples[start + i] * window[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            out[(frame, k)] = buf[k].norm();
        }
    }
    out
}

/// Log-Mel features with an `n_mels`-filter bank, 25 ms Hann window and
/// the given hop.
pub fn mel_features(wav: &Waveform, n_mels: usize, win_ms: f64, hop_ms: f64) -> Result<MelFeatures> {
    let sr = wav.sample_rate as f64;
    let win = (win_ms * sr / 1000.0).round() as usize;
    let hop = (hop_ms * sr / 1000.0).round() as usize;
    if wav.samples.len() < win {
        return Err(CoreError::UtteranceTooShort {
            samples: wav.samples.len(),
            window: win,
        });
    }
    let n_fft = win.next_power_of_two();
    let spec = magnitude_stft(&wav.samples, win, hop, n_fft);
    let (filters, _) = mel_filterbank(n_mels, n_fft, sr);
    let mel = spec.dot(&filters.t());
    Ok(MelFeatures {
        values: mel.mapv(|x| (x + LOG_EPS).ln()),
        frame_rate: 1000.0 / hop_ms,
    })
}

/// Trainable single-layer 2-D convolution over (time, Mel band) with
/// per-frame layer normalization, channel dropout and a leaky rectifier.
///
/// Kernel size is 7x7 with stride 1; time padding of 7 on both sides
/// followed by a symmetric crop of 4 frames keeps the number of time
/// steps unchanged, and the absence of frequency padding maps `n_mels`
/// bands to `n_mels - 6` outputs per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditoryCnn {
    pub kernels: Array3<f64>,
    pub bias: Array1<f64>,
    pub ln_gain: Array1<f64>,
    pub ln_bias: Array1<f64>,
    pub norm_enabled: bool,
    pub dropout: f64,
}

pub const CNN_KERNEL: usize = 7;
const LN_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.01;

/// Cached intermediate values of one forward pass, for backpropagation.
#[derive(Debug, Clone)]
pub struct CnnCache {
    pub mel: Array2<f64>,
    /// Convolution output after cropping, time by feature.
    pub conv: Array2<f64>,
    pub ln_mean: Array1<f64>,
    pub ln_inv_std: Array1<f64>,
    pub ln_norm: Array2<f64>,
    /// Per-channel dropout scale (0 or 1/(1-p)).
    pub drop_scale: Vec<f64>,
    /// Pre-activation after dropout.
    pub pre_act: Array2<f64>,
}

impl AuditoryCnn {
    pub fn init(channels: usize, n_mels: usize, dropout: f64, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = 1.0 / ((CNN_KERNEL * CNN_KERNEL) as f64).sqrt();
        let n_features = channels * (n_mels - CNN_KERNEL + 1);
        Self {
            kernels: Array3::from_shape_fn((channels, CNN_KERNEL, CNN_KERNEL), |_| {
                rng.random_range(-k..k)
            }),
            bias: Array1::zeros(channels),
            ln_gain: Array1::ones(n_features),
            ln_bias: Array1::zeros(n_features),
            norm_enabled: true,
            dropout,
        }
    }

    pub fn channels(&self) -> usize {
        self.kernels.dim().0
    }

    pub fn n_features(&self) -> usize {
        self.ln_gain.len()
    }

    pub fn n_bands(&self) -> usize {
        self.n_features() / self.channels()
    }

    /// Forward pass. `rng` enables channel dropout (training mode); pass
    /// `None` for inference.
    pub fn forward(
        &self,
        mel: &MelFeatures,
        mut rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> Result<(NerveStimulus, CnnCache)> {
        let t_len = mel.values.nrows();
        let n_mels = mel.values.ncols();
        if t_len == 0 {
            return Err(CoreError::ShapeMismatch("empty feature matrix".into()));
        }
        let n_bands = n_mels.checked_sub(CNN_KERNEL - 1).ok_or_else(|| {
            CoreError::ShapeMismatch(format!("{n_mels} Mel bands < kernel width {CNN_KERNEL}"))
        })?;
        let channels = self.channels();
        if self.n_features() != channels * n_bands {
            return Err(CoreError::ShapeMismatch(format!(
                "layer norm sized for {} features, input gives {}",
                self.n_features(),
                channels * n_bands
            )));
        }

        // centered 7-frame window in time: padding 7 cropped by 4 per side
        let mut conv = Array2::<f64>::zeros((t_len, channels * n_bands));
        for c in 0..channels {
            for t in 0..t_len {
                let base = c * n_bands;
                let out_row = conv.row_mut(t);
                let out = &mut out_row.into_slice().expect("contiguous row")[base..base + n_bands];
                out.fill(self.bias[c]);
                for i in 0..CNN_KERNEL {
                    let ti = t as isize + i as isize - 3;
                    if ti < 0 || ti >= t_len as isize {
                        continue;
                    }
                    let mel_row = mel.values.row(ti as usize);
                    let mel_row = mel_row.to_slice().expect("contiguous row");
                    for j in 0..CNN_KERNEL {
                        let k = self.kernels[(c, i, j)];
                        let src = &mel_row[j..j + n_bands];
                        for (o, &m) in out.iter_mut().zip(src) {
                            *o += k * m;
                        }
                    }
                }
            }
        }

        let n_features = channels * n_bands;
        let mut ln_mean = Array1::<f64>::zeros(t_len);
        let mut ln_inv_std = Array1::<f64>::zeros(t_len);
        let mut ln_norm = Array2::<f64>::zeros((t_len, n_features));
        let mut post_ln = Array2::<f64>::zeros((t_len, n_features));
        if self.norm_enabled {
            for t in 0..t_len {
                let row = conv.row(t);
                let mean = row.sum() / n_features as f64;
                let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                    / n_features as f64;
                let inv_std = 1.0 / (var + LN_EPS).sqrt();
                ln_mean[t] = mean;
                ln_inv_std[t] = inv_std;
                for k in 0..n_features {
                    let norm = (conv[(t, k)] - mean) * inv_std;
                    ln_norm[(t, k)] = norm;
                    post_ln[(t, k)] = self.ln_gain[k] * norm + self.ln_bias[k];
                }
            }
        } else {
            post_ln.assign(&conv);
        }

        let drop_scale: Vec<f64> = match rng.as_deref_mut() {
            Some(r) if self.dropout > 0.0 => (0..channels)
                .map(|_| {
                    if r.random_range(0.0..1.0) < self.dropout {
                        0.0
                    } else {
                        1.0 / (1.0 - self.dropout)
                    }
                })
                .collect(),
            _ => vec![1.0; channels],
        };
        let mut pre_act = post_ln;
        for c in 0..channels {
            if drop_scale[c] != 1.0 {
                for f0 in 0..n_bands {
                    for t in 0..t_len {
                        pre_act[(t, c * n_bands + f0)] *= drop_scale[c];
                    }
                }
            }
        }

        let out = pre_act.mapv(|x| if x >= 0.0 { x } else { LEAKY_SLOPE * x });
        Ok((
            NerveStimulus { values: out },
            CnnCache {
                mel: mel.values.clone(),
                conv,
                ln_mean,
                ln_inv_std,
                ln_norm,
                drop_scale,
                pre_act,
            },
        ))
    }

    /// Backward pass; returns gradients for kernels, bias and the layer
    /// norm parameters.
    pub fn backward(&self, cache: &CnnCache, d_out: &Array2<f64>) -> CnnGradients {
        let (t_len, n_features) = cache.pre_act.dim();
        let channels = self.channels();
        let n_bands = n_features / channels;

        let mut d_pre = Array2::<f64>::zeros((t_len, n_features));
        for ((t, k), &g) in d_out.indexed_iter() {
            let slope = if cache.pre_act[(t, k)] >= 0.0 {
                1.0
            } else {
                LEAKY_SLOPE
            };
            d_pre[(t, k)] = g * slope;
        }
        // undo dropout scaling
        for c in 0..channels {
            let s = cache.drop_scale[c];
            if s != 1.0 {
                for f0 in 0..n_bands {
                    for t in 0..t_len {
                        d_pre[(t, c * n_bands + f0)] *= s;
                    }
                }
            }
        }

        let mut d_gain = Array1::<f64>::zeros(n_features);
        let mut d_bias_ln = Array1::<f64>::zeros(n_features);
        let mut d_conv = Array2::<f64>::zeros((t_len, n_features));
        if self.norm_enabled {
            for t in 0..t_len {
                let inv_std = cache.ln_inv_std[t];
                let mut sum_dxhat = 0.0;
                let mut sum_dxhat_xhat = 0.0;
                for k in 0..n_features {
                    let g = d_pre[(t, k)];
                    d_gain[k] += g * cache.ln_norm[(t, k)];
                    d_bias_ln[k] += g;
                    let dxhat = g * self.ln_gain[k];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * cache.ln_norm[(t, k)];
                }
                let nf = n_features as f64;
                for k in 0..n_features {
                    let dxhat = d_pre[(t, k)] * self.ln_gain[k];
                    d_conv[(t, k)] = inv_std
                        * (dxhat - sum_dxhat / nf - cache.ln_norm[(t, k)] * sum_dxhat_xhat / nf);
                }
            }
        } else {
            d_conv.assign(&d_pre);
        }

        let t_total = t_len as isize;
        let mut d_kernels = Array3::<f64>::zeros((channels, CNN_KERNEL, CNN_KERNEL));
        let mut d_bias = Array1::<f64>::zeros(channels);
        for c in 0..channels {
            let base = c * n_bands;
            for t in 0..t_len {
                let g_row = d_conv.row(t);
                let g_row = &g_row.to_slice().expect("contiguous row")[base..base + n_bands];
                d_bias[c] += g_row.iter().sum::<f64>();
                for i in 0..CNN_KERNEL {
                    let ti = t as isize + i as isize - 3;
                    if ti < 0 || ti >= t_total {
                        continue;
                    }
                    let mel_row = cache.mel.row(ti as usize);
                    let mel_row = mel_row.to_slice().expect("contiguous row");
                    for j in 0..CNN_KERNEL {
                        let src = &mel_row[j..j + n_bands];
                        let mut acc = 0.0;
                        for (&g, &m) in g_row.iter().zip(src) {
                            acc += g * m;
                        }
                        d_kernels[(c, i, j)] += acc;
                    }
                }
            }
        }
        CnnGradients {
            kernels: d_kernels,
            bias: d_bias,
            ln_gain: d_gain,
            ln_bias: d_bias_ln,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CnnGradients {
    pub kernels: Array3<f64>,
    pub bias: Array1<f64>,
    pub ln_gain: Array1<f64>,
    pub ln_bias: Array1<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tone(freq: f64, sr: u32, seconds: f64) -> Waveform {
        let n = (seconds * sr as f64) as usize;
        Waveform {
            samples: (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
                .collect(),
            sample_rate: sr,
        }
    }

    #[test]
    fn silence_gives_constant_log_floor() {
        let wav = Waveform {
            samples: vec![0.0; 16000],
            sample_rate: 16000,
        };
        let mel = mel_features(&wav, 80, 25.0, 2.0).unwrap();
        assert_eq!(mel.values.ncols(), 80);
        let expected = LOG_EPS.ln();
        assert!(mel.values.iter().all(|&x| (x - expected).abs() < 1e-12));
    }

    #[test]
    fn too_short_utterance_is_rejected() {
        let wav = Waveform {
            samples: vec![0.0; 100],
            sample_rate: 16000,
        };
        assert!(matches!(
            mel_features(&wav, 80, 25.0, 2.0),
            Err(CoreError::UtteranceTooShort { .. })
        ));
    }

    #[test]
    fn frame_count_follows_hop() {
        let wav = Waveform {
            samples: vec![0.1; 16000],
            sample_rate: 16000,
        };
        let mel = mel_features(&wav, 80, 25.0, 2.0).unwrap();
        // (16000 - 400) / 32 + 1
        assert_eq!(mel.values.nrows(), 488);
        assert_eq!(mel.frame_rate, 500.0);
    }

    #[test]
    fn filterbank_centers_bracket_one_khz() {
        // 80 filters from 0 to 8 kHz put centers near 973 and 1026 Hz
        // around a 1 kHz tone
        let (_, centers) = mel_filterbank(80, 512, 16000.0);
        assert!((centers[27] - 973.0).abs() < 2.0, "got {}", centers[27]);
        assert!((centers[28] - 1026.0).abs() < 2.0, "got {}", centers[28]);

        let wav = tone(1000.0, 16000, 1.0);
        let mel = mel_features(&wav, 80, 25.0, 2.0).unwrap();
        let frame = mel.values.row(200);
        let best = frame
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(
            (27..=28).contains(&best),
            "1 kHz energy lands in bin {best}"
        );
    }

    #[test]
    fn impulse_matches_direct_dft_oracle() {
        let sr = 16000u32;
        let mut samples = vec![0.0; 800];
        let offset = 150;
        samples[offset] = 1.0;
        let wav = Waveform {
            samples,
            sample_rate: sr,
        };
        let mel = mel_features(&wav, 40, 25.0, 2.0).unwrap();

        // frame 0 covers samples 0..400 and contains the impulse; the
        // windowed frame is w[offset] * delta, so every DFT bin has
        // magnitude w[offset] and the Mel output reduces to the filter
        // row sums times that constant.
        let win = hann_window(400);
        let flat = win[offset];
        let (filters, _) = mel_filterbank(40, 512, sr as f64);
        for m in 0..40 {
            let expected = (filters.row(m).sum() * flat + LOG_EPS).ln();
            assert!(
                (mel.values[(0, m)] - expected).abs() < 1e-9,
                "bin {m}: {} vs {expected}",
                mel.values[(0, m)]
            );
        }
        // frames past the impulse are silent
        let floor = LOG_EPS.ln();
        assert!((mel.values[(6, 0)] - floor).abs() < 1e-9);
    }

    #[test]
    fn stft_matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<f64> = (0..600).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = magnitude_stft(&samples, 400, 100, 512);
        let win = hann_window(400);
        // naive O(n^2) DFT of frame 1
        let start = 100;
        for k in [0usize, 3, 17, 100, 256] {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..512 {
                let x = if n < 400 { samples[start + n] * win[n] } else { 0.0 };
                let ang = -2.0 * std::f64::consts::PI * (k * n) as f64 / 512.0;
                acc += Complex64::new(ang.cos(), ang.sin()) * x;
            }
            assert!((spec[(1, k)] - acc.norm()).abs() < 1e-9);
        }
    }

    fn flat_mel(t_len: usize, n_mels: usize, value: f64) -> MelFeatures {
        MelFeatures {
            values: Array2::from_elem((t_len, n_mels), value),
            frame_rate: 500.0,
        }
    }

    #[test]
    fn delta_kernel_recovers_input_band() {
        let mut cnn = AuditoryCnn::init(1, 12, 0.0, 1);
        cnn.norm_enabled = false;
        cnn.kernels.fill(0.0);
        cnn.kernels[(0, 3, 2)] = 1.0; // centered in time, band offset 2
        cnn.bias.fill(0.0);
        let mut mel = flat_mel(9, 12, 0.0);
        for t in 0..9 {
            for f in 0..12 {
                mel.values[(t, f)] = (t * 100 + f) as f64;
            }
        }
        let (out, _) = cnn.forward(&mel, None).unwrap();
        assert_eq!(out.values.dim(), (9, 6));
        for t in 0..9 {
            for f0 in 0..6 {
                assert_eq!(out.values[(t, f0)], mel.values[(t, f0 + 2)]);
            }
        }
    }

    #[test]
    fn zero_kernels_give_zero_output() {
        let mut cnn = AuditoryCnn::init(3, 10, 0.0, 1);
        cnn.kernels.fill(0.0);
        cnn.bias.fill(0.0);
        let mel = flat_mel(5, 10, 0.7);
        let (out, _) = cnn.forward(&mel, None).unwrap();
        assert!(out.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn conv_matches_brute_force_four_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut cnn = AuditoryCnn::init(2, 11, 0.0, 3);
        cnn.norm_enabled = false;
        let t_len = 10;
        let mel = MelFeatures {
            values: Array2::from_shape_fn((t_len, 11), |_| rng.random_range(-1.0..1.0)),
            frame_rate: 500.0,
        };
        let (out, _) = cnn.forward(&mel, None).unwrap();
        let n_bands = 5;
        for c in 0..2 {
            for t in 0..t_len as isize {
                for f0 in 0..n_bands {
                    let mut acc = cnn.bias[c];
                    for i in 0..7isize {
                        for j in 0..7usize {
                            let ti = t + i - 3;
                            if ti >= 0 && ti < t_len as isize {
                                acc += cnn.kernels[(c, i as usize, j)]
                                    * mel.values[(ti as usize, f0 + j)];
                            }
                        }
                    }
                    let got = out.values[(t as usize, c * n_bands + f0)];
                    let expected = if acc >= 0.0 { acc } else { LEAKY_SLOPE * acc };
                    assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
                }
            }
        }
    }

    #[test]
    fn time_length_is_preserved() {
        let cnn = AuditoryCnn::init(2, 9, 0.0, 5);
        for t_len in [1usize, 2, 3, 8, 33] {
            let mel = flat_mel(t_len, 9, 0.3);
            let (out, _) = cnn.forward(&mel, None).unwrap();
            assert_eq!(out.values.nrows(), t_len);
        }
    }

    #[test]
    fn sixteen_channels_on_eighty_bands_give_1184_signals() {
        let cnn = AuditoryCnn::init(16, 80, 0.0, 5);
        assert_eq!(cnn.n_features(), 1184);
        let mel = flat_mel(4, 80, 0.0);
        let (out, _) = cnn.forward(&mel, None).unwrap();
        assert_eq!(out.values.ncols(), 16 * 74);
    }

    #[test]
    fn output_depends_only_on_local_bands() {
        // norm disabled: layer normalization couples features globally
        let mut cnn = AuditoryCnn::init(2, 14, 0.0, 9);
        cnn.norm_enabled = false;
        let base = flat_mel(6, 14, 0.2);
        let (out_base, _) = cnn.forward(&base, None).unwrap();
        let mut perturbed = base.clone();
        let touched = 9usize;
        for t in 0..6 {
            perturbed.values[(t, touched)] += 1.0;
        }
        let (out_pert, _) = cnn.forward(&perturbed, None).unwrap();
        let n_bands = 8;
        for c in 0..2 {
            for f0 in 0..n_bands {
                let changed = (0..6).any(|t| {
                    out_base.values[(t, c * n_bands + f0)]
                        != out_pert.values[(t, c * n_bands + f0)]
                });
                let local = touched >= f0 && touched <= f0 + 6;
                assert_eq!(changed, local, "channel {c} band {f0}");
            }
        }
    }

    #[test]
    fn inference_is_deterministic_and_dropout_only_in_training() {
        let cnn = AuditoryCnn::init(4, 12, 0.5, 6);
        let mel = flat_mel(7, 12, 0.4);
        let (a, _) = cnn.forward(&mel, None).unwrap();
        let (b, _) = cnn.forward(&mel, None).unwrap();
        assert_eq!(a.values, b.values);

        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let (c, cache) = cnn.forward(&mel, Some(&mut rng)).unwrap();
        assert!(cache.drop_scale.iter().any(|&s| s == 0.0), "p=0.5 drops some channel");
        assert_ne!(a.values, c.values);
    }
}
