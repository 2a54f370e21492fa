//! Phase-amplitude coupling metrics and surrogate significance testing.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

/// Default number of phase bins for the modulation index.
pub const DEFAULT_PHASE_BINS: usize = 18;

/// Default surrogate count for significance testing.
pub const DEFAULT_SURROGATES: usize = 10_000;

fn phase_bin(p: f64, n_bins: usize) -> usize {
    let two_pi = 2.0 * std::f64::consts::PI;
    let idx = ((p + std::f64::consts::PI) / two_pi * n_bins as f64).floor() as isize;
    idx.clamp(0, n_bins as isize - 1) as usize
}

fn mi_from_bins(sums: &[f64], counts: &[usize]) -> (f64, bool) {
    let n_bins = sums.len();
    let mut empty = false;
    let mut means = vec![0.0f64; n_bins];
    for j in 0..n_bins {
        if counts[j] == 0 {
            empty = true;
        } else {
            means[j] = sums[j] / counts[j] as f64;
        }
    }
    let total: f64 = means.iter().sum();
    if total <= 0.0 {
        return (0.0, empty);
    }
    let ln_n = (n_bins as f64).ln();
    let mut entropy_term = 0.0;
    for &m in &means {
        let p = m / total;
        if p > 0.0 {
            entropy_term += p * p.ln();
        }
    }
    ((ln_n + entropy_term) / ln_n, empty)
}

/// Normalized Kullback-Leibler divergence of the phase-binned mean
/// amplitude distribution from uniform, in [0, 1].
///
/// Returns the index and a flag marking empty phase bins (whose
/// probability is taken as the zero limit).
pub fn modulation_index(phase: &[f64], amplitude: &[f64], n_bins: usize) -> (f64, bool) {
    assert_eq!(phase.len(), amplitude.len());
    assert!(n_bins >= 2 && phase.len() >= n_bins, "need at least one sample per bin on average");
    let mut sums = vec![0.0f64; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&p, &a) in phase.iter().zip(amplitude.iter()) {
        let idx = phase_bin(p, n_bins);
        sums[idx] += a;
        counts[idx] += 1;
    }
    mi_from_bins(&sums, &counts)
}

/// Length of the amplitude-weighted mean phase vector,
/// `| mean(A e^{i phi}) |`.
pub fn mean_vector_length(phase: &[f64], amplitude: &[f64]) -> f64 {
    assert_eq!(phase.len(), amplitude.len());
    assert!(!phase.is_empty());
    let mut re = 0.0;
    let mut im = 0.0;
    for (&p, &a) in phase.iter().zip(amplitude.iter()) {
        re += a * p.cos();
        im += a * p.sin();
    }
    let n = phase.len() as f64;
    (re / n).hypot(im / n)
}

/// Rotate the amplitude series at a random cut: the two segments swap
/// order, preserving the amplitude multiset while destroying the timing
/// relative to the phase series.
pub fn rotate_at(amplitude: &[f64], cut: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(amplitude.len());
    out.extend_from_slice(&amplitude[cut..]);
    out.extend_from_slice(&amplitude[..cut]);
    out
}

/// One-sided upper-tail p-value from a Gaussian fitted by moments.
pub fn gaussian_upper_p(observed: f64, mean: f64, std: f64) -> f64 {
    let z = (observed - mean) / std;
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Full surrogate analysis result for one phase/amplitude pair.
#[derive(Debug, Clone)]
pub struct SurrogateAnalysis {
    pub observed_mi: f64,
    pub observed_mvl: f64,
    pub p_mi: f64,
    pub p_mvl: f64,
    pub empty_phase_bins: bool,
    pub mi_surrogates: Vec<f64>,
    pub mvl_surrogates: Vec<f64>,
}

/// Compare the observed coupling against `n_surrogates` random rotations
/// of the amplitude series; p-values come from a Gaussian fitted to the
/// surrogate distribution (sample mean, method-of-moments std), one-sided
/// upper tail.
pub fn surrogate_analysis(
    phase: &[f64],
    amplitude: &[f64],
    n_surrogates: usize,
    n_bins: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SurrogateAnalysis> {
    let t_len = phase.len();
    if t_len < 64 {
        return Err(CoreError::TooShort {
            len: t_len,
            required: 64,
        });
    }
    let (observed_mi, empty_phase_bins) = modulation_index(phase, amplitude, n_bins);
    let observed_mvl = mean_vector_length(phase, amplitude);
    // the phase series is fixed across surrogates: precompute bin indices
    // and the unit phase vectors once
    let bins: Vec<usize> = phase.iter().map(|&p| phase_bin(p, n_bins)).collect();
    let mut counts = vec![0usize; n_bins];
    for &b in &bins {
        counts[b] += 1;
    }
    let cos_sin: Vec<(f64, f64)> = phase.iter().map(|&p| (p.cos(), p.sin())).collect();
    let mut mi_surrogates = Vec::with_capacity(n_surrogates);
    let mut mvl_surrogates = Vec::with_capacity(n_surrogates);
    let mut sums = vec![0.0f64; n_bins];
    for _ in 0..n_surrogates {
        let cut = rng.random_range(1..t_len);
        sums.fill(0.0);
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, (&b, &(c, s))) in bins.iter().zip(cos_sin.iter()).enumerate() {
            let a = amplitude[(i + cut) % t_len];
            sums[b] += a;
            re += a * c;
            im += a * s;
        }
        mi_surrogates.push(mi_from_bins(&sums, &counts).0);
        let n = t_len as f64;
        mvl_surrogates.push((re / n).hypot(im / n));
    }
    let fit = |xs: &[f64], which: &str| -> Result<(f64, f64)> {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std == 0.0 {
            return Err(CoreError::DegenerateSurrogate(which.into()));
        }
        Ok((mean, std))
    };
    let (mi_mean, mi_std) = fit(&mi_surrogates, "modulation index")?;
    let (mvl_mean, mvl_std) = fit(&mvl_surrogates, "mean vector length")?;
    Ok(SurrogateAnalysis {
        observed_mi,
        observed_mvl,
        p_mi: gaussian_upper_p(observed_mi, mi_mean, mi_std),
        p_mvl: gaussian_upper_p(observed_mvl, mvl_mean, mvl_std),
        empty_phase_bins,
        mi_surrogates,
        mvl_surrogates,
    })
}

/// p-values only.
pub fn surrogate_pvalues(
    phase: &[f64],
    amplitude: &[f64],
    n_surrogates: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let r = surrogate_analysis(phase, amplitude, n_surrogates, DEFAULT_PHASE_BINS, rng)?;
    Ok((r.p_mi, r.p_mvl))
}
