//! Linear-phase FIR band-pass design, zero-phase filtering and the
//! discrete analytic signal.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{CoreError, Result};
use crate::oscillation::FrequencyBand;

/// Windowed-sinc band-pass taps (Hamming window), symmetric and of odd
/// length `max(3 fs / lo rounded to odd, 33)`, extended when necessary so
/// that the window's transition width fits inside the passband (narrow
/// bands like alpha would otherwise leak neighboring rhythms through
/// their skirts). The response is scaled to unit gain at the arithmetic
/// band center.
pub fn design_bandpass(band: &FrequencyBand, fs: f64) -> Result<Vec<f64>> {
    let nyquist = fs / 2.0;
    if !(band.lo > 0.0) || band.hi <= band.lo || band.hi >= nyquist {
        return Err(CoreError::InvalidBand {
            name: band.name.clone(),
            lo: band.lo,
            hi: band.hi,
            nyquist,
        });
    }
    let bandwidth = band.hi - band.lo;
    let mut n = ((3.0 * fs / band.lo).round() as usize)
        .max((3.3 * fs / bandwidth).ceil() as usize)
        .max(33);
    if n % 2 == 0 {
        n += 1;
    }
    let m = (n - 1) as f64 / 2.0;
    // pull the ideal cutoffs inside the nominal edges by a slice of the
    // window's transition width, so the stopband is reached at the edges
    // rather than half a transition beyond them
    let transition = 3.3 * fs / n as f64;
    let shift = (0.15 * transition).min(0.45 * bandwidth);
    let w_lo = 2.0 * std::f64::consts::PI * (band.lo + shift) / fs;
    let w_hi = 2.0 * std::f64::consts::PI * (band.hi - shift) / fs;
    let mut taps = vec![0.0f64; n];
    for (i, tap) in taps.iter_mut().enumerate() {
        let x = i as f64 - m;
        let ideal = if x == 0.0 {
            (w_hi - w_lo) / std::f64::consts::PI
        } else {
            ((w_hi * x).sin() - (w_lo * x).sin()) / (std::f64::consts::PI * x)
        };
        let hamming = 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
        *tap = ideal * hamming;
    }
    // unit gain at the band center
    let center = 0.5 * (band.lo + band.hi);
    let gain = frequency_response(&taps, center, fs);
    if gain <= 0.0 {
        return Err(CoreError::InvalidBand {
            name: band.name.clone(),
            lo: band.lo,
            hi: band.hi,
            nyquist,
        });
    }
    for tap in &mut taps {
        *tap /= gain;
    }
    Ok(taps)
}

/// Magnitude of the filter's transfer function at frequency `f`.
pub fn frequency_response(taps: &[f64], f: f64, fs: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * f / fs;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &h) in taps.iter().enumerate() {
        let ang = -w * k as f64;
        acc += Complex64::new(ang.cos(), ang.sin()) * h;
    }
    acc.norm()
}

/// Full linear convolution via FFT.
fn conv_full(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = x
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    let mut b: Vec<Complex64> = h
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    fft.process(&mut a);
    fft.process(&mut b);
    for (av, bv) in a.iter_mut().zip(b.iter()) {
        *av *= bv;
    }
    ifft.process(&mut a);
    let scale = 1.0 / n as f64;
    a[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Forward-backward FIR filtering with zero net phase shift.
///
/// The first and last `taps.len()` output samples carry edge transients
/// and must be excluded from coupling statistics; see
/// [`edge_exclusion`]. Requires the signal to be longer than three filter
/// lengths.
pub fn filter_zero_phase(signal: &[f64], taps: &[f64]) -> Result<Vec<f64>> {
    let required = 3 * taps.len();
    if signal.len() <= required {
        return Err(CoreError::TooShort {
            len: signal.len(),
            required,
        });
    }
    let forward = conv_full(signal, taps);
    let mut reversed: Vec<f64> = forward.into_iter().rev().collect();
    reversed = conv_full(&reversed, taps);
    reversed.reverse();
    // two full passes add taps.len() - 1 samples on each side
    let offset = taps.len() - 1;
    Ok(reversed[offset..offset + signal.len()].to_vec())
}

/// Number of samples to drop at each end after zero-phase filtering.
pub fn edge_exclusion(taps: &[f64]) -> usize {
    taps.len()
}

/// Discrete analytic signal: phase and envelope per sample.
pub fn analytic_signal(filtered: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = filtered.len();
    if n < 8 {
        return Err(CoreError::TooShort { len: n, required: 8 });
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = filtered.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    // zero the negative frequencies, double the positive ones
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == half) {
            // DC and Nyquist stay
        } else if k < half || (n % 2 == 1 && k == half) {
            *v *= 2.0;
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    ifft.process(&mut buf);
    let scale = 1.0 / n as f64;
    let mut phase = Vec::with_capacity(n);
    let mut amplitude = Vec::with_capacity(n);
    for c in buf {
        let c = c * scale;
        phase.push(c.im.atan2(c.re));
        amplitude.push(c.norm());
    }
    Ok((phase, amplitude))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscillation::canonical_bands;

    fn theta() -> FrequencyBand {
        canonical_bands()
            .into_iter()
            .find(|b| b.name == "theta")
            .unwrap()
    }

    #[test]
    fn taps_are_symmetric_and_odd() {
        let taps = design_bandpass(&theta(), 500.0).unwrap();
        assert_eq!(taps.len() % 2, 1);
        // three cycles of the 4 Hz edge widened so the transition fits
        // the 4 Hz passband
        assert_eq!(taps.len(), 413);
        for i in 0..taps.len() / 2 {
            assert!((taps[i] - taps[taps.len() - 1 - i]).abs() < 1e-12);
        }
        // the slow delta band is governed by the three-cycle rule alone
        let delta = canonical_bands().into_iter().find(|b| b.name == "delta").unwrap();
        assert_eq!(design_bandpass(&delta, 500.0).unwrap().len(), 3001);
    }

    #[test]
    fn theta_response_passes_center_and_rejects_dc() {
        let taps = design_bandpass(&theta(), 500.0).unwrap();
        let dc = frequency_response(&taps, 0.0, 500.0);
        assert!(dc < 10f64.powf(-30.0 / 20.0), "DC gain {dc}");
        let center = frequency_response(&taps, 6.0, 500.0);
        let db = 20.0 * center.log10();
        assert!(db.abs() <= 1.0, "center gain {db} dB");
        // far stopband
        let at_50 = frequency_response(&taps, 50.0, 500.0);
        assert!(at_50 < 10f64.powf(-30.0 / 20.0));
    }

    #[test]
    fn bands_partition_a_theta_tone() {
        // a 6 Hz tone belongs to theta alone
        let fs = 500.0;
        for band in canonical_bands() {
            let taps = design_bandpass(&band, fs).unwrap();
            let gain = frequency_response(&taps, 6.0, fs);
            if band.name == "theta" {
                assert!(gain > 0.9, "theta gain {gain}");
            } else if band.name != "delta" {
                assert!(gain < 0.03, "{} leaks {gain}", band.name);
            }
        }
    }

    #[test]
    fn band_above_nyquist_is_rejected() {
        let bad = FrequencyBand {
            name: "bad".into(),
            lo: 100.0,
            hi: 300.0,
        };
        assert!(matches!(
            design_bandpass(&bad, 500.0),
            Err(CoreError::InvalidBand { .. })
        ));
        let hg = canonical_bands()
            .into_iter()
            .find(|b| b.name == "high-gamma")
            .unwrap();
        assert!(design_bandpass(&hg, 200.0).is_err(), "150 Hz above 100 Hz Nyquist");
        assert!(design_bandpass(&hg, 500.0).is_ok());
    }

    #[test]
    fn zero_phase_filtering_preserves_in_band_phase() {
        let fs = 500.0;
        let taps = design_bandpass(&theta(), fs).unwrap();
        let n = 5000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 6.0 * i as f64 / fs).sin())
            .collect();
        let y = filter_zero_phase(&x, &taps).unwrap();
        assert_eq!(y.len(), n);
        // cross-correlation peaks at zero lag
        let edge = edge_exclusion(&taps);
        let corr = |lag: i64| -> f64 {
            let mut acc = 0.0;
            for t in edge..n - edge {
                let ti = t as i64 + lag;
                if ti >= 0 && (ti as usize) < n {
                    acc += x[t] * y[ti as usize];
                }
            }
            acc
        };
        let at_zero = corr(0);
        for lag in [-8i64, -4, -2, -1, 1, 2, 4, 8] {
            assert!(corr(lag) < at_zero, "lag {lag} beats zero lag");
        }
    }

    #[test]
    fn dc_input_is_rejected_by_any_band() {
        let taps = design_bandpass(&theta(), 500.0).unwrap();
        let x = vec![1.0; 4000];
        let y = filter_zero_phase(&x, &taps).unwrap();
        let edge = edge_exclusion(&taps);
        for &v in &y[edge..y.len() - edge] {
            assert!(v.abs() < 2e-3, "residual DC {v}");
        }
    }

    #[test]
    fn filtering_is_linear() {
        let fs = 500.0;
        let taps = design_bandpass(&theta(), fs).unwrap();
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (1.7, -0.6);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(&u, &v)| a * u + b * v).collect();
        let fx = filter_zero_phase(&x, &taps).unwrap();
        let fy = filter_zero_phase(&y, &taps).unwrap();
        let fmix = filter_zero_phase(&mix, &taps).unwrap();
        for t in 0..n {
            assert!((fmix[t] - (a * fx[t] + b * fy[t])).abs() < 1e-9);
        }
    }

    #[test]
    fn too_short_signal_is_rejected() {
        let taps = design_bandpass(&theta(), 500.0).unwrap();
        let x = vec![0.0; 3 * taps.len()];
        assert!(matches!(
            filter_zero_phase(&x, &taps),
            Err(CoreError::TooShort { .. })
        ));
    }

    #[test]
    fn analytic_signal_tracks_a_cosine() {
        let fs = 500.0;
        let f = 10.0;
        let n = 2000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).cos())
            .collect();
        let (phase, amp) = analytic_signal(&x).unwrap();
        let margin = 100;
        for t in margin..n - margin {
            assert!((amp[t] - 1.0).abs() < 0.02, "amplitude {} at {t}", amp[t]);
            assert!(amp[t] >= 0.0);
        }
        // phase advances by 2 pi f / fs per step
        let expected = 2.0 * std::f64::consts::PI * f / fs;
        for t in margin..n - margin - 1 {
            let mut d = phase[t + 1] - phase[t];
            if d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            assert!((d - expected).abs() < 0.01);
        }
    }

    #[test]
    fn analytic_signal_scaling() {
        let x: Vec<f64> = (0..512)
            .map(|i| (2.0 * std::f64::consts::PI * 12.0 * i as f64 / 500.0).cos())
            .collect();
        let scaled: Vec<f64> = x.iter().map(|&v| 3.0 * v).collect();
        let (p1, a1) = analytic_signal(&x).unwrap();
        let (p2, a2) = analytic_signal(&scaled).unwrap();
        for t in 0..512 {
            assert!((a2[t] - 3.0 * a1[t]).abs() < 1e-9);
            assert!((p2[t] - p1[t]).abs() < 1e-9, "phase unchanged by positive scale");
        }
    }
}
