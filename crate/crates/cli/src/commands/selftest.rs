//! Quick in-binary sanity suite: one line per check, nonzero exit on any
//! failure. Covers the oracle identities that the full test suite checks
//! in depth.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikeosc_core::neuron::{
    decay_factors, eigenvalues, kernel_coefficients, AdLifParameters,
};
use spikeosc_core::oscillation::{
    canonical_bands, design_bandpass, frequency_response, mean_vector_length, modulation_index,
};
use spikeosc_core::topology::build_masks;
use spikeosc_core::training::{boxcar_surrogate, ctc_loss};

pub fn run_selftest() -> bool {
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool| {
        println!("{}: {}", name, if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    let p = AdLifParameters::new(10.0, 100.0, 0.0, 0.0);
    let (alpha, _) = decay_factors(&p, 2.0).unwrap();
    check("decay factor alpha = exp(-dt/tau)", (alpha - (-0.2f64).exp()).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut eig_ok = true;
    for _ in 0..100 {
        let p = AdLifParameters::new(
            rng.random_range(3.0..25.0),
            rng.random_range(30.0..350.0),
            rng.random_range(-0.5..5.0),
            rng.random_range(0.0..2.0),
        );
        let (l1, l2) = eigenvalues(&p);
        let sum_ref = -(1.0 / p.tau_u + 1.0 / p.tau_w);
        let prod_ref = (1.0 + p.a) / (p.tau_u * p.tau_w);
        eig_ok &= ((l1 + l2).re - sum_ref).abs() <= 1e-12 * sum_ref.abs();
        eig_ok &= ((l1 * l2).re - prod_ref).abs() <= 1e-12 * prod_ref.abs();
    }
    check("eigenvalue sum/product identities (100 draws)", eig_ok);

    let p = AdLifParameters::new(5.0, 30.0, 0.5, 1.5);
    let k = kernel_coefficients(&p).unwrap();
    check(
        "kernel jump conditions",
        (k.input_kernel(0.0) - 1.0).abs() < 1e-12 && (k.reset_kernel(0.0) + 1.0).abs() < 1e-12,
    );

    check(
        "boxcar surrogate band",
        boxcar_surrogate(1.0) == 0.5 && boxcar_surrogate(1.5) == 0.5 && boxcar_surrogate(0.49) == 0.0,
    );

    // CTC against hand enumeration on a 2-frame lattice
    let logp = {
        let mut m = Array2::from_elem((2, 3), (1.0f64 / 3.0).ln());
        m[(0, 1)] = 0.5f64.ln();
        m[(0, 0)] = 0.25f64.ln();
        m[(0, 2)] = 0.25f64.ln();
        m
    };
    let (loss, _) = ctc_loss(&logp, &[1], 0).unwrap();
    let p_paths: f64 =
        (0.5 * (1.0 / 3.0)) + (0.5 * (1.0 / 3.0)) + (0.25 * (1.0 / 3.0));
    check("ctc forward equals path enumeration", (loss + p_paths.ln()).abs() < 1e-12);

    let uniform_phase: Vec<f64> = (0..3600)
        .map(|i| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * (i % 360) as f64 / 360.0)
        .collect();
    let flat = vec![1.0; 3600];
    let (mi, _) = modulation_index(&uniform_phase, &flat, 18);
    check("modulation index of flat amplitude is zero", mi.abs() < 1e-12);
    check(
        "mean vector length cancels over uniform phases",
        mean_vector_length(&uniform_phase, &flat) < 1e-9,
    );

    let theta = canonical_bands().into_iter().find(|b| b.name == "theta").unwrap();
    let taps = design_bandpass(&theta, 500.0).unwrap();
    let dc = frequency_response(&taps, 0.0, 500.0);
    let center = frequency_response(&taps, 6.0, 500.0);
    check(
        "theta filter passes 6 Hz and rejects DC",
        dc < 0.0316 && (20.0 * center.log10()).abs() <= 1.0,
    );

    let mask = build_masks(64, 64, 0.5, true, 7);
    let ones: usize = mask.iter().map(|&m| m as usize).sum();
    check(
        "recurrent mask count and zero diagonal",
        ones == (0.5f64 * (64.0 * 63.0)).round() as usize && (0..64).all(|i| mask[(i, i)] == 0),
    );

    all_ok
}
