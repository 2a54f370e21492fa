//! Two-variable adaptive leaky integrate-and-fire dynamics.
//!
//! A neuron is reduced to dimensionless form with threshold 1 and
//! resting/reset potential 0, leaving four parameters: the membrane and
//! adaptation time constants `tau_u`, `tau_w` (ms), the subthreshold
//! coupling `a` and the spike-triggered increment `b`. Discrete updates
//! use exponential-Euler decay factors; the equivalent kernel (spike
//! response) formulation serves as an analytic oracle.

use num_complex::Complex64;

use crate::error::{CoreError, Result};

/// Admissible range for the membrane time constant, ms.
pub const TAU_U_RANGE: (f64, f64) = (3.0, 25.0);
/// Admissible range for the adaptation time constant, ms.
pub const TAU_W_RANGE: (f64, f64) = (30.0, 350.0);
/// Admissible range for the subthreshold coupling strength.
pub const A_RANGE: (f64, f64) = (-0.5, 5.0);
/// Admissible range for the spike-triggered adaptation increment.
pub const B_RANGE: (f64, f64) = (0.0, 2.0);

/// Per-neuron dynamics constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdLifParameters {
    /// Membrane time constant, ms.
    pub tau_u: f64,
    /// Adaptation time constant, ms.
    pub tau_w: f64,
    /// Subthreshold coupling strength, dimensionless.
    pub a: f64,
    /// Spike-triggered adaptation increment, dimensionless.
    pub b: f64,
}

impl AdLifParameters {
    pub fn new(tau_u: f64, tau_w: f64, a: f64, b: f64) -> Self {
        Self { tau_u, tau_w, a, b }
    }

    /// Plain leaky integrate-and-fire: adaptation disabled.
    pub fn lif(tau_u: f64) -> Self {
        Self::new(tau_u, TAU_W_RANGE.0, 0.0, 0.0)
    }

    pub fn is_lif(&self) -> bool {
        self.a == 0.0 && self.b == 0.0
    }
}

/// Project parameters onto their admissible ranges.
///
/// Component-wise saturation; idempotent. When `strict_stability` is set,
/// the coupling `a` is additionally capped at the oscillation-free bound
/// `(tau_w - tau_u)^2 / (4 tau_u tau_w)` computed from the clamped time
/// constants.
pub fn clamp_parameters(raw: AdLifParameters, strict_stability: bool) -> Result<AdLifParameters> {
    for (name, v) in [
        ("tau_u", raw.tau_u),
        ("tau_w", raw.tau_w),
        ("a", raw.a),
        ("b", raw.b),
    ] {
        if !v.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "{name} is not finite: {v}"
            )));
        }
    }
    let tau_u = raw.tau_u.clamp(TAU_U_RANGE.0, TAU_U_RANGE.1);
    let tau_w = raw.tau_w.clamp(TAU_W_RANGE.0, TAU_W_RANGE.1);
    let mut a_hi = A_RANGE.1;
    if strict_stability {
        a_hi = a_hi.min(stability_bounds(tau_u, tau_w).1);
    }
    Ok(AdLifParameters {
        tau_u,
        tau_w,
        a: raw.a.clamp(A_RANGE.0, a_hi),
        b: raw.b.clamp(B_RANGE.0, B_RANGE.1),
    })
}

/// Exponential-Euler decay factors `(alpha, beta)` for step size `dt` ms.
pub fn decay_factors(params: &AdLifParameters, dt: f64) -> Result<(f64, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(CoreError::InvalidTimestep(dt));
    }
    Ok(((-dt / params.tau_u).exp(), (-dt / params.tau_w).exp()))
}

/// Membrane potential, adaptation current and previous-step spike flag.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeuronState {
    pub u: f64,
    pub w: f64,
    /// Spike emitted at the previous step, 0 or 1.
    pub s: f64,
}

/// One discrete-time update of the AdLIF dynamics.
///
/// The adaptation update uses the pre-update membrane potential, and the
/// reset subtracts the previous spike before the decay is applied:
///
/// ```text
/// u' = alpha (u - s) + (1 - alpha)(stimulus - w)
/// w' = beta (w + b s) + (1 - beta) a u
/// s' = [u' >= 1]
/// ```
pub fn step(
    state: &NeuronState,
    params: &AdLifParameters,
    stimulus: f64,
    alpha: f64,
    beta: f64,
) -> NeuronState {
    let u = alpha * (state.u - state.s) + (1.0 - alpha) * (stimulus - state.w);
    let w = beta * (state.w + params.b * state.s) + (1.0 - beta) * params.a * state.u;
    let s = if u >= 1.0 { 1.0 } else { 0.0 };
    NeuronState { u, w, s }
}

/// One update of the free dynamics (no input, threshold disabled).
pub fn free_step(u: f64, w: f64, params: &AdLifParameters, alpha: f64, beta: f64) -> (f64, f64) {
    let u_next = alpha * u - (1.0 - alpha) * w;
    let w_next = beta * w + (1.0 - beta) * params.a * u;
    (u_next, w_next)
}

/// Eigenvalues of the free system, in 1/ms.
///
/// Roots of `lambda^2 + lambda (1/tau_u + 1/tau_w) + (1 + a)/(tau_u tau_w)`,
/// with `lambda1` the root of larger real part (larger imaginary part on a
/// tie).
pub fn eigenvalues(params: &AdLifParameters) -> (Complex64, Complex64) {
    let p = 1.0 / params.tau_u + 1.0 / params.tau_w;
    let q = (1.0 + params.a) / (params.tau_u * params.tau_w);
    let disc = p * p - 4.0 * q;
    let (l1, l2) = if disc >= 0.0 {
        let root = disc.sqrt();
        (
            Complex64::new((-p + root) / 2.0, 0.0),
            Complex64::new((-p - root) / 2.0, 0.0),
        )
    } else {
        let root = (-disc).sqrt();
        (
            Complex64::new(-p / 2.0, root / 2.0),
            Complex64::new(-p / 2.0, -root / 2.0),
        )
    };
    (l1, l2)
}

/// Stability range for the coupling strength: `(-1, (tau_w-tau_u)^2/(4 tau_u tau_w)]`.
///
/// The lower bound is exclusive, the upper bound inclusive.
pub fn stability_bounds(tau_u: f64, tau_w: f64) -> (f64, f64) {
    let d = tau_w - tau_u;
    (-1.0, d * d / (4.0 * tau_u * tau_w))
}

/// Coefficients of the equivalent kernel formulation.
///
/// The input kernel is `kappa(s) = beta1 e^{lambda1 s} + beta2 e^{lambda2 s}`
/// and the reset kernel `eta(s) = gamma1 e^{lambda1 s} + gamma2 e^{lambda2 s}`,
/// both zero for `s < 0`. Construction guarantees `beta1 + beta2 = 1`
/// (unit jump of `u` per input pulse) and `gamma1 + gamma2 = -1`.
#[derive(Debug, Clone, Copy)]
pub struct KernelCoefficients {
    pub lambda1: Complex64,
    pub lambda2: Complex64,
    pub beta1: Complex64,
    pub beta2: Complex64,
    pub gamma1: Complex64,
    pub gamma2: Complex64,
}

/// Derive the kernel coefficients for a parameter set.
///
/// Errors on a repeated eigenvalue (zero discriminant); callers that land
/// exactly on the stability bound should perturb `a` instead.
pub fn kernel_coefficients(params: &AdLifParameters) -> Result<KernelCoefficients> {
    let (l1, l2) = eigenvalues(params);
    let sep = (l2 - l1).norm();
    let scale = l1.norm().max(l2.norm()).max(1e-300);
    // roots within rounding noise of each other; a 1e-9 nudge of `a`
    // separates them by ~1e-5 relative, well above this threshold
    if sep <= 1e-6 * scale {
        return Err(CoreError::DegenerateKernel {
            tau_u: params.tau_u,
            tau_w: params.tau_w,
            a: params.a,
        });
    }
    let denom = params.tau_u * (l2 - l1);
    let beta1 = (params.tau_u * l2 + 1.0) / denom;
    let beta2 = Complex64::new(1.0, 0.0) - beta1;
    // threshold minus reset is fixed at 1 by the dimensionless reduction
    let gamma1 = (params.b - (params.tau_u * l2 + 1.0)) / denom;
    let gamma2 = Complex64::new(-1.0, 0.0) - gamma1;
    Ok(KernelCoefficients {
        lambda1: l1,
        lambda2: l2,
        beta1,
        beta2,
        gamma1,
        gamma2,
    })
}

impl KernelCoefficients {
    /// Membrane response to a unit input pulse, evaluated at lag `s` ms.
    pub fn input_kernel(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        (self.beta1 * (self.lambda1 * s).exp() + self.beta2 * (self.lambda2 * s).exp()).re
    }

    /// Membrane response to an emitted spike, evaluated at lag `s` ms.
    pub fn reset_kernel(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        (self.gamma1 * (self.lambda1 * s).exp() + self.gamma2 * (self.lambda2 * s).exp()).re
    }
}

/// Closed-form membrane potential under unit input pulses and emitted
/// spikes at the given times (ms), evaluated at time `t`.
pub fn analytic_response(
    coeffs: &KernelCoefficients,
    input_times: &[f64],
    spike_times: &[f64],
    t: f64,
) -> f64 {
    let inputs: f64 = input_times.iter().map(|&ti| coeffs.input_kernel(t - ti)).sum();
    let resets: f64 = spike_times.iter().map(|&tf| coeffs.reset_kernel(t - tf)).sum();
    inputs + resets
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(x: f64, y: f64, tol: f64) {
        assert!((x - y).abs() <= tol, "expected {y}, got {x} (tol {tol})");
    }

    // Independent scalar exponential: truncated power series.
    fn exp_series(x: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            term *= x / k as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn clamp_keeps_admissible_values() {
        let p = AdLifParameters::new(5.0, 30.0, 0.5, 1.5);
        assert_eq!(clamp_parameters(p, false).unwrap(), p);
        let boundary = AdLifParameters::new(25.0, 350.0, 5.0, 2.0);
        assert_eq!(clamp_parameters(boundary, false).unwrap(), boundary);
    }

    #[test]
    fn clamp_projects_out_of_range_values() {
        let p = AdLifParameters::new(1.0, 1000.0, -2.0, 5.0);
        let c = clamp_parameters(p, false).unwrap();
        assert_eq!(c, AdLifParameters::new(3.0, 350.0, -0.5, 2.0));
        // idempotent
        assert_eq!(clamp_parameters(c, false).unwrap(), c);
    }

    #[test]
    fn clamp_rejects_non_finite() {
        let p = AdLifParameters::new(f64::NAN, 30.0, 0.0, 0.0);
        assert!(matches!(
            clamp_parameters(p, false),
            Err(CoreError::InvalidParameter(_))
        ));
    }

    #[test]
    fn clamp_strict_stability_caps_a() {
        // tau_u=10, tau_w=90: bound is 16/9, below the plain upper range 5
        let p = AdLifParameters::new(10.0, 90.0, 5.0, 0.0);
        let c = clamp_parameters(p, true).unwrap();
        assert_close(c.a, 16.0 / 9.0, 1e-12);
        let c2 = clamp_parameters(p, false).unwrap();
        assert_eq!(c2.a, 5.0);
    }

    #[test]
    fn decay_factors_match_series_expansion() {
        let p = AdLifParameters::new(10.0, 100.0, 0.0, 0.0);
        let (alpha, _) = decay_factors(&p, 2.0).unwrap();
        assert_close(alpha, exp_series(-0.2), 1e-12);
        assert_close(alpha, 0.818731, 1e-6);

        let p = AdLifParameters::new(3.0, 100.0, 0.0, 0.0);
        let (alpha, _) = decay_factors(&p, 5.0).unwrap();
        assert_close(alpha, exp_series(-5.0 / 3.0), 1e-12);
        assert_close(alpha, 0.188876, 1e-6);
    }

    #[test]
    fn decay_factors_tend_to_one_for_small_dt() {
        let p = AdLifParameters::new(3.0, 30.0, 0.0, 0.0);
        let (alpha, beta) = decay_factors(&p, 1e-9).unwrap();
        assert!(alpha < 1.0 && alpha > 1.0 - 1e-9);
        assert!(beta < 1.0 && beta > 1.0 - 1e-9);
    }

    #[test]
    fn decay_factors_reject_bad_dt() {
        let p = AdLifParameters::new(10.0, 100.0, 0.0, 0.0);
        assert!(matches!(
            decay_factors(&p, 0.0),
            Err(CoreError::InvalidTimestep(_))
        ));
        assert!(matches!(
            decay_factors(&p, -1.0),
            Err(CoreError::InvalidTimestep(_))
        ));
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let p = AdLifParameters::new(5.0, 30.0, 0.5, 1.5);
        let s0 = NeuronState::default();
        let s1 = step(&s0, &p, 0.0, 0.8, 0.9);
        assert_eq!(s1, s0);
    }

    #[test]
    fn strong_stimulus_spikes_once() {
        // zero state, alpha = 0.8: u' = 0.2 * 10 = 2.0 >= 1
        let p = AdLifParameters::new(5.0, 30.0, 0.5, 1.5);
        let s = step(&NeuronState::default(), &p, 10.0, 0.8, 0.9);
        assert_close(s.u, 2.0, 1e-15);
        assert_eq!(s.s, 1.0);
        assert_eq!(s.w, 0.0);
    }

    #[test]
    fn lif_adaptation_current_stays_zero() {
        let p = AdLifParameters::lif(10.0);
        let (alpha, beta) = decay_factors(&p, 1.0).unwrap();
        let mut st = NeuronState::default();
        for t in 0..200 {
            let stim = if t % 3 == 0 { 2.5 } else { 0.0 };
            st = step(&st, &p, stim, alpha, beta);
            assert_eq!(st.w, 0.0);
            // and the scalar leaky integrator is reproduced exactly
        }
    }

    #[test]
    fn lif_reduces_to_scalar_leaky_integrator() {
        let p = AdLifParameters::lif(8.0);
        let (alpha, beta) = decay_factors(&p, 2.0).unwrap();
        let mut st = NeuronState::default();
        let (mut u_ref, mut s_ref) = (0.0f64, 0.0f64);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let stim: f64 = rng.random_range(-1.0..3.0);
            st = step(&st, &p, stim, alpha, beta);
            u_ref = alpha * (u_ref - s_ref) + (1.0 - alpha) * stim;
            s_ref = if u_ref >= 1.0 { 1.0 } else { 0.0 };
            assert_eq!(st.u, u_ref);
            assert_eq!(st.s, s_ref);
        }
    }

    #[test]
    fn eigenvalues_factor_when_uncoupled() {
        let p = AdLifParameters::new(10.0, 100.0, 0.0, 0.0);
        let (l1, l2) = eigenvalues(&p);
        // polynomial factors as (lambda + 1/tau_u)(lambda + 1/tau_w)
        assert_close(l1.re, -0.01, 1e-14);
        assert_close(l2.re, -0.1, 1e-14);
        assert_eq!(l1.im, 0.0);
        assert_eq!(l2.im, 0.0);
        assert!(l1.re > l2.re, "larger real part first");
    }

    #[test]
    fn eigenvalues_repeated_at_stability_bound() {
        let a = stability_bounds(10.0, 90.0).1;
        assert_close(a, 16.0 / 9.0, 1e-15);
        let p = AdLifParameters::new(10.0, 90.0, a, 0.0);
        let (l1, l2) = eigenvalues(&p);
        let expected = -0.5 * (0.1 + 1.0 / 90.0);
        // the discriminant vanishes here, so the root separation is only
        // accurate to sqrt(machine epsilon)
        assert_close(l1.re, expected, 1e-7);
        assert_close(l2.re, expected, 1e-7);
        assert!((l1 - l2).norm() < 1e-7);
        assert_close(expected, -1.0 / 18.0, 1e-15);
    }

    #[test]
    fn eigenvalues_complex_for_strong_coupling() {
        let p = AdLifParameters::new(5.0, 30.0, 5.0, 0.0);
        let (l1, l2) = eigenvalues(&p);
        assert!(l1.im > 0.0 && l2.im < 0.0);
        assert!(l1.re < 0.0 && l2.re < 0.0);
        assert_close(l1.re, l2.re, 1e-15);
    }

    #[test]
    fn eigenvalue_identities_hold_over_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = AdLifParameters::new(
                rng.random_range(3.0..25.0),
                rng.random_range(30.0..350.0),
                rng.random_range(-0.5..5.0),
                rng.random_range(0.0..2.0),
            );
            let (l1, l2) = eigenvalues(&p);
            let sum = l1 + l2;
            let prod = l1 * l2;
            let sum_ref = -(1.0 / p.tau_u + 1.0 / p.tau_w);
            let prod_ref = (1.0 + p.a) / (p.tau_u * p.tau_w);
            assert!((sum.re - sum_ref).abs() <= 1e-12 * sum_ref.abs());
            assert!(sum.im.abs() <= 1e-15);
            assert!((prod.re - prod_ref).abs() <= 1e-12 * prod_ref.abs());
            assert!(prod.im.abs() <= 1e-12 * prod_ref.abs());
        }
    }

    #[test]
    fn stability_bound_examples() {
        assert_eq!(stability_bounds(20.0, 20.0).1, 0.0);
        assert_close(stability_bounds(10.0, 90.0).1, 16.0 / 9.0, 1e-15);
        assert_close(stability_bounds(3.0, 350.0).1, 347.0 * 347.0 / 4200.0, 1e-12);
        assert_close(stability_bounds(3.0, 350.0).1, 28.669, 5e-4);
    }

    #[test]
    fn kernel_sums_are_construction_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = AdLifParameters::new(
                rng.random_range(3.0..25.0),
                rng.random_range(30.0..350.0),
                rng.random_range(-0.5..5.0),
                rng.random_range(0.0..2.0),
            );
            let k = kernel_coefficients(&p).unwrap();
            assert!(((k.beta1 + k.beta2) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            assert!(((k.gamma1 + k.gamma2) - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
            assert_close(k.input_kernel(0.0), 1.0, 1e-12);
            assert_close(k.reset_kernel(0.0), -1.0, 1e-12);
            assert!(k.lambda1.re < 0.0 && k.lambda2.re < 0.0);
        }
    }

    #[test]
    fn kernel_degenerates_at_repeated_eigenvalue() {
        let a = stability_bounds(10.0, 90.0).1;
        let p = AdLifParameters::new(10.0, 90.0, a, 0.5);
        assert!(matches!(
            kernel_coefficients(&p),
            Err(CoreError::DegenerateKernel { .. })
        ));
    }

    #[test]
    fn kernel_reduces_to_single_exponential_for_lif() {
        let p = AdLifParameters::new(7.0, 120.0, 0.0, 0.0);
        let k = kernel_coefficients(&p).unwrap();
        for i in 0..60 {
            let s = i as f64 * 0.5;
            assert_close(k.input_kernel(s), (-s / p.tau_u).exp(), 1e-10);
            assert_close(k.reset_kernel(s), -(-s / p.tau_u).exp(), 1e-10);
        }
    }

    #[test]
    fn analytic_response_empty_and_causal() {
        let p = AdLifParameters::new(5.0, 30.0, 0.5, 1.5);
        let k = kernel_coefficients(&p).unwrap();
        assert_eq!(analytic_response(&k, &[], &[], 12.0), 0.0);
        // events in the future contribute nothing
        assert_eq!(analytic_response(&k, &[10.0], &[20.0], 5.0), 0.0);
    }

    #[test]
    fn pulse_response_matches_reference_shape() {
        // Parameters of the reference trace: tau_u=5, tau_w=30, a=0.5, b=1.5.
        let p = AdLifParameters::new(5.0, 30.0, 0.5, 1.5);
        let k = kernel_coefficients(&p).unwrap();
        let mut values = Vec::new();
        for i in 0..500 {
            let t = 10.0 + i as f64 * 0.1;
            values.push(analytic_response(&k, &[10.0], &[], t));
        }
        // unit jump at the pulse, positive transient, then decay toward zero
        assert_close(values[0], 1.0, 1e-12);
        assert!(values[10] > 0.5);
        let undershoot = values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(undershoot < 0.0, "subthreshold coupling causes an undershoot");
        assert!(values[499].abs() < 0.05);
    }
}
