//! Connectionist temporal classification: forward-backward loss in log
//! space with an analytic gradient through the log-probability lattice,
//! and greedy decoding.

use ndarray::Array2;

use crate::error::{CoreError, Result};

const NEG_INF: f64 = f64::NEG_INFINITY;

fn lse2(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn lse3(a: f64, b: f64, c: f64) -> f64 {
    lse2(lse2(a, b), c)
}

fn extended_labels(target: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &l in target {
        ext.push(l);
        ext.push(blank);
    }
    ext
}

/// Negative log-likelihood of `target` under the lattice of per-frame
/// log-probabilities (time by class), plus its gradient with respect to
/// the lattice.
///
/// Feasibility requires enough frames to emit every label with a blank
/// between adjacent repeats: `T >= L + repeats`.
pub fn ctc_loss(
    logp: &Array2<f64>,
    target: &[usize],
    blank: usize,
) -> Result<(f64, Array2<f64>)> {
    let (t_len, n_classes) = logp.dim();
    if blank >= n_classes {
        return Err(CoreError::InvalidParameter(format!(
            "blank index {blank} out of range for {n_classes} classes"
        )));
    }
    for &l in target {
        if l >= n_classes || l == blank {
            return Err(CoreError::InvalidParameter(format!(
                "label {l} invalid for {n_classes} classes with blank {blank}"
            )));
        }
    }
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    if t_len < target.len() + repeats {
        return Err(CoreError::InfeasibleTarget(format!(
            "{} labels with {repeats} adjacent repeats need at least {} frames, lattice has {t_len}",
            target.len(),
            target.len() + repeats
        )));
    }

    let ext = extended_labels(target, blank);
    let s_len = ext.len();
    let allow_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    // forward variables, emission included at each step
    let mut alpha = Array2::<f64>::from_elem((t_len, s_len), NEG_INF);
    alpha[(0, 0)] = logp[(0, ext[0])];
    if s_len > 1 {
        alpha[(0, 1)] = logp[(0, ext[1])];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let stay = alpha[(t - 1, s)];
            let step = if s >= 1 { alpha[(t - 1, s - 1)] } else { NEG_INF };
            let skip = if allow_skip(s) {
                alpha[(t - 1, s - 2)]
            } else {
                NEG_INF
            };
            let acc = lse3(stay, step, skip);
            if acc != NEG_INF {
                alpha[(t, s)] = acc + logp[(t, ext[s])];
            }
        }
    }
    let log_total = if s_len > 1 {
        lse2(alpha[(t_len - 1, s_len - 1)], alpha[(t_len - 1, s_len - 2)])
    } else {
        alpha[(t_len - 1, s_len - 1)]
    };
    if log_total == NEG_INF {
        return Err(CoreError::InfeasibleTarget(
            "no alignment has nonzero probability".into(),
        ));
    }

    // backward variables, emission included
    let mut beta = Array2::<f64>::from_elem((t_len, s_len), NEG_INF);
    beta[(t_len - 1, s_len - 1)] = logp[(t_len - 1, ext[s_len - 1])];
    if s_len > 1 {
        beta[(t_len - 1, s_len - 2)] = logp[(t_len - 1, ext[s_len - 2])];
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let stay = beta[(t + 1, s)];
            let step = if s + 1 < s_len { beta[(t + 1, s + 1)] } else { NEG_INF };
            let skip = if s + 2 < s_len && allow_skip(s + 2) {
                beta[(t + 1, s + 2)]
            } else {
                NEG_INF
            };
            let acc = lse3(stay, step, skip);
            if acc != NEG_INF {
                beta[(t, s)] = acc + logp[(t, ext[s])];
            }
        }
    }

    // d(-log p)/d logp[t, k]: posterior mass of passing through k at t
    let mut grad = Array2::<f64>::zeros((t_len, n_classes));
    for t in 0..t_len {
        let mut acc = vec![NEG_INF; n_classes];
        for s in 0..s_len {
            let joint = alpha[(t, s)] + beta[(t, s)] - logp[(t, ext[s])];
            acc[ext[s]] = lse2(acc[ext[s]], joint);
        }
        for k in 0..n_classes {
            if acc[k] != NEG_INF {
                grad[(t, k)] = -(acc[k] - log_total).exp();
            }
        }
    }
    Ok((-log_total, grad))
}

/// Per-frame argmax, collapse repeats, drop blanks.
pub fn ctc_greedy_decode(logp: &Array2<f64>, blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for row in logp.rows() {
        let best = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if best != prev && best != blank {
            out.push(best);
        }
        prev = best;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_logp(rng: &mut ChaCha8Rng, t: usize, k: usize) -> Array2<f64> {
        let mut logits = Array2::from_shape_fn((t, k), |_| rng.random_range(-2.0..2.0));
        for mut row in logits.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a: f64, &b| a.max(b));
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        logits
    }

    /// Sum of path probabilities over every frame labelling that
    /// collapses to `target`.
    fn brute_force_loss(logp: &Array2<f64>, target: &[usize], blank: usize) -> f64 {
        let (t_len, k) = logp.dim();
        let mut total = 0.0f64;
        let n_paths = (k as u64).pow(t_len as u32);
        for code in 0..n_paths {
            let mut c = code;
            let mut path = Vec::with_capacity(t_len);
            for _ in 0..t_len {
                path.push((c % k as u64) as usize);
                c /= k as u64;
            }
            // collapse repeats then drop blanks
            let mut collapsed = Vec::new();
            let mut prev = usize::MAX;
            for &p in &path {
                if p != prev && p != blank {
                    collapsed.push(p);
                }
                prev = p;
            }
            if collapsed == target {
                let logprob: f64 = path.iter().enumerate().map(|(t, &p)| logp[(t, p)]).sum();
                total += logprob.exp();
            }
        }
        -total.ln()
    }

    #[test]
    fn single_frame_single_label() {
        let logp = random_logp(&mut ChaCha8Rng::seed_from_u64(1), 1, 3);
        let (loss, _) = ctc_loss(&logp, &[2], 0).unwrap();
        assert!((loss - (-logp[(0, 2)])).abs() < 1e-12);
    }

    #[test]
    fn two_frames_enumerate_three_paths() {
        let logp = random_logp(&mut ChaCha8Rng::seed_from_u64(2), 2, 3);
        let c = 1usize;
        let (loss, _) = ctc_loss(&logp, &[c], 0).unwrap();
        let p = (logp[(0, c)] + logp[(1, c)]).exp()
            + (logp[(0, c)] + logp[(1, 0)]).exp()
            + (logp[(0, 0)] + logp[(1, c)]).exp();
        assert!((loss + p.ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut tested = 0;
        while tested < 60 {
            let t_len = rng.random_range(1..=6);
            let k = rng.random_range(2..=4);
            let logp = random_logp(&mut rng, t_len, k);
            let target_len = rng.random_range(0..=t_len.min(3));
            let target: Vec<usize> =
                (0..target_len).map(|_| rng.random_range(1..k)).collect();
            let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
            if t_len < target.len() + repeats {
                continue;
            }
            let (loss, _) = ctc_loss(&logp, &target, 0).unwrap();
            let reference = brute_force_loss(&logp, &target, 0);
            assert!(
                (loss - reference).abs() < 1e-6,
                "T={t_len} K={k} target {target:?}: {loss} vs {reference}"
            );
            tested += 1;
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logp = random_logp(&mut rng, 5, 4);
        let target = vec![1, 2, 1];
        let (_, grad) = ctc_loss(&logp, &target, 0).unwrap();
        let h = 1e-6;
        for t in 0..5 {
            for k in 0..4 {
                let mut plus = logp.clone();
                plus[(t, k)] += h;
                let mut minus = logp.clone();
                minus[(t, k)] -= h;
                let (lp, _) = ctc_loss(&plus, &target, 0).unwrap();
                let (lm, _) = ctc_loss(&minus, &target, 0).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    (grad[(t, k)] - fd).abs() < 1e-6,
                    "({t},{k}): {} vs {fd}",
                    grad[(t, k)]
                );
            }
        }
    }

    #[test]
    fn infeasible_targets_are_rejected() {
        let logp = random_logp(&mut ChaCha8Rng::seed_from_u64(3), 2, 3);
        assert!(matches!(
            ctc_loss(&logp, &[1, 1], 0),
            Err(CoreError::InfeasibleTarget(_))
        ));
        assert!(matches!(
            ctc_loss(&logp, &[1, 2, 1], 0),
            Err(CoreError::InfeasibleTarget(_))
        ));
        // repeated label fits once a separating blank frame exists
        let logp3 = random_logp(&mut ChaCha8Rng::seed_from_u64(4), 3, 3);
        assert!(ctc_loss(&logp3, &[1, 1], 0).is_ok());
    }

    #[test]
    fn invalid_labels_are_rejected() {
        let logp = random_logp(&mut ChaCha8Rng::seed_from_u64(3), 4, 3);
        assert!(ctc_loss(&logp, &[0], 0).is_err(), "blank as label");
        assert!(ctc_loss(&logp, &[7], 0).is_err(), "out of range");
    }

    #[test]
    fn greedy_decode_rules() {
        let decode = |rows: Vec<[f64; 3]>| {
            let arr = Array2::from_shape_vec(
                (rows.len(), 3),
                rows.into_iter().flatten().collect(),
            )
            .unwrap();
            ctc_greedy_decode(&arr, 0)
        };
        // all blanks
        assert!(decode(vec![[0.0, -1.0, -2.0]; 4]).is_empty());
        // a a _ b -> a b
        assert_eq!(
            decode(vec![
                [-2.0, 0.0, -3.0],
                [-2.0, 0.0, -3.0],
                [0.0, -2.0, -3.0],
                [-2.0, -3.0, 0.0],
            ]),
            vec![1, 2]
        );
        // a _ a -> a a
        assert_eq!(
            decode(vec![
                [-2.0, 0.0, -3.0],
                [0.0, -2.0, -3.0],
                [-2.0, 0.0, -3.0],
            ]),
            vec![1, 1]
        );
    }

    #[test]
    fn empty_target_scores_all_blank_path() {
        let logp = random_logp(&mut ChaCha8Rng::seed_from_u64(8), 4, 3);
        let (loss, _) = ctc_loss(&logp, &[], 0).unwrap();
        let expected: f64 = -(0..4).map(|t| logp[(t, 0)]).sum::<f64>();
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn uniform_lattice_loss_is_path_count() {
        // with uniform probabilities the loss counts admissible paths
        let k = 3usize;
        let logp = Array2::from_elem((2, k), -(k as f64).ln());
        let (loss, _) = ctc_loss(&logp, &[1], 0).unwrap();
        let expected = -(3.0 / 9.0f64).ln();
        assert!((loss - expected).abs() < 1e-12);
    }
}
