//! Spikes-to-probabilities readout: temporal average pooling, two hidden
//! fully connected layers and a log-softmax output layer.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::frontend::LEAKY_SLOPE;

/// Temporal pooling applied to the last layer's spike trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    /// Non-overlapping mean over a fixed number of steps; the tail is
    /// zero-padded to a full block. With `40 / dt_ms` this downsamples to
    /// 25 Hz.
    Fixed(usize),
    /// Mean over the whole utterance, for single-label classification.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadoutConfig {
    pub pool: PoolMode,
    pub n_phoneme_features: usize,
    pub n_outputs: usize,
}

impl ReadoutConfig {
    /// Standard pooling factor for a given simulation step.
    pub fn pool_factor_for_dt(dt_ms: f64) -> usize {
        (40.0 / dt_ms).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// Input by output.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn init(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let k = 1.0 / (n_in as f64).sqrt();
        Self {
            w: Array2::from_shape_fn((n_in, n_out), |_| rng.random_range(-k..k)),
            b: Array1::zeros(n_out),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.w);
        for mut row in z.rows_mut() {
            row += &self.b;
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub config: ReadoutConfig,
    pub fc1: Dense,
    pub fc2: Dense,
    pub fc3: Dense,
}

#[derive(Debug, Clone)]
pub struct ReadoutCache {
    pub t_len: usize,
    pub pooled: Array2<f64>,
    pub z1: Array2<f64>,
    pub h1: Array2<f64>,
    pub z2: Array2<f64>,
    pub h2: Array2<f64>,
    pub logp: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ReadoutGradients {
    pub fc1_w: Array2<f64>,
    pub fc1_b: Array1<f64>,
    pub fc2_w: Array2<f64>,
    pub fc2_b: Array1<f64>,
    pub fc3_w: Array2<f64>,
    pub fc3_b: Array1<f64>,
}

fn leaky(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

impl Readout {
    pub fn init(n_in: usize, config: ReadoutConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = config.n_phoneme_features;
        Self {
            config,
            fc1: Dense::init(n_in, f, &mut rng),
            fc2: Dense::init(f, f, &mut rng),
            fc3: Dense::init(f, config.n_outputs, &mut rng),
        }
    }

    fn pool(&self, spikes: &Array2<f64>) -> (Array2<f64>, usize) {
        let (t_len, n) = spikes.dim();
        match self.config.pool {
            PoolMode::Global => {
                let mut pooled = Array2::<f64>::zeros((1, n));
                for row in spikes.rows() {
                    for (k, &s) in row.iter().enumerate() {
                        pooled[(0, k)] += s;
                    }
                }
                pooled /= t_len as f64;
                (pooled, t_len)
            }
            PoolMode::Fixed(p) => {
                let blocks = t_len.div_ceil(p);
                let mut pooled = Array2::<f64>::zeros((blocks, n));
                for t in 0..t_len {
                    let m = t / p;
                    for k in 0..n {
                        pooled[(m, k)] += spikes[(t, k)];
                    }
                }
                pooled /= p as f64;
                (pooled, p)
            }
        }
    }

    /// Log-probability lattice (pooled time by outputs); every row
    /// normalizes to probability one.
    pub fn forward(&self, spikes: &Array2<f64>) -> Result<(Array2<f64>, ReadoutCache)> {
        if spikes.ncols() != self.fc1.w.nrows() {
            return Err(CoreError::ShapeMismatch(format!(
                "readout expects {} inputs, got {}",
                self.fc1.w.nrows(),
                spikes.ncols()
            )));
        }
        if let PoolMode::Fixed(p) = self.config.pool {
            if p == 0 {
                return Err(CoreError::InvalidParameter("pool factor must be >= 1".into()));
            }
        }
        let (pooled, _) = self.pool(spikes);
        let z1 = self.fc1.forward(&pooled);
        let h1 = z1.mapv(leaky);
        let z2 = self.fc2.forward(&h1);
        let h2 = z2.mapv(leaky);
        let z3 = self.fc3.forward(&h2);
        let mut logp = z3;
        for mut row in logp.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a: f64, &b| a.max(b));
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        let cache = ReadoutCache {
            t_len: spikes.nrows(),
            pooled,
            z1,
            h1,
            z2,
            h2,
            logp: logp.clone(),
        };
        Ok((logp, cache))
    }

    /// Gradient of the loss with respect to the input spike trains plus
    /// the weight gradients, given the gradient on the log-probabilities.
    pub fn backward(&self, cache: &ReadoutCache, d_logp: &Array2<f64>) -> (Array2<f64>, ReadoutGradients) {
        // log-softmax backward
        let mut d_z3 = d_logp.clone();
        for (mut row, (lrow, grow)) in d_z3
            .rows_mut()
            .into_iter()
            .zip(cache.logp.rows().into_iter().zip(d_logp.rows()))
        {
            let gsum: f64 = grow.sum();
            for (k, v) in row.iter_mut().enumerate() {
                *v -= lrow[k].exp() * gsum;
            }
        }

        let fc3_w = cache.h2.t().dot(&d_z3);
        let fc3_b = d_z3.sum_axis(ndarray::Axis(0));
        let mut d_h2 = d_z3.dot(&self.fc3.w.t());
        for ((m, k), v) in d_h2.indexed_iter_mut() {
            *v *= leaky_grad(cache.z2[(m, k)]);
        }
        let fc2_w = cache.h1.t().dot(&d_h2);
        let fc2_b = d_h2.sum_axis(ndarray::Axis(0));
        let mut d_h1 = d_h2.dot(&self.fc2.w.t());
        for ((m, k), v) in d_h1.indexed_iter_mut() {
            *v *= leaky_grad(cache.z1[(m, k)]);
        }
        let fc1_w = cache.pooled.t().dot(&d_h1);
        let fc1_b = d_h1.sum_axis(ndarray::Axis(0));
        let d_pooled = d_h1.dot(&self.fc1.w.t());

        let n = d_pooled.ncols();
        let mut d_spikes = Array2::<f64>::zeros((cache.t_len, n));
        match self.config.pool {
            PoolMode::Global => {
                let scale = 1.0 / cache.t_len as f64;
                for t in 0..cache.t_len {
                    for k in 0..n {
                        d_spikes[(t, k)] = d_pooled[(0, k)] * scale;
                    }
                }
            }
            PoolMode::Fixed(p) => {
                let scale = 1.0 / p as f64;
                for t in 0..cache.t_len {
                    let m = t / p;
                    for k in 0..n {
                        d_spikes[(t, k)] = d_pooled[(m, k)] * scale;
                    }
                }
            }
        }
        (
            d_spikes,
            ReadoutGradients {
                fc1_w,
                fc1_b,
                fc2_w,
                fc2_b,
                fc3_w,
                fc3_b,
            },
        )
    }
}
