use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::rbm::{log_2cosh, RbmState};
use super::spin::spin;
use crate::error::{Error, Result};

/// Metropolis settings. One sweep is `n` single-spin-flip proposals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McParams {
    pub burn_in: usize,
    pub thinning: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for McParams {
    fn default() -> Self {
        Self {
            burn_in: 100,
            thinning: 1,
            chains: 8,
            seed: 0,
        }
    }
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Chain<'a> {
    rbm: &'a RbmState,
    x: usize,
    theta: Vec<Complex64>,
    lc: Vec<Complex64>,
}

impl<'a> Chain<'a> {
    fn new(rbm: &'a RbmState, x: usize) -> Self {
        let theta = rbm.theta(x);
        let lc = theta.iter().map(|t| log_2cosh(*t)).collect();
        Self { rbm, x, theta, lc }
    }

    fn propose(&mut self, rng: &mut ChaCha8Rng) {
        let n = self.rbm.n_visible;
        let i = rng.gen_range(0..n);
        let s = spin(self.x, i);
        let mut delta = -2.0 * self.rbm.a[i].re * s;
        let mut new_lc = Vec::with_capacity(self.theta.len());
        for (j, t) in self.theta.iter().enumerate() {
            let nt = t - 2.0 * self.rbm.w[j * n + i] * s;
            let l = log_2cosh(nt);
            delta += (l - self.lc[j]).re;
            new_lc.push(l);
        }
        // |psi'/psi|^2 = exp(2 Re delta)
        let accept = delta >= 0.0 || rng.gen::<f64>() < (2.0 * delta).exp();
        if accept {
            for (j, t) in self.theta.iter_mut().enumerate() {
                *t -= 2.0 * self.rbm.w[j * n + i] * s;
            }
            self.lc = new_lc;
            self.x ^= 1 << i;
        }
    }

    fn sweep(&mut self, rng: &mut ChaCha8Rng) {
        for _ in 0..self.rbm.n_visible {
            self.propose(rng);
        }
    }
}

/// Draws `count` configurations from `|psi|^2 / <psi|psi>`.
///
/// Chain `c` uses ChaCha stream `stream * chains + c` of `params.seed`, so
/// different `stream` values give independent draws and equal arguments
/// give identical output. Samples are returned chain by chain.
pub fn sample_pi(rbm: &RbmState, count: usize, params: &McParams, stream: u64) -> Vec<usize> {
    let chains = params.chains.max(1);
    let dim = 1usize << rbm.n_visible;
    let per_chain: Vec<Vec<usize>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let quota = count / chains + usize::from(c < count % chains);
            if quota == 0 {
                return Vec::new();
            }
            let id = stream.wrapping_mul(chains as u64).wrapping_add(c as u64);
            let mut rng = stream_rng(params.seed, id);
            let mut chain = Chain::new(rbm, rng.gen_range(0..dim));
            for _ in 0..params.burn_in {
                chain.sweep(&mut rng);
            }
            let mut out = Vec::with_capacity(quota);
            for _ in 0..quota {
                for _ in 0..params.thinning {
                    chain.sweep(&mut rng);
                }
                out.push(chain.x);
            }
            out
        })
        .collect();
    per_chain.concat()
}

/// Exact categorical draws from `|b_x|^2`.
pub fn sample_rho(b: &[f64], count: usize, seed: u64) -> Result<Vec<usize>> {
    let norm2: f64 = b.iter().map(|v| v * v).sum();
    if (norm2 - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "b must have unit norm (got squared norm {norm2})"
        )));
    }
    let dist = WeightedIndex::new(b.iter().map(|v| v * v))
        .map_err(|e| Error::invalid(format!("cannot sample b: {e}")))?;
    let mut rng = stream_rng(seed, u64::MAX);
    Ok((0..count).map(|_| dist.sample(&mut rng)).collect())
}

/// Distinct configurations with their relative frequencies, in first-seen order.
pub(crate) fn histogram(samples: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let mut configs = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut slot = std::collections::HashMap::new();
    for &x in samples {
        let k = *slot.entry(x).or_insert_with(|| {
            configs.push(x);
            counts.push(0.0);
            configs.len() - 1
        });
        counts[k] += 1.0;
    }
    let total = samples.len() as f64;
    counts.iter_mut().for_each(|c| *c /= total);
    (configs, counts)
}
