use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::spin::{spin, SpinConfiguration};

type C64 = Complex64;

/// `log(2 cosh z)` without overflow for large `|Re z|`.
pub fn log_2cosh(z: C64) -> C64 {
    if z.re >= 0.0 {
        z + (C64::new(1.0, 0.0) + (-2.0 * z).exp()).ln()
    } else {
        -z + (C64::new(1.0, 0.0) + (2.0 * z).exp()).ln()
    }
}

/// Complex restricted Boltzmann machine over `n` spins.
///
/// `w` is stored row-major with shape `n_hidden x n_visible`. The flat
/// parameter order is `[a, c, w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RbmState {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub a: Vec<C64>,
    pub c: Vec<C64>,
    pub w: Vec<C64>,
}

impl RbmState {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            n_visible,
            n_hidden,
            a: vec![C64::default(); n_visible],
            c: vec![C64::default(); n_hidden],
            w: vec![C64::default(); n_hidden * n_visible],
        }
    }

    /// Complex Gaussian parameters, real and imaginary parts each with
    /// standard deviation `std`.
    pub fn random<R: Rng + ?Sized>(n_visible: usize, n_hidden: usize, std: f64, rng: &mut R) -> Self {
        let mut rbm = Self::zeros(n_visible, n_hidden);
        let mut params = rbm.params();
        for p in params.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *p = C64::new(std * re, std * im);
        }
        rbm.set_params(&params);
        rbm
    }

    pub fn hidden_density(&self) -> f64 {
        self.n_hidden as f64 / self.n_visible as f64
    }

    pub fn n_params(&self) -> usize {
        self.n_visible + self.n_hidden + self.n_hidden * self.n_visible
    }

    pub fn params(&self) -> Vec<C64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.a);
        p.extend_from_slice(&self.c);
        p.extend_from_slice(&self.w);
        p
    }

    pub fn set_params(&mut self, p: &[C64]) {
        assert_eq!(p.len(), self.n_params(), "parameter vector length");
        let (a, rest) = p.split_at(self.n_visible);
        let (c, w) = rest.split_at(self.n_hidden);
        self.a.copy_from_slice(a);
        self.c.copy_from_slice(c);
        self.w.copy_from_slice(w);
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Hidden pre-activations `theta_j = c_j + sum_i W_ji x_i`.
    pub fn theta(&self, index: usize) -> Vec<C64> {
        let n = self.n_visible;
        (0..self.n_hidden)
            .map(|j| {
                let row = &self.w[j * n..(j + 1) * n];
                row.iter()
                    .enumerate()
                    .fold(self.c[j], |acc, (i, w)| acc + w * spin(index, i))
            })
            .collect()
    }

    pub fn log_amplitude(&self, index: usize) -> C64 {
        let visible: C64 = self
            .a
            .iter()
            .enumerate()
            .map(|(i, a)| a * spin(index, i))
            .sum();
        self.theta(index)
            .into_iter()
            .fold(visible, |acc, t| acc + log_2cosh(t))
    }

    pub fn log_amplitude_of(&self, x: &SpinConfiguration) -> C64 {
        assert_eq!(x.len(), self.n_visible, "spin count");
        self.log_amplitude(x.index())
    }

    /// `O_k = d log psi / d theta_k` at `index`, in flat parameter order.
    pub fn log_derivatives(&self, index: usize, out: &mut [C64]) {
        let n = self.n_visible;
        let nh = self.n_hidden;
        for i in 0..n {
            out[i] = C64::new(spin(index, i), 0.0);
        }
        for (j, t) in self.theta(index).into_iter().enumerate() {
            let th = t.tanh();
            out[n + j] = th;
            let base = n + nh + j * n;
            for i in 0..n {
                out[base + i] = th * spin(index, i);
            }
        }
    }

    /// All `2^n` log-amplitudes.
    pub fn log_amplitudes(&self) -> Vec<C64> {
        (0..1usize << self.n_visible)
            .map(|x| self.log_amplitude(x))
            .collect()
    }

    /// Unit-norm state vector.
    pub fn statevector(&self) -> Vec<C64> {
        let logs = self.log_amplitudes();
        let shift = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let mut psi: Vec<C64> = logs.iter().map(|l| (l - shift).exp()).collect();
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|z| *z /= norm);
        psi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_give_uniform_state() {
        let rbm = RbmState::zeros(4, 8);
        for x in 0..16 {
            let l = rbm.log_amplitude(x);
            assert!((l.re - 8.0 * 2f64.ln()).abs() < 1e-14);
            assert_eq!(l.im, 0.0);
        }
    }

    #[test]
    fn visible_bias_shifts_by_two() {
        let mut rbm = RbmState::zeros(3, 6);
        rbm.a[0] = C64::new(1.0, 0.0);
        let up = rbm.log_amplitude(0b000);
        let down = rbm.log_amplitude(0b001);
        assert!(((up - down).re - 2.0).abs() < 1e-14);
        assert_eq!((up - down).im, 0.0);
    }

    #[test]
    fn log_2cosh_matches_direct_form() {
        for z in [C64::new(0.3, -0.7), C64::new(-1.2, 2.0), C64::new(0.0, 0.5)] {
            let direct = (2.0 * z.cosh()).ln();
            assert!((log_2cosh(z) - direct).norm() < 1e-12);
        }
        let big = log_2cosh(C64::new(800.0, 0.3));
        assert!((big.re - 800.0).abs() < 1e-12);
        let neg = log_2cosh(C64::new(-800.0, 0.3));
        assert!((neg.re - 800.0).abs() < 1e-12);
    }

    #[test]
    fn parameter_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rbm = RbmState::random(3, 5, 0.1, &mut rng);
        let mut other = RbmState::zeros(3, 5);
        other.set_params(&rbm.params());
        assert_eq!(other, rbm);
        assert_eq!(rbm.n_params(), 3 + 5 + 15);
    }

    #[test]
    fn log_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rbm = RbmState::random(3, 4, 0.5, &mut rng);
        let p = rbm.params();
        let mut o = vec![C64::default(); p.len()];
        let h = 1e-6;
        for x in 0..8 {
            rbm.log_derivatives(x, &mut o);
            for k in 0..p.len() {
                let mut plus = rbm.clone();
                let mut minus = rbm.clone();
                let mut pp = p.clone();
                pp[k] += h;
                plus.set_params(&pp);
                pp[k] -= 2.0 * h;
                minus.set_params(&pp);
                let fd = (plus.log_amplitude(x) - minus.log_amplitude(x)) / (2.0 * h);
                assert!((fd - o[k]).norm() < 1e-7, "x={x} k={k}");
            }
        }
    }

    proptest! {
        #[test]
        fn finite_for_large_weights(
            seed in any::<u64>(),
            scale in 1.0f64..50.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rbm = RbmState::random(6, 12, 1.0, &mut rng);
            for w in rbm.w.iter_mut() {
                let r: f64 = rng.gen_range(-1.0..1.0);
                *w = C64::new(scale * r, scale * rng.gen_range(-1.0..1.0));
            }
            for x in 0..64 {
                let l = rbm.log_amplitude(x);
                prop_assert!(l.re.is_finite() && l.im.is_finite());
            }
        }
    }
}
