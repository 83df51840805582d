mod common;

use common::*;
use granular::linsys::direct_solve;
use granular::vnls::{exact_global_loss, exact_global_loss_state, fidelity, RbmState};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn exhaustive_estimator_is_the_rayleigh_quotient(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_quantum_system(n, &mut rng);
        let rbm = RbmState::random(n, 2 * n, rng.gen_range(0.05..0.8), &mut rng);
        let est = exhaustive_estimate(&rbm, &sys);
        let exact = exact_global_loss(&rbm, &sys).unwrap();
        prop_assert!((est - exact).abs() <= 1e-10, "{est} vs {exact}");
    }

    #[test]
    fn trace_distance_is_bounded_by_the_loss(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_quantum_system(n, &mut rng);
        let rbm = RbmState::random(n, 2 * n, rng.gen_range(0.05..1.0), &mut rng);
        let (d, bound) = trace_distance_and_bound(&rbm, &sys);
        prop_assert!(d <= bound + 1e-9, "distance {d} > bound {bound}");
    }

    #[test]
    fn zero_loss_exactly_at_the_solution(seed in any::<u64>(), n in 1usize..=5, phase in 0.0..std::f64::consts::TAU) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_quantum_system(n, &mut rng);
        let x = direct_solve(&sys.a, &sys.b).unwrap();
        let c = Complex64::from_polar(rng.gen_range(0.1..10.0), phase);
        let psi: Vec<Complex64> = x.iter().map(|v| c * *v).collect();
        prop_assert!(exact_global_loss_state(&psi, &sys).unwrap() <= 1e-12);
        prop_assert!((fidelity(&psi, &x) - 1.0).abs() <= 1e-9);

        // Any other direction has positive loss and fidelity below one.
        let mut other = psi.clone();
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        other[0] += Complex64::new(0.3, -0.2) * norm;
        prop_assert!(exact_global_loss_state(&other, &sys).unwrap() > 1e-8);
        prop_assert!(fidelity(&other, &x) < 1.0 - 1e-9);
    }

    #[test]
    fn global_factor_leaves_loss_unchanged(seed in any::<u64>(), n in 1usize..=5, phase in 0.0..std::f64::consts::TAU) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_quantum_system(n, &mut rng);
        let rbm = RbmState::random(n, n, 0.5, &mut rng);
        let psi = rbm.statevector();
        let c = Complex64::from_polar(rng.gen_range(0.01..100.0), phase);
        let scaled: Vec<Complex64> = psi.iter().map(|z| z * c).collect();
        let a = exact_global_loss_state(&psi, &sys).unwrap();
        let b = exact_global_loss_state(&scaled, &sys).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }
}
