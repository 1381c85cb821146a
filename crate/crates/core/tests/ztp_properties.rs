use hsmm_core::{ztp_ln_pmf, ztp_mean, ztp_pmf, ztp_sample};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn total_mass(phi: f64) -> f64 {
    let mut total = 0.0;
    let mut tau = 1;
    loop {
        let p = ztp_pmf(tau, phi).unwrap();
        total += p;
        if tau as f64 > phi && p < 1e-20 {
            return total;
        }
        tau += 1;
    }
}

#[test]
fn pmf_sums_to_one() {
    for phi in [0.1, 1.0, 10.0, 100.0] {
        let total = total_mass(phi);
        assert!((total - 1.0).abs() < 1e-12, "phi = {phi}: {total}");
    }
}

#[test]
fn sample_means_match_the_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for phi in [0.1, 1.0, 5.0, 30.0] {
        let n = 1_000_000;
        let sum: u64 = (0..n).map(|_| ztp_sample(phi, &mut rng).unwrap()).sum();
        let mean = sum as f64 / n as f64;
        let target = phi / (1.0 - (-phi).exp());
        assert!((mean / target - 1.0).abs() < 0.01, "phi = {phi}: {mean} vs {target}");
        assert!((ztp_mean(phi) - target).abs() < 1e-12 * target);
    }
}

#[test]
fn sample_frequencies_follow_the_pmf() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n = 200_000;
    let mut counts = [0usize; 8];
    for _ in 0..n {
        let t = ztp_sample(2.0, &mut rng).unwrap() as usize;
        counts[t.min(7)] += 1;
    }
    for (tau, &c) in counts.iter().enumerate().take(7).skip(1) {
        let p = ztp_pmf(tau as u64, 2.0).unwrap();
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((c as f64 / n as f64 - p).abs() < 5.0 * sd, "tau = {tau}");
    }
}

proptest! {
    #[test]
    fn log_pmf_matches_reference(phi in 1e-3f64..500.0, tau in 1u64..400) {
        let ours = ztp_ln_pmf(tau, phi).unwrap();
        let reference = hsmm_testkit::ztp_ln_pmf(tau, phi);
        prop_assert!((ours - reference).abs() <= 1e-9 * reference.abs().max(1.0));
    }

    #[test]
    fn samples_are_positive(phi in 1e-6f64..1e3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(ztp_sample(phi, &mut rng).unwrap() >= 1);
    }
}
