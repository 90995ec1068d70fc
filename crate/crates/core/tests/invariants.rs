//! Property tests of the public model API on randomized instances.

use hris_isac::baselines::{random_raw_pair, random_search};
use hris_isac::channel::{steering_vector_upa, C64};
use hris_isac::comms::{rate_from_sinr, sinr_user, sum_rate, NoiseParams, SensingInterference};
use hris_isac::feasibility::{check_amplitudes, check_bs_power, check_ris_power};
use hris_isac::sensing::{crb_angles, fim};
use hris_isac::verify::{random_instance, sinr_scalar_oracle};
use hris_isac::{Exec, ExperimentConfig, Scenario};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn desk_scenario(seed: u64) -> Scenario {
    Scenario::build(&ExperimentConfig::desk(), seed).expect("desk scenario builds")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn steering_vectors_have_unit_norm(n1 in 1usize..9, n2 in 1usize..9, p1 in -10.0f64..10.0, p2 in -10.0f64..10.0) {
        let v = steering_vector_upa((n1, n2), (p1, p2));
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_feasible(seed in 0u64..500, log_scale in -3.0f64..3.0) {
        let s = desk_scenario(seed % 7 + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, phi) = random_raw_pair(&s, &mut rng);
        let k = C64::new(10f64.powf(log_scale), 0.0);
        let once = s.project(&(w * k), &(phi * k));
        let twice = s.project(&once.w, &once.phi);
        prop_assert!((&once.w - &twice.w).norm() <= 1e-12 * once.w.norm().max(1e-300));
        prop_assert!((&once.phi - &twice.phi).norm() <= 1e-12 * once.phi.norm());
        prop_assert!(check_bs_power(&once.w, &s.budgets).pass);
        prop_assert!(check_ris_power(&once, &s.channels, &s.noise, &s.budgets).pass);
        prop_assert!(check_amplitudes(&once, &s.budgets).pass);
    }

    #[test]
    fn sinr_matches_scalar_expansion(seed in 0u64..1000, q in 0usize..6, target in any::<bool>()) {
        let (pp, ch) = random_instance(seed, 4, 6, 3, q);
        let np = NoiseParams { sigma_a_sq: 0.2, sigma_o_sq: 0.5 };
        let mode = if target { SensingInterference::Target } else { SensingInterference::User };
        for k in 0..3 {
            let fast = sinr_user(k, &pp, &ch, &np, mode).unwrap();
            let slow = sinr_scalar_oracle(k, &pp, &ch, &np, target);
            prop_assert!((fast - slow).abs() <= 1e-10 * slow);
        }
    }

    #[test]
    fn rate_is_increasing_in_sinr(a in 0.0f64..1e6, b in 0.0f64..1e6) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(rate_from_sinr(lo) <= rate_from_sinr(hi));
    }

    #[test]
    fn fim_is_symmetric_psd_and_crb_scales_inversely(seed in 1u64..40, alpha in 1.5f64..20.0) {
        let mut s = desk_scenario(seed);
        s.noise.sigma_a_sq = 0.0;
        let (w, phi) = random_raw_pair(&s, &mut ChaCha8Rng::seed_from_u64(seed));
        let pp = s.project(&w, &phi);
        let fm = fim(&pp, &s.channels, &s.target, &s.noise, &s.geometry).unwrap();
        prop_assert!(fm.is_symmetric() && fm.is_psd());
        let base = crb_angles(&fm).unwrap().trace();
        let mut scaled = pp.clone();
        scaled.w *= C64::new(alpha.sqrt(), 0.0);
        let t = crb_angles(&fim(&scaled, &s.channels, &s.target, &s.noise, &s.geometry).unwrap()).unwrap().trace();
        prop_assert!((t * alpha - base).abs() <= 1e-9 * base);
    }

    #[test]
    fn passive_surface_ignores_dynamic_noise_in_rates(seed in 1u64..40, sigma_a in 0.0f64..1.0) {
        let s = desk_scenario(seed).passive();
        let (w, phi) = random_raw_pair(&s, &mut ChaCha8Rng::seed_from_u64(seed));
        let pp = s.project(&w, &phi);
        let quiet = NoiseParams { sigma_a_sq: 0.0, ..s.noise };
        let noisy = NoiseParams { sigma_a_sq: sigma_a, ..s.noise };
        let a = sum_rate(&pp, &s.channels, &quiet, s.interference).unwrap();
        let b = sum_rate(&pp, &s.channels, &noisy, s.interference).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn random_search_is_independent_of_execution(seed in 0u64..1000) {
        let s = desk_scenario(2);
        let seq = random_search(&s, 24, seed, Exec::Sequential).unwrap();
        let par = random_search(&s, 24, seed, Exec::Parallel).unwrap();
        prop_assert_eq!(seq, par);
    }

    #[test]
    fn larger_random_budgets_never_do_worse(seed in 0u64..200, extra in 1usize..40) {
        let s = desk_scenario(3);
        let small = random_search(&s, 16, seed, Exec::Sequential).unwrap();
        let large = random_search(&s, 16 + extra, seed, Exec::Sequential).unwrap();
        prop_assert!(large.eval.reward >= small.eval.reward);
        prop_assert_eq!(&large.history[..16], &small.history[..]);
    }

    #[test]
    fn config_hash_survives_toml_and_ignores_run_section(a_max in 1.0f64..10.0, seq in any::<bool>()) {
        let mut cfg = ExperimentConfig::desk();
        cfg.budgets.a_max = a_max;
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.run.exec = if seq { Exec::Sequential } else { Exec::Parallel };
        prop_assert_eq!(other.hash(), cfg.hash());
    }
}
