//! End-to-end runs of every scheme on a shortened desk configuration.

use hris_isac::experiment::{run_scheme, sweep_elements, sweep_power, Scheme, STATUS_OK};
use hris_isac::{Exec, ExperimentConfig};

fn short_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk();
    cfg.agent.episodes = 2;
    cfg.env.steps_per_episode = 25;
    cfg.agent.batch_size = 16;
    cfg.baselines.random_samples = 40;
    cfg
}

#[test]
fn every_scheme_reports_consistent_summaries() {
    let cfg = short_config();
    for scheme in Scheme::ALL {
        let out = run_scheme(&cfg, scheme, 4).unwrap();
        let s = &out.summary;
        assert!(s.best_reward.is_finite(), "{scheme}");
        assert!(s.best_sum_rate >= 0.0 && s.best_crb > 0.0, "{scheme}");
        let best_seen = out
            .telemetry
            .iter()
            .map(|r| r.reward)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(s.best_reward, best_seen, "{scheme}");
        assert!(
            out.telemetry
                .windows(2)
                .all(|w| w[1].best_reward >= w[0].best_reward),
            "{scheme}"
        );
        assert!(out
            .telemetry
            .iter()
            .all(|r| r.scheme == scheme && r.seed == 4 && r.config_hash.len() == 16));
    }
}

#[test]
fn ddpg_logs_every_step() {
    let cfg = short_config();
    let out = run_scheme(&cfg, Scheme::Ddpg, 1).unwrap();
    assert_eq!(out.telemetry.len(), 50);
    assert_eq!(out.summary.steps, 50);
    assert!(out.pair.amplitudes_within(cfg.budgets.a_max));
}

#[test]
fn passive_scheme_uses_a_passive_surface() {
    let out = run_scheme(&short_config(), Scheme::PassiveRis, 2).unwrap();
    assert!(out.pair.active.is_empty());
    assert!(out.pair.phi.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
}

#[test]
fn sweeps_cover_their_grids_and_agree_across_execution() {
    let cfg = short_config();
    let schemes = [Scheme::Random, Scheme::Greedy];
    let seq = sweep_power(&cfg, &[20.0, 30.0], &schemes, &[1, 2], Exec::Sequential);
    let par = sweep_power(&cfg, &[20.0, 30.0], &schemes, &[1, 2], Exec::Parallel);
    assert_eq!(seq.len(), 8);
    assert_eq!(seq, par);
    assert!(seq.iter().all(|r| r.status == STATUS_OK));

    let rows = sweep_elements(
        &cfg,
        &[8, 12],
        &[2.0, 5.0],
        &[Scheme::Random],
        &[1],
        Exec::Parallel,
    );
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(
            r.q,
            if r.surface == "passive" {
                0
            } else {
                r.n.div_ceil(4)
            }
        );
    }
}
