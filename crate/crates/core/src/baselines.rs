//! Non-learning comparison schemes: best-of-N random search, a greedy
//! coordinate search over a phase/amplitude codebook, and the passive-surface
//! configuration.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::{CMatrix, CVector, C64};
use crate::comms::PrecoderPair;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Exec};
use crate::scenario::{Evaluation, Scenario};

/// Baseline settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// Draws evaluated by random search.
    pub random_samples: usize,
    /// Uniform phases tried per element by the greedy search.
    pub greedy_codebook: usize,
    pub greedy_max_sweeps: usize,
    /// A sweep that improves the reward by less than this ends the search.
    pub greedy_tolerance: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            random_samples: 2000,
            greedy_codebook: 16,
            greedy_max_sweeps: 10,
            greedy_tolerance: 1e-4,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.random_samples == 0 || self.greedy_max_sweeps == 0 {
            return Err(Error::Config(
                "baselines.random_samples and greedy_max_sweeps must be >= 1".into(),
            ));
        }
        if self.greedy_codebook < 2 {
            return Err(Error::Config(
                "baselines.greedy_codebook must be >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Pair chosen by a baseline with its metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub pair: PrecoderPair,
    pub eval: Evaluation,
    /// Reward after every accepted move (greedy) or running best (random).
    pub history: Vec<f64>,
}

/// Seed of sample `i` in a random search with base `seed`; sample streams
/// are nested, so a larger budget only adds draws.
fn sample_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (i as u64).wrapping_add(0x5851_f42d_4c95_7f2d)
}

/// One random raw pair: complex Gaussian `W` entries with variance `P_BS`,
/// uniform phases, and amplitudes uniform in `[0, a_max)` on active elements.
///
/// Every element consumes the same draws whether it is active or not, so
/// instances that differ only in budgets or in the active set see the same
/// phases (common random numbers).
pub fn random_raw_pair<R: Rng + ?Sized>(s: &Scenario, rng: &mut R) -> (CMatrix, CVector) {
    let (m, k) = (s.bs_antennas(), s.num_users());
    let unit = Normal::new(0.0, 0.5f64.sqrt()).expect("finite variance");
    let scale = s.budgets.p_bs_max.sqrt();
    let w = CMatrix::from_fn(m, k + 1, |_, _| {
        C64::new(unit.sample(rng), unit.sample(rng)) * scale
    });
    let phi = CVector::from_fn(s.ris_elements(), |n, _| {
        let theta = rng.random_range(0.0..2.0 * PI);
        let u: f64 = rng.random();
        let amp = if s.active.contains(n) {
            s.budgets.a_max * u
        } else {
            1.0
        };
        C64::from_polar(amp, theta)
    });
    (w, phi)
}

/// Best of `n_samples` projected random pairs (ties go to the earliest).
pub fn random_search(
    s: &Scenario,
    n_samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<BaselineResult> {
    if n_samples == 0 {
        return Err(Error::Usage(
            "random search needs at least one sample".into(),
        ));
    }
    let evals = map_indexed(exec, n_samples, |i| -> Result<(PrecoderPair, Evaluation)> {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, i));
        let (w, phi) = random_raw_pair(s, &mut rng);
        let pp = s.project(&w, &phi);
        let e = s.evaluate(&pp)?;
        Ok((pp, e))
    });
    let mut best: Option<(PrecoderPair, Evaluation)> = None;
    let mut history = Vec::with_capacity(n_samples);
    for r in evals {
        let (pp, e) = r?;
        if best.as_ref().is_none_or(|b| e.reward > b.1.reward) {
            best = Some((pp, e));
        }
        history.push(best.as_ref().unwrap().1.reward);
    }
    let (pair, eval) = best.unwrap();
    Ok(BaselineResult {
        pair,
        eval,
        history,
    })
}

/// Matched-filter beamformer for the surface `phi`: column `k` points along
/// `(g_k^H Phi H)^H` (the sensing column along the target channel), with
/// the budget split equally across non-zero columns.
pub fn matched_filter(s: &Scenario, phi: &CVector) -> CMatrix {
    let ch = &s.channels;
    let mut g_phi = ch.g.clone();
    for (c, p) in phi.iter().enumerate() {
        g_phi.column_mut(c).iter_mut().for_each(|x| *x *= p);
    }
    let eff = g_phi * &ch.h; // (K+1) x M, row k = g_k^H Phi H
    let mut w = eff.adjoint();
    let live: Vec<usize> = (0..w.ncols())
        .filter(|&c| w.column(c).norm() > 0.0)
        .collect();
    if live.is_empty() {
        return w;
    }
    let per = (s.budgets.p_bs_max / live.len() as f64).sqrt();
    for c in 0..w.ncols() {
        let norm = w.column(c).norm();
        if norm > 0.0 {
            w.column_mut(c).iter_mut().for_each(|x| *x *= per / norm);
        }
    }
    w
}

/// Codebook entries `(amplitude, phase)` tried on element `n`.
fn candidates(s: &Scenario, n: usize, codebook: usize) -> Vec<C64> {
    let amps: Vec<f64> = if s.active.contains(n) {
        vec![1.0, s.budgets.a_max / 2.0, s.budgets.a_max]
    } else {
        vec![1.0]
    };
    let mut out = Vec::with_capacity(amps.len() * codebook);
    for &a in &amps {
        for i in 0..codebook {
            out.push(C64::from_polar(a, 2.0 * PI * i as f64 / codebook as f64));
        }
    }
    out
}

/// Coordinate search: matched-filter `W`, then element-by-element codebook
/// sweeps, re-deriving `W` after each sweep.
pub fn greedy_optimize(s: &Scenario, cfg: &BaselineConfig) -> Result<BaselineResult> {
    cfg.validate()?;
    let mut phi = CVector::from_element(s.ris_elements(), C64::new(1.0, 0.0));
    let mut pair = s.project(&matched_filter(s, &phi), &phi);
    let mut eval = s.evaluate(&pair)?;
    let mut history = vec![eval.reward];
    for _ in 0..cfg.greedy_max_sweeps {
        let start = eval.reward;
        for n in 0..s.ris_elements() {
            let mut trial = phi.clone();
            for c in candidates(s, n, cfg.greedy_codebook) {
                trial[n] = c;
                let pp = s.project(&pair.w, &trial);
                let e = s.evaluate(&pp)?;
                if e.reward > eval.reward {
                    phi = trial.clone();
                    pair = pp;
                    eval = e;
                    history.push(eval.reward);
                }
            }
        }
        let pp = s.project(&matched_filter(s, &phi), &phi);
        let e = s.evaluate(&pp)?;
        if e.reward >= eval.reward {
            pair = pp;
            eval = e;
            history.push(eval.reward);
        }
        if eval.reward - start < cfg.greedy_tolerance {
            break;
        }
    }
    Ok(BaselineResult {
        pair,
        eval,
        history,
    })
}

/// Copy of `base` with no active elements and amplitudes capped at one.
pub fn passive_ris_config(base: &ExperimentConfig) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.system.active_elements = 0;
    cfg.budgets.a_max = 1.0;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::{check_amplitudes, check_bs_power, check_ris_power};

    fn scenario(seed: u64) -> Scenario {
        Scenario::build(&ExperimentConfig::desk(), seed).unwrap()
    }

    fn assert_power_feasible(s: &Scenario, pp: &PrecoderPair) {
        assert!(check_bs_power(&pp.w, &s.budgets).pass);
        assert!(check_ris_power(pp, &s.channels, &s.noise, &s.budgets).pass);
        assert!(check_amplitudes(pp, &s.budgets).pass);
    }

    #[test]
    fn single_sample_is_that_sample() {
        let s = scenario(1);
        let res = random_search(&s, 1, 9, Exec::Sequential).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(9, 0));
        let (w, phi) = random_raw_pair(&s, &mut rng);
        assert_eq!(res.pair, s.project(&w, &phi));
        assert!(random_search(&s, 0, 9, Exec::Sequential).is_err());
    }

    #[test]
    fn best_reward_grows_with_budget() {
        let s = scenario(2);
        let small = random_search(&s, 50, 4, Exec::Parallel).unwrap();
        let large = random_search(&s, 200, 4, Exec::Parallel).unwrap();
        assert!(large.eval.reward >= small.eval.reward);
        assert_eq!(small.history[..], large.history[..50]);
        assert!(large.history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn random_search_is_seeded_and_exec_independent() {
        let s = scenario(3);
        let a = random_search(&s, 64, 5, Exec::Parallel).unwrap();
        let b = random_search(&s, 64, 5, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert_power_feasible(&s, &a.pair);
    }

    #[test]
    fn matched_filter_meets_budget() {
        let s = scenario(4);
        let w = matched_filter(&s, &CVector::from_element(16, C64::new(1.0, 0.0)));
        assert!((w.norm_squared() - s.budgets.p_bs_max).abs() < 1e-12);
    }

    #[test]
    fn greedy_moves_never_lower_reward() {
        let s = scenario(5);
        let cfg = BaselineConfig {
            greedy_max_sweeps: 2,
            ..BaselineConfig::default()
        };
        let res = greedy_optimize(&s, &cfg).unwrap();
        assert!(res.history.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*res.history.last().unwrap(), res.eval.reward);
        assert_power_feasible(&s, &res.pair);
    }

    #[test]
    fn greedy_matches_exhaustive_search_on_one_element() {
        let mut cfg = ExperimentConfig::desk();
        cfg.system.ris_elements = 1;
        cfg.system.active_elements = 0;
        cfg.system.users = 1;
        let s = Scenario::build(&cfg, 6).unwrap();
        let bc = BaselineConfig {
            greedy_codebook: 8,
            ..BaselineConfig::default()
        };
        let res = greedy_optimize(&s, &bc).unwrap();
        let best = candidates(&s, 0, 8)
            .into_iter()
            .map(|c| {
                let phi = CVector::from_element(1, c);
                s.evaluate(&s.project(&matched_filter(&s, &phi), &phi))
                    .unwrap()
                    .reward
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            res.eval.reward >= best * (1.0 + 1e-12),
            "{} vs {best}",
            res.eval.reward
        );
    }

    #[test]
    fn passive_config_strips_active_elements() {
        let cfg = passive_ris_config(&ExperimentConfig::desk());
        assert_eq!(cfg.system.active_elements, 0);
        let s = Scenario::build(&cfg, 1).unwrap();
        assert!(s.active.is_empty());
        let pp = s.initial_pair();
        assert_eq!(
            crate::feasibility::ris_power(&pp, &s.channels, &s.noise),
            0.0
        );
    }
}
