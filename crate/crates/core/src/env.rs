//! The decision process seen by the agent.
//!
//! State and action vectors store each complex block as all real parts
//! (row-major) followed by all imaginary parts. The state concatenates
//! `W`, `diag(Phi)`, `H`, `G`; the action concatenates raw `W` and raw
//! `diag(Phi)`.

use serde::{Deserialize, Serialize};

use crate::channel::{CMatrix, CVector, C64};
use crate::comms::PrecoderPair;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::scenario::{Evaluation, Scenario};

/// `2M(K+1) + 2N + 2NM + 2N(K+1)`.
pub fn state_dim(m: usize, n: usize, k: usize) -> usize {
    2 * m * (k + 1) + 2 * n + 2 * n * m + 2 * n * (k + 1)
}

/// `2M(K+1) + 2N`.
pub fn action_dim(m: usize, n: usize, k: usize) -> usize {
    2 * m * (k + 1) + 2 * n
}

fn push_block<'a>(out: &mut Vec<f64>, entries: impl Iterator<Item = &'a C64> + Clone, scale: f64) {
    out.extend(entries.clone().map(|z| z.re * scale));
    out.extend(entries.map(|z| z.im * scale));
}

fn row_major(m: &CMatrix) -> impl Iterator<Item = &C64> + Clone {
    let cols = m.ncols();
    (0..m.len()).map(move |i| &m[(i / cols, i % cols)])
}

fn read_block(src: &[f64], rows: usize, cols: usize) -> CMatrix {
    let len = rows * cols;
    CMatrix::from_fn(rows, cols, |r, c| {
        C64::new(src[r * cols + c], src[len + r * cols + c])
    })
}

/// Per-block factors applied by [`normalize_state`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateScales {
    pub w: f64,
    pub phi: f64,
    pub channel: f64,
}

impl StateScales {
    /// `1/sqrt(P_BS)`, `1/a_max` and `1/sqrt(NM/PL(f, d))`.
    pub fn for_scenario(s: &Scenario) -> Result<Self> {
        let (n, m) = s.channels.h.shape();
        let pl = s.propagation.path_loss(s.geometry.bs_ris_distance_m)?;
        Ok(Self {
            w: 1.0 / s.budgets.p_bs_max.sqrt(),
            phi: 1.0 / s.budgets.a_max,
            channel: 1.0 / ((n * m) as f64 / pl).sqrt(),
        })
    }
}

/// Flattens `(W, Phi, H, G)` without scaling.
pub fn raw_state(pp: &PrecoderPair, s: &Scenario) -> Vec<f64> {
    let (n, m) = s.channels.h.shape();
    let mut out = Vec::with_capacity(state_dim(m, n, s.num_users()));
    push_block(&mut out, row_major(&pp.w), 1.0);
    push_block(&mut out, pp.phi.iter(), 1.0);
    push_block(&mut out, row_major(&s.channels.h), 1.0);
    push_block(&mut out, row_major(&s.channels.g), 1.0);
    out
}

/// Scales each block of a raw state by its fixed factor. Not idempotent.
pub fn normalize_state(
    raw: &[f64],
    m: usize,
    n: usize,
    k: usize,
    scales: &StateScales,
) -> Result<Vec<f64>> {
    if raw.len() != state_dim(m, n, k) {
        return Err(Error::Dimension(format!(
            "state has {} entries, expected {}",
            raw.len(),
            state_dim(m, n, k)
        )));
    }
    let w_end = 2 * m * (k + 1);
    let phi_end = w_end + 2 * n;
    Ok(raw
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = if i < w_end {
                scales.w
            } else if i < phi_end {
                scales.phi
            } else {
                scales.channel
            };
            x * f
        })
        .collect())
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub pair: PrecoderPair,
    pub eval: Evaluation,
}

/// Episode shape and the configuration used to rebuild scenarios on reset.
#[derive(Debug, Clone)]
pub struct IsacEnv {
    config: ExperimentConfig,
    passive: bool,
    scenario: Scenario,
    scales: StateScales,
    pair: PrecoderPair,
    steps: usize,
    done: bool,
}

impl IsacEnv {
    /// Environment for `config`, reset to `seed`.
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        let scenario = Scenario::build(config, seed)?;
        Self::with_scenario(config, scenario, false)
    }

    /// Environment around an existing scenario; `passive` strips the active
    /// elements on every reset.
    pub fn with_scenario(
        config: &ExperimentConfig,
        scenario: Scenario,
        passive: bool,
    ) -> Result<Self> {
        let scenario = if passive {
            scenario.passive()
        } else {
            scenario
        };
        let scales = StateScales::for_scenario(&scenario)?;
        let pair = scenario.initial_pair();
        Ok(Self {
            config: config.clone(),
            passive,
            scenario,
            scales,
            pair,
            steps: 0,
            done: false,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn pair(&self) -> &PrecoderPair {
        &self.pair
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn dims(&self) -> (usize, usize, usize) {
        (
            self.scenario.bs_antennas(),
            self.scenario.ris_elements(),
            self.scenario.num_users(),
        )
    }

    pub fn state_dim(&self) -> usize {
        let (m, n, k) = self.dims();
        state_dim(m, n, k)
    }

    pub fn action_dim(&self) -> usize {
        let (m, n, k) = self.dims();
        action_dim(m, n, k)
    }

    /// Rebuilds the scenario from `seed` and returns the initial state.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let scenario = Scenario::build(&self.config, seed)?;
        self.scenario = if self.passive {
            scenario.passive()
        } else {
            scenario
        };
        self.scales = StateScales::for_scenario(&self.scenario)?;
        self.pair = self.scenario.initial_pair();
        self.steps = 0;
        self.done = false;
        Ok(self.state())
    }

    /// Starts a new episode on the current channels.
    pub fn restart(&mut self) -> Vec<f64> {
        self.pair = self.scenario.initial_pair();
        self.steps = 0;
        self.done = false;
        self.state()
    }

    /// Normalized state for the current pair.
    pub fn state(&self) -> Vec<f64> {
        let (m, n, k) = self.dims();
        normalize_state(
            &raw_state(&self.pair, &self.scenario),
            m,
            n,
            k,
            &self.scales,
        )
        .expect("state layout is consistent")
    }

    /// Maps an action in `[-1, 1]^D_a` to raw decision variables:
    /// `W = sqrt(P_BS) a_W`, passive `phi = a`, active `phi = a_max a`.
    pub fn decode_action(&self, action: &[f64]) -> Result<(CMatrix, CVector)> {
        if action.len() != self.action_dim() {
            return Err(Error::Dimension(format!(
                "action has {} entries, expected {}",
                action.len(),
                self.action_dim()
            )));
        }
        let (m, n, k) = self.dims();
        let w_len = 2 * m * (k + 1);
        let w = read_block(&action[..w_len], m, k + 1).scale(self.scenario.budgets.p_bs_max.sqrt());
        let a_max = self.scenario.budgets.a_max;
        let phi = CVector::from_fn(n, |i, _| {
            let z = C64::new(action[w_len + i], action[w_len + n + i]);
            if self.scenario.active.contains(i) {
                z * a_max
            } else {
                z
            }
        });
        Ok((w, phi))
    }

    /// Applies an action: project, evaluate, advance.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Usage(
                "step called on a finished episode; call reset".into(),
            ));
        }
        let (raw_w, raw_phi) = self.decode_action(action)?;
        let pair = self.scenario.project(&raw_w, &raw_phi);
        let eval = self.scenario.evaluate(&pair)?;
        self.pair = pair;
        self.steps += 1;
        let feasible = eval.report.all_pass();
        self.done = (self.config.env.stop_on_feasible && feasible)
            || self.steps >= self.config.env.steps_per_episode;
        Ok(StepOutcome {
            next_state: self.state(),
            reward: eval.reward,
            done: self.done,
            pair: self.pair.clone(),
            eval,
        })
    }
}
