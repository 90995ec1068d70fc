//! Deep deterministic policy gradient: actor/critic pairs with target copies,
//! a FIFO replay buffer, Gaussian exploration and the training loop that
//! keeps the best-reward precoder pair.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::comms::PrecoderPair;
use crate::env::IsacEnv;
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, AdamConfig, Gradients, Mlp};

/// One environment interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Bounded FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, evicting the oldest record when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `batch` distinct records drawn uniformly; `None` while the buffer is
    /// smaller than the batch.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if batch == 0 || self.items.len() < batch {
            return None;
        }
        Some(
            sample(rng, self.items.len(), batch)
                .into_iter()
                .map(|i| &self.items[i])
                .collect(),
        )
    }
}

/// Transform applied to environment rewards before they reach the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardShaping {
    /// Rewards as returned by the environment.
    Raw,
    /// `sign(r) ln(1 + |r|)`.
    Symlog,
    /// Symlog, then centred and scaled by running statistics of every reward
    /// observed so far.
    #[default]
    SymlogStandardized,
}

pub fn symlog(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

/// Agent hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub episodes: usize,
    pub batch_size: usize,
    pub discount: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Hidden layer widths shared by actor and critic.
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    /// Initial standard deviation of the Gaussian exploration noise.
    pub noise_scale: f64,
    /// Per-step multiplicative decay of the noise scale.
    pub noise_decay: f64,
    /// Steps at the start of training that use uniform random actions.
    pub warmup_steps: usize,
    pub reward_shaping: RewardShaping,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            episodes: 10,
            batch_size: 100,
            discount: 0.99,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            hidden: vec![64, 64],
            buffer_capacity: 100_000,
            noise_scale: 0.5,
            noise_decay: 0.9995,
            warmup_steps: 0,
            reward_shaping: RewardShaping::SymlogStandardized,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!(
                "agent.discount must lie in (0, 1], got {}",
                self.discount
            ));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("agent.tau must lie in (0, 1], got {}", self.tau));
        }
        if self.episodes == 0 || self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("agent.episodes and agent.batch_size must be >= 1 and buffer_capacity >= batch_size".into());
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) || !(self.noise_scale >= 0.0) {
            return bad(
                "agent learning rates must be positive and noise_scale non-negative".into(),
            );
        }
        if !(self.noise_decay > 0.0 && self.noise_decay <= 1.0) {
            return bad(format!(
                "agent.noise_decay must lie in (0, 1], got {}",
                self.noise_decay
            ));
        }
        if self.hidden.contains(&0) {
            return bad("agent.hidden widths must be positive".into());
        }
        Ok(())
    }
}

/// Online and target networks with their optimizers.
#[derive(Debug, Clone)]
pub struct Networks {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

impl Networks {
    /// Actor `[D_s, hidden.., D_a]` with tanh output, critic
    /// `[D_s + D_a, hidden.., 1]` with linear output; targets start as copies.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hp: &Hyperparams,
        rng: &mut R,
    ) -> Result<Self> {
        let mut a_sizes = vec![state_dim];
        a_sizes.extend(&hp.hidden);
        a_sizes.push(action_dim);
        let mut c_sizes = vec![state_dim + action_dim];
        c_sizes.extend(&hp.hidden);
        c_sizes.push(1);
        let actor = Mlp::new(&a_sizes, Activation::Relu, Activation::Tanh, rng)?;
        let critic = Mlp::new(&c_sizes, Activation::Relu, Activation::Linear, rng)?;
        let adam = |lr| AdamConfig {
            lr,
            ..AdamConfig::default()
        };
        Ok(Self {
            actor_opt: Adam::new(&actor, adam(hp.actor_lr)),
            critic_opt: Adam::new(&critic, adam(hp.critic_lr)),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
        })
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        self.actor_target.soft_update(&self.actor, tau)?;
        self.critic_target.soft_update(&self.critic, tau)
    }
}

/// Column-stacked mini-batch with rewards already shaped.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: DMatrix<f64>,
    pub actions: DMatrix<f64>,
    pub rewards: Vec<f64>,
    pub next_states: DMatrix<f64>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition], shape: impl Fn(f64) -> f64) -> Self {
        let cols = |f: &dyn Fn(&Transition) -> &Vec<f64>| {
            let rows = f(ts[0]).len();
            DMatrix::from_fn(rows, ts.len(), |r, c| f(ts[c])[r])
        };
        Self {
            states: cols(&|t| &t.state),
            actions: cols(&|t| &t.action),
            rewards: ts.iter().map(|t| shape(t.reward)).collect(),
            next_states: cols(&|t| &t.next_state),
            dones: ts.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Actor output plus `N(0, noise_scale^2)` noise, clipped to `[-1, 1]`.
pub fn select_action<R: Rng + ?Sized>(
    actor: &Mlp,
    state: &[f64],
    noise_scale: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let x = DMatrix::from_column_slice(state.len(), 1, state);
    let mu = actor.predict_batch(&x)?;
    Ok(mu
        .iter()
        .map(|&m| {
            let eps: f64 = if noise_scale > 0.0 {
                rng.sample::<f64, _>(StandardNormal) * noise_scale
            } else {
                0.0
            };
            (m + eps).clamp(-1.0, 1.0)
        })
        .collect())
}

/// Bellman targets `r + gamma (1 - done) Q'(s', mu'(s'))`.
pub fn critic_targets(batch: &Batch, nets: &Networks, discount: f64) -> Result<Vec<f64>> {
    let next_actions = nets.actor_target.predict_batch(&batch.next_states)?;
    let q_next = nets
        .critic_target
        .predict_batch(&stack(&batch.next_states, &next_actions))?;
    Ok((0..batch.len())
        .map(|i| {
            batch.rewards[i]
                + if batch.dones[i] {
                    0.0
                } else {
                    discount * q_next[(0, i)]
                }
        })
        .collect())
}

/// One Adam step on the mean squared Bellman error; returns the loss before
/// the step.
pub fn critic_update(batch: &Batch, nets: &mut Networks, discount: f64) -> Result<f64> {
    let y = critic_targets(batch, nets, discount)?;
    let (q, cache) = nets
        .critic
        .forward_batch(&stack(&batch.states, &batch.actions))?;
    let b = batch.len() as f64;
    let diff = DMatrix::from_fn(1, batch.len(), |_, i| q[(0, i)] - y[i]);
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / b;
    let (grads, _) = nets.critic.backward_batch(&cache, &(diff * (2.0 / b)))?;
    nets.critic_opt.step(&mut nets.critic, &grads)?;
    Ok(loss)
}

/// Gradient of `-mean_i Q(s_i, mu(s_i))` with respect to the actor
/// parameters, and the mean Q itself.
pub fn actor_gradient(
    states: &DMatrix<f64>,
    actor: &Mlp,
    critic: &Mlp,
) -> Result<(Gradients, f64)> {
    let (actions, a_cache) = actor.forward_batch(states)?;
    let (q, c_cache) = critic.forward_batch(&stack(states, &actions))?;
    let b = states.ncols() as f64;
    let mean_q = q.sum() / b;
    let upstream = DMatrix::from_element(1, states.ncols(), -1.0 / b);
    let (_, dx) = critic.backward_batch(&c_cache, &upstream)?;
    let d_action = dx.rows(states.nrows(), actions.nrows()).into_owned();
    let (grads, _) = actor.backward_batch(&a_cache, &d_action)?;
    Ok((grads, mean_q))
}

/// One Adam ascent step on mean `Q(s, mu(s))`; returns the mean before the step.
pub fn actor_update(batch: &Batch, nets: &mut Networks) -> Result<f64> {
    let (grads, mean_q) = actor_gradient(&batch.states, &nets.actor, &nets.critic)?;
    nets.actor_opt.step(&mut nets.actor, &grads)?;
    Ok(mean_q)
}

/// Statistics of one learning step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub mean_q: f64,
}

/// Interface shared by learning agents.
pub trait Agent {
    /// Action for `state`, including exploration.
    fn act(&mut self, state: &[f64]) -> Result<Vec<f64>>;
    /// Records a transition and learns from it when enough data is stored.
    fn observe(&mut self, t: Transition) -> Result<Option<UpdateStats>>;
    /// Current exploration scale (0 for agents without one).
    fn exploration(&self) -> f64;
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n < 2 {
            1.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt().max(1e-8)
        }
    }
}

/// The DDPG learner.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub hp: Hyperparams,
    pub nets: Networks,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    noise: f64,
    steps: usize,
    reward_stats: RunningStats,
}

impl DdpgAgent {
    pub fn new(state_dim: usize, action_dim: usize, hp: &Hyperparams, seed: u64) -> Result<Self> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nets = Networks::new(state_dim, action_dim, hp, &mut rng)?;
        Ok(Self {
            hp: hp.clone(),
            nets,
            buffer: ReplayBuffer::new(hp.buffer_capacity),
            rng,
            noise: hp.noise_scale,
            steps: 0,
            reward_stats: RunningStats::default(),
        })
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    fn shape(&self, r: f64) -> f64 {
        match self.hp.reward_shaping {
            RewardShaping::Raw => r,
            RewardShaping::Symlog => symlog(r),
            RewardShaping::SymlogStandardized => {
                (symlog(r) - self.reward_stats.mean) / self.reward_stats.std()
            }
        }
    }

    /// One critic and one actor step on a fresh mini-batch, then target
    /// soft updates. `None` while the buffer holds fewer than `B` records.
    pub fn learn(&mut self) -> Result<Option<UpdateStats>> {
        let Some(ts) = self.buffer.sample(self.hp.batch_size, &mut self.rng) else {
            return Ok(None);
        };
        let batch = Batch::from_transitions(&ts, |r| self.shape(r));
        let critic_loss = critic_update(&batch, &mut self.nets, self.hp.discount)?;
        let mean_q = actor_update(&batch, &mut self.nets)?;
        self.nets.soft_update_targets(self.hp.tau)?;
        Ok(Some(UpdateStats {
            critic_loss,
            mean_q,
        }))
    }
}

impl Agent for DdpgAgent {
    fn act(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        if self.steps < self.hp.warmup_steps {
            let d = self.nets.actor.output_dim();
            return Ok((0..d).map(|_| self.rng.random_range(-1.0..=1.0)).collect());
        }
        select_action(&self.nets.actor, state, self.noise, &mut self.rng)
    }

    fn observe(&mut self, t: Transition) -> Result<Option<UpdateStats>> {
        self.reward_stats.push(symlog(t.reward));
        self.buffer.push(t);
        self.steps += 1;
        let stats = self.learn()?;
        self.noise *= self.hp.noise_decay;
        Ok(stats)
    }

    fn exploration(&self) -> f64 {
        self.noise
    }
}

/// Telemetry of one training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub step: usize,
    pub reward: f64,
    pub sum_rate: f64,
    pub crb: f64,
    pub penalty: f64,
    pub feasible: bool,
    pub sinr_ok: bool,
    pub crb_ok: bool,
    pub loss_critic: f64,
    pub mean_q: f64,
    pub noise_scale: f64,
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Best-reward projected pair over the whole run.
    pub best_pair: PrecoderPair,
    pub best_reward: f64,
    pub best_sum_rate: f64,
    pub best_crb: f64,
    pub log: Vec<EpisodeLog>,
}

impl TrainResult {
    /// Mean reward over the last quarter of all steps.
    pub fn final_quartile_mean(&self) -> f64 {
        let n = self.log.len();
        let tail = &self.log[n - (n / 4).max(1)..];
        tail.iter().map(|r| r.reward).sum::<f64>() / tail.len() as f64
    }
}

/// Runs `episodes` episodes on the environment's current channels.
pub fn train<A: Agent>(env: &mut IsacEnv, agent: &mut A, episodes: usize) -> Result<TrainResult> {
    let mut best: Option<(f64, PrecoderPair, f64, f64)> = None;
    let mut log = Vec::new();
    for episode in 0..episodes {
        let mut state = env.restart();
        loop {
            let action = agent.act(&state)?;
            let noise_scale = agent.exploration();
            let out = env.step(&action)?;
            let stats = agent.observe(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: out.reward,
                next_state: out.next_state.clone(),
                done: out.done,
            })?;
            if best.as_ref().is_none_or(|b| out.reward > b.0) {
                best = Some((
                    out.reward,
                    out.pair.clone(),
                    out.eval.sum_rate,
                    out.eval.crb,
                ));
            }
            let report = &out.eval.report;
            log.push(EpisodeLog {
                episode,
                step: env.steps_taken() - 1,
                reward: out.reward,
                sum_rate: out.eval.sum_rate,
                crb: out.eval.crb,
                penalty: report.penalty,
                feasible: report.all_pass(),
                sinr_ok: report.sinr.pass,
                crb_ok: report.crb.pass,
                loss_critic: stats.map_or(f64::NAN, |s| s.critic_loss),
                mean_q: stats.map_or(f64::NAN, |s| s.mean_q),
                noise_scale,
            });
            state = out.next_state;
            if out.done {
                break;
            }
        }
    }
    let (best_reward, best_pair, best_sum_rate, best_crb) =
        best.ok_or_else(|| Error::Usage("training ran zero steps".into()))?;
    Ok(TrainResult {
        best_pair,
        best_reward,
        best_sum_rate,
        best_crb,
        log,
    })
}
