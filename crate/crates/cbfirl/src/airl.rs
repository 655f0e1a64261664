//! Adversarial inverse reinforcement learning.
//!
//! A discriminator net over (observation, action) is trained with binary
//! cross entropy to separate expert pairs from policy pairs; its log-odds
//! serve as the recovered reward. The Gaussian policy ascends that reward
//! with a clipped-surrogate gradient over generalized advantage estimates.
//! The iteration loop exposes a [`PolicyShaping`] hook so an extra objective
//! (the barrier derivative penalty) can be folded into the policy update
//! without duplicating the loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffnet::{Gradient, Mlp, OptimState};
use crate::dynamics::{self, observe, Action, EnvConfig, Observation, WorldState};
use crate::harness::metrics::evaluate;
use crate::report::{TrainRecord, TrainReport};
use crate::seeding::{
    derive_seed, STREAM_DISC_INIT, STREAM_EVAL, STREAM_POLICY_INIT, STREAM_ROLLOUT,
    STREAM_ROLLOUT_ACTIONS, STREAM_UPDATE,
};
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const LN_2PI: f64 = 1.8378770664093453;

/// Defaults used by [`policy_loss`].
pub const CLIP_RANGE: f64 = 0.2;
pub const ENTROPY_COEF: f64 = 0.01;

/// Diagonal-Gaussian policy: a mean net plus one learnable log-std per
/// action dimension. Sampled actions are clamped componentwise to
/// `[-a_max, a_max]`; log-densities are evaluated under the unclamped
/// Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub mean_net: Mlp,
    pub log_std: Vec<f64>,
    pub a_max: f64,
}

impl Policy {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        a_max: f64,
        init_log_std: f64,
        seed: u64,
    ) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        Policy {
            mean_net: Mlp::new(&sizes, seed),
            log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); act_dim],
            a_max,
        }
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    /// Unclamped mean of the action distribution.
    pub fn mean_raw(&self, obs: &[f64]) -> Vec<f64> {
        self.mean_net.forward(obs)
    }

    /// Deterministic action: the mean clamped to the action bounds.
    pub fn mean_action(&self, obs: &[f64]) -> Action {
        self.mean_raw(obs)
            .into_iter()
            .map(|m| m.clamp(-self.a_max, self.a_max))
            .collect()
    }

    /// Sample an action and return its log-density.
    pub fn sample_action(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> (Action, f64) {
        let mean = self.mean_raw(obs);
        let action: Action = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = rng.sample(StandardNormal);
                (m + ls.exp() * z).clamp(-self.a_max, self.a_max)
            })
            .collect();
        let logprob = self.logprob_given_mean(&mean, &action);
        (action, logprob)
    }

    fn logprob_given_mean(&self, mean: &[f64], action: &[f64]) -> f64 {
        mean.iter()
            .zip(action)
            .zip(&self.log_std)
            .map(|((m, a), ls)| {
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - 0.5 * LN_2PI
            })
            .sum()
    }

    /// Log-density of `action` at this observation.
    pub fn logprob(&self, obs: &[f64], action: &[f64]) -> f64 {
        assert_eq!(action.len(), self.act_dim(), "action dimension mismatch");
        self.logprob_given_mean(&self.mean_raw(obs), action)
    }

    /// Differential entropy; depends only on the log-stds.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum()
    }
}

/// Discriminator over concatenated (observation, action).
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub f_net: Mlp,
}

impl Discriminator {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut sizes = vec![obs_dim + act_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Discriminator {
            f_net: Mlp::new(&sizes, seed),
        }
    }

    /// The inferred advantage value for one pair.
    pub fn f_value(&self, obs: &[f64], action: &[f64]) -> f64 {
        let mut input = Vec::with_capacity(obs.len() + action.len());
        input.extend_from_slice(obs);
        input.extend_from_slice(action);
        self.f_net.forward(&input)[0]
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `D = e^f / (e^f + pi(a|s))`, evaluated in log space as
/// `sigmoid(f - log pi)` for stability. Strictly inside (0, 1) for finite
/// inputs.
pub fn discriminator_output(
    d: &Discriminator,
    p: &Policy,
    obs: &[f64],
    action: &[f64],
) -> Result<f64> {
    let f = d.f_value(obs, action);
    if !f.is_finite() {
        return Err(Error::TrainingDiverged);
    }
    Ok(sigmoid(f - p.logprob(obs, action)))
}

/// Binary cross entropy: mean `-log D` over expert pairs plus mean
/// `-log(1 - D)` over policy pairs. Gradients flow to the discriminator
/// only; the policy density is treated as a constant here.
pub fn discriminator_loss(
    d: &Discriminator,
    p: &Policy,
    expert: &[(Observation, Action)],
    policy: &[(Observation, Action)],
) -> f64 {
    assert!(!expert.is_empty() && !policy.is_empty(), "batches must be nonempty");
    let le: f64 = expert
        .iter()
        .map(|(o, a)| softplus(-(d.f_value(o, a) - p.logprob(o, a))))
        .sum::<f64>()
        / expert.len() as f64;
    let lp: f64 = policy
        .iter()
        .map(|(o, a)| softplus(d.f_value(o, a) - p.logprob(o, a)))
        .sum::<f64>()
        / policy.len() as f64;
    le + lp
}

/// [`discriminator_loss`] plus its gradient with respect to the
/// discriminator parameters.
pub fn discriminator_loss_grad(
    d: &Discriminator,
    p: &Policy,
    expert: &[(Observation, Action)],
    policy: &[(Observation, Action)],
) -> (f64, Gradient) {
    assert!(!expert.is_empty() && !policy.is_empty(), "batches must be nonempty");
    let mut grad = vec![0.0; d.f_net.n_params()];
    let mut loss = 0.0;
    let mut input = Vec::new();
    let mut accumulate = |pairs: &[(Observation, Action)], expert_side: bool| {
        let scale = 1.0 / pairs.len() as f64;
        let mut total = 0.0;
        for (o, a) in pairs {
            input.clear();
            input.extend_from_slice(o);
            input.extend_from_slice(a);
            let f = d.f_net.forward(&input)[0];
            let x = f - p.logprob(o, a);
            let (val, dx) = if expert_side {
                (softplus(-x), -(1.0 - sigmoid(x)))
            } else {
                (softplus(x), sigmoid(x))
            };
            total += val * scale;
            let (g, _) = d.f_net.backward(&input, &[dx * scale]);
            for (gi, gg) in grad.iter_mut().zip(&g) {
                *gi += gg;
            }
        }
        total
    };
    loss += accumulate(expert, true);
    loss += accumulate(policy, false);
    (loss, grad)
}

/// The reward surrogate optimized by the policy:
/// `log D - log(1 - D) = f(s, a) - log pi(a|s)`.
pub fn recovered_reward(d: &Discriminator, p: &Policy, obs: &[f64], action: &[f64]) -> f64 {
    d.f_value(obs, action) - p.logprob(obs, action)
}

/// One stored environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep {
    pub obs: Observation,
    pub action: Action,
    /// Log-density under the policy that generated the action.
    pub logprob: f64,
    pub reward: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// A batch of whole episodes collected under one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub steps: Vec<RolloutStep>,
    /// World state at which each step's action was taken; index-aligned with
    /// `steps`. Used for one-step lookahead by the barrier penalty.
    pub world_states: Vec<WorldState>,
    /// Index of the first step of each episode.
    pub episode_starts: Vec<usize>,
    pub gamma: f64,
}

/// Within-episode discounted reward sums.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        returns[i] = acc;
    }
    returns
}

/// Generalized advantage estimation with a zero value baseline: the TD
/// residual reduces to the reward itself, so the estimate is the
/// `(gamma * lambda)`-discounted reward sum. With `lambda = 0` this is the
/// one-step residual, i.e. the reward.
pub fn gae_advantages(rewards: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    discounted_returns(rewards, gamma * lambda)
}

/// Roll whole fixed-length episodes until at least `n_steps` transitions
/// are collected. Rewards come from [`recovered_reward`] under the current
/// nets. Deterministic in `(inputs, seed)`; each episode gets its own reset
/// and action streams derived from `(seed, episode index)`.
pub fn collect_rollouts(
    policy: &Policy,
    disc: &Discriminator,
    cfg: &AirlConfig,
    n_steps: usize,
    seed: u64,
) -> Result<RolloutBatch> {
    assert!(n_steps >= cfg.env.horizon, "n_steps must cover at least one episode");
    let env = &cfg.env;
    let mut steps = Vec::with_capacity(n_steps + env.horizon);
    let mut world_states = Vec::with_capacity(n_steps + env.horizon);
    let mut episode_starts = Vec::new();
    let mut episode: u64 = 0;
    while steps.len() < n_steps {
        episode_starts.push(steps.len());
        let mut state = dynamics::reset(env, derive_seed(seed, STREAM_ROLLOUT, episode))?;
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_ROLLOUT_ACTIONS, episode));
        while state.t < env.horizon {
            let obs = observe(&state, env);
            let (action, logprob) = policy.sample_action(&obs, &mut rng);
            let reward = recovered_reward(disc, policy, &obs, &action);
            let next = dynamics::step(&state, &action, env)?;
            world_states.push(state.clone());
            steps.push(RolloutStep {
                obs,
                action,
                logprob,
                reward,
                advantage: 0.0,
                ret: 0.0,
            });
            state = next;
        }
        episode += 1;
    }
    // Fill advantages and returns episode by episode. The advantage
    // estimator runs on batch-mean-centered rewards: without a value
    // baseline the estimate otherwise inherits the common reward offset,
    // which couples advantages to the step index instead of to behavior.
    let n = steps.len();
    let reward_mean = steps.iter().map(|s| s.reward).sum::<f64>() / n as f64;
    for (e, &start) in episode_starts.iter().enumerate() {
        let end = episode_starts.get(e + 1).copied().unwrap_or(n);
        let rewards: Vec<f64> = steps[start..end].iter().map(|s| s.reward).collect();
        let centered: Vec<f64> = rewards.iter().map(|r| r - reward_mean).collect();
        let advantages = gae_advantages(&centered, cfg.gamma, cfg.gae_lambda);
        let returns = discounted_returns(&rewards, cfg.gamma);
        for (i, step) in steps[start..end].iter_mut().enumerate() {
            step.advantage = advantages[i];
            step.ret = returns[i];
        }
    }
    Ok(RolloutBatch {
        steps,
        world_states,
        episode_starts,
        gamma: cfg.gamma,
    })
}

/// Negated clipped-surrogate objective with an entropy bonus, using the
/// default clip range and entropy coefficient.
pub fn policy_loss(p: &Policy, batch: &RolloutBatch) -> f64 {
    policy_loss_steps(p, &batch.steps, CLIP_RANGE, ENTROPY_COEF)
}

/// Mean over the batch of `-min(rho * A, clip(rho, 1 +/- clip) * A)` minus
/// `entropy_coef * H(pi)`, where `rho` is the density ratio against the
/// behavior log-probabilities stored in the steps. Minimizing this ascends
/// the expected return.
pub fn policy_loss_steps(p: &Policy, steps: &[RolloutStep], clip: f64, entropy_coef: f64) -> f64 {
    assert!(!steps.is_empty(), "batch must be nonempty");
    let surrogate: f64 = steps
        .iter()
        .map(|s| {
            let rho = (p.logprob(&s.obs, &s.action) - s.logprob).exp();
            let unclipped = rho * s.advantage;
            let clipped = rho.clamp(1.0 - clip, 1.0 + clip) * s.advantage;
            -unclipped.min(clipped)
        })
        .sum::<f64>()
        / steps.len() as f64;
    surrogate - entropy_coef * p.entropy()
}

/// Quadratic penalty on mean-action components outside the action bounds,
/// averaged over the batch, with its mean-net gradient. Sampled actions are
/// executed clamped, so without this term the surrogate can push the mean
/// arbitrarily far out of range while the executed behavior stays frozen at
/// the bound.
pub fn action_bound_penalty_grad(p: &Policy, steps: &[RolloutStep]) -> (f64, Gradient) {
    let n = steps.len() as f64;
    let mut grad = vec![0.0; p.mean_net.n_params()];
    let mut value = 0.0;
    for s in steps {
        let mean = p.mean_raw(&s.obs);
        let mut upstream = vec![0.0; mean.len()];
        let mut active = false;
        for (i, m) in mean.iter().enumerate() {
            let excess = m.abs() - p.a_max;
            if excess > 0.0 {
                value += excess * excess / n;
                upstream[i] = 2.0 * excess * m.signum() / n;
                active = true;
            }
        }
        if active {
            let (g, _) = p.mean_net.backward(&s.obs, &upstream);
            for (gi, gg) in grad.iter_mut().zip(&g) {
                *gi += gg;
            }
        }
    }
    (value, grad)
}

/// [`policy_loss_steps`] plus gradients for the mean net and the log-stds.
pub fn policy_loss_grad(
    p: &Policy,
    steps: &[RolloutStep],
    clip: f64,
    entropy_coef: f64,
) -> (f64, Gradient, Vec<f64>) {
    assert!(!steps.is_empty(), "batch must be nonempty");
    let n = steps.len() as f64;
    let mut mean_grad = vec![0.0; p.mean_net.n_params()];
    let mut log_std_grad = vec![0.0; p.act_dim()];
    let mut loss = 0.0;
    for s in steps {
        let mean = p.mean_raw(&s.obs);
        let lp = p.logprob_given_mean(&mean, &s.action);
        let rho = (lp - s.logprob).exp();
        let unclipped = rho * s.advantage;
        let clipped = rho.clamp(1.0 - clip, 1.0 + clip) * s.advantage;
        loss += -unclipped.min(clipped) / n;
        // d(selected)/d(logprob): the unclipped branch contributes rho * A;
        // the clipped one does too while the clamp is inactive, else zero.
        let d_selected = if unclipped <= clipped {
            unclipped
        } else if rho > 1.0 - clip && rho < 1.0 + clip {
            rho * s.advantage
        } else {
            0.0
        };
        let d_logprob = -d_selected / n;
        if d_logprob != 0.0 {
            let upstream: Vec<f64> = mean
                .iter()
                .zip(&s.action)
                .zip(&p.log_std)
                .map(|((m, a), ls)| {
                    let sigma2 = (2.0 * ls).exp();
                    d_logprob * (a - m) / sigma2
                })
                .collect();
            let (g, _) = p.mean_net.backward(&s.obs, &upstream);
            for (mg, gg) in mean_grad.iter_mut().zip(&g) {
                *mg += gg;
            }
            for i in 0..p.act_dim() {
                let z = (s.action[i] - mean[i]) / p.log_std[i].exp();
                log_std_grad[i] += d_logprob * (z * z - 1.0);
            }
        }
    }
    loss -= entropy_coef * p.entropy();
    for g in log_std_grad.iter_mut() {
        *g -= entropy_coef;
    }
    (loss, mean_grad, log_std_grad)
}

/// Hook for folding an auxiliary objective into the policy update.
pub trait PolicyShaping {
    /// Called once per iteration with the freshly collected batch.
    fn begin_iteration(
        &mut self,
        batch: &RolloutBatch,
        global_iter: usize,
        base_seed: u64,
    ) -> Result<()>;

    /// Extra loss value and mean-net gradient for one policy minibatch
    /// update, already scaled by the caller's trade-off weight. `None`
    /// means nothing to add, leaving the update bit-identical to plain
    /// adversarial training.
    fn policy_update_term(&mut self, policy: &Policy) -> Result<Option<(f64, Gradient)>>;

    /// Contribute metrics to the iteration record after the updates.
    fn finish_iteration(&mut self, policy: &Policy, record: &mut TrainRecord) -> Result<()>;
}

/// Training hyperparameters for the adversarial loop.
#[derive(Debug, Clone)]
pub struct AirlConfig {
    pub env: EnvConfig,
    pub policy_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub init_log_std: f64,
    pub step_size: f64,
    /// Discriminator optimizer step; kept below the policy step so the
    /// recovered reward moves slower than the policy chasing it.
    pub disc_step_size: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub entropy_coef: f64,
    pub steps_per_iter: usize,
    pub minibatch: usize,
    pub update_epochs: usize,
    /// Weight of the out-of-bounds mean-action penalty in the update.
    pub bound_coef: f64,
    /// Evaluate the deterministic policy every this many iterations.
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl AirlConfig {
    pub fn new(env: EnvConfig) -> Self {
        AirlConfig {
            env,
            policy_hidden: vec![64, 64],
            disc_hidden: vec![64, 64],
            init_log_std: -0.5,
            step_size: 3e-4,
            disc_step_size: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            entropy_coef: 0.01,
            steps_per_iter: 2048,
            minibatch: 256,
            update_epochs: 4,
            bound_coef: 0.1,
            eval_every: 10,
            eval_episodes: 20,
        }
    }
}

/// Mutable training state: both nets, their optimizers, and the flattened
/// expert pairs. Alongside the live nets it keeps the best-evaluated policy
/// snapshot; the adversarial game cycles, so the last iterate is not the
/// one worth returning.
pub struct AirlTrainer {
    pub cfg: AirlConfig,
    pub policy: Policy,
    pub disc: Discriminator,
    opt_mean: OptimState,
    opt_log_std: OptimState,
    opt_disc: OptimState,
    expert_pairs: Vec<(Observation, Action)>,
    best_policy: Option<(f64, Policy)>,
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl AirlTrainer {
    pub fn new(cfg: AirlConfig, demos: &crate::demos::DemoSet, seed: u64) -> Result<Self> {
        cfg.env.validate()?;
        let expert_pairs = demos.expert_pairs();
        if expert_pairs.is_empty() {
            return Err(Error::Config("demo set has no (observation, action) pairs".to_string()));
        }
        let obs_dim = cfg.env.obs_len();
        let act_dim = cfg.env.dim;
        let policy = Policy::new(
            obs_dim,
            act_dim,
            &cfg.policy_hidden,
            cfg.env.a_max,
            cfg.init_log_std,
            derive_seed(seed, STREAM_POLICY_INIT, 0),
        );
        let disc = Discriminator::new(
            obs_dim,
            act_dim,
            &cfg.disc_hidden,
            derive_seed(seed, STREAM_DISC_INIT, 0),
        );
        let mut opt_mean = OptimState::new(policy.mean_net.n_params(), cfg.step_size);
        let mut opt_log_std = OptimState::new(act_dim, cfg.step_size);
        let mut opt_disc = OptimState::new(disc.f_net.n_params(), cfg.disc_step_size);
        for opt in [&mut opt_mean, &mut opt_log_std, &mut opt_disc] {
            opt.beta1 = cfg.adam_beta1;
            opt.beta2 = cfg.adam_beta2;
            opt.epsilon = cfg.adam_epsilon;
        }
        Ok(AirlTrainer {
            cfg,
            policy,
            disc,
            opt_mean,
            opt_log_std,
            opt_disc,
            expert_pairs,
            best_policy: None,
        })
    }

    /// Best-evaluated snapshot so far, scored by success minus collision
    /// rate; the live policy when nothing has been evaluated yet.
    pub fn selected_policy(&self) -> Policy {
        match &self.best_policy {
            Some((_, p)) => p.clone(),
            None => self.policy.clone(),
        }
    }

    /// One adversarial iteration: collect, update discriminator, update
    /// policy (optionally shaped), evaluate on schedule.
    pub fn iteration<'s, 'o>(
        &mut self,
        global_iter: usize,
        base_seed: u64,
        mut shaping: Option<&'s mut (dyn PolicyShaping + 'o)>,
    ) -> Result<TrainRecord> {
        let batch = collect_rollouts(
            &self.policy,
            &self.disc,
            &self.cfg,
            self.cfg.steps_per_iter,
            derive_seed(base_seed, STREAM_ROLLOUT, global_iter as u64),
        )?;
        if let Some(sh) = shaping.as_deref_mut() {
            sh.begin_iteration(&batch, global_iter, base_seed)?;
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(base_seed, STREAM_UPDATE, global_iter as u64));
        let loss_d = self.update_discriminator(&batch, &mut rng)?;
        let loss_p = self.update_policy(&batch, &mut rng, shaping.as_deref_mut())?;

        let mut record = TrainRecord {
            iteration: global_iter,
            loss_discriminator: Some(loss_d),
            loss_policy: Some(loss_p),
            ..Default::default()
        };
        if (global_iter + 1) % self.cfg.eval_every == 0 {
            let metrics = evaluate(
                &self.policy,
                &self.cfg.env,
                self.cfg.eval_episodes,
                derive_seed(base_seed, STREAM_EVAL, global_iter as u64),
            )?;
            record.success_rate = Some(metrics.success_rate);
            record.collision_rate = Some(metrics.collision_rate);
            let score = metrics.success_rate - metrics.collision_rate;
            if self.best_policy.as_ref().map_or(true, |(s, _)| score >= *s) {
                self.best_policy = Some((score, self.policy.clone()));
            }
        }
        if let Some(sh) = shaping.as_deref_mut() {
            sh.finish_iteration(&self.policy, &mut record)?;
        }
        Ok(record)
    }

    fn update_discriminator(&mut self, batch: &RolloutBatch, rng: &mut ChaCha8Rng) -> Result<f64> {
        let n = batch.steps.len();
        let mut policy_idx: Vec<usize> = (0..n).collect();
        let mut expert_idx: Vec<usize> = (0..self.expert_pairs.len()).collect();
        let mut losses = Vec::new();
        for _ in 0..self.cfg.update_epochs {
            policy_idx.shuffle(rng);
            expert_idx.shuffle(rng);
            let mut cursor = 0usize;
            for chunk in policy_idx.chunks(self.cfg.minibatch) {
                let policy_mb: Vec<(Observation, Action)> = chunk
                    .iter()
                    .map(|&i| (batch.steps[i].obs.clone(), batch.steps[i].action.clone()))
                    .collect();
                // The scripted expert is deterministic, so its actions carry
                // a delta density the discriminator could separate from any
                // stochastic policy by noise statistics alone. Smooth expert
                // actions with the policy's current noise scale so the
                // discriminator has to separate behavior instead.
                let expert_mb: Vec<(Observation, Action)> = (0..chunk.len())
                    .map(|j| {
                        let idx = expert_idx[(cursor + j) % expert_idx.len()];
                        let (obs, action) = &self.expert_pairs[idx];
                        let noised: Action = action
                            .iter()
                            .zip(&self.policy.log_std)
                            .map(|(a, ls)| {
                                let z: f64 = rng.sample(StandardNormal);
                                (a + ls.exp() * z).clamp(-self.policy.a_max, self.policy.a_max)
                            })
                            .collect();
                        (obs.clone(), noised)
                    })
                    .collect();
                cursor = (cursor + chunk.len()) % expert_idx.len();
                let (loss, grad) =
                    discriminator_loss_grad(&self.disc, &self.policy, &expert_mb, &policy_mb);
                self.opt_disc.opt_step(self.disc.f_net.params_mut(), &grad)?;
                losses.push(loss);
            }
        }
        Ok(mean_of(&losses))
    }

    fn update_policy<'s, 'o>(
        &mut self,
        batch: &RolloutBatch,
        rng: &mut ChaCha8Rng,
        mut shaping: Option<&'s mut (dyn PolicyShaping + 'o)>,
    ) -> Result<f64> {
        let n = batch.steps.len();
        // Normalize advantages once per iteration over the whole batch; the
        // stored batch keeps the raw estimator values.
        let mean = mean_of(&batch.steps.iter().map(|s| s.advantage).collect::<Vec<_>>());
        let var = batch
            .steps
            .iter()
            .map(|s| (s.advantage - mean) * (s.advantage - mean))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt().max(1e-8);
        let mut steps = batch.steps.clone();
        for s in &mut steps {
            s.advantage = (s.advantage - mean) / std;
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let mut losses = Vec::new();
        for _ in 0..self.cfg.update_epochs {
            idx.shuffle(rng);
            for chunk in idx.chunks(self.cfg.minibatch) {
                let mb: Vec<RolloutStep> = chunk.iter().map(|&i| steps[i].clone()).collect();
                let (loss, mut mean_grad, log_std_grad) = policy_loss_grad(
                    &self.policy,
                    &mb,
                    self.cfg.clip_range,
                    self.cfg.entropy_coef,
                );
                if self.cfg.bound_coef > 0.0 {
                    let (_, bound_grad) = action_bound_penalty_grad(&self.policy, &mb);
                    for (g, b) in mean_grad.iter_mut().zip(&bound_grad) {
                        *g += self.cfg.bound_coef * b;
                    }
                }
                if let Some(sh) = shaping.as_deref_mut() {
                    if let Some((_aux_value, aux_grad)) = sh.policy_update_term(&self.policy)? {
                        for (g, a) in mean_grad.iter_mut().zip(&aux_grad) {
                            *g += a;
                        }
                    }
                }
                self.opt_mean.opt_step(self.policy.mean_net.params_mut(), &mean_grad)?;
                self.opt_log_std.opt_step(&mut self.policy.log_std, &log_std_grad)?;
                for ls in &mut self.policy.log_std {
                    *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
                }
                losses.push(loss);
            }
        }
        Ok(mean_of(&losses))
    }
}

/// Train the adversarial pair for `iters` iterations and return the
/// best-evaluated policy snapshot with the final discriminator.
pub fn train_airl(
    cfg: &AirlConfig,
    demos: &crate::demos::DemoSet,
    iters: usize,
    seed: u64,
) -> Result<(Policy, Discriminator, TrainReport)> {
    let mut trainer = AirlTrainer::new(cfg.clone(), demos, seed)?;
    let mut report = TrainReport::new();
    for it in 0..iters {
        report.push(trainer.iteration(it, seed, None)?);
    }
    let policy = trainer.selected_policy();
    Ok((policy, trainer.disc, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::DemoSet;

    fn tiny_cfg() -> AirlConfig {
        let mut env = EnvConfig::racecar(2);
        env.k_nearest = 2;
        env.horizon = 50;
        env.start = vec![-0.4, -0.4];
        env.goal = vec![0.4, 0.4];
        let mut cfg = AirlConfig::new(env);
        cfg.policy_hidden = vec![16];
        cfg.disc_hidden = vec![16];
        cfg.steps_per_iter = 64;
        cfg.minibatch = 32;
        cfg.update_epochs = 1;
        cfg.eval_every = 100;
        cfg
    }

    fn tiny_demos(cfg: &AirlConfig) -> DemoSet {
        DemoSet::collect(&cfg.env, 2, 16, 2.0 * cfg.env.collision_radius, 0).unwrap()
    }

    /// Policy whose log-density is 0 at the mean: sigma = 1/sqrt(2*pi).
    fn unit_density_policy(obs_dim: usize, act_dim: usize) -> Policy {
        let mut sizes = vec![obs_dim, act_dim];
        let p = Policy {
            mean_net: Mlp::zeros(&sizes),
            log_std: vec![-0.5 * LN_2PI; act_dim],
            a_max: 1.0,
        };
        sizes.clear();
        p
    }

    #[test]
    fn logprob_matches_standard_normal_peak() {
        // 1-d, mean = a, sigma = 1: log density is -0.5 ln(2 pi).
        let p = Policy {
            mean_net: Mlp::zeros(&[3, 1]),
            log_std: vec![0.0],
            a_max: 1.0,
        };
        let lp = p.logprob(&[0.2, -0.1, 0.4], &[0.0]);
        assert!((lp - (-0.9189385332046727)).abs() < 1e-12);
    }

    #[test]
    fn logprob_is_maximal_at_the_mean() {
        let p = Policy::new(4, 2, &[8], 1.0, -0.3, 3);
        let obs = vec![0.1, -0.2, 0.3, 0.4];
        let mean = p.mean_raw(&obs);
        let at_mean = p.logprob(&obs, &mean);
        for delta in [0.05, -0.1, 0.3] {
            let off: Vec<f64> = mean.iter().map(|m| m + delta).collect();
            assert!(p.logprob(&obs, &off) < at_mean);
        }
    }

    #[test]
    fn logprob_factorizes_over_dimensions() {
        let p2 = Policy {
            mean_net: Mlp::zeros(&[2, 2]),
            log_std: vec![0.3, -0.4],
            a_max: 1.0,
        };
        let obs = vec![0.0, 0.0];
        let a = vec![0.5, -0.7];
        let p1a = Policy {
            mean_net: Mlp::zeros(&[2, 1]),
            log_std: vec![0.3],
            a_max: 1.0,
        };
        let p1b = Policy {
            mean_net: Mlp::zeros(&[2, 1]),
            log_std: vec![-0.4],
            a_max: 1.0,
        };
        let sum = p1a.logprob(&obs, &a[..1]) + p1b.logprob(&obs, &a[1..]);
        assert!((p2.logprob(&obs, &a) - sum).abs() < 1e-12);
    }

    #[test]
    fn discriminator_output_closed_forms() {
        let obs_dim = 2;
        let p = unit_density_policy(obs_dim, 1);
        let obs = vec![0.0, 0.0];
        let a = vec![0.0];
        // f = 0, pi = 1 -> D = 1/2.
        let d = Discriminator { f_net: Mlp::zeros(&[3, 1]) };
        assert!((discriminator_output(&d, &p, &obs, &a).unwrap() - 0.5).abs() < 1e-12);

        // f = ln 2, pi = 1 -> D = 2/3.
        let mut d2 = Discriminator { f_net: Mlp::zeros(&[3, 1]) };
        let np = d2.f_net.n_params();
        d2.f_net.params_mut()[np - 1] = std::f64::consts::LN_2;
        assert!((discriminator_output(&d2, &p, &obs, &a).unwrap() - 2.0 / 3.0).abs() < 1e-12);

        // f = 0, pi = 1/2 -> D = 2/3. Pick the action so the density halves.
        let sigma = (1.0 / (2.0 * std::f64::consts::PI)).sqrt();
        let a_half = vec![sigma * (2.0 * std::f64::consts::LN_2).sqrt()];
        assert!((p.logprob(&obs, &a_half) - 0.5f64.ln()).abs() < 1e-12);
        assert!((discriminator_output(&d, &p, &obs, &a_half).unwrap() - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn bce_at_uniform_output_is_two_ln_two() {
        let p = unit_density_policy(2, 1);
        let d = Discriminator { f_net: Mlp::zeros(&[3, 1]) };
        let batch = vec![(vec![0.0, 0.0], vec![0.0]); 4];
        let loss = discriminator_loss(&d, &p, &batch, &batch);
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn bce_goes_to_zero_under_perfect_separation() {
        let p = unit_density_policy(1, 1);
        // Linear discriminator reading the observation: f = 40 * obs[0].
        let d = Discriminator {
            f_net: Mlp::from_params(&[2, 1], vec![40.0, 0.0, 0.0]),
        };
        let expert = vec![(vec![1.0], vec![0.0])];
        let policy = vec![(vec![-1.0], vec![0.0])];
        let loss = discriminator_loss(&d, &p, &expert, &policy);
        assert!(loss < 1e-9, "loss {}", loss);
    }

    #[test]
    fn bce_is_symmetric_at_uniform_output() {
        let p = unit_density_policy(2, 1);
        let d = Discriminator { f_net: Mlp::zeros(&[3, 1]) };
        let batch_a = vec![(vec![0.3, -0.2], vec![0.0]); 3];
        let batch_b = vec![(vec![-0.9, 0.4], vec![0.0]); 5];
        let ab = discriminator_loss(&d, &p, &batch_a, &batch_b);
        let ba = discriminator_loss(&d, &p, &batch_b, &batch_a);
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn recovered_reward_identities() {
        let p = unit_density_policy(2, 1);
        let obs = vec![0.0, 0.0];
        let a = vec![0.0];
        // D = 1/2 -> reward = 0.
        let d = Discriminator { f_net: Mlp::zeros(&[3, 1]) };
        assert!(recovered_reward(&d, &p, &obs, &a).abs() < 1e-12);
        // f = 1, log pi = 0 -> reward = 1.
        let mut d2 = Discriminator { f_net: Mlp::zeros(&[3, 1]) };
        let np = d2.f_net.n_params();
        d2.f_net.params_mut()[np - 1] = 1.0;
        assert!((recovered_reward(&d2, &p, &obs, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovered_reward_agrees_with_log_odds_route() {
        let d = Discriminator::new(4, 2, &[8], 11);
        let p = Policy::new(4, 2, &[8], 1.0, -0.2, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let obs: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let direct = recovered_reward(&d, &p, &obs, &a);
            let dd = discriminator_output(&d, &p, &obs, &a).unwrap();
            let via_d = dd.ln() - (1.0 - dd).ln();
            assert!((direct - via_d).abs() < 1e-9, "{} vs {}", direct, via_d);
        }
    }

    #[test]
    fn returns_follow_the_geometric_sum() {
        let c = 2.5;
        let returns = discounted_returns(&[c, c, c], 0.9);
        let expect2 = c;
        let expect1 = c + 0.9 * expect2;
        let expect0 = c + 0.9 * expect1;
        assert!((returns[2] - expect2).abs() < 1e-12);
        assert!((returns[1] - expect1).abs() < 1e-12);
        assert!((returns[0] - expect0).abs() < 1e-12);
        assert!((returns[0] - 2.71 * c).abs() < 1e-9);
    }

    #[test]
    fn gae_with_zero_lambda_reduces_to_rewards() {
        let rewards = vec![1.0, -2.0, 0.5, 3.0];
        assert_eq!(gae_advantages(&rewards, 0.99, 0.0), rewards);
    }

    #[test]
    fn policy_loss_closed_forms() {
        let p = Policy::new(3, 1, &[4], 1.0, -0.3, 7);
        let obs = vec![0.1, 0.2, -0.3];
        let action = vec![0.4];
        let lp = p.logprob(&obs, &action);

        // rho = 1 everywhere: loss is -mean(A) minus the entropy bonus.
        let steps: Vec<RolloutStep> = [0.5, -1.0, 2.0]
            .iter()
            .map(|&adv| RolloutStep {
                obs: obs.clone(),
                action: action.clone(),
                logprob: lp,
                reward: 0.0,
                advantage: adv,
                ret: 0.0,
            })
            .collect();
        let loss = policy_loss_steps(&p, &steps, 0.2, 0.01);
        let expect = -(0.5 - 1.0 + 2.0) / 3.0 - 0.01 * p.entropy();
        assert!((loss - expect).abs() < 1e-12);

        // Zero advantages: only the entropy bonus remains.
        let zero_steps: Vec<RolloutStep> = steps
            .iter()
            .map(|s| RolloutStep { advantage: 0.0, ..s.clone() })
            .collect();
        let loss = policy_loss_steps(&p, &zero_steps, 0.2, 0.01);
        assert!((loss + 0.01 * p.entropy()).abs() < 1e-12);

        // rho = 1.5 with A = 1: the clipped branch wins at 1.2.
        let one = vec![RolloutStep {
            obs: obs.clone(),
            action: action.clone(),
            logprob: lp - 1.5f64.ln(),
            reward: 0.0,
            advantage: 1.0,
            ret: 0.0,
        }];
        let loss = policy_loss_steps(&p, &one, 0.2, 0.0);
        assert!((loss - (-1.2)).abs() < 1e-12);
    }

    #[test]
    fn policy_loss_gradient_matches_finite_differences() {
        let p = Policy::new(4, 2, &[6], 1.0, -0.4, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let steps: Vec<RolloutStep> = (0..6)
            .map(|_| {
                let obs: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let action: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.8..0.8)).collect();
                let lp = p.logprob(&obs, &action);
                RolloutStep {
                    obs,
                    action,
                    // Keep the density ratio away from the clip kinks.
                    logprob: lp + rng.gen_range(-0.05..0.05),
                    reward: 0.0,
                    advantage: rng.gen_range(-1.0..1.0),
                    ret: 0.0,
                }
            })
            .collect();
        let (_, mean_grad, log_std_grad) = policy_loss_grad(&p, &steps, 0.2, 0.01);

        let h = 1e-5;
        let sizes = p.mean_net.layer_sizes().to_vec();
        for i in 0..p.mean_net.n_params() {
            let mut params = p.mean_net.params().to_vec();
            params[i] += h;
            let plus = policy_loss_steps(
                &Policy { mean_net: Mlp::from_params(&sizes, params.clone()), ..p.clone() },
                &steps,
                0.2,
                0.01,
            );
            params[i] -= 2.0 * h;
            let minus = policy_loss_steps(
                &Policy { mean_net: Mlp::from_params(&sizes, params), ..p.clone() },
                &steps,
                0.2,
                0.01,
            );
            let numeric = (plus - minus) / (2.0 * h);
            let denom = mean_grad[i].abs().max(numeric.abs()).max(1e-3);
            assert!(
                (mean_grad[i] - numeric).abs() / denom < 1e-4,
                "mean param {}: {} vs {}",
                i,
                mean_grad[i],
                numeric
            );
        }
        for i in 0..p.act_dim() {
            let mut pp = p.clone();
            pp.log_std[i] += h;
            let plus = policy_loss_steps(&pp, &steps, 0.2, 0.01);
            pp.log_std[i] -= 2.0 * h;
            let minus = policy_loss_steps(&pp, &steps, 0.2, 0.01);
            let numeric = (plus - minus) / (2.0 * h);
            let denom = log_std_grad[i].abs().max(numeric.abs()).max(1e-3);
            assert!((log_std_grad[i] - numeric).abs() / denom < 1e-4);
        }
    }

    #[test]
    fn rollout_collection_is_deterministic() {
        let cfg = tiny_cfg();
        let demos = tiny_demos(&cfg);
        let trainer = AirlTrainer::new(cfg.clone(), &demos, 1).unwrap();
        let a = collect_rollouts(&trainer.policy, &trainer.disc, &cfg, 64, 5).unwrap();
        let b = collect_rollouts(&trainer.policy, &trainer.disc, &cfg, 64, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn advantages_recompute_from_stored_rewards() {
        let cfg = tiny_cfg();
        let demos = tiny_demos(&cfg);
        let trainer = AirlTrainer::new(cfg.clone(), &demos, 2).unwrap();
        let batch = collect_rollouts(&trainer.policy, &trainer.disc, &cfg, 64, 9).unwrap();
        let mean = batch.steps.iter().map(|s| s.reward).sum::<f64>() / batch.steps.len() as f64;
        for (e, &start) in batch.episode_starts.iter().enumerate() {
            let end = batch
                .episode_starts
                .get(e + 1)
                .copied()
                .unwrap_or(batch.steps.len());
            let centered: Vec<f64> = batch.steps[start..end]
                .iter()
                .map(|s| s.reward - mean)
                .collect();
            let adv = gae_advantages(&centered, cfg.gamma, cfg.gae_lambda);
            let rewards: Vec<f64> = batch.steps[start..end].iter().map(|s| s.reward).collect();
            let rets = discounted_returns(&rewards, cfg.gamma);
            for (i, s) in batch.steps[start..end].iter().enumerate() {
                assert_eq!(s.advantage, adv[i]);
                assert_eq!(s.ret, rets[i]);
            }
        }
    }

    #[test]
    fn one_discriminator_step_raises_expert_output_from_uniform() {
        // Start at D = 0.5 everywhere (zero f-net, unit-density policy) and
        // check one optimizer step moves expert samples upward.
        let p = unit_density_policy(2, 1);
        let mut d = Discriminator { f_net: Mlp::new(&[3, 8, 1], 3) };
        for v in d.f_net.params_mut() {
            *v = 0.0;
        }
        let expert = vec![
            (vec![0.5, 0.1], vec![0.0]),
            (vec![0.6, -0.2], vec![0.0]),
        ];
        let policy = vec![
            (vec![-0.5, 0.3], vec![0.0]),
            (vec![-0.7, -0.1], vec![0.0]),
        ];
        let before: f64 = expert
            .iter()
            .map(|(o, a)| discriminator_output(&d, &p, o, a).unwrap())
            .sum::<f64>()
            / expert.len() as f64;
        assert!((before - 0.5).abs() < 1e-12);
        let (_, grad) = discriminator_loss_grad(&d, &p, &expert, &policy);
        let mut opt = OptimState::new(d.f_net.n_params(), 1e-3);
        opt.opt_step(d.f_net.params_mut(), &grad).unwrap();
        let after: f64 = expert
            .iter()
            .map(|(o, a)| discriminator_output(&d, &p, o, a).unwrap())
            .sum::<f64>()
            / expert.len() as f64;
        assert!(after >= before, "expert D fell from {} to {}", before, after);
    }

    #[test]
    fn zero_iterations_return_the_initialized_nets() {
        let cfg = tiny_cfg();
        let demos = tiny_demos(&cfg);
        let (policy, disc, report) = train_airl(&cfg, &demos, 0, 13).unwrap();
        let fresh = AirlTrainer::new(cfg, &demos, 13).unwrap();
        assert_eq!(policy, fresh.policy);
        assert_eq!(disc, fresh.disc);
        assert!(report.records.is_empty());
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let cfg = tiny_cfg();
        let demos = tiny_demos(&cfg);
        let (p1, d1, r1) = train_airl(&cfg, &demos, 2, 17).unwrap();
        let (p2, d2, r2) = train_airl(&cfg, &demos, 2, 17).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(d1, d2);
        assert_eq!(r1, r2);
    }
}
