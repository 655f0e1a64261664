//! Learned control barrier and the joint safe-imitation pipeline.
//!
//! The barrier net is trained to be positive on demonstrated states and
//! negative on sampled near-obstacle states (hinge losses with small
//! margins). A derivative penalty then pushes the policy to keep the
//! barrier from decreasing faster than the class-K slope allows along its
//! own one-step lookahead, which is the discrete forward-invariance
//! condition on the barrier's superlevel set. Feasibility is checked on
//! samples via the minimum slack across the three requirements.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::airl::{AirlConfig, AirlTrainer, Discriminator, Policy, PolicyShaping, RolloutBatch};
use crate::demos::DemoSet;
use crate::diffnet::{Gradient, Mlp, OptimState};
use crate::dynamics::{
    advance_linearized, min_obstacle_distance, observe, EnvConfig, Observation, WorldState,
};
use crate::report::{TrainRecord, TrainReport};
use crate::seeding::{derive_seed, STREAM_BARRIER_INIT, STREAM_BARRIER_TRAIN, STREAM_REFINE};
use crate::{Error, Result};

/// Scalar-valued barrier network over observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Barrier {
    pub h_net: Mlp,
}

impl Barrier {
    /// The output bias starts at +0.1 so the untrained barrier is weakly
    /// positive and the superlevel set is nonempty from the start.
    pub fn new(obs_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut h_net = Mlp::new(&sizes, seed);
        let n = h_net.n_params();
        h_net.params_mut()[n - 1] = 0.1;
        Barrier { h_net }
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.h_net.forward(obs)[0]
    }
}

/// Barrier-side hyperparameters.
#[derive(Debug, Clone)]
pub struct CbfConfig {
    /// Class-K slope: alpha(h) = lambda * h.
    pub lambda: f64,
    /// Trade-off weight of the derivative penalty in the combined loss.
    pub w: f64,
    pub margin_safe: f64,
    pub margin_pd: f64,
    /// Seconds per step; shared with the environment config.
    pub dt: f64,
    pub barrier_hidden: Vec<usize>,
    pub barrier_epochs: usize,
    pub barrier_batch: usize,
    pub joint_iters: usize,
    pub freeze_barrier_in_step2: bool,
    /// Explored-state pool cap per joint update.
    pub pool_cap: usize,
    /// Chunk of the pool consumed per policy minibatch update.
    pub pool_chunk: usize,
    pub step_size: f64,
}

impl CbfConfig {
    pub fn new(dt: f64) -> Self {
        CbfConfig {
            lambda: 1.0,
            w: 0.5,
            margin_safe: 0.05,
            margin_pd: 0.05,
            dt,
            barrier_hidden: vec![128, 128],
            barrier_epochs: 150,
            barrier_batch: 256,
            joint_iters: 40,
            freeze_barrier_in_step2: true,
            pool_cap: 2048,
            pool_chunk: 256,
            step_size: 3e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda <= 0.0 {
            return Err(Error::Config("lambda must be positive".to_string()));
        }
        if self.w < 0.0 {
            return Err(Error::Config("w must be non-negative".to_string()));
        }
        if self.margin_safe < 0.0 || self.margin_pd < 0.0 {
            return Err(Error::Config("margins must be non-negative".to_string()));
        }
        if self.lambda * self.dt > 1.0 {
            return Err(Error::Config(format!(
                "lambda * dt must not exceed 1 for discrete-time feasibility (got {})",
                self.lambda * self.dt
            )));
        }
        Ok(())
    }
}

/// Hinge classification loss: `sum max(m_s - h, 0)` over safe states plus
/// `sum max(m_pd + h, 0)` over potentially dangerous ones. With both margins
/// zero this is the exact barrier objective, whose degenerate minimizer
/// `h = 0` is what the margins rule out.
pub fn barrier_loss(
    b: &Barrier,
    safe: &[Observation],
    pd: &[Observation],
    margin_safe: f64,
    margin_pd: f64,
) -> f64 {
    assert!(!safe.is_empty() && !pd.is_empty(), "state sets must be nonempty");
    let ls: f64 = safe.iter().map(|s| (margin_safe - b.value(s)).max(0.0)).sum();
    let lp: f64 = pd.iter().map(|s| (margin_pd + b.value(s)).max(0.0)).sum();
    ls + lp
}

/// [`barrier_loss`] plus its gradient with respect to the barrier
/// parameters.
pub fn barrier_loss_grad(
    b: &Barrier,
    safe: &[Observation],
    pd: &[Observation],
    margin_safe: f64,
    margin_pd: f64,
) -> (f64, Gradient) {
    assert!(!safe.is_empty() && !pd.is_empty(), "state sets must be nonempty");
    let mut grad = vec![0.0; b.h_net.n_params()];
    let mut loss = 0.0;
    for s in safe {
        let h = b.value(s);
        if margin_safe - h > 0.0 {
            loss += margin_safe - h;
            let (g, _) = b.h_net.backward(s, &[-1.0]);
            for (gi, gg) in grad.iter_mut().zip(&g) {
                *gi += gg;
            }
        }
    }
    for s in pd {
        let h = b.value(s);
        if margin_pd + h > 0.0 {
            loss += margin_pd + h;
            let (g, _) = b.h_net.backward(s, &[1.0]);
            for (gi, gg) in grad.iter_mut().zip(&g) {
                *gi += gg;
            }
        }
    }
    (loss, grad)
}

/// Slack of the discrete decrease condition at one state:
/// `(h(T(s, pi(s))) - h(s)) / dt + lambda * h(s)`. The action is the policy
/// mean, clamped like an executed action; obstacles advance by their stored
/// velocities.
struct R3Eval {
    h: f64,
    slack: f64,
}

fn eval_r3(b: &Barrier, p: &Policy, s: &WorldState, lambda: f64, dt: f64, env: &EnvConfig) -> R3Eval {
    let obs = observe(s, env);
    let h = b.value(&obs);
    let action = p.mean_action(&obs);
    let (next, _) = advance_linearized(s, &action, env);
    let h_next = b.value(&observe(&next, env));
    R3Eval {
        h,
        slack: (h_next - h) / dt + lambda * h,
    }
}

/// Hinge penalty over the explored states whose barrier value is
/// non-negative: `sum max(-slack, 0)`. States below the superlevel set do
/// not contribute.
pub fn derivative_loss(
    b: &Barrier,
    p: &Policy,
    states: &[WorldState],
    cfg: &CbfConfig,
    env: &EnvConfig,
) -> f64 {
    states
        .iter()
        .map(|s| {
            let r3 = eval_r3(b, p, s, cfg.lambda, cfg.dt, env);
            if r3.h >= 0.0 {
                (-r3.slack).max(0.0)
            } else {
                0.0
            }
        })
        .sum()
}

/// Value and gradients of [`derivative_loss`]. The policy gradient flows
/// through the action into the one-step lookahead; the barrier gradient
/// covers both evaluations of `h`.
pub struct DerivativeGrads {
    pub value: f64,
    pub barrier_grad: Gradient,
    pub policy_mean_grad: Gradient,
    /// States that passed the superlevel filter.
    pub contributing: usize,
    /// Filtered states with an active hinge (negative slack).
    pub violations: usize,
}

pub fn derivative_loss_grad(
    b: &Barrier,
    p: &Policy,
    states: &[WorldState],
    cfg: &CbfConfig,
    env: &EnvConfig,
) -> DerivativeGrads {
    let mut out = DerivativeGrads {
        value: 0.0,
        barrier_grad: vec![0.0; b.h_net.n_params()],
        policy_mean_grad: vec![0.0; p.mean_net.n_params()],
        contributing: 0,
        violations: 0,
    };
    for s in states {
        let obs = observe(s, env);
        let h = b.value(&obs);
        if h < 0.0 {
            continue;
        }
        out.contributing += 1;
        let mean = p.mean_raw(&obs);
        let action: Vec<f64> = mean.iter().map(|m| m.clamp(-env.a_max, env.a_max)).collect();
        let (next, lin) = advance_linearized(s, &action, env);
        let obs_next = observe(&next, env);
        let h_next = b.value(&obs_next);
        let slack = (h_next - h) / cfg.dt + cfg.lambda * h;
        if slack >= 0.0 {
            continue;
        }
        out.violations += 1;
        out.value += -slack;
        // term = -(h' - h)/dt - lambda h:
        //   d(term)/dh' = -1/dt, d(term)/dh = 1/dt - lambda.
        let w_next = -1.0 / cfg.dt;
        let w_here = 1.0 / cfg.dt - cfg.lambda;
        let (bg_next, obs_next_cot) = b.h_net.backward(&obs_next, &[w_next]);
        let (bg_here, _) = b.h_net.backward(&obs, &[w_here]);
        for i in 0..out.barrier_grad.len() {
            out.barrier_grad[i] += bg_next[i] + bg_here[i];
        }
        // Pull the observation cotangent back to the action, gate it by the
        // action clamp, and push it through the mean net.
        let action_cot = lin.pullback(&obs_next_cot);
        let mean_cot: Vec<f64> = action_cot
            .iter()
            .zip(&mean)
            .map(|(c, m)| if m.abs() < env.a_max { *c } else { 0.0 })
            .collect();
        let (pg, _) = p.mean_net.backward(&obs, &mean_cot);
        for (gi, gg) in out.policy_mean_grad.iter_mut().zip(&pg) {
            *gi += gg;
        }
    }
    out
}

/// Weighted sum of the policy objective and the derivative penalty.
pub fn combined_loss(policy_term: f64, derivative_term: f64, w: f64) -> f64 {
    policy_term + w * derivative_term
}

/// Minimum slack across the three barrier requirements, evaluated on
/// samples: `min(min_safe h, min_pd -h, min_{explored, h >= 0} slack)`.
/// Returns infinity for the third term when no explored state lies in the
/// superlevel set.
pub fn estimate_y(
    b: &Barrier,
    p: &Policy,
    safe: &[Observation],
    pd: &[Observation],
    explored: &[WorldState],
    cfg: &CbfConfig,
    env: &EnvConfig,
) -> f64 {
    assert!(
        !safe.is_empty() && !pd.is_empty() && !explored.is_empty(),
        "state sets must be nonempty"
    );
    let m_safe = safe.iter().map(|s| b.value(s)).fold(f64::INFINITY, f64::min);
    let m_pd = pd.iter().map(|s| -b.value(s)).fold(f64::INFINITY, f64::min);
    let m_r3 = explored
        .iter()
        .filter_map(|s| {
            let r3 = eval_r3(b, p, s, cfg.lambda, cfg.dt, env);
            (r3.h >= 0.0).then_some(r3.slack)
        })
        .fold(f64::INFINITY, f64::min);
    m_safe.min(m_pd).min(m_r3)
}

/// Fraction of explored superlevel states whose discrete decrease condition
/// holds with zero hinge violation. Returns `(satisfied, contributing)`.
pub fn r3_satisfaction(
    b: &Barrier,
    p: &Policy,
    states: &[WorldState],
    cfg: &CbfConfig,
    env: &EnvConfig,
) -> (usize, usize) {
    let mut satisfied = 0;
    let mut contributing = 0;
    for s in states {
        let r3 = eval_r3(b, p, s, cfg.lambda, cfg.dt, env);
        if r3.h >= 0.0 {
            contributing += 1;
            if r3.slack >= 0.0 {
                satisfied += 1;
            }
        }
    }
    (satisfied, contributing)
}

/// Deterministic 80/20 split of the demo state sets for barrier training.
/// Returns `(train_safe, train_pd, held_safe, held_pd)`.
pub fn holdout_split(
    demos: &DemoSet,
    seed: u64,
) -> (Vec<Observation>, Vec<Observation>, Vec<Observation>, Vec<Observation>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split = |states: &[Observation], rng: &mut ChaCha8Rng| {
        let mut idx: Vec<usize> = (0..states.len()).collect();
        idx.shuffle(rng);
        let cut = (states.len() * 4) / 5;
        let train = idx[..cut].iter().map(|&i| states[i].clone()).collect();
        let held = idx[cut..].iter().map(|&i| states[i].clone()).collect();
        (train, held)
    };
    let (train_safe, held_safe) = split(&demos.safe_states, &mut rng);
    let (train_pd, held_pd) = split(&demos.pd_states, &mut rng);
    (train_safe, train_pd, held_safe, held_pd)
}

/// Sign-classification accuracy: safe states should have `h >= 0`,
/// potentially dangerous ones `h < 0`.
pub fn sign_accuracy(b: &Barrier, safe: &[Observation], pd: &[Observation]) -> f64 {
    let correct = safe.iter().filter(|s| b.value(s) >= 0.0).count()
        + pd.iter().filter(|s| b.value(s) < 0.0).count();
    correct as f64 / (safe.len() + pd.len()) as f64
}

/// Step 1: fit the barrier to the demo state sets by minibatch descent on
/// [`barrier_loss`], stopping early once the full training loss drops below
/// 1e-3. Errors if held-out sign accuracy ends below 80%.
pub fn train_barrier(
    barrier: Barrier,
    demos: &DemoSet,
    cfg: &CbfConfig,
    seed: u64,
) -> Result<(Barrier, TrainReport)> {
    cfg.validate()?;
    if demos.safe_states.is_empty() || demos.pd_states.is_empty() {
        return Err(Error::Config("barrier training needs safe and pd states".to_string()));
    }
    let mut barrier = barrier;
    let (train_safe, train_pd, held_safe, held_pd) = holdout_split(demos, seed);
    let mut opt = OptimState::new(barrier.h_net.n_params(), cfg.step_size);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_BARRIER_TRAIN, 0));
    let mut report = TrainReport::new();
    let half = (cfg.barrier_batch / 2).max(1);
    let mut safe_idx: Vec<usize> = (0..train_safe.len()).collect();
    let mut pd_idx: Vec<usize> = (0..train_pd.len()).collect();
    for epoch in 0..cfg.barrier_epochs {
        safe_idx.shuffle(&mut rng);
        pd_idx.shuffle(&mut rng);
        let mut pd_cursor = 0usize;
        for chunk in safe_idx.chunks(half) {
            let safe_mb: Vec<Observation> = chunk.iter().map(|&i| train_safe[i].clone()).collect();
            let pd_mb: Vec<Observation> = (0..half.min(train_pd.len()))
                .map(|j| train_pd[pd_idx[(pd_cursor + j) % pd_idx.len()]].clone())
                .collect();
            pd_cursor = (pd_cursor + pd_mb.len()) % pd_idx.len();
            let (_, grad) =
                barrier_loss_grad(&barrier, &safe_mb, &pd_mb, cfg.margin_safe, cfg.margin_pd);
            opt.opt_step(barrier.h_net.params_mut(), &grad)?;
        }
        let epoch_loss =
            barrier_loss(&barrier, &train_safe, &train_pd, cfg.margin_safe, cfg.margin_pd);
        report.push(TrainRecord {
            iteration: epoch,
            loss_barrier: Some(epoch_loss),
            ..Default::default()
        });
        if epoch_loss < 1e-3 {
            break;
        }
    }
    let accuracy = sign_accuracy(&barrier, &held_safe, &held_pd);
    if accuracy < 0.80 {
        return Err(Error::BarrierUnlearnable { accuracy });
    }
    Ok((barrier, report))
}

/// Pipeline configuration: the adversarial settings plus the barrier
/// settings and the pre-training budget.
#[derive(Debug, Clone)]
pub struct CbfirlConfig {
    pub airl: AirlConfig,
    pub cbf: CbfConfig,
    /// Adversarial pre-training iterations before Step 1.
    pub airl_iters: usize,
}

/// Joint-loop state implementing [`PolicyShaping`]: holds the barrier, its
/// optimizer, and the explored-state pool refreshed each iteration.
pub struct JointShaper<'a> {
    pub barrier: Barrier,
    barrier_opt: OptimState,
    cbf: CbfConfig,
    env: EnvConfig,
    safe_states: &'a [Observation],
    pd_states: &'a [Observation],
    d_pd: f64,
    pool: Vec<WorldState>,
    cursor: usize,
    iter: usize,
    base_seed: u64,
}

impl<'a> JointShaper<'a> {
    pub fn new(barrier: Barrier, cbf: CbfConfig, env: EnvConfig, demos: &'a DemoSet) -> Self {
        let barrier_opt = OptimState::new(barrier.h_net.n_params(), cbf.step_size);
        JointShaper {
            barrier,
            barrier_opt,
            cbf,
            env,
            safe_states: &demos.safe_states,
            pd_states: &demos.pd_states,
            d_pd: demos.d_pd,
            pool: Vec::new(),
            cursor: 0,
            iter: 0,
            base_seed: 0,
        }
    }

    pub fn pool(&self) -> &[WorldState] {
        &self.pool
    }

    fn next_chunk(&mut self) -> Vec<WorldState> {
        let len = self.pool.len();
        let take = self.cbf.pool_chunk.min(len);
        let mut chunk = Vec::with_capacity(take);
        for j in 0..take {
            chunk.push(self.pool[(self.cursor + j) % len].clone());
        }
        self.cursor = (self.cursor + take) % len;
        chunk
    }
}

impl PolicyShaping for JointShaper<'_> {
    fn begin_iteration(
        &mut self,
        batch: &RolloutBatch,
        global_iter: usize,
        base_seed: u64,
    ) -> Result<()> {
        self.iter = global_iter;
        self.base_seed = base_seed;
        self.cursor = 0;
        self.pool = batch
            .world_states
            .iter()
            .filter(|s| self.barrier.value(&observe(s, &self.env)) >= 0.0)
            .take(self.cbf.pool_cap)
            .cloned()
            .collect();
        Ok(())
    }

    fn policy_update_term(&mut self, policy: &Policy) -> Result<Option<(f64, Gradient)>> {
        if self.cbf.w == 0.0 || self.pool.is_empty() {
            return Ok(None);
        }
        let chunk = self.next_chunk();
        let grads = derivative_loss_grad(&self.barrier, policy, &chunk, &self.cbf, &self.env);
        // Scale by w over the chunk size so the trade-off weight does not
        // depend on how the pool is sliced.
        let scale = self.cbf.w / chunk.len() as f64;
        if !self.cbf.freeze_barrier_in_step2 {
            let scaled: Gradient = grads.barrier_grad.iter().map(|g| g * scale).collect();
            self.barrier_opt.opt_step(self.barrier.h_net.params_mut(), &scaled)?;
        }
        let policy_grad: Gradient = grads.policy_mean_grad.iter().map(|g| g * scale).collect();
        Ok(Some((scale * grads.value, policy_grad)))
    }

    fn finish_iteration(&mut self, policy: &Policy, record: &mut TrainRecord) -> Result<()> {
        if !self.pool.is_empty() {
            record.loss_derivative =
                Some(derivative_loss(&self.barrier, policy, &self.pool, &self.cbf, &self.env));
        }
        if !self.cbf.freeze_barrier_in_step2 && !self.pool.is_empty() {
            // Refine the barrier against the pd set using the clearly-safe
            // part of the freshly explored states.
            let refine_safe: Vec<Observation> = self
                .pool
                .iter()
                .filter(|s| min_obstacle_distance(s) >= self.d_pd)
                .map(|s| observe(s, &self.env))
                .collect();
            if !refine_safe.is_empty() {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    self.base_seed,
                    STREAM_REFINE,
                    self.iter as u64,
                ));
                let mut idx: Vec<usize> = (0..refine_safe.len()).collect();
                idx.shuffle(&mut rng);
                let half = (self.cbf.barrier_batch / 2).max(1);
                let mut pd_cursor = 0usize;
                for chunk in idx.chunks(half) {
                    let safe_mb: Vec<Observation> =
                        chunk.iter().map(|&i| refine_safe[i].clone()).collect();
                    let pd_mb: Vec<Observation> = (0..half.min(self.pd_states.len()))
                        .map(|j| self.pd_states[(pd_cursor + j) % self.pd_states.len()].clone())
                        .collect();
                    pd_cursor = (pd_cursor + pd_mb.len()) % self.pd_states.len();
                    let (_, grad) = barrier_loss_grad(
                        &self.barrier,
                        &safe_mb,
                        &pd_mb,
                        self.cbf.margin_safe,
                        self.cbf.margin_pd,
                    );
                    self.barrier_opt.opt_step(self.barrier.h_net.params_mut(), &grad)?;
                }
                record.loss_barrier = Some(barrier_loss(
                    &self.barrier,
                    &refine_safe,
                    self.pd_states,
                    self.cbf.margin_safe,
                    self.cbf.margin_pd,
                ));
            }
        }
        // Sampled feasibility alongside the evaluation metrics.
        if record.success_rate.is_some() && !self.pool.is_empty() {
            record.estimate_y = Some(estimate_y(
                &self.barrier,
                policy,
                self.safe_states,
                self.pd_states,
                &self.pool,
                &self.cbf,
                &self.env,
            ));
        }
        Ok(())
    }
}

/// Full pipeline: adversarial pre-training, barrier fitting, then the joint
/// loop where the policy update carries the weighted derivative penalty.
/// Deterministic in `(configs, demos, seed)`.
pub fn train_cbfirl(
    cfg: &CbfirlConfig,
    demos: &DemoSet,
    seed: u64,
) -> Result<(Policy, Discriminator, Barrier, TrainReport)> {
    cfg.cbf.validate()?;
    let mut trainer = AirlTrainer::new(cfg.airl.clone(), demos, seed)?;
    let mut report = TrainReport::new();
    for it in 0..cfg.airl_iters {
        report.push(trainer.iteration(it, seed, None)?);
    }
    let init = Barrier::new(
        cfg.airl.env.obs_len(),
        &cfg.cbf.barrier_hidden,
        derive_seed(seed, STREAM_BARRIER_INIT, 0),
    );
    let (barrier, barrier_report) =
        train_barrier(init, demos, &cfg.cbf, derive_seed(seed, STREAM_BARRIER_TRAIN, 1))?;
    let mut line = report.records.len();
    for mut r in barrier_report.records {
        r.iteration = line;
        report.push(r);
        line += 1;
    }
    let mut shaper = JointShaper::new(barrier, cfg.cbf.clone(), cfg.airl.env.clone(), demos);
    for j in 0..cfg.cbf.joint_iters {
        let it = cfg.airl_iters + j;
        let mut record = trainer.iteration(it, seed, Some(&mut shaper))?;
        record.iteration = line;
        report.push(record);
        line += 1;
    }
    let policy = trainer.selected_policy();
    Ok((policy, trainer.disc, shaper.barrier, report))
}
