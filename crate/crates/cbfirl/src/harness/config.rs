//! Flat `key = value` run configuration.
//!
//! Every tunable in the pipeline lives here with a default, so an empty
//! config file is a valid racecar-8 run. Unknown keys are rejected by name.
//! `to_text` emits the fully resolved table in a fixed order, which is what
//! the harness echoes into each output directory.

use std::fmt::Write as _;

use crate::airl::AirlConfig;
use crate::cbf::{CbfConfig, CbfirlConfig};
use crate::dynamics::EnvConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Airl,
    Cbfirl,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Airl => "airl",
            Mode::Cbfirl => "cbfirl",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "airl" => Ok(Mode::Airl),
            "cbfirl" => Ok(Mode::Cbfirl),
            other => Err(Error::Config(format!("unknown mode '{}'", other))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub out_dir: String,
    // environment
    pub dim: usize,
    pub n_obstacles: usize,
    pub k_nearest: usize,
    pub dt: f64,
    pub horizon: usize,
    pub arena_half_width: f64,
    /// Empty means the default `-0.9` / `+0.9` per coordinate.
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub goal_radius: f64,
    pub collision_radius: f64,
    pub obstacle_speed_max: f64,
    pub a_max: f64,
    pub v_max: f64,
    // demonstrations
    pub n_demos: usize,
    pub pd_count: usize,
    /// Non-positive means the default `2 * collision_radius`.
    pub d_pd: f64,
    // networks and optimizer
    pub policy_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub barrier_hidden: Vec<usize>,
    pub step_size: f64,
    pub disc_step_size: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub init_log_std: f64,
    // adversarial training
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub entropy_coef: f64,
    pub steps_per_iter: usize,
    pub minibatch: usize,
    pub update_epochs: usize,
    pub bound_coef: f64,
    pub airl_iters: usize,
    pub eval_every: usize,
    pub eval_episodes_train: usize,
    // barrier
    pub lambda: f64,
    pub w: f64,
    pub margin_safe: f64,
    pub margin_pd: f64,
    pub barrier_epochs: usize,
    pub barrier_batch: usize,
    pub joint_iters: usize,
    pub freeze_barrier_in_step2: bool,
    pub pool_cap: usize,
    pub pool_chunk: usize,
    // evaluation
    pub eval_episodes: usize,
    pub heatmap_resolution: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Cbfirl,
            seed: 0,
            out_dir: "out".to_string(),
            dim: 2,
            n_obstacles: 8,
            k_nearest: 4,
            dt: 0.1,
            horizon: 100,
            arena_half_width: 1.0,
            start: Vec::new(),
            goal: Vec::new(),
            goal_radius: 0.1,
            collision_radius: 0.05,
            obstacle_speed_max: 0.1,
            a_max: 1.0,
            v_max: 0.5,
            n_demos: 64,
            pd_count: 1024,
            d_pd: 0.0,
            policy_hidden: vec![64, 64],
            disc_hidden: vec![64, 64],
            barrier_hidden: vec![128, 128],
            step_size: 3e-4,
            disc_step_size: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            init_log_std: -0.5,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            entropy_coef: 0.01,
            steps_per_iter: 2048,
            minibatch: 256,
            update_epochs: 4,
            bound_coef: 0.1,
            airl_iters: 60,
            eval_every: 10,
            eval_episodes_train: 20,
            lambda: 1.0,
            w: 0.5,
            margin_safe: 0.05,
            margin_pd: 0.05,
            barrier_epochs: 150,
            barrier_batch: 256,
            joint_iters: 40,
            freeze_barrier_in_step2: true,
            pool_cap: 2048,
            pool_chunk: 256,
            eval_episodes: 100,
            heatmap_resolution: 64,
        }
    }
}

fn parse_vec_f64(value: &str, key: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad value '{}' for key '{}'", t.trim(), key)))
        })
        .collect()
}

fn parse_vec_usize(value: &str, key: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad value '{}' for key '{}'", t.trim(), key)))
        })
        .collect()
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn resolved_start(&self) -> Vec<f64> {
        if self.start.is_empty() {
            vec![-0.9; self.dim]
        } else {
            self.start.clone()
        }
    }

    pub fn resolved_goal(&self) -> Vec<f64> {
        if self.goal.is_empty() {
            vec![0.9; self.dim]
        } else {
            self.goal.clone()
        }
    }

    pub fn resolved_d_pd(&self) -> f64 {
        if self.d_pd > 0.0 {
            self.d_pd
        } else {
            2.0 * self.collision_radius
        }
    }

    /// Apply one `key = value` pair. Unknown keys are rejected by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! num {
            ($field:ident, $ty:ty) => {{
                self.$field = value.parse::<$ty>().map_err(|_| {
                    Error::Config(format!("bad value '{}' for key '{}'", value, key))
                })?;
            }};
        }
        match key {
            "mode" => self.mode = Mode::parse(value)?,
            "seed" => num!(seed, u64),
            "out_dir" => self.out_dir = value.to_string(),
            "dim" => num!(dim, usize),
            "n_obstacles" => num!(n_obstacles, usize),
            "k_nearest" => num!(k_nearest, usize),
            "dt" => num!(dt, f64),
            "horizon" => num!(horizon, usize),
            "arena_half_width" => num!(arena_half_width, f64),
            "start" => self.start = parse_vec_f64(value, key)?,
            "goal" => self.goal = parse_vec_f64(value, key)?,
            "goal_radius" => num!(goal_radius, f64),
            "collision_radius" => num!(collision_radius, f64),
            "obstacle_speed_max" => num!(obstacle_speed_max, f64),
            "a_max" => num!(a_max, f64),
            "v_max" => num!(v_max, f64),
            "n_demos" => num!(n_demos, usize),
            "pd_count" => num!(pd_count, usize),
            "d_pd" => num!(d_pd, f64),
            "policy_hidden" => self.policy_hidden = parse_vec_usize(value, key)?,
            "disc_hidden" => self.disc_hidden = parse_vec_usize(value, key)?,
            "barrier_hidden" => self.barrier_hidden = parse_vec_usize(value, key)?,
            "step_size" => num!(step_size, f64),
            "disc_step_size" => num!(disc_step_size, f64),
            "adam_beta1" => num!(adam_beta1, f64),
            "adam_beta2" => num!(adam_beta2, f64),
            "adam_epsilon" => num!(adam_epsilon, f64),
            "init_log_std" => num!(init_log_std, f64),
            "gamma" => num!(gamma, f64),
            "gae_lambda" => num!(gae_lambda, f64),
            "clip_range" => num!(clip_range, f64),
            "entropy_coef" => num!(entropy_coef, f64),
            "steps_per_iter" => num!(steps_per_iter, usize),
            "minibatch" => num!(minibatch, usize),
            "update_epochs" => num!(update_epochs, usize),
            "bound_coef" => num!(bound_coef, f64),
            "airl_iters" => num!(airl_iters, usize),
            "eval_every" => num!(eval_every, usize),
            "eval_episodes_train" => num!(eval_episodes_train, usize),
            "lambda" => num!(lambda, f64),
            "w" => num!(w, f64),
            "margin_safe" => num!(margin_safe, f64),
            "margin_pd" => num!(margin_pd, f64),
            "barrier_epochs" => num!(barrier_epochs, usize),
            "barrier_batch" => num!(barrier_batch, usize),
            "joint_iters" => num!(joint_iters, usize),
            "freeze_barrier_in_step2" => {
                self.freeze_barrier_in_step2 = match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(Error::Config(format!(
                            "bad value '{}' for key '{}'",
                            other, key
                        )))
                    }
                }
            }
            "pool_cap" => num!(pool_cap, usize),
            "pool_chunk" => num!(pool_chunk, usize),
            "eval_episodes" => num!(eval_episodes, usize),
            "heatmap_resolution" => num!(heatmap_resolution, usize),
            other => return Err(Error::Config(format!("unknown config key '{}'", other))),
        }
        Ok(())
    }

    /// Parse a config file body: `key = value` lines, `#` comments, blank
    /// lines ignored.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', got '{}'", lineno + 1, line))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    /// Fully resolved table in fixed key order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out_dir = {}", self.out_dir);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "n_obstacles = {}", self.n_obstacles);
        let _ = writeln!(s, "k_nearest = {}", self.k_nearest);
        let _ = writeln!(s, "dt = {}", self.dt);
        let _ = writeln!(s, "horizon = {}", self.horizon);
        let _ = writeln!(s, "arena_half_width = {}", self.arena_half_width);
        let _ = writeln!(s, "start = {}", join(&self.resolved_start()));
        let _ = writeln!(s, "goal = {}", join(&self.resolved_goal()));
        let _ = writeln!(s, "goal_radius = {}", self.goal_radius);
        let _ = writeln!(s, "collision_radius = {}", self.collision_radius);
        let _ = writeln!(s, "obstacle_speed_max = {}", self.obstacle_speed_max);
        let _ = writeln!(s, "a_max = {}", self.a_max);
        let _ = writeln!(s, "v_max = {}", self.v_max);
        let _ = writeln!(s, "n_demos = {}", self.n_demos);
        let _ = writeln!(s, "pd_count = {}", self.pd_count);
        let _ = writeln!(s, "d_pd = {}", self.resolved_d_pd());
        let _ = writeln!(s, "policy_hidden = {}", join(&self.policy_hidden));
        let _ = writeln!(s, "disc_hidden = {}", join(&self.disc_hidden));
        let _ = writeln!(s, "barrier_hidden = {}", join(&self.barrier_hidden));
        let _ = writeln!(s, "step_size = {}", self.step_size);
        let _ = writeln!(s, "disc_step_size = {}", self.disc_step_size);
        let _ = writeln!(s, "adam_beta1 = {}", self.adam_beta1);
        let _ = writeln!(s, "adam_beta2 = {}", self.adam_beta2);
        let _ = writeln!(s, "adam_epsilon = {}", self.adam_epsilon);
        let _ = writeln!(s, "init_log_std = {}", self.init_log_std);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "gae_lambda = {}", self.gae_lambda);
        let _ = writeln!(s, "clip_range = {}", self.clip_range);
        let _ = writeln!(s, "entropy_coef = {}", self.entropy_coef);
        let _ = writeln!(s, "steps_per_iter = {}", self.steps_per_iter);
        let _ = writeln!(s, "minibatch = {}", self.minibatch);
        let _ = writeln!(s, "update_epochs = {}", self.update_epochs);
        let _ = writeln!(s, "bound_coef = {}", self.bound_coef);
        let _ = writeln!(s, "airl_iters = {}", self.airl_iters);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "eval_episodes_train = {}", self.eval_episodes_train);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "w = {}", self.w);
        let _ = writeln!(s, "margin_safe = {}", self.margin_safe);
        let _ = writeln!(s, "margin_pd = {}", self.margin_pd);
        let _ = writeln!(s, "barrier_epochs = {}", self.barrier_epochs);
        let _ = writeln!(s, "barrier_batch = {}", self.barrier_batch);
        let _ = writeln!(s, "joint_iters = {}", self.joint_iters);
        let _ = writeln!(s, "freeze_barrier_in_step2 = {}", self.freeze_barrier_in_step2);
        let _ = writeln!(s, "pool_cap = {}", self.pool_cap);
        let _ = writeln!(s, "pool_chunk = {}", self.pool_chunk);
        let _ = writeln!(s, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "heatmap_resolution = {}", self.heatmap_resolution);
        s
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            dim: self.dim,
            n_obstacles: self.n_obstacles,
            k_nearest: self.k_nearest,
            dt: self.dt,
            horizon: self.horizon,
            arena_half_width: self.arena_half_width,
            start: self.resolved_start(),
            goal: self.resolved_goal(),
            goal_radius: self.goal_radius,
            collision_radius: self.collision_radius,
            obstacle_speed_max: self.obstacle_speed_max,
            a_max: self.a_max,
            v_max: self.v_max,
            seed: self.seed,
        }
    }

    pub fn airl_config(&self) -> AirlConfig {
        AirlConfig {
            env: self.env_config(),
            policy_hidden: self.policy_hidden.clone(),
            disc_hidden: self.disc_hidden.clone(),
            init_log_std: self.init_log_std,
            step_size: self.step_size,
            disc_step_size: self.disc_step_size,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_epsilon: self.adam_epsilon,
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            clip_range: self.clip_range,
            entropy_coef: self.entropy_coef,
            steps_per_iter: self.steps_per_iter,
            minibatch: self.minibatch,
            update_epochs: self.update_epochs,
            bound_coef: self.bound_coef,
            eval_every: self.eval_every,
            eval_episodes: self.eval_episodes_train,
        }
    }

    pub fn cbf_config(&self) -> CbfConfig {
        CbfConfig {
            lambda: self.lambda,
            w: self.w,
            margin_safe: self.margin_safe,
            margin_pd: self.margin_pd,
            dt: self.dt,
            barrier_hidden: self.barrier_hidden.clone(),
            barrier_epochs: self.barrier_epochs,
            barrier_batch: self.barrier_batch,
            joint_iters: self.joint_iters,
            freeze_barrier_in_step2: self.freeze_barrier_in_step2,
            pool_cap: self.pool_cap,
            pool_chunk: self.pool_chunk,
            step_size: self.step_size,
        }
    }

    pub fn cbfirl_config(&self) -> CbfirlConfig {
        CbfirlConfig {
            airl: self.airl_config(),
            cbf: self.cbf_config(),
            airl_iters: self.airl_iters,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default_racecar_run() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.env_config().start, vec![-0.9, -0.9]);
        assert_eq!(cfg.resolved_d_pd(), 0.1);
        assert!(cfg.env_config().validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = RunConfig::parse("no_such_key = 3\n").unwrap_err();
        let msg = format!("{}", err);
        assert!(msg.contains("no_such_key"), "message was '{}'", msg);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# a comment\n\nseed = 42 # trailing comment\nmode = airl\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.mode, Mode::Airl);
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.dim = 3;
        cfg.n_obstacles = 32;
        cfg.horizon = 400;
        cfg.w = 0.25;
        let text = cfg.to_text();
        let parsed = RunConfig::parse(&text).unwrap();
        assert_eq!(parsed.to_text(), text);
        assert_eq!(parsed.env_config(), cfg.env_config());
        assert_eq!(parsed.resolved_start(), vec![-0.9, -0.9, -0.9]);
    }

    #[test]
    fn vector_values_parse() {
        let cfg = RunConfig::parse("start = -0.5,0.5\ngoal = 0.5,-0.5\npolicy_hidden = 32,32\n").unwrap();
        assert_eq!(cfg.resolved_start(), vec![-0.5, 0.5]);
        assert_eq!(cfg.resolved_goal(), vec![0.5, -0.5]);
        assert_eq!(cfg.policy_hidden, vec![32, 32]);
    }
}
