//! Scripted expert and the data it produces: demonstration trajectories,
//! the safe state set distilled from them, and the sampled set of
//! potentially dangerous near-obstacle states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

use crate::dynamics::{
    self, is_collision, is_success, min_obstacle_distance, observe, sample_obstacles, vnorm, vscale,
    vsub, Action, EnvConfig, Observation, WorldState,
};
use crate::seeding::{derive_seed, STREAM_DEMOS, STREAM_PD};
use crate::{Error, Result};

/// Attraction gain toward the goal.
const GOAL_GAIN: f64 = 2.0;
/// Inverse-square repulsion gain, active inside `3 * collision_radius`.
const OBSTACLE_GAIN: f64 = 0.004;
/// Velocity damping, roughly critical for the attraction gain above.
const DAMPING: f64 = 2.8;

/// One expert rollout: the visited observations with the actions taken, and
/// per-step collision/success flags evaluated on the post-step state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<(Observation, Action)>,
    pub collision_flags: Vec<bool>,
    pub success_flags: Vec<bool>,
    /// Seed that reproduces this rollout via `reset(cfg, seed)`.
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn had_collision(&self) -> bool {
        self.collision_flags.iter().any(|&c| c)
    }

    pub fn succeeded(&self) -> bool {
        self.success_flags.last().copied().unwrap_or(false)
    }
}

/// Demonstrations plus the two state sets the barrier is trained on.
#[derive(Debug, Clone)]
pub struct DemoSet {
    pub demos: Vec<Trajectory>,
    pub safe_states: Vec<Observation>,
    pub pd_states: Vec<Observation>,
    /// Near-danger threshold the pd states were collected with.
    pub d_pd: f64,
}

impl DemoSet {
    /// Run the full collection protocol with sub-seeds derived from `seed`.
    pub fn collect(
        cfg: &EnvConfig,
        n_demos: usize,
        pd_count: usize,
        d_pd: f64,
        seed: u64,
    ) -> Result<DemoSet> {
        let demos = generate_demos(cfg, n_demos, derive_seed(seed, STREAM_DEMOS, 0))?;
        let safe_states = collect_safe_states(&demos);
        let pd_states = if cfg.n_obstacles == 0 {
            Vec::new()
        } else {
            collect_pd_states(cfg, pd_count, d_pd, derive_seed(seed, STREAM_PD, 0))?
        };
        Ok(DemoSet {
            demos,
            safe_states,
            pd_states,
            d_pd,
        })
    }

    /// All (observation, action) pairs across the demos, in order.
    pub fn expert_pairs(&self) -> Vec<(Observation, Action)> {
        self.demos
            .iter()
            .flat_map(|t| t.steps.iter().cloned())
            .collect()
    }
}

/// Potential-field controller: attraction toward the goal, inverse-square
/// repulsion from obstacles inside `3 * collision_radius`, velocity damping.
/// The result is rescaled (direction-preserving) so no component exceeds
/// `a_max`.
pub fn expert_action(s: &WorldState, cfg: &EnvConfig) -> Action {
    let mut accel = vscale(&vsub(&cfg.goal, &s.agent_pos), GOAL_GAIN);
    let influence = 3.0 * cfg.collision_radius;
    for o in &s.obstacles {
        let away = vsub(&s.agent_pos, &o.pos);
        let d = vnorm(&away);
        if d < influence && d > 1e-9 {
            let push = OBSTACLE_GAIN / (d * d);
            for i in 0..cfg.dim {
                accel[i] += push * away[i] / d;
            }
        }
    }
    for i in 0..cfg.dim {
        accel[i] -= DAMPING * s.agent_vel[i];
    }
    let m = accel.iter().fold(0.0f64, |acc, a| acc.max(a.abs()));
    if m > cfg.a_max {
        accel = vscale(&accel, cfg.a_max / m);
    }
    accel
}

/// Roll the expert from `reset(cfg, seed)` for the full horizon. Episodes
/// are fixed-length; a successful expert parks at the goal, so the
/// demonstrations cover the near-goal region densely.
pub fn rollout_expert(cfg: &EnvConfig, seed: u64) -> Result<Trajectory> {
    let mut state = dynamics::reset(cfg, seed)?;
    let mut traj = Trajectory {
        steps: Vec::new(),
        collision_flags: Vec::new(),
        success_flags: Vec::new(),
        seed,
    };
    while state.t < cfg.horizon {
        let obs = observe(&state, cfg);
        let action = expert_action(&state, cfg);
        let next = dynamics::step(&state, &action, cfg)?;
        traj.steps.push((obs, action));
        traj.collision_flags.push(is_collision(&next, cfg));
        traj.success_flags.push(is_success(&next, cfg));
        state = next;
    }
    Ok(traj)
}

/// Generate `n` demonstrations, keeping only rollouts that reach the goal
/// without a single collision. Seeds are consumed in order starting at
/// `seed`, so the result is deterministic.
pub fn generate_demos(cfg: &EnvConfig, n: usize, seed: u64) -> Result<Vec<Trajectory>> {
    assert!(n >= 1, "need at least one demonstration");
    let mut demos = Vec::with_capacity(n);
    let mut attempts: usize = 0;
    let mut offset: u64 = 0;
    while demos.len() < n {
        let traj = rollout_expert(cfg, seed.wrapping_add(offset))?;
        attempts += 1;
        offset += 1;
        if traj.succeeded() && !traj.had_collision() {
            demos.push(traj);
        }
        if attempts == 1000 {
            let ratio = demos.len() as f64 / attempts as f64;
            if ratio < 0.05 {
                return Err(Error::ExpertTooWeak { ratio, attempts });
            }
        }
    }
    Ok(demos)
}

/// The safe set: every observation of every demo, order preserved, no
/// deduplication.
pub fn collect_safe_states(demos: &[Trajectory]) -> Vec<Observation> {
    demos
        .iter()
        .flat_map(|t| t.steps.iter().map(|(obs, _)| obs.clone()))
        .collect()
}

/// Sample world states uniformly and keep those whose nearest obstacle lies
/// in the band `[collision_radius, d_pd)`: close to danger without being in
/// it. Agent velocity is drawn from the `v_max` ball, obstacles are placed
/// the same way `reset` places them.
pub fn collect_pd_states(
    cfg: &EnvConfig,
    count: usize,
    d_pd: f64,
    seed: u64,
) -> Result<Vec<Observation>> {
    if d_pd <= cfg.collision_radius {
        return Err(Error::ConfigInfeasible(format!(
            "d_pd ({}) must exceed collision_radius ({})",
            d_pd, cfg.collision_radius
        )));
    }
    cfg.validate()?;
    let hw = cfg.arena_half_width;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(count);
    let mut proposals: usize = 0;
    while states.len() < count {
        proposals += 1;
        let agent_pos: Vec<f64> = (0..cfg.dim).map(|_| rng.gen_range(-hw..hw)).collect();
        let agent_vel = sample_velocity(&mut rng, cfg.dim, cfg.v_max);
        let obstacles = sample_obstacles(cfg, &mut rng)?;
        let world = WorldState {
            t: 0,
            agent_pos,
            agent_vel,
            obstacles,
        };
        let d = min_obstacle_distance(&world);
        if d >= cfg.collision_radius && d < d_pd {
            states.push(observe(&world, cfg));
        }
        if proposals == 1_000_000 {
            let ratio = states.len() as f64 / proposals as f64;
            if ratio < 0.001 {
                return Err(Error::ThresholdInfeasible { ratio, proposals });
            }
        }
    }
    Ok(states)
}

fn sample_velocity(rng: &mut ChaCha8Rng, dim: usize, v_max: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-v_max..v_max)).collect();
        if vnorm(&v) <= v_max {
            return v;
        }
    }
}

/// Demo file: header naming the columns, then one row per step with
/// `episode, t, observation..., action..., collision, success` in plain
/// comma-separated decimal. Flags are 0/1.
pub fn write_demo_file(path: &Path, demos: &[Trajectory], cfg: &EnvConfig) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let mut header = vec!["episode".to_string(), "t".to_string()];
    for i in 0..cfg.obs_len() {
        header.push(format!("obs_{}", i));
    }
    for i in 0..cfg.dim {
        header.push(format!("act_{}", i));
    }
    header.push("collision".to_string());
    header.push("success".to_string());
    writeln!(file, "{}", header.join(","))?;
    for (ep, traj) in demos.iter().enumerate() {
        for (t, (obs, act)) in traj.steps.iter().enumerate() {
            let mut row = vec![ep.to_string(), t.to_string()];
            row.extend(obs.iter().map(|v| format!("{}", v)));
            row.extend(act.iter().map(|v| format!("{}", v)));
            row.push(if traj.collision_flags[t] { "1" } else { "0" }.to_string());
            row.push(if traj.success_flags[t] { "1" } else { "0" }.to_string());
            writeln!(file, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// Parse a demo file back. The file stores the rollout content only, not the
/// generating seeds, so the returned trajectories carry seed 0.
pub fn read_demo_file(path: &Path, cfg: &EnvConfig) -> Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let _header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty demo file".to_string()))?;
    let obs_len = cfg.obs_len();
    let mut demos: Vec<Trajectory> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expect = 2 + obs_len + cfg.dim + 2;
        if fields.len() != expect {
            return Err(Error::Parse(format!(
                "demo row has {} fields, expected {}",
                fields.len(),
                expect
            )));
        }
        let parse_f = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number '{}'", s)))
        };
        let episode: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad episode id '{}'", fields[0])))?;
        let obs: Vec<f64> = fields[2..2 + obs_len]
            .iter()
            .map(|s| parse_f(s))
            .collect::<Result<_>>()?;
        let act: Vec<f64> = fields[2 + obs_len..2 + obs_len + cfg.dim]
            .iter()
            .map(|s| parse_f(s))
            .collect::<Result<_>>()?;
        let collision = fields[expect - 2].trim() == "1";
        let success = fields[expect - 1].trim() == "1";
        while demos.len() <= episode {
            demos.push(Trajectory {
                steps: Vec::new(),
                collision_flags: Vec::new(),
                success_flags: Vec::new(),
                seed: 0,
            });
        }
        let traj = &mut demos[episode];
        traj.steps.push((obs, act));
        traj.collision_flags.push(collision);
        traj.success_flags.push(success);
    }
    Ok(demos)
}

/// Pd-state file: header naming the observation columns, one state per row.
pub fn write_pd_file(path: &Path, states: &[Observation], cfg: &EnvConfig) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let header: Vec<String> = (0..cfg.obs_len()).map(|i| format!("obs_{}", i)).collect();
    writeln!(file, "{}", header.join(","))?;
    for s in states {
        let row: Vec<String> = s.iter().map(|v| format!("{}", v)).collect();
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_pd_file(path: &Path) -> Result<Vec<Observation>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let _header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty pd-state file".to_string()))?;
    let mut states = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number '{}'", s)))
            })
            .collect::<Result<_>>()?;
        states.push(row);
    }
    Ok(states)
}
