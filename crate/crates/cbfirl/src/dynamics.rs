//! Deterministic point-mass environments with moving obstacles.
//!
//! Both the 2-d racecar and the 3-d drone world are double integrators
//! stepped with semi-implicit Euler. Obstacles fly in straight lines and
//! reflect elastically off the arena walls. Every operation is a pure
//! function of its inputs, so trajectories replay bit-identically from a
//! seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Flat observation vector fed to every network:
/// `[agent_pos, agent_vel, rel_pos_1, obs_vel_1, ..., rel_pos_K, obs_vel_K]`
/// where the K obstacles are the nearest ones, sorted by ascending distance
/// to the agent with ties broken by obstacle index.
pub type Observation = Vec<f64>;

/// Commanded acceleration, one component per spatial dimension. Components
/// are clamped to `[-a_max, a_max]` before integration.
pub type Action = Vec<f64>;

/// Environment parameters shared by the racecar and drone domains.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub dim: usize,
    pub n_obstacles: usize,
    pub k_nearest: usize,
    /// Seconds per step.
    pub dt: f64,
    /// Maximum steps per episode.
    pub horizon: usize,
    /// Arena is the box `[-arena_half_width, arena_half_width]^dim`.
    pub arena_half_width: f64,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub goal_radius: f64,
    /// Agent radius plus obstacle radius; closer than this is a collision.
    pub collision_radius: f64,
    pub obstacle_speed_max: f64,
    pub a_max: f64,
    pub v_max: f64,
    pub seed: u64,
}

impl EnvConfig {
    /// 2-d racecar defaults with the given obstacle count.
    pub fn racecar(n_obstacles: usize) -> Self {
        EnvConfig {
            dim: 2,
            n_obstacles,
            k_nearest: 4.min(n_obstacles),
            dt: 0.1,
            horizon: 100,
            arena_half_width: 1.0,
            start: vec![-0.9, -0.9],
            goal: vec![0.9, 0.9],
            goal_radius: 0.1,
            collision_radius: 0.05,
            obstacle_speed_max: 0.1,
            a_max: 1.0,
            v_max: 0.5,
            seed: 0,
        }
    }

    /// 3-d drone defaults (32 obstacles, longer horizon).
    pub fn drone() -> Self {
        EnvConfig {
            dim: 3,
            n_obstacles: 32,
            k_nearest: 4,
            dt: 0.1,
            horizon: 400,
            arena_half_width: 1.0,
            start: vec![-0.9, -0.9, -0.9],
            goal: vec![0.9, 0.9, 0.9],
            goal_radius: 0.1,
            collision_radius: 0.05,
            obstacle_speed_max: 0.1,
            a_max: 1.0,
            v_max: 0.5,
            seed: 0,
        }
    }

    /// Observation length; fixed per configuration.
    pub fn obs_len(&self) -> usize {
        2 * self.dim * (1 + self.k_nearest)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInfeasible(msg));
        if self.dim != 2 && self.dim != 3 {
            return fail(format!("dim must be 2 or 3, got {}", self.dim));
        }
        if self.dt <= 0.0 {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if self.horizon < 1 {
            return fail("horizon must be at least 1".to_string());
        }
        // A config without obstacles is allowed as a degenerate case; then
        // there are no obstacle slots in the observation either.
        if self.n_obstacles == 0 {
            if self.k_nearest != 0 {
                return fail("k_nearest must be 0 when there are no obstacles".to_string());
            }
        } else if self.k_nearest < 1 || self.k_nearest > self.n_obstacles {
            return fail(format!(
                "k_nearest must be in 1..={}, got {}",
                self.n_obstacles, self.k_nearest
            ));
        }
        if self.goal_radius <= 0.0 || self.collision_radius <= 0.0 {
            return fail("radii must be positive".to_string());
        }
        if self.arena_half_width <= 0.0 {
            return fail("arena_half_width must be positive".to_string());
        }
        if self.a_max <= 0.0 || self.v_max <= 0.0 {
            return fail("a_max and v_max must be positive".to_string());
        }
        if self.obstacle_speed_max < 0.0 {
            return fail("obstacle_speed_max must be non-negative".to_string());
        }
        if self.start.len() != self.dim || self.goal.len() != self.dim {
            return fail("start and goal must have one coordinate per dimension".to_string());
        }
        let hw = self.arena_half_width;
        if self.start.iter().chain(self.goal.iter()).any(|c| c.abs() > hw) {
            return fail("start and goal must lie inside the arena".to_string());
        }
        if vdist(&self.start, &self.goal) <= self.goal_radius {
            return fail("start must lie outside the goal region".to_string());
        }
        Ok(())
    }
}

/// Position and velocity of one obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleState {
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
}

/// Full simulator state.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    /// Step index, 0 at reset.
    pub t: usize,
    pub agent_pos: Vec<f64>,
    pub agent_vel: Vec<f64>,
    pub obstacles: Vec<ObstacleState>,
}

// Small dense-vector helpers used across the crate.
pub(crate) fn vsub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn vscale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub(crate) fn vnorm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn vdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Uniform sample from the ball of the given radius (componentwise rejection).
fn sample_in_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    if radius <= 0.0 {
        return vec![0.0; dim];
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..radius)).collect();
        if vnorm(&v) <= radius {
            return v;
        }
    }
}

/// Sample obstacle states the way `reset` does: positions uniform over the
/// arena outside a clearance ball of radius `2 * collision_radius` around
/// both start and goal, velocities uniform in the speed ball.
pub(crate) fn sample_obstacles(cfg: &EnvConfig, rng: &mut ChaCha8Rng) -> Result<Vec<ObstacleState>> {
    let hw = cfg.arena_half_width;
    let clearance = 2.0 * cfg.collision_radius;
    let mut obstacles = Vec::with_capacity(cfg.n_obstacles);
    for i in 0..cfg.n_obstacles {
        let mut placed = false;
        for _ in 0..10_000 {
            let pos: Vec<f64> = (0..cfg.dim).map(|_| rng.gen_range(-hw..hw)).collect();
            if vdist(&pos, &cfg.start) <= clearance || vdist(&pos, &cfg.goal) <= clearance {
                continue;
            }
            let vel = sample_in_ball(rng, cfg.dim, cfg.obstacle_speed_max);
            obstacles.push(ObstacleState { pos, vel });
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::ConfigInfeasible(format!(
                "could not place obstacle {} after 10000 attempts",
                i
            )));
        }
    }
    Ok(obstacles)
}

/// Initial state: agent at the configured start with zero velocity,
/// obstacles sampled from the seed. Deterministic in `(cfg, seed)`.
pub fn reset(cfg: &EnvConfig, seed: u64) -> Result<WorldState> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obstacles = sample_obstacles(cfg, &mut rng)?;
    Ok(WorldState {
        t: 0,
        agent_pos: cfg.start.clone(),
        agent_vel: vec![0.0; cfg.dim],
        obstacles,
    })
}

/// First-order sensitivity of [`advance`] to the commanded acceleration.
///
/// Captures which clamps were active so a cotangent on the next observation
/// can be pulled back to a cotangent on the action without re-deriving the
/// integrator arithmetic. Obstacle features have no action dependence except
/// the relative positions, which depend on it through the agent position.
#[derive(Debug, Clone)]
pub struct StepLinearization {
    dim: usize,
    k_nearest: usize,
    dt: f64,
    /// True where the commanded component was strictly inside the clamp.
    act_free: Vec<bool>,
    /// True where the integrated position stayed strictly inside the arena.
    pos_free: Vec<bool>,
    /// `(v_max / |v1|, v1 / |v1|)` when the speed clamp rescaled.
    rescale: Option<(f64, Vec<f64>)>,
}

impl StepLinearization {
    /// Pull a cotangent on the next observation back to one on the action.
    pub fn pullback(&self, obs_cot: &[f64]) -> Vec<f64> {
        let d = self.dim;
        assert_eq!(
            obs_cot.len(),
            2 * d * (1 + self.k_nearest),
            "observation cotangent length mismatch"
        );
        // Cotangent of the next agent position: its own slot minus every
        // relative-position slot (rel_k = obs_pos_k - agent_pos).
        let mut cot_p: Vec<f64> = obs_cot[0..d].to_vec();
        for k in 0..self.k_nearest {
            let base = 2 * d * (1 + k);
            for i in 0..d {
                cot_p[i] -= obs_cot[base + i];
            }
        }
        // Next velocity: direct slot plus the position-integration path.
        let mut cot_v2: Vec<f64> = obs_cot[d..2 * d].to_vec();
        for i in 0..d {
            if self.pos_free[i] {
                cot_v2[i] += self.dt * cot_p[i];
            }
        }
        // The speed clamp has Jacobian s * (I - u u^T), which is symmetric.
        let cot_v1 = match &self.rescale {
            None => cot_v2,
            Some((scale, unit)) => {
                let proj: f64 = unit.iter().zip(&cot_v2).map(|(u, c)| u * c).sum();
                (0..d).map(|i| scale * (cot_v2[i] - unit[i] * proj)).collect()
            }
        };
        (0..d)
            .map(|i| if self.act_free[i] { self.dt * cot_v1[i] } else { 0.0 })
            .collect()
    }
}

fn advance_agent(
    s: &WorldState,
    a: &[f64],
    cfg: &EnvConfig,
) -> (Vec<f64>, Vec<f64>, StepLinearization) {
    let d = cfg.dim;
    let hw = cfg.arena_half_width;
    let mut act_free = vec![false; d];
    let mut a_clamped = vec![0.0; d];
    for i in 0..d {
        act_free[i] = a[i].abs() < cfg.a_max;
        a_clamped[i] = a[i].clamp(-cfg.a_max, cfg.a_max);
    }
    // Semi-implicit Euler: velocity first, then position from new velocity.
    let v1: Vec<f64> = (0..d).map(|i| s.agent_vel[i] + a_clamped[i] * cfg.dt).collect();
    let n1 = vnorm(&v1);
    let (v2, rescale) = if n1 > cfg.v_max {
        let scale = cfg.v_max / n1;
        let unit = vscale(&v1, 1.0 / n1);
        (vscale(&v1, scale), Some((scale, unit)))
    } else {
        (v1, None)
    };
    let mut pos_free = vec![false; d];
    let mut p2 = vec![0.0; d];
    for i in 0..d {
        let raw = s.agent_pos[i] + v2[i] * cfg.dt;
        pos_free[i] = raw.abs() < hw;
        p2[i] = raw.clamp(-hw, hw);
    }
    let lin = StepLinearization {
        dim: d,
        k_nearest: cfg.k_nearest,
        dt: cfg.dt,
        act_free,
        pos_free,
        rescale,
    };
    (p2, v2, lin)
}

fn advance_obstacle(o: &ObstacleState, cfg: &EnvConfig) -> ObstacleState {
    let hw = cfg.arena_half_width;
    let mut pos = o.pos.clone();
    let mut vel = o.vel.clone();
    for i in 0..cfg.dim {
        let mut x = pos[i] + vel[i] * cfg.dt;
        // Elastic reflection keeps the obstacle inside and preserves speed.
        loop {
            if x > hw {
                x = 2.0 * hw - x;
                vel[i] = -vel[i];
            } else if x < -hw {
                x = -2.0 * hw - x;
                vel[i] = -vel[i];
            } else {
                break;
            }
        }
        pos[i] = x;
    }
    ObstacleState { pos, vel }
}

/// The transition map itself, without horizon bookkeeping. Also used for
/// one-step lookahead by the barrier losses.
pub fn advance(s: &WorldState, a: &Action, cfg: &EnvConfig) -> WorldState {
    advance_linearized(s, a, cfg).0
}

/// [`advance`] plus the action sensitivity of the resulting observation.
pub fn advance_linearized(s: &WorldState, a: &Action, cfg: &EnvConfig) -> (WorldState, StepLinearization) {
    assert_eq!(a.len(), cfg.dim, "action dimension mismatch");
    assert_eq!(s.agent_pos.len(), cfg.dim, "state dimension mismatch");
    let (agent_pos, agent_vel, lin) = advance_agent(s, a, cfg);
    let obstacles = s.obstacles.iter().map(|o| advance_obstacle(o, cfg)).collect();
    (
        WorldState {
            t: s.t + 1,
            agent_pos,
            agent_vel,
            obstacles,
        },
        lin,
    )
}

/// One environment step. Errors if the episode is already over.
pub fn step(s: &WorldState, a: &Action, cfg: &EnvConfig) -> Result<WorldState> {
    if s.t >= cfg.horizon {
        return Err(Error::EpisodeFinished {
            t: s.t,
            horizon: cfg.horizon,
        });
    }
    Ok(advance(s, a, cfg))
}

/// Observation per the layout documented on [`Observation`].
pub fn observe(s: &WorldState, cfg: &EnvConfig) -> Observation {
    let mut order: Vec<usize> = (0..s.obstacles.len()).collect();
    order.sort_by(|&i, &j| {
        let di = vdist(&s.obstacles[i].pos, &s.agent_pos);
        let dj = vdist(&s.obstacles[j].pos, &s.agent_pos);
        di.partial_cmp(&dj).expect("finite distances").then(i.cmp(&j))
    });
    let mut obs = Vec::with_capacity(cfg.obs_len());
    obs.extend_from_slice(&s.agent_pos);
    obs.extend_from_slice(&s.agent_vel);
    for &idx in order.iter().take(cfg.k_nearest) {
        let o = &s.obstacles[idx];
        obs.extend(vsub(&o.pos, &s.agent_pos));
        obs.extend_from_slice(&o.vel);
    }
    obs
}

/// Minimum center distance from the agent to any obstacle; infinite when the
/// configuration has no obstacles.
pub fn min_obstacle_distance(s: &WorldState) -> f64 {
    s.obstacles
        .iter()
        .map(|o| vdist(&o.pos, &s.agent_pos))
        .fold(f64::INFINITY, f64::min)
}

/// True iff the agent is strictly closer than the collision radius to some
/// obstacle center. Touching exactly is safe.
pub fn is_collision(s: &WorldState, cfg: &EnvConfig) -> bool {
    min_obstacle_distance(s) < cfg.collision_radius
}

/// True iff the agent is within the goal radius (inclusive).
pub fn is_success(s: &WorldState, cfg: &EnvConfig) -> bool {
    vdist(&s.agent_pos, &cfg.goal) <= cfg.goal_radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg8() -> EnvConfig {
        EnvConfig::racecar(8)
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = cfg8();
        let a = reset(&cfg, 7).unwrap();
        let b = reset(&cfg, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reset_places_agent_at_start_with_zero_velocity() {
        let cfg = cfg8();
        for seed in [0, 1, 42, 9999] {
            let s = reset(&cfg, seed).unwrap();
            assert_eq!(s.agent_pos, cfg.start);
            assert_eq!(s.agent_vel, vec![0.0, 0.0]);
            assert_eq!(s.t, 0);
            assert_eq!(s.obstacles.len(), cfg.n_obstacles);
        }
    }

    #[test]
    fn reset_respects_clearance_around_start_and_goal() {
        let cfg = cfg8();
        let s = reset(&cfg, 0).unwrap();
        let clearance = 2.0 * cfg.collision_radius;
        for o in &s.obstacles {
            assert!(vdist(&o.pos, &cfg.start) > clearance);
            assert!(vdist(&o.pos, &cfg.goal) > clearance);
            assert!(vnorm(&o.vel) <= cfg.obstacle_speed_max);
        }
    }

    #[test]
    fn reset_rejects_impossible_placement() {
        // Clearance balls big enough to cover the whole arena.
        let mut cfg = cfg8();
        cfg.collision_radius = 2.0;
        cfg.goal_radius = 0.1;
        // keep start/goal valid: distance 2.55 > goal_radius
        let err = reset(&cfg, 0).unwrap_err();
        assert!(matches!(err, Error::ConfigInfeasible(_)));
    }

    #[test]
    fn step_fixed_point_at_rest() {
        let cfg = cfg8();
        let mut s = reset(&cfg, 3).unwrap();
        s.agent_pos = vec![0.0, 0.0];
        s.agent_vel = vec![0.0, 0.0];
        s.obstacles.clear();
        let next = step(&s, &vec![0.0, 0.0], &cfg).unwrap();
        assert_eq!(next.agent_pos, vec![0.0, 0.0]);
        assert_eq!(next.agent_vel, vec![0.0, 0.0]);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn step_matches_hand_euler_update() {
        let cfg = cfg8();
        let s = WorldState {
            t: 0,
            agent_pos: vec![0.0, 0.0],
            agent_vel: vec![1.0, 0.0],
            obstacles: vec![],
        };
        // Velocity 1.0 exceeds v_max = 0.5, so it is rescaled first.
        let next = step(&s, &vec![0.0, 0.0], &cfg).unwrap();
        assert!((next.agent_vel[0] - 0.5).abs() < 1e-12);
        assert!((next.agent_pos[0] - 0.05).abs() < 1e-12);

        // Below the speed limit the update is plain Euler: pos' = pos + v * dt.
        let mut slow = s.clone();
        slow.agent_vel = vec![0.3, 0.0];
        let next = step(&slow, &vec![0.0, 0.0], &cfg).unwrap();
        assert!((next.agent_pos[0] - 0.03).abs() < 1e-15);
        assert_eq!(next.agent_vel, vec![0.3, 0.0]);
    }

    #[test]
    fn velocity_clamps_to_v_max_by_norm() {
        let cfg = cfg8();
        let s = WorldState {
            t: 0,
            agent_pos: vec![0.0, 0.0],
            agent_vel: vec![0.49, 0.0],
            obstacles: vec![],
        };
        let next = step(&s, &vec![1.0, 0.0], &cfg).unwrap();
        assert!((vnorm(&next.agent_vel) - cfg.v_max).abs() < 1e-12);
        // Direction preserved.
        assert!(next.agent_vel[0] > 0.0);
        assert_eq!(next.agent_vel[1], 0.0);
    }

    #[test]
    fn step_is_pure() {
        let cfg = cfg8();
        let s = reset(&cfg, 11).unwrap();
        let a = vec![0.7, -0.2];
        let n1 = step(&s, &a, &cfg).unwrap();
        let n2 = step(&s, &a, &cfg).unwrap();
        assert_eq!(n1, n2);
        assert_eq!(s, reset(&cfg, 11).unwrap());
    }

    #[test]
    fn step_after_horizon_errors() {
        let cfg = cfg8();
        let mut s = reset(&cfg, 0).unwrap();
        s.t = cfg.horizon;
        let err = step(&s, &vec![0.0, 0.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::EpisodeFinished { .. }));
    }

    #[test]
    fn observe_single_obstacle_layout() {
        let mut cfg = cfg8();
        cfg.n_obstacles = 1;
        cfg.k_nearest = 1;
        let s = WorldState {
            t: 0,
            agent_pos: vec![0.1, 0.2],
            agent_vel: vec![0.3, -0.1],
            obstacles: vec![ObstacleState {
                pos: vec![0.5, 0.5],
                vel: vec![0.01, -0.02],
            }],
        };
        let obs = observe(&s, &cfg);
        assert_eq!(obs, vec![0.1, 0.2, 0.3, -0.1, 0.4, 0.3, 0.01, -0.02]);
    }

    #[test]
    fn observe_sorts_by_distance_and_breaks_ties_by_index() {
        let mut cfg = cfg8();
        cfg.n_obstacles = 3;
        cfg.k_nearest = 2;
        let far = ObstacleState { pos: vec![0.0, 0.9], vel: vec![0.0, 0.0] };
        let near_a = ObstacleState { pos: vec![0.3, 0.0], vel: vec![1.0, 0.0] };
        let near_b = ObstacleState { pos: vec![-0.3, 0.0], vel: vec![2.0, 0.0] };
        let s = WorldState {
            t: 0,
            agent_pos: vec![0.0, 0.0],
            agent_vel: vec![0.0, 0.0],
            obstacles: vec![far, near_a.clone(), near_b.clone()],
        };
        let obs = observe(&s, &cfg);
        // Both near obstacles are at distance 0.3; index 1 must come first.
        assert_eq!(&obs[4..8], &[0.3, 0.0, 1.0, 0.0]);
        assert_eq!(&obs[8..12], &[-0.3, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn observe_selects_nearest_k_in_order() {
        let mut cfg = cfg8();
        cfg.n_obstacles = 3;
        cfg.k_nearest = 2;
        let s = WorldState {
            t: 0,
            agent_pos: vec![0.0, 0.0],
            agent_vel: vec![0.0, 0.0],
            obstacles: vec![
                ObstacleState { pos: vec![0.0, 0.3], vel: vec![0.0, 0.0] },
                ObstacleState { pos: vec![0.2, 0.0], vel: vec![0.0, 0.0] },
                ObstacleState { pos: vec![0.9, 0.0], vel: vec![0.0, 0.0] },
            ],
        };
        let obs = observe(&s, &cfg);
        assert_eq!(&obs[4..6], &[0.2, 0.0]);
        assert_eq!(&obs[8..10], &[0.0, 0.3]);
    }

    #[test]
    fn min_distance_and_collision_predicates() {
        let cfg = cfg8();
        let mk = |dists: &[f64]| WorldState {
            t: 0,
            agent_pos: vec![0.0, 0.0],
            agent_vel: vec![0.0, 0.0],
            obstacles: dists
                .iter()
                .map(|&d| ObstacleState { pos: vec![d, 0.0], vel: vec![0.0, 0.0] })
                .collect(),
        };
        let s = mk(&[1.0, 0.4, 2.2]);
        assert_eq!(min_obstacle_distance(&s), 0.4);
        let coincident = mk(&[0.0]);
        assert_eq!(min_obstacle_distance(&coincident), 0.0);
        assert!(is_collision(&coincident, &cfg));

        // Touching exactly is safe; strictly inside is not.
        let touching = mk(&[cfg.collision_radius]);
        assert!(!is_collision(&touching, &cfg));
        let inside = mk(&[0.99 * cfg.collision_radius]);
        assert!(is_collision(&inside, &cfg));
    }

    #[test]
    fn min_distance_matches_exhaustive_scan() {
        let cfg = cfg8();
        let s = reset(&cfg, 123).unwrap();
        let mut best = f64::INFINITY;
        for o in &s.obstacles {
            let d = vdist(&o.pos, &s.agent_pos);
            if d < best {
                best = d;
            }
        }
        assert_eq!(min_obstacle_distance(&s), best);
    }

    #[test]
    fn success_predicate_boundaries() {
        let cfg = cfg8();
        let mut s = reset(&cfg, 0).unwrap();
        assert!(!is_success(&s, &cfg));
        s.agent_pos = cfg.goal.clone();
        assert!(is_success(&s, &cfg));
        s.agent_pos = vec![cfg.goal[0] - cfg.goal_radius, cfg.goal[1]];
        assert!(is_success(&s, &cfg));
    }

    #[test]
    fn zero_obstacle_config_is_degenerate_but_valid() {
        let mut cfg = cfg8();
        cfg.n_obstacles = 0;
        cfg.k_nearest = 0;
        let s = reset(&cfg, 5).unwrap();
        assert_eq!(observe(&s, &cfg).len(), 4);
        assert_eq!(min_obstacle_distance(&s), f64::INFINITY);
        assert!(!is_collision(&s, &cfg));
    }

    #[test]
    fn pullback_matches_finite_differences() {
        // Compare d(obs')/d(a) against central differences through the full
        // advance + observe composition, away from any clamp boundary.
        let mut cfg = cfg8();
        cfg.n_obstacles = 1;
        cfg.k_nearest = 1;
        let s = WorldState {
            t: 0,
            agent_pos: vec![0.1, -0.2],
            agent_vel: vec![0.2, 0.1],
            obstacles: vec![ObstacleState { pos: vec![0.5, 0.4], vel: vec![0.03, -0.05] }],
        };
        let a = vec![0.3, -0.4];
        let (_, lin) = advance_linearized(&s, &a, &cfg);
        let obs_len = cfg.obs_len();
        let h = 1e-6;
        for slot in 0..obs_len {
            let mut cot = vec![0.0; obs_len];
            cot[slot] = 1.0;
            let analytic = lin.pullback(&cot);
            for i in 0..2 {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[i] += h;
                am[i] -= h;
                let op = observe(&advance(&s, &ap, &cfg), &cfg)[slot];
                let om = observe(&advance(&s, &am, &cfg), &cfg)[slot];
                let numeric = (op - om) / (2.0 * h);
                assert!(
                    (analytic[i] - numeric).abs() < 1e-6,
                    "slot {} action {}: analytic {} vs numeric {}",
                    slot,
                    i,
                    analytic[i],
                    numeric
                );
            }
        }
    }

    proptest! {
        #[test]
        fn trajectories_stay_bounded(seed in 0u64..500, actions in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..40)) {
            let cfg = cfg8();
            let mut s = reset(&cfg, seed).unwrap();
            for (ax, ay) in actions {
                s = step(&s, &vec![ax, ay], &cfg).unwrap();
                prop_assert!(vnorm(&s.agent_vel) <= cfg.v_max + 1e-12);
                for c in &s.agent_pos {
                    prop_assert!(c.abs() <= cfg.arena_half_width);
                }
                for o in &s.obstacles {
                    for c in &o.pos {
                        prop_assert!(c.abs() <= cfg.arena_half_width + 1e-12);
                    }
                }
                prop_assert_eq!(observe(&s, &cfg).len(), cfg.obs_len());
            }
        }

        #[test]
        fn obstacle_reflection_preserves_speed(seed in 0u64..500, steps in 1usize..60) {
            let cfg = cfg8();
            let mut s = reset(&cfg, seed).unwrap();
            let speeds: Vec<f64> = s.obstacles.iter().map(|o| vnorm(&o.vel)).collect();
            for _ in 0..steps {
                s = advance(&s, &vec![0.0, 0.0], &cfg);
            }
            for (o, s0) in s.obstacles.iter().zip(&speeds) {
                prop_assert!((vnorm(&o.vel) - s0).abs() < 1e-12);
            }
        }

        #[test]
        fn fixed_seed_and_actions_replay_identically(seed in 0u64..200) {
            let cfg = cfg8();
            let roll = |seed: u64| {
                let mut s = reset(&cfg, seed).unwrap();
                for k in 0..20 {
                    let a = vec![((k % 5) as f64 - 2.0) / 2.0, ((k % 3) as f64 - 1.0) / 2.0];
                    s = step(&s, &a, &cfg).unwrap();
                }
                s
            };
            prop_assert_eq!(roll(seed), roll(seed));
        }
    }
}
