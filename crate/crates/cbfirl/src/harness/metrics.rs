//! Success and collision rates over deterministic policy rollouts.

use std::io::Write;
use std::path::Path;

use crate::airl::Policy;
use crate::dynamics::{self, is_collision, is_success, observe, EnvConfig};
use crate::{Error, Result};

/// Outcome of one evaluation episode. Success and collision are independent
/// flags; an episode can score both.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub success: bool,
    pub collision: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub success_rate: f64,
    pub collision_rate: f64,
    pub n_episodes: usize,
    pub records: Vec<EpisodeRecord>,
}

impl Metrics {
    /// Rates are defined as the flag means over the records.
    pub fn from_records(records: Vec<EpisodeRecord>) -> Metrics {
        let n = records.len();
        let successes = records.iter().filter(|r| r.success).count();
        let collisions = records.iter().filter(|r| r.collision).count();
        Metrics {
            success_rate: successes as f64 / n as f64,
            collision_rate: collisions as f64 / n as f64,
            n_episodes: n,
            records,
        }
    }

    /// Report text: summary key=value lines, then per-episode rows.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n_episodes = {}\n", self.n_episodes));
        out.push_str(&format!("success_rate = {}\n", self.success_rate));
        out.push_str(&format!("collision_rate = {}\n", self.collision_rate));
        out.push_str("episode,seed,success,collision,steps\n");
        for (i, r) in self.records.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                r.seed,
                r.success as u8,
                r.collision as u8,
                r.steps
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Metrics> {
        let mut lines = text.lines();
        let mut n_episodes = None;
        let mut success_rate = None;
        let mut collision_rate = None;
        for line in lines.by_ref() {
            let line = line.trim();
            if line == "episode,seed,success,collision,steps" {
                break;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad metrics line '{}'", line)))?;
            match key.trim() {
                "n_episodes" => n_episodes = Some(value.trim().parse::<usize>()),
                "success_rate" => success_rate = Some(value.trim().parse::<f64>()),
                "collision_rate" => collision_rate = Some(value.trim().parse::<f64>()),
                other => return Err(Error::Parse(format!("unknown metrics key '{}'", other))),
            }
        }
        let mut records = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Parse(format!("bad episode row '{}'", line)));
            }
            records.push(EpisodeRecord {
                seed: fields[1]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad seed '{}'", fields[1])))?,
                success: fields[2].trim() == "1",
                collision: fields[3].trim() == "1",
                steps: fields[4]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad step count '{}'", fields[4])))?,
            });
        }
        let metrics = Metrics::from_records(records);
        let check = |label: &str, stored: Option<std::result::Result<f64, _>>, computed: f64| match stored {
            Some(Ok(v)) if v == computed => Ok(()),
            Some(Ok(v)) => Err(Error::Parse(format!(
                "{} {} does not match records ({})",
                label, v, computed
            ))),
            _ => Err(Error::Parse(format!("missing or bad {}", label))),
        };
        check("success_rate", success_rate, metrics.success_rate)?;
        check("collision_rate", collision_rate, metrics.collision_rate)?;
        match n_episodes {
            Some(Ok(n)) if n == metrics.n_episodes => {}
            _ => return Err(Error::Parse("n_episodes does not match records".to_string())),
        }
        Ok(metrics)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Metrics> {
        Metrics::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Roll the deterministic policy mean for `n_episodes` fixed-length
/// episodes with seeds `seed + i`. Success and collision are sticky flags:
/// an episode scores each if the predicate held at any step.
pub fn evaluate(p: &Policy, cfg: &EnvConfig, n_episodes: usize, seed: u64) -> Result<Metrics> {
    assert!(n_episodes >= 1, "need at least one evaluation episode");
    let mut records = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes {
        let episode_seed = seed.wrapping_add(i as u64);
        let mut state = dynamics::reset(cfg, episode_seed)?;
        let mut success = false;
        let mut collision = false;
        let mut steps = 0;
        while state.t < cfg.horizon {
            let action = p.mean_action(&observe(&state, cfg));
            state = dynamics::step(&state, &action, cfg)?;
            steps += 1;
            collision |= is_collision(&state, cfg);
            success |= is_success(&state, cfg);
        }
        records.push(EpisodeRecord {
            seed: episode_seed,
            success,
            collision,
            steps,
        });
    }
    Ok(Metrics::from_records(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::Mlp;

    fn still_policy(cfg: &EnvConfig) -> Policy {
        Policy {
            mean_net: Mlp::zeros(&[cfg.obs_len(), cfg.dim]),
            log_std: vec![-1.0; cfg.dim],
            a_max: cfg.a_max,
        }
    }

    #[test]
    fn standing_still_never_succeeds() {
        let cfg = EnvConfig::racecar(4);
        let p = still_policy(&cfg);
        let m = evaluate(&p, &cfg, 5, 0).unwrap();
        assert_eq!(m.success_rate, 0.0);
        assert_eq!(m.n_episodes, 5);
        assert!(m.records.iter().all(|r| r.steps == cfg.horizon));
    }

    #[test]
    fn rates_equal_flag_means() {
        let records = vec![
            EpisodeRecord { seed: 0, success: true, collision: false, steps: 10 },
            EpisodeRecord { seed: 1, success: true, collision: true, steps: 20 },
            EpisodeRecord { seed: 2, success: false, collision: true, steps: 30 },
            EpisodeRecord { seed: 3, success: false, collision: false, steps: 30 },
        ];
        let m = Metrics::from_records(records);
        assert_eq!(m.success_rate, 0.5);
        assert_eq!(m.collision_rate, 0.5);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let cfg = EnvConfig::racecar(4);
        let p = still_policy(&cfg);
        let a = evaluate(&p, &cfg, 3, 9).unwrap();
        let b = evaluate(&p, &cfg, 3, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_round_trips() {
        let cfg = EnvConfig::racecar(4);
        let p = still_policy(&cfg);
        let m = evaluate(&p, &cfg, 4, 2).unwrap();
        let parsed = Metrics::from_text(&m.to_text()).unwrap();
        assert_eq!(parsed, m);
    }

    #[test]
    fn report_rejects_inconsistent_rates() {
        let cfg = EnvConfig::racecar(4);
        let p = still_policy(&cfg);
        let m = evaluate(&p, &cfg, 4, 2).unwrap();
        let tampered = m.to_text().replace("success_rate = 0", "success_rate = 0.75");
        assert!(Metrics::from_text(&tampered).is_err());
    }
}
