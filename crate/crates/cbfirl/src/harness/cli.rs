//! Command-line surface: gen-demos, train, eval, heatmap, verify.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. For a fixed
//! config and seed every output file is byte-identical across runs;
//! wall-clock timestamps are confined to the `run_info.txt` sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::airl::{train_airl, Policy};
use crate::cbf::{
    estimate_y, r3_satisfaction, sign_accuracy, train_cbfirl, Barrier, CbfConfig,
};
use crate::demos::{write_demo_file, write_pd_file, DemoSet};
use crate::diffnet::{load_checkpoint, save_checkpoint};
use crate::dynamics::{self, observe, vnorm, EnvConfig, WorldState};
use crate::harness::config::{Mode, RunConfig};
use crate::harness::heatmap::heatmap;
use crate::harness::metrics::evaluate;
use crate::{Error, Result};

const USAGE: &str = "usage: cbfirl <gen-demos|train|eval|heatmap|verify> [flags]
  common flags:
    --config PATH       key = value config file (defaults apply if omitted)
    --out DIR           output directory (overrides config out_dir)
    --seed N            run seed (overrides config seed)
  train:
    --mode airl|cbfirl  pipeline to run (overrides config mode)
  eval:
    --checkpoint PATH   policy checkpoint to evaluate (required)
    --episodes N        evaluation episodes (overrides config eval_episodes)
  heatmap:
    --checkpoint PATH   barrier checkpoint to render (required)
    --resolution N      grid resolution (overrides config heatmap_resolution)
  verify:
    --policy PATH       policy checkpoint (required)
    --barrier PATH      barrier checkpoint (required)";

#[derive(Debug)]
struct ParsedArgs {
    command: String,
    config: Option<String>,
    out: Option<String>,
    seed: Option<u64>,
    mode: Option<String>,
    checkpoint: Option<String>,
    policy: Option<String>,
    barrier: Option<String>,
    episodes: Option<usize>,
    resolution: Option<usize>,
}

fn parse_args(argv: &[String]) -> Result<ParsedArgs> {
    let command = argv
        .first()
        .ok_or_else(|| Error::Usage("missing subcommand".to_string()))?
        .clone();
    match command.as_str() {
        "gen-demos" | "train" | "eval" | "heatmap" | "verify" => {}
        other => return Err(Error::Usage(format!("unknown subcommand '{}'", other))),
    }
    let mut args = ParsedArgs {
        command,
        config: None,
        out: None,
        seed: None,
        mode: None,
        checkpoint: None,
        policy: None,
        barrier: None,
        episodes: None,
        resolution: None,
    };
    let mut i = 1;
    while i < argv.len() {
        let flag = argv[i].as_str();
        let mut value = |name: &str| -> Result<String> {
            i += 1;
            argv.get(i)
                .cloned()
                .ok_or_else(|| Error::Usage(format!("flag '{}' needs a value", name)))
        };
        match flag {
            "--config" => args.config = Some(value(flag)?),
            "--out" => args.out = Some(value(flag)?),
            "--seed" => {
                let v = value(flag)?;
                args.seed = Some(
                    v.parse()
                        .map_err(|_| Error::Usage(format!("bad seed '{}'", v)))?,
                );
            }
            "--mode" => args.mode = Some(value(flag)?),
            "--checkpoint" => args.checkpoint = Some(value(flag)?),
            "--policy" => args.policy = Some(value(flag)?),
            "--barrier" => args.barrier = Some(value(flag)?),
            "--episodes" => {
                let v = value(flag)?;
                args.episodes = Some(
                    v.parse()
                        .map_err(|_| Error::Usage(format!("bad episode count '{}'", v)))?,
                );
            }
            "--resolution" => {
                let v = value(flag)?;
                args.resolution = Some(
                    v.parse()
                        .map_err(|_| Error::Usage(format!("bad resolution '{}'", v)))?,
                );
            }
            other => return Err(Error::Usage(format!("unknown flag '{}'", other))),
        }
        i += 1;
    }
    Ok(args)
}

fn load_config(args: &ParsedArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(Path::new(path))?,
        None => RunConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &args.mode {
        cfg.mode = Mode::parse(mode)?;
    }
    Ok(cfg)
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

struct OutDir {
    path: PathBuf,
    started: u64,
    command: String,
}

impl OutDir {
    fn create(cfg: &RunConfig, command: &str) -> Result<OutDir> {
        let path = PathBuf::from(&cfg.out_dir);
        std::fs::create_dir_all(&path)?;
        std::fs::write(path.join("config.cfg"), cfg.to_text())?;
        Ok(OutDir {
            path,
            started: unix_now(),
            command: command.to_string(),
        })
    }

    fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Timestamps live here and nowhere else.
    fn finish(&self) -> Result<()> {
        let mut f = std::fs::File::create(self.file("run_info.txt"))?;
        writeln!(f, "command = {}", self.command)?;
        writeln!(f, "started_unix = {}", self.started)?;
        writeln!(f, "finished_unix = {}", unix_now())?;
        Ok(())
    }
}

fn collect_demo_set(cfg: &RunConfig) -> Result<DemoSet> {
    let env = cfg.env_config();
    DemoSet::collect(&env, cfg.n_demos, cfg.pd_count, cfg.resolved_d_pd(), cfg.seed)
}

fn cmd_gen_demos(cfg: &RunConfig) -> Result<()> {
    let out = OutDir::create(cfg, "gen-demos")?;
    let env = cfg.env_config();
    let demos = collect_demo_set(cfg)?;
    write_demo_file(&out.file("demos.csv"), &demos.demos, &env)?;
    write_pd_file(&out.file("pd_states.csv"), &demos.pd_states, &env)?;
    println!(
        "wrote {} demonstrations ({} safe states) and {} pd states to {}",
        demos.demos.len(),
        demos.safe_states.len(),
        demos.pd_states.len(),
        out.path.display()
    );
    out.finish()
}

fn save_policy(path: &Path, policy: &Policy) -> Result<()> {
    save_checkpoint(path, &policy.mean_net, &policy.log_std)
}

fn load_policy(path: &Path, a_max: f64) -> Result<Policy> {
    let (mean_net, log_std) = load_checkpoint(path)?;
    if log_std.len() != mean_net.output_dim() {
        return Err(Error::Parse(format!(
            "policy checkpoint has {} extra values, expected one log-std per action dimension ({})",
            log_std.len(),
            mean_net.output_dim()
        )));
    }
    Ok(Policy {
        mean_net,
        log_std,
        a_max,
    })
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let out = OutDir::create(cfg, "train")?;
    let demos = collect_demo_set(cfg)?;
    match cfg.mode {
        Mode::Airl => {
            let (policy, disc, report) =
                train_airl(&cfg.airl_config(), &demos, cfg.airl_iters, cfg.seed)?;
            save_policy(&out.file("policy.ckpt"), &policy)?;
            save_checkpoint(&out.file("discriminator.ckpt"), &disc.f_net, &[])?;
            report.save(&out.file("metrics.csv"))?;
            if let Some(r) = report.last_evaluated() {
                println!(
                    "airl: {} iterations, last eval success {} collision {}",
                    report.records.len(),
                    r.success_rate.unwrap_or(f64::NAN),
                    r.collision_rate.unwrap_or(f64::NAN)
                );
            }
        }
        Mode::Cbfirl => {
            let (policy, disc, barrier, report) =
                train_cbfirl(&cfg.cbfirl_config(), &demos, cfg.seed)?;
            save_policy(&out.file("policy.ckpt"), &policy)?;
            save_checkpoint(&out.file("discriminator.ckpt"), &disc.f_net, &[])?;
            save_checkpoint(&out.file("barrier.ckpt"), &barrier.h_net, &[])?;
            report.save(&out.file("metrics.csv"))?;
            if let Some(r) = report.last_evaluated() {
                println!(
                    "cbfirl: {} log lines, last eval success {} collision {}",
                    report.records.len(),
                    r.success_rate.unwrap_or(f64::NAN),
                    r.collision_rate.unwrap_or(f64::NAN)
                );
            }
        }
    }
    out.finish()
}

fn cmd_eval(cfg: &RunConfig, args: &ParsedArgs) -> Result<()> {
    let ckpt = args
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Usage("eval needs --checkpoint".to_string()))?;
    let out = OutDir::create(cfg, "eval")?;
    let env = cfg.env_config();
    let policy = load_policy(Path::new(ckpt), env.a_max)?;
    let n = args.episodes.unwrap_or(cfg.eval_episodes);
    let metrics = evaluate(&policy, &env, n, cfg.seed)?;
    metrics.save(&out.file("eval.txt"))?;
    println!(
        "evaluated {} episodes: success_rate {} collision_rate {}",
        metrics.n_episodes, metrics.success_rate, metrics.collision_rate
    );
    out.finish()
}

fn cmd_heatmap(cfg: &RunConfig, args: &ParsedArgs) -> Result<()> {
    let ckpt = args
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Usage("heatmap needs --checkpoint".to_string()))?;
    let out = OutDir::create(cfg, "heatmap")?;
    let env = cfg.env_config();
    let (h_net, _) = load_checkpoint(Path::new(ckpt))?;
    let barrier = Barrier { h_net };
    let frozen = dynamics::reset(&env, cfg.seed)?;
    let resolution = args.resolution.unwrap_or(cfg.heatmap_resolution);
    let grid = heatmap(&barrier, &frozen, &env, resolution)?;
    grid.save(&out.file("heatmap.csv"))?;
    println!("wrote a {0}x{0} grid to {1}", resolution, out.path.display());
    out.finish()
}

/// Roll the deterministic policy and collect the visited world states.
fn explore_states(
    policy: &Policy,
    env: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<WorldState>> {
    let mut states = Vec::new();
    for i in 0..episodes {
        let mut s = dynamics::reset(env, seed.wrapping_add(i as u64))?;
        while s.t < env.horizon {
            states.push(s.clone());
            let a = policy.mean_action(&observe(&s, env));
            s = dynamics::step(&s, &a, env)?;
        }
    }
    Ok(states)
}

fn cmd_verify(cfg: &RunConfig, args: &ParsedArgs) -> Result<()> {
    let policy_path = args
        .policy
        .as_ref()
        .ok_or_else(|| Error::Usage("verify needs --policy".to_string()))?;
    let barrier_path = args
        .barrier
        .as_ref()
        .ok_or_else(|| Error::Usage("verify needs --barrier".to_string()))?;
    let out = OutDir::create(cfg, "verify")?;
    let env = cfg.env_config();
    let policy = load_policy(Path::new(policy_path), env.a_max)?;
    let (h_net, _) = load_checkpoint(Path::new(barrier_path))?;
    let barrier = Barrier { h_net };
    let demos = collect_demo_set(cfg)?;
    let cbf_cfg: CbfConfig = cfg.cbf_config();
    let explored = explore_states(&policy, &env, cfg.eval_episodes_train, cfg.seed)?;

    // Hard invariants: these gate the exit code.
    let replay_a = explore_states(&policy, &env, 1, cfg.seed)?;
    let replay_b = explore_states(&policy, &env, 1, cfg.seed)?;
    let replay_deterministic = replay_a == replay_b;
    let bounds_ok = explored.iter().all(|s| {
        vnorm(&s.agent_vel) <= env.v_max + 1e-12
            && s.agent_pos.iter().all(|c| c.abs() <= env.arena_half_width)
    });
    let obs_len_ok = explored
        .iter()
        .all(|s| observe(s, &env).len() == env.obs_len());

    // Learned-quality measurements: reported, not gated.
    let y = estimate_y(
        &barrier,
        &policy,
        &demos.safe_states,
        &demos.pd_states,
        &explored,
        &cbf_cfg,
        &env,
    );
    let r1_ok = demos
        .safe_states
        .iter()
        .filter(|s| barrier.value(s) >= 0.0)
        .count();
    let r2_ok = demos
        .pd_states
        .iter()
        .filter(|s| barrier.value(s) < 0.0)
        .count();
    let (r3_ok, r3_total) = r3_satisfaction(&barrier, &policy, &explored, &cbf_cfg, &env);
    let accuracy = sign_accuracy(&barrier, &demos.safe_states, &demos.pd_states);

    let mut text = String::new();
    text.push_str(&format!("estimate_y = {}\n", y));
    text.push_str(&format!("safe_states = {}\n", demos.safe_states.len()));
    text.push_str(&format!("pd_states = {}\n", demos.pd_states.len()));
    text.push_str(&format!("explored_states = {}\n", explored.len()));
    text.push_str(&format!(
        "r1_nonnegative_fraction = {}\n",
        r1_ok as f64 / demos.safe_states.len() as f64
    ));
    text.push_str(&format!(
        "r2_negative_fraction = {}\n",
        r2_ok as f64 / demos.pd_states.len() as f64
    ));
    text.push_str(&format!("r3_superlevel_states = {}\n", r3_total));
    text.push_str(&format!(
        "r3_satisfied_fraction = {}\n",
        if r3_total == 0 { 1.0 } else { r3_ok as f64 / r3_total as f64 }
    ));
    text.push_str(&format!("sign_accuracy = {}\n", accuracy));
    text.push_str(&format!(
        "check_replay_deterministic = {}\n",
        if replay_deterministic { "pass" } else { "fail" }
    ));
    text.push_str(&format!("check_speed_and_arena_bounds = {}\n", if bounds_ok { "pass" } else { "fail" }));
    text.push_str(&format!("check_observation_length = {}\n", if obs_len_ok { "pass" } else { "fail" }));
    std::fs::write(out.file("verify.txt"), &text)?;
    print!("{}", text);
    out.finish()?;
    if replay_deterministic && bounds_ok && obs_len_ok {
        Ok(())
    } else {
        Err(Error::Config("verification invariants failed".to_string()))
    }
}

/// Entry point behind the binary; returns the process exit code.
pub fn cli_main(argv: &[String]) -> i32 {
    let args = match parse_args(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{}", e);
            eprintln!("{}", USAGE);
            return 1;
        }
    };
    let cfg = match load_config(&args) {
        Ok(c) => c,
        Err(e) => {
            // Config problems are user input problems.
            eprintln!("{}", e);
            return 1;
        }
    };
    let result = match args.command.as_str() {
        "gen-demos" => cmd_gen_demos(&cfg),
        "train" => cmd_train(&cfg),
        "eval" => cmd_eval(&cfg, &args),
        "heatmap" => cmd_heatmap(&cfg, &args),
        "verify" => cmd_verify(&cfg, &args),
        _ => unreachable!("subcommand validated in parse_args"),
    };
    match result {
        Ok(()) => 0,
        Err(Error::Usage(msg)) => {
            eprintln!("usage error: {}", msg);
            eprintln!("{}", USAGE);
            1
        }
        Err(e) => {
            eprintln!("error: {}", e);
            2
        }
    }
}
