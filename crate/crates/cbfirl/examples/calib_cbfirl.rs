// Full pipeline calibration: paired AIRL vs CBFIRL comparison on racecar-8
fn main() {
    use cbfirl::airl::{train_airl, AirlConfig};
    use cbfirl::cbf::{train_cbfirl, sign_accuracy, holdout_split, CbfConfig, CbfirlConfig};
    use cbfirl::demos::DemoSet;
    use cbfirl::dynamics::EnvConfig;
    use cbfirl::harness::evaluate;
    use std::time::Instant;

    let args: Vec<String> = std::env::args().collect();
    let pre: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(60);
    let joint: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(40);
    let w: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0);
    let lambda: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let skip_airl: bool = args.get(6).map(|s| s == "skip").unwrap_or(false);

    let env = EnvConfig::racecar(8);
    let mut airl_cfg = AirlConfig::new(env.clone());
    if let Some(ee) = args.get(7) { airl_cfg.eval_every = ee.parse().unwrap(); }
    airl_cfg.eval_episodes = 50;
    let mut cbf_cfg = CbfConfig::new(env.dt);
    cbf_cfg.joint_iters = joint;
    cbf_cfg.w = w;
    cbf_cfg.lambda = lambda;
    let demos = DemoSet::collect(&env, 64, 1024, 0.1, seed).unwrap();

    // AIRL at the same total budget.
    if !skip_airl {
        let t0 = Instant::now();
        let (p_airl, _, _) = train_airl(&airl_cfg, &demos, pre + joint, seed).unwrap();
        let m_airl = evaluate(&p_airl, &env, 100, 777_000).unwrap();
        println!("airl   ({} iters, {:.0}s): success {:.2} collision {:.2}",
            pre + joint, t0.elapsed().as_secs_f64(), m_airl.success_rate, m_airl.collision_rate);
    }

    let t1 = Instant::now();
    let cfg = CbfirlConfig { airl: airl_cfg.clone(), cbf: cbf_cfg.clone(), airl_iters: pre };
    let (p_cbf, _, barrier, report) = train_cbfirl(&cfg, &demos, seed).unwrap();
    let m_cbf = evaluate(&p_cbf, &env, 100, 777_000).unwrap();
    println!("cbfirl ({}+{} iters, w={}, {:.0}s): success {:.2} collision {:.2}",
        pre, joint, w, t1.elapsed().as_secs_f64(), m_cbf.success_rate, m_cbf.collision_rate);

    let (_, _, held_safe, held_pd) = holdout_split(&demos, 0);
    println!("barrier held-out acc (fresh split): {:.3}", sign_accuracy(&barrier, &held_safe, &held_pd));
    for r in report.records.iter().filter(|r| r.loss_derivative.is_some()).take(50) {
        if r.success_rate.is_some() || r.estimate_y.is_some() {
            println!("  joint iter {:3}: L_deriv {:.3} y {:?} succ {:?} coll {:?}",
                r.iteration, r.loss_derivative.unwrap(), r.estimate_y, r.success_rate, r.collision_rate);
        }
    }
}
