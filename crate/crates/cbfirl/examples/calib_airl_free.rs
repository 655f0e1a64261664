// AIRL on the obstacle-free task: the minimal learning sanity check
fn main() {
    use cbfirl::airl::{train_airl, AirlConfig};
    use cbfirl::demos::DemoSet;
    use cbfirl::dynamics::EnvConfig;
    use cbfirl::harness::evaluate;
    use std::time::Instant;

    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(60);
    let step: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3e-4);

    let mut env = EnvConfig::racecar(0);
    env.n_obstacles = 0;
    env.k_nearest = 0;
    let mut cfg = AirlConfig::new(env.clone());
    cfg.step_size = step;
    let demos = DemoSet::collect(&env, 64, 0, 0.1, 0).unwrap();
    let t1 = Instant::now();
    let (policy, _disc, report) = train_airl(&cfg, &demos, iters, 0).unwrap();
    println!("train {} iters step {}: {:.1}s", iters, step, t1.elapsed().as_secs_f64());
    for r in &report.records {
        if r.success_rate.is_some() {
            println!("  iter {:3}  L_D {:.4}  L_pi {:+.4}  success {:.2}",
                r.iteration, r.loss_discriminator.unwrap(), r.loss_policy.unwrap(), r.success_rate.unwrap());
        }
    }
    let m = evaluate(&policy, &env, 100, 10_000).unwrap();
    println!("final: success {}", m.success_rate);
}
