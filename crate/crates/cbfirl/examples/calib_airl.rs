// AIRL training calibration: iterations vs quality and wall time
fn main() {
    use cbfirl::airl::{train_airl, AirlConfig};
    use cbfirl::demos::DemoSet;
    use cbfirl::dynamics::EnvConfig;
    use cbfirl::harness::evaluate;
    use std::time::Instant;

    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(40);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0);

    let env = EnvConfig::racecar(8);
    let cfg = AirlConfig::new(env.clone());
    let t0 = Instant::now();
    let demos = DemoSet::collect(&env, 64, 1024, 0.1, seed).unwrap();
    println!("demos: {} safe states, {} pd states ({:.1}s)", demos.safe_states.len(), demos.pd_states.len(), t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let (policy, _disc, report) = train_airl(&cfg, &demos, iters, seed).unwrap();
    println!("train_airl {} iters: {:.1}s", iters, t1.elapsed().as_secs_f64());
    for r in &report.records {
        if r.success_rate.is_some() {
            println!("  iter {:3}  L_D {:.4}  L_pi {:+.4}  success {:.2}  collision {:.2}",
                r.iteration, r.loss_discriminator.unwrap(), r.loss_policy.unwrap(),
                r.success_rate.unwrap(), r.collision_rate.unwrap());
        }
    }
    let t2 = Instant::now();
    let m = evaluate(&policy, &env, 100, 10_000).unwrap();
    println!("final eval 100 eps ({:.1}s): success {} collision {}", t2.elapsed().as_secs_f64(), m.success_rate, m.collision_rate);
}
