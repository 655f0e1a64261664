// Print the learned reward and action field along the arena diagonal
fn main() {
    use cbfirl::airl::*;
    use cbfirl::demos::DemoSet;
    use cbfirl::dynamics::EnvConfig;

    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(40);
    let disc_step: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-4);

    let mut env = EnvConfig::racecar(0);
    env.n_obstacles = 0;
    env.k_nearest = 0;
    let mut cfg = AirlConfig::new(env.clone());
    cfg.disc_step_size = disc_step;
    cfg.eval_every = 1_000_000;
    let demos = DemoSet::collect(&env, 64, 0, 0.1, 0).unwrap();
    let mut trainer = AirlTrainer::new(cfg.clone(), &demos, 0).unwrap();
    for it in 0..iters {
        trainer.iteration(it, 0, None).unwrap();
    }
    println!("      x     f(s,0)   mean_ax  mean_ay   f(s,a_mean)");
    for i in 0..13 {
        let x = 0.6 + 0.025 * i as f64;
        let obs = vec![x, x, 0.0, 0.0];
        let f0 = trainer.disc.f_value(&obs, &[0.0, 0.0]);
        let m = trainer.policy.mean_raw(&obs);
        let fm = trainer.disc.f_value(&obs, &m);
        println!("  {:.3}  {:+.3}  {:+.4}  {:+.4}  {:+.3}", x, f0, m[0], m[1], fm);
    }
    // expert action at those states for reference
    println!("  expert a at (0.8,0.8,0,0): {:?}", cbfirl::demos::expert_action(&cbfirl::dynamics::WorldState{t:0, agent_pos: vec![0.8,0.8], agent_vel: vec![0.0,0.0], obstacles: vec![]}, &env));
}
