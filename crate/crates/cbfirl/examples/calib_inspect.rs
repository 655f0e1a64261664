// Deep inspection of the adversarial loop on the obstacle-free task
fn main() {
    use cbfirl::airl::*;
    use cbfirl::demos::DemoSet;
    use cbfirl::dynamics::{self, EnvConfig, observe};
    use cbfirl::harness::evaluate;

    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(40);
    let disc_step: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let pol_step: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(3e-4);
    let epochs: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(4);
    let ent: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let ils: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(-0.5);

    let mut env = EnvConfig::racecar(0);
    env.n_obstacles = 0;
    env.k_nearest = 0;
    let mut cfg = AirlConfig::new(env.clone());
    cfg.step_size = pol_step;
    cfg.disc_step_size = disc_step;
    cfg.update_epochs = epochs;
    cfg.entropy_coef = ent;
    cfg.init_log_std = ils;
    cfg.eval_every = 1_000_000;
    let demos = DemoSet::collect(&env, 64, 0, 0.1, 0).unwrap();
    let mut trainer = AirlTrainer::new(cfg.clone(), &demos, 0).unwrap();
    for it in 0..iters {
        let rec = trainer.iteration(it, 0, None).unwrap();
        if it % 2 == 1 {
            let batch = collect_rollouts(&trainer.policy, &trainer.disc, &cfg, 512, 777).unwrap();
            let mean_r: f64 = batch.steps.iter().map(|s| s.reward).sum::<f64>() / batch.steps.len() as f64;
            let mean_f: f64 = batch.steps.iter().map(|s| trainer.disc.f_value(&s.obs, &s.action)).sum::<f64>() / batch.steps.len() as f64;
            let exp_pairs = demos.expert_pairs();
            let mean_f_exp: f64 = exp_pairs.iter().take(512).map(|(o, a)| trainer.disc.f_value(o, a)).sum::<f64>() / 512.0;
            let m = evaluate(&trainer.policy, &env, 20, 4242).unwrap();
            // final distance of a deterministic rollout from seed 4242
            let mut s = dynamics::reset(&env, 4242).unwrap();
            while s.t < env.horizon {
                let a = trainer.policy.mean_action(&observe(&s, &env));
                s = dynamics::step(&s, &a, &env).unwrap();
                if dynamics::is_success(&s, &env) { break; }
            }
            let dist: f64 = s.agent_pos.iter().zip(&env.goal).map(|(a,b)| (a-b)*(a-b)).sum::<f64>().sqrt();
            println!("it {:3} L_D {:.3} L_pi {:+.3} | r {:+.2} f_pol {:+.2} f_exp {:+.2} | logstd {:+.2},{:+.2} | det_succ {:.2} dist {:.2}",
                it, rec.loss_discriminator.unwrap(), rec.loss_policy.unwrap(),
                mean_r, mean_f, mean_f_exp,
                trainer.policy.log_std[0], trainer.policy.log_std[1],
                m.success_rate, dist);
        }
    }
}
