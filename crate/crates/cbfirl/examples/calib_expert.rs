// quick expert calibration via the library
fn main() {
    use cbfirl::dynamics::EnvConfig;
    use cbfirl::demos::rollout_expert;
    for n in [8usize, 16] {
        let cfg = EnvConfig::racecar(n);
        let mut succ = 0; let mut coll = 0; let mut lens = vec![];
        for seed in 0..200u64 {
            let t = rollout_expert(&cfg, seed).unwrap();
            if t.succeeded() { succ += 1; lens.push(t.len()); }
            if t.had_collision() { coll += 1; }
        }
        lens.sort();
        println!("racecar-{}: success {}/200, collision {}/200, median len {}", n, succ, coll, lens.get(lens.len()/2).copied().unwrap_or(0));
    }
    let cfg = EnvConfig::drone();
    let mut succ = 0; let mut coll = 0;
    for seed in 0..50u64 {
        let t = rollout_expert(&cfg, seed).unwrap();
        if t.succeeded() { succ += 1; }
        if t.had_collision() { coll += 1; }
    }
    println!("drone-32: success {}/50, collision {}/50", succ, coll);
}
