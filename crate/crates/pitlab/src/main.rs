// Temporary pipeline smoke runner; replaced by the real CLI in a later pass.
use pitlab::dynamics::VehiclePreset;
use pitlab::surrogate::*;
use std::time::Instant;

fn main() {
    let t_all = Instant::now();
    let p = VehiclePreset::full_size();
    let tp = &p.target;

    let t = Instant::now();
    let cfg = DataGenConfig::default();
    let data = generate_dataset(&cfg, tp);
    println!("dataset: {} samples in {:.2?}", data.len(), t.elapsed());

    let n_train = data.len() * 9 / 10;
    let (train, held) = data.split_at(n_train);

    let (h1, h2) = solve_hidden_dims(12, 8, 8965).unwrap();
    let spec = MLPSpec::new(12, vec![h1, h2], 8);
    println!("spec: 12 -> {h1} -> {h2} -> 8 = {} params", spec.param_count());

    let t = Instant::now();
    let tcfg = TrainConfig { epochs: 150, lr: 3e-3, ..TrainConfig::default() };
    let (teacher, norm, rep) = train_teacher(train, spec.clone(), &tcfg, tp).unwrap();
    println!(
        "teacher: {:.2?}  loss {:.3e} -> {:.3e}",
        t.elapsed(),
        rep.loss_history[0],
        rep.final_loss
    );

    // One-step psi RMSE on held-out transitions.
    let psi_rmse = |net: &dyn Predictor| {
        let mut se = 0.0;
        for s in held.iter().take(200) {
            let f_t = pitlab::dynamics::ContactForce { normal: s.fn_hist[0], tangential: s.ft_hist[0] };
            let f_p = pitlab::dynamics::ContactForce { normal: s.fn_hist[1], tangential: s.ft_hist[1] };
            let pred = predict_step(net, &norm, &s.x_prev, &f_t, &f_p, s.dt).unwrap();
            let e = pitlab::math::wrap_to_pi(pred.psi - s.x_next.psi);
            se += e * e;
        }
        (se / 200.0).sqrt()
    };
    println!("teacher one-step psi RMSE: {:.5} rad", psi_rmse(&teacher));


    let t = Instant::now();
    let dcfg = TrainConfig { epochs: 40, ..tcfg };
    let (student, _drep) = distill(&teacher, &norm, train, &dcfg).unwrap();
    println!("distill: {:.2?}", t.elapsed());

    let t = Instant::now();
    let targets = default_cluster_targets(&spec, 812);
    let relation = cluster_parameters(&student, &targets).unwrap();
    let theta = init_theta(&relation, &student.weights);
    let pico0 = PicoNet { spec: spec.clone(), relation, theta };
    println!("cluster: {:.2?}  free {}", t.elapsed(), pico0.relation.n_free);

    let t = Instant::now();
    let fcfg = TrainConfig { epochs: 60, ..tcfg };
    let (pico, frep) = finetune(&pico0, &norm, train, &fcfg, tp).unwrap();
    println!("finetune: {:.2?}  loss -> {:.3e}", t.elapsed(), frep.final_loss);
    println!("pico one-step psi RMSE: {:.5} rad", psi_rmse(&pico));

    // 2 s rollouts on fresh episodes: follow each episode's recorded force
    // sequence and compare terminal heading.
    let ecfg = DataGenConfig { n_episodes: 50, steps_per_episode: 40, seed: 999, ..cfg };
    let eval = generate_dataset(&ecfg, tp);
    let mut errs = Vec::new();
    for ep in eval.chunks(40) {
        if ep.len() < 40 {
            continue;
        }
        let forces: Vec<_> = ep
            .iter()
            .map(|s| pitlab::dynamics::ContactForce { normal: s.fn_hist[0], tangential: s.ft_hist[0] })
            .collect();
        let states = rollout_states(&pico, &norm, &ep[0].x_prev, &forces, 1.0, ep[0].dt).unwrap();
        let e = pitlab::math::wrap_to_pi(states.last().unwrap().psi - ep.last().unwrap().x_next.psi);
        errs.push(e.abs());
    }
    let mean_err = errs.iter().sum::<f64>() / errs.len() as f64;
    let max_err = errs.iter().cloned().fold(0.0f64, f64::max);
    println!(
        "rollout terminal heading err over {} episodes: mean {:.4} max {:.4} rad",
        errs.len(),
        mean_err,
        max_err
    );
    println!("total: {:.2?}", t_all.elapsed());
}
