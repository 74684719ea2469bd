//! Acceptance criteria. Each test writes one PASS/FAIL line to stdout,
//! bypassing the test harness capture, then asserts.

use std::io::Write;
use std::time::Instant;

use caqa::agent::{sensing_floor, AgentConfig, SacAgent, StepMode};
use caqa::baselines::{cgq_fsg, oracle_fixed_step, CgqFsg};
use caqa::comra::display_energy;
use caqa::harness::verify::{gradcheck_all, rce_scaling_ratio, verify_fcfs, verify_rce, GRAD_TOL};
use caqa::harness::{env_rng, run_training, ExperimentPlan, TrainingRun};
use caqa::policy::PolicyKind;
use caqa::scenario::{draw_scenario, Scenario};
use caqa::service::{aeg, caqa, evaluate, generation_time};
use caqa::SystemConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn report(id: &str, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {id} [{}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn scenarios(config: &SystemConfig, n: usize, seed: u64) -> Vec<Scenario> {
    let mut rng = env_rng(seed);
    (0..n).map(|_| draw_scenario(config, &mut rng).unwrap()).collect()
}

fn mean_caqa(config: &SystemConfig, scs: &[Scenario], policy: &CgqFsg) -> f64 {
    scs.iter()
        .map(|s| evaluate(s, &cgq_fsg(s, policy, config).unwrap().alloc, config).unwrap().avg_caqa)
        .sum::<f64>()
        / scs.len() as f64
}

#[test]
fn criterion_1_rce_optimality() {
    let start = Instant::now();
    let r = verify_rce(500, 1).unwrap();
    let wall = start.elapsed().as_secs_f64();
    let pass = r.grid_evaluated == r.instances && r.grid_failures == 0 && r.exchange_failures == 0 && wall < 30.0;
    report(
        "1",
        "RCE optimality",
        pass,
        &format!(
            "{} instances ({} grid-evaluated), grid failures {}, exchange failures {}, dual gap {:.1e}, {:.2} s",
            r.instances, r.grid_evaluated, r.grid_failures, r.exchange_failures, r.worst_dual_gap, wall
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_rce_complexity() {
    let ratio = rce_scaling_ratio(10_000, 100_000, 21, 2);
    let pass = ratio < 15.0;
    report("2", "RCE complexity", pass, &format!("median runtime ratio K=1e5 / K=1e4 = {ratio:.2}"));
    assert!(pass);
}

#[test]
fn criterion_3_gradient_correctness() {
    let reports = gradcheck_all(&SystemConfig::default(), &AgentConfig::default(), 200, 3).unwrap();
    let pass = reports.iter().all(|(_, r)| r.points == 200 && r.passes(GRAD_TOL));
    let detail: Vec<String> = reports.iter().map(|(n, r)| format!("{n} {:.1e}", r.max_rel_error)).collect();
    report("3", "gradient correctness", pass, &format!("max rel errors: {}", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_4_model_identities() {
    let c = SystemConfig::default();
    let checks = [
        ("eps(z_min) = 0.03", aeg(c.z_min, &c).unwrap() == 0.03),
        ("T_gen(10) = 0.1 s", generation_time(10, &SystemConfig { server_flops: 20e12, ..c.clone() }) == 0.1),
        ("B/K = 10 MHz", c.subchannel_hz() == 10e6),
        ("beta * D_c = 6291456", c.display_bits() == 6_291_456.0),
    ];
    let pass = checks.iter().all(|(_, ok)| *ok);
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    report("4", "model identities", pass, &format!("{} of 4 exact, failing: {:?}", 4 - failed.len(), failed));
    assert!(pass);
}

#[test]
fn criterion_5_fcfs_oracle() {
    let worst = verify_fcfs(1000, 5);
    let pass = worst <= 1e-9;
    report("5", "FCFS oracle equivalence", pass, &format!("1000 instances, max deviation {worst:.2e} s"));
    assert!(pass);
}

#[test]
fn criterion_6_action_filter() {
    let c = SystemConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let agent = SacAgent::new(c.num_users, c.num_steps(), 1, StepMode::Learned, AgentConfig::default(), &mut rng).unwrap();
    let scs = scenarios(&c, 10_000, 6);
    let (mut actions, mut range_ok, mut unflagged, mut worst) = (0usize, 0usize, 0usize, 0.0f64);
    for chunk in scs.chunks(500) {
        let states: Vec<f64> = chunk.iter().flat_map(|s| s.state()).collect();
        let states = ndarray::Array2::from_shape_vec((chunk.len(), 2 * c.num_users), states).unwrap();
        let pass = agent.sample(states.view(), &mut rng).unwrap();
        for (row, s) in chunk.iter().enumerate() {
            let steps: Vec<u32> = pass.steps[row].iter().map(|&i| c.z_min + i as u32).collect();
            let d = pass.cont.row(row).to_vec();
            let dec = PolicyKind::LpdrlF.realize(s, &steps, &d, &c).unwrap();
            let out = evaluate(s, &dec.alloc, &c).unwrap();
            for (k, u) in out.users.iter().enumerate() {
                actions += 1;
                range_ok += usize::from(u.c3_sensing && u.c4_steps);
                let eps = aeg(steps[k], &c).unwrap();
                if let Some(floor) = sensing_floor(s.users[k].omega_min, eps, &c) {
                    unflagged += 1;
                    let g = s.users[k].gain;
                    let at_floor = caqa(floor, steps[k], display_energy(g, &c), g, &c).unwrap();
                    worst = worst.max((at_floor.omega - s.users[k].omega_min).abs());
                }
            }
        }
    }
    let pass = actions == 100_000 && range_ok == actions && worst <= 1e-6;
    report(
        "6",
        "action-filter guarantee",
        pass,
        &format!("{range_ok}/{actions} within C3/C4, {unflagged} unflagged, max |Omega - Omega_min| {worst:.1e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_7_trends() {
    let base = SystemConfig::default();
    let p = CgqFsg::new(0.2).unwrap();
    let by_k: Vec<f64> = [10, 12, 14, 16]
        .iter()
        .map(|&k| {
            let c = SystemConfig { num_users: k, ..base.clone() };
            mean_caqa(&c, &scenarios(&c, 4000, 70 + k as u64), &p)
        })
        .collect();
    let a = by_k.windows(2).all(|w| w[1] < w[0]);

    let scs = scenarios(&base, 4000, 71);
    let by_e: Vec<f64> = [0.6, 0.8, 1.0, 1.2]
        .iter()
        .map(|&e| mean_caqa(&SystemConfig { e_max_j: e, ..base.clone() }, &scs, &p))
        .collect();
    let b = by_e.windows(2).all(|w| w[1] >= w[0]);

    let c20 = SystemConfig { server_flops: 20e12, ..base.clone() };
    let scs = scenarios(&c20, 2000, 72);
    let by_z: Vec<f64> = (c20.z_min..=c20.z_max)
        .map(|z| scs.iter().map(|s| oracle_fixed_step(s, z, &c20).unwrap().1.avg_caqa).sum::<f64>() / scs.len() as f64)
        .collect();
    let best = by_z.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
    let best_z = c20.z_min + best as u32;
    let c = best > 0 && best + 1 < by_z.len() && (8..=10).contains(&best_z);

    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    report("7a", "CAQA decreasing in K", a, &format!("K=10..16: {}", fmt(&by_k)));
    report("7b", "CAQA non-decreasing in E_max", b, &format!("E_max=0.6..1.2: {}", fmt(&by_e)));
    report("7c", "interior optimum in z", c, &format!("z=5..10: {} (best z={best_z})", fmt(&by_z)));
    assert!(a && b && c);
}

fn train(policy: PolicyKind, seed: u64) -> TrainingRun {
    let plan = ExperimentPlan::desk();
    run_training(&plan, &SystemConfig::default(), &AgentConfig::default(), policy, seed, None, |_| {}).unwrap()
}

#[test]
fn criterion_8_learning_gain() {
    let seeds = [0u64, 1, 2];
    let (mut f_caqa, mut n_caqa, mut g_caqa, mut f_std, mut n_std) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut slowest: f64 = 0.0;
    for &seed in &seeds {
        let start = Instant::now();
        let f = train(PolicyKind::LpdrlF, seed);
        let n = train(PolicyKind::Lpdrl, seed);
        let g = train(PolicyKind::CgqFsg { alpha: 0.2 }, seed);
        slowest = slowest.max(start.elapsed().as_secs_f64());
        f_caqa += f.final_mean_caqa(100) / 3.0;
        n_caqa += n.final_mean_caqa(100) / 3.0;
        g_caqa += g.final_mean_caqa(100) / 3.0;
        f_std += f.final_reward_std(100) / 3.0;
        n_std += n.final_reward_std(100) / 3.0;
        let line = format!(
            "  seed {seed}: lpdrl-f {:.4} (std {:.4}), lpdrl {:.4} (std {:.4}), cgq-fsg-0.2 {:.4}\n",
            f.final_mean_caqa(100),
            f.final_reward_std(100),
            n.final_mean_caqa(100),
            n.final_reward_std(100),
            g.final_mean_caqa(100)
        );
        let _ = std::io::stdout().lock().write_all(line.as_bytes());
    }
    let vs_raw = f_caqa >= 1.05 * n_caqa;
    let vs_cgq = f_caqa >= 1.20 * g_caqa;
    let stable = f_std <= n_std;
    let in_budget = slowest < 1800.0;
    report(
        "8",
        "learning gain",
        vs_raw && vs_cgq && stable && in_budget,
        &format!(
            "lpdrl-f {f_caqa:.4} vs 1.05 x lpdrl {:.4} [{}], vs 1.20 x cgq-fsg-0.2 {:.4} [{}], reward std {f_std:.4} <= {n_std:.4} [{}], slowest seed {slowest:.0} s [{}]",
            1.05 * n_caqa,
            ok(vs_raw),
            1.20 * g_caqa,
            ok(vs_cgq),
            ok(stable),
            ok(in_budget)
        ),
    );
    assert!(vs_raw, "LPDRL-F does not beat LPDRL by 5%");
    assert!(vs_cgq, "LPDRL-F does not beat CGQ-FSG-0.2 by 20%");
    assert!(stable, "LPDRL-F reward is less stable than LPDRL");
    assert!(in_budget, "a seed exceeded the 30 minute budget");
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "not met"
    }
}

#[test]
fn criterion_9_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let plan = ExperimentPlan { train_episodes: 110, ..ExperimentPlan::desk() };
    let sys = SystemConfig::default();
    let mut streams = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        run_training(&plan, &sys, &AgentConfig::default(), PolicyKind::LpdrlF, 9, Some(&out), |_| {}).unwrap();
        streams.push(std::fs::read(out.join("metrics.jsonl")).unwrap());
    }
    let lines = streams[0].iter().filter(|&&b| b == b'\n').count();
    let pass = streams[0] == streams[1] && lines == 5500;
    report("9", "reproducibility", pass, &format!("{lines} records, identical bytes: {}", streams[0] == streams[1]));
    assert!(pass);
}
