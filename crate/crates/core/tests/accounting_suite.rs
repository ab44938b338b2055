mod common;

use gridweave::accounting::{Cost, CostMode, EnergyBalance, PriceSet};
use gridweave::env::{Env, StepResult};
use gridweave::rng::{substream, Domain};
use rand::Rng;

const TOL: f64 = 1e-9;

fn expected_cost(b: &EnergyBalance, p: &PriceSet, mode: CostMode) -> Cost {
    if b.e_net >= 0.0 {
        Cost {
            price: b.imp3 * p.r_sd + b.imp2 * p.r_sm + b.imp1 * p.r_sh,
            emission: b.imp3 * p.c_t,
        }
    } else {
        let revenue = b.exp3 * p.r_bd + b.exp2 * p.r_bm + b.exp1 * p.r_bh;
        Cost {
            price: if mode == CostMode::Economic { -revenue } else { revenue },
            emission: 0.0,
        }
    }
}

fn check_step(env: &Env, step: &StepResult) {
    let cfg = env.config();
    let mut dist_net = 0.0;
    let (mut imp2_all, mut exp2_all) = (0.0, 0.0);
    for (m, hs) in step.households.iter().enumerate() {
        let mg = &step.microgrids[m];
        let prices = &mg.prices;
        assert!(prices.is_non_negative() && prices.is_ordered(), "{prices:?}");
        let (mut imp1, mut exp1, mut net) = (0.0, 0.0, 0.0);
        let mut sums = [0.0f64; 4];
        for (h, s) in hs.iter().enumerate() {
            let b = &s.balance;
            let house = &cfg.microgrids[m][h];
            assert!((b.e_net - (b.e_load - b.e_pv + b.e_batt)).abs() <= TOL);
            assert!((b.e_shortage - (b.imp1 + b.imp2 + b.imp3)).abs() <= TOL);
            assert!((b.e_surplus - (b.exp1 + b.exp2 + b.exp3)).abs() <= TOL);
            assert!((b.e_net - (b.e_shortage - b.e_surplus)).abs() <= TOL);
            assert_eq!(b.e_shortage * b.e_surplus, 0.0);
            for v in [b.imp1, b.imp2, b.imp3, b.exp1, b.exp2, b.exp3, b.e_load, b.e_pv] {
                assert!(v >= 0.0);
            }
            let bat = &house.battery;
            assert!(s.soc >= bat.soc_min - 1e-12 && s.soc <= bat.soc_max + 1e-12);

            let want = expected_cost(b, prices, cfg.mode);
            assert!((s.cost.price - want.price).abs() <= TOL);
            assert!((s.cost.emission - want.emission).abs() <= TOL);
            let scale = house.profile_peak_load.max(0.1) * (cfg.grid.gas_price + cfg.grid.gas_emission);
            assert!((s.reward + (want.price + want.emission) / scale).abs() <= TOL);

            imp1 += b.imp1;
            exp1 += b.exp1;
            net += b.e_net;
            sums[0] += b.imp2;
            sums[1] += b.imp3;
            sums[2] += b.exp2;
            sums[3] += b.exp3;
        }
        let mb = &mg.balance;
        assert!((imp1 - exp1).abs() <= TOL, "local market must balance");
        for (got, want) in [mb.imp2, mb.imp3, mb.exp2, mb.exp3].iter().zip(sums) {
            assert!((got - want).abs() <= TOL);
        }
        assert!((mb.e_shortage - (mb.imp2 + mb.imp3)).abs() <= TOL);
        assert!((mb.e_surplus - (mb.exp2 + mb.exp3)).abs() <= TOL);
        assert!((mb.e_net - net).abs() <= TOL);
        assert!(mb.e_shortage * mb.e_surplus == 0.0, "{mb:?}");
        imp2_all += mb.imp2;
        exp2_all += mb.exp2;
        dist_net += mb.e_net;
    }
    assert!((imp2_all - exp2_all).abs() <= TOL, "inter-microgrid market must balance");
    let d = &step.distributor;
    let imp3: f64 = step.microgrids.iter().map(|m| m.balance.imp3).sum();
    let exp3: f64 = step.microgrids.iter().map(|m| m.balance.exp3).sum();
    assert!((d.imp3 - imp3).abs() <= TOL && (d.exp3 - exp3).abs() <= TOL);
    assert!((d.e_net - dist_net).abs() <= TOL);
    assert!(d.e_shortage * d.e_surplus == 0.0, "{d:?}");
}

#[test]
fn identities_hold_over_random_episodes() {
    let mut rng = substream(2024, Domain::Episode, 0);
    let mut steps = 0usize;
    for episode in 0..1000u64 {
        let cfg = common::random_config(&mut rng);
        let mut env = Env::new(cfg.clone(), episode).unwrap();
        while !env.is_done() {
            let cmds: Vec<Vec<f64>> = cfg
                .microgrids
                .iter()
                .map(|hs| hs.iter().map(|_| rng.random_range(-1.2..1.2)).collect())
                .collect();
            let step = env.step_all(&cmds).unwrap();
            check_step(&env, &step);
            steps += 1;
        }
    }
    assert_eq!(steps, 24_000);
}

#[test]
fn identities_hold_with_sampled_action_indices() {
    let mut rng = substream(99, Domain::Episode, 1);
    for episode in 0..50u64 {
        let cfg = common::random_config(&mut rng);
        if cfg.actionable().is_empty() {
            continue;
        }
        let mut env = Env::new(cfg.clone(), episode).unwrap();
        while !env.is_done() {
            let actions: Vec<usize> = env.actionable().iter().map(|_| rng.random_range(0..cfg.n_actions)).collect();
            let step = env.step(&actions).unwrap();
            check_step(&env, &step);
        }
    }
}

#[test]
fn economic_and_literal_differ_only_in_surplus_sign() {
    let mut cfg = common::train_fleet();
    let mut a = Env::new(cfg.clone(), 3).unwrap();
    cfg.mode = CostMode::Literal;
    let mut b = Env::new(cfg, 3).unwrap();
    let actions = vec![5usize; 6];
    while !a.is_done() {
        let sa = a.step(&actions).unwrap();
        let sb = b.step(&actions).unwrap();
        for (ha, hb) in sa.households[0].iter().zip(&sb.households[0]) {
            assert_eq!(ha.balance, hb.balance);
            if ha.balance.e_net >= 0.0 {
                assert_eq!(ha.cost, hb.cost);
            } else {
                assert_eq!(ha.cost.price, -hb.cost.price);
            }
        }
    }
}
