use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::env::MatrixGame;
use crate::rng::seeded;

fn step(state: u64, keys: Vec<u64>, actions: Vec<usize>, reward: f64) -> Transition {
    let n = actions.len();
    Transition { state_key: state, agent_keys: keys, actions, reward, behavior_probs: vec![0.5; n] }
}

fn random_critic(rng: &mut LabRng, n_actions: usize, states: u64) -> DecomposedCritic {
    let mut c = DecomposedCritic::new(vec![n_actions, n_actions], 0.9).unwrap();
    for s in 0..states {
        for i in 0..2 {
            c.set_local_values(i, s, (0..n_actions).map(|_| rng.random_range(-2.0..2.0)).collect());
        }
        c.set_mix_raw(s, vec![rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)]);
        c.set_bias(s, rng.random_range(-1.0..1.0));
    }
    c
}

fn random_trajectory(rng: &mut LabRng, len: usize, n_actions: usize, states: u64) -> Trajectory {
    let steps = (0..len)
        .map(|_| {
            let s = rng.random_range(0..states);
            let mut t = step(
                s,
                vec![s, s],
                vec![rng.random_range(0..n_actions), rng.random_range(0..n_actions)],
                rng.random_range(-1.0..1.0),
            );
            t.behavior_probs = vec![rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)];
            t
        })
        .collect();
    Trajectory::new(steps).unwrap()
}

#[test]
fn q_tot_examples() {
    let mut c = DecomposedCritic::new(vec![2, 2], 1.0).unwrap();
    c.set_local_values(0, 0, vec![2.0, 0.0]);
    c.set_local_values(1, 0, vec![-1.0, 0.0]);
    assert_eq!(c.q_tot(0, &[0, 0], &[0, 0]), 1.0);
    c.set_mix_raw(0, vec![0.0, 0.0]);
    c.set_bias(0, 0.25);
    assert_eq!(c.q_tot(0, &[0, 0], &[0, 0]), 0.25);
}

#[test]
fn trajectories_reject_bad_probabilities() {
    assert!(Trajectory::new(vec![]).is_err());
    let mut t = step(0, vec![0, 0], vec![0, 0], 1.0);
    t.behavior_probs = vec![0.0, 1.0];
    assert!(Trajectory::new(vec![t]).is_err());
}

#[test]
fn buffer_is_bounded_fifo() {
    let mut b = ReplayBuffer::new(3);
    for r in 0..5 {
        b.push(Trajectory::new(vec![step(0, vec![0, 0], vec![0, 0], r as f64)]).unwrap());
    }
    assert_eq!(b.len(), 3);
    let mut rng = seeded(0);
    let seen: Vec<f64> = b.sample(100, &mut rng).iter().map(|t| t.episode_return()).collect();
    assert!(seen.iter().all(|&r| r >= 2.0));
}

#[test]
fn target_refreshes_on_period_multiples() {
    let mut c = DecomposedCritic::new(vec![2, 2], 1.0).unwrap();
    let mut target = TargetCritic::new(&c, 8);
    c.set_bias(0, 1.0);
    assert!(!target.advance(&c, 4));
    assert_eq!(target.get().bias(0), 0.0);
    assert_eq!(target.staleness(), 4);
    assert!(target.advance(&c, 4));
    assert_eq!(target.get().bias(0), 1.0);
    assert_eq!(target.staleness(), 0);
}

#[test]
fn intro_game_utilities() {
    // Exact joint values equal the payoff.
    let game = MatrixGame::intro();
    let q = |a: &[usize]| game.payoff(a).unwrap();
    let uniform = [0.5, 0.5];
    assert_eq!(counterfactual_advantage(q, &uniform, &[0, 0], 0), 1.5);
    assert_eq!(counterfactual_advantage(q, &[1.0, 0.0], &[0, 1], 0), 0.0);
    for b in 0..2 {
        let centered: f64 = (0..2).map(|a| uniform[a] * counterfactual_advantage(q, &uniform, &[a, b], 0)).sum();
        assert_eq!(centered, 0.0);
    }
}

#[test]
fn on_policy_target_special_cases() {
    let mut rng = seeded(1);
    let c = random_critic(&mut rng, 3, 4);
    let one = Trajectory::new(vec![step(1, vec![1, 1], vec![0, 2], 0.7)]).unwrap();
    for lambda in [0.0, 0.5, 1.0] {
        assert!((on_policy_targets(&c, &one, lambda)[0] - 0.7).abs() < 1e-12);
    }
    let traj = random_trajectory(&mut rng, 5, 3, 4);
    let y0 = on_policy_targets(&c, &traj, 0.0);
    let s = traj.steps();
    for t in 0..5 {
        let next = if t + 1 < 5 { c.value(&s[t + 1]) } else { 0.0 };
        assert!((y0[t] - (s[t].reward + 0.9 * next)).abs() < 1e-12);
    }
}

#[test]
fn on_policy_target_is_monte_carlo_at_full_trace() {
    let mut rng = seeded(2);
    for _ in 0..20 {
        let mut c = random_critic(&mut rng, 3, 4);
        c.gamma = 1.0;
        let traj = random_trajectory(&mut rng, 5, 3, 4);
        let y = on_policy_targets(&c, &traj, 1.0);
        for t in 0..5 {
            let mc: f64 = traj.steps()[t..].iter().map(|s| s.reward).sum();
            assert!((y[t] - mc).abs() < 1e-12);
        }
    }
}

#[test]
fn off_policy_target_special_cases() {
    let mut rng = seeded(3);
    let c = random_critic(&mut rng, 3, 4);
    let policies = vec![
        TabularPolicy::with_probs(0, vec![0.2, 0.3, 0.5]).unwrap(),
        TabularPolicy::with_probs(0, vec![0.6, 0.3, 0.1]).unwrap(),
    ];
    let traj = random_trajectory(&mut rng, 6, 3, 4);
    let s = traj.steps();
    let y = off_policy_targets(&c, &policies, &traj, 0.8, Some(0));
    for t in 0..6 {
        assert_eq!(y[t], c.value(&s[t]));
    }
    let y = off_policy_targets(&c, &policies, &traj, 0.0, None);
    for t in 0..6 {
        let boot = s.get(t + 1).map_or(0.0, |n| c.expected_q_tot(n.state_key, &n.agent_keys, &policies));
        let expected = c.value(&s[t]) + (s[t].reward + 0.9 * boot - c.value(&s[t]));
        assert!((y[t] - expected).abs() < 1e-12);
    }
}

#[test]
fn off_policy_target_two_step_hand_computation() {
    // Two steps on the intro game table, uniform policies, λ = 1, γ = 0.5.
    let mut c = DecomposedCritic::new(vec![2, 2], 0.5).unwrap();
    c.set_local_values(0, 0, vec![1.0, -1.0]);
    c.set_local_values(1, 0, vec![0.5, 0.0]);
    c.set_mix_raw(0, vec![2.0, -1.0]);
    c.set_bias(0, 0.25);
    let policies = vec![TabularPolicy::uniform(2), TabularPolicy::uniform(2)];
    let traj =
        Trajectory::new(vec![step(0, vec![0, 0], vec![0, 0], 2.0), step(0, vec![0, 0], vec![1, 1], -4.0)]).unwrap();
    // Q(0,0) = 2 + 0.5 + 0.25 = 2.75; Q(1,1) = -2 + 0 + 0.25 = -1.75.
    // V = 2·0 + 1·0.25 + 0.25 = 0.5; π(a_1) = 0.25.
    let q0 = 2.75;
    let q1 = -1.75;
    let v = 0.5;
    let d0 = 2.0 + 0.5 * v - q0;
    let d1 = -4.0 - q1;
    let expected0 = q0 + d0 + 0.5 * 0.25 * d1;
    let expected1 = q1 + d1;
    let y = off_policy_targets(&c, &policies, &traj, 1.0, None);
    assert!((y[0] - expected0).abs() < 1e-12);
    assert!((y[1] - expected1).abs() < 1e-12);
}

#[test]
fn loss_weights_select_batches() {
    let mut rng = seeded(4);
    let c = random_critic(&mut rng, 2, 1);
    let a = step(0, vec![0, 0], vec![0, 1], 1.0);
    let b = step(0, vec![0, 0], vec![1, 0], -1.0);
    let on = [LabeledStep::new(&a, 3.0)];
    let off = [LabeledStep::new(&b, -2.0)];
    let err_on = (c.value(&a) - 3.0).powi(2);
    let err_off = (c.value(&b) + 2.0).powi(2);
    assert_eq!(c.loss_and_gradient(&on, &off, 0.0).0, err_on);
    assert_eq!(c.loss_and_gradient(&on, &off, 1.0).0, err_off);
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = seeded(5);
    let c = random_critic(&mut rng, 3, 3);
    let trajs: Vec<Trajectory> = (0..4).map(|_| random_trajectory(&mut rng, 4, 3, 3)).collect();
    let on: Vec<LabeledStep> =
        trajs[..2].iter().flat_map(|t| t.steps()).map(|s| LabeledStep::new(s, rng.random_range(-2.0..2.0))).collect();
    let off: Vec<LabeledStep> =
        trajs[2..].iter().flat_map(|t| t.steps()).map(|s| LabeledStep::new(s, rng.random_range(-2.0..2.0))).collect();
    let kappa = 0.3;
    let (_, grad) = c.loss_and_gradient(&on, &off, kappa);
    let loss = |c: &DecomposedCritic| c.loss_and_gradient(&on, &off, kappa).0;
    let h = 1e-6;
    let check = |analytic: f64, plus: DecomposedCritic, minus: DecomposedCritic| {
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let scale = fd.abs().max(analytic.abs()).max(1e-8);
        assert!((fd - analytic).abs() / scale < 1e-4, "fd {fd} analytic {analytic}");
    };
    for (&(i, key), g) in &grad.local {
        for a in 0..3 {
            let mut plus = c.clone();
            let mut minus = c.clone();
            let mut v = c.local_values(i, key);
            v[a] += h;
            plus.set_local_values(i, key, v.clone());
            v[a] -= 2.0 * h;
            minus.set_local_values(i, key, v);
            check(g[a], plus, minus);
        }
    }
    for (&state, g) in &grad.mix {
        for i in 0..2 {
            let mut plus = c.clone();
            let mut minus = c.clone();
            let mut raw = vec![c.mix_raw(0, state), c.mix_raw(1, state)];
            raw[i] += h;
            plus.set_mix_raw(state, raw.clone());
            raw[i] -= 2.0 * h;
            minus.set_mix_raw(state, raw);
            check(g[i], plus, minus);
        }
    }
    for (&state, &g) in &grad.bias {
        let mut plus = c.clone();
        let mut minus = c.clone();
        plus.set_bias(state, c.bias(state) + h);
        minus.set_bias(state, c.bias(state) - h);
        check(g, plus, minus);
    }
}

#[test]
fn intro_game_regression_reaches_additive_least_squares() {
    // Uniform data over the four joint actions. An additive critic can only
    // represent row + column effects, so the loss floor is the residual of
    // that projection.
    let game = MatrixGame::intro();
    let data: Vec<Transition> = (0..4)
        .map(|k| {
            let a = game.joint_actions(k);
            step(0, vec![0, 0], a.clone(), game.payoff(&a).unwrap())
        })
        .collect();
    let batch: Vec<LabeledStep> = data.iter().map(|s| LabeledStep::new(s, s.reward)).collect();
    let mut c = DecomposedCritic::new(vec![2, 2], 1.0).unwrap();
    for _ in 0..20_000 {
        c.update(&batch, &[], 0.0, 0.1);
    }
    let grand = -0.75;
    let row = [-1.0, -0.5];
    let col = [0.5, -2.0];
    let mut floor = 0.0;
    for s in &data {
        let fit = row[s.actions[0]] + col[s.actions[1]] - grand;
        assert!((c.value(s) - fit).abs() < 1e-3);
        floor += (fit - s.reward).powi(2) / 4.0;
    }
    let (mse, _) = c.loss_and_gradient(&batch, &[], 0.0);
    assert!((mse - floor).abs() < 1e-6, "mse {mse} floor {floor}");
}

#[test]
fn converged_critic_preserves_local_value_order() {
    // Weighted regression under fixed interior policies: learned local values
    // rank actions exactly as the true marginal values do.
    let mut rng = seeded(6);
    for game in [MatrixGame::easy(), MatrixGame::medium(), MatrixGame::hard(1.0)] {
        for _ in 0..5 {
            let policies: Vec<Vec<f64>> = (0..2)
                .map(|_| {
                    let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..1.0)).collect();
                    let z: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / z).collect()
                })
                .collect();
            let data: Vec<Transition> = (0..9)
                .map(|k| {
                    let a = game.joint_actions(k);
                    step(0, vec![0, 0], a.clone(), game.payoff(&a).unwrap())
                })
                .collect();
            let batch: Vec<LabeledStep> = data
                .iter()
                .map(|s| LabeledStep {
                    step: s,
                    target: s.reward,
                    weight: game.joint_probability(&policies, &s.actions),
                })
                .collect();
            let mut c = DecomposedCritic::new(vec![3, 3], 1.0).unwrap();
            for _ in 0..20_000 {
                c.update(&batch, &[], 0.0, 0.05);
            }
            for i in 0..2 {
                let truth = game.local_values(i, &policies);
                let learned = c.local_values(i, 0);
                for a in 0..3 {
                    for b in 0..3 {
                        if (truth[a] - truth[b]).abs() > 1e-6 {
                            assert_eq!(truth[a] > truth[b], learned[a] > learned[b]);
                        }
                    }
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn both_utility_forms_agree(seed in any::<u64>(), a0 in 0usize..3, a1 in 0usize..3, j in 0usize..2) {
        let mut rng = seeded(seed);
        let c = random_critic(&mut rng, 3, 1);
        let policies: Vec<TabularPolicy> = (0..2)
            .map(|_| {
                let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0) + 1e-3).collect();
                let z: f64 = w.iter().sum();
                TabularPolicy::with_probs(0, w.into_iter().map(|x| x / z).collect()).unwrap()
            })
            .collect();
        let global = aristocrat_utility(&c, &policies, 0, &[0, 0], &[a0, a1], j);
        let local = aristocrat_utility_local(&c, &policies, 0, &[0, 0], &[a0, a1], j);
        prop_assert!((global - local).abs() < 1e-12);
    }

    #[test]
    fn mixing_weights_stay_non_negative(seed in any::<u64>(), steps in 1usize..50) {
        let mut rng = seeded(seed);
        let mut c = random_critic(&mut rng, 2, 2);
        let traj = random_trajectory(&mut rng, 6, 2, 2);
        let batch: Vec<LabeledStep> = traj.steps().iter().map(|s| LabeledStep::new(s, rng.random_range(-5.0..5.0))).collect();
        for _ in 0..steps {
            c.update(&batch, &batch, 0.5, 0.05);
            for s in 0..2 {
                prop_assert!(c.k(0, s) >= 0.0 && c.k(1, s) >= 0.0);
            }
        }
    }
}
