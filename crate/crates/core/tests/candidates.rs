//! Training and evaluation of goal-conditioned predator-prey policies.

use ctcat_core::candidates::{
    evaluate_pair, evaluate_pair_runs, play_episode, train_candidate, CandidateError, PolicySet, TrainHyper, K1, K2,
};
use ctcat_core::predprey::{GoalSet, GridConfig, PredatorPrey};
use ctcat_core::rng::seeded;
use ctcat_core::ArmId;

fn self_play(goals: &[usize], episodes: usize, seed: u64) -> f64 {
    let cfg = GridConfig::default();
    let env = PredatorPrey::new(cfg.clone()).unwrap();
    let hyper = TrainHyper { episodes, ..TrainHyper::default() };
    let policy = train_candidate(&cfg, GoalSet::new(goals).unwrap(), &hyper, &mut seeded(seed)).unwrap();
    evaluate_pair(&env, &policy, &policy, 1000, &mut seeded(seed + 1))
}

#[test]
fn single_goal_self_play_after_long_training() {
    let rate = self_play(&[1], 200_000, 11);
    assert!(rate >= 0.8, "{rate}");
}

#[test]
fn more_goals_is_no_harder() {
    let one = self_play(&[1], 20_000, 12);
    let all = self_play(&[1, 2, 3, 4], 20_000, 12);
    assert!(all >= one, "all four {all} vs goal 1 {one}");
}

#[test]
fn training_is_seed_deterministic() {
    let cfg = GridConfig::default();
    let hyper = TrainHyper { episodes: 500, success_floor: 0.0, eval_episodes: 10, ..TrainHyper::default() };
    let goals = GoalSet::new(&[2, 3]).unwrap();
    let a = train_candidate(&cfg, goals, &hyper, &mut seeded(3)).unwrap();
    let b = train_candidate(&cfg, goals, &hyper, &mut seeded(3)).unwrap();
    let c = train_candidate(&cfg, goals, &hyper, &mut seeded(4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn floor_miss_is_reported() {
    let cfg = GridConfig::default();
    let hyper = TrainHyper { episodes: 50, success_floor: 1.01, eval_episodes: 10, ..TrainHyper::default() };
    match train_candidate(&cfg, GoalSet::new(&[4]).unwrap(), &hyper, &mut seeded(0)) {
        Err(CandidateError::ConvergenceFailure { achieved, floor, episodes, .. }) => {
            assert!(achieved <= 1.0);
            assert_eq!(floor, 1.01);
            assert_eq!(episodes, 50);
        }
        other => panic!("expected a convergence failure, got {other:?}"),
    }
}

#[test]
fn trained_pairs_order_like_the_reference_matrix() {
    let cfg = GridConfig::default();
    let env = PredatorPrey::new(cfg.clone()).unwrap();
    let set = PolicySet::train(&cfg, &TrainHyper::default(), 21).unwrap();

    // Disjoint goals never succeed jointly.
    let (k1_pi3, spread) = evaluate_pair_runs(&env, set.instance(K1), set.candidate(ArmId(2)), 100, 10, 1);
    assert!(k1_pi3 <= 0.05, "{k1_pi3} ± {spread}");

    let (k2_pi1, _) = evaluate_pair_runs(&env, set.instance(K2), set.candidate(ArmId(0)), 100, 10, 2);
    let (k2_pi4, _) = evaluate_pair_runs(&env, set.instance(K2), set.candidate(ArmId(3)), 100, 10, 2);
    assert!(k2_pi1 >= k2_pi4, "{k2_pi1} vs {k2_pi4}");

    // An identical pair with shared goals succeeds, and quickly.
    let pi1 = set.candidate(ArmId(0));
    let mut rng = seeded(5);
    let episodes: Vec<_> = (0..500).map(|_| play_episode(&env, pi1, pi1, &mut rng)).collect();
    let wins = episodes.iter().filter(|e| e.is_joint_success()).count();
    let mean_len = episodes.iter().map(|e| e.steps as f64).sum::<f64>() / episodes.len() as f64;
    assert!(wins > 0);
    assert!(mean_len < 60.0, "mean episode length {mean_len}");
}
