use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ital_core::datagen::{self, make_feature_map};
use ital_core::gridworld::{
    boltzmann_policy, hard_value_iteration, soft_value_iteration, Action, Demonstration, GridworldMdp, IrlTeacher,
    RewardParams, SoftPlanner, TransitionSpec,
};
use ital_core::linmodel::{self, LossSpec, ParameterVector, TeachingExample};
use ital_core::pedagogy::{self, BetaSchedule, LearnerState, TeacherMode};

fn squared_or_ce() -> impl Strategy<Value = LossSpec> {
    prop_oneof![
        (0.0..0.5f64).prop_map(LossSpec::squared),
        (2usize..5, 0.0..0.5f64).prop_map(|(k, l)| LossSpec::cross_entropy(k, l)),
    ]
}

/// A loss spec, a parameter matrix and `n` examples of dimension 1..=4.
fn instance(n: usize) -> impl Strategy<Value = (LossSpec, ParameterVector, Vec<TeachingExample>)> {
    (squared_or_ce(), 1usize..=4).prop_flat_map(move |(spec, d)| {
        let k = spec.outputs();
        let label = match spec.kind {
            linmodel::LossKind::SquaredError => (-2.0..2.0f64).boxed(),
            linmodel::LossKind::CrossEntropy { classes } => (0..classes).prop_map(|c| c as f64).boxed(),
        };
        let ex = (prop::collection::vec(-1.5..1.5f64, d), label).prop_map(|(x, y)| TeachingExample::new(x, y));
        (
            Just(spec),
            prop::collection::vec(-1.5..1.5f64, k * (d + 1))
                .prop_map(move |v| ParameterVector::from_vec(k, d + 1, v).unwrap()),
            prop::collection::vec(ex, n),
        )
    })
}

fn central_difference(f: impl Fn(&ParameterVector) -> f64, p: &ParameterVector, h: f64) -> Vec<f64> {
    let mut probe = p.clone();
    (0..p.len())
        .map(|i| {
            let orig = probe.as_slice()[i];
            probe.as_mut_slice()[i] = orig + h;
            let up = f(&probe);
            probe.as_mut_slice()[i] = orig - h;
            let down = f(&probe);
            probe.as_mut_slice()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn loss_gradient_matches_finite_differences((spec, p, exs) in instance(1)) {
        let ex = &exs[0];
        let g = linmodel::loss_grad(&spec, &p, ex).unwrap();
        let fd = central_difference(|q| linmodel::loss_value(&spec, q, ex).unwrap(), &p, 1e-5);
        // absolute floor for gradients that vanish up to rounding
        let err = pedagogy::relative_error(g.as_slice(), &fd);
        prop_assert!(err <= 1e-4 || linmodel::grad_sq_norm(&g).sqrt() < 1e-8, "relative error {err}");
    }

    #[test]
    fn softmax_is_normalized_and_loss_shift_invariant(
        z in prop::collection::vec(-30.0..30.0f64, 2..8),
        shift in -100.0..100.0f64,
    ) {
        let p = linmodel::softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let spec = LossSpec::cross_entropy(z.len(), 0.0);
        let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
        for y in 0..z.len() {
            let a = linmodel::loss_from_logits(&spec, &z, y as f64).unwrap();
            let b = linmodel::loss_from_logits(&spec, &shifted, y as f64).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn losses_are_nonnegative((spec, p, exs) in instance(1)) {
        let v = linmodel::loss_value(&spec, &p, &exs[0]).unwrap();
        prop_assert!(v >= 0.0);
    }

    #[test]
    fn losses_are_convex_along_segments(
        (spec, p1, exs) in instance(1),
        noise in prop::collection::vec(-1.5..1.5f64, 20),
        t in 0.0..=1.0f64,
    ) {
        let v2: Vec<f64> = noise.iter().cycle().take(p1.len()).copied().collect();
        let p2 = ParameterVector::from_vec(p1.rows(), p1.cols(), v2).unwrap();
        let mix: Vec<f64> = p1.as_slice().iter().zip(p2.as_slice()).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let pm = ParameterVector::from_vec(p1.rows(), p1.cols(), mix).unwrap();
        let l = |p: &ParameterVector| linmodel::loss_value(&spec, p, &exs[0]).unwrap();
        prop_assert!(l(&pm) <= t * l(&p1) + (1.0 - t) * l(&p2) + 1e-10);
    }

    #[test]
    fn selection_distribution_is_a_monotone_distribution(
        volumes in prop::collection::vec(-5.0..5.0f64, 1..25),
        beta in 0.0..1e3f64,
    ) {
        let q = pedagogy::selection_distribution(&volumes, beta);
        prop_assert!(q.iter().all(|&p| p >= 0.0));
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for i in 0..volumes.len() {
            for j in 0..volumes.len() {
                if volumes[i] > volumes[j] {
                    prop_assert!(q[i] >= q[j]);
                }
            }
        }
    }

    #[test]
    fn teacher_choice_ignores_shift_and_positive_scale(
        volumes in prop::collection::vec(-5.0..5.0f64, 1..25),
        shift in -10.0..10.0f64,
        scale in 0.01..100.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let moved: Vec<f64> = volumes.iter().map(|v| scale * v + shift).collect();
        for mode in [TeacherMode::FeedbackCooperative, TeacherMode::OmniscientCooperative, TeacherMode::Adversarial] {
            let a = pedagogy::select_example(&volumes, mode, &mut rng).unwrap();
            let b = pedagogy::select_example(&moved, mode, &mut rng).unwrap();
            // rounding can only merge near-ties; the pick must stay optimal
            prop_assert!(a == b || (moved[a] - moved[b]).abs() <= 1e-9 * (1.0 + moved[a].abs()));
        }
    }

    #[test]
    fn zero_beta_teacher_aware_step_is_plain_step(
        (spec, p, exs) in instance(6),
        chosen in 0usize..6,
        eta in 1e-3..0.5f64,
    ) {
        let state = LearnerState::new(p, eta, BetaSchedule::Constant(0.0), 5);
        let subset: Vec<usize> = (0..6).filter(|&i| i != chosen).collect();
        let (aware, _) = pedagogy::ital_update(&spec, &state, &exs, chosen, &subset).unwrap();
        let naive = pedagogy::naive_update(&spec, &state, &exs[chosen]).unwrap();
        for (a, b) in aware.params.as_slice().iter().zip(naive.params.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn feedback_volume_depends_only_on_logits(
        (spec, p, exs) in instance(1),
        noise in prop::collection::vec(-1.5..1.5f64, 20),
        eta in 1e-3..0.5f64,
        slide in -2.0..2.0f64,
    ) {
        let ex = &exs[0];
        let t: Vec<f64> = noise.iter().cycle().take(p.len()).copied().collect();
        let target = ParameterVector::from_vec(p.rows(), p.cols(), t).unwrap();
        // move every row along a direction orthogonal to [x; 1]
        let d = ex.dim();
        let mut other = p.clone();
        for r in 0..p.rows() {
            other.set(r, 0, p.get(r, 0) + slide);
            other.set(r, d, p.get(r, d) - slide * ex.features[0]);
        }
        let a = linmodel::logits(&spec, &p, ex).unwrap();
        let b = linmodel::logits(&spec, &other, ex).unwrap();
        let va = pedagogy::teaching_volume_feedback(&spec, &a, ex, &target, eta).unwrap();
        let vb = pedagogy::teaching_volume_feedback(&spec, &b, ex, &target, eta).unwrap();
        prop_assert!((va - vb).abs() <= 1e-12 * va.abs().max(1.0));
    }

    #[test]
    fn log_q_gradient_matches_finite_differences(
        (spec, nu, exs) in instance(5),
        chosen in 0usize..5,
        beta in 0.1..50.0f64,
        eta in 0.01..0.3f64,
        shift in prop::collection::vec(-0.5..0.5f64, 20),
    ) {
        let prev_v: Vec<f64> = nu.as_slice().iter().zip(shift.iter().cycle()).map(|(a, b)| a + b).collect();
        let prev = ParameterVector::from_vec(nu.rows(), nu.cols(), prev_v).unwrap();
        let err = pedagogy::log_q_grad_check(&spec, &exs, chosen, &nu, &prev, eta, beta).unwrap();
        let g = pedagogy::log_selection_prob_grad(&spec, &exs, chosen, &nu, &prev, eta, beta).unwrap();
        prop_assert!(err <= 1e-4 || g.norm() < 1e-8, "relative error {err}");
    }

    #[test]
    fn boltzmann_rows_sum_to_one_and_ignore_state_offsets(
        q in prop::collection::vec(-5.0..5.0f64, 4..=4 * 9),
        offsets in prop::collection::vec(-50.0..50.0f64, 9),
        alpha in 0.1..20.0f64,
    ) {
        let n = q.len() / 4;
        let q = &q[..n * 4];
        let pi = boltzmann_policy(q, alpha);
        let moved: Vec<f64> = q.iter().enumerate().map(|(i, v)| v + offsets[i / 4]).collect();
        let pj = boltzmann_policy(&moved, alpha);
        for s in 0..n {
            prop_assert!((pi.row(s).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for a in 0..4 {
                prop_assert!((pi.row(s)[a] - pj.row(s)[a]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn inner_products_survive_the_feature_map(
        seed in any::<u64>(),
        d in 1usize..12,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = make_feature_map(d, &mut rng).unwrap();
        prop_assert!(map.orthogonality_error() <= 1e-10);
        let x: Vec<f64> = (0..d).map(|i| ((seed >> (i % 60)) & 7) as f64 - 3.5).collect();
        let nu = ParameterVector::from_vec(1, d + 1, (0..=d).map(|i| (i as f64).sin()).collect()).unwrap();
        let spec = LossSpec::squared(0.0);
        let learner = linmodel::logits(&spec, &nu, &TeachingExample::new(x.clone(), 0.0)).unwrap();
        let teacher = linmodel::logits(
            &spec,
            &map.params_to_teacher(&nu),
            &TeachingExample::new(map.to_teacher(&x), 0.0),
        )
        .unwrap();
        prop_assert!((learner[0] - teacher[0]).abs() <= 1e-9);
    }

    #[test]
    fn regression_generator_is_pure_and_exact(seed in any::<u64>(), d in 1usize..8) {
        let (a, wa) = datagen::gen_regression(d, 20, seed).unwrap();
        let (b, wb) = datagen::gen_regression(d, 20, seed).unwrap();
        prop_assert_eq!(&wa, &wb);
        prop_assert_eq!(&a.examples, &b.examples);
        prop_assert!(a.mean_loss(&wa).unwrap() <= 1e-24);
    }
}

fn random_world(width: usize, height: usize, discount: f64, rewards: &[f64]) -> (GridworldMdp, RewardParams) {
    let mdp = GridworldMdp::new(width, height, TransitionSpec::PAPER, discount).unwrap();
    let r = mdp.encode(&rewards[..width * height]).unwrap();
    (mdp, r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn soft_value_iteration_residuals_never_grow(
        (w, h) in (2usize..=4, 2usize..=4),
        discount in 0.1..0.9f64,
        rewards in prop::collection::vec(-2.0..2.0f64, 16),
    ) {
        let (mdp, r) = random_world(w, h, discount, &rewards);
        let sol = soft_value_iteration(&mdp, &r, &SoftPlanner::default()).unwrap();
        for pair in sol.residuals[1..].windows(2) {
            prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-15, "{:?}", pair);
        }
    }

    #[test]
    fn soft_values_approach_hard_values_as_k_grows(
        rewards in prop::collection::vec(-2.0..2.0f64, 16),
    ) {
        let (mdp, r) = random_world(4, 4, 0.5, &rewards);
        let hard = hard_value_iteration(&mdp, &r, 1e-12, 10_000).unwrap();
        let mut last = f64::INFINITY;
        for k in [10.0, 100.0, 1000.0] {
            let planner = SoftPlanner { sharpness: k, tolerance: 1e-12, ..SoftPlanner::default() };
            let soft = soft_value_iteration(&mdp, &r, &planner).unwrap();
            let gap = soft.v.iter().zip(&hard.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(gap < last);
            last = gap;
        }
    }

    #[test]
    fn teaching_volumes_do_not_depend_on_the_teacher_encoding(
        seed in any::<u64>(),
        rewards in prop::collection::vec(-2.0..2.0f64, 9),
        estimates in prop::collection::vec(-2.0..2.0f64, 9),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let learner = GridworldMdp::new(3, 3, TransitionSpec::PAPER, 0.5).unwrap();
        let mut perm: Vec<usize> = (0..9).collect();
        perm.shuffle(&mut rng);
        let shuffled = learner.clone().with_encoding(perm).unwrap();
        let planner = SoftPlanner::default();
        let plain = IrlTeacher::new(learner.clone(), learner.encode(&rewards).unwrap(), planner).unwrap();
        let mixed = IrlTeacher::new(shuffled.clone(), shuffled.encode(&rewards).unwrap(), planner).unwrap();
        let reported = learner.encode(&estimates).unwrap();
        let demos: Vec<Demonstration> = (0..9).map(|s| Demonstration::new(s, Action::ALL[s % 4])).collect();
        for mode in [TeacherMode::FeedbackCooperative, TeacherMode::OmniscientCooperative] {
            let (a, _) = plain.volumes(mode, &learner, &reported, 1e-3, &demos).unwrap();
            let (b, _) = mixed.volumes(mode, &learner, &reported, 1e-3, &demos).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-3));
            }
        }
    }
}
