use std::ffi::{CStr, CString};
use std::ptr;

use approx::assert_relative_eq;
use ital_core::linmodel::{LossSpec, ParameterVector, TeachingExample};
use ital_core::pedagogy::{self, BetaSchedule, LearnerState};
use ital_core::session::{SessionConfig, SessionLearner, TeachingSession};
use ital_ffi::*;

fn last_error() -> String {
    let p = ital_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn squared_opts(dim: usize, beta: f64) -> ItalLearnerOptions {
    ItalLearnerOptions {
        loss: ItalLoss::Squared,
        classes: 0,
        dim,
        lambda: 0.0,
        eta: 0.05,
        beta,
    }
}

#[test]
fn selection_distribution_matches_softmax() {
    let v = [0.1, -0.2, 0.3];
    let mut out = [0.0; 3];
    let s = unsafe { ital_selection_distribution(v.as_ptr(), 3, 2.0, out.as_mut_ptr()) };
    assert_eq!(s, ItalStatus::Ok);
    assert!(ital_last_error().is_null());
    let z: f64 = v.iter().map(|x| (2.0 * x).exp()).sum();
    for (o, x) in out.iter().zip(v) {
        assert_relative_eq!(*o, (2.0 * x).exp() / z, max_relative = 1e-12);
    }
}

#[test]
fn learner_steps_match_core() {
    let init = [0.3, -0.2, 0.1];
    let features = [1.0, 0.5, -0.3, 2.0, 0.7, -1.1];
    let labels = [0.4, -1.0, 0.9];
    let subset = [2usize, 0];
    let mut h: *mut ItalLearner = ptr::null_mut();
    unsafe {
        assert_eq!(
            ital_learner_new(&squared_opts(2, 50.0), init.as_ptr(), 3, &mut h),
            ItalStatus::Ok
        );
        assert_eq!(ital_learner_params_len(h), 3);
        assert_eq!(
            ital_learner_step(h, features.as_ptr(), labels.as_ptr(), 3, 1, ptr::null(), 0),
            ItalStatus::Ok
        );
        assert_eq!(
            ital_learner_step(h, features.as_ptr(), labels.as_ptr(), 3, 1, subset.as_ptr(), 2),
            ItalStatus::Ok
        );
    }
    let mut got = [0.0; 3];
    assert_eq!(unsafe { ital_learner_params(h, got.as_mut_ptr(), 3) }, ItalStatus::Ok);
    unsafe { ital_learner_free(h) };

    let spec = LossSpec::squared(0.0);
    let batch: Vec<TeachingExample> = features
        .chunks(2)
        .zip(labels)
        .map(|(x, y)| TeachingExample::new(x.to_vec(), y))
        .collect();
    let s0 = LearnerState::new(
        ParameterVector::from_vec(1, 3, init.to_vec()).unwrap(),
        0.05,
        BetaSchedule::Constant(50.0),
        0,
    );
    let s1 = pedagogy::naive_update(&spec, &s0, &batch[1]).unwrap();
    let s2 = pedagogy::ital_update(&spec, &s1, &batch, 1, &subset).unwrap().0;
    assert_eq!(&got[..], s2.params.as_slice());
}

#[test]
fn feedback_volumes_are_written_per_example() {
    let features = [1.0, 0.0, 0.0, 1.0];
    let labels = [1.0, -1.0];
    let target = [1.0, -1.0, 0.0];
    let mut h: *mut ItalLearner = ptr::null_mut();
    let mut out = [f64::NAN; 2];
    unsafe {
        assert_eq!(
            ital_learner_new(&squared_opts(2, 0.0), ptr::null(), 0, &mut h),
            ItalStatus::Ok
        );
        let s = ital_learner_feedback_volumes(
            h,
            target.as_ptr(),
            3,
            features.as_ptr(),
            labels.as_ptr(),
            2,
            out.as_mut_ptr(),
        );
        assert_eq!(s, ItalStatus::Ok);
        ital_learner_free(h);
    }
    // zero learner, target labels matched exactly: gain is the full loss
    let eta = 0.05;
    for v in out {
        let expected = -eta * eta * 2.0 + 2.0 * eta * 0.5;
        assert_relative_eq!(v, expected, max_relative = 1e-12);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut h: *mut ItalLearner = ptr::null_mut();
    unsafe {
        let bad = [0.0; 4];
        assert_eq!(
            ital_learner_new(&squared_opts(2, 1.0), bad.as_ptr(), 4, &mut h),
            ItalStatus::ShapeMismatch
        );
        assert!(h.is_null());
        assert!(last_error().contains("shape"));

        assert_eq!(
            ital_learner_new(ptr::null(), ptr::null(), 0, &mut h),
            ItalStatus::NullPointer
        );
        let mut opts = squared_opts(2, 1.0);
        opts.eta = -1.0;
        assert_eq!(
            ital_learner_new(&opts, ptr::null(), 0, &mut h),
            ItalStatus::InvalidArgument
        );

        assert_eq!(
            ital_learner_new(&squared_opts(1, 1.0), ptr::null(), 0, &mut h),
            ItalStatus::Ok
        );
        let x = [1.0];
        let y = [1.0];
        assert_eq!(
            ital_learner_step(h, x.as_ptr(), y.as_ptr(), 1, 3, ptr::null(), 0),
            ItalStatus::InvalidIndex
        );
        let mut small = [0.0; 1];
        assert_eq!(
            ital_learner_params(h, small.as_mut_ptr(), 1),
            ItalStatus::BufferTooSmall
        );
        ital_learner_free(h);
        ital_learner_free(ptr::null_mut());

        let nan = [f64::NAN];
        let mut out = [0.0];
        assert_eq!(
            ital_selection_distribution(nan.as_ptr(), 1, 1.0, out.as_mut_ptr()),
            ItalStatus::NonFinite
        );
        assert_eq!(ital_learner_params_len(ptr::null()), 0);
    }
}

#[test]
fn gridworld_policy_rows_are_distributions() {
    let mut w: *mut ItalGridworld = ptr::null_mut();
    unsafe {
        assert_eq!(ital_gridworld_new(3, 3, 0.5, &mut w), ItalStatus::Ok);
        assert_eq!(ital_gridworld_num_states(w), 9);
        let rewards = [0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0];
        let mut q = [0.0; 36];
        assert_eq!(
            ital_gridworld_soft_q(w, rewards.as_ptr(), 9, q.as_mut_ptr(), 36),
            ItalStatus::Ok
        );
        assert!(q.iter().all(|v| v.is_finite()));
        let mut pi = [0.0; 36];
        assert_eq!(
            ital_gridworld_policy(w, rewards.as_ptr(), 9, pi.as_mut_ptr(), 36),
            ItalStatus::Ok
        );
        for row in pi.chunks(4) {
            assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert_eq!(ital_gridworld_set_planner(w, -1.0, 5.0), ItalStatus::InvalidArgument);
        assert_eq!(
            ital_gridworld_soft_q(w, rewards.as_ptr(), 8, q.as_mut_ptr(), 36),
            ItalStatus::ShapeMismatch
        );
        ital_gridworld_free(w);
        assert_eq!(ital_gridworld_new(0, 3, 0.5, &mut w), ItalStatus::InvalidArgument);
    }
}

#[test]
fn session_matches_in_process_session() {
    let id = CString::new("B").unwrap();
    let mut h: *mut ItalSession = ptr::null_mut();
    let cfg = SessionConfig::for_map("B", SessionLearner::Aware, 11).unwrap();
    let mut reference = TeachingSession::new("ref", cfg).unwrap();
    unsafe {
        assert_eq!(
            ital_session_new(id.as_ptr(), true, 11, 0.0, 0.0, &mut h),
            ItalStatus::Ok
        );
        let mut arrows = [ItalArrow::default(); 10];
        let mut n = 0usize;
        let mut m = ItalMetrics::default();
        for k in 0..6 {
            assert_eq!(
                ital_session_candidates(h, arrows.as_mut_ptr(), 10, &mut n),
                ItalStatus::Ok
            );
            assert_eq!(n, 10);
            let expected = reference.candidate_arrows();
            for (a, e) in arrows.iter().zip(&expected) {
                assert_eq!((a.state as usize, a.action as usize), (e.state, e.action.index()));
            }
            let pick = (3 * k) % 10;
            assert_eq!(ital_session_select(h, pick, &mut m), ItalStatus::Ok);
            let r = reference.select(pick).unwrap();
            assert_eq!(
                (m.step as usize, m.distance, m.policy_tv),
                (r.step, r.distance, r.policy_tv)
            );
        }
        let mut est = [0.0; 25];
        assert_eq!(ital_session_estimates(h, est.as_mut_ptr(), 25), ItalStatus::Ok);
        assert_eq!(&est[..], reference.params().as_slice());
        assert_eq!(ital_session_select(h, 10, ptr::null_mut()), ItalStatus::InvalidIndex);
        ital_session_free(h);

        let unknown = CString::new("Z").unwrap();
        assert_eq!(
            ital_session_new(unknown.as_ptr(), false, 0, 0.0, 0.0, &mut h),
            ItalStatus::NotFound
        );
    }
}
