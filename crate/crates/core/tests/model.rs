mod common;

use common::{dina_oracle, finite_difference_check, ncd_oracle, random_instance, sig};
use fedcog::data::{ClientDataset, QMatrix, ResponseLog};
use fedcog::model::{train_local, AdamState, ModelKind, ModelParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[test]
fn ncd_all_zero_parameters_predict_half() {
    let p = ModelParams::zeros(ModelKind::Ncd, 2, 3, 4);
    let q = QMatrix::from_rows(&[vec![1, 1, 1, 1], vec![1, 0, 0, 0], vec![0, 1, 0, 1]]).unwrap();
    for e in 0..3 {
        assert_eq!(p.predict(&q, 1, e), 0.5);
    }
}

#[test]
fn ncd_matches_formula_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (p, q) = random_instance(ModelKind::Ncd, 3, 4, 3, &mut rng);
        for s in 0..3 {
            for e in 0..4 {
                assert!((p.predict(&q, s, e) - ncd_oracle(&p, &q, s, e)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn ncd_masked_concept_only_changes_through_y() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut p, _) = random_instance(ModelKind::Ncd, 1, 2, 3, &mut rng);
    let q = QMatrix::from_rows(&[vec![1, 1, 1], vec![1, 0, 1]]).unwrap();
    // Exercise 1 masks concept 1; making exercise 0's row equal to exercise 1's
    // isolates the mask as the only difference.
    let row1 = p.exercise.row(1).to_vec();
    p.exercise.row_mut(0).copy_from_slice(&row1);
    let full = fedcog::model::ncd::forward(&p, &q, 0, 0);
    let masked = fedcog::model::ncd::forward(&p, &q, 0, 1);
    assert_eq!(full.y[0], masked.y[0]);
    assert_eq!(full.y[2], masked.y[2]);
    assert_eq!(masked.y[1], 0.0);
    assert_ne!(full.y[1], 0.0);
    assert_ne!(full.prediction, masked.prediction);
}

#[test]
fn dina_formula_cases() {
    let mut p = ModelParams::zeros(ModelKind::Dina, 2, 1, 2);
    p.exercise.set(0, 0, logit(0.4));
    p.exercise.set(0, 1, logit(0.2));
    p.student.row_mut(0).copy_from_slice(&[800.0, 800.0]);
    p.student.row_mut(1).copy_from_slice(&[-800.0, 800.0]);
    let q = QMatrix::from_rows(&[vec![1, 1]]).unwrap();
    assert!((p.predict(&q, 0, 0) - 0.9).abs() < 1e-12);
    assert!((p.predict(&q, 1, 0) - 0.2).abs() < 1e-12);
}

#[test]
fn dina_matches_formula_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let (p, q) = random_instance(ModelKind::Dina, 3, 4, 4, &mut rng);
        for s in 0..3 {
            for e in 0..4 {
                assert!((p.predict(&q, s, e) - dina_oracle(&p, &q, s, e)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for kind in [ModelKind::Ncd, ModelKind::Dina] {
        let mut instances = 0;
        for &d in &[2, 3, 5] {
            for _ in 0..40 {
                let (p, q) = random_instance(kind, 3, 4, d, &mut rng);
                let s = rand::Rng::random_range(&mut rng, 0..3);
                let e = rand::Rng::random_range(&mut rng, 0..4);
                let r = if rand::Rng::random_bool(&mut rng, 0.5) {
                    1.0
                } else {
                    0.0
                };
                let (checked, failures) = finite_difference_check(&p, &q, s, e, r, 1e-5);
                assert!(checked > 0);
                assert!(failures.is_empty(), "{kind:?} D={d}: {failures:?}");
                instances += 1;
            }
        }
        assert!(instances >= 100);
    }
}

#[test]
fn gradients_are_sparse_in_students_and_masked_concepts() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for kind in [ModelKind::Ncd, ModelKind::Dina] {
        let (p, _) = random_instance(kind, 4, 2, 3, &mut rng);
        let q = QMatrix::from_rows(&[vec![1, 0, 1], vec![0, 1, 0]]).unwrap();
        let g = p.gradients(&q, 2, 0, 1.0);
        for s in [0, 1, 3] {
            assert!(g.student.row(s).iter().all(|&x| x == 0.0));
        }
        assert_eq!(g.student.get(2, 1), 0.0);
        assert_ne!(g.student.get(2, 0), 0.0);
        assert!(g.exercise.row(1).iter().all(|&x| x == 0.0));
    }
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = ModelParams::init(ModelKind::Ncd, 2, 2, 2, &mut rng);
    let before = p.clone();
    let mut opt = AdamState::new(&p, 0.001);
    let g = p.zeros_like();
    for _ in 0..10 {
        opt.step(&mut p, &g);
    }
    assert_eq!(p, before);
}

#[test]
fn adam_constant_gradient_step_tends_to_learning_rate() {
    let mut p = ModelParams::zeros(ModelKind::Dina, 1, 1, 1);
    let mut opt = AdamState::new(&p, 0.001);
    let mut g = p.zeros_like();
    g.student.set(0, 0, 0.37);
    g.exercise.set(0, 0, -4.0);
    g.exercise.set(0, 1, 1e-3);
    let mut prev = p.clone();
    for _ in 0..5000 {
        prev = p.clone();
        opt.step(&mut p, &g);
    }
    let step = |a: &ModelParams, b: &ModelParams, r: usize, c: usize, s: bool| {
        if s {
            a.student.get(r, c) - b.student.get(r, c)
        } else {
            a.exercise.get(r, c) - b.exercise.get(r, c)
        }
    };
    assert!((step(&p, &prev, 0, 0, true) + 0.001).abs() < 1e-7);
    assert!((step(&p, &prev, 0, 0, false) - 0.001).abs() < 1e-7);
    assert!((step(&p, &prev, 0, 1, false) + 0.001).abs() < 1e-7);
}

#[test]
fn adam_clip_makes_driven_negative_entry_exactly_zero() {
    let mut p = ModelParams::zeros(ModelKind::Ncd, 1, 1, 2);
    p.diagnostic.as_mut().unwrap().w_fc2.set(0, 0, 1e-4);
    let mut opt = AdamState::new(&p, 0.01).with_clip(true);
    let mut g = p.zeros_like();
    g.diagnostic.as_mut().unwrap().w_fc2.set(0, 0, 1.0);
    opt.step(&mut p, &g);
    assert_eq!(p.diagnostic.as_ref().unwrap().w_fc2.get(0, 0), 0.0);
}

fn toy_dataset(logs: Vec<ResponseLog>, students: Vec<usize>) -> ClientDataset {
    ClientDataset::new(0, students, logs, Vec::new()).unwrap()
}

#[test]
fn train_local_rejects_zero_epochs_and_empty_data() {
    let q = QMatrix::from_rows(&[vec![1, 0]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut p = ModelParams::init(ModelKind::Ncd, 1, 1, 2, &mut rng);
    let mut opt = AdamState::new(&p, 0.001);
    let ds = toy_dataset(vec![ResponseLog::new(0, 0, true)], vec![0]);
    assert!(train_local(&mut p, &ds, &q, 0, 4, &mut opt, &mut rng).is_err());
    let empty = toy_dataset(Vec::new(), vec![0]);
    assert!(train_local(&mut p, &empty, &q, 1, 4, &mut opt, &mut rng).is_err());
}

#[test]
fn single_log_loss_strictly_decreases() {
    let q = QMatrix::from_rows(&[vec![1, 1, 0]]).unwrap();
    let ds = toy_dataset(vec![ResponseLog::new(0, 0, true)], vec![0]);
    for kind in [ModelKind::Ncd, ModelKind::Dina] {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = ModelParams::init(kind, 1, 1, 3, &mut rng);
        let mut opt = AdamState::new(&p, 0.001);
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let out = train_local(&mut p, &ds, &q, 1, 128, &mut opt, &mut rng).unwrap();
            assert!(
                out.mean_loss < last,
                "{kind:?}: {} !< {last}",
                out.mean_loss
            );
            last = out.mean_loss;
        }
    }
}

#[test]
fn separable_toy_set_is_fit() {
    let q = QMatrix::from_rows(&[vec![1, 0]]).unwrap();
    let logs = vec![ResponseLog::new(0, 0, true), ResponseLog::new(1, 0, false)];
    let ds = toy_dataset(logs, vec![0, 1]);
    for kind in [ModelKind::Ncd, ModelKind::Dina] {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut p = ModelParams::init(kind, 2, 1, 2, &mut rng);
        let mut opt = AdamState::new(&p, 0.001);
        let out = train_local(&mut p, &ds, &q, 20_000, 128, &mut opt, &mut rng).unwrap();
        assert!(out.mean_loss < 0.05, "{kind:?}: {}", out.mean_loss);
    }
}

#[test]
fn train_local_is_deterministic() {
    let q = QMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1]]).unwrap();
    let logs: Vec<ResponseLog> = (0..30)
        .map(|i| ResponseLog::new(i % 3, (i % 3 + (i / 3) % 2) % 3, i % 4 == 0))
        .collect();
    let ds = toy_dataset(logs, vec![0, 1, 2]);
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut p = ModelParams::init(ModelKind::Ncd, 3, 3, 2, &mut rng);
        let mut opt = AdamState::new(&p, 0.001);
        let out = train_local(&mut p, &ds, &q, 5, 8, &mut opt, &mut rng).unwrap();
        (p, out)
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(a, b);
    assert_eq!(la.mean_loss.to_bits(), lb.mean_loss.to_bits());
}

fn params_strategy(kind: ModelKind, d: usize) -> impl Strategy<Value = (ModelParams, QMatrix)> {
    any::<u64>().prop_map(move |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut p, q) = random_instance(kind, 2, 3, d, &mut rng);
        for b in p.blocks_mut() {
            for x in b.as_mut_slice() {
                *x *= 4.0;
            }
        }
        (p, q)
    })
}

proptest! {
    #[test]
    fn predictions_lie_strictly_inside_unit_interval(
        (p, q) in params_strategy(ModelKind::Ncd, 3),
        (pd, qd) in params_strategy(ModelKind::Dina, 3),
        s in 0usize..2,
        e in 0usize..3,
    ) {
        let a = p.predict(&q, s, e);
        let b = pd.predict(&qd, s, e);
        prop_assert!(a > 0.0 && a < 1.0);
        prop_assert!(b > 0.0 && b < 1.0);
    }

    #[test]
    fn ncd_prediction_ignores_masked_student_entries(
        (p, q) in params_strategy(ModelKind::Ncd, 4),
        e in 0usize..3,
        delta in -5.0f64..5.0,
    ) {
        let before = p.predict(&q, 0, e);
        for k in 0..4 {
            if !q.get(e, k) {
                let mut moved = p.clone();
                moved.student.set(0, k, moved.student.get(0, k) + delta);
                prop_assert_eq!(moved.predict(&q, 0, e), before);
            }
        }
    }

    #[test]
    fn dina_prediction_non_decreasing_in_required_mastery(
        (p, q) in params_strategy(ModelKind::Dina, 3),
        e in 0usize..3,
        bump in 0.0f64..3.0,
    ) {
        let g = 0.5 * sig(p.exercise.get(e, 0));
        let s = 0.5 * sig(p.exercise.get(e, 1));
        prop_assume!(1.0 - s - g > 0.0);
        let before = p.predict(&q, 0, e);
        for &k in q.concepts(e) {
            let mut up = p.clone();
            up.student.set(0, k, up.student.get(0, k) + bump);
            prop_assert!(up.predict(&q, 0, e) >= before);
        }
    }
}
