use pllcp::conformal::{all_condition_from_probs, mean_condition_from_probs};
use pllcp::datagen::{contaminate_random, generate_gaussian, GaussianMixtureSpec};
use pllcp::eval::{
    coverage, efficiency, lemma_check, lemma_harness, lemma_trial, theorem_audit, LemmaHarnessConfig, Precondition,
    ScoredSplit,
};
use pllcp::train::{erm_fit, Loss, TrainConfig};
use pllcp::{
    CalibrationMethod, CandidateSet, Error, Instance, LabelId, ModelSpec, PartialDataset, ProbabilisticClassifier,
    ProbabilityVector, Result, SplitSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reads an instance's features as its predicted probability vector.
struct Passthrough(usize);

impl ProbabilisticClassifier for Passthrough {
    fn num_classes(&self) -> usize {
        self.0
    }

    fn input_dim(&self) -> usize {
        self.0
    }

    fn predict_proba(&self, features: &[f64]) -> Result<ProbabilityVector> {
        ProbabilityVector::new(features.to_vec())
    }
}

/// Oracle dataset whose features are probability vectors. The truth's logit
/// is raised by a uniform draw from `[0, truth_boost]`. With `p_extra > 0`
/// every candidate set has at least one false label.
fn synthetic(rng: &mut ChaCha8Rng, n: usize, k: usize, p_extra: f64, truth_boost: f64) -> PartialDataset {
    synthetic_with(rng, n, k, p_extra, 0.0, truth_boost)
}

/// The truth's logit is raised by a uniform draw from `[floor, floor + spread]`.
fn synthetic_with(rng: &mut ChaCha8Rng, n: usize, k: usize, p_extra: f64, floor: f64, spread: f64) -> PartialDataset {
    let mut instances = Vec::with_capacity(n);
    let mut candidates = Vec::with_capacity(n);
    let mut truths = Vec::with_capacity(n);
    for id in 0..n {
        let t = rng.random_range(0..k);
        let mut logits: Vec<f64> = (0..k).map(|_| 2.0 * rng.random_range(-1.0..1.0)).collect();
        logits[t] += floor + spread * rng.random::<f64>();
        let probs = ProbabilityVector::softmax(&logits).as_slice().to_vec();
        let mut labels: Vec<usize> = (0..k).filter(|&l| l == t || rng.random_bool(p_extra)).collect();
        if labels.len() == 1 && p_extra > 0.0 {
            labels.push((t + 1) % k);
        }
        instances.push(Instance { id, features: probs });
        candidates.push(CandidateSet::from_labels(labels.into_iter().map(LabelId::from)));
        truths.push(LabelId::from(t));
    }
    PartialDataset::new(instances, candidates, Some(truths), k).unwrap()
}

#[test]
fn max_sets_contain_oracle_sets_on_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..300 {
        let k = rng.random_range(2..8);
        let (n, p_extra) = (rng.random_range(1..150), rng.random());
        let calib = synthetic(&mut rng, n, k, p_extra, 3.0);
        let test = synthetic(&mut rng, 50, k, 0.0, 3.0);
        let eps = rng.random_range(0.01..0.99);
        let s = ScoredSplit::new(&calib, &test, &Passthrough(k)).unwrap();
        let oracle = s.predict(CalibrationMethod::PreciseOracle, eps).unwrap();
        let max = s.predict(CalibrationMethod::Max, eps).unwrap();
        for (o, m) in oracle.iter().zip(&max) {
            assert!(o.is_subset_of(m));
        }
        assert!(efficiency(&oracle) <= efficiency(&max));
        let truths = test.hidden_truths().unwrap();
        assert!(coverage(&oracle, truths).unwrap() <= coverage(&max, truths).unwrap());
    }
}

#[test]
fn max_sets_contain_oracle_sets_for_trained_models() {
    for seed in 0..4 {
        let d = generate_gaussian(&GaussianMixtureSpec::ring(4, 2, 2.0, 1.0, 150, seed)).unwrap();
        let d = contaminate_random(&d, 0.4, seed).unwrap();
        let split = d.split(&SplitSpec::new(0.6, 0.2, 0.2, seed).unwrap()).unwrap();
        let config = TrainConfig {
            loss: Loss::OptimisticSuperset,
            epochs: 10,
            seed,
            ..TrainConfig::default()
        };
        let f = erm_fit(&split.train, &ModelSpec::mlp(2, vec![8], 4), &config)
            .unwrap()
            .model;
        let rows = theorem_audit(&split.calib, &split.test, &f, 0.1, &[0.5]).unwrap();
        assert!(rows.iter().all(|r| !r.hard_failure));
        let max = rows.iter().find(|r| r.method == CalibrationMethod::Max).unwrap();
        assert_eq!(max.precondition, Precondition::Unconditional);
        assert!(max.containment_held && max.quantile_dominates);
        assert_eq!(rows.len(), 5);
    }
}

#[test]
fn mean_condition_implies_dominance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut held = 0;
    for _ in 0..400 {
        let k = rng.random_range(2..6);
        let n = rng.random_range(5..120);
        let floor = rng.random_range(3.0..8.0);
        let calib = synthetic_with(&mut rng, n, k, 0.5, floor, 3.0);
        let test = synthetic(&mut rng, 40, k, 0.0, 3.0);
        let eps = rng.random_range(0.02..0.5);
        let probs = Passthrough(k).predict_all(&calib).unwrap();
        let report = mean_condition_from_probs(calib.candidates(), calib.hidden_truths().unwrap(), &probs);
        if !report.satisfied {
            continue;
        }
        held += 1;
        let s = ScoredSplit::new(&calib, &test, &Passthrough(k)).unwrap();
        let q1 = s.critical(CalibrationMethod::PreciseOracle, eps).unwrap().value;
        let qm = s.critical(CalibrationMethod::Mean, eps).unwrap().value;
        assert!(qm >= q1 - 1e-12, "{qm} < {q1}");
        let oracle = s.predict(CalibrationMethod::PreciseOracle, eps).unwrap();
        let mean = s.predict(CalibrationMethod::Mean, eps).unwrap();
        assert!(oracle.iter().zip(&mean).all(|(o, m)| o.is_subset_of(m)));
    }
    assert!(held >= 50, "only {held} runs met the condition");
}

#[test]
fn all_condition_implies_dominance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut held = 0;
    for _ in 0..400 {
        let k = rng.random_range(2..6);
        let n = rng.random_range(5..150);
        let p_extra = rng.random_range(0.0..0.8);
        let calib = synthetic(&mut rng, n, k, p_extra, 8.0);
        let eps = rng.random_range(0.01..0.25);
        let probs = Passthrough(k).predict_all(&calib).unwrap();
        let r = all_condition_from_probs(calib.candidates(), calib.hidden_truths().unwrap(), &probs, k, eps).unwrap();
        if !r.satisfied {
            continue;
        }
        held += 1;
        let test = synthetic(&mut rng, 40, k, 0.0, 3.0);
        let s = ScoredSplit::new(&calib, &test, &Passthrough(k)).unwrap();
        let q1 = s.critical(CalibrationMethod::PreciseOracle, eps).unwrap().value;
        let qa = s.critical(CalibrationMethod::All, eps).unwrap().value;
        assert!(qa >= q1 - 1e-12, "{qa} < {q1}");
    }
    assert!(held >= 50, "only {held} runs met the condition");
}

#[test]
fn fully_ambiguous_data_meets_the_mean_condition_with_equality() {
    let k = 5;
    let n = 40;
    let d = PartialDataset::new(
        (0..n)
            .map(|id| Instance {
                id,
                features: vec![1.0 / k as f64; k],
            })
            .collect(),
        vec![CandidateSet::full(k); n],
        Some((0..n).map(|i| LabelId::from(i % k)).collect()),
        k,
    )
    .unwrap();
    let rows = theorem_audit(&d, &d, &Passthrough(k), 0.1, &[]).unwrap();
    let mean = rows.iter().find(|r| r.method == CalibrationMethod::Mean).unwrap();
    assert_eq!(mean.precondition, Precondition::Held);
    assert_eq!(mean.precondition_rate, Some(1.0));
    assert_eq!(mean.critical, mean.oracle_critical);
    assert!(rows.iter().all(|r| r.containment_held));
}

#[test]
fn audit_rejects_non_oracle_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = synthetic(&mut rng, 20, 3, 0.3, 2.0);
    let err = theorem_audit(&d.without_truths(), &d, &Passthrough(3), 0.1, &[]).unwrap_err();
    assert!(matches!(err, Error::NotOracle { .. }));
}

#[test]
fn oracle_coverage_is_marginally_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (k, n, eps, trials) = (4, 99, 0.1, 400);
    let mut total = 0.0;
    let mut sq = 0.0;
    for _ in 0..trials {
        let calib = synthetic(&mut rng, n, k, 0.3, 2.0);
        let test = synthetic(&mut rng, 200, k, 0.3, 2.0);
        let s = ScoredSplit::new(&calib, &test, &Passthrough(k)).unwrap();
        let preds = s.predict(CalibrationMethod::PreciseOracle, eps).unwrap();
        let c = coverage(&preds, test.hidden_truths().unwrap()).unwrap();
        total += c;
        sq += c * c;
    }
    let mean = total / trials as f64;
    let se = ((sq / trials as f64 - mean * mean) / trials as f64).sqrt();
    // continuous scores: 1 - ε ≤ E[coverage] ≤ 1 - ε + 1/(n+1)
    assert!(mean >= 1.0 - eps - 3.0 * se, "{mean}");
    assert!(mean <= 1.0 - eps + 1.0 / (n as f64 + 1.0) + 3.0 * se, "{mean}");
}

#[test]
fn lemma_holds_on_ten_thousand_trials() {
    let summary = lemma_harness(&LemmaHarnessConfig {
        trials: 10_000,
        seed: 11,
        ..LemmaHarnessConfig::default()
    })
    .unwrap();
    assert_eq!(summary.trials, 10_000);
    assert_eq!(summary.holds, 10_000);
    assert!(summary.failures.is_empty());
}

#[test]
fn lemma_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let e1: Vec<f64> = (0..20).map(|_| rng.random()).collect();
        assert!(lemma_check(&e1, 2, 5, 0.2, &mut rng).unwrap());
        assert!(lemma_check(&e1, 2, 2, 0.25, &mut rng).unwrap());
    }
    let e1: Vec<f64> = (0..20).map(|_| rng.random()).collect();
    assert!(matches!(
        lemma_check(&e1, 5, 5, 0.4, &mut rng),
        Err(Error::LemmaPrecondition(_))
    ));
    assert!(matches!(
        lemma_check(&e1, 1, 5, 0.1, &mut rng),
        Err(Error::LemmaPrecondition(_))
    ));
    assert!(matches!(
        lemma_check(&e1, 3, 2, 0.1, &mut rng),
        Err(Error::LemmaPrecondition(_))
    ));
}

#[test]
fn lemma_can_fail_outside_its_preconditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut failures = 0;
    for _ in 0..2000 {
        let size = rng.random_range(3..40);
        let e1: Vec<f64> = (0..size).map(|_| rng.random()).collect();
        // recorded, never an error
        lemma_trial(&e1, 5, 5, 0.4, &mut rng).unwrap();
        let trial = lemma_trial(&e1, 5, 5, 0.7, &mut rng).unwrap();
        failures += usize::from(!trial.holds);
    }
    assert!(failures > 0);

    let summary = lemma_harness(&LemmaHarnessConfig {
        trials: 5000,
        seed: 14,
        explore_violations: true,
        ..LemmaHarnessConfig::default()
    })
    .unwrap();
    assert_eq!(summary.holds + summary.failures.len(), summary.trials);
    assert!(summary.failures.iter().all(|f| f.q_after < f.q_before));
}

proptest! {
    #[test]
    fn efficiency_is_monotone_under_containment(
        seed in any::<u64>(),
        k in 2usize..8,
        eps_a in 0.01f64..0.99,
        eps_b in 0.01f64..0.99,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let calib = synthetic(&mut rng, 60, k, 0.3, 2.0);
        let test = synthetic(&mut rng, 30, k, 0.0, 2.0);
        let s = ScoredSplit::new(&calib, &test, &Passthrough(k)).unwrap();
        let (lo, hi) = if eps_a >= eps_b { (eps_a, eps_b) } else { (eps_b, eps_a) };
        // larger ε gives a smaller critical score and thus nested sets
        let small = s.predict(CalibrationMethod::Mean, lo).unwrap();
        let large = s.predict(CalibrationMethod::Mean, hi).unwrap();
        prop_assert!(small.iter().zip(&large).all(|(a, b)| a.is_subset_of(b)));
        prop_assert!(efficiency(&small) <= efficiency(&large));
    }
}
