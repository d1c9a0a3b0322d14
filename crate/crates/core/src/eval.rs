//! Coverage and efficiency metrics, aggregation over seeds, dominance
//! audits on oracle data and the randomized rank-lemma harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conformal::{
    all_condition_from_probs, check_epsilon, critical_rank, critical_score, critical_score_of,
    mean_condition_from_probs, prediction_set_from_probs, score_set_from_probs, CalibrationMethod, CriticalScore,
    PredictionSet,
};
use crate::data::{LabelId, PartialDataset, ProbabilityVector};
use crate::error::{Error, Result};
use crate::train::ProbabilisticClassifier;

/// Tolerance used when comparing critical scores across methods.
pub const QUANTILE_TOLERANCE: f64 = 1e-12;

/// Fraction of prediction sets that contain the true label.
pub fn coverage(preds: &[PredictionSet], truths: &[LabelId]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: truths.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::InvalidSpec("coverage of an empty prediction list".into()));
    }
    let hits = preds.iter().zip(truths).filter(|(p, &t)| p.contains(t)).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Mean prediction-set cardinality. `NaN` for an empty list.
pub fn efficiency(preds: &[PredictionSet]) -> f64 {
    let total: usize = preds.iter().map(PredictionSet::len).sum();
    total as f64 / preds.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub method: CalibrationMethod,
    pub seed: u64,
    pub epsilon: f64,
    pub coverage: f64,
    pub efficiency: f64,
    pub critical_score: f64,
    pub n_test: usize,
}

/// Calibration and test predictions of one trained classifier, computed once
/// and shared by every calibration method.
#[derive(Debug, Clone)]
pub struct ScoredSplit<'a> {
    calib: &'a PartialDataset,
    test: &'a PartialDataset,
    calib_probs: Vec<ProbabilityVector>,
    test_probs: Vec<ProbabilityVector>,
}

impl<'a> ScoredSplit<'a> {
    pub fn new<C: ProbabilisticClassifier + ?Sized>(
        calib: &'a PartialDataset,
        test: &'a PartialDataset,
        f: &C,
    ) -> Result<Self> {
        Ok(ScoredSplit {
            calib,
            test,
            calib_probs: f.predict_all(calib)?,
            test_probs: f.predict_all(test)?,
        })
    }

    pub fn calib_probs(&self) -> &[ProbabilityVector] {
        &self.calib_probs
    }

    pub fn test_probs(&self) -> &[ProbabilityVector] {
        &self.test_probs
    }

    pub fn critical(&self, method: CalibrationMethod, epsilon: f64) -> Result<CriticalScore> {
        let e = score_set_from_probs(
            self.calib.candidates(),
            self.calib.hidden_truths(),
            &self.calib_probs,
            method,
        )?;
        critical_score(&e, epsilon)
    }

    /// Prediction sets for every test instance.
    pub fn predict(&self, method: CalibrationMethod, epsilon: f64) -> Result<Vec<PredictionSet>> {
        let q = self.critical(method, epsilon)?;
        Ok(self
            .test
            .instances()
            .iter()
            .zip(&self.test_probs)
            .map(|(x, p)| prediction_set_from_probs(x.id, p, q))
            .collect())
    }

    /// Coverage and efficiency on the test split. Needs test truths.
    pub fn metrics(&self, method: CalibrationMethod, epsilon: f64, seed: u64) -> Result<MethodMetrics> {
        let truths = self.test.truths("coverage")?;
        let preds = self.predict(method, epsilon)?;
        metrics_of(method, epsilon, seed, &preds, truths)
    }

    /// Checks each method's dominance over the oracle score set.
    pub fn audit(&self, epsilon: f64, methods: &[CalibrationMethod]) -> Result<Vec<AuditRow>> {
        let calib_truths = self.calib.truths("theorem_audit")?;
        let oracle_q = self.critical(CalibrationMethod::PreciseOracle, epsilon)?;
        let oracle_sets = self.predict(CalibrationMethod::PreciseOracle, epsilon)?;
        let mut rows = Vec::new();
        for &method in methods.iter().filter(|m| !m.needs_oracle()) {
            let (precondition, rate) = match method {
                CalibrationMethod::Max => (Precondition::Unconditional, None),
                CalibrationMethod::Mean => {
                    let r = mean_condition_from_probs(self.calib.candidates(), calib_truths, &self.calib_probs);
                    (Precondition::from_flag(r.satisfied), Some(r.satisfaction_rate()))
                }
                CalibrationMethod::All => {
                    let r = all_condition_from_probs(
                        self.calib.candidates(),
                        calib_truths,
                        &self.calib_probs,
                        self.calib.num_classes(),
                        epsilon,
                    )?;
                    (Precondition::from_flag(r.satisfied), None)
                }
                _ => (Precondition::NotApplicable, None),
            };
            let q = self.critical(method, epsilon)?;
            let sets = self.predict(method, epsilon)?;
            let contained = oracle_sets.iter().zip(&sets).filter(|(o, m)| o.is_subset_of(m)).count();
            let quantile_dominates = q.value >= oracle_q.value - QUANTILE_TOLERANCE;
            let containment_held = contained == sets.len();
            rows.push(AuditRow {
                method,
                precondition,
                precondition_rate: rate,
                critical: q.value,
                oracle_critical: oracle_q.value,
                quantile_dominates,
                containment_held,
                containment_fraction: contained as f64 / sets.len().max(1) as f64,
                hard_failure: precondition.held() && !(quantile_dominates && containment_held),
            });
        }
        Ok(rows)
    }
}

pub fn metrics_of(
    method: CalibrationMethod,
    epsilon: f64,
    seed: u64,
    preds: &[PredictionSet],
    truths: &[LabelId],
) -> Result<MethodMetrics> {
    Ok(MethodMetrics {
        method,
        seed,
        epsilon,
        coverage: coverage(preds, truths)?,
        efficiency: efficiency(preds),
        critical_score: preds.first().map_or(f64::NAN, |p| p.critical.value),
        n_test: preds.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Precondition {
    /// No side condition (pessimistic max scores).
    Unconditional,
    Held,
    Violated,
    /// The method carries no guarantee.
    NotApplicable,
}

impl Precondition {
    fn from_flag(ok: bool) -> Self {
        if ok {
            Precondition::Held
        } else {
            Precondition::Violated
        }
    }

    pub fn held(self) -> bool {
        matches!(self, Precondition::Unconditional | Precondition::Held)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Precondition::Unconditional => "unconditional",
            Precondition::Held => "held",
            Precondition::Violated => "violated",
            Precondition::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub method: CalibrationMethod,
    pub precondition: Precondition,
    /// Per-instance satisfaction rate (mean-score condition only).
    pub precondition_rate: Option<f64>,
    pub critical: f64,
    pub oracle_critical: f64,
    pub quantile_dominates: bool,
    pub containment_held: bool,
    pub containment_fraction: f64,
    /// Precondition held but dominance failed.
    pub hard_failure: bool,
}

/// Audits max, all, mean, min and the given μ values against the oracle
/// score set: preconditions on `calib`, containment on `test`.
pub fn theorem_audit<C: ProbabilisticClassifier + ?Sized>(
    calib: &PartialDataset,
    test: &PartialDataset,
    f: &C,
    epsilon: f64,
    mus: &[f64],
) -> Result<Vec<AuditRow>> {
    calib.truths("theorem_audit")?;
    let scored = ScoredSplit::new(calib, test, f)?;
    let mut methods = vec![
        CalibrationMethod::Max,
        CalibrationMethod::All,
        CalibrationMethod::Mean,
        CalibrationMethod::Min,
    ];
    methods.extend(mus.iter().map(|&mu| CalibrationMethod::Mu(mu)));
    scored.audit(epsilon, &methods)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation (divides by the count).
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodAggregate {
    pub method: CalibrationMethod,
    pub epsilon: f64,
    pub coverage: MeanStd,
    pub efficiency: MeanStd,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedAccuracy {
    pub seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub methods: Vec<MethodAggregate>,
    pub train_accuracy: MeanStd,
    pub test_accuracy: MeanStd,
    pub n_seeds: usize,
}

/// Groups metrics by method (in first-seen order) and summarizes over seeds.
pub fn aggregate(metrics: &[MethodMetrics], accuracies: &[SeedAccuracy]) -> AggregateReport {
    let mut order: Vec<CalibrationMethod> = Vec::new();
    for m in metrics {
        if !order.contains(&m.method) {
            order.push(m.method);
        }
    }
    let methods = order
        .into_iter()
        .map(|method| {
            let rows: Vec<&MethodMetrics> = metrics.iter().filter(|m| m.method == method).collect();
            let cov: Vec<f64> = rows.iter().map(|m| m.coverage).collect();
            let eff: Vec<f64> = rows.iter().map(|m| m.efficiency).collect();
            MethodAggregate {
                method,
                epsilon: rows[0].epsilon,
                coverage: MeanStd::of(&cov),
                efficiency: MeanStd::of(&eff),
                n_seeds: rows.len(),
            }
        })
        .collect();
    let train: Vec<f64> = accuracies.iter().map(|a| a.train_accuracy).collect();
    let test: Vec<f64> = accuracies.iter().map(|a| a.test_accuracy).collect();
    AggregateReport {
        methods,
        train_accuracy: MeanStd::of(&train),
        test_accuracy: MeanStd::of(&test),
        n_seeds: accuracies.len(),
    }
}

/// Result of one rank-lemma construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaTrial {
    pub q_before: f64,
    pub q_after: f64,
    pub holds: bool,
}

/// Adds `t_l` elements `≤ q(E_1, ε)` and `t_r` elements `> q(E_1, ε)` to
/// `e1` and reports whether the critical score did not decrease.
///
/// Errors unless `t_l ≥ 2`, `t_r ≥ t_l` and `ε ≤ 1/4`, under which the
/// result is guaranteed to be `true`.
pub fn lemma_check<R: Rng + ?Sized>(e1: &[f64], t_l: usize, t_r: usize, epsilon: f64, rng: &mut R) -> Result<bool> {
    lemma_preconditions(t_l, t_r, epsilon)?;
    Ok(lemma_trial(e1, t_l, t_r, epsilon, rng)?.holds)
}

fn lemma_preconditions(t_l: usize, t_r: usize, epsilon: f64) -> Result<()> {
    if t_l < 2 {
        return Err(Error::LemmaPrecondition(format!("t_l = {t_l} < 2")));
    }
    if t_r < t_l {
        return Err(Error::LemmaPrecondition(format!("t_r = {t_r} < t_l = {t_l}")));
    }
    if epsilon > 0.25 {
        return Err(Error::LemmaPrecondition(format!("epsilon = {epsilon} > 1/4")));
    }
    Ok(())
}

/// The lemma construction without its preconditions, for exploring where
/// it fails.
pub fn lemma_trial<R: Rng + ?Sized>(
    e1: &[f64],
    t_l: usize,
    t_r: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<LemmaTrial> {
    let q1 = critical_score_of(e1, epsilon)?.value;
    if q1.is_infinite() {
        return Err(Error::LemmaPrecondition(format!(
            "q(E_1) is infinite for |E_1| = {} and epsilon = {epsilon}",
            e1.len()
        )));
    }
    let floor = e1.iter().copied().fold(f64::INFINITY, f64::min).min(q1);
    let below: Vec<f64> = e1.iter().copied().filter(|&v| v <= q1).collect();
    let above: Vec<f64> = e1.iter().copied().filter(|&v| v > q1).collect();
    let ceiling = if q1 < 1.0 { 1.0 } else { q1 + 1.0 };

    let mut e2 = e1.to_vec();
    for _ in 0..t_l {
        let v = match rng.random_range(0..4) {
            0 => q1,
            1 => below[rng.random_range(0..below.len())],
            _ => floor + (q1 - floor) * rng.random::<f64>(),
        };
        e2.push(v.min(q1));
    }
    for _ in 0..t_r {
        let v = if !above.is_empty() && rng.random_range(0..4) == 0 {
            above[rng.random_range(0..above.len())]
        } else {
            q1 + (ceiling - q1) * (1.0 - rng.random::<f64>())
        };
        e2.push(v.max(q1.next_up()));
    }
    let q2 = critical_score_of(&e2, epsilon)?.value;
    Ok(LemmaTrial {
        q_before: q1,
        q_after: q2,
        holds: q2 >= q1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaHarnessConfig {
    pub trials: usize,
    pub seed: u64,
    pub max_size: usize,
    pub max_added: usize,
    /// Sample outside the lemma's preconditions (ε up to 1/2, `t_l ≥ 1`,
    /// any `t_r`); failures are then recorded rather than errors.
    pub explore_violations: bool,
    /// Use this ε in every trial instead of sampling it.
    pub epsilon: Option<f64>,
}

impl Default for LemmaHarnessConfig {
    fn default() -> Self {
        LemmaHarnessConfig {
            trials: 10_000,
            seed: 0,
            max_size: 200,
            max_added: 20,
            explore_violations: false,
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaFailure {
    pub size: usize,
    pub t_l: usize,
    pub t_r: usize,
    pub epsilon: f64,
    pub q_before: f64,
    pub q_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSummary {
    pub trials: usize,
    pub holds: usize,
    pub failures: Vec<LemmaFailure>,
}

/// Randomized trials of the rank lemma. Score sets mix continuous values
/// with values on a coarse grid so that duplicates and ties occur.
pub fn lemma_harness(config: &LemmaHarnessConfig) -> Result<LemmaSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut holds = 0;
    let mut failures = Vec::new();
    let max_eps = if config.explore_violations { 0.5 } else { 0.25 };
    let max_size = config.max_size.max(1);
    if let Some(eps) = config.epsilon {
        check_epsilon(eps)?;
        if !config.explore_violations && eps > 0.25 {
            return Err(Error::LemmaPrecondition(format!("epsilon = {eps} > 1/4")));
        }
        if critical_rank(max_size, eps) > max_size {
            return Err(Error::LemmaPrecondition(format!(
                "epsilon = {eps} gives an infinite critical score for every size <= {max_size}"
            )));
        }
    }
    for _ in 0..config.trials {
        let (e1, epsilon) = loop {
            let size = rng.random_range(1..=max_size);
            let epsilon = match config.epsilon {
                Some(eps) => eps,
                None if rng.random_range(0..10) == 0 => max_eps,
                None => max_eps * (1.0 - rng.random::<f64>()),
            };
            if critical_rank(size, epsilon) <= size {
                let coarse = rng.random::<bool>();
                let e1: Vec<f64> = (0..size)
                    .map(|_| {
                        let v: f64 = rng.random();
                        if coarse {
                            (v * 10.0).floor() / 10.0
                        } else {
                            v
                        }
                    })
                    .collect();
                break (e1, epsilon);
            }
        };
        let (t_l, t_r) = if config.explore_violations {
            let t_l = rng.random_range(1..=config.max_added);
            (t_l, rng.random_range(0..=config.max_added))
        } else {
            let t_l = rng.random_range(2..=config.max_added.max(2));
            (t_l, t_l + rng.random_range(0..=config.max_added))
        };
        if !config.explore_violations {
            lemma_preconditions(t_l, t_r, epsilon)?;
        }
        let trial = lemma_trial(&e1, t_l, t_r, epsilon, &mut rng)?;
        if trial.holds {
            holds += 1;
        } else {
            failures.push(LemmaFailure {
                size: e1.len(),
                t_l,
                t_r,
                epsilon,
                q_before: trial.q_before,
                q_after: trial.q_after,
            });
        }
    }
    Ok(LemmaSummary {
        trials: config.trials,
        holds,
        failures,
    })
}
