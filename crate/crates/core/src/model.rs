//! Arm models and belief-state update operators.
//!
//! An arm has `M` hidden states evolving under a row-stochastic transition
//! matrix `P`. Activating the arm yields a noisy observation `j` of the true
//! state `i` with probability `E[i][j]`, the reward `R[i][j]`, and a feedback
//! letter `l` whose law given the true state is the likelihood matrix of the
//! observation mode. The belief is the posterior over the true state.
//!
//! Every mode reduces to one likelihood matrix `lik[i][l] = P(F = l | S = i)`,
//! so all four update rules share a single Bayes routine:
//!
//! ```text
//! w_i(l)   = lik[i][l] * omega_i
//! q_l      = sum_i w_i(l)
//! (B_l omega)_m = sum_i p_im w_i(l) / q_l
//! ```
//!
//! The passive operator is `B_0 omega = omega P`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for row sums and belief normalization.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Feedback mass at or below this value is treated as an impossible outcome.
pub const ZERO_MASS: f64 = 1e-15;

/// Two reward entries closer than this are the same feedback letter.
pub const REWARD_MERGE_TOL: f64 = 1e-9;

/// Tolerance applied to beliefs supplied by callers (config files, tests).
const INPUT_BELIEF_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid arm model:\n{0}")]
    Invalid(ValidationReport),
    #[error("belief has {found} entries but the model has {expected} states")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("feedback outcome {outcome} is out of range (model has {count} outcomes)")]
    UnknownOutcome { outcome: usize, count: usize },
    #[error("feedback outcome {outcome} is impossible under this belief (mass {mass:e})")]
    ZeroProbabilityOutcome { outcome: usize, mass: f64 },
}

/// Every violated model invariant, one human-readable line each.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, issue) in self.issues.iter().enumerate() {
            if n > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// A probability vector over the physical states of one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector(Vec<f64>);

impl BeliefVector {
    /// Validates a caller-supplied belief. Entries must be finite and
    /// nonnegative and sum to one within `1e-9`; the result is renormalized.
    pub fn new(entries: Vec<f64>) -> Result<Self, ModelError> {
        if entries.is_empty() {
            return Err(ModelError::InvalidBelief("belief has no entries".into()));
        }
        if let Some((i, v)) = entries
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < -STOCHASTIC_TOL)
        {
            return Err(ModelError::InvalidBelief(format!("entry {} is {v}", i + 1)));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > INPUT_BELIEF_TOL {
            return Err(ModelError::InvalidBelief(format!("entries sum to {sum}")));
        }
        Ok(Self::normalized(entries))
    }

    /// Point mass on `state`.
    pub fn unit(dim: usize, state: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[state] = 1.0;
        Self(v)
    }

    pub fn uniform(dim: usize) -> Self {
        Self(vec![1.0 / dim as f64; dim])
    }

    /// Clamps rounding residue in `(-1e-12, 0)` to zero and rescales to unit mass.
    pub(crate) fn normalized(mut entries: Vec<f64>) -> Self {
        for v in entries.iter_mut() {
            debug_assert!(*v >= -1e-9, "negative belief entry {v}");
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = entries.iter().sum();
        if sum != 1.0 {
            for v in entries.iter_mut() {
                *v /= sum;
            }
        }
        Self(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &BeliefVector) -> f64 {
        squared_distance(&self.0, &other.0).sqrt()
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Which signal the player receives after activating an arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservationMode {
    /// An explicit signal drawn from the feedback matrix `rho`.
    GeneralFeedback,
    /// The (noisy) observed state.
    ObservationOnly,
    /// Only the realized reward.
    RewardOnly,
    /// The observed state together with the realized reward.
    ObservationAndReward,
}

impl ObservationMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::GeneralFeedback => "general-feedback",
            Self::ObservationOnly => "observation-only",
            Self::RewardOnly => "reward-only",
            Self::ObservationAndReward => "observation-and-reward",
        }
    }
}

/// The payload carried by one feedback letter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feedback {
    Signal(usize),
    Observed(usize),
    Reward(f64),
    ObservedReward { observed: usize, reward: f64 },
}

/// One feedback letter. `id` selects the active operator `B_{id+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackOutcome {
    pub id: usize,
    pub feedback: Feedback,
}

/// Raw matrices of an arm, as read from configuration. Rows index the true
/// state; columns index the next state (`transition`), observed state
/// (`error`, `reward`), or feedback signal (`feedback`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParts {
    pub transition: DMatrix<f64>,
    pub error: DMatrix<f64>,
    pub reward: DMatrix<f64>,
    pub feedback: Option<DMatrix<f64>>,
    pub mode: ObservationMode,
}

impl ModelParts {
    /// Convenience constructor from row-major nested vectors.
    pub fn from_rows(
        transition: &[Vec<f64>],
        error: &[Vec<f64>],
        reward: &[Vec<f64>],
        feedback: Option<&[Vec<f64>]>,
        mode: ObservationMode,
    ) -> Self {
        Self {
            transition: matrix_from_rows(transition),
            error: matrix_from_rows(error),
            reward: matrix_from_rows(reward),
            feedback: feedback.map(matrix_from_rows),
            mode,
        }
    }
}

/// Builds a dense matrix from row-major nested vectors. Ragged input is
/// padded with NaN so validation reports it.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
    DMatrix::from_fn(rows.len(), ncols, |i, j| {
        rows[i].get(j).copied().unwrap_or(f64::NAN)
    })
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Checks every arm-model invariant and reports all violations.
pub fn validate_model(parts: &ModelParts) -> Result<(), ValidationReport> {
    let mut report = ValidationReport::default();
    let m = parts.transition.nrows();
    if m == 0 {
        report.issues.push("P has no rows".into());
        return Err(report);
    }
    for (name, mat) in [
        ("P", &parts.transition),
        ("E", &parts.error),
        ("R", &parts.reward),
    ] {
        if mat.nrows() != m || mat.ncols() != m {
            report.issues.push(format!(
                "{name} is {}x{} but must be {m}x{m}",
                mat.nrows(),
                mat.ncols()
            ));
        }
    }
    check_stochastic("P", &parts.transition, &mut report);
    check_stochastic("E", &parts.error, &mut report);
    for i in 0..parts.reward.nrows() {
        for j in 0..parts.reward.ncols() {
            let v = parts.reward[(i, j)];
            if !v.is_finite() {
                report
                    .issues
                    .push(format!("entry ({}, {}) of R is {v}", i + 1, j + 1));
            }
        }
    }
    match (&parts.feedback, parts.mode) {
        (Some(rho), _) => {
            if rho.nrows() != m || rho.ncols() == 0 {
                report.issues.push(format!(
                    "rho is {}x{} but must have {m} rows and at least one column",
                    rho.nrows(),
                    rho.ncols()
                ));
            }
            check_stochastic("rho", rho, &mut report);
            if parts.mode != ObservationMode::GeneralFeedback {
                report.issues.push(format!(
                    "rho is only used by general-feedback mode, not {}",
                    parts.mode.name()
                ));
            }
        }
        (None, ObservationMode::GeneralFeedback) => report
            .issues
            .push("general-feedback mode requires a rho matrix".into()),
        (None, _) => {}
    }
    if report.is_ok() {
        Ok(())
    } else {
        Err(report)
    }
}

fn check_stochastic(name: &str, mat: &DMatrix<f64>, report: &mut ValidationReport) {
    for i in 0..mat.nrows() {
        let mut sum = 0.0;
        for j in 0..mat.ncols() {
            let v = mat[(i, j)];
            if !v.is_finite() || v < 0.0 {
                report.issues.push(format!(
                    "entry ({}, {}) of {name} is {v}; entries must be finite and nonnegative",
                    i + 1,
                    j + 1
                ));
            }
            sum += v;
        }
        if sum.is_finite() && (sum - 1.0).abs() > STOCHASTIC_TOL {
            report
                .issues
                .push(format!("row {} of {name} sums to {sum}", i + 1));
        }
    }
}

/// Groups reward values into letters: sorted ascending, a value joins the
/// current letter iff it lies within `REWARD_MERGE_TOL` of the letter's first
/// value.
fn reward_letters(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut all: Vec<f64> = values.collect();
    all.sort_by(f64::total_cmp);
    let mut letters: Vec<f64> = Vec::new();
    for v in all {
        match letters.last() {
            Some(&rep) if (v - rep).abs() <= REWARD_MERGE_TOL => {}
            _ => letters.push(v),
        }
    }
    letters
}

fn letter_of(letters: &[f64], v: f64) -> usize {
    letters
        .iter()
        .position(|&rep| (v - rep).abs() <= REWARD_MERGE_TOL)
        .expect("reward value belongs to the alphabet it was built from")
}

/// A validated arm model with its derived feedback alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    parts: ModelParts,
    likelihood: DMatrix<f64>,
    outcomes: Vec<FeedbackOutcome>,
    /// `(i, j) -> outcome id` for modes whose feedback is a function of the
    /// true and observed state.
    outcome_table: Option<DMatrix<usize>>,
    mean_reward: Vec<f64>,
    reward_bound: f64,
}

impl ArmModel {
    pub fn new(parts: ModelParts) -> Result<Self, ModelError> {
        validate_model(&parts).map_err(ModelError::Invalid)?;
        let m = parts.transition.nrows();
        let (e, r) = (&parts.error, &parts.reward);

        let (likelihood, outcomes, outcome_table) = match parts.mode {
            ObservationMode::GeneralFeedback => {
                let rho = parts.feedback.clone().expect("validated");
                let outcomes = (0..rho.ncols())
                    .map(|l| FeedbackOutcome {
                        id: l,
                        feedback: Feedback::Signal(l),
                    })
                    .collect();
                (rho, outcomes, None)
            }
            ObservationMode::ObservationOnly => {
                let outcomes = (0..m)
                    .map(|j| FeedbackOutcome {
                        id: j,
                        feedback: Feedback::Observed(j),
                    })
                    .collect();
                let table = DMatrix::from_fn(m, m, |_, j| j);
                (e.clone(), outcomes, Some(table))
            }
            ObservationMode::RewardOnly => {
                let letters = reward_letters(r.iter().copied());
                let table = DMatrix::from_fn(m, m, |i, j| letter_of(&letters, r[(i, j)]));
                let lik = reward_only_likelihood(e, &table, letters.len());
                let outcomes = letters
                    .iter()
                    .enumerate()
                    .map(|(id, &reward)| FeedbackOutcome {
                        id,
                        feedback: Feedback::Reward(reward),
                    })
                    .collect();
                (lik, outcomes, Some(table))
            }
            ObservationMode::ObservationAndReward => {
                let mut outcomes = Vec::new();
                let mut table = DMatrix::from_element(m, m, 0usize);
                for j in 0..m {
                    let letters = reward_letters((0..m).map(|i| r[(i, j)]));
                    let base = outcomes.len();
                    for (k, &reward) in letters.iter().enumerate() {
                        outcomes.push(FeedbackOutcome {
                            id: base + k,
                            feedback: Feedback::ObservedReward {
                                observed: j,
                                reward,
                            },
                        });
                    }
                    for i in 0..m {
                        table[(i, j)] = base + letter_of(&letters, r[(i, j)]);
                    }
                }
                let mut lik = DMatrix::zeros(m, outcomes.len());
                for i in 0..m {
                    for j in 0..m {
                        lik[(i, table[(i, j)])] = e[(i, j)];
                    }
                }
                (lik, outcomes, Some(table))
            }
        };

        let mean_reward = (0..m)
            .map(|i| (0..m).map(|j| e[(i, j)] * r[(i, j)]).sum())
            .collect();
        let reward_bound = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

        Ok(Self {
            parts,
            likelihood,
            outcomes,
            outcome_table,
            mean_reward,
            reward_bound,
        })
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    pub fn mode(&self) -> ObservationMode {
        self.parts.mode
    }

    /// Number of physical states `M`.
    pub fn states(&self) -> usize {
        self.parts.transition.nrows()
    }

    /// Size `L` of the feedback alphabet.
    pub fn outcome_count(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[FeedbackOutcome] {
        &self.outcomes
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.parts.transition
    }

    pub fn error(&self) -> &DMatrix<f64> {
        &self.parts.error
    }

    pub fn reward(&self) -> &DMatrix<f64> {
        &self.parts.reward
    }

    /// `P(F = l | S = i)` for every state and letter.
    pub fn likelihood(&self) -> &DMatrix<f64> {
        &self.likelihood
    }

    /// The constant `C` with `|R_omega| <= C`: the largest `|r_ij|`.
    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    /// Feedback letter produced when the true state is `state` and the
    /// observation is `observed`. `None` in general-feedback mode, where the
    /// letter is drawn separately from `rho`.
    pub fn outcome_for(&self, state: usize, observed: usize) -> Option<usize> {
        self.outcome_table.as_ref().map(|t| t[(state, observed)])
    }

    fn check_dim(&self, belief: &BeliefVector) -> Result<(), ModelError> {
        if belief.dim() != self.states() {
            return Err(ModelError::DimensionMismatch {
                expected: self.states(),
                found: belief.dim(),
            });
        }
        Ok(())
    }

    /// `B_0 omega = omega P`.
    pub fn passive_update(&self, belief: &BeliefVector) -> Result<BeliefVector, ModelError> {
        self.check_dim(belief)?;
        let p = &self.parts.transition;
        let m = self.states();
        let w = belief.as_slice();
        let next = (0..m)
            .map(|col| (0..m).map(|i| w[i] * p[(i, col)]).sum())
            .collect();
        Ok(BeliefVector::normalized(next))
    }

    /// Probability of each feedback letter after activation.
    pub fn feedback_probabilities(&self, belief: &BeliefVector) -> Result<Vec<f64>, ModelError> {
        self.check_dim(belief)?;
        let w = belief.as_slice();
        Ok((0..self.outcome_count())
            .map(|l| {
                (0..self.states())
                    .map(|i| self.likelihood[(i, l)] * w[i])
                    .sum()
            })
            .collect())
    }

    /// Bayes update `B_l omega` for feedback letter `outcome`, followed by one
    /// transition step.
    pub fn active_update(
        &self,
        belief: &BeliefVector,
        outcome: usize,
    ) -> Result<BeliefVector, ModelError> {
        self.check_dim(belief)?;
        if outcome >= self.outcome_count() {
            return Err(ModelError::UnknownOutcome {
                outcome,
                count: self.outcome_count(),
            });
        }
        let m = self.states();
        let prior = belief.as_slice();
        let weights: Vec<f64> = (0..m)
            .map(|i| self.likelihood[(i, outcome)] * prior[i])
            .collect();
        let mass: f64 = weights.iter().sum();
        if mass <= ZERO_MASS {
            return Err(ModelError::ZeroProbabilityOutcome { outcome, mass });
        }
        let p = &self.parts.transition;
        let next = (0..m)
            .map(|col| (0..m).map(|i| p[(i, col)] * weights[i]).sum::<f64>() / mass)
            .collect();
        Ok(BeliefVector::normalized(next))
    }

    /// `R_omega = sum_i omega_i sum_j eps_ij r_ij`.
    pub fn expected_active_reward(&self, belief: &BeliefVector) -> Result<f64, ModelError> {
        self.check_dim(belief)?;
        Ok(belief
            .as_slice()
            .iter()
            .zip(&self.mean_reward)
            .map(|(w, r)| w * r)
            .sum())
    }
}

/// `rho_ir = sum_j 1(r_ij = r) eps_ij`.
fn reward_only_likelihood(
    e: &DMatrix<f64>,
    table: &DMatrix<usize>,
    letters: usize,
) -> DMatrix<f64> {
    let m = e.nrows();
    let mut rho = DMatrix::zeros(m, letters);
    for i in 0..m {
        for j in 0..m {
            rho[(i, table[(i, j)])] += e[(i, j)];
        }
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(mode: ObservationMode) -> ArmModel {
        let p = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        let r = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        ArmModel::new(ModelParts::from_rows(&p, &p, &r, None, mode)).unwrap()
    }

    fn belief(v: &[f64]) -> BeliefVector {
        BeliefVector::new(v.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn example_model_is_valid() {
        let m = example(ObservationMode::ObservationOnly);
        assert_eq!(m.outcome_count(), 2);
        assert_eq!(m.reward_bound(), 1.0);
    }

    #[test]
    fn row_sum_violation_is_reported_with_location() {
        let parts = ModelParts::from_rows(
            &[vec![0.5, 0.6], vec![0.2, 0.8]],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[vec![0.0, 0.0], vec![0.0, 1.0]],
            None,
            ObservationMode::ObservationOnly,
        );
        let report = validate_model(&parts).unwrap_err();
        assert_eq!(report.issues, vec!["row 1 of P sums to 1.1".to_string()]);
    }

    #[test]
    fn negative_rho_entry_is_named() {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let parts = ModelParts::from_rows(
            &eye,
            &eye,
            &eye,
            Some(&[vec![1.2, -0.2], vec![0.5, 0.5]]),
            ObservationMode::GeneralFeedback,
        );
        let report = validate_model(&parts).unwrap_err();
        assert!(report
            .issues
            .iter()
            .any(|s| s.contains("entry (1, 2) of rho is -0.2")));
    }

    #[test]
    fn general_feedback_requires_rho() {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let parts = ModelParts::from_rows(&eye, &eye, &eye, None, ObservationMode::GeneralFeedback);
        assert!(validate_model(&parts).is_err());
    }

    #[test]
    fn every_violation_is_listed() {
        let parts = ModelParts::from_rows(
            &[vec![0.5, 0.6], vec![0.2, 0.8]],
            &[vec![0.5, 0.6], vec![-0.1, 1.1]],
            &[vec![0.0, f64::NAN], vec![0.0, 1.0]],
            None,
            ObservationMode::ObservationOnly,
        );
        let report = validate_model(&parts).unwrap_err();
        assert_eq!(report.issues.len(), 4, "{report}");
    }

    #[test]
    fn passive_update_examples() {
        let m = example(ObservationMode::ObservationOnly);
        assert_eq!(
            m.passive_update(&belief(&[1.0, 0.0])).unwrap().as_slice(),
            &[0.8, 0.2]
        );
        assert_eq!(
            m.passive_update(&belief(&[0.5, 0.5])).unwrap().as_slice(),
            &[0.5, 0.5]
        );
        let out = m.passive_update(&belief(&[0.6, 0.4])).unwrap();
        assert!(close(out.as_slice(), &[0.56, 0.44], 1e-15));
    }

    #[test]
    fn feedback_probabilities_examples() {
        let obs = example(ObservationMode::ObservationOnly);
        let q = obs.feedback_probabilities(&belief(&[0.6, 0.4])).unwrap();
        assert!(close(&q, &[0.56, 0.44], 1e-15));

        let rew = example(ObservationMode::RewardOnly);
        let q = rew.feedback_probabilities(&belief(&[0.6, 0.4])).unwrap();
        assert!(close(&q, &[0.68, 0.32], 1e-15));
    }

    #[test]
    fn general_feedback_on_known_state_returns_rho_row() {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let rho = vec![vec![0.1, 0.3, 0.6], vec![0.7, 0.2, 0.1]];
        let m = ArmModel::new(ModelParts::from_rows(
            &[vec![0.9, 0.1], vec![0.3, 0.7]],
            &eye,
            &eye,
            Some(&rho),
            ObservationMode::GeneralFeedback,
        ))
        .unwrap();
        let q = m.feedback_probabilities(&BeliefVector::unit(2, 1)).unwrap();
        assert_eq!(q, rho[1]);
    }

    #[test]
    fn active_update_example() {
        let m = example(ObservationMode::ObservationOnly);
        let out = m.active_update(&belief(&[0.6, 0.4]), 1).unwrap();
        assert!(close(out.as_slice(), &[0.16 / 0.44, 0.28 / 0.44], 1e-15));
        assert!(close(
            out.as_slice(),
            &[0.363_636_363_636_363_6, 0.636_363_636_363_636_4],
            1e-15
        ));
    }

    #[test]
    fn perfect_observation_returns_transition_row() {
        let eye = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let p = vec![
            vec![0.5, 0.3, 0.2],
            vec![0.1, 0.6, 0.3],
            vec![0.25, 0.25, 0.5],
        ];
        let m = ArmModel::new(ModelParts::from_rows(
            &p,
            &eye,
            &eye,
            None,
            ObservationMode::ObservationOnly,
        ))
        .unwrap();
        let prior = belief(&[0.2, 0.5, 0.3]);
        for (j, row) in p.iter().enumerate() {
            let out = m.active_update(&prior, j).unwrap();
            assert!(close(out.as_slice(), row, 1e-15));
        }
    }

    #[test]
    fn impossible_observation_is_rejected() {
        let m = ArmModel::new(ModelParts::from_rows(
            &[vec![0.8, 0.2], vec![0.2, 0.8]],
            &[vec![1.0, 0.0], vec![0.2, 0.8]],
            &[vec![0.0, 0.0], vec![0.0, 1.0]],
            None,
            ObservationMode::ObservationOnly,
        ))
        .unwrap();
        let err = m.active_update(&BeliefVector::unit(2, 0), 1).unwrap_err();
        assert!(matches!(
            err,
            ModelError::ZeroProbabilityOutcome { outcome: 1, .. }
        ));
    }

    #[test]
    fn expected_reward_examples() {
        let m = example(ObservationMode::ObservationOnly);
        let r = m.expected_active_reward(&belief(&[0.6, 0.4])).unwrap();
        assert!((r - 0.32).abs() < 1e-15);

        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let zero = ArmModel::new(ModelParts::from_rows(
            &eye,
            &eye,
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
            None,
            ObservationMode::ObservationOnly,
        ))
        .unwrap();
        assert_eq!(
            zero.expected_active_reward(&belief(&[0.3, 0.7])).unwrap(),
            0.0
        );

        let diag = ArmModel::new(ModelParts::from_rows(
            &eye,
            &eye,
            &[vec![2.5, 9.0], vec![9.0, -1.5]],
            None,
            ObservationMode::ObservationOnly,
        ))
        .unwrap();
        assert_eq!(
            diag.expected_active_reward(&BeliefVector::unit(2, 0))
                .unwrap(),
            2.5
        );
        assert_eq!(
            diag.expected_active_reward(&BeliefVector::unit(2, 1))
                .unwrap(),
            -1.5
        );
    }

    #[test]
    fn dimension_mismatch() {
        let m = example(ObservationMode::ObservationOnly);
        let err = m.passive_update(&BeliefVector::uniform(3)).unwrap_err();
        assert_eq!(
            err,
            ModelError::DimensionMismatch {
                expected: 2,
                found: 3
            }
        );
    }

    #[test]
    fn reward_alphabet_merges_close_values() {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = ArmModel::new(ModelParts::from_rows(
            &eye,
            &[vec![0.5, 0.5], vec![0.5, 0.5]],
            &[vec![1.0, 1.0 + 1e-12], vec![2.0, 1.0 - 1e-12]],
            None,
            ObservationMode::RewardOnly,
        ))
        .unwrap();
        assert_eq!(m.outcome_count(), 2);
        assert_eq!(m.outcome_for(0, 1), m.outcome_for(1, 1));
    }

    #[test]
    fn joint_alphabet_counts_feasible_pairs() {
        let m = example(ObservationMode::ObservationAndReward);
        // column 1 only ever pays 0; column 2 pays 0 or 1
        assert_eq!(m.outcome_count(), 3);
        let probs = m.feedback_probabilities(&belief(&[0.6, 0.4])).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bad_belief_is_rejected() {
        assert!(BeliefVector::new(vec![0.5, 0.6]).is_err());
        assert!(BeliefVector::new(vec![1.5, -0.5]).is_err());
        assert!(BeliefVector::new(vec![]).is_err());
    }
}
