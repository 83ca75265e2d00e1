//! Finite approximations of the reachable belief space.
//!
//! Starting from an initial belief, every update operator (passive first,
//! then each feedback letter in id order) is applied breadth-first for a
//! fixed number of levels. A candidate is stored only if it lies farther
//! than `epsilon` (Euclidean) from every belief already stored, including
//! ones stored earlier on the same level. Only beliefs stored on the previous
//! level are expanded. The stored order is therefore deterministic, and the
//! space for `T - 1` levels is a prefix of the space for `T` levels.
//!
//! Over that finite set, activation and passivity become ordinary Markov
//! kernels once every successor belief is projected onto its nearest stored
//! neighbour.

use thiserror::Error;

use crate::model::{
    squared_distance, ArmModel, BeliefVector, ModelError, STOCHASTIC_TOL, ZERO_MASS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tree size ((L+1)^(T+1) - 1) / L overflows u64 for L = {outcomes}, T = {steps}")]
    TreeCountOverflow { outcomes: u64, steps: u32 },
    #[error("invalid enumeration parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid kernels: {0}")]
    InvalidKernels(String),
}

/// Number of nodes in the full `T`-step belief tree with `L` feedback letters
/// when repeated beliefs are counted separately: `((L+1)^(T+1) - 1) / L`.
pub fn exact_tree_count(outcomes: u64, steps: u32) -> Result<u64, SpaceError> {
    if outcomes == 0 {
        return Err(SpaceError::InvalidParameter("L must be at least 1".into()));
    }
    let overflow = SpaceError::TreeCountOverflow { outcomes, steps };
    let branching = outcomes.checked_add(1).ok_or_else(|| overflow.clone())?;
    let power = steps
        .checked_add(1)
        .and_then(|e| branching.checked_pow(e))
        .ok_or(overflow)?;
    Ok((power - 1) / outcomes)
}

/// An ε-separated, ordered set of beliefs reachable within `steps` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxSpace {
    states: Vec<BeliefVector>,
    epsilon: f64,
    steps: u32,
    /// Cumulative number of stored states after each level (level 0 = origin).
    level_sizes: Vec<usize>,
}

impl ApproxSpace {
    /// Reassembles a space from stored parts, checking its invariants.
    pub fn from_parts(
        states: Vec<BeliefVector>,
        epsilon: f64,
        steps: u32,
        level_sizes: Vec<usize>,
    ) -> Result<Self, SpaceError> {
        let space = Self {
            states,
            epsilon,
            steps,
            level_sizes,
        };
        if space.states.is_empty() {
            return Err(SpaceError::InvalidParameter("space has no states".into()));
        }
        let dim = space.states[0].dim();
        if space.states.iter().any(|s| s.dim() != dim) {
            return Err(SpaceError::InvalidParameter(
                "beliefs have mixed dimensions".into(),
            ));
        }
        if space.level_sizes.last() != Some(&space.states.len()) {
            return Err(SpaceError::InvalidParameter(
                "level sizes do not end at the state count".into(),
            ));
        }
        Ok(space)
    }

    /// Index of the initial belief.
    pub const ORIGIN: usize = 0;

    pub fn states(&self) -> &[BeliefVector] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn level_sizes(&self) -> &[usize] {
        &self.level_sizes
    }

    pub fn origin(&self) -> &BeliefVector {
        &self.states[Self::ORIGIN]
    }

    /// Nearest stored state (Euclidean); ties go to the lowest index.
    pub fn project(&self, belief: &BeliefVector) -> usize {
        nearest(&self.states, belief.as_slice()).0
    }

    /// Nearest stored state and its distance.
    pub fn nearest(&self, belief: &BeliefVector) -> (usize, f64) {
        let (idx, d2) = nearest(&self.states, belief.as_slice());
        (idx, d2.sqrt())
    }
}

fn nearest(states: &[BeliefVector], point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (idx, s) in states.iter().enumerate() {
        let d2 = squared_distance(s.as_slice(), point);
        if d2 < best.1 {
            best = (idx, d2);
        }
    }
    best
}

fn is_far(states: &[BeliefVector], point: &[f64], eps2: f64) -> bool {
    states
        .iter()
        .all(|s| squared_distance(s.as_slice(), point) > eps2)
}

/// Successors of `belief` in operator order `B_0, B_1, ..., B_L`, skipping
/// letters with zero probability.
pub(crate) fn successors(
    model: &ArmModel,
    belief: &BeliefVector,
) -> Result<Vec<BeliefVector>, ModelError> {
    let mut out = Vec::with_capacity(model.outcome_count() + 1);
    out.push(model.passive_update(belief)?);
    let probs = model.feedback_probabilities(belief)?;
    for (l, q) in probs.into_iter().enumerate() {
        if q > ZERO_MASS {
            out.push(model.active_update(belief, l)?);
        }
    }
    Ok(out)
}

/// Breadth-first ε-pruned enumeration of the beliefs reachable from `origin`
/// within `steps` updates.
pub fn enumerate_approx(
    model: &ArmModel,
    origin: &BeliefVector,
    steps: u32,
    epsilon: f64,
) -> Result<ApproxSpace, SpaceError> {
    if steps < 1 {
        return Err(SpaceError::InvalidParameter(
            "steps must be at least 1".into(),
        ));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(SpaceError::InvalidParameter(
            "epsilon must be positive".into(),
        ));
    }
    if origin.dim() != model.states() {
        return Err(ModelError::DimensionMismatch {
            expected: model.states(),
            found: origin.dim(),
        }
        .into());
    }
    let eps2 = epsilon * epsilon;
    let mut states = vec![origin.clone()];
    let mut level_sizes = vec![1];
    let mut frontier = 0..1;
    for _ in 0..steps {
        let level_start = states.len();
        for idx in frontier.clone() {
            let parent = states[idx].clone();
            for candidate in successors(model, &parent)? {
                if is_far(&states, candidate.as_slice(), eps2) {
                    states.push(candidate);
                }
            }
        }
        frontier = level_start..states.len();
        level_sizes.push(states.len());
    }
    Ok(ApproxSpace {
        states,
        epsilon,
        steps,
        level_sizes,
    })
}

/// Largest distance from any candidate generated by an expanded state to its
/// nearest stored representative. At most `epsilon` for a space produced by
/// [`enumerate_approx`].
pub fn projection_residual(model: &ArmModel, space: &ApproxSpace) -> Result<f64, SpaceError> {
    let expanded = space.level_sizes[space.level_sizes.len() - 2];
    let mut worst = 0.0f64;
    for parent in &space.states[..expanded] {
        for candidate in successors(model, parent)? {
            worst = worst.max(space.nearest(&candidate).1);
        }
    }
    Ok(worst)
}

/// Active and passive Markov kernels over a finite belief space.
///
/// The passive kernel is deterministic and stored as one successor per state;
/// active rows are sparse `(column, probability)` lists sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernels {
    passive: Vec<usize>,
    active: Vec<Vec<(usize, f64)>>,
    rewards: Vec<f64>,
    beta: f64,
}

impl TransitionKernels {
    pub fn new(
        passive: Vec<usize>,
        active: Vec<Vec<(usize, f64)>>,
        rewards: Vec<f64>,
        beta: f64,
    ) -> Result<Self, SpaceError> {
        let n = passive.len();
        if n == 0 {
            return Err(SpaceError::InvalidKernels("no states".into()));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(SpaceError::InvalidKernels(format!(
                "discount factor {beta} is outside [0, 1)"
            )));
        }
        if active.len() != n || rewards.len() != n {
            return Err(SpaceError::InvalidKernels(format!(
                "{n} passive rows, {} active rows, {} rewards",
                active.len(),
                rewards.len()
            )));
        }
        if let Some(i) = passive.iter().position(|&j| j >= n) {
            return Err(SpaceError::InvalidKernels(format!(
                "passive row {i} points outside the space"
            )));
        }
        for (i, row) in active.iter().enumerate() {
            let sum: f64 = row.iter().map(|&(_, p)| p).sum();
            let bad_entry = row
                .iter()
                .any(|&(j, p)| j >= n || !p.is_finite() || p < 0.0);
            if bad_entry || (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(SpaceError::InvalidKernels(format!(
                    "active row {i} is not a probability vector (sum {sum})"
                )));
            }
        }
        if let Some(i) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(SpaceError::InvalidKernels(format!(
                "reward {i} is not finite"
            )));
        }
        Ok(Self {
            passive,
            active,
            rewards,
            beta,
        })
    }

    pub fn len(&self) -> usize {
        self.passive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passive.is_empty()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn passive_target(&self, state: usize) -> usize {
        self.passive[state]
    }

    pub fn passive_targets(&self) -> &[usize] {
        &self.passive
    }

    pub fn active_row(&self, state: usize) -> &[(usize, f64)] {
        &self.active[state]
    }

    pub fn active_rows(&self) -> &[Vec<(usize, f64)>] {
        &self.active
    }

    /// Dense passive matrix `p0`.
    pub fn passive_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        self.passive
            .iter()
            .map(|&j| {
                let mut row = vec![0.0; n];
                row[j] = 1.0;
                row
            })
            .collect()
    }

    /// Dense active matrix `p1`.
    pub fn active_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        self.active
            .iter()
            .map(|entries| {
                let mut row = vec![0.0; n];
                for &(j, p) in entries {
                    row[j] += p;
                }
                row
            })
            .collect()
    }

    /// Same kernels with every reward multiplied by `factor`.
    pub fn scaled_rewards(&self, factor: f64) -> Self {
        Self {
            rewards: self.rewards.iter().map(|r| r * factor).collect(),
            ..self.clone()
        }
    }

    pub fn min_reward(&self) -> f64 {
        self.rewards.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_reward(&self) -> f64 {
        self.rewards
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Projects every passive and active successor of each stored state back onto
/// the space.
pub fn build_kernels(
    space: &ApproxSpace,
    model: &ArmModel,
    beta: f64,
) -> Result<TransitionKernels, SpaceError> {
    let mut passive = Vec::with_capacity(space.len());
    let mut active = Vec::with_capacity(space.len());
    let mut rewards = Vec::with_capacity(space.len());
    for state in space.states() {
        passive.push(space.project(&model.passive_update(state)?));
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (l, q) in model.feedback_probabilities(state)?.into_iter().enumerate() {
            if q <= ZERO_MASS {
                continue;
            }
            let target = space.project(&model.active_update(state, l)?);
            match row.iter_mut().find(|(j, _)| *j == target) {
                Some(entry) => entry.1 += q,
                None => row.push((target, q)),
            }
        }
        row.sort_by_key(|&(j, _)| j);
        active.push(row);
        rewards.push(model.expected_active_reward(state)?);
    }
    TransitionKernels::new(passive, active, rewards, beta)
}
