//! Priority-policy performance measures and the adaptive-greedy index
//! algorithm.
//!
//! For a set `Ω` of states, the `Ω`-priority policy activates the arm exactly
//! when its state lies in `Ω`. Its discounted active time `T^Ω` and active
//! reward `R^Ω` solve
//!
//! ```text
//! T_i = 1(i ∈ Ω)     + β Σ_j p_ij T_j
//! R_i = R_i 1(i ∈ Ω) + β Σ_j p_ij R_j       (p = p1 on Ω, p0 off Ω)
//! ```
//!
//! The marginal work and reward of activating `i` while `Ω^c` has priority are
//!
//! ```text
//! A_i^Ω = 1   + β Σ_j (p1_ij - p0_ij) T_j^{Ω^c}
//! W_i^Ω = R_i + β Σ_j (p1_ij - p0_ij) R_j^{Ω^c}
//! ```
//!
//! and `W/A` is the subsidy that makes activation and passivity equally good
//! at `i`. Adaptive greedy starts from the full set, repeatedly extracts the
//! state with the largest candidate index, and updates the remaining
//! candidates with the ratio of successive marginal works.

use thiserror::Error;

use crate::linalg::{self, SolverError};
use crate::space::TransitionKernels;

/// Index decreases smaller than this count as ties in the monotonicity check.
pub const FAIL_TOL: f64 = 1e-12;

/// Marginal work below this magnitude cannot be divided by.
pub const MIN_MARGINAL_WORK: f64 = 1e-12;

/// Largest space for which adaptive greedy keeps a dense inverse by default.
/// Beyond this the sparse fixed-point update is faster.
pub const AG_DENSE_LIMIT: usize = 300;

/// Bound on `|γ - W/A|` enforced in verification mode.
pub const CROSS_IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PclError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("marginal work of state {state} is {value:e} at step {step}; instance is not PCL-indexable along this chain")]
    DivisionByNearZero {
        step: usize,
        state: usize,
        value: f64,
    },
    #[error("index recurrence drifted from W/A by {residual:e} at step {step} (state {state})")]
    CrossIdentity {
        step: usize,
        state: usize,
        residual: f64,
    },
    #[error("state {state} is outside a space of {len} states")]
    StateOutOfRange { state: usize, len: usize },
}

/// A subset of the states of a finite belief space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActiveSet {
    members: Vec<bool>,
}

impl ActiveSet {
    pub fn empty(len: usize) -> Self {
        Self {
            members: vec![false; len],
        }
    }

    pub fn full(len: usize) -> Self {
        Self {
            members: vec![true; len],
        }
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::empty(len);
        for i in indices {
            set.members[i] = true;
        }
        set
    }

    pub fn from_mask(members: Vec<bool>) -> Self {
        Self { members }
    }

    pub fn universe(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, state: usize) -> bool {
        self.members[state]
    }

    pub fn insert(&mut self, state: usize) {
        self.members[state] = true;
    }

    pub fn remove(&mut self, state: usize) {
        self.members[state] = false;
    }

    pub fn count(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    pub fn complement(&self) -> Self {
        Self {
            members: self.members.iter().map(|m| !m).collect(),
        }
    }

    pub fn is_subset(&self, other: &ActiveSet) -> bool {
        self.members
            .iter()
            .zip(&other.members)
            .all(|(&a, &b)| !a || b)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn mask(&self) -> &[bool] {
        &self.members
    }
}

/// Discounted active time `T^Ω` from every start state.
pub fn occupancy_active(
    kernels: &TransitionKernels,
    omega: &ActiveSet,
) -> Result<Vec<f64>, SolverError> {
    let rhs: Vec<f64> = omega
        .mask()
        .iter()
        .map(|&m| if m { 1.0 } else { 0.0 })
        .collect();
    linalg::solve_values(kernels, omega.mask(), &rhs)
}

/// Discounted active reward `R^Ω` from every start state.
pub fn reward_active(
    kernels: &TransitionKernels,
    omega: &ActiveSet,
) -> Result<Vec<f64>, SolverError> {
    let rhs: Vec<f64> = omega
        .mask()
        .iter()
        .zip(kernels.rewards())
        .map(|(&m, &r)| if m { r } else { 0.0 })
        .collect();
    linalg::solve_values(kernels, omega.mask(), &rhs)
}

/// `base_i + β Σ_j (p1_ij - p0_ij) values_j`.
fn marginal_from(kernels: &TransitionKernels, state: usize, base: f64, values: &[f64]) -> f64 {
    let active: f64 = kernels
        .active_row(state)
        .iter()
        .map(|&(j, p)| p * values[j])
        .sum();
    base + kernels.beta() * (active - values[kernels.passive_target(state)])
}

fn check_state(kernels: &TransitionKernels, state: usize) -> Result<(), PclError> {
    if state >= kernels.len() {
        return Err(PclError::StateOutOfRange {
            state,
            len: kernels.len(),
        });
    }
    Ok(())
}

/// Marginal work `A_i^Ω`.
pub fn marginal_work(
    kernels: &TransitionKernels,
    omega: &ActiveSet,
    state: usize,
) -> Result<f64, PclError> {
    check_state(kernels, state)?;
    let t = occupancy_active(kernels, &omega.complement())?;
    Ok(marginal_from(kernels, state, 1.0, &t))
}

/// Marginal reward `W_i^Ω`.
pub fn marginal_reward(
    kernels: &TransitionKernels,
    omega: &ActiveSet,
    state: usize,
) -> Result<f64, PclError> {
    check_state(kernels, state)?;
    let r = reward_active(kernels, &omega.complement())?;
    Ok(marginal_from(kernels, state, kernels.rewards()[state], &r))
}

/// `(A^Ω, W^Ω)` for every state.
pub fn marginals(
    kernels: &TransitionKernels,
    omega: &ActiveSet,
) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let complement = omega.complement();
    let t = occupancy_active(kernels, &complement)?;
    let r = reward_active(kernels, &complement)?;
    let work = (0..kernels.len())
        .map(|i| marginal_from(kernels, i, 1.0, &t))
        .collect();
    let reward = (0..kernels.len())
        .map(|i| marginal_from(kernels, i, kernels.rewards()[i], &r))
        .collect();
    Ok((work, reward))
}

/// Output of adaptive greedy.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexTable {
    /// Index of every state, in subsidy (reward) units.
    pub gamma: Vec<f64>,
    /// Extraction order, highest index first.
    pub order: Vec<usize>,
    /// Set when the extracted indices are not nonincreasing.
    pub fail: bool,
}

impl IndexTable {
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// Position of each state in the extraction order (0 = first).
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (k, &s) in self.order.iter().enumerate() {
            ranks[s] = k;
        }
        ranks
    }

    /// Recomputes the FAIL flag from `gamma` and `order`.
    pub fn is_monotone(&self) -> bool {
        self.order
            .windows(2)
            .all(|w| self.gamma[w[1]] <= self.gamma[w[0]] + FAIL_TOL)
    }
}

/// Diagnostics for one adaptive-greedy step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgStep {
    pub state: usize,
    pub gamma: f64,
    pub work: f64,
    pub reward: f64,
}

impl AgStep {
    /// `|γ - W/A|` for the extracted state.
    pub fn cross_residual(&self) -> f64 {
        (self.gamma - self.reward / self.work).abs()
    }
}

/// How adaptive greedy keeps `T` and `R` of the growing priority set up to
/// date.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ChainSolver {
    /// Dense inverse up to [`AG_DENSE_LIMIT`] states, fixed point above.
    #[default]
    Auto,
    /// Explicit inverse of `I - βP`, updated by Sherman-Morrison.
    Dense,
    /// Warm-started Gauss-Seidel after every extraction.
    FixedPoint,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AgOptions {
    /// Fail with [`PclError::CrossIdentity`] if any extracted index differs
    /// from `W/A` by more than [`CROSS_IDENTITY_TOL`].
    pub verify_cross_identity: bool,
    pub solver: ChainSolver,
}

pub fn adaptive_greedy(kernels: &TransitionKernels) -> Result<IndexTable, PclError> {
    adaptive_greedy_traced(kernels, AgOptions::default()).map(|(t, _)| t)
}

/// Adaptive greedy, also returning the marginal work and reward of each
/// extracted state at the moment of extraction.
pub fn adaptive_greedy_traced(
    kernels: &TransitionKernels,
    options: AgOptions,
) -> Result<(IndexTable, Vec<AgStep>), PclError> {
    run_chain(kernels, options, false)
}

/// Runs adaptive greedy only until the first index increase. Returns whether
/// the full chain is nonincreasing.
pub fn is_pcl_indexable(kernels: &TransitionKernels) -> Result<bool, PclError> {
    run_chain(kernels, AgOptions::default(), true).map(|(t, _)| !t.fail)
}

fn run_chain(
    kernels: &TransitionKernels,
    options: AgOptions,
    stop_on_increase: bool,
) -> Result<(IndexTable, Vec<AgStep>), PclError> {
    let n = kernels.len();
    let mut chain = PriorityChain::new(kernels, options.solver)?;
    let mut remaining = vec![true; n];
    let mut gamma_final = vec![0.0; n];
    let mut order = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);

    // Ω_1 is the full space: nothing has priority, A = 1 and γ = R.
    let mut work = vec![1.0; n];
    let mut gamma: Vec<f64> = kernels.rewards().to_vec();

    for k in 1..=n {
        if k > 1 {
            let prev = *order.last().expect("one state extracted per step");
            let prev_gamma = gamma_final[prev];
            chain.activate(prev)?;
            let t = chain.occupancy();
            for i in (0..n).filter(|&i| remaining[i]) {
                let a_new = marginal_from(kernels, i, 1.0, t);
                if a_new.abs() < MIN_MARGINAL_WORK {
                    return Err(PclError::DivisionByNearZero {
                        step: k,
                        state: i,
                        value: a_new,
                    });
                }
                gamma[i] += (work[i] / a_new - 1.0) * (gamma[i] - prev_gamma);
                work[i] = a_new;
            }
        }
        let mut best: Option<usize> = None;
        for i in (0..n).filter(|&i| remaining[i]) {
            if best.is_none_or(|b| gamma[i] > gamma[b]) {
                best = Some(i);
            }
        }
        let pick = best.expect("at least one state remains");
        if stop_on_increase {
            if let Some(&prev) = order.last() {
                if gamma[pick] > gamma_final[prev] + FAIL_TOL {
                    let table = IndexTable {
                        gamma: gamma_final,
                        order,
                        fail: true,
                    };
                    return Ok((table, steps));
                }
            }
        }
        remaining[pick] = false;
        gamma_final[pick] = gamma[pick];
        order.push(pick);

        let reward = marginal_from(kernels, pick, kernels.rewards()[pick], chain.rewards());
        let step = AgStep {
            state: pick,
            gamma: gamma[pick],
            work: work[pick],
            reward,
        };
        if options.verify_cross_identity && step.cross_residual() > CROSS_IDENTITY_TOL {
            return Err(PclError::CrossIdentity {
                step: k,
                state: pick,
                residual: step.cross_residual(),
            });
        }
        steps.push(step);
    }

    let mut table = IndexTable {
        gamma: gamma_final,
        order,
        fail: false,
    };
    table.fail = !table.is_monotone();
    Ok((table, steps))
}

/// `T^C` and `R^C` for a growing priority set `C`, updated one state at a
/// time.
///
/// With a dense solver the inverse of `I - β P_C` is kept explicitly
/// and updated by Sherman-Morrison when a row switches from passive to
/// active, followed by one step of iterative refinement. Otherwise both
/// vectors are re-solved by warm-started fixed-point iteration.
struct PriorityChain<'a> {
    kernels: &'a TransitionKernels,
    active: Vec<bool>,
    occupancy: Vec<f64>,
    rewards: Vec<f64>,
    inverse: Option<Vec<f64>>,
}

impl<'a> PriorityChain<'a> {
    fn new(kernels: &'a TransitionKernels, solver: ChainSolver) -> Result<Self, PclError> {
        let n = kernels.len();
        let dense = match solver {
            ChainSolver::Auto => n <= AG_DENSE_LIMIT,
            ChainSolver::Dense => true,
            ChainSolver::FixedPoint => false,
        };
        let inverse = if dense {
            let m = linalg::system_matrix(kernels, &vec![false; n], false);
            let inv = m.try_inverse().ok_or(SolverError::Singular)?;
            // row-major copy
            let mut flat = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    flat[i * n + j] = inv[(i, j)];
                }
            }
            Some(flat)
        } else {
            None
        };
        Ok(Self {
            kernels,
            active: vec![false; n],
            occupancy: vec![0.0; n],
            rewards: vec![0.0; n],
            inverse,
        })
    }

    fn occupancy(&self) -> &[f64] {
        &self.occupancy
    }

    fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    fn activate(&mut self, state: usize) -> Result<(), PclError> {
        self.active[state] = true;
        let n = self.kernels.len();
        let occ_rhs: Vec<f64> = self
            .active
            .iter()
            .map(|&a| if a { 1.0 } else { 0.0 })
            .collect();
        let rew_rhs: Vec<f64> = self
            .active
            .iter()
            .zip(self.kernels.rewards())
            .map(|(&a, &r)| if a { r } else { 0.0 })
            .collect();

        let Some(inv) = self.inverse.as_mut() else {
            self.occupancy = linalg::values_fixed_point(
                self.kernels,
                &self.active,
                &occ_rhs,
                Some(&self.occupancy),
            )?;
            self.rewards = linalg::values_fixed_point(
                self.kernels,
                &self.active,
                &rew_rhs,
                Some(&self.rewards),
            )?;
            return Ok(());
        };

        // Row `state` of I - βP changes by e_state δᵀ with
        // δ = β (p0_state - p1_state).
        let beta = self.kernels.beta();
        let mut delta: Vec<(usize, f64)> = self
            .kernels
            .active_row(state)
            .iter()
            .map(|&(j, p)| (j, -beta * p))
            .collect();
        delta.push((self.kernels.passive_target(state), beta));

        let column: Vec<f64> = (0..n).map(|i| inv[i * n + state]).collect();
        let mut row = vec![0.0; n];
        for &(j, d) in &delta {
            let src = &inv[j * n..(j + 1) * n];
            for (r, s) in row.iter_mut().zip(src) {
                *r += d * s;
            }
        }
        let denom = 1.0 + delta.iter().map(|&(j, d)| d * column[j]).sum::<f64>();
        if denom.abs() < f64::EPSILON {
            return Err(SolverError::Singular.into());
        }
        let dot = |v: &[f64]| delta.iter().map(|&(j, d)| d * v[j]).sum::<f64>();
        let occ_shift = (1.0 - dot(&self.occupancy)) / denom;
        let rew_shift = (self.kernels.rewards()[state] - dot(&self.rewards)) / denom;
        for i in 0..n {
            let scale = column[i] / denom;
            let dst = &mut inv[i * n..(i + 1) * n];
            for (g, r) in dst.iter_mut().zip(&row) {
                *g -= scale * r;
            }
            self.occupancy[i] += column[i] * occ_shift;
            self.rewards[i] += column[i] * rew_shift;
        }

        refine(
            self.kernels,
            &self.active,
            inv,
            &occ_rhs,
            &mut self.occupancy,
        );
        refine(self.kernels, &self.active, inv, &rew_rhs, &mut self.rewards);
        Ok(())
    }
}

/// One step of iterative refinement: `v += G (rhs - (I - βP) v)`.
fn refine(kernels: &TransitionKernels, active: &[bool], inv: &[f64], rhs: &[f64], v: &mut [f64]) {
    let n = v.len();
    let beta = kernels.beta();
    let residual: Vec<f64> = (0..n)
        .map(|i| {
            let next = if active[i] {
                kernels
                    .active_row(i)
                    .iter()
                    .map(|&(j, p)| p * v[j])
                    .sum::<f64>()
            } else {
                v[kernels.passive_target(i)]
            };
            rhs[i] - v[i] + beta * next
        })
        .collect();
    for i in 0..n {
        let g = &inv[i * n..(i + 1) * n];
        v[i] += g.iter().zip(&residual).map(|(a, b)| a * b).sum::<f64>();
    }
}
