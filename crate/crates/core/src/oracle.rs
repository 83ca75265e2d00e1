//! Independent checks on the index engine: subsidy value iteration,
//! bisection for Whittle indices, occupancy measures of priority policies,
//! and the conservation identities that tie them to marginal work and
//! reward.

use std::fmt;

use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{self, SolverError};
use crate::pcl::{self, ActiveSet, IndexTable, PclError};
use crate::space::TransitionKernels;

/// Passive wins when its value is within this margin of the active value.
pub const PASSIVE_MARGIN: f64 = 1e-10;
pub const DEFAULT_VI_TOL: f64 = 1e-10;
pub const DEFAULT_BISECTION_TOL: f64 = 1e-8;
pub const IDENTITY_TOL: f64 = 1e-8;
pub const CONSERVATION_TOL: f64 = 1e-10;
pub const AGREEMENT_TOL: f64 = 1e-6;
pub const GRID_POINTS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Pcl(#[from] PclError),
    #[error("passivity of state {state} is not monotone over [{lo}, {hi}]")]
    BracketFailure { state: usize, lo: f64, hi: f64 },
    #[error("state {state} is outside a space of {len} states")]
    StateOutOfRange { state: usize, len: usize },
}

/// Stationary policy of the single-arm problem with passivity subsidy
/// `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsidyPolicy {
    pub lambda: f64,
    pub passive: Vec<bool>,
}

impl SubsidyPolicy {
    pub fn passive_set(&self) -> ActiveSet {
        ActiveSet::from_mask(self.passive.clone())
    }

    pub fn active_set(&self) -> ActiveSet {
        self.passive_set().complement()
    }
}

fn q_values(kernels: &TransitionKernels, lambda: f64, v: &[f64], i: usize) -> (f64, f64) {
    let beta = kernels.beta();
    let passive = lambda + beta * v[kernels.passive_target(i)];
    let active = kernels.rewards()[i]
        + beta
            * kernels
                .active_row(i)
                .iter()
                .map(|&(j, p)| p * v[j])
                .sum::<f64>();
    (passive, active)
}

/// Bellman iteration `V <- max(λ + β p0 V, R + β p1 V)` from `V = 0`.
pub fn value_iteration(
    kernels: &TransitionKernels,
    lambda: f64,
    tol: f64,
) -> (Vec<f64>, SubsidyPolicy) {
    value_iteration_from(kernels, lambda, tol, &vec![0.0; kernels.len()])
}

/// Bellman iteration from a given starting vector.
///
/// Sweeps in place (Gauss-Seidel), which keeps the sup-norm contraction
/// modulus at `β`, and stops once the sweep changes no value by more than
/// `tol (1 - β) / (2β)`, so the result is within `tol / 2` of the fixed
/// point.
pub fn value_iteration_from(
    kernels: &TransitionKernels,
    lambda: f64,
    tol: f64,
    start: &[f64],
) -> (Vec<f64>, SubsidyPolicy) {
    let n = kernels.len();
    let beta = kernels.beta();
    let threshold = if beta == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - beta) / (2.0 * beta)
    };
    let mut v = start.to_vec();
    loop {
        let mut change = 0.0f64;
        for i in 0..n {
            let (qp, qa) = q_values(kernels, lambda, &v, i);
            let next = qp.max(qa);
            change = change.max((next - v[i]).abs());
            v[i] = next;
        }
        if change <= threshold {
            break;
        }
    }
    let passive = (0..n)
        .map(|i| {
            let (qp, qa) = q_values(kernels, lambda, &v, i);
            qp >= qa - PASSIVE_MARGIN
        })
        .collect();
    (v, SubsidyPolicy { lambda, passive })
}

/// Values of a fixed subsidy policy by a direct linear solve.
pub fn evaluate_subsidy_policy(
    kernels: &TransitionKernels,
    policy: &SubsidyPolicy,
) -> Result<Vec<f64>, SolverError> {
    let active: Vec<bool> = policy.passive.iter().map(|p| !p).collect();
    let rhs: Vec<f64> = policy
        .passive
        .iter()
        .zip(kernels.rewards())
        .map(|(&p, &r)| if p { policy.lambda } else { r })
        .collect();
    linalg::solve_values(kernels, &active, &rhs)
}

/// States where passivity is optimal under subsidy `lambda`.
pub fn passive_set(kernels: &TransitionKernels, lambda: f64) -> ActiveSet {
    value_iteration(kernels, lambda, DEFAULT_VI_TOL)
        .1
        .passive_set()
}

/// `[min R - 1, max R + 1]`.
pub fn subsidy_bracket(kernels: &TransitionKernels) -> (f64, f64) {
    (kernels.min_reward() - 1.0, kernels.max_reward() + 1.0)
}

/// Smallest subsidy that makes `state` passive, to within `tol`.
pub fn whittle_bisection(
    kernels: &TransitionKernels,
    state: usize,
    tol: f64,
) -> Result<f64, OracleError> {
    if state >= kernels.len() {
        return Err(OracleError::StateOutOfRange {
            state,
            len: kernels.len(),
        });
    }
    let (mut lo, mut hi) = subsidy_bracket(kernels);
    let failure = OracleError::BracketFailure { state, lo, hi };

    let (mut warm, low) = value_iteration(kernels, lo, DEFAULT_VI_TOL);
    if low.passive[state] {
        return Err(failure);
    }
    let (high_v, high) = value_iteration_from(kernels, hi, DEFAULT_VI_TOL, &warm);
    if !high.passive[state] {
        return Err(failure);
    }
    let mut warm_hi = high_v;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        // start from whichever end's values are closer in subsidy
        let start = if mid - lo <= hi - mid {
            &warm
        } else {
            &warm_hi
        };
        let (v, policy) = value_iteration_from(kernels, mid, DEFAULT_VI_TOL, start);
        if policy.passive[state] {
            hi = mid;
            warm_hi = v;
        } else {
            lo = mid;
            warm = v;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection index of every state, computed in parallel.
pub fn whittle_indices(kernels: &TransitionKernels, tol: f64) -> Result<Vec<f64>, OracleError> {
    (0..kernels.len())
        .into_par_iter()
        .map(|i| whittle_bisection(kernels, i, tol))
        .collect()
}

/// Occupancy measures of a priority policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvalResult {
    /// Discounted time spent active in each state.
    pub x1: Vec<f64>,
    /// Discounted time spent passive in each state.
    pub x0: Vec<f64>,
    pub total_active_time: f64,
    pub total_active_reward: f64,
}

impl PolicyEvalResult {
    /// `|Σ(x1 + x0) - 1/(1-β)|`.
    pub fn conservation_residual(&self, beta: f64) -> f64 {
        let total: f64 = self.x1.iter().chain(&self.x0).sum();
        (total - 1.0 / (1.0 - beta)).abs()
    }
}

/// Solves `x = e_initial + β P_πᵀ x` for the priority policy and splits the
/// occupancy by action.
pub fn policy_evaluate(
    kernels: &TransitionKernels,
    priority: &ActiveSet,
    initial: usize,
) -> Result<PolicyEvalResult, OracleError> {
    let n = kernels.len();
    if initial >= n {
        return Err(OracleError::StateOutOfRange {
            state: initial,
            len: n,
        });
    }
    let mut start = vec![0.0; n];
    start[initial] = 1.0;
    let x = linalg::solve_occupancy(kernels, priority.mask(), &start)?;
    let mut x1 = vec![0.0; n];
    let mut x0 = vec![0.0; n];
    for i in 0..n {
        let xi = x[i].max(0.0);
        if priority.contains(i) {
            x1[i] = xi;
        } else {
            x0[i] = xi;
        }
    }
    let total_active_time = x1.iter().sum();
    let total_active_reward = x1.iter().zip(kernels.rewards()).map(|(x, r)| x * r).sum();
    Ok(PolicyEvalResult {
        x1,
        x0,
        total_active_time,
        total_active_reward,
    })
}

/// Absolute residuals of the work and reward decomposition identities for
/// the priority policy `policy`, the set `omega`, and start state `initial`.
pub fn check_decomposition(
    kernels: &TransitionKernels,
    omega: &ActiveSet,
    policy: &ActiveSet,
    initial: usize,
) -> Result<(f64, f64), OracleError> {
    let eval = policy_evaluate(kernels, policy, initial)?;
    let t_pi = pcl::occupancy_active(kernels, policy)?[initial];
    let r_pi = pcl::reward_active(kernels, policy)?[initial];
    let complement = omega.complement();
    let t_c = pcl::occupancy_active(kernels, &complement)?[initial];
    let r_c = pcl::reward_active(kernels, &complement)?[initial];
    let (work, reward) = pcl::marginals(kernels, omega)?;

    let mut lhs_t = t_pi;
    let mut rhs_t = t_c;
    let mut lhs_r = r_pi;
    let mut rhs_r = r_c;
    for i in 0..kernels.len() {
        if omega.contains(i) {
            rhs_t += work[i] * eval.x1[i];
            rhs_r += reward[i] * eval.x1[i];
        } else {
            lhs_t += work[i] * eval.x0[i];
            lhs_r += reward[i] * eval.x0[i];
        }
    }
    Ok(((lhs_t - rhs_t).abs(), (lhs_r - rhs_r).abs()))
}

/// Largest residual of
/// `(A_j^{Ω_k} - A_j^{Ω_k∖π_k}) W_π/A_π = W_j^{Ω_k} - W_j^{Ω_k∖π_k}`
/// over every step `k` of the extraction chain in `table` and every state
/// `j`, with all marginals recomputed by dense solves.
pub fn check_aw_connection(
    kernels: &TransitionKernels,
    table: &IndexTable,
) -> Result<f64, OracleError> {
    let n = kernels.len();
    let mut omega = ActiveSet::full(n);
    let (mut work, mut reward) = pcl::marginals(kernels, &omega)?;
    let mut worst = 0.0f64;
    for &pick in &table.order[..n.saturating_sub(1)] {
        let ratio = reward[pick] / work[pick];
        omega.remove(pick);
        let (next_work, next_reward) = pcl::marginals(kernels, &omega)?;
        for j in 0..n {
            let lhs = (work[j] - next_work[j]) * ratio;
            let rhs = reward[j] - next_reward[j];
            worst = worst.max((lhs - rhs).abs());
        }
        work = next_work;
        reward = next_reward;
    }
    Ok(worst)
}

/// Evenly spaced subsidies covering the bisection bracket.
pub fn subsidy_grid(kernels: &TransitionKernels, points: usize) -> Vec<f64> {
    let (lo, hi) = subsidy_bracket(kernels);
    if points < 2 {
        return vec![lo, hi];
    }
    (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect()
}

/// True iff the passive set grows along `grid`, starting empty and ending
/// full.
pub fn check_indexability_monotone(kernels: &TransitionKernels, grid: &[f64]) -> bool {
    let n = kernels.len();
    let mut warm = vec![0.0; n];
    let mut previous: Option<ActiveSet> = None;
    for &lambda in grid {
        let (v, policy) = value_iteration_from(kernels, lambda, DEFAULT_VI_TOL, &warm);
        let set = policy.passive_set();
        if let Some(prev) = &previous {
            if !prev.is_subset(&set) {
                return false;
            }
        } else if !set.is_empty() {
            return false;
        }
        previous = Some(set);
        warm = v;
    }
    previous.is_none_or(|last| last.count() == n)
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            value: if pass { 0.0 } else { 1.0 },
            threshold: 0.0,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    /// Checks not run, with the reason.
    pub skipped: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.skipped {
            writeln!(f, "# skipped {s}")?;
        }
        writeln!(f, "check,value,threshold,status")?;
        for c in &self.checks {
            let status = if c.pass { "pass" } else { "fail" };
            writeln!(f, "{},{:e},{:e},{}", c.name, c.value, c.threshold, status)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Random (Ω, policy, start) triples for the decomposition identities.
    pub decomposition_samples: usize,
    pub seed: u64,
    /// Skip the checks that need a dense solve per state (A/W connection
    /// along the chain, per-state bisection) above this many states.
    pub dense_limit: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            decomposition_samples: 50,
            seed: 0,
            dense_limit: 300,
        }
    }
}

/// Runs every oracle check on one arm's kernels.
pub fn verify(
    kernels: &TransitionKernels,
    options: VerifyOptions,
) -> Result<VerificationReport, OracleError> {
    let n = kernels.len();
    let beta = kernels.beta();
    let mut report = VerificationReport::default();

    let (table, steps) = pcl::adaptive_greedy_traced(kernels, pcl::AgOptions::default())?;
    let cross = steps
        .iter()
        .map(pcl::AgStep::cross_residual)
        .fold(0.0, f64::max);
    report.checks.push(Check::at_most(
        "index_equals_w_over_a",
        cross,
        pcl::CROSS_IDENTITY_TOL,
    ));
    report
        .checks
        .push(Check::flag("nonincreasing_indices", !table.fail));
    let dense = n <= options.dense_limit;
    if dense {
        report.checks.push(Check::at_most(
            "aw_connection",
            check_aw_connection(kernels, &table)?,
            IDENTITY_TOL,
        ));
    } else {
        report.skipped.push(format!(
            "aw_connection: {n} states exceeds {}",
            options.dense_limit
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut worst_t = 0.0f64;
    let mut worst_r = 0.0f64;
    let mut worst_time = 0.0f64;
    for _ in 0..options.decomposition_samples {
        let omega = random_set(&mut rng, n);
        let policy = random_set(&mut rng, n);
        let initial = (0..n).choose(&mut rng).unwrap_or(0);
        let (rt, rr) = check_decomposition(kernels, &omega, &policy, initial)?;
        worst_t = worst_t.max(rt);
        worst_r = worst_r.max(rr);
        let eval = policy_evaluate(kernels, &policy, initial)?;
        worst_time = worst_time.max(eval.conservation_residual(beta));
    }
    report
        .checks
        .push(Check::at_most("decomposition_work", worst_t, IDENTITY_TOL));
    report.checks.push(Check::at_most(
        "decomposition_reward",
        worst_r,
        IDENTITY_TOL,
    ));
    report.checks.push(Check::at_most(
        "time_conservation",
        worst_time,
        CONSERVATION_TOL,
    ));

    report.checks.push(Check::flag(
        "passive_sets_nested",
        check_indexability_monotone(kernels, &subsidy_grid(kernels, GRID_POINTS)),
    ));
    if table.fail {
        report
            .skipped
            .push("bisection_agreement: indices are not monotone".into());
    } else if !dense {
        report.skipped.push(format!(
            "bisection_agreement: {n} states exceeds {}",
            options.dense_limit
        ));
    } else {
        let bisected = whittle_indices(kernels, DEFAULT_BISECTION_TOL)?;
        let gap = bisected
            .iter()
            .zip(&table.gamma)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        report
            .checks
            .push(Check::at_most("bisection_agreement", gap, AGREEMENT_TOL));
    }
    Ok(report)
}

fn random_set(rng: &mut impl Rng, n: usize) -> ActiveSet {
    ActiveSet::from_mask((0..n).map(|_| rng.random_bool(0.5)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArmModel, BeliefVector, ModelParts, ObservationMode};
    use crate::space::{build_kernels, enumerate_approx};

    fn kernels(
        passive: Vec<usize>,
        active: Vec<Vec<(usize, f64)>>,
        rewards: Vec<f64>,
    ) -> TransitionKernels {
        TransitionKernels::new(passive, active, rewards, 0.9).unwrap()
    }

    fn small() -> TransitionKernels {
        let p = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        let r = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        let model = ArmModel::new(ModelParts::from_rows(
            &p,
            &p,
            &r,
            None,
            ObservationMode::ObservationOnly,
        ))
        .unwrap();
        let origin = BeliefVector::new(vec![0.6, 0.4]).unwrap();
        let space = enumerate_approx(&model, &origin, 3, 1e-3).unwrap();
        build_kernels(&space, &model, 0.9).unwrap()
    }

    #[test]
    fn subsidy_extremes() {
        let k = small();
        let (v, policy) = value_iteration(&k, 2.0, DEFAULT_VI_TOL);
        assert!(policy.passive.iter().all(|&p| p));
        for x in v {
            assert!((x - 20.0).abs() < 1e-9);
        }
        let (_, policy) = value_iteration(&k, -0.5, DEFAULT_VI_TOL);
        assert!(policy.passive.iter().all(|&p| !p));
    }

    #[test]
    fn single_state_index_is_its_reward() {
        let k = kernels(vec![0], vec![vec![(0, 1.0)]], vec![0.7]);
        let index = whittle_bisection(&k, 0, 1e-9).unwrap();
        assert!((index - 0.7).abs() < 1e-8);
    }

    #[test]
    fn bisection_matches_adaptive_greedy() {
        let k = small();
        let table = pcl::adaptive_greedy(&k).unwrap();
        assert!(!table.fail);
        let indices = whittle_indices(&k, DEFAULT_BISECTION_TOL).unwrap();
        for (a, b) in indices.iter().zip(&table.gamma) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn full_and_empty_priority() {
        let k = small();
        let n = k.len();
        let full = policy_evaluate(&k, &ActiveSet::full(n), 1).unwrap();
        assert!((full.total_active_time - 10.0).abs() < 1e-10);
        assert!(full.x0.iter().all(|&x| x == 0.0));
        let none = policy_evaluate(&k, &ActiveSet::empty(n), 1).unwrap();
        assert!((none.x0.iter().sum::<f64>() - 10.0).abs() < 1e-10);
        assert_eq!(none.total_active_time, 0.0);
    }

    #[test]
    fn decomposition_on_small_kernel() {
        let k = kernels(
            vec![1, 2, 0],
            vec![
                vec![(0, 0.2), (2, 0.8)],
                vec![(0, 0.5), (1, 0.5)],
                vec![(1, 0.3), (2, 0.7)],
            ],
            vec![0.4, 1.1, 0.2],
        );
        for mask in 0..8u32 {
            let omega = ActiveSet::from_mask((0..3).map(|b| mask >> b & 1 == 1).collect());
            for pmask in 0..8u32 {
                let policy = ActiveSet::from_mask((0..3).map(|b| pmask >> b & 1 == 1).collect());
                let (rt, rr) = check_decomposition(&k, &omega, &policy, 2).unwrap();
                assert!(rt < 1e-10 && rr < 1e-10);
            }
        }
    }

    #[test]
    fn grid_extremes_only() {
        let k = small();
        assert!(check_indexability_monotone(&k, &subsidy_grid(&k, 2)));
        assert!(check_indexability_monotone(
            &k,
            &subsidy_grid(&k, GRID_POINTS)
        ));
    }

    #[test]
    fn report_format() {
        let report = verify(&small(), VerifyOptions::default()).unwrap();
        assert!(report.passed(), "{report}");
        let text = report.to_string();
        assert!(text.starts_with("check,value,threshold,status\n"));
        assert!(text.contains("bisection_agreement"));
    }
}
