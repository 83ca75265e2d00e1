//! Multi-arm Monte Carlo simulation of index policies.
//!
//! Every arm owns a ChaCha stream keyed by `(master_seed, episode)` and
//! selected by the arm's position, and consumes the same number of uniforms
//! per slot whatever action it receives. Two policies run on the same
//! episode therefore see the same true-state paths and observation noise
//! (common random numbers), and a trace never depends on scheduling.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArmModel, BeliefVector, ModelError, ObservationMode};
use crate::pcl::{self, IndexTable, PclError};
use crate::space::{self, ApproxSpace, SpaceError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Pcl(#[from] PclError),
    #[error("{0}")]
    InvalidConfig(String),
    #[error("unknown policy {0:?} (expected whittle, myopic or random)")]
    UnknownPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Whittle,
    Myopic,
    Random,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Whittle => "whittle",
            Self::Myopic => "myopic",
            Self::Random => "random",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "whittle" => Ok(Self::Whittle),
            "myopic" => Ok(Self::Myopic),
            "random" => Ok(Self::Random),
            other => Err(SimError::UnknownPolicy(other.to_string())),
        }
    }
}

/// One arm with its belief space and index table, plus lookup tables for
/// simulating on stored states.
#[derive(Debug, Clone)]
pub struct ArmSetup {
    pub model: ArmModel,
    pub initial: BeliefVector,
    pub space: ApproxSpace,
    pub table: IndexTable,
    expected_reward: Vec<f64>,
    passive_next: Vec<usize>,
    /// `active_next[s][l]`: stored state reached from `s` on letter `l`.
    active_next: Vec<Vec<usize>>,
}

impl ArmSetup {
    /// Enumerates the approximate space, builds kernels and runs adaptive
    /// greedy.
    pub fn build(
        model: ArmModel,
        initial: BeliefVector,
        steps: u32,
        epsilon: f64,
        beta: f64,
    ) -> Result<Self, SimError> {
        let space = space::enumerate_approx(&model, &initial, steps, epsilon)?;
        let kernels = space::build_kernels(&space, &model, beta)?;
        let table = pcl::adaptive_greedy(&kernels)?;
        Self::from_parts(model, initial, space, table)
    }

    pub fn from_parts(
        model: ArmModel,
        initial: BeliefVector,
        space: ApproxSpace,
        table: IndexTable,
    ) -> Result<Self, SimError> {
        if table.len() != space.len() {
            return Err(SimError::InvalidConfig(format!(
                "index table has {} entries for a space of {} states",
                table.len(),
                space.len()
            )));
        }
        let mut expected_reward = Vec::with_capacity(space.len());
        let mut passive_next = Vec::with_capacity(space.len());
        let mut active_next = Vec::with_capacity(space.len());
        for belief in space.states() {
            expected_reward.push(model.expected_active_reward(belief)?);
            let passive = space.project(&model.passive_update(belief)?);
            passive_next.push(passive);
            let row = (0..model.outcome_count())
                .map(|l| match model.active_update(belief, l) {
                    Ok(next) => Ok(space.project(&next)),
                    Err(ModelError::ZeroProbabilityOutcome { .. }) => Ok(passive),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>, _>>()?;
            active_next.push(row);
        }
        Ok(Self {
            model,
            initial,
            space,
            table,
            expected_reward,
            passive_next,
            active_next,
        })
    }
}

/// A multi-arm system and the simulation protocol.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub arms: Vec<ArmSetup>,
    pub k: usize,
    pub horizon: usize,
    pub episodes: usize,
    pub beta: f64,
    pub master_seed: u64,
    /// Track exact beliefs and interpolate indices between stored states
    /// instead of snapping to the nearest stored state.
    pub interpolate: bool,
}

impl SystemConfig {
    pub fn new(
        arms: Vec<ArmSetup>,
        k: usize,
        horizon: usize,
        episodes: usize,
        beta: f64,
        master_seed: u64,
    ) -> Result<Self, SimError> {
        let config = Self {
            arms,
            k,
            horizon,
            episodes,
            beta,
            master_seed,
            interpolate: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.arms.len();
        if n == 0 {
            return Err(SimError::InvalidConfig(
                "at least one arm is required".into(),
            ));
        }
        if self.k < 1 || self.k > n {
            return Err(SimError::InvalidConfig(format!(
                "k must be between 1 and the number of arms ({n}), got {}",
                self.k
            )));
        }
        if self.horizon < 1 {
            return Err(SimError::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.episodes < 1 {
            return Err(SimError::InvalidConfig(
                "episodes must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(SimError::InvalidConfig(format!(
                "beta must lie in [0, 1), got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Indices of the `k` largest scores, largest first; ties go to the lower
/// index.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// The `k` arms with the largest expected immediate reward.
pub fn myopic_action(
    beliefs: &[BeliefVector],
    models: &[&ArmModel],
    k: usize,
) -> Result<Vec<usize>, ModelError> {
    let scores = beliefs
        .iter()
        .zip(models)
        .map(|(b, m)| m.expected_active_reward(b))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(top_k(&scores, k))
}

/// The `k` arms whose nearest stored states carry the largest indices.
pub fn whittle_action(
    beliefs: &[BeliefVector],
    spaces: &[&ApproxSpace],
    tables: &[&IndexTable],
    k: usize,
) -> Vec<usize> {
    let scores: Vec<f64> = beliefs
        .iter()
        .zip(spaces.iter().zip(tables))
        .map(|(b, (s, t))| t.gamma[s.project(b)])
        .collect();
    top_k(&scores, k)
}

/// Index at an arbitrary belief, weighting the `dim + 1` nearest stored
/// states by inverse distance.
pub fn interpolated_index(space: &ApproxSpace, table: &IndexTable, belief: &BeliefVector) -> f64 {
    let mut near: Vec<(f64, usize)> = space
        .states()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.distance(belief), i))
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    near.truncate(space.dim() + 1);
    if near[0].0 < 1e-15 {
        return table.gamma[near[0].1];
    }
    let (num, den) = near.iter().fold((0.0, 0.0), |(n, d), &(dist, i)| {
        (n + table.gamma[i] / dist, d + 1.0 / dist)
    });
    num / den
}

/// Everything that happened in one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    /// Arms activated in each slot, in selection order.
    pub chosen: Vec<Vec<usize>>,
    /// True state of every arm at the start of each slot.
    pub states: Vec<Vec<usize>>,
    /// Reward realized by every arm in each slot (zero when passive).
    pub rewards: Vec<Vec<f64>>,
    pub total: f64,
    pub discounted: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn episode_rng(master_seed: u64, episode: u64, stream: u64) -> ChaCha8Rng {
    let key = splitmix64(master_seed ^ splitmix64(episode));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}

const POLICY_STREAM: u64 = u64::MAX;

fn sample(probs: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (j, p) in probs.enumerate() {
        if p > 0.0 {
            acc += p;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    last
}

enum Belief {
    Stored(usize),
    Exact(BeliefVector),
}

struct ArmState<'a> {
    setup: &'a ArmSetup,
    rng: ChaCha8Rng,
    state: usize,
    belief: Belief,
}

impl ArmState<'_> {
    fn score(&self, policy: PolicyKind) -> f64 {
        let s = self.setup;
        match (&self.belief, policy) {
            (Belief::Stored(i), PolicyKind::Whittle) => s.table.gamma[*i],
            (Belief::Stored(i), _) => s.expected_reward[*i],
            (Belief::Exact(b), PolicyKind::Whittle) => interpolated_index(&s.space, &s.table, b),
            (Belief::Exact(b), _) => s
                .model
                .expected_active_reward(b)
                .expect("belief dimension checked at setup"),
        }
    }

    /// Advances one slot and returns the realized reward.
    fn step(&mut self, active: bool) -> f64 {
        let model = &self.setup.model;
        let m = model.states();
        let u_transition: f64 = self.rng.random();
        let u_observation: f64 = self.rng.random();
        let u_signal: f64 = self.rng.random();
        let s = self.state;

        let mut reward = 0.0;
        let outcome = active.then(|| {
            let observed = sample((0..m).map(|j| model.error()[(s, j)]), u_observation);
            reward = model.reward()[(s, observed)];
            match model.mode() {
                ObservationMode::GeneralFeedback => {
                    let lik = model.likelihood();
                    sample((0..lik.ncols()).map(|l| lik[(s, l)]), u_signal)
                }
                _ => model
                    .outcome_for(s, observed)
                    .expect("table exists outside general mode"),
            }
        });

        self.belief = match (&self.belief, outcome) {
            (Belief::Stored(i), None) => Belief::Stored(self.setup.passive_next[*i]),
            (Belief::Stored(i), Some(l)) => Belief::Stored(self.setup.active_next[*i][l]),
            (Belief::Exact(b), outcome) => {
                let predicted = || model.passive_update(b).expect("dimension checked");
                let next = match outcome {
                    None => predicted(),
                    Some(l) => model.active_update(b, l).unwrap_or_else(|_| predicted()),
                };
                Belief::Exact(next)
            }
        };
        self.state = sample((0..m).map(|j| model.transition()[(s, j)]), u_transition);
        reward
    }
}

fn run_episode(
    config: &SystemConfig,
    policy: PolicyKind,
    episode: u64,
    mut record: Option<&mut EpisodeTrace>,
) -> Vec<f64> {
    let mut arms: Vec<ArmState> = config
        .arms
        .iter()
        .enumerate()
        .map(|(n, setup)| {
            let mut rng = episode_rng(config.master_seed, episode, n as u64);
            let u: f64 = rng.random();
            let state = sample(setup.initial.as_slice().iter().copied(), u);
            let belief = if config.interpolate {
                Belief::Exact(setup.initial.clone())
            } else {
                Belief::Stored(space::ApproxSpace::ORIGIN)
            };
            ArmState {
                setup,
                rng,
                state,
                belief,
            }
        })
        .collect();
    let mut policy_rng = episode_rng(config.master_seed, episode, POLICY_STREAM);
    let n = arms.len();
    let mut per_slot = Vec::with_capacity(config.horizon);
    let mut active = vec![false; n];

    for _ in 0..config.horizon {
        let chosen = match policy {
            PolicyKind::Random => rand::seq::index::sample(&mut policy_rng, n, config.k).into_vec(),
            _ => {
                let scores: Vec<f64> = arms.iter().map(|a| a.score(policy)).collect();
                top_k(&scores, config.k)
            }
        };
        active.iter_mut().for_each(|a| *a = false);
        for &c in &chosen {
            active[c] = true;
        }
        let states: Vec<usize> = arms.iter().map(|a| a.state).collect();
        let rewards: Vec<f64> = arms
            .iter_mut()
            .zip(&active)
            .map(|(arm, &on)| arm.step(on))
            .collect();
        per_slot.push(rewards.iter().sum());
        if let Some(trace) = record.as_deref_mut() {
            trace.chosen.push(chosen);
            trace.states.push(states);
            trace.rewards.push(rewards);
        }
    }
    per_slot
}

fn discounted_sum(per_slot: &[f64], beta: f64) -> f64 {
    let mut weight = 1.0;
    let mut total = 0.0;
    for r in per_slot {
        total += weight * r;
        weight *= beta;
    }
    total
}

/// Runs one episode and records the full trace.
pub fn simulate_episode(config: &SystemConfig, policy: PolicyKind, episode: u64) -> EpisodeTrace {
    let mut trace = EpisodeTrace {
        chosen: Vec::with_capacity(config.horizon),
        states: Vec::with_capacity(config.horizon),
        rewards: Vec::with_capacity(config.horizon),
        total: 0.0,
        discounted: 0.0,
    };
    let per_slot = run_episode(config, policy, episode, Some(&mut trace));
    trace.total = per_slot.iter().sum();
    trace.discounted = discounted_sum(&per_slot, config.beta);
    trace
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub total: f64,
    pub discounted: f64,
    pub mean_per_slot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMetrics {
    pub policy: PolicyKind,
    /// Mean over episodes of the undiscounted reward per slot.
    pub mean: f64,
    /// Sample standard deviation of the per-episode reward per slot.
    pub std: f64,
    /// Mean reward in each slot.
    pub curve: Vec<f64>,
    pub episodes: Vec<EpisodeSummary>,
}

impl PolicyMetrics {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.episodes.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub policies: Vec<PolicyMetrics>,
}

impl Metrics {
    pub fn get(&self, policy: PolicyKind) -> Option<&PolicyMetrics> {
        self.policies.iter().find(|p| p.policy == policy)
    }

    /// Percentage gain of `a` over `b`.
    pub fn gain(&self, a: PolicyKind, b: PolicyKind) -> Option<f64> {
        Some(gain_percent(self.get(a)?.mean, self.get(b)?.mean))
    }
}

pub fn gain_percent(candidate: f64, baseline: f64) -> f64 {
    (candidate - baseline) / baseline * 100.0
}

/// Runs `config.episodes` episodes for each policy. Episode `e` uses the
/// same random streams under every policy.
pub fn run_monte_carlo(config: &SystemConfig, policies: &[PolicyKind]) -> Metrics {
    let horizon = config.horizon;
    let metrics = policies
        .iter()
        .map(|&policy| {
            let runs: Vec<Vec<f64>> = (0..config.episodes as u64)
                .into_par_iter()
                .map(|e| run_episode(config, policy, e, None))
                .collect();
            let mut curve = vec![0.0; horizon];
            let mut episodes = Vec::with_capacity(runs.len());
            for (e, per_slot) in runs.iter().enumerate() {
                for (c, r) in curve.iter_mut().zip(per_slot) {
                    *c += r;
                }
                let total: f64 = per_slot.iter().sum();
                episodes.push(EpisodeSummary {
                    episode: e as u64,
                    total,
                    discounted: discounted_sum(per_slot, config.beta),
                    mean_per_slot: total / horizon as f64,
                });
            }
            let count = runs.len() as f64;
            curve.iter_mut().for_each(|c| *c /= count);
            let mean = episodes.iter().map(|e| e.mean_per_slot).sum::<f64>() / count;
            let var = if runs.len() > 1 {
                episodes
                    .iter()
                    .map(|e| (e.mean_per_slot - mean).powi(2))
                    .sum::<f64>()
                    / (count - 1.0)
            } else {
                0.0
            };
            PolicyMetrics {
                policy,
                mean,
                std: var.sqrt(),
                curve,
                episodes,
            }
        })
        .collect();
    Metrics { policies: metrics }
}

/// `policy,episode,total_reward,mean_per_slot,discounted_reward`
pub fn write_episodes_csv(metrics: &Metrics, mut out: impl Write) -> io::Result<()> {
    writeln!(
        out,
        "policy,episode,total_reward,mean_per_slot,discounted_reward"
    )?;
    for p in &metrics.policies {
        for e in &p.episodes {
            writeln!(
                out,
                "{},{},{},{},{}",
                p.policy, e.episode, e.total, e.mean_per_slot, e.discounted
            )?;
        }
    }
    Ok(())
}

/// `slot,policy,mean_reward` with slots counted from 1.
pub fn write_curve_csv(metrics: &Metrics, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "slot,policy,mean_reward")?;
    for p in &metrics.policies {
        for (t, r) in p.curve.iter().enumerate() {
            writeln!(out, "{},{},{}", t + 1, p.policy, r)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParts;

    fn arm(p: &[Vec<f64>], e: &[Vec<f64>], r: &[Vec<f64>], initial: Vec<f64>) -> ArmSetup {
        let model = ArmModel::new(ModelParts::from_rows(
            p,
            e,
            r,
            None,
            ObservationMode::ObservationOnly,
        ))
        .unwrap();
        ArmSetup::build(model, BeliefVector::new(initial).unwrap(), 4, 1e-3, 0.95).unwrap()
    }

    fn example_arm() -> ArmSetup {
        let p = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        let r = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        arm(&p, &p, &r, vec![0.6, 0.4])
    }

    #[test]
    fn top_k_ties_and_order() {
        assert_eq!(top_k(&[0.32, 0.1, 0.5], 2), vec![2, 0]);
        assert_eq!(top_k(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
    }

    #[test]
    fn myopic_examples() {
        let a = example_arm();
        let beliefs = vec![a.initial.clone(), a.initial.clone()];
        let models = vec![&a.model, &a.model];
        assert_eq!(myopic_action(&beliefs, &models, 1).unwrap(), vec![0]);
    }

    #[test]
    fn constant_reward_single_arm() {
        let one = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let p = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
        let a = arm(&p, &p, &one, vec![0.5, 0.5]);
        let config = SystemConfig::new(vec![a], 1, 25, 8, 0.95, 3).unwrap();
        let metrics = run_monte_carlo(&config, &[PolicyKind::Whittle, PolicyKind::Myopic]);
        for m in &metrics.policies {
            assert_eq!(m.mean, 1.0);
            assert_eq!(m.std, 0.0);
            assert!(m.episodes.iter().all(|e| e.total == 25.0));
        }
    }

    #[test]
    fn frozen_perfect_observation() {
        let id = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let r = vec![
            vec![0.5, 0.0, 0.0],
            vec![0.0, 1.5, 0.0],
            vec![0.0, 0.0, 2.5],
        ];
        let a = arm(&id, &id, &r, vec![0.2, 0.3, 0.5]);
        let config = SystemConfig::new(vec![a], 1, 12, 1, 0.95, 11).unwrap();
        for e in 0..20 {
            let trace = simulate_episode(&config, PolicyKind::Myopic, e);
            let first = trace.rewards[0][0];
            assert!(trace.rewards.iter().all(|r| r[0] == first));
        }
    }

    #[test]
    fn trace_accounting() {
        let a = example_arm();
        let config = SystemConfig::new(vec![a.clone(), a.clone(), a], 2, 30, 1, 0.9, 5).unwrap();
        let trace = simulate_episode(&config, PolicyKind::Whittle, 4);
        let mut total = 0.0;
        for (chosen, rewards) in trace.chosen.iter().zip(&trace.rewards) {
            assert_eq!(chosen.len(), 2);
            for (n, r) in rewards.iter().enumerate() {
                if !chosen.contains(&n) {
                    assert_eq!(*r, 0.0);
                }
                total += r;
            }
        }
        assert_eq!(trace.total, total);
        assert_eq!(trace, simulate_episode(&config, PolicyKind::Whittle, 4));
    }

    #[test]
    fn self_comparison_gain_is_zero() {
        let a = example_arm();
        let config = SystemConfig::new(vec![a.clone(), a], 1, 40, 30, 0.95, 9).unwrap();
        let metrics = run_monte_carlo(&config, &[PolicyKind::Myopic, PolicyKind::Myopic]);
        assert_eq!(
            gain_percent(metrics.policies[0].mean, metrics.policies[1].mean),
            0.0
        );
    }

    #[test]
    fn config_validation() {
        let a = example_arm();
        assert!(SystemConfig::new(vec![a.clone()], 2, 10, 1, 0.9, 0).is_err());
        assert!(SystemConfig::new(vec![a.clone()], 1, 0, 1, 0.9, 0).is_err());
        assert!(SystemConfig::new(vec![a], 1, 10, 1, 1.0, 0).is_err());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [PolicyKind::Whittle, PolicyKind::Myopic, PolicyKind::Random] {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }
}
