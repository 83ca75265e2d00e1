//! Random arm generation with rejection of instances whose adaptive-greedy
//! indices are not monotone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ArmSpec, ConfigError};
use crate::model::ObservationMode;
use crate::pcl::{adaptive_greedy, is_pcl_indexable, PclError};
use crate::sim::{ArmSetup, SimError};
use crate::space::{build_kernels, enumerate_approx, SpaceError};

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("no instance with nonincreasing indices after {attempts} draws")]
    GenerationExhausted { attempts: usize },
    #[error("at least two states are required, got {0}")]
    TooFewStates(usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Pcl(#[from] PclError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSettings {
    pub states: usize,
    pub mode: ObservationMode,
    /// Rewards are uniform on `[0, reward_max]`.
    pub reward_max: f64,
    /// Extra draws allowed after the first one is rejected.
    pub retries: usize,
    /// Use the identity as the observation matrix.
    pub perfect_observation: bool,
    /// Uniform over the states when `None`.
    pub initial_belief: Option<Vec<f64>>,
    pub steps: u32,
    pub epsilon: f64,
    pub beta: f64,
}

impl GeneratorSettings {
    pub fn new(states: usize) -> Self {
        Self {
            states,
            mode: ObservationMode::ObservationOnly,
            reward_max: 3.0,
            retries: 100,
            perfect_observation: false,
            initial_belief: None,
            steps: crate::config::DEFAULT_STEPS,
            epsilon: crate::config::DEFAULT_EPSILON,
            beta: crate::config::DEFAULT_BETA,
        }
    }
}

/// A generated arm together with its computed space and index table.
#[derive(Debug, Clone)]
pub struct GeneratedArm {
    pub spec: ArmSpec,
    pub setup: ArmSetup,
    /// Number of draws made, including the accepted one.
    pub attempts: usize,
}

fn stochastic_row(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

fn draw(rng: &mut impl Rng, settings: &GeneratorSettings) -> ArmSpec {
    let m = settings.states;
    let transition = (0..m).map(|_| stochastic_row(rng, m)).collect();
    let error = if settings.perfect_observation {
        (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    } else {
        (0..m).map(|_| stochastic_row(rng, m)).collect()
    };
    let reward = (0..m)
        .map(|_| {
            (0..m)
                .map(|_| settings.reward_max * rng.random::<f64>())
                .collect()
        })
        .collect();
    let rho = (settings.mode == ObservationMode::GeneralFeedback)
        .then(|| (0..m).map(|_| stochastic_row(rng, m)).collect());
    let initial_belief = settings
        .initial_belief
        .clone()
        .unwrap_or_else(|| vec![1.0 / m as f64; m]);
    ArmSpec {
        mode: settings.mode,
        initial_belief,
        transition,
        error,
        reward,
        rho,
    }
}

/// Draws arms from `rng` until one has nonincreasing adaptive-greedy
/// indices.
pub fn generate_with(
    rng: &mut impl Rng,
    settings: &GeneratorSettings,
) -> Result<GeneratedArm, GenerationError> {
    if settings.states < 2 {
        return Err(GenerationError::TooFewStates(settings.states));
    }
    for attempt in 1..=settings.retries + 1 {
        let spec = draw(rng, settings);
        let model = spec.model()?;
        let initial = spec.belief()?;
        let space = enumerate_approx(&model, &initial, settings.steps, settings.epsilon)?;
        let kernels = build_kernels(&space, &model, settings.beta)?;
        // near-zero marginal work also marks the draw as unusable
        if !is_pcl_indexable(&kernels).unwrap_or(false) {
            continue;
        }
        let table = adaptive_greedy(&kernels)?;
        let setup = ArmSetup::from_parts(model, initial, space, table)?;
        return Ok(GeneratedArm {
            spec,
            setup,
            attempts: attempt,
        });
    }
    Err(GenerationError::GenerationExhausted {
        attempts: settings.retries + 1,
    })
}

/// Generates one arm from `seed` on random stream `stream`.
pub fn generate_instance(
    settings: &GeneratorSettings,
    seed: u64,
    stream: u64,
) -> Result<GeneratedArm, GenerationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    generate_with(&mut rng, settings)
}

/// Generates `arms` arms; arm `n` uses stream `n`.
pub fn generate_system(
    settings: &GeneratorSettings,
    arms: usize,
    seed: u64,
) -> Result<Vec<GeneratedArm>, GenerationError> {
    (0..arms as u64)
        .map(|n| generate_instance(settings, seed, n))
        .collect()
}
