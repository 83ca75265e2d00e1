//! Command dispatch for the `whittle` binary.
//!
//! Every command reads an experiment configuration (except `generate`, for
//! which it is optional), writes its files under the output directory, and
//! returns a short human-readable summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{self, ConfigError, ExperimentConfig, GlobalSettings};
use crate::format;
use crate::instance::{self, GenerationError, GeneratorSettings};
use crate::oracle::{self, OracleError, VerifyOptions};
use crate::sim::{self, ArmSetup, Metrics, PolicyKind, SimError};
use crate::space::{self, SpaceError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Enumerate,
    Index,
    Simulate,
    Compare,
    OracleVerify,
    Generate,
}

#[derive(Debug, Clone)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub policies: Option<Vec<PolicyKind>>,
    pub episodes: Option<usize>,
    pub horizon: Option<usize>,
    pub interpolate: bool,
    /// `generate`: physical states per arm.
    pub states: usize,
    /// `generate`: number of arms.
    pub arms: usize,
    /// `generate`: extra draws allowed per arm.
    pub retries: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            config: None,
            seed: None,
            out: PathBuf::from("."),
            policies: None,
            episodes: None,
            horizon: None,
            interpolate: false,
            states: 3,
            arms: 30,
            retries: 100,
        }
    }
}

/// What a command did.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub message: String,
    pub files: Vec<PathBuf>,
    /// False when the command ran but its checks did not all pass.
    pub success: bool,
}

pub fn dispatch(command: Command, options: &Options) -> Result<Outcome, CliError> {
    fs::create_dir_all(&options.out).map_err(|source| CliError::Io {
        path: options.out.display().to_string(),
        source,
    })?;
    match command {
        Command::Generate => generate(options),
        _ => {
            let config = load(options)?;
            match command {
                Command::Enumerate => enumerate(&config, options),
                Command::Index => index(&config, options),
                Command::Simulate => simulate(&config, options),
                Command::Compare => compare(&config, options),
                Command::OracleVerify => verify(&config, options),
                Command::Generate => unreachable!(),
            }
        }
    }
}

fn load(options: &Options) -> Result<ExperimentConfig, CliError> {
    let path = options
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let mut config = config::parse_config(path)?;
    let g = &mut config.global;
    if let Some(seed) = options.seed {
        g.master_seed = seed;
    }
    if let Some(e) = options.episodes {
        g.episodes = e;
    }
    if let Some(h) = options.horizon {
        g.horizon = h;
    }
    if let Some(p) = &options.policies {
        g.policies = p.clone();
    }
    Ok(config)
}

fn write(out: &mut Vec<PathBuf>, dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    out.push(path);
    Ok(())
}

fn enumerate(config: &ExperimentConfig, options: &Options) -> Result<Outcome, CliError> {
    let g = &config.global;
    let mut text = String::new();
    let mut message = String::new();
    for (a, spec) in config.arms.iter().enumerate() {
        let model = spec.model()?;
        let space = space::enumerate_approx(&model, &spec.belief()?, g.steps, g.epsilon)?;
        let tree = space::exact_tree_count(model.outcome_count() as u64, g.steps).ok();
        format::write_space(&mut text, a, &space, tree);
        let tree = tree.map_or_else(|| "overflow".to_string(), |c| c.to_string());
        let _ = writeln!(
            message,
            "arm {a}: {} states (levels {:?}), exact tree count {tree}",
            space.len(),
            space.level_sizes()
        );
    }
    let mut files = Vec::new();
    write(&mut files, &options.out, "space.txt", &text)?;
    Ok(Outcome {
        message,
        files,
        success: true,
    })
}

fn index(config: &ExperimentConfig, options: &Options) -> Result<Outcome, CliError> {
    let g = &config.global;
    let mut space_text = String::new();
    let mut kernel_text = String::new();
    let mut tables = Vec::new();
    let mut message = String::new();
    for (a, setup) in config.build_arms()?.into_iter().enumerate() {
        let tree = space::exact_tree_count(setup.model.outcome_count() as u64, g.steps).ok();
        format::write_space(&mut space_text, a, &setup.space, tree);
        let kernels = space::build_kernels(&setup.space, &setup.model, g.beta)?;
        format::write_kernels(&mut kernel_text, a, &kernels);
        let _ = writeln!(
            message,
            "arm {a}: {} states, fail {}",
            setup.space.len(),
            u8::from(setup.table.fail)
        );
        tables.push(setup.table);
    }
    let any = tables.iter().any(|t| t.fail);
    let _ = writeln!(message, "fail {}", u8::from(any));
    let mut files = Vec::new();
    write(&mut files, &options.out, "space.txt", &space_text)?;
    write(&mut files, &options.out, "kernels.txt", &kernel_text)?;
    write(
        &mut files,
        &options.out,
        "index.csv",
        &format::write_index_csv(&tables),
    )?;
    Ok(Outcome {
        message,
        files,
        success: true,
    })
}

fn build_system(
    config: &ExperimentConfig,
    options: &Options,
) -> Result<(sim::SystemConfig, String), CliError> {
    let arms = config.build_arms()?;
    let mut warnings = String::new();
    for (a, arm) in arms.iter().enumerate() {
        if arm.table.fail {
            let _ = writeln!(
                warnings,
                "warning: arm {a} has non-monotone indices; simulating anyway"
            );
        }
    }
    let mut system = config.system(arms)?;
    system.interpolate = options.interpolate;
    Ok((system, warnings))
}

fn run(
    config: &ExperimentConfig,
    options: &Options,
    policies: &[PolicyKind],
) -> Result<(Metrics, String, Vec<PathBuf>), CliError> {
    let (system, mut message) = build_system(config, options)?;
    let metrics = sim::run_monte_carlo(&system, policies);
    let mut episodes = Vec::new();
    let mut curve = Vec::new();
    sim::write_episodes_csv(&metrics, &mut episodes).expect("writing to memory");
    sim::write_curve_csv(&metrics, &mut curve).expect("writing to memory");
    let mut files = Vec::new();
    write(
        &mut files,
        &options.out,
        "episodes.csv",
        &String::from_utf8_lossy(&episodes),
    )?;
    write(
        &mut files,
        &options.out,
        "curve.csv",
        &String::from_utf8_lossy(&curve),
    )?;
    for p in &metrics.policies {
        let _ = writeln!(
            message,
            "{}: mean {} per slot (std {}, {} episodes)",
            p.policy,
            p.mean,
            p.std,
            p.episodes.len()
        );
    }
    Ok((metrics, message, files))
}

fn simulate(config: &ExperimentConfig, options: &Options) -> Result<Outcome, CliError> {
    let policy = match (&options.policies, config.global.policies.as_slice()) {
        (Some(list), _) if list.len() != 1 => {
            return Err(CliError::Usage(
                "simulate takes exactly one policy; use compare for several".into(),
            ))
        }
        (Some(list), _) => list[0],
        (None, [first, ..]) => *first,
        (None, []) => PolicyKind::Whittle,
    };
    let (_, message, files) = run(config, options, &[policy])?;
    Ok(Outcome {
        message,
        files,
        success: true,
    })
}

fn state_size_label(setups: &[ArmSetup]) -> String {
    let mut sizes: Vec<usize> = setups.iter().map(|a| a.model.states()).collect();
    sizes.dedup();
    sizes
        .iter()
        .map(|m| format!("{m}x{m}"))
        .collect::<Vec<_>>()
        .join("/")
}

fn compare(config: &ExperimentConfig, options: &Options) -> Result<Outcome, CliError> {
    let mut policies = config.global.policies.clone();
    for needed in [PolicyKind::Myopic, PolicyKind::Whittle] {
        if !policies.contains(&needed) {
            policies.push(needed);
        }
    }
    let (metrics, mut message, mut files) = run(config, options, &policies)?;
    let whittle = metrics.get(PolicyKind::Whittle).expect("whittle was run");
    let myopic = metrics.get(PolicyKind::Myopic).expect("myopic was run");
    let arms = config.build_arms()?;
    let gain = sim::gain_percent(whittle.mean, myopic.mean);
    let summary = format!(
        "arm_state_size,number_of_arms,myopic_mean,whittle_mean,gain_percent\n{},{},{},{},{}\n",
        state_size_label(&arms),
        arms.len(),
        myopic.mean,
        whittle.mean,
        gain
    );
    write(&mut files, &options.out, "summary.csv", &summary)?;
    let _ = writeln!(message, "gain of whittle over myopic: {gain:.3}%");
    Ok(Outcome {
        message,
        files,
        success: true,
    })
}

fn verify(config: &ExperimentConfig, options: &Options) -> Result<Outcome, CliError> {
    let g = &config.global;
    let mut text = String::new();
    let mut message = String::new();
    let mut success = true;
    for (a, spec) in config.arms.iter().enumerate() {
        let model = spec.model()?;
        let space = space::enumerate_approx(&model, &spec.belief()?, g.steps, g.epsilon)?;
        let kernels = space::build_kernels(&space, &model, g.beta)?;
        let report = oracle::verify(
            &kernels,
            VerifyOptions {
                seed: g.master_seed,
                ..VerifyOptions::default()
            },
        )?;
        let _ = writeln!(text, "arm {a} states {}", kernels.len());
        text.push_str(&report.to_string());
        let status = if report.passed() { "pass" } else { "fail" };
        let _ = writeln!(message, "arm {a}: {} states, {status}", kernels.len());
        success &= report.passed();
    }
    let mut files = Vec::new();
    write(&mut files, &options.out, "verify.txt", &text)?;
    Ok(Outcome {
        message,
        files,
        success,
    })
}

fn generate(options: &Options) -> Result<Outcome, CliError> {
    let mut global = match &options.config {
        Some(path) => config::parse_config(path)?.global,
        None => GlobalSettings::default(),
    };
    if let Some(seed) = options.seed {
        global.master_seed = seed;
    }
    if let Some(e) = options.episodes {
        global.episodes = e;
    }
    if let Some(h) = options.horizon {
        global.horizon = h;
    }
    if let Some(p) = &options.policies {
        global.policies = p.clone();
    }
    let settings = GeneratorSettings {
        retries: options.retries,
        steps: global.steps,
        epsilon: global.epsilon,
        beta: global.beta,
        ..GeneratorSettings::new(options.states)
    };
    let arms = instance::generate_system(&settings, options.arms, global.master_seed)?;
    if global.k > arms.len() {
        return Err(CliError::Usage(format!(
            "k is {} but only {} arms were requested",
            global.k,
            arms.len()
        )));
    }
    let mut message = String::new();
    for (a, arm) in arms.iter().enumerate() {
        let _ = writeln!(
            message,
            "arm {a}: {} states after {} draw(s)",
            arm.setup.space.len(),
            arm.attempts
        );
    }
    let experiment = ExperimentConfig {
        global,
        arms: arms.into_iter().map(|a| a.spec).collect(),
    };
    let mut files = Vec::new();
    write(
        &mut files,
        &options.out,
        "instance.toml",
        &experiment.to_toml_string()?,
    )?;
    Ok(Outcome {
        message,
        files,
        success: true,
    })
}
