use std::fs;
use std::path::Path;

use whittle_pcl::cli::{dispatch, CliError, Command, Options};
use whittle_pcl::config::{parse_config, ExperimentConfig};
use whittle_pcl::instance::{generate_instance, GenerationError, GeneratorSettings};
use whittle_pcl::sim::PolicyKind;

const EXAMPLE: &str = r#"
[global]
steps = 6
master_seed = 7
episodes = 300
horizon = 60

[[arms]]
initial_belief = [0.6, 0.4]
P = [[0.8, 0.2], [0.2, 0.8]]
E = [[0.8, 0.2], [0.2, 0.8]]
R = [[0.0, 0.0], [0.0, 1.0]]

[[arms]]
mode = "reward-only"
initial_belief = [0.5, 0.5]
P = [[0.7, 0.3], [0.4, 0.6]]
E = [[0.9, 0.1], [0.2, 0.8]]
R = [[0.0, 0.5], [0.2, 1.0]]
"#;

fn options(dir: &Path, config: &str) -> Options {
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    Options {
        config: Some(path),
        out: dir.join("out"),
        ..Options::default()
    }
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join("out").join(name)).unwrap()
}

#[test]
fn enumerate_reports_levels_and_tree_count() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = dispatch(Command::Enumerate, &options(dir.path(), EXAMPLE)).unwrap();
    assert!(
        outcome.message.contains("arm 0: 357 states"),
        "{}",
        outcome.message
    );
    assert!(outcome.message.contains("exact tree count 1093"));
    let text = String::from_utf8(read(dir.path(), "space.txt")).unwrap();
    assert!(
        text.contains("levels 1 4 13 40 110 228 357"),
        "{}",
        &text[..200]
    );
}

#[test]
fn index_and_simulate_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = options(dir.path(), EXAMPLE);
    opts.policies = Some(vec![PolicyKind::Whittle]);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            dispatch(Command::Index, &opts).unwrap();
            dispatch(Command::Simulate, &opts).unwrap();
        });
        [
            "space.txt",
            "kernels.txt",
            "index.csv",
            "episodes.csv",
            "curve.csv",
        ]
        .map(|f| read(dir.path(), f))
    };
    let first = run(1);
    assert_eq!(first, run(4));
    assert_eq!(first, run(1));
}

#[test]
fn seed_override_changes_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = options(dir.path(), EXAMPLE);
    opts.policies = Some(vec![PolicyKind::Random]);
    dispatch(Command::Simulate, &opts).unwrap();
    let a = read(dir.path(), "episodes.csv");
    opts.seed = Some(8);
    dispatch(Command::Simulate, &opts).unwrap();
    assert_ne!(a, read(dir.path(), "episodes.csv"));
}

#[test]
fn simulate_takes_one_policy() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = options(dir.path(), EXAMPLE);
    opts.policies = Some(vec![PolicyKind::Whittle, PolicyKind::Myopic]);
    assert!(matches!(
        dispatch(Command::Simulate, &opts),
        Err(CliError::Usage(_))
    ));
    opts.config = None;
    assert!(matches!(
        dispatch(Command::Index, &opts),
        Err(CliError::Usage(_))
    ));
}

#[test]
fn bad_configs_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let missing = EXAMPLE.replacen("P = [[0.8, 0.2], [0.2, 0.8]]\n", "", 1);
    let err = dispatch(Command::Index, &options(dir.path(), &missing)).unwrap_err();
    assert!(err.to_string().contains("arm 0: missing field P"), "{err}");
    let zero = EXAMPLE.replace("steps = 6", "steps = 6\nepsilon = 0.0");
    let err = dispatch(Command::Index, &options(dir.path(), &zero)).unwrap_err();
    assert!(
        err.to_string().contains("epsilon must be positive"),
        "{err}"
    );
    let unknown = EXAMPLE.replace("steps = 6", "steps = 6\ngamma = 1");
    assert!(dispatch(Command::Index, &options(dir.path(), &unknown)).is_err());
}

#[test]
fn oracle_verify_passes_on_small_instance() {
    let dir = tempfile::tempdir().unwrap();
    let small = EXAMPLE.replace("steps = 6", "steps = 3");
    let outcome = dispatch(Command::OracleVerify, &options(dir.path(), &small)).unwrap();
    assert!(outcome.success, "{}", outcome.message);
    let text = String::from_utf8(read(dir.path(), "verify.txt")).unwrap();
    assert!(!text.contains(",fail"));
    assert!(text.contains("bisection_agreement"));
}

#[test]
fn generate_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let gen = Options {
        out: dir.path().join("out"),
        seed: Some(4),
        arms: 4,
        episodes: Some(100),
        horizon: Some(50),
        ..Options::default()
    };
    dispatch(Command::Generate, &gen).unwrap();
    let instance = dir.path().join("out").join("instance.toml");
    let config = parse_config(&instance).unwrap();
    assert_eq!(config.arms.len(), 4);
    assert_eq!(config.global.master_seed, 4);
    assert_eq!(
        ExperimentConfig::from_toml_str(&config.to_toml_string().unwrap()).unwrap(),
        config
    );

    let compare = Options {
        config: Some(instance),
        ..gen
    };
    dispatch(Command::Compare, &compare).unwrap();
    let summary = String::from_utf8(read(dir.path(), "summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next(),
        Some("arm_state_size,number_of_arms,myopic_mean,whittle_mean,gain_percent")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..2], ["3x3", "4"]);
    assert!(row[2..].iter().all(|v| v.parse::<f64>().is_ok()));
}

#[test]
fn generator_gives_up_when_out_of_retries() {
    let settings = GeneratorSettings {
        retries: 0,
        ..GeneratorSettings::new(3)
    };
    assert!(matches!(
        generate_instance(&settings, 5, 0),
        Err(GenerationError::GenerationExhausted { attempts: 1 })
    ));
    let generous = GeneratorSettings::new(3);
    let arm = generate_instance(&generous, 5, 0).unwrap();
    assert!(arm.attempts > 1);
}
