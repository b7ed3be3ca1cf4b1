use regolith_cli::{CliError, PolicyKind, ScoopParams, ScriptedPolicy, EXIT_RUNTIME, EXIT_USAGE};
use regolith_core::control::{ControlMode, ControllerConfig};
use regolith_core::env::{Env, EnvConfig};
use regolith_core::Error as CoreError;

fn env(mode: ControlMode) -> Env {
    Env::new(EnvConfig {
        particle_count: 200,
        controller: ControllerConfig {
            mode,
            ..ControllerConfig::default()
        },
        ..EnvConfig::default()
    })
    .unwrap()
}

#[test]
fn every_policy_emits_bounded_actions_of_the_mode_dimension() {
    for mode in [ControlMode::Ik, ControlMode::OscPart, ControlMode::Adaptive] {
        let mut env = env(mode);
        for kind in [PolicyKind::Zero, PolicyKind::Random, PolicyKind::ScoopScript] {
            let mut obs = env.reset(2).unwrap();
            let mut policy = ScriptedPolicy::for_episode(kind, 1, 2, &env, &obs, &ScoopParams::default()).unwrap();
            loop {
                let a = policy.act(&obs).unwrap();
                assert_eq!(a.len(), mode.action_dim(), "{mode:?} {kind:?}");
                assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)), "{mode:?} {kind:?}: {a:?}");
                if kind == PolicyKind::Zero {
                    assert!(a.iter().all(|v| *v == 0.0));
                }
                let r = env.step(&a).unwrap();
                obs = r.observation;
                if r.truncated {
                    break;
                }
            }
        }
    }
}

#[test]
fn random_actions_depend_on_both_seeds() {
    let mut env = env(ControlMode::Adaptive);
    let obs = env.reset(0).unwrap();
    let draw = |policy_seed, episode_seed| {
        let mut p = ScriptedPolicy::for_episode(PolicyKind::Random, policy_seed, episode_seed, &env, &obs, &ScoopParams::default())
            .unwrap();
        (0..5).flat_map(|_| p.act(&obs).unwrap()).collect::<Vec<f64>>()
    };
    assert_eq!(draw(1, 2), draw(1, 2));
    assert_ne!(draw(1, 2), draw(1, 3));
    assert_ne!(draw(1, 2), draw(2, 2));
}

#[test]
fn scoop_params_reject_unknown_keys() {
    assert!(serde_json::from_str::<ScoopParams>(r#"{"dig_pitch_deg": 30.0}"#).is_ok());
    assert!(serde_json::from_str::<ScoopParams>(r#"{"dig_pitch": 30.0}"#).is_err());
}

#[test]
fn exit_codes_separate_input_from_runtime_errors() {
    assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
    let invalid = CoreError::InvalidConfig {
        field: "solver.substeps".into(),
        reason: "must be positive".into(),
    };
    assert_eq!(CliError::Core(invalid).exit_code(), EXIT_USAGE);
    let episode = CliError::Episode {
        index: 4,
        seed: 9,
        source: CoreError::Reset("no start pose".into()),
    };
    assert_eq!(episode.exit_code(), EXIT_RUNTIME);
    assert!(episode.to_string().starts_with("episode 4 (seed 9): "));
    assert_eq!(CliError::Core(CoreError::Protocol("x".into())).exit_code(), EXIT_RUNTIME);
}
