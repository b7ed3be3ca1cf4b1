use regolith_core::control::ControlMode;
use regolith_core::env::{BoundEnv, Env, EnvConfig};
use regolith_core::geom::SeededStream;
use regolith_core::Error;

fn config(particles: usize) -> EnvConfig {
    EnvConfig {
        particle_count: particles,
        deterministic: true,
        ..EnvConfig::default()
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn shapes_match_the_native_environment() {
    for mode in [ControlMode::Ik, ControlMode::OscPart, ControlMode::Adaptive] {
        let mut c = config(200);
        c.controller.mode = mode;
        let bound = BoundEnv::new(c.clone()).unwrap();
        let native = Env::new(c).unwrap();
        assert_eq!(bound.action_dim(), native.action_dim());
        assert_eq!(bound.observation_layout().len(), native.observation_dim());
        assert_eq!(bound.observation_layout().len(), 23);
    }
    let mut c = config(200);
    c.visual = true;
    let mut bound = BoundEnv::new(c).unwrap();
    assert_eq!(bound.observation_layout().depth, Some((2, 128, 128)));
    let obs = bound.reset(1).unwrap();
    assert_eq!(obs.len(), 23 + 2 * 128 * 128);
    assert_eq!(obs.len(), bound.observation_layout().len());
}

#[test]
fn reset_passes_the_native_observation_through() {
    let mut bound = BoundEnv::new(config(300)).unwrap();
    let mut native = Env::new(config(300)).unwrap();
    assert_eq!(bits(&bound.reset(5).unwrap()), bits(&native.reset(5).unwrap().proprio()));
}

#[test]
fn bad_action_shape_fails_before_the_native_call() {
    let mut bound = BoundEnv::new(config(200)).unwrap();
    // no episode yet: the native step would report a protocol error instead
    assert!(matches!(bound.step(&[0.0; 3]), Err(Error::DimensionMismatch { expected: 18, got: 3 })));
    assert!(matches!(bound.step(&[0.0; 18]), Err(Error::Protocol(_))));
    bound.reset(0).unwrap();
    assert!(bound.step(&[0.0; 19]).is_err());
    let r = bound.step(&[0.0; 18]).unwrap();
    assert_eq!(r.info["step"], 1.0);
}

#[test]
fn random_episodes_match_native_rewards_bit_for_bit() {
    let mut bound = BoundEnv::new(config(200)).unwrap();
    let mut native = Env::new(config(200)).unwrap();
    for seed in 0..10 {
        bound.reset(seed).unwrap();
        native.reset(seed).unwrap();
        let mut rng = SeededStream::new(100 + seed);
        for k in 1..=750 {
            let a: Vec<f64> = (0..18).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let b = bound.step(&a).unwrap();
            let n = native.step(&a).unwrap();
            assert_eq!(b.reward.to_bits(), n.reward.total.to_bits(), "seed {seed} step {k}");
            assert_eq!(bits(&b.observation), bits(&n.observation.proprio()));
            assert_eq!(b.info["p_dust"].to_bits(), n.reward.p_dust.to_bits());
            assert!(!b.terminated);
            assert_eq!(b.truncated, k == 750);
        }
        assert_eq!(bound.env().metrics().unwrap(), native.metrics().unwrap());
    }
}

#[cfg(target_os = "linux")]
fn resident_bytes() -> u64 {
    let statm = std::fs::read_to_string("/proc/self/statm").unwrap();
    let pages: u64 = statm.split_whitespace().nth(1).unwrap().parse().unwrap();
    pages * 4096
}

#[cfg(target_os = "linux")]
#[test]
fn reset_step_cycles_do_not_grow_memory() {
    let mut c = config(200);
    c.deterministic = false;
    let mut bound = BoundEnv::new(c).unwrap();
    let action = [0.0; 18];
    let mut cycle = |n: u64| {
        for i in 0..n {
            bound.reset(i % 4).unwrap();
            bound.step(&action).unwrap();
        }
    };
    cycle(1000);
    let before = resident_bytes();
    cycle(9000);
    let grown = resident_bytes().saturating_sub(before);
    assert!(grown < 8 << 20, "resident set grew by {grown} bytes");
}
