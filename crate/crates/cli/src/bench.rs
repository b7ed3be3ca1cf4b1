//! `bench`: throughput of the stepping loop.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use regolith_core::env::{Env, EnvConfig};

use crate::error::{CliError, CliResult};
use crate::policy::{PolicyKind, ScoopParams, ScriptedPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub particles: usize,
    pub deterministic: bool,
    pub threads: usize,
    pub control_steps: u64,
    pub physics_steps: u64,
    pub solver_substeps: u64,
    /// Stepping time only; resets are excluded.
    pub wall_seconds: f64,
    pub control_steps_per_s: f64,
    pub physics_steps_per_s: f64,
    pub solver_substeps_per_s: f64,
    /// particles × physics steps / wall time
    pub particle_updates_per_s: f64,
    /// Control steps per second over the control rate.
    pub realtime_factor: f64,
}

impl BenchReport {
    pub fn render(&self) -> String {
        format!(
            "particles            {}\n\
             mode                 {}\n\
             threads              {}\n\
             control steps        {}\n\
             physics steps        {}\n\
             solver substeps      {}\n\
             wall time            {:.3} s\n\
             control steps/s      {:.2}\n\
             physics steps/s      {:.2}\n\
             solver substeps/s    {:.2}\n\
             particle updates/s   {:.4e}\n\
             real-time factor     {:.3}\n",
            self.particles,
            if self.deterministic { "deterministic" } else { "fast" },
            self.threads,
            self.control_steps,
            self.physics_steps,
            self.solver_substeps,
            self.wall_seconds,
            self.control_steps_per_s,
            self.physics_steps_per_s,
            self.solver_substeps_per_s,
            self.particle_updates_per_s,
            self.realtime_factor,
        )
    }
}

/// Runs exactly `steps` control steps under the policy, resetting with the
/// next seed whenever an episode truncates.
pub fn cmd_bench(config: &EnvConfig, steps: u64, seed: u64, policy: PolicyKind) -> CliResult<BenchReport> {
    if steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    let mut env = Env::new(config.clone())?;
    let scoop = ScoopParams::default();
    let mut episode_seed = seed;
    let mut obs = env.reset(episode_seed)?;
    let mut actor = ScriptedPolicy::for_episode(policy, seed, episode_seed, &env, &obs, &scoop)?;
    let mut wall = Duration::ZERO;
    let mut physics = 0u64;
    let mut episode_physics = 0u64;
    for _ in 0..steps {
        let action = actor.act(&obs)?;
        let t = Instant::now();
        let r = env.step(&action)?;
        wall += t.elapsed();
        physics += r.info.physics_steps - episode_physics;
        episode_physics = r.info.physics_steps;
        obs = r.observation;
        if r.truncated {
            episode_physics = 0;
            episode_seed = episode_seed.wrapping_add(1);
            obs = env.reset(episode_seed)?;
            actor = ScriptedPolicy::for_episode(policy, seed, episode_seed, &env, &obs, &scoop)?;
        }
    }
    let w = wall.as_secs_f64();
    let substeps = physics * config.solver.substeps as u64;
    let control_rate = steps as f64 / w;
    Ok(BenchReport {
        particles: config.particle_count,
        deterministic: config.deterministic,
        threads: rayon::current_num_threads(),
        control_steps: steps,
        physics_steps: physics,
        solver_substeps: substeps,
        wall_seconds: w,
        control_steps_per_s: control_rate,
        physics_steps_per_s: physics as f64 / w,
        solver_substeps_per_s: substeps as f64 / w,
        particle_updates_per_s: config.particle_count as f64 * physics as f64 / w,
        realtime_factor: control_rate / config.control_rate_hz as f64,
    })
}
