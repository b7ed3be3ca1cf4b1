//! Independent environment instances stepped on the rayon pool.

use rayon::prelude::*;

use super::{Env, EnvConfig, Observation, StepResult};
use crate::error::{Error, Result};

/// Batch of instances; results come back ordered by index.
#[derive(Debug)]
pub struct VecEnv {
    envs: Vec<Env>,
}

fn tag<T>(index: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Instance {
        index,
        source: Box::new(e),
    })
}

impl VecEnv {
    pub fn new(config: &EnvConfig, count: usize) -> Result<Self> {
        let envs = (0..count).map(|_| Env::new(config.clone())).collect::<Result<_>>()?;
        Ok(Self { envs })
    }

    pub fn from_envs(envs: Vec<Env>) -> Self {
        Self { envs }
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    pub fn into_envs(self) -> Vec<Env> {
        self.envs
    }

    /// Resets instance `i` with `seeds[i]`.
    pub fn reset(&mut self, seeds: &[u64]) -> Result<Vec<Result<Observation>>> {
        if seeds.len() != self.envs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.envs.len(),
                got: seeds.len(),
            });
        }
        Ok(self
            .envs
            .par_iter_mut()
            .zip(seeds)
            .enumerate()
            .map(|(i, (env, &seed))| tag(i, env.reset(seed)))
            .collect())
    }

    /// Steps instance `i` with `actions[i]`.
    pub fn step(&mut self, actions: &[Vec<f64>]) -> Result<Vec<Result<StepResult>>> {
        if actions.len() != self.envs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.envs.len(),
                got: actions.len(),
            });
        }
        Ok(self
            .envs
            .par_iter_mut()
            .zip(actions)
            .enumerate()
            .map(|(i, (env, a))| tag(i, env.step(a)))
            .collect())
    }
}
