//! Episode records and evaluation metrics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::DustMetric;
use super::reward::RewardBreakdown;
use crate::error::{Error, Result};
use crate::geom::{Pose, Vec3};

/// Random close packing fraction used to turn particle counts into bulk volume.
pub const PACKING_FRACTION: f64 = 0.64;

/// Bulk volume of `count` particles of radius `r`, liters.
pub fn excavated_volume_liters(count: usize, radius: f64) -> f64 {
    count as f64 * 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3) / PACKING_FRACTION * 1000.0
}

/// Tracks which particles ever exceeded the dust speed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DustTracker {
    ever: Vec<bool>,
    count: usize,
    instantaneous_sum: f64,
    samples: usize,
}

impl DustTracker {
    pub fn new(n: usize) -> Self {
        Self {
            ever: vec![false; n],
            ..Self::default()
        }
    }

    /// Adds one time sample of particle velocities.
    pub fn update(&mut self, velocities: &[Vec3], threshold: f64) {
        let mut now = 0;
        for (flag, v) in self.ever.iter_mut().zip(velocities) {
            if v.norm() > threshold {
                now += 1;
                if !*flag {
                    *flag = true;
                    self.count += 1;
                }
            }
        }
        if !self.ever.is_empty() {
            self.instantaneous_sum += now as f64 / self.ever.len() as f64;
        }
        self.samples += 1;
    }

    /// Fraction of particles that were dust at any sample.
    pub fn union_fraction(&self) -> f64 {
        if self.ever.is_empty() {
            0.0
        } else {
            self.count as f64 / self.ever.len() as f64
        }
    }

    pub fn instantaneous_mean(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.instantaneous_sum / self.samples as f64
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }
}

/// One control step as exported.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based control step index.
    pub step: usize,
    pub reward: RewardBreakdown,
    pub ee: Pose,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

/// Everything the metrics read.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub particle_count: usize,
    pub radius: f64,
    /// Control period, s.
    pub dt: f64,
    /// Joint positions at reset.
    pub q0: DVector<f64>,
    pub steps: Vec<StepRecord>,
    pub dust: DustTracker,
    /// Lifted particles below the stability speed at the last step.
    pub final_stable_lifted: Option<usize>,
}

impl EpisodeRecord {
    pub fn new(particle_count: usize, radius: f64, dt: f64, q0: DVector<f64>) -> Self {
        Self {
            particle_count,
            radius,
            dt,
            q0,
            steps: Vec::new(),
            dust: DustTracker::new(particle_count),
            final_stable_lifted: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardSums {
    pub r_approach: f64,
    pub r_lift: f64,
    pub r_stabilize: f64,
    pub p_dust: f64,
    pub p_jerk: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// L
    pub excavated_volume: f64,
    pub dust_fraction: f64,
    /// rad²/s⁶
    pub mean_squared_jerk: f64,
    pub reward_sums: RewardSums,
    pub steps: usize,
}

/// `mean_t,j ((q̈_t − q̈_{t−1}) / dt)²` with central-difference accelerations.
pub fn mean_squared_jerk(q: &[DVector<f64>], dt: f64) -> Result<f64> {
    if q.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "jerk needs at least 3 control steps, got {}",
            q.len().saturating_sub(1)
        )));
    }
    let acc: Vec<DVector<f64>> = q
        .windows(3)
        .map(|w| (&w[2] - &w[1] * 2.0 + &w[0]) / (dt * dt))
        .collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for w in acc.windows(2) {
        for (a1, a0) in w[1].iter().zip(w[0].iter()) {
            let j = (a1 - a0) / dt;
            sum += j * j;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

pub fn compute_metrics(record: &EpisodeRecord, dust: DustMetric) -> Result<EpisodeMetrics> {
    let mut q = Vec::with_capacity(record.steps.len() + 1);
    q.push(record.q0.clone());
    q.extend(record.steps.iter().map(|s| s.q.clone()));
    let msj = mean_squared_jerk(&q, record.dt)?;
    let mut sums = RewardSums::default();
    for s in &record.steps {
        let r = &s.reward;
        sums.r_approach += r.r_approach;
        sums.r_lift += r.r_lift;
        sums.r_stabilize += r.r_stabilize;
        sums.p_dust += r.p_dust;
        sums.p_jerk += r.p_jerk;
        sums.total += r.total;
    }
    let stable = record.final_stable_lifted.unwrap_or(0);
    Ok(EpisodeMetrics {
        excavated_volume: excavated_volume_liters(stable, record.radius),
        dust_fraction: match dust {
            DustMetric::Union => record.dust.union_fraction(),
            DustMetric::InstantaneousMean => record.dust.instantaneous_mean(),
        },
        mean_squared_jerk: msj,
        reward_sums: sums,
        steps: record.steps.len(),
    })
}
