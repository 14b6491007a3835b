use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Car-following and gap-acceptance parameters of one simulated driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverPolicy {
    /// m/s; capped by the speed limit of the driven path.
    pub desired_speed: f64,
    /// s
    pub time_headway: f64,
    /// m, bumper to bumper at standstill.
    pub min_gap: f64,
    /// m/s²
    pub max_accel: f64,
    /// Comfortable deceleration, m/s².
    pub max_decel: f64,
    /// Minimum lead in time-to-conflict over the next priority vehicle, s.
    pub gap_acceptance: f64,
}

/// Hard braking limit of the kinematics, m/s².
pub const EMERGENCY_DECEL: f64 = 9.0;
pub const JITTER: f64 = 0.15;

impl Default for DriverPolicy {
    fn default() -> Self {
        Self {
            desired_speed: 30.0,
            time_headway: 1.5,
            min_gap: 2.0,
            max_accel: 1.5,
            max_decel: 2.0,
            gap_acceptance: 3.0,
        }
    }
}

impl DriverPolicy {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("desired speed", self.desired_speed),
            ("time headway", self.time_headway),
            ("min gap", self.min_gap),
            ("max accel", self.max_accel),
            ("max decel", self.max_decel),
            ("gap acceptance", self.gap_acceptance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Copy with the desired speed capped at `limit` and every parameter
    /// scaled by an independent factor in `1 ± JITTER`.
    pub fn jittered(&self, limit: f64, rng: &mut impl Rng) -> Self {
        let mut f = || rng.gen_range(1.0 - JITTER..=1.0 + JITTER);
        Self {
            desired_speed: self.desired_speed.min(limit) * f(),
            time_headway: self.time_headway * f(),
            min_gap: self.min_gap * f(),
            max_accel: self.max_accel * f(),
            max_decel: self.max_decel * f(),
            gap_acceptance: self.gap_acceptance * f(),
        }
    }

    /// Intelligent-driver acceleration towards a leader `gap` metres ahead
    /// that is slower by `dv`; `gap = None` means free road.
    pub fn idm(&self, v: f64, v0: f64, leader: Option<(f64, f64)>) -> f64 {
        let free = 1.0 - (v / v0.max(0.1)).powi(4);
        let interact = match leader {
            Some((gap, dv)) => {
                let s_star = self.min_gap + (v * self.time_headway + v * dv / (2.0 * (self.max_accel * self.max_decel).sqrt())).max(0.0);
                (s_star / gap.max(0.1)).powi(2)
            }
            None => 0.0,
        };
        self.max_accel * (free - interact)
    }

    /// Time to cover `dist` from speed `v`, accelerating at `max_accel` up
    /// to `v_max`.
    pub fn time_to_cover(&self, dist: f64, v: f64, v_max: f64) -> f64 {
        if dist <= 0.0 {
            return 0.0;
        }
        let a = self.max_accel;
        if v >= v_max {
            return dist / v.max(1e-6);
        }
        let t1 = (v_max - v) / a;
        let d1 = v * t1 + 0.5 * a * t1 * t1;
        if d1 >= dist {
            (-v + (v * v + 2.0 * a * dist).sqrt()) / a
        } else {
            t1 + (dist - d1) / v_max
        }
    }
}
