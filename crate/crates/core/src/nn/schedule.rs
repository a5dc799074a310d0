//! Triangular (one-cycle) cyclic learning rate.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Linear ramp clr_min -> clr_max over the first half of training, then
/// back down to clr_min. Steps past `total_steps` clamp to clr_min.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicLrSchedule {
    pub clr_min: f64,
    pub clr_max: f64,
    pub total_steps: usize,
}

impl CyclicLrSchedule {
    pub fn new(clr_min: f64, clr_max: f64, total_steps: usize) -> Result<CyclicLrSchedule> {
        if !(clr_min >= 0.0 && clr_max > clr_min) {
            return Err(Error::Config(format!(
                "cyclic lr needs 0 <= clr_min < clr_max, got [{clr_min}, {clr_max}]"
            )));
        }
        if total_steps == 0 {
            return Err(Error::Config("cyclic lr needs total_steps >= 1".into()));
        }
        Ok(CyclicLrSchedule { clr_min, clr_max, total_steps })
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if step > self.total_steps {
            return self.clr_min;
        }
        let half = self.total_steps as f64 / 2.0;
        let t = step as f64;
        let frac = if t <= half { t / half } else { (self.total_steps as f64 - t) / half };
        self.clr_min + (self.clr_max - self.clr_min) * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_peak() {
        let s = CyclicLrSchedule::new(0.0, 0.2, 100).unwrap();
        assert_eq!(s.lr_at(0), 0.0);
        assert_eq!(s.lr_at(50), 0.2);
        assert_eq!(s.lr_at(100), 0.0);
    }

    #[test]
    fn linear_midpoint() {
        let s = CyclicLrSchedule::new(0.0, 0.2, 100).unwrap();
        assert!((s.lr_at(25) - 0.1).abs() < 1e-15);
        assert!((s.lr_at(75) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn clamps_past_the_end() {
        let s = CyclicLrSchedule::new(0.05, 0.2, 10).unwrap();
        assert_eq!(s.lr_at(11), 0.05);
        assert_eq!(s.lr_at(1000), 0.05);
    }

    #[test]
    fn bounded_everywhere() {
        let s = CyclicLrSchedule::new(0.01, 0.3, 17).unwrap();
        for step in 0..=17 {
            let lr = s.lr_at(step);
            assert!((0.01..=0.3).contains(&lr), "step {step}: lr {lr}");
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(CyclicLrSchedule::new(0.2, 0.2, 10).is_err());
        assert!(CyclicLrSchedule::new(-0.1, 0.2, 10).is_err());
        assert!(CyclicLrSchedule::new(0.0, 0.2, 0).is_err());
    }
}
