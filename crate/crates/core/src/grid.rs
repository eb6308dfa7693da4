use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evenly spaced deviation levels `r0, ..., r1` with `steps` points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RGrid {
    pub r0: f64,
    pub r1: f64,
    pub steps: usize,
}

impl RGrid {
    pub fn new(r0: f64, r1: f64, steps: usize) -> Result<Self> {
        if !(r0 >= 0.0 && r1.is_finite()) {
            return Err(Error::param(
                "grid",
                "endpoints must be finite with r0 >= 0",
            ));
        }
        if steps == 0 || (steps == 1 && r1 != r0) || (steps > 1 && r1 <= r0) {
            return Err(Error::param("grid", "need r1 > r0 and at least two steps"));
        }
        Ok(Self { r0, r1, steps })
    }

    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.r0];
        }
        let h = (self.r1 - self.r0) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                if k + 1 == self.steps {
                    self.r1
                } else {
                    self.r0 + k as f64 * h
                }
            })
            .collect()
    }
}

impl FromStr for RGrid {
    type Err = Error;

    /// Parses `r0:r1:steps`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::param("grid", format!("expected r0:r1:steps, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let r0 = parts[0].trim().parse().map_err(|_| bad())?;
        let r1 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps = parts[2].trim().parse().map_err(|_| bad())?;
        RGrid::new(r0, r1, steps)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}
