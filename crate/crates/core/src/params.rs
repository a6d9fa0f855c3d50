use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters shared by the quantum, classical and noisy models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Intrinsic frequency.
    pub omega: f64,
    /// Linear pumping (single-photon creation) rate.
    pub k1: f64,
    /// Nonlinear damping (two-photon absorption) rate.
    pub k2: f64,
    /// Conjugate coupling strength; also the single-photon loss rate.
    pub eps: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { omega: 2.0, k1: 1.0, k2: 0.2, eps: 0.0 }
    }
}

impl ModelParams {
    pub fn new(omega: f64, k1: f64, k2: f64, eps: f64) -> Result<Self> {
        let p = Self { omega, k1, k2, eps };
        p.validate()?;
        Ok(p)
    }

    pub fn with_eps(self, eps: f64) -> Self {
        Self { eps, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega, self.k1, self.k2, self.eps].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter(format!("non-finite parameter in {self:?}")));
        }
        if self.omega <= 0.0 {
            return Err(Error::InvalidParameter(format!("omega must be > 0, got {}", self.omega)));
        }
        if self.k1 < 0.0 || self.k2 < 0.0 || self.eps < 0.0 {
            return Err(Error::InvalidParameter(format!("rates must be nonnegative: {self:?}")));
        }
        if !self.is_weak_quantum() {
            log::warn!("k1 = {} <= k2 = {}: outside the weak-quantum regime", self.k1, self.k2);
        }
        Ok(())
    }

    /// `k1 > k2`: semiclassical treatments apply.
    pub fn is_weak_quantum(&self) -> bool {
        self.k1 > self.k2
    }

    /// Classical inverse Hopf threshold of the coupled equations.
    pub fn eps_hopf(&self) -> f64 {
        self.k1
    }

    /// Classical pitchfork threshold where the inhomogeneous pair is born.
    pub fn eps_pitchfork(&self) -> f64 {
        self.omega * self.omega / (self.omega + self.k1)
    }

    /// Squared radius of the uncoupled classical limit cycle, `k1 / (2 k2)`.
    pub fn limit_cycle_power(&self) -> f64 {
        self.k1 / (2.0 * self.k2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_for_default_set() {
        let p = ModelParams::default();
        assert_eq!(p.eps_hopf(), 1.0);
        assert!((p.eps_pitchfork() - 4.0 / 3.0).abs() < 1e-15);
        assert!((p.limit_cycle_power() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ModelParams::new(0.0, 1.0, 0.2, 0.0).is_err());
        assert!(ModelParams::new(2.0, -1.0, 0.2, 0.0).is_err());
        assert!(ModelParams::new(2.0, 1.0, 0.2, f64::NAN).is_err());
        // strong-quantum is allowed, only warned about
        assert!(ModelParams::new(2.0, 0.1, 1.0, 0.5).is_ok());
    }
}
