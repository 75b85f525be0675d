//! The exponential semi-variogram model.

use crate::error::{GeoError, Result};

/// Partial-sill threshold used by the log-based practical range.
pub const PRACTICAL_RANGE_THRESHOLD: f64 = 0.05;

/// `γ(h) = c0 + σ²0 (1 − exp(−θh))` for `h > 0`, `γ(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialVariogramModel {
    /// Nugget `c0 >= 0`.
    pub nugget: f64,
    /// Partial sill `σ²0 > 0`.
    pub partial_sill: f64,
    /// Shape `θ > 0`; the scale parameter is `1/θ`.
    pub theta: f64,
}

impl ExponentialVariogramModel {
    pub fn new(nugget: f64, partial_sill: f64, theta: f64) -> Result<Self> {
        let m = Self {
            nugget,
            partial_sill,
            theta,
        };
        m.validate()?;
        Ok(m)
    }

    /// Model whose conventional range `3/θ` equals `range`.
    pub fn from_range(nugget: f64, partial_sill: f64, range: f64) -> Result<Self> {
        Self::new(nugget, partial_sill, 3.0 / range)
    }

    /// Model with scale parameter `1/θ`.
    pub fn from_scale(nugget: f64, partial_sill: f64, scale: f64) -> Result<Self> {
        Self::new(nugget, partial_sill, 1.0 / scale)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return Err(GeoError::InvalidModel(format!("nugget {} must be >= 0", self.nugget)));
        }
        if !(self.partial_sill.is_finite() && self.partial_sill > 0.0) {
            return Err(GeoError::InvalidModel(format!(
                "partial sill {} must be > 0",
                self.partial_sill
            )));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(GeoError::InvalidModel(format!("theta {} must be > 0", self.theta)));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        1.0 / self.theta
    }

    pub fn total_sill(&self) -> f64 {
        self.nugget + self.partial_sill
    }

    pub fn gamma(&self, h: f64) -> f64 {
        if h <= 0.0 {
            0.0
        } else {
            self.nugget + self.partial_sill * (1.0 - (-self.theta * h).exp())
        }
    }

    /// `C(h)`: total sill at `h = 0`, `σ²0 exp(−θh)` otherwise.
    pub fn covariance(&self, h: f64) -> f64 {
        if h <= 0.0 {
            self.total_sill()
        } else {
            self.structural_covariance(h)
        }
    }

    /// Covariance of the spatially structured part, `σ²0 exp(−θh)` for all `h >= 0`.
    pub fn structural_covariance(&self, h: f64) -> f64 {
        self.partial_sill * (-self.theta * h).exp()
    }

    pub fn practical_range(&self) -> PracticalRange {
        practical_range(self)
    }

    /// Same model with nugget and partial sill multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            nugget: self.nugget * factor,
            partial_sill: self.partial_sill * factor,
            theta: self.theta,
        }
    }
}

/// Two range conventions for the exponential model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PracticalRange {
    /// `ln(σ²0 / 0.05) / θ`: lag where the structured covariance drops to 0.05.
    pub log_threshold: f64,
    /// `3 / θ`: lag where 95% of the partial sill is reached.
    pub range3: f64,
}

pub fn practical_range(model: &ExponentialVariogramModel) -> PracticalRange {
    PracticalRange {
        log_threshold: (model.partial_sill / PRACTICAL_RANGE_THRESHOLD).ln() / model.theta,
        range3: 3.0 / model.theta,
    }
}

/// `γ(h)` of a univariate model.
pub fn model_gamma(model: &ExponentialVariogramModel, h: f64) -> f64 {
    model.gamma(h)
}

/// `C(h) = C(0) − γ(h)`.
pub fn covariance_from_variogram(model: &ExponentialVariogramModel, h: f64) -> f64 {
    model.covariance(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gamma_examples() {
        let m = ExponentialVariogramModel::new(0.2, 0.8, 0.01).unwrap();
        assert_eq!(m.gamma(0.0), 0.0);
        let expected = 0.2 + 0.8 * (1.0 - (-1.0f64).exp());
        assert!((m.gamma(100.0) - expected).abs() < 1e-15);
        assert!((m.gamma(100.0) - 0.70569).abs() < 1e-5);
        assert!((m.gamma(20.0 / m.theta) - m.total_sill()).abs() < 1e-6);
    }

    #[test]
    fn covariance_examples() {
        let m = ExponentialVariogramModel::new(0.2, 0.8, 0.01).unwrap();
        assert_eq!(covariance_from_variogram(&m, 0.0), 1.0);
        let u = ExponentialVariogramModel::new(0.0, 1.0, 0.01).unwrap();
        assert!((covariance_from_variogram(&u, 100.0) - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn practical_range_examples() {
        let m = ExponentialVariogramModel::new(0.0, 1.0, 0.01).unwrap();
        let r = practical_range(&m);
        assert!((r.log_threshold - 20f64.ln() * 100.0).abs() < 1e-9);
        assert!((r.log_threshold - 299.57).abs() < 0.01);
        assert!((r.range3 - 300.0).abs() < 1e-9);

        let s = ExponentialVariogramModel::from_scale(0.0, 0.489, 252.0).unwrap();
        assert!((s.practical_range().range3 - 756.0).abs() < 1e-9);

        let b = ExponentialVariogramModel::new(0.0, 0.05, 0.01).unwrap();
        assert_eq!(b.practical_range().log_threshold, 0.0);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(ExponentialVariogramModel::new(-0.1, 1.0, 0.01).is_err());
        assert!(ExponentialVariogramModel::new(0.0, 0.0, 0.01).is_err());
        assert!(ExponentialVariogramModel::new(0.0, 1.0, 0.0).is_err());
        assert!(ExponentialVariogramModel::new(0.0, 1.0, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn covariance_gamma_identity(
            c0 in 0.0f64..2.0, s in 0.01f64..5.0, theta in 1e-4f64..0.1, h in 1e-3f64..5000.0
        ) {
            let m = ExponentialVariogramModel::new(c0, s, theta).unwrap();
            prop_assert!((m.covariance(0.0) - m.covariance(h) - m.gamma(h)).abs() < 1e-12);
        }

        #[test]
        fn gamma_monotone(c0 in 0.0f64..2.0, s in 0.01f64..5.0, theta in 1e-4f64..0.1) {
            let m = ExponentialVariogramModel::new(c0, s, theta).unwrap();
            let mut prev = m.gamma(1e-6);
            for k in 1..=1000 {
                let g = m.gamma(k as f64 * 10.0 / theta / 1000.0);
                prop_assert!(g >= prev);
                prev = g;
            }
        }
    }
}
