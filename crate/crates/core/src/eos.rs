//! Barotropic power-law gas: `p(rho) = rho^gamma`.

use crate::error::{Error, Result};
use crate::field::CellField;
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GasLaw {
    gamma: f64,
}

#[inline]
fn check_positive(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveDensity {
            cell: None,
            value: rho,
        })
    }
}

impl GasLaw {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                constraint: "gamma > 1",
                value: gamma,
            });
        }
        Ok(GasLaw { gamma })
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `p(rho) = rho^gamma`.
    pub fn pressure(&self, rho: f64) -> Result<f64> {
        check_positive(rho)?;
        Ok(self.p(rho))
    }

    /// `p'(rho) = gamma rho^(gamma - 1)`.
    pub fn pressure_derivative(&self, rho: f64) -> Result<f64> {
        check_positive(rho)?;
        Ok(self.dp(rho))
    }

    /// Internal energy per unit volume `P(z) = z^gamma / (gamma - 1)`.
    pub fn internal_energy(&self, z: f64) -> Result<f64> {
        check_positive(z)?;
        Ok(self.big_p(z))
    }

    /// `P'(z) = gamma z^(gamma - 1) / (gamma - 1)`.
    pub fn internal_energy_derivative(&self, z: f64) -> Result<f64> {
        check_positive(z)?;
        Ok(self.big_dp(z))
    }

    /// `Pi(z1 | z2) = P(z1) - P(z2) - P'(z2) (z1 - z2)`, the Bregman
    /// divergence of `P`. Evaluated in a cancellation-free form so that it
    /// stays non-negative in floating point for nearby arguments.
    pub fn relative_internal_energy(&self, z1: f64, z2: f64) -> Result<f64> {
        check_positive(z1)?;
        check_positive(z2)?;
        Ok(self.bregman(z1, z2))
    }

    /// `P(a) - P(b)`, evaluated as `P'(b) (a - b) + Pi(a | b)`.
    pub fn internal_energy_increment(&self, a: f64, b: f64) -> Result<f64> {
        check_positive(a)?;
        check_positive(b)?;
        Ok(self.big_dp(b) * (a - b) + self.bregman(a, b))
    }

    /// `Pi(a | 1) - Pi(b | 1)` without forming either value.
    pub fn relative_energy_increment(&self, a: f64, b: f64) -> Result<f64> {
        check_positive(a)?;
        check_positive(b)?;
        Ok(self.big_dp_minus_ref(b) * (a - b) + self.bregman(a, b))
    }

    /// Pressure of every cell; the error names the first offending cell.
    pub fn pressure_field(&self, rho: &CellField) -> Result<CellField> {
        check_density_field(rho)?;
        Ok(CellField::from_fn(rho.len(), |k| self.p(rho[k])))
    }

    #[inline]
    pub(crate) fn p(&self, rho: f64) -> f64 {
        math::powf(rho, self.gamma)
    }

    #[inline]
    pub(crate) fn dp(&self, rho: f64) -> f64 {
        self.gamma * math::powf(rho, self.gamma - 1.0)
    }

    #[inline]
    pub(crate) fn big_p(&self, z: f64) -> f64 {
        math::powf(z, self.gamma) / (self.gamma - 1.0)
    }

    #[inline]
    pub(crate) fn big_dp(&self, z: f64) -> f64 {
        self.gamma / (self.gamma - 1.0) * math::powf(z, self.gamma - 1.0)
    }

    /// `P'(z) - P'(1)`.
    #[inline]
    pub(crate) fn big_dp_minus_ref(&self, z: f64) -> f64 {
        self.gamma / (self.gamma - 1.0) * math::expm1((self.gamma - 1.0) * math::ln(z))
    }

    pub(crate) fn bregman(&self, z1: f64, z2: f64) -> f64 {
        let g = self.gamma;
        let t = z1 / z2 - 1.0;
        // (1 + t)^g - 1 - g t
        let phi = if t.abs() < 0.05 {
            let mut coeff = g * (g - 1.0) / 2.0;
            let mut power = t * t;
            let mut sum = 0.0;
            let mut k = 2.0;
            loop {
                let term = coeff * power;
                sum += term;
                if term.abs() <= 1e-18 * sum.abs() || k > 60.0 {
                    break;
                }
                coeff *= (g - k) / (k + 1.0);
                power *= t;
                k += 1.0;
            }
            sum
        } else {
            math::expm1(g * math::log1p(t)) - g * t
        };
        math::powf(z2, g) / (g - 1.0) * phi
    }
}

/// Positivity check over a density field.
pub fn check_density_field(rho: &CellField) -> Result<()> {
    for (k, &r) in rho.iter().enumerate() {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::NonPositiveDensity {
                cell: Some(k),
                value: r,
            });
        }
    }
    Ok(())
}
