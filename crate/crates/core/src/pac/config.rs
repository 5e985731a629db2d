use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extrapolation coefficient sequence for one family of iterates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// `max(floor, τ / (τ + 3))`.
    Nesterov {
        floor: f64,
    },
    Constant {
        value: f64,
    },
    /// No extrapolation. Gives the plain proximal coordination baseline and
    /// drops the privacy floor.
    Off,
}

impl Schedule {
    pub fn at(&self, tau: usize) -> f64 {
        match *self {
            Schedule::Nesterov { floor } => {
                let t = tau as f64;
                floor.max(t / (t + 3.0))
            }
            Schedule::Constant { value } => value,
            Schedule::Off => 0.0,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Schedule::Nesterov { floor } => floor > 0.0 && floor < 1.0,
            Schedule::Constant { value } => value > 0.0 && value < 1.0,
            Schedule::Off => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "{name} schedule needs a coefficient in (0, 1): {self:?}"
            )))
        }
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Nesterov { floor: 0.05 }
    }
}

/// How the step size γ_j is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaRule {
    /// `scale / (1 + communication degree)`.
    Degree {
        scale: f64,
    },
    Fixed {
        value: f64,
    },
}

impl Default for GammaRule {
    fn default() -> Self {
        GammaRule::Degree { scale: 1.0 }
    }
}

/// Treatment of an atom's equality rows in its primal step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualityMode {
    /// Every row is priced by μ and penalized.
    Priced,
    /// Rows touching a shared column are priced; the rest are enforced.
    PriceShared,
    /// Every row is enforced; only the copy constraints are priced.
    #[default]
    Enforced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomGains {
    pub rho: f64,
    pub gamma: f64,
    pub alpha: Schedule,
    pub phi: Schedule,
    pub theta: Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainOverride {
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacConfig {
    pub rho: f64,
    pub gamma: GammaRule,
    pub alpha: Schedule,
    pub phi: Schedule,
    pub theta: Schedule,
    /// Per-atom gain overrides keyed by atom index.
    pub overrides: BTreeMap<usize, GainOverride>,
    pub max_iter: usize,
    pub eps_primal: f64,
    pub eps_coord: f64,
    /// Tolerance of the per-atom subproblem; defaults to `min(1e-8, eps_primal / 100)`.
    pub eps_inner: Option<f64>,
    /// Early subproblems stop at this fraction of the atom's local residual,
    /// tightening to `eps_inner` as the iteration settles. 0 solves every
    /// step to `eps_inner`.
    pub inner_forcing: f64,
    /// Which equality rows are priced by μ rather than enforced in the subproblem.
    pub equalities: EqualityMode,
    /// Re-solve the last round's subproblems with the interior-point method.
    pub polish: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Restart an atom's extrapolation sequence when its primal-dual step grows.
    pub restart: bool,
    /// Stop with an error when the residual grows tenfold over 100 rounds.
    pub detect_divergence: bool,
}

impl Default for PacConfig {
    fn default() -> Self {
        PacConfig {
            rho: 1.0,
            gamma: GammaRule::default(),
            alpha: Schedule::default(),
            phi: Schedule::default(),
            theta: Schedule::default(),
            overrides: BTreeMap::new(),
            max_iter: 1000,
            eps_primal: 1e-4,
            eps_coord: 1e-4,
            eps_inner: None,
            inner_forcing: 0.01,
            equalities: EqualityMode::default(),
            polish: true,
            threads: None,
            restart: true,
            detect_divergence: true,
        }
    }
}

impl PacConfig {
    /// Plain proximal atomic coordination: every extrapolation switched off.
    pub fn without_extrapolation(mut self) -> Self {
        self.alpha = Schedule::Off;
        self.phi = Schedule::Off;
        self.theta = Schedule::Off;
        self
    }

    pub fn inner_tolerance(&self) -> f64 {
        self.eps_inner.unwrap_or((self.eps_primal / 100.0).min(1e-8))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Validation(format!("rho must be positive, got {}", self.rho)));
        }
        match self.gamma {
            GammaRule::Degree { scale: v } | GammaRule::Fixed { value: v } if !(v > 0.0 && v.is_finite()) => {
                return Err(Error::Validation(format!("gamma must be positive, got {v}")));
            }
            _ => {}
        }
        self.alpha.validate("alpha")?;
        self.phi.validate("phi")?;
        self.theta.validate("theta")?;
        for (atom, o) in &self.overrides {
            for v in [o.rho, o.gamma].into_iter().flatten() {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Validation(format!(
                        "atom {atom}: gains must be positive, got {v}"
                    )));
                }
            }
        }
        if !(0.0..1.0).contains(&self.inner_forcing) {
            return Err(Error::Validation(format!(
                "inner_forcing must lie in [0, 1), got {}",
                self.inner_forcing
            )));
        }
        if !(self.eps_primal > 0.0 && self.eps_coord > 0.0) || self.max_iter == 0 {
            return Err(Error::Validation("tolerances and max_iter must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Validation("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn gains(&self, atom: usize, degree: usize) -> AtomGains {
        let o = self.overrides.get(&atom).copied().unwrap_or_default();
        let gamma = match self.gamma {
            GammaRule::Degree { scale } => scale / (1.0 + degree as f64),
            GammaRule::Fixed { value } => value,
        };
        AtomGains {
            rho: o.rho.unwrap_or(self.rho),
            gamma: o.gamma.unwrap_or(gamma),
            alpha: self.alpha,
            phi: self.phi,
            theta: self.theta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nesterov_sequence_respects_floor() {
        let s = Schedule::Nesterov { floor: 0.05 };
        assert_eq!(s.at(0), 0.05);
        assert_eq!(s.at(1), 0.25);
        assert!((s.at(97) - 0.97).abs() < 1e-15);
        assert!(s.at(10_000) < 1.0);
    }

    #[test]
    fn zero_floor_is_rejected() {
        let c = PacConfig {
            alpha: Schedule::Nesterov { floor: 0.0 },
            ..PacConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(PacConfig::default().without_extrapolation().validate().is_ok());
    }

    #[test]
    fn degree_damps_gamma() {
        let c = PacConfig::default();
        assert_eq!(c.gains(0, 3).gamma, 0.25);
        let mut c = c;
        c.overrides.insert(
            2,
            GainOverride {
                rho: Some(4.0),
                gamma: None,
            },
        );
        let g = c.gains(2, 1);
        assert_eq!((g.rho, g.gamma), (4.0, 0.5));
    }

    #[test]
    fn inner_tolerance_tracks_primal() {
        let c = PacConfig {
            eps_primal: 1e-3,
            ..PacConfig::default()
        };
        assert_eq!(c.inner_tolerance(), 1e-8);
        let c = PacConfig {
            eps_primal: 1e-7,
            ..PacConfig::default()
        };
        assert!((c.inner_tolerance() - 1e-9).abs() < 1e-24);
    }
}
