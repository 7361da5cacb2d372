//! Weighting-factor schedules: how the structure-loss weight grows with
//! the training epoch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the weight-versus-epoch curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Constant,
    Step,
    Linear,
    Exponential,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Scheme::Constant),
            "step" => Ok(Scheme::Step),
            "linear" => Ok(Scheme::Linear),
            "exponential" => Ok(Scheme::Exponential),
            other => Err(Error::Input(format!(
                "unknown scheme `{other}` (expected constant|step|linear|exponential)"
            ))),
        }
    }
}

/// A weight curve over `[0, total_epochs]`.
///
/// All schemes are nondecreasing, bounded by `[0, lambda_max]`, and reach
/// `lambda_max` at `total_epochs`. The exponential curve is the convex
/// pinned-endpoint ramp `lambda_max * (e^(rate * t) - 1) / (e^rate - 1)`
/// with `t = epoch / total_epochs`; `rate` controls its curvature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub scheme: Scheme,
    pub lambda_max: f64,
    pub total_epochs: u32,
    /// First epoch with nonzero weight (step scheme only).
    pub step_epoch: u32,
    /// Curvature of the exponential scheme.
    pub rate: f64,
}

impl ScheduleSpec {
    /// The step schedule used by the training recipe: weight 0 until epoch
    /// 139, then 1e-4 through epoch 210.
    pub fn default_step() -> Self {
        ScheduleSpec {
            scheme: Scheme::Step,
            lambda_max: 1e-4,
            total_epochs: 210,
            step_epoch: 139,
            rate: 5.0,
        }
    }

    pub fn with_scheme(scheme: Scheme) -> Self {
        ScheduleSpec {
            scheme,
            ..Self::default_step()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_max >= 0.0 && self.lambda_max.is_finite()) {
            return Err(Error::Domain(format!(
                "lambda_max must be non-negative, got {}",
                self.lambda_max
            )));
        }
        if self.total_epochs == 0 {
            return Err(Error::Domain("total_epochs must be positive".into()));
        }
        if self.scheme == Scheme::Step && self.step_epoch > self.total_epochs {
            return Err(Error::Domain(format!(
                "step_epoch {} exceeds total_epochs {}",
                self.step_epoch, self.total_epochs
            )));
        }
        if self.scheme == Scheme::Exponential && !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::Domain(format!(
                "rate must be positive, got {}",
                self.rate
            )));
        }
        Ok(())
    }

    /// Weight at `epoch`. Epochs are integers at the boundaries, but the
    /// curve also accepts fractional epochs (same formulas) for plotting.
    pub fn lambda_at(&self, epoch: f64) -> Result<f64> {
        self.validate()?;
        let total = f64::from(self.total_epochs);
        if !(epoch >= 0.0 && epoch <= total) {
            return Err(Error::Domain(format!(
                "epoch {epoch} outside [0, {total}]"
            )));
        }
        let fraction = epoch / total;
        Ok(match self.scheme {
            Scheme::Constant => self.lambda_max,
            Scheme::Step => {
                if epoch < f64::from(self.step_epoch) {
                    0.0
                } else {
                    self.lambda_max
                }
            }
            Scheme::Linear => self.lambda_max * fraction,
            Scheme::Exponential => {
                self.lambda_max * ((self.rate * fraction).exp_m1() / self.rate.exp_m1())
            }
        })
    }
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self::default_step()
    }
}
