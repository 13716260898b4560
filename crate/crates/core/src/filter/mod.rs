//! Tiers 2 and 3: a bank of three unscented Kalman filters combined as an
//! interacting multiple model (IMM) estimator over ECI states.
//!
//! Modes:
//! - `M0` station-keeping: small process noise, nominal dynamics.
//! - `M1` maneuver: large velocity-channel noise.
//! - `M2` decay: large position-channel noise, scaled with altitude.
//!
//! The supGP calibration tier is the observation covariance switch in
//! [`ObsNoise::matrix`]: records tagged supGP are fused with a 400x tighter
//! covariance than standard TLEs.

mod imm;
mod ukf;

pub use imm::{
    adapt_to_altitude, assign_label, imm_step, init_state, refine_initial_state, AltitudeAdaptation, ImmFilter,
    ImmState, ImmStepRecord, StepOutcome,
};
pub use ukf::{
    log_gaussian_density, sigma_points, sqrt_psd, ukf_predict, ukf_update, PredictContext, SigmaPoints, UpdateResult,
    SIGMA_COUNT,
};

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsError, ForceConfig, Vec6};
use crate::tle::Source;

pub const STATE_DIM: usize = 6;
pub const MODE_COUNT: usize = 3;
pub type StateVector = Vec6;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("covariance is not positive definite after jitter escalation")]
    NotPositiveDefinite,
    #[error("innovation covariance is singular")]
    SingularInnovationCovariance,
    #[error("sigma point fell below the atmosphere floor during prediction: {0}")]
    ReentryDuringPredict(DynamicsError),
    #[error("cannot convert observation: {0}")]
    Conversion(DynamicsError),
    #[error("observation epoch precedes filter epoch")]
    EpochOrder,
    #[error("every mode failed: {0}")]
    AllModesFailed(String),
    #[error("initial orbit fit did not converge in {0} iterations")]
    InitNotConverged(usize),
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
}

/// Unscented transform scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UkfConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self { alpha: 1e-2, beta: 2.0, kappa: 0.0 }
    }
}

impl UkfConfig {
    pub fn lambda(&self) -> f64 {
        let n = STATE_DIM as f64;
        self.alpha * self.alpha * (n + self.kappa) - n
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        if (STATE_DIM as f64 + self.lambda()).abs() < 1e-300 {
            return Err("n + lambda must be non-zero".into());
        }
        Ok(())
    }
}

/// Per-mode process noise, applied as diag(sigma_pos^2 I3, sigma_vel^2 I3)
/// per reference interval of elapsed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub sigma_pos: f64,
    pub sigma_vel: f64,
    /// Multiply the noise by the altitude-adapted q-scale.
    #[serde(default)]
    pub altitude_scaled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeSet {
    pub nominal: ModeConfig,
    pub maneuver: ModeConfig,
    pub decay: ModeConfig,
}

impl Default for ModeSet {
    fn default() -> Self {
        Self {
            nominal: ModeConfig { sigma_pos: 100.0, sigma_vel: 0.01, altitude_scaled: false },
            maneuver: ModeConfig { sigma_pos: 500.0, sigma_vel: 1.0, altitude_scaled: false },
            decay: ModeConfig { sigma_pos: 2000.0, sigma_vel: 0.1, altitude_scaled: true },
        }
    }
}

impl ModeSet {
    pub fn as_array(&self) -> [ModeConfig; MODE_COUNT] {
        [self.nominal, self.maneuver, self.decay]
    }
}

/// Observation noise standard deviations per source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObsNoise {
    pub tle_pos_sigma: f64,
    pub tle_vel_sigma: f64,
    pub supgp_pos_sigma: f64,
    pub supgp_vel_sigma: f64,
}

impl Default for ObsNoise {
    fn default() -> Self {
        Self { tle_pos_sigma: 1000.0, tle_vel_sigma: 1.0, supgp_pos_sigma: 50.0, supgp_vel_sigma: 0.05 }
    }
}

impl ObsNoise {
    pub fn sigmas(&self, source: Source) -> (f64, f64) {
        match source {
            Source::Tle => (self.tle_pos_sigma, self.tle_vel_sigma),
            Source::Supgp => (self.supgp_pos_sigma, self.supgp_vel_sigma),
        }
    }

    pub fn matrix(&self, source: Source) -> StateMatrix {
        let (p, v) = self.sigmas(source);
        diagonal(p, v)
    }
}

pub(crate) fn diagonal(pos: f64, vel: f64) -> StateMatrix {
    StateMatrix::from_diagonal(&Vec6::new(pos * pos, pos * pos, pos * pos, vel * vel, vel * vel, vel * vel))
}

/// Mixing, adaptation and label-assignment parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImmConfig {
    /// Row i gives P(mode j at t | mode i at t-1), calibrated at 550 km.
    pub transition: [[f64; MODE_COUNT]; MODE_COUNT],
    pub label_threshold: f64,
    pub q_scale_reference_km: f64,
    pub q_scale_clip: [f64; 2],
    pub prior_high: [f64; MODE_COUNT],
    pub prior_high_km: f64,
    pub prior_low: [f64; MODE_COUNT],
    pub prior_low_km: f64,
    pub decay_boost: f64,
    pub decay_boost_start_km: f64,
    pub decay_boost_full_km: f64,
    /// Initial covariance = R_TLE * this factor.
    pub init_cov_inflation: f64,
    /// Elapsed time over which process noise accrues one full sigma^2, seconds.
    pub process_noise_interval_s: f64,
    pub max_step_s: f64,
}

impl Default for ImmConfig {
    fn default() -> Self {
        Self {
            transition: [[0.97, 0.015, 0.015], [0.10, 0.85, 0.05], [0.02, 0.03, 0.95]],
            label_threshold: 0.3,
            q_scale_reference_km: 550.0,
            q_scale_clip: [1.0, 20.0],
            prior_high: [0.90, 0.05, 0.05],
            prior_high_km: 500.0,
            prior_low: [0.05, 0.05, 0.90],
            prior_low_km: 200.0,
            decay_boost: 0.10,
            decay_boost_start_km: 350.0,
            decay_boost_full_km: 200.0,
            init_cov_inflation: 10.0,
            process_noise_interval_s: 28800.0,
            max_step_s: 60.0,
        }
    }
}

impl ImmConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|p| !(*p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(format!("transition row {i} must be a probability vector"));
            }
        }
        for p in [&self.prior_high, &self.prior_low] {
            if p.iter().any(|x| !(*x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err("mode priors must be probability vectors".into());
            }
        }
        if !(self.label_threshold > 0.0 && self.label_threshold < 1.0) {
            return Err("label_threshold must be in (0, 1)".into());
        }
        if !(self.prior_low_km < self.prior_high_km) || !(self.decay_boost_full_km < self.decay_boost_start_km) {
            return Err("altitude adaptation breakpoints out of order".into());
        }
        if !(self.decay_boost >= 0.0 && self.decay_boost <= self.transition[0][0]) {
            return Err("decay_boost must be in [0, T00]".into());
        }
        if !(self.q_scale_clip[0] > 0.0 && self.q_scale_clip[0] <= self.q_scale_clip[1]) {
            return Err("invalid q_scale_clip".into());
        }
        if !(self.init_cov_inflation > 0.0 && self.process_noise_interval_s > 0.0 && self.max_step_s > 0.0) {
            return Err("init_cov_inflation and the time constants must be positive".into());
        }
        Ok(())
    }
}

/// Everything the filter tier needs, read-only after construction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub force: ForceConfig,
    pub ukf: UkfConfig,
    pub imm: ImmConfig,
    pub modes: ModeSet,
    pub obs_noise: ObsNoise,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        self.force.validate().map_err(FilterError::InvalidConfig)?;
        self.ukf.validate().map_err(FilterError::InvalidConfig)?;
        self.imm.validate().map_err(FilterError::InvalidConfig)?;
        let modes = self.modes.as_array();
        if modes.iter().any(|m| !(m.sigma_pos > 0.0 && m.sigma_vel > 0.0)) {
            return Err(FilterError::InvalidConfig("mode sigmas must be positive".into()));
        }
        let n = &self.obs_noise;
        if [n.tle_pos_sigma, n.tle_vel_sigma, n.supgp_pos_sigma, n.supgp_vel_sigma].iter().any(|s| !(*s > 0.0)) {
            return Err(FilterError::InvalidConfig("observation sigmas must be positive".into()));
        }
        Ok(())
    }
}
