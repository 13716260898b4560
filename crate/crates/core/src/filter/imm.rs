use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dynamics::{altitude_from_mean_motion, propagate, record_to_eci, EciState};
use crate::label::Label;
use crate::tle::{Source, TleRecord};

use super::ukf::{regularize, sqrt_psd, ukf_predict, ukf_update, PredictContext};
use super::{diagonal, FilterConfig, FilterError, ImmConfig, StateMatrix, StateVector, MODE_COUNT, STATE_DIM};

const REFINE_MAX_ITERATIONS: usize = 25;
const REFINE_TOLERANCE: f64 = 1e-6;
const REFINE_DIFF_STEP: f64 = 1e-3;

/// Altitude-dependent filter parameters for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltitudeAdaptation {
    pub q_scale: f64,
    pub priors: [f64; MODE_COUNT],
    pub transition: [[f64; MODE_COUNT]; MODE_COUNT],
}

pub fn adapt_to_altitude(h_km: f64, cfg: &ImmConfig) -> AltitudeAdaptation {
    let raw = (cfg.q_scale_reference_km / h_km).powi(2);
    let q_scale = raw.clamp(cfg.q_scale_clip[0], cfg.q_scale_clip[1]);

    let w = ((h_km - cfg.prior_low_km) / (cfg.prior_high_km - cfg.prior_low_km)).clamp(0.0, 1.0);
    let mut priors = [0.0; MODE_COUNT];
    for k in 0..MODE_COUNT {
        priors[k] = (1.0 - w) * cfg.prior_low[k] + w * cfg.prior_high[k];
    }

    let ramp =
        ((cfg.decay_boost_start_km - h_km) / (cfg.decay_boost_start_km - cfg.decay_boost_full_km)).clamp(0.0, 1.0);
    let mut transition = cfg.transition;
    let boost = cfg.decay_boost * ramp;
    transition[0][2] += boost;
    transition[0][0] -= boost;

    AltitudeAdaptation { q_scale, priors, transition }
}

/// Argmax mode if its probability exceeds `threshold`, else NORMAL. Ties go
/// to the lower mode index.
pub fn assign_label(mu: &[f64; MODE_COUNT], threshold: f64) -> Label {
    let mut best = 0;
    for k in 1..MODE_COUNT {
        if mu[k] > mu[best] {
            best = k;
        }
    }
    if mu[best] <= threshold {
        return Label::Normal;
    }
    match best {
        1 => Label::Maneuver,
        2 => Label::Decay,
        _ => Label::Normal,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImmState {
    pub means: [StateVector; MODE_COUNT],
    pub covs: [StateMatrix; MODE_COUNT],
    pub mu: [f64; MODE_COUNT],
    pub last_epoch: DateTime<Utc>,
    /// Drag term used when propagating to the next observation.
    pub last_bstar: f64,
}

impl ImmState {
    /// Probability-weighted mean and covariance across modes.
    pub fn combined(&self) -> (StateVector, StateMatrix) {
        let mut mean = StateVector::zeros();
        for k in 0..MODE_COUNT {
            mean += self.mu[k] * self.means[k];
        }
        let mut cov = StateMatrix::zeros();
        for k in 0..MODE_COUNT {
            let d = self.means[k] - mean;
            cov += self.mu[k] * (self.covs[k] + d * d.transpose());
        }
        (mean, cov)
    }
}

fn observation_altitude(obs: &TleRecord) -> Result<f64, FilterError> {
    altitude_from_mean_motion(obs.mean_motion).map_err(FilterError::Conversion)
}

pub fn init_state(first: &TleRecord, cfg: &FilterConfig) -> Result<ImmState, FilterError> {
    let x = record_to_eci(first, cfg.force.mu).map_err(FilterError::Conversion)?.to_vector();
    let h = observation_altitude(first)?;
    let adapt = adapt_to_altitude(h, &cfg.imm);
    let cov = cfg.obs_noise.matrix(Source::Tle) * cfg.imm.init_cov_inflation;
    Ok(ImmState {
        means: [x; MODE_COUNT],
        covs: [cov; MODE_COUNT],
        mu: adapt.priors,
        last_epoch: first.epoch,
        last_bstar: first.bstar,
    })
}

/// Re-initializes from a freshly initialized state and the next
/// observation. The state at the first epoch is fitted by Gauss-Newton to
/// its prior and to the second observation under nominal dynamics, then
/// mapped forward, so the result carries the orbital energy implied by the
/// phase advance between the two epochs. Every mode receives the fitted
/// moments plus nominal process noise; `mu` restarts from the altitude priors.
pub fn refine_initial_state(state: &ImmState, second: &TleRecord, cfg: &FilterConfig) -> Result<ImmState, FilterError> {
    let dt = (second.epoch - state.last_epoch).num_microseconds().ok_or(FilterError::EpochOrder)? as f64 * 1e-6;
    if dt < 0.0 {
        return Err(FilterError::EpochOrder);
    }
    let z = record_to_eci(second, cfg.force.mu).map_err(FilterError::Conversion)?.to_vector();
    let adapt = adapt_to_altitude(observation_altitude(second)?, &cfg.imm);
    let (mean0, _) = state.combined();
    let l0 = sqrt_psd(&state.covs[0])?;
    let (sp, sv) = cfg.obs_noise.sigmas(second.source);
    let w: StateVector = StateVector::from_fn(|k, _| if k < 3 { 1.0 / sp } else { 1.0 / sv });
    let flow = |u: &StateVector| -> Result<StateVector, FilterError> {
        let x = mean0 + l0 * u;
        propagate(&EciState::from_vector(&x), 0.0, dt, &cfg.force, state.last_bstar, cfg.imm.max_step_s)
            .map(|s| s.to_vector())
            .map_err(FilterError::ReentryDuringPredict)
    };

    // whitened coordinates: x = mean0 + l0 u, residuals scaled by w
    let mut u = StateVector::zeros();
    let mut converged = None;
    for _ in 0..REFINE_MAX_ITERATIONS {
        let fx = flow(&u)?;
        let mut g = StateMatrix::zeros();
        for k in 0..STATE_DIM {
            let mut up = u;
            let mut dn = u;
            up[k] += REFINE_DIFF_STEP;
            dn[k] -= REFINE_DIFF_STEP;
            let col = (flow(&up)? - flow(&dn)?).component_mul(&w) / (2.0 * REFINE_DIFF_STEP);
            g.set_column(k, &col);
        }
        let e = (z - fx).component_mul(&w);
        let h = StateMatrix::identity() + g.transpose() * g;
        let ch = h.cholesky().ok_or(FilterError::NotPositiveDefinite)?;
        let delta = ch.solve(&(g.transpose() * e - u));
        u += delta;
        if delta.norm() < REFINE_TOLERANCE {
            converged = Some((g, ch.inverse()));
            break;
        }
    }
    let (g, h_inv) = converged.ok_or(FilterError::InitNotConverged(REFINE_MAX_ITERATIONS))?;
    let mean = flow(&u)?;
    let fl = StateMatrix::from_diagonal(&w.map(|x| 1.0 / x)) * g;
    let nominal = &cfg.modes.nominal;
    let q = diagonal(nominal.sigma_pos, nominal.sigma_vel) * (dt / cfg.imm.process_noise_interval_s);
    let cov = regularize(&(fl * h_inv * fl.transpose() + q))?;
    Ok(ImmState {
        means: [mean; MODE_COUNT],
        covs: [cov; MODE_COUNT],
        mu: adapt.priors,
        last_epoch: second.epoch,
        last_bstar: second.bstar,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: ImmState,
    /// Per-mode log-likelihood; `None` where the mode failed this step.
    pub log_likelihoods: [Option<f64>; MODE_COUNT],
    pub adaptation: AltitudeAdaptation,
}

fn log_sum_exp(v: &[f64; MODE_COUNT]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// One predict/update cycle of the interacting multiple model filter.
pub fn imm_step(state: &ImmState, obs: &TleRecord, cfg: &FilterConfig) -> Result<StepOutcome, FilterError> {
    let dt = (obs.epoch - state.last_epoch).num_microseconds().ok_or(FilterError::EpochOrder)? as f64 * 1e-6;
    if dt < 0.0 {
        return Err(FilterError::EpochOrder);
    }
    let z = record_to_eci(obs, cfg.force.mu).map_err(FilterError::Conversion)?.to_vector();
    let adapt = adapt_to_altitude(observation_altitude(obs)?, &cfg.imm);
    let t = &adapt.transition;

    let mut c = [0.0; MODE_COUNT];
    for j in 0..MODE_COUNT {
        for i in 0..MODE_COUNT {
            c[j] += t[i][j] * state.mu[i];
        }
    }

    let mut mixed_means = state.means;
    let mut mixed_covs = state.covs;
    for j in 0..MODE_COUNT {
        if c[j] <= 0.0 {
            continue;
        }
        let w: [f64; MODE_COUNT] = std::array::from_fn(|i| t[i][j] * state.mu[i] / c[j]);
        let mut m = StateVector::zeros();
        for i in 0..MODE_COUNT {
            m += w[i] * (state.means[i] - state.means[j]);
        }
        m += state.means[j];
        let mut p = StateMatrix::zeros();
        for i in 0..MODE_COUNT {
            let d = state.means[i] - m;
            p += w[i] * (state.covs[i] + d * d.transpose());
        }
        mixed_means[j] = m;
        mixed_covs[j] = regularize(&p)?;
    }

    let ctx = PredictContext {
        force: &cfg.force,
        ukf: &cfg.ukf,
        max_step_s: cfg.imm.max_step_s,
        noise_interval_s: cfg.imm.process_noise_interval_s,
    };
    let r = cfg.obs_noise.matrix(obs.source);
    let modes = cfg.modes.as_array();

    let mut means = mixed_means;
    let mut covs = mixed_covs;
    let mut lls = [None; MODE_COUNT];
    let mut errors = Vec::new();
    for j in 0..MODE_COUNT {
        let q_scale = if modes[j].altitude_scaled { adapt.q_scale } else { 1.0 };
        let result = ukf_predict(&modes[j], &mixed_means[j], &mixed_covs[j], dt, state.last_bstar, q_scale, &ctx)
            .and_then(|(pm, pc)| ukf_update(&pm, &pc, &z, &r, &cfg.ukf));
        match result {
            Ok(u) if u.log_likelihood.is_finite() => {
                means[j] = u.mean;
                covs[j] = u.cov;
                lls[j] = Some(u.log_likelihood);
            }
            Ok(_) => errors.push(format!("mode {j}: non-finite likelihood")),
            Err(e) => errors.push(format!("mode {j}: {e}")),
        }
    }

    let log_post: [f64; MODE_COUNT] = std::array::from_fn(|j| match lls[j] {
        Some(ll) if c[j] > 0.0 => c[j].ln() + ll,
        _ => f64::NEG_INFINITY,
    });
    let norm = log_sum_exp(&log_post);
    if !norm.is_finite() {
        return Err(FilterError::AllModesFailed(errors.join("; ")));
    }
    let mut mu: [f64; MODE_COUNT] = std::array::from_fn(|j| (log_post[j] - norm).exp());
    let total: f64 = mu.iter().sum();
    for m in mu.iter_mut() {
        *m /= total;
    }

    Ok(StepOutcome {
        state: ImmState { means, covs, mu, last_epoch: obs.epoch, last_bstar: obs.bstar },
        log_likelihoods: lls,
        adaptation: adapt,
    })
}

/// Per-observation filter output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImmStepRecord {
    pub norad_id: u32,
    pub epoch: DateTime<Utc>,
    pub mu: [f64; MODE_COUNT],
    pub label: Label,
    pub source: Source,
    pub log_likelihoods: [Option<f64>; MODE_COUNT],
}

/// Runs the filter over one satellite's history.
#[derive(Debug, Clone)]
pub struct ImmFilter {
    config: FilterConfig,
    state: Option<ImmState>,
    steps: usize,
}

impl ImmFilter {
    pub fn new(config: FilterConfig) -> Result<Self, FilterError> {
        config.validate()?;
        Ok(Self { config, state: None, steps: 0 })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn state(&self) -> Option<&ImmState> {
        self.state.as_ref()
    }

    pub fn reset(&mut self) {
        self.state = None;
        self.steps = 0;
    }

    /// Initializes on the first record and refines on the second; later
    /// records run one IMM step. If the refinement fails the second record
    /// falls back to an ordinary step. The state is left untouched on error.
    pub fn step(&mut self, obs: &TleRecord) -> Result<ImmStepRecord, FilterError> {
        let (state, lls) = match &self.state {
            None => (init_state(obs, &self.config)?, [None; MODE_COUNT]),
            Some(s) => {
                let refined = if self.steps == 1 && obs.epoch > s.last_epoch {
                    refine_initial_state(s, obs, &self.config).ok()
                } else {
                    None
                };
                match refined {
                    Some(r) => (r, [None; MODE_COUNT]),
                    None => {
                        let out = imm_step(s, obs, &self.config)?;
                        (out.state, out.log_likelihoods)
                    }
                }
            }
        };
        self.steps += 1;
        let rec = ImmStepRecord {
            norad_id: obs.norad_id,
            epoch: obs.epoch,
            mu: state.mu,
            label: assign_label(&state.mu, self.config.imm.label_threshold),
            source: obs.source,
            log_likelihoods: lls,
        };
        self.state = Some(state);
        Ok(rec)
    }

    pub fn run(&mut self, history: &[TleRecord]) -> Result<Vec<ImmStepRecord>, FilterError> {
        self.reset();
        history.iter().map(|r| self.step(r)).collect()
    }
}
