//! Synthetic element-set histories with known injected events.
//!
//! A truth trajectory is integrated with the full force model. Impulses are
//! applied instantaneously in the radial / along-track / cross-track frame,
//! and drag multipliers persist from their epoch onward. At each scheduled
//! observation the true state is perturbed in Cartesian space and converted
//! back to elements.

use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    altitude_km, eci_to_kepler, kepler_to_eci, propagate, sma_to_mean_motion, DynamicsError, EciState, ForceConfig,
    KeplerElements, Vec3, RE_MEAN_KM, SECONDS_PER_DAY,
};
use crate::filter::ObsNoise;
use crate::label::Label;
use crate::tle::{Source, TleRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialElements {
    /// Above the mean Earth radius.
    pub altitude_km: f64,
    #[serde(default)]
    pub eccentricity: f64,
    pub inclination_deg: f64,
    #[serde(default)]
    pub raan_deg: f64,
    #[serde(default)]
    pub argp_deg: f64,
    #[serde(default)]
    pub mean_anomaly_deg: f64,
}

impl InitialElements {
    pub fn to_kepler(&self) -> KeplerElements {
        KeplerElements {
            a: (RE_MEAN_KM + self.altitude_km) * 1e3,
            e: self.eccentricity,
            i: self.inclination_deg.to_radians(),
            raan: self.raan_deg.to_radians(),
            argp: self.argp_deg.to_radians(),
            mean_anomaly: self.mean_anomaly_deg.to_radians(),
        }
    }
}

/// Observation times. The first observation is at the scenario start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Uniform { cadence_hours: f64, count: usize },
    Gaps { dt_hours: Vec<f64> },
}

impl Schedule {
    /// Hours since start of every observation.
    pub fn offsets_hours(&self) -> Vec<f64> {
        match self {
            Schedule::Uniform { cadence_hours, count } => (0..*count).map(|k| k as f64 * cadence_hours).collect(),
            Schedule::Gaps { dt_hours } => {
                let mut t = 0.0;
                let mut out = vec![0.0];
                for dt in dt_hours {
                    t += dt;
                    out.push(t);
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventKind {
    /// Velocity change in m/s along (radial, along-track, cross-track).
    Impulse {
        dv_rtn: [f64; 3],
    },
    DragScale {
        multiplier: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub at_hours: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_norad")]
    pub norad_id: u32,
    pub start: DateTime<Utc>,
    pub elements: InitialElements,
    #[serde(default)]
    pub bstar: f64,
    #[serde(default = "default_source")]
    pub source: Source,
    pub schedule: Schedule,
    #[serde(default)]
    pub noise: ObsNoise,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_step")]
    pub max_step_s: f64,
}

fn default_norad() -> u32 {
    99_999
}

fn default_source() -> Source {
    Source::Tle
}

fn default_max_step() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("trajectory fell below the atmosphere floor after {} observations", .partial.records.len())]
    ReentryDuringGeneration { partial: Box<Generated> },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("truth and prediction lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot read scenario: {0}")]
    Format(String),
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Format(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidScenario(m.into()));
        let offsets = self.schedule.offsets_hours();
        match &self.schedule {
            Schedule::Uniform { cadence_hours, count } => {
                if !(*cadence_hours > 0.0) || *count == 0 {
                    return bad("uniform schedule needs a positive cadence and at least one observation");
                }
            }
            Schedule::Gaps { dt_hours } => {
                if dt_hours.iter().any(|d| !(*d > 0.0)) {
                    return bad("schedule gaps must be positive");
                }
            }
        }
        let span = *offsets.last().unwrap_or(&0.0);
        for ev in &self.events {
            if !(ev.at_hours >= 0.0 && ev.at_hours <= span) {
                return bad("event outside the schedule span");
            }
            if let EventKind::DragScale { multiplier } = ev.kind {
                if !(multiplier >= 0.0) {
                    return bad("drag multiplier must be non-negative");
                }
            }
        }
        let n = &self.noise;
        if [n.tle_pos_sigma, n.tle_vel_sigma, n.supgp_pos_sigma, n.supgp_vel_sigma].iter().any(|s| !(*s >= 0.0)) {
            return bad("noise sigmas must be non-negative");
        }
        if !(self.elements.altitude_km > 0.0) || !(0.0..1.0).contains(&self.elements.eccentricity) {
            return bad("initial orbit must be bound and above the surface");
        }
        if !(self.max_step_s > 0.0) {
            return bad("max_step_s must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub records: Vec<TleRecord>,
    pub truth: Vec<Label>,
    /// Noise-free state at each observation.
    pub true_states: Vec<EciState>,
}

/// Radial, along-track and cross-track unit vectors.
pub fn rtn_frame(s: &EciState) -> [Vec3; 3] {
    let r = s.position.normalize();
    let n = s.position.cross(&s.velocity).normalize();
    let t = n.cross(&r);
    [r, t, n]
}

fn apply_impulse(s: &mut EciState, dv_rtn: &[f64; 3]) {
    let [r, t, n] = rtn_frame(s);
    s.velocity += r * dv_rtn[0] + t * dv_rtn[1] + n * dv_rtn[2];
}

fn wrap_deg(x: f64) -> f64 {
    let d = x.to_degrees().rem_euclid(360.0);
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Mean-motion rate implied by drag at this state, stored as half the
/// derivative in rev/day^2.
fn half_n_dot(s: &EciState, cfg: &ForceConfig, bstar: f64, a: f64) -> f64 {
    if !cfg.enable_drag {
        return 0.0;
    }
    let rho = match crate::dynamics::atmosphere_density((s.position.norm() - cfg.re_equatorial) / 1e3, cfg) {
        Ok(rho) => rho,
        Err(_) => return 0.0,
    };
    let v = s.velocity.norm();
    let b = cfg.ballistic_coefficient(bstar);
    let da_dt = -a * a * rho * b * v.powi(3) / cfg.mu;
    let n = (cfg.mu / a.powi(3)).sqrt();
    let dn_dt = -1.5 * n / a * da_dt;
    0.5 * dn_dt * SECONDS_PER_DAY * SECONDS_PER_DAY / std::f64::consts::TAU
}

fn observe(
    truth: &EciState,
    sc: &Scenario,
    cfg: &ForceConfig,
    rng: &mut ChaCha8Rng,
    epoch: DateTime<Utc>,
    drag_bstar: f64,
) -> Result<TleRecord, DynamicsError> {
    let (sp, sv) = sc.noise.sigmas(sc.source);
    let mut draw = |sigma: f64| -> f64 {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    };
    let dp = Vec3::new(draw(sp), draw(sp), draw(sp));
    let dv = Vec3::new(draw(sv), draw(sv), draw(sv));
    let noisy = EciState::new(truth.position + dp, truth.velocity + dv);
    let el = eci_to_kepler(&noisy, cfg.mu)?;
    let a_true = eci_to_kepler(truth, cfg.mu)?.a;
    Ok(TleRecord {
        norad_id: sc.norad_id,
        epoch,
        mean_motion: sma_to_mean_motion(el.a, cfg.mu)?,
        eccentricity: el.e,
        inclination: el.i.to_degrees(),
        raan: wrap_deg(el.raan),
        argp: wrap_deg(el.argp),
        mean_anomaly: wrap_deg(el.mean_anomaly),
        bstar: sc.bstar,
        n_dot: half_n_dot(truth, cfg, drag_bstar, a_true),
        source: sc.source,
    })
}

/// Integrates the scenario and returns noisy records with truth labels.
///
/// Records always carry the scenario's nominal B*; drag multipliers act on
/// the truth trajectory only.
pub fn generate(sc: &Scenario, cfg: &ForceConfig) -> Result<Generated, SynthError> {
    sc.validate()?;
    let offsets = sc.schedule.offsets_hours();
    let mut events = sc.events.clone();
    events.sort_by(|a, b| a.at_hours.total_cmp(&b.at_hours));

    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut state = kepler_to_eci(&sc.elements.to_kepler(), cfg.mu)?;
    let mut t = 0.0;
    let mut multiplier = 1.0;
    let mut in_decay = false;
    let mut out = Generated { records: Vec::new(), truth: Vec::new(), true_states: Vec::new() };
    let mut next_event = 0;

    for &obs_h in &offsets {
        let mut label = Label::Normal;
        let mut advance = |state: &mut EciState, to_h: f64, multiplier: f64| -> Result<(), DynamicsError> {
            *state = propagate(state, t, to_h * 3600.0, cfg, sc.bstar * multiplier, sc.max_step_s)?;
            t = to_h * 3600.0;
            Ok(())
        };
        let mut result = Ok(());
        while result.is_ok() && next_event < events.len() && events[next_event].at_hours <= obs_h {
            let ev = events[next_event];
            result = advance(&mut state, ev.at_hours, multiplier);
            match ev.kind {
                EventKind::Impulse { dv_rtn } => {
                    apply_impulse(&mut state, &dv_rtn);
                    label = Label::Maneuver;
                }
                EventKind::DragScale { multiplier: m } => {
                    multiplier = m;
                    in_decay = true;
                }
            }
            next_event += 1;
        }
        let result = result.and_then(|_| advance(&mut state, obs_h, multiplier));
        match result {
            Ok(()) => {}
            Err(DynamicsError::BelowModelFloor { .. }) => {
                if let Some(last) = out.truth.last_mut() {
                    *last = Label::Breakup;
                }
                return Err(SynthError::ReentryDuringGeneration { partial: Box::new(out) });
            }
            Err(e) => return Err(e.into()),
        }
        if label == Label::Normal && in_decay {
            label = Label::Decay;
        }
        let epoch = sc.start + Duration::microseconds((obs_h * 3.6e9).round() as i64);
        let rec = observe(&state, sc, cfg, &mut rng, epoch, sc.bstar * multiplier)?;
        out.records.push(rec);
        out.truth.push(label);
        out.true_states.push(state);
    }
    Ok(out)
}

/// Detection quality for one anomaly class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub label: Label,
    pub truth_events: usize,
    pub detected: usize,
    pub predictions: usize,
    pub matched_predictions: usize,
    pub precision: f64,
    pub recall: f64,
    /// False when there were no predictions; precision is then reported as 0.
    pub precision_defined: bool,
    /// False when there were no truth events; recall is then reported as 0.
    pub recall_defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub tolerance: usize,
    pub classes: Vec<ClassReport>,
}

impl DetectionReport {
    pub fn class(&self, label: Label) -> Option<&ClassReport> {
        self.classes.iter().find(|c| c.label == label)
    }
}

pub const DEFAULT_TOLERANCE: usize = 3;

fn near(indices: &[usize], k: usize, tol: usize) -> bool {
    indices.iter().any(|&i| i.abs_diff(k) <= tol)
}

/// Per-class precision and recall. A truth event is detected when a
/// prediction of the same class lies within `tolerance` timesteps of it;
/// a prediction is correct when a truth event of its class lies within the
/// same window.
pub fn detection_report(truth: &[Label], predicted: &[Label], tolerance: usize) -> Result<DetectionReport, SynthError> {
    if truth.len() != predicted.len() {
        return Err(SynthError::LengthMismatch(truth.len(), predicted.len()));
    }
    let classes = [Label::Maneuver, Label::Decay, Label::Breakup]
        .into_iter()
        .map(|label| {
            let t: Vec<usize> = (0..truth.len()).filter(|&k| truth[k] == label).collect();
            let p: Vec<usize> = (0..predicted.len()).filter(|&k| predicted[k] == label).collect();
            let detected = t.iter().filter(|&&k| near(&p, k, tolerance)).count();
            let matched = p.iter().filter(|&&k| near(&t, k, tolerance)).count();
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            ClassReport {
                label,
                truth_events: t.len(),
                detected,
                predictions: p.len(),
                matched_predictions: matched,
                precision: ratio(matched, p.len()),
                recall: ratio(detected, t.len()),
                precision_defined: !p.is_empty(),
                recall_defined: !t.is_empty(),
            }
        })
        .collect();
    Ok(DetectionReport { tolerance, classes })
}

/// Altitude of a state above the mean Earth radius, from its osculating
/// semi-major axis.
pub fn state_altitude_km(s: &EciState, mu: f64) -> Result<f64, DynamicsError> {
    Ok(altitude_km(eci_to_kepler(s, mu)?.a))
}
