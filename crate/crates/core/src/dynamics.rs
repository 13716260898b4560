//! Orbital element conversions, force model and RK4 propagation.
//!
//! Mean elements are treated as osculating when converting to Cartesian
//! state; no short-period terms are recovered.

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::tle::TleRecord;

pub type Vec3 = Vector3<f64>;
pub type Vec6 = SVector<f64, 6>;

pub const MU_EARTH: f64 = 3.986004418e14;
pub const J2_EARTH: f64 = 1.08262668e-3;
/// Equatorial radius used by the force model, meters.
pub const RE_EQUATORIAL_M: f64 = 6_378_137.0;
/// Mean radius used for the altitude feature, kilometers.
pub const RE_MEAN_KM: f64 = 6371.0;
pub const SECONDS_PER_DAY: f64 = 86_400.0;
/// TLE reference density for B*, kg m^-2 per Earth radius.
pub const BSTAR_REFERENCE_DENSITY: f64 = 0.15696615;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("expected a positive value, got {0}")]
    NonPositive(f64),
    #[error("state is not on a closed orbit (e = {0})")]
    Hyperbolic(f64),
    #[error("zero angular momentum")]
    Degenerate,
    #[error("Kepler solver did not converge (M = {mean_anomaly}, e = {eccentricity})")]
    NoConvergence { mean_anomaly: f64, eccentricity: f64 },
    #[error("altitude {altitude_km:.1} km is below the atmosphere model floor")]
    BelowModelFloor { altitude_km: f64 },
}

/// Cartesian ECI state, meters and meters/second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EciState {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl EciState {
    pub fn new(position: Vec3, velocity: Vec3) -> Self {
        Self { position, velocity }
    }

    pub fn to_vector(&self) -> Vec6 {
        Vec6::new(self.position.x, self.position.y, self.position.z, self.velocity.x, self.velocity.y, self.velocity.z)
    }

    pub fn from_vector(v: &Vec6) -> Self {
        Self { position: Vec3::new(v[0], v[1], v[2]), velocity: Vec3::new(v[3], v[4], v[5]) }
    }

    pub fn specific_energy(&self, mu: f64) -> f64 {
        0.5 * self.velocity.norm_squared() - mu / self.position.norm()
    }

    pub fn angular_momentum(&self) -> Vec3 {
        self.position.cross(&self.velocity)
    }
}

/// Classical elements; angles in radians, `a` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerElements {
    pub a: f64,
    pub e: f64,
    pub i: f64,
    pub raan: f64,
    pub argp: f64,
    pub mean_anomaly: f64,
}

impl KeplerElements {
    pub fn mean_motion_rad_s(&self, mu: f64) -> f64 {
        (mu / self.a.powi(3)).sqrt()
    }

    pub fn period_s(&self, mu: f64) -> f64 {
        TAU / self.mean_motion_rad_s(mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtmosphereBand {
    pub base_altitude_km: f64,
    pub base_density: f64,
    pub scale_height_km: f64,
}

/// Piecewise-exponential atmosphere, 100-1000 km.
pub fn default_atmosphere() -> Vec<AtmosphereBand> {
    const TABLE: [(f64, f64, f64); 19] = [
        (100.0, 5.297e-7, 5.877),
        (110.0, 9.661e-8, 7.263),
        (120.0, 2.438e-8, 9.473),
        (130.0, 8.484e-9, 12.636),
        (140.0, 3.845e-9, 16.149),
        (150.0, 2.070e-9, 22.523),
        (180.0, 5.464e-10, 29.740),
        (200.0, 2.789e-10, 37.105),
        (250.0, 7.248e-11, 45.546),
        (300.0, 2.418e-11, 53.628),
        (350.0, 9.518e-12, 53.298),
        (400.0, 3.725e-12, 58.515),
        (450.0, 1.585e-12, 60.828),
        (500.0, 6.967e-13, 63.822),
        (600.0, 1.454e-13, 71.835),
        (700.0, 3.614e-14, 88.667),
        (800.0, 1.170e-14, 124.64),
        (900.0, 5.245e-15, 181.05),
        (1000.0, 3.019e-15, 268.00),
    ];
    TABLE
        .iter()
        .map(|&(h, rho, sh)| AtmosphereBand { base_altitude_km: h, base_density: rho, scale_height_km: sh })
        .collect()
}

/// Force model constants and toggles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForceConfig {
    pub mu: f64,
    /// meters
    pub re_equatorial: f64,
    pub j2: f64,
    pub atmosphere: Vec<AtmosphereBand>,
    /// B = 2 * bstar / bstar_reference_density, in m^2/kg
    pub bstar_reference_density: f64,
    pub enable_j2: bool,
    pub enable_drag: bool,
}

impl Default for ForceConfig {
    fn default() -> Self {
        Self {
            mu: MU_EARTH,
            re_equatorial: RE_EQUATORIAL_M,
            j2: J2_EARTH,
            atmosphere: default_atmosphere(),
            bstar_reference_density: BSTAR_REFERENCE_DENSITY,
            enable_j2: true,
            enable_drag: true,
        }
    }
}

impl ForceConfig {
    pub fn two_body() -> Self {
        Self { enable_j2: false, enable_drag: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.mu > 0.0 && self.re_equatorial > 0.0 && self.bstar_reference_density > 0.0) {
            return Err("mu, re_equatorial and bstar_reference_density must be positive".into());
        }
        if self.atmosphere.is_empty() {
            return Err("atmosphere table is empty".into());
        }
        for b in &self.atmosphere {
            if !(b.base_density > 0.0 && b.scale_height_km > 0.0 && b.base_altitude_km >= 0.0) {
                return Err(format!("invalid atmosphere band {b:?}"));
            }
        }
        for w in self.atmosphere.windows(2) {
            if !(w[1].base_altitude_km > w[0].base_altitude_km && w[1].base_density < w[0].base_density) {
                return Err(format!("atmosphere bands must increase in altitude and decrease in density: {w:?}"));
            }
        }
        Ok(())
    }

    /// Ballistic coefficient in m^2/kg. Negative B* is clamped to zero drag.
    pub fn ballistic_coefficient(&self, bstar: f64) -> f64 {
        (2.0 * bstar / self.bstar_reference_density).max(0.0)
    }

    pub fn model_floor_km(&self) -> f64 {
        self.atmosphere.first().map_or(0.0, |b| b.base_altitude_km)
    }
}

/// Semi-major axis (m) for a mean motion in rev/day.
pub fn mean_motion_to_sma(n_rev_day: f64, mu: f64) -> Result<f64, DynamicsError> {
    if !(n_rev_day > 0.0) {
        return Err(DynamicsError::NonPositive(n_rev_day));
    }
    let n = n_rev_day * TAU / SECONDS_PER_DAY;
    Ok((mu / (n * n)).cbrt())
}

/// Mean motion in rev/day for a semi-major axis in meters.
pub fn sma_to_mean_motion(a: f64, mu: f64) -> Result<f64, DynamicsError> {
    if !(a > 0.0) {
        return Err(DynamicsError::NonPositive(a));
    }
    Ok((mu / a.powi(3)).sqrt() * SECONDS_PER_DAY / TAU)
}

/// Altitude above the mean Earth radius, km.
pub fn altitude_km(a_m: f64) -> f64 {
    a_m / 1000.0 - RE_MEAN_KM
}

/// Altitude (km) implied by a mean motion, with the default gravitational
/// parameter. Shared by the feature and rule layers.
pub fn altitude_from_mean_motion(n_rev_day: f64) -> Result<f64, DynamicsError> {
    mean_motion_to_sma(n_rev_day, MU_EARTH).map(altitude_km)
}

fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Solves E - e sin E = M by safeguarded Newton iteration from E0 = M.
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> Result<f64, DynamicsError> {
    if !(0.0..1.0).contains(&e) {
        return Err(DynamicsError::Hyperbolic(e));
    }
    // reduce to (-pi, pi] so the bracket [M - e, M + e] is tight
    let turns = ((mean_anomaly + PI) / TAU).floor();
    let m = mean_anomaly - turns * TAU;
    let (mut lo, mut hi) = (m - e, m + e);
    let mut ecc = m;
    for _ in 0..50 {
        let f = ecc - e * ecc.sin() - m;
        if f.abs() <= 1e-12 {
            return Ok(ecc + turns * TAU);
        }
        if f > 0.0 {
            hi = ecc;
        } else {
            lo = ecc;
        }
        let next = ecc - f / (1.0 - e * ecc.cos());
        ecc = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    let f = ecc - e * ecc.sin() - m;
    if f.abs() <= 1e-12 {
        return Ok(ecc + turns * TAU);
    }
    Err(DynamicsError::NoConvergence { mean_anomaly, eccentricity: e })
}

pub fn kepler_to_eci(el: &KeplerElements, mu: f64) -> Result<EciState, DynamicsError> {
    if !(el.a > 0.0) {
        return Err(DynamicsError::NonPositive(el.a));
    }
    if !(0.0..1.0).contains(&el.e) {
        return Err(DynamicsError::Hyperbolic(el.e));
    }
    let ecc_anom = solve_kepler(el.mean_anomaly, el.e)?;
    let (sin_e, cos_e) = ecc_anom.sin_cos();
    let root = (1.0 - el.e * el.e).sqrt();
    // perifocal position and velocity directly from the eccentric anomaly
    let r_pf = Vec3::new(el.a * (cos_e - el.e), el.a * root * sin_e, 0.0);
    let r = el.a * (1.0 - el.e * cos_e);
    let scale = (mu * el.a).sqrt() / r;
    let v_pf = Vec3::new(-scale * sin_e, scale * root * cos_e, 0.0);

    let (so, co) = el.raan.sin_cos();
    let (si, ci) = el.i.sin_cos();
    let (sw, cw) = el.argp.sin_cos();
    let p = Vec3::new(co * cw - so * sw * ci, so * cw + co * sw * ci, sw * si);
    let q = Vec3::new(-co * sw - so * cw * ci, -so * sw + co * cw * ci, cw * si);
    Ok(EciState { position: p * r_pf.x + q * r_pf.y, velocity: p * v_pf.x + q * v_pf.y })
}

pub fn eci_to_kepler(s: &EciState, mu: f64) -> Result<KeplerElements, DynamicsError> {
    let r_vec = s.position;
    let v_vec = s.velocity;
    let r = r_vec.norm();
    let h_vec = r_vec.cross(&v_vec);
    let h = h_vec.norm();
    if !(r > 0.0) || h <= 1e-12 * r * v_vec.norm().max(1e-300) {
        return Err(DynamicsError::Degenerate);
    }
    let h_hat = h_vec / h;
    let e_vec = ((v_vec.norm_squared() - mu / r) * r_vec - r_vec.dot(&v_vec) * v_vec) / mu;
    let e = e_vec.norm();
    let energy = 0.5 * v_vec.norm_squared() - mu / r;
    if e >= 1.0 || energy >= 0.0 {
        return Err(DynamicsError::Hyperbolic(e));
    }
    let a = -mu / (2.0 * energy);
    let i = h_hat.z.clamp(-1.0, 1.0).acos();

    let node = Vec3::z().cross(&h_vec);
    let equatorial = !(1e-8..=PI - 1e-8).contains(&i);
    let node_hat = if equatorial { Vec3::x() } else { node / node.norm() };
    let raan = if equatorial { 0.0 } else { wrap_angle(node_hat.y.atan2(node_hat.x)) };

    let circular = e < 1e-8;
    let peri_hat = if circular { node_hat } else { e_vec / e };
    let argp =
        if circular { 0.0 } else { wrap_angle(h_hat.dot(&node_hat.cross(&peri_hat)).atan2(node_hat.dot(&peri_hat))) };
    let nu = h_hat.dot(&peri_hat.cross(&r_vec)).atan2(peri_hat.dot(&r_vec));
    let ecc_anom = 2.0 * ((1.0 - e).sqrt() * (nu / 2.0).sin()).atan2((1.0 + e).sqrt() * (nu / 2.0).cos());
    let mean_anomaly = wrap_angle(ecc_anom - e * ecc_anom.sin());
    Ok(KeplerElements { a, e, i, raan, argp, mean_anomaly })
}

/// Elements of a TLE record, mean values used as osculating.
pub fn record_elements(rec: &TleRecord, mu: f64) -> Result<KeplerElements, DynamicsError> {
    Ok(KeplerElements {
        a: mean_motion_to_sma(rec.mean_motion, mu)?,
        e: rec.eccentricity,
        i: rec.inclination.to_radians(),
        raan: rec.raan.to_radians(),
        argp: rec.argp.to_radians(),
        mean_anomaly: rec.mean_anomaly.to_radians(),
    })
}

pub fn record_to_eci(rec: &TleRecord, mu: f64) -> Result<EciState, DynamicsError> {
    kepler_to_eci(&record_elements(rec, mu)?, mu)
}

/// Density in kg/m^3 at geometric altitude `h_km`.
pub fn atmosphere_density(h_km: f64, cfg: &ForceConfig) -> Result<f64, DynamicsError> {
    let bands = &cfg.atmosphere;
    if bands.is_empty() || !(h_km >= bands[0].base_altitude_km) {
        return Err(DynamicsError::BelowModelFloor { altitude_km: h_km });
    }
    let idx = bands.partition_point(|b| b.base_altitude_km <= h_km) - 1;
    let b = &bands[idx];
    Ok(b.base_density * (-(h_km - b.base_altitude_km) / b.scale_height_km).exp())
}

/// Total acceleration: central body, optional J2 and optional drag.
pub fn acceleration(s: &EciState, cfg: &ForceConfig, bstar: f64) -> Result<Vec3, DynamicsError> {
    let r_vec = s.position;
    let r2 = r_vec.norm_squared();
    let r = r2.sqrt();
    let mut acc = -cfg.mu / (r2 * r) * r_vec;

    if cfg.enable_j2 {
        let z2 = r_vec.z * r_vec.z / r2;
        let k = -1.5 * cfg.j2 * cfg.mu * cfg.re_equatorial * cfg.re_equatorial / (r2 * r2 * r);
        acc +=
            Vec3::new(k * r_vec.x * (1.0 - 5.0 * z2), k * r_vec.y * (1.0 - 5.0 * z2), k * r_vec.z * (3.0 - 5.0 * z2));
    }

    if cfg.enable_drag {
        let rho = atmosphere_density((r - cfg.re_equatorial) / 1000.0, cfg)?;
        let b = cfg.ballistic_coefficient(bstar);
        if b > 0.0 {
            let v = s.velocity.norm();
            acc -= 0.5 * rho * b * v * s.velocity;
        }
    }
    Ok(acc)
}

fn derivative(s: &EciState, cfg: &ForceConfig, bstar: f64) -> Result<(Vec3, Vec3), DynamicsError> {
    Ok((s.velocity, acceleration(s, cfg, bstar)?))
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step(s: &EciState, dt: f64, cfg: &ForceConfig, bstar: f64) -> Result<EciState, DynamicsError> {
    if dt == 0.0 {
        return Ok(*s);
    }
    let shift = |k: &(Vec3, Vec3), h: f64| EciState { position: s.position + k.0 * h, velocity: s.velocity + k.1 * h };
    let k1 = derivative(s, cfg, bstar)?;
    let k2 = derivative(&shift(&k1, 0.5 * dt), cfg, bstar)?;
    let k3 = derivative(&shift(&k2, 0.5 * dt), cfg, bstar)?;
    let k4 = derivative(&shift(&k3, dt), cfg, bstar)?;
    Ok(EciState {
        position: s.position + (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) * (dt / 6.0),
        velocity: s.velocity + (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1) * (dt / 6.0),
    })
}

/// Integrates from `t0` to `t1` (seconds) in equal steps no longer than
/// `max_step`.
pub fn propagate(
    s: &EciState,
    t0: f64,
    t1: f64,
    cfg: &ForceConfig,
    bstar: f64,
    max_step: f64,
) -> Result<EciState, DynamicsError> {
    if !(max_step > 0.0) {
        return Err(DynamicsError::NonPositive(max_step));
    }
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(*s);
    }
    let steps = (span.abs() / max_step).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let mut state = *s;
    for _ in 0..steps {
        state = rk4_step(&state, h, cfg, bstar)?;
    }
    Ok(state)
}
