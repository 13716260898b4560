//! Per-satellite orchestration of the labeling tiers, cross-tier statistics,
//! and the innovation score against a frozen element-space propagator.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::dynamics::{
    altitude_from_mean_motion, atmosphere_density, mean_motion_to_sma, ForceConfig, SECONDS_PER_DAY,
};
use crate::features::{extract_sequence, index, FeatureConfig, FeatureError, FeatureVector, FEATURE_COUNT};
use crate::filter::{FilterConfig, FilterError, ImmFilter, MODE_COUNT};
use crate::label::Label;
use crate::rules::{rule_label_sequence, RuleError, RuleThresholds};
use crate::tle::{Source, TleRecord};
use crate::windowing::Window;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CascadeError {
    #[error("the rule tier cannot be disabled")]
    RuleTierRequired,
    #[error("imm:rule ratio is undefined when the rule tier reports no anomalies")]
    UndefinedRatio,
    #[error("sigma component {0} is not strictly positive")]
    NonPositiveSigma(usize),
    #[error("window needs at least two rows")]
    WindowTooShort,
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Which tiers to run. The supGP channel needs no flag: it follows each
/// record's source tag whenever the filter runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tiers {
    pub rule: bool,
    pub imm: bool,
}

impl Default for Tiers {
    fn default() -> Self {
        Self { rule: true, imm: true }
    }
}

/// Frozen analytical propagator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElementPropagatorConfig {
    pub enable_j2: bool,
    pub enable_drag: bool,
    /// k in de/dt = -k rho B n a e.
    pub ecc_decay_coefficient: f64,
}

impl Default for ElementPropagatorConfig {
    fn default() -> Self {
        Self { enable_j2: true, enable_drag: true, ecc_decay_coefficient: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CascadeConfig {
    pub tiers: Tiers,
    pub propagator: ElementPropagatorConfig,
    /// Per-feature scale for the innovation score. `None` skips scoring.
    pub score_sigma: Option<[f64; FEATURE_COUNT]>,
}

/// One timestep of cascade output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeRecord {
    pub norad_id: u32,
    pub epoch: DateTime<Utc>,
    pub rule_label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imm_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<[f64; MODE_COUNT]>,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub innovation_score: Option<f64>,
}

/// Runs the enabled tiers over one satellite's chronological history. A
/// filter failure anywhere in the history drops the filter output for the
/// whole satellite and logs a warning.
pub fn run_cascade(
    history: &[TleRecord],
    features: &FeatureConfig,
    rules: &RuleThresholds,
    filter: &FilterConfig,
    cfg: &CascadeConfig,
) -> Result<Vec<CascadeRecord>, CascadeError> {
    if !cfg.tiers.rule {
        return Err(CascadeError::RuleTierRequired);
    }
    let rule_labels = rule_label_sequence(history, rules)?;

    let imm = if cfg.tiers.imm && !history.is_empty() {
        match run_filter(history, filter) {
            Ok(steps) => Some(steps),
            Err(e) => {
                log::warn!("norad {}: filter tier failed, falling back to rule labels: {e}", history[0].norad_id);
                None
            }
        }
    } else {
        None
    };

    let scores = match &cfg.score_sigma {
        Some(sigma) => {
            check_sigma(sigma)?;
            let rows: Vec<_> = extract_sequence(history, features)?.iter().map(FeatureVector::to_array).collect();
            let mut s = vec![None];
            s.extend(score_rows(&rows, sigma, &filter.force, &cfg.propagator).into_iter().map(|r| Some(r.score)));
            s
        }
        None => vec![None; history.len()],
    };

    Ok(history
        .iter()
        .enumerate()
        .map(|(t, rec)| CascadeRecord {
            norad_id: rec.norad_id,
            epoch: rec.epoch,
            rule_label: rule_labels[t],
            imm_label: imm.as_ref().map(|s| s[t].0),
            mu: imm.as_ref().map(|s| s[t].1),
            source: rec.source,
            innovation_score: scores[t],
        })
        .collect())
}

fn run_filter(history: &[TleRecord], cfg: &FilterConfig) -> Result<Vec<(Label, [f64; MODE_COUNT])>, FilterError> {
    let mut f = ImmFilter::new(cfg.clone())?;
    Ok(f.run(history)?.into_iter().map(|r| (r.label, r.mu)).collect())
}

/// Cross-tier anomaly counts. Overlap fields cover only timesteps where both
/// tiers ran; rule-only timesteps are tallied separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TierStats {
    pub both_tiers: u64,
    pub rule_non_normal: u64,
    pub imm_non_normal: u64,
    pub both_fire: u64,
    pub only_rule: u64,
    pub only_imm: u64,
    pub rule_only_records: u64,
    pub rule_only_non_normal: u64,
}

impl TierStats {
    /// Stats for bare counts with no overlap information.
    pub fn from_counts(rule_non_normal: u64, imm_non_normal: u64) -> Self {
        Self { rule_non_normal, imm_non_normal, ..Self::default() }
    }

    pub fn add(&mut self, rec: &CascadeRecord) {
        let rule = rec.rule_label.is_anomalous();
        match rec.imm_label {
            None => {
                self.rule_only_records += 1;
                self.rule_only_non_normal += rule as u64;
            }
            Some(imm) => {
                let imm = imm.is_anomalous();
                self.both_tiers += 1;
                self.rule_non_normal += rule as u64;
                self.imm_non_normal += imm as u64;
                self.both_fire += (rule && imm) as u64;
                self.only_rule += (rule && !imm) as u64;
                self.only_imm += (imm && !rule) as u64;
            }
        }
    }

    pub fn merge(&mut self, other: &TierStats) {
        self.both_tiers += other.both_tiers;
        self.rule_non_normal += other.rule_non_normal;
        self.imm_non_normal += other.imm_non_normal;
        self.both_fire += other.both_fire;
        self.only_rule += other.only_rule;
        self.only_imm += other.only_imm;
        self.rule_only_records += other.rule_only_records;
        self.rule_only_non_normal += other.rule_only_non_normal;
    }

    pub fn ratio(&self) -> Result<f64, CascadeError> {
        if self.rule_non_normal == 0 {
            return Err(CascadeError::UndefinedRatio);
        }
        Ok(self.imm_non_normal as f64 / self.rule_non_normal as f64)
    }

    /// Fraction of rule anomalies the filter also flags.
    pub fn rule_overlap_fraction(&self) -> Option<f64> {
        (self.rule_non_normal > 0).then(|| self.both_fire as f64 / self.rule_non_normal as f64)
    }
}

impl fmt::Display for TierStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule non-normal {}, imm non-normal {}, ", self.rule_non_normal, self.imm_non_normal)?;
        match self.ratio() {
            Ok(r) => write!(f, "ratio {r:.1}x")?,
            Err(_) => write!(f, "ratio undefined")?,
        }
        write!(f, " (both {}, rule only {}, imm only {})", self.both_fire, self.only_rule, self.only_imm)
    }
}

pub fn tier_stats<'a>(records: impl IntoIterator<Item = &'a CascadeRecord>) -> TierStats {
    let mut s = TierStats::default();
    for r in records {
        s.add(r);
    }
    s
}

fn wrap_deg(x: f64) -> f64 {
    x.rem_euclid(360.0)
}

/// Difference on the circle, in (-180, 180].
fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// First-order element-space propagation of one feature row over `dt_h`
/// hours: drag raises mean motion by the record's n_dot, circularizes the
/// orbit, J2 rotates node and perigee, and the mean anomaly advances.
/// `n_dot` carries the TLE convention (first derivative / 2).
pub fn physics_predict_elements(
    v: &FeatureVector,
    dt_h: f64,
    force: &ForceConfig,
    cfg: &ElementPropagatorConfig,
) -> FeatureVector {
    let mut out = *v;
    out.epoch_h = v.epoch_h + dt_h;
    out.dt_hours = dt_h;
    if dt_h == 0.0 {
        return out;
    }
    let dt_days = dt_h / 24.0;
    let dt_s = dt_h * 3600.0;
    let n_dot_full = 2.0 * v.n_dot;
    let n1 = v.mean_motion + n_dot_full * dt_days;
    out.mean_anomaly = wrap_deg(v.mean_anomaly + 360.0 * (v.mean_motion * dt_days + v.n_dot * dt_days * dt_days));

    let a = mean_motion_to_sma(v.mean_motion, force.mu).ok();
    let n_rad = v.mean_motion * std::f64::consts::TAU / SECONDS_PER_DAY;

    if cfg.enable_drag {
        if let (Some(a), Ok(rho)) = (a, atmosphere_density(v.alt_km, force)) {
            let b = force.ballistic_coefficient(v.bstar);
            let rate = cfg.ecc_decay_coefficient * rho * b * n_rad * a;
            out.eccentricity = (v.eccentricity * (-rate * dt_s).exp()).max(0.0);
        }
    }
    if cfg.enable_j2 {
        if let Some(a) = a {
            let p = a * (1.0 - v.eccentricity * v.eccentricity);
            let k = n_rad * force.j2 * (force.re_equatorial / p).powi(2);
            let cos_i = v.inclination.to_radians().cos();
            let raan_rate = -1.5 * k * cos_i;
            let argp_rate = 0.75 * k * (5.0 * cos_i * cos_i - 1.0);
            out.raan = wrap_deg(v.raan + (raan_rate * dt_s).to_degrees());
            out.argp = wrap_deg(v.argp + (argp_rate * dt_s).to_degrees());
        }
    }
    out.mean_motion = n1;
    if let Ok(h) = altitude_from_mean_motion(n1) {
        out.alt_km = h;
    }
    out
}

/// Innovation of one step and its sigma-normalized magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationRecord {
    pub innovation: [f64; FEATURE_COUNT],
    pub score: f64,
}

fn check_sigma(sigma: &[f64; FEATURE_COUNT]) -> Result<(), CascadeError> {
    match sigma.iter().position(|s| !(*s > 0.0)) {
        Some(k) => Err(CascadeError::NonPositiveSigma(k)),
        None => Ok(()),
    }
}

fn score_rows(
    rows: &[[f64; FEATURE_COUNT]],
    sigma: &[f64; FEATURE_COUNT],
    force: &ForceConfig,
    cfg: &ElementPropagatorConfig,
) -> Vec<InnovationRecord> {
    rows.windows(2)
        .map(|pair| {
            let cur = FeatureVector::from_array(pair[0]);
            let next = pair[1];
            let pred = physics_predict_elements(&cur, next[index::DT_HOURS], force, cfg).to_array();
            let mut innovation = [0.0; FEATURE_COUNT];
            for k in 0..FEATURE_COUNT {
                innovation[k] =
                    if index::ANGLES.contains(&k) { angle_diff_deg(next[k], pred[k]) } else { next[k] - pred[k] };
            }
            let score = innovation.iter().zip(sigma).map(|(d, s)| (d / s).powi(2)).sum::<f64>().sqrt();
            InnovationRecord { innovation, score }
        })
        .collect()
}

/// One record per transition t -> t+1 of the window, comparing row t+1
/// with the propagated row t.
pub fn innovation_score(
    window: &Window,
    sigma: &[f64; FEATURE_COUNT],
    force: &ForceConfig,
    cfg: &ElementPropagatorConfig,
) -> Result<Vec<InnovationRecord>, CascadeError> {
    check_sigma(sigma)?;
    if window.rows.len() < 2 {
        return Err(CascadeError::WindowTooShort);
    }
    Ok(score_rows(&window.rows, sigma, force, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{sma_to_mean_motion, MU_EARTH, RE_MEAN_KM};
    use chrono::TimeZone;

    fn row(alt_km: f64, incl: f64) -> FeatureVector {
        let n = sma_to_mean_motion((RE_MEAN_KM + alt_km) * 1e3, MU_EARTH).unwrap();
        FeatureVector {
            epoch_h: 10.0,
            mean_motion: n,
            eccentricity: 0.01,
            inclination: incl,
            bstar: 5e-4,
            alt_km,
            dt_hours: 8.0,
            raan: 120.0,
            argp: 45.0,
            mean_anomaly: 350.0,
            n_dot: 1e-5,
        }
    }

    fn record(t: usize, source: Source) -> TleRecord {
        let base = row(550.0, 53.0);
        TleRecord {
            norad_id: 7,
            epoch: Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap() + chrono::Duration::hours(8 * t as i64),
            mean_motion: base.mean_motion,
            eccentricity: 0.001,
            inclination: 53.0,
            raan: 10.0,
            argp: 20.0,
            mean_anomaly: (37.0 * t as f64) % 360.0,
            bstar: 1e-4,
            n_dot: 0.0,
            source,
        }
    }

    fn labeled(rule: Label, imm: Option<Label>) -> CascadeRecord {
        CascadeRecord {
            norad_id: 1,
            epoch: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            rule_label: rule,
            imm_label: imm,
            mu: imm.map(|_| [1.0, 0.0, 0.0]),
            source: Source::Tle,
            innovation_score: None,
        }
    }

    #[test]
    fn rule_only_run_has_no_filter_fields() {
        let history: Vec<_> = (0..6).map(|t| record(t, if t % 2 == 0 { Source::Tle } else { Source::Supgp })).collect();
        let cfg = CascadeConfig { tiers: Tiers { rule: true, imm: false }, ..Default::default() };
        let out = run_cascade(
            &history,
            &FeatureConfig::default(),
            &RuleThresholds::default(),
            &FilterConfig::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(out.len(), history.len());
        for (r, h) in out.iter().zip(&history) {
            assert!(r.imm_label.is_none() && r.mu.is_none());
            assert_eq!(r.source, h.source);
            assert_eq!(r.epoch, h.epoch);
        }
        let off = CascadeConfig { tiers: Tiers { rule: false, imm: true }, ..Default::default() };
        let err = run_cascade(
            &history,
            &FeatureConfig::default(),
            &RuleThresholds::default(),
            &FilterConfig::default(),
            &off,
        );
        assert_eq!(err, Err(CascadeError::RuleTierRequired));
    }

    #[test]
    fn literal_counts_give_reference_ratio() {
        let s = TierStats::from_counts(812, 34_576);
        assert!((s.ratio().unwrap() - 42.58128).abs() < 1e-5);
        assert_eq!(format!("{:.1}", s.ratio().unwrap()), "42.6");
        assert!(s.to_string().contains("ratio 42.6x"));
    }

    #[test]
    fn all_normal_ratio_is_undefined() {
        let recs: Vec<_> = (0..5).map(|_| labeled(Label::Normal, Some(Label::Normal))).collect();
        assert_eq!(tier_stats(&recs).ratio(), Err(CascadeError::UndefinedRatio));
        assert_eq!(tier_stats(&recs).rule_overlap_fraction(), None);
    }

    #[test]
    fn overlap_counts() {
        let mut recs = Vec::new();
        for k in 0..10 {
            recs.push(labeled(Label::Maneuver, Some(if k < 8 { Label::Decay } else { Label::Normal })));
        }
        for _ in 0..5 {
            recs.push(labeled(Label::Normal, Some(Label::Maneuver)));
        }
        recs.push(labeled(Label::Decay, None));
        let s = tier_stats(&recs);
        assert_eq!((s.rule_non_normal, s.imm_non_normal), (10, 13));
        assert_eq!((s.both_fire, s.only_rule, s.only_imm), (8, 2, 5));
        assert_eq!((s.rule_only_records, s.rule_only_non_normal), (1, 1));
        assert_eq!(s.both_fire + s.only_rule, s.rule_non_normal);
        assert_eq!(s.both_fire + s.only_imm, s.imm_non_normal);
        assert!((s.rule_overlap_fraction().unwrap() - 0.8).abs() < 1e-12);

        let mut reversed = recs.clone();
        reversed.reverse();
        assert_eq!(tier_stats(&reversed), s);
        let mut merged = tier_stats(&recs[..7]);
        merged.merge(&tier_stats(&recs[7..]));
        assert_eq!(merged, s);
    }

    #[test]
    fn zero_dt_is_identity() {
        let v = row(500.0, 53.0);
        let mut expected = v;
        expected.dt_hours = 0.0;
        assert_eq!(
            physics_predict_elements(&v, 0.0, &ForceConfig::default(), &ElementPropagatorConfig::default()),
            expected
        );
    }

    #[test]
    fn unperturbed_only_advances_anomaly_and_epoch() {
        let mut v = row(500.0, 53.0);
        v.n_dot = 0.0;
        let cfg = ElementPropagatorConfig { enable_j2: false, enable_drag: false, ..Default::default() };
        let p = physics_predict_elements(&v, 6.0, &ForceConfig::default(), &cfg);
        assert_eq!(p.epoch_h, 16.0);
        assert_eq!(p.dt_hours, 6.0);
        assert_eq!(
            (p.mean_motion, p.eccentricity, p.inclination, p.raan, p.argp, p.alt_km, p.bstar, p.n_dot),
            (v.mean_motion, v.eccentricity, v.inclination, v.raan, v.argp, v.alt_km, v.bstar, v.n_dot)
        );
        let expected = (v.mean_anomaly + 360.0 * v.mean_motion * 0.25).rem_euclid(360.0);
        assert!((p.mean_anomaly - expected).abs() < 1e-9);
    }

    #[test]
    fn j2_regresses_prograde_nodes_and_drag_acts() {
        let force = ForceConfig::default();
        let cfg = ElementPropagatorConfig::default();
        let v = row(400.0, 53.0);
        let p = physics_predict_elements(&v, 8.0, &force, &cfg);
        assert!(angle_diff_deg(p.raan, v.raan) < 0.0);
        // -1.5 n J2 (Re/p)^2 cos i over 8 h
        let a = mean_motion_to_sma(v.mean_motion, MU_EARTH).unwrap();
        let n = v.mean_motion * std::f64::consts::TAU / SECONDS_PER_DAY;
        let pp = a * (1.0 - v.eccentricity.powi(2));
        let rate = -1.5 * n * force.j2 * (force.re_equatorial / pp).powi(2) * 53f64.to_radians().cos();
        assert!((angle_diff_deg(p.raan, v.raan) - (rate * 28_800.0).to_degrees()).abs() < 1e-9);
        let retro = physics_predict_elements(&row(400.0, 98.0), 8.0, &force, &cfg);
        assert!(angle_diff_deg(retro.raan, 120.0) > 0.0);
        assert!(p.mean_motion > v.mean_motion && p.alt_km < v.alt_km);
        assert!(p.eccentricity < v.eccentricity && p.eccentricity > 0.0);
    }

    fn window(rows: Vec<FeatureVector>) -> Window {
        Window { norad_id: 1, start: 0, rows: rows.iter().map(FeatureVector::to_array).collect(), labels: Vec::new() }
    }

    fn consistent_rows(count: usize) -> Vec<FeatureVector> {
        let force = ForceConfig::default();
        let cfg = ElementPropagatorConfig::default();
        let mut rows = vec![row(450.0, 53.0)];
        rows[0].epoch_h = 0.0;
        rows[0].dt_hours = 0.0;
        for _ in 1..count {
            let next = physics_predict_elements(rows.last().unwrap(), 8.0, &force, &cfg);
            rows.push(next);
        }
        rows
    }

    #[test]
    fn exact_prediction_scores_zero_and_sigma_is_homogeneous() {
        let force = ForceConfig::default();
        let cfg = ElementPropagatorConfig::default();
        let mut rows = consistent_rows(6);
        let sigma = [1.0; FEATURE_COUNT];
        let zero = innovation_score(&window(rows.clone()), &sigma, &force, &cfg).unwrap();
        assert_eq!(zero.len(), 5);
        assert!(zero.iter().all(|r| r.score < 1e-9));

        rows[3].alt_km += 10.0;
        rows[4].raan += 0.3;
        let w = window(rows);
        let one = innovation_score(&w, &sigma, &force, &cfg).unwrap();
        let two = innovation_score(&w, &[2.0; FEATURE_COUNT], &force, &cfg).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!((a.score - 2.0 * b.score).abs() < 1e-12 * a.score.max(1.0));
        }
        assert!(one[2].score > 9.0);
    }

    #[test]
    fn angle_innovations_wrap() {
        let force = ForceConfig::default();
        let cfg = ElementPropagatorConfig { enable_j2: false, enable_drag: false, ..Default::default() };
        let mut rows = consistent_rows(2);
        rows[0].raan = 359.5;
        rows[0].n_dot = 0.0;
        rows[1] = physics_predict_elements(&rows[0], 8.0, &force, &cfg);
        rows[1].raan = 0.5;
        let out = innovation_score(&window(rows), &[1.0; FEATURE_COUNT], &force, &cfg).unwrap();
        assert!((out[0].innovation[index::RAAN] - 1.0).abs() < 1e-9);
        assert_eq!(angle_diff_deg(10.0, 190.0), 180.0);
        assert_eq!(angle_diff_deg(190.0, 10.0), 180.0);
    }

    #[test]
    fn scores_ignore_epoch_offset() {
        let force = ForceConfig::default();
        let cfg = ElementPropagatorConfig::default();
        let mut rows = consistent_rows(5);
        rows[2].mean_motion += 1e-3;
        let base = innovation_score(&window(rows.clone()), &[0.5; FEATURE_COUNT], &force, &cfg).unwrap();
        for r in rows.iter_mut() {
            r.epoch_h += 1234.5;
        }
        let shifted = innovation_score(&window(rows), &[0.5; FEATURE_COUNT], &force, &cfg).unwrap();
        for (a, b) in base.iter().zip(&shifted) {
            assert!((a.score - b.score).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_scoring_inputs() {
        let force = ForceConfig::default();
        let cfg = ElementPropagatorConfig::default();
        let mut sigma = [1.0; FEATURE_COUNT];
        sigma[4] = 0.0;
        assert_eq!(
            innovation_score(&window(consistent_rows(3)), &sigma, &force, &cfg),
            Err(CascadeError::NonPositiveSigma(4))
        );
        assert_eq!(
            innovation_score(&window(consistent_rows(1)), &[1.0; FEATURE_COUNT], &force, &cfg),
            Err(CascadeError::WindowTooShort)
        );
    }
}
