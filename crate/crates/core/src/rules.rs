//! Tier 1: fixed-priority physical rules over consecutive element sets.
//!
//! Rules are checked in order and the first match wins:
//!
//! | # | condition                                               | label    |
//! |---|---------------------------------------------------------|----------|
//! | 1 | altitude below `h_reentry`                              | breakup  |
//! | 2 | altitude drop > `dh_decay` and altitude below `h_low`    | decay    |
//! | 3 | inclination change > `di_man`                           | maneuver |
//! | 4 | altitude change > `dh_man`                              | maneuver |
//! | 5 | eccentricity change > `de_man`                          | maneuver |
//! | 6 | B* sign flip with both magnitudes > `bstar_floor`       | maneuver |
//! | 7 | B* magnitude ratio > `bstar_ratio` (previous > floor)   | decay    |
//!
//! All comparisons are strict: a value sitting exactly on a threshold does
//! not fire.

use serde::{Deserialize, Serialize};

use crate::dynamics::{altitude_from_mean_motion, DynamicsError};
use crate::label::Label;
use crate::tle::TleRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleThresholds {
    pub h_reentry_km: f64,
    pub h_low_km: f64,
    pub dh_decay_km: f64,
    pub dh_man_km: f64,
    pub di_man_deg: f64,
    pub de_man: f64,
    pub bstar_floor: f64,
    pub bstar_ratio: f64,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        Self {
            h_reentry_km: 250.0,
            h_low_km: 400.0,
            dh_decay_km: 5.0,
            dh_man_km: 10.0,
            di_man_deg: 0.1,
            de_man: 0.01,
            bstar_floor: 5e-3,
            bstar_ratio: 2.0,
        }
    }
}

impl RuleThresholds {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.h_reentry_km,
            self.h_low_km,
            self.dh_decay_km,
            self.dh_man_km,
            self.di_man_deg,
            self.de_man,
            self.bstar_floor,
            self.bstar_ratio,
        ];
        if all.iter().any(|v| !(*v > 0.0)) {
            return Err("rule thresholds must be positive".into());
        }
        if self.h_reentry_km >= self.h_low_km {
            return Err("h_reentry must be below h_low".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuleError {
    #[error("records belong to different satellites ({0} vs {1})")]
    SatelliteMismatch(u32, u32),
    #[error("previous record is later than the current one")]
    EpochOrder,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// The label and the index (1-7) of the rule that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleOutcome {
    pub label: Label,
    pub rule: Option<u8>,
}

impl RuleOutcome {
    const NORMAL: RuleOutcome = RuleOutcome { label: Label::Normal, rule: None };
}

/// The quantities the rules look at, for one record.
#[derive(Debug, Clone, Copy)]
struct RuleInputs {
    alt_km: f64,
    inclination: f64,
    eccentricity: f64,
    bstar: f64,
}

impl RuleInputs {
    fn of(rec: &TleRecord) -> Result<Self, DynamicsError> {
        Ok(Self {
            alt_km: altitude_from_mean_motion(rec.mean_motion)?,
            inclination: rec.inclination,
            eccentricity: rec.eccentricity,
            bstar: rec.bstar,
        })
    }
}

fn evaluate(prev: &RuleInputs, cur: &RuleInputs, th: &RuleThresholds) -> RuleOutcome {
    let fire = |rule: u8, label: Label| RuleOutcome { label, rule: Some(rule) };
    let drop = prev.alt_km - cur.alt_km;
    if cur.alt_km < th.h_reentry_km {
        return fire(1, Label::Breakup);
    }
    if drop > th.dh_decay_km && cur.alt_km < th.h_low_km {
        return fire(2, Label::Decay);
    }
    if (cur.inclination - prev.inclination).abs() > th.di_man_deg {
        return fire(3, Label::Maneuver);
    }
    if drop.abs() > th.dh_man_km {
        return fire(4, Label::Maneuver);
    }
    if (cur.eccentricity - prev.eccentricity).abs() > th.de_man {
        return fire(5, Label::Maneuver);
    }
    let (bp, bc) = (prev.bstar, cur.bstar);
    if bp * bc < 0.0 && bp.abs() > th.bstar_floor && bc.abs() > th.bstar_floor {
        return fire(6, Label::Maneuver);
    }
    if bp.abs() > th.bstar_floor && bc.abs() / bp.abs() > th.bstar_ratio {
        return fire(7, Label::Decay);
    }
    RuleOutcome::NORMAL
}

fn check_pair(prev: &TleRecord, cur: &TleRecord) -> Result<(), RuleError> {
    if prev.norad_id != cur.norad_id {
        return Err(RuleError::SatelliteMismatch(prev.norad_id, cur.norad_id));
    }
    if prev.epoch > cur.epoch {
        return Err(RuleError::EpochOrder);
    }
    Ok(())
}

/// Label for `cur` given its predecessor, with the rule that fired.
pub fn rule_outcome(prev: &TleRecord, cur: &TleRecord, th: &RuleThresholds) -> Result<RuleOutcome, RuleError> {
    check_pair(prev, cur)?;
    Ok(evaluate(&RuleInputs::of(prev)?, &RuleInputs::of(cur)?, th))
}

pub fn rule_label(prev: &TleRecord, cur: &TleRecord, th: &RuleThresholds) -> Result<Label, RuleError> {
    rule_outcome(prev, cur, th).map(|o| o.label)
}

/// Outcomes for a whole chronological stream; the first record has no
/// predecessor and is normal.
pub fn rule_outcome_sequence(records: &[TleRecord], th: &RuleThresholds) -> Result<Vec<RuleOutcome>, RuleError> {
    let inputs = records.iter().map(RuleInputs::of).collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(records.len());
    if !records.is_empty() {
        out.push(RuleOutcome::NORMAL);
    }
    for t in 1..records.len() {
        check_pair(&records[t - 1], &records[t])?;
        out.push(evaluate(&inputs[t - 1], &inputs[t], th));
    }
    Ok(out)
}

pub fn rule_label_sequence(records: &[TleRecord], th: &RuleThresholds) -> Result<Vec<Label>, RuleError> {
    Ok(rule_outcome_sequence(records, th)?.into_iter().map(|o| o.label).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{sma_to_mean_motion, MU_EARTH, RE_MEAN_KM};
    use crate::tle::Source;
    use chrono::{Duration, TimeZone, Utc};

    fn at_altitude(alt_km: f64) -> TleRecord {
        TleRecord {
            norad_id: 1,
            epoch: Utc.with_ymd_and_hms(2023, 5, 1, 0, 0, 0).unwrap(),
            mean_motion: sma_to_mean_motion((RE_MEAN_KM + alt_km) * 1e3, MU_EARTH).unwrap(),
            eccentricity: 0.001,
            inclination: 53.0,
            raan: 0.0,
            argp: 0.0,
            mean_anomaly: 0.0,
            bstar: 1e-4,
            n_dot: 0.0,
            source: Source::Tle,
        }
    }

    fn next(prev: &TleRecord, f: impl FnOnce(&mut TleRecord)) -> TleRecord {
        let mut r = prev.clone();
        r.epoch += Duration::hours(8);
        f(&mut r);
        r
    }

    fn label(prev: &TleRecord, cur: &TleRecord) -> Label {
        rule_label(prev, cur, &RuleThresholds::default()).unwrap()
    }

    #[test]
    fn examples() {
        let a = at_altitude(420.0);
        assert_eq!(label(&a, &next(&a, |r| r.mean_motion = at_altitude(240.0).mean_motion)), Label::Breakup);
        let b = at_altitude(404.0);
        assert_eq!(label(&b, &next(&b, |r| r.mean_motion = at_altitude(395.0).mean_motion)), Label::Decay);
        let c = at_altitude(550.0);
        assert_eq!(label(&c, &next(&c, |r| r.inclination += 0.15)), Label::Maneuver);
        let d = next(&c, |r| r.bstar = 0.01);
        assert_eq!(label(&d, &next(&d, |r| r.bstar = -0.01)), Label::Maneuver);
        assert_eq!(label(&c, &next(&c, |_| {})), Label::Normal);
    }

    #[test]
    fn pair_errors() {
        let a = at_altitude(500.0);
        let mut other = a.clone();
        other.norad_id = 2;
        assert!(matches!(rule_label(&a, &other, &RuleThresholds::default()), Err(RuleError::SatelliteMismatch(1, 2))));
        let later = next(&a, |_| {});
        assert_eq!(rule_label(&later, &a, &RuleThresholds::default()), Err(RuleError::EpochOrder));
    }

    #[test]
    fn exact_thresholds_do_not_fire() {
        let th = RuleThresholds::default();
        let a = at_altitude(550.0);
        let inputs = RuleInputs::of(&a).unwrap();
        let flat = RuleInputs { inclination: 0.0, ..inputs };
        let tilted = RuleInputs { inclination: th.di_man_deg, ..inputs };
        assert_eq!(evaluate(&flat, &tilted, &th).rule, None);
        let ecc = RuleInputs { eccentricity: 0.0, ..inputs };
        let ecc2 = RuleInputs { eccentricity: 0.01, ..inputs };
        assert_eq!(evaluate(&ecc, &ecc2, &th).rule, None);
        let ratio = RuleInputs { bstar: 0.01, ..inputs };
        let ratio2 = RuleInputs { bstar: 0.02, ..inputs };
        assert_eq!(evaluate(&ratio, &ratio2, &th).rule, None);
        let high = RuleInputs { alt_km: 500.0, ..inputs };
        let low = RuleInputs { alt_km: 490.0, ..inputs };
        assert_eq!(evaluate(&high, &low, &th).rule, None);
        let reentry = RuleInputs { alt_km: 250.0, ..inputs };
        assert_ne!(evaluate(&reentry, &reentry, &th).rule, Some(1));
    }

    #[test]
    fn bstar_ratio_needs_floor() {
        let th = RuleThresholds::default();
        let a = at_altitude(550.0);
        let quiet = next(&a, |r| r.bstar = 1e-4);
        assert_eq!(label(&quiet, &next(&quiet, |r| r.bstar = 9e-4)), Label::Normal);
        let loud = next(&a, |r| r.bstar = 6e-3);
        assert_eq!(rule_outcome(&loud, &next(&loud, |r| r.bstar = 1.3e-2), &th).unwrap().rule, Some(7));
    }

    #[test]
    fn sequence_matches_pairwise() {
        let th = RuleThresholds::default();
        let mut records = vec![at_altitude(560.0)];
        for k in 1..40 {
            let prev = records.last().unwrap().clone();
            records.push(next(&prev, |r| {
                if k == 17 {
                    r.mean_motion = at_altitude(560.0 + 12.0).mean_motion;
                }
                if k == 30 {
                    r.eccentricity += 0.02;
                }
            }));
        }
        let seq = rule_label_sequence(&records, &th).unwrap();
        assert_eq!(seq[0], Label::Normal);
        for t in 1..records.len() {
            assert_eq!(seq[t], rule_label(&records[t - 1], &records[t], &th).unwrap());
        }
        let fired: Vec<usize> = seq.iter().enumerate().filter(|(_, l)| l.is_anomalous()).map(|(i, _)| i).collect();
        assert_eq!(fired, vec![17, 30]);
        assert_eq!(rule_label_sequence(&records[..1], &th).unwrap(), vec![Label::Normal]);
        assert!(rule_label_sequence(&[], &th).unwrap().is_empty());
    }

    #[test]
    fn default_thresholds_valid() {
        RuleThresholds::default().validate().unwrap();
        let bad = RuleThresholds { h_reentry_km: 500.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
