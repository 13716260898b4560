//! Eleven-feature representation of a TLE record, clipping and z-score
//! normalization.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::dynamics::{altitude_from_mean_motion, DynamicsError};
use crate::tle::TleRecord;

pub const FEATURE_COUNT: usize = 11;

/// Frozen column order of every feature matrix.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "epoch_h",
    "mean_motion",
    "eccentricity",
    "inclination",
    "bstar",
    "alt_km",
    "dt_hours",
    "raan",
    "argp",
    "mean_anomaly",
    "n_dot",
];

pub mod index {
    pub const EPOCH_H: usize = 0;
    pub const MEAN_MOTION: usize = 1;
    pub const ECCENTRICITY: usize = 2;
    pub const INCLINATION: usize = 3;
    pub const BSTAR: usize = 4;
    pub const ALT_KM: usize = 5;
    pub const DT_HOURS: usize = 6;
    pub const RAAN: usize = 7;
    pub const ARGP: usize = 8;
    pub const MEAN_ANOMALY: usize = 9;
    pub const N_DOT: usize = 10;
    /// Features measured in degrees on a circle.
    pub const ANGLES: [usize; 3] = [RAAN, ARGP, MEAN_ANOMALY];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub epoch_h: f64,
    pub mean_motion: f64,
    pub eccentricity: f64,
    pub inclination: f64,
    pub bstar: f64,
    pub alt_km: f64,
    pub dt_hours: f64,
    pub raan: f64,
    pub argp: f64,
    pub mean_anomaly: f64,
    pub n_dot: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.epoch_h,
            self.mean_motion,
            self.eccentricity,
            self.inclination,
            self.bstar,
            self.alt_km,
            self.dt_hours,
            self.raan,
            self.argp,
            self.mean_anomaly,
            self.n_dot,
        ]
    }

    pub fn from_array(a: [f64; FEATURE_COUNT]) -> Self {
        Self {
            epoch_h: a[0],
            mean_motion: a[1],
            eccentricity: a[2],
            inclination: a[3],
            bstar: a[4],
            alt_km: a[5],
            dt_hours: a[6],
            raan: a[7],
            argp: a[8],
            mean_anomaly: a[9],
            n_dot: a[10],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub bstar_clip: [f64; 2],
    pub dt_clip_hours: [f64; 2],
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { bstar_clip: [-1.0, 1.0], dt_clip_hours: [0.0, 240.0] }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("previous record ({prev}) is later than current ({cur})")]
    EpochOrder { prev: String, cur: String },
    #[error("records belong to different satellites ({0} vs {1})")]
    SatelliteMismatch(u32, u32),
    #[error("feature {name} has zero variance")]
    DegenerateFeature { index: usize, name: &'static str },
    #[error("no feature vectors to summarize")]
    EmptyStream,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("norm stats file: {0}")]
    Format(String),
}

pub(crate) fn hours_since_unix(t: &chrono::DateTime<chrono::Utc>) -> f64 {
    t.timestamp() as f64 / 3600.0 + t.timestamp_subsec_nanos() as f64 / 3.6e12
}

/// Raw (clipped, unnormalized) features of `cur`; `epoch_h` is absolute
/// hours since the Unix epoch until windowing re-zeroes it.
pub fn extract_features(
    prev: Option<&TleRecord>,
    cur: &TleRecord,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    let dt_hours = match prev {
        None => 0.0,
        Some(p) => {
            if p.norad_id != cur.norad_id {
                return Err(FeatureError::SatelliteMismatch(p.norad_id, cur.norad_id));
            }
            if p.epoch > cur.epoch {
                return Err(FeatureError::EpochOrder { prev: p.epoch.to_rfc3339(), cur: cur.epoch.to_rfc3339() });
            }
            let raw = (cur.epoch - p.epoch).num_nanoseconds().map_or(f64::INFINITY, |n| n as f64 / 3.6e12);
            raw.clamp(cfg.dt_clip_hours[0], cfg.dt_clip_hours[1])
        }
    };
    Ok(FeatureVector {
        epoch_h: hours_since_unix(&cur.epoch),
        mean_motion: cur.mean_motion,
        eccentricity: cur.eccentricity,
        inclination: cur.inclination,
        bstar: cur.bstar.clamp(cfg.bstar_clip[0], cfg.bstar_clip[1]),
        alt_km: altitude_from_mean_motion(cur.mean_motion)?,
        dt_hours,
        raan: cur.raan,
        argp: cur.argp,
        mean_anomaly: cur.mean_anomaly,
        n_dot: cur.n_dot,
    })
}

/// Features for a whole chronological per-satellite stream.
pub fn extract_sequence(records: &[TleRecord], cfg: &FeatureConfig) -> Result<Vec<FeatureVector>, FeatureError> {
    records.iter().enumerate().map(|(i, r)| extract_features(i.checked_sub(1).map(|p| &records[p]), r, cfg)).collect()
}

/// Streaming (count, mean, M2) accumulator per feature. Shards merge
/// exactly with the pairwise update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsAccumulator {
    count: u64,
    mean: [f64; FEATURE_COUNT],
    m2: [f64; FEATURE_COUNT],
}

impl Default for StatsAccumulator {
    fn default() -> Self {
        Self { count: 0, mean: [0.0; FEATURE_COUNT], m2: [0.0; FEATURE_COUNT] }
    }
}

impl StatsAccumulator {
    pub fn push(&mut self, x: &[f64; FEATURE_COUNT]) {
        self.count += 1;
        let n = self.count as f64;
        for k in 0..FEATURE_COUNT {
            let delta = x[k] - self.mean[k];
            self.mean[k] += delta / n;
            self.m2[k] += delta * (x[k] - self.mean[k]);
        }
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for k in 0..FEATURE_COUNT {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * nb / n;
            self.m2[k] += other.m2[k] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Population statistics; errors on empty input or zero variance.
    pub fn finish(&self) -> Result<NormStats, FeatureError> {
        if self.count == 0 {
            return Err(FeatureError::EmptyStream);
        }
        let mut std = [0.0; FEATURE_COUNT];
        for k in 0..FEATURE_COUNT {
            std[k] = (self.m2[k] / self.count as f64).sqrt();
            if !(std[k] > 0.0) {
                return Err(FeatureError::DegenerateFeature { index: k, name: FEATURE_NAMES[k] });
            }
        }
        Ok(NormStats { mean: self.mean, std })
    }
}

/// Corpus-wide per-feature mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormStatsFile {
    names: Vec<String>,
    mean: Vec<f64>,
    std: Vec<f64>,
}

pub fn compute_norm_stats<'a>(
    stream: impl IntoIterator<Item = &'a [f64; FEATURE_COUNT]>,
) -> Result<NormStats, FeatureError> {
    let mut acc = StatsAccumulator::default();
    for x in stream {
        acc.push(x);
    }
    acc.finish()
}

impl NormStats {
    pub fn normalize(&self, x: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|k| (x[k] - self.mean[k]) / self.std[k])
    }

    pub fn denormalize(&self, z: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|k| z[k] * self.std[k] + self.mean[k])
    }

    /// SHA-256 over the little-endian means then stds.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for v in self.mean.iter().chain(self.std.iter()) {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn to_toml(&self) -> String {
        let file = NormStatsFile {
            names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            mean: self.mean.to_vec(),
            std: self.std.to_vec(),
        };
        toml::to_string(&file).expect("plain arrays serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, FeatureError> {
        let file: NormStatsFile = toml::from_str(text).map_err(|e| FeatureError::Format(e.to_string()))?;
        if file.names.iter().map(String::as_str).ne(FEATURE_NAMES.iter().copied()) {
            return Err(FeatureError::Format("feature names do not match the frozen schema".into()));
        }
        let arr = |v: &[f64]| -> Result<[f64; FEATURE_COUNT], FeatureError> {
            v.try_into().map_err(|_| FeatureError::Format(format!("expected {FEATURE_COUNT} values")))
        };
        let stats = NormStats { mean: arr(&file.mean)?, std: arr(&file.std)? };
        if let Some(k) = stats.std.iter().position(|s| !(*s > 0.0)) {
            return Err(FeatureError::DegenerateFeature { index: k, name: FEATURE_NAMES[k] });
        }
        Ok(stats)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_toml())
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path).map_err(|e| FeatureError::Format(e.to_string()))?;
        Self::from_toml(&text)
    }
}
