//! Fixed-length windows over per-satellite feature sequences, seeded
//! train/val/test assignment, and the binary dataset file.
//!
//! Dataset layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "ORBLWIN\0"
//! version      u32      1
//! n_windows    u64
//! t            u32      rows per window
//! f            u32      features per row (11)
//! seed         u64      split seed
//! stats_digest 32 bytes SHA-256 of the normalization stats
//! label_blocks u32
//! data         n*t*f f32, row-major, normalized features
//! per block    u8 tier id, then n*t label bytes
//! ```

use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};

use crate::features::{index, NormStats, FEATURE_COUNT};
use crate::label::Label;

pub const DATASET_MAGIC: [u8; 8] = *b"ORBLWIN\0";
pub const DATASET_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 8 + 4 + 8 + 4 + 4 + 8 + 32 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub length: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { length: 50, stride: 25 }
    }
}

/// Which labeler produced a label block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum LabelTier {
    Rule = 0,
    Imm = 1,
    Truth = 2,
}

impl LabelTier {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Rule),
            1 => Some(Self::Imm),
            2 => Some(Self::Truth),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub norad_id: u32,
    pub start: usize,
    /// Raw (clipped, unnormalized) feature rows, `epoch_h` re-zeroed.
    pub rows: Vec<[f64; FEATURE_COUNT]>,
    pub labels: Vec<(LabelTier, Vec<Label>)>,
}

impl Window {
    /// Attaches the slice of a full-sequence label vector covered by this window.
    pub fn attach_labels(&mut self, tier: LabelTier, sequence_labels: &[Label]) {
        let slice = sequence_labels[self.start..self.start + self.rows.len()].to_vec();
        self.labels.retain(|(t, _)| *t != tier);
        self.labels.push((tier, slice));
    }

    pub fn labels_for(&self, tier: LabelTier) -> Option<&[Label]> {
        self.labels.iter().find(|(t, _)| *t == tier).map(|(_, l)| l.as_slice())
    }
}

pub fn window_count(n: usize, cfg: &WindowConfig) -> usize {
    if n < cfg.length || cfg.stride == 0 {
        0
    } else {
        (n - cfg.length) / cfg.stride + 1
    }
}

/// Slices a chronological feature sequence into self-contained windows.
/// Sequences shorter than one window yield nothing.
pub fn make_windows(norad_id: u32, seq: &[[f64; FEATURE_COUNT]], cfg: &WindowConfig) -> Vec<Window> {
    (0..window_count(seq.len(), cfg))
        .map(|w| {
            let start = w * cfg.stride;
            let mut rows = seq[start..start + cfg.length].to_vec();
            let t0 = rows[0][index::EPOCH_H];
            for r in rows.iter_mut() {
                r[index::EPOCH_H] -= t0;
            }
            rows[0][index::DT_HOURS] = 0.0;
            Window { norad_id, start, rows, labels: Vec::new() }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub seed: u64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { seed: 42, train_fraction: 0.8, val_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub seed: u64,
    pub splits: Vec<Split>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform value in [0, 1) determined by (seed, window identity).
pub fn split_key(seed: u64, norad_id: u32, start: usize) -> f64 {
    let id = ((norad_id as u64) << 32) ^ start as u64;
    let h = splitmix64(splitmix64(id) ^ splitmix64(seed));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

pub fn assign_split(norad_id: u32, start: usize, cfg: &SplitConfig) -> Split {
    let u = split_key(cfg.seed, norad_id, start);
    if u < cfg.train_fraction {
        Split::Train
    } else if u < cfg.train_fraction + cfg.val_fraction {
        Split::Val
    } else {
        Split::Test
    }
}

pub fn assign_splits(windows: &[Window], cfg: &SplitConfig) -> SplitAssignment {
    SplitAssignment { seed: cfg.seed, splits: windows.iter().map(|w| assign_split(w.norad_id, w.start, cfg)).collect() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub n_windows: u64,
    pub t: u32,
    pub f: u32,
    pub seed: u64,
    pub stats_digest: [u8; 32],
    pub label_blocks: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub data: Vec<f32>,
    pub labels: Vec<(LabelTier, Vec<u8>)>,
}

/// Writes normalized windows. Every window must carry every tier in `tiers`
/// and share one length.
pub fn write_dataset<W: Write>(
    mut out: W,
    windows: &[&Window],
    stats: &NormStats,
    seed: u64,
    tiers: &[LabelTier],
) -> io::Result<()> {
    let t = windows.first().map_or(0, |w| w.rows.len());
    if windows.iter().any(|w| w.rows.len() != t) {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "windows differ in length"));
    }
    out.write_all(&DATASET_MAGIC)?;
    out.write_all(&DATASET_VERSION.to_le_bytes())?;
    out.write_all(&(windows.len() as u64).to_le_bytes())?;
    out.write_all(&(t as u32).to_le_bytes())?;
    out.write_all(&(FEATURE_COUNT as u32).to_le_bytes())?;
    out.write_all(&seed.to_le_bytes())?;
    out.write_all(&stats.digest())?;
    out.write_all(&(tiers.len() as u32).to_le_bytes())?;

    let mut buf = Vec::with_capacity(t * FEATURE_COUNT * 4);
    for w in windows {
        buf.clear();
        for row in &w.rows {
            for z in stats.normalize(row) {
                buf.extend_from_slice(&(z as f32).to_le_bytes());
            }
        }
        out.write_all(&buf)?;
    }
    for tier in tiers {
        out.write_all(&[*tier as u8])?;
        for w in windows {
            let labels = w.labels_for(*tier).ok_or_else(|| {
                io::Error::new(
                    io::ErrorKind::InvalidInput,
                    format!("window {}:{} lacks {tier:?} labels", w.norad_id, w.start),
                )
            })?;
            let bytes: Vec<u8> = labels.iter().map(|l| l.as_byte()).collect();
            out.write_all(&bytes)?;
        }
    }
    Ok(())
}

pub fn read_dataset<R: Read>(mut input: R) -> io::Result<Dataset> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut head = [0u8; HEADER_LEN];
    input.read_exact(&mut head)?;
    if head[..8] != DATASET_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(head[o..o + 8].try_into().unwrap());
    if u32_at(8) != DATASET_VERSION {
        return Err(bad("unsupported version"));
    }
    let header = DatasetHeader {
        n_windows: u64_at(12),
        t: u32_at(20),
        f: u32_at(24),
        seed: u64_at(28),
        stats_digest: head[36..68].try_into().unwrap(),
        label_blocks: u32_at(68),
    };
    let cells = header.n_windows as usize * header.t as usize;
    let mut raw = vec![0u8; cells * header.f as usize * 4];
    input.read_exact(&mut raw)?;
    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let mut labels = Vec::new();
    for _ in 0..header.label_blocks {
        let mut tier = [0u8; 1];
        input.read_exact(&mut tier)?;
        let tier = LabelTier::from_byte(tier[0]).ok_or_else(|| bad("unknown label tier"))?;
        let mut block = vec![0u8; cells];
        input.read_exact(&mut block)?;
        if block.iter().any(|b| Label::from_byte(*b).is_none()) {
            return Err(bad("label byte out of range"));
        }
        labels.push((tier, block));
    }
    Ok(Dataset { header, data, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::index::{DT_HOURS, EPOCH_H};
    use proptest::prelude::*;

    fn sequence(n: usize) -> Vec<[f64; FEATURE_COUNT]> {
        let mut t = 1000.0;
        (0..n)
            .map(|i| {
                let dt = 1.0 + (i % 7) as f64;
                t += dt;
                let mut r = [0.0; FEATURE_COUNT];
                r[EPOCH_H] = t;
                r[DT_HOURS] = dt;
                r[1] = 15.0 + i as f64 * 1e-3;
                r
            })
            .collect()
    }

    #[test]
    fn window_counts() {
        let cfg = WindowConfig::default();
        for (n, expected) in [(49, 0), (50, 1), (75, 2), (100, 3), (1000, 39)] {
            let w = make_windows(1, &sequence(n), &cfg);
            assert_eq!(w.len(), expected, "N = {n}");
            assert_eq!(window_count(n, &cfg), expected);
        }
        let starts: Vec<_> = make_windows(1, &sequence(100), &cfg).iter().map(|w| w.start).collect();
        assert_eq!(starts, vec![0, 25, 50]);
    }

    #[test]
    fn rows_are_rezeroed() {
        let seq = sequence(120);
        for w in make_windows(3, &seq, &WindowConfig::default()) {
            assert_eq!(w.rows[0][EPOCH_H], 0.0);
            assert_eq!(w.rows[0][DT_HOURS], 0.0);
            for k in 1..w.rows.len() {
                let gap = w.rows[k][EPOCH_H] - w.rows[k - 1][EPOCH_H];
                assert!(gap >= 0.0);
                assert!((gap - w.rows[k][DT_HOURS]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tiny_windows_for_desk_tests() {
        let cfg = WindowConfig { length: 4, stride: 2 };
        assert_eq!(make_windows(1, &sequence(9), &cfg).len(), 3);
    }

    #[test]
    fn cross_split_overlap_bounded_by_stride() {
        let cfg = WindowConfig::default();
        let windows = make_windows(9, &sequence(1000), &cfg);
        let asg = assign_splits(&windows, &SplitConfig::default());
        for (i, a) in windows.iter().enumerate() {
            for (j, b) in windows.iter().enumerate() {
                if asg.splits[i] != asg.splits[j] {
                    let lo = a.start.max(b.start);
                    let hi = (a.start + cfg.length).min(b.start + cfg.length);
                    assert!(hi.saturating_sub(lo) <= cfg.stride);
                }
            }
        }
    }

    #[test]
    fn split_fractions_and_determinism() {
        let cfg = SplitConfig::default();
        let ids: Vec<(u32, usize)> = (0..100_000u32).map(|i| (i / 40, (i % 40) as usize * 25)).collect();
        let a: Vec<Split> = ids.iter().map(|(n, s)| assign_split(*n, *s, &cfg)).collect();
        let b: Vec<Split> = ids.iter().map(|(n, s)| assign_split(*n, *s, &cfg)).collect();
        assert_eq!(a, b);
        let frac = |s: Split| a.iter().filter(|x| **x == s).count() as f64 / a.len() as f64;
        assert!((frac(Split::Train) - 0.8).abs() < 0.01);
        assert!((frac(Split::Val) - 0.1).abs() < 0.01);
        assert!((frac(Split::Test) - 0.1).abs() < 0.01);
        let other = SplitConfig { seed: 43, ..cfg };
        let c: Vec<Split> = ids.iter().map(|(n, s)| assign_split(*n, *s, &other)).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn dataset_round_trip() {
        let seq = sequence(80);
        let mut windows = make_windows(5, &seq, &WindowConfig::default());
        let labels: Vec<Label> = (0..80).map(|i| if i == 60 { Label::Maneuver } else { Label::Normal }).collect();
        for w in windows.iter_mut() {
            w.attach_labels(LabelTier::Rule, &labels);
        }
        let stats = NormStats { mean: [1.0; FEATURE_COUNT], std: [2.0; FEATURE_COUNT] };
        let refs: Vec<&Window> = windows.iter().collect();
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &refs, &stats, 42, &[LabelTier::Rule]).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 50 * 11 * 4 + 1 + 2 * 50);
        let ds = read_dataset(bytes.as_slice()).unwrap();
        assert_eq!(ds.header.n_windows, 2);
        assert_eq!(ds.header.t, 50);
        assert_eq!(ds.header.f, 11);
        assert_eq!(ds.header.seed, 42);
        assert_eq!(ds.header.stats_digest, stats.digest());
        assert_eq!(ds.data[0], ((0.0 - 1.0) / 2.0) as f32);
        assert_eq!(ds.labels[0].0, LabelTier::Rule);
        // window 1 starts at 25, so index 60 is row 35
        assert_eq!(ds.labels[0].1[50 + 35], 1);
        assert_eq!(ds.labels[0].1.iter().filter(|b| **b != 0).count(), 1);
        assert!(write_dataset(Vec::new(), &refs, &stats, 42, &[LabelTier::Imm]).is_err());
        assert!(read_dataset(&bytes[..10]).is_err());
    }

    proptest! {
        #[test]
        fn window_count_formula(n in 0usize..500, len in 2usize..60, stride in 1usize..30) {
            let cfg = WindowConfig { length: len, stride };
            let w = make_windows(1, &sequence(n), &cfg);
            let expected = if n >= len { (n - len) / stride + 1 } else { 0 };
            prop_assert_eq!(w.len(), expected);
            for win in &w {
                prop_assert!(win.start + len <= n);
            }
        }
    }
}
