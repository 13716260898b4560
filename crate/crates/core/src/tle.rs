//! TLE parsing, serialization and bulk archive ingest.

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const LINE_LENGTH: usize = 69;

/// Which feed an element set came from. supGP records are operator-derived
/// and carry a much tighter observation covariance in the filter tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "TLE", alias = "tle")]
    Tle,
    #[serde(rename = "SUPGP", alias = "supgp", alias = "supGP")]
    Supgp,
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Source::Tle => "TLE",
            Source::Supgp => "SUPGP",
        })
    }
}

/// One parsed element set. Angles in degrees, mean motion in rev/day,
/// `n_dot` is the raw line-1 field (first derivative of mean motion / 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TleRecord {
    pub norad_id: u32,
    pub epoch: DateTime<Utc>,
    pub mean_motion: f64,
    pub eccentricity: f64,
    pub inclination: f64,
    pub raan: f64,
    pub argp: f64,
    pub mean_anomaly: f64,
    pub bstar: f64,
    pub n_dot: f64,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TleError {
    #[error("line {line} has length {len}, expected {LINE_LENGTH}")]
    LineLengthMismatch { line: u8, len: usize },
    #[error("line {line} does not start with '{line}'")]
    LineNumber { line: u8 },
    #[error("catalog numbers differ between lines ({first} vs {second})")]
    CatalogMismatch { first: u32, second: u32 },
    #[error("line {line} checksum mismatch: computed {computed}, found {found}")]
    ChecksumMismatch { line: u8, computed: u8, found: char },
    #[error("cannot parse field {field}: {text:?}")]
    FieldParse { field: &'static str, text: String },
    #[error("day {day} out of range for year {year}")]
    DayOutOfRange { year: i32, day: f64 },
    #[error("{field} = {value} violates element bounds")]
    InvalidElement { field: &'static str, value: f64 },
    #[error("{field} = {value} cannot be encoded in the fixed-column format")]
    Unencodable { field: &'static str, value: f64 },
}

/// Modulo-10 line checksum over the first 68 characters: digits count at
/// face value, '-' counts as 1, everything else as 0.
pub fn tle_checksum(line: &str) -> u8 {
    let sum: u32 = line
        .bytes()
        .take(LINE_LENGTH - 1)
        .map(|b| match b {
            b'0'..=b'9' => (b - b'0') as u32,
            b'-' => 1,
            _ => 0,
        })
        .sum();
    (sum % 10) as u8
}

/// Converts the 2-digit year and fractional day-of-year of a TLE epoch.
pub fn epoch_to_instant(yy: u32, fractional_doy: f64) -> Result<DateTime<Utc>, TleError> {
    let year = if yy >= 57 { 1900 + yy as i32 } else { 2000 + yy as i32 };
    let days_in_year = if NaiveDate::from_ymd_opt(year, 2, 29).is_some() { 366.0 } else { 365.0 };
    if !(fractional_doy >= 1.0 && fractional_doy < days_in_year + 1.0) {
        return Err(TleError::DayOutOfRange { year, day: fractional_doy });
    }
    let jan1 = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).single().expect("valid date");
    let nanos = ((fractional_doy - 1.0) * 86_400e9).round() as i64;
    Ok(jan1 + Duration::nanoseconds(nanos))
}

/// Inverse of [`epoch_to_instant`]: (2-digit year, fractional day-of-year).
pub fn instant_to_epoch(t: &DateTime<Utc>) -> (u32, f64) {
    let year = t.year();
    let jan1 = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).single().expect("valid date");
    let since = (*t - jan1).num_nanoseconds().unwrap_or(i64::MAX) as f64 / 86_400e9;
    ((year.rem_euclid(100)) as u32, 1.0 + since)
}

fn field(line: &str, start: usize, end: usize) -> &str {
    // 1-based inclusive columns
    &line[start - 1..end]
}

fn parse_f64(line: &str, start: usize, end: usize, name: &'static str) -> Result<f64, TleError> {
    let text = field(line, start, end).trim();
    text.parse::<f64>().map_err(|_| TleError::FieldParse { field: name, text: text.to_string() })
}

fn parse_u32(line: &str, start: usize, end: usize, name: &'static str) -> Result<u32, TleError> {
    let text = field(line, start, end).trim();
    text.parse::<u32>().map_err(|_| TleError::FieldParse { field: name, text: text.to_string() })
}

/// Decodes the implied-decimal exponent notation: " 12345-3" = 0.12345e-3.
fn parse_implied_exponent(text: &str, name: &'static str) -> Result<f64, TleError> {
    let err = || TleError::FieldParse { field: name, text: text.to_string() };
    let t = text.trim();
    if t.is_empty() {
        return Ok(0.0);
    }
    let (sign, rest) = match t.as_bytes()[0] {
        b'-' => ("-", &t[1..]),
        b'+' => ("", &t[1..]),
        _ => ("", t),
    };
    if rest.len() < 2 {
        return Err(err());
    }
    let split = rest.len() - 2;
    let (mantissa, exponent) = rest.split_at(split);
    let exp_sign = match exponent.as_bytes()[0] {
        b'-' => "-",
        b'+' | b' ' => "",
        _ => return Err(err()),
    };
    let exp_digit = &exponent[1..];
    if !mantissa.bytes().all(|b| b.is_ascii_digit()) || !exp_digit.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    format!("{sign}0.{mantissa}e{exp_sign}{exp_digit}").parse::<f64>().map_err(|_| err())
}

fn format_implied_exponent(value: f64, name: &'static str) -> Result<String, TleError> {
    if value == 0.0 || value.abs() < 1e-10 {
        return Ok(" 00000-0".to_string());
    }
    if !value.is_finite() {
        return Err(TleError::Unencodable { field: name, value });
    }
    let sci = format!("{:.4e}", value.abs());
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let exp: i32 = exp.parse::<i32>().expect("exponent") + 1;
    if !(-9..=9).contains(&exp) {
        return Err(TleError::Unencodable { field: name, value });
    }
    let sign = if value < 0.0 { '-' } else { ' ' };
    let exp_sign = if exp < 0 { '-' } else { '+' };
    Ok(format!("{sign}{digits}{exp_sign}{}", exp.abs()))
}

fn check_line(line: &str, number: u8) -> Result<(), TleError> {
    if line.len() != LINE_LENGTH || !line.is_ascii() {
        return Err(TleError::LineLengthMismatch { line: number, len: line.chars().count() });
    }
    if line.as_bytes()[0] != b'0' + number {
        return Err(TleError::LineNumber { line: number });
    }
    let found = line.as_bytes()[LINE_LENGTH - 1] as char;
    let computed = tle_checksum(line);
    if found.to_digit(10) != Some(computed as u32) {
        return Err(TleError::ChecksumMismatch { line: number, computed, found });
    }
    Ok(())
}

fn wrap_degrees(field: &'static str, value: f64) -> Result<f64, TleError> {
    if !(0.0..=360.0).contains(&value) {
        return Err(TleError::InvalidElement { field, value });
    }
    Ok(if value == 360.0 { 0.0 } else { value })
}

/// Parses one TLE line pair. The record is tagged [`Source::Tle`]; callers
/// re-tag supGP feeds.
pub fn parse_tle_lines(line1: &str, line2: &str) -> Result<TleRecord, TleError> {
    check_line(line1, 1)?;
    check_line(line2, 2)?;
    let first = parse_u32(line1, 3, 7, "catalog number")?;
    let second = parse_u32(line2, 3, 7, "catalog number")?;
    if first != second {
        return Err(TleError::CatalogMismatch { first, second });
    }

    let yy = parse_u32(line1, 19, 20, "epoch year")?;
    let doy = parse_f64(line1, 21, 32, "epoch day")?;
    let epoch = epoch_to_instant(yy, doy)?;
    let n_dot = parse_f64(line1, 34, 43, "n_dot")?;
    let bstar = parse_implied_exponent(field(line1, 54, 61), "bstar")?;

    let inclination = parse_f64(line2, 9, 16, "inclination")?;
    let raan = wrap_degrees("raan", parse_f64(line2, 18, 25, "raan")?)?;
    let ecc_text = field(line2, 27, 33).trim();
    if ecc_text.is_empty() || !ecc_text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(TleError::FieldParse { field: "eccentricity", text: ecc_text.to_string() });
    }
    let eccentricity: f64 = format!("0.{ecc_text}").parse().expect("digits");
    let argp = wrap_degrees("argp", parse_f64(line2, 35, 42, "argp")?)?;
    let mean_anomaly = wrap_degrees("mean_anomaly", parse_f64(line2, 44, 51, "mean_anomaly")?)?;
    let mean_motion = parse_f64(line2, 53, 63, "mean_motion")?;

    if !(0.0..=180.0).contains(&inclination) {
        return Err(TleError::InvalidElement { field: "inclination", value: inclination });
    }
    if !(mean_motion > 0.0) {
        return Err(TleError::InvalidElement { field: "mean_motion", value: mean_motion });
    }

    Ok(TleRecord {
        norad_id: first,
        epoch,
        mean_motion,
        eccentricity,
        inclination,
        raan,
        argp,
        mean_anomaly,
        bstar,
        n_dot,
        source: Source::Tle,
    })
}

fn format_angle(field: &'static str, deg: f64) -> Result<String, TleError> {
    if !(0.0..360.0).contains(&deg) {
        return Err(TleError::Unencodable { field, value: deg });
    }
    let s = format!("{deg:8.4}");
    Ok(if s == "360.0000" { "  0.0000".to_string() } else { s })
}

fn with_checksum(mut body: String) -> String {
    let c = tle_checksum(&body);
    body.push((b'0' + c) as char);
    body
}

impl TleRecord {
    /// Serializes to the fixed-column two-line format. Fields the record does
    /// not carry (classification, designator, second derivative, element set
    /// and revolution numbers) are written with neutral defaults.
    pub fn to_tle_lines(&self) -> Result<(String, String), TleError> {
        if self.norad_id > 99_999 {
            return Err(TleError::Unencodable { field: "catalog number", value: self.norad_id as f64 });
        }
        let (yy, doy) = instant_to_epoch(&self.epoch);
        let day = format!("{doy:012.8}");
        // rounding can carry past the last day of the year
        if day.len() != 12 || epoch_to_instant(yy, day.parse().expect("formatted")).is_err() {
            return Err(TleError::Unencodable { field: "epoch day", value: doy });
        }
        if self.n_dot.abs() >= 1.0 || !self.n_dot.is_finite() {
            return Err(TleError::Unencodable { field: "n_dot", value: self.n_dot });
        }
        let nd = format!("{:.8}", self.n_dot.abs());
        let nd = format!("{}{}", if self.n_dot < 0.0 { '-' } else { ' ' }, &nd[1..]);
        let nd = if nd == "-.00000000" { " .00000000".to_string() } else { nd };
        let bstar = format_implied_exponent(self.bstar, "bstar")?;

        let mut l1 = String::with_capacity(LINE_LENGTH);
        write!(l1, "1 {:05}U {:8} {:02}{} {}  00000-0 {} 0 {:4}", self.norad_id, "", yy, day, nd, bstar, 999)
            .expect("write to string");

        if !(0.0..=180.0).contains(&self.inclination) {
            return Err(TleError::Unencodable { field: "inclination", value: self.inclination });
        }
        let ecc = (self.eccentricity * 1e7).round();
        if !(0.0..1e7).contains(&ecc) {
            return Err(TleError::Unencodable { field: "eccentricity", value: self.eccentricity });
        }
        let mm = format!("{:11.8}", self.mean_motion);
        if mm.len() != 11 || !(self.mean_motion > 0.0) {
            return Err(TleError::Unencodable { field: "mean_motion", value: self.mean_motion });
        }
        let mut l2 = String::with_capacity(LINE_LENGTH);
        write!(
            l2,
            "2 {:05} {:8.4} {} {:07} {} {} {}{:05}",
            self.norad_id,
            self.inclination,
            format_angle("raan", self.raan)?,
            ecc as u64,
            format_angle("argp", self.argp)?,
            format_angle("mean_anomaly", self.mean_anomaly)?,
            mm,
            0
        )
        .expect("write to string");
        debug_assert_eq!(l1.len(), LINE_LENGTH - 1, "{l1}");
        debug_assert_eq!(l2.len(), LINE_LENGTH - 1, "{l2}");
        Ok((with_checksum(l1), with_checksum(l2)))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} contains no TLE entries")]
    EmptyArchive { path: PathBuf },
}

/// One input file and the feed it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSource {
    pub path: PathBuf,
    #[serde(default = "default_source")]
    pub source: Source,
}

fn default_source() -> Source {
    Source::Tle
}

/// Per-satellite chronological streams plus ingest counters.
///
/// `entries = emitted + malformed + duplicates` always holds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    pub streams: BTreeMap<u32, Vec<TleRecord>>,
    pub entries: usize,
    pub malformed: usize,
    pub duplicates: usize,
}

impl Archive {
    pub fn emitted(&self) -> usize {
        self.streams.values().map(Vec::len).sum()
    }

    /// Entries that did not make it into a stream.
    pub fn skipped(&self) -> usize {
        self.malformed + self.duplicates
    }

    /// Records in deterministic (norad_id, epoch) order.
    pub fn records(&self) -> impl Iterator<Item = &TleRecord> {
        self.streams.values().flatten()
    }
}

/// Result of scanning one archive's text, before grouping.
#[derive(Debug, Clone, Default)]
pub struct ScanResult {
    pub records: Vec<TleRecord>,
    pub entries: usize,
    pub malformed: usize,
}

/// Splits archive text into 2-line or 3-line entries and parses each one.
/// Name lines are ignored; malformed entries are counted, not fatal.
pub fn scan_archive_text(text: &str, source: Source) -> ScanResult {
    let lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    let mut out = ScanResult::default();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if line.trim().is_empty() {
            i += 1;
            continue;
        }
        let starts = |l: &str, c: u8| l.len() >= 2 && l.as_bytes()[0] == c && l.as_bytes()[1] == b' ';
        if starts(line, b'1') {
            out.entries += 1;
            if i + 1 < lines.len() && starts(lines[i + 1], b'2') {
                match parse_tle_lines(line, lines[i + 1]) {
                    Ok(mut rec) => {
                        rec.source = source;
                        out.records.push(rec);
                    }
                    Err(e) => {
                        log::debug!("skipping malformed entry at line {}: {e}", i + 1);
                        out.malformed += 1;
                    }
                }
                i += 2;
            } else {
                out.malformed += 1;
                i += 1;
            }
        } else if starts(line, b'2') {
            // orphan second line
            out.entries += 1;
            out.malformed += 1;
            i += 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Groups scanned records per satellite, sorts by epoch (stable, so input
/// order breaks ties) and drops exact-duplicate epochs keeping the first.
pub fn group_records(scans: Vec<ScanResult>) -> Archive {
    let mut archive = Archive::default();
    for scan in scans {
        archive.entries += scan.entries;
        archive.malformed += scan.malformed;
        for rec in scan.records {
            archive.streams.entry(rec.norad_id).or_default().push(rec);
        }
    }
    for stream in archive.streams.values_mut() {
        stream.sort_by_key(|r| r.epoch);
        let before = stream.len();
        stream.dedup_by(|later, earlier| later.epoch == earlier.epoch);
        archive.duplicates += before - stream.len();
    }
    archive
}

fn read_text(path: &Path) -> Result<String, ArchiveError> {
    let bytes = std::fs::read(path).map_err(|source| ArchiveError::Io { path: path.to_path_buf(), source })?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn scan_file(path: &Path, source: Source) -> Result<ScanResult, ArchiveError> {
    let text = read_text(path)?;
    let scan = scan_archive_text(&text, source);
    if scan.entries == 0 {
        return Err(ArchiveError::EmptyArchive { path: path.to_path_buf() });
    }
    Ok(scan)
}

/// Reads one archive file into per-satellite streams.
pub fn read_bulk_archive(path: impl AsRef<Path>, source: Source) -> Result<Archive, ArchiveError> {
    Ok(group_records(vec![scan_file(path.as_ref(), source)?]))
}

/// Reads several archives (in parallel on the current rayon pool) and merges
/// them. Ordering and dedup depend only on the order of `sources`.
pub fn ingest(sources: &[IngestSource]) -> Result<Archive, ArchiveError> {
    let scans = sources.par_iter().map(|s| scan_file(&s.path, s.source)).collect::<Result<Vec<_>, _>>()?;
    Ok(group_records(scans))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ISS1: &str = "1 25544U 98067A   08264.51782528 -.00002182  00000-0 -11606-4 0  2927";
    const ISS2: &str = "2 25544  51.6416 247.4627 0006703 130.5360 325.0288 15.72125391563537";
    // bstar field replaced by " 12345-3", mean motion by 15.5, checksums from
    // an independent reference parser
    const MOD1: &str = "1 25544U 98067A   08264.51782528 -.00002182  00000-0  12345-3 0  2926";
    const MOD2: &str = "2 25544  51.6416 247.4627 0006703 130.5360 325.0288 15.50000000563532";

    #[test]
    fn checksum_examples() {
        assert_eq!(tle_checksum(&"0".repeat(68)), 0);
        assert_eq!(tle_checksum(&"1".repeat(68)), 8);
        assert_eq!(tle_checksum(ISS1), 7);
        assert_eq!(tle_checksum(ISS2), 7);
        assert_eq!(tle_checksum(&"-".repeat(68)), 8);
    }

    #[test]
    fn parses_reference_line_pair() {
        let r = parse_tle_lines(ISS1, ISS2).unwrap();
        assert_eq!(r.norad_id, 25544);
        assert_eq!(r.source, Source::Tle);
        // reference parser: bstar -1.1606e-05, epoch 2008-09-20 12:25:40.104191
        assert_eq!(r.bstar, -1.1606e-05);
        assert_eq!(r.n_dot, -0.00002182);
        assert_eq!(r.eccentricity, 0.0006703);
        assert_eq!(r.inclination, 51.6416);
        assert_eq!(r.mean_motion, 15.72125391);
        let expected = Utc.with_ymd_and_hms(2008, 9, 20, 12, 25, 40).unwrap() + Duration::microseconds(104_191);
        assert!((r.epoch - expected).num_microseconds().unwrap().abs() <= 1);
    }

    #[test]
    fn implied_exponent_bstar_and_mean_motion() {
        let r = parse_tle_lines(MOD1, MOD2).unwrap();
        assert_eq!(r.mean_motion, 15.5);
        // reference parser value 0.00012345000000000002
        assert!((r.bstar - 0.12345e-3).abs() < 1e-18);
    }

    #[test]
    fn perturbed_last_digit_is_checksum_error() {
        let mut bad = ISS2.to_string();
        bad.replace_range(67..68, "8");
        assert!(matches!(parse_tle_lines(ISS1, &bad), Err(TleError::ChecksumMismatch { line: 2, .. })));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(parse_tle_lines(&ISS1[..60], ISS2), Err(TleError::LineLengthMismatch { line: 1, len: 60 })));
        assert!(matches!(parse_tle_lines(ISS2, ISS1), Err(TleError::LineNumber { line: 1 })));
        let mut other = ISS2.replace("25544", "25545");
        other = with_checksum(other[..68].to_string());
        assert!(matches!(parse_tle_lines(ISS1, &other), Err(TleError::CatalogMismatch { .. })));
        let mut junk = ISS2[..68].to_string();
        junk.replace_range(8..16, "  5x.641");
        let junk = with_checksum(junk);
        assert!(matches!(parse_tle_lines(ISS1, &junk), Err(TleError::FieldParse { field: "inclination", .. })));
    }

    #[test]
    fn epoch_examples() {
        assert_eq!(epoch_to_instant(98, 1.0).unwrap(), Utc.with_ymd_and_hms(1998, 1, 1, 0, 0, 0).unwrap());
        assert_eq!(epoch_to_instant(0, 1.5).unwrap(), Utc.with_ymd_and_hms(2000, 1, 1, 12, 0, 0).unwrap());
        // calendar oracle: 2020 leap year, day 60 = Feb 29
        assert_eq!(epoch_to_instant(20, 60.25).unwrap(), Utc.with_ymd_and_hms(2020, 2, 29, 6, 0, 0).unwrap());
        assert_eq!(epoch_to_instant(57, 1.0).unwrap().year(), 1957);
        assert_eq!(epoch_to_instant(56, 1.0).unwrap().year(), 2056);
        assert!(epoch_to_instant(20, 366.9).is_ok());
        assert!(matches!(epoch_to_instant(21, 366.0), Err(TleError::DayOutOfRange { year: 2021, .. })));
        assert!(epoch_to_instant(21, 0.5).is_err());
    }

    #[test]
    fn serialization_reproduces_reference_fields() {
        let r = parse_tle_lines(ISS1, ISS2).unwrap();
        let (l1, l2) = r.to_tle_lines().unwrap();
        assert_eq!(l1.len(), 69);
        assert_eq!(&l1[18..43], &ISS1[18..43]);
        assert_eq!(&l1[53..61], &ISS1[53..61]);
        assert_eq!(&l2[..63], &ISS2[..63]);
        assert_eq!(parse_tle_lines(&l1, &l2).unwrap(), r);
    }

    #[test]
    fn implied_exponent_formatting() {
        assert_eq!(format_implied_exponent(0.12345e-3, "b").unwrap(), " 12345-3");
        assert_eq!(format_implied_exponent(-1.1606e-5, "b").unwrap(), "-11606-4");
        assert_eq!(format_implied_exponent(0.0, "b").unwrap(), " 00000-0");
        assert_eq!(format_implied_exponent(0.5, "b").unwrap(), " 50000+0");
        assert_eq!(parse_implied_exponent(" 50000+0", "b").unwrap(), 0.5);
        assert_eq!(parse_implied_exponent(" 00000-0", "b").unwrap(), 0.0);
        assert_eq!(parse_implied_exponent(" 00000+0", "b").unwrap(), 0.0);
    }

    fn archive_text() -> String {
        let a = parse_tle_lines(ISS1, ISS2).unwrap();
        let mut later = a.clone();
        later.epoch += Duration::hours(6);
        let mut other = a.clone();
        other.norad_id = 44713;
        other.epoch += Duration::hours(3);
        let mut text = String::new();
        for (i, r) in [later, other.clone(), a, other].iter().enumerate() {
            let (l1, l2) = r.to_tle_lines().unwrap();
            if i == 1 {
                text.push_str("STARLINK-1007\n");
            }
            text.push_str(&format!("{l1}\n{l2}\n"));
        }
        text
    }

    #[test]
    fn interleaved_satellites_are_grouped_and_sorted() {
        let archive = group_records(vec![scan_archive_text(&archive_text(), Source::Tle)]);
        assert_eq!(archive.streams.len(), 2);
        let iss = &archive.streams[&25544];
        assert_eq!(iss.len(), 2);
        assert!(iss[0].epoch < iss[1].epoch);
        // the repeated 44713 entry is an exact duplicate
        assert_eq!(archive.streams[&44713].len(), 1);
        assert_eq!(archive.duplicates, 1);
        assert_eq!(archive.entries, 4);
        assert_eq!(archive.skipped() + archive.emitted(), archive.entries);
    }

    #[test]
    fn malformed_entries_are_counted() {
        let r = parse_tle_lines(ISS1, ISS2).unwrap();
        let mut text = String::new();
        for h in 0..3 {
            let mut x = r.clone();
            x.epoch += Duration::hours(h);
            let (l1, l2) = x.to_tle_lines().unwrap();
            text.push_str(&format!("{l1}\n{l2}\n"));
        }
        let mut bad = ISS2.to_string();
        bad.replace_range(68..69, "0");
        text.push_str(&format!("{ISS1}\n{bad}\n"));
        let archive = group_records(vec![scan_archive_text(&text, Source::Supgp)]);
        assert_eq!(archive.emitted(), 3);
        assert_eq!(archive.malformed, 1);
        assert!(archive.records().all(|r| r.source == Source::Supgp));
    }

    #[test]
    fn empty_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.tle");
        std::fs::write(&p, "\n\n").unwrap();
        assert!(matches!(read_bulk_archive(&p, Source::Tle), Err(ArchiveError::EmptyArchive { .. })));
        assert!(matches!(read_bulk_archive(dir.path().join("nope.tle"), Source::Tle), Err(ArchiveError::Io { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn record() -> impl Strategy<Value = TleRecord> {
            (
                1u32..99_999,
                0i64..(60 * 365 * 86_400),
                (0.5f64..17.0, 0.0f64..0.99, 0.0f64..180.0),
                (0.0f64..360.0, 0.0f64..360.0, 0.0f64..360.0),
                (-0.5f64..0.5, -0.01f64..0.01),
            )
                .prop_map(|(id, secs, (n, e, i), (raan, argp, ma), (bstar, nd))| {
                    // quantize to what the text format can hold, so the first
                    // serialization is already lossless
                    let q = |x: f64, s: f64| (x * s).round() / s;
                    let t0 = Utc.with_ymd_and_hms(1970, 1, 1, 0, 0, 0).unwrap();
                    let rec = TleRecord {
                        norad_id: id,
                        epoch: t0 + Duration::seconds(secs),
                        mean_motion: q(n, 1e8),
                        eccentricity: q(e, 1e7),
                        inclination: q(i, 1e4),
                        raan: q(raan, 1e4) % 360.0,
                        argp: q(argp, 1e4) % 360.0,
                        mean_anomaly: q(ma, 1e4) % 360.0,
                        bstar,
                        n_dot: q(nd, 1e8),
                        source: Source::Tle,
                    };
                    let (l1, l2) = rec.to_tle_lines().unwrap();
                    parse_tle_lines(&l1, &l2).unwrap()
                })
        }

        proptest! {
            #[test]
            fn parse_serialize_parse_is_identity(rec in record()) {
                let (l1, l2) = rec.to_tle_lines().unwrap();
                prop_assert_eq!(tle_checksum(&l1) as u32, l1.chars().last().unwrap().to_digit(10).unwrap());
                let again = parse_tle_lines(&l1, &l2).unwrap();
                prop_assert_eq!(again, rec);
            }
        }
    }
}
