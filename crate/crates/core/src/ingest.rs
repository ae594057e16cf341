//! Parsing of LLS stroke records and turbine-database records from delimited
//! text into validated domain records.
//!
//! Column mapping is configuration-driven so NLDN-like and USWTDB-like
//! exports both ingest without code changes. Invalid rows are counted and
//! sampled in a rejection report, never silently dropped; rows excluded by a
//! documented filter (non-CG strokes, low location confidence) are tallied
//! separately so that
//! `admitted + rejected + filtered == input rows` always holds.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing mapped column '{0}' in header")]
    MissingColumn(String),
    #[error("invalid height category bounds: {0}")]
    BadCategoryBounds(String),
}

/// One LLS-detected stroke.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeRecord {
    /// UTC instant, millisecond precision.
    pub timestamp: DateTime<Utc>,
    pub latitude: f64,
    pub longitude: f64,
    /// Signed peak current in kA. Carried through, unused by the core fit.
    pub peak_current_ka: f64,
    pub event_type: EventType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventType {
    CgStroke,
    Other,
}

/// One wind turbine from a USWTDB-like export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurbineRecord {
    pub turbine_id: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Maximum blade tip height H in meters.
    pub tip_height_m: f64,
    /// Year the project became operational.
    pub operational_year: i32,
    /// Reported location confidence, 0..=3.
    pub location_confidence: u8,
}

impl TurbineRecord {
    /// A turbine is treated as present from Jan 1 of its operational year.
    pub fn operational_start(&self) -> DateTime<Utc> {
        use chrono::TimeZone;
        Utc.with_ymd_and_hms(self.operational_year, 1, 1, 0, 0, 0).unwrap()
    }

    pub fn operational_at(&self, t: DateTime<Utc>) -> bool {
        t >= self.operational_start()
    }
}

// ---------------------------------------------------------------------------
// Column mappings
// ---------------------------------------------------------------------------

/// Column names for a stroke export.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrokeSchema {
    pub time: String,
    pub lat: String,
    pub lon: String,
    pub peak_current: String,
    #[serde(rename = "type")]
    pub event_type: String,
    /// Field delimiter, a single ASCII character.
    pub delimiter: char,
}

impl Default for StrokeSchema {
    fn default() -> Self {
        Self {
            time: "time".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            peak_current: "peak_current".into(),
            event_type: "type".into(),
            delimiter: ',',
        }
    }
}

/// Column names for a turbine-database export.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurbineSchema {
    pub id: String,
    pub lat: String,
    pub lon: String,
    pub total_height_m: String,
    pub p_year: String,
    pub loc_conf: String,
    pub delimiter: char,
}

impl Default for TurbineSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            total_height_m: "total_height_m".into(),
            p_year: "p_year".into(),
            loc_conf: "loc_conf".into(),
            delimiter: ',',
        }
    }
}

// ---------------------------------------------------------------------------
// Rejection reporting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    /// Wrong field count or unreadable row.
    Malformed,
    /// A numeric field failed to parse.
    BadNumber,
    /// Timestamp missing an explicit UTC offset or otherwise unparseable.
    BadTimestamp,
    /// A value outside its documented range (|lat| > 90, height <= 0, ...).
    Range,
}

const MAX_SAMPLES_PER_REASON: usize = 10;

/// Counts by rejection reason plus the first few raw rows per reason.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RejectionReport {
    pub rows: u64,
    pub admitted: u64,
    pub rejected: u64,
    /// Rows excluded by a documented filter (non-CG strokes, location
    /// confidence below 3), not errors.
    pub filtered: u64,
    pub by_reason: BTreeMap<RejectReason, u64>,
    pub samples: BTreeMap<RejectReason, Vec<String>>,
}

impl RejectionReport {
    fn reject(&mut self, reason: RejectReason, raw: &csv::StringRecord) {
        self.rejected += 1;
        *self.by_reason.entry(reason).or_insert(0) += 1;
        let samples = self.samples.entry(reason).or_default();
        if samples.len() < MAX_SAMPLES_PER_REASON {
            samples.push(raw.iter().collect::<Vec<_>>().join(","));
        }
    }
}

// ---------------------------------------------------------------------------
// Parsers
// ---------------------------------------------------------------------------

fn column_indices<'a>(
    headers: &csv::StringRecord,
    wanted: impl Iterator<Item = &'a str>,
) -> Result<Vec<usize>, IngestError> {
    wanted
        .map(|name| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
        })
        .collect()
}

fn parse_f64(field: &str) -> Option<f64> {
    let v: f64 = field.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Parse stroke records. Non-CG rows are filtered (tallied, not returned);
/// malformed or out-of-range rows are rejected with a reason.
pub fn parse_strokes<R: Read>(
    source: R,
    schema: &StrokeSchema,
) -> Result<(Vec<StrokeRecord>, RejectionReport), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let idx = column_indices(
        &headers,
        [
            schema.time.as_str(),
            schema.lat.as_str(),
            schema.lon.as_str(),
            schema.peak_current.as_str(),
            schema.event_type.as_str(),
        ]
        .into_iter(),
    )?;
    let [i_time, i_lat, i_lon, i_cur, i_type] = [idx[0], idx[1], idx[2], idx[3], idx[4]];

    let mut records = Vec::new();
    let mut report = RejectionReport::default();
    for row in reader.records() {
        let row = row?;
        report.rows += 1;
        let fields = match [i_time, i_lat, i_lon, i_cur, i_type]
            .iter()
            .map(|&i| row.get(i))
            .collect::<Option<Vec<_>>>()
        {
            Some(f) => f,
            None => {
                report.reject(RejectReason::Malformed, &row);
                continue;
            }
        };
        // Require an explicit UTC offset; naive timestamps are ambiguous.
        let timestamp = match DateTime::parse_from_rfc3339(fields[0].trim()) {
            Ok(t) => t.with_timezone(&Utc),
            Err(_) => {
                report.reject(RejectReason::BadTimestamp, &row);
                continue;
            }
        };
        let (lat, lon, cur) = match (parse_f64(fields[1]), parse_f64(fields[2]), parse_f64(fields[3]))
        {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                report.reject(RejectReason::BadNumber, &row);
                continue;
            }
        };
        if lat.abs() > 90.0 || lon.abs() > 180.0 {
            report.reject(RejectReason::Range, &row);
            continue;
        }
        let event_type = if fields[4].trim().eq_ignore_ascii_case("cg")
            || fields[4].trim().eq_ignore_ascii_case("cg_stroke")
        {
            EventType::CgStroke
        } else {
            EventType::Other
        };
        if event_type != EventType::CgStroke {
            report.filtered += 1;
            continue;
        }
        report.admitted += 1;
        records.push(StrokeRecord { timestamp, latitude: lat, longitude: lon, peak_current_ka: cur, event_type });
    }
    Ok((records, report))
}

/// Parse turbine records, admitting only rows with the highest location
/// confidence (3). Lower-confidence rows are filtered, not rejected.
pub fn parse_turbines<R: Read>(
    source: R,
    schema: &TurbineSchema,
) -> Result<(Vec<TurbineRecord>, RejectionReport), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let idx = column_indices(
        &headers,
        [
            schema.id.as_str(),
            schema.lat.as_str(),
            schema.lon.as_str(),
            schema.total_height_m.as_str(),
            schema.p_year.as_str(),
            schema.loc_conf.as_str(),
        ]
        .into_iter(),
    )?;
    let [i_id, i_lat, i_lon, i_h, i_year, i_conf] = [idx[0], idx[1], idx[2], idx[3], idx[4], idx[5]];

    let mut records = Vec::new();
    let mut report = RejectionReport::default();
    for row in reader.records() {
        let row = row?;
        report.rows += 1;
        let fields = match [i_id, i_lat, i_lon, i_h, i_year, i_conf]
            .iter()
            .map(|&i| row.get(i))
            .collect::<Option<Vec<_>>>()
        {
            Some(f) => f,
            None => {
                report.reject(RejectReason::Malformed, &row);
                continue;
            }
        };
        let (lat, lon, height) = match (parse_f64(fields[1]), parse_f64(fields[2]), parse_f64(fields[3])) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                report.reject(RejectReason::BadNumber, &row);
                continue;
            }
        };
        let (year, conf) = match (fields[4].trim().parse::<i32>(), fields[5].trim().parse::<u8>()) {
            (Ok(y), Ok(c)) => (y, c),
            _ => {
                report.reject(RejectReason::BadNumber, &row);
                continue;
            }
        };
        if lat.abs() > 90.0 || lon.abs() > 180.0 || height <= 0.0 || conf > 3 {
            report.reject(RejectReason::Range, &row);
            continue;
        }
        if conf < 3 {
            report.filtered += 1;
            continue;
        }
        report.admitted += 1;
        records.push(TurbineRecord {
            turbine_id: fields[0].trim().to_string(),
            latitude: lat,
            longitude: lon,
            tip_height_m: height,
            operational_year: year,
            location_confidence: conf,
        });
    }
    Ok((records, report))
}

// ---------------------------------------------------------------------------
// Height categories
// ---------------------------------------------------------------------------

/// Ordered, possibly non-contiguous set of half-open height intervals
/// `[lo, hi)` in meters. Heights outside every interval are unbinned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeightCategories {
    categories: Vec<HeightCategory>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeightCategory {
    pub label: String,
    pub lo_m: f64,
    pub hi_m: f64,
}

impl HeightCategories {
    pub fn new(categories: Vec<(String, f64, f64)>) -> Result<Self, IngestError> {
        if categories.is_empty() {
            return Err(IngestError::BadCategoryBounds("no categories".into()));
        }
        let mut prev_hi = f64::NEG_INFINITY;
        for (label, lo, hi) in &categories {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(IngestError::BadCategoryBounds(format!(
                    "{label}: [{lo}, {hi}) is not a valid interval"
                )));
            }
            if *lo < prev_hi {
                return Err(IngestError::BadCategoryBounds(format!(
                    "{label}: overlaps or is out of order at {lo}"
                )));
            }
            prev_hi = *hi;
        }
        Ok(Self {
            categories: categories
                .into_iter()
                .map(|(label, lo_m, hi_m)| HeightCategory { label, lo_m, hi_m })
                .collect(),
        })
    }

    /// The five tip-height categories used in the CONUS analysis. The
    /// 140-145 m gap between H3 and H4 is intentionally unassigned.
    pub fn conus_default() -> Self {
        Self::new(vec![
            ("H1".into(), 85.0, 115.0),
            ("H2".into(), 115.0, 130.0),
            ("H3".into(), 130.0, 140.0),
            ("H4".into(), 145.0, 160.0),
            ("H5".into(), 160.0, 200.0),
        ])
        .unwrap()
    }

    /// Category index for a height, or `None` if unbinned.
    pub fn assign(&self, h_m: f64) -> Option<usize> {
        self.categories.iter().position(|c| h_m >= c.lo_m && h_m < c.hi_m)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.categories[index].label
    }

    /// Midpoint height of a category in meters (regression input).
    pub fn midpoint_m(&self, index: usize) -> f64 {
        0.5 * (self.categories[index].lo_m + self.categories[index].hi_m)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &HeightCategory> {
        self.categories.iter()
    }
}
