//! Vendor export parsing and feature engineering.
//!
//! A [`ColumnMapping`] maps a vendor's column names, timestamp format and
//! outcome vocabulary onto the canonical schema. [`engineer_features`] then
//! walks the records in time order and accumulates each patient's history so
//! that a feature only ever sees outcomes from earlier calendar days.

use std::collections::{BTreeMap, HashMap};
use std::io;

use chrono::{Duration, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{
    chronological, format_timestamp, parse_local_timestamp, parse_timestamp, validate_record,
    weekday_index, AppointmentRecord, OutcomeLabel, Season, ValidationErrors, CANONICAL_FIELDS,
};

pub const DEFAULT_PSEUDO_COUNT: f64 = 5.0;
pub const DEFAULT_CANCELLATION_WINDOW_HOURS: i64 = 24;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("empty file")]
    EmptyFile,
    #[error("header is missing mapped vendor columns {missing:?}")]
    UnmappableHeader { missing: Vec<String> },
    #[error("invalid column mapping: {0}")]
    InvalidMapping(String),
    #[error("no-show rate undefined for zero scheduled appointments")]
    UndefinedRate,
    #[error("missed count {missed} exceeds scheduled count {scheduled}")]
    InvalidCounts { missed: u64, scheduled: u64 },
    #[error("records not sorted by (scheduled_at, appointment_id) at position {position}")]
    UnsortedInput { position: usize },
    #[error("feature table row {row}: {reason}")]
    FeatureTable { row: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How a vendor outcome value is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VendorOutcome {
    Attended,
    Missed,
    Pending,
    /// Resolved against the cancellation window.
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    /// Canonical field name to vendor column name.
    pub columns: BTreeMap<String, String>,
    /// Vendor outcome value to interpretation; empty means canonical values.
    pub outcomes: BTreeMap<String, VendorOutcome>,
    /// chrono format for naive vendor timestamps; absent means ISO-8601 with offset.
    pub timestamp_format: Option<String>,
    /// Offset attached to naive vendor timestamps.
    pub utc_offset_minutes: i32,
    /// Vendor column holding the cancellation time of cancelled rows.
    pub cancelled_at_column: Option<String>,
    pub cancellation_window_hours: i64,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self::canonical()
    }
}

impl ColumnMapping {
    /// Identity mapping for canonical CSV.
    pub fn canonical() -> Self {
        Self {
            columns: CANONICAL_FIELDS.iter().map(|f| (f.to_string(), f.to_string())).collect(),
            outcomes: BTreeMap::new(),
            timestamp_format: None,
            utc_offset_minutes: 0,
            cancelled_at_column: None,
            cancellation_window_hours: DEFAULT_CANCELLATION_WINDOW_HOURS,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        let mapping: ColumnMapping =
            toml::from_str(text).map_err(|e| IngestError::InvalidMapping(e.to_string()))?;
        mapping.validate()?;
        Ok(mapping)
    }

    /// Every canonical field except `duration_minutes` must be mapped, each
    /// to a distinct vendor column.
    pub fn validate(&self) -> Result<(), IngestError> {
        for key in self.columns.keys() {
            if !CANONICAL_FIELDS.contains(&key.as_str()) {
                return Err(IngestError::InvalidMapping(format!("unknown canonical field {key:?}")));
            }
        }
        let missing: Vec<_> = CANONICAL_FIELDS
            .iter()
            .filter(|f| **f != "duration_minutes" && !self.columns.contains_key(**f))
            .collect();
        if !missing.is_empty() {
            return Err(IngestError::InvalidMapping(format!("unmapped canonical fields {missing:?}")));
        }
        let mut seen = HashMap::new();
        for (canonical, vendor) in &self.columns {
            if let Some(prev) = seen.insert(vendor, canonical) {
                return Err(IngestError::InvalidMapping(format!(
                    "vendor column {vendor:?} mapped to both {prev:?} and {canonical:?}"
                )));
            }
        }
        if self.outcomes.values().any(|o| *o == VendorOutcome::Cancelled) && self.cancelled_at_column.is_none() {
            return Err(IngestError::InvalidMapping(
                "a cancelled outcome requires cancelled_at_column".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based data row number (the header is row 0).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRow {
    pub row: usize,
    pub reason: String,
}

/// Outcome of parsing one export. `records + errors + dropped` accounts for
/// every input row.
#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub records: Vec<AppointmentRecord>,
    pub errors: Vec<RowError>,
    /// Cancellations made before the cancellation window.
    pub dropped: Vec<DroppedRow>,
    pub rows: usize,
}

enum RowResult {
    Record(AppointmentRecord),
    Dropped(String),
}

/// Parses a delimited vendor export into canonical records.
pub fn parse_export<R: io::Read>(reader: R, mapping: &ColumnMapping) -> Result<ParseReport, IngestError> {
    mapping.validate()?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(IngestError::EmptyFile);
    }
    let position: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();

    let mut missing: Vec<String> = mapping
        .columns
        .values()
        .chain(mapping.cancelled_at_column.iter())
        .filter(|v| !position.contains_key(v.as_str()))
        .cloned()
        .collect();
    missing.sort();
    if !missing.is_empty() {
        return Err(IngestError::UnmappableHeader { missing });
    }

    let mut report = ParseReport::default();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        report.rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(RowError { row: row_no, reason: e.to_string() });
                continue;
            }
        };
        let cell = |vendor: &str| row.get(position[vendor]).unwrap_or("").trim().to_string();
        match map_row(&cell, mapping) {
            Ok(RowResult::Record(r)) => report.records.push(r),
            Ok(RowResult::Dropped(reason)) => report.dropped.push(DroppedRow { row: row_no, reason }),
            Err(reason) => report.errors.push(RowError { row: row_no, reason }),
        }
    }
    Ok(report)
}

fn map_row(cell: &dyn Fn(&str) -> String, mapping: &ColumnMapping) -> Result<RowResult, String> {
    let mut raw: HashMap<String, String> = mapping
        .columns
        .iter()
        .map(|(canonical, vendor)| (canonical.clone(), cell(vendor)))
        .collect();

    let to_canonical_time = |value: &str| -> Option<String> {
        let ts = match &mapping.timestamp_format {
            Some(fmt) => parse_local_timestamp(value, fmt, chrono::FixedOffset::east_opt(mapping.utc_offset_minutes * 60)?),
            None => parse_timestamp(value),
        };
        ts.map(|t| format_timestamp(&t))
    };
    for field in ["scheduled_at", "booked_at"] {
        if let Some(v) = raw.get(field).filter(|v| !v.is_empty()).cloned() {
            if let Some(canonical) = to_canonical_time(&v) {
                raw.insert(field.to_string(), canonical);
            }
        }
    }

    if !mapping.outcomes.is_empty() {
        let vendor_value = raw.get("outcome").cloned().unwrap_or_default();
        match mapping.outcomes.get(&vendor_value) {
            None => {
                // leave the raw value so validation reports UnknownOutcome
            }
            Some(VendorOutcome::Cancelled) => {
                let column = mapping.cancelled_at_column.as_deref().unwrap_or_default();
                let cancelled = to_canonical_time(&cell(column))
                    .and_then(|s| parse_timestamp(&s))
                    .ok_or_else(|| format!("cancelled row has malformed {column:?}"))?;
                let scheduled = raw
                    .get("scheduled_at")
                    .and_then(|s| parse_timestamp(s))
                    .ok_or_else(|| "cancelled row has malformed scheduled_at".to_string())?;
                let window = Duration::hours(mapping.cancellation_window_hours);
                if cancelled < scheduled - window {
                    return Ok(RowResult::Dropped(format!(
                        "cancelled {} before the appointment, outside the {}h window",
                        humanize(scheduled - cancelled),
                        mapping.cancellation_window_hours
                    )));
                }
                raw.insert("outcome".into(), "missed".into());
            }
            Some(other) => {
                let canonical = match other {
                    VendorOutcome::Attended => "attended",
                    VendorOutcome::Missed => "missed",
                    _ => "pending",
                };
                raw.insert("outcome".into(), canonical.into());
            }
        }
    }

    validate_record(&raw)
        .map(RowResult::Record)
        .map_err(|e: ValidationErrors| e.to_string())
}

fn humanize(d: Duration) -> String {
    format!("{}h", d.num_hours())
}

/// The raw no-show rate: missed visits over scheduled appointments.
pub fn no_show_rate(missed: u64, scheduled: u64) -> Result<f64, IngestError> {
    if scheduled == 0 {
        return Err(IngestError::UndefinedRate);
    }
    if missed > scheduled {
        return Err(IngestError::InvalidCounts { missed, scheduled });
    }
    Ok(missed as f64 / scheduled as f64)
}

/// No-show rate shrunk toward `global_rate` with `pseudo_count` phantom visits.
pub fn smoothed_hist_rate(missed: u64, scheduled: u64, global_rate: f64, pseudo_count: f64) -> f64 {
    debug_assert!(pseudo_count > 0.0 && (0.0..=1.0).contains(&global_rate));
    (missed as f64 + pseudo_count * global_rate) / (scheduled as f64 + pseudo_count)
}

/// Overall missed fraction of the labelled records, if any.
pub fn global_rate(records: &[AppointmentRecord]) -> Option<f64> {
    let (missed, total) = records
        .iter()
        .filter_map(|r| r.label())
        .fold((0u64, 0u64), |(m, t), l| (m + l.is_missed() as u64, t + 1));
    no_show_rate(missed, total).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub appointment_id: String,
    pub lead_time_days: f64,
    pub hour_of_day: u8,
    pub day_of_week: u8,
    pub season: Season,
    pub provider_specialty: String,
    pub site_id: String,
    pub patient_hist_rate: f64,
    pub patient_prior_appointments: u32,
    pub label: Option<OutcomeLabel>,
}

/// A patient's labelled appointments so far.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct PatientHistory {
    pub missed: u64,
    pub scheduled: u64,
}

/// Per-patient totals over every labelled record, i.e. the history a visit
/// after the last of `records` would see.
pub fn patient_histories(records: &[AppointmentRecord]) -> HashMap<String, PatientHistory> {
    let mut out: HashMap<String, PatientHistory> = HashMap::new();
    for rec in records {
        if let Some(label) = rec.label() {
            let h = out.entry(rec.patient_id.clone()).or_default();
            h.scheduled += 1;
            h.missed += label.is_missed() as u64;
        }
    }
    out
}

/// The feature vector of `rec` given the patient's prior history.
pub fn feature_vector(rec: &AppointmentRecord, h: PatientHistory, global_rate: f64, pseudo_count: f64) -> FeatureVector {
    let date = rec.scheduled_at.date_naive();
    FeatureVector {
        appointment_id: rec.appointment_id.clone(),
        lead_time_days: rec.lead_time_days(),
        hour_of_day: rec.scheduled_at.hour() as u8,
        day_of_week: weekday_index(date),
        season: Season::of(date),
        provider_specialty: rec.provider_specialty.clone(),
        site_id: rec.site_id.clone(),
        patient_hist_rate: smoothed_hist_rate(h.missed, h.scheduled, global_rate, pseudo_count),
        patient_prior_appointments: h.scheduled as u32,
        label: rec.label(),
    }
}

/// Computes one feature vector per record.
///
/// `records` must be sorted by `(scheduled_at, appointment_id)`. Patient
/// history only includes labelled appointments on earlier local dates, so
/// neither the appointment itself nor same-day visits leak into it.
pub fn engineer_features(
    records: &[AppointmentRecord],
    global_rate: f64,
    pseudo_count: f64,
) -> Result<Vec<FeatureVector>, IngestError> {
    if let Some(i) = records.windows(2).position(|w| chronological(&w[0], &w[1]).is_gt()) {
        return Err(IngestError::UnsortedInput { position: i + 1 });
    }

    let mut history: HashMap<&str, PatientHistory> = HashMap::new();
    let mut same_day: Vec<(&str, bool)> = Vec::new();
    let mut current_day: Option<NaiveDate> = None;
    let mut out = Vec::with_capacity(records.len());

    for rec in records {
        let date = rec.scheduled_at.date_naive();
        if current_day != Some(date) {
            for (patient, missed) in same_day.drain(..) {
                let h = history.entry(patient).or_default();
                h.scheduled += 1;
                h.missed += missed as u64;
            }
            current_day = Some(date);
        }

        let h = history.get(rec.patient_id.as_str()).copied().unwrap_or_default();
        out.push(feature_vector(rec, h, global_rate, pseudo_count));

        if let Some(label) = rec.label() {
            same_day.push((rec.patient_id.as_str(), label.is_missed()));
        }
    }
    Ok(out)
}

/// Column order of the feature-table CSV.
pub const FEATURE_TABLE_COLUMNS: [&str; 10] = [
    "appointment_id",
    "lead_time_days",
    "hour_of_day",
    "day_of_week",
    "season",
    "provider_specialty",
    "site_id",
    "patient_hist_rate",
    "patient_prior_appointments",
    "label",
];

pub fn write_feature_table<W: io::Write>(writer: W, rows: &[FeatureVector]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FEATURE_TABLE_COLUMNS)?;
    for f in rows {
        w.write_record([
            f.appointment_id.clone(),
            f.lead_time_days.to_string(),
            f.hour_of_day.to_string(),
            f.day_of_week.to_string(),
            f.season.as_str().to_string(),
            f.provider_specialty.clone(),
            f.site_id.clone(),
            f.patient_hist_rate.to_string(),
            f.patient_prior_appointments.to_string(),
            f.label.map(|l| l.value().to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_table<R: io::Read>(reader: R) -> Result<Vec<FeatureVector>, IngestError> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(FEATURE_TABLE_COLUMNS) {
        return Err(IngestError::FeatureTable { row: 0, reason: "unexpected header".into() });
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let bad = |what: &str| IngestError::FeatureTable { row: i + 1, reason: format!("bad {what}") };
        let num = |idx: usize, what: &str| row[idx].parse::<f64>().map_err(|_| bad(what));
        let label = match &row[9] {
            "" => None,
            v => Some(v.parse::<u8>().ok().and_then(OutcomeLabel::from_value).ok_or_else(|| bad("label"))?),
        };
        out.push(FeatureVector {
            appointment_id: row[0].to_string(),
            lead_time_days: num(1, "lead_time_days")?,
            hour_of_day: row[2].parse().map_err(|_| bad("hour_of_day"))?,
            day_of_week: row[3].parse().map_err(|_| bad("day_of_week"))?,
            season: row[4].parse().map_err(|_| bad("season"))?,
            provider_specialty: row[5].to_string(),
            site_id: row[6].to_string(),
            patient_hist_rate: num(7, "patient_hist_rate")?,
            patient_prior_appointments: row[8].parse().map_err(|_| bad("patient_prior_appointments"))?,
            label,
        });
    }
    Ok(out)
}

/// Sorts records into the order [`engineer_features`] requires.
pub fn sort_records(records: &mut [AppointmentRecord]) {
    records.sort_by(chronological);
}
