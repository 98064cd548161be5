//! The canonical appointment schema every stage consumes.
//!
//! Timestamps always carry an explicit UTC offset, which is taken to be the
//! clinic-local offset at the time of the appointment. Block arithmetic is done
//! in that local time.

use std::collections::HashMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use chrono::{
    DateTime, Datelike, Duration, FixedOffset, NaiveDate, NaiveDateTime, Timelike, Weekday,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Timestamp = DateTime<FixedOffset>;

/// Field names of the canonical record CSV, in column order.
pub const CANONICAL_FIELDS: [&str; 9] = [
    "appointment_id",
    "provider_id",
    "provider_specialty",
    "patient_id",
    "site_id",
    "scheduled_at",
    "booked_at",
    "duration_minutes",
    "outcome",
];

pub const DEFAULT_DURATION_MINUTES: u16 = 15;
pub const MIN_DURATION_MINUTES: u16 = 5;
pub const MAX_DURATION_MINUTES: u16 = 240;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Attended,
    Missed,
    /// A future appointment that is being scored.
    Pending,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Attended => "attended",
            Outcome::Missed => "missed",
            Outcome::Pending => "pending",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "attended" => Ok(Outcome::Attended),
            "missed" => Ok(Outcome::Missed),
            "pending" => Ok(Outcome::Pending),
            _ => Err(RecordError::UnknownOutcome { value: s.to_string() }),
        }
    }
}

/// Binary training label: 1 = missed, 0 = attended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomeLabel(bool);

impl OutcomeLabel {
    pub const ATTENDED: OutcomeLabel = OutcomeLabel(false);
    pub const MISSED: OutcomeLabel = OutcomeLabel(true);

    /// Pending appointments never yield a label.
    pub fn from_outcome(outcome: Outcome) -> Option<Self> {
        match outcome {
            Outcome::Attended => Some(Self::ATTENDED),
            Outcome::Missed => Some(Self::MISSED),
            Outcome::Pending => None,
        }
    }

    pub fn from_value(value: u8) -> Option<Self> {
        match value {
            0 => Some(Self::ATTENDED),
            1 => Some(Self::MISSED),
            _ => None,
        }
    }

    pub fn is_missed(self) -> bool {
        self.0
    }

    pub fn value(self) -> u8 {
        self.0 as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AppointmentRecord {
    pub appointment_id: String,
    pub provider_id: String,
    pub provider_specialty: String,
    pub patient_id: String,
    pub site_id: String,
    pub scheduled_at: Timestamp,
    pub booked_at: Timestamp,
    pub duration_minutes: u16,
    pub outcome: Outcome,
}

impl AppointmentRecord {
    pub fn lead_time(&self) -> Duration {
        self.scheduled_at.signed_duration_since(self.booked_at)
    }

    pub fn lead_time_days(&self) -> f64 {
        self.lead_time().num_minutes() as f64 / 1440.0
    }

    pub fn label(&self) -> Option<OutcomeLabel> {
        OutcomeLabel::from_outcome(self.outcome)
    }

    pub fn block(&self) -> HourBlock {
        block_of(&self.scheduled_at, &self.provider_id)
    }

    /// Renders the record as canonical CSV field values, in
    /// [`CANONICAL_FIELDS`] order.
    pub fn to_fields(&self) -> [String; 9] {
        [
            self.appointment_id.clone(),
            self.provider_id.clone(),
            self.provider_specialty.clone(),
            self.patient_id.clone(),
            self.site_id.clone(),
            format_timestamp(&self.scheduled_at),
            format_timestamp(&self.booked_at),
            self.duration_minutes.to_string(),
            self.outcome.to_string(),
        ]
    }

    pub fn to_field_map(&self) -> HashMap<String, String> {
        CANONICAL_FIELDS
            .iter()
            .map(|f| f.to_string())
            .zip(self.to_fields())
            .collect()
    }
}

/// Sort key used everywhere records must be processed in time order.
pub fn chronological(a: &AppointmentRecord, b: &AppointmentRecord) -> std::cmp::Ordering {
    a.scheduled_at
        .cmp(&b.scheduled_at)
        .then_with(|| a.appointment_id.cmp(&b.appointment_id))
}

/// A provider's `[start_hour:00, start_hour + len:00)` window on one local date.
///
/// The UTC offset is part of the identity, so that the repeated hour of a
/// daylight-saving fall-back never folds two different instants together.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HourBlock {
    pub date: NaiveDate,
    pub start_hour: u8,
    pub provider_id: String,
    pub utc_offset_minutes: i32,
}

impl HourBlock {
    pub fn start(&self) -> Timestamp {
        let offset = FixedOffset::east_opt(self.utc_offset_minutes * 60).expect("valid offset");
        let naive = self
            .date
            .and_hms_opt(self.start_hour as u32, 0, 0)
            .expect("hour in range");
        naive.and_local_timezone(offset).single().expect("fixed offsets are unambiguous")
    }
}

/// Length of an aggregation block, in whole hours dividing a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct BlockLength(u8);

impl BlockLength {
    pub const ONE_HOUR: BlockLength = BlockLength(1);

    pub fn hours(self) -> u8 {
        self.0
    }
}

impl Default for BlockLength {
    fn default() -> Self {
        Self::ONE_HOUR
    }
}

impl TryFrom<u8> for BlockLength {
    type Error = String;

    fn try_from(hours: u8) -> Result<Self, Self::Error> {
        if hours > 0 && 24 % hours == 0 {
            Ok(BlockLength(hours))
        } else {
            Err(format!("block length must divide 24 hours, got {hours}"))
        }
    }
}

impl From<BlockLength> for u8 {
    fn from(b: BlockLength) -> u8 {
        b.0
    }
}

/// Assigns an appointment to the hour block containing its start time.
pub fn block_of(scheduled_at: &Timestamp, provider_id: &str) -> HourBlock {
    block_of_with(scheduled_at, provider_id, BlockLength::ONE_HOUR)
}

pub fn block_of_with(scheduled_at: &Timestamp, provider_id: &str, len: BlockLength) -> HourBlock {
    let hour = scheduled_at.hour() as u8;
    HourBlock {
        date: scheduled_at.date_naive(),
        start_hour: hour - hour % len.hours(),
        provider_id: provider_id.to_string(),
        utc_offset_minutes: scheduled_at.offset().local_minus_utc() / 60,
    }
}

/// Meteorological season: Dec-Feb winter, Mar-May spring, Jun-Aug summer, Sep-Nov fall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Fall];

    pub fn of(date: NaiveDate) -> Season {
        match date.month() {
            12 | 1 | 2 => Season::Winter,
            3..=5 => Season::Spring,
            6..=8 => Season::Summer,
            _ => Season::Fall,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Fall => "fall",
        }
    }
}

impl FromStr for Season {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Season::ALL
            .into_iter()
            .find(|season| season.as_str() == s)
            .ok_or_else(|| format!("unknown season {s:?}"))
    }
}

/// Clinic operating calendar shared by the generator, heatmap and simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClinicCalendar {
    pub open_hour: u8,
    pub close_hour: u8,
    /// Days the clinic is open, Monday = 0.
    pub clinic_days: Vec<u8>,
    /// Clinic-local UTC offset in minutes.
    pub utc_offset_minutes: i32,
    pub block_hours: BlockLength,
}

impl Default for ClinicCalendar {
    fn default() -> Self {
        Self {
            open_hour: 8,
            close_hour: 16,
            clinic_days: vec![0, 1, 2, 3, 4],
            utc_offset_minutes: -5 * 60,
            block_hours: BlockLength::ONE_HOUR,
        }
    }
}

impl ClinicCalendar {
    pub fn offset(&self) -> FixedOffset {
        FixedOffset::east_opt(self.utc_offset_minutes * 60).expect("offset within a day")
    }

    pub fn is_clinic_day(&self, date: NaiveDate) -> bool {
        self.clinic_days
            .contains(&(date.weekday().num_days_from_monday() as u8))
    }

    /// Block start hours within operating hours.
    pub fn block_hours(&self) -> Vec<u8> {
        let step = self.block_hours.hours() as usize;
        (self.open_hour..self.close_hour).step_by(step).collect()
    }

    pub fn open_hours(&self) -> u8 {
        self.close_hour.saturating_sub(self.open_hour)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.close_hour <= self.open_hour || self.close_hour > 24 {
            return Err(format!(
                "clinic hours must satisfy open < close <= 24, got {}..{}",
                self.open_hour, self.close_hour
            ));
        }
        if self.clinic_days.is_empty() || self.clinic_days.iter().any(|&d| d > 6) {
            return Err("clinic_days must list weekdays 0..=6".into());
        }
        if self.utc_offset_minutes.abs() >= 24 * 60 {
            return Err("utc offset out of range".into());
        }
        Ok(())
    }

    pub fn at(&self, date: NaiveDate, hour: u32, minute: u32) -> Timestamp {
        date.and_hms_opt(hour, minute, 0)
            .expect("valid clock time")
            .and_local_timezone(self.offset())
            .single()
            .expect("fixed offsets are unambiguous")
    }
}

/// Monday of the ISO week containing `date`.
pub fn week_start(date: NaiveDate) -> NaiveDate {
    date - Duration::days(date.weekday().num_days_from_monday() as i64)
}

pub fn weekday_index(date: NaiveDate) -> u8 {
    date.weekday().num_days_from_monday() as u8
}

pub fn weekday_from_index(i: u8) -> Weekday {
    Weekday::try_from(i).unwrap_or(Weekday::Mon)
}

pub fn format_timestamp(ts: &Timestamp) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S%:z").to_string()
}

/// Parses an ISO-8601 timestamp with an explicit offset, truncated to the minute.
pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    let parsed = DateTime::parse_from_rfc3339(s)
        .ok()
        .or_else(|| DateTime::parse_from_str(s, "%Y-%m-%dT%H:%M%:z").ok())
        .or_else(|| DateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%:z").ok())
        .or_else(|| DateTime::parse_from_str(s, "%Y-%m-%d %H:%M%:z").ok())?;
    parsed.with_second(0)?.with_nanosecond(0)
}

/// Parses a naive local timestamp with a custom format and attaches `offset`.
pub fn parse_local_timestamp(s: &str, format: &str, offset: FixedOffset) -> Option<Timestamp> {
    let naive = NaiveDateTime::parse_from_str(s.trim(), format).ok()?;
    let ts = naive.and_local_timezone(offset).single()?;
    ts.with_second(0)?.with_nanosecond(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("missing field `{field}`")]
    MissingField { field: String },
    #[error("malformed timestamp in `{field}`: {value:?}")]
    MalformedTimestamp { field: String, value: String },
    #[error("booked_at {booked_at} is after scheduled_at {scheduled_at}")]
    NegativeLeadTime { booked_at: String, scheduled_at: String },
    #[error("unknown outcome {value:?}")]
    UnknownOutcome { value: String },
    #[error("duration_minutes must be an integer in 5..=240, got {value:?}")]
    InvalidDuration { value: String },
}

/// Every violation found in one raw record.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationErrors(pub Vec<RecordError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Builds a typed record from raw string fields, reporting every violation at once.
///
/// `duration_minutes` may be absent or empty, in which case it defaults to 15.
pub fn validate_record(raw: &HashMap<String, String>) -> Result<AppointmentRecord, ValidationErrors> {
    let mut errors = Vec::new();

    let text = |field: &str, errors: &mut Vec<RecordError>| -> Option<String> {
        match raw.get(field).map(|v| v.trim()) {
            Some(v) if !v.is_empty() => Some(v.to_string()),
            _ => {
                errors.push(RecordError::MissingField { field: field.into() });
                None
            }
        }
    };

    let appointment_id = text("appointment_id", &mut errors);
    let provider_id = text("provider_id", &mut errors);
    let provider_specialty = text("provider_specialty", &mut errors);
    let patient_id = text("patient_id", &mut errors);
    let site_id = text("site_id", &mut errors);

    let stamp = |field: &str, errors: &mut Vec<RecordError>| -> Option<Timestamp> {
        let value = text(field, errors)?;
        let ts = parse_timestamp(&value);
        if ts.is_none() {
            errors.push(RecordError::MalformedTimestamp { field: field.into(), value });
        }
        ts
    };
    let scheduled_at = stamp("scheduled_at", &mut errors);
    let booked_at = stamp("booked_at", &mut errors);

    if let (Some(s), Some(b)) = (scheduled_at, booked_at) {
        if b > s {
            errors.push(RecordError::NegativeLeadTime {
                booked_at: format_timestamp(&b),
                scheduled_at: format_timestamp(&s),
            });
        }
    }

    let duration_minutes = match raw.get("duration_minutes").map(|v| v.trim()) {
        None | Some("") => Some(DEFAULT_DURATION_MINUTES),
        Some(v) => match v.parse::<u16>() {
            Ok(d) if (MIN_DURATION_MINUTES..=MAX_DURATION_MINUTES).contains(&d) => Some(d),
            _ => {
                errors.push(RecordError::InvalidDuration { value: v.to_string() });
                None
            }
        },
    };

    let outcome = text("outcome", &mut errors).and_then(|v| match v.parse::<Outcome>() {
        Ok(o) => Some(o),
        Err(e) => {
            errors.push(e);
            None
        }
    });

    if !errors.is_empty() {
        return Err(ValidationErrors(errors));
    }
    Ok(AppointmentRecord {
        appointment_id: appointment_id.unwrap(),
        provider_id: provider_id.unwrap(),
        provider_specialty: provider_specialty.unwrap(),
        patient_id: patient_id.unwrap(),
        site_id: site_id.unwrap(),
        scheduled_at: scheduled_at.unwrap(),
        booked_at: booked_at.unwrap(),
        duration_minutes: duration_minutes.unwrap(),
        outcome: outcome.unwrap(),
    })
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("header must be exactly {expected:?}, got {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("row {row}: {errors}")]
    Row { row: usize, errors: ValidationErrors },
}

/// Writes records as canonical CSV.
pub fn write_records<W: io::Write>(writer: W, records: &[AppointmentRecord]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CANONICAL_FIELDS)?;
    for r in records {
        w.write_record(r.to_fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads canonical CSV, failing on the first invalid row. Use
/// [`crate::ingest::parse_export`] for row-level error reporting.
pub fn read_records<R: io::Read>(reader: R) -> Result<Vec<AppointmentRecord>, CsvError> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CANONICAL_FIELDS {
        return Err(CsvError::Header {
            expected: CANONICAL_FIELDS.iter().map(|s| s.to_string()).collect(),
            found: header,
        });
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let map = header
            .iter()
            .cloned()
            .zip(row.iter().map(str::to_string))
            .collect();
        let rec = validate_record(&map).map_err(|errors| CsvError::Row { row: i + 1, errors })?;
        out.push(rec);
    }
    Ok(out)
}
