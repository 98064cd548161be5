//! Expected missed appointments per hour block, color coding, overbooking
//! recommendations and the week heatmap.
//!
//! The expectation of a sum needs no independence between appointments; the
//! floor-based overbooking recommendation reads that expectation as a risk
//! level, which does assume roughly independent attendance.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{format_timestamp, week_start, ClinicCalendar, Timestamp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error("probability {0} outside [0, 1]")]
    OutOfRangeProbability(f64),
    #[error("expected misses must be nonnegative, got {0}")]
    NegativeInput(f64),
    #[error("the week starting {0} has no clinic days")]
    EmptyWeek(NaiveDate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockColor {
    Yellow,
    Orange,
    Red,
}

/// Sum of per-appointment no-show probabilities.
pub fn expected_no_shows(probabilities: &[f64]) -> Result<f64, AggregateError> {
    let mut total = 0.0;
    for &p in probabilities {
        if !(0.0..=1.0).contains(&p) {
            return Err(AggregateError::OutOfRangeProbability(p));
        }
        total += p;
    }
    Ok(total)
}

/// Yellow below 1, orange on `[1, 2]`, red above 2.
pub fn color_code(expected_misses: f64) -> Result<BlockColor, AggregateError> {
    if !(expected_misses >= 0.0) {
        return Err(AggregateError::NegativeInput(expected_misses));
    }
    Ok(if expected_misses < 1.0 {
        BlockColor::Yellow
    } else if expected_misses <= 2.0 {
        BlockColor::Orange
    } else {
        BlockColor::Red
    })
}

/// Whole appointments that can be added while the expected load stays at or
/// below the scheduled count.
pub fn recommend_overbook(expected_misses: f64) -> u32 {
    if expected_misses > 0.0 {
        expected_misses.floor() as u32
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAppointment {
    pub appointment_id: String,
    pub provider_id: String,
    pub provider_specialty: String,
    pub site_id: String,
    #[serde(with = "timestamp_string")]
    pub scheduled_at: Timestamp,
    pub probability: f64,
}

pub(crate) mod timestamp_string {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::schema::{format_timestamp, parse_timestamp, Timestamp};

    pub fn serialize<S: Serializer>(ts: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_timestamp(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        let s = String::deserialize(d)?;
        parse_timestamp(&s).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp {s:?}")))
    }
}

/// One appointment as shown in a block's tooltip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TooltipEntry {
    pub appointment_id: String,
    pub provider_id: String,
    pub scheduled_at: String,
    pub probability: f64,
}

/// One heatmap cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub date: NaiveDate,
    pub hour: u8,
    /// `None` in a combined grid spanning several providers.
    pub provider_id: Option<String>,
    #[serde(rename = "expected")]
    pub expected_misses: f64,
    pub n_scheduled: usize,
    pub color: BlockColor,
    #[serde(rename = "overbook")]
    pub recommended_overbook: u32,
    pub appointments: Vec<TooltipEntry>,
}

impl BlockSummary {
    /// Summarises a block from its tooltip entries.
    pub fn from_entries(
        date: NaiveDate,
        hour: u8,
        provider_id: Option<String>,
        mut appointments: Vec<TooltipEntry>,
    ) -> Result<Self, AggregateError> {
        appointments.sort_by(|a, b| {
            a.scheduled_at.cmp(&b.scheduled_at).then_with(|| a.appointment_id.cmp(&b.appointment_id))
        });
        let probs: Vec<f64> = appointments.iter().map(|a| a.probability).collect();
        let expected = expected_no_shows(&probs)?;
        Ok(Self {
            date,
            hour,
            provider_id,
            expected_misses: expected,
            n_scheduled: appointments.len(),
            color: color_code(expected)?,
            recommended_overbook: recommend_overbook(expected),
            appointments,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapFilter {
    pub provider: Option<String>,
    pub specialty: Option<String>,
    pub site: Option<String>,
}

impl HeatmapFilter {
    pub fn matches(&self, a: &ScoredAppointment) -> bool {
        self.provider.as_ref().is_none_or(|p| *p == a.provider_id)
            && self.specialty.as_ref().is_none_or(|s| *s == a.provider_specialty)
            && self.site.as_ref().is_none_or(|s| *s == a.site_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One grid per provider, the view a provider works from.
    #[default]
    PerProvider,
    /// All filtered providers summed into one grid.
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    /// Monday of the displayed week.
    pub week: NaiveDate,
    /// Clinic days of the week (x axis).
    pub days: Vec<NaiveDate>,
    /// Block start hours (y axis).
    pub hours: Vec<u8>,
    pub providers: Vec<String>,
    pub grouping: Grouping,
    pub filters: HeatmapFilter,
    pub cells: Vec<BlockSummary>,
    /// Filtered appointments of the week that fall outside operating hours.
    pub outside_hours: usize,
}

impl HeatmapGrid {
    pub fn total_expected(&self) -> f64 {
        self.cells.iter().map(|c| c.expected_misses).sum()
    }

    pub fn total_scheduled(&self) -> usize {
        self.cells.iter().map(|c| c.n_scheduled).sum()
    }

    pub fn cell(&self, date: NaiveDate, hour: u8, provider: Option<&str>) -> Option<&BlockSummary> {
        self.cells
            .iter()
            .find(|c| c.date == date && c.hour == hour && c.provider_id.as_deref() == provider)
    }
}

/// Builds the week grid for the appointments passing `filter`.
///
/// `week` may be any date; it is normalised to its Monday. Every
/// (day, hour) within operating hours gets a cell, empty or not.
pub fn build_heatmap(
    scored: &[ScoredAppointment],
    week: NaiveDate,
    calendar: &ClinicCalendar,
    filter: &HeatmapFilter,
    grouping: Grouping,
) -> Result<HeatmapGrid, AggregateError> {
    let monday = week_start(week);
    let days: Vec<NaiveDate> = (0..7)
        .map(|d| monday + Duration::days(d))
        .filter(|d| calendar.is_clinic_day(*d))
        .collect();
    if days.is_empty() {
        return Err(AggregateError::EmptyWeek(monday));
    }
    let hours = calendar.block_hours();
    let step = calendar.block_hours.hours();

    let in_week: Vec<&ScoredAppointment> = scored
        .iter()
        .filter(|a| filter.matches(a))
        .filter(|a| {
            let d = a.scheduled_at.date_naive();
            d >= monday && d < monday + Duration::days(7)
        })
        .collect();

    let mut providers: Vec<String> = in_week.iter().map(|a| a.provider_id.clone()).collect();
    if let Some(p) = &filter.provider {
        providers.push(p.clone());
    }
    providers.sort();
    providers.dedup();

    let cell_provider = |a: &ScoredAppointment| -> Option<String> {
        match grouping {
            Grouping::PerProvider => Some(a.provider_id.clone()),
            Grouping::Combined => filter.provider.clone(),
        }
    };

    let mut buckets: BTreeMap<(Option<String>, NaiveDate, u8), Vec<TooltipEntry>> = BTreeMap::new();
    let mut outside_hours = 0;
    for a in &in_week {
        let date = a.scheduled_at.date_naive();
        let hour = a.scheduled_at.hour() as u8;
        let start = hour - hour % step;
        if !days.contains(&date) || !hours.contains(&start) {
            outside_hours += 1;
            continue;
        }
        buckets.entry((cell_provider(a), date, start)).or_default().push(TooltipEntry {
            appointment_id: a.appointment_id.clone(),
            provider_id: a.provider_id.clone(),
            scheduled_at: format_timestamp(&a.scheduled_at),
            probability: a.probability,
        });
    }

    let row_keys: Vec<Option<String>> = match grouping {
        Grouping::PerProvider => providers.iter().cloned().map(Some).collect(),
        Grouping::Combined => vec![filter.provider.clone()],
    };
    let mut cells = Vec::with_capacity(row_keys.len() * days.len() * hours.len());
    for key in row_keys {
        for &date in &days {
            for &hour in &hours {
                let entries = buckets.remove(&(key.clone(), date, hour)).unwrap_or_default();
                cells.push(BlockSummary::from_entries(date, hour, key.clone(), entries)?);
            }
        }
    }

    Ok(HeatmapGrid {
        week: monday,
        days,
        hours,
        providers,
        grouping,
        filters: filter.clone(),
        cells,
        outside_hours,
    })
}
