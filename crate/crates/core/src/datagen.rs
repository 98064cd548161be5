//! Synthetic clinic histories with a known logistic no-show process.
//!
//! Every appointment's no-show probability is the inverse logit of
//!
//! ```text
//! base_logit + patient_intercept + coef_lead_time * lead_days
//!            + coef_hour_of_day[hour] + coef_day_of_week[dow] + coef_season[season]
//! ```
//!
//! and outcomes are Bernoulli draws from it. The probabilities are kept in a
//! [`GroundTruth`] table that oracle tests and the policy simulator use but the
//! model never sees. Default coefficients are synthetic and not estimates of
//! any real clinic.

use std::collections::HashMap;
use std::io;

use chrono::{Duration, NaiveDate, Timelike};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::schema::{
    weekday_index, AppointmentRecord, ClinicCalendar, Outcome, Season, Timestamp,
    DEFAULT_DURATION_MINUTES,
};

const BISECTION_TOLERANCE: f64 = 1e-4;
const LOGIT_BOUND: f64 = 40.0;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("infeasible generator config: {0}")]
    InfeasibleConfig(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_providers: usize,
    pub n_patients: usize,
    pub horizon_days: u32,
    /// First calendar day of the generated history.
    pub start_date: NaiveDate,
    pub slots_per_hour: u8,
    pub calendar: ClinicCalendar,
    pub base_logit: f64,
    /// Logit change per day of lead time.
    pub coef_lead_time: f64,
    pub coef_hour_of_day: [f64; 24],
    /// Monday first.
    pub coef_day_of_week: [f64; 7],
    /// Winter, spring, summer, fall.
    pub coef_season: [f64; 4],
    pub patient_propensity_sd: f64,
    /// When present, `base_logit` is re-solved so the population marginal matches.
    pub target_marginal_rate: Option<f64>,
    pub lead_time_median_days: f64,
    pub lead_time_sigma: f64,
    pub max_lead_days: f64,
    pub specialties: Vec<String>,
    pub n_sites: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let mut hour = [0.0; 24];
        hour[8] = 0.35;
        hour[9] = 0.10;
        hour[11] = -0.10;
        hour[12] = 0.20;
        hour[13] = -0.05;
        hour[15] = 0.35;
        Self {
            n_providers: 10,
            n_patients: 4000,
            horizon_days: 730,
            start_date: NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(),
            slots_per_hour: 4,
            calendar: ClinicCalendar::default(),
            base_logit: -1.5,
            coef_lead_time: 0.04,
            coef_hour_of_day: hour,
            coef_day_of_week: [0.25, 0.0, -0.10, 0.0, 0.30, 0.20, 0.20],
            coef_season: [0.25, -0.10, 0.15, -0.10],
            patient_propensity_sd: 0.8,
            target_marginal_rate: Some(0.25),
            lead_time_median_days: 7.0,
            lead_time_sigma: 1.0,
            max_lead_days: 60.0,
            specialties: ["family_medicine", "internal_medicine", "pediatrics", "obgyn"]
                .map(String::from)
                .to_vec(),
            n_sites: 3,
            seed: 20_220_503,
        }
    }
}

impl GeneratorConfig {
    /// All covariate effects switched off.
    pub fn null_signal() -> Self {
        Self {
            coef_lead_time: 0.0,
            coef_hour_of_day: [0.0; 24],
            coef_day_of_week: [0.0; 7],
            coef_season: [0.0; 4],
            patient_propensity_sd: 0.0,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, GenError> {
        toml_table(text, "generator")
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InfeasibleConfig(m));
        if let Err(m) = self.calendar.validate() {
            return bad(m);
        }
        if self.n_providers == 0 || self.n_patients == 0 || self.horizon_days == 0 {
            return bad("n_providers, n_patients and horizon_days must be positive".into());
        }
        if self.slots_per_hour == 0 || 60 % self.slots_per_hour != 0 {
            return bad(format!("slots_per_hour must divide 60, got {}", self.slots_per_hour));
        }
        if self.specialties.is_empty() || self.n_sites == 0 {
            return bad("need at least one specialty and one site".into());
        }
        if !(self.patient_propensity_sd >= 0.0) {
            return bad("patient_propensity_sd must be nonnegative".into());
        }
        if !(self.lead_time_median_days > 0.0 && self.lead_time_sigma >= 0.0) {
            return bad("lead time distribution parameters out of range".into());
        }
        if let Some(t) = self.target_marginal_rate {
            if !(0.0..1.0).contains(&t) {
                return bad(format!("target_marginal_rate must lie in [0, 1), got {t}"));
            }
        }
        if !self.base_logit.is_finite() {
            return bad("base_logit must be finite".into());
        }
        Ok(())
    }

    fn slot_minutes(&self) -> u32 {
        60 / self.slots_per_hour as u32
    }
}

/// Reads one table of a TOML document (or the whole document if the table is absent).
pub(crate) fn toml_table<T: serde::de::DeserializeOwned>(text: &str, table: &str) -> Result<T, GenError> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| GenError::Parse(e.to_string()))?;
    let value = match doc.get(table) {
        Some(v) => v.clone(),
        None => toml::Value::Table(doc),
    };
    value.try_into().map_err(|e: toml::de::Error| GenError::Parse(e.to_string()))
}

pub fn inverse_logit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Covariate part of the linear predictor (everything except intercepts).
fn covariate_effect(record: &AppointmentRecord, config: &GeneratorConfig) -> f64 {
    let date = record.scheduled_at.date_naive();
    config.coef_lead_time * record.lead_time_days()
        + config.coef_hour_of_day[record.scheduled_at.hour() as usize]
        + config.coef_day_of_week[weekday_index(date) as usize]
        + config.coef_season[Season::of(date).index()]
}

/// True no-show probability of one appointment under `config`.
pub fn true_probability(record: &AppointmentRecord, patient_intercept: f64, config: &GeneratorConfig) -> f64 {
    let eta = config.base_logit + patient_intercept + covariate_effect(record, config);
    // Clamp keeps the result strictly inside (0, 1) in f64.
    inverse_logit(eta.clamp(-700.0, 36.0))
}

/// Per-appointment true probabilities, aligned with the generated records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub entries: Vec<(String, f64)>,
}

impl GroundTruth {
    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, p)| *p)
    }

    pub fn lookup(&self) -> HashMap<&str, f64> {
        self.entries.iter().map(|(id, p)| (id.as_str(), *p)).collect()
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), GenError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["appointment_id", "true_probability"])?;
        for (id, p) in &self.entries {
            w.write_record([id.as_str(), &p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self, GenError> {
        let mut r = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for row in r.records() {
            let row = row?;
            let p = row
                .get(1)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| GenError::Parse(format!("bad ground-truth row {row:?}")))?;
            entries.push((row.get(0).unwrap_or_default().to_string(), p));
        }
        Ok(Self { entries })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub records: Vec<AppointmentRecord>,
    pub truth: GroundTruth,
}

impl GeneratedData {
    pub fn missed_fraction(&self) -> f64 {
        let labelled: Vec<_> = self.records.iter().filter_map(|r| r.label()).collect();
        labelled.iter().filter(|l| l.is_missed()).count() as f64 / labelled.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub provider_id: String,
    pub specialty: String,
    pub site_id: String,
}

/// A synthetic patient population and provider roster with a calibrated
/// no-show process.
#[derive(Debug, Clone)]
pub struct SyntheticClinic {
    config: GeneratorConfig,
    intercepts: Vec<f64>,
    providers: Vec<ProviderProfile>,
    history: Vec<AppointmentRecord>,
    history_probs: Vec<f64>,
}

impl SyntheticClinic {
    pub fn new(config: GeneratorConfig) -> Result<Self, GenError> {
        config.validate()?;
        let mut config = config;

        let mut rng = rng::named_stream(config.seed, "patients");
        let intercepts = if config.patient_propensity_sd > 0.0 {
            let normal = Normal::new(0.0, config.patient_propensity_sd)
                .map_err(|e| GenError::InfeasibleConfig(e.to_string()))?;
            (0..config.n_patients).map(|_| normal.sample(&mut rng)).collect()
        } else {
            vec![0.0; config.n_patients]
        };

        let providers = (0..config.n_providers)
            .map(|i| ProviderProfile {
                provider_id: format!("D{:02}", i + 1),
                specialty: config.specialties[i % config.specialties.len()].clone(),
                site_id: format!("S{}", i % config.n_sites + 1),
            })
            .collect();

        let mut clinic = Self { config: config.clone(), intercepts, providers, history: vec![], history_probs: vec![] };
        let mut rng = rng::named_stream(config.seed, "schedule");
        let history = clinic.fill_schedule(config.start_date, config.horizon_days, "A", &mut rng)?;
        let offsets: Vec<f64> = history
            .iter()
            .map(|r| clinic.intercept_of(&r.patient_id) + covariate_effect(r, &config))
            .collect();

        if let Some(target) = config.target_marginal_rate {
            config.base_logit = solve_base_logit(&offsets, target)?;
        }
        clinic.history_probs = offsets
            .iter()
            .map(|o| inverse_logit((config.base_logit + o).clamp(-700.0, 36.0)))
            .collect();
        clinic.history = history;
        clinic.config = config;
        Ok(clinic)
    }

    /// The config with `base_logit` replaced by its calibrated value.
    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn providers(&self) -> &[ProviderProfile] {
        &self.providers
    }

    pub fn patient_intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn intercept_of(&self, patient_id: &str) -> f64 {
        patient_index(patient_id).and_then(|i| self.intercepts.get(i)).copied().unwrap_or(0.0)
    }

    pub fn true_probability(&self, record: &AppointmentRecord) -> f64 {
        true_probability(record, self.intercept_of(&record.patient_id), &self.config)
    }

    /// First day after the generated history.
    pub fn history_end(&self) -> NaiveDate {
        self.config.start_date + Duration::days(self.config.horizon_days as i64)
    }

    /// The historical record set with Bernoulli outcomes.
    pub fn history(&self) -> GeneratedData {
        let mut rng = rng::named_stream(self.config.seed, "outcomes");
        let mut records = self.history.clone();
        for (rec, &p) in records.iter_mut().zip(&self.history_probs) {
            rec.outcome = if rng.random::<f64>() < p { Outcome::Missed } else { Outcome::Attended };
        }
        let truth = GroundTruth {
            entries: records.iter().map(|r| r.appointment_id.clone()).zip(self.history_probs.iter().copied()).collect(),
        };
        GeneratedData { records, truth }
    }

    /// Pending appointments filling `days` calendar days from `start`.
    pub fn schedule(&self, start: NaiveDate, days: u32, id_prefix: &str, seed: u64) -> Result<GeneratedData, GenError> {
        let mut rng = rng::named_stream(seed, "future-schedule");
        let records = self.fill_schedule(start, days, id_prefix, &mut rng)?;
        let truth = GroundTruth {
            entries: records.iter().map(|r| (r.appointment_id.clone(), self.true_probability(r))).collect(),
        };
        Ok(GeneratedData { records, truth })
    }

    /// Draws a patient from the population and a lead time for a visit at `scheduled_at`.
    pub fn draw_visit(
        &self,
        appointment_id: String,
        provider: &ProviderProfile,
        scheduled_at: Timestamp,
        rng: &mut ChaCha8Rng,
    ) -> AppointmentRecord {
        let patient = rng.random_range(0..self.config.n_patients);
        let lead_minutes = self.draw_lead_minutes(rng);
        AppointmentRecord {
            appointment_id,
            provider_id: provider.provider_id.clone(),
            provider_specialty: provider.specialty.clone(),
            patient_id: patient_id(patient),
            site_id: provider.site_id.clone(),
            booked_at: scheduled_at - Duration::minutes(lead_minutes),
            scheduled_at,
            duration_minutes: DEFAULT_DURATION_MINUTES,
            outcome: Outcome::Pending,
        }
    }

    fn draw_lead_minutes(&self, rng: &mut ChaCha8Rng) -> i64 {
        let c = &self.config;
        let days = if c.lead_time_sigma > 0.0 {
            LogNormal::new(c.lead_time_median_days.ln(), c.lead_time_sigma)
                .expect("validated parameters")
                .sample(rng)
        } else {
            c.lead_time_median_days
        };
        (days.min(c.max_lead_days) * 1440.0).round() as i64
    }

    fn fill_schedule(
        &self,
        start: NaiveDate,
        days: u32,
        id_prefix: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<AppointmentRecord>, GenError> {
        let cal = &self.config.calendar;
        let slot = self.config.slot_minutes();
        let mut out = Vec::new();
        for date in start.iter_days().take(days as usize) {
            if !cal.is_clinic_day(date) {
                continue;
            }
            for provider in &self.providers {
                for hour in cal.open_hour..cal.close_hour {
                    for s in 0..self.config.slots_per_hour as u32 {
                        let at = cal.at(date, hour as u32, s * slot);
                        let id = format!("{id_prefix}{:07}", out.len() + 1);
                        out.push(self.draw_visit(id, provider, at, rng));
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(GenError::InfeasibleConfig("no clinic days within the horizon".into()));
        }
        Ok(out)
    }
}

pub fn patient_id(index: usize) -> String {
    format!("P{index:06}")
}

fn patient_index(id: &str) -> Option<usize> {
    id.strip_prefix('P')?.parse().ok()
}

/// Bisection for the intercept whose population mean probability equals `target`.
fn solve_base_logit(offsets: &[f64], target: f64) -> Result<f64, GenError> {
    let mean_at = |b: f64| {
        offsets.iter().map(|o| inverse_logit((b + o).clamp(-700.0, 36.0))).sum::<f64>() / offsets.len() as f64
    };
    let (mut lo, mut hi) = (-LOGIT_BOUND, LOGIT_BOUND);
    let mut mid = 0.0;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let gap = mean_at(mid) - target;
        if gap.abs() <= BISECTION_TOLERANCE * 1e-3 {
            break;
        }
        if gap < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let achieved = mean_at(mid);
    if (achieved - target).abs() > BISECTION_TOLERANCE {
        return Err(GenError::InfeasibleConfig(format!(
            "cannot reach marginal rate {target}: closest achievable is {achieved:.6}"
        )));
    }
    Ok(mid)
}

/// Generates a full history and its ground truth.
pub fn generate_history(config: &GeneratorConfig) -> Result<GeneratedData, GenError> {
    Ok(SyntheticClinic::new(config.clone())?.history())
}
