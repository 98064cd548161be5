//! Monte-Carlo evaluation of overbooking policies on a synthetic clinic.
//!
//! Each replication books one future week, lets every policy add
//! appointments block by block, then draws attendance from the generator's
//! ground truth. All policies in a comparison see the same random numbers:
//! every block has its own stream that first decides the scheduled patients
//! and then yields a fixed sequence of candidate extra patients, so a policy
//! adding `k` extras uses the first `k` of them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{Duration, NaiveDate, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::aggregate::recommend_overbook;
use crate::datagen::{GenError, GeneratorConfig, ProviderProfile, SyntheticClinic};
use crate::ingest::{feature_vector, global_rate, patient_histories, PatientHistory, DEFAULT_PSEUDO_COUNT};
use crate::model::encode::FEATURE_SCHEMA_VERSION;
use crate::model::FrozenForestModel;
use crate::rng::{derive_seed, named_seed, named_stream};
use crate::schema::{week_start, AppointmentRecord};

/// Weeks after the end of the history from which evaluation weeks are drawn.
pub const EVALUATION_WEEKS: u32 = 52;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("model is incompatible with this clinic: {0}")]
    IncompatibleModelSchema(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Generator(#[from] GenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    NoOverbook,
    /// `k` extra appointments per provider per clinic day, spread over the day's blocks.
    FixedPerDay(u32),
    /// Floor of the summed smoothed historical patient rates.
    BaselineRateFloor,
    /// Floor of the summed model probabilities.
    ModelExpectationFloor,
    /// Floor of the summed true probabilities. Not available in practice.
    OracleFloor,
}

impl Policy {
    pub const STANDARD: [Policy; 4] =
        [Policy::NoOverbook, Policy::BaselineRateFloor, Policy::ModelExpectationFloor, Policy::OracleFloor];

    fn extras(self, block: &BlockInfo) -> u32 {
        match self {
            Policy::NoOverbook => 0,
            Policy::FixedPerDay(k) => {
                let n = block.blocks_per_day.max(1);
                k / n + u32::from(block.index_in_day < k % n)
            }
            Policy::BaselineRateFloor => recommend_overbook(block.baseline_sum),
            Policy::ModelExpectationFloor => recommend_overbook(block.model_sum),
            Policy::OracleFloor => recommend_overbook(block.true_sum),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::NoOverbook => f.write_str("no_overbook"),
            Policy::FixedPerDay(k) => write!(f, "fixed_per_day:{k}"),
            Policy::BaselineRateFloor => f.write_str("baseline_rate_floor"),
            Policy::ModelExpectationFloor => f.write_str("model_expectation_floor"),
            Policy::OracleFloor => f.write_str("oracle_floor"),
        }
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        if let Some(k) = s.strip_prefix("fixed_per_day:").or_else(|| s.strip_prefix("fixed:")) {
            return k.parse().map(Policy::FixedPerDay).map_err(|_| format!("bad overbook count in {s:?}"));
        }
        match s.as_str() {
            "no_overbook" | "none" => Ok(Policy::NoOverbook),
            "baseline_rate_floor" | "baseline" => Ok(Policy::BaselineRateFloor),
            "model_expectation_floor" | "model" => Ok(Policy::ModelExpectationFloor),
            "oracle_floor" | "oracle" => Ok(Policy::OracleFloor),
            _ => Err(format!("unknown policy {s:?}")),
        }
    }
}

impl Serialize for Policy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Source of the probabilities behind [`Policy::ModelExpectationFloor`].
#[derive(Debug, Clone)]
pub enum Predictor {
    Forest(Arc<FrozenForestModel>),
    /// Uses the historical-rate baseline, making the model policy coincide
    /// with [`Policy::BaselineRateFloor`].
    Baseline,
}

impl Predictor {
    pub fn name(&self) -> &'static str {
        match self {
            Predictor::Forest(_) => "forest",
            Predictor::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std_error: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_error: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, std_error: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self { mean, std_error: (var / n as f64).sqrt() }
    }
}

/// One policy's outcome in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationMetrics {
    pub week: NaiveDate,
    pub utilization_pct: f64,
    pub overbooked_per_day: f64,
    pub providers_overbooked: usize,
    pub collision_rate: f64,
    pub mean_excess_arrivals: f64,
    /// Largest extras-to-slots ratio over the week's blocks.
    pub max_overbook_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: Policy,
    pub utilization_pct: MetricSummary,
    pub avg_overbooked_per_day: MetricSummary,
    pub n_providers_overbooked: MetricSummary,
    pub collision_rate: MetricSummary,
    pub mean_excess_arrivals: MetricSummary,
    pub n_replications: usize,
    pub seed: u64,
    pub replication_seeds: Vec<u64>,
    pub replications: Vec<ReplicationMetrics>,
}

impl PolicyReport {
    pub fn utilization_series(&self) -> Vec<f64> {
        self.replications.iter().map(|r| r.utilization_pct).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub predictor: String,
    pub seed: u64,
    pub n_replications: usize,
    /// Rows ranked by mean utilization, highest first; ties keep input order.
    pub rows: Vec<PolicyReport>,
}

impl SimulationReport {
    pub fn row(&self, policy: Policy) -> Option<&PolicyReport> {
        self.rows.iter().find(|r| r.policy == policy)
    }

    pub fn to_text(&self) -> String {
        use fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} replications, seed {}, predictor {}",
            self.n_replications, self.seed, self.predictor
        );
        let _ = writeln!(
            s,
            "{:<26} {:>16} {:>14} {:>14} {:>15} {:>10}",
            "policy", "utilization %", "overbook/day", "providers ob", "collision rate", "excess"
        );
        let pm = |m: &MetricSummary, digits: usize| format!("{:.*} ±{:.*}", digits, m.mean, digits, m.std_error);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<26} {:>16} {:>14} {:>14} {:>15} {:>10.4}",
                r.policy.to_string(),
                pm(&r.utilization_pct, 2),
                pm(&r.avg_overbooked_per_day, 2),
                pm(&r.n_providers_overbooked, 1),
                pm(&r.collision_rate, 3),
                r.mean_excess_arrivals.mean
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub mean_difference: f64,
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Paired t-test of `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTest, SimError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(SimError::InvalidArgument(format!(
            "paired test needs two equal series of length >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = MetricSummary::of(&diffs);
    let df = (diffs.len() - 1) as f64;
    if s.std_error == 0.0 {
        let (t, p) = if s.mean == 0.0 { (0.0, 1.0) } else { (s.mean.signum() * f64::INFINITY, 0.0) };
        return Ok(PairedTest { mean_difference: s.mean, t_statistic: t, degrees_of_freedom: df, p_value: p });
    }
    let t = s.mean / s.std_error;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| SimError::InvalidArgument(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(PairedTest { mean_difference: s.mean, t_statistic: t, degrees_of_freedom: df, p_value: p })
}

struct BlockInfo {
    provider: usize,
    capacity: u32,
    index_in_day: u32,
    blocks_per_day: u32,
    start: crate::schema::Timestamp,
    members: Vec<usize>,
    baseline_sum: f64,
    model_sum: f64,
    true_sum: f64,
}

/// Fixed inputs shared by all replications.
struct Context<'a> {
    clinic: &'a SyntheticClinic,
    histories: HashMap<String, PatientHistory>,
    baseline_global: f64,
    predictor: &'a Predictor,
}

impl Context<'_> {
    fn history(&self, patient: &str) -> PatientHistory {
        self.histories.get(patient).copied().unwrap_or_default()
    }

    fn first_evaluation_monday(&self) -> NaiveDate {
        let end = self.clinic.history_end();
        let monday = week_start(end);
        if monday == end {
            monday
        } else {
            monday + Duration::days(7)
        }
    }

    fn replicate(&self, policies: &[Policy], rep_seed: u64) -> Result<Vec<ReplicationMetrics>, SimError> {
        let mut week_rng = named_stream(rep_seed, "week");
        let monday =
            self.first_evaluation_monday() + Duration::weeks(week_rng.random_range(0..EVALUATION_WEEKS) as i64);
        let week = self.clinic.schedule(monday, 7, "W", rep_seed)?;
        let records = &week.records;
        let truth: Vec<f64> = week.truth.entries.iter().map(|e| e.1).collect();

        let baseline: Vec<f64> = records
            .iter()
            .map(|r| feature_vector(r, self.history(&r.patient_id), self.baseline_global, DEFAULT_PSEUDO_COUNT).patient_hist_rate)
            .collect();
        let model = match self.predictor {
            Predictor::Baseline => baseline.clone(),
            Predictor::Forest(m) => {
                let meta = m.metadata();
                let rows: Vec<_> = records
                    .iter()
                    .map(|r| feature_vector(r, self.history(&r.patient_id), meta.global_rate, meta.pseudo_count))
                    .collect();
                m.predict_features(&rows)
            }
        };

        let blocks = self.blocks(records, &baseline, &model, &truth);
        let max_extras: Vec<u32> =
            blocks.iter().map(|b| policies.iter().map(|p| p.extras(b)).max().unwrap_or(0)).collect();

        // Attendance per block: scheduled patients first, then the candidate extras in order.
        let attendance_seed = named_seed(rep_seed, "attendance");
        let providers = self.clinic.providers();
        let draws: Vec<(u32, Vec<bool>)> = blocks
            .iter()
            .enumerate()
            .map(|(bi, b)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(attendance_seed, bi as u64));
                let scheduled = b.members.iter().filter(|&&i| rng.random::<f64>() >= truth[i]).count() as u32;
                let extras = (0..max_extras[bi])
                    .map(|j| {
                        let rec = self.clinic.draw_visit(format!("X{bi}-{j}"), &providers[b.provider], b.start, &mut rng);
                        let p = self.clinic.true_probability(&rec);
                        rng.random::<f64>() >= p
                    })
                    .collect();
                (scheduled, extras)
            })
            .collect();

        let n_days = records.iter().map(|r| r.scheduled_at.date_naive()).collect::<HashSet<_>>().len().max(1);
        let capacity: u32 = blocks.iter().map(|b| b.capacity).sum();
        Ok(policies
            .iter()
            .map(|&policy| {
                let mut attended = 0u64;
                let mut extras_total = 0u64;
                let mut collisions = 0usize;
                let mut excess = 0u64;
                let mut max_ratio = 0.0f64;
                let mut overbooked_providers = HashSet::new();
                for (b, (scheduled, extra_draws)) in blocks.iter().zip(&draws) {
                    let k = policy.extras(b) as usize;
                    let arrivals = scheduled + extra_draws[..k].iter().filter(|&&a| a).count() as u32;
                    attended += arrivals as u64;
                    extras_total += k as u64;
                    if k > 0 {
                        overbooked_providers.insert(b.provider);
                        max_ratio = max_ratio.max(k as f64 / b.capacity as f64);
                    }
                    if arrivals > b.capacity {
                        collisions += 1;
                        excess += (arrivals - b.capacity) as u64;
                    }
                }
                let n_blocks = blocks.len().max(1) as f64;
                ReplicationMetrics {
                    week: monday,
                    utilization_pct: 100.0 * attended as f64 / capacity.max(1) as f64,
                    overbooked_per_day: extras_total as f64 / n_days as f64,
                    providers_overbooked: overbooked_providers.len(),
                    collision_rate: collisions as f64 / n_blocks,
                    mean_excess_arrivals: excess as f64 / n_blocks,
                    max_overbook_ratio: max_ratio,
                }
            })
            .collect())
    }

    fn blocks(&self, records: &[AppointmentRecord], baseline: &[f64], model: &[f64], truth: &[f64]) -> Vec<BlockInfo> {
        let cfg = self.clinic.config();
        let cal = &cfg.calendar;
        let step = cal.block_hours.hours();
        let starts = cal.block_hours();
        let provider_index: HashMap<&str, usize> =
            self.clinic.providers().iter().enumerate().map(|(i, p)| (p.provider_id.as_str(), i)).collect();

        let mut grouped: BTreeMap<(usize, NaiveDate, u8), Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            let hour = r.scheduled_at.hour() as u8;
            let key = (provider_index[r.provider_id.as_str()], r.scheduled_at.date_naive(), hour - hour % step);
            grouped.entry(key).or_default().push(i);
        }
        grouped
            .into_iter()
            .map(|((provider, date, hour), members)| {
                let hours = step.min(cal.close_hour - hour) as u32;
                BlockInfo {
                    provider,
                    capacity: cfg.slots_per_hour as u32 * hours,
                    index_in_day: starts.iter().position(|&h| h == hour).unwrap_or(0) as u32,
                    blocks_per_day: starts.len() as u32,
                    start: cal.at(date, hour as u32, 0),
                    baseline_sum: members.iter().map(|&i| baseline[i]).sum(),
                    model_sum: members.iter().map(|&i| model[i]).sum(),
                    true_sum: members.iter().map(|&i| truth[i]).sum(),
                    members,
                }
            })
            .collect()
    }
}

fn check_compatible(predictor: &Predictor, clinic: &SyntheticClinic) -> Result<(), SimError> {
    let Predictor::Forest(model) = predictor else {
        return Ok(());
    };
    let schema = model.schema();
    if schema.version != FEATURE_SCHEMA_VERSION {
        return Err(SimError::IncompatibleModelSchema(format!(
            "feature schema version {} (expected {FEATURE_SCHEMA_VERSION})",
            schema.version
        )));
    }
    let known = |vocab: &[String], value: &str| vocab.iter().any(|v| v == value);
    let providers: &[ProviderProfile] = clinic.providers();
    if schema.groups.specialty && !providers.iter().any(|p| known(&schema.specialties, &p.specialty)) {
        return Err(SimError::IncompatibleModelSchema("none of the clinic's specialties were seen in training".into()));
    }
    if schema.groups.site && !providers.iter().any(|p| known(&schema.sites, &p.site_id)) {
        return Err(SimError::IncompatibleModelSchema("none of the clinic's sites were seen in training".into()));
    }
    Ok(())
}

/// Runs `policies` over common random numbers on an existing clinic.
pub fn run_policies(
    clinic: &SyntheticClinic,
    predictor: &Predictor,
    policies: &[Policy],
    n_replications: usize,
    seed: u64,
) -> Result<SimulationReport, SimError> {
    if policies.is_empty() {
        return Err(SimError::InvalidArgument("no policies given".into()));
    }
    if n_replications == 0 {
        return Err(SimError::InvalidArgument("at least one replication is needed".into()));
    }
    check_compatible(predictor, clinic)?;
    let history = clinic.history().records;
    let ctx = Context {
        clinic,
        histories: patient_histories(&history),
        baseline_global: global_rate(&history).unwrap_or(0.0),
        predictor,
    };

    let seeds: Vec<u64> = (0..n_replications as u64).map(|r| derive_seed(seed, r)).collect();
    let per_rep: Vec<Vec<ReplicationMetrics>> =
        seeds.par_iter().map(|&s| ctx.replicate(policies, s)).collect::<Result<_, _>>()?;

    let mut rows: Vec<PolicyReport> = policies
        .iter()
        .enumerate()
        .map(|(pi, &policy)| {
            let reps: Vec<ReplicationMetrics> = per_rep.iter().map(|r| r[pi].clone()).collect();
            let summary = |f: fn(&ReplicationMetrics) -> f64| MetricSummary::of(&reps.iter().map(f).collect::<Vec<_>>());
            PolicyReport {
                policy,
                utilization_pct: summary(|r| r.utilization_pct),
                avg_overbooked_per_day: summary(|r| r.overbooked_per_day),
                n_providers_overbooked: summary(|r| r.providers_overbooked as f64),
                collision_rate: summary(|r| r.collision_rate),
                mean_excess_arrivals: summary(|r| r.mean_excess_arrivals),
                n_replications,
                seed,
                replication_seeds: seeds.clone(),
                replications: reps,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.utilization_pct.mean.total_cmp(&a.utilization_pct.mean));
    Ok(SimulationReport { predictor: predictor.name().into(), seed, n_replications, rows })
}

/// Evaluates one policy on the clinic described by `config`.
pub fn simulate_policy(
    config: &GeneratorConfig,
    predictor: &Predictor,
    policy: Policy,
    n_replications: usize,
    seed: u64,
) -> Result<SimulationReport, SimError> {
    let clinic = SyntheticClinic::new(config.clone())?;
    run_policies(&clinic, predictor, &[policy], n_replications, seed)
}

/// Evaluates at least two policies under common random numbers.
pub fn compare_policies(
    config: &GeneratorConfig,
    predictor: &Predictor,
    policies: &[Policy],
    n_replications: usize,
    seed: u64,
) -> Result<SimulationReport, SimError> {
    if policies.len() < 2 {
        return Err(SimError::InvalidArgument("compare at least two policies".into()));
    }
    let clinic = SyntheticClinic::new(config.clone())?;
    run_policies(&clinic, predictor, policies, n_replications, seed)
}
