//! Temporal train/validation fitting and the small tuning grid.

use serde::{Deserialize, Serialize};

use super::metrics::EvaluationReport;
use super::{train_forest_with, FeatureGroups, ForestHyperparams, FrozenForestModel, ModelError, TrainingMetadata};
use crate::ingest::{engineer_features, global_rate, FeatureVector, DEFAULT_PSEUDO_COUNT};
use crate::schema::{chronological, AppointmentRecord};

/// Index of the first record in the validation window: the last
/// `validation_fraction` of the calendar span. `records` must be sorted.
pub fn temporal_split(records: &[AppointmentRecord], validation_fraction: f64) -> usize {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return 0;
    };
    let d0 = first.scheduled_at.date_naive();
    let d1 = last.scheduled_at.date_naive();
    let span = (d1 - d0).num_days() as f64;
    let cutoff = d0 + chrono::Duration::days((span * (1.0 - validation_fraction)).ceil() as i64);
    records.partition_point(|r| r.scheduled_at.date_naive() < cutoff)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningGrid {
    pub n_trees: Vec<usize>,
    pub min_leaf_size: Vec<usize>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self { n_trees: vec![100, 300], min_leaf_size: vec![10, 50, 100] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub pseudo_count: f64,
    pub validation_fraction: f64,
    pub groups: FeatureGroups,
    /// When set, hyperparameters are chosen from this grid by validation AUC.
    pub tuning: Option<TuningGrid>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            pseudo_count: DEFAULT_PSEUDO_COUNT,
            validation_fraction: 0.2,
            groups: FeatureGroups::default(),
            tuning: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub n_trees: usize,
    pub min_leaf_size: usize,
    pub validation_auc: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: FrozenForestModel,
    pub validation: EvaluationReport,
    pub baseline_validation: EvaluationReport,
    pub tuning: Vec<TuningResult>,
    pub train_rows: Vec<FeatureVector>,
    pub validation_rows: Vec<FeatureVector>,
}

fn labels(rows: &[FeatureVector]) -> Vec<bool> {
    rows.iter().map(|r| r.label.is_some_and(|l| l.is_missed())).collect()
}

/// Engineers features over `records`, trains on the earlier part of the
/// calendar and evaluates on the later part. The global rate used for
/// smoothing comes from the training window only.
pub fn fit(records: &[AppointmentRecord], hp: &ForestHyperparams, opts: &FitOptions) -> Result<FitOutcome, ModelError> {
    let mut sorted: Vec<AppointmentRecord> = records.iter().filter(|r| r.label().is_some()).cloned().collect();
    sorted.sort_by(chronological);
    let split = temporal_split(&sorted, opts.validation_fraction);
    if split == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    if split == sorted.len() {
        return Err(ModelError::InvalidArgument("validation window is empty".into()));
    }
    let global = global_rate(&sorted[..split]).ok_or(ModelError::EmptyTrainingSet)?;
    let features = engineer_features(&sorted, global, opts.pseudo_count)
        .map_err(|e| ModelError::InvalidArgument(e.to_string()))?;
    let (train_rows, validation_rows) = features.split_at(split);
    let valid_labels = labels(validation_rows);

    let mut tuning = Vec::new();
    let model = match &opts.tuning {
        None => train_forest_with(train_rows, hp, opts.groups)?,
        Some(grid) => {
            let mut best: Option<(f64, FrozenForestModel)> = None;
            for &n_trees in &grid.n_trees {
                for &min_leaf_size in &grid.min_leaf_size {
                    let candidate = ForestHyperparams { n_trees, min_leaf_size, ..hp.clone() };
                    let model = train_forest_with(train_rows, &candidate, opts.groups)?;
                    let auc = super::roc_auc(&model.predict_features(validation_rows), &valid_labels)?;
                    tuning.push(TuningResult { n_trees, min_leaf_size, validation_auc: auc });
                    if best.as_ref().is_none_or(|(b, _)| auc > *b) {
                        best = Some((auc, model));
                    }
                }
            }
            best.ok_or_else(|| ModelError::InvalidHyperparams("empty tuning grid".into()))?.1
        }
    };

    let validation = EvaluationReport::evaluate(&model.predict_features(validation_rows), &valid_labels)?;
    let baseline_validation = EvaluationReport::evaluate(&super::baseline_predict(validation_rows), &valid_labels)?;
    let metadata = TrainingMetadata {
        train_start: sorted.first().map(|r| r.scheduled_at.date_naive()),
        train_end: sorted.get(split - 1).map(|r| r.scheduled_at.date_naive()),
        validation_auc: Some(validation.roc_auc),
        global_rate: global,
        pseudo_count: opts.pseudo_count,
        ..model.metadata().clone()
    };
    Ok(FitOutcome {
        model: model.with_metadata(metadata),
        validation,
        baseline_validation,
        tuning,
        train_rows: train_rows.to_vec(),
        validation_rows: validation_rows.to_vec(),
    })
}

/// Runs the grid search with default options otherwise.
pub fn tune(records: &[AppointmentRecord], hp: &ForestHyperparams, grid: TuningGrid) -> Result<FitOutcome, ModelError> {
    fit(records, hp, &FitOptions { tuning: Some(grid), ..FitOptions::default() })
}
