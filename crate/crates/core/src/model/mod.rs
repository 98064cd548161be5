//! Training, evaluation, freezing and serving of the no-show model.

pub mod encode;
pub mod forest;
pub mod io;
pub mod metrics;
pub mod train;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FeatureVector;
pub use encode::{EncodedTable, FeatureGroups, FeatureSchema};
pub use forest::{ForestHyperparams, Node, Tree};
pub use io::{load_model, save_model, FORMAT_VERSION};
pub use metrics::{calibration_table, roc_auc, CalibrationBin, EvaluationReport};
pub use train::{fit, temporal_split, tune, FitOptions, FitOutcome, TuningGrid, TuningResult};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training rows must be labelled; {0} pending rows found")]
    UnlabelledRows(usize),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("feature schema mismatch: model expects {expected}, table has {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("AUC needs both classes present")]
    SingleClass,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("model format version {found} is not supported (this build reads up to {supported})")]
    VersionMismatch { found: u16, supported: u16 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Provenance stored alongside the trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    pub hyperparams: ForestHyperparams,
    pub n_train_rows: usize,
    pub train_base_rate: f64,
    pub train_auc: Option<f64>,
    pub validation_auc: Option<f64>,
    /// Global rate and pseudo count the patient-history feature was smoothed with.
    pub global_rate: f64,
    pub pseudo_count: f64,
}

/// A trained ensemble. Nothing about it changes after training: prediction
/// takes `&self` and there is no interior mutability.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenForestModel {
    schema: FeatureSchema,
    trees: Vec<Tree>,
    metadata: TrainingMetadata,
}

impl FrozenForestModel {
    pub fn from_parts(schema: FeatureSchema, trees: Vec<Tree>, metadata: TrainingMetadata) -> Self {
        Self { schema, trees, metadata }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn metadata(&self) -> &TrainingMetadata {
        &self.metadata
    }

    pub fn fingerprint(&self) -> String {
        self.schema.fingerprint()
    }

    pub fn encode(&self, rows: &[FeatureVector]) -> EncodedTable {
        self.schema.encode(rows)
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// Scores feature vectors, routing unseen categories to the `other` columns.
    pub fn predict_features(&self, rows: &[FeatureVector]) -> Vec<f64> {
        let table = self.encode(rows);
        (0..table.n_rows()).map(|i| self.predict_row(table.row(i))).collect()
    }

    /// Returns this model with validation statistics recorded. Only used while
    /// assembling a model, before it is saved.
    pub(crate) fn with_metadata(mut self, metadata: TrainingMetadata) -> Self {
        self.metadata = metadata;
        self
    }
}

/// Mean leaf value across trees for every row of `table`.
pub fn predict_proba(model: &FrozenForestModel, table: &EncodedTable) -> Result<Vec<f64>, ModelError> {
    let expected = model.fingerprint();
    if table.fingerprint != expected || table.n_cols != model.schema.n_columns() {
        return Err(ModelError::SchemaMismatch { expected, found: table.fingerprint.clone() });
    }
    Ok((0..table.n_rows()).map(|i| model.predict_row(table.row(i))).collect())
}

/// The historical-rate benchmark: each row's smoothed patient no-show rate.
pub fn baseline_predict(rows: &[FeatureVector]) -> Vec<f64> {
    rows.iter().map(|r| r.patient_hist_rate).collect()
}

/// Trains a forest on labelled feature vectors.
pub fn train_forest(rows: &[FeatureVector], hp: &ForestHyperparams) -> Result<FrozenForestModel, ModelError> {
    train_forest_with(rows, hp, FeatureGroups::default())
}

pub fn train_forest_with(
    rows: &[FeatureVector],
    hp: &ForestHyperparams,
    groups: FeatureGroups,
) -> Result<FrozenForestModel, ModelError> {
    if rows.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let pending = rows.iter().filter(|r| r.label.is_none()).count();
    if pending > 0 {
        return Err(ModelError::UnlabelledRows(pending));
    }
    let labels: Vec<bool> = rows.iter().map(|r| r.label.is_some_and(|l| l.is_missed())).collect();
    let schema = FeatureSchema::fit(rows, groups);
    let table = schema.encode(rows);
    let trees = forest::grow_forest(&table, &labels, hp)?;
    let base_rate = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
    let metadata = TrainingMetadata {
        train_start: None,
        train_end: None,
        hyperparams: hp.clone(),
        n_train_rows: rows.len(),
        train_base_rate: base_rate,
        train_auc: None,
        validation_auc: None,
        global_rate: base_rate,
        pseudo_count: crate::ingest::DEFAULT_PSEUDO_COUNT,
    };
    let model = FrozenForestModel { schema, trees, metadata };
    let train_auc = metrics::roc_auc(&model.predict_features(rows), &labels).ok();
    let metadata = TrainingMetadata { train_auc, ..model.metadata.clone() };
    Ok(model.with_metadata(metadata))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::schema::{OutcomeLabel, Season};

    pub(crate) fn fv(id: usize, lead: f64, specialty: &str, missed: Option<bool>) -> FeatureVector {
        FeatureVector {
            appointment_id: format!("A{id}"),
            lead_time_days: lead,
            hour_of_day: 9 + (id % 8) as u8,
            day_of_week: (id % 5) as u8,
            season: Season::ALL[id % 4],
            provider_specialty: specialty.into(),
            site_id: "S1".into(),
            patient_hist_rate: 0.2,
            patient_prior_appointments: id as u32,
            label: missed.map(|m| if m { OutcomeLabel::MISSED } else { OutcomeLabel::ATTENDED }),
        }
    }

    #[test]
    fn single_leaf_is_laplace_corrected() {
        let rows: Vec<_> = (0..10).map(|i| fv(i, i as f64, "peds", Some(i < 3))).collect();
        let hp = ForestHyperparams { n_trees: 1, bootstrap: false, min_leaf_size: 10, ..Default::default() };
        let model = train_forest(&rows, &hp).unwrap();
        assert_eq!(model.trees()[0].nodes.len(), 1);
        // (3 + 1) / (10 + 2)
        for p in model.predict_features(&rows) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn forest_averages_trees() {
        let rows = vec![fv(0, 1.0, "peds", Some(true))];
        let schema = FeatureSchema::fit(&rows, FeatureGroups::default());
        let meta = TrainingMetadata {
            train_start: None,
            train_end: None,
            hyperparams: ForestHyperparams::default(),
            n_train_rows: 0,
            train_base_rate: 0.3,
            train_auc: None,
            validation_auc: None,
            global_rate: 0.3,
            pseudo_count: 5.0,
        };
        let model = FrozenForestModel::from_parts(schema, vec![Tree::leaf(0.2), Tree::leaf(0.4)], meta);
        let p = predict_proba(&model, &model.encode(&rows)).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn unseen_specialty_scores_without_error() {
        let rows: Vec<_> = (0..40).map(|i| fv(i, i as f64, if i % 2 == 0 { "peds" } else { "obgyn" }, Some(i % 3 == 0))).collect();
        let hp = ForestHyperparams { n_trees: 5, min_leaf_size: 2, seed: 4, ..Default::default() };
        let model = train_forest(&rows, &hp).unwrap();
        let p = model.predict_features(&[fv(99, 5.0, "cardiology", None)]);
        assert!(p[0] > 0.0 && p[0] < 1.0);
    }

    #[test]
    fn schema_mismatch_detected() {
        let rows: Vec<_> = (0..20).map(|i| fv(i, i as f64, "peds", Some(i % 2 == 0))).collect();
        let hp = ForestHyperparams { n_trees: 2, min_leaf_size: 2, ..Default::default() };
        let model = train_forest(&rows, &hp).unwrap();
        let other = FeatureSchema::fit(&rows, FeatureGroups { site: false, ..Default::default() });
        let err = predict_proba(&model, &other.encode(&rows)).unwrap_err();
        assert!(matches!(err, ModelError::SchemaMismatch { .. }));
    }

    #[test]
    fn training_preconditions() {
        let all_missed: Vec<_> = (0..10).map(|i| fv(i, 1.0, "peds", Some(true))).collect();
        assert!(matches!(train_forest(&all_missed, &ForestHyperparams::default()), Err(ModelError::DegenerateLabels)));
        assert!(matches!(train_forest(&[], &ForestHyperparams::default()), Err(ModelError::EmptyTrainingSet)));
        let with_pending = vec![fv(0, 1.0, "peds", Some(true)), fv(1, 2.0, "peds", None)];
        assert!(matches!(train_forest(&with_pending, &ForestHyperparams::default()), Err(ModelError::UnlabelledRows(1))));
    }

    #[test]
    fn baseline_is_identity_on_hist_rate() {
        let mut a = fv(0, 1.0, "peds", None);
        a.patient_hist_rate = 0.25;
        let b = fv(1, 1.0, "peds", None);
        assert_eq!(baseline_predict(&[a, b]), vec![0.25, 0.2]);
    }
}
