//! Immutable published snapshots of scored appointments.
//!
//! Layout under a publish root:
//!
//! ```text
//! CURRENT                      id of the live snapshot
//! snapshots/<id>/snapshot.json
//! ```
//!
//! A snapshot directory is complete before it is renamed into place, and the
//! pointer is replaced by renaming a temporary file, so a reader sees either
//! the old snapshot or the new one.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggregate::{build_heatmap, AggregateError, Grouping, HeatmapFilter, HeatmapGrid, ScoredAppointment};
use crate::datagen::ProviderProfile;
use crate::schema::ClinicCalendar;

pub const POINTER_FILE: &str = "CURRENT";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("no snapshot has been published under {0}")]
    NotPublished(PathBuf),
    #[error("snapshot {id} is unreadable: {reason}")]
    Corrupt { id: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The model behind a snapshot's probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub fingerprint: String,
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    pub n_trees: usize,
    pub validation_auc: Option<f64>,
}

impl ModelSummary {
    pub fn of(model: &crate::model::FrozenForestModel) -> Self {
        let meta = model.metadata();
        Self {
            fingerprint: model.fingerprint(),
            train_start: meta.train_start,
            train_end: meta.train_end,
            n_trees: model.trees().len(),
            validation_auc: meta.validation_auc,
        }
    }
}

/// What the pipeline publishes. The id is derived from this content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotContent {
    /// Latest booking or visit time in the input data, so that republishing
    /// the same inputs yields the same snapshot.
    pub generated_at: String,
    pub model: Option<ModelSummary>,
    pub data_through: Option<NaiveDate>,
    pub calendar: ClinicCalendar,
    pub providers: Vec<ProviderProfile>,
    pub appointments: Vec<ScoredAppointment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub snapshot_id: String,
    #[serde(flatten)]
    pub content: SnapshotContent,
}

impl SnapshotContent {
    pub fn content_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("snapshot serialises");
        hex::encode(Sha256::digest(bytes))
    }
}

impl Snapshot {
    pub fn new(content: SnapshotContent) -> Self {
        Self { snapshot_id: content.content_id(), content }
    }

    pub fn heatmap(&self, week: NaiveDate, filter: &HeatmapFilter, grouping: Grouping) -> Result<HeatmapGrid, AggregateError> {
        build_heatmap(&self.content.appointments, week, &self.content.calendar, filter, grouping)
    }

    /// Weeks (Mondays) that contain at least one appointment, ascending.
    pub fn weeks(&self) -> Vec<NaiveDate> {
        let mut weeks: Vec<NaiveDate> = self
            .content
            .appointments
            .iter()
            .map(|a| crate::schema::week_start(a.scheduled_at.date_naive()))
            .collect();
        weeks.sort();
        weeks.dedup();
        weeks
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_file_name(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file"),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Writes the snapshot directory without touching the pointer. Writing
/// identical content again reuses the existing directory.
pub fn write_snapshot(root: &Path, content: SnapshotContent) -> Result<Snapshot, SnapshotError> {
    let snapshot = Snapshot::new(content);
    let dir = root.join(SNAPSHOT_DIR);
    fs::create_dir_all(&dir)?;
    let target = dir.join(&snapshot.snapshot_id);
    if !target.join(SNAPSHOT_FILE).is_file() {
        let staging = dir.join(format!(".{}.{}.staging", snapshot.snapshot_id, std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        let bytes = serde_json::to_vec(&snapshot).expect("snapshot serialises");
        let mut f = fs::File::create(staging.join(SNAPSHOT_FILE))?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        drop(f);
        if target.exists() {
            fs::remove_dir_all(&target)?;
        }
        fs::rename(&staging, &target)?;
    }
    Ok(snapshot)
}

/// Contents of a pointer file naming `id`.
pub fn pointer_bytes(id: &str) -> Vec<u8> {
    format!("{id}\n").into_bytes()
}

/// Writes the snapshot and atomically points `CURRENT` at it.
pub fn publish(root: &Path, content: SnapshotContent) -> Result<Snapshot, SnapshotError> {
    let snapshot = write_snapshot(root, content)?;
    write_atomic(&root.join(POINTER_FILE), &pointer_bytes(&snapshot.snapshot_id))?;
    Ok(snapshot)
}

/// Id named by the pointer file, if any.
pub fn current_id(root: &Path) -> Result<Option<String>, SnapshotError> {
    match fs::read_to_string(root.join(POINTER_FILE)) {
        Ok(s) => Ok(Some(s.trim().to_string()).filter(|s| !s.is_empty())),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn load(root: &Path, id: &str) -> Result<Snapshot, SnapshotError> {
    let corrupt = |reason: String| SnapshotError::Corrupt { id: id.to_string(), reason };
    let bytes = fs::read(root.join(SNAPSHOT_DIR).join(id).join(SNAPSHOT_FILE))?;
    let snapshot: Snapshot = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
    if snapshot.snapshot_id != id || snapshot.content.content_id() != id {
        return Err(corrupt("content does not match its id".into()));
    }
    Ok(snapshot)
}

pub fn load_current(root: &Path) -> Result<Snapshot, SnapshotError> {
    let id = current_id(root)?.ok_or_else(|| SnapshotError::NotPublished(root.to_path_buf()))?;
    load(root, &id)
}
