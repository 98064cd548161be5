use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use chrono::NaiveDate;
use noshow_core::aggregate::ScoredAppointment;
use noshow_core::schema::week_start;
use noshow_core::snapshot::{self, Snapshot, SnapshotError};

/// A loaded snapshot plus lookup tables built once at swap time.
#[derive(Debug)]
pub struct Served {
    pub snapshot: Snapshot,
    by_week: BTreeMap<NaiveDate, Vec<ScoredAppointment>>,
    pub specialties: BTreeSet<String>,
    pub sites: BTreeSet<String>,
}

impl Served {
    pub fn new(snapshot: Snapshot) -> Self {
        let mut by_week: BTreeMap<NaiveDate, Vec<ScoredAppointment>> = BTreeMap::new();
        for a in &snapshot.content.appointments {
            by_week.entry(week_start(a.scheduled_at.date_naive())).or_default().push(a.clone());
        }
        let specialties = snapshot.content.providers.iter().map(|p| p.specialty.clone()).collect();
        let sites = snapshot.content.providers.iter().map(|p| p.site_id.clone()).collect();
        Self { snapshot, by_week, specialties, sites }
    }

    pub fn id(&self) -> &str {
        &self.snapshot.snapshot_id
    }

    pub fn week(&self, monday: NaiveDate) -> &[ScoredAppointment] {
        self.by_week.get(&monday).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn weeks(&self) -> Vec<NaiveDate> {
        self.by_week.keys().copied().collect()
    }

    /// First and last calendar day of the weeks holding appointments.
    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let first = *self.by_week.keys().next()?;
        let last = *self.by_week.keys().next_back()?;
        Some((first, last + chrono::Duration::days(6)))
    }

    pub fn has_provider(&self, id: &str) -> bool {
        self.snapshot.content.providers.iter().any(|p| p.provider_id == id)
    }
}

/// Holds the live snapshot. Readers clone the `Arc` once per request, so a
/// swap never affects a request already in flight.
#[derive(Debug)]
pub struct SnapshotStore {
    root: Option<PathBuf>,
    current: RwLock<Option<Arc<Served>>>,
}

impl SnapshotStore {
    /// Watches a publish root; loads its current snapshot if there is one.
    pub fn open(root: impl Into<PathBuf>) -> Self {
        let store = Self { root: Some(root.into()), current: RwLock::new(None) };
        if let Err(e) = store.refresh() {
            if !matches!(e, SnapshotError::NotPublished(_)) {
                tracing::warn!("initial snapshot load failed: {e}");
            }
        }
        store
    }

    /// A store pinned to one in-memory snapshot.
    pub fn fixed(snapshot: Snapshot) -> Self {
        Self { root: None, current: RwLock::new(Some(Arc::new(Served::new(snapshot)))) }
    }

    pub fn empty() -> Self {
        Self { root: None, current: RwLock::new(None) }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn current(&self) -> Option<Arc<Served>> {
        self.current.read().expect("store lock").clone()
    }

    pub fn replace(&self, snapshot: Snapshot) {
        *self.current.write().expect("store lock") = Some(Arc::new(Served::new(snapshot)));
    }

    /// Re-reads the pointer file and swaps in the snapshot it names.
    /// Returns whether the live snapshot changed. On error the previous
    /// snapshot stays live.
    pub fn refresh(&self) -> Result<bool, SnapshotError> {
        let Some(root) = &self.root else { return Ok(false) };
        let Some(id) = snapshot::current_id(root)? else {
            return Err(SnapshotError::NotPublished(root.clone()));
        };
        if self.current().is_some_and(|s| s.id() == id) {
            return Ok(false);
        }
        let loaded = snapshot::load(root, &id)?;
        self.replace(loaded);
        Ok(true)
    }
}

/// Polls the pointer file until the runtime shuts down.
pub fn spawn_watcher(store: Arc<SnapshotStore>, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tick.tick().await;
            let s = store.clone();
            match tokio::task::spawn_blocking(move || s.refresh()).await {
                Ok(Ok(true)) => {
                    if let Some(cur) = store.current() {
                        tracing::info!(snapshot_id = cur.id(), "serving new snapshot");
                    }
                }
                Ok(Ok(false)) | Ok(Err(SnapshotError::NotPublished(_))) => {}
                Ok(Err(e)) => tracing::warn!("snapshot refresh failed: {e}"),
                Err(e) => tracing::warn!("snapshot refresh panicked: {e}"),
            }
        }
    })
}
