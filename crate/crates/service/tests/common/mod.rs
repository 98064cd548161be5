#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::NaiveDate;
use http_body_util::BodyExt;
use noshow_core::aggregate::ScoredAppointment;
use noshow_core::datagen::ProviderProfile;
use noshow_core::schema::{parse_timestamp, ClinicCalendar};
use noshow_core::snapshot::{ModelSummary, Snapshot, SnapshotContent};
use noshow_service::{router, SnapshotStore};
use tower::ServiceExt;

pub const WEEK: &str = "2024-03-04";

/// (golden file, request, status).
pub const CASES: &[(&str, &str, u16)] = &[
    ("heatmap", "/api/v1/heatmap?week=2024-03-04", 200),
    ("heatmap_midweek_date", "/api/v1/heatmap?week=2024-03-07", 200),
    ("heatmap_provider", "/api/v1/heatmap?week=2024-03-04&provider=D01", 200),
    ("heatmap_per_provider", "/api/v1/heatmap?week=2024-03-04&grouping=per_provider", 200),
    ("block_worked_example", "/api/v1/blocks/2024-03-05/13?provider=D01", 200),
    ("block_combined", "/api/v1/blocks/2024-03-05/13", 200),
    ("block_empty", "/api/v1/blocks/2024-03-05/9", 200),
    ("providers", "/api/v1/providers", 200),
    ("meta", "/api/v1/meta", 200),
    ("healthz", "/healthz", 200),
    ("unknown_provider", "/api/v1/heatmap?week=2024-03-04&provider=zzz", 404),
    ("unknown_specialty", "/api/v1/heatmap?week=2024-03-04&specialty=surgery", 404),
    ("unknown_site", "/api/v1/heatmap?week=2024-03-04&site=S9", 404),
    ("malformed_week", "/api/v1/heatmap?week=March", 400),
    ("bad_grouping", "/api/v1/heatmap?week=2024-03-04&grouping=tabs", 400),
    ("hour_25", "/api/v1/blocks/2024-03-05/25", 400),
    ("block_before_range", "/api/v1/blocks/2023-01-03/13", 404),
    ("block_weekend", "/api/v1/blocks/2024-03-09/13", 404),
    ("block_after_hours", "/api/v1/blocks/2024-03-05/18", 404),
];

/// Resolved through the crates directory so other crates' tests can include
/// this module.
pub fn golden_path(name: &str) -> std::path::PathBuf {
    let crates = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).parent().unwrap();
    crates.join("service/tests/golden").join(format!("{name}.json"))
}

fn provider(id: &str, specialty: &str, site: &str) -> ProviderProfile {
    ProviderProfile { provider_id: id.into(), specialty: specialty.into(), site_id: site.into() }
}

pub fn providers() -> Vec<ProviderProfile> {
    vec![
        provider("D01", "family_medicine", "S1"),
        provider("D02", "family_medicine", "S2"),
        provider("D03", "pediatrics", "S1"),
    ]
}

/// (id, provider, local time, probability). Times are at UTC-5.
pub const APPOINTMENTS: &[(&str, &str, &str, f64)] = &[
    // four quarter-probability visits in one block: expected 1.0
    ("A001", "D01", "2024-03-05T13:00", 0.25),
    ("A002", "D01", "2024-03-05T13:15", 0.25),
    ("A003", "D01", "2024-03-05T13:30", 0.25),
    ("A004", "D01", "2024-03-05T13:45", 0.25),
    ("A005", "D02", "2024-03-05T13:00", 0.6),
    ("A006", "D02", "2024-03-05T13:30", 0.9),
    ("A007", "D03", "2024-03-04T08:00", 0.1),
    ("A008", "D03", "2024-03-04T08:15", 0.35),
    ("A009", "D03", "2024-03-06T09:00", 0.5),
    ("A010", "D03", "2024-03-08T15:45", 0.8),
    ("A011", "D02", "2024-03-07T10:00", 0.3),
    ("A012", "D02", "2024-03-07T10:15", 0.45),
    ("A013", "D02", "2024-03-07T10:30", 0.2),
    ("A014", "D02", "2024-03-07T10:45", 0.55),
    // after closing time
    ("A015", "D01", "2024-03-04T17:00", 0.4),
    ("A016", "D01", "2024-03-12T08:00", 0.15),
    ("A017", "D03", "2024-03-15T14:30", 0.7),
];

pub fn appointments(scale: f64) -> Vec<ScoredAppointment> {
    let roster = providers();
    APPOINTMENTS
        .iter()
        .map(|&(id, prov, at, p)| {
            let profile = roster.iter().find(|r| r.provider_id == prov).unwrap();
            ScoredAppointment {
                appointment_id: id.into(),
                provider_id: prov.into(),
                provider_specialty: profile.specialty.clone(),
                site_id: profile.site_id.clone(),
                scheduled_at: parse_timestamp(&format!("{at}:00-05:00")).unwrap(),
                probability: p * scale,
            }
        })
        .collect()
}

/// The fixture snapshot; `scale` multiplies every probability so that a
/// second, distinguishable snapshot can be published.
pub fn content(scale: f64) -> SnapshotContent {
    SnapshotContent {
        generated_at: if scale == 1.0 { "2024-03-01T17:00:00-05:00".into() } else { "2024-03-02T17:00:00-05:00".into() },
        model: Some(ModelSummary {
            fingerprint: "fixture".into(),
            train_start: NaiveDate::from_ymd_opt(2022, 1, 3),
            train_end: NaiveDate::from_ymd_opt(2023, 12, 29),
            n_trees: 200,
            validation_auc: Some(0.71),
        }),
        data_through: NaiveDate::from_ymd_opt(2024, 3, 1),
        calendar: ClinicCalendar::default(),
        providers: providers(),
        appointments: appointments(scale),
    }
}

pub fn fixture_store() -> Arc<SnapshotStore> {
    Arc::new(SnapshotStore::fixed(Snapshot::new(content(1.0))))
}

pub async fn get(store: &Arc<SnapshotStore>, uri: &str) -> (StatusCode, Vec<u8>) {
    let response = router(store.clone())
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn get_json(store: &Arc<SnapshotStore>, uri: &str) -> (StatusCode, serde_json::Value) {
    let (status, bytes) = get(store, uri).await;
    (status, serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{uri}: {e}: {}", String::from_utf8_lossy(&bytes))))
}
