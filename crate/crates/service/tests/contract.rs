mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use axum::http::StatusCode;
use chrono::{NaiveDate, Timelike};
use common::{appointments, fixture_store, get_json, providers, WEEK};
use noshow_service::SnapshotStore;
use serde_json::Value;

/// Every combination of absent-or-present provider, specialty and site,
/// including combinations that select nothing.
fn filter_combinations() -> Vec<Vec<(&'static str, String)>> {
    let roster = providers();
    let mut prov: Vec<Option<String>> = vec![None];
    prov.extend(roster.iter().map(|p| Some(p.provider_id.clone())));
    let mut spec: Vec<Option<String>> = vec![None];
    spec.extend(roster.iter().map(|p| p.specialty.clone()).collect::<BTreeSet<_>>().into_iter().map(Some));
    let mut site: Vec<Option<String>> = vec![None];
    site.extend(roster.iter().map(|p| p.site_id.clone()).collect::<BTreeSet<_>>().into_iter().map(Some));

    let mut out = Vec::new();
    for p in &prov {
        for s in &spec {
            for t in &site {
                let mut q = Vec::new();
                if let Some(p) = p {
                    q.push(("provider", p.clone()));
                }
                if let Some(s) = s {
                    q.push(("specialty", s.clone()));
                }
                if let Some(t) = t {
                    q.push(("site", t.clone()));
                }
                out.push(q);
            }
        }
    }
    out
}

fn query(filters: &[(&str, String)]) -> String {
    filters.iter().map(|(k, v)| format!("&{k}={v}")).collect()
}

fn ids(cell: &Value) -> BTreeSet<String> {
    cell["appointments"].as_array().unwrap().iter().map(|a| a["appointment_id"].as_str().unwrap().to_string()).collect()
}

fn cells_by_block(grid: &Value) -> BTreeMap<(String, u64), Value> {
    grid["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| ((c["date"].as_str().unwrap().to_string(), c["hour"].as_u64().unwrap()), c.clone()))
        .collect()
}

#[tokio::test]
async fn filtered_grids_are_subsets_of_the_unfiltered_grid() {
    let store = fixture_store();
    let (_, all) = get_json(&store, &format!("/api/v1/heatmap?week={WEEK}")).await;
    let all_cells = cells_by_block(&all);
    let roster = providers();
    let monday = NaiveDate::parse_from_str(WEEK, "%Y-%m-%d").unwrap();

    for filters in filter_combinations() {
        let (status, grid) = get_json(&store, &format!("/api/v1/heatmap?week={WEEK}{}", query(&filters))).await;
        assert_eq!(status, StatusCode::OK, "{filters:?}");
        let provider = filters.iter().find(|(k, _)| *k == "provider").map(|(_, v)| v.as_str());

        let mut seen = BTreeSet::new();
        for ((date, hour), cell) in cells_by_block(&grid) {
            assert_eq!(cell["provider_id"].as_str(), provider, "{filters:?}");
            let sub = ids(&cell);
            assert!(sub.is_subset(&ids(&all_cells[&(date.clone(), hour)])), "{filters:?} {date} {hour}");
            seen.extend(sub);
        }

        // independent oracle straight from the fixture rows
        let expected: BTreeSet<String> = appointments(1.0)
            .iter()
            .filter(|a| {
                let prof = roster.iter().find(|r| r.provider_id == a.provider_id).unwrap();
                filters.iter().all(|(k, v)| match *k {
                    "provider" => a.provider_id == *v,
                    "specialty" => prof.specialty == *v,
                    _ => prof.site_id == *v,
                })
            })
            .filter(|a| {
                let d = a.scheduled_at.date_naive();
                let h = a.scheduled_at.hour();
                d >= monday && (d - monday).num_days() < 5 && (8..16).contains(&h)
            })
            .map(|a| a.appointment_id.clone())
            .collect();
        assert_eq!(seen, expected, "{filters:?}");
    }
}

#[tokio::test]
async fn per_provider_grouping_respects_filters() {
    let store = fixture_store();
    for filters in filter_combinations() {
        let (_, grid) =
            get_json(&store, &format!("/api/v1/heatmap?week={WEEK}&grouping=per_provider{}", query(&filters))).await;
        let listed: BTreeSet<&str> = grid["providers"].as_array().unwrap().iter().map(|p| p.as_str().unwrap()).collect();
        for cell in grid["cells"].as_array().unwrap() {
            let p = cell["provider_id"].as_str().unwrap();
            assert!(listed.contains(p));
            if let Some((_, want)) = filters.iter().find(|(k, _)| *k == "provider") {
                assert_eq!(p, want);
            }
        }
    }
}

#[tokio::test]
async fn block_probabilities_sum_to_cell_expectation() {
    let store = fixture_store();
    for week in [WEEK, "2024-03-11"] {
        for filters in filter_combinations() {
            let q = query(&filters);
            let (_, grid) = get_json(&store, &format!("/api/v1/heatmap?week={week}{q}")).await;
            for cell in grid["cells"].as_array().unwrap() {
                let uri = format!("/api/v1/blocks/{}/{}?x=1{q}", cell["date"].as_str().unwrap(), cell["hour"]);
                let (status, block) = get_json(&store, &uri).await;
                assert_eq!(status, StatusCode::OK, "{uri}");
                let sum: f64 =
                    block["appointments"].as_array().unwrap().iter().map(|a| a["probability"].as_f64().unwrap()).sum();
                let expected = cell["expected"].as_f64().unwrap();
                assert!((sum - expected).abs() <= 1e-9, "{uri}: {sum} vs {expected}");
                assert_eq!(block["n_scheduled"], cell["n_scheduled"]);
                assert_eq!(block["snapshot_id"], grid["snapshot_id"]);
            }
        }
    }
}

#[tokio::test]
async fn catalog_and_meta_agree_with_heatmap() {
    let store = fixture_store();
    let (_, catalog) = get_json(&store, "/api/v1/providers").await;
    assert_eq!(catalog["providers"].as_array().unwrap().len(), 3);
    let (_, meta) = get_json(&store, "/api/v1/meta").await;
    let (_, grid) = get_json(&store, &format!("/api/v1/heatmap?week={WEEK}")).await;
    assert_eq!(meta["snapshot_id"], grid["snapshot_id"]);
    assert_eq!(meta["snapshot_id"], catalog["snapshot_id"]);
    assert_eq!(meta["model"]["train_end"], "2023-12-29");
    assert_eq!(meta["generated_at"], "2024-03-01T17:00:00-05:00");
}

#[tokio::test]
async fn missing_week_defaults_to_the_first_scheduled_week() {
    let store = fixture_store();
    let (_, a) = get_json(&store, "/api/v1/heatmap").await;
    let (_, b) = get_json(&store, &format!("/api/v1/heatmap?week={WEEK}")).await;
    assert_eq!(a, b);
    let (_, iso) = get_json(&store, "/api/v1/heatmap?week=2024-W10").await;
    assert_eq!(iso, b);
}

#[tokio::test]
async fn unpublished_store_answers_503_everywhere() {
    let store = Arc::new(SnapshotStore::empty());
    for uri in ["/healthz", "/api/v1/heatmap?week=2024-03-04", "/api/v1/blocks/2024-03-05/13", "/api/v1/providers", "/api/v1/meta"] {
        let (status, body) = get_json(&store, uri).await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert_eq!(body["error"], "no_snapshot_published");
    }
    let (status, _) = get_json(&store, "/api/v2/heatmap").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
