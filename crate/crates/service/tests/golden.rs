//! Responses compared byte for byte against files in `tests/golden`.
//! Set `UPDATE_GOLDEN=1` to rewrite them after an intended change.

mod common;

use axum::http::StatusCode;
use common::{fixture_store, get, golden_path, CASES, WEEK};

#[tokio::test]
async fn responses_match_golden_files() {
    let store = fixture_store();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut mismatched = Vec::new();
    for &(name, uri, status) in CASES {
        let (got_status, body) = get(&store, uri).await;
        assert_eq!(got_status.as_u16(), status, "{uri}: {}", String::from_utf8_lossy(&body));
        // pretty-printed on disk for review; compared after re-serialising
        let value: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let pretty = format!("{}\n", serde_json::to_string_pretty(&value).unwrap());
        let path = golden_path(name);
        if update {
            std::fs::write(&path, &pretty).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
        if want != pretty {
            mismatched.push(name);
        }
        // the compact body is a pure function of the query
        assert_eq!(get(&store, uri).await.1, body, "{uri} not byte-stable");
    }
    assert!(mismatched.is_empty(), "responses differ from golden files: {mismatched:?}");
}

#[tokio::test]
async fn error_bodies_name_the_parameter() {
    let store = fixture_store();
    for (uri, parameter) in [
        ("/api/v1/heatmap?week=2024-03-04&provider=zzz", "provider"),
        ("/api/v1/heatmap?week=2024-13-40", "week"),
        ("/api/v1/blocks/2024-03-05/25", "hour"),
        ("/api/v1/blocks/yesterday/9", "date"),
    ] {
        let (_, body) = common::get_json(&store, uri).await;
        assert_eq!(body["parameter"], parameter, "{uri}");
        assert!(body["error"].is_string() && body["message"].is_string());
    }
}

#[tokio::test]
async fn worked_example_block() {
    let store = fixture_store();
    let (status, body) = common::get_json(&store, "/api/v1/blocks/2024-03-05/13?provider=D01").await;
    assert_eq!(status, StatusCode::OK);
    let entries = body["appointments"].as_array().unwrap();
    assert_eq!(entries.len(), 4);
    assert!(entries.iter().all(|e| e["probability"] == 0.25));
    assert_eq!(body["expected"], 1.0);
    assert_eq!(body["color"], "orange");
    assert_eq!(body["overbook"], 1);

    let (_, empty) = common::get_json(&store, "/api/v1/blocks/2024-03-05/9").await;
    assert_eq!(empty["appointments"].as_array().unwrap().len(), 0);
    assert_eq!(empty["expected"], 0.0);
}

#[tokio::test]
async fn unfiltered_week_is_one_cell_per_day_and_hour() {
    let store = fixture_store();
    let (_, grid) = common::get_json(&store, &format!("/api/v1/heatmap?week={WEEK}")).await;
    let days = grid["days"].as_array().unwrap().len();
    let hours = grid["hours"].as_array().unwrap().len();
    assert_eq!((days, hours), (5, 8));
    assert_eq!(grid["cells"].as_array().unwrap().len(), days * hours);
    assert_eq!(grid["outside_hours"], 1);
}
