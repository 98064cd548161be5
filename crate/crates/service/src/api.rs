use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use chrono::NaiveDate;
use noshow_core::aggregate::{build_heatmap, AggregateError, BlockSummary, Grouping, HeatmapFilter, HeatmapGrid};
use noshow_core::datagen::ProviderProfile;
use noshow_core::schema::{week_start, ClinicCalendar};
use noshow_core::snapshot::ModelSummary;
use serde::Serialize;

use crate::store::{Served, SnapshotStore};

pub const API_VERSION: &str = "v1";

/// Error body shared by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub parameter: Option<String>,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, parameter: Option<&str>, message: String) -> Self {
        Self {
            status,
            body: ErrorBody { error: error.into(), parameter: parameter.map(String::from), message },
        }
    }

    fn bad_request(error: &str, parameter: &str, message: String) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error, Some(parameter), message)
    }

    fn not_found(error: &str, parameter: &str, message: String) -> Self {
        Self::new(StatusCode::NOT_FOUND, error, Some(parameter), message)
    }

    fn unpublished() -> Self {
        Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "no_snapshot_published",
            None,
            "the pipeline has not published a snapshot yet".into(),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, &self.body)
    }
}

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match serde_json::to_vec(value) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn ok<T: Serialize>(value: &T) -> Response {
    json_response(StatusCode::OK, value)
}

type Params = Query<BTreeMap<String, String>>;

fn live(store: &SnapshotStore) -> Result<Arc<Served>, ApiError> {
    store.current().ok_or_else(ApiError::unpublished)
}

/// Accepts `YYYY-MM-DD` or an ISO week such as `2024-W05`.
pub fn parse_date(raw: &str, parameter: &str) -> Result<NaiveDate, ApiError> {
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Ok(d);
    }
    if let Some((y, w)) = raw.split_once("-W") {
        if let (Ok(y), Ok(w)) = (y.parse(), w.parse()) {
            if let Some(d) = NaiveDate::from_isoywd_opt(y, w, chrono::Weekday::Mon) {
                return Ok(d);
            }
        }
    }
    Err(ApiError::bad_request("malformed_date", parameter, format!("{raw:?} is not a date (expected YYYY-MM-DD)")))
}

fn param<'a>(q: &'a BTreeMap<String, String>, key: &str) -> Option<&'a str> {
    q.get(key).map(String::as_str).filter(|v| !v.is_empty())
}

fn filter_from(served: &Served, q: &BTreeMap<String, String>) -> Result<HeatmapFilter, ApiError> {
    let provider = param(q, "provider");
    if let Some(p) = provider.filter(|p| !served.has_provider(p)) {
        return Err(ApiError::not_found("unknown_provider", "provider", format!("no provider {p:?} in the snapshot")));
    }
    let specialty = param(q, "specialty");
    if let Some(s) = specialty.filter(|s| !served.specialties.contains(*s)) {
        return Err(ApiError::not_found("unknown_specialty", "specialty", format!("no specialty {s:?} in the snapshot")));
    }
    let site = param(q, "site");
    if let Some(s) = site.filter(|s| !served.sites.contains(*s)) {
        return Err(ApiError::not_found("unknown_site", "site", format!("no site {s:?} in the snapshot")));
    }
    Ok(HeatmapFilter {
        provider: provider.map(String::from),
        specialty: specialty.map(String::from),
        site: site.map(String::from),
    })
}

fn grouping_from(q: &BTreeMap<String, String>) -> Result<Grouping, ApiError> {
    match param(q, "grouping") {
        None | Some("combined") => Ok(Grouping::Combined),
        Some("per_provider") => Ok(Grouping::PerProvider),
        Some(other) => Err(ApiError::bad_request(
            "invalid_parameter",
            "grouping",
            format!("grouping must be combined or per_provider, got {other:?}"),
        )),
    }
}

fn grid(served: &Served, week: NaiveDate, filter: &HeatmapFilter, grouping: Grouping) -> Result<HeatmapGrid, ApiError> {
    let monday = week_start(week);
    build_heatmap(served.week(monday), monday, &served.snapshot.content.calendar, filter, grouping).map_err(|e| match e {
        AggregateError::EmptyWeek(_) => ApiError::not_found("empty_week", "week", e.to_string()),
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", None, other.to_string()),
    })
}

#[derive(Serialize)]
struct HeatmapResponse<'a> {
    snapshot_id: &'a str,
    #[serde(flatten)]
    grid: HeatmapGrid,
}

async fn heatmap(State(store): State<Arc<SnapshotStore>>, Query(q): Params) -> Result<Response, ApiError> {
    let served = live(&store)?;
    let week = match param(&q, "week") {
        Some(raw) => parse_date(raw, "week")?,
        None => served.weeks().first().copied().ok_or_else(|| {
            ApiError::bad_request("missing_parameter", "week", "the snapshot has no appointments; pass week".into())
        })?,
    };
    let filter = filter_from(&served, &q)?;
    let grouping = grouping_from(&q)?;
    let grid = grid(&served, week, &filter, grouping)?;
    Ok(ok(&HeatmapResponse { snapshot_id: served.id(), grid }))
}

#[derive(Serialize)]
struct BlockResponse<'a> {
    snapshot_id: &'a str,
    #[serde(flatten)]
    block: BlockSummary,
}

async fn block(
    State(store): State<Arc<SnapshotStore>>,
    Path((date, hour)): Path<(String, String)>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let served = live(&store)?;
    let hour: u8 = hour
        .parse()
        .ok()
        .filter(|h| *h < 24)
        .ok_or_else(|| ApiError::bad_request("malformed_hour", "hour", format!("{hour:?} is not an hour 0-23")))?;
    let date = parse_date(&date, "date")?;
    let filter = filter_from(&served, &q)?;

    let out_of_range = |parameter: &str, why: String| ApiError::not_found("block_out_of_range", parameter, why);
    match served.date_range() {
        Some((first, last)) if date >= first && date <= last => {}
        Some((first, last)) => {
            return Err(out_of_range("date", format!("{date} is outside the snapshot range {first}..{last}")))
        }
        None => return Err(out_of_range("date", "the snapshot holds no appointments".into())),
    }
    let calendar = &served.snapshot.content.calendar;
    if !calendar.is_clinic_day(date) {
        return Err(out_of_range("date", format!("{date} is not a clinic day")));
    }
    if !calendar.block_hours().contains(&hour) {
        return Err(out_of_range("hour", format!("{hour}:00 does not start a block within clinic hours")));
    }

    let grid = grid(&served, date, &filter, Grouping::Combined)?;
    let cell = grid
        .cell(date, hour, filter.provider.as_deref())
        .cloned()
        .ok_or_else(|| out_of_range("hour", format!("no block at {date} {hour}:00")))?;
    Ok(ok(&BlockResponse { snapshot_id: served.id(), block: cell }))
}

#[derive(Serialize)]
struct ProvidersResponse<'a> {
    snapshot_id: &'a str,
    providers: &'a [ProviderProfile],
    specialties: &'a BTreeSet<String>,
    sites: &'a BTreeSet<String>,
}

async fn providers(State(store): State<Arc<SnapshotStore>>) -> Result<Response, ApiError> {
    let served = live(&store)?;
    Ok(ok(&ProvidersResponse {
        snapshot_id: served.id(),
        providers: &served.snapshot.content.providers,
        specialties: &served.specialties,
        sites: &served.sites,
    }))
}

#[derive(Serialize)]
struct MetaResponse<'a> {
    api_version: &'static str,
    snapshot_id: &'a str,
    generated_at: &'a str,
    data_through: Option<NaiveDate>,
    model: Option<&'a ModelSummary>,
    calendar: &'a ClinicCalendar,
    weeks: Vec<NaiveDate>,
    n_providers: usize,
    n_appointments: usize,
}

async fn meta(State(store): State<Arc<SnapshotStore>>) -> Result<Response, ApiError> {
    let served = live(&store)?;
    let c = &served.snapshot.content;
    Ok(ok(&MetaResponse {
        api_version: API_VERSION,
        snapshot_id: served.id(),
        generated_at: &c.generated_at,
        data_through: c.data_through,
        model: c.model.as_ref(),
        calendar: &c.calendar,
        weeks: served.weeks(),
        n_providers: c.providers.len(),
        n_appointments: c.appointments.len(),
    }))
}

#[derive(Serialize)]
struct Health<'a> {
    status: &'static str,
    snapshot_id: &'a str,
}

async fn healthz(State(store): State<Arc<SnapshotStore>>) -> Result<Response, ApiError> {
    let served = live(&store)?;
    Ok(ok(&Health { status: "ok", snapshot_id: served.id() }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", None, "no such endpoint".into())
}

/// All routes. Authentication, if needed, goes in as a tower layer on the
/// returned router.
pub fn router(store: Arc<SnapshotStore>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/api/v1/heatmap", get(heatmap))
        .route("/api/v1/blocks/{date}/{hour}", get(block))
        .route("/api/v1/providers", get(providers))
        .route("/api/v1/meta", get(meta))
        .fallback(not_found)
        .with_state(store)
}
