//! The standard daily pipeline: ingest, features, predict, aggregate,
//! publish, plus an optional evaluation branch.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use noshow_core::aggregate::ScoredAppointment;
use noshow_core::datagen::ProviderProfile;
use noshow_core::ingest::{
    engineer_features, global_rate, parse_export, read_feature_table, sort_records, write_feature_table,
    ColumnMapping, DEFAULT_PSEUDO_COUNT,
};
use noshow_core::model::{load_model, EvaluationReport, FitOptions, ForestHyperparams};
use noshow_core::schema::{format_timestamp, read_records, write_records, AppointmentRecord, ClinicCalendar};
use noshow_core::snapshot::{pointer_bytes, write_snapshot, ModelSummary, SnapshotContent};
use serde::Serialize;

use crate::dag::{PipelineConfig, TaskSpec};
use crate::runner::{Executor, TaskContext};

/// Workspace-relative locations used by [`standard_config`].
#[derive(Debug, Clone)]
pub struct StandardLayout {
    pub export: PathBuf,
    pub mapping: Option<PathBuf>,
    pub model: PathBuf,
    pub work_dir: PathBuf,
    pub publish_dir: PathBuf,
    pub calendar: ClinicCalendar,
    pub pseudo_count: f64,
    pub evaluate: bool,
}

impl Default for StandardLayout {
    fn default() -> Self {
        Self {
            export: "data/export.csv".into(),
            mapping: None,
            model: "models/model.nsrf".into(),
            work_dir: "work".into(),
            publish_dir: "publish".into(),
            calendar: ClinicCalendar::default(),
            pseudo_count: DEFAULT_PSEUDO_COUNT,
            evaluate: false,
        }
    }
}

fn table<T: Serialize>(value: &T) -> toml::Table {
    toml::Table::try_from(value).expect("serialises to a TOML table")
}

/// The five-stage pipeline, with an `evaluate` branch when requested.
pub fn standard_config(layout: &StandardLayout) -> PipelineConfig {
    let w = |name: &str| layout.work_dir.join(name);
    let task = |name: &str, inputs: Vec<PathBuf>, outputs: Vec<PathBuf>, params: toml::Table| TaskSpec {
        name: name.into(),
        command: name.into(),
        inputs,
        outputs,
        depends_on: vec![],
        params,
    };
    let mut ingest_inputs = vec![layout.export.clone()];
    ingest_inputs.extend(layout.mapping.clone());
    let mut features_params = toml::Table::new();
    features_params.insert("pseudo_count".into(), toml::Value::Float(layout.pseudo_count));
    let mut aggregate_params = toml::Table::new();
    aggregate_params.insert("calendar".into(), toml::Value::Table(table(&layout.calendar)));

    let mut tasks = vec![
        task("ingest", ingest_inputs, vec![w("records.csv"), w("ingest_report.json")], toml::Table::new()),
        task("features", vec![w("records.csv")], vec![w("features.csv")], features_params),
        task("predict", vec![w("features.csv"), layout.model.clone()], vec![w("predictions.csv")], toml::Table::new()),
        task(
            "aggregate",
            vec![w("records.csv"), w("predictions.csv"), layout.model.clone()],
            vec![w("snapshot.json")],
            aggregate_params,
        ),
        task("publish", vec![w("snapshot.json")], vec![layout.publish_dir.join(noshow_core::snapshot::POINTER_FILE)], toml::Table::new()),
    ];
    if layout.evaluate {
        tasks.push(task(
            "evaluate",
            vec![w("records.csv"), w("features.csv"), layout.model.clone()],
            vec![w("evaluation.json"), w("evaluation.txt")],
            toml::Table::new(),
        ));
    }
    PipelineConfig { tasks }
}

/// Runs the built-in commands against files.
#[derive(Debug, Default, Clone, Copy)]
pub struct StandardExecutor;

impl Executor for StandardExecutor {
    fn execute(&self, ctx: &TaskContext<'_>) -> Result<(), String> {
        match ctx.task.command.as_str() {
            "ingest" => ingest(ctx),
            "features" => features(ctx),
            "train" => train(ctx),
            "predict" => predict(ctx),
            "aggregate" => aggregate(ctx),
            "publish" => publish(ctx),
            "evaluate" => evaluate(ctx),
            other => Err(format!("unknown command {other:?}")),
        }
    }
}

fn err<E: std::fmt::Display>(what: &str) -> impl Fn(E) -> String + '_ {
    move |e| format!("{what}: {e}")
}

fn open(path: &Path) -> Result<BufReader<File>, String> {
    File::open(path).map(BufReader::new).map_err(|e| format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, String> {
    File::create(path).map(BufWriter::new).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(err("serialising"))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(err("writing"))
}

fn load_records(path: &Path) -> Result<Vec<AppointmentRecord>, String> {
    read_records(open(path)?).map_err(err("reading records"))
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    rows: usize,
    records: usize,
    errors: &'a [noshow_core::ingest::RowError],
    dropped: &'a [noshow_core::ingest::DroppedRow],
}

fn ingest(ctx: &TaskContext<'_>) -> Result<(), String> {
    let mapping = match ctx.inputs.get(1) {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(err("reading mapping"))?;
            ColumnMapping::from_toml(&text).map_err(err("column mapping"))?
        }
        None => ColumnMapping::canonical(),
    };
    let mut report = parse_export(open(ctx.input(0)?)?, &mapping).map_err(err("parsing export"))?;
    if report.records.is_empty() {
        return Err(format!("no valid records among {} rows", report.rows));
    }
    sort_records(&mut report.records);
    let mut out = create(ctx.output(0)?)?;
    write_records(&mut out, &report.records).map_err(err("writing records"))?;
    out.flush().map_err(err("writing records"))?;
    if let Ok(summary_path) = ctx.output(1) {
        let summary =
            IngestSummary { rows: report.rows, records: report.records.len(), errors: &report.errors, dropped: &report.dropped };
        write_json(summary_path, &summary)?;
    }
    Ok(())
}

fn features(ctx: &TaskContext<'_>) -> Result<(), String> {
    let records = load_records(ctx.input(0)?)?;
    let pseudo = ctx.task.param_f64("pseudo_count").unwrap_or(DEFAULT_PSEUDO_COUNT);
    let global = global_rate(&records).ok_or("no labelled records to take a global rate from")?;
    let rows = engineer_features(&records, global, pseudo).map_err(err("engineering features"))?;
    let mut out = create(ctx.output(0)?)?;
    write_feature_table(&mut out, &rows).map_err(err("writing features"))?;
    out.flush().map_err(err("writing features"))
}

fn train(ctx: &TaskContext<'_>) -> Result<(), String> {
    let records = load_records(ctx.input(0)?)?;
    let hp: ForestHyperparams = match ctx.task.params.get("forest") {
        Some(v) => v.clone().try_into().map_err(err("forest parameters"))?,
        None => ForestHyperparams::default(),
    };
    let opts: FitOptions = match ctx.task.params.get("fit") {
        Some(v) => v.clone().try_into().map_err(err("fit parameters"))?,
        None => FitOptions::default(),
    };
    let outcome = noshow_core::model::fit(&records, &hp, &opts).map_err(err("training"))?;
    fs::write(ctx.output(0)?, outcome.model.to_bytes()).map_err(err("writing model"))?;
    if let Ok(path) = ctx.output(1) {
        write_json(path, &outcome.validation)?;
    }
    Ok(())
}

fn predict(ctx: &TaskContext<'_>) -> Result<(), String> {
    let rows = read_feature_table(open(ctx.input(0)?)?).map_err(err("reading features"))?;
    let model = load_model(ctx.input(1)?).map_err(err("loading model"))?;
    let include_labelled = ctx.task.param_str("scope") == Some("all");
    let rows: Vec<_> = rows.into_iter().filter(|r| include_labelled || r.label.is_none()).collect();
    let probs = model.predict_features(&rows);
    let mut w = csv::Writer::from_writer(create(ctx.output(0)?)?);
    w.write_record(["appointment_id", "probability"]).map_err(err("writing predictions"))?;
    for (r, p) in rows.iter().zip(&probs) {
        w.write_record([r.appointment_id.as_str(), &p.to_string()]).map_err(err("writing predictions"))?;
    }
    w.flush().map_err(err("writing predictions"))
}

pub fn read_predictions(path: &Path) -> Result<HashMap<String, f64>, String> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = HashMap::new();
    for row in r.records() {
        let row = row.map_err(err("reading predictions"))?;
        let p: f64 = row.get(1).unwrap_or("").parse().map_err(err("probability"))?;
        out.insert(row.get(0).unwrap_or("").to_string(), p);
    }
    Ok(out)
}

fn aggregate(ctx: &TaskContext<'_>) -> Result<(), String> {
    let records = load_records(ctx.input(0)?)?;
    let predictions = read_predictions(ctx.input(1)?)?;
    let model = match ctx.inputs.get(2) {
        Some(path) => Some(ModelSummary::of(&load_model(path).map_err(err("loading model"))?)),
        None => None,
    };
    let calendar: ClinicCalendar = match ctx.task.params.get("calendar") {
        Some(v) => v.clone().try_into().map_err(err("calendar"))?,
        None => ClinicCalendar::default(),
    };
    calendar.validate()?;

    let mut providers: BTreeMap<String, ProviderProfile> = BTreeMap::new();
    for r in &records {
        providers.entry(r.provider_id.clone()).or_insert_with(|| ProviderProfile {
            provider_id: r.provider_id.clone(),
            specialty: r.provider_specialty.clone(),
            site_id: r.site_id.clone(),
        });
    }
    let appointments: Vec<ScoredAppointment> = records
        .iter()
        .filter_map(|r| {
            predictions.get(&r.appointment_id).map(|&p| ScoredAppointment {
                appointment_id: r.appointment_id.clone(),
                provider_id: r.provider_id.clone(),
                provider_specialty: r.provider_specialty.clone(),
                site_id: r.site_id.clone(),
                scheduled_at: r.scheduled_at,
                probability: p,
            })
        })
        .collect();
    let generated_at = records.iter().map(|r| r.booked_at).max().map(|t| format_timestamp(&t)).unwrap_or_default();
    let data_through = records.iter().filter(|r| r.label().is_some()).map(|r| r.scheduled_at.date_naive()).max();
    let content = SnapshotContent {
        generated_at,
        model,
        data_through,
        calendar,
        providers: providers.into_values().collect(),
        appointments,
    };
    write_json(ctx.output(0)?, &content)
}

fn publish(ctx: &TaskContext<'_>) -> Result<(), String> {
    let content: SnapshotContent =
        serde_json::from_slice(&fs::read(ctx.input(0)?).map_err(err("reading snapshot"))?).map_err(err("snapshot"))?;
    let root = ctx.final_outputs[0].parent().ok_or("pointer file has no parent directory")?;
    let snapshot = write_snapshot(root, content).map_err(err("writing snapshot"))?;
    fs::write(ctx.output(0)?, pointer_bytes(&snapshot.snapshot_id)).map_err(err("writing pointer"))
}

fn evaluate(ctx: &TaskContext<'_>) -> Result<(), String> {
    let records = load_records(ctx.input(0)?)?;
    let rows = read_feature_table(open(ctx.input(1)?)?).map_err(err("reading features"))?;
    let model = load_model(ctx.input(2)?).map_err(err("loading model"))?;
    // only visits after the training window count as held out
    let after = model.metadata().train_end;
    let dates: HashMap<&str, chrono::NaiveDate> =
        records.iter().map(|r| (r.appointment_id.as_str(), r.scheduled_at.date_naive())).collect();
    let held: Vec<_> = rows
        .into_iter()
        .filter(|r| r.label.is_some())
        .filter(|r| after.is_none_or(|end| dates.get(r.appointment_id.as_str()).is_some_and(|d| *d > end)))
        .collect();
    let labels: Vec<bool> = held.iter().map(|r| r.label.is_some_and(|l| l.is_missed())).collect();
    let report = EvaluationReport::evaluate(&model.predict_features(&held), &labels).map_err(err("evaluating"))?;
    write_json(ctx.output(0)?, &report)?;
    if let Ok(path) = ctx.output(1) {
        fs::write(path, report.to_text()).map_err(err("writing report"))?;
    }
    Ok(())
}
