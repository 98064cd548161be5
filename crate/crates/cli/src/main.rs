mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use noshow_core::aggregate::{Grouping, HeatmapFilter, HeatmapGrid};
use noshow_core::datagen::SyntheticClinic;
use noshow_core::ingest::{engineer_features, parse_export, sort_records, ColumnMapping};
use noshow_core::model::{fit, load_model, save_model, TuningGrid};
use noshow_core::schema::{chronological, write_records, AppointmentRecord};
use noshow_core::simulate::{run_policies, Policy, Predictor};
use noshow_core::snapshot::load_current;
use noshow_pipeline::{run, Dag, PipelineError, RunLedger, RunOptions, StandardExecutor};

use crate::config::AppConfig;

#[derive(Debug, Parser)]
#[command(name = "noshow", version, about = "Appointment no-show prediction and overbooking decision support")]
struct Cli {
    /// TOML configuration; defaults to <workspace>/noshow.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory that relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic clinic history and its ground-truth probabilities.
    Generate {
        /// Canonical record CSV to write; defaults to the pipeline export.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ground truth CSV; defaults to <out stem>_truth.csv.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Days of unlabelled future schedule appended after the history.
        #[arg(long, default_value_t = 7)]
        schedule_days: u32,
    },
    /// Map a vendor export onto canonical records.
    Ingest {
        /// Vendor export; defaults to the pipeline export.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Column mapping TOML; the canonical column names are assumed without one.
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Defaults to <work_dir>/records.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON summary of rejected and dropped rows.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train and freeze a forest on the labelled rows of an export.
    Train {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validation report (JSON); a text version is printed.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Choose tree count and leaf size by validation AUC.
        #[arg(long)]
        tune: bool,
    },
    /// Score appointments with a frozen model.
    Predict {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also score appointments that already have an outcome.
        #[arg(long)]
        all: bool,
    },
    /// Print a week's heatmap from the published snapshot.
    Heatmap {
        /// Any date in the week; defaults to the first scheduled week.
        #[arg(long)]
        week: Option<NaiveDate>,
        #[arg(long)]
        provider: Option<String>,
        #[arg(long)]
        specialty: Option<String>,
        #[arg(long)]
        site: Option<String>,
        #[arg(long, value_enum, default_value_t = GroupingArg::PerProvider)]
        grouping: GroupingArg,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        snapshot_dir: Option<PathBuf>,
    },
    /// Compare overbooking policies by Monte-Carlo simulation.
    Simulate {
        /// Comma-separated, e.g. no_overbook,fixed_per_day:2,model,oracle.
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<String>>,
        #[arg(long)]
        replications: Option<usize>,
        /// Frozen model for the model policy; the baseline is used without one.
        #[arg(long)]
        model: Option<PathBuf>,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline, skipping up-to-date tasks.
    Run {
        /// Re-execute every task.
        #[arg(long)]
        force: bool,
    },
    /// Serve the read-only API over published snapshots.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        snapshot_dir: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GroupingArg {
    PerProvider,
    Combined,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

struct Ctx {
    workspace: PathBuf,
    cfg: AppConfig,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        self.workspace.join(p)
    }

    fn pick(&self, given: Option<PathBuf>, default: &Path) -> PathBuf {
        self.path(given.as_deref().unwrap_or(default))
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_export(path: &Path, mapping: Option<&Path>) -> Result<Vec<AppointmentRecord>> {
    let mapping = match mapping {
        Some(m) => ColumnMapping::from_toml(&fs::read_to_string(m).with_context(|| format!("reading {}", m.display()))?)?,
        None => ColumnMapping::canonical(),
    };
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let report = parse_export(std::io::BufReader::new(file), &mapping)?;
    if !report.errors.is_empty() {
        eprintln!("{}: skipped {} invalid rows", path.display(), report.errors.len());
    }
    let mut records = report.records;
    sort_records(&mut records);
    Ok(records)
}

fn generate(ctx: &Ctx, out: Option<PathBuf>, truth: Option<PathBuf>, schedule_days: u32) -> Result<()> {
    let out = ctx.pick(out, &ctx.cfg.pipeline.export);
    let truth = truth.map(|t| ctx.path(&t)).unwrap_or_else(|| {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("export");
        out.with_file_name(format!("{stem}_truth.csv"))
    });
    let clinic = SyntheticClinic::new(ctx.cfg.generator.clone())?;
    let mut data = clinic.history();
    let n_history = data.records.len();
    if schedule_days > 0 {
        let start = clinic.history_end() + chrono::Duration::days(1);
        let future = clinic.schedule(start, schedule_days, "F", ctx.cfg.generator.seed)?;
        data.records.extend(future.records);
        data.truth.entries.extend(future.truth.entries);
    }
    data.records.sort_by(chronological);

    create_parent(&out)?;
    write_records(fs::File::create(&out)?, &data.records)?;
    create_parent(&truth)?;
    data.truth.write_csv(fs::File::create(&truth)?)?;
    println!(
        "wrote {} history and {} scheduled appointments to {} (missed fraction {:.4}); ground truth in {}",
        n_history,
        data.records.len() - n_history,
        out.display(),
        data.missed_fraction(),
        truth.display()
    );
    Ok(())
}

fn ingest(ctx: &Ctx, input: Option<PathBuf>, mapping: Option<PathBuf>, out: Option<PathBuf>, report: Option<PathBuf>) -> Result<()> {
    let input = ctx.pick(input, &ctx.cfg.pipeline.export);
    let mapping = mapping.or_else(|| ctx.cfg.pipeline.mapping.clone()).map(|m| ctx.path(&m));
    let out = ctx.pick(out, &ctx.cfg.pipeline.work_dir.join("records.csv"));
    let map = match &mapping {
        Some(m) => ColumnMapping::from_toml(&fs::read_to_string(m)?)?,
        None => ColumnMapping::canonical(),
    };
    let parsed = parse_export(std::io::BufReader::new(fs::File::open(&input).with_context(|| input.display().to_string())?), &map)?;
    let mut records = parsed.records;
    sort_records(&mut records);
    create_parent(&out)?;
    write_records(fs::File::create(&out)?, &records)?;
    println!(
        "{} rows: {} records, {} rejected, {} dropped cancellations -> {}",
        parsed.rows,
        records.len(),
        parsed.errors.len(),
        parsed.dropped.len(),
        out.display()
    );
    for e in parsed.errors.iter().take(10) {
        eprintln!("  {e:?}");
    }
    if let Some(r) = report {
        let summary = serde_json::json!({ "rows": parsed.rows, "records": records.len(), "errors": parsed.errors, "dropped": parsed.dropped });
        write_file(&ctx.path(&r), serde_json::to_vec_pretty(&summary)?)?;
    }
    Ok(())
}

fn train(ctx: &Ctx, input: Option<PathBuf>, mapping: Option<PathBuf>, out: Option<PathBuf>, report: Option<PathBuf>, tune: bool) -> Result<()> {
    let input = ctx.pick(input, &ctx.cfg.pipeline.export);
    let mapping = mapping.or_else(|| ctx.cfg.pipeline.mapping.clone()).map(|m| ctx.path(&m));
    let out = ctx.pick(out, &ctx.cfg.pipeline.model);
    let records = read_export(&input, mapping.as_deref())?;
    let mut opts = ctx.cfg.fit.clone();
    if tune && opts.tuning.is_none() {
        opts.tuning = Some(TuningGrid::default());
    }
    let outcome = fit(&records, &ctx.cfg.forest, &opts)?;
    create_parent(&out)?;
    save_model(&out, &outcome.model)?;
    for t in &outcome.tuning {
        println!("  trees {:>4}  min leaf {:>4}  validation AUC {:.4}", t.n_trees, t.min_leaf_size, t.validation_auc);
    }
    println!("model {} -> {}", outcome.model.fingerprint(), out.display());
    println!("forest validation:\n{}", outcome.validation.to_text());
    println!("historical-rate baseline AUC: {:.4}", outcome.baseline_validation.roc_auc);
    let report = report.map(|r| ctx.path(&r)).unwrap_or_else(|| out.with_extension("validation.json"));
    let body = serde_json::json!({ "forest": outcome.validation, "baseline": outcome.baseline_validation, "tuning": outcome.tuning });
    write_file(&report, serde_json::to_vec_pretty(&body)?)
}

fn predict(ctx: &Ctx, input: Option<PathBuf>, mapping: Option<PathBuf>, model: Option<PathBuf>, out: Option<PathBuf>, all: bool) -> Result<()> {
    let input = ctx.pick(input, &ctx.cfg.pipeline.export);
    let mapping = mapping.or_else(|| ctx.cfg.pipeline.mapping.clone()).map(|m| ctx.path(&m));
    let model = load_model(&ctx.pick(model, &ctx.cfg.pipeline.model))?;
    let out = ctx.pick(out, &ctx.cfg.pipeline.work_dir.join("predictions.csv"));
    let records = read_export(&input, mapping.as_deref())?;
    let meta = model.metadata();
    let rows: Vec<_> = engineer_features(&records, meta.global_rate, meta.pseudo_count)?
        .into_iter()
        .filter(|r| all || r.label.is_none())
        .collect();
    let probs = model.predict_features(&rows);
    let mut body = String::from("appointment_id,probability\n");
    for (r, p) in rows.iter().zip(&probs) {
        body.push_str(&format!("{},{}\n", r.appointment_id, p));
    }
    write_file(&out, body)?;
    println!("scored {} appointments -> {}", rows.len(), out.display());
    Ok(())
}

fn render_text(grid: &HeatmapGrid) -> String {
    let mut s = format!("week of {}  ({} appointments outside hours)\n", grid.week, grid.outside_hours);
    let keys: Vec<Option<String>> = match grid.grouping {
        Grouping::PerProvider => grid.providers.iter().cloned().map(Some).collect(),
        Grouping::Combined => vec![grid.filters.provider.clone()],
    };
    for key in keys {
        s.push_str(&format!("\n{}\n      ", key.as_deref().unwrap_or("all providers")));
        for d in &grid.days {
            s.push_str(&format!(" {:>9}", d.format("%a %d")));
        }
        s.push('\n');
        for &h in &grid.hours {
            s.push_str(&format!("{h:02}:00 "));
            for &d in &grid.days {
                match grid.cell(d, h, key.as_deref()) {
                    Some(c) if c.n_scheduled > 0 => {
                        let tag = format!("{:?}", c.color).to_lowercase();
                        s.push_str(&format!(" {:>4.1} {:<4}", c.expected_misses, &tag[..3]));
                    }
                    _ => s.push_str(&format!(" {:>9}", ".")),
                }
            }
            s.push('\n');
        }
    }
    s
}

fn heatmap(
    ctx: &Ctx,
    week: Option<NaiveDate>,
    filter: HeatmapFilter,
    grouping: GroupingArg,
    format: Format,
    snapshot_dir: Option<PathBuf>,
) -> Result<()> {
    let dir = ctx.pick(snapshot_dir, &ctx.cfg.pipeline.publish_dir);
    let snap = load_current(&dir)?;
    let week = match week {
        Some(w) => w,
        None => *snap.weeks().first().context("the snapshot holds no appointments; pass --week")?,
    };
    let grouping = match grouping {
        GroupingArg::PerProvider => Grouping::PerProvider,
        GroupingArg::Combined => Grouping::Combined,
    };
    let grid = snap.heatmap(week, &filter, grouping)?;
    let mut stdout = std::io::stdout().lock();
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut stdout, &grid)?;
            writeln!(stdout)?;
        }
        Format::Text => write!(stdout, "{}", render_text(&grid))?,
    }
    Ok(())
}

fn simulate(ctx: &Ctx, policies: Option<Vec<String>>, replications: Option<usize>, model: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let names = policies.unwrap_or_else(|| ctx.cfg.simulate.policies.clone());
    let policies: Vec<Policy> =
        names.iter().map(|n| n.trim().parse::<Policy>().map_err(anyhow::Error::msg)).collect::<Result<_>>()?;
    let replications = replications.unwrap_or(ctx.cfg.simulate.replications);
    let predictor = match model.or_else(|| ctx.cfg.simulate.model.clone()) {
        Some(m) => Predictor::Forest(Arc::new(load_model(&ctx.path(&m))?)),
        None => Predictor::Baseline,
    };
    let clinic = SyntheticClinic::new(ctx.cfg.generator.clone())?;
    let report = run_policies(&clinic, &predictor, &policies, replications, ctx.cfg.simulate.seed)?;
    print!("{}", report.to_text());
    let out = ctx.pick(out, &ctx.cfg.pipeline.work_dir.join("simulation.json"));
    write_file(&out, serde_json::to_vec_pretty(&report)?)?;
    println!("report -> {}", out.display());
    Ok(())
}

fn print_ledger(ledger: &RunLedger) {
    for e in &ledger.entries {
        let status = serde_json::to_value(e.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        println!("{status:<9} {:<12} {:>8} ms", e.task, e.wall_time_ms);
    }
}

/// Exit code 1 and the failed task's name on stderr when a task fails.
fn run_pipeline(ctx: &Ctx, force: bool) -> Result<ExitCode> {
    let dag = Dag::from_config(&ctx.cfg.pipeline_config()?, &ctx.workspace)?;
    let opts = RunOptions { force, ..RunOptions::default() };
    match run(&dag, &StandardExecutor, &opts) {
        Ok(ledger) => {
            print_ledger(&ledger);
            Ok(ExitCode::SUCCESS)
        }
        Err(PipelineError::TaskFailed { task, diagnostics, ledger }) => {
            print_ledger(&ledger);
            eprintln!("error: task {task} failed: {diagnostics}");
            Ok(ExitCode::FAILURE)
        }
        Err(e) => Err(e.into()),
    }
}

fn serve(ctx: &Ctx, port: Option<u16>, snapshot_dir: Option<PathBuf>, bind: Option<String>) -> Result<()> {
    let s = &ctx.cfg.serve;
    let bind = bind.unwrap_or_else(|| s.bind.clone());
    let ip: std::net::IpAddr = bind.parse().with_context(|| format!("bind address {bind:?}"))?;
    let config = noshow_service::ServeConfig {
        addr: (ip, port.unwrap_or(s.port)).into(),
        snapshot_dir: ctx.pick(snapshot_dir, &ctx.cfg.pipeline.publish_dir),
        poll_interval: Duration::from_millis(s.poll_ms.max(10)),
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(noshow_service::serve(config))?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let mut cfg = AppConfig::load(cli.config.as_deref(), &cli.workspace)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let ctx = Ctx { workspace: cli.workspace, cfg };
    match cli.command {
        Command::Generate { out, truth, schedule_days } => generate(&ctx, out, truth, schedule_days)?,
        Command::Ingest { input, mapping, out, report } => ingest(&ctx, input, mapping, out, report)?,
        Command::Train { input, mapping, out, report, tune } => train(&ctx, input, mapping, out, report, tune)?,
        Command::Predict { input, mapping, model, out, all } => predict(&ctx, input, mapping, model, out, all)?,
        Command::Heatmap { week, provider, specialty, site, grouping, format, snapshot_dir } => {
            heatmap(&ctx, week, HeatmapFilter { provider, specialty, site }, grouping, format, snapshot_dir)?
        }
        Command::Simulate { policies, replications, model, out } => simulate(&ctx, policies, replications, model, out)?,
        Command::Run { force } => return run_pipeline(&ctx, force),
        Command::Serve { port, snapshot_dir, bind } => serve(&ctx, port, snapshot_dir, bind)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_target(false).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
