//! One function per subcommand. Each reads its upstream artifacts from the
//! output directory, writes its own, and records digests in the manifest.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use cogeffort::baselines::{self, forest, gbt};
use cogeffort::dataprep::{self, split_by_participant, FeatureRow, PcaModel};
use cogeffort::evalcore::{self, ClassificationMetrics, EffortRecord, Source};
use cogeffort::explain::{self, AttributionReport};
use cogeffort::neuralnet::checkpoint::{read_checkpoint, write_checkpoint};
use cogeffort::neuralnet::grid::{self, GridEntry};
use cogeffort::neuralnet::{Dataset, Network, TrainedModel};
use cogeffort::synthgen;
use cogeffort::Exec;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, StageContext};
use crate::io::{self as aio, fmt_f64, require};
use crate::manifest::{self, StageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictionSource {
    /// Network predictions from `predictions.csv`.
    #[default]
    Model,
    /// Recorded labels stand in for predictions.
    Oracle,
}

impl PredictionSource {
    pub fn name(self) -> &'static str {
        match self {
            PredictionSource::Model => "model",
            PredictionSource::Oracle => "oracle",
        }
    }
}

pub const STAGES: [&str; 7] = ["synth", "prep", "train", "gridsearch", "baselines", "explain", "effort"];

pub struct Ctx {
    pub cfg: RunConfig,
    pub dir: PathBuf,
    pub exec: Exec,
    pub predictions: PredictionSource,
}

struct Io {
    inputs: Vec<&'static str>,
    outputs: Vec<&'static str>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn need(&self, name: &str, stage: &str) -> CliResult<PathBuf> {
        require(&self.dir, name, stage)
    }
}

/// Runs one named stage and records it in the manifest.
pub fn run_stage(ctx: &Ctx, name: &str) -> CliResult<()> {
    std::fs::create_dir_all(&ctx.dir)
        .map_err(|e| CliError::runtime(name, format!("cannot create {}: {e}", ctx.dir.display())))?;
    let start = Instant::now();
    let io = match name {
        "synth" => synth(ctx)?,
        "prep" => prep(ctx)?,
        "train" => train(ctx)?,
        "gridsearch" => gridsearch(ctx)?,
        "baselines" => run_baselines(ctx)?,
        "explain" => run_explain(ctx)?,
        "effort" => effort(ctx)?,
        other => return Err(CliError::validation("cli", format!("unknown stage {other}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let record = StageRecord {
        name: name.to_string(),
        inputs: manifest::digests(&ctx.dir, &names(&io.inputs))?,
        outputs: manifest::digests(&ctx.dir, &names(&io.outputs))?,
        seconds,
    };
    log::info!("stage {name} finished in {seconds:.2}s");
    manifest::record(&ctx.dir, &ctx.cfg, record)
}

/// synth → prep → train|gridsearch → baselines → explain → effort, then the summary.
pub fn run_pipeline(ctx: &Ctx) -> CliResult<()> {
    let fit = if ctx.cfg.grid.use_in_pipeline { "gridsearch" } else { "train" };
    for stage in ["synth", "prep", fit, "baselines", "explain", "effort"] {
        run_stage(ctx, stage)?;
    }
    let summary = build_summary(ctx, fit)?;
    aio::write_json(&ctx.path(aio::SUMMARY), &summary)
}

fn synth(ctx: &Ctx) -> CliResult<Io> {
    let trials = synthgen::generate_cohort_with(&ctx.cfg.synth, ctx.exec).stage("synth")?;
    aio::write_trials(&ctx.path(aio::TRIALS), &trials)?;
    log::info!("generated {} trials", trials.len());
    Ok(Io { inputs: vec![], outputs: vec![aio::TRIALS] })
}

fn prep(ctx: &Ctx) -> CliResult<Io> {
    let trials = aio::read_trials(&ctx.need(aio::TRIALS, "prep")?)?;
    let prepared = dataprep::prepare(&trials, &ctx.cfg.prep, ctx.cfg.seed).stage("prep")?;
    aio::write_features(&ctx.path(aio::FEATURES), &prepared.all_real())?;
    aio::write_features(&ctx.path(aio::TRAIN_BALANCED), &prepared.train_balanced)?;
    aio::write_json(&ctx.path(aio::PCA_MODEL), &prepared.pca)?;
    Ok(Io { inputs: vec![aio::TRIALS], outputs: vec![aio::FEATURES, aio::TRAIN_BALANCED, aio::PCA_MODEL] })
}

/// Real rows split into (train, validation, test) plus the balanced training rows.
struct Splits {
    train_real: Vec<FeatureRow>,
    train_balanced: Vec<FeatureRow>,
    validation: Vec<FeatureRow>,
    test: Vec<FeatureRow>,
}

fn load_splits(ctx: &Ctx, stage: &str) -> CliResult<Splits> {
    let features = aio::read_features(&ctx.need(aio::FEATURES, stage)?)?;
    let train_balanced = aio::read_features(&ctx.need(aio::TRAIN_BALANCED, stage)?)?;
    let parts = split_by_participant(features, &ctx.cfg.prep.split()).stage(stage)?;
    Ok(Splits { train_real: parts.train, train_balanced, validation: parts.validation, test: parts.test })
}

fn load_model(ctx: &Ctx, stage: &str) -> CliResult<Network> {
    let path = ctx.need(aio::CHECKPOINT, stage)?;
    let f = File::open(&path).map_err(|e| CliError::runtime(stage, format!("{}: {e}", path.display())))?;
    let (net, _) = read_checkpoint(BufReader::new(f)).stage(stage)?;
    Ok(net)
}

fn majority_rate(labels: &[u8]) -> f64 {
    let ones = labels.iter().filter(|&&l| l == 1).count();
    ones.max(labels.len() - ones) as f64 / labels.len() as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelMetrics {
    architecture: String,
    source: String,
    best_epoch: usize,
    epochs_run: usize,
    stopped_early: bool,
    parameter_count: usize,
    best_val_acc: f64,
    best_val_loss: f64,
    n_train: usize,
    n_validation: usize,
    n_test: usize,
    majority_rate: f64,
    test: ClassificationMetrics,
}

pub fn history_header() -> Vec<String> {
    ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"].map(String::from).to_vec()
}

/// Writes checkpoint, history, test predictions and metrics for a trained model.
fn emit_model(ctx: &Ctx, stage: &str, model: &TrainedModel, splits: &Splits) -> CliResult<()> {
    let path = ctx.path(aio::CHECKPOINT);
    let f = File::create(&path).map_err(|e| CliError::runtime(stage, format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, &model.network, model.best_epoch).stage(stage)?;
    w.flush().map_err(|e| CliError::runtime(stage, format!("{}: {e}", path.display())))?;

    let rows = model.history.iter().map(|m| {
        vec![m.epoch.to_string(), fmt_f64(m.train_loss), fmt_f64(m.train_acc), fmt_f64(m.val_loss), fmt_f64(m.val_acc)]
    });
    aio::write_table(&ctx.path(aio::HISTORY), &history_header(), rows)?;

    let x = dataprep::reshape_for_model(&splits.test).stage(stage)?;
    let probs = model.network.predict_proba(&x).stage(stage)?;
    let predicted = cogeffort::neuralnet::model::argmax_labels(&probs);
    let preds: Vec<aio::Prediction> = splits
        .test
        .iter()
        .zip(&predicted)
        .zip(probs.data().chunks(2))
        .map(|((r, &p), pr)| aio::Prediction {
            participant_id: r.participant_id.clone(),
            question_id: r.question_id,
            session: r.session,
            segment: r.segment,
            label: r.label,
            predicted: p,
            prob_correct: pr[1],
        })
        .collect();
    aio::write_predictions(&ctx.path(aio::PREDICTIONS), &preds)?;

    let truth: Vec<u8> = splits.test.iter().map(|r| r.label).collect();
    let best = model.history[model.best_epoch - 1];
    let metrics = ModelMetrics {
        architecture: model.config().architecture.name().to_string(),
        source: stage.to_string(),
        best_epoch: model.best_epoch,
        epochs_run: model.history.len(),
        stopped_early: model.stopped_early,
        parameter_count: model.network.parameter_count(),
        best_val_acc: best.val_acc,
        best_val_loss: best.val_loss,
        n_train: splits.train_balanced.len(),
        n_validation: splits.validation.len(),
        n_test: splits.test.len(),
        majority_rate: majority_rate(&truth),
        test: evalcore::classification_metrics(&truth, &predicted).stage(stage)?,
    };
    log::info!(
        "{stage}: test accuracy {:.4} (majority {:.4}) after {} epochs",
        metrics.test.accuracy,
        metrics.majority_rate,
        metrics.epochs_run
    );
    aio::write_json(&ctx.path(aio::METRICS), &metrics)
}

const MODEL_OUTPUTS: [&str; 4] = [aio::CHECKPOINT, aio::HISTORY, aio::PREDICTIONS, aio::METRICS];

fn train(ctx: &Ctx) -> CliResult<Io> {
    let splits = load_splits(ctx, "train")?;
    let tr = Dataset::from_rows(&splits.train_balanced).stage("train")?;
    let va = Dataset::from_rows(&splits.validation).stage("train")?;
    let model = cogeffort::neuralnet::train(&ctx.cfg.train, &tr, &va).stage("train")?;
    emit_model(ctx, "train", &model, &splits)?;
    Ok(Io { inputs: vec![aio::FEATURES, aio::TRAIN_BALANCED], outputs: MODEL_OUTPUTS.to_vec() })
}

fn grid_header() -> Vec<String> {
    [
        "rank", "index", "gru_units", "dropout_rate", "learning_rate", "batch_size", "seed", "status", "best_epoch",
        "epochs_run", "val_acc", "val_loss", "error",
    ]
    .map(String::from)
    .to_vec()
}

fn grid_row(rank: usize, e: &GridEntry) -> Vec<String> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, fmt_f64);
    vec![
        rank.to_string(),
        e.index.to_string(),
        e.gru_units.to_string(),
        fmt_f64(e.dropout_rate),
        fmt_f64(e.learning_rate),
        e.batch_size.to_string(),
        e.seed.to_string(),
        e.status.clone(),
        e.best_epoch.to_string(),
        e.epochs_run.to_string(),
        opt(e.val_acc),
        opt(e.val_loss),
        e.error.clone(),
    ]
}

fn gridsearch(ctx: &Ctx) -> CliResult<Io> {
    let splits = load_splits(ctx, "gridsearch")?;
    let tr = Dataset::from_rows(&splits.train_balanced).stage("gridsearch")?;
    let va = Dataset::from_rows(&splits.validation).stage("gridsearch")?;
    let space = ctx.cfg.grid.space();
    let outcome = grid::grid_search(&space, &ctx.cfg.train, ctx.cfg.seed, &tr, &va, ctx.exec).stage("gridsearch")?;
    let mut rank = vec![0; outcome.log.len()];
    for (r, &i) in outcome.report.leaderboard.iter().enumerate() {
        rank[i] = r + 1;
    }
    // Log in enumeration order; the rank column carries the leaderboard.
    let rows = outcome.log.iter().map(|e| grid_row(rank[e.index], e));
    aio::write_table(&ctx.path(aio::GRID_LOG), &grid_header(), rows)?;
    aio::write_json(&ctx.path(aio::GRID_REPORT), &outcome.report)?;
    log::info!("{}", outcome.report.note);
    let best = outcome
        .best
        .ok_or_else(|| CliError::runtime("gridsearch", "every grid configuration failed"))?;
    emit_model(ctx, "gridsearch", &best, &splits)?;
    let mut outputs = vec![aio::GRID_LOG, aio::GRID_REPORT];
    outputs.extend(MODEL_OUTPUTS);
    Ok(Io { inputs: vec![aio::FEATURES, aio::TRAIN_BALANCED], outputs })
}

fn xy(rows: &[FeatureRow]) -> (Vec<Vec<f64>>, Vec<u8>) {
    (rows.iter().map(|r| r.features.clone()).collect(), rows.iter().map(|r| r.label).collect())
}

fn run_baselines(ctx: &Ctx) -> CliResult<Io> {
    const S: &str = "baselines";
    let splits = load_splits(ctx, S)?;
    let net = load_model(ctx, S)?;
    let (x_tr, y_tr) = xy(&splits.train_balanced);
    let (x_te, y_te) = xy(&splits.test);
    let cfg = &ctx.cfg.baselines;

    let rf = forest::train_random_forest(&x_tr, &y_tr, &cfg.forest, ctx.exec).stage(S)?;
    let rf_pred: Vec<u8> = x_te.iter().map(|x| rf.predict(x)).collect();
    let gb = gbt::train_gbt(&x_tr, &y_tr, &cfg.gbt).stage(S)?;
    let gb_pred: Vec<u8> = x_te.iter().map(|x| gb.predict(x)).collect();
    let latent = baselines::evaluate_latent_features(&net, &splits.train_balanced, &splits.test, &cfg.gbt).stage(S)?;

    let report = json!({
        "n_train": x_tr.len(),
        "n_test": x_te.len(),
        "random_forest": evalcore::classification_metrics(&y_te, &rf_pred).stage(S)?,
        "gbt_raw": evalcore::classification_metrics(&y_te, &gb_pred).stage(S)?,
        "latent": latent,
    });
    aio::write_json(&ctx.path(aio::BASELINES), &report)?;
    aio::write_json(&ctx.path(aio::FOREST_TREES), &rf)?;
    aio::write_json(&ctx.path(aio::GBT_RAW_TREES), &gb)?;
    Ok(Io {
        inputs: vec![aio::FEATURES, aio::TRAIN_BALANCED, aio::CHECKPOINT],
        outputs: vec![aio::BASELINES, aio::FOREST_TREES, aio::GBT_RAW_TREES],
    })
}

pub fn correlation_header() -> Vec<String> {
    ["feature", "pc", "r"].map(String::from).to_vec()
}

pub fn shapley_summary_header() -> Vec<String> {
    ["rank", "feature", "mean_abs_phi"].map(String::from).to_vec()
}

fn run_explain(ctx: &Ctx) -> CliResult<Io> {
    const S: &str = "explain";
    let splits = load_splits(ctx, S)?;
    let net = load_model(ctx, S)?;
    let pca: PcaModel = aio::read_json(&ctx.need(aio::PCA_MODEL, S)?)?;
    let all: Vec<FeatureRow> = aio::read_features(&ctx.path(aio::FEATURES))?;
    let report: AttributionReport = explain::explain_model(
        &net,
        &pca,
        &all,
        &splits.train_real,
        &splits.test,
        &ctx.cfg.explain,
        ctx.cfg.seed,
        ctx.exec,
    )
    .stage(S)?;
    aio::write_json(&ctx.path(aio::ATTRIBUTIONS), &report)?;

    let rows = report.correlation.values.iter().enumerate().flat_map(|(u, row)| {
        row.iter().enumerate().map(move |(j, r)| vec![u.to_string(), (j + 1).to_string(), fmt_f64(*r)])
    });
    aio::write_table(&ctx.path(aio::CORRELATION), &correlation_header(), rows)?;

    let mut order: Vec<usize> = (0..report.mean_abs_shapley.len()).collect();
    order.sort_by(|&a, &b| report.mean_abs_shapley[b].total_cmp(&report.mean_abs_shapley[a]).then(a.cmp(&b)));
    let rows = order
        .iter()
        .enumerate()
        .map(|(rank, &u)| vec![(rank + 1).to_string(), u.to_string(), fmt_f64(report.mean_abs_shapley[u])]);
    aio::write_table(&ctx.path(aio::SHAPLEY_SUMMARY), &shapley_summary_header(), rows)?;
    Ok(Io {
        inputs: vec![aio::FEATURES, aio::TRAIN_BALANCED, aio::CHECKPOINT, aio::PCA_MODEL],
        outputs: vec![aio::ATTRIBUTIONS, aio::CORRELATION, aio::SHAPLEY_SUMMARY],
    })
}

pub fn effort_header() -> Vec<String> {
    ["participant_id", "session", "segment", "source", "mean_hbo", "mean_score", "p_z", "ce_z", "rne", "rni"]
        .map(String::from)
        .to_vec()
}

pub fn scatter_header() -> Vec<String> {
    ["metric", "participant_id", "session", "segment", "actual", "predicted"].map(String::from).to_vec()
}

fn effort_row(r: &EffortRecord) -> Vec<String> {
    vec![
        r.participant_id.clone(),
        r.session.to_string(),
        r.segment.to_string(),
        r.source.name().to_string(),
        fmt_f64(r.mean_hbo),
        fmt_f64(r.mean_score),
        fmt_f64(r.p_z),
        fmt_f64(r.ce_z),
        fmt_f64(r.rne),
        fmt_f64(r.rni),
    ]
}

fn effort(ctx: &Ctx) -> CliResult<Io> {
    const S: &str = "effort";
    let trials = aio::read_trials(&ctx.need(aio::TRIALS, S)?)?;
    let test: Vec<_> = trials
        .into_iter()
        .filter(|t| ctx.cfg.prep.test_participants.contains(&t.participant_id))
        .collect();
    if test.is_empty() {
        return Err(CliError::validation(S, "no trials belong to the test participants"));
    }
    let mut inputs = vec![aio::TRIALS];
    let predictions: HashMap<(String, usize), u8> = match ctx.predictions {
        PredictionSource::Model => {
            inputs.push(aio::PREDICTIONS);
            aio::read_predictions(&ctx.need(aio::PREDICTIONS, S)?)?
                .into_iter()
                .map(|p| ((p.participant_id, p.question_id), p.predicted))
                .collect()
        }
        PredictionSource::Oracle => test.iter().map(|t| ((t.participant_id.clone(), t.question_id), t.label)).collect(),
    };
    let cfg = &ctx.cfg.effort;
    let actual = evalcore::effort_records(&evalcore::actual_segments(&test).stage(S)?, Source::Actual, cfg).stage(S)?;
    let predicted = evalcore::effort_records(
        &evalcore::predicted_segments(&test, &predictions).stage(S)?,
        Source::Predicted,
        cfg,
    )
    .stage(S)?;
    let comparison = evalcore::compare_effort(&actual, &predicted).stage(S)?;

    aio::write_table(&ctx.path(aio::EFFORT), &effort_header(), actual.iter().chain(&predicted).map(effort_row))?;
    let rows = comparison.scatter.iter().map(|p| {
        vec![
            p.metric.clone(),
            p.participant_id.clone(),
            p.session.to_string(),
            p.segment.to_string(),
            fmt_f64(p.actual),
            fmt_f64(p.predicted),
        ]
    });
    aio::write_table(&ctx.path(aio::SCATTER), &scatter_header(), rows)?;
    let undefined: Vec<String> = actual
        .iter()
        .chain(&predicted)
        .filter(|r| r.ce_z_undefined)
        .map(|r| format!("{}/{}/session{}/segment{}", r.source.name(), r.participant_id, r.session, r.segment))
        .collect();
    let report = json!({
        "mode": cfg.mode,
        "predictions": ctx.predictions.name(),
        "participants": comparison.participants,
        "pooled": comparison.pooled,
        "ce_z_undefined": undefined,
    });
    aio::write_json(&ctx.path(aio::EFFORT_REPORT), &report)?;
    Ok(Io { inputs, outputs: vec![aio::EFFORT, aio::SCATTER, aio::EFFORT_REPORT] })
}

fn pick(v: &Value, path: &[&str]) -> Value {
    path.iter().fold(v, |acc, k| &acc[*k]).clone()
}

/// Headline numbers gathered from the stage reports. Contains no timings.
pub fn build_summary(ctx: &Ctx, fit_stage: &str) -> CliResult<Value> {
    let read = |name: &str| -> CliResult<Value> { aio::read_json(&ctx.need(name, "pipeline")?) };
    let metrics = read(aio::METRICS)?;
    let base = read(aio::BASELINES)?;
    let effort = read(aio::EFFORT_REPORT)?;
    let shapley = aio::read_records(&ctx.path(aio::SHAPLEY_SUMMARY))?;
    let top: Vec<Value> = shapley
        .iter()
        .take(3)
        .map(|r| json!({"feature": r["feature"].parse::<usize>().unwrap_or(0), "mean_abs_phi": r["mean_abs_phi"].parse::<f64>().unwrap_or(f64::NAN)}))
        .collect();
    Ok(json!({
        "seed": ctx.cfg.seed,
        "architecture": pick(&metrics, &["architecture"]),
        "model_stage": fit_stage,
        "best_epoch": pick(&metrics, &["best_epoch"]),
        "epochs_run": pick(&metrics, &["epochs_run"]),
        "test": {
            "accuracy": pick(&metrics, &["test", "accuracy"]),
            "precision": pick(&metrics, &["test", "precision"]),
            "recall": pick(&metrics, &["test", "recall"]),
            "f1": pick(&metrics, &["test", "f1"]),
            "majority_rate": pick(&metrics, &["majority_rate"]),
        },
        "baselines": {
            "random_forest_accuracy": pick(&base, &["random_forest", "accuracy"]),
            "gbt_raw_accuracy": pick(&base, &["latent", "raw_accuracy"]),
            "gbt_latent_accuracy": pick(&base, &["latent", "latent_accuracy"]),
            "latent_delta": pick(&base, &["latent", "delta"]),
        },
        "shapley_top": top,
        "effort": {
            "mode": pick(&effort, &["mode"]),
            "predictions": pick(&effort, &["predictions"]),
            "participants": pick(&effort, &["participants"]),
            "pooled": pick(&effort, &["pooled"]),
        },
    }))
}

/// Keys every summary must carry, as JSON pointer paths.
pub const SUMMARY_KEYS: [&str; 16] = [
    "/seed",
    "/architecture",
    "/test/accuracy",
    "/test/precision",
    "/test/recall",
    "/test/f1",
    "/test/majority_rate",
    "/baselines/random_forest_accuracy",
    "/baselines/gbt_raw_accuracy",
    "/baselines/gbt_latent_accuracy",
    "/baselines/latent_delta",
    "/effort/mode",
    "/effort/participants",
    "/effort/pooled/rne/mae",
    "/effort/pooled/rni/mae",
    "/effort/pooled/rne/r",
];

/// Missing summary keys; empty when the schema is satisfied.
pub fn missing_summary_keys(summary: &Value) -> Vec<&'static str> {
    SUMMARY_KEYS.iter().copied().filter(|k| summary.pointer(k).is_none()).collect()
}
