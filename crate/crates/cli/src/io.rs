//! Artifact files: CSV tables, JSON reports and SHA-256 digests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cogeffort::dataprep::FeatureRow;
use cogeffort::synthgen::{HboMatrix, Trial};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TRIALS: &str = "trials.csv";
pub const FEATURES: &str = "features.csv";
pub const TRAIN_BALANCED: &str = "train_balanced.csv";
pub const PCA_MODEL: &str = "pca_model.json";
pub const CHECKPOINT: &str = "model.ckpt";
pub const HISTORY: &str = "history.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const METRICS: &str = "metrics.json";
pub const GRID_LOG: &str = "grid_log.csv";
pub const GRID_REPORT: &str = "grid_report.json";
pub const BASELINES: &str = "baselines.json";
pub const FOREST_TREES: &str = "forest_trees.json";
pub const GBT_RAW_TREES: &str = "gbt_raw_trees.json";
pub const ATTRIBUTIONS: &str = "attributions.json";
pub const CORRELATION: &str = "correlation.csv";
pub const SHAPLEY_SUMMARY: &str = "shapley_summary.csv";
pub const EFFORT: &str = "effort.csv";
pub const EFFORT_REPORT: &str = "effort_report.json";
pub const SCATTER: &str = "scatter.csv";
pub const SUMMARY: &str = "summary.json";
pub const MANIFEST: &str = "manifest.json";

/// Shortest round-trip decimal; empty for NaN.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn parse_f64(s: &str, file: &str, line: usize) -> CliResult<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| CliError::validation("io", format!("{file} line {line}: bad number {s:?}")))
}

fn parse_int<T: std::str::FromStr>(s: &str, file: &str, line: usize) -> CliResult<T> {
    s.parse().map_err(|_| CliError::validation("io", format!("{file} line {line}: bad integer {s:?}")))
}

pub fn require(dir: &Path, name: &str, stage: &str) -> CliResult<std::path::PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::validation(stage, format!("missing upstream artifact {name} in {}", dir.display())))
    }
}

fn io_err(stage: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::runtime(stage, format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err("io", path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err("io", path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err("io", path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation("io", format!("{}: {e}", path.display())))
}

/// Writes a header and rows of pre-formatted fields.
pub fn write_table(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err("io", path, e))?;
    w.write_record(header).map_err(|e| io_err("io", path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err("io", path, e))?;
    }
    w.flush().map_err(|e| io_err("io", path, e))
}

/// Reads a CSV, checking the header exactly. Returns `(line_number, fields)`.
pub fn read_table(path: &Path, header: &[String]) -> CliResult<Vec<(usize, Vec<String>)>> {
    let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err("io", path, e))?;
    let got: Vec<String> = r.headers().map_err(|e| io_err("io", path, e))?.iter().map(str::to_string).collect();
    if got != header {
        return Err(CliError::validation("io", format!("{name}: unexpected header {}", got.join(","))));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| CliError::validation("io", format!("{name}: {e}")))?;
            Ok((i + 2, rec.iter().map(str::to_string).collect()))
        })
        .collect()
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| io_err("io", path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn numbered(prefix: char, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i:02}")).collect()
}

pub fn trials_header(n_optodes: usize) -> Vec<String> {
    let mut h: Vec<String> = ["participant_id", "question_id", "session", "segment", "t_index"].map(String::from).to_vec();
    h.extend(numbered('o', n_optodes));
    h.extend(["label".to_string(), "score".to_string()]);
    h
}

/// Long format: one row per trial sample.
pub fn write_trials(path: &Path, trials: &[Trial]) -> CliResult<()> {
    let n_opt = trials.first().map_or(cogeffort::N_OPTODES, |t| t.hbo.cols());
    let rows = trials.iter().flat_map(|t| {
        (0..t.hbo.rows()).map(move |k| {
            let mut r = vec![
                t.participant_id.clone(),
                t.question_id.to_string(),
                t.session.to_string(),
                t.segment.to_string(),
                k.to_string(),
            ];
            r.extend(t.hbo.row(k).iter().map(|v| fmt_f64(*v)));
            r.push(t.label.to_string());
            r.push(fmt_f64(t.score));
            r
        })
    });
    write_table(path, &trials_header(n_opt), rows)
}

pub fn read_trials(path: &Path) -> CliResult<Vec<Trial>> {
    let header = trials_header(cogeffort::N_OPTODES);
    let rows = read_table(path, &header)?;
    let n_opt = cogeffort::N_OPTODES;
    let mut trials: Vec<Trial> = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    let finish = |trials: &mut Vec<Trial>, data: &mut Vec<f64>| -> CliResult<()> {
        if let Some(t) = trials.last_mut() {
            let samples = data.len() / n_opt;
            t.hbo = HboMatrix::new(samples, n_opt, std::mem::take(data))
                .map_err(|e| CliError::validation("io", e.to_string()))?;
        }
        Ok(())
    };
    for (line, f) in rows {
        let pid = f[0].clone();
        let question_id: usize = parse_int(&f[1], TRIALS, line)?;
        let t_index: usize = parse_int(&f[4], TRIALS, line)?;
        let label: u8 = parse_int(&f[5 + n_opt], TRIALS, line)?;
        let score = parse_f64(&f[6 + n_opt], TRIALS, line)?;
        let same = trials.last().is_some_and(|t| t.participant_id == pid && t.question_id == question_id);
        if !same {
            finish(&mut trials, &mut data)?;
            if t_index != 0 {
                return Err(CliError::validation("io", format!("{TRIALS} line {line}: trial must start at t_index 0")));
            }
            trials.push(Trial {
                participant_id: pid,
                question_id,
                session: parse_int(&f[2], TRIALS, line)?,
                segment: parse_int(&f[3], TRIALS, line)?,
                hbo: HboMatrix::filled(0, n_opt, 0.0),
                label,
                score,
            });
        } else if t_index != data.len() / n_opt {
            return Err(CliError::validation("io", format!("{TRIALS} line {line}: t_index out of sequence")));
        }
        for s in &f[5..5 + n_opt] {
            data.push(parse_f64(s, TRIALS, line)?);
        }
    }
    finish(&mut trials, &mut data)?;
    if trials.is_empty() {
        return Err(CliError::validation("io", format!("{TRIALS} has no rows")));
    }
    Ok(trials)
}

pub fn features_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = ["participant_id", "question_id", "session", "segment"].map(String::from).to_vec();
    h.extend(numbered('f', n));
    h.push("label".into());
    h
}

pub fn write_features(path: &Path, rows: &[FeatureRow]) -> CliResult<()> {
    let n = rows.first().map_or(cogeffort::N_COMPONENTS, |r| r.features.len());
    let table = rows.iter().map(|r| {
        let mut f = vec![r.participant_id.clone(), r.question_id.to_string(), r.session.to_string(), r.segment.to_string()];
        f.extend(r.features.iter().map(|v| fmt_f64(*v)));
        f.push(r.label.to_string());
        f
    });
    write_table(path, &features_header(n), table)
}

pub fn read_features(path: &Path) -> CliResult<Vec<FeatureRow>> {
    let n = cogeffort::N_COMPONENTS;
    let name = FEATURES;
    read_table(path, &features_header(n))?
        .into_iter()
        .map(|(line, f)| {
            Ok(FeatureRow {
                participant_id: f[0].clone(),
                question_id: parse_int(&f[1], name, line)?,
                session: parse_int(&f[2], name, line)?,
                segment: parse_int(&f[3], name, line)?,
                features: f[4..4 + n].iter().map(|s| parse_f64(s, name, line)).collect::<CliResult<_>>()?,
                label: parse_int(&f[4 + n], name, line)?,
            })
        })
        .collect()
}

/// One test-set prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub participant_id: String,
    pub question_id: usize,
    pub session: usize,
    pub segment: usize,
    pub label: u8,
    pub predicted: u8,
    pub prob_correct: f64,
}

pub fn predictions_header() -> Vec<String> {
    ["participant_id", "question_id", "session", "segment", "label", "predicted", "prob_correct"].map(String::from).to_vec()
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> CliResult<()> {
    let rows = preds.iter().map(|p| {
        vec![
            p.participant_id.clone(),
            p.question_id.to_string(),
            p.session.to_string(),
            p.segment.to_string(),
            p.label.to_string(),
            p.predicted.to_string(),
            fmt_f64(p.prob_correct),
        ]
    });
    write_table(path, &predictions_header(), rows)
}

pub fn read_predictions(path: &Path) -> CliResult<Vec<Prediction>> {
    let name = PREDICTIONS;
    read_table(path, &predictions_header())?
        .into_iter()
        .map(|(line, f)| {
            Ok(Prediction {
                participant_id: f[0].clone(),
                question_id: parse_int(&f[1], name, line)?,
                session: parse_int(&f[2], name, line)?,
                segment: parse_int(&f[3], name, line)?,
                label: parse_int(&f[4], name, line)?,
                predicted: parse_int(&f[5], name, line)?,
                prob_correct: parse_f64(&f[6], name, line)?,
            })
        })
        .collect()
}

/// Reads a generic CSV into rows keyed by header name.
pub fn read_records(path: &Path) -> CliResult<Vec<BTreeMap<String, String>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err("io", path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| io_err("io", path, e))?.iter().map(str::to_string).collect();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| io_err("io", path, e))?;
            Ok(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use cogeffort::synthgen::{generate_cohort, CohortSpec};

    #[test]
    fn trials_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CohortSpec { n_participants: 2, missing_fraction: 0.01, ..Default::default() };
        let trials = generate_cohort(&spec).unwrap();
        let p = dir.path().join(TRIALS);
        write_trials(&p, &trials).unwrap();
        let back = read_trials(&p).unwrap();
        assert_eq!(back.len(), trials.len());
        for (a, b) in trials.iter().zip(&back) {
            assert_eq!(a.participant_id, b.participant_id);
            assert_eq!((a.question_id, a.session, a.segment, a.label), (b.question_id, b.session, b.segment, b.label));
            assert_eq!(a.score, b.score);
            for (x, y) in a.hbo.as_slice().iter().zip(b.hbo.as_slice()) {
                assert!(x == y || (x.is_nan() && y.is_nan()));
            }
        }
    }

    #[test]
    fn headers_exact() {
        assert_eq!(trials_header(16).join(","), "participant_id,question_id,session,segment,t_index,o01,o02,o03,o04,o05,o06,o07,o08,o09,o10,o11,o12,o13,o14,o15,o16,label,score");
        assert_eq!(features_header(12).join(","), "participant_id,question_id,session,segment,f01,f02,f03,f04,f05,f06,f07,f08,f09,f10,f11,f12,label");
    }

    #[test]
    fn missing_artifact_named() {
        let dir = tempfile::tempdir().unwrap();
        let e = require(dir.path(), TRIALS, "prep").unwrap_err();
        assert!(e.message.contains("trials.csv"));
        assert_eq!(e.exit_code(), 1);
    }
}
