//! Raw trials to model-ready feature rows.
//!
//! Order of operations: impute → (optional) detrend + smooth → per-optode time
//! mean → participant-wise split → standardize on train → PCA on train →
//! project every partition → SMOTE on the training partition only.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::tensor::Tensor;
use crate::rng::{self, tag};
use crate::synthgen::Trial;
use crate::{N_COMPONENTS, N_OPTODES};

/// Participant id given to SMOTE rows.
pub const SYNTHETIC_ID: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub participant_id: String,
    pub question_id: usize,
    pub session: usize,
    pub segment: usize,
    pub features: Vec<f64>,
    pub label: u8,
}

impl FeatureRow {
    pub fn is_synthetic(&self) -> bool {
        self.participant_id == SYNTHETIC_ID
    }
}

/// Anything that belongs to a participant.
pub trait ParticipantOwned {
    fn participant_id(&self) -> &str;
}

impl ParticipantOwned for FeatureRow {
    fn participant_id(&self) -> &str {
        &self.participant_id
    }
}

impl ParticipantOwned for Trial {
    fn participant_id(&self) -> &str {
        &self.participant_id
    }
}

/// Replaces each missing cell with the mean of the finite cells in its optode
/// column of the same trial.
pub fn impute_missing(trial: &Trial) -> Result<Trial> {
    let mut out = trial.clone();
    for o in 0..trial.hbo.cols() {
        let col = trial.hbo.column(o);
        if col.iter().all(|v| v.is_finite()) {
            continue;
        }
        let finite: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            return Err(Error::AllMissingColumn { optode: o + 1 });
        }
        let fill = finite.iter().sum::<f64>() / finite.len() as f64;
        let filled: Vec<f64> = col.iter().map(|&v| if v.is_finite() { v } else { fill }).collect();
        out.hbo.set_column(o, &filled);
    }
    Ok(out)
}

/// Least-squares linear detrend (mean preserved) followed by a centered moving
/// average that truncates at the edges.
pub fn clean_series(series: &[f64], ma_window: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if ma_window == 0 || ma_window.is_multiple_of(2) || ma_window > n {
        return Err(Error::Config(format!(
            "ma_window must be odd and in 1..={n}, got {ma_window}"
        )));
    }
    let nf = n as f64;
    let t_mean = (nf - 1.0) / 2.0;
    let y_mean = series.iter().sum::<f64>() / nf;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (i, y) in series.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sty += dt * (y - y_mean);
        stt += dt * dt;
    }
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let detrended: Vec<f64> =
        series.iter().enumerate().map(|(i, y)| y - slope * (i as f64 - t_mean)).collect();

    let half = ma_window / 2;
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            detrended[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect())
}

/// Applies [`clean_series`] to every optode column.
pub fn clean_trial(trial: &Trial, ma_window: usize) -> Result<Trial> {
    let mut out = trial.clone();
    for o in 0..trial.hbo.cols() {
        let cleaned = clean_series(&trial.hbo.column(o), ma_window)?;
        out.hbo.set_column(o, &cleaned);
    }
    Ok(out)
}

/// Per-optode time mean.
pub fn aggregate_trial(trial: &Trial) -> Result<Vec<f64>> {
    if trial.hbo.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "trial {}/Q{} has missing cells; impute first",
            trial.participant_id, trial.question_id
        )));
    }
    let rows = trial.hbo.rows() as f64;
    let mut sums = vec![0.0; trial.hbo.cols()];
    for r in 0..trial.hbo.rows() {
        for (s, v) in sums.iter_mut().zip(trial.hbo.row(r)) {
            *s += v;
        }
    }
    Ok(sums.into_iter().map(|s| s / rows).collect())
}

pub fn to_feature_row(trial: &Trial) -> Result<FeatureRow> {
    Ok(FeatureRow {
        participant_id: trial.participant_id.clone(),
        question_id: trial.question_id,
        session: trial.session,
        segment: trial.segment,
        features: aggregate_trial(trial)?,
        label: trial.label,
    })
}

/// Z-score statistics fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviations.
    pub scale: Vec<f64>,
}

/// Columns whose scale falls below this are mapped to zero.
pub const MIN_SCALE: f64 = 1e-8;

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InsufficientData("standardize: no training rows".into()))?;
        let d = first.len();
        check_widths(rows, d)?;
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mean.len() {
            return Err(Error::Shape(format!(
                "standardize: expected {} features, got {}",
                self.mean.len(),
                row.len()
            )));
        }
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| if *s < MIN_SCALE { 0.0 } else { (v - m) / s })
            .collect())
    }
}

fn check_widths(rows: &[Vec<f64>], d: usize) -> Result<()> {
    match rows.iter().position(|r| r.len() != d) {
        Some(i) => Err(Error::Shape(format!("row {i} has {} features, expected {d}", rows[i].len()))),
        None => Ok(()),
    }
}

/// Fits statistics on `train` and transforms both sets with them.
pub fn standardize(
    train: &[FeatureRow],
    other: &[FeatureRow],
) -> Result<(Vec<FeatureRow>, Vec<FeatureRow>, Standardizer)> {
    let feats: Vec<Vec<f64>> = train.iter().map(|r| r.features.clone()).collect();
    let st = Standardizer::fit(&feats)?;
    let apply = |rows: &[FeatureRow]| -> Result<Vec<FeatureRow>> {
        rows.iter()
            .map(|r| Ok(FeatureRow { features: st.transform(&r.features)?, ..r.clone() }))
            .collect()
    };
    Ok((apply(train)?, apply(other)?, st))
}

/// Standardization plus principal-component loadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `d × k`, row-major: `loadings[o][j]` is optode `o`'s weight in PC `j`.
    pub loadings: Vec<Vec<f64>>,
    /// Non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn n_inputs(&self) -> usize {
        self.loadings.len()
    }

    pub fn n_components(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn loading_column(&self, j: usize) -> Vec<f64> {
        self.loadings.iter().map(|row| row[j]).collect()
    }

    pub fn with_standardizer(mut self, st: &Standardizer) -> Self {
        self.mean = st.mean.clone();
        self.scale = st.scale.clone();
        self
    }

    pub fn standardizer(&self) -> Standardizer {
        Standardizer { mean: self.mean.clone(), scale: self.scale.clone() }
    }

    /// Standardizes a raw row and projects it.
    pub fn transform_raw(&self, row: &[f64]) -> Result<Vec<f64>> {
        pca_project(self, &self.standardizer().transform(row)?)
    }

    /// Maps component scores back to the (standardized) input space.
    pub fn back_project(&self, scores: &[f64]) -> Result<Vec<f64>> {
        if scores.len() != self.n_components() {
            return Err(Error::Shape(format!(
                "back_project: expected {} scores, got {}",
                self.n_components(),
                scores.len()
            )));
        }
        Ok(self
            .loadings
            .iter()
            .map(|row| row.iter().zip(scores).map(|(l, s)| l * s).sum())
            .collect())
    }
}

/// Top-`k` eigenvectors of the sample covariance of already-standardized rows.
///
/// Each loading column is flipped so that its largest-magnitude entry is
/// non-negative. Eigenvalues are clamped at zero.
pub fn pca_fit(rows: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let d = rows.first().map(|r| r.len()).unwrap_or(0);
    if d == 0 {
        return Err(Error::InsufficientData("pca: no rows".into()));
    }
    check_widths(rows, d)?;
    if k == 0 || k > d {
        return Err(Error::Config(format!("pca: k must lie in 1..={d}, got {k}")));
    }
    if rows.len() < k || rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "pca: need at least {} rows, got {}",
            k.max(2),
            rows.len()
        )));
    }
    let cov = sample_covariance(rows);
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[i][j]));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut loadings = vec![vec![0.0; k]; d];
    let mut explained_variance = Vec::with_capacity(k);
    for (j, &idx) in order.iter().take(k).enumerate() {
        let mut col: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        col.iter_mut().for_each(|v| *v /= norm);
        apply_sign_convention(&mut col);
        for (o, v) in col.into_iter().enumerate() {
            loadings[o][j] = v;
        }
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(PcaModel { mean: vec![0.0; d], scale: vec![1.0; d], loadings, explained_variance })
}

/// Covariance with the `n − 1` denominator.
pub fn sample_covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in i..d {
                cov[i][j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= n - 1.0;
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

fn apply_sign_convention(col: &mut [f64]) {
    let pivot = col
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, *v) } else { best })
        .1;
    if pivot < 0.0 {
        col.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Component scores of an already-standardized row.
pub fn pca_project(model: &PcaModel, row: &[f64]) -> Result<Vec<f64>> {
    if row.len() != model.n_inputs() {
        return Err(Error::Shape(format!(
            "pca_project: expected {} features, got {}",
            model.n_inputs(),
            row.len()
        )));
    }
    let k = model.n_components();
    let mut scores = vec![0.0; k];
    for (v, lrow) in row.iter().zip(&model.loadings) {
        for (s, l) in scores.iter_mut().zip(lrow) {
            *s += l * v;
        }
    }
    Ok(scores)
}

/// Participant-wise partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_participants: Vec<String>,
    pub validation_participants: Vec<String>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_participants: vec!["P8".into(), "P11".into(), "P16".into()],
            validation_participants: vec!["P4".into(), "P12".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partitions<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

/// Splits rows by participant, preserving row order within each set.
pub fn split_by_participant<T: ParticipantOwned>(
    rows: Vec<T>,
    spec: &SplitSpec,
) -> Result<Partitions<T>> {
    let test: BTreeSet<&str> = spec.test_participants.iter().map(String::as_str).collect();
    let val: BTreeSet<&str> = spec.validation_participants.iter().map(String::as_str).collect();
    if let Some(dup) = test.intersection(&val).next() {
        return Err(Error::Config(format!("participant {dup} is in both test and validation")));
    }
    let present: BTreeSet<&str> = rows.iter().map(|r| r.participant_id()).collect();
    let unknown: Vec<&str> = test.union(&val).filter(|p| !present.contains(*p)).copied().collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown participant id(s): {}", unknown.join(", "))));
    }
    let (test, val): (BTreeSet<String>, BTreeSet<String>) = (
        test.into_iter().map(String::from).collect(),
        val.into_iter().map(String::from).collect(),
    );
    let mut parts = Partitions { train: Vec::new(), validation: Vec::new(), test: Vec::new() };
    for r in rows {
        let pid = r.participant_id();
        if test.contains(pid) {
            parts.test.push(r);
        } else if val.contains(pid) {
            parts.validation.push(r);
        } else {
            parts.train.push(r);
        }
    }
    Ok(parts)
}

/// Where a synthetic SMOTE row came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoteOrigin {
    /// Index into the input rows.
    pub seed_row: usize,
    /// Index into the input rows.
    pub neighbor_row: usize,
    pub gap: f64,
}

/// Oversamples the minority class to the majority count. Returns the input rows
/// followed by the synthetic rows.
pub fn smote(rows: &[FeatureRow], k_neighbors: usize, seed: u64) -> Result<Vec<FeatureRow>> {
    smote_with_origins(rows, k_neighbors, seed).map(|(rows, _)| rows)
}

/// [`smote`] plus the provenance of each synthetic row.
///
/// Seed rows are visited round-robin in input order; each picks one of its
/// `k` nearest same-class neighbours (Euclidean, ties by index) uniformly at
/// random and interpolates with a uniform gap in `[0, 1)`.
pub fn smote_with_origins(
    rows: &[FeatureRow],
    k_neighbors: usize,
    seed: u64,
) -> Result<(Vec<FeatureRow>, Vec<SmoteOrigin>)> {
    if k_neighbors == 0 {
        return Err(Error::Config("smote_k must be at least 1".into()));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_class.entry(r.label).or_default().push(i);
    }
    let count = |c: u8| by_class.get(&c).map_or(0, Vec::len);
    let (n0, n1) = (count(0), count(1));
    if n0 == n1 {
        return Ok((rows.to_vec(), Vec::new()));
    }
    let (minority_label, majority_n) = if n0 < n1 { (0u8, n1) } else { (1u8, n0) };
    let minority = by_class.remove(&minority_label).unwrap_or_default();
    if minority.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "smote: minority class {minority_label} has {} row(s), need at least 2",
            minority.len()
        )));
    }
    let k = if k_neighbors > minority.len() - 1 {
        warn!(
            "smote: k_neighbors {k_neighbors} clamped to {} (minority size − 1)",
            minority.len() - 1
        );
        minority.len() - 1
    } else {
        k_neighbors
    };

    let neighbors: Vec<Vec<usize>> = minority
        .iter()
        .map(|&i| nearest_same_class(rows, &minority, i, k))
        .collect();

    let mut stream = rng::stream(seed, &[tag::SMOTE]);
    let n_new = majority_n - minority.len();
    let mut out = rows.to_vec();
    let mut origins = Vec::with_capacity(n_new);
    for j in 0..n_new {
        let slot = j % minority.len();
        let seed_row = minority[slot];
        let neighbor_row = neighbors[slot][stream.random_range(0..k)];
        let gap: f64 = stream.random();
        let a = &rows[seed_row].features;
        let b = &rows[neighbor_row].features;
        out.push(FeatureRow {
            participant_id: SYNTHETIC_ID.into(),
            question_id: 0,
            session: 0,
            segment: 0,
            features: a.iter().zip(b).map(|(x, y)| x + gap * (y - x)).collect(),
            label: minority_label,
        });
        origins.push(SmoteOrigin { seed_row, neighbor_row, gap });
    }
    Ok((out, origins))
}

fn nearest_same_class(rows: &[FeatureRow], class: &[usize], of: usize, k: usize) -> Vec<usize> {
    let x = &rows[of].features;
    let mut d: Vec<(f64, usize)> = class
        .iter()
        .filter(|&&j| j != of)
        .map(|&j| {
            let dist: f64 =
                x.iter().zip(&rows[j].features).map(|(a, b)| (a - b) * (a - b)).sum();
            (dist, j)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Stacks rows into an `(n, 1, 12)` batch.
pub fn reshape_for_model(rows: &[FeatureRow]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(rows.len() * N_COMPONENTS);
    for (i, r) in rows.iter().enumerate() {
        if r.features.len() != N_COMPONENTS {
            return Err(Error::Shape(format!(
                "row {i} has {} features, model input needs {N_COMPONENTS}",
                r.features.len()
            )));
        }
        data.extend_from_slice(&r.features);
    }
    Tensor::new(vec![rows.len(), 1, N_COMPONENTS], data)
}

/// Inverse of [`reshape_for_model`] on the feature values.
pub fn flatten_batch(batch: &Tensor) -> Vec<Vec<f64>> {
    let width = batch.shape().last().copied().unwrap_or(0).max(1);
    batch.data().chunks(width).map(<[f64]>::to_vec).collect()
}

/// Preparation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    pub pca_components: usize,
    pub smote_k: usize,
    pub test_participants: Vec<String>,
    pub validation_participants: Vec<String>,
    /// Moving-average window for detrend + smoothing; 0 disables cleaning.
    pub ma_window: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        let split = SplitSpec::default();
        Self {
            pca_components: N_COMPONENTS,
            smote_k: 5,
            test_participants: split.test_participants,
            validation_participants: split.validation_participants,
            ma_window: 0,
        }
    }
}

impl PrepConfig {
    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            test_participants: self.test_participants.clone(),
            validation_participants: self.validation_participants.clone(),
        }
    }
}

/// Output of [`prepare`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub pca: PcaModel,
    /// Real rows, projected, before balancing.
    pub train: Vec<FeatureRow>,
    /// `train` followed by SMOTE rows.
    pub train_balanced: Vec<FeatureRow>,
    pub validation: Vec<FeatureRow>,
    pub test: Vec<FeatureRow>,
}

impl Prepared {
    /// Every real row in canonical (participant, question) order.
    pub fn all_real(&self) -> Vec<FeatureRow> {
        let mut rows: Vec<FeatureRow> = self
            .train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .cloned()
            .collect();
        rows.sort_by(|a, b| {
            participant_order(&a.participant_id)
                .cmp(&participant_order(&b.participant_id))
                .then(a.question_id.cmp(&b.question_id))
        });
        rows
    }
}

/// Sort key putting `P2` before `P10`.
pub fn participant_order(id: &str) -> (u64, String) {
    let digits: String = id.chars().filter(char::is_ascii_digit).collect();
    (digits.parse().unwrap_or(u64::MAX), id.to_string())
}

/// Trial rows ready for aggregation: imputed and optionally cleaned.
pub fn preprocess_trial(trial: &Trial, ma_window: usize) -> Result<Trial> {
    let t = impute_missing(trial)?;
    if ma_window > 0 {
        clean_trial(&t, ma_window)
    } else {
        Ok(t)
    }
}

/// Runs the full preparation chain.
pub fn prepare(trials: &[Trial], config: &PrepConfig, seed: u64) -> Result<Prepared> {
    let rows: Vec<FeatureRow> = trials
        .iter()
        .map(|t| to_feature_row(&preprocess_trial(t, config.ma_window)?))
        .collect::<Result<_>>()?;
    if rows.first().is_some_and(|r| r.features.len() != N_OPTODES) {
        return Err(Error::Shape(format!("trials must have {N_OPTODES} optodes")));
    }
    let parts = split_by_participant(rows, &config.split())?;
    if parts.train.is_empty() {
        return Err(Error::InsufficientData("no training participants left".into()));
    }
    let train_feats: Vec<Vec<f64>> = parts.train.iter().map(|r| r.features.clone()).collect();
    let st = Standardizer::fit(&train_feats)?;
    let standardized: Vec<Vec<f64>> =
        train_feats.iter().map(|r| st.transform(r)).collect::<Result<_>>()?;
    let pca = pca_fit(&standardized, config.pca_components)?.with_standardizer(&st);

    let project = |rows: Vec<FeatureRow>| -> Result<Vec<FeatureRow>> {
        rows.into_iter()
            .map(|r| Ok(FeatureRow { features: pca.transform_raw(&r.features)?, ..r }))
            .collect()
    };
    let train = project(parts.train)?;
    let validation = project(parts.validation)?;
    let test = project(parts.test)?;
    let train_balanced = smote(&train, config.smote_k, seed)?;
    Ok(Prepared { pca, train, train_balanced, validation, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_cohort, CohortSpec, HboMatrix};

    fn trial_with(hbo: HboMatrix) -> Trial {
        Trial {
            participant_id: "P1".into(),
            question_id: 1,
            session: 1,
            segment: 1,
            hbo,
            label: 1,
            score: 1.0,
        }
    }

    fn row(pid: &str, features: Vec<f64>, label: u8) -> FeatureRow {
        FeatureRow {
            participant_id: pid.into(),
            question_id: 1,
            session: 1,
            segment: 1,
            features,
            label,
        }
    }

    #[test]
    fn impute_single_nan() {
        let data: Vec<f64> = (0..200 * 16).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut hbo = HboMatrix::new(200, 16, data).unwrap();
        let original = hbo.clone();
        hbo.set(5, 3, f64::NAN);
        let t = impute_missing(&trial_with(hbo)).unwrap();
        let col = original.column(3);
        let expected: f64 =
            col.iter().enumerate().filter(|(i, _)| *i != 5).map(|(_, v)| v).sum::<f64>() / 199.0;
        assert_eq!(t.hbo.get(5, 3), expected);
        for r in 0..200 {
            for o in 0..16 {
                if (r, o) != (5, 3) {
                    assert_eq!(t.hbo.get(r, o), original.get(r, o));
                }
            }
        }
    }

    #[test]
    fn impute_clean_trial_unchanged() {
        let hbo = HboMatrix::filled(200, 16, 0.25);
        let t = trial_with(hbo);
        assert_eq!(impute_missing(&t).unwrap(), t);
    }

    #[test]
    fn impute_all_missing_column() {
        let mut hbo = HboMatrix::filled(10, 16, 1.0);
        for r in 0..10 {
            hbo.set(r, 7, f64::NAN);
        }
        assert!(matches!(
            impute_missing(&trial_with(hbo)),
            Err(Error::AllMissingColumn { optode: 8 })
        ));
    }

    #[test]
    fn clean_ramp_becomes_constant() {
        let ramp: Vec<f64> = (0..50).map(|t| 2.0 + 0.3 * t as f64).collect();
        let mean = ramp.iter().sum::<f64>() / 50.0;
        for w in [1, 3, 7] {
            for v in clean_series(&ramp, w).unwrap() {
                assert!((v - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clean_constant_unchanged() {
        let c = vec![3.5; 20];
        for v in clean_series(&c, 5).unwrap() {
            assert!((v - 3.5).abs() < 1e-14);
        }
    }

    #[test]
    fn clean_bad_window() {
        assert!(clean_series(&[1.0; 10], 4).is_err());
        assert!(clean_series(&[1.0; 10], 0).is_err());
        assert!(clean_series(&[1.0; 10], 11).is_err());
    }

    /// Normal equations solved with Cramer's rule, independent of the
    /// centered-time formulation used by `clean_series`.
    #[test]
    fn clean_matches_normal_equations_oracle() {
        let n = 80;
        let y: Vec<f64> =
            (0..n).map(|t| 1.5 - 0.04 * t as f64 + 0.8 * (t as f64 * 0.31).sin()).collect();
        let (mut s1, mut st, mut stt, mut sy, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, v) in y.iter().enumerate() {
            let t = t as f64;
            s1 += 1.0;
            st += t;
            stt += t * t;
            sy += v;
            sty += t * v;
        }
        let det = s1 * stt - st * st;
        let a = (sy * stt - st * sty) / det;
        let b = (s1 * sty - st * sy) / det;
        let mean = sy / s1;
        let residual: Vec<f64> =
            y.iter().enumerate().map(|(t, v)| v - (a + b * t as f64) + mean).collect();
        let got = clean_series(&y, 1).unwrap();
        for (g, e) in got.iter().zip(&residual) {
            assert!((g - e).abs() < 1e-9);
        }
        // Smoothing with w = 3 is the truncated window average of the residual.
        let smoothed = clean_series(&y, 3).unwrap();
        assert!((smoothed[0] - (residual[0] + residual[1]) / 2.0).abs() < 1e-9);
        assert!((smoothed[10] - (residual[9] + residual[10] + residual[11]) / 3.0).abs() < 1e-9);
    }

    #[test]
    fn aggregate_constant_and_toy() {
        let t = trial_with(HboMatrix::filled(200, 16, 0.7));
        assert!(aggregate_trial(&t).unwrap().iter().all(|v| (v - 0.7).abs() < 1e-12));
        let mut toy = HboMatrix::filled(2, 16, 0.0);
        toy.set(0, 0, 0.2);
        toy.set(1, 0, 0.4);
        assert!((aggregate_trial(&trial_with(toy)).unwrap()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn aggregate_matches_naive_sum() {
        let trials = generate_cohort(&CohortSpec { n_participants: 1, ..Default::default() })
            .unwrap();
        let t = &trials[3];
        let agg = aggregate_trial(t).unwrap();
        for (o, a) in agg.iter().enumerate() {
            let mut s = 0.0;
            for r in 0..200 {
                s += t.hbo.get(r, o);
            }
            assert!((a - s / 200.0).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_rejects_nan() {
        let mut hbo = HboMatrix::filled(3, 16, 1.0);
        hbo.set(0, 0, f64::NAN);
        assert!(matches!(aggregate_trial(&trial_with(hbo)), Err(Error::NonFinite(_))));
    }

    #[test]
    fn standardize_contract() {
        let train: Vec<FeatureRow> = (0..10)
            .map(|i| row("P1", vec![i as f64, 5.0, (i * i) as f64], 1))
            .collect();
        let test = vec![row("P2", vec![100.0, 5.0, 3.0], 0), row("P2", vec![120.0, 9.0, 1.0], 0)];
        let (tr, te, st) = standardize(&train, &test).unwrap();
        for c in [0, 2] {
            let col: Vec<f64> = tr.iter().map(|r| r.features[c]).collect();
            assert!(crate::stats::mean(&col).abs() < 1e-10);
            assert!((crate::stats::pop_sd(&col) - 1.0).abs() < 1e-10);
        }
        assert!(tr.iter().chain(&te).all(|r| r.features[1] == 0.0));
        assert_eq!(st.mean[0], 4.5);
        let test_mean = (te[0].features[0] + te[1].features[0]) / 2.0;
        assert!(test_mean > 1.0);
    }

    #[test]
    fn pca_axis_aligned() {
        // Column 0 has sample variance 4, the others 1, no correlation.
        let pattern = [1.0, -1.0, 1.0, -1.0];
        let mut rows = Vec::new();
        for i in 0..32 {
            let mut r = vec![0.0; 4];
            r[0] = 2.0 * pattern[i % 4] * (31.0f64 / 32.0).sqrt();
            r[1] = pattern[(i / 4) % 4] * (31.0f64 / 32.0).sqrt();
            r[2] = pattern[(i / 8) % 4] * (31.0f64 / 32.0).sqrt();
            r[3] = pattern[(i / 2) % 4] * (31.0f64 / 32.0).sqrt();
            rows.push(r);
        }
        let cov = sample_covariance(&rows);
        assert!((cov[0][0] - 4.0).abs() < 1e-12);
        let m = pca_fit(&rows, 2).unwrap();
        assert!((m.explained_variance[0] - 4.0).abs() < 1e-8);
        let first = m.loading_column(0);
        assert!((first[0] - 1.0).abs() < 1e-8);
        assert!(first[1..].iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn pca_rank_deficient_succeeds() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64, 0.0]).collect();
        let m = pca_fit(&rows, 3).unwrap();
        assert!(m.explained_variance[1].abs() < 1e-8);
        assert!(m.explained_variance[2].abs() < 1e-8);
    }

    #[test]
    fn pca_errors() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 1.0]];
        assert!(pca_fit(&rows, 3).is_err());
        assert!(pca_fit(&[], 1).is_err());
        let m = pca_fit(&rows, 1).unwrap();
        assert!(matches!(pca_project(&m, &[1.0]), Err(Error::Shape(_))));
    }

    /// Three points in 2-D with a closed-form 2×2 eigen decomposition.
    #[test]
    fn pca_three_point_closed_form() {
        let rows = vec![vec![-1.0, -1.0], vec![0.0, 0.5], vec![1.0, 0.5]];
        // Covariance [[a, b], [b, c]].
        // The points are already centered.
        let (mx, my) = (0.0f64, 0.0f64);
        let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
        for r in &rows {
            a += (r[0] - mx) * (r[0] - mx) / 2.0;
            b += (r[0] - mx) * (r[1] - my) / 2.0;
            c += (r[1] - my) * (r[1] - my) / 2.0;
        }
        let tr = a + c;
        let disc = ((a - c) * (a - c) / 4.0 + b * b).sqrt();
        let l1 = tr / 2.0 + disc;
        let l2 = tr / 2.0 - disc;
        let mut v1 = [b, l1 - a];
        let n = (v1[0] * v1[0] + v1[1] * v1[1]).sqrt();
        v1 = [v1[0] / n, v1[1] / n];
        let pivot = if v1[0].abs() >= v1[1].abs() { v1[0] } else { v1[1] };
        if pivot < 0.0 {
            v1 = [-v1[0], -v1[1]];
        }
        let m = pca_fit(&rows, 2).unwrap();
        assert!((m.explained_variance[0] - l1).abs() < 1e-12);
        assert!((m.explained_variance[1] - l2).abs() < 1e-12);
        for r in &rows {
            let s = pca_project(&m, r).unwrap();
            assert!((s[0] - (v1[0] * r[0] + v1[1] * r[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn split_paper_layout() {
        let rows: Vec<FeatureRow> = (1..=16)
            .flat_map(|p| (0..16).map(move |_| row(&format!("P{p}"), vec![0.0], 1)))
            .collect();
        let spec = SplitSpec {
            test_participants: vec!["P8".into(), "P11".into(), "P16".into()],
            validation_participants: vec![],
        };
        let parts = split_by_participant(rows.clone(), &spec).unwrap();
        assert_eq!((parts.train.len(), parts.validation.len(), parts.test.len()), (208, 0, 48));
        let train_ids: BTreeSet<_> = parts.train.iter().map(|r| r.participant_id.clone()).collect();
        assert!(parts.test.iter().all(|r| !train_ids.contains(&r.participant_id)));

        let bad = SplitSpec { test_participants: vec!["P99".into()], validation_participants: vec![] };
        assert!(matches!(split_by_participant(rows, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn smote_balances_and_keeps_originals() {
        let mut rows = Vec::new();
        for i in 0..134 {
            rows.push(row("P1", vec![(i as f64).sin(), (i as f64).cos()], 1));
        }
        for i in 0..74 {
            rows.push(row("P2", vec![(i as f64 * 0.7).sin() + 3.0, (i as f64).cos()], 0));
        }
        let out = smote(&rows, 5, 7).unwrap();
        let ones = out.iter().filter(|r| r.label == 1).count();
        let zeros = out.iter().filter(|r| r.label == 0).count();
        assert_eq!((ones, zeros), (134, 134));
        assert_eq!(&out[..rows.len()], &rows[..]);
    }

    #[test]
    fn smote_balanced_unchanged_and_errors() {
        let rows = vec![row("P1", vec![0.0], 1), row("P1", vec![1.0], 0)];
        assert_eq!(smote(&rows, 5, 1).unwrap(), rows);
        let rows = vec![row("P1", vec![0.0], 1), row("P1", vec![1.0], 1), row("P1", vec![1.0], 0)];
        assert!(matches!(smote(&rows, 5, 1), Err(Error::InsufficientData(_))));
        assert!(smote(&rows, 0, 1).is_err());
    }

    #[test]
    fn smote_k_clamped() {
        let rows = vec![
            row("P1", vec![0.0], 0),
            row("P1", vec![1.0], 0),
            row("P1", vec![5.0], 1),
            row("P1", vec![6.0], 1),
            row("P1", vec![7.0], 1),
            row("P1", vec![8.0], 1),
        ];
        let (out, origins) = smote_with_origins(&rows, 5, 3).unwrap();
        assert_eq!(out.len(), 8);
        for o in origins {
            assert_ne!(o.seed_row, o.neighbor_row);
            assert!(o.seed_row < 2 && o.neighbor_row < 2);
        }
    }

    #[test]
    fn reshape_round_trip() {
        let rows: Vec<FeatureRow> = (0..208)
            .map(|i| row("P1", (0..12).map(|j| (i * 12 + j) as f64 * 0.1).collect(), 1))
            .collect();
        let t = reshape_for_model(&rows).unwrap();
        assert_eq!(t.shape(), &[208, 1, 12]);
        let back = flatten_batch(&t);
        for (b, r) in back.iter().zip(&rows) {
            assert_eq!(b, &r.features);
        }
        assert_eq!(reshape_for_model(&rows[..1]).unwrap().shape(), &[1, 1, 12]);
        assert!(reshape_for_model(&[row("P1", vec![0.0; 11], 1)]).is_err());
    }

    #[test]
    fn prepare_default_cohort() {
        let trials = generate_cohort(&CohortSpec::default()).unwrap();
        let p = prepare(&trials, &PrepConfig::default(), 42).unwrap();
        assert_eq!(p.train.len(), 176);
        assert_eq!(p.validation.len(), 32);
        assert_eq!(p.test.len(), 48);
        assert_eq!(p.pca.n_components(), 12);
        let ones = p.train_balanced.iter().filter(|r| r.label == 1).count();
        assert_eq!(ones * 2, p.train_balanced.len());
        assert_eq!(p.all_real().len(), 256);
        assert_eq!(p.all_real()[16].participant_id, "P2");
    }
}
