//! Classification metrics and the relative neural efficiency / involvement
//! computations at segment granularity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::dataprep::participant_order;
use crate::error::{Error, Result};
use crate::stats;
use crate::synthgen::Trial;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
    /// Set when the metric's denominator was zero and the value was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionCounts> {
    if y_true.is_empty() {
        return Err(Error::InsufficientData("no labels to evaluate".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!("{} true labels vs {} predictions", y_true.len(), y_pred.len())));
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fn_ += 1,
            _ => return Err(Error::Validation(format!("labels must be 0 or 1, got ({t}, {p})"))),
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Accuracy, precision, recall and F1 with class 1 as the positive class.
pub fn classification_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<ClassificationMetrics> {
    let c = confusion(y_true, y_pred)?;
    let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    let (f1, f1_undefined) = if precision + recall == 0.0 {
        (0.0, true)
    } else {
        (2.0 * precision * recall / (precision + recall), false)
    };
    Ok(ClassificationMetrics {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        precision,
        recall,
        f1,
        counts: c,
        precision_undefined,
        recall_undefined,
        f1_undefined,
    })
}

// ---------------------------------------------------------------- effort

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffortMode {
    /// `(1/h_i − 1/GM(h)) / (1/SD(h))`.
    #[default]
    Literal,
    /// `(1/h_i − GM(1/h)) / (SD(1/h) + ε)`.
    Conventional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffortConfig {
    pub mode: EffortMode,
    pub epsilon: f64,
    pub reciprocal_floor: f64,
}

impl Default for EffortConfig {
    fn default() -> Self {
        Self { mode: EffortMode::Literal, epsilon: 0.001, reciprocal_floor: 1e-6 }
    }
}

/// `1/h` with `|h|` raised to at least `floor`, keeping its sign (0 counts as positive).
pub fn clamped_reciprocal(h: f64, floor: f64) -> f64 {
    let mag = h.abs().max(floor);
    if h < 0.0 { -1.0 / mag } else { 1.0 / mag }
}

/// `(s_i − GM) / (SD + ε)` over one participant-session's segment scores.
pub fn zscore_performance(scores: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if scores.len() < 2 {
        return Err(Error::InsufficientData(format!("performance z-score needs ≥ 2 segments, got {}", scores.len())));
    }
    let gm = stats::mean(scores);
    let sd = stats::pop_sd(scores);
    Ok(scores.iter().map(|s| (s - gm) / (sd + epsilon)).collect())
}

/// Effort z-scores for one participant-session's segment mean ΔHbO. The flag
/// is set when literal mode met a zero SD and reported zeros.
pub fn zscore_effort(hbo: &[f64], config: &EffortConfig) -> Result<(Vec<f64>, bool)> {
    if hbo.len() < 2 {
        return Err(Error::InsufficientData(format!("effort z-score needs ≥ 2 segments, got {}", hbo.len())));
    }
    let floor = config.reciprocal_floor;
    let recip: Vec<f64> = hbo.iter().map(|&h| clamped_reciprocal(h, floor)).collect();
    match config.mode {
        EffortMode::Literal => {
            let gm = stats::mean(hbo);
            let sd = stats::pop_sd(hbo);
            if sd == 0.0 {
                return Ok((vec![0.0; hbo.len()], true));
            }
            let inv_gm = clamped_reciprocal(gm, floor);
            let inv_sd = clamped_reciprocal(sd, floor);
            Ok((recip.iter().map(|r| (r - inv_gm) / inv_sd).collect(), false))
        }
        EffortMode::Conventional => {
            let gm = stats::mean(&recip);
            let sd = stats::pop_sd(&recip);
            Ok((recip.iter().map(|r| (r - gm) / (sd + config.epsilon)).collect(), false))
        }
    }
}

/// `((p − c)/√2, (p + c)/√2)`.
pub fn rne_rni(p_z: f64, ce_z: f64) -> (f64, f64) {
    ((p_z - ce_z) / SQRT_2, (p_z + ce_z) / SQRT_2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAggregate {
    pub participant_id: String,
    pub session: usize,
    pub segment: usize,
    /// Mean of every finite ΔHbO sample over the segment's trials and optodes.
    pub mean_hbo: f64,
    /// Fraction of the segment's questions scored correct.
    pub mean_score: f64,
    pub n_questions: usize,
}

type SegmentKey = (String, usize, usize);

fn sort_key(k: &SegmentKey) -> ((u64, String), usize, usize) {
    (participant_order(&k.0), k.1, k.2)
}

fn aggregate<F>(trials: &[Trial], outcome: F) -> Result<Vec<SegmentAggregate>>
where
    F: Fn(&Trial) -> Result<f64>,
{
    let mut groups: HashMap<SegmentKey, (f64, usize, f64, usize)> = HashMap::new();
    for t in trials {
        let e = groups.entry((t.participant_id.clone(), t.session, t.segment)).or_default();
        for v in t.hbo.as_slice().iter().filter(|v| v.is_finite()) {
            e.0 += v;
            e.1 += 1;
        }
        e.2 += outcome(t)?;
        e.3 += 1;
    }
    let mut keys: Vec<SegmentKey> = groups.keys().cloned().collect();
    keys.sort_by_key(sort_key);
    keys.into_iter()
        .map(|k| {
            let (sum, n, score, q) = groups[&k];
            if n == 0 {
                return Err(Error::NonFinite(format!("segment {}/{}/{} has no finite ΔHbO", k.0, k.1, k.2)));
            }
            Ok(SegmentAggregate {
                participant_id: k.0,
                session: k.1,
                segment: k.2,
                mean_hbo: sum / n as f64,
                mean_score: score / q as f64,
                n_questions: q,
            })
        })
        .collect()
}

/// Segments scored with the recorded answers.
pub fn actual_segments(trials: &[Trial]) -> Result<Vec<SegmentAggregate>> {
    aggregate(trials, |t| Ok(f64::from(t.label)))
}

/// Segments scored with predicted labels keyed by `(participant_id, question_id)`.
pub fn predicted_segments(trials: &[Trial], predictions: &HashMap<(String, usize), u8>) -> Result<Vec<SegmentAggregate>> {
    aggregate(trials, |t| {
        predictions
            .get(&(t.participant_id.clone(), t.question_id))
            .map(|&l| f64::from(l))
            .ok_or_else(|| Error::Validation(format!("no prediction for {} question {}", t.participant_id, t.question_id)))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Actual,
    Predicted,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Actual => "actual",
            Source::Predicted => "predicted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortRecord {
    pub participant_id: String,
    pub session: usize,
    pub segment: usize,
    pub source: Source,
    pub mean_hbo: f64,
    pub mean_score: f64,
    pub p_z: f64,
    pub ce_z: f64,
    pub rne: f64,
    pub rni: f64,
    /// Literal-mode effort z-score hit a zero SD and was reported as 0.
    pub ce_z_undefined: bool,
}

/// Effort records, z-scored within each participant-session.
pub fn effort_records(segments: &[SegmentAggregate], source: Source, config: &EffortConfig) -> Result<Vec<EffortRecord>> {
    let mut sessions: BTreeMap<((u64, String), usize), Vec<&SegmentAggregate>> = BTreeMap::new();
    for s in segments {
        sessions.entry((participant_order(&s.participant_id), s.session)).or_default().push(s);
    }
    let mut out = Vec::with_capacity(segments.len());
    for (_, mut segs) in sessions {
        segs.sort_by_key(|s| s.segment);
        let scores: Vec<f64> = segs.iter().map(|s| s.mean_score).collect();
        let hbo: Vec<f64> = segs.iter().map(|s| s.mean_hbo).collect();
        let p = zscore_performance(&scores, config.epsilon)?;
        let (c, undefined) = zscore_effort(&hbo, config)?;
        for ((s, p_z), ce_z) in segs.iter().zip(p).zip(c) {
            let (rne, rni) = rne_rni(p_z, ce_z);
            out.push(EffortRecord {
                participant_id: s.participant_id.clone(),
                session: s.session,
                segment: s.segment,
                source,
                mean_hbo: s.mean_hbo,
                mean_score: s.mean_score,
                p_z,
                ce_z,
                rne,
                rni,
                ce_z_undefined: undefined,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub mae: f64,
    /// `None` when either side is constant.
    pub r: Option<f64>,
}

fn compare(a: &[f64], p: &[f64]) -> MetricComparison {
    MetricComparison { mae: stats::mean_abs_error(a, p), r: stats::pearson(a, p) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantComparison {
    /// `"pooled"` for the row over all participants.
    pub participant_id: String,
    pub n_segments: usize,
    pub rne: MetricComparison,
    pub rni: MetricComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub metric: String,
    pub participant_id: String,
    pub session: usize,
    pub segment: usize,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortComparison {
    pub participants: Vec<ParticipantComparison>,
    pub pooled: ParticipantComparison,
    pub scatter: Vec<ScatterPoint>,
}

fn keyed(records: &[EffortRecord]) -> BTreeMap<SegmentKey, &EffortRecord> {
    records.iter().map(|r| ((r.participant_id.clone(), r.session, r.segment), r)).collect()
}

fn label(k: &SegmentKey) -> String {
    format!("{}/session{}/segment{}", k.0, k.1, k.2)
}

/// Per-participant and pooled MAE / Pearson r of RNE and RNI between aligned
/// actual and predicted records.
pub fn compare_effort(actual: &[EffortRecord], predicted: &[EffortRecord]) -> Result<EffortComparison> {
    let a = keyed(actual);
    let p = keyed(predicted);
    let ka: BTreeSet<&SegmentKey> = a.keys().collect();
    let kp: BTreeSet<&SegmentKey> = p.keys().collect();
    let mut bad: Vec<&SegmentKey> = ka.symmetric_difference(&kp).copied().collect();
    if a.len() != actual.len() || p.len() != predicted.len() {
        return Err(Error::Validation("duplicate effort records".into()));
    }
    if !bad.is_empty() {
        bad.sort_by_key(|k| sort_key(k));
        return Err(Error::Misaligned(bad.into_iter().map(label).collect()));
    }
    if a.len() < 3 {
        return Err(Error::InsufficientData(format!("effort comparison needs ≥ 3 segments, got {}", a.len())));
    }
    let mut keys: Vec<&SegmentKey> = ka.into_iter().collect();
    keys.sort_by_key(|k| sort_key(k));

    let mut scatter = Vec::with_capacity(2 * keys.len());
    for metric in ["rne", "rni"] {
        for k in &keys {
            let pick = |r: &EffortRecord| if metric == "rne" { r.rne } else { r.rni };
            scatter.push(ScatterPoint {
                metric: metric.into(),
                participant_id: k.0.clone(),
                session: k.1,
                segment: k.2,
                actual: pick(a[*k]),
                predicted: pick(p[*k]),
            });
        }
    }
    let summarize = |id: String, ks: &[&SegmentKey]| {
        let col = |src: &BTreeMap<SegmentKey, &EffortRecord>, f: fn(&EffortRecord) -> f64| -> Vec<f64> {
            ks.iter().map(|k| f(src[*k])).collect()
        };
        ParticipantComparison {
            participant_id: id,
            n_segments: ks.len(),
            rne: compare(&col(&a, |r| r.rne), &col(&p, |r| r.rne)),
            rni: compare(&col(&a, |r| r.rni), &col(&p, |r| r.rni)),
        }
    };
    let mut participants = Vec::new();
    let mut start = 0;
    while start < keys.len() {
        let id = &keys[start].0;
        let end = start + keys[start..].iter().take_while(|k| &k.0 == id).count();
        participants.push(summarize(id.clone(), &keys[start..end]));
        start = end;
    }
    Ok(EffortComparison { participants, pooled: summarize("pooled".into(), &keys), scatter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn perfect_and_all_positive() {
        let y: Vec<u8> = (0..20).map(|i| (i % 3 == 0) as u8).collect();
        let m = classification_metrics(&y, &y).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));

        let mut truth = vec![1u8; 168];
        truth.extend(vec![0u8; 88]);
        let m = classification_metrics(&truth, &[1; 256]).unwrap();
        assert_eq!(m.recall, 1.0);
        assert!((m.precision - 168.0 / 256.0).abs() < 1e-15);
        assert!((m.accuracy - 168.0 / 256.0).abs() < 1e-15);
        assert!((m.precision - 0.6563).abs() < 5e-5);
    }

    #[test]
    fn zero_denominators_flagged() {
        let m = classification_metrics(&[0, 0, 1], &[0, 0, 0]).unwrap();
        assert!(m.precision_undefined && !m.recall_undefined && m.f1_undefined);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(classification_metrics(&[], &[]).is_err());
        assert!(classification_metrics(&[0, 2], &[0, 1]).is_err());
    }

    #[test]
    fn brute_force_counts() {
        let mut s = rng::stream(51, &[]);
        for _ in 0..20 {
            let n = s.random_range(1..=1000);
            let t: Vec<u8> = (0..n).map(|_| s.random_range(0..2)).collect();
            let p: Vec<u8> = (0..n).map(|_| s.random_range(0..2)).collect();
            let m = classification_metrics(&t, &p).unwrap();
            let tp = (0..n).filter(|&i| t[i] == 1 && p[i] == 1).count() as f64;
            let fp = (0..n).filter(|&i| t[i] == 0 && p[i] == 1).count() as f64;
            let fneg = (0..n).filter(|&i| t[i] == 1 && p[i] == 0).count() as f64;
            let correct = (0..n).filter(|&i| t[i] == p[i]).count() as f64;
            assert_eq!(m.accuracy, correct / n as f64);
            if tp + fp > 0.0 {
                assert!((m.precision - tp / (tp + fp)).abs() < 1e-15);
            }
            if tp + fneg > 0.0 {
                assert!((m.recall - tp / (tp + fneg)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn f1_of_equal_precision_recall() {
        // tp 3, fp 1, fn 1 → precision = recall = 0.75.
        let m = classification_metrics(&[1, 1, 1, 0, 1, 0], &[1, 1, 1, 1, 0, 0]).unwrap();
        assert!((m.f1 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn performance_z_hand_cases() {
        assert_eq!(zscore_performance(&[0.75, 0.75], 0.001).unwrap(), vec![0.0, 0.0]);
        let z = zscore_performance(&[0.0, 1.0], 0.001).unwrap();
        assert!((z[0] + 0.5 / 0.501).abs() < 1e-15 && (z[1] - 0.5 / 0.501).abs() < 1e-15);
        assert!(zscore_performance(&[1.0], 0.001).is_err());
    }

    #[test]
    fn effort_z_literal_hand_case() {
        let (z, flag) = zscore_effort(&[0.5, 1.0], &EffortConfig::default()).unwrap();
        assert!(!flag);
        assert!((z[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((z[1] + 1.0 / 12.0).abs() < 1e-12);
        let (z, flag) = zscore_effort(&[0.4, 0.4], &EffortConfig::default()).unwrap();
        assert!(flag && z == vec![0.0, 0.0]);
        let conv = EffortConfig { mode: EffortMode::Conventional, ..Default::default() };
        let (z, _) = zscore_effort(&[0.5, 1.0], &conv).unwrap();
        assert!((z[0] - 0.5 / 0.501).abs() < 1e-12);
        let (z, _) = zscore_effort(&[0.4, 0.4], &conv).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn reciprocal_clamp() {
        assert_eq!(clamped_reciprocal(1e-12, 1e-6), 1e6);
        assert_eq!(clamped_reciprocal(-1e-12, 1e-6), -1e6);
        assert_eq!(clamped_reciprocal(0.0, 1e-6), 1e6);
        assert_eq!(clamped_reciprocal(0.5, 1e-6), 2.0);
    }

    #[test]
    fn rne_rni_hand_cases() {
        let (rne, rni) = rne_rni(1.0, -1.0);
        assert!((rne - SQRT_2).abs() < 1e-15 && rni == 0.0);
        assert_eq!(rne_rni(0.7, 0.7).0, 0.0);
    }

    fn records(pids: &[&str], seed: u64) -> Vec<EffortRecord> {
        let mut s = rng::stream(seed, &[]);
        let segs: Vec<SegmentAggregate> = pids
            .iter()
            .flat_map(|p| (1..=4).map(move |g| (p.to_string(), g)))
            .map(|(p, g)| SegmentAggregate {
                participant_id: p,
                session: (g - 1) / 2 + 1,
                segment: g,
                mean_hbo: s.random_range(0.5..1.5),
                mean_score: f64::from(s.random_range(0..=4u8)) / 4.0,
                n_questions: 4,
            })
            .collect();
        effort_records(&segs, Source::Actual, &EffortConfig::default()).unwrap()
    }

    #[test]
    fn identical_records_compare_perfectly() {
        let a = records(&["P8", "P11", "P16"], 3);
        let c = compare_effort(&a, &a).unwrap();
        assert_eq!(c.participants.len(), 3);
        assert_eq!(c.participants.iter().map(|p| p.participant_id.as_str()).collect::<Vec<_>>(), ["P8", "P11", "P16"]);
        assert_eq!(c.scatter.len(), 24);
        assert_eq!(c.scatter.iter().filter(|p| p.metric == "rne").count(), 12);
        assert_eq!(c.pooled.rne.mae, 0.0);
        assert_eq!(c.pooled.rne.r, Some(1.0));
        assert_eq!(c.pooled.rni.r, Some(1.0));
    }

    #[test]
    fn comparison_matches_naive_oracle() {
        let a = records(&["P8", "P11", "P16"], 4);
        let mut p = records(&["P8", "P11", "P16"], 5);
        for r in &mut p {
            r.source = Source::Predicted;
        }
        let c = compare_effort(&a, &p).unwrap();
        let xa: Vec<f64> = a.iter().map(|r| r.rne).collect();
        let xp: Vec<f64> = p.iter().map(|r| r.rne).collect();
        let mae = xa.iter().zip(&xp).map(|(x, y)| (x - y).abs()).sum::<f64>() / 12.0;
        let (ma, mp) = (xa.iter().sum::<f64>() / 12.0, xp.iter().sum::<f64>() / 12.0);
        let cov: f64 = xa.iter().zip(&xp).map(|(x, y)| (x - ma) * (y - mp)).sum();
        let va: f64 = xa.iter().map(|x| (x - ma).powi(2)).sum();
        let vp: f64 = xp.iter().map(|y| (y - mp).powi(2)).sum();
        assert!((c.pooled.rne.mae - mae).abs() < 1e-12);
        assert!((c.pooled.rne.r.unwrap() - cov / (va * vp).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn misaligned_keys_listed() {
        let a = records(&["P8", "P11"], 6);
        let p = records(&["P8", "P16"], 6);
        match compare_effort(&a, &p) {
            Err(Error::Misaligned(keys)) => {
                assert_eq!(keys.len(), 8);
                assert!(keys[0].starts_with("P11/"));
            }
            other => panic!("expected misalignment, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn rotation_identities(p in -50.0f64..50.0, c in -50.0f64..50.0) {
            let (rne, rni) = rne_rni(p, c);
            prop_assert!((rne + rni - SQRT_2 * p).abs() < 1e-9);
            prop_assert!((rni - rne - SQRT_2 * c).abs() < 1e-9);
        }

        #[test]
        fn z_scores_permutation_invariant(scores in proptest::collection::vec(0.0f64..1.0, 2..6), hbo in proptest::collection::vec(0.1f64..2.0, 2..6)) {
            let n = scores.len().min(hbo.len());
            let (s, h) = (&scores[..n], &hbo[..n]);
            let rev_s: Vec<f64> = s.iter().rev().copied().collect();
            let rev_h: Vec<f64> = h.iter().rev().copied().collect();
            let a = zscore_performance(s, 0.001).unwrap();
            let b = zscore_performance(&rev_s, 0.001).unwrap();
            for (x, y) in a.iter().zip(b.iter().rev()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            for mode in [EffortMode::Literal, EffortMode::Conventional] {
                let cfg = EffortConfig { mode, ..Default::default() };
                let a = zscore_effort(h, &cfg).unwrap().0;
                let b = zscore_effort(&rev_h, &cfg).unwrap().0;
                for (x, y) in a.iter().zip(b.iter().rev()) {
                    prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
                }
            }
        }

        #[test]
        fn higher_score_never_lowers_rne_or_rni(scores in proptest::collection::vec(0.0f64..1.0, 2..5), bump in 0.0f64..1.0, c in -3.0f64..3.0) {
            let mut up = scores.clone();
            up[0] += bump;
            let p0 = zscore_performance(&scores, 0.001).unwrap()[0];
            let p1 = zscore_performance(&up, 0.001).unwrap()[0];
            let (e0, i0) = rne_rni(p0, c);
            let (e1, i1) = rne_rni(p1, c);
            prop_assert!(e1 >= e0 - 1e-12 && i1 >= i0 - 1e-12);
        }
    }
}
