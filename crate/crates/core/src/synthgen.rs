//! Synthetic cohorts of fNIRS-like trials.
//!
//! Each trial is a `samples × optodes` matrix of ΔHbO built from a boxcar
//! stimulus convolved with a double-gamma hemodynamic response, plus a
//! per-optode linear drift and white noise. Incorrect answers get a larger
//! response amplitude (more effort), so the label is recoverable from the
//! signal with a tunable margin.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{self, tag, Stream};

/// Double-gamma hemodynamic response parameters.
///
/// Each lobe is a gamma density with scale `dispersion` and shape
/// `delay / dispersion + 1`, so its mode sits exactly at `delay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HrfParams {
    pub peak_delay: f64,
    pub undershoot_delay: f64,
    pub peak_dispersion: f64,
    pub undershoot_dispersion: f64,
    pub undershoot_ratio: f64,
}

impl Default for HrfParams {
    fn default() -> Self {
        Self {
            peak_delay: 6.0,
            undershoot_delay: 16.0,
            peak_dispersion: 1.0,
            undershoot_dispersion: 1.0,
            undershoot_ratio: 1.0 / 6.0,
        }
    }
}

impl HrfParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.peak_delay,
            self.undershoot_delay,
            self.peak_dispersion,
            self.undershoot_dispersion,
            self.undershoot_ratio,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("hrf parameters must be finite".into()));
        }
        if self.peak_delay <= 0.0 || self.undershoot_delay <= 0.0 {
            return Err(Error::Config("hrf delays must be positive".into()));
        }
        if self.peak_dispersion <= 0.0 || self.undershoot_dispersion <= 0.0 {
            return Err(Error::Config("hrf dispersions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.undershoot_ratio) {
            return Err(Error::Config("hrf undershoot_ratio must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn lobes(&self) -> [(f64, f64, f64); 2] {
        [
            (self.peak_delay / self.peak_dispersion + 1.0, self.peak_dispersion, 1.0),
            (
                self.undershoot_delay / self.undershoot_dispersion + 1.0,
                self.undershoot_dispersion,
                -self.undershoot_ratio,
            ),
        ]
    }
}

fn gamma_density(t: f64, shape: f64, scale: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let x = t / scale;
    ((shape - 1.0) * x.ln() - x - ln_gamma(shape)).exp() / scale
}

/// Canonical double-gamma impulse response at time `t` (seconds).
pub fn canonical_hrf(t: f64, params: &HrfParams) -> Result<f64> {
    params.validate()?;
    Ok(hrf_unchecked(t, params))
}

fn hrf_unchecked(t: f64, params: &HrfParams) -> f64 {
    params
        .lobes()
        .iter()
        .map(|&(shape, scale, weight)| weight * gamma_density(t, shape, scale))
        .sum()
}

/// Integral of the impulse response from 0 to `t`.
pub fn integrated_hrf(t: f64, params: &HrfParams) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    params
        .lobes()
        .iter()
        .map(|&(shape, scale, weight)| weight * gamma_lr(shape, t / scale))
        .sum()
}

/// Response at time `t` to a unit boxcar switched on over `[0, duration)`.
pub fn boxcar_response(t: f64, duration: f64, params: &HrfParams) -> f64 {
    integrated_hrf(t, params) - integrated_hrf(t - duration, params)
}

/// Cohort generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n_participants: usize,
    pub n_questions: usize,
    pub sessions: usize,
    pub segments_per_session: usize,
    pub questions_per_segment: usize,
    /// Hz.
    pub sample_rate: f64,
    pub samples_per_trial: usize,
    pub n_optodes: usize,
    /// Extra response amplitude on incorrect trials.
    pub effect_size: f64,
    /// White-noise SD, µmol/L.
    pub noise_sd: f64,
    /// SD of the per-optode drift slope, µmol/L per sample.
    pub drift_slope_sd: f64,
    pub target_correct_rate: f64,
    pub seed: u64,
    /// Resting ΔHbO level, µmol/L.
    pub baseline: f64,
    /// Participant effort is uniform on `1 ± effort_spread`.
    pub effort_spread: f64,
    /// Stimulus boxcar length, seconds.
    pub stimulus_duration: f64,
    /// Fraction of cells replaced by NaN.
    pub missing_fraction: f64,
    pub hrf: HrfParams,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_participants: 16,
            n_questions: 16,
            sessions: 2,
            segments_per_session: 2,
            questions_per_segment: 4,
            sample_rate: 10.0,
            samples_per_trial: 200,
            n_optodes: crate::N_OPTODES,
            effect_size: 0.6,
            noise_sd: 0.3,
            drift_slope_sd: 0.0,
            target_correct_rate: 168.0 / 256.0,
            seed: 42,
            baseline: 1.0,
            effort_spread: 0.15,
            stimulus_duration: 10.0,
            missing_fraction: 0.0,
            hrf: HrfParams::default(),
        }
    }
}

impl CohortSpec {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        self.hrf.validate()?;
        if self.n_participants == 0 {
            return Err(Error::Config("n_participants must be positive".into()));
        }
        if self.sessions == 0 || self.segments_per_session == 0 || self.questions_per_segment == 0
        {
            return Err(Error::Config("session layout counts must be positive".into()));
        }
        let layout = self.sessions * self.segments_per_session * self.questions_per_segment;
        if self.n_questions != layout {
            return Err(Error::Config(format!(
                "n_questions = {} but sessions × segments × questions = {layout}",
                self.n_questions
            )));
        }
        if self.samples_per_trial == 0 || self.samples_per_trial > 300 {
            return Err(Error::Config("samples_per_trial must lie in 1..=300".into()));
        }
        if self.n_optodes != crate::N_OPTODES {
            return Err(Error::Config(format!("n_optodes must be {}", crate::N_OPTODES)));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if !(self.target_correct_rate > 0.0 && self.target_correct_rate < 1.0) {
            return Err(Error::Config("target_correct_rate must lie in (0, 1)".into()));
        }
        if !(self.noise_sd >= 0.0) || !(self.drift_slope_sd >= 0.0) {
            return Err(Error::Config("noise_sd and drift_slope_sd must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.effort_spread) {
            return Err(Error::Config("effort_spread must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return Err(Error::Config("missing_fraction must lie in [0, 1)".into()));
        }
        if !self.effect_size.is_finite() || !self.baseline.is_finite() {
            return Err(Error::Config("effect_size and baseline must be finite".into()));
        }
        if !(self.stimulus_duration > 0.0) {
            return Err(Error::Config("stimulus_duration must be positive".into()));
        }
        Ok(())
    }

    /// Session (1-based) of a 1-based question id.
    pub fn session_of(&self, question_id: usize) -> usize {
        (question_id - 1) / (self.segments_per_session * self.questions_per_segment) + 1
    }

    /// Segment (1-based, numbered across sessions) of a 1-based question id.
    pub fn segment_of(&self, question_id: usize) -> usize {
        (question_id - 1) / self.questions_per_segment + 1
    }

    /// Stimulus response sampled at the trial's time grid.
    pub fn response_curve(&self) -> Vec<f64> {
        (0..self.samples_per_trial)
            .map(|k| {
                boxcar_response(k as f64 / self.sample_rate, self.stimulus_duration, &self.hrf)
            })
            .collect()
    }
}

/// Relative response gain of each optode: lateral channels (1-4, 13-16)
/// respond more strongly than ventromedial ones (5-12).
pub fn optode_gain(optode: usize) -> f64 {
    if (4..12).contains(&optode) {
        0.7
    } else {
        1.0
    }
}

/// Row-major `samples × optodes` matrix. Missing cells are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HboMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl HboMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} != {rows} × {cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn set_column(&mut self, col: usize, values: &[f64]) {
        for (r, v) in values.iter().enumerate() {
            self.set(r, col, *v);
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mean over every cell.
    pub fn grand_mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// One participant-question recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub participant_id: String,
    pub question_id: usize,
    pub session: usize,
    pub segment: usize,
    pub hbo: HboMatrix,
    /// 1 = correct, 0 = wrong.
    pub label: u8,
    pub score: f64,
}

pub fn participant_id(index: usize) -> String {
    format!("P{}", index + 1)
}

/// Effort level of a participant, drawn from its own stream.
pub fn participant_effort(spec: &CohortSpec, participant: usize) -> f64 {
    let mut stream = rng::stream(spec.seed, &[tag::PARTICIPANT, participant as u64]);
    1.0 + spec.effort_spread * (2.0 * stream.random::<f64>() - 1.0)
}

/// Builds one trial.
///
/// `hbo[k][o] = baseline + a·gain(o)·r(k) + slope_o·(k − (T−1)/2) + noise`, with
/// `a = effort + effect_size` for wrong answers and `a = effort` otherwise. The
/// drift is centered on the trial midpoint so it leaves time means unchanged.
pub fn generate_trial(
    spec: &CohortSpec,
    participant: usize,
    question_id: usize,
    participant_effort: f64,
    correct: bool,
    stream: &mut Stream,
) -> Result<Trial> {
    spec.validate()?;
    if question_id == 0 || question_id > spec.n_questions {
        return Err(Error::Config(format!("question_id {question_id} out of range")));
    }
    let response = spec.response_curve();
    Ok(build_trial(spec, &response, participant, question_id, participant_effort, correct, stream))
}

fn build_trial(
    spec: &CohortSpec,
    response: &[f64],
    participant: usize,
    question_id: usize,
    effort: f64,
    correct: bool,
    stream: &mut Stream,
) -> Trial {
    let samples = spec.samples_per_trial;
    let optodes = spec.n_optodes;
    let amplitude = if correct { effort } else { effort + spec.effect_size };
    let noise = Normal::new(0.0, spec.noise_sd).expect("validated noise_sd");
    let drift = Normal::new(0.0, spec.drift_slope_sd).expect("validated drift_slope_sd");
    let slopes: Vec<f64> = (0..optodes).map(|_| drift.sample(stream)).collect();
    let center = (samples as f64 - 1.0) / 2.0;

    let mut hbo = HboMatrix::filled(samples, optodes, 0.0);
    for (k, r) in response.iter().enumerate() {
        for (o, slope) in slopes.iter().enumerate() {
            let mut v = spec.baseline + amplitude * optode_gain(o) * r + slope * (k as f64 - center);
            if spec.noise_sd > 0.0 {
                v += noise.sample(stream);
            }
            hbo.set(k, o, v);
        }
    }
    if spec.missing_fraction > 0.0 {
        let mut mstream = rng::stream(
            spec.seed,
            &[tag::MISSING, participant as u64, question_id as u64],
        );
        for k in 0..samples {
            for o in 0..optodes {
                if mstream.random::<f64>() < spec.missing_fraction {
                    hbo.set(k, o, f64::NAN);
                }
            }
        }
    }

    let score = if correct { 1.0 } else { 0.0 };
    Trial {
        participant_id: participant_id(participant),
        question_id,
        session: spec.session_of(question_id),
        segment: spec.segment_of(question_id),
        hbo,
        label: correct as u8,
        score,
    }
}

/// Generates the full cohort in participant-major, question-minor order.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<Trial>> {
    generate_cohort_with(spec, Exec::default())
}

pub fn generate_cohort_with(spec: &CohortSpec, exec: Exec) -> Result<Vec<Trial>> {
    spec.validate()?;
    let response = spec.response_curve();
    let efforts: Vec<f64> =
        (0..spec.n_participants).map(|p| participant_effort(spec, p)).collect();
    let nq = spec.n_questions;
    Ok(exec.map_range(spec.n_participants * nq, |i| {
        let (p, q) = (i / nq, i % nq + 1);
        let mut stream = rng::stream(spec.seed, &[tag::TRIAL, p as u64, q as u64]);
        let correct = stream.random::<f64>() < spec.target_correct_rate;
        build_trial(spec, &response, p, q, efforts[p], correct, &mut stream)
    }))
}
