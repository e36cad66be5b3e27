//! Mini-batch training with early stopping on validation loss and
//! best-validation-accuracy checkpointing.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::layers::LOG_CLAMP;
use super::model::{argmax_labels, ModelConfig, Network, ParamMap};
use super::tensor::Tensor;
use crate::dataprep::{reshape_for_model, FeatureRow};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Inputs `(N, 1, 12)` with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Vec<u8>,
}

impl Dataset {
    pub fn new(x: Tensor, y: Vec<u8>) -> Result<Self> {
        if x.shape().first() != Some(&y.len()) {
            return Err(Error::Shape(format!("{} labels for inputs of shape {:?}", y.len(), x.shape())));
        }
        if let Some(bad) = y.iter().find(|l| **l > 1) {
            return Err(Error::Validation(format!("labels must be 0 or 1, found {bad}")));
        }
        Ok(Self { x, y })
    }

    pub fn from_rows(rows: &[FeatureRow]) -> Result<Self> {
        Self::new(reshape_for_model(rows)?, rows.iter().map(|r| r.label).collect())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Patience counter on a strictly decreasing validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, stale: 0 }
    }

    /// Records one epoch's validation loss; true when training should stop.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}

/// One epoch of work, abstracted so the stopping logic can be driven by a script.
pub trait EpochRunner {
    fn run_epoch(&mut self, epoch: usize) -> Result<EpochMetrics>;
    /// Called whenever `epoch` becomes the best-validation-accuracy epoch so far.
    fn save_best(&mut self, epoch: usize);
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

pub fn fit<R: EpochRunner>(runner: &mut R, max_epochs: usize, patience: usize) -> Result<FitSummary> {
    let mut stopper = EarlyStopping::new(patience);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut stopped_early = false;
    for epoch in 1..=max_epochs {
        let m = runner.run_epoch(epoch)?;
        history.push(m);
        if best.is_none_or(|(_, acc)| m.val_acc > acc) {
            best = Some((epoch, m.val_acc));
            runner.save_best(epoch);
        }
        if stopper.observe(m.val_loss) {
            stopped_early = epoch < max_epochs;
            break;
        }
    }
    let best_epoch = best.map(|(e, _)| e).ok_or_else(|| Error::Config("max_epochs must be positive".into()))?;
    Ok(FitSummary { history, best_epoch, stopped_early })
}

/// Mean cross-entropy and accuracy in infer mode.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<(f64, f64)> {
    let probs = net.predict_proba(&data.x)?;
    let loss = probs
        .data()
        .chunks(2)
        .zip(&data.y)
        .map(|(p, &y)| -p[usize::from(y)].max(LOG_CLAMP).ln())
        .sum::<f64>()
        / data.len() as f64;
    let pred = argmax_labels(&probs);
    let correct = pred.iter().zip(&data.y).filter(|(a, b)| a == b).count();
    Ok((loss, correct as f64 / data.len() as f64))
}

/// Index batches for one epoch. A trailing single-row batch joins the one before it.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[tag::SHUFFLE, epoch as u64]));
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if batch_size > 1 && batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let tail = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(tail);
    }
    batches
}

struct Trainer<'a> {
    net: Network,
    opt: Adam,
    best: Option<(ParamMap, ParamMap)>,
    train: &'a Dataset,
    validation: &'a Dataset,
}

impl EpochRunner for Trainer<'_> {
    fn run_epoch(&mut self, epoch: usize) -> Result<EpochMetrics> {
        let cfg = self.net.config.clone();
        for (bi, idx) in epoch_batches(self.train.len(), cfg.batch_size, cfg.seed, epoch).iter().enumerate() {
            let x = self.train.x.select(idx);
            let y: Vec<u8> = idx.iter().map(|&i| self.train.y[i]).collect();
            let mut drop_rng = rng::stream(cfg.seed, &[tag::DROPOUT, epoch as u64, bi as u64]);
            let (loss, grads, cache) = self.net.loss_and_grads(&x, &y, &mut drop_rng)?;
            if !loss.is_finite() || grads.values().any(|g| !g.all_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: bi + 1 });
            }
            self.opt.step(&mut self.net.params, &grads)?;
            self.net.update_running_stats(&cache);
        }
        let (train_loss, train_acc) = evaluate(&self.net, self.train)?;
        let (val_loss, val_acc) = evaluate(&self.net, self.validation)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        log::debug!("epoch {epoch}: train_loss {train_loss:.4} val_loss {val_loss:.4} val_acc {val_acc:.4}");
        Ok(EpochMetrics { epoch, train_loss, train_acc, val_loss, val_acc })
    }

    fn save_best(&mut self, _epoch: usize) {
        self.best = Some((self.net.params.clone(), self.net.buffers.clone()));
    }
}

/// Best-validation-accuracy parameters plus the full history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainedModel {
    pub fn config(&self) -> &ModelConfig {
        &self.network.config
    }
}

pub fn train(config: &ModelConfig, train: &Dataset, validation: &Dataset) -> Result<TrainedModel> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InsufficientData("training and validation sets must be non-empty".into()));
    }
    let net = Network::init(config)?;
    let opt = Adam::new(config.learning_rate, &net.params);
    let mut trainer = Trainer { net, opt, best: None, train, validation };
    let summary = fit(&mut trainer, config.max_epochs, config.patience)?;
    let (params, buffers) = trainer.best.expect("first epoch always saved");
    Ok(TrainedModel {
        network: Network::from_parts(config.clone(), params, buffers)?,
        history: summary.history,
        best_epoch: summary.best_epoch,
        stopped_early: summary.stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    struct Scripted {
        losses: Vec<f64>,
        accs: Vec<f64>,
        saved: Vec<usize>,
    }

    impl EpochRunner for Scripted {
        fn run_epoch(&mut self, epoch: usize) -> Result<EpochMetrics> {
            let i = (epoch - 1).min(self.losses.len() - 1);
            Ok(EpochMetrics { epoch, train_loss: 0.0, train_acc: 0.0, val_loss: self.losses[i], val_acc: self.accs[i] })
        }
        fn save_best(&mut self, epoch: usize) {
            self.saved.push(epoch);
        }
    }

    #[test]
    fn stops_after_patience_stale_epochs() {
        // Best loss at epoch 3, then eight epochs without improvement.
        let losses = vec![1.0, 0.8, 0.5, 0.6, 0.5, 0.7, 0.9, 0.55, 0.5, 0.6, 0.51, 0.1];
        let accs = vec![0.5, 0.6, 0.7, 0.8, 0.8, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 1.0];
        let mut r = Scripted { losses, accs, saved: vec![] };
        let s = fit(&mut r, 150, 8).unwrap();
        assert_eq!(s.history.len(), 11);
        assert!(s.stopped_early);
        assert_eq!(s.best_epoch, 4, "earliest epoch wins the accuracy tie");
        assert_eq!(r.saved, vec![1, 2, 3, 4]);
    }

    #[test]
    fn improving_run_uses_every_epoch() {
        let losses: Vec<f64> = (0..150).map(|i| 1.0 / (i + 1) as f64).collect();
        let mut r = Scripted { losses, accs: vec![0.5; 150], saved: vec![] };
        let s = fit(&mut r, 150, 8).unwrap();
        assert_eq!(s.history.len(), 150);
        assert!(!s.stopped_early);
        assert_eq!(s.best_epoch, 1);
    }

    #[test]
    fn batches_cover_every_row_once() {
        for (n, bs) in [(176, 4), (9, 4), (17, 8), (5, 1), (1, 4)] {
            let batches = epoch_batches(n, bs, 3, 2);
            let mut all: Vec<usize> = batches.concat();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            if bs > 1 && n > 1 {
                assert!(batches.iter().all(|b| b.len() >= 2));
            }
        }
        assert_eq!(epoch_batches(20, 4, 3, 1), epoch_batches(20, 4, 3, 1));
        assert_ne!(epoch_batches(20, 4, 3, 1), epoch_batches(20, 4, 3, 2));
    }

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut s = rng::stream(seed, &[]);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let shift = if label == 1 { 1.5 } else { -1.5 };
            for _ in 0..12 {
                data.push(shift + s.random_range(-0.5..0.5));
            }
            y.push(label);
        }
        Dataset::new(Tensor::new(vec![n, 1, 12], data).unwrap(), y).unwrap()
    }

    #[test]
    fn deterministic_and_learns_separable_data() {
        let cfg = ModelConfig { max_epochs: 30, ..Default::default() };
        let (tr, va) = (toy(40, 1), toy(12, 2));
        let a = train(&cfg, &tr, &va).unwrap();
        let b = train(&cfg, &tr, &va).unwrap();
        assert_eq!(a, b);
        assert!(a.history.iter().map(|h| h.val_acc).fold(0.0, f64::max) >= 0.95);
        let best = a.history[a.best_epoch - 1].val_acc;
        assert!(a.history.iter().all(|h| h.val_acc <= best));
        assert_eq!(evaluate(&a.network, &va).unwrap().1, best);
    }

    #[test]
    fn rejects_empty_and_bad_labels() {
        let cfg = ModelConfig::default();
        let empty = Dataset::new(Tensor::zeros(&[0, 1, 12]), vec![]).unwrap();
        assert!(train(&cfg, &empty, &toy(4, 1)).is_err());
        assert!(Dataset::new(Tensor::zeros(&[1, 1, 12]), vec![2]).is_err());
    }
}
