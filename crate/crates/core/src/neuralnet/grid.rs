//! Exhaustive hyperparameter search over the reference value sets.

use serde::{Deserialize, Serialize};

use super::model::ModelConfig;
use super::train::{train, Dataset, TrainedModel};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{self, tag};

/// Configuration count quoted for the reference search.
pub const DOCUMENTED_CONFIG_COUNT: usize = 72;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpace {
    pub gru_units: Vec<usize>,
    pub dropout_rates: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

impl Default for GridSpace {
    fn default() -> Self {
        Self {
            gru_units: vec![8, 16],
            dropout_rates: vec![0.1, 0.2, 0.4],
            learning_rates: vec![0.0005, 0.001, 0.003],
            batch_sizes: vec![1, 4, 8, 16, 32],
        }
    }
}

impl GridSpace {
    pub fn len(&self) -> usize {
        self.gru_units.len() * self.dropout_rates.len() * self.learning_rates.len() * self.batch_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian product with gru_units slowest and batch_size fastest. Each
    /// configuration's seed is derived from the master seed and its index.
    pub fn enumerate(&self, base: &ModelConfig, master_seed: u64) -> Result<Vec<ModelConfig>> {
        if self.is_empty() {
            return Err(Error::Config("grid search space is empty".into()));
        }
        let mut out = Vec::with_capacity(self.len());
        for &gru_units in &self.gru_units {
            for &dropout_rate in &self.dropout_rates {
                for &learning_rate in &self.learning_rates {
                    for &batch_size in &self.batch_sizes {
                        let seed = rng::derive_seed(master_seed, &[tag::GRID, out.len() as u64]);
                        out.push(ModelConfig {
                            gru_units,
                            dropout_rate,
                            learning_rate,
                            batch_size,
                            seed,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One row of the grid log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub index: usize,
    pub gru_units: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub status: String,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Empty for failed runs.
    pub val_acc: Option<f64>,
    pub val_loss: Option<f64>,
    pub error: String,
}

impl GridEntry {
    pub fn succeeded(&self) -> bool {
        self.status == "ok" && self.val_acc.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub documented_count: usize,
    pub enumerated_count: usize,
    pub failed_count: usize,
    pub note: String,
    /// Indices into the log, best first.
    pub leaderboard: Vec<usize>,
    pub best_index: Option<usize>,
}

pub struct GridOutcome {
    /// In enumeration order.
    pub log: Vec<GridEntry>,
    pub report: GridReport,
    pub best: Option<TrainedModel>,
}

/// Successful runs by validation accuracy descending, then failures; ties by index.
pub fn leaderboard(log: &[GridEntry]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..log.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&log[a], &log[b]);
        eb.succeeded()
            .cmp(&ea.succeeded())
            .then_with(|| match (ea.val_acc, eb.val_acc) {
                (Some(x), Some(y)) => y.total_cmp(&x),
                _ => std::cmp::Ordering::Equal,
            })
            .then_with(|| ea.index.cmp(&eb.index))
    });
    order
}

fn entry(index: usize, cfg: &ModelConfig, run: &Result<TrainedModel>) -> GridEntry {
    let mut e = GridEntry {
        index,
        gru_units: cfg.gru_units,
        dropout_rate: cfg.dropout_rate,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        status: "ok".into(),
        best_epoch: 0,
        epochs_run: 0,
        val_acc: None,
        val_loss: None,
        error: String::new(),
    };
    match run {
        Ok(m) => {
            let best = m.history[m.best_epoch - 1];
            e.best_epoch = m.best_epoch;
            e.epochs_run = m.history.len();
            e.val_acc = Some(best.val_acc);
            e.val_loss = Some(best.val_loss);
        }
        Err(err) => {
            e.status = "failed".into();
            e.error = err.to_string();
        }
    }
    e
}

pub fn grid_search(
    space: &GridSpace,
    base: &ModelConfig,
    master_seed: u64,
    train_set: &Dataset,
    validation: &Dataset,
    exec: Exec,
) -> Result<GridOutcome> {
    let configs = space.enumerate(base, master_seed)?;
    let runs = exec.map_slice(&configs, |cfg| train(cfg, train_set, validation));
    let log: Vec<GridEntry> = configs.iter().zip(&runs).enumerate().map(|(i, (c, r))| entry(i, c, r)).collect();
    for e in log.iter().filter(|e| !e.succeeded()) {
        log::warn!("grid configuration {} failed: {}", e.index, e.error);
    }
    let board = leaderboard(&log);
    let best_index = board.first().copied().filter(|&i| log[i].succeeded());
    let best = best_index.and_then(|i| runs.into_iter().nth(i)).and_then(Result::ok);
    let failed_count = log.iter().filter(|e| !e.succeeded()).count();
    let enumerated = log.len();
    let note = format!(
        "documented_count {DOCUMENTED_CONFIG_COUNT} vs enumerated {enumerated}: the listed value sets \
         form a {enumerated}-point product and every point is run; {failed_count} configurations failed"
    );
    Ok(GridOutcome {
        log,
        report: GridReport {
            documented_count: DOCUMENTED_CONFIG_COUNT,
            enumerated_count: enumerated,
            failed_count,
            note,
            leaderboard: board,
            best_index,
        },
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::tensor::Tensor;

    #[test]
    fn reference_space_has_ninety_points_in_order() {
        let cfgs = GridSpace::default().enumerate(&ModelConfig::default(), 7).unwrap();
        assert_eq!(cfgs.len(), 90);
        let key = |c: &ModelConfig| (c.gru_units, c.dropout_rate, c.learning_rate, c.batch_size);
        assert_eq!(key(&cfgs[0]), (8, 0.1, 0.0005, 1));
        assert_eq!(key(&cfgs[1]), (8, 0.1, 0.0005, 4));
        assert_eq!(key(&cfgs[5]), (8, 0.1, 0.001, 1));
        assert_eq!(key(&cfgs[45]), (16, 0.1, 0.0005, 1));
        assert_eq!(key(&cfgs[89]), (16, 0.4, 0.003, 32));
        let mut seeds: Vec<u64> = cfgs.iter().map(|c| c.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 90);
    }

    #[test]
    fn empty_space_rejected() {
        let space = GridSpace { batch_sizes: vec![], ..Default::default() };
        assert!(matches!(space.enumerate(&ModelConfig::default(), 1), Err(Error::Config(_))));
    }

    fn e(index: usize, ok: bool, acc: f64) -> GridEntry {
        GridEntry {
            index,
            gru_units: 8,
            dropout_rate: 0.1,
            learning_rate: 0.001,
            batch_size: 4,
            seed: 0,
            status: if ok { "ok" } else { "failed" }.into(),
            best_epoch: 1,
            epochs_run: 1,
            val_acc: ok.then_some(acc),
            val_loss: ok.then_some(0.0),
            error: String::new(),
        }
    }

    #[test]
    fn leaderboard_order() {
        let log = vec![e(0, false, 0.0), e(1, true, 0.5), e(2, true, 0.9), e(3, true, 0.5), e(4, false, 0.0)];
        assert_eq!(leaderboard(&log), vec![2, 1, 3, 0, 4]);
    }

    #[test]
    fn small_grid_runs_and_is_order_invariant() {
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..16 {
            let v = if i % 2 == 0 { -1.0 } else { 1.0 };
            data.extend((0..12).map(|j| v + 0.01 * (i * j) as f64));
            y.push((i % 2) as u8);
        }
        let ds = Dataset::new(Tensor::new(vec![16, 1, 12], data).unwrap(), y).unwrap();
        let space = GridSpace { gru_units: vec![8], dropout_rates: vec![0.1], learning_rates: vec![0.003], batch_sizes: vec![1, 4] };
        let base = ModelConfig { max_epochs: 3, ..Default::default() };
        let seq = grid_search(&space, &base, 5, &ds, &ds, Exec::Sequential).unwrap();
        let par = grid_search(&space, &base, 5, &ds, &ds, Exec::Parallel).unwrap();
        assert_eq!(seq.log, par.log);
        assert_eq!(seq.report, par.report);
        assert!(!seq.log[0].succeeded(), "batch size 1 fails under batch norm");
        assert_eq!(seq.report.leaderboard, vec![1, 0]);
        assert_eq!(seq.report.best_index, Some(1));
        assert!(seq.report.note.contains("documented_count 72 vs enumerated 2"));
        let single = GridSpace { batch_sizes: vec![4], ..space };
        assert_eq!(grid_search(&single, &base, 5, &ds, &ds, Exec::Sequential).unwrap().report.leaderboard.len(), 1);
    }
}
