//! Plot-ready CSVs derived from stage artifacts. Nothing is rendered.

use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::io::{self as aio, read_table, require, write_table};
use crate::stages::{correlation_header, history_header, scatter_header, shapley_summary_header};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Loss and accuracy per epoch.
    History,
    /// Latent-by-component correlation cells.
    Heatmap,
    /// Mean |φ| per latent feature, ranked.
    Shapley,
    /// Actual against predicted RNE/RNI per segment.
    Scatter,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [PlotKind::History, PlotKind::Heatmap, PlotKind::Shapley, PlotKind::Scatter];

    pub fn parse(s: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::validation("plotdata", format!("unknown plot kind {s:?}; expected history, heatmap, shapley or scatter")))
    }

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::History => "history",
            PlotKind::Heatmap => "heatmap",
            PlotKind::Shapley => "shapley",
            PlotKind::Scatter => "scatter",
        }
    }

    fn source(self) -> (&'static str, Vec<String>) {
        match self {
            PlotKind::History => (aio::HISTORY, history_header()),
            PlotKind::Heatmap => (aio::CORRELATION, correlation_header()),
            PlotKind::Shapley => (aio::SHAPLEY_SUMMARY, shapley_summary_header()),
            PlotKind::Scatter => (aio::SCATTER, scatter_header()),
        }
    }

    pub fn file_name(self) -> String {
        format!("plot_{}.csv", self.name())
    }
}

/// Writes `plot_<kind>.csv` and returns its path.
///
/// Scatter rows are grouped by metric; the others keep the source order.
pub fn emit_plot_data(dir: &Path, kind: PlotKind) -> CliResult<std::path::PathBuf> {
    let (file, header) = kind.source();
    let src = require(dir, file, "plotdata")?;
    let mut rows: Vec<Vec<String>> = read_table(&src, &header)?.into_iter().map(|(_, r)| r).collect();
    if kind == PlotKind::Scatter {
        // Stable: segment order survives inside each metric.
        rows.sort_by(|a, b| a[0].cmp(&b[0]));
    }
    let out = dir.join(kind.file_name());
    write_table(&out, &header, rows)?;
    Ok(out)
}
