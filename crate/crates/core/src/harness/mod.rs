//! Experiment drivers: convergence sweeps, breakdown sweeps and timing
//! benchmarks, with CSV or JSON output.

mod bench;
mod config;
mod convergence;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bench::{bench_batching, bench_gm_scaling, BatchTiming, GmTiming};
pub use config::{
    DatasetSource, ExperimentConfig, ReferenceMode, SelectorSpec, DEFAULT_K_GRID, DEFAULT_PSI_GRID,
    DEFAULT_SEED_COUNT, SCHEMA_VERSION,
};
pub use convergence::{
    evaluate_selection, run_breakdown, run_convergence, run_convergence_to, run_convergence_with,
    BreakdownRecord, ConvergenceOutput, Reference, RunRecord, SlopeRecord,
};

/// Tabular output flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "jsonl",
        }
    }
}

/// Incremental row writer: headed CSV or JSON lines.
pub struct RowSink {
    path: PathBuf,
    inner: SinkInner,
}

enum SinkInner {
    Csv(Box<csv::Writer<Box<dyn Write>>>),
    Json(Box<dyn Write>),
}

impl RowSink {
    pub fn create(path: &Path, format: OutputFormat) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_writer(
            path,
            Box::new(BufWriter::new(file)),
            format,
        ))
    }

    pub fn stdout(format: OutputFormat) -> Self {
        Self::from_writer(
            Path::new("<stdout>"),
            Box::new(std::io::stdout().lock()),
            format,
        )
    }

    fn from_writer(path: &Path, w: Box<dyn Write>, format: OutputFormat) -> Self {
        let inner = match format {
            OutputFormat::Csv => SinkInner::Csv(Box::new(csv::Writer::from_writer(w))),
            OutputFormat::Json => SinkInner::Json(w),
        };
        Self {
            path: path.to_path_buf(),
            inner,
        }
    }

    pub fn push<T: Serialize>(&mut self, row: &T) -> Result<()> {
        match &mut self.inner {
            SinkInner::Csv(w) => w.serialize(row).map_err(|e| Error::Format(e.to_string())),
            SinkInner::Json(w) => {
                serde_json::to_writer(&mut *w, row).map_err(|e| Error::Format(e.to_string()))?;
                w.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
            }
        }
    }

    pub fn flush(&mut self) -> Result<()> {
        let r = match &mut self.inner {
            SinkInner::Csv(w) => w.flush(),
            SinkInner::Json(w) => w.flush(),
        };
        r.map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes `rows` to `path` as a headed CSV or as JSON lines.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T], format: OutputFormat) -> Result<()> {
    let mut sink = RowSink::create(path, format)?;
    for r in rows {
        sink.push(r)?;
    }
    sink.flush()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
