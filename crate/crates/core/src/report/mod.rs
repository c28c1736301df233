//! Experiment orchestration and report files.
//!
//! Every runner renders its files in memory ([`Report`]) so that the same
//! config always yields the same bytes; writing them out is a separate step.

mod config;
mod run;

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub use config::{CorpusSpec, ExperimentConfig, Format, InputSpec, PolicySpec, RunMode, Variant};
pub use run::{
    analyze, bound, generate, histogram, probe, simulate, transform, Aggregate, AnalyzeRow, BoundRow, ProbeRow,
    SimAggregate, SimRow,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub outputs: Vec<Output>,
    /// Invariant failures found while producing the report (probe verdicts).
    pub failures: Vec<String>,
}

impl Report {
    pub(crate) fn push(&mut self, name: impl Into<String>, contents: String) {
        self.outputs.push(Output {
            name: name.into(),
            contents,
        });
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.outputs.iter().find(|o| o.name == name).map(|o| o.contents.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for o in &self.outputs {
            let path = dir.join(&o.name);
            std::fs::write(&path, &o.contents).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Error to surface once the files are written, if any check failed.
    pub fn into_result(self) -> Result<Report> {
        if self.failures.is_empty() {
            Ok(self)
        } else {
            Err(Error::Invariant(self.failures.join("; ")))
        }
    }
}

pub(crate) fn json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report values serialize") + "\n"
}

pub(crate) fn csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut wtr = ::csv::Writer::from_writer(Vec::new());
    for row in rows {
        wtr.serialize(row).map_err(|e| Error::Invariant(format!("csv: {e}")))?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Invariant(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

