//! Reproducible experiments on top of `stelab_core`, each producing a report
//! that can be written as CSV or JSON.

pub mod commands;
pub mod output;
pub mod spec;

use anyhow::Result;

pub use output::{CheckRecord, CsvTable, Report, Summary};
pub use spec::{Command, ExperimentSpec, Format};

pub fn execute(spec: &ExperimentSpec) -> Result<Report> {
    match spec.command {
        Command::Verify => commands::verify::run(spec),
        Command::Landscape => commands::landscape::run(spec),
        Command::Descend => commands::descend::run(spec),
        Command::Figure1 => commands::figure1::run(spec),
        Command::Instability => commands::instability::run(spec),
        Command::Sweep => commands::sweep::run(spec),
    }
}
