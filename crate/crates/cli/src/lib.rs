//! The `ccr` command line: subcommands for every pipeline step plus a
//! resumable `run` driven by a TOML config.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod ops;
pub mod pipeline;
pub mod synthetic;

use ccr_core::ErrorClass;

pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, PipelineReport, StageStatus};

/// 0 success, 2 config, 3 data, 4 backend or network, 5 numerical.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let class = err
        .chain()
        .find_map(|e| e.downcast_ref::<ccr_core::Error>())
        .map(ccr_core::Error::class);
    match class {
        Some(ErrorClass::Config) => 2,
        Some(ErrorClass::Data) | None => 3,
        Some(ErrorClass::Backend) => 4,
        Some(ErrorClass::Numerical) => 5,
    }
}
