//! Operator-facing orchestration: configuration, the block protocol,
//! windowed monitoring and figure data.

pub mod config;
pub mod figures;
pub mod monitor;
pub mod protocol;

pub use config::{Config, ExtractorSeed, FigureConfig, OutputConfig, ProtocolConfig, WitnessForm};
pub use figures::{emit_figures, FigureFiles};
pub use monitor::{monitor, Alarm, Monitor, MonitorEvent, MonitorReport, WindowVerdict};
pub use protocol::{block_seed, declare, run_protocol, Declaration, ProtocolOutcome, ReportRecord, Summary};
pub use crate::roundlog::{ingest_round_log, IngestedLog};
