//! Suite orchestration for the continual dynamics-learning benchmark:
//! configuration, parallel episode execution, result records, summary
//! tables and loss curves.

pub mod aggregate;
pub mod config;
pub mod curves;
pub mod error;
pub mod records;
pub mod suite;
pub mod train;

pub use aggregate::{aggregate, mean_std, Summary};
pub use config::{load_config, Scale, SuiteConfig};
pub use curves::{export_loss_curves, moving_average};
pub use error::{BenchError, Result};
pub use records::{read_records, EpisodeRecord, SuiteResults};
pub use suite::run_suite;
