//! Config-driven orchestration: strict unit-suffixed TOML configuration,
//! mode dispatch (parity scan, angle scan, gradient scan, slope extraction,
//! external-data fitting), and self-describing output directories whose
//! echoed configuration reproduces the run byte for byte.

pub mod config;
pub mod report;
pub mod scan;
pub mod units;

pub use config::{apply_overrides, echo_toml, load_raw, resolve, Mode, RawConfig, ResolvedConfig};
pub use scan::{run, run_from_raw, RunSummary};
