//! Joint power and resource allocation for block-fading relay-assisted
//! broadcast channels with regenerative decode-and-forward relaying.
//!
//! Internally all rates are in nats per second per hertz; reported rates
//! (CSV output, [`experiments`] results) are in bits per second per hertz.

pub mod accum;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fading;
pub mod oracle;
pub mod output;
pub mod relaying;
pub mod scheduler;
pub mod selftest;
pub mod virtualize;

pub use config::{parse_config, parse_config_str};
pub use error::{Error, Result};
pub use experiments::{ExperimentConfig, Policy, PointResult, SweepResult};
pub use fading::{ChannelBlock, FadingFamily, FadingSpec, LinkTable, StreamKind};
pub use relaying::{DfLink, DfPowerSplit};
pub use scheduler::global::PowerPrice;
pub use scheduler::perblock::PerBlockSolution;
pub use scheduler::{Allocation, Grant, LongTermAverages};
pub use virtualize::{Mode, RelayMode, VirtualUser, Weights};
