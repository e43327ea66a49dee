//! Trading-agent research engine: temporal signals, cross-report consensus,
//! multi-provider orchestration, a leakage-safe memory bank, backtesting and
//! evaluation metrics.

pub mod api;
pub mod backtest;
pub mod config;
pub mod consensus;
pub mod error;
pub mod fixed;
pub mod market_data;
pub mod memory;
pub mod metrics;
pub mod orchestration;
pub mod pipeline;
pub mod provider;
pub mod report;
pub mod session;
pub mod signals;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
