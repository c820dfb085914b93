//! Stages, agent gateway and run-directory persistence for the
//! forecasting-question foundry.
//!
//! A run directory holds one JSONL file per stage output, a `work/` log per
//! stage for resuming, content-addressed transcripts of every model call and
//! a `manifest.json` of completed stages.

pub mod config;
pub mod gateway;
pub mod ingest;
pub mod parse;
pub mod prompts;
pub mod report;
pub mod rundir;
pub mod stages;

pub use config::{Config, ConfigError, Overrides, Role};
pub use gateway::{AgentRequest, AgentResponse, Gateway, GatewayError};
pub use rundir::{RunDir, RunError, StageSummary};
pub use stages::{run_stage, Stage, StageOptions};

/// Derives an independent 64-bit seed for one named use of the root seed.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let hex = ffoundry_core::ids::digest_hex(&[&root.to_string(), label]);
    u64::from_str_radix(&hex[..16], 16).expect("hex digest")
}
