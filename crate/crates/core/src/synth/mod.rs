//! Targeted synthetic dataset generation over the landmark performance grid.

pub mod dsl;
pub mod executor;
pub mod families;
pub mod grid;
pub mod llm;
pub mod proposer;
pub mod runner;

pub use dsl::{
    Distribution, Expr, Latent, MechanismSpec, NoiseModel, ObservedFeature, Scalar, SearchPolicy, SearchSpec,
};
pub use executor::{build_candidate, evaluate_xy, execute_mechanism, Execution, Scores, LANDMARK_K};
pub use families::{Dials, Family};
pub use grid::{grid_cells, PerformanceGrid, TargetCell};
pub use llm::{ChatBackend, ChatMessage, ChatReply, HttpChatBackend, LlmConfig, LlmProposer};
pub use proposer::{CellSession, DeterministicProposer, Proposal, ProposeFailure, Proposer, TokenUsage};
pub use runner::{
    build_manifest, generate, load_accepted, persist_accepted, run_cell, run_grid, slot_dir, AttemptRecord, CellRun,
    CellStatus, Manifest, RunConfig,
};
