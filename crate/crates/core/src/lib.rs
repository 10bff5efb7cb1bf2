//! Arbitrage detection for finite event-tree markets with bid/ask spreads
//! and fixed transaction costs.
//!
//! [`ftap::decide`] returns either a no-arbitrage certificate (a price
//! process inside the spread with single-step martingale measures) or a
//! self-financing arbitrage strategy. [`oracle`] re-derives the verdict by
//! exhaustive search over linear regions, using the exact simplex in [`lp`].

pub mod espm;
pub mod ftap;
pub mod generator;
pub mod io;
pub mod lp;
pub mod market;
pub mod oracle;
pub mod rational;
pub mod tree;

pub use espm::{espm_falsify, example1_model, expected_liquidation, EspmError, TerminalMeasure};
pub use ftap::{
    compute_uv, construct_arbitrage, construct_certificate, decide, embedded_fixed_cost,
    fixed_cost_decide, interval_condition, verify_certificate, Certificate, FtapError, UvProcesses,
    Verdict, Violation, ViolationCase,
};
pub use generator::{generate_model, GeneratorConfig, GeneratorError};
pub use io::{parse_model, serialize_model, IoError};
pub use lp::{solve_lp, LinearProgram, LpError, LpResult};
pub use market::{
    is_arbitrage, is_self_financing, is_solvent, liquidation_value, CombinedCostModel, ModelError,
    Portfolio, Strategy,
};
pub use oracle::{exhaustive_search, simple_search, OracleError};
pub use rational::{parse_rational, Rational};
pub use tree::{
    AdaptedProcess, EventTree, NodeId, NodeSpec, SingleStepMeasureFamily, StoppingTime, TreeError,
};

/// Any error raised by the library.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ftap(#[from] FtapError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Espm(#[from] EspmError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}
