//! Profit-maximizing impression allocation and bid planning for a
//! demand-side platform, plus a paired real-time-bidding simulator.
//!
//! The planner relaxes the campaign budget constraints with multipliers in
//! `[0, 1]`, minimizes the resulting dual by projected subgradient descent
//! ([`dual`]), then shades bids by `1 - lambda_k` and solves the remaining
//! allocation LP ([`primal`], [`lp`]). The simulator ([`sim`]) replays the plan
//! online against a greedy highest-eCPI baseline on synthetic markets
//! ([`synth`]).

pub mod dual;
pub mod error;
pub mod instance;
pub mod landscape;
pub mod lp;
pub mod primal;
pub mod sim;
pub mod synth;

pub use dual::{dual_value, oracle, solve_dual, DualConfig, DualOracle, DualState, OracleOutput};
pub use error::{Error, Result};
pub use instance::{Campaign, Edge, ImpressionType, Instance, LandscapeEntry, ValidationReport, Violation};
pub use landscape::{BidLandscape, BinomialMaxUniform, Empirical, Landscape};
pub use lp::{LpError, LpSolution, StructuredLp};
pub use primal::{
    build_phase2_lp, expected_profit, expected_spend, greedy_allocate, solve_lp, two_phase, Phase2Lp, PlanSolution,
};
pub use sim::{
    generate_trace, paired_experiment, paired_experiment_with, run_greedy_policy, run_lagrangian_policy, run_policy,
    ArrivalTrace, Policy, PolicyState, SimulationReport,
};
pub use synth::{
    generate, generate_with_quality, sweep_instances, BudgetMode, Generated, GeneratorConfig, QualityDraws,
    SWEEP_BUDGETS,
};
