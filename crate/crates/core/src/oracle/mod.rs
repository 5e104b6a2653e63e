//! Independent ground truth: exhaustive offline optimum, the peak-age MDP,
//! and tail-exponent estimation.

pub mod mdp;
pub mod search;
pub mod tail;

pub use mdp::{relative_value_iteration, verify_bellman_residual, BellmanCheck, ValueTable};
pub use search::{brute_force_opt, exhaustive_dfs_opt, slot_choices, Metric, OracleBudget, OracleSolution};
pub use tail::{ld_tail_oracle, TailFit};
