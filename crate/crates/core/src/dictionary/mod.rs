//! Shared dictionary and sparse agent codes via successive convex
//! approximation with an ADMM inner recursion.

mod prox;
mod solver;

pub use prox::{prox_group_20, restrict_columns, top_columns};
pub use solver::{
    dictionary_subproblem, initial_state, learn_dictionary, objective_p2, project_oblique,
    sca_admm_step, surrogate_objective, update_codes, update_dictionary, ConvergenceReport,
    DictionaryFit, Residuals, SolverState,
};
