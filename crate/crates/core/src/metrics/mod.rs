//! Pareto fronts, hypervolume, expected utility and maximum utility loss.

mod eval;
mod hv;

pub use eval::{
    evaluate_policy, expected_utility, extract_front, max_utility_loss, max_utility_loss_of, read_front_csv, FrontTable,
    reference_point, true_pareto_front, utility, write_front_csv, DstOraclePolicy, EvalProtocol, Evaluation,
    ParetoFront, MINECART_REFERENCE,
};
pub use hv::{dominates, hypervolume, pareto_filter, pareto_indices};
