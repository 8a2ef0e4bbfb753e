//! Optimal siting and sizing of PV systems and battery storage on radial
//! distribution networks, under five uncertainty-handling formulations:
//! deterministic, two-stage stochastic (TSSO), single-stage robust (SRO),
//! adaptive robust (ARO), and adaptive robust-stochastic (ARSO).
//!
//! The robust formulations use budgeted uncertainty sets and are solved by
//! Benders decomposition with extreme-point binaries and a Big-M
//! linearization of the dual subproblem bilinearities.

pub mod aro;
pub mod arso;
pub mod baselines;
pub mod casefile;
pub mod deterministic;
pub mod milp;
pub mod model;
pub mod oracle;
pub mod subproblem;
pub mod uncertainty;

#[cfg(test)]
pub(crate) mod testcases;

pub use aro::{IterationRecord, MasterState, RobustSolution, build_dsp, build_master, solve_aro};
pub use arso::{MultiCutMasterState, build_arso_dsp, build_multicut_master, solve_arso};
pub use baselines::{EngineError, StochasticSolution, TssoModel, build_tsso, solve_sro, solve_tsso, worst_realization};
pub use casefile::{CasefileError, load_case};
pub use deterministic::{
    BlockData, BuildError, DeterministicModel, InvestmentValues, InvestmentVars, OperationValues,
    OperationVars, ResidualReport, add_investment, add_operational_block, build_deterministic,
    check_feasibility, investment_cost, investment_cost_expr, operational_cost,
};
pub use oracle::{
    AutonomyPoint, PiSolution, autonomy_curve, brute_force_worst_case, concatenated_case,
    evaluate_plan, perfect_information_benchmark,
};
pub use model::{
    Bus, CaseData, CaseError, CostParams, Envelope, Line, LoadProfile, Network, PolygonCut,
    PvProfile, TechParams, ValidationReport, polygon_coefficients, validate_case,
};
pub use uncertainty::{BudgetedSet, Realization, ScenarioSet, UncertaintyError};

pub use milp::{
    ConId, ConstraintSense, LinExpr, LinearModel, ModelError, ObjSense, SolveError, SolveResult,
    SolveStatus, SolverParams, VarId, VarKind,
};
