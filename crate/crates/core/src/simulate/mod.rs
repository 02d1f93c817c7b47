//! Simulation designs, counterfactual truths and the Monte Carlo driver.

mod dgp;
mod experiment;

pub use dgp::{truth_oracle, Dgp, DgpKind, Exp1Noise, Exp1Options, Exp1Treatment, PotentialDraw, TruthMeasure};
pub use experiment::{
    exp2_model, run_experiment, CellKey, Experiment, ExperimentOutput, ExperimentTable, RunOptions, TableRow,
    FLEXIBLE_DF, MAX_REPLICATE_FAILURES, SCHEMA_VERSION,
};
