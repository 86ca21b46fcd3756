//! Utility, subgroup and fidelity workflows, the alignment-weight sweep, and
//! report assembly.

mod fidelity;
mod protocol;
mod report;
mod source;
mod subgroup;
mod sweep;
mod utility;

#[cfg(test)]
mod tests;

pub use fidelity::{fidelity_eval, FidelityReport, FidelityRun};
pub use protocol::{EvalProtocol, Splits};
pub use report::{
    reference_values, render_reports, subgroup_csv, utility_csv, EvalReport, ReferenceValue, ReportBody,
    REPORT_FORMAT_VERSION,
};
pub use source::{IdentitySource, SyntheticSource, ToyOracleSource};
pub use subgroup::{subgroup_eval, SubgroupEntry, SubgroupReport, SubgroupRun, Verdict};
pub use sweep::{
    default_grid, rank_entries, train_generator, weight_sweep, AlignmentWeights, GeneratorConfig, SweepEntry,
};
pub use utility::{
    evaluation_utility, gap, paired_differences, synthesize_sets, training_utility, utility_eval, RunRecord,
    SyntheticSetFailure, UtilityReport,
};
