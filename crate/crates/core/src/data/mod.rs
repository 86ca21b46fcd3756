//! Cohort model, ingestion, splitting and the toy ground-truth generator.

pub mod batch;
mod cohort;
mod condition;
mod fill;
pub mod io;
mod normalize;
mod split;
mod subgroup;
mod toy;

pub use cohort::{Cohort, CohortMeta, NormStats, PatientRecord, Vocabularies, FORMAT_VERSION};
pub use condition::{AgeBracket, Condition, Ethnicity, Sex, SubgroupKey};
pub use fill::{forward_fill, median, with_missing};
pub use io::{load_cohort, save_cohort};
pub use normalize::{compute_norm_stats, denormalize, normalize};
pub use split::{apportion, stratified_split, stratified_split_indices, SplitIndices, SplitSpec};
pub use subgroup::{subgroup_80_20_split, subgroup_partition, SubgroupSplit};
pub use toy::{synth_toy_cohort, Marginals, Offsets, OutcomeModel, ToyFeature, ToyPreset};
