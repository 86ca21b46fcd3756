use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use super::condition::SubgroupKey;
use super::split::apportion;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Record indices for every one of the 32 intersectional subgroups.
/// Keys with no members map to empty lists.
pub fn subgroup_partition(cohort: &Cohort) -> BTreeMap<SubgroupKey, Vec<usize>> {
    let mut map: BTreeMap<SubgroupKey, Vec<usize>> =
        SubgroupKey::all().into_iter().map(|k| (k, Vec::new())).collect();
    for (i, r) in cohort.records.iter().enumerate() {
        map.get_mut(&r.condition.key())
            .expect("all keys present")
            .push(i);
    }
    map
}

/// 80/20 outcome-stratified split of one subgroup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSplit {
    /// Reference ("ground truth") slice, about 80%.
    pub large: Vec<usize>,
    /// Small test slice, about 20%.
    pub small: Vec<usize>,
    /// Some outcome class has fewer than two records in the group.
    pub sparse_class: bool,
}

/// Split the records at `members` (indices into `cohort`) 80/20, stratified
/// by outcome, with a seeded shuffle.
pub fn subgroup_80_20_split(cohort: &Cohort, members: &[usize], seed: u64) -> Result<SubgroupSplit> {
    if members.is_empty() {
        return Err(Error::input("subgroup split needs at least one record"));
    }
    let mut sorted = members.to_vec();
    sorted.sort_by_key(|&i| cohort.records[i].id);
    let (mut neg, mut pos): (Vec<usize>, Vec<usize>) =
        sorted.into_iter().partition(|&i| !cohort.records[i].outcome());
    let sparse_class = neg.len() < 2 || pos.len() < 2;
    let counts = apportion(&[neg.len(), pos.len()], &[0.8, 0.2]);
    let root = RngStream::new(seed).child("subgroup_80_20");
    root.child("negative").shuffle(&mut neg);
    root.child("positive").shuffle(&mut pos);
    let mut large = Vec::new();
    let mut small = Vec::new();
    for (class, c) in [neg, pos].into_iter().zip(counts) {
        large.extend_from_slice(&class[..c[0]]);
        small.extend_from_slice(&class[c[0]..]);
    }
    large.sort_by_key(|&i| cohort.records[i].id);
    small.sort_by_key(|&i| cohort.records[i].id);
    Ok(SubgroupSplit {
        large,
        small,
        sparse_class,
    })
}
