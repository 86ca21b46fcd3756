use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::condition::{AgeBracket, Condition, Ethnicity, Sex};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// One ICU stay.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    /// Stable identifier assigned at load or generation time.
    pub id: u64,
    /// T×F values; normalized units when the owning cohort is normalized.
    pub values: Array2<f64>,
    /// T×F observation mask, `true` where the value was measured.
    pub mask: Array2<bool>,
    pub condition: Condition,
}

impl PatientRecord {
    pub fn outcome(&self) -> bool {
        self.condition.outcome
    }

    /// Model input for time step `t`: the F values followed by the F mask bits.
    pub fn write_input_row(&self, t: usize, out: &mut [f64]) {
        let f = self.values.ncols();
        for j in 0..f {
            out[j] = self.values[[t, j]];
            out[f + j] = if self.mask[[t, j]] { 1.0 } else { 0.0 };
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub age_bracket: Vec<String>,
    pub sex: Vec<String>,
    pub ethnicity: Vec<String>,
}

impl Default for Vocabularies {
    fn default() -> Self {
        Vocabularies {
            age_bracket: AgeBracket::labels(),
            sex: Sex::labels(),
            ethnicity: Ethnicity::labels(),
        }
    }
}

/// Per-feature z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl NormStats {
    pub fn apply(&self, feature: usize, raw: f64) -> f64 {
        (raw - self.mean[feature]) / self.sd[feature]
    }

    pub fn invert(&self, feature: usize, z: f64) -> f64 {
        z * self.sd[feature] + self.mean[feature]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortMeta {
    pub format_version: u32,
    pub task: String,
    pub feature_names: Vec<String>,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "F")]
    pub f: usize,
    pub vocabularies: Vocabularies,
    /// Cold-start fill per feature (population median of observed values),
    /// always in raw units.
    pub fill_values: Vec<f64>,
    /// Present iff record values are z-scored.
    pub normalization: Option<NormStats>,
}

impl CohortMeta {
    pub fn new(task: impl Into<String>, feature_names: Vec<String>, t: usize, fill_values: Vec<f64>) -> Self {
        CohortMeta {
            format_version: FORMAT_VERSION,
            task: task.into(),
            f: feature_names.len(),
            feature_names,
            t,
            vocabularies: Vocabularies::default(),
            fill_values,
            normalization: None,
        }
    }

    /// Fill values in the units the records are stored in.
    pub fn fill_values_in_record_units(&self) -> Vec<f64> {
        match &self.normalization {
            None => self.fill_values.clone(),
            Some(n) => (0..self.f).map(|j| n.apply(j, self.fill_values[j])).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let schema = |detail: String| Error::Schema {
            location: "meta.json".into(),
            detail,
        };
        if self.format_version != FORMAT_VERSION {
            return Err(schema(format!("unsupported format_version {}", self.format_version)));
        }
        if self.t == 0 || self.f == 0 {
            return Err(schema("T and F must be positive".into()));
        }
        if self.feature_names.len() != self.f {
            return Err(schema(format!(
                "{} feature names for F = {}",
                self.feature_names.len(),
                self.f
            )));
        }
        if self.fill_values.len() != self.f || self.fill_values.iter().any(|v| !v.is_finite()) {
            return Err(schema("fill_values must hold F finite numbers".into()));
        }
        if let Some(n) = &self.normalization {
            if n.mean.len() != self.f || n.sd.len() != self.f {
                return Err(schema("normalization stats must have F entries".into()));
            }
            if n.sd.iter().any(|s| !(*s > 0.0)) || n.mean.iter().any(|m| !m.is_finite()) {
                return Err(schema("normalization stats must be finite with positive sd".into()));
            }
        }
        if self.vocabularies != Vocabularies::default() {
            return Err(schema(format!(
                "vocabularies differ from the supported ones {:?}",
                Vocabularies::default()
            )));
        }
        Ok(())
    }
}

/// Ordered collection of stays sharing one schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub meta: CohortMeta,
    pub records: Vec<PatientRecord>,
}

impl Cohort {
    pub fn new(meta: CohortMeta, records: Vec<PatientRecord>) -> Result<Self> {
        let c = Cohort { meta, records };
        c.validate()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.meta.normalization.is_some()
    }

    pub fn outcomes(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.outcome()).collect()
    }

    pub fn conditions(&self) -> Vec<Condition> {
        self.records.iter().map(|r| r.condition).collect()
    }

    /// New cohort holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Cohort {
        Cohort {
            meta: self.meta.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Same schema, no records.
    pub fn empty_like(&self) -> Cohort {
        Cohort {
            meta: self.meta.clone(),
            records: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        let fill = self.meta.fill_values_in_record_units();
        for (i, r) in self.records.iter().enumerate() {
            let location = format!("record {} (id {})", i, r.id);
            let shape = (self.meta.t, self.meta.f);
            if r.values.dim() != shape || r.mask.dim() != shape {
                return Err(Error::Schema {
                    location,
                    detail: format!(
                        "values {:?} / mask {:?}, expected {:?}",
                        r.values.dim(),
                        r.mask.dim(),
                        shape
                    ),
                });
            }
            if r.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema {
                    location,
                    detail: "non-finite value".into(),
                });
            }
            // Unobserved cells must hold the forward-filled value.
            for j in 0..self.meta.f {
                let mut carry = fill[j];
                for t in 0..self.meta.t {
                    if r.mask[[t, j]] {
                        carry = r.values[[t, j]];
                    } else if r.values[[t, j]].to_bits() != carry.to_bits() {
                        return Err(Error::Schema {
                            location,
                            detail: format!("unobserved cell ({t}, {j}) is not forward-filled"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}
