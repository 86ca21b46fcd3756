use ndarray::Array2;

use crate::data::{forward_fill, Cohort, PatientRecord, ToyPreset};
use crate::diffusion::{generate_normalized, rejection_sample_conditional, GeneratorBundle};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Anything that can produce a synthetic cohort mirroring a real template:
/// one record per template record, with the template's conditions and in
/// the template's units.
pub trait SyntheticSource: Sync {
    fn name(&self) -> String;
    fn synthesize(&self, template: &Cohort, rng: &RngStream) -> Result<Cohort>;
}

impl SyntheticSource for GeneratorBundle {
    fn name(&self) -> String {
        format!("generator:{}", &self.config_hash[..self.config_hash.len().min(12)])
    }

    fn synthesize(&self, template: &Cohort, rng: &RngStream) -> Result<Cohort> {
        if template.meta.normalization != self.cohort_meta.normalization {
            return Err(Error::input(
                "template cohort is not normalized with the generator's training statistics",
            ));
        }
        generate_normalized(self, &template.conditions(), rng)
    }
}

/// Returns an exact copy of the template; the metamorphic reference point.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentitySource;

impl SyntheticSource for IdentitySource {
    fn name(&self) -> String {
        "identity".into()
    }

    fn synthesize(&self, template: &Cohort, _rng: &RngStream) -> Result<Cohort> {
        Ok(template.clone())
    }
}

/// Draws fresh stays from the toy ground-truth process, keeping a draw only
/// when its outcome matches the requested condition.
#[derive(Clone, Debug)]
pub struct ToyOracleSource {
    pub preset: ToyPreset,
    pub max_tries: usize,
}

impl ToyOracleSource {
    pub fn new(preset: ToyPreset) -> Self {
        ToyOracleSource {
            preset,
            max_tries: 10_000,
        }
    }
}

impl SyntheticSource for ToyOracleSource {
    fn name(&self) -> String {
        format!("toy-oracle:{}", self.preset.name)
    }

    fn synthesize(&self, template: &Cohort, rng: &RngStream) -> Result<Cohort> {
        let meta = &template.meta;
        if meta.f != self.preset.num_features() || meta.t != self.preset.t {
            return Err(Error::input("template shape does not match the toy preset"));
        }
        let fill = meta.fill_values_in_record_units();
        let mut records = Vec::with_capacity(template.len());
        for (i, real) in template.records.iter().enumerate() {
            let target = real.condition;
            let key = target.key();
            let mut stream = rng.child_indexed("oracle", i);
            let draw = rejection_sample_conditional(
                |r| Ok(self.preset.sample_stay(key, r)),
                |(_, outcome)| key.with_outcome(*outcome),
                &target,
                self.max_tries,
                &mut stream,
            )?;
            let raw = draw.record.0;
            let scaled = match &meta.normalization {
                None => raw,
                Some(n) => Array2::from_shape_fn(raw.dim(), |(t, j)| raw[[t, j]].map(|v| n.apply(j, v))),
            };
            let (values, mask) = forward_fill(&scaled, &fill);
            records.push(PatientRecord {
                id: i as u64,
                values,
                mask,
                condition: target,
            });
        }
        Cohort::new(meta.clone(), records)
    }
}
