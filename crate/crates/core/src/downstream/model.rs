use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Gru, Linear, ParamSet, Var};
use crate::data::batch::step_inputs;
use crate::data::{Cohort, PatientRecord};
use crate::error::{Error, Result};
use crate::numerics::{auroc, RngStream};

const PREDICT_CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierArch {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "F")]
    pub f: usize,
    pub hidden: usize,
}

/// One-layer GRU over `[values, mask]` followed by a single logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GruClassifierParams {
    pub arch: ClassifierArch,
    pub gru: Gru,
    pub head: Linear,
    pub params: ParamSet,
}

impl GruClassifierParams {
    pub fn new(arch: ClassifierArch, rng: &mut RngStream) -> Result<Self> {
        if arch.t == 0 || arch.f == 0 || arch.hidden == 0 {
            return Err(Error::Config(format!("classifier dimensions must be positive: {arch:?}")));
        }
        let mut ps = ParamSet::new();
        let gru = Gru::new(&mut ps, "classifier.gru", 2 * arch.f, arch.hidden, rng);
        let head = Linear::new(&mut ps, "classifier.head", arch.hidden, 1, rng);
        Ok(GruClassifierParams {
            arch,
            gru,
            head,
            params: ps,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fresh = GruClassifierParams::new(self.arch, &mut RngStream::new(0))?;
        if fresh.gru != self.gru || fresh.head != self.head || !fresh.params.same_layout(&self.params) {
            return Err(Error::Schema {
                location: "classifier parameters".into(),
                detail: "tensor layout does not match the declared architecture".into(),
            });
        }
        if !self.params.is_finite() {
            return Err(Error::numeric("classifier parameters", "non-finite weight"));
        }
        Ok(())
    }

    pub(crate) fn check_records(&self, records: &[&PatientRecord]) -> Result<()> {
        if records.is_empty() {
            return Err(Error::input("classifier needs at least one record"));
        }
        let want = (self.arch.t, self.arch.f);
        match records.iter().find(|r| r.values.dim() != want) {
            Some(r) => Err(Error::input(format!(
                "record {} is {:?}, classifier expects {:?}",
                r.id,
                r.values.dim(),
                want
            ))),
            None => Ok(()),
        }
    }

    /// `B×1` logits.
    pub(crate) fn logits_graph(&self, g: &mut Graph, vars: &[Var], records: &[&PatientRecord]) -> Var {
        let inputs: Vec<Var> = step_inputs(records).into_iter().map(|m| g.constant(m)).collect();
        let states = self.gru.run(g, vars, &inputs, false);
        self.head.forward(g, vars, *states.last().expect("T >= 1"))
    }

    pub fn predict_proba(&self, records: &[&PatientRecord]) -> Result<Vec<f64>> {
        self.check_records(records)?;
        let mut out = Vec::with_capacity(records.len());
        for chunk in records.chunks(PREDICT_CHUNK) {
            let mut g = Graph::new();
            let vars = self.params.attach_const(&mut g);
            let logits = self.logits_graph(&mut g, &vars, chunk);
            let probs = g.sigmoid(logits);
            out.extend(g.value(probs).iter().copied());
        }
        Ok(out)
    }
}

pub fn classifier_forward(record: &PatientRecord, params: &GruClassifierParams) -> Result<f64> {
    Ok(params.predict_proba(&[record])?[0])
}

pub fn evaluate_classifier(params: &GruClassifierParams, cohort: &Cohort) -> Result<f64> {
    let refs: Vec<&PatientRecord> = cohort.records.iter().collect();
    let scores = params.predict_proba(&refs)?;
    let labels: Vec<bool> = cohort.records.iter().map(|r| r.condition.outcome).collect();
    auroc(&scores, &labels)
}

pub(crate) fn label_matrix(labels: &[bool]) -> Array2<f64> {
    Array2::from_shape_fn((labels.len(), 1), |(i, _)| f64::from(u8::from(labels[i])))
}
