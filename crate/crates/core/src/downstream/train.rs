use serde::{Deserialize, Serialize};

use super::model::{label_matrix, ClassifierArch, GruClassifierParams};
use crate::autodiff::{Adam, Graph, Mat, Var};
use crate::data::{Cohort, PatientRecord};
use crate::error::{Error, Result};
use crate::numerics::{auroc, RngStream};
use crate::training::{ensure_finite, minibatches};

const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierTrainConfig {
    pub hidden: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best validation AUROC.
    pub patience: Option<usize>,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig {
            hidden: 64,
            lr: 5e-4,
            batch_size: 64,
            max_epochs: 50,
            patience: Some(10),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auroc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainLog {
    pub epochs: Vec<ClassifierEpochLog>,
    pub best_epoch: usize,
    pub best_val_auroc: f64,
}

fn build_loss(
    clf: &GruClassifierParams,
    g: &mut Graph,
    vars: &[Var],
    records: &[&PatientRecord],
    labels: &[bool],
) -> Result<Var> {
    clf.check_records(records)?;
    if labels.len() != records.len() {
        return Err(Error::input("one label per record is required"));
    }
    let logits = clf.logits_graph(g, vars, records);
    let sum = g.bce_sum(logits, label_matrix(labels), BCE_EPS);
    Ok(g.scale(sum, 1.0 / records.len() as f64))
}

/// Mean binary cross-entropy over the batch.
pub fn classifier_loss(clf: &GruClassifierParams, records: &[&PatientRecord], labels: &[bool]) -> Result<f64> {
    let mut g = Graph::new();
    let vars = clf.params.attach_const(&mut g);
    let loss = build_loss(clf, &mut g, &vars, records, labels)?;
    Ok(g.scalar(loss))
}

pub fn classifier_loss_and_grads(
    clf: &GruClassifierParams,
    records: &[&PatientRecord],
    labels: &[bool],
) -> Result<(f64, Vec<Mat>)> {
    let mut g = Graph::new();
    let vars = clf.params.attach(&mut g);
    let loss = build_loss(clf, &mut g, &vars, records, labels)?;
    let grads = g.backward(loss);
    Ok((g.scalar(loss), clf.params.collect_grads(&grads, &vars)))
}

/// Train on arbitrary binary labels, keeping the parameters of the epoch
/// with the highest validation AUROC (earliest epoch on ties).
pub fn train_on_labels(
    train: (&[&PatientRecord], &[bool]),
    val: (&[&PatientRecord], &[bool]),
    cfg: &ClassifierTrainConfig,
    rng: &RngStream,
) -> Result<(GruClassifierParams, ClassifierTrainLog)> {
    let (train_x, train_y) = train;
    let (val_x, val_y) = val;
    let first = train_x.first().ok_or_else(|| Error::input("empty classifier training set"))?;
    if val_x.is_empty() || train_x.len() != train_y.len() || val_x.len() != val_y.len() {
        return Err(Error::input("classifier needs non-empty, fully labelled train and validation sets"));
    }
    if !val_y.iter().any(|&y| y) || val_y.iter().all(|&y| y) {
        return Err(Error::UndefinedMetric(
            "validation set has a single class, so validation AUROC is undefined".into(),
        ));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("classifier lr, batch_size and max_epochs must be positive".into()));
    }
    let (t, f) = first.values.dim();
    let arch = ClassifierArch {
        t,
        f,
        hidden: cfg.hidden,
    };
    let mut clf = GruClassifierParams::new(arch, &mut rng.child("init"))?;
    let mut opt = Adam::new(&clf.params, cfg.lr, None);
    let mut best = clf.clone();
    let mut log = ClassifierTrainLog {
        best_val_auroc: f64::NEG_INFINITY,
        ..Default::default()
    };
    for epoch in 0..cfg.max_epochs {
        let batches = minibatches(train_x.len(), cfg.batch_size, &mut rng.child_indexed("shuffle", epoch));
        let mut total = 0.0;
        for idx in &batches {
            let xs: Vec<&PatientRecord> = idx.iter().map(|&i| train_x[i]).collect();
            let ys: Vec<bool> = idx.iter().map(|&i| train_y[i]).collect();
            let (loss, grads) = classifier_loss_and_grads(&clf, &xs, &ys)?;
            ensure_finite(&format!("train_classifier epoch {epoch}"), "BCE loss", loss)?;
            opt.step(&mut clf.params, &grads);
            total += loss * idx.len() as f64;
        }
        let val_auroc = auroc(&clf.predict_proba(val_x)?, val_y)?;
        log.epochs.push(ClassifierEpochLog {
            epoch,
            train_loss: total / train_x.len() as f64,
            val_auroc,
        });
        if val_auroc > log.best_val_auroc {
            log.best_val_auroc = val_auroc;
            log.best_epoch = epoch;
            best = clf.clone();
        } else if cfg.patience.is_some_and(|p| epoch - log.best_epoch >= p) {
            break;
        }
    }
    Ok((best, log))
}

/// Outcome classifier trained on `train`, selected on `val`.
pub fn train_classifier(
    train: &Cohort,
    val: &Cohort,
    cfg: &ClassifierTrainConfig,
    rng: &RngStream,
) -> Result<(GruClassifierParams, ClassifierTrainLog)> {
    let tx: Vec<&PatientRecord> = train.records.iter().collect();
    let ty: Vec<bool> = train.records.iter().map(|r| r.condition.outcome).collect();
    let vx: Vec<&PatientRecord> = val.records.iter().collect();
    let vy: Vec<bool> = val.records.iter().map(|r| r.condition.outcome).collect();
    train_on_labels((&tx, &ty), (&vx, &vy), cfg, rng)
}
