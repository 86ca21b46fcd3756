//! Dataset directory format.
//!
//! `meta.json` holds the [`CohortMeta`]; `records.ndjson` holds one JSON
//! object per stay:
//!
//! ```text
//! {"id":0,"age_bracket":"51-70","sex":"F","ethnicity":"White","outcome":1,
//!  "values":[[82.0,null,97.0,75.5], ...]}
//! ```
//!
//! `values` is T rows of F entries, `null` where the cell was not observed.
//! Missing cells are forward-filled on load with the meta fill values, so
//! `load_cohort(save_cohort(c)) == c` bit for bit.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::cohort::{Cohort, CohortMeta, PatientRecord};
use super::condition::{AgeBracket, Condition, Ethnicity, Sex};
use super::fill::{forward_fill, with_missing};
use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";
pub const RECORDS_FILE: &str = "records.ndjson";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: u64,
    age_bracket: String,
    sex: String,
    ethnicity: String,
    outcome: u8,
    values: Vec<Vec<Option<f64>>>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

pub fn save_cohort(cohort: &Cohort, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(META_FILE), &cohort.meta)?;
    let path = dir.join(RECORDS_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for r in &cohort.records {
        let raw = with_missing(&r.values, &r.mask);
        let line = RecordLine {
            id: r.id,
            age_bracket: r.condition.age.label().into(),
            sex: r.condition.sex.label().into(),
            ethnicity: r.condition.ethnicity.label().into(),
            outcome: u8::from(r.condition.outcome),
            values: raw.rows().into_iter().map(|row| row.to_vec()).collect(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::json(path.display().to_string(), e))?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

pub fn load_cohort(dir: &Path) -> Result<Cohort> {
    let meta_path = dir.join(META_FILE);
    if !meta_path.exists() {
        return Err(Error::Prerequisite {
            path: meta_path,
            hint: "dataset directory must contain meta.json".into(),
        });
    }
    let meta: CohortMeta = read_json(&meta_path)?;
    meta.validate()?;
    let fill = meta.fill_values_in_record_units();

    let path = dir.join(RECORDS_FILE);
    let file = File::open(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Prerequisite {
            path: path.clone(),
            hint: "dataset directory must contain records.ndjson".into(),
        },
        _ => Error::io(&path, e),
    })?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("{RECORDS_FILE} line {}", lineno + 1);
        let rec: RecordLine = serde_json::from_str(&line).map_err(|e| Error::json(at.clone(), e))?;
        let located = format!("{at} (id {})", rec.id);
        let vocab_err = |field: &'static str, value: &str| Error::Vocabulary {
            field,
            value: value.to_string(),
            location: located.clone(),
        };
        let condition = Condition {
            age: AgeBracket::parse(&rec.age_bracket).ok_or_else(|| vocab_err(AgeBracket::FIELD, &rec.age_bracket))?,
            sex: Sex::parse(&rec.sex).ok_or_else(|| vocab_err(Sex::FIELD, &rec.sex))?,
            ethnicity: Ethnicity::parse(&rec.ethnicity).ok_or_else(|| vocab_err(Ethnicity::FIELD, &rec.ethnicity))?,
            outcome: match rec.outcome {
                0 => false,
                1 => true,
                other => return Err(vocab_err("outcome", &other.to_string())),
            },
        };
        if rec.values.len() != meta.t {
            return Err(Error::Schema {
                location: located,
                detail: format!("{} time steps, expected T = {}", rec.values.len(), meta.t),
            });
        }
        if let Some((t, row)) = rec.values.iter().enumerate().find(|(_, r)| r.len() != meta.f) {
            return Err(Error::Schema {
                location: located,
                detail: format!("time step {t} has {} features, expected F = {}", row.len(), meta.f),
            });
        }
        let flat: Vec<Option<f64>> = rec.values.into_iter().flatten().collect();
        if flat.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Schema {
                location: located,
                detail: "non-finite value".into(),
            });
        }
        let raw = Array2::from_shape_vec((meta.t, meta.f), flat).expect("shape checked");
        let (values, mask) = forward_fill(&raw, &fill);
        records.push(PatientRecord {
            id: rec.id,
            values,
            mask,
            condition,
        });
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(r) = records.iter().find(|r| !seen.insert(r.id)) {
        return Err(Error::Schema {
            location: format!("{RECORDS_FILE} (id {})", r.id),
            detail: "duplicate record id".into(),
        });
    }
    if records.is_empty() {
        return Err(Error::Schema {
            location: RECORDS_FILE.into(),
            detail: "no records".into(),
        });
    }
    Cohort::new(meta, records)
}
